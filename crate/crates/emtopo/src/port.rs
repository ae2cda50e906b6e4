//! Transmission-line ports: wave launching, collocated voltage/current
//! recording, and incident/outgoing wave splitting.
//!
//! A port observes a microstrip (or any TEM-ish line running along x) at a
//! fixed reference plane `x = i_ref * h`:
//!
//! * Voltage is the line integral `V = -h * sum_k Ez(i_ref, j0, k)` climbing
//!   the probe column from the ground plane to the strip.
//! * Current is the discrete Ampere circulation of `H` around the strip
//!   cross-section. The circulation lives on half-integer x planes and
//!   half-integer time steps, so the recorder averages the two neighboring
//!   planes and the two neighboring half-steps, collocating `I` with `V` in
//!   both space and time to second order.
//!
//! The launcher realizes an incident wave `w(t)` by impressing the vertical
//! current column `I(t) = w(t) / Zc` between ground and strip; the backward
//! hemisphere of that launch runs into the absorbing shell and dies, leaving
//! `w` traveling toward the device.
//!
//! Wave splitting uses `w± = V ± Zc * I_in` with `I_in` the current flowing
//! into the device, so `w+` is the wave entering the domain and `w-` the wave
//! leaving it; the associated energies are `sum w±^2 dt / (4 Zc)`.

use crate::error::{Error, Result};
use crate::fdtd::Simulation;
use crate::grid::{Axis, EdgeId, GridSpec};

/// Which way the line runs from the port into the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineDir {
    /// Port at the low-x side; the device lies toward +x.
    PlusX,
    /// Port at the high-x side; the device lies toward -x.
    MinusX,
}

/// Geometry and calibration of one port.
#[derive(Debug, Clone, PartialEq)]
pub struct PortSpec {
    pub name: String,
    /// Reference plane (integer x index) where V and I are recorded.
    pub i_ref: usize,
    /// Launch plane (integer x index) where the source column sits.
    pub i_launch: usize,
    /// Strip center line (y index) carrying the voltage probe column.
    pub j0: usize,
    /// Strip metal plane (z index); the probe column spans `k = 0..k_top`.
    pub k_top: usize,
    /// Inclusive y-range of the Ampere loop (must bracket the strip).
    pub loop_j: (usize, usize),
    /// Inclusive z-range of the Ampere loop (must contain `k_top`, exclude 0).
    pub loop_k: (usize, usize),
    pub direction: LineDir,
    /// Characteristic impedance used for launching and wave splitting (ohm).
    pub zc: f64,
}

impl PortSpec {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let fail = |msg: String| Err(Error::config(format!("port '{}': {msg}", self.name)));
        if !(self.zc > 0.0) {
            return fail("characteristic impedance must be positive".into());
        }
        if self.k_top == 0 || self.k_top >= grid.nz {
            return fail(format!("strip plane k={} must lie inside the grid", self.k_top));
        }
        if self.i_ref == 0 || self.i_ref >= grid.nx {
            return fail(format!("reference plane i={} must lie inside the grid", self.i_ref));
        }
        if self.i_launch == 0 || self.i_launch >= grid.nx {
            return fail(format!("launch plane i={} must lie inside the grid", self.i_launch));
        }
        // Either side works (wall-side feeds and device-side characterization
        // launches), but the column must stay clear of the V/I stencil.
        if self.i_launch.abs_diff(self.i_ref) < 2 {
            return fail("launch column must sit at least 2 cells from the reference plane".into());
        }
        let (j1, j2) = self.loop_j;
        let (k1, k2) = self.loop_k;
        if j1 == 0 || j2 >= grid.ny || j1 > j2 {
            return fail(format!("current loop y-range [{j1}, {j2}] is invalid"));
        }
        if !(j1 <= self.j0 && self.j0 <= j2) {
            return fail("current loop must bracket the strip center".into());
        }
        if k1 == 0 || k2 >= grid.nz || k1 > k2 {
            return fail(format!("current loop z-range [{k1}, {k2}] is invalid"));
        }
        if !(k1 <= self.k_top && self.k_top <= k2) {
            return fail("current loop must enclose the strip plane".into());
        }
        if self.j0 == 0 || self.j0 >= grid.ny {
            return fail("probe column must lie inside the grid".into());
        }
        Ok(())
    }

    /// Probe-column edges at an arbitrary x plane.
    fn column_edges(&self, i: usize) -> Vec<EdgeId> {
        (0..self.k_top)
            .map(|k| EdgeId { axis: Axis::Z, i, j: self.j0, k })
            .collect()
    }

    /// Line-integral voltage at the reference plane (strip minus ground).
    pub fn voltage(&self, sim: &Simulation) -> f64 {
        let h = sim.spec.h;
        let mut acc = 0.0;
        for edge in self.column_edges(self.i_ref) {
            acc += sim.e_field(&edge);
        }
        -h * acc
    }

    /// Discrete Ampere circulation of H around the strip on the plane
    /// `x = (i_plane + 1/2) h`; equals the total +x current through the loop.
    pub fn circulation(&self, sim: &Simulation, i_plane: usize) -> f64 {
        let (j1, j2) = self.loop_j;
        let (k1, k2) = self.loop_k;
        let h = sim.spec.h;
        let mut acc = 0.0;
        for j in j1..=j2 {
            acc += sim.h_field(Axis::Y, i_plane, j, k1 - 1);
            acc -= sim.h_field(Axis::Y, i_plane, j, k2);
        }
        for k in k1..=k2 {
            acc += sim.h_field(Axis::Z, i_plane, j2, k);
            acc -= sim.h_field(Axis::Z, i_plane, j1 - 1, k);
        }
        acc * h
    }

    /// Launch columns spanning the strip width, recovered from the Ampere
    /// loop bounds (which bracket the strip by two clear cells per side).
    fn launch_js(&self) -> std::ops::RangeInclusive<usize> {
        let half = (self.loop_j.1 - self.loop_j.0) / 2 - 2;
        self.j0 - half..=self.j0 + half
    }

    /// Impress the launch realizing an incident-wave sample `w`.
    ///
    /// The total current `w / Zc` is spread uniformly over a row of vertical
    /// columns covering the strip width; a single center filament would force
    /// the same current through a far narrower footprint than the line mode
    /// uses, and the mismatch sprays an unguided transient over the whole
    /// domain. Spreading the source keeps that spray well below the wave
    /// records of interest.
    pub fn inject(&self, sim: &mut Simulation, w: f64) {
        let js = self.launch_js();
        let cols = js.clone().count() as f64;
        let amps = w / (self.zc * cols);
        for j in js {
            for k in 0..self.k_top {
                sim.add_edge_current(
                    &EdgeId {
                        axis: Axis::Z,
                        i: self.i_launch,
                        j,
                        k,
                    },
                    amps,
                );
            }
        }
    }
}

/// Completed time series of one port.
#[derive(Debug, Clone)]
pub struct PortRecord {
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub dt: f64,
    pub zc: f64,
    pub direction: LineDir,
}

impl PortRecord {
    /// Current flowing from the port into the device at sample `n`.
    fn i_inward(&self, n: usize) -> f64 {
        match self.direction {
            LineDir::PlusX => self.i[n],
            LineDir::MinusX => -self.i[n],
        }
    }

    /// Split into `(w_plus, w_minus)`: waves entering and leaving the device.
    pub fn waves(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.v.len().min(self.i.len());
        let mut wp = Vec::with_capacity(n);
        let mut wm = Vec::with_capacity(n);
        for k in 0..n {
            let zi = self.zc * self.i_inward(k);
            wp.push(self.v[k] + zi);
            wm.push(self.v[k] - zi);
        }
        (wp, wm)
    }

    /// Energy carried into the device.
    pub fn energy_in(&self) -> f64 {
        wave_energy(&self.waves().0, self.zc, self.dt)
    }

    /// Energy carried out of the device.
    pub fn energy_out(&self) -> f64 {
        wave_energy(&self.waves().1, self.zc, self.dt)
    }
}

/// Energy of a wave series: `sum w^2 dt / (4 Zc)`.
pub fn wave_energy(w: &[f64], zc: f64, dt: f64) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>() * dt / (4.0 * zc)
}

/// Incremental port recorder; drives one `PortSpec` through the step loop.
///
/// Call [`PortRecorder::sample_h`] right after `step_h` and
/// [`PortRecorder::sample_e`] right after `step_e` (and after any source
/// injections). Sample `n` then holds V and I collocated at `t = n dt`.
#[derive(Debug, Clone)]
pub struct PortRecorder {
    pub spec: PortSpec,
    v: Vec<f64>,
    i: Vec<f64>,
    c_prev: f64,
}

impl PortRecorder {
    pub fn new(spec: PortSpec) -> Self {
        PortRecorder {
            spec,
            // Fields start at rest: V(0) = 0 is known before stepping.
            v: vec![0.0],
            i: Vec::new(),
            c_prev: 0.0,
        }
    }

    /// Record the circulation at `t = (n + 1/2) dt`; completes sample `n`.
    pub fn sample_h(&mut self, sim: &Simulation) {
        let c_now = 0.5
            * (self.spec.circulation(sim, self.spec.i_ref - 1)
                + self.spec.circulation(sim, self.spec.i_ref));
        self.i.push(0.5 * (self.c_prev + c_now));
        self.c_prev = c_now;
    }

    /// Record the voltage at `t = (n+1) dt`.
    pub fn sample_e(&mut self, sim: &Simulation) {
        self.v.push(self.spec.voltage(sim));
    }

    /// Number of fully collocated samples available so far.
    pub fn completed(&self) -> usize {
        self.v.len().min(self.i.len())
    }

    /// Outgoing-wave sample `n`; `n` must be below [`PortRecorder::completed`].
    pub fn wave_minus(&self, n: usize) -> f64 {
        let zi = self.spec.zc
            * match self.spec.direction {
                LineDir::PlusX => self.i[n],
                LineDir::MinusX => -self.i[n],
            };
        self.v[n] - zi
    }

    pub fn finish(self, dt: f64) -> PortRecord {
        let n = self.v.len().min(self.i.len());
        let mut v = self.v;
        let mut i = self.i;
        v.truncate(n);
        i.truncate(n);
        PortRecord {
            v,
            i,
            dt,
            zc: self.spec.zc,
            direction: self.spec.direction,
        }
    }
}

/// Least-squares characteristic impedance from a pure traveling wave:
/// minimizes `|V - Zc I|^2` over samples with meaningful current.
pub fn calibrate_impedance(v: &[f64], i: &[f64]) -> Result<f64> {
    if v.len() != i.len() || v.is_empty() {
        return Err(Error::config("impedance calibration needs matched nonempty series"));
    }
    let i_peak = i.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if i_peak == 0.0 {
        return Err(Error::numeric("impedance calibration saw no current"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (vv, ii) in v.iter().zip(i.iter()) {
        if ii.abs() > 0.05 * i_peak {
            num += vv * ii;
            den += ii * ii;
        }
    }
    if den == 0.0 {
        return Err(Error::numeric("impedance calibration saw no usable samples"));
    }
    let zc = num / den;
    if !(zc > 0.0) {
        return Err(Error::numeric(format!(
            "impedance calibration produced a non-physical value {zc:.3e}"
        )));
    }
    Ok(zc)
}
