//! Forward-run orchestration: build a simulation from a scene, march the
//! leapfrog loop, and collect port records plus an optional design-plane
//! field tape for later sensitivity work.

use crate::error::{Error, Result};
use crate::fdtd::Simulation;
use crate::grid::{DesignRegion, EdgeId};
use crate::irbc::{ImpulseResponseSet, IrbcState};
use crate::port::{PortRecord, PortRecorder};
use crate::scene::Scene;

/// Field history on the design-plane edges, one row per time step.
///
/// Row `n` holds the edge fields at `t = (n+1) dt`, i.e. the state right
/// after update `n`; the state at `t = 0` is identically zero and is not
/// stored.
#[derive(Debug, Clone)]
pub struct Tape {
    pub edges: Vec<EdgeId>,
    pub n_steps: usize,
    /// Step-major storage: `data[n * edges.len() + e]`.
    pub data: Vec<f64>,
}

impl Tape {
    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.edges.len();
        &self.data[n * w..(n + 1) * w]
    }

    /// Field on edge `e` after update `n`; step `-1`-like queries are the
    /// caller's business (the initial state is zero).
    pub fn value(&self, e: usize, n: usize) -> f64 {
        self.data[n * self.edges.len() + e]
    }
}

/// What to feed and record during a forward run.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Launch samples per port, parallel to `scene.ports()`; an empty vector
    /// means that port stays passive. Sample `n` is applied at
    /// `t = (n + 1/2) dt`.
    pub drive: Vec<Vec<f64>>,
    /// Conductivity overlay on design-plane edges.
    pub design: Vec<(EdgeId, f64)>,
    /// Record the field tape over this region.
    pub tape_over: Option<DesignRegion>,
    /// Override the scene's step count.
    pub n_steps: Option<usize>,
    /// Terminate these ports with impulse-response boundary conditions.
    pub irbc: Option<IrbcDrive>,
}

/// Impulse-response termination for a subset of a scene's ports.
#[derive(Debug, Clone)]
pub struct IrbcDrive {
    /// Indices into the scene's port list, parallel to the set's kernels.
    pub ports: Vec<usize>,
    pub set: ImpulseResponseSet,
}

impl ForwardOptions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drive port `index` with the scene's pulse (all others passive).
    pub fn drive_port(mut self, scene: &Scene, index: usize) -> Result<Self> {
        let n_ports = scene.port.len();
        if index >= n_ports {
            return Err(Error::config(format!(
                "drive port {index} out of range ({n_ports} ports)"
            )));
        }
        let grid = scene.grid_spec()?;
        let pulse = scene.pulse()?;
        let n = self.n_steps.unwrap_or(grid.n_steps);
        let mut signal = Vec::with_capacity(n);
        for step in 0..n {
            let t = (step as f64 + 0.5) * grid.dt;
            signal.push(pulse.eval(t));
        }
        self.drive = vec![Vec::new(); n_ports];
        self.drive[index] = signal;
        Ok(self)
    }

    pub fn with_design(mut self, design: Vec<(EdgeId, f64)>) -> Self {
        self.design = design;
        self
    }

    pub fn with_tape(mut self, region: DesignRegion) -> Self {
        self.tape_over = Some(region);
        self
    }

    pub fn with_steps(mut self, n: usize) -> Self {
        self.n_steps = Some(n);
        self
    }

    /// Terminate ports `indices` with the kernel set.
    pub fn with_irbc(mut self, indices: Vec<usize>, set: ImpulseResponseSet) -> Self {
        self.irbc = Some(IrbcDrive {
            ports: indices,
            set,
        });
        self
    }
}

/// Everything a forward run produces.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub ports: Vec<PortRecord>,
    pub tape: Option<Tape>,
    /// Ohmic energy deposited in lossy material over the whole run.
    pub dissipated: f64,
    pub dt: f64,
    pub n_steps: usize,
}

/// March a scene through its leapfrog loop.
///
/// Per step: advance H, sample port currents, advance E, impress sources
/// (port launches and the optional dipole), sample port voltages, and append
/// the tape row.
pub fn run_forward(scene: &Scene, opts: &ForwardOptions) -> Result<ForwardRun> {
    let grid = scene.grid_spec()?;
    let materials = scene.materials()?;
    let specs = scene.ports()?;
    if !opts.drive.is_empty() && opts.drive.len() != specs.len() {
        return Err(Error::config(format!(
            "drive has {} signals but the scene has {} ports",
            opts.drive.len(),
            specs.len()
        )));
    }
    let n_steps = opts.n_steps.unwrap_or(grid.n_steps);

    let mut sim = Simulation::new(&grid, &materials, &opts.design, scene.cpml())?;
    let mut recorders: Vec<PortRecorder> = specs.into_iter().map(PortRecorder::new).collect();

    let mut irbc_state = match &opts.irbc {
        Some(ir) => {
            if ir.set.n_ports() != ir.ports.len() {
                return Err(Error::config(format!(
                    "kernel set has {} ports but {} port indices were given",
                    ir.set.n_ports(),
                    ir.ports.len()
                )));
            }
            for (a, &p) in ir.ports.iter().enumerate() {
                if p >= recorders.len() {
                    return Err(Error::config(format!(
                        "termination references port {p} of {}",
                        recorders.len()
                    )));
                }
                if ir.ports[..a].contains(&p) {
                    return Err(Error::config(format!("port {p} terminated twice")));
                }
            }
            if (ir.set.dt - grid.dt).abs() > 1e-9 * grid.dt {
                return Err(Error::config(format!(
                    "kernel time step {:.6e} does not match the run's {:.6e}",
                    ir.set.dt, grid.dt
                )));
            }
            Some(IrbcState::new(ir.set.clone()))
        }
        None => None,
    };

    let dipole_edge = match &scene.dipole {
        Some(d) => Some(d.edge()?),
        None => None,
    };
    let pulse = scene.pulse()?;

    let tape_edges: Vec<EdgeId> = match &opts.tape_over {
        Some(region) => {
            region.validate(&grid)?;
            (0..region.n_edges()).map(|e| region.edge(e)).collect()
        }
        None => Vec::new(),
    };
    let mut tape_data: Vec<f64> = Vec::with_capacity(tape_edges.len() * n_steps);

    for step in 0..n_steps {
        sim.step_h();
        for rec in &mut recorders {
            rec.sample_h(&sim);
        }
        sim.step_e();
        if !opts.drive.is_empty() {
            for (rec, signal) in recorders.iter().zip(&opts.drive) {
                if let Some(&w) = signal.get(step) {
                    if w != 0.0 {
                        rec.spec.inject(&mut sim, w);
                    }
                }
            }
        }
        if let Some(edge) = &dipole_edge {
            let t = (step as f64 + 0.5) * grid.dt;
            sim.add_edge_current(edge, pulse.eval(t));
        }
        if let (Some(state), Some(ir)) = (&mut irbc_state, &opts.irbc) {
            let w_now: Vec<f64> = ir
                .ports
                .iter()
                .map(|&p| recorders[p].wave_minus(step))
                .collect();
            let signals = state.push(&w_now)?;
            for (&p, &s) in ir.ports.iter().zip(&signals) {
                if s != 0.0 {
                    recorders[p].spec.inject(&mut sim, s);
                }
            }
        }
        for rec in &mut recorders {
            rec.sample_e(&sim);
        }
        for edge in &tape_edges {
            tape_data.push(sim.e_field(edge));
        }
    }

    let tape = opts.tape_over.as_ref().map(|_| Tape {
        edges: tape_edges,
        n_steps,
        data: tape_data,
    });

    Ok(ForwardRun {
        ports: recorders.into_iter().map(|r| r.finish(grid.dt)).collect(),
        tape,
        dissipated: sim.dissipated_energy(),
        dt: grid.dt,
        n_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Scene;

    fn tiny_scene() -> Scene {
        Scene::from_toml_str(
            r#"
            name = "tiny"
            [grid]
            nx = 20
            ny = 18
            nz = 16
            h_m = 0.5e-3
            n_steps = 130
            pml_cells = 4
            [pulse]
            center_hz = 20e9
            bandwidth_hz = 36e9
            side_lobes = 1
            [dipole]
            i = 10
            j = 9
            k = 8
            axis = "z"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn dipole_run_produces_fields_and_no_ports() {
        let scene = tiny_scene();
        let run = run_forward(&scene, &ForwardOptions::new()).unwrap();
        assert!(run.ports.is_empty());
        assert!(run.tape.is_none());
        assert_eq!(run.n_steps, 130);
    }

    #[test]
    fn tape_rows_match_region_size() {
        let mut scene = tiny_scene();
        scene.design = Some(crate::scene::DesignConfig {
            x0: 6,
            y0: 6,
            w: 4,
            h: 4,
            plane_k: 8,
            boundary: "mirror".into(),
            filter: "open".into(),
            fixed: Vec::new(),
        });
        let region = scene.design_region().unwrap().unwrap();
        let n_edges = region.n_edges();
        let opts = ForwardOptions::new().with_tape(region).with_steps(12);
        let run = run_forward(&scene, &opts).unwrap();
        let tape = run.tape.unwrap();
        assert_eq!(tape.n_steps, 12);
        assert_eq!(tape.data.len(), 12 * n_edges);
        // The dipole lies outside the design plane's cone of influence for
        // the first step; by step 12 the plane must carry signal.
        let last = tape.row(11);
        assert!(last.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn drive_length_mismatch_is_rejected() {
        let scene = tiny_scene();
        let mut opts = ForwardOptions::new();
        opts.drive = vec![Vec::new(); 3];
        let err = run_forward(&scene, &opts).unwrap_err();
        assert!(err.to_string().contains("ports"));
    }
}
