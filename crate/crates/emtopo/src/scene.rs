//! Declarative simulation scenes: grid, materials, conductor sheets, ports,
//! excitation, and the optional design region, with a TOML file format.
//!
//! A scene file describes geometry in grid units with explicit SI-unit field
//! names (`h_m`, `center_hz`, ...). Loading validates everything and reports
//! the offending key; the in-memory [`Scene`] can then build the material map
//! and port specs consumed by the solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::CpmlParams;
use crate::filters::{BoundaryPolicy, ChainKind};
use crate::grid::{Axis, DesignRegion, EdgeId, GridSpec, MaterialMap};
use crate::port::{LineDir, PortSpec};
use crate::waveform::SincPulse;

/// An axis-aligned perfectly conducting sheet, one cell-plane thick.
///
/// Ranges are in edge units: a `Z` sheet at plane `k` spanning `x = (i0, i1)`,
/// `y = (j0, j1)` covers the physical rectangle `[i0 h, i1 h] x [j0 h, j1 h]`
/// and consists of the x-directed edges `i in i0..i1, j in j0..=j1` plus the
/// y-directed edges `i in i0..=i1, j in j0..j1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "plane", rename_all = "lowercase")]
pub enum PecSheet {
    Z { k: usize, x: (usize, usize), y: (usize, usize) },
    X { i: usize, y: (usize, usize), z: (usize, usize) },
    Y { j: usize, x: (usize, usize), z: (usize, usize) },
}

impl PecSheet {
    /// All Yee edges forming the sheet.
    pub fn edges(&self) -> Vec<EdgeId> {
        let mut out = Vec::new();
        match *self {
            PecSheet::Z { k, x, y } => {
                for j in y.0..=y.1 {
                    for i in x.0..x.1 {
                        out.push(EdgeId { axis: Axis::X, i, j, k });
                    }
                }
                for j in y.0..y.1 {
                    for i in x.0..=x.1 {
                        out.push(EdgeId { axis: Axis::Y, i, j, k });
                    }
                }
            }
            PecSheet::X { i, y, z } => {
                for k in z.0..=z.1 {
                    for j in y.0..y.1 {
                        out.push(EdgeId { axis: Axis::Y, i, j, k });
                    }
                }
                for k in z.0..z.1 {
                    for j in y.0..=y.1 {
                        out.push(EdgeId { axis: Axis::Z, i, j, k });
                    }
                }
            }
            PecSheet::Y { j, x, z } => {
                for k in z.0..=z.1 {
                    for i in x.0..x.1 {
                        out.push(EdgeId { axis: Axis::X, i, j, k });
                    }
                }
                for k in z.0..z.1 {
                    for i in x.0..=x.1 {
                        out.push(EdgeId { axis: Axis::Z, i, j, k });
                    }
                }
            }
        }
        out
    }

    fn validate(&self, grid: &GridSpec, which: usize) -> Result<()> {
        let (ok, detail) = match *self {
            PecSheet::Z { k, x, y } => (
                k < grid.nz && x.0 < x.1 && x.1 <= grid.nx && y.0 <= y.1 && y.1 <= grid.ny,
                format!("z-plane sheet k={k} x={x:?} y={y:?}"),
            ),
            PecSheet::X { i, y, z } => (
                i <= grid.nx && y.0 <= y.1 && y.1 <= grid.ny && z.0 < z.1 && z.1 <= grid.nz,
                format!("x-plane sheet i={i} y={y:?} z={z:?}"),
            ),
            PecSheet::Y { j, x, z } => (
                j <= grid.ny && x.0 <= x.1 && x.1 <= grid.nx && z.0 < z.1 && z.1 <= grid.nz,
                format!("y-plane sheet j={j} x={x:?} z={z:?}"),
            ),
        };
        if !ok {
            return Err(Error::config(format!(
                "conductor sheet {which} does not fit the grid: {detail}"
            )));
        }
        Ok(())
    }
}

/// Rectangular dielectric (or lossy-dielectric) fill, cell ranges exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DielectricBox {
    pub x: (usize, usize),
    pub y: (usize, usize),
    pub z: (usize, usize),
    pub eps_r: f64,
    #[serde(default)]
    pub sigma: f64,
}

/// Design-domain description: where densities live and how they are filtered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub plane_k: usize,
    /// "zero" or "mirror".
    pub boundary: String,
    /// "identity", "linear", "open", "close" or "open-close".
    pub filter: String,
    /// Rectangles of variables pinned at density 1, in region-local
    /// edge-center coordinates (cells).
    #[serde(default)]
    pub fixed: Vec<FixedRect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRect {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl DesignConfig {
    pub fn boundary_policy(&self) -> Result<BoundaryPolicy> {
        match self.boundary.as_str() {
            "zero" => Ok(BoundaryPolicy::Zero),
            "mirror" => Ok(BoundaryPolicy::Mirror),
            other => Err(Error::config(format!(
                "design.boundary must be 'zero' or 'mirror', got '{other}'"
            ))),
        }
    }

    pub fn chain_kind(&self) -> Result<ChainKind> {
        ChainKind::parse(&self.filter)
    }

    /// Build the design region with fixed edges resolved.
    pub fn region(&self) -> Result<DesignRegion> {
        let mut region = DesignRegion::new(self.x0, self.y0, self.w, self.h, self.plane_k)?;
        for rect in &self.fixed {
            region.fix_rect(rect.x, rect.y);
        }
        Ok(region)
    }
}

/// Serialized port description (direction as "+x" / "-x").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortConfig {
    pub name: String,
    pub i_ref: usize,
    pub i_launch: usize,
    pub j0: usize,
    pub k_top: usize,
    pub loop_j: (usize, usize),
    pub loop_k: (usize, usize),
    pub direction: String,
    pub zc: f64,
}

impl PortConfig {
    pub fn to_spec(&self) -> Result<PortSpec> {
        let direction = match self.direction.as_str() {
            "+x" => LineDir::PlusX,
            "-x" => LineDir::MinusX,
            other => {
                return Err(Error::config(format!(
                    "port '{}': direction must be '+x' or '-x', got '{other}'",
                    self.name
                )))
            }
        };
        Ok(PortSpec {
            name: self.name.clone(),
            i_ref: self.i_ref,
            i_launch: self.i_launch,
            j0: self.j0,
            k_top: self.k_top,
            loop_j: self.loop_j,
            loop_k: self.loop_k,
            direction,
            zc: self.zc,
        })
    }

    pub fn from_spec(spec: &PortSpec) -> Self {
        PortConfig {
            name: spec.name.clone(),
            i_ref: spec.i_ref,
            i_launch: spec.i_launch,
            j0: spec.j0,
            k_top: spec.k_top,
            loop_j: spec.loop_j,
            loop_k: spec.loop_k,
            direction: match spec.direction {
                LineDir::PlusX => "+x".into(),
                LineDir::MinusX => "-x".into(),
            },
            zc: spec.zc,
        }
    }
}

/// Optional point current source (scenes without ports, e.g. cavities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleConfig {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    /// "x", "y" or "z".
    pub axis: String,
}

impl DipoleConfig {
    pub fn edge(&self) -> Result<EdgeId> {
        let axis = match self.axis.as_str() {
            "x" => Axis::X,
            "y" => Axis::Y,
            "z" => Axis::Z,
            other => {
                return Err(Error::config(format!(
                    "dipole.axis must be 'x', 'y' or 'z', got '{other}'"
                )))
            }
        };
        Ok(EdgeId { axis, i: self.i, j: self.j, k: self.k })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub h_m: f64,
    pub n_steps: usize,
    pub pml_cells: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub side_lobes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmlConfig {
    #[serde(default = "default_grading")]
    pub grading_order: f64,
    #[serde(default = "default_sigma_factor")]
    pub sigma_factor: f64,
    #[serde(default = "default_kappa")]
    pub kappa_max: f64,
    #[serde(default = "default_alpha")]
    pub alpha_max: f64,
    /// Keep the z=0 face as a bare ground plane.
    #[serde(default)]
    pub grounded: bool,
}

fn default_grading() -> f64 {
    3.0
}
fn default_sigma_factor() -> f64 {
    0.8
}
fn default_kappa() -> f64 {
    7.0
}
fn default_alpha() -> f64 {
    0.24
}

impl Default for PmlConfig {
    fn default() -> Self {
        PmlConfig {
            grading_order: default_grading(),
            sigma_factor: default_sigma_factor(),
            kappa_max: default_kappa(),
            alpha_max: default_alpha(),
            grounded: false,
        }
    }
}

/// A complete scene description (the TOML document root).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub grid: GridConfig,
    pub pulse: PulseConfig,
    #[serde(default)]
    pub pml: PmlConfig,
    #[serde(default)]
    pub dielectric: Vec<DielectricBox>,
    #[serde(default)]
    pub sheet: Vec<PecSheet>,
    #[serde(default)]
    pub port: Vec<PortConfig>,
    #[serde(default)]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub dipole: Option<DipoleConfig>,
}

impl Scene {
    pub fn from_toml_str(text: &str) -> Result<Scene> {
        let scene: Scene =
            toml::from_str(text).map_err(|e| Error::config(format!("scene file: {e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format(format!("scene serialize: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path)?;
        Scene::from_toml_str(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// The validated grid spec (honoring a custom Courant factor).
    pub fn grid_spec(&self) -> Result<GridSpec> {
        if !(self.grid.cfl > 0.0 && self.grid.cfl < 1.0) {
            return Err(Error::config(format!(
                "grid.cfl must be in (0, 1), got {}",
                self.grid.cfl
            )));
        }
        let spec = GridSpec {
            nx: self.grid.nx,
            ny: self.grid.ny,
            nz: self.grid.nz,
            h: self.grid.h_m,
            dt: GridSpec::stable_dt(self.grid.h_m, self.grid.cfl),
            n_steps: self.grid.n_steps,
            pml_cells: self.grid.pml_cells,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pulse(&self) -> Result<SincPulse> {
        SincPulse::new(
            self.pulse.center_hz,
            self.pulse.bandwidth_hz,
            self.pulse.side_lobes,
        )
    }

    pub fn cpml(&self) -> CpmlParams {
        CpmlParams {
            grading_order: self.pml.grading_order,
            sigma_factor: self.pml.sigma_factor,
            kappa_max: self.pml.kappa_max,
            alpha_max: self.pml.alpha_max,
            faces: if self.pml.grounded {
                [true, true, true, true, false, true]
            } else {
                [true; 6]
            },
        }
    }

    /// Materialize the cell map and conductor sheets.
    pub fn materials(&self) -> Result<MaterialMap> {
        let grid = self.grid_spec()?;
        let mut map = MaterialMap::vacuum(grid.nx, grid.ny, grid.nz);
        for (n, d) in self.dielectric.iter().enumerate() {
            if d.x.0 >= d.x.1 || d.y.0 >= d.y.1 || d.z.0 >= d.z.1
                || d.x.1 > grid.nx || d.y.1 > grid.ny || d.z.1 > grid.nz
            {
                return Err(Error::config(format!(
                    "dielectric box {n} has an empty or out-of-grid range"
                )));
            }
            if d.eps_r < 1.0 || d.sigma < 0.0 {
                return Err(Error::config(format!(
                    "dielectric box {n}: eps_r must be >= 1 and sigma >= 0"
                )));
            }
            map.fill_box(d.x, d.y, d.z, d.eps_r, d.sigma);
        }
        for sheet in &self.sheet {
            map.pec_edges.extend(sheet.edges());
        }
        map.validate()?;
        Ok(map)
    }

    pub fn ports(&self) -> Result<Vec<PortSpec>> {
        let grid = self.grid_spec()?;
        let mut out = Vec::with_capacity(self.port.len());
        let mut seen = std::collections::HashSet::new();
        for p in &self.port {
            if !seen.insert(p.name.clone()) {
                return Err(Error::config(format!("duplicate port name '{}'", p.name)));
            }
            let spec = p.to_spec()?;
            spec.validate(&grid)?;
            out.push(spec);
        }
        Ok(out)
    }

    pub fn design_region(&self) -> Result<Option<DesignRegion>> {
        match &self.design {
            None => Ok(None),
            Some(cfg) => {
                let grid = self.grid_spec()?;
                let region = cfg.region()?;
                region.validate(&grid)?;
                cfg.boundary_policy()?;
                cfg.chain_kind()?;
                Ok(Some(region))
            }
        }
    }

    /// Full structural validation; every failure names the offending part.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec()?;
        let pulse = self.pulse()?;
        pulse
            .sample(grid.dt, grid.n_steps)
            .map_err(|e| Error::config(format!("pulse does not fit the run: {e}")))?;
        for (n, sheet) in self.sheet.iter().enumerate() {
            sheet.validate(&grid, n)?;
        }
        self.materials()?;
        self.ports()?;
        self.design_region()?;
        if let Some(dipole) = &self.dipole {
            let edge = dipole.edge()?;
            if edge.i >= grid.nx || edge.j >= grid.ny || edge.k >= grid.nz {
                return Err(Error::config(format!(
                    "dipole at ({}, {}, {}) lies outside the grid",
                    edge.i, edge.j, edge.k
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_scene() -> Scene {
        Scene {
            name: "test".into(),
            grid: GridConfig {
                nx: 60,
                ny: 31,
                nz: 20,
                h_m: 0.25e-3,
                n_steps: 1200,
                pml_cells: 8,
                cfl: 0.99,
            },
            pulse: PulseConfig {
                center_hz: 15e9,
                bandwidth_hz: 10e9,
                side_lobes: 1,
            },
            pml: PmlConfig {
                grounded: true,
                ..PmlConfig::default()
            },
            dielectric: vec![DielectricBox {
                x: (0, 60),
                y: (0, 31),
                z: (0, 2),
                eps_r: 2.2,
                sigma: 0.0,
            }],
            sheet: vec![PecSheet::Z {
                k: 2,
                x: (0, 60),
                y: (13, 17),
            }],
            port: vec![PortConfig {
                name: "p1".into(),
                i_ref: 22,
                i_launch: 12,
                j0: 15,
                k_top: 2,
                loop_j: (11, 19),
                loop_k: (1, 3),
                direction: "+x".into(),
                zc: 50.0,
            }],
            design: Some(DesignConfig {
                x0: 30,
                y0: 10,
                w: 14,
                h: 10,
                plane_k: 2,
                boundary: "mirror".into(),
                filter: "open".into(),
                fixed: vec![],
            }),
            dipole: None,
        }
    }

    #[test]
    fn toml_round_trip_preserves_the_scene() {
        let scene = minimal_scene();
        let text = scene.to_toml_string().unwrap();
        let back = Scene::from_toml_str(&text).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn validation_passes_on_the_minimal_scene() {
        minimal_scene().validate().unwrap();
    }

    #[test]
    fn sheet_edges_form_a_connected_patch() {
        let sheet = PecSheet::Z { k: 2, x: (3, 6), y: (4, 6) };
        let edges = sheet.edges();
        // 3 x-edges per row over 3 rows, plus 4 columns of 2 y-edges.
        let n_x = edges.iter().filter(|e| e.axis == Axis::X).count();
        let n_y = edges.iter().filter(|e| e.axis == Axis::Y).count();
        assert_eq!(n_x, 9);
        assert_eq!(n_y, 8);
        assert!(edges.iter().all(|e| e.k == 2));
    }

    #[test]
    fn rejects_out_of_grid_sheet() {
        let mut scene = minimal_scene();
        scene.sheet.push(PecSheet::Z { k: 25, x: (0, 10), y: (0, 5) });
        let err = scene.validate().unwrap_err().to_string();
        assert!(err.contains("sheet 1"), "should name the sheet: {err}");
    }

    #[test]
    fn rejects_bad_direction_and_duplicate_name() {
        let mut scene = minimal_scene();
        scene.port[0].direction = "up".into();
        assert!(scene.validate().is_err());
        let mut scene2 = minimal_scene();
        let dup = scene2.port[0].clone();
        scene2.port.push(dup);
        let err = scene2.validate().unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_pulse_longer_than_run() {
        let mut scene = minimal_scene();
        scene.grid.n_steps = 100;
        let err = scene.validate().unwrap_err().to_string();
        assert!(err.contains("pulse"), "{err}");
    }

    #[test]
    fn rejects_unknown_filter_kind() {
        let mut scene = minimal_scene();
        scene.design.as_mut().unwrap().filter = "blur".into();
        let err = scene.validate().unwrap_err().to_string();
        assert!(err.contains("blur"), "{err}");
    }
}
