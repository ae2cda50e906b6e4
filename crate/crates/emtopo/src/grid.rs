//! Uniform cubic Yee grid, material maps and planar design regions.
//!
//! Staggering convention (cell size `h`, indices `i,j,k`):
//!
//! * `Ex` edges at `(i+1/2, j, k)`, array dims `nx × (ny+1) × (nz+1)`
//! * `Ey` edges at `(i, j+1/2, k)`, array dims `(nx+1) × ny × (nz+1)`
//! * `Ez` edges at `(i, j, k+1/2)`, array dims `(nx+1) × (ny+1) × nz`
//! * `Hx` faces at `(i, j+1/2, k+1/2)`, dims `(nx+1) × ny × nz`
//! * `Hy` faces at `(i+1/2, j, k+1/2)`, dims `nx × (ny+1) × nz`
//! * `Hz` faces at `(i+1/2, j+1/2, k)`, dims `nx × ny × (nz+1)`
//!
//! The outermost tangential E samples are never updated, which makes the
//! outer boundary a perfect electric conductor backing the absorbing layers.

use serde::{Deserialize, Serialize};

use crate::constants::{C0, SIGMA_COPPER};
use crate::error::{Error, Result};

/// Cartesian axis of an edge or face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// One Yee edge, identified by the axis it points along and its grid index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeId {
    pub axis: Axis,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Geometry and march parameters of a simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Total cell counts, absorbing layers included.
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell size (m), uniform in all directions.
    pub h: f64,
    /// Time step (s).
    pub dt: f64,
    /// Number of leapfrog steps in a run.
    pub n_steps: usize,
    /// Absorbing-layer thickness in cells on each boundary face that carries one.
    pub pml_cells: usize,
}

impl GridSpec {
    /// Stability-limited time step: `cfl * h / (sqrt(3) * c0)`.
    pub fn stable_dt(h: f64, cfl: f64) -> f64 {
        cfl * h / (3.0_f64.sqrt() * C0)
    }

    pub fn new(nx: usize, ny: usize, nz: usize, h: f64, n_steps: usize, pml_cells: usize) -> Result<Self> {
        let spec = GridSpec {
            nx,
            ny,
            nz,
            h,
            dt: Self::stable_dt(h, 0.99),
            n_steps,
            pml_cells,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::config("grid has zero extent along some axis"));
        }
        if !(self.h > 0.0) {
            return Err(Error::config("cell size must be > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("time step must be > 0"));
        }
        let limit = GridSpec::stable_dt(self.h, 1.0);
        if self.dt > limit {
            return Err(Error::config(format!(
                "time step {:.4e} s exceeds the stability limit {:.4e} s",
                self.dt, limit
            )));
        }
        if self.pml_cells < 1 {
            return Err(Error::config("absorbing layer must be at least 1 cell thick"));
        }
        let min_span = 2 * self.pml_cells + 2;
        if self.nx < min_span || self.ny < min_span || self.nz < self.pml_cells + 2 {
            return Err(Error::config(
                "grid too small to hold the absorbing layers plus an interior",
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }
}

/// Per-cell material description plus perfectly conducting edge sets.
#[derive(Debug, Clone)]
pub struct MaterialMap {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Relative permittivity per cell (>= 1).
    pub eps_r: Vec<f64>,
    /// Relative permeability per cell (>= 1).
    pub mu_r: Vec<f64>,
    /// Electric conductivity per cell (S/m, >= 0).
    pub sigma: Vec<f64>,
    /// Edges forced to zero tangential field (strips, ground planes, walls).
    pub pec_edges: Vec<EdgeId>,
}

impl MaterialMap {
    pub fn vacuum(nx: usize, ny: usize, nz: usize) -> Self {
        let n = nx * ny * nz;
        MaterialMap {
            nx,
            ny,
            nz,
            eps_r: vec![1.0; n],
            mu_r: vec![1.0; n],
            sigma: vec![0.0; n],
            pec_edges: Vec::new(),
        }
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    /// Fill the axis-aligned cell box `[x0,x1) × [y0,y1) × [z0,z1)`.
    pub fn fill_box(
        &mut self,
        (x0, x1): (usize, usize),
        (y0, y1): (usize, usize),
        (z0, z1): (usize, usize),
        eps_r: f64,
        sigma: f64,
    ) {
        for i in x0..x1.min(self.nx) {
            for j in y0..y1.min(self.ny) {
                for k in z0..z1.min(self.nz) {
                    let c = self.cell_index(i, j, k);
                    self.eps_r[c] = eps_r;
                    self.sigma[c] = sigma;
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nx * self.ny * self.nz;
        if self.eps_r.len() != n || self.mu_r.len() != n || self.sigma.len() != n {
            return Err(Error::config("material arrays do not match the grid size"));
        }
        if self.eps_r.iter().any(|&v| !(v >= 1.0) || !v.is_finite()) {
            return Err(Error::config("relative permittivity must satisfy eps_r >= 1"));
        }
        if self.mu_r.iter().any(|&v| !(v >= 1.0) || !v.is_finite()) {
            return Err(Error::config("relative permeability must satisfy mu_r >= 1"));
        }
        if self.sigma.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("conductivity must satisfy sigma >= 0"));
        }
        Ok(())
    }
}

/// Which of the two in-plane edge orientations a design variable sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeFamily {
    /// Edges along x, centers at `(i+1/2, j)` in plane coordinates.
    AlongX,
    /// Edges along y, centers at `(i, j+1/2)`.
    AlongY,
}

/// Planar design region: a `w × h` patch of cells in the plane `z = plane_k`.
///
/// Design variables live on every in-plane E edge whose center lies on the
/// closed patch `[x0, x0+w] × [y0, y0+h]` (cell units). That yields
/// `w*(h+1)` x-directed plus `(w+1)*h` y-directed edges. Variables are
/// ordered x-family first, row-major (`j` outer, `i` inner), then y-family.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRegion {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub plane_k: usize,
    /// Variable indices pinned to density 1 (feed-junction pads).
    pub fixed: Vec<usize>,
}

impl DesignRegion {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize, plane_k: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::config("design region must span at least one cell"));
        }
        Ok(DesignRegion {
            x0,
            y0,
            w,
            h,
            plane_k,
            fixed: Vec::new(),
        })
    }

    /// Number of design variables (edges of both in-plane orientations).
    pub fn n_edges(&self) -> usize {
        self.w * (self.h + 1) + (self.w + 1) * self.h
    }

    /// Count of x-family variables; they occupy indices `0..n_x()`.
    pub fn n_x(&self) -> usize {
        self.w * (self.h + 1)
    }

    /// The Yee edge carrying design variable `idx`.
    pub fn edge(&self, idx: usize) -> EdgeId {
        let nx_fam = self.n_x();
        if idx < nx_fam {
            let j = idx / self.w;
            let i = idx % self.w;
            EdgeId {
                axis: Axis::X,
                i: self.x0 + i,
                j: self.y0 + j,
                k: self.plane_k,
            }
        } else {
            let r = idx - nx_fam;
            let j = r / (self.w + 1);
            let i = r % (self.w + 1);
            EdgeId {
                axis: Axis::Y,
                i: self.x0 + i,
                j: self.y0 + j,
                k: self.plane_k,
            }
        }
    }

    /// All design edges in variable order.
    pub fn edges(&self) -> Vec<EdgeId> {
        (0..self.n_edges()).map(|idx| self.edge(idx)).collect()
    }

    /// (family, plane i, plane j) of variable `idx`, for raster export and
    /// filter neighborhoods. Coordinates are relative to the patch origin.
    pub fn plane_coords(&self, idx: usize) -> (EdgeFamily, usize, usize) {
        let nx_fam = self.n_x();
        if idx < nx_fam {
            (EdgeFamily::AlongX, idx % self.w, idx / self.w)
        } else {
            let r = idx - nx_fam;
            (EdgeFamily::AlongY, r % (self.w + 1), r / (self.w + 1))
        }
    }

    /// Geometric center of variable `idx` in plane units (cells).
    pub fn center(&self, idx: usize) -> (f64, f64) {
        let (fam, i, j) = self.plane_coords(idx);
        match fam {
            EdgeFamily::AlongX => (i as f64 + 0.5, j as f64),
            EdgeFamily::AlongY => (i as f64, j as f64 + 0.5),
        }
    }

    /// Mark every variable whose center falls in the closed rectangle
    /// (patch-relative cell units) as fixed-to-one.
    pub fn fix_rect(&mut self, x_range: (f64, f64), y_range: (f64, f64)) {
        for idx in 0..self.n_edges() {
            let (cx, cy) = self.center(idx);
            if cx >= x_range.0 && cx <= x_range.1 && cy >= y_range.0 && cy <= y_range.1 {
                if !self.fixed.contains(&idx) {
                    self.fixed.push(idx);
                }
            }
        }
        self.fixed.sort_unstable();
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.x0 + self.w + 1 > grid.nx || self.y0 + self.h + 1 > grid.ny || self.plane_k >= grid.nz {
            return Err(Error::config("design region does not fit inside the grid"));
        }
        let p = grid.pml_cells;
        if self.x0 < p
            || self.y0 < p
            || self.x0 + self.w > grid.nx - p
            || self.y0 + self.h > grid.ny - p
        {
            return Err(Error::config("design region overlaps the absorbing layers"));
        }
        if self.fixed.iter().any(|&f| f >= self.n_edges()) {
            return Err(Error::config("fixed design index out of range"));
        }
        Ok(())
    }
}

/// Densities attached to a design region, one value in `[0,1]` per edge.
#[derive(Debug, Clone)]
pub struct DesignVector {
    pub values: Vec<f64>,
}

impl DesignVector {
    pub fn uniform(region: &DesignRegion, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::config("design density must lie in [0, 1]"));
        }
        Ok(DesignVector {
            values: vec![value; region.n_edges()],
        })
    }

    pub fn validate(&self, region: &DesignRegion) -> Result<()> {
        if self.values.len() != region.n_edges() {
            return Err(Error::config(format!(
                "design vector has {} entries but the region has {} edges",
                self.values.len(),
                region.n_edges()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::config("design densities must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Map a filtered density to an edge conductivity (S/m):
/// `sigma = 10^(9 p - 4)`, spanning `1e-4 ..= 1e5` over `p in [0, 1]`.
pub fn density_to_sigma(p: f64) -> f64 {
    10f64.powf(9.0 * p - 4.0)
}

/// Derivative of [`density_to_sigma`]: `d sigma / d p = 9 ln(10) sigma`.
pub fn density_to_sigma_grad(p: f64) -> f64 {
    9.0 * std::f64::consts::LN_10 * density_to_sigma(p)
}

/// Map a whole density vector, validating the range first.
pub fn map_densities(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err(Error::config("densities must lie in [0, 1] before mapping"));
    }
    Ok(p.iter().map(|&v| density_to_sigma(v)).collect())
}

/// Threshold a filtered density into the manufactured conductivity:
/// `p >= 0.5` (boundary inclusive) becomes copper, the rest becomes void.
pub fn threshold_sigma(p: f64) -> f64 {
    if p >= 0.5 {
        SIGMA_COPPER
    } else {
        0.0
    }
}

/// Grayness of a design: fraction of entries farther than `tol` from {0, 1}.
pub fn grayness(p: &[f64], tol: f64) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let gray = p.iter().filter(|&&v| v > tol && v < 1.0 - tol).count();
    gray as f64 / p.len() as f64
}
