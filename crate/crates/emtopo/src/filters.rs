//! Density filters on the planar design lattice and the continuation schedule.
//!
//! Filters act independently on the two in-plane edge families (edges of
//! different orientation never mix). Each family forms a regular 2D lattice
//! with unit spacing; a filter neighborhood is the open disk of radius `R`
//! (cell units) with cone weights `w(d) = 1 - d/R`. Neighbors outside the
//! design domain are complementary variables resolved by the boundary policy:
//! zero-valued (antenna mode) or mirror-reflected (network mode). The weight
//! normalization always uses the full-disk weight sum, so the complementary
//! variables genuinely participate.
//!
//! The smooth morphology operators are exponential-family means,
//!
//! * dilate:  `m + alpha * ln( sum_j (w_j/S) exp((p_j - m)/alpha) )`
//! * erode:   `n - alpha * ln( sum_j (w_j/S) exp(-(p_j - n)/alpha) )`
//!
//! with `m`/`n` the neighborhood max/min. They tend to the hard max/min as
//! `alpha -> 0` and to the linear filter as `alpha` grows, and satisfy
//! `erode <= linear <= dilate` pointwise for any `alpha`.

use crate::error::{Error, Result};
use crate::grid::{DesignRegion, EdgeFamily};

/// How neighborhoods crossing the design boundary are completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Complementary variables are zero (void beyond the domain).
    Zero,
    /// Complementary variables mirror the interior across the boundary.
    Mirror,
}

/// Smooth morphology mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphMode {
    Erode,
    Dilate,
}

/// One filter stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    Linear { radius: f64 },
    Morph { mode: MorphMode, radius: f64, alpha: f64 },
}

/// Composite filter selected by config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    /// No filtering (testing / degenerate configs).
    Identity,
    /// Single linear blur.
    Linear,
    /// Open = dilate after erode: removes small islands.
    Open,
    /// Close = erode after dilate: fills small holes.
    Close,
    /// Open, then close: both feature-size controls.
    OpenClose,
}

impl ChainKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "identity" => ChainKind::Identity,
            "linear" => ChainKind::Linear,
            "open" => ChainKind::Open,
            "close" => ChainKind::Close,
            "open-close" => ChainKind::OpenClose,
            other => {
                return Err(Error::config(format!(
                    "unknown filter kind '{other}' (expected identity|linear|open|close|open-close)"
                )))
            }
        })
    }
}

/// Filter chain: a composite kind plus the boundary policy of the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterChain {
    pub kind: ChainKind,
    pub boundary: BoundaryPolicy,
}

/// Forward-pass cache: the input of every stage, needed for backpropagation.
#[derive(Debug, Clone)]
pub struct ChainCache {
    stages: Vec<Stage>,
    boundary: BoundaryPolicy,
    /// `inputs[s]` is the input vector of stage `s`.
    inputs: Vec<Vec<f64>>,
}

impl FilterChain {
    /// Stage sequence for the given continuation parameters.
    pub fn stages(&self, radius: f64, alpha: f64) -> Vec<Stage> {
        let er = Stage::Morph { mode: MorphMode::Erode, radius, alpha };
        let di = Stage::Morph { mode: MorphMode::Dilate, radius, alpha };
        match self.kind {
            ChainKind::Identity => vec![],
            ChainKind::Linear => vec![Stage::Linear { radius }],
            ChainKind::Open => vec![er, di],
            ChainKind::Close => vec![di, er],
            ChainKind::OpenClose => vec![er, di, di, er],
        }
    }

    /// Apply the chain; the returned cache enables [`FilterChain::backprop`].
    pub fn evaluate(
        &self,
        region: &DesignRegion,
        p: &[f64],
        radius: f64,
        alpha: f64,
    ) -> Result<(Vec<f64>, ChainCache)> {
        if p.len() != region.n_edges() {
            return Err(Error::config(format!(
                "filter input has {} entries, design region has {}",
                p.len(),
                region.n_edges()
            )));
        }
        let stages = self.stages(radius, alpha);
        let mut inputs = Vec::with_capacity(stages.len());
        let mut cur = p.to_vec();
        for st in &stages {
            inputs.push(cur.clone());
            cur = apply_stage(region, &cur, *st, self.boundary)?;
        }
        Ok((
            cur,
            ChainCache {
                stages,
                boundary: self.boundary,
                inputs,
            },
        ))
    }

    /// Pull a gradient w.r.t. the chain output back to the raw densities:
    /// `dF/dp = J_1^T ... J_n^T (dF/d p~)`.
    pub fn backprop(&self, region: &DesignRegion, cache: &ChainCache, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != region.n_edges() {
            return Err(Error::config("upstream gradient length does not match the region"));
        }
        if cache.stages.len() != cache.inputs.len() {
            return Err(Error::config("filter cache is incomplete"));
        }
        for inp in &cache.inputs {
            if inp.len() != region.n_edges() {
                return Err(Error::config("filter cache does not match the region"));
            }
        }
        let mut grad = upstream.to_vec();
        for (st, input) in cache.stages.iter().zip(cache.inputs.iter()).rev() {
            grad = stage_vjp(region, input, &grad, *st, cache.boundary)?;
        }
        Ok(grad)
    }

    /// Directional derivative of the chain at the cached point.
    pub fn jvp(&self, region: &DesignRegion, cache: &ChainCache, dp: &[f64]) -> Result<Vec<f64>> {
        let mut d = dp.to_vec();
        for (st, input) in cache.stages.iter().zip(cache.inputs.iter()) {
            d = stage_jvp(region, input, &d, *st, cache.boundary)?;
        }
        Ok(d)
    }
}

/// Disk offsets `(di, dj, w)` with cone weights, plus the full-disk weight sum.
fn disk_offsets(radius: f64) -> (Vec<(i64, i64, f64)>, f64) {
    if !(radius > 0.0) {
        return (vec![(0, 0, 1.0)], 1.0);
    }
    let r_ceil = radius.ceil() as i64;
    let mut offs = Vec::new();
    let mut total = 0.0;
    for dj in -r_ceil..=r_ceil {
        for di in -r_ceil..=r_ceil {
            let d = ((di * di + dj * dj) as f64).sqrt();
            if d < radius {
                let w = 1.0 - d / radius;
                if w > 0.0 {
                    offs.push((di, dj, w));
                    total += w;
                }
            }
        }
    }
    (offs, total)
}

/// Reflect index `q` into `[0, m)` (mirror about the domain faces).
#[inline]
fn reflect(q: i64, m: i64) -> i64 {
    let period = 2 * m;
    let mut r = q % period;
    if r < 0 {
        r += period;
    }
    if r >= m {
        period - 1 - r
    } else {
        r
    }
}

/// Per-family lattice dimensions `(width, height)`.
fn family_dims(region: &DesignRegion, fam: EdgeFamily) -> (usize, usize) {
    match fam {
        EdgeFamily::AlongX => (region.w, region.h + 1),
        EdgeFamily::AlongY => (region.w + 1, region.h),
    }
}

fn family_range(region: &DesignRegion, fam: EdgeFamily) -> (usize, usize) {
    match fam {
        EdgeFamily::AlongX => (0, region.n_x()),
        EdgeFamily::AlongY => (region.n_x(), region.n_edges()),
    }
}

/// Visit each neighbor of lattice pixel `(i, j)`: yields the weight, the value
/// index if the neighbor resolves to a real variable (`Some(flat)`) and `None`
/// for zero-padding virtuals.
#[inline]
fn resolve(
    i: i64,
    j: i64,
    di: i64,
    dj: i64,
    w_dim: i64,
    h_dim: i64,
    boundary: BoundaryPolicy,
) -> Option<(i64, i64)> {
    let (ni, nj) = (i + di, j + dj);
    if ni >= 0 && ni < w_dim && nj >= 0 && nj < h_dim {
        return Some((ni, nj));
    }
    match boundary {
        BoundaryPolicy::Zero => None,
        BoundaryPolicy::Mirror => Some((reflect(ni, w_dim), reflect(nj, h_dim))),
    }
}

fn apply_stage(region: &DesignRegion, p: &[f64], stage: Stage, boundary: BoundaryPolicy) -> Result<Vec<f64>> {
    match stage {
        Stage::Linear { radius } => Ok(linear_filter(region, p, radius, boundary)),
        Stage::Morph { mode, radius, alpha } => fw_mean(region, p, radius, alpha, mode, boundary),
    }
}

fn stage_vjp(
    region: &DesignRegion,
    input: &[f64],
    upstream: &[f64],
    stage: Stage,
    boundary: BoundaryPolicy,
) -> Result<Vec<f64>> {
    match stage {
        Stage::Linear { radius } => Ok(linear_filter_vjp(region, upstream, radius, boundary)),
        Stage::Morph { mode, radius, alpha } => {
            fw_mean_vjp(region, input, upstream, radius, alpha, mode, boundary)
        }
    }
}

fn stage_jvp(
    region: &DesignRegion,
    input: &[f64],
    dp: &[f64],
    stage: Stage,
    boundary: BoundaryPolicy,
) -> Result<Vec<f64>> {
    match stage {
        Stage::Linear { radius } => Ok(linear_filter(region, dp, radius, boundary_for_tangent(boundary))),
        Stage::Morph { mode, radius, alpha } => {
            fw_mean_jvp(region, input, dp, radius, alpha, mode, boundary)
        }
    }
}

/// The tangent map of the linear filter under zero-padding is the filter
/// itself; under mirroring the tangent also mirrors (perturbing a variable
/// perturbs its reflections).
fn boundary_for_tangent(boundary: BoundaryPolicy) -> BoundaryPolicy {
    boundary
}

/// Radius-R disk weighted mean over each edge family.
pub fn linear_filter(region: &DesignRegion, p: &[f64], radius: f64, boundary: BoundaryPolicy) -> Vec<f64> {
    let (offs, total) = disk_offsets(radius);
    let mut out = vec![0.0; p.len()];
    for fam in [EdgeFamily::AlongX, EdgeFamily::AlongY] {
        let (wd, hd) = family_dims(region, fam);
        let (base, _end) = family_range(region, fam);
        let (wi, hi) = (wd as i64, hd as i64);
        for j in 0..hd as i64 {
            for i in 0..wd as i64 {
                let mut acc = 0.0;
                for &(di, dj, w) in &offs {
                    if let Some((ni, nj)) = resolve(i, j, di, dj, wi, hi, boundary) {
                        acc += w * p[base + (nj as usize) * wd + ni as usize];
                    }
                }
                out[base + (j as usize) * wd + i as usize] = acc / total;
            }
        }
    }
    out
}

/// Transpose of [`linear_filter`] applied to a cotangent `y`.
pub fn linear_filter_vjp(region: &DesignRegion, y: &[f64], radius: f64, boundary: BoundaryPolicy) -> Vec<f64> {
    let (offs, total) = disk_offsets(radius);
    let mut out = vec![0.0; y.len()];
    for fam in [EdgeFamily::AlongX, EdgeFamily::AlongY] {
        let (wd, hd) = family_dims(region, fam);
        let (base, _end) = family_range(region, fam);
        let (wi, hi) = (wd as i64, hd as i64);
        for j in 0..hd as i64 {
            for i in 0..wd as i64 {
                let g = y[base + (j as usize) * wd + i as usize] / total;
                if g == 0.0 {
                    continue;
                }
                for &(di, dj, w) in &offs {
                    if let Some((ni, nj)) = resolve(i, j, di, dj, wi, hi, boundary) {
                        out[base + (nj as usize) * wd + ni as usize] += w * g;
                    }
                }
            }
        }
    }
    out
}

/// Smooth erode/dilate (exponential-family fW-mean) over the radius-R disk.
pub fn fw_mean(
    region: &DesignRegion,
    p: &[f64],
    radius: f64,
    alpha: f64,
    mode: MorphMode,
    boundary: BoundaryPolicy,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::config("morphology nonlinearity alpha must be > 0"));
    }
    let (offs, total) = disk_offsets(radius);
    let sign = match mode {
        MorphMode::Dilate => 1.0,
        MorphMode::Erode => -1.0,
    };
    let mut out = vec![0.0; p.len()];
    let mut vals: Vec<f64> = Vec::with_capacity(offs.len());
    let mut ws: Vec<f64> = Vec::with_capacity(offs.len());
    for fam in [EdgeFamily::AlongX, EdgeFamily::AlongY] {
        let (wd, hd) = family_dims(region, fam);
        let (base, _end) = family_range(region, fam);
        let (wi, hi) = (wd as i64, hd as i64);
        for j in 0..hd as i64 {
            for i in 0..wd as i64 {
                vals.clear();
                ws.clear();
                let mut extreme = f64::NEG_INFINITY;
                for &(di, dj, w) in &offs {
                    let v = match resolve(i, j, di, dj, wi, hi, boundary) {
                        Some((ni, nj)) => p[base + (nj as usize) * wd + ni as usize],
                        None => 0.0,
                    };
                    vals.push(v);
                    ws.push(w);
                    extreme = extreme.max(sign * v);
                }
                // extreme = max(sign*p); the shifted exponentials never overflow.
                let mut acc = 0.0;
                for (v, w) in vals.iter().zip(ws.iter()) {
                    acc += (w / total) * ((sign * v - extreme) / alpha).exp();
                }
                out[base + (j as usize) * wd + i as usize] = sign * (extreme + alpha * acc.ln());
            }
        }
    }
    Ok(out)
}

/// Softmax/softmin weights of the fW-mean at one pixel; shared by the
/// Jacobian products.
#[inline]
fn morph_weights(
    vals: &[f64],
    ws: &[f64],
    total: f64,
    alpha: f64,
    sign: f64,
    weights_out: &mut Vec<f64>,
) {
    let mut extreme = f64::NEG_INFINITY;
    for v in vals {
        extreme = extreme.max(sign * v);
    }
    weights_out.clear();
    let mut denom = 0.0;
    for (v, w) in vals.iter().zip(ws.iter()) {
        let e = (w / total) * ((sign * v - extreme) / alpha).exp();
        weights_out.push(e);
        denom += e;
    }
    for e in weights_out.iter_mut() {
        *e /= denom;
    }
}

/// Transpose-Jacobian product of [`fw_mean`] at the point `input`.
pub fn fw_mean_vjp(
    region: &DesignRegion,
    input: &[f64],
    upstream: &[f64],
    radius: f64,
    alpha: f64,
    mode: MorphMode,
    boundary: BoundaryPolicy,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::config("morphology nonlinearity alpha must be > 0"));
    }
    let (offs, total) = disk_offsets(radius);
    let sign = match mode {
        MorphMode::Dilate => 1.0,
        MorphMode::Erode => -1.0,
    };
    let mut out = vec![0.0; input.len()];
    let mut vals: Vec<f64> = Vec::with_capacity(offs.len());
    let mut ws: Vec<f64> = Vec::with_capacity(offs.len());
    let mut resolved: Vec<Option<usize>> = Vec::with_capacity(offs.len());
    let mut sm: Vec<f64> = Vec::with_capacity(offs.len());
    for fam in [EdgeFamily::AlongX, EdgeFamily::AlongY] {
        let (wd, hd) = family_dims(region, fam);
        let (base, _end) = family_range(region, fam);
        let (wi, hi) = (wd as i64, hd as i64);
        for j in 0..hd as i64 {
            for i in 0..wd as i64 {
                let g = upstream[base + (j as usize) * wd + i as usize];
                if g == 0.0 {
                    continue;
                }
                vals.clear();
                ws.clear();
                resolved.clear();
                for &(di, dj, w) in &offs {
                    match resolve(i, j, di, dj, wi, hi, boundary) {
                        Some((ni, nj)) => {
                            let flat = base + (nj as usize) * wd + ni as usize;
                            vals.push(input[flat]);
                            resolved.push(Some(flat));
                        }
                        None => {
                            vals.push(0.0);
                            resolved.push(None);
                        }
                    }
                    ws.push(w);
                }
                morph_weights(&vals, &ws, total, alpha, sign, &mut sm);
                for (r, s) in resolved.iter().zip(sm.iter()) {
                    if let Some(flat) = r {
                        out[*flat] += g * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Jacobian-vector product of [`fw_mean`] at the point `input`.
pub fn fw_mean_jvp(
    region: &DesignRegion,
    input: &[f64],
    dp: &[f64],
    radius: f64,
    alpha: f64,
    mode: MorphMode,
    boundary: BoundaryPolicy,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::config("morphology nonlinearity alpha must be > 0"));
    }
    let (offs, total) = disk_offsets(radius);
    let sign = match mode {
        MorphMode::Dilate => 1.0,
        MorphMode::Erode => -1.0,
    };
    let mut out = vec![0.0; input.len()];
    let mut vals: Vec<f64> = Vec::with_capacity(offs.len());
    let mut ws: Vec<f64> = Vec::with_capacity(offs.len());
    let mut tangents: Vec<f64> = Vec::with_capacity(offs.len());
    let mut sm: Vec<f64> = Vec::with_capacity(offs.len());
    for fam in [EdgeFamily::AlongX, EdgeFamily::AlongY] {
        let (wd, hd) = family_dims(region, fam);
        let (base, _end) = family_range(region, fam);
        let (wi, hi) = (wd as i64, hd as i64);
        for j in 0..hd as i64 {
            for i in 0..wd as i64 {
                vals.clear();
                ws.clear();
                tangents.clear();
                for &(di, dj, w) in &offs {
                    match resolve(i, j, di, dj, wi, hi, boundary) {
                        Some((ni, nj)) => {
                            let flat = base + (nj as usize) * wd + ni as usize;
                            vals.push(input[flat]);
                            tangents.push(dp[flat]);
                        }
                        None => {
                            vals.push(0.0);
                            tangents.push(0.0);
                        }
                    }
                    ws.push(w);
                }
                morph_weights(&vals, &ws, total, alpha, sign, &mut sm);
                let mut acc = 0.0;
                for (t, s) in tangents.iter().zip(sm.iter()) {
                    acc += t * s;
                }
                out[base + (j as usize) * wd + i as usize] = acc;
            }
        }
    }
    Ok(out)
}

/// Where the continuation schedule currently stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuationPhase {
    /// Shrinking the filter radius toward its floor.
    Radius,
    /// Radius pinned; sharpening the morphology (alpha decreasing).
    Alpha,
    /// Alpha crossed its floor: optimization terminates.
    Done,
}

/// Filter-parameter continuation: the radius decays geometrically to a floor,
/// then the nonlinearity sharpens geometrically until it crosses its floor.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationState {
    pub radius: f64,
    pub alpha: f64,
    pub phase: ContinuationPhase,
    pub radius_min: f64,
    pub radius_factor: f64,
    pub alpha_min: f64,
    pub alpha_factor: f64,
    /// Number of parameter updates performed so far.
    pub updates: usize,
}

impl Default for ContinuationState {
    fn default() -> Self {
        ContinuationState::new(10.0, 3.0, 0.75, 8.0, 1e-5, 0.5)
    }
}

impl ContinuationState {
    pub fn new(
        radius0: f64,
        radius_min: f64,
        radius_factor: f64,
        alpha0: f64,
        alpha_min: f64,
        alpha_factor: f64,
    ) -> Self {
        let phase = if radius0 <= radius_min {
            ContinuationPhase::Alpha
        } else {
            ContinuationPhase::Radius
        };
        ContinuationState {
            radius: radius0.max(radius_min),
            alpha: alpha0,
            phase,
            radius_min,
            radius_factor,
            alpha_min,
            alpha_factor,
            updates: 0,
        }
    }

    /// Advance one parameter update. Returns `false` once the schedule has
    /// terminated (alpha below its floor).
    pub fn step(&mut self) -> bool {
        match self.phase {
            ContinuationPhase::Radius => {
                let next = self.radius * self.radius_factor;
                if next <= self.radius_min {
                    self.radius = self.radius_min;
                    self.phase = ContinuationPhase::Alpha;
                } else {
                    self.radius = next;
                }
                self.updates += 1;
                true
            }
            ContinuationPhase::Alpha => {
                self.alpha *= self.alpha_factor;
                self.updates += 1;
                if self.alpha < self.alpha_min {
                    self.phase = ContinuationPhase::Done;
                    false
                } else {
                    true
                }
            }
            ContinuationPhase::Done => false,
        }
    }
}
