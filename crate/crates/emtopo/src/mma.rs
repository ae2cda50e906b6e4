//! Globally convergent method of moving asymptotes for box-constrained
//! minimization.
//!
//! The design problem here has only box constraints, so each outer iteration
//! builds the separable convex approximation
//!
//! `f~(x) = r + sum_j [ p_j/(u_j - x_j) + q_j/(x_j - l_j) ]`
//!
//! around the current iterate and minimizes it in closed form per coordinate:
//! the stationary point of `p/(u-x) + q/(x-l)` is
//! `x* = (l*sqrt(p) + u*sqrt(q)) / (sqrt(p) + sqrt(q))`, clipped to the move
//! limits. Inner iterations raise the curvature parameter `rho` until the
//! approximation is conservative at the candidate (`f(x^) <= f~(x^)`), capped
//! at four inner evaluations per outer step.

use crate::error::{Error, Result};

/// Tuning constants; defaults follow the published standard values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaConfig {
    /// Maximum move per outer iteration, as a fraction of the box range.
    pub move_limit: f64,
    /// Initial asymptote distance as a fraction of the box range.
    pub asy_init: f64,
    /// Asymptote expansion factor when the iterate keeps direction.
    pub asy_incr: f64,
    /// Asymptote contraction factor when the iterate oscillates.
    pub asy_decr: f64,
    /// Keep-out fraction between iterate bounds and asymptotes.
    pub bound_gap: f64,
    /// Floor for the conservativeness parameter rho.
    pub rho_min: f64,
    /// Cap on inner (conservative) iterations per outer step.
    pub max_inner: usize,
}

impl Default for MmaConfig {
    fn default() -> Self {
        MmaConfig {
            move_limit: 0.5,
            asy_init: 0.5,
            asy_incr: 1.2,
            asy_decr: 0.7,
            bound_gap: 0.1,
            rho_min: 1e-5,
            max_inner: 4,
        }
    }
}

/// Outcome of one outer iteration.
#[derive(Debug, Clone)]
pub struct MmaStep {
    /// Accepted iterate.
    pub x: Vec<f64>,
    /// Objective value at the accepted iterate.
    pub f: f64,
    /// Convex-approximation value at the accepted iterate.
    pub approx: f64,
    /// Inner iterations spent (0 when the first candidate was conservative).
    pub inner_iterations: usize,
}

/// Box-constrained GCMMA state (asymptote memory and iterate history).
#[derive(Debug, Clone)]
pub struct MmaOptimizer {
    pub cfg: MmaConfig,
    lower: Vec<f64>,
    upper: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    x_prev: Vec<f64>,
    x_prev2: Vec<f64>,
    outer_count: usize,
}

impl MmaOptimizer {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::with_config(MmaConfig::default(), lower, upper)
    }

    pub fn with_config(cfg: MmaConfig, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::config("bound vectors differ in length"));
        }
        for (j, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::config(format!(
                    "infeasible box for variable {j}: [{lo}, {hi}]"
                )));
            }
        }
        let n = lower.len();
        Ok(MmaOptimizer {
            cfg,
            lower,
            upper,
            low: vec![0.0; n],
            upp: vec![0.0; n],
            x_prev: Vec::new(),
            x_prev2: Vec::new(),
            outer_count: 0,
        })
    }

    pub fn outer_count(&self) -> usize {
        self.outer_count
    }

    fn range(&self, j: usize) -> f64 {
        (self.upper[j] - self.lower[j]).max(1e-8)
    }

    /// Move asymptotes per the direction history, then return per-coordinate
    /// iterate bounds for this outer step.
    fn update_asymptotes(&mut self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        if self.outer_count < 2 {
            for j in 0..n {
                let r = self.range(j);
                self.low[j] = x[j] - self.cfg.asy_init * r;
                self.upp[j] = x[j] + self.cfg.asy_init * r;
            }
        } else {
            for j in 0..n {
                let trend = (x[j] - self.x_prev[j]) * (self.x_prev[j] - self.x_prev2[j]);
                let gamma = if trend > 0.0 {
                    self.cfg.asy_incr
                } else if trend < 0.0 {
                    self.cfg.asy_decr
                } else {
                    1.0
                };
                let r = self.range(j);
                let mut low = x[j] - gamma * (self.x_prev[j] - self.low[j]);
                let mut upp = x[j] + gamma * (self.upp[j] - self.x_prev[j]);
                low = low.clamp(x[j] - 10.0 * r, x[j] - 0.01 * r);
                upp = upp.clamp(x[j] + 0.01 * r, x[j] + 10.0 * r);
                self.low[j] = low;
                self.upp[j] = upp;
            }
        }
        let mut beta_lo = vec![0.0; n];
        let mut beta_hi = vec![0.0; n];
        for j in 0..n {
            let r = self.range(j);
            beta_lo[j] = self.lower[j]
                .max(self.low[j] + self.cfg.bound_gap * (x[j] - self.low[j]))
                .max(x[j] - self.cfg.move_limit * r);
            beta_hi[j] = self.upper[j]
                .min(self.upp[j] - self.cfg.bound_gap * (self.upp[j] - x[j]))
                .min(x[j] + self.cfg.move_limit * r);
            if beta_lo[j] > beta_hi[j] {
                // Possible only when the iterate has left the box.
                beta_lo[j] = beta_hi[j];
            }
        }
        (beta_lo, beta_hi)
    }

    /// Separable approximation coefficients at iterate `x` for curvature `rho`.
    fn coefficients(&self, x: &[f64], df: &[f64], rho: f64) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for j in 0..n {
            let du = self.upp[j] - x[j];
            let dl = x[j] - self.low[j];
            let dfp = df[j].max(0.0);
            let dfm = (-df[j]).max(0.0);
            let curv = rho / self.range(j);
            p[j] = du * du * (1.001 * dfp + 0.001 * dfm + curv);
            q[j] = dl * dl * (0.001 * dfp + 1.001 * dfm + curv);
        }
        (p, q)
    }

    /// Closed-form minimizer of the separable approximation on the bounds.
    fn solve_subproblem(&self, p: &[f64], q: &[f64], beta_lo: &[f64], beta_hi: &[f64]) -> Vec<f64> {
        let n = p.len();
        let mut x_new = vec![0.0; n];
        for j in 0..n {
            let sp = p[j].sqrt();
            let sq = q[j].sqrt();
            let cand = if sp + sq > 0.0 {
                (self.low[j] * sp + self.upp[j] * sq) / (sp + sq)
            } else {
                0.5 * (beta_lo[j] + beta_hi[j])
            };
            x_new[j] = cand.clamp(beta_lo[j], beta_hi[j]);
        }
        x_new
    }

    /// Value of the approximation relative to its value at the expansion point
    /// (i.e. `f~(y) - f(x)`).
    fn approx_delta(&self, x: &[f64], p: &[f64], q: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..x.len() {
            acc += p[j] / (self.upp[j] - y[j]) + q[j] / (y[j] - self.low[j]);
            acc -= p[j] / (self.upp[j] - x[j]) + q[j] / (x[j] - self.low[j]);
        }
        acc
    }

    /// Svanberg's conservativeness-gap denominator.
    fn gap_measure(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..x.len() {
            let du = self.upp[j] - y[j];
            let dl = y[j] - self.low[j];
            let d = (self.upp[j] - self.low[j]) * (y[j] - x[j]).powi(2)
                / (du * dl * self.range(j));
            acc += d;
        }
        acc.max(1e-12)
    }

    fn record_history(&mut self, x: &[f64]) {
        self.x_prev2 = std::mem::take(&mut self.x_prev);
        if self.x_prev2.is_empty() {
            self.x_prev2 = x.to_vec();
        }
        self.x_prev = x.to_vec();
        self.outer_count += 1;
    }

    /// One GCMMA outer iteration. `eval` returns the true objective at a
    /// candidate; it is called once per inner iteration (at least once).
    pub fn update_with<E>(&mut self, x: &[f64], f: f64, df: &[f64], mut eval: E) -> Result<MmaStep>
    where
        E: FnMut(&[f64]) -> Result<f64>,
    {
        let n = x.len();
        if df.len() != n || self.lower.len() != n {
            return Err(Error::config("iterate, gradient and bounds must agree in length"));
        }
        for (j, v) in x.iter().enumerate() {
            if *v < self.lower[j] - 1e-12 || *v > self.upper[j] + 1e-12 {
                return Err(Error::numeric(format!(
                    "iterate left the box at variable {j}: {v}"
                )));
            }
        }
        let (beta_lo, beta_hi) = self.update_asymptotes(x);

        // Initial curvature: scale-aware standard choice.
        let mut rho = self.cfg.rho_min;
        let mut scale = 0.0;
        for j in 0..n {
            scale += df[j].abs() * self.range(j);
        }
        rho = rho.max(0.1 * scale / n as f64);

        let mut inner = 0;
        loop {
            let (p, q) = self.coefficients(x, df, rho);
            let cand = self.solve_subproblem(&p, &q, &beta_lo, &beta_hi);
            let approx = f + self.approx_delta(x, &p, &q, &cand);
            let f_cand = eval(&cand)?;
            if !f_cand.is_finite() {
                return Err(Error::numeric("objective evaluated to a non-finite value"));
            }
            let tol = 1e-10 * (1.0 + approx.abs());
            if f_cand <= approx + tol || inner >= self.cfg.max_inner {
                self.record_history(x);
                return Ok(MmaStep {
                    x: cand,
                    f: f_cand,
                    approx,
                    inner_iterations: inner,
                });
            }
            // Raise rho so the approximation covers the observed gap.
            let delta = (f_cand - approx) / self.gap_measure(x, &cand);
            rho = (1.1 * (rho + delta)).min(10.0 * rho);
            inner += 1;
        }
    }
}
