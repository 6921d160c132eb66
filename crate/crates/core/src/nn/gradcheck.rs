//! Central-difference directional-derivative checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::rng_for;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Random probe directions per check.
    pub directions: usize,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            tol: 1e-6,
            directions: 6,
            abs_floor: 1e-10,
            seed: 0,
        }
    }
}

impl GradCheckConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub tol: f64,
    pub directions: usize,
    pub passed: bool,
}

/// Compares `<analytic, v>` with `(f(x + eps v) - f(x - eps v)) / 2eps` for
/// random unit directions `v`. `f` is evaluated in double precision; for a
/// single-precision layer the analytic gradient comes from the `f32` path and
/// `f` from the `f64` instantiation of the same op.
pub fn grad_check(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], cfg: GradCheckConfig) -> GradReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match input");
    let mut rng = rng_for(cfg.seed, x.len() as u64, 0x6772_6164);
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for _ in 0..cfg.directions {
        let mut v: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.iter_mut().for_each(|a| *a /= norm);
        for i in 0..x.len() {
            xp[i] = x[i] + cfg.eps * v[i];
        }
        let fp = f(&xp);
        for i in 0..x.len() {
            xp[i] = x[i] - cfg.eps * v[i];
        }
        let fm = f(&xp);
        let numeric = (fp - fm) / (2.0 * cfg.eps);
        let exact: f64 = analytic.iter().zip(&v).map(|(a, b)| a * b).sum();
        let denom = exact.abs().max(numeric.abs()).max(cfg.abs_floor);
        let rel = (exact - numeric).abs() / denom;
        worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
    }
    GradReport {
        max_rel_error: worst,
        tol: cfg.tol,
        directions: cfg.directions,
        passed: worst < cfg.tol,
    }
}
