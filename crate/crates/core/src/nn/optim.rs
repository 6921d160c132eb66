use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nn::tensor::Real;

/// SGD with heavy-ball momentum (`v <- mu*v + g`, no dampening) and a cosine
/// annealed learning rate over `total_steps`.
#[derive(Clone, Debug)]
pub struct OptimState<T> {
    pub eta_max: f64,
    pub eta_min: f64,
    pub total_steps: usize,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new(eta_max: f64, eta_min: f64, total_steps: usize, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!("momentum {momentum} not in [0,1)")));
        }
        if eta_min > eta_max || eta_min < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= eta_min <= eta_max, got {eta_min} and {eta_max}"
            )));
        }
        if total_steps == 0 {
            return Err(Error::InvalidArgument("total_steps must be positive".into()));
        }
        Ok(Self {
            eta_max,
            eta_min,
            total_steps,
            momentum,
            velocity: Vec::new(),
        })
    }

    /// Learning rate at step `t`, defined for `0 <= t <= total_steps`.
    pub fn learning_rate(&self, t: usize) -> f64 {
        let frac = t.min(self.total_steps) as f64 / self.total_steps as f64;
        self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + (PI * frac).cos())
    }

    pub fn sgd_step(&mut self, params: &mut [&mut [T]], grads: &[&[T]], t: usize) -> Result<()> {
        if t >= self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "step {t} outside schedule of {} steps",
                self.total_steps
            )));
        }
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch("parameter/gradient group count".into()));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::ShapeMismatch("optimizer state does not match parameters".into()));
        }
        let eta = T::from_f64c(self.learning_rate(t));
        let mu = T::from_f64c(self.momentum);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(Error::ShapeMismatch("parameter/gradient length".into()));
            }
            for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = mu * *vi + gi;
                *pi -= eta * *vi;
            }
        }
        Ok(())
    }
}
