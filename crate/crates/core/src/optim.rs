//! SGD with weight decay and Nesterov momentum on flat parameter vectors.

use crate::error::{Error, Result};
use crate::params::ParamLayout;

/// Update rule, applied element-wise:
///
/// ```text
/// g' = g + λ·θ        (λ only where the layout enables decay)
/// v  = μ·v + g'
/// θ  = θ − γ·(g' + μ·v)
/// ```
#[derive(Debug, Clone)]
pub struct NesterovSgd {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub velocity: Vec<f64>,
    decay: Vec<bool>,
    layout: ParamLayout,
}

impl NesterovSgd {
    pub fn new(layout: &ParamLayout, learning_rate: f64, weight_decay: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            momentum,
            velocity: vec![0.0; layout.len()],
            decay: layout.decay_mask(),
            layout: layout.clone(),
        }
    }

    /// Applies one step. A non-finite gradient leaves `params` and the
    /// velocity untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer holds {} parameters, got {} params and {} grads",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                layer: self.layout.layer_of(i).unwrap_or(0),
            });
        }
        let (lr, wd, mu) = (self.learning_rate, self.weight_decay, self.momentum);
        for i in 0..params.len() {
            let g = if self.decay[i] {
                grads[i] + wd * params[i]
            } else {
                grads[i]
            };
            let v = mu * self.velocity[i] + g;
            self.velocity[i] = v;
            params[i] -= lr * (g + mu * v);
        }
        Ok(())
    }
}
