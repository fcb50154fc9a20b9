use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tracker::TrackerModel;

/// Plain stochastic gradient descent with optional global-norm clipping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub max_grad_norm: Option<f64>,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr, max_grad_norm: None }
    }

    /// Updates every non-frozen parameter of `model` in place. `grads` holds
    /// one entry per parameter slot; `None` means no gradient reached it.
    pub fn step(&self, model: &mut TrackerModel, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != model.params.len() {
            return Err(Error::domain(
                "sgd",
                format!("{} gradients for {} parameters", grads.len(), model.params.len()),
            ));
        }
        let norm = grads
            .iter()
            .zip(&model.params)
            .filter(|(_, p)| !p.frozen)
            .filter_map(|(g, _)| g.as_ref())
            .flat_map(|g| g.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::domain("sgd", "non-finite gradient"));
        }
        let scale = match self.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        for (p, g) in model.params.iter_mut().zip(grads) {
            if p.frozen {
                continue;
            }
            let Some(g) = g else { continue };
            for (v, d) in p.value.data_mut().iter_mut().zip(g.data()) {
                *v -= self.lr * scale * d;
            }
        }
        Ok(())
    }
}
