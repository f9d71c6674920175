//! Central finite-difference check of the analytic gradient.

use fsmt_core::{Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{forward_loss, loss_and_grad, Example, Mode};
use crate::params::{Params, Tensor};

/// Coordinates probed per tensor (all of them when the tensor is smaller).
pub const COORDS_PER_TENSOR: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_tensor: Vec<(Tensor, f64)>,
    pub coordinates: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares gradients of the mean eval-mode loss; `seed` picks the coordinates.
pub fn grad_check(params: &Params, batch: &[Example], epsilon: f64, seed: u64) -> Result<GradCheckReport> {
    let (loss, grad) = loss_and_grad(params, batch, Mode::Eval, 0)?;
    if !loss.is_finite() {
        return Err(Error::Training("non-finite loss".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut per_tensor = Vec::with_capacity(Tensor::ALL.len());
    let mut coordinates = 0;
    for t in Tensor::ALL {
        let range = params.layout.range(t);
        let n = range.len();
        let picks: Vec<usize> = if n <= COORDS_PER_TENSOR {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, COORDS_PER_TENSOR).into_vec();
            v.sort_unstable();
            v
        };
        let mut worst: f64 = 0.0;
        for k in picks {
            let i = range.start + k;
            let orig = probe.data[i];
            probe.data[i] = orig + epsilon;
            let up = forward_loss(&probe, batch, Mode::Eval)?;
            probe.data[i] = orig - epsilon;
            let down = forward_loss(&probe, batch, Mode::Eval)?;
            probe.data[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Training("non-finite loss".into()));
            }
            worst = worst.max(relative_error(grad[i], (up - down) / (2.0 * epsilon)));
            coordinates += 1;
        }
        per_tensor.push((t, worst));
    }
    Ok(GradCheckReport {
        max_rel_error: per_tensor.iter().map(|p| p.1).fold(0.0, f64::max),
        per_tensor,
        coordinates,
    })
}
