use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HAIR_LATENT_DIM: usize = 16;

/// Per-example variational latent. `log_std` is the log of the standard
/// deviation, so samples are `mean + η ⊙ exp(log_std)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VadLatent {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl VadLatent {
    pub fn zeros(dim: usize) -> Self {
        VadLatent {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::validation(format!(
                "latent mean has {} entries but log-std has {}",
                mean.len(),
                log_std.len()
            )));
        }
        if !mean.iter().chain(&log_std).all(|v| v.is_finite()) {
            return Err(Error::validation("latent has non-finite entries"));
        }
        Ok(VadLatent { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn reparameterize(&self, eta: &[f64]) -> Result<Vec<f64>> {
        if eta.len() != self.dim() {
            return Err(Error::validation(format!(
                "noise has {} entries, latent {}",
                eta.len(),
                self.dim()
            )));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(eta)
            .map(|((m, s), e)| m + e * s.exp())
            .collect())
    }

    /// Closed-form `KL(N(mean, exp(log_std)²) ‖ N(0, I))`.
    pub fn kl_divergence(&self) -> f64 {
        0.5 * self
            .mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| m * m + (2.0 * s).exp() - 2.0 * s - 1.0)
            .sum::<f64>()
    }

    /// Gradients of [`VadLatent::kl_divergence`] with respect to mean and log-std.
    pub fn kl_grad(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.mean.clone(),
            self.log_std.iter().map(|s| (2.0 * s).exp() - 1.0).collect(),
        )
    }
}

/// Standard-normal noise vector.
pub fn standard_noise<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Monte-Carlo estimate of the KL divergence: the sample mean of
/// `log q(z) − log p(z)` with `z` drawn through [`VadLatent::reparameterize`].
pub fn kl_monte_carlo(latent: &VadLatent, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::validation("need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let eta = standard_noise(latent.dim(), &mut rng);
        let z = latent.reparameterize(&eta)?;
        // log q(z) − log p(z); the 2π terms cancel
        acc += z
            .iter()
            .zip(&eta)
            .zip(&latent.log_std)
            .map(|((z, e), s)| -0.5 * e * e - s + 0.5 * z * z)
            .sum::<f64>();
    }
    Ok(acc / samples as f64)
}
