//! Reconstruction + KL objective with exact gradients.
//!
//! Per sample: `L = (1/8)·Σ(q − q′)² + λ_KL · KL(N(μ, σ) ‖ N(0, I))`, where
//! `q′ = dec(μ + σ⊙ε)`. Losses are averaged over the batch.

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{angles_to_matrix, Vae, LATENT_DIM};
use crate::pose::AngleVector;

/// `KL(N(μ, σ²) ‖ N(0, 1))` summed over dimensions, with `logvar = log σ²`.
pub fn kl_to_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - lv.exp() - m * m)
        .sum::<f64>()
}

/// `KL(N(μp, σp²) ‖ N(μq, σq²))` summed over dimensions, log-variance parameterized.
pub fn kl_between(mu_p: &[f64], logvar_p: &[f64], mu_q: &[f64], logvar_q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for j in 0..mu_p.len() {
        let d = mu_p[j] - mu_q[j];
        kl += 0.5 * (logvar_q[j] - logvar_p[j] + (logvar_p[j].exp() + d * d) / logvar_q[j].exp() - 1.0);
    }
    kl
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Standard-normal draws for the reparameterization, row by row.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, rows: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, LATENT_DIM), || rng.sample(StandardNormal))
}

/// Batch-mean loss for fixed noise `eps`; gradients, scaled by `weight`, are
/// accumulated into `grad`.
pub fn elbo_with_noise(
    vae: &Vae,
    x: &Array2<f64>,
    eps: &Array2<f64>,
    kl_weight: f64,
    weight: f64,
    grad: &mut Vae,
) -> LossBreakdown {
    let n = x.nrows() as f64;
    let dims = x.ncols() as f64;
    let (mu, logvar, enc_cache) = vae.encoder.forward_cached(x);
    let sigma = logvar.mapv(|lv| (0.5 * lv).exp());
    let z = &mu + &(&sigma * eps);
    let (recon, dec_cache) = vae.decoder.forward_cached(&z);

    let diff = &recon - x;
    let reconstruction = diff.mapv(|d| d * d).sum() / dims / n;
    let mut kl = 0.0;
    for (m, lv) in mu.rows().into_iter().zip(logvar.rows()) {
        kl += kl_to_standard_normal(m.as_slice().unwrap(), lv.as_slice().unwrap());
    }
    kl /= n;

    let grad_recon = diff.mapv(|d| weight * 2.0 * d / (dims * n));
    let grad_z = vae.decoder.backward(&dec_cache, &grad_recon, &mut grad.decoder);

    let mut grad_mu = grad_z.clone();
    Zip::from(&mut grad_mu)
        .and(&mu)
        .for_each(|g, &m| *g += weight * kl_weight * m / n);
    let mut grad_logvar = Array2::zeros(logvar.raw_dim());
    Zip::from(&mut grad_logvar)
        .and(&grad_z)
        .and(eps)
        .and(&sigma)
        .and(&logvar)
        .for_each(|g, &gz, &e, &s, &lv| {
            *g = gz * e * 0.5 * s + weight * kl_weight * 0.5 * (lv.exp() - 1.0) / n;
        });
    vae.encoder
        .backward(&enc_cache, &grad_mu, &grad_logvar, &mut grad.encoder);

    LossBreakdown {
        total: reconstruction + kl_weight * kl,
        reconstruction,
        kl,
    }
}

/// Batch-mean objective and its gradients; noise is drawn from `rng`.
pub fn elbo_loss<R: Rng + ?Sized>(
    batch: &[AngleVector],
    vae: &Vae,
    kl_weight: f64,
    rng: &mut R,
) -> (LossBreakdown, Vae) {
    assert!(!batch.is_empty(), "batch must be nonempty");
    let x = angles_to_matrix(batch);
    let eps = sample_noise(rng, x.nrows());
    let mut grad = vae.zeros_like();
    let loss = elbo_with_noise(vae, &x, &eps, kl_weight, 1.0, &mut grad);
    (loss, grad)
}
