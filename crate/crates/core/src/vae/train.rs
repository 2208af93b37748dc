//! Mini-batch training with Adam.
//!
//! Training is single-threaded and fully determined by the seed: one ChaCha
//! stream initializes weights, shuffles the corpus and draws reparameterization
//! noise; a second, independent stream drives the optional auxiliary objective
//! so that an empty auxiliary set leaves the main stream untouched.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{elbo_with_noise, sample_noise};
use super::model::{
    angles_to_matrix, LatentAffine, ModelCheckpoint, TrainingMetadata, Vae, DEFAULT_HIDDEN,
};
use crate::error::{Error, Result};
use crate::pose::{AngleVector, ANGLE_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            kl_weight: DEFAULT_KL_WEIGHT,
            seed: 0,
        }
    }
}

/// Weight of the KL term against the per-angle mean squared error.
pub const DEFAULT_KL_WEIGHT: f64 = 1e-3;

impl TrainConfig {
    pub fn validate(&self, corpus_len: usize) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be nonzero".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if corpus_len < self.batch_size {
            return Err(Error::Config(format!(
                "corpus of {corpus_len} samples is smaller than batch size {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.kl_weight >= 0.0) {
            return Err(Error::Config("learning_rate must be > 0 and kl_weight >= 0".into()));
        }
        Ok(())
    }
}

/// An extra objective whose items are batched alongside the main corpus.
pub trait AuxObjective {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean loss over `indices`; gradients scaled by `weight` are added to `grad`.
    fn accumulate(
        &self,
        vae: &Vae,
        indices: &[usize],
        weight: f64,
        rng: &mut ChaCha8Rng,
        grad: &mut Vae,
    ) -> f64;

    fn describe(&self, _metadata: &mut TrainingMetadata) {}
}

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(vae: &Vae, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = vae.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, vae: &mut Vae, grad: &Vae) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in vae
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

const AUX_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn train(corpus: &[AngleVector], cfg: &TrainConfig) -> Result<ModelCheckpoint> {
    fit(corpus, cfg, None)
}

/// Trains from scratch on `corpus`, optionally interleaving `(objective, weight)`.
pub fn fit(
    corpus: &[AngleVector],
    cfg: &TrainConfig,
    aux: Option<(&dyn AuxObjective, f64)>,
) -> Result<ModelCheckpoint> {
    cfg.validate(corpus.len())?;
    if let Some(bad) = corpus.iter().position(|a| !a.0.iter().all(|v| v.is_finite())) {
        return Err(Error::Input(format!("corpus sample {bad} is not finite")));
    }
    let aux = aux.filter(|(a, _)| !a.is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aux_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ AUX_STREAM);
    let mut vae = Vae::new(ANGLE_COUNT, &cfg.hidden, &mut rng);
    let mut adam = Adam::new(&vae, cfg.learning_rate);

    let data = angles_to_matrix(corpus);
    let n = corpus.len();
    let steps = n.div_ceil(cfg.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    let mut aux_order: Vec<usize> = aux.map(|(a, _)| (0..a.len()).collect()).unwrap_or_default();
    let aux_chunk = aux_order.len().div_ceil(steps).max(1);

    let mut iteration = 0;
    let mut epoch_loss = 0.0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        if aux.is_some() {
            aux_order.shuffle(&mut aux_rng);
        }
        epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.select(Axis(0), idx);
            let eps = sample_noise(&mut rng, idx.len());
            let mut grad = vae.zeros_like();
            let base = elbo_with_noise(&vae, &x, &eps, cfg.kl_weight, 1.0, &mut grad);
            let mut total = base.total;
            if let Some((objective, weight)) = aux {
                let start = (batch * aux_chunk).min(aux_order.len());
                let end = ((batch + 1) * aux_chunk).min(aux_order.len());
                if start < end {
                    let l = objective.accumulate(&vae, &aux_order[start..end], weight, &mut aux_rng, &mut grad);
                    total += weight * l;
                }
            }
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    epoch,
                    batch,
                    detail: format!(
                        "reconstruction {} kl {} total {}",
                        base.reconstruction, base.kl, total
                    ),
                });
            }
            epoch_loss += total * idx.len() as f64;
            adam.step(&mut vae, &grad);
            iteration += 1;
        }
        epoch_loss /= n as f64;
        log::debug!("epoch {epoch} loss {epoch_loss:.6}");
    }

    let (mu, _) = vae.encode_batch(&data);
    let mus: Vec<[f64; 2]> = mu.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let latent_affine = LatentAffine::fit(&mus)?;

    let mut metadata = TrainingMetadata {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        kl_weight: cfg.kl_weight,
        corpus_size: n,
        final_loss: epoch_loss,
        pair_weight: None,
        pair_count: None,
        pair_mode: None,
        variant: None,
    };
    if let Some((objective, weight)) = aux {
        metadata.pair_weight = Some(weight);
        metadata.pair_count = Some(objective.len());
        objective.describe(&mut metadata);
    }
    Ok(ModelCheckpoint {
        format_version: ModelCheckpoint::FORMAT_VERSION,
        vae,
        latent_affine,
        metadata,
    })
}

/// Mean per-angle squared error of `decode(embed(q))` over `samples`.
pub fn reconstruction_mse(model: &ModelCheckpoint, samples: &[AngleVector]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let x = angles_to_matrix(samples);
    let (mu, _) = model.vae.encode_batch(&x);
    let recon = model.vae.decoder.forward(&mu);
    (&recon - &x).mapv(|d| d * d).mean().unwrap_or(0.0)
}
