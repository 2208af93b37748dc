use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp, MlpCache};
use crate::error::{Error, Result};
use crate::pose::{AngleVector, ANGLE_COUNT};

pub const LATENT_DIM: usize = 2;
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 96, 64];

/// Encoder output: per-dimension Gaussian over the 2-D latent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPosterior {
    pub mu: [f64; LATENT_DIM],
    pub sigma: [f64; LATENT_DIM],
}

/// A point of the normalized embedding plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct LatentCoord {
    pub x: f64,
    pub y: f64,
}

impl LatentCoord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &LatentCoord) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn clamped(self) -> Self {
        Self::new(self.x.clamp(0.0, 1.0), self.y.clamp(0.0, 1.0))
    }

    pub fn midpoint(&self, other: &LatentCoord) -> Self {
        Self::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn in_unit_box(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

impl From<[f64; 2]> for LatentCoord {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<LatentCoord> for [f64; 2] {
    fn from(c: LatentCoord) -> Self {
        [c.x, c.y]
    }
}

/// Per-axis map from raw encoder means onto `[0, 1]`: `(mu - offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAffine {
    pub offset: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentAffine {
    pub axes: [AxisAffine; LATENT_DIM],
}

impl LatentAffine {
    pub const IDENTITY: LatentAffine = LatentAffine {
        axes: [AxisAffine {
            offset: 0.0,
            scale: 1.0,
        }; LATENT_DIM],
    };

    /// Maps the per-axis min of `mus` to 0 and the max to 1.
    pub fn fit(mus: &[[f64; LATENT_DIM]]) -> Result<Self> {
        if mus.is_empty() {
            return Err(Error::Input("cannot normalize an empty latent set".into()));
        }
        let mut axes = [AxisAffine {
            offset: 0.0,
            scale: 1.0,
        }; LATENT_DIM];
        for (d, axis) in axes.iter_mut().enumerate() {
            let (lo, hi) = mus.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m[d]), hi.max(m[d]))
            });
            let span = hi - lo;
            if !(span > 0.0 && span.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "latent axis {d} has no spread over the training set (span {span})"
                )));
            }
            *axis = AxisAffine {
                offset: lo,
                scale: 1.0 / span,
            };
        }
        Ok(Self { axes })
    }

    pub fn normalize(&self, mu: &[f64; LATENT_DIM]) -> [f64; LATENT_DIM] {
        [
            (mu[0] - self.axes[0].offset) * self.axes[0].scale,
            (mu[1] - self.axes[1].offset) * self.axes[1].scale,
        ]
    }

    pub fn denormalize(&self, p: &[f64; LATENT_DIM]) -> [f64; LATENT_DIM] {
        [
            p[0] / self.axes[0].scale + self.axes[0].offset,
            p[1] / self.axes[1].scale + self.axes[1].offset,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (d, a) in self.axes.iter().enumerate() {
            if !(a.scale > 0.0 && a.scale.is_finite() && a.offset.is_finite()) {
                return Err(Error::Checkpoint(format!("latent affine axis {d} is invalid")));
            }
        }
        Ok(())
    }
}

/// MLP encoder body plus the mean and log-variance heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub body: Mlp,
    pub mean_head: Dense,
    pub logvar_head: Dense,
}

pub struct EncoderCache {
    body: MlpCache,
    hidden: Array2<f64>,
}

impl Encoder {
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = self.body.forward(x);
        (self.mean_head.forward(&h), self.logvar_head.forward(&h))
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, EncoderCache) {
        let (h, body) = self.body.forward_cached(x);
        let mu = self.mean_head.forward(&h);
        let logvar = self.logvar_head.forward(&h);
        (mu, logvar, EncoderCache { body, hidden: h })
    }

    /// Accumulates gradients given `∂L/∂mu` and `∂L/∂logvar`.
    pub fn backward(
        &self,
        cache: &EncoderCache,
        grad_mu: &Array2<f64>,
        grad_logvar: &Array2<f64>,
        grad: &mut Encoder,
    ) {
        let mut gh = self.mean_head.backward(&cache.hidden, grad_mu, &mut grad.mean_head);
        gh += &self
            .logvar_head
            .backward(&cache.hidden, grad_logvar, &mut grad.logvar_head);
        self.body.backward(&cache.body, &gh, &mut grad.body);
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            body: self.body.zeros_like(),
            mean_head: self.mean_head.zeros_like(),
            logvar_head: self.logvar_head.zeros_like(),
        }
    }
}

/// Encoder `[in → hidden…]` with 2-wide mean/log-variance heads, decoder the mirror image.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub encoder: Encoder,
    pub decoder: Mlp,
}

impl Vae {
    /// Glorot-initialized network. `hidden` is the encoder body width list, e.g. `[128, 96, 64]`.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let (enc_sizes, dec_sizes) = Self::sizes(input_dim, hidden);
        let body = Mlp::glorot(&enc_sizes, true, rng);
        let last = *enc_sizes.last().unwrap();
        let mean_head = Dense::glorot(last, LATENT_DIM, rng);
        let logvar_head = Dense::glorot(last, LATENT_DIM, rng);
        let decoder = Mlp::glorot(&dec_sizes, false, rng);
        Self {
            encoder: Encoder {
                body,
                mean_head,
                logvar_head,
            },
            decoder,
        }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let (enc_sizes, dec_sizes) = Self::sizes(input_dim, hidden);
        let last = *enc_sizes.last().unwrap();
        Self {
            encoder: Encoder {
                body: Mlp::zeros(&enc_sizes, true),
                mean_head: Dense::zeros(last, LATENT_DIM),
                logvar_head: Dense::zeros(last, LATENT_DIM),
            },
            decoder: Mlp::zeros(&dec_sizes, false),
        }
    }

    fn sizes(input_dim: usize, hidden: &[usize]) -> (Vec<usize>, Vec<usize>) {
        assert!(!hidden.is_empty(), "at least one hidden layer is required");
        let mut enc = vec![input_dim];
        enc.extend_from_slice(hidden);
        let mut dec = vec![LATENT_DIM];
        dec.extend(hidden.iter().rev());
        dec.push(input_dim);
        (enc, dec)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.body.layers[0].inputs()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.encoder.body.layer_sizes()[1..].to_vec()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    /// Every parameter tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut layers: Vec<&Dense> = self.encoder.body.layers.iter().collect();
        layers.push(&self.encoder.mean_head);
        layers.push(&self.encoder.logvar_head);
        layers.extend(self.decoder.layers.iter());
        let mut out = Vec::with_capacity(2 * layers.len());
        for d in layers {
            out.push(d.weights.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        let mut layers: Vec<&mut Dense> = self.encoder.body.layers.iter_mut().collect();
        layers.push(&mut self.encoder.mean_head);
        layers.push(&mut self.encoder.logvar_head);
        layers.extend(self.decoder.layers.iter_mut());
        for d in layers {
            out.push(d.weights.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn encode_batch(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        self.encoder.forward(x)
    }

    pub fn encode(&self, angles: &AngleVector) -> LatentPosterior {
        let x = angles_to_row(angles);
        let (mu, logvar) = self.encoder.forward(&x);
        LatentPosterior {
            mu: [mu[(0, 0)], mu[(0, 1)]],
            sigma: [(0.5 * logvar[(0, 0)]).exp(), (0.5 * logvar[(0, 1)]).exp()],
        }
    }

    /// Runs the decoder on raw (un-normalized) latents.
    pub fn decode_raw(&self, z: &[f64; LATENT_DIM]) -> AngleVector {
        let x = Array2::from_shape_vec((1, LATENT_DIM), z.to_vec()).expect("shape");
        let out = self.decoder.forward(&x);
        let mut a = [0.0; ANGLE_COUNT];
        for (o, v) in a.iter_mut().zip(out.row(0).iter()) {
            *o = *v;
        }
        AngleVector(a)
    }
}

pub fn angles_to_row(a: &AngleVector) -> Array2<f64> {
    Array2::from_shape_vec((1, ANGLE_COUNT), a.0.to_vec()).expect("shape")
}

pub fn angles_to_matrix(batch: &[AngleVector]) -> Array2<f64> {
    let mut m = Array2::zeros((batch.len(), ANGLE_COUNT));
    for (mut row, a) in m.axis_iter_mut(Axis(0)).zip(batch) {
        for (r, v) in row.iter_mut().zip(a.0.iter()) {
            *r = *v;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub kl_weight: f64,
    pub corpus_size: usize,
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

/// A trained model: networks, latent normalization and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub vae: Vae,
    pub latent_affine: LatentAffine,
    pub metadata: TrainingMetadata,
}

impl ModelCheckpoint {
    pub const FORMAT_VERSION: u32 = 1;

    /// Randomly initialized networks with `[-1, 1]²` mapped onto the unit
    /// square; for smoke runs and tests that need a model but no training.
    pub fn untrained(hidden: &[usize], seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let axis = AxisAffine {
            offset: -1.0,
            scale: 0.5,
        };
        Self {
            format_version: Self::FORMAT_VERSION,
            vae: Vae::new(ANGLE_COUNT, hidden, &mut rng),
            latent_affine: LatentAffine { axes: [axis; LATENT_DIM] },
            metadata: TrainingMetadata {
                epochs: 0,
                batch_size: 0,
                learning_rate: 0.0,
                seed,
                kl_weight: 0.0,
                corpus_size: 0,
                final_loss: 0.0,
                pair_weight: None,
                pair_count: None,
                pair_mode: None,
                variant: Some("untrained".into()),
            },
        }
    }

    pub fn encode(&self, angles: &AngleVector) -> LatentPosterior {
        self.vae.encode(angles)
    }

    pub fn normalize(&self, mu: &[f64; LATENT_DIM]) -> LatentCoord {
        LatentCoord::from(self.latent_affine.normalize(mu)).clamped()
    }

    /// Normalized, clamped embedding of the encoder mean.
    pub fn embed(&self, angles: &AngleVector) -> LatentCoord {
        self.normalize(&self.encode(angles).mu)
    }

    /// Embedding before clamping, for normalization checks.
    pub fn embed_unclamped(&self, angles: &AngleVector) -> [f64; LATENT_DIM] {
        self.latent_affine.normalize(&self.encode(angles).mu)
    }

    pub fn embed_batch(&self, batch: &[AngleVector]) -> Vec<LatentCoord> {
        let (mu, _) = self.vae.encode_batch(&angles_to_matrix(batch));
        mu.rows()
            .into_iter()
            .map(|r| self.normalize(&[r[0], r[1]]))
            .collect()
    }

    /// Decodes a point of the normalized plane back to joint angles.
    pub fn decode(&self, latent: &LatentCoord) -> AngleVector {
        let z = self.latent_affine.denormalize(&[latent.x, latent.y]);
        self.vae.decode_raw(&z)
    }
}
