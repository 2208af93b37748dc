#![allow(dead_code)]

use std::f64::consts::PI;

use hpeis::augment::{pair_loss_batch, PairMode};
use hpeis::pose::{AngleVector, Landmark, LANDMARK_COUNT};
use hpeis::sim::hand::HandPoseParams;
use hpeis::vae::loss::elbo_with_noise;
use hpeis::vae::Vae;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

pub const TINY_HIDDEN: [usize; 2] = [4, 3];

/// Wraps an angle into (−π, π].
pub fn wrap(a: f64) -> f64 {
    let w = a.sin().atan2(a.cos());
    if w <= -PI {
        PI
    } else {
        w
    }
}

pub fn random_pose<R: Rng>(rng: &mut R) -> HandPoseParams {
    let mut flex = || [rng.random_range(0.0..1.2), rng.random_range(0.0..1.2), rng.random_range(0.0..1.2)];
    let thumb_flex = flex();
    let index_flex = flex();
    HandPoseParams {
        center: [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)],
        depth: rng.random_range(-0.1..0.1),
        scale: rng.random_range(0.1..0.4),
        roll: rng.random_range(-1.5..1.5),
        pitch: rng.random_range(-0.8..0.8),
        thumb_spread: rng.random_range(-1.4..0.2),
        index_spread: rng.random_range(-0.5..0.5),
        thumb_flex,
        index_flex,
        other_curl: rng.random_range(0.0..1.5),
        pinch_blend: if rng.random_bool(0.3) { rng.random_range(0.0..1.0) } else { 0.0 },
        pinch_aperture: rng.random_range(0.0..0.2),
    }
}

pub fn random_landmarks<R: Rng>(rng: &mut R) -> Vec<Landmark> {
    let lm = random_pose(rng).landmarks();
    assert_eq!(lm.len(), LANDMARK_COUNT);
    lm
}

/// Roots in (−π, π], bends in [0, 3].
pub fn random_angles<R: Rng>(rng: &mut R) -> AngleVector {
    let mut a = [0.0; 8];
    for (i, v) in a.iter_mut().enumerate() {
        *v = if AngleVector::is_root(i) {
            rng.random_range(-PI + 1e-9..=PI)
        } else {
            rng.random_range(0.0..3.0)
        };
    }
    AngleVector(a)
}

pub fn tiny_vae<R: Rng>(rng: &mut R) -> Vae {
    Vae::new(8, &TINY_HIDDEN, rng)
}

pub fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

pub fn flatten(vae: &Vae) -> Vec<f64> {
    vae.tensors().iter().flat_map(|t| t.iter().copied()).collect()
}

/// Central differences of `loss` with respect to every parameter.
pub fn finite_differences(vae: &Vae, h: f64, loss: impl Fn(&Vae) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(vae.parameter_count());
    let mut probe = vae.clone();
    let sizes: Vec<usize> = vae.tensors().iter().map(|t| t.len()).collect();
    for (t, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.tensors_mut()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let plus = loss(&probe);
            probe.tensors_mut()[t][i] = orig - h;
            let minus = loss(&probe);
            probe.tensors_mut()[t][i] = orig;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Largest per-parameter error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_entry_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub struct GradientCase {
    pub vae: Vae,
    pub x: Array2<f64>,
    pub eps: Array2<f64>,
    pub targets: Array2<f64>,
    pub augmented: Array2<f64>,
    pub pair_eps: Array2<f64>,
    pub kl_weight: f64,
    pub pair_weight: f64,
}

impl GradientCase {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let vae = tiny_vae(rng);
        let targets = normal_matrix(rng, 4, 8);
        let augmented = &targets + &(normal_matrix(rng, 4, 8) * 0.1);
        Self {
            vae,
            x: normal_matrix(rng, 5, 8),
            eps: normal_matrix(rng, 5, 2),
            targets,
            augmented,
            pair_eps: normal_matrix(rng, 4, 2),
            kl_weight: rng.random_range(0.1..1.0),
            pair_weight: rng.random_range(0.5..2.0),
        }
    }

    pub fn elbo(&self, vae: &Vae, grad: &mut Vae) -> f64 {
        elbo_with_noise(vae, &self.x, &self.eps, self.kl_weight, 1.0, grad).total
    }

    /// ELBO plus the weighted pair objective.
    pub fn composite(&self, vae: &Vae, mode: PairMode, grad: &mut Vae) -> f64 {
        let base = self.elbo(vae, grad);
        let pair = pair_loss_batch(
            vae,
            &self.targets,
            &self.augmented,
            mode,
            self.pair_weight,
            Some(&self.pair_eps),
            grad,
        );
        base + self.pair_weight * pair.total
    }
}
