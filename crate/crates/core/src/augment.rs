//! Jitter-calibrated augmentation and anti-jitter retraining.
//!
//! Pilot explorations toward fixed targets give an estimate of how much each
//! landmark wobbles while a user holds a pose. New poses are sampled around
//! each target pose in landmark space with that spread, featurized, and paired
//! with the target's angles. Retraining adds, per pair, the input-space MSE
//! between the two angle vectors and `KL(N(μ′, σ′) ‖ N(μ, σ))`, which pulls the
//! posterior of the jittered pose onto the posterior of its target.
//!
//! Two spread estimators are provided: StdAug pools the proximity frames of
//! all explorations of a target before taking the std; AvgStdAug takes the std
//! of the last frames of every exploration separately and averages, so that
//! differences between explorations do not count as jitter.

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{landmarks_to_angles, AngleVector, HandFrame, InteractionLandmarks, Landmark};
use crate::vae::loss::{kl_between, sample_noise};
use crate::vae::model::{angles_to_matrix, TrainingMetadata, Vae};
use crate::vae::train::{fit, AuxObjective};
use crate::vae::{LatentCoord, ModelCheckpoint, TrainConfig};

pub const DEFAULT_PROXIMITY_COUNT: usize = 10;
pub const DEFAULT_SAMPLES_PER_TARGET: usize = 100;
const MAX_RESAMPLES: usize = 10;

/// Per-landmark, per-coordinate standard deviation over the 9 interaction landmarks.
pub type LandmarkStd = [[f64; 3]; 9];

/// One pilot attempt: frames with their embeddings, and the frame the user marked.
#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub target_point: LatentCoord,
    pub frames: Vec<(HandFrame, LatentCoord)>,
    pub marked_index: usize,
}

impl Exploration {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Input("exploration has no frames".into()));
        }
        if self.marked_index >= self.frames.len() {
            return Err(Error::Input(format!(
                "marked index {} outside {} frames",
                self.marked_index,
                self.frames.len()
            )));
        }
        Ok(())
    }
}

/// A training pose and its embedding, used to turn a target point into a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePose {
    pub landmarks: InteractionLandmarks,
    pub embedding: LatentCoord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximitySet {
    pub target_point: LatentCoord,
    pub target_pose: InteractionLandmarks,
    pub proximity_poses: Vec<InteractionLandmarks>,
    pub per_landmark_std: LandmarkStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPair {
    pub target_angles: AngleVector,
    pub augmented_angles: AngleVector,
    pub target_id: usize,
    pub sample_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentVariant {
    Std,
    AvgStd,
}

impl AugmentVariant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Std => "std_aug",
            Self::AvgStd => "avg_std_aug",
        }
    }
}

/// How the pair MSE term is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Input-space MSE between target and augmented angles (no model gradient).
    #[default]
    Literal,
    /// Additionally reconstruct the target from the augmented pose's posterior.
    CrossReconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub pair_weight: f64,
    pub mode: PairMode,
    pub samples_per_target: usize,
    pub proximity_count: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pair_weight: 1.0,
            mode: PairMode::Literal,
            samples_per_target: DEFAULT_SAMPLES_PER_TARGET,
            proximity_count: DEFAULT_PROXIMITY_COUNT,
        }
    }
}

/// Population std of each landmark coordinate over `poses`.
pub fn landmark_std(poses: &[InteractionLandmarks]) -> LandmarkStd {
    let mut out = [[0.0; 3]; 9];
    if poses.len() < 2 {
        return out;
    }
    let n = poses.len() as f64;
    for (l, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let origin = poses[0][l][c];
            let shift = poses.iter().map(|p| p[l][c] - origin).sum::<f64>() / n;
            let var = poses.iter().map(|p| (p[l][c] - origin - shift).powi(2)).sum::<f64>() / n;
            *v = var.sqrt();
        }
    }
    out
}

fn mean_std(stds: &[LandmarkStd]) -> LandmarkStd {
    let mut out = [[0.0; 3]; 9];
    for s in stds {
        for l in 0..9 {
            for c in 0..3 {
                out[l][c] += s[l][c];
            }
        }
    }
    let n = stds.len() as f64;
    out.iter_mut().flatten().for_each(|v| *v /= n);
    out
}

/// Indices of the `k` frames nearest `target`, ties to the earlier frame.
pub fn nearest_frames(frames: &[(HandFrame, LatentCoord)], target: &LatentCoord, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..frames.len()).collect();
    idx.sort_by(|&a, &b| {
        let da = frames[a].1.distance(target);
        let db = frames[b].1.distance(target);
        da.total_cmp(&db).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// The reference pose whose embedding is nearest `point` (ties to the earlier one).
pub fn nearest_reference<'a>(reference: &'a [ReferencePose], point: &LatentCoord) -> Option<&'a ReferencePose> {
    reference
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            a.embedding
                .distance(point)
                .total_cmp(&b.embedding.distance(point))
                .then(i.cmp(j))
        })
        .map(|(_, r)| r)
}

/// Groups explorations by target (first-appearance order) and gathers, from
/// each exploration, the `per_target_count` frames nearest its target.
pub fn collect_proximity(
    explorations: &[Exploration],
    reference: &[ReferencePose],
    per_target_count: usize,
) -> Result<Vec<ProximitySet>> {
    if reference.is_empty() {
        return Err(Error::Input("no reference poses to resolve target poses".into()));
    }
    let mut sets: Vec<ProximitySet> = Vec::new();
    for (e_idx, exp) in explorations.iter().enumerate() {
        exp.validate()?;
        if exp.frames.len() < per_target_count {
            log::warn!(
                "exploration {e_idx} has {} frames (< {per_target_count}); skipped",
                exp.frames.len()
            );
            continue;
        }
        let picked = nearest_frames(&exp.frames, &exp.target_point, per_target_count);
        let mut poses = Vec::with_capacity(picked.len());
        for i in picked {
            poses.push(exp.frames[i].0.interaction_landmarks()?);
        }
        match sets.iter_mut().find(|s| same_point(&s.target_point, &exp.target_point)) {
            Some(set) => set.proximity_poses.extend(poses),
            None => {
                let target_pose = nearest_reference(reference, &exp.target_point)
                    .expect("reference is nonempty")
                    .landmarks;
                sets.push(ProximitySet {
                    target_point: exp.target_point,
                    target_pose,
                    proximity_poses: poses,
                    per_landmark_std: [[0.0; 3]; 9],
                });
            }
        }
    }
    for set in &mut sets {
        if set.proximity_poses.len() < 2 {
            log::warn!("proximity pool of a single frame; std set to zero");
        }
        set.per_landmark_std = landmark_std(&set.proximity_poses);
    }
    Ok(sets)
}

fn same_point(a: &LatentCoord, b: &LatentCoord) -> bool {
    a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits()
}

/// StdAug: pooled std per target, averaged over targets with equal weight.
pub fn estimate_std_stdaug(sets: &[ProximitySet]) -> Result<LandmarkStd> {
    if sets.is_empty() {
        return Err(Error::Input("no proximity sets".into()));
    }
    let stds: Vec<LandmarkStd> = sets
        .iter()
        .map(|s| {
            if s.proximity_poses.len() < 2 {
                log::warn!("proximity pool of a single frame; std set to zero");
            }
            landmark_std(&s.proximity_poses)
        })
        .collect();
    Ok(mean_std(&stds))
}

/// AvgStdAug: std of each exploration's last `window` frames, averaged over explorations.
pub fn estimate_std_avgstdaug(explorations: &[Exploration], window: usize) -> Result<LandmarkStd> {
    let mut stds = Vec::with_capacity(explorations.len());
    for (i, exp) in explorations.iter().enumerate() {
        if exp.frames.len() < window || window == 0 {
            log::warn!("exploration {i} has {} frames (< {window}); skipped", exp.frames.len());
            continue;
        }
        let tail = &exp.frames[exp.frames.len() - window..];
        let poses = tail
            .iter()
            .map(|(f, _)| f.interaction_landmarks())
            .collect::<Result<Vec<_>>>()?;
        if poses.len() < 2 {
            log::warn!("exploration {i} window of a single frame; std set to zero");
        }
        stds.push(landmark_std(&poses));
    }
    if stds.is_empty() {
        return Err(Error::Input("no exploration long enough for the std window".into()));
    }
    Ok(mean_std(&stds))
}

/// Draws `m` landmark sets from `N(target, std²)` per coordinate and pairs
/// their angles with the target's. Degenerate draws are redrawn.
pub fn sample_augmented(
    target_pose: &InteractionLandmarks,
    std: &LandmarkStd,
    m: usize,
    seed: u64,
    target_id: usize,
) -> Result<Vec<AugmentedPair>> {
    if std.iter().flatten().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Input("landmark std must be finite and nonnegative".into()));
    }
    let target_angles = landmarks_to_angles(target_pose)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(m);
    for sample_id in 0..m {
        let mut attempt = 0;
        let augmented_angles = loop {
            let mut pose = *target_pose;
            for (p, s) in pose.iter_mut().zip(std.iter()) {
                let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                *p += Landmark::new(s[0] * z[0], s[1] * z[1], s[2] * z[2]);
            }
            match landmarks_to_angles(&pose) {
                Ok(a) => break a,
                Err(Error::DegeneratePose(reason)) if attempt < MAX_RESAMPLES => {
                    log::debug!("resampling degenerate augmented pose: {reason}");
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        out.push(AugmentedPair {
            target_angles,
            augmented_angles,
            target_id,
            sample_id,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub total: f64,
    pub input_mse: f64,
    pub kl: f64,
    pub cross_reconstruction: f64,
}

/// Mean pair objective over rows of `targets`/`augmented`; gradients scaled by
/// `weight` accumulate into `grad`.
pub fn pair_loss_batch(
    vae: &Vae,
    targets: &Array2<f64>,
    augmented: &Array2<f64>,
    mode: PairMode,
    weight: f64,
    eps: Option<&Array2<f64>>,
    grad: &mut Vae,
) -> PairLoss {
    let n = targets.nrows() as f64;
    let dims = targets.ncols() as f64;
    let input_mse = (targets - augmented).mapv(|d| d * d).sum() / dims / n;

    let (mu_t, lv_t, cache_t) = vae.encoder.forward_cached(targets);
    let (mu_a, lv_a, cache_a) = vae.encoder.forward_cached(augmented);

    let mut kl = 0.0;
    for r in 0..targets.nrows() {
        let (ma, la, mt, lt) = (mu_a.row(r), lv_a.row(r), mu_t.row(r), lv_t.row(r));
        kl += kl_between(
            ma.as_slice().unwrap(),
            la.as_slice().unwrap(),
            mt.as_slice().unwrap(),
            lt.as_slice().unwrap(),
        );
    }
    kl /= n;

    let scale = weight / n;
    let mut g_mu_a = Array2::zeros(mu_a.raw_dim());
    let mut g_mu_t = Array2::zeros(mu_t.raw_dim());
    let mut g_lv_a = Array2::zeros(lv_a.raw_dim());
    let mut g_lv_t = Array2::zeros(lv_t.raw_dim());
    for ((r, c), &ma) in mu_a.indexed_iter() {
        let (mt, la, lt) = (mu_t[(r, c)], lv_a[(r, c)], lv_t[(r, c)]);
        let d = ma - mt;
        let var_t = lt.exp();
        let var_a = la.exp();
        g_mu_a[(r, c)] = scale * d / var_t;
        g_mu_t[(r, c)] = -scale * d / var_t;
        g_lv_a[(r, c)] = scale * 0.5 * (var_a / var_t - 1.0);
        g_lv_t[(r, c)] = scale * 0.5 * (1.0 - (var_a + d * d) / var_t);
    }

    let mut cross_reconstruction = 0.0;
    if mode == PairMode::CrossReconstruction {
        let eps = eps.expect("cross reconstruction needs noise");
        let sigma_a = lv_a.mapv(|lv| (0.5 * lv).exp());
        let z = &mu_a + &(&sigma_a * eps);
        let (recon, dec_cache) = vae.decoder.forward_cached(&z);
        let diff = &recon - targets;
        cross_reconstruction = diff.mapv(|d| d * d).sum() / dims / n;
        let g_recon = diff.mapv(|d| weight * 2.0 * d / (dims * n));
        let g_z = vae.decoder.backward(&dec_cache, &g_recon, &mut grad.decoder);
        g_mu_a += &g_z;
        Zip::from(&mut g_lv_a)
            .and(&g_z)
            .and(eps)
            .and(&sigma_a)
            .for_each(|g, &gz, &e, &s| *g += gz * e * 0.5 * s);
    }

    vae.encoder.backward(&cache_t, &g_mu_t, &g_lv_t, &mut grad.encoder);
    vae.encoder.backward(&cache_a, &g_mu_a, &g_lv_a, &mut grad.encoder);

    PairLoss {
        total: input_mse + kl + cross_reconstruction,
        input_mse,
        kl,
        cross_reconstruction,
    }
}

/// Pair objective for one pair, with gradients.
pub fn stability_loss(
    pair: &AugmentedPair,
    vae: &Vae,
    mode: PairMode,
    rng: &mut ChaCha8Rng,
) -> (PairLoss, Vae) {
    let t = angles_to_matrix(&[pair.target_angles]);
    let a = angles_to_matrix(&[pair.augmented_angles]);
    let eps = (mode == PairMode::CrossReconstruction).then(|| sample_noise(rng, 1));
    let mut grad = vae.zeros_like();
    let loss = pair_loss_batch(vae, &t, &a, mode, 1.0, eps.as_ref(), &mut grad);
    (loss, grad)
}

struct PairObjective {
    targets: Array2<f64>,
    augmented: Array2<f64>,
    mode: PairMode,
}

impl AuxObjective for PairObjective {
    fn len(&self) -> usize {
        self.targets.nrows()
    }

    fn accumulate(&self, vae: &Vae, indices: &[usize], weight: f64, rng: &mut ChaCha8Rng, grad: &mut Vae) -> f64 {
        let t = self.targets.select(ndarray::Axis(0), indices);
        let a = self.augmented.select(ndarray::Axis(0), indices);
        let eps = (self.mode == PairMode::CrossReconstruction).then(|| sample_noise(rng, indices.len()));
        pair_loss_batch(vae, &t, &a, self.mode, weight, eps.as_ref(), grad).total
    }

    fn describe(&self, metadata: &mut TrainingMetadata) {
        metadata.pair_mode = Some(
            match self.mode {
                PairMode::Literal => "literal",
                PairMode::CrossReconstruction => "cross_reconstruction",
            }
            .into(),
        );
    }
}

/// Trains from scratch on the base corpus plus all augmented poses, with the
/// pair objective interleaved batch by batch.
pub fn retrain_augmented(
    base: &[AngleVector],
    pairs: &[AugmentedPair],
    train_cfg: &TrainConfig,
    aug_cfg: &AugmentConfig,
) -> Result<ModelCheckpoint> {
    if base.is_empty() {
        return Err(Error::Input("base corpus is empty".into()));
    }
    let mut corpus = base.to_vec();
    corpus.extend(pairs.iter().map(|p| p.augmented_angles));
    let objective = PairObjective {
        targets: angles_to_matrix(&pairs.iter().map(|p| p.target_angles).collect::<Vec<_>>()),
        augmented: angles_to_matrix(&pairs.iter().map(|p| p.augmented_angles).collect::<Vec<_>>()),
        mode: aug_cfg.mode,
    };
    fit(&corpus, train_cfg, Some((&objective, aug_cfg.pair_weight)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_at(offset: f64) -> HandFrame {
        let landmarks = (0..21)
            .map(|i| Landmark::new(0.3 + 0.02 * i as f64 + offset, 0.7 - 0.03 * i as f64, 0.01 * i as f64))
            .collect();
        HandFrame {
            timestamp_ms: 0,
            landmarks,
        }
    }

    fn reference() -> Vec<ReferencePose> {
        vec![ReferencePose {
            landmarks: frame_at(0.0).interaction_landmarks().unwrap(),
            embedding: LatentCoord::new(0.5, 0.5),
        }]
    }

    #[test]
    fn last_frames_at_target_are_selected() {
        let target = LatentCoord::new(0.5, 0.5);
        let mut frames: Vec<_> = (0..20)
            .map(|i| (frame_at(0.0), LatentCoord::new(0.1 + 0.01 * i as f64, 0.1)))
            .collect();
        frames.extend((0..10).map(|_| (frame_at(0.0), target)));
        let picked = nearest_frames(&frames, &target, 10);
        assert_eq!(picked, (20..30).collect::<Vec<_>>());
    }

    #[test]
    fn equidistant_frames_prefer_earlier() {
        let target = LatentCoord::new(0.5, 0.5);
        let frames = vec![
            (frame_at(0.0), LatentCoord::new(0.6, 0.5)),
            (frame_at(0.0), LatentCoord::new(0.4, 0.5)),
            (frame_at(0.0), LatentCoord::new(0.9, 0.9)),
        ];
        assert_eq!(nearest_frames(&frames, &target, 1), vec![0]);
        assert_eq!(nearest_frames(&frames, &target, 2), vec![0, 1]);
    }

    #[test]
    fn identical_poses_have_zero_std() {
        let exp = Exploration {
            target_point: LatentCoord::new(0.5, 0.5),
            frames: (0..12).map(|_| (frame_at(0.0), LatentCoord::new(0.5, 0.5))).collect(),
            marked_index: 11,
        };
        let sets = collect_proximity(&[exp.clone()], &reference(), 10).unwrap();
        assert_eq!(estimate_std_stdaug(&sets).unwrap(), [[0.0; 3]; 9]);
        assert_eq!(estimate_std_avgstdaug(&[exp], 10).unwrap(), [[0.0; 3]; 9]);
    }

    #[test]
    fn avgstd_ignores_between_exploration_offsets() {
        let target = LatentCoord::new(0.5, 0.5);
        let exps: Vec<_> = [0.0, 0.05, -0.03]
            .iter()
            .map(|&off| Exploration {
                target_point: target,
                frames: (0..10).map(|_| (frame_at(off), target)).collect(),
                marked_index: 9,
            })
            .collect();
        assert_eq!(estimate_std_avgstdaug(&exps, 10).unwrap(), [[0.0; 3]; 9]);
        let sets = collect_proximity(&exps, &reference(), 10).unwrap();
        let pooled = estimate_std_stdaug(&sets).unwrap();
        assert!(pooled[0][0] > 0.0);
        assert_eq!(pooled[0][1], 0.0);
    }

    #[test]
    fn short_exploration_is_skipped() {
        let exp = Exploration {
            target_point: LatentCoord::new(0.5, 0.5),
            frames: (0..5).map(|_| (frame_at(0.0), LatentCoord::new(0.5, 0.5))).collect(),
            marked_index: 4,
        };
        assert!(collect_proximity(&[exp.clone()], &reference(), 10).unwrap().is_empty());
        assert!(estimate_std_avgstdaug(&[exp], 10).is_err());
    }

    #[test]
    fn zero_std_reproduces_target() {
        let pose = frame_at(0.0).interaction_landmarks().unwrap();
        let pairs = sample_augmented(&pose, &[[0.0; 3]; 9], 5, 1, 0).unwrap();
        assert_eq!(pairs.len(), 5);
        for p in pairs {
            assert_eq!(p.augmented_angles, p.target_angles);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let pose = frame_at(0.0).interaction_landmarks().unwrap();
        let std = [[0.002; 3]; 9];
        assert_eq!(
            sample_augmented(&pose, &std, 20, 4, 0).unwrap(),
            sample_augmented(&pose, &std, 20, 4, 0).unwrap()
        );
        assert_ne!(
            sample_augmented(&pose, &std, 20, 4, 0).unwrap(),
            sample_augmented(&pose, &std, 20, 5, 0).unwrap()
        );
    }
}
