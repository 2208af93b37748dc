//! Pilot explorations and augmented-pair sampling, shared by the benchmark
//! and the command line.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::SyntheticFrame;
use super::hand::HandPoseParams;
use super::jitter::JitterModel;
use super::trial::{simulate_trial_run, target_point, StartPose, SyntheticUser, TrialSpec};
use crate::augment::{sample_augmented, AugmentedPair, Exploration, LandmarkStd, ProximitySet, ReferencePose};
use crate::error::Result;
use crate::pipeline::PipelineConfig;
use crate::vae::ModelCheckpoint;

/// `count` generating poses drawn without replacement from the corpus.
pub fn sample_target_poses(corpus: &[SyntheticFrame], count: usize, seed: u64) -> Vec<HandPoseParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, corpus.len(), count.min(corpus.len()))
        .into_iter()
        .map(|i| corpus[i].params)
        .collect()
}

/// Corpus frames paired with their embeddings under `model`.
pub fn reference_poses(corpus: &[SyntheticFrame], model: &ModelCheckpoint) -> Result<Vec<ReferencePose>> {
    let angles = super::corpus::corpus_angles(corpus)?;
    corpus
        .iter()
        .zip(model.embed_batch(&angles))
        .map(|(s, embedding)| {
            Ok(ReferencePose {
                landmarks: s.frame.interaction_landmarks()?,
                embedding,
            })
        })
        .collect()
}

/// Simulated explorations with no post-processing, targets taken in turn.
/// Run `j` uses `sub_seed(seed, j)`.
pub fn run_pilot(
    model: &ModelCheckpoint,
    targets: &[HandPoseParams],
    count: usize,
    user: SyntheticUser,
    jitter: JitterModel,
    seed: u64,
) -> Result<Vec<Exploration>> {
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let target = &targets[j % targets.len()];
        let spec = TrialSpec {
            model,
            variant: model.metadata.variant.clone().unwrap_or_else(|| "basic".into()),
            pipeline: PipelineConfig::with_stages(false, false),
            guidance: false,
            target_pose: *target,
            user,
            jitter,
            start: StartPose::Random,
        };
        let run = simulate_trial_run(&spec, super::ablation::sub_seed(seed, j as u64))?;
        let marked_index = run.frames.len() - 1;
        out.push(Exploration {
            target_point: target_point(model, target)?,
            frames: run.frames.into_iter().zip(run.record.frames.iter().map(|o| o.raw)).collect(),
            marked_index,
        });
    }
    Ok(out)
}

/// `per_target` jittered copies of every proximity-set target pose.
pub fn augmented_pairs(sets: &[ProximitySet], std: &LandmarkStd, per_target: usize, seed: u64) -> Result<Vec<AugmentedPair>> {
    let mut pairs = Vec::with_capacity(sets.len() * per_target);
    for (t, set) in sets.iter().enumerate() {
        let s = super::ablation::sub_seed(seed, t as u64);
        pairs.extend(sample_augmented(&set.target_pose, std, per_target, s, t)?);
    }
    Ok(pairs)
}
