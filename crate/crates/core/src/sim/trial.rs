//! Simulated target-selection trials.
//!
//! The synthetic user reaches from a start pose to its own rendition of the
//! target pose along a minimum-jerk profile, then holds. Its rendition differs
//! from the target by a small per-trial aim error and a different hand
//! placement. Every frame is disturbed by the [`JitterModel`] and run through
//! the pipeline; the mark is the last smooth output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::corpus::{random_placement, SyntheticPoseFamily};
use super::hand::HandPoseParams;
use super::jitter::JitterModel;
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, PipelineOutput, PipelineState};
use crate::pose::{frame_to_angles, HandFrame};
use crate::vae::{LatentCoord, ModelCheckpoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticUser {
    pub reach_s: f64,
    pub hold_s: f64,
    pub frame_rate_hz: f64,
    /// Std (radians) of the per-trial error on every joint and orientation parameter.
    pub aim_error: f64,
    /// Std of the hand-position offset between trials, normalized units.
    pub placement_error: f64,
    /// Relative std of the apparent hand size between trials.
    pub scale_error: f64,
}

impl Default for SyntheticUser {
    fn default() -> Self {
        Self {
            reach_s: 3.0,
            hold_s: 2.0,
            frame_rate_hz: 30.0,
            aim_error: 0.03,
            placement_error: 0.02,
            scale_error: 0.03,
        }
    }
}

impl SyntheticUser {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reach_s >= 0.0
            && self.hold_s >= 0.0
            && self.reach_s + self.hold_s > 0.0
            && self.frame_rate_hz > 0.0
            && [self.aim_error, self.placement_error, self.scale_error]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("synthetic user timings and errors must be finite and >= 0".into()))
        }
    }

    pub fn reach_frames(&self) -> usize {
        (self.reach_s * self.frame_rate_hz).round() as usize
    }

    pub fn total_frames(&self) -> usize {
        self.reach_frames() + (self.hold_s * self.frame_rate_hz).round() as usize
    }
}

/// `10τ³ − 15τ⁴ + 6τ⁵`, clamped to `[0, 1]`.
pub fn minimum_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPose {
    /// A random pose from one of the corpus families at a random placement.
    Random,
    /// The user's rendition of the target; no reach movement.
    AtTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConditions {
    pub stable: bool,
    pub smooth: bool,
    pub guidance: bool,
    pub variant: String,
}

#[derive(Debug, Clone)]
pub struct TrialSpec<'a> {
    pub model: &'a ModelCheckpoint,
    pub variant: String,
    pub pipeline: PipelineConfig,
    pub guidance: bool,
    pub target_pose: HandPoseParams,
    pub user: SyntheticUser,
    pub jitter: JitterModel,
    pub start: StartPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub target: LatentCoord,
    pub frames: Vec<PipelineOutput>,
    pub marked: LatentCoord,
    pub completion_time_s: f64,
    pub final_distance: f64,
    /// Index in `frames` of the first hold-phase frame.
    pub hold_start: usize,
    /// Time after which the smooth pointer stays within the settle radius of the mark.
    pub settle_time_s: f64,
    pub conditions: TrialConditions,
    pub frame_rate_hz: f64,
}

pub const SETTLE_RADIUS: f64 = 0.05;

impl TrialRecord {
    /// Closes a trial at `marked`; `frames` are the outputs since the trial started.
    pub fn close(
        target: LatentCoord,
        frames: Vec<PipelineOutput>,
        marked: LatentCoord,
        hold_start: usize,
        conditions: TrialConditions,
        frame_rate_hz: f64,
    ) -> Self {
        let settle_index = frames
            .iter()
            .rposition(|o| o.smooth.distance(&marked) > SETTLE_RADIUS)
            .map_or(0, |i| i + 1);
        Self {
            target,
            marked,
            completion_time_s: frames.len() as f64 / frame_rate_hz,
            final_distance: marked.distance(&target),
            hold_start,
            settle_time_s: settle_index as f64 / frame_rate_hz,
            conditions,
            frame_rate_hz,
            frames,
        }
    }

    pub fn hold_frames(&self) -> &[PipelineOutput] {
        &self.frames[self.hold_start.min(self.frames.len())..]
    }
}

/// Per-trial draws shared by every configuration run with the same seed.
#[derive(Debug, Clone, Copy)]
struct TrialPlan {
    start: HandPoseParams,
    end: HandPoseParams,
}

fn perturb<R: Rng + ?Sized>(p: &HandPoseParams, user: &SyntheticUser, rng: &mut R) -> HandPoseParams {
    let aim = Normal::new(0.0, user.aim_error).expect("validated std");
    let place = Normal::new(0.0, user.placement_error).expect("validated std");
    let size = Normal::new(0.0, user.scale_error).expect("validated std");
    let mut a = |v: f64| v + aim.sample(rng);
    let mut out = *p;
    out.roll = a(p.roll);
    out.thumb_spread = a(p.thumb_spread);
    out.index_spread = a(p.index_spread);
    out.thumb_flex = p.thumb_flex.map(|f| a(f).abs());
    out.index_flex = p.index_flex.map(|f| a(f).abs());
    out.pinch_aperture = (p.pinch_aperture + 0.5 * aim.sample(rng)).abs();
    out.center = [p.center[0] + place.sample(rng), p.center[1] + place.sample(rng)];
    out.scale = p.scale * (1.0 + size.sample(rng)).max(0.5);
    out
}

fn plan<R: Rng + ?Sized>(spec: &TrialSpec<'_>, rng: &mut R) -> TrialPlan {
    let end = perturb(&spec.target_pose, &spec.user, rng);
    let family = SyntheticPoseFamily::ALL[rng.random_range(0..SyntheticPoseFamily::ALL.len())];
    let style: [f64; 6] = std::array::from_fn(|_| rng.random::<f64>());
    let phase = rng.random::<f64>();
    let (center, scale, depth) = random_placement(rng);
    let random_start = family.pose(phase, &style).placed(center, scale, depth);
    let start = match spec.start {
        StartPose::Random => random_start,
        StartPose::AtTarget => end,
    };
    TrialPlan { start, end }
}

/// The target point of a pose under `model`: the embedding of its noise-free landmarks.
pub fn target_point(model: &ModelCheckpoint, pose: &HandPoseParams) -> Result<LatentCoord> {
    let frame = HandFrame {
        timestamp_ms: 0,
        landmarks: pose.landmarks(),
    };
    Ok(model.embed(&frame_to_angles(&frame)?))
}

/// A trial together with the disturbed landmark frames fed to the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub record: TrialRecord,
    pub frames: Vec<HandFrame>,
}

pub fn simulate_trial(spec: &TrialSpec<'_>, seed: u64) -> Result<TrialRecord> {
    simulate_trial_run(spec, seed).map(|r| r.record)
}

pub fn simulate_trial_run(spec: &TrialSpec<'_>, seed: u64) -> Result<TrialRun> {
    spec.user.validate()?;
    spec.jitter.validate()?;
    let target = target_point(spec.model, &spec.target_pose)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = plan(spec, &mut rng);
    let mut jitter = spec.jitter.start(&mut rng);

    let user = &spec.user;
    let reach = user.reach_frames();
    let total = user.total_frames();
    let dt_ms = 1000.0 / user.frame_rate_hz;
    let mut state = PipelineState::new(spec.pipeline);
    let mut outputs = Vec::with_capacity(total);
    let mut frames = Vec::with_capacity(total);
    let mut hold_start = None;
    for f in 0..total {
        let tau = if reach == 0 { 1.0 } else { f as f64 / reach as f64 };
        let pose = plan.start.lerp(&plan.end, minimum_jerk(tau));
        let mut landmarks = pose.landmarks();
        let t_s = f as f64 / user.frame_rate_hz;
        jitter.apply(&mut landmarks, t_s, &mut rng);
        let frame = HandFrame {
            timestamp_ms: (f as f64 * dt_ms).round() as i64,
            landmarks,
        };
        match state.step(&frame, spec.model) {
            Ok(out) => {
                if f >= reach && hold_start.is_none() {
                    hold_start = Some(outputs.len());
                }
                outputs.push(out);
                frames.push(frame);
            }
            Err(Error::DegeneratePose(reason)) => {
                log::debug!("dropping leading degenerate frame: {reason}");
            }
            Err(e) => return Err(e),
        }
    }
    let Some(last) = outputs.last() else {
        return Err(Error::Input("trial produced no usable frame".into()));
    };
    let marked = last.smooth;
    let conditions = TrialConditions {
        stable: spec.pipeline.stable,
        smooth: spec.pipeline.smooth,
        guidance: spec.guidance,
        variant: spec.variant.clone(),
    };
    let hold_start = hold_start.unwrap_or(outputs.len());
    let record = TrialRecord::close(target, outputs, marked, hold_start, conditions, user.frame_rate_hz);
    Ok(TrialRun { record, frames })
}
