//! Transport-independent session logic: one pipeline, trial bookkeeping and
//! condition flags per connection.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::protocol::{ClientMessage, ErrorCode, ServerMessage, StateMessage, TrialResult};
use crate::error::{Error, Result};
use crate::guidance::{GuidanceBuilder, GuidanceSet};
use crate::io::write_json_line;
use crate::media::{map_media, MediaSpace};
use crate::pipeline::{PipelineConfig, PipelineOutput, PipelineState};
use crate::pose::{AngleVector, HandFrame, Landmark};
use crate::sim::ablation::sub_seed;
use crate::sim::trial::{TrialConditions, TrialRecord};
use crate::vae::{LatentCoord, ModelCheckpoint};

pub const DEFAULT_TARGET_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub pipeline: PipelineConfig,
    pub guidance: bool,
    /// Guidance is rebuilt every this many frames and repeated in between.
    pub guidance_every: usize,
    /// Nearest media items reported per state; 0 disables the lookup.
    pub media_k: usize,
    pub frame_rate_hz: f64,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            guidance: true,
            guidance_every: 1,
            media_k: 3,
            frame_rate_hz: 30.0,
            seed: 0,
        }
    }
}

/// `count` targets drawn without replacement from `embeddings` with a fixed seed.
pub fn sample_targets(embeddings: &[LatentCoord], count: usize, seed: u64) -> Result<Vec<LatentCoord>> {
    if embeddings.is_empty() {
        return Err(Error::Input("no embeddings to draw targets from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, embeddings.len(), count.min(embeddings.len()))
        .into_iter()
        .map(|i| embeddings[i])
        .collect())
}

/// JSON-lines sink shared by all sessions; each record is flushed as written.
pub struct TrialLog {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl TrialLog {
    pub fn new(sink: Box<dyn Write + Send>) -> Self {
        Self { sink: Mutex::new(sink) }
    }

    pub fn append(&self, record: &TrialRecord) -> Result<()> {
        let mut sink = self.sink.lock().map_err(|_| Error::Protocol("trial log lock poisoned".into()))?;
        write_json_line(&mut *sink, record)?;
        sink.flush()?;
        Ok(())
    }
}

/// Immutable state shared by every session of one service.
pub struct ServiceContext {
    pub checkpoint_id: String,
    pub guidance: GuidanceBuilder,
    pub media: Option<MediaSpace>,
    pub targets: Vec<LatentCoord>,
    pub log: Option<TrialLog>,
    next_session: AtomicU64,
}

impl ServiceContext {
    pub fn new(model: ModelCheckpoint, targets: Vec<LatentCoord>, media: Option<MediaSpace>, log: Option<TrialLog>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Config("the target set is empty".into()));
        }
        let checkpoint_id = model.content_hash()?;
        Ok(Self {
            checkpoint_id,
            guidance: GuidanceBuilder::new(Arc::new(model)),
            media,
            targets,
            log,
            next_session: AtomicU64::new(1),
        })
    }

    pub fn model(&self) -> &ModelCheckpoint {
        self.guidance.model()
    }
}

#[derive(Debug, Clone)]
struct ActiveTrial {
    index: usize,
    target: LatentCoord,
    start_frame: u64,
    outputs: Vec<PipelineOutput>,
}

pub struct Session {
    id: u64,
    ctx: Arc<ServiceContext>,
    cfg: SessionConfig,
    pipeline: PipelineState,
    guidance_on: bool,
    trial: Option<ActiveTrial>,
    trials_done: usize,
    next_target: usize,
    frames: u64,
    last_guidance: Option<GuidanceSet>,
    records: Vec<TrialRecord>,
}

impl Session {
    pub fn new(ctx: Arc<ServiceContext>, cfg: SessionConfig) -> Self {
        let id = ctx.next_session.fetch_add(1, Ordering::Relaxed);
        Self {
            id,
            pipeline: PipelineState::new(cfg.pipeline),
            guidance_on: cfg.guidance,
            ctx,
            cfg,
            trial: None,
            trials_done: 0,
            next_target: 0,
            frames: 0,
            last_guidance: None,
            records: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Trials closed in this session, in order.
    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn conditions(&self) -> TrialConditions {
        let c = self.pipeline.config();
        TrialConditions {
            stable: c.stable,
            smooth: c.smooth,
            guidance: self.guidance_on,
            variant: self
                .ctx
                .model()
                .metadata
                .variant
                .clone()
                .unwrap_or_else(|| "basic".into()),
        }
    }

    /// Parses one line and handles it; malformed input yields an error message.
    pub fn handle_line(&mut self, line: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![ServerMessage::error(ErrorCode::ParseError, e.to_string(), None)],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Frame { seq, t_ms, landmarks } => {
                let frame = HandFrame {
                    timestamp_ms: t_ms,
                    landmarks: landmarks.iter().map(|p| Landmark::new(p[0], p[1], p[2])).collect(),
                };
                if let Err(e) = frame.validate() {
                    return vec![ServerMessage::error(ErrorCode::InvalidFrame, e.to_string(), Some(seq))];
                }
                let model = Arc::clone(self.ctx.guidance.model());
                let result = self.pipeline.step(&frame, &model);
                vec![self.after_step(seq, result)]
            }
            ClientMessage::Angles { seq, angles, t_ms } => {
                let t_ms = t_ms.unwrap_or_else(|| (seq as f64 * 1000.0 / self.cfg.frame_rate_hz).round() as i64);
                let model = Arc::clone(self.ctx.guidance.model());
                let result = self.pipeline.step_angles(&AngleVector(angles), t_ms, &model);
                vec![self.after_step(seq, result)]
            }
            ClientMessage::StartTrial { target } => vec![self.start_trial(target)],
            ClientMessage::Mark => vec![self.mark()],
            ClientMessage::SetCondition { guidance, stable, smooth } => {
                let c = *self.pipeline.config();
                self.pipeline.set_stages(stable.unwrap_or(c.stable), smooth.unwrap_or(c.smooth));
                if let Some(g) = guidance {
                    self.guidance_on = g;
                    self.last_guidance = None;
                }
                let c = self.pipeline.config();
                vec![ServerMessage::Condition {
                    guidance: self.guidance_on,
                    stable: c.stable,
                    smooth: c.smooth,
                }]
            }
        }
    }

    fn after_step(&mut self, seq: u64, result: Result<PipelineOutput>) -> ServerMessage {
        let out = match result {
            Ok(out) => out,
            Err(Error::DegeneratePose(m)) => return ServerMessage::error(ErrorCode::DegeneratePose, m, Some(seq)),
            Err(Error::Input(m)) => return ServerMessage::error(ErrorCode::BadTimestamp, m, Some(seq)),
            Err(e) => return ServerMessage::error(ErrorCode::Internal, e.to_string(), Some(seq)),
        };
        let frame_index = self.frames;
        self.frames += 1;
        if let Some(t) = self.trial.as_mut() {
            t.outputs.push(out);
        }
        let guidance = if self.guidance_on {
            let every = self.cfg.guidance_every.max(1) as u64;
            if frame_index % every == 0 || self.last_guidance.is_none() {
                let model = self.ctx.model();
                let angles = self.pipeline.last_angles().copied().unwrap_or_else(|| model.decode(&out.raw));
                let posterior = model.encode(&angles);
                let g = self.ctx.guidance.build(&posterior, sub_seed(self.cfg.seed, seq));
                self.last_guidance = Some(g);
            }
            self.last_guidance.clone()
        } else {
            None
        };
        let media = match (&self.ctx.media, self.cfg.media_k) {
            (Some(space), k) if k > 0 => map_media(space, &out.smooth, k).ok(),
            _ => None,
        };
        ServerMessage::State(StateMessage {
            seq,
            t_ms: out.timestamp_ms,
            raw: out.raw,
            stable: out.stable,
            smooth: out.smooth,
            regime: out.regime,
            degenerate: out.degenerate,
            guidance,
            media,
        })
    }

    fn start_trial(&mut self, target: Option<LatentCoord>) -> ServerMessage {
        if self.trial.is_some() {
            return ServerMessage::error(ErrorCode::TrialInProgress, "a trial is already running", None);
        }
        let target = match target {
            Some(t) if t.x.is_finite() && t.y.is_finite() => t,
            Some(_) => return ServerMessage::error(ErrorCode::ParseError, "target must be finite", None),
            None => {
                let t = self.ctx.targets[self.next_target % self.ctx.targets.len()];
                self.next_target += 1;
                t
            }
        };
        let index = self.trials_done;
        self.trial = Some(ActiveTrial {
            index,
            target,
            start_frame: self.frames,
            outputs: Vec::new(),
        });
        ServerMessage::TrialStarted { trial: index, target }
    }

    fn mark(&mut self) -> ServerMessage {
        let Some(current) = self.pipeline.last_output().map(|o| o.smooth) else {
            return if self.trial.is_some() {
                ServerMessage::error(ErrorCode::NoPosition, "no frame processed yet", None)
            } else {
                ServerMessage::error(ErrorCode::NoTrial, "mark without a running trial", None)
            };
        };
        let Some(trial) = self.trial.take() else {
            return ServerMessage::error(ErrorCode::NoTrial, "mark without a running trial", None);
        };
        debug_assert_eq!(trial.outputs.len() as u64, self.frames - trial.start_frame);
        let hold_start = trial.outputs.len();
        let record = TrialRecord::close(
            trial.target,
            trial.outputs,
            current,
            hold_start,
            self.conditions(),
            self.cfg.frame_rate_hz,
        );
        if let Some(log) = &self.ctx.log {
            if let Err(e) = log.append(&record) {
                log::error!("session {}: trial log write failed: {e}", self.id);
            }
        }
        self.trials_done += 1;
        let result = TrialResult {
            trial: trial.index,
            target: record.target,
            marked: record.marked,
            completion_time_s: record.completion_time_s,
            final_distance: record.final_distance,
            frames: record.frames.len(),
            conditions: record.conditions.clone(),
            next_target: self.ctx.targets[self.next_target % self.ctx.targets.len()],
        };
        self.records.push(record);
        ServerMessage::TrialResult(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::DEFAULT_HIDDEN;

    fn ctx() -> Arc<ServiceContext> {
        let targets = vec![LatentCoord::new(0.2, 0.3), LatentCoord::new(0.7, 0.6)];
        Arc::new(ServiceContext::new(ModelCheckpoint::untrained(&DEFAULT_HIDDEN, 4), targets, None, None).unwrap())
    }

    fn angles_msg(seq: u64) -> ClientMessage {
        ClientMessage::Angles {
            seq,
            angles: [0.1 + 0.01 * seq as f64, 0.3, 0.2, 0.1, 0.05, 0.4, 0.3, 0.2],
            t_ms: None,
        }
    }

    #[test]
    fn one_state_per_frame_in_order() {
        let mut s = Session::new(ctx(), SessionConfig::default());
        for seq in 0..5 {
            let out = s.handle(angles_msg(seq));
            assert_eq!(out.len(), 1);
            match &out[0] {
                ServerMessage::State(st) => {
                    assert_eq!(st.seq, seq);
                    assert!(st.guidance.is_some());
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn mark_without_trial_is_an_error() {
        let mut s = Session::new(ctx(), SessionConfig::default());
        s.handle(angles_msg(0));
        assert!(matches!(
            s.handle(ClientMessage::Mark)[0],
            ServerMessage::Error { code: ErrorCode::NoTrial, .. }
        ));
    }

    #[test]
    fn immediate_mark_takes_no_time() {
        let mut s = Session::new(ctx(), SessionConfig::default());
        s.handle(angles_msg(0));
        s.handle(ClientMessage::StartTrial { target: None });
        let ServerMessage::TrialResult(r) = &s.handle(ClientMessage::Mark)[0] else {
            panic!("expected a trial result");
        };
        assert_eq!(r.completion_time_s, 0.0);
        assert_eq!(r.target, LatentCoord::new(0.2, 0.3));
        assert_eq!(r.final_distance, r.marked.distance(&r.target));
        assert_eq!(r.next_target, LatentCoord::new(0.7, 0.6));
    }

    #[test]
    fn completion_time_counts_frames() {
        let mut s = Session::new(ctx(), SessionConfig::default());
        s.handle(angles_msg(0));
        s.handle(ClientMessage::StartTrial { target: None });
        for seq in 1..=45 {
            s.handle(angles_msg(seq));
        }
        let ServerMessage::TrialResult(r) = &s.handle(ClientMessage::Mark)[0] else {
            panic!("expected a trial result");
        };
        assert_eq!(r.frames, 45);
        assert_eq!(r.completion_time_s, 45.0 / 30.0);
    }

    #[test]
    fn second_start_is_rejected() {
        let mut s = Session::new(ctx(), SessionConfig::default());
        s.handle(ClientMessage::StartTrial { target: None });
        assert!(matches!(
            s.handle(ClientMessage::StartTrial { target: None })[0],
            ServerMessage::Error {
                code: ErrorCode::TrialInProgress,
                ..
            }
        ));
    }

    #[test]
    fn malformed_input_keeps_session_alive() {
        let mut s = Session::new(ctx(), SessionConfig::default());
        assert!(matches!(
            s.handle_line("{not json")[0],
            ServerMessage::Error {
                code: ErrorCode::ParseError,
                ..
            }
        ));
        let short = r#"{"type":"frame","seq":1,"t_ms":0,"landmarks":[[0,0,0]]}"#;
        assert!(matches!(
            s.handle_line(short)[0],
            ServerMessage::Error {
                code: ErrorCode::InvalidFrame,
                ..
            }
        ));
        assert!(matches!(s.handle(angles_msg(2))[0], ServerMessage::State(_)));
    }

    #[test]
    fn condition_toggle_is_acknowledged() {
        let mut s = Session::new(ctx(), SessionConfig::default());
        let ack = s.handle(ClientMessage::SetCondition {
            guidance: Some(false),
            stable: None,
            smooth: Some(false),
        });
        assert_eq!(
            ack[0],
            ServerMessage::Condition {
                guidance: false,
                stable: true,
                smooth: false
            }
        );
        let ServerMessage::State(st) = &s.handle(angles_msg(0))[0] else {
            panic!("expected state");
        };
        assert!(st.guidance.is_none());
        assert_eq!(st.smooth, st.stable);
    }

    #[test]
    fn targets_are_seeded() {
        let pts: Vec<_> = (0..50).map(|i| LatentCoord::new(i as f64 / 50.0, 0.5)).collect();
        assert_eq!(sample_targets(&pts, 10, 3).unwrap(), sample_targets(&pts, 10, 3).unwrap());
        assert_eq!(sample_targets(&pts, 10, 3).unwrap().len(), 10);
    }
}
