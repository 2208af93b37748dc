//! Per-frame composition: featurize → embed → stabilize → smooth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{OneEuro, Regime, RegimeSwitch, Stabilizer, DEFAULT_DERIVATIVE_CUTOFF, DEFAULT_JUMP_THRESHOLD};
use crate::pose::{angles_to_skeleton, landmarks_to_angles, AngleVector, HandFrame, InteractionLandmarks, Landmark};
use crate::vae::{LatentCoord, ModelCheckpoint};

/// Sensor-space size of one skeleton hand unit, used to turn slider-driven
/// skeletons into a landmark displacement for regime selection.
pub const NOMINAL_HAND_SCALE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stable: bool,
    pub smooth: bool,
    pub jump_threshold: f64,
    pub regimes: RegimeSwitch,
    pub derivative_cutoff: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stable: true,
            smooth: true,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
            regimes: RegimeSwitch::default(),
            derivative_cutoff: DEFAULT_DERIVATIVE_CUTOFF,
        }
    }
}

impl PipelineConfig {
    pub fn with_stages(stable: bool, smooth: bool) -> Self {
        Self {
            stable,
            smooth,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub timestamp_ms: i64,
    pub raw: LatentCoord,
    pub stable: LatentCoord,
    pub smooth: LatentCoord,
    pub regime: Regime,
    /// Mean landmark displacement from the previous frame.
    pub displacement: f64,
    /// The frame could not be featurized; the previous output is repeated.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineState {
    config: PipelineConfig,
    stabilizer: Stabilizer,
    filter: OneEuro,
    previous: Option<InteractionLandmarks>,
    last: Option<PipelineOutput>,
    last_angles: Option<AngleVector>,
}

impl PipelineState {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            stabilizer: Stabilizer::new(config.jump_threshold),
            filter: OneEuro::with_derivative_cutoff(config.regimes.slow, config.derivative_cutoff),
            previous: None,
            last: None,
            last_angles: None,
            config,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn last_output(&self) -> Option<&PipelineOutput> {
        self.last.as_ref()
    }

    /// Angles of the last featurized frame.
    pub fn last_angles(&self) -> Option<&AngleVector> {
        self.last_angles.as_ref()
    }

    /// Toggles the post-processing stages; a re-enabled stabilizer starts fresh.
    pub fn set_stages(&mut self, stable: bool, smooth: bool) {
        if stable && !self.config.stable {
            self.stabilizer.reset();
        }
        self.config.stable = stable;
        self.config.smooth = smooth;
    }

    pub fn step(&mut self, frame: &HandFrame, model: &ModelCheckpoint) -> Result<PipelineOutput> {
        frame.validate()?;
        let nine = frame.interaction_landmarks()?;
        match landmarks_to_angles(&nine) {
            Ok(angles) => self.advance(nine, angles, frame.timestamp_ms, model),
            Err(Error::DegeneratePose(reason)) => self.repeat(frame.timestamp_ms, reason),
            Err(e) => Err(e),
        }
    }

    /// Slider mode: angles arrive directly; displacement is measured on the
    /// reconstructed skeleton at [`NOMINAL_HAND_SCALE`].
    pub fn step_angles(&mut self, angles: &AngleVector, timestamp_ms: i64, model: &ModelCheckpoint) -> Result<PipelineOutput> {
        if !angles.0.iter().all(|a| a.is_finite()) {
            return Err(Error::Input("angles must be finite".into()));
        }
        let skeleton = angles_to_skeleton(angles);
        let nine = skeleton.to_interaction_landmarks().map(|p| p * NOMINAL_HAND_SCALE);
        self.advance(nine, *angles, timestamp_ms, model)
    }

    fn repeat(&mut self, timestamp_ms: i64, reason: String) -> Result<PipelineOutput> {
        let Some(last) = self.last else {
            return Err(Error::DegeneratePose(reason));
        };
        let out = PipelineOutput {
            timestamp_ms,
            degenerate: true,
            displacement: 0.0,
            ..last
        };
        self.last = Some(out);
        Ok(out)
    }

    fn advance(
        &mut self,
        nine: InteractionLandmarks,
        angles: AngleVector,
        timestamp_ms: i64,
        model: &ModelCheckpoint,
    ) -> Result<PipelineOutput> {
        let displacement = match &self.previous {
            Some(prev) => mean_displacement(prev, &nine),
            None => 0.0,
        };
        let (regime, params) = self.config.regimes.select(displacement);

        let raw = model.embed(&angles);
        let stable = if self.config.stable {
            self.stabilizer.stabilize(raw)
        } else {
            self.stabilizer.reset();
            raw
        };
        self.filter.set_params(params);
        let filtered = self.filter.step(stable, timestamp_ms)?;
        let smooth = if self.config.smooth { filtered } else { stable };

        self.previous = Some(nine);
        self.last_angles = Some(angles);
        let out = PipelineOutput {
            timestamp_ms,
            raw,
            stable,
            smooth,
            regime,
            displacement,
            degenerate: false,
        };
        self.last = Some(out);
        Ok(out)
    }
}

fn mean_displacement(a: &InteractionLandmarks, b: &InteractionLandmarks) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q): (&Landmark, &Landmark)| (q - p).norm()).sum::<f64>() / a.len() as f64
}

pub fn pipeline_step(state: &mut PipelineState, frame: &HandFrame, model: &ModelCheckpoint) -> Result<PipelineOutput> {
    state.step(frame, model)
}
