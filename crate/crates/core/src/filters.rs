//! Post-processing of the embedding stream.
//!
//! [`Stabilizer`] neutralizes mutation points: a step longer than the jump
//! threshold is replaced by the midpoint of the previous output and the new
//! point. [`OneEuro`] is the adaptive low-pass filter of Casiez et al. with
//! `(CF, ST)` mapped to (minimum cutoff, speed coefficient β); the active pair
//! is picked per frame from the real-world landmark displacement by
//! [`RegimeSwitch`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::HandFrame;
use crate::vae::LatentCoord;

pub const DEFAULT_JUMP_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Stabilizer {
    previous: Option<LatentCoord>,
    jump_threshold: f64,
}

impl Default for Stabilizer {
    fn default() -> Self {
        Self::new(DEFAULT_JUMP_THRESHOLD)
    }
}

impl Stabilizer {
    pub fn new(jump_threshold: f64) -> Self {
        assert!(jump_threshold > 0.0, "jump threshold must be positive");
        Self {
            previous: None,
            jump_threshold,
        }
    }

    pub fn previous(&self) -> Option<LatentCoord> {
        self.previous
    }

    pub fn stabilize(&mut self, point: LatentCoord) -> LatentCoord {
        let out = match self.previous {
            Some(prev) if prev.distance(&point) > self.jump_threshold => prev.midpoint(&point),
            _ => point,
        };
        self.previous = Some(out);
        out
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}

/// One `(CF, ST)` pair: minimum cutoff frequency (Hz) and speed coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneEuroParams {
    pub cutoff: f64,
    pub slope: f64,
}

impl OneEuroParams {
    pub const fn new(cutoff: f64, slope: f64) -> Self {
        Self { cutoff, slope }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Fast,
    Slow,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Fast => "fast",
            Regime::Slow => "slow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSwitch {
    pub fast: OneEuroParams,
    pub slow: OneEuroParams,
    pub distance_threshold: f64,
}

impl Default for RegimeSwitch {
    fn default() -> Self {
        Self {
            fast: OneEuroParams::new(0.040, 0.85),
            slow: OneEuroParams::new(0.005, 0.75),
            distance_threshold: 0.015,
        }
    }
}

impl RegimeSwitch {
    /// Displacements above the threshold take the fast pair; the threshold itself is slow.
    pub fn select(&self, displacement: f64) -> (Regime, OneEuroParams) {
        if displacement > self.distance_threshold {
            (Regime::Fast, self.fast)
        } else {
            (Regime::Slow, self.slow)
        }
    }

    pub fn params(&self, regime: Regime) -> OneEuroParams {
        match regime {
            Regime::Fast => self.fast,
            Regime::Slow => self.slow,
        }
    }
}

/// `(CF, ST)` for a displacement under the default switch.
pub fn select_regime(displacement: f64) -> (f64, f64) {
    let (_, p) = RegimeSwitch::default().select(displacement);
    (p.cutoff, p.slope)
}

/// Mean Euclidean displacement of the 9 interaction landmarks between two frames.
pub fn real_world_displacement(prev: &HandFrame, cur: &HandFrame) -> Result<f64> {
    let a = prev.interaction_landmarks()?;
    let b = cur.interaction_landmarks()?;
    Ok(a.iter().zip(b.iter()).map(|(p, q)| (q - p).norm()).sum::<f64>() / a.len() as f64)
}

fn smoothing_factor(cutoff: f64, dt: f64) -> f64 {
    let tau = 1.0 / (2.0 * PI * cutoff);
    1.0 / (1.0 + tau / dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AxisMemory {
    value: f64,
    derivative: f64,
}

/// Two-axis One Euro filter driven by sample timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct OneEuro {
    params: OneEuroParams,
    derivative_cutoff: f64,
    last_ms: Option<i64>,
    axes: [AxisMemory; 2],
}

pub const DEFAULT_DERIVATIVE_CUTOFF: f64 = 1.0;

impl OneEuro {
    pub fn new(params: OneEuroParams) -> Self {
        Self::with_derivative_cutoff(params, DEFAULT_DERIVATIVE_CUTOFF)
    }

    pub fn with_derivative_cutoff(params: OneEuroParams, derivative_cutoff: f64) -> Self {
        assert!(params.cutoff > 0.0 && params.slope >= 0.0, "need CF > 0 and ST >= 0");
        assert!(derivative_cutoff > 0.0);
        Self {
            params,
            derivative_cutoff,
            last_ms: None,
            axes: [AxisMemory {
                value: 0.0,
                derivative: 0.0,
            }; 2],
        }
    }

    pub fn params(&self) -> OneEuroParams {
        self.params
    }

    /// Switches `(CF, ST)` without touching the filter memories.
    pub fn set_params(&mut self, params: OneEuroParams) {
        assert!(params.cutoff > 0.0 && params.slope >= 0.0, "need CF > 0 and ST >= 0");
        self.params = params;
    }

    pub fn reset(&mut self) {
        self.last_ms = None;
    }

    pub fn step(&mut self, point: LatentCoord, timestamp_ms: i64) -> Result<LatentCoord> {
        let input = [point.x, point.y];
        let Some(last) = self.last_ms else {
            self.last_ms = Some(timestamp_ms);
            for (m, x) in self.axes.iter_mut().zip(input) {
                *m = AxisMemory {
                    value: x,
                    derivative: 0.0,
                };
            }
            return Ok(point);
        };
        if timestamp_ms <= last {
            return Err(Error::Input(format!(
                "timestamp {timestamp_ms} ms does not follow {last} ms"
            )));
        }
        let dt = (timestamp_ms - last) as f64 / 1000.0;
        self.last_ms = Some(timestamp_ms);
        let alpha_d = smoothing_factor(self.derivative_cutoff, dt);
        let mut out = [0.0; 2];
        for ((m, x), o) in self.axes.iter_mut().zip(input).zip(out.iter_mut()) {
            let dx = (x - m.value) / dt;
            m.derivative = alpha_d * dx + (1.0 - alpha_d) * m.derivative;
            let cutoff = self.params.cutoff + self.params.slope * m.derivative.abs();
            let alpha = smoothing_factor(cutoff, dt);
            m.value = alpha * x + (1.0 - alpha) * m.value;
            *o = m.value;
        }
        Ok(LatentCoord::new(out[0], out[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_point_becomes_midpoint() {
        let mut s = Stabilizer::default();
        assert_eq!(s.stabilize(LatentCoord::new(0.2, 0.2)), LatentCoord::new(0.2, 0.2));
        let out = s.stabilize(LatentCoord::new(0.5, 0.6));
        assert!((out.x - 0.35).abs() < 1e-15 && (out.y - 0.40).abs() < 1e-15);
    }

    #[test]
    fn small_step_passes_through() {
        let mut s = Stabilizer::default();
        s.stabilize(LatentCoord::new(0.2, 0.2));
        assert_eq!(s.stabilize(LatentCoord::new(0.25, 0.2)), LatentCoord::new(0.25, 0.2));
    }

    #[test]
    fn first_point_passes_through() {
        let mut s = Stabilizer::default();
        assert_eq!(s.stabilize(LatentCoord::new(0.7, 0.3)), LatentCoord::new(0.7, 0.3));
    }

    #[test]
    fn regime_table() {
        assert_eq!(select_regime(0.02), (0.040, 0.85));
        assert_eq!(select_regime(0.010), (0.005, 0.75));
        assert_eq!(select_regime(0.015), (0.005, 0.75));
    }

    #[test]
    fn rejects_non_monotone_time() {
        let mut f = OneEuro::new(OneEuroParams::new(1.0, 0.0));
        f.step(LatentCoord::new(0.1, 0.1), 100).unwrap();
        assert!(f.step(LatentCoord::new(0.1, 0.1), 100).is_err());
        assert!(f.step(LatentCoord::new(0.1, 0.1), 50).is_err());
    }

    #[test]
    fn regime_change_keeps_memory() {
        let mut a = OneEuro::new(RegimeSwitch::default().slow);
        let mut b = a.clone();
        a.step(LatentCoord::new(0.2, 0.2), 0).unwrap();
        b.step(LatentCoord::new(0.2, 0.2), 0).unwrap();
        b.set_params(RegimeSwitch::default().fast);
        let fa = a.step(LatentCoord::new(0.3, 0.3), 33).unwrap();
        let fb = b.step(LatentCoord::new(0.3, 0.3), 33).unwrap();
        // both continue from the same memory; the fast pair moves further
        assert!(fb.x > fa.x && fa.x > 0.2);
    }
}
