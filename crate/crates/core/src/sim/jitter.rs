//! Landmark disturbances of a synthetic user: physiological tremor, sensor
//! noise and detector errors.
//!
//! Tremor is a sum of sinusoids per landmark coordinate with frequencies in
//! the physiological band. A detector error displaces one interaction
//! landmark by a uniform offset for a short burst of frames.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Landmark, INTERACTION_INDICES, LANDMARK_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterModel {
    /// RMS tremor displacement per coordinate, normalized units.
    pub tremor_amplitude: f64,
    pub tremor_band_hz: [f64; 2],
    pub tremor_components: usize,
    /// Probability per frame that a detector error burst starts.
    pub spike_probability: f64,
    /// Half-width of the uniform offset applied to the affected landmark.
    pub spike_magnitude: f64,
    pub spike_max_frames: usize,
    /// Std of white per-coordinate sensor noise.
    pub sensor_noise: f64,
}

impl Default for JitterModel {
    fn default() -> Self {
        Self {
            tremor_amplitude: 0.0015,
            tremor_band_hz: [8.0, 12.0],
            tremor_components: 3,
            spike_probability: 0.02,
            spike_magnitude: 0.3,
            spike_max_frames: 6,
            sensor_noise: 0.0005,
        }
    }
}

impl JitterModel {
    pub fn none() -> Self {
        Self {
            tremor_amplitude: 0.0,
            spike_probability: 0.0,
            spike_magnitude: 0.0,
            sensor_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn without_spikes(self) -> Self {
        Self {
            spike_probability: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let amps = [self.tremor_amplitude, self.spike_magnitude, self.sensor_noise];
        if amps.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Config("jitter amplitudes must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.spike_probability) {
            return Err(Error::Config("spike probability must lie in [0, 1]".into()));
        }
        let [lo, hi] = self.tremor_band_hz;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config("tremor band must satisfy 0 < low <= high".into()));
        }
        if self.tremor_components == 0 || self.spike_max_frames == 0 {
            return Err(Error::Config("tremor components and spike length must be >= 1".into()));
        }
        Ok(())
    }

    /// Draws the per-trial tremor oscillators.
    pub fn start<R: Rng + ?Sized>(&self, rng: &mut R) -> JitterState {
        let k = self.tremor_components;
        let amp = self.tremor_amplitude * (2.0 / k as f64).sqrt();
        let [lo, hi] = self.tremor_band_hz;
        let oscillators = (0..LANDMARK_COUNT * 3 * k)
            .map(|_| Oscillator {
                freq_hz: if hi > lo { rng.random_range(lo..hi) } else { lo },
                phase: rng.random_range(0.0..TAU),
                amplitude: amp,
            })
            .collect();
        JitterState {
            model: *self,
            oscillators,
            spike: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Oscillator {
    freq_hz: f64,
    phase: f64,
    amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Spike {
    landmark: usize,
    frames_left: usize,
}

/// Running disturbance generator for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterState {
    model: JitterModel,
    oscillators: Vec<Oscillator>,
    spike: Option<Spike>,
}

impl JitterState {
    /// Adds the disturbance at time `t_s` to `landmarks`; returns whether a
    /// detector error is active on this frame.
    pub fn apply<R: Rng + ?Sized>(&mut self, landmarks: &mut [Landmark], t_s: f64, rng: &mut R) -> bool {
        let m = &self.model;
        let k = m.tremor_components;
        for (i, p) in landmarks.iter_mut().enumerate() {
            for c in 0..3 {
                let base = (i * 3 + c) * k;
                let tremor: f64 = self.oscillators[base..base + k]
                    .iter()
                    .map(|o| o.amplitude * (TAU * o.freq_hz * t_s + o.phase).sin())
                    .sum();
                p[c] += tremor;
            }
        }
        // draws happen unconditionally so runs stay aligned across configurations
        let noise = Normal::new(0.0, m.sensor_noise).expect("validated std");
        for p in landmarks.iter_mut() {
            for c in 0..3 {
                p[c] += noise.sample(rng);
            }
        }
        let starts = rng.random_bool(m.spike_probability);
        let which = INTERACTION_INDICES[rng.random_range(0..INTERACTION_INDICES.len())];
        let len = rng.random_range(1..=m.spike_max_frames);
        let offset: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0) * m.spike_magnitude);
        if self.spike.is_none() && starts {
            self.spike = Some(Spike {
                landmark: which,
                frames_left: len,
            });
        }
        match self.spike.as_mut() {
            Some(s) => {
                landmarks[s.landmark] += Landmark::new(offset[0], offset[1], offset[2]);
                s.frames_left -= 1;
                if s.frames_left == 0 {
                    self.spike = None;
                }
                true
            }
            None => false,
        }
    }
}
