//! Synthetic hand-pose corpus: six pose families generated as 30 fps sequences.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::hand::HandPoseParams;
use crate::pose::{frame_to_angles, AngleVector, HandFrame, Landmark};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticPoseFamily {
    PalmSweep,
    DialRotation,
    FingerCircle,
    Pinch,
    DoublePinch,
    Generic,
}

impl SyntheticPoseFamily {
    pub const ALL: [SyntheticPoseFamily; 6] = [
        Self::PalmSweep,
        Self::DialRotation,
        Self::FingerCircle,
        Self::Pinch,
        Self::DoublePinch,
        Self::Generic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::PalmSweep => "palm_sweep",
            Self::DialRotation => "dial_rotation",
            Self::FingerCircle => "finger_circle",
            Self::Pinch => "pinch",
            Self::DoublePinch => "double_pinch",
            Self::Generic => "generic",
        }
    }

    /// Pose at sequence phase `t ∈ [0, 1]`, before placement. `style` holds
    /// per-sequence random factors in `[0, 1)`.
    pub fn pose(&self, t: f64, style: &[f64; 6]) -> HandPoseParams {
        let base = HandPoseParams::default();
        let wiggle = |i: usize, amp: f64| amp * (2.0 * style[i] - 1.0);
        match self {
            Self::PalmSweep => {
                let s = 2.0 * t - 1.0;
                HandPoseParams {
                    roll: 0.35 * s + wiggle(0, 0.05),
                    thumb_spread: -0.8 - 0.25 * (PI * t).sin() + wiggle(1, 0.05),
                    thumb_flex: [0.25, 0.1, 0.1],
                    index_flex: [0.05 + 0.1 * style[2], 0.05, 0.02],
                    other_curl: 0.1,
                    ..base
                }
            }
            Self::DialRotation => HandPoseParams {
                roll: -1.0 + 2.0 * t,
                thumb_spread: -0.6 + wiggle(0, 0.05),
                index_spread: -0.05,
                thumb_flex: [0.55, 0.45, 0.35],
                index_flex: [0.75 + wiggle(1, 0.05), 0.8, 0.4],
                other_curl: 0.9,
                ..base
            },
            Self::FingerCircle => {
                let phase = TAU * t + TAU * style[0];
                HandPoseParams {
                    roll: wiggle(1, 0.1),
                    index_spread: -0.12 + 0.22 * phase.sin(),
                    index_flex: [0.55 + 0.35 * phase.cos(), 0.45 + 0.2 * phase.cos(), 0.25],
                    thumb_flex: [0.6, 0.55, 0.4],
                    thumb_spread: -0.55,
                    other_curl: 1.1,
                    ..base
                }
            }
            Self::Pinch | Self::DoublePinch => {
                let cycles = if *self == Self::Pinch { 1.0 } else { 2.0 };
                let aperture = 0.22 * (0.5 - 0.5 * (TAU * cycles * t).cos());
                let (roll, index_flex) = if *self == Self::Pinch {
                    (0.15 + wiggle(0, 0.05), [0.55, 0.45, 0.25])
                } else {
                    (-0.25 + wiggle(0, 0.05), [0.8, 0.65, 0.35])
                };
                HandPoseParams {
                    roll,
                    thumb_spread: -0.5,
                    thumb_flex: [0.5, 0.3, 0.2],
                    index_flex,
                    pinch_blend: 1.0,
                    pinch_aperture: aperture,
                    other_curl: 1.2,
                    ..base
                }
            }
            Self::Generic => {
                // coupled joint curl, as in natural finger flexion
                let index_curl = style[0];
                let thumb_curl = style[1];
                let drift = 0.15 * (TAU * t).sin();
                HandPoseParams {
                    roll: wiggle(2, 0.5) + drift,
                    thumb_spread: -0.9 + 0.4 * style[3],
                    index_spread: -0.2 + 0.2 * style[4],
                    thumb_flex: [0.2 + 0.4 * thumb_curl, 0.8 * thumb_curl, 0.9 * thumb_curl],
                    index_flex: [
                        (1.2 * index_curl + drift).max(0.0),
                        1.4 * index_curl,
                        0.9 * index_curl,
                    ],
                    other_curl: 0.5 + style[5],
                    ..base
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub palm_sweep: usize,
    pub dial_rotation: usize,
    pub finger_circle: usize,
    pub pinch: usize,
    pub double_pinch: usize,
    pub generic: usize,
    /// Frames per generated movement sequence.
    pub sequence_length: usize,
    /// Std of independent per-coordinate sensor noise, normalized units.
    pub landmark_noise: f64,
    pub frame_rate_hz: f64,
}

impl Default for CorpusConfig {
    /// 50k frames split like the collected corpus (palm sweep 21803, dial 18912,
    /// circle 20974, pinch 9181, double pinch 8980, generic 9781 of 89631).
    fn default() -> Self {
        Self {
            palm_sweep: 12_163,
            dial_rotation: 10_550,
            finger_circle: 11_700,
            pinch: 5_122,
            double_pinch: 5_010,
            generic: 5_455,
            sequence_length: 90,
            landmark_noise: 0.0005,
            frame_rate_hz: 30.0,
        }
    }
}

impl CorpusConfig {
    /// Same family proportions, `total` frames.
    pub fn with_total(total: usize) -> Self {
        let d = Self::default();
        let sum = d.total() as f64;
        let scale = |n: usize| ((n as f64) * total as f64 / sum).round() as usize;
        let mut c = Self {
            palm_sweep: scale(d.palm_sweep),
            dial_rotation: scale(d.dial_rotation),
            finger_circle: scale(d.finger_circle),
            pinch: scale(d.pinch),
            double_pinch: scale(d.double_pinch),
            generic: 0,
            ..d
        };
        c.generic = total.saturating_sub(c.total());
        c
    }

    pub fn total(&self) -> usize {
        self.palm_sweep + self.dial_rotation + self.finger_circle + self.pinch + self.double_pinch + self.generic
    }

    pub fn count(&self, family: SyntheticPoseFamily) -> usize {
        match family {
            SyntheticPoseFamily::PalmSweep => self.palm_sweep,
            SyntheticPoseFamily::DialRotation => self.dial_rotation,
            SyntheticPoseFamily::FingerCircle => self.finger_circle,
            SyntheticPoseFamily::Pinch => self.pinch,
            SyntheticPoseFamily::DoublePinch => self.double_pinch,
            SyntheticPoseFamily::Generic => self.generic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub frame: HandFrame,
    pub family: SyntheticPoseFamily,
    /// Noise-free generating pose (including placement).
    pub params: HandPoseParams,
}

/// Random placement in the sensor field: position, apparent size, depth.
pub fn random_placement<R: Rng + ?Sized>(rng: &mut R) -> ([f64; 2], f64, f64) {
    (
        [rng.random_range(0.35..0.65), rng.random_range(0.55..0.8)],
        rng.random_range(0.2..0.3),
        rng.random_range(-0.05..0.05),
    )
}

pub fn generate_corpus(cfg: &CorpusConfig, seed: u64) -> Vec<SyntheticFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.landmark_noise.max(0.0)).expect("finite std");
    let dt_ms = 1000.0 / cfg.frame_rate_hz;
    let seq_len = cfg.sequence_length.max(2);
    let mut out = Vec::with_capacity(cfg.total());
    for family in SyntheticPoseFamily::ALL {
        let mut remaining = cfg.count(family);
        while remaining > 0 {
            let len = remaining.min(seq_len);
            let style: [f64; 6] = std::array::from_fn(|_| rng.random::<f64>());
            let (center, scale, depth) = random_placement(&mut rng);
            let reverse = rng.random_bool(0.5);
            for k in 0..len {
                let mut t = k as f64 / (seq_len - 1) as f64;
                if reverse {
                    t = 1.0 - t;
                }
                let params = family.pose(t, &style).placed(center, scale, depth);
                let landmarks: Vec<Landmark> = params
                    .landmarks()
                    .into_iter()
                    .map(|p| {
                        if cfg.landmark_noise > 0.0 {
                            p + Landmark::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                        } else {
                            p
                        }
                    })
                    .collect();
                let timestamp_ms = (out.len() as f64 * dt_ms).round() as i64;
                out.push(SyntheticFrame {
                    frame: HandFrame {
                        timestamp_ms,
                        landmarks,
                    },
                    family,
                    params,
                });
            }
            remaining -= len;
        }
    }
    out
}

/// Featurizes every frame; fails on the first degenerate pose.
pub fn corpus_angles(corpus: &[SyntheticFrame]) -> Result<Vec<AngleVector>> {
    corpus.iter().map(|s| frame_to_angles(&s.frame)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_is_fifty_thousand_frames() {
        assert_eq!(CorpusConfig::default().total(), 50_000);
        assert_eq!(CorpusConfig::with_total(5000).total(), 5000);
    }

    #[test]
    fn generation_is_deterministic_and_ordered() {
        let cfg = CorpusConfig::with_total(600);
        let a = generate_corpus(&cfg, 9);
        let b = generate_corpus(&cfg, 9);
        assert_eq!(a, b);
        assert_eq!(a.len(), 600);
        assert!(a.windows(2).all(|w| w[0].frame.timestamp_ms < w[1].frame.timestamp_ms));
        let c = generate_corpus(&cfg, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn closed_pinch_aperture_joins_tips() {
        let p = SyntheticPoseFamily::Pinch.pose(0.0, &[0.5; 6]);
        assert_eq!(p.pinch_aperture, 0.0);
        let lm = p.landmarks();
        assert!((lm[4] - lm[8]).norm() < 1e-12);
    }
}
