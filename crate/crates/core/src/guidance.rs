//! The guidance window: decoded neighbour poses around the current position
//! and fixed poses at the edges of the plane.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::pose::{angles_to_skeleton, AngleVector, SkeletonPose2D};
use crate::vae::{LatentCoord, LatentPosterior, ModelCheckpoint};

pub const DEFAULT_NEIGHBOR_SAMPLES: usize = 20;

/// Corners and edge midpoints of the unit square, counter-clockwise from the origin.
pub const EDGE_ANCHORS: [LatentCoord; 8] = [
    LatentCoord::new(0.0, 0.0),
    LatentCoord::new(0.5, 0.0),
    LatentCoord::new(1.0, 0.0),
    LatentCoord::new(1.0, 0.5),
    LatentCoord::new(1.0, 1.0),
    LatentCoord::new(0.5, 1.0),
    LatentCoord::new(0.0, 1.0),
    LatentCoord::new(0.0, 0.5),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Self::PosX, Self::NegX, Self::PosY, Self::NegY];

    /// Signed displacement of `p` from `center` along this direction.
    pub fn reach(&self, p: &LatentCoord, center: &LatentCoord) -> f64 {
        match self {
            Self::PosX => p.x - center.x,
            Self::NegX => center.x - p.x,
            Self::PosY => p.y - center.y,
            Self::NegY => center.y - p.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalChoice {
    pub direction: Direction,
    pub latent: LatentCoord,
    /// No sample fell in the half-plane; the latent was placed one σ from the center.
    pub synthesized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalPose {
    pub direction: Direction,
    pub latent: LatentCoord,
    pub synthesized: bool,
    pub angles: AngleVector,
    pub skeleton: SkeletonPose2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPose {
    pub position: LatentCoord,
    pub angles: AngleVector,
    pub skeleton: SkeletonPose2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSet {
    pub center: LatentCoord,
    pub directional: Vec<DirectionalPose>,
    pub edge_anchors: Vec<AnchorPose>,
}

/// Posterior σ expressed in normalized-plane units.
pub fn normalized_sigma(posterior: &LatentPosterior, model: &ModelCheckpoint) -> [f64; 2] {
    let a = &model.latent_affine.axes;
    [posterior.sigma[0] * a[0].scale, posterior.sigma[1] * a[1].scale]
}

/// `count` draws from the posterior, mapped onto the normalized plane and clamped.
pub fn sample_neighbors(posterior: &LatentPosterior, model: &ModelCheckpoint, count: usize, seed: u64) -> Vec<LatentCoord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let z: [f64; 2] = std::array::from_fn(|d| {
                let e: f64 = StandardNormal.sample(&mut rng);
                posterior.mu[d] + posterior.sigma[d] * e
            });
            model.normalize(&z)
        })
        .collect()
}

/// For each direction, the sample reaching furthest from `center` inside the
/// open half-plane (ties to the earlier sample). An empty half-plane yields
/// `center` moved by `sigma` along the axis, clamped, and flagged.
pub fn pick_directional(samples: &[LatentCoord], center: &LatentCoord, sigma: [f64; 2]) -> [DirectionalChoice; 4] {
    Direction::ALL.map(|direction| {
        let best = samples
            .iter()
            .map(|s| (direction.reach(s, center), s))
            .filter(|(r, _)| *r > 0.0)
            .fold(None::<(f64, &LatentCoord)>, |acc, cur| match acc {
                Some(a) if a.0 >= cur.0 => Some(a),
                _ => Some(cur),
            });
        match best {
            Some((_, s)) => DirectionalChoice {
                direction,
                latent: *s,
                synthesized: false,
            },
            None => {
                let latent = match direction {
                    Direction::PosX => LatentCoord::new(center.x + sigma[0], center.y),
                    Direction::NegX => LatentCoord::new(center.x - sigma[0], center.y),
                    Direction::PosY => LatentCoord::new(center.x, center.y + sigma[1]),
                    Direction::NegY => LatentCoord::new(center.x, center.y - sigma[1]),
                }
                .clamped();
                DirectionalChoice {
                    direction,
                    latent,
                    synthesized: true,
                }
            }
        }
    })
}

pub fn decode_anchors(model: &ModelCheckpoint) -> Vec<AnchorPose> {
    EDGE_ANCHORS
        .iter()
        .map(|&position| {
            let angles = model.decode(&position);
            AnchorPose {
                position,
                angles,
                skeleton: angles_to_skeleton(&angles),
            }
        })
        .collect()
}

/// Builds guidance sets for one checkpoint; edge anchors are decoded on first use.
#[derive(Debug)]
pub struct GuidanceBuilder {
    model: Arc<ModelCheckpoint>,
    anchors: OnceLock<Vec<AnchorPose>>,
    samples: usize,
}

impl GuidanceBuilder {
    pub fn new(model: Arc<ModelCheckpoint>) -> Self {
        Self {
            model,
            anchors: OnceLock::new(),
            samples: DEFAULT_NEIGHBOR_SAMPLES,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn model(&self) -> &Arc<ModelCheckpoint> {
        &self.model
    }

    pub fn edge_anchors(&self) -> &[AnchorPose] {
        self.anchors.get_or_init(|| decode_anchors(&self.model))
    }

    pub fn build(&self, posterior: &LatentPosterior, seed: u64) -> GuidanceSet {
        let model = &self.model;
        let center = model.normalize(&posterior.mu);
        let samples = sample_neighbors(posterior, model, self.samples, seed);
        let directional = pick_directional(&samples, &center, normalized_sigma(posterior, model))
            .iter()
            .map(|c| {
                let angles = model.decode(&c.latent);
                DirectionalPose {
                    direction: c.direction,
                    latent: c.latent,
                    synthesized: c.synthesized,
                    angles,
                    skeleton: angles_to_skeleton(&angles),
                }
            })
            .collect();
        GuidanceSet {
            center,
            directional,
            edge_anchors: self.edge_anchors().to_vec(),
        }
    }
}

/// One-shot guidance without a cache.
pub fn build_guidance(posterior: &LatentPosterior, model: &ModelCheckpoint, seed: u64) -> GuidanceSet {
    GuidanceBuilder::new(Arc::new(model.clone())).build(posterior, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{INDEX_BONE_LENGTHS, THUMB_BONE_LENGTHS};
    use crate::vae::DEFAULT_HIDDEN;

    fn model() -> ModelCheckpoint {
        ModelCheckpoint::untrained(&DEFAULT_HIDDEN, 3)
    }

    #[test]
    fn zero_sigma_samples_collapse_to_center() {
        let m = model();
        let p = LatentPosterior {
            mu: [0.2, -0.4],
            sigma: [0.0, 0.0],
        };
        let center = m.normalize(&p.mu);
        assert!(sample_neighbors(&p, &m, 20, 1).iter().all(|s| *s == center));
    }

    #[test]
    fn axis_samples_are_picked_exactly() {
        let c = LatentCoord::new(0.5, 0.5);
        let samples = [
            LatentCoord::new(0.6, 0.5),
            LatentCoord::new(0.4, 0.5),
            LatentCoord::new(0.5, 0.6),
            LatentCoord::new(0.5, 0.4),
        ];
        let picked = pick_directional(&samples, &c, [0.1, 0.1]);
        for (p, s) in picked.iter().zip(samples.iter()) {
            assert_eq!(p.latent, *s);
            assert!(!p.synthesized);
        }
    }

    #[test]
    fn empty_half_plane_is_synthesized() {
        let c = LatentCoord::new(0.5, 0.5);
        let samples = [LatentCoord::new(0.7, 0.6), LatentCoord::new(0.6, 0.4)];
        let picked = pick_directional(&samples, &c, [0.05, 0.02]);
        assert_eq!(picked[0].latent, LatentCoord::new(0.7, 0.6));
        assert!(picked[1].synthesized);
        assert_eq!(picked[1].latent, LatentCoord::new(0.45, 0.5));
        assert!(!picked[2].synthesized && !picked[3].synthesized);
    }

    #[test]
    fn synthesized_entry_is_clamped() {
        let c = LatentCoord::new(0.0, 1.0);
        let picked = pick_directional(&[c], &c, [0.2, 0.2]);
        assert_eq!(picked[1].latent, LatentCoord::new(0.0, 1.0));
        assert!(picked.iter().all(|p| p.synthesized));
    }

    #[test]
    fn anchors_are_cached_and_deterministic() {
        let m = model();
        let b = GuidanceBuilder::new(Arc::new(m.clone()));
        let first = b.edge_anchors().as_ptr();
        let p = m.encode(&AngleVector([0.2, 0.3, 0.2, 0.1, 0.1, 0.2, 0.3, 0.1]));
        let g1 = b.build(&p, 5);
        assert_eq!(b.edge_anchors().as_ptr(), first);
        let g2 = build_guidance(&p, &m, 5);
        assert_eq!(g1, g2);
        assert_eq!(g1.edge_anchors.len(), 8);
        assert_eq!(g1.directional.len(), 4);
    }

    #[test]
    fn guidance_skeletons_have_canonical_bones() {
        let m = model();
        let p = m.encode(&AngleVector([-0.5, 0.3, 0.2, 0.1, 0.05, 0.2, 0.3, 0.1]));
        let g = build_guidance(&p, &m, 9);
        let expected: Vec<f64> = THUMB_BONE_LENGTHS.iter().chain(INDEX_BONE_LENGTHS.iter()).copied().collect();
        let skeletons = g
            .directional
            .iter()
            .map(|d| d.skeleton)
            .chain(g.edge_anchors.iter().map(|a| a.skeleton));
        for s in skeletons {
            for (got, want) in s.bone_lengths().iter().zip(expected.iter()) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
}
