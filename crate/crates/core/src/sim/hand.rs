//! Parametric right-hand model producing MediaPipe-layout landmarks.
//!
//! Each finger is a chain of bones bending about a fixed axis perpendicular to
//! its first bone, so the inter-bone angles of the thumb and index chains are
//! exactly the flexion parameters. The global transform applies pitch, then
//! in-plane roll, then scale and translation into normalized image space.
//!
//! For pinch poses the thumb's last three joints can be blended toward a curve
//! that ends at the index tip plus an aperture offset; at full blend and zero
//! aperture the two tips coincide.

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::pose::{Landmark, LANDMARK_COUNT};

/// Bone lengths in hand units (wrist→first joint first).
const THUMB_BONES: [f64; 4] = [0.25, 0.18, 0.13, 0.11];
const INDEX_BONES: [f64; 4] = [0.42, 0.20, 0.12, 0.10];
const MIDDLE_BONES: [f64; 4] = [0.40, 0.22, 0.14, 0.10];
const RING_BONES: [f64; 4] = [0.38, 0.20, 0.13, 0.10];
const PINKY_BONES: [f64; 4] = [0.35, 0.16, 0.10, 0.09];

/// Mix between bending in the image plane (0) and toward the camera (π/2).
const THUMB_BEND_TILT: f64 = 0.45;
const INDEX_BEND_TILT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPoseParams {
    /// Wrist position in normalized image coordinates.
    pub center: [f64; 2],
    pub depth: f64,
    /// Hand size (length of one hand unit) in normalized image units.
    pub scale: f64,
    /// In-plane rotation; positive turns up toward +x.
    pub roll: f64,
    /// Rotation about the image x axis.
    pub pitch: f64,
    /// Direction of the first thumb/index bone relative to hand-up, in hand frame.
    pub thumb_spread: f64,
    pub index_spread: f64,
    pub thumb_flex: [f64; 3],
    pub index_flex: [f64; 3],
    /// Curl of middle/ring/pinky; not part of the feature.
    pub other_curl: f64,
    /// 0 = free thumb, 1 = thumb tip driven to the index tip.
    pub pinch_blend: f64,
    /// Thumb-tip offset from the index tip when pinching, in hand units.
    pub pinch_aperture: f64,
}

impl Default for HandPoseParams {
    fn default() -> Self {
        Self {
            center: [0.5, 0.65],
            depth: 0.0,
            scale: 0.25,
            roll: 0.0,
            pitch: 0.0,
            thumb_spread: -0.75,
            index_spread: -0.12,
            thumb_flex: [0.35, 0.2, 0.15],
            index_flex: [0.1, 0.1, 0.05],
            other_curl: 0.8,
            pinch_blend: 0.0,
            pinch_aperture: 0.0,
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [lerp(a[0], b[0], t), lerp(a[1], b[1], t), lerp(a[2], b[2], t)]
}

impl HandPoseParams {
    /// Componentwise interpolation; `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        Self {
            center: [
                lerp(self.center[0], other.center[0], t),
                lerp(self.center[1], other.center[1], t),
            ],
            depth: lerp(self.depth, other.depth, t),
            scale: lerp(self.scale, other.scale, t),
            roll: lerp(self.roll, other.roll, t),
            pitch: lerp(self.pitch, other.pitch, t),
            thumb_spread: lerp(self.thumb_spread, other.thumb_spread, t),
            index_spread: lerp(self.index_spread, other.index_spread, t),
            thumb_flex: lerp3(self.thumb_flex, other.thumb_flex, t),
            index_flex: lerp3(self.index_flex, other.index_flex, t),
            other_curl: lerp(self.other_curl, other.other_curl, t),
            pinch_blend: lerp(self.pinch_blend, other.pinch_blend, t),
            pinch_aperture: lerp(self.pinch_aperture, other.pinch_aperture, t),
        }
    }

    /// Same pose, different placement in the sensor field.
    pub fn placed(&self, center: [f64; 2], scale: f64, depth: f64) -> Self {
        Self {
            center,
            scale,
            depth,
            ..*self
        }
    }

    /// The 21 landmarks in normalized sensor coordinates.
    pub fn landmarks(&self) -> Vec<Landmark> {
        let mut local = vec![Vector3::zeros(); LANDMARK_COUNT];
        let thumb = chain(self.thumb_spread, THUMB_BEND_TILT, &THUMB_BONES, &self.thumb_flex, 1.0);
        let index = chain(self.index_spread, INDEX_BEND_TILT, &INDEX_BONES, &self.index_flex, -1.0);
        local[1..5].copy_from_slice(&thumb);
        local[5..9].copy_from_slice(&index);

        if self.pinch_blend > 0.0 {
            let pinch = pinch_thumb(&thumb[0], &index[3], &thumb[3], self.pinch_aperture);
            for k in 1..4 {
                local[1 + k] = thumb[k].lerp(&pinch[k - 1], self.pinch_blend);
            }
        }

        let c = self.other_curl;
        let others: [(f64, &[f64; 4], usize); 3] = [
            (0.08, &MIDDLE_BONES, 9),
            (0.26, &RING_BONES, 13),
            (0.44, &PINKY_BONES, 17),
        ];
        for (spread, bones, start) in others {
            let pts = chain(spread, INDEX_BEND_TILT, bones, &[0.8 * c, 1.2 * c, 0.8 * c], -1.0);
            local[start..start + 4].copy_from_slice(&pts);
        }

        let pitch = Rotation3::from_axis_angle(&Vector3::x_axis(), self.pitch);
        let (s, co) = self.roll.sin_cos();
        local
            .iter()
            .map(|p| {
                let q = pitch * p;
                let (x, y) = (co * q.x - s * q.y, s * q.x + co * q.y);
                Landmark::new(
                    self.center[0] + self.scale * x,
                    self.center[1] + self.scale * y,
                    self.depth + self.scale * q.z,
                )
            })
            .collect()
    }
}

/// Joint positions of one finger in the hand frame (wrist at origin, up = −y).
fn chain(spread: f64, bend_tilt: f64, bones: &[f64; 4], flex: &[f64; 3], sign: f64) -> [Vector3<f64>; 4] {
    let (s, c) = spread.sin_cos();
    let d0 = Vector3::new(s, -c, 0.0);
    let z = Vector3::z();
    let side = d0.cross(&z);
    let axis = Unit::new_normalize(z * bend_tilt.cos() + side * bend_tilt.sin());
    let mut out = [Vector3::zeros(); 4];
    let mut dir = d0;
    let mut pos = Vector3::zeros();
    for k in 0..4 {
        if k > 0 {
            dir = Rotation3::from_axis_angle(&axis, sign * flex[k - 1]) * dir;
        }
        pos += dir * bones[k];
        out[k] = pos;
    }
    out
}

/// Thumb MCP, IP and tip on a bulged quadratic curve from the CMC to the
/// index tip offset by `aperture` toward the free thumb tip.
fn pinch_thumb(
    cmc: &Vector3<f64>,
    index_tip: &Vector3<f64>,
    free_tip: &Vector3<f64>,
    aperture: f64,
) -> [Vector3<f64>; 3] {
    let toward = free_tip - index_tip;
    let offset = if toward.norm() > 1e-12 {
        toward.normalize() * aperture
    } else {
        Vector3::zeros()
    };
    let tip = index_tip + offset;
    let chord = tip - cmc;
    let bulge = Vector3::new(-chord.y, chord.x, 0.0) * 0.25 + Vector3::new(0.0, 0.0, 0.05);
    let ctrl = (cmc + tip) * 0.5 + bulge;
    let bezier = |t: f64| cmc * (1.0 - t) * (1.0 - t) + ctrl * 2.0 * t * (1.0 - t) + tip * t * t;
    [bezier(0.4), bezier(0.72), tip]
}
