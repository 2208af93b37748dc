//! Hand landmarks to joint-angle features, and back to a planar skeleton.
//!
//! Only the wrist and the thumb and index chains take part in the feature
//! (MediaPipe indices 0..=8). Each inter-bone angle is the rotation magnitude
//! of the shortest-arc quaternion taking the parent bone onto the child bone,
//! which makes the feature independent of hand position and hand size. The two
//! root angles keep the in-plane orientation of the first bones against the
//! camera "up" axis so global hand rotation (the dial pose) stays observable.

use nalgebra::{Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Landmark = Vector3<f64>;

/// MediaPipe hand landmark layout.
pub const LANDMARK_COUNT: usize = 21;

pub mod landmarks {
    pub const WRIST: usize = 0;
    pub const THUMB_CMC: usize = 1;
    pub const THUMB_MCP: usize = 2;
    pub const THUMB_IP: usize = 3;
    pub const THUMB_TIP: usize = 4;
    pub const INDEX_MCP: usize = 5;
    pub const INDEX_PIP: usize = 6;
    pub const INDEX_DIP: usize = 7;
    pub const INDEX_TIP: usize = 8;
}

/// Indices of the wrist anchor, thumb chain and index chain, in feature order.
pub const INTERACTION_INDICES: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];

pub type InteractionLandmarks = [Landmark; 9];

pub const ANGLE_COUNT: usize = 8;

/// Display bone lengths in hand-scale units, CMC→tip and MCP→tip.
pub const THUMB_BONE_LENGTHS: [f64; 4] = [0.30, 0.18, 0.12, 0.10];
pub const INDEX_BONE_LENGTHS: [f64; 4] = [0.35, 0.15, 0.10, 0.08];

/// Bones shorter than this are treated as coincident joints.
pub const MIN_BONE_LENGTH: f64 = 1e-9;

/// One timestamped sensor sample of 21 landmarks in normalized sensor coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HandFrame {
    pub timestamp_ms: i64,
    pub landmarks: Vec<Landmark>,
}

impl HandFrame {
    pub fn new(timestamp_ms: i64, landmarks: Vec<Landmark>) -> Result<Self> {
        let frame = Self {
            timestamp_ms,
            landmarks,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.landmarks.len() != LANDMARK_COUNT {
            return Err(Error::Input(format!(
                "expected {LANDMARK_COUNT} landmarks, got {}",
                self.landmarks.len()
            )));
        }
        if let Some(i) = self
            .landmarks
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Input(format!("landmark {i} is not finite")));
        }
        Ok(())
    }

    pub fn interaction_landmarks(&self) -> Result<InteractionLandmarks> {
        select_interaction_landmarks(&self.landmarks)
    }
}

/// The 8 joint angles in radians, ordered
/// `[root_thumb, thumb_1, thumb_2, thumb_3, root_index, index_1, index_2, index_3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleVector(pub [f64; ANGLE_COUNT]);

impl AngleVector {
    pub const THUMB_ROOT: usize = 0;
    pub const INDEX_ROOT: usize = 4;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_root(i: usize) -> bool {
        i == Self::THUMB_ROOT || i == Self::INDEX_ROOT
    }

    /// Checks the angle ranges: roots in (−π, π], inter-bone angles in [0, π].
    pub fn validate(&self) -> Result<()> {
        for (i, &a) in self.0.iter().enumerate() {
            let ok = if Self::is_root(i) {
                a > -std::f64::consts::PI && a <= std::f64::consts::PI
            } else {
                (0.0..=std::f64::consts::PI).contains(&a)
            };
            if !ok {
                return Err(Error::Input(format!("angle {i} out of range: {a}")));
            }
        }
        Ok(())
    }

    pub fn mean_squared_error(&self, other: &AngleVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / ANGLE_COUNT as f64
    }
}

/// Planar joint positions: wrist, thumb CMC..tip, index MCP..tip.
/// Image-style axes: +x right, +y down, "up" is −y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPose2D {
    pub joints: [[f64; 2]; 9],
}

impl SkeletonPose2D {
    pub fn bone_lengths(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        let j = &self.joints;
        let chains = [[0, 1, 2, 3, 4], [0, 5, 6, 7, 8]];
        for (c, chain) in chains.iter().enumerate() {
            for k in 0..4 {
                let (a, b) = (j[chain[k]], j[chain[k + 1]]);
                out[c * 4 + k] = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            }
        }
        out
    }

    /// Lifts the skeleton into the landmark layout (z = 0) so it can be featurized.
    pub fn to_interaction_landmarks(&self) -> InteractionLandmarks {
        let mut out = [Landmark::zeros(); 9];
        for (o, j) in out.iter_mut().zip(self.joints.iter()) {
            *o = Landmark::new(j[0], j[1], 0.0);
        }
        out
    }
}

pub fn select_interaction_landmarks(landmarks: &[Landmark]) -> Result<InteractionLandmarks> {
    if landmarks.len() != LANDMARK_COUNT {
        return Err(Error::Input(format!(
            "expected {LANDMARK_COUNT} landmarks, got {}",
            landmarks.len()
        )));
    }
    Ok(INTERACTION_INDICES.map(|i| landmarks[i]))
}

/// Rotation magnitude of the shortest-arc quaternion taking `from` onto `to`.
///
/// The quaternion `(|a||b| + a·b, a×b)` rotates `a` onto `b` by twice its half
/// angle, so `θ = 2·atan2(‖v‖, w)`. Antiparallel bones have `w = ‖v‖ = 0` and
/// are mapped to π explicitly.
pub fn rotation_angle_between(from: &Vector3<f64>, to: &Vector3<f64>) -> f64 {
    let q = Quaternion::from_parts(from.norm() * to.norm() + from.dot(to), from.cross(to));
    let (w, v) = (q.scalar(), q.vector().norm());
    let scale = from.norm() * to.norm();
    if v <= 1e-15 * scale && w <= 1e-15 * scale {
        return std::f64::consts::PI;
    }
    2.0 * v.atan2(w)
}

/// Signed in-plane angle of a bone against the camera up axis (−y), in (−π, π].
/// Positive angles turn from up toward +x.
pub fn root_angle(bone: &Vector3<f64>) -> Result<f64> {
    let planar = (bone.x * bone.x + bone.y * bone.y).sqrt();
    if planar < MIN_BONE_LENGTH {
        return Err(Error::DegeneratePose(
            "root bone is parallel to the camera axis".into(),
        ));
    }
    let a = bone.x.atan2(-bone.y);
    Ok(if a <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    })
}

pub fn landmarks_to_angles(nine: &InteractionLandmarks) -> Result<AngleVector> {
    if let Some(i) = nine.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::Input(format!("landmark {i} is not finite")));
    }
    let mut out = [0.0; ANGLE_COUNT];
    for (chain_idx, chain) in [[0usize, 1, 2, 3, 4], [0, 5, 6, 7, 8]].iter().enumerate() {
        let mut bones = [Vector3::zeros(); 4];
        for k in 0..4 {
            let b = nine[chain[k + 1]] - nine[chain[k]];
            if b.norm() <= MIN_BONE_LENGTH {
                return Err(Error::DegeneratePose(format!(
                    "landmarks {} and {} coincide",
                    chain[k],
                    chain[k + 1]
                )));
            }
            bones[k] = b;
        }
        let base = chain_idx * 4;
        out[base] = root_angle(&bones[0])?;
        for k in 1..4 {
            out[base + k] = rotation_angle_between(&bones[k - 1], &bones[k]);
        }
    }
    Ok(AngleVector(out))
}

pub fn frame_to_angles(frame: &HandFrame) -> Result<AngleVector> {
    landmarks_to_angles(&frame.interaction_landmarks()?)
}

/// Rotates a direction in the image plane; positive `phi` turns up (−y) toward +x.
fn rotate2(v: [f64; 2], phi: f64) -> [f64; 2] {
    let (s, c) = phi.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Rotates a landmark about the camera axis through `center`, in the image plane.
pub fn rotate_in_plane(p: &Landmark, center: &Landmark, phi: f64) -> Landmark {
    let r = rotate2([p.x - center.x, p.y - center.y], phi);
    Landmark::new(center.x + r[0], center.y + r[1], p.z)
}

/// Thumb bends clockwise on screen (+), index counter-clockwise (−).
const THUMB_BEND_SIGN: f64 = 1.0;
const INDEX_BEND_SIGN: f64 = -1.0;

/// Planar forward kinematics with canonical bone lengths, wrist at the origin.
pub fn angles_to_skeleton(angles: &AngleVector) -> SkeletonPose2D {
    let a = &angles.0;
    let up = [0.0, -1.0];
    let mut joints = [[0.0; 2]; 9];
    let chains: [(usize, f64, &[f64; 4]); 2] = [
        (0, THUMB_BEND_SIGN, &THUMB_BONE_LENGTHS),
        (4, INDEX_BEND_SIGN, &INDEX_BONE_LENGTHS),
    ];
    for (base, sign, lengths) in chains {
        let mut dir = rotate2(up, a[base]);
        let mut pos = [0.0, 0.0];
        for k in 0..4 {
            if k > 0 {
                dir = rotate2(dir, sign * a[base + k]);
            }
            pos = [pos[0] + lengths[k] * dir[0], pos[1] + lengths[k] * dir[1]];
            joints[base + k + 1] = pos;
        }
    }
    SkeletonPose2D { joints }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn straight_hand() -> InteractionLandmarks {
        let mut p = [Landmark::zeros(); 9];
        for k in 1..=4 {
            p[k] = Landmark::new(-0.1 * k as f64, -0.1 * k as f64, 0.0);
            p[4 + k] = Landmark::new(0.0, -0.1 * k as f64, 0.0);
        }
        p
    }

    fn frame_with(n: usize) -> Vec<Landmark> {
        (0..n)
            .map(|i| Landmark::new(0.5 + 0.01 * i as f64, 0.5 - 0.02 * i as f64, 0.0))
            .collect()
    }

    #[test]
    fn selection_keeps_wrist_and_order() {
        let lm = frame_with(21);
        let nine = select_interaction_landmarks(&lm).unwrap();
        assert_eq!(nine[0], Landmark::new(0.5, 0.5, 0.0));
        for (k, p) in nine.iter().enumerate() {
            assert_eq!(*p, lm[k]);
        }
    }

    #[test]
    fn other_fingers_do_not_matter() {
        let mut lm = frame_with(21);
        let before = select_interaction_landmarks(&lm).unwrap();
        for p in lm.iter_mut().skip(9) {
            *p = Landmark::new(0.9, 0.1, 0.3);
        }
        assert_eq!(before, select_interaction_landmarks(&lm).unwrap());
    }

    #[test]
    fn twenty_landmarks_is_an_input_error() {
        assert!(matches!(
            select_interaction_landmarks(&frame_with(20)),
            Err(Error::Input(_))
        ));
        assert!(HandFrame::new(0, frame_with(20)).is_err());
    }

    #[test]
    fn straight_finger_has_zero_bend() {
        let a = landmarks_to_angles(&straight_hand()).unwrap();
        for k in [1, 2, 3, 5, 6, 7] {
            assert!(a.0[k].abs() < 1e-12, "angle {k} = {}", a.0[k]);
        }
        assert!((a.0[0] + PI / 4.0).abs() < 1e-12);
        assert!(a.0[4].abs() < 1e-12);
    }

    #[test]
    fn perpendicular_thumb_bone() {
        let mut p = straight_hand();
        // b01 points up-left, b12 turns a right angle
        p[2] = p[1] + Landmark::new(0.1, -0.1, 0.0);
        p[3] = p[2] + Landmark::new(0.1, -0.1, 0.0);
        p[4] = p[3] + Landmark::new(0.1, -0.1, 0.0);
        let a = landmarks_to_angles(&p).unwrap();
        assert!((a.0[1] - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn antiparallel_bone_is_pi() {
        let a = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(rotation_angle_between(&a, &(-a)), PI);
    }

    #[test]
    fn coincident_joints_are_degenerate() {
        let mut p = straight_hand();
        p[7] = p[6];
        assert!(matches!(
            landmarks_to_angles(&p),
            Err(Error::DegeneratePose(_))
        ));
    }

    #[test]
    fn zero_angles_give_straight_chains() {
        let s = angles_to_skeleton(&AngleVector([0.0; 8]));
        for j in s.joints {
            assert!(j[0].abs() < 1e-15);
            assert!(j[1] <= 0.0);
        }
        assert!((s.joints[4][1] + 0.70).abs() < 1e-12);
        assert!((s.joints[8][1] + 0.68).abs() < 1e-12);
    }

    #[test]
    fn skeleton_has_canonical_bone_lengths() {
        let s = angles_to_skeleton(&AngleVector([0.3, 0.5, 1.0, 2.0, -0.4, 0.1, 3.0, 0.7]));
        let lengths = s.bone_lengths();
        for k in 0..4 {
            assert!((lengths[k] - THUMB_BONE_LENGTHS[k]).abs() < 1e-9);
            assert!((lengths[4 + k] - INDEX_BONE_LENGTHS[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn root_angle_range_is_half_open() {
        assert_eq!(root_angle(&Vector3::new(0.0, 1.0, 0.0)).unwrap(), PI);
        assert_eq!(root_angle(&Vector3::new(-0.0, 1.0, 0.0)).unwrap(), PI);
        assert!(root_angle(&Vector3::new(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn angle_vector_validation() {
        assert!(AngleVector([0.0; 8]).validate().is_ok());
        assert!(AngleVector([-PI, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .validate()
            .is_err());
        assert!(AngleVector([0.0, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .validate()
            .is_err());
    }
}
