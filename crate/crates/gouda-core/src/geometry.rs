//! Viewing-angle arithmetic and yaw estimation from 3D keypoints.
//!
//! Keypoints are camera-frame meters: x right, y up, z away from the camera.
//! Yaw 0 means the subject faces the camera; yaw increases clockwise when
//! viewed from above, so a rotation of the keypoints by θ about the vertical
//! axis adds θ to the estimated yaw.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GoudaError, Result};

/// A viewing angle in degrees, always reduced into `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ViewAngle(f64);

impl ViewAngle {
    pub fn new(degrees: f64) -> Self {
        debug_assert!(degrees.is_finite(), "view angle must be finite");
        let mut d = degrees.rem_euclid(360.0);
        // rem_euclid of a tiny negative input can round up to exactly 360.0
        if d >= 360.0 {
            d = 0.0;
        }
        ViewAngle(d)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }
}

impl fmt::Display for ViewAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for ViewAngle {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ViewAngle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(deserializer).map(ViewAngle::new)
    }
}

/// How view differences are measured.
///
/// `Axial` folds angles modulo 180 first, for data where silhouettes make a
/// subject walking at v indistinguishable from one walking at v + 180.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleMode {
    Full,
    Axial,
}

impl FromStr for AngleMode {
    type Err = GoudaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(AngleMode::Full),
            "axial" => Ok(AngleMode::Axial),
            other => Err(GoudaError::InvalidConfig(format!(
                "angle_mode must be `full` or `axial`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for AngleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AngleMode::Full => write!(f, "full"),
            AngleMode::Axial => write!(f, "axial"),
        }
    }
}

/// Circular distance between two viewing angles, in degrees.
///
/// `Full` mode wraps around 360 and lands in `[0, 180]`; `Axial` mode folds
/// both inputs modulo 180 first and lands in `[0, 90]`.
pub fn circular_view_distance(v1: ViewAngle, v2: ViewAngle, mode: AngleMode) -> f64 {
    match mode {
        AngleMode::Full => {
            let delta = (v1.degrees() - v2.degrees()).abs();
            delta.min(360.0 - delta)
        }
        AngleMode::Axial => {
            let a = v1.degrees() % 180.0;
            let b = v2.degrees() % 180.0;
            let delta = (a - b).abs();
            delta.min(180.0 - delta)
        }
    }
}

/// One frame of 3D pose keypoints. Only the hip and shoulder pairs matter
/// for yaw; any other joints a source format carries are dropped on load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointFrame {
    pub left_hip: [f64; 3],
    pub right_hip: [f64; 3],
    pub left_shoulder: [f64; 3],
    pub right_shoulder: [f64; 3],
}

impl KeypointFrame {
    /// Apply `f` to every joint; handy for building rotated/translated poses.
    pub fn transformed(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> KeypointFrame {
        KeypointFrame {
            left_hip: f(self.left_hip),
            right_hip: f(self.right_hip),
            left_shoulder: f(self.left_shoulder),
            right_shoulder: f(self.right_shoulder),
        }
    }
}

/// Rotate `p` by `degrees` about the vertical axis through `center`,
/// clockwise viewed from above — the same sense in which yaw increases.
pub fn rotate_about_vertical(p: [f64; 3], degrees: f64, center: [f64; 3]) -> [f64; 3] {
    let (s, c) = degrees.to_radians().sin_cos();
    let x = p[0] - center[0];
    let z = p[2] - center[2];
    [center[0] + x * c + z * s, p[1], center[2] - x * s + z * c]
}

/// Estimate the yaw (viewing angle) of a walking sequence from its keypoints.
///
/// The per-coordinate median over frames gives a robust pose; hips and
/// shoulders each yield a facing vector (the right→left joint vector rotated
/// +90° about the vertical axis), and the two yaws are combined by circular
/// mean. Yaw = atan2(f_x, f_z) mapped into `[0, 360)`.
pub fn estimate_yaw(frames: &[KeypointFrame]) -> Result<ViewAngle> {
    if frames.is_empty() {
        return Err(GoudaError::EmptyInput("keypoint frames"));
    }
    let left_hip = median_point(frames, |f| f.left_hip);
    let right_hip = median_point(frames, |f| f.right_hip);
    let left_shoulder = median_point(frames, |f| f.left_shoulder);
    let right_shoulder = median_point(frames, |f| f.right_shoulder);

    let hip_yaw = pair_yaw(left_hip, right_hip, "hip")?;
    let shoulder_yaw = pair_yaw(left_shoulder, right_shoulder, "shoulder")?;

    let h = hip_yaw.to_radians();
    let s = shoulder_yaw.to_radians();
    let mean = (h.sin() + s.sin()).atan2(h.cos() + s.cos());
    Ok(ViewAngle::new(mean.to_degrees()))
}

/// Yaw of the facing vector derived from one right→left joint pair.
fn pair_yaw(left: [f64; 3], right: [f64; 3], which: &str) -> Result<f64> {
    let rx = left[0] - right[0];
    let rz = left[2] - right[2];
    if !rx.is_finite() || !rz.is_finite() {
        return Err(GoudaError::DegenerateKeypoints(format!(
            "non-finite {which} coordinates"
        )));
    }
    if rx.hypot(rz) < 1e-12 {
        return Err(GoudaError::DegenerateKeypoints(format!(
            "{which} pair coincides in ground-plane projection"
        )));
    }
    // right→left rotated +90° about the vertical axis: (x, z) -> (-z, x)
    let fx = -rz;
    let fz = rx;
    Ok(fx.atan2(fz).to_degrees())
}

fn median_point(frames: &[KeypointFrame], joint: impl Fn(&KeypointFrame) -> [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    let mut values = Vec::with_capacity(frames.len());
    for (k, slot) in out.iter_mut().enumerate() {
        values.clear();
        values.extend(frames.iter().map(|f| joint(f)[k]));
        *slot = median(&mut values);
    }
    out
}

/// Median; for an even count, the mean of the two central values.
fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn facing_camera() -> KeypointFrame {
        KeypointFrame {
            left_hip: [0.1, 0.0, 2.0],
            right_hip: [-0.1, 0.0, 2.0],
            left_shoulder: [0.12, 0.5, 2.0],
            right_shoulder: [-0.12, 0.5, 2.0],
        }
    }

    #[test]
    fn view_angle_wraps_into_range() {
        assert_eq!(ViewAngle::new(360.0).degrees(), 0.0);
        assert_eq!(ViewAngle::new(-10.0).degrees(), 350.0);
        assert_eq!(ViewAngle::new(725.0).degrees(), 5.0);
        let tiny = ViewAngle::new(-1e-18).degrees();
        assert!((0.0..360.0).contains(&tiny));
    }

    #[test]
    fn distance_wraps_around() {
        let d = circular_view_distance(ViewAngle::new(350.0), ViewAngle::new(10.0), AngleMode::Full);
        assert_eq!(d, 20.0);
    }

    #[test]
    fn axial_folds_front_back() {
        let d = circular_view_distance(ViewAngle::new(0.0), ViewAngle::new(180.0), AngleMode::Axial);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn direct_difference() {
        let d = circular_view_distance(ViewAngle::new(90.0), ViewAngle::new(120.0), AngleMode::Full);
        assert_eq!(d, 30.0);
    }

    #[test]
    fn facing_camera_is_yaw_zero() {
        let yaw = estimate_yaw(&[facing_camera()]).unwrap();
        assert_abs_diff_eq!(yaw.degrees(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotating_the_pose_rotates_the_yaw() {
        let center = [0.0, 0.0, 2.0];
        let rotated = facing_camera().transformed(|p| rotate_about_vertical(p, 90.0, center));
        let yaw = estimate_yaw(&[rotated]).unwrap();
        assert_abs_diff_eq!(yaw.degrees(), 90.0, epsilon = 1e-9);
    }

    #[test]
    fn median_discards_single_frame_outlier() {
        let mut outlier = facing_camera();
        outlier.left_hip[0] += 10.0;
        let yaw = estimate_yaw(&[facing_camera(), outlier, facing_camera()]).unwrap();
        assert_abs_diff_eq!(yaw.degrees(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn even_frame_count_averages_central_values() {
        // Poses at yaw 10 and yaw 20 with hips/shoulders consistent; the
        // median pose is their midpoint, whose yaw is 15 by symmetry.
        let center = [0.0, 0.0, 2.0];
        let a = facing_camera().transformed(|p| rotate_about_vertical(p, 10.0, center));
        let b = facing_camera().transformed(|p| rotate_about_vertical(p, 20.0, center));
        let yaw = estimate_yaw(&[a, b]).unwrap();
        assert_abs_diff_eq!(yaw.degrees(), 15.0, epsilon = 1e-6);
    }

    #[test]
    fn coincident_hips_are_degenerate() {
        let mut f = facing_camera();
        f.right_hip = f.left_hip;
        let err = estimate_yaw(&[f]).unwrap_err();
        assert!(err.to_string().contains("degenerate keypoints"), "{err}");
    }

    #[test]
    fn vertical_offset_is_not_degenerate() {
        // Joints differing only in height still coincide in the ground plane.
        let mut f = facing_camera();
        f.right_hip = [f.left_hip[0], f.left_hip[1] + 0.3, f.left_hip[2]];
        assert!(estimate_yaw(&[f]).is_err());
    }

    #[test]
    fn empty_sequence_is_rejected() {
        assert!(estimate_yaw(&[]).is_err());
    }

    #[test]
    fn angle_mode_parses() {
        assert_eq!("full".parse::<AngleMode>().unwrap(), AngleMode::Full);
        assert_eq!(" Axial ".parse::<AngleMode>().unwrap(), AngleMode::Axial);
        assert!("diag".parse::<AngleMode>().is_err());
    }
}
