//! Offset-label synthesis from body keypoints, and the smooth-L1 offset loss.
//!
//! Each joint has a canonical position inside a unit-height, unit-width
//! holistic body. Fitting a scale and shift per axis that maps those canonical
//! fractions onto the observed joints recovers where the full body would
//! extend, even when part of it lies outside the annotated box.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boxgeom::{raw_offsets, BoundingBox, OffsetVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum spread of canonical fractions among visible joints for a fit.
pub const MIN_FRACTION_SPAN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl Joint {
    pub const ALL: [Joint; 17] = [
        Joint::Nose,
        Joint::LeftEye,
        Joint::RightEye,
        Joint::LeftEar,
        Joint::RightEar,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftElbow,
        Joint::RightElbow,
        Joint::LeftWrist,
        Joint::RightWrist,
        Joint::LeftHip,
        Joint::RightHip,
        Joint::LeftKnee,
        Joint::RightKnee,
        Joint::LeftAnkle,
        Joint::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Nose => "nose",
            Joint::LeftEye => "left_eye",
            Joint::RightEye => "right_eye",
            Joint::LeftEar => "left_ear",
            Joint::RightEar => "right_ear",
            Joint::LeftShoulder => "left_shoulder",
            Joint::RightShoulder => "right_shoulder",
            Joint::LeftElbow => "left_elbow",
            Joint::RightElbow => "right_elbow",
            Joint::LeftWrist => "left_wrist",
            Joint::RightWrist => "right_wrist",
            Joint::LeftHip => "left_hip",
            Joint::RightHip => "right_hip",
            Joint::LeftKnee => "left_knee",
            Joint::RightKnee => "right_knee",
            Joint::LeftAnkle => "left_ankle",
            Joint::RightAnkle => "right_ankle",
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Joint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Joint::ALL.into_iter().find(|j| j.name() == s).ok_or_else(|| Error::Format(format!("unknown joint name {s:?}")))
    }
}

/// Canonical joint positions as fractions of the holistic box (top/left = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFractions {
    vertical: [f64; 17],
    horizontal: [f64; 17],
}

impl Default for CanonicalFractions {
    fn default() -> Self {
        use Joint::*;
        let mut vertical = [0.0; 17];
        let mut horizontal = [0.0; 17];
        let table = [
            (Nose, 0.06, 0.50),
            (LeftEye, 0.05, 0.46),
            (RightEye, 0.05, 0.54),
            (LeftEar, 0.06, 0.42),
            (RightEar, 0.06, 0.58),
            (LeftShoulder, 0.18, 0.30),
            (RightShoulder, 0.18, 0.70),
            (LeftElbow, 0.33, 0.24),
            (RightElbow, 0.33, 0.76),
            (LeftWrist, 0.47, 0.20),
            (RightWrist, 0.47, 0.80),
            (LeftHip, 0.53, 0.36),
            (RightHip, 0.53, 0.64),
            (LeftKnee, 0.74, 0.38),
            (RightKnee, 0.74, 0.62),
            (LeftAnkle, 0.93, 0.40),
            (RightAnkle, 0.93, 0.60),
        ];
        for (j, v, h) in table {
            vertical[j.index()] = v;
            horizontal[j.index()] = h;
        }
        Self { vertical, horizontal }
    }
}

impl CanonicalFractions {
    pub fn vertical(&self, j: Joint) -> f64 {
        self.vertical[j.index()]
    }

    pub fn horizontal(&self, j: Joint) -> f64 {
        self.horizontal[j.index()]
    }

    pub fn set_vertical(&mut self, j: Joint, v: f64) -> Result<()> {
        self.vertical[j.index()] = check_fraction(j, v)?;
        Ok(())
    }

    pub fn set_horizontal(&mut self, j: Joint, h: f64) -> Result<()> {
        self.horizontal[j.index()] = check_fraction(j, h)?;
        Ok(())
    }
}

fn check_fraction(j: Joint, v: f64) -> Result<f64> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Config(format!("canonical fraction for {j} must be in [0, 1], got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint<T> {
    pub joint: Joint,
    pub x: T,
    pub y: T,
    pub visible: bool,
}

/// Keypoints detected on one annotated box. Invisible joints are kept but
/// never enter the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet<T> {
    points: Vec<Keypoint<T>>,
}

impl<T: Scalar> KeypointSet<T> {
    pub fn new(points: Vec<Keypoint<T>>) -> Result<Self> {
        for p in &points {
            if p.visible && !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Format(format!("visible joint {} has non-finite coordinates", p.joint)));
            }
        }
        let mut seen = [false; 17];
        for p in &points {
            if std::mem::replace(&mut seen[p.joint.index()], true) {
                return Err(Error::Format(format!("joint {} listed twice", p.joint)));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Keypoint<T>] {
        &self.points
    }

    pub fn visible(&self) -> impl Iterator<Item = &Keypoint<T>> {
        self.points.iter().filter(|p| p.visible)
    }
}

/// Least-squares `observed ≈ scale * fraction + shift`.
fn fit_axis<T: Scalar>(samples: &[(T, T)]) -> (T, T) {
    let n = T::from_count(samples.len());
    let mean_f = samples.iter().map(|s| s.0).sum::<T>() / n;
    let mean_o = samples.iter().map(|s| s.1).sum::<T>() / n;
    let (sxx, sxy) = samples.iter().fold((T::zero(), T::zero()), |(sxx, sxy), &(f, o)| {
        let df = f - mean_f;
        (sxx + df * df, sxy + df * (o - mean_o))
    });
    let scale = sxy / sxx;
    (scale, mean_o - scale * mean_f)
}

fn span<T: Scalar>(samples: &[(T, T)]) -> T {
    let lo = samples.iter().map(|s| s.0).fold(T::infinity(), T::min);
    let hi = samples.iter().map(|s| s.0).fold(T::neg_infinity(), T::max);
    hi - lo
}

/// Estimates the holistic body box from keypoints, never smaller than `gt`.
///
/// The vertical fit is mandatory. When the visible joints do not spread
/// horizontally (for instance only the nose and hips' midline), the
/// horizontal extent of `gt` is kept.
pub fn estimate_holistic_box<T: Scalar>(
    kp: &KeypointSet<T>,
    gt: &BoundingBox<T>,
    fractions: &CanonicalFractions,
) -> Result<BoundingBox<T>> {
    let vertical: Vec<(T, T)> = kp.visible().map(|p| (T::lit(fractions.vertical(p.joint)), p.y)).collect();
    if vertical.len() < 2 {
        return Err(Error::InsufficientKeypoints(format!("{} visible joints, need at least 2", vertical.len())));
    }
    let min_span = T::lit(MIN_FRACTION_SPAN);
    if span(&vertical) < min_span {
        return Err(Error::InsufficientKeypoints(format!(
            "visible joints span less than {MIN_FRACTION_SPAN} of body height"
        )));
    }
    let (scale_y, shift_y) = fit_axis(&vertical);
    if !(scale_y > T::zero()) {
        return Err(Error::DegenerateFit { axis: "vertical", scale: scale_y.to_f64_lossy() });
    }

    let horizontal: Vec<(T, T)> = kp.visible().map(|p| (T::lit(fractions.horizontal(p.joint)), p.x)).collect();
    let (x_lo, x_hi) = if span(&horizontal) >= min_span {
        let (scale_x, shift_x) = fit_axis(&horizontal);
        if !(scale_x > T::zero()) {
            return Err(Error::DegenerateFit { axis: "horizontal", scale: scale_x.to_f64_lossy() });
        }
        (shift_x, shift_x + scale_x)
    } else {
        (gt.x_min(), gt.x_max())
    };

    BoundingBox::new(
        gt.frame_id(),
        x_lo.min(gt.x_min()),
        shift_y.min(gt.y_min()),
        x_hi.max(gt.x_max()),
        (shift_y + scale_y).max(gt.y_max()),
    )
}

/// Ground-truth offsets for training the offset regressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetLabel<T> {
    pub target: OffsetVector<T>,
    /// At least one component was clamped into `[-1, 1]`.
    pub clamped: bool,
}

impl<T: Scalar> OffsetLabel<T> {
    /// Clamps raw `[top, bottom, left, right]` offsets into range.
    pub fn from_raw(raw: [T; 4]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidOffset("non-finite raw offset".into()));
        }
        let clamped = raw.iter().any(|&v| v < -T::one() || v > T::one());
        let c = raw.map(|v| v.max(-T::one()).min(T::one()));
        Ok(Self { target: OffsetVector::from_array(c)?, clamped })
    }
}

pub fn make_offset_label<T: Scalar>(
    kp: &KeypointSet<T>,
    gt: &BoundingBox<T>,
    fractions: &CanonicalFractions,
) -> Result<OffsetLabel<T>> {
    let holistic = estimate_holistic_box(kp, gt, fractions)?;
    OffsetLabel::from_raw(raw_offsets(gt, &holistic))
}

/// `0.5 x^2` for `|x| < 1`, `|x| - 0.5` otherwise.
#[inline]
pub fn smooth_l1<T: Scalar>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::lit(0.5) * x * x
    } else {
        a - T::lit(0.5)
    }
}

#[inline]
pub fn smooth_l1_derivative<T: Scalar>(x: T) -> T {
    if x.abs() < T::one() {
        x
    } else {
        x.signum()
    }
}

/// Summed smooth-L1 over the four offset components.
pub fn smooth_l1_loss<T: Scalar>(pred: &OffsetVector<T>, target: &OffsetVector<T>) -> T {
    pred.to_array().iter().zip(target.to_array()).map(|(&p, t)| smooth_l1(p - t)).sum()
}

/// Gradient of [`smooth_l1_loss`] with respect to `pred`, `[t, b, l, r]`.
pub fn smooth_l1_loss_grad<T: Scalar>(pred: &OffsetVector<T>, target: &OffsetVector<T>) -> [T; 4] {
    let p = pred.to_array();
    let t = target.to_array();
    std::array::from_fn(|i| smooth_l1_derivative(p[i] - t[i]))
}
