//! Bounding-box refinement geometry and stripe validity.
//!
//! A detected box is stretched to the estimated holistic body region by four
//! relative boundary offsets. Positive offsets grow the box (the added area is
//! invisible in the frame), negative offsets shrink it. The stripes that fall
//! inside the originally detected area are the valid parts.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Guard on `o_t + o_b` and `o_l + o_r`: refinement divides by `1 - sum`.
pub const OFFSET_SUM_EPS: f64 = 1e-3;

/// Default number of horizontal stripes.
pub const DEFAULT_STRIPES: usize = 7;

/// Horizontal stripes occupy bits `0..K` of a validity bitmask.
pub const MAX_HORIZONTAL_STRIPES: usize = 16;
/// Vertical stripes occupy bits `16..16 + K_v`.
pub const VERTICAL_BIT_OFFSET: usize = 16;
pub const MAX_VERTICAL_STRIPES: usize = 64 - VERTICAL_BIT_OFFSET;

/// Axis-aligned box in pixel coordinates, tagged with the frame it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox<T> {
    frame_id: String,
    x_min: T,
    y_min: T,
    x_max: T,
    y_max: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(frame_id: impl Into<String>, x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidBox("non-finite coordinate".into()));
        }
        if !(x_min < x_max) || !(y_min < y_max) {
            return Err(Error::InvalidBox(format!("empty extent x:{x_min}..{x_max} y:{y_min}..{y_max}")));
        }
        Ok(Self { frame_id: frame_id.into(), x_min, y_min, x_max, y_max })
    }

    /// Builds a box from `[x_min, y_min, x_max, y_max]`.
    pub fn from_array(frame_id: impl Into<String>, c: [T; 4]) -> Result<Self> {
        Self::new(frame_id, c[0], c[1], c[2], c[3])
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }
    pub fn x_min(&self) -> T {
        self.x_min
    }
    pub fn y_min(&self) -> T {
        self.y_min
    }
    pub fn x_max(&self) -> T {
        self.x_max
    }
    pub fn y_max(&self) -> T {
        self.y_max
    }
    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }
    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }
    pub fn area(&self) -> T {
        self.width() * self.height()
    }
    pub fn to_array(&self) -> [T; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Same geometry with coordinates converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> BoundingBox<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        BoundingBox {
            frame_id: self.frame_id.clone(),
            x_min: c(self.x_min),
            y_min: c(self.y_min),
            x_max: c(self.x_max),
            y_max: c(self.y_max),
        }
    }
}

/// Relative boundary offsets `(top, bottom, left, right)`, each in `[-1, 1]`.
///
/// The sum constraint (`top + bottom < 1`) is checked by [`refine_box`] rather
/// than here: clamped training labels may legitimately sit on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetVector<T> {
    top: T,
    bottom: T,
    left: T,
    right: T,
}

impl<T: Scalar> OffsetVector<T> {
    pub fn new(top: T, bottom: T, left: T, right: T) -> Result<Self> {
        for (name, v) in [("top", top), ("bottom", bottom), ("left", left), ("right", right)] {
            if !v.is_finite() || v < -T::one() || v > T::one() {
                return Err(Error::InvalidOffset(format!("{name} = {v} not in [-1, 1]")));
            }
        }
        Ok(Self { top, bottom, left, right })
    }

    pub fn zero() -> Self {
        Self { top: T::zero(), bottom: T::zero(), left: T::zero(), right: T::zero() }
    }

    /// Offsets in `[top, bottom, left, right]` order.
    pub fn from_array(o: [T; 4]) -> Result<Self> {
        Self::new(o[0], o[1], o[2], o[3])
    }

    pub fn top(&self) -> T {
        self.top
    }
    pub fn bottom(&self) -> T {
        self.bottom
    }
    pub fn left(&self) -> T {
        self.left
    }
    pub fn right(&self) -> T {
        self.right
    }
    pub fn to_array(&self) -> [T; 4] {
        [self.top, self.bottom, self.left, self.right]
    }
}

fn refine_axis<T: Scalar>(lo: T, hi: T, near: T, far: T, axis: &'static str) -> Result<(T, T)> {
    let sum = near + far;
    let limit = T::one() - T::lit(OFFSET_SUM_EPS);
    if sum > limit {
        return Err(Error::DegenerateOffset { axis, sum: sum.to_f64_lossy(), limit: limit.to_f64_lossy() });
    }
    let extent = hi - lo;
    let denom = T::one() - sum;
    Ok((lo - extent * near / denom, hi + extent * far / denom))
}

/// Stretches `b` by `o` to the holistic region.
///
/// The refined height is `h / (1 - o_t - o_b)`; the width follows the same rule
/// with `(o_l, o_r)`. Refined boxes may leave the frame.
pub fn refine_box<T: Scalar>(b: &BoundingBox<T>, o: &OffsetVector<T>) -> Result<BoundingBox<T>> {
    let (y_min, y_max) = refine_axis(b.y_min, b.y_max, o.top, o.bottom, "vertical")?;
    let (x_min, x_max) = refine_axis(b.x_min, b.x_max, o.left, o.right, "horizontal")?;
    Ok(BoundingBox { frame_id: b.frame_id.clone(), x_min, y_min, x_max, y_max })
}

/// Raw offsets relating `b` to `refined` without range checking, in
/// `[top, bottom, left, right]` order.
pub fn raw_offsets<T: Scalar>(b: &BoundingBox<T>, refined: &BoundingBox<T>) -> [T; 4] {
    let h = refined.height();
    let w = refined.width();
    [
        (b.y_min - refined.y_min) / h,
        (refined.y_max - b.y_max) / h,
        (b.x_min - refined.x_min) / w,
        (refined.x_max - b.x_max) / w,
    ]
}

/// Inverse of [`refine_box`]: the offsets that stretch `b` onto `refined`.
pub fn offsets_from_boxes<T: Scalar>(b: &BoundingBox<T>, refined: &BoundingBox<T>) -> Result<OffsetVector<T>> {
    let raw = raw_offsets(b, refined);
    for (component, v) in ["top", "bottom", "left", "right"].into_iter().zip(raw) {
        if !(v >= -T::one() && v <= T::one()) {
            return Err(Error::OutOfRangeOffset { component, value: v.to_f64_lossy() });
        }
    }
    Ok(OffsetVector { top: raw[0], bottom: raw[1], left: raw[2], right: raw[3] })
}

/// Intersection over union; 0 for disjoint boxes. Frame identity is ignored.
pub fn iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

/// Per-stripe visibility flags for one refined box.
///
/// Horizontal stripes are numbered `1..=K` top to bottom, vertical stripes
/// `1..=K_v` left to right. Internally every part has a slot: horizontal
/// stripe `k` is slot `k - 1`, vertical stripe `j` is slot `K + j - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValidityVector {
    horizontal: Vec<bool>,
    vertical: Option<Vec<bool>>,
}

fn check_run(flags: &[bool]) -> Result<()> {
    let first = flags.iter().position(|&f| f).ok_or(Error::NonContiguousValidity)?;
    let last = flags.iter().rposition(|&f| f).unwrap_or(first);
    if flags[first..=last].iter().all(|&f| f) {
        Ok(())
    } else {
        Err(Error::NonContiguousValidity)
    }
}

fn run_flags(len: usize, lower: usize, upper: usize) -> Vec<bool> {
    (1..=len).map(|k| k >= lower && k <= upper).collect()
}

impl ValidityVector {
    pub fn from_flags(horizontal: Vec<bool>, vertical: Option<Vec<bool>>) -> Result<Self> {
        if horizontal.len() > MAX_HORIZONTAL_STRIPES {
            return Err(Error::ShapeMismatch(format!(
                "at most {MAX_HORIZONTAL_STRIPES} horizontal stripes supported, got {}",
                horizontal.len()
            )));
        }
        check_run(&horizontal)?;
        if let Some(v) = &vertical {
            if v.len() > MAX_VERTICAL_STRIPES {
                return Err(Error::ShapeMismatch(format!(
                    "at most {MAX_VERTICAL_STRIPES} vertical stripes supported, got {}",
                    v.len()
                )));
            }
            check_run(v)?;
        }
        Ok(Self { horizontal, vertical })
    }

    /// Every stripe visible.
    pub fn full(k: usize, k_v: Option<usize>) -> Self {
        assert!(k >= 1, "at least one stripe");
        Self { horizontal: vec![true; k], vertical: k_v.map(|n| vec![true; n]) }
    }

    /// Horizontal stripes `lower..=upper` valid (1-based, inclusive).
    pub fn horizontal_range(k: usize, lower: usize, upper: usize) -> Result<Self> {
        Self::from_flags(run_flags(k, lower, upper), None)
    }

    pub fn k(&self) -> usize {
        self.horizontal.len()
    }

    pub fn k_v(&self) -> Option<usize> {
        self.vertical.as_ref().map(Vec::len)
    }

    pub fn horizontal(&self) -> &[bool] {
        &self.horizontal
    }

    pub fn vertical(&self) -> Option<&[bool]> {
        self.vertical.as_deref()
    }

    /// Total number of part slots, `K + K_v`.
    pub fn slot_count(&self) -> usize {
        self.k() + self.k_v().unwrap_or(0)
    }

    pub fn is_slot_valid(&self, slot: usize) -> bool {
        let k = self.k();
        if slot < k {
            self.horizontal[slot]
        } else {
            self.vertical.as_ref().and_then(|v| v.get(slot - k).copied()).unwrap_or(false)
        }
    }

    /// Valid slots in ascending order.
    pub fn valid_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.slot_count()).filter(move |&s| self.is_slot_valid(s))
    }

    /// 1-based indices of valid horizontal stripes.
    pub fn valid_horizontal(&self) -> Vec<usize> {
        self.horizontal.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i + 1).collect()
    }

    /// 1-based indices of valid vertical stripes (empty when absent).
    pub fn valid_vertical(&self) -> Vec<usize> {
        self.vertical.iter().flatten().enumerate().filter(|(_, &f)| f).map(|(i, _)| i + 1).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid_slots().count()
    }

    /// Packs flags into the feature-bank bitmask layout.
    pub fn to_bitmask(&self) -> u64 {
        let mut mask = 0u64;
        for (i, &f) in self.horizontal.iter().enumerate() {
            if f {
                mask |= 1 << i;
            }
        }
        for (j, &f) in self.vertical.iter().flatten().enumerate() {
            if f {
                mask |= 1 << (VERTICAL_BIT_OFFSET + j);
            }
        }
        mask
    }

    pub fn from_bitmask(mask: u64, k: usize, k_v: Option<usize>) -> Result<Self> {
        if k == 0 || k > MAX_HORIZONTAL_STRIPES || k_v.is_some_and(|n| n > MAX_VERTICAL_STRIPES) {
            return Err(Error::ShapeMismatch(format!("unsupported stripe counts K={k} K_v={k_v:?}")));
        }
        let mut allowed = (1u64 << k) - 1;
        if let Some(n) = k_v {
            allowed |= ((1u64 << n) - 1) << VERTICAL_BIT_OFFSET;
        }
        if mask & !allowed != 0 {
            return Err(Error::Format(format!("validity mask {mask:#x} sets bits beyond K/K_v")));
        }
        let horizontal = (0..k).map(|i| mask & (1 << i) != 0).collect();
        let vertical = k_v.map(|n| (0..n).map(|j| mask & (1 << (VERTICAL_BIT_OFFSET + j)) != 0).collect());
        Self::from_flags(horizontal, vertical)
    }
}

/// `K * max(0, o)`, snapped to the nearest integer when within a few ulps of it
/// so that decimal offsets such as `0.7` with `K = 10` land on exact stripe
/// boundaries.
fn scaled_offset<T: Scalar>(o: T, k: usize) -> T {
    let x = T::from_count(k) * o.max(T::zero());
    let r = x.round();
    let tol = T::epsilon() * T::lit(64.0) * x.abs().max(T::one());
    if (x - r).abs() <= tol {
        r
    } else {
        x
    }
}

/// Inclusive 1-based valid range `[max(1, ceil(K*max(0,near))), K - floor(K*max(0,far))]`.
pub fn stripe_bounds<T: Scalar>(near: T, far: T, k: usize) -> (i64, i64) {
    let lower = scaled_offset(near, k).ceil().to_i64().unwrap_or(i64::MAX).max(1);
    let upper = k as i64 - scaled_offset(far, k).floor().to_i64().unwrap_or(i64::MAX);
    (lower, upper)
}

fn axis_flags<T: Scalar>(near: T, far: T, k: usize) -> Result<Vec<bool>> {
    let (lower, upper) = stripe_bounds(near, far, k);
    if lower > upper {
        return Err(Error::EmptyValidity { lower, upper });
    }
    Ok(run_flags(k, lower as usize, upper as usize))
}

/// Valid horizontal (and optionally vertical) stripes of the box refined by `o`.
pub fn validity<T: Scalar>(o: &OffsetVector<T>, k: usize, k_v: Option<usize>) -> Result<ValidityVector> {
    if k == 0 || k_v == Some(0) {
        return Err(Error::ShapeMismatch("stripe count must be at least 1".into()));
    }
    let horizontal = axis_flags(o.top, o.bottom, k)?;
    let vertical = k_v.map(|n| axis_flags(o.left, o.right, n)).transpose()?;
    ValidityVector::from_flags(horizontal, vertical)
}
