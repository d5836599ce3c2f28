//! Part-feature pipeline: per-row projection, regional and global average
//! pooling, part descriptors and a prototype-softmax identity loss.

use crate::boxgeom::ValidityVector;
use crate::error::{Error, Result};
use crate::scalar::{norm, Scalar};

/// Default RSM channel width.
pub const DEFAULT_RSM_DIM: usize = 256;
/// Default prototype-softmax temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Dense `H x W x D` tensor, rows top to bottom, stored row-major as
/// `[row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    h: usize,
    w: usize,
    d: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(h: usize, w: usize, d: usize, data: Vec<T>) -> Result<Self> {
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::ShapeMismatch(format!("empty feature map {h}x{w}x{d}")));
        }
        if data.len() != h * w * d {
            return Err(Error::ShapeMismatch(format!(
                "{h}x{w}x{d} map needs {} values, got {}",
                h * w * d,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("feature map has non-finite entries".into()));
        }
        Ok(Self { h, w, d, data })
    }

    pub fn from_fn(h: usize, w: usize, d: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(h * w * d);
        for i in 0..h {
            for j in 0..w {
                for c in 0..d {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(h, w, d, data)
    }

    pub fn height(&self) -> usize {
        self.h
    }
    pub fn width(&self) -> usize {
        self.w
    }
    pub fn depth(&self) -> usize {
        self.d
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Channel vector at row `i`, column `j` (0-based).
    pub fn at(&self, i: usize, j: usize) -> &[T] {
        let start = (i * self.w + j) * self.d;
        &self.data[start..start + self.d]
    }

    fn mean_over(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<T> {
        let mut acc = vec![T::zero(); self.d];
        let n = T::from_count(rows.len() * cols.len());
        for i in rows {
            for j in cols.clone() {
                for (a, &v) in acc.iter_mut().zip(self.at(i, j)) {
                    *a = *a + v;
                }
            }
        }
        acc.into_iter().map(|a| a / n).collect()
    }
}

/// One `1x1` kernel: `D x d` weights (row-major, input channel major) and a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim || in_dim == 0 || out_dim == 0 {
            return Err(Error::ShapeMismatch(format!(
                "kernel {in_dim}x{out_dim} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("kernel has non-finite weights".into()));
        }
        Ok(Self { in_dim, out_dim, weight, bias })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![T::zero(); dim * dim];
        for c in 0..dim {
            weight[c * dim + c] = T::one();
        }
        Self { in_dim: dim, out_dim: dim, weight, bias: vec![T::zero(); dim] }
    }

    /// Weight from input channel `c` to output channel `o`.
    pub fn weight(&self, c: usize, o: usize) -> T {
        self.weight[c * self.out_dim + o]
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    fn apply_into(&self, x: &[T], out: &mut Vec<T>) {
        let start = out.len();
        out.extend_from_slice(&self.bias);
        let y = &mut out[start..];
        for (c, &xc) in x.iter().enumerate() {
            let row = &self.weight[c * self.out_dim..(c + 1) * self.out_dim];
            for (yo, &w) in y.iter_mut().zip(row) {
                *yo = *yo + xc * w;
            }
        }
    }
}

/// `H` independent `1x1` projections, one per feature-map row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowProjection<T> {
    kernels: Vec<Kernel<T>>,
}

impl<T: Scalar> RowProjection<T> {
    pub fn new(kernels: Vec<Kernel<T>>) -> Result<Self> {
        let first = kernels.first().ok_or_else(|| Error::ShapeMismatch("no kernels".into()))?;
        let (din, dout) = (first.in_dim, first.out_dim);
        if kernels.iter().any(|k| k.in_dim != din || k.out_dim != dout) {
            return Err(Error::ShapeMismatch("row kernels disagree in shape".into()));
        }
        Ok(Self { kernels })
    }

    /// The same kernel on every row, i.e. a shared global projection.
    pub fn shared(kernel: Kernel<T>, rows: usize) -> Result<Self> {
        Self::new(vec![kernel; rows])
    }

    pub fn rows(&self) -> usize {
        self.kernels.len()
    }
    pub fn in_dim(&self) -> usize {
        self.kernels[0].in_dim
    }
    pub fn out_dim(&self) -> usize {
        self.kernels[0].out_dim
    }
    pub fn kernel(&self, row: usize) -> &Kernel<T> {
        &self.kernels[row]
    }
}

/// Applies kernel `i` position-wise to row `i` of `t`.
pub fn row_project<T: Scalar>(t: &FeatureMap<T>, p: &RowProjection<T>) -> Result<FeatureMap<T>> {
    if p.rows() != t.h || p.in_dim() != t.d {
        return Err(Error::ShapeMismatch(format!(
            "projection is {} rows x {} channels, map is {}x{}x{}",
            p.rows(),
            p.in_dim(),
            t.h,
            t.w,
            t.d
        )));
    }
    let d_out = p.out_dim();
    let mut data = Vec::with_capacity(t.h * t.w * d_out);
    for i in 0..t.h {
        let kernel = &p.kernels[i];
        for j in 0..t.w {
            kernel.apply_into(t.at(i, j), &mut data);
        }
    }
    FeatureMap::new(t.h, t.w, d_out, data)
}

/// A stripe identified by orientation and 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stripe {
    Horizontal(usize),
    Vertical(usize),
}

fn stripe_span(total: usize, stripes: usize, what: &str) -> Result<usize> {
    if stripes == 0 || !total.is_multiple_of(stripes) {
        return Err(Error::ShapeMismatch(format!("{stripes} {what} stripes do not divide {total}")));
    }
    Ok(total / stripes)
}

/// Pools every stripe of `m` regardless of validity, in slot order
/// (horizontal first, then vertical).
pub fn pool_all_stripes<T: Scalar>(m: &FeatureMap<T>, k: usize, k_v: Option<usize>) -> Result<Vec<Vec<T>>> {
    let rows_per = stripe_span(m.h, k, "horizontal")?;
    let mut out: Vec<Vec<T>> = (0..k).map(|s| m.mean_over(s * rows_per..(s + 1) * rows_per, 0..m.w)).collect();
    if let Some(kv) = k_v {
        let cols_per = stripe_span(m.w, kv, "vertical")?;
        out.extend((0..kv).map(|s| m.mean_over(0..m.h, s * cols_per..(s + 1) * cols_per)));
    }
    Ok(out)
}

/// Regional average pooling over the valid stripes only.
pub fn rap<T: Scalar>(m: &FeatureMap<T>, v: &ValidityVector) -> Result<Vec<(Stripe, Vec<T>)>> {
    let k = v.k();
    let rows_per = stripe_span(m.h, k, "horizontal")?;
    let cols_per = v.k_v().map(|kv| stripe_span(m.w, kv, "vertical")).transpose()?;
    let mut out = Vec::with_capacity(v.valid_count());
    for s in v.valid_slots() {
        if s < k {
            out.push((Stripe::Horizontal(s + 1), m.mean_over(s * rows_per..(s + 1) * rows_per, 0..m.w)));
        } else {
            let j = s - k;
            let cols_per = cols_per.expect("vertical slot implies K_v");
            out.push((Stripe::Vertical(j + 1), m.mean_over(0..m.h, j * cols_per..(j + 1) * cols_per)));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyValidity { lower: 1, upper: 0 });
    }
    Ok(out)
}

/// Global average pooling over all `H x W` positions.
pub fn gap<T: Scalar>(m: &FeatureMap<T>) -> Vec<T> {
    m.mean_over(0..m.h, 0..m.w)
}

/// Average pooling restricted to the rows of valid horizontal stripes.
pub fn gap_masked<T: Scalar>(m: &FeatureMap<T>, v: &ValidityVector) -> Result<Vec<T>> {
    let rows_per = stripe_span(m.h, v.k(), "horizontal")?;
    let valid = v.valid_horizontal();
    let (first, last) = match (valid.first(), valid.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::EmptyValidity { lower: 1, upper: 0 }),
    };
    Ok(m.mean_over((first - 1) * rows_per..last * rows_per, 0..m.w))
}

/// Stripe features, validity and global feature of one box.
///
/// Every slot stores a vector so that strategies which deliberately ignore
/// validity can still be evaluated; [`PartDescriptor::part`] only exposes the
/// valid ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PartDescriptor<T> {
    validity: ValidityVector,
    parts: Vec<Vec<T>>,
    global: Vec<T>,
    label: Option<u32>,
}

impl<T: Scalar> PartDescriptor<T> {
    pub fn new(validity: ValidityVector, parts: Vec<Vec<T>>, global: Vec<T>, label: Option<u32>) -> Result<Self> {
        if parts.len() != validity.slot_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} stripe vectors for {} stripes",
                parts.len(),
                validity.slot_count()
            )));
        }
        let d = parts[0].len();
        if d == 0 || parts.iter().any(|p| p.len() != d) {
            return Err(Error::ShapeMismatch("stripe vectors must share a non-zero dimension".into()));
        }
        for s in validity.valid_slots() {
            if parts[s].iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!("valid slot {s} has non-finite features")));
            }
        }
        if global.is_empty() || global.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("global feature must be non-empty and finite".into()));
        }
        Ok(Self { validity, parts, global, label })
    }

    /// Builds a descriptor from a region-sensitive map: valid stripes are
    /// pooled, invalid ones stored as zeros.
    pub fn from_feature_map(
        m: &FeatureMap<T>,
        validity: ValidityVector,
        global: Vec<T>,
        label: Option<u32>,
    ) -> Result<Self> {
        let mut parts = pool_all_stripes(m, validity.k(), validity.k_v())?;
        for (s, p) in parts.iter_mut().enumerate() {
            if !validity.is_slot_valid(s) {
                p.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        Self::new(validity, parts, global, label)
    }

    pub fn validity(&self) -> &ValidityVector {
        &self.validity
    }
    pub fn k(&self) -> usize {
        self.validity.k()
    }
    pub fn k_v(&self) -> Option<usize> {
        self.validity.k_v()
    }
    pub fn dim(&self) -> usize {
        self.parts[0].len()
    }
    pub fn global_dim(&self) -> usize {
        self.global.len()
    }
    pub fn global(&self) -> &[T] {
        &self.global
    }
    pub fn label(&self) -> Option<u32> {
        self.label
    }

    /// Feature of a valid slot; `None` for invalid slots.
    pub fn part(&self, slot: usize) -> Option<&[T]> {
        self.validity.is_slot_valid(slot).then(|| self.parts[slot].as_slice())
    }

    /// Stored vector of any slot, valid or not.
    pub fn raw_part(&self, slot: usize) -> &[T] {
        &self.parts[slot]
    }

    pub fn raw_parts(&self) -> &[Vec<T>] {
        &self.parts
    }

    pub fn cast<U: Scalar>(&self) -> PartDescriptor<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect::<Vec<U>>();
        PartDescriptor {
            validity: self.validity.clone(),
            parts: self.parts.iter().map(c).collect(),
            global: c(&self.global),
            label: self.label,
        }
    }
}

/// Fixed identity prototypes for the cosine-softmax identity loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank<T> {
    unit_prototypes: Vec<Vec<T>>,
    temperature: T,
}

impl<T: Scalar> PrototypeBank<T> {
    pub fn new(prototypes: Vec<Vec<T>>, temperature: T) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::Config("prototype bank needs at least 2 identities".into()));
        }
        if !(temperature > T::zero()) || !temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        let d = prototypes[0].len();
        let mut unit_prototypes = Vec::with_capacity(prototypes.len());
        for (c, p) in prototypes.iter().enumerate() {
            if p.len() != d || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!("prototype {c} has wrong dimension or non-finite values")));
            }
            let n = norm(p);
            if !(n > T::zero()) {
                return Err(Error::DegenerateFeature(format!("prototype {c} has zero norm")));
            }
            unit_prototypes.push(p.iter().map(|&v| v / n).collect());
        }
        Ok(Self { unit_prototypes, temperature })
    }

    pub fn classes(&self) -> usize {
        self.unit_prototypes.len()
    }
    pub fn dim(&self) -> usize {
        self.unit_prototypes[0].len()
    }
    pub fn temperature(&self) -> T {
        self.temperature
    }
}

/// Cross-entropy of the softmax over `cos(feature, prototype_c) / tau`.
/// Returns the loss and its gradient with respect to `feature`.
pub fn id_loss<T: Scalar>(feature: &[T], label: usize, bank: &PrototypeBank<T>) -> Result<(T, Vec<T>)> {
    if label >= bank.classes() {
        return Err(Error::UnknownLabel { label, classes: bank.classes() });
    }
    if feature.len() != bank.dim() {
        return Err(Error::ShapeMismatch(format!("feature dim {} vs bank dim {}", feature.len(), bank.dim())));
    }
    let fnorm = norm(feature);
    if !(fnorm > T::zero()) || !fnorm.is_finite() {
        return Err(Error::DegenerateFeature("feature has zero or non-finite norm".into()));
    }
    let unit: Vec<T> = feature.iter().map(|&v| v / fnorm).collect();
    let inv_tau = T::one() / bank.temperature;
    let cos: Vec<T> =
        bank.unit_prototypes.iter().map(|p| p.iter().zip(&unit).fold(T::zero(), |a, (&x, &y)| a + x * y)).collect();
    let logits: Vec<T> = cos.iter().map(|&c| c * inv_tau).collect();
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let loss = total.ln() + max - logits[label];

    // d loss / d z_c = p_c - [c == label]; d z_c / d f = (u_c - cos_c * f_hat) / (tau * |f|)
    let mut grad = vec![T::zero(); feature.len()];
    for (c, p) in bank.unit_prototypes.iter().enumerate() {
        let mut coef = exps[c] / total;
        if c == label {
            coef = coef - T::one();
        }
        let scale = coef * inv_tau / fnorm;
        for ((g, &pc), &fh) in grad.iter_mut().zip(p).zip(&unit) {
            *g = *g + scale * (pc - cos[c] * fh);
        }
    }
    Ok((loss, grad))
}

/// Training objective without the detector term: offset + RSM + per-part losses.
pub fn total_loss<T: Scalar>(part_losses: &[T], rsm_loss: T, offset_loss: T) -> T {
    offset_loss + rsm_loss + part_losses.iter().copied().sum::<T>()
}
