//! Partial and fused distances between part descriptors.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partfeat::PartDescriptor;
use crate::scalar::{l2, mean_of, unit, Scalar};

/// Weight of the global term in the fused distance.
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOptions<T> {
    pub lambda: T,
    /// Unit-normalize every feature vector before taking L2 distances.
    pub normalize: bool,
}

impl<T: Scalar> Default for MatchOptions<T> {
    fn default() -> Self {
        Self { lambda: T::lit(DEFAULT_LAMBDA), normalize: false }
    }
}

impl<T: Scalar> MatchOptions<T> {
    fn dist(&self, a: &[T], b: &[T]) -> T {
        if self.normalize {
            l2(&unit(a), &unit(b))
        } else {
            l2(a, b)
        }
    }
}

/// Which distance fills a matrix. `Fused` is the retrieval distance; the rest
/// are the matching-strategy ablation arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Mutual-stripe partial distance plus `lambda` times the global distance.
    Fused,
    /// Global feature only.
    Global,
    /// Mean per-stripe distance over all stripes, ignoring validity.
    Stripe,
    /// Distance between the means of each side's own valid stripes.
    ValidRegion,
    /// Distance between the means of the mutually valid stripes.
    MutualRegion,
    /// Mean per-stripe distance over mutually valid stripes.
    MutualStripe,
}

impl Strategy {
    pub const ABLATION: [Strategy; 5] =
        [Strategy::Global, Strategy::Stripe, Strategy::ValidRegion, Strategy::MutualRegion, Strategy::MutualStripe];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Fused => "fused",
            Strategy::Global => "global",
            Strategy::Stripe => "stripe",
            Strategy::ValidRegion => "valid-region",
            Strategy::MutualRegion => "mutual-region",
            Strategy::MutualStripe => "mutual-stripe",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Strategy::Fused]
            .into_iter()
            .chain(Strategy::ABLATION)
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Components of one query/gallery distance.
///
/// For [`Strategy::Fused`], `fused = partial + lambda * global`, or
/// `lambda * global` with `fallback_used` when no part is mutually valid.
/// For ablation strategies `fused` holds the strategy's distance and
/// `partial` its part-based term, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBreakdown<T> {
    pub partial: Option<T>,
    pub global: T,
    pub fused: T,
    pub mutual_count: usize,
    pub fallback_used: bool,
}

fn check_compatible<T: Scalar>(q: &PartDescriptor<T>, g: &PartDescriptor<T>) -> Result<()> {
    if q.k() != g.k() || q.k_v() != g.k_v() || q.dim() != g.dim() || q.global_dim() != g.global_dim() {
        return Err(Error::ShapeMismatch(format!(
            "descriptors disagree: K {}/{}, K_v {:?}/{:?}, d {}/{}, global {}/{}",
            q.k(),
            g.k(),
            q.k_v(),
            g.k_v(),
            q.dim(),
            g.dim(),
            q.global_dim(),
            g.global_dim()
        )));
    }
    Ok(())
}

fn mutual_slots<'a, T: Scalar>(q: &'a PartDescriptor<T>, g: &'a PartDescriptor<T>) -> impl Iterator<Item = usize> + 'a {
    q.validity().valid_slots().filter(move |&s| g.validity().is_slot_valid(s))
}

fn partial_with<T: Scalar>(q: &PartDescriptor<T>, g: &PartDescriptor<T>, opts: &MatchOptions<T>) -> (Option<T>, usize) {
    let mut sum = T::zero();
    let mut count = 0usize;
    for s in mutual_slots(q, g) {
        sum = sum + opts.dist(q.raw_part(s), g.raw_part(s));
        count += 1;
    }
    if count == 0 {
        (None, 0)
    } else {
        (Some(sum / T::from_count(count)), count)
    }
}

/// Mean L2 distance over the parts valid in both descriptors, with the
/// number of such parts. Horizontal and vertical parts share one average.
pub fn dist_partial<T: Scalar>(
    q: &PartDescriptor<T>,
    g: &PartDescriptor<T>,
    opts: &MatchOptions<T>,
) -> Result<(Option<T>, usize)> {
    check_compatible(q, g)?;
    Ok(partial_with(q, g, opts))
}

fn fused_unchecked<T: Scalar>(
    q: &PartDescriptor<T>,
    g: &PartDescriptor<T>,
    opts: &MatchOptions<T>,
) -> DistanceBreakdown<T> {
    let (partial, mutual_count) = partial_with(q, g, opts);
    let global = opts.dist(q.global(), g.global());
    let weighted = opts.lambda * global;
    DistanceBreakdown {
        partial,
        global,
        fused: partial.map_or(weighted, |p| p + weighted),
        mutual_count,
        fallback_used: partial.is_none(),
    }
}

/// Partial distance plus `lambda` times the global-feature distance.
pub fn dist_fused<T: Scalar>(
    q: &PartDescriptor<T>,
    g: &PartDescriptor<T>,
    opts: &MatchOptions<T>,
) -> Result<DistanceBreakdown<T>> {
    check_compatible(q, g)?;
    Ok(fused_unchecked(q, g, opts))
}

fn region_mean<T: Scalar>(d: &PartDescriptor<T>, slots: &[usize]) -> Option<Vec<T>> {
    mean_of(slots.iter().map(|&s| d.raw_part(s)), d.dim())
}

fn strategy_unchecked<T: Scalar>(
    q: &PartDescriptor<T>,
    g: &PartDescriptor<T>,
    strategy: Strategy,
    opts: &MatchOptions<T>,
) -> DistanceBreakdown<T> {
    if strategy == Strategy::Fused {
        return fused_unchecked(q, g, opts);
    }
    let global = opts.dist(q.global(), g.global());
    let mutual: Vec<usize> = mutual_slots(q, g).collect();
    let partial = match strategy {
        Strategy::Fused | Strategy::Global => None,
        Strategy::Stripe => {
            let n = q.validity().slot_count();
            let sum = (0..n).fold(T::zero(), |acc, s| acc + opts.dist(q.raw_part(s), g.raw_part(s)));
            Some(sum / T::from_count(n))
        }
        Strategy::ValidRegion => {
            let qs: Vec<usize> = q.validity().valid_slots().collect();
            let gs: Vec<usize> = g.validity().valid_slots().collect();
            match (region_mean(q, &qs), region_mean(g, &gs)) {
                (Some(a), Some(b)) => Some(opts.dist(&a, &b)),
                _ => None,
            }
        }
        Strategy::MutualRegion => match (region_mean(q, &mutual), region_mean(g, &mutual)) {
            (Some(a), Some(b)) => Some(opts.dist(&a, &b)),
            _ => None,
        },
        Strategy::MutualStripe => partial_with(q, g, opts).0,
    };
    let fallback_used = strategy != Strategy::Global && partial.is_none();
    DistanceBreakdown { partial, global, fused: partial.unwrap_or(global), mutual_count: mutual.len(), fallback_used }
}

/// Distance between one pair under `strategy`. Ablation arms ignore
/// `lambda`; when they have no usable parts they fall back to the plain
/// global distance.
pub fn dist_with_strategy<T: Scalar>(
    q: &PartDescriptor<T>,
    g: &PartDescriptor<T>,
    strategy: Strategy,
    opts: &MatchOptions<T>,
) -> Result<DistanceBreakdown<T>> {
    check_compatible(q, g)?;
    Ok(strategy_unchecked(q, g, strategy, opts))
}

/// Row-major `|Q| x |G|` matrix of distance breakdowns.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    rows: usize,
    cols: usize,
    strategy: Strategy,
    entries: Vec<DistanceBreakdown<T>>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn strategy(&self) -> Strategy {
        self.strategy
    }
    pub fn get(&self, i: usize, j: usize) -> &DistanceBreakdown<T> {
        &self.entries[i * self.cols + j]
    }
    pub fn entries(&self) -> &[DistanceBreakdown<T>] {
        &self.entries
    }
    /// The ranking distance of every entry, row-major.
    pub fn values(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.fused).collect()
    }
    pub fn row_values(&self, i: usize) -> Vec<T> {
        self.entries[i * self.cols..(i + 1) * self.cols].iter().map(|e| e.fused).collect()
    }
}

/// All query/gallery distances under `strategy`. Rows are computed in
/// parallel; the result does not depend on the worker count.
pub fn distance_matrix<T: Scalar>(
    queries: &[PartDescriptor<T>],
    gallery: &[PartDescriptor<T>],
    strategy: Strategy,
    opts: &MatchOptions<T>,
) -> Result<DistanceMatrix<T>> {
    if let Some(reference) = queries.first().or(gallery.first()) {
        for d in queries.iter().chain(gallery) {
            check_compatible(reference, d)?;
        }
    }
    let cols = gallery.len();
    let rows: Vec<Vec<DistanceBreakdown<T>>> = queries
        .par_iter()
        .map(|q| gallery.iter().map(|g| strategy_unchecked(q, g, strategy, opts)).collect())
        .collect();
    Ok(DistanceMatrix { rows: queries.len(), cols, strategy, entries: rows.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxgeom::ValidityVector;

    fn desc(k: usize, lo: usize, hi: usize, parts: Vec<Vec<f64>>, global: Vec<f64>) -> PartDescriptor<f64> {
        PartDescriptor::new(ValidityVector::horizontal_range(k, lo, hi).unwrap(), parts, global, None).unwrap()
    }

    fn hand_pair() -> (PartDescriptor<f64>, PartDescriptor<f64>) {
        let z = vec![0.0, 0.0];
        let q = desc(4, 1, 3, vec![vec![5.0, 5.0], vec![1.0, 0.0], z.clone(), vec![9.0, 9.0]], vec![0.0]);
        let g = desc(4, 2, 4, vec![vec![-3.0, 1.0], vec![0.0, 1.0], z, vec![2.0, 2.0]], vec![1.0]);
        (q, g)
    }

    #[test]
    fn partial_hand_example() {
        let (q, g) = hand_pair();
        let (d, n) = dist_partial(&q, &g, &MatchOptions::default()).unwrap();
        assert_eq!(n, 2);
        assert!((d.unwrap() - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-15);
        let b = dist_fused(&q, &g, &MatchOptions::default()).unwrap();
        assert!((b.fused - (std::f64::consts::SQRT_2 / 2.0 + 1.0)).abs() < 1e-15);
        assert!(!b.fallback_used);
    }

    #[test]
    fn disjoint_validity_falls_back() {
        let z = vec![vec![0.0]; 4];
        let q = desc(4, 1, 2, z.clone(), vec![0.0, 0.0]);
        let g = desc(4, 3, 4, z, vec![0.0, 2.0]);
        assert_eq!(dist_partial(&q, &g, &MatchOptions::default()).unwrap(), (None, 0));
        let b = dist_fused(&q, &g, &MatchOptions::default()).unwrap();
        assert_eq!(b.fused, 2.0);
        assert!(b.fallback_used);
        assert!(b.partial.is_none());
    }

    #[test]
    fn identical_descriptors_are_zero() {
        let (q, _) = hand_pair();
        for s in [Strategy::Fused].into_iter().chain(Strategy::ABLATION) {
            assert_eq!(dist_with_strategy(&q, &q, s, &MatchOptions::default()).unwrap().fused, 0.0);
        }
        let m = distance_matrix(
            std::slice::from_ref(&q),
            std::slice::from_ref(&q),
            Strategy::Fused,
            &MatchOptions::default(),
        )
        .unwrap();
        assert_eq!(m.values(), vec![0.0]);
    }

    #[test]
    fn mutual_region_pools_before_distance() {
        let (q, g) = hand_pair();
        let b = dist_with_strategy(&q, &g, Strategy::MutualRegion, &MatchOptions::default()).unwrap();
        // means over stripes 2..3: q (0.5, 0), g (0, 0.5)
        assert!((b.fused - 0.5f64.hypot(0.5)).abs() < 1e-15);
        let b = dist_with_strategy(&q, &g, Strategy::Stripe, &MatchOptions::default()).unwrap();
        let expect = (8.0f64.hypot(4.0) + 2.0f64.sqrt() + 0.0 + 7.0f64.hypot(7.0)) / 4.0;
        assert!((b.fused - expect).abs() < 1e-12);
    }

    #[test]
    fn normalization_switch() {
        let q = desc(1, 1, 1, vec![vec![2.0, 0.0]], vec![3.0, 0.0]);
        let g = desc(1, 1, 1, vec![vec![5.0, 0.0]], vec![0.0, 4.0]);
        let opts = MatchOptions { lambda: 1.0, normalize: true };
        let b = dist_fused(&q, &g, &opts).unwrap();
        assert_eq!(b.partial, Some(0.0));
        assert!((b.global - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let q = desc(2, 1, 2, vec![vec![0.0]; 2], vec![0.0]);
        let g = desc(3, 1, 3, vec![vec![0.0]; 3], vec![0.0]);
        assert!(matches!(
            distance_matrix(&[q], &[g], Strategy::Fused, &MatchOptions::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn strategy_names_parse() {
        for s in [Strategy::Fused].into_iter().chain(Strategy::ABLATION) {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("partial".parse::<Strategy>().is_err());
    }
}
