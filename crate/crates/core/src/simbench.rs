//! Seeded synthetic-occlusion benchmark for comparing matching strategies.
//!
//! Every identity owns a canonical `K x d` stripe matrix. Observations add
//! Gaussian noise and, with probability `p`, replace a contiguous run of
//! stripes at the top or bottom with background draws and mark them invalid.
//! Boxes are given perfect geometry so that only matching quality is measured.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{BoundingBox, ValidityVector};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, Detection, EvalOptions, EvalReport, GroundTruth, GtBox, Query, RankedResult};
use crate::matching::{distance_matrix, MatchOptions, Strategy};
use crate::partfeat::PartDescriptor;
use crate::scalar::mean_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_identities: usize,
    /// One query plus `obs_per_identity - 1` gallery observations.
    pub obs_per_identity: usize,
    pub k: usize,
    pub d: usize,
    pub occlusion_prob: f64,
    pub max_occluded_fraction: f64,
    pub sigma_id: f64,
    pub sigma_obs: f64,
    pub sigma_bg: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_identities: 100,
            obs_per_identity: 4,
            k: 7,
            d: 32,
            occlusion_prob: 0.6,
            max_occluded_fraction: 3.0 / 7.0,
            sigma_id: 1.0,
            sigma_obs: 0.6,
            sigma_bg: 1.0,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_identities < 1 {
            return fail("n_identities must be at least 1".into());
        }
        if self.n_identities > u32::MAX as usize {
            return fail("n_identities must fit in 32 bits".into());
        }
        if self.obs_per_identity < 2 {
            return fail("obs_per_identity must be at least 2 (one query, one gallery)".into());
        }
        if self.k < 1 || self.k > crate::boxgeom::MAX_HORIZONTAL_STRIPES {
            return fail(format!("k must be in 1..={}", crate::boxgeom::MAX_HORIZONTAL_STRIPES));
        }
        if self.d < 1 {
            return fail("d must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return fail(format!("occlusion_prob {} not in [0, 1]", self.occlusion_prob));
        }
        if !(0.0..1.0).contains(&self.max_occluded_fraction) {
            return fail(format!("max_occluded_fraction {} not in [0, 1)", self.max_occluded_fraction));
        }
        if !(self.sigma_id > 0.0 && self.sigma_id.is_finite()) {
            return fail("sigma_id must be positive".into());
        }
        for (name, s) in [("sigma_obs", self.sigma_obs), ("sigma_bg", self.sigma_bg)] {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("{name} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Longest occluded run, `floor(max_occluded_fraction * K)`.
    pub fn max_occluded_stripes(&self) -> usize {
        // Snap so that e.g. 3/7 * 7 is treated as exactly 3.
        let x = self.max_occluded_fraction * self.k as f64;
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            r as usize
        } else {
            x.floor() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Gallery,
}

/// Where an observation is occluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occlusion {
    None,
    Top(usize),
    Bottom(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimObservation {
    /// 1-based person id.
    pub identity: u32,
    pub role: Role,
    pub occlusion: Occlusion,
    /// Descriptor at the generating granularity; occluded stripes hold
    /// background draws and are marked invalid.
    pub descriptor: PartDescriptor<f64>,
}

impl SimObservation {
    /// Re-pools the stored stripes into `k` contiguous groups. A group is
    /// valid when any of its stripes is visible; the global feature is kept.
    pub fn coarsen(&self, k: usize) -> Result<PartDescriptor<f64>> {
        let fine = self.descriptor.k();
        if k == 0 || k > fine {
            return Err(Error::Config(format!("cannot pool {fine} stripes into {k}")));
        }
        if k == fine {
            return Ok(self.descriptor.clone());
        }
        let v = self.descriptor.validity();
        let mut parts = Vec::with_capacity(k);
        let mut flags = Vec::with_capacity(k);
        for j in 0..k {
            let (lo, hi) = (j * fine / k, (j + 1) * fine / k);
            parts.push(
                mean_of((lo..hi).map(|s| self.descriptor.raw_part(s)), self.descriptor.dim()).expect("non-empty group"),
            );
            flags.push((lo..hi).any(|s| v.is_slot_valid(s)));
        }
        PartDescriptor::new(
            ValidityVector::from_flags(flags, None)?,
            parts,
            self.descriptor.global().to_vec(),
            self.descriptor.label(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub queries: Vec<SimObservation>,
    pub gallery: Vec<SimObservation>,
}

fn normal(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))
}

fn generate_identity(cfg: &SimConfig, index: u32) -> Result<Vec<SimObservation>> {
    // Key from the seed, one ChaCha stream per identity.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let identity = index + 1;
    let (id_dist, obs_dist, bg_dist) = (normal(cfg.sigma_id)?, normal(cfg.sigma_obs)?, normal(cfg.sigma_bg)?);
    let (k, d) = (cfg.k, cfg.d);
    let max_len = cfg.max_occluded_stripes();
    let canonical: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| id_dist.sample(&mut rng)).collect()).collect();

    (0..cfg.obs_per_identity)
        .map(|o| {
            // Every random quantity is drawn whether or not it is used, so
            // changing `p` only changes which observations get occluded.
            let observed: Vec<Vec<f64>> =
                canonical.iter().map(|row| row.iter().map(|&c| c + obs_dist.sample(&mut rng)).collect()).collect();
            let background: Vec<Vec<f64>> =
                (0..k).map(|_| (0..d).map(|_| bg_dist.sample(&mut rng)).collect()).collect();
            let u: f64 = rng.random();
            let from_top: bool = rng.random();
            let len = if max_len > 0 { rng.random_range(1..=max_len) } else { 0 };

            let occlusion = if len > 0 && u < cfg.occlusion_prob {
                if from_top {
                    Occlusion::Top(len)
                } else {
                    Occlusion::Bottom(len)
                }
            } else {
                Occlusion::None
            };
            let (lo, hi) = match occlusion {
                Occlusion::None => (1, k),
                Occlusion::Top(n) => (n + 1, k),
                Occlusion::Bottom(n) => (1, k - n),
            };
            let stored: Vec<Vec<f64>> = (1..=k)
                .map(|s| if s >= lo && s <= hi { observed[s - 1].clone() } else { background[s - 1].clone() })
                .collect();
            let global = mean_of(stored.iter().map(Vec::as_slice), d).expect("k >= 1");
            let descriptor =
                PartDescriptor::new(ValidityVector::horizontal_range(k, lo, hi)?, stored, global, Some(identity))?;
            Ok(SimObservation {
                identity,
                role: if o == 0 { Role::Query } else { Role::Gallery },
                occlusion,
                descriptor,
            })
        })
        .collect()
}

/// Generates queries and gallery; identical configs give identical data.
pub fn generate(cfg: &SimConfig) -> Result<SimDataset> {
    cfg.validate()?;
    let per_identity: Vec<Vec<SimObservation>> =
        (0..cfg.n_identities as u32).into_par_iter().map(|id| generate_identity(cfg, id)).collect::<Result<_>>()?;
    let mut queries = Vec::with_capacity(cfg.n_identities);
    let mut gallery = Vec::with_capacity(cfg.n_identities * (cfg.obs_per_identity - 1));
    for obs in per_identity.into_iter().flatten() {
        match obs.role {
            Role::Query => queries.push(obs),
            Role::Gallery => gallery.push(obs),
        }
    }
    Ok(SimDataset { queries, gallery })
}

/// Every simulated box uses the same geometry in its own frame.
pub fn sim_box(frame_id: String) -> BoundingBox<f64> {
    BoundingBox::new(frame_id, 0.0, 0.0, 64.0, 128.0).expect("static box is valid")
}

pub fn query_frame(i: usize) -> String {
    format!("q{i}")
}

pub fn gallery_frame(j: usize) -> String {
    format!("g{j}")
}

/// Ground truth, detections and queries for a generated dataset.
pub struct SimProtocol {
    pub ground_truth: GroundTruth<f64>,
    pub detections: Vec<Detection<f64>>,
    pub queries: Vec<Query<f64>>,
}

impl SimProtocol {
    pub fn new(data: &SimDataset) -> Result<Self> {
        let mut ground_truth = GroundTruth::new();
        let mut detections = Vec::with_capacity(data.gallery.len());
        for (j, g) in data.gallery.iter().enumerate() {
            let bbox = sim_box(gallery_frame(j));
            ground_truth.add(GtBox { bbox: bbox.clone(), person_id: Some(g.identity) })?;
            detections.push(Detection { box_id: j as u64, bbox });
        }
        let queries = data
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| Query { query_id: query_frame(i), person_id: q.identity, bbox: sim_box(query_frame(i)) })
            .collect();
        Ok(Self { ground_truth, detections, queries })
    }

    pub fn evaluate_matrix(&self, values: &[f64], cols: usize) -> Result<EvalReport> {
        let ranked = self
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| RankedResult::from_distances(q.clone(), &self.detections, &values[i * cols..(i + 1) * cols]))
            .collect::<Result<Vec<_>>>()?;
        Ok(evaluate(&ranked, &self.ground_truth, &EvalOptions::default()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: Strategy,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
}

fn descriptors(obs: &[SimObservation], k: usize) -> Result<Vec<PartDescriptor<f64>>> {
    obs.iter().map(|o| o.coarsen(k)).collect()
}

fn score(
    protocol: &SimProtocol,
    q: &[PartDescriptor<f64>],
    g: &[PartDescriptor<f64>],
    strategy: Strategy,
) -> Result<EvalReport> {
    let m = distance_matrix(q, g, strategy, &MatchOptions::default())?;
    protocol.evaluate_matrix(&m.values(), m.cols())
}

/// mAP and rank-1 of the five matching strategies on one generated dataset.
pub fn ablation_on(data: &SimDataset) -> Result<Vec<AblationRow>> {
    let protocol = SimProtocol::new(data)?;
    let q: Vec<_> = data.queries.iter().map(|o| o.descriptor.clone()).collect();
    let g: Vec<_> = data.gallery.iter().map(|o| o.descriptor.clone()).collect();
    Strategy::ABLATION
        .into_iter()
        .map(|strategy| {
            let r = score(&protocol, &q, &g, strategy)?;
            Ok(AblationRow { strategy, map: r.map, rank1: r.rank1() })
        })
        .collect()
}

pub fn run_ablation(cfg: &SimConfig) -> Result<Vec<AblationRow>> {
    ablation_on(&generate(cfg)?)
}

/// Mutual-stripe matching at each stripe count, pooling the generated
/// stripes down from `cfg.k`.
pub fn sweep_k_on(data: &SimDataset, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    let protocol = SimProtocol::new(data)?;
    k_values
        .iter()
        .map(|&k| {
            let q = descriptors(&data.queries, k)?;
            let g = descriptors(&data.gallery, k)?;
            let r = score(&protocol, &q, &g, Strategy::MutualStripe)?;
            Ok(SweepRow { k, map: r.map, rank1: r.rank1() })
        })
        .collect()
}

pub fn sweep_k(cfg: &SimConfig, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    if let Some(&bad) = k_values.iter().find(|&&k| k == 0 || k > cfg.k) {
        return Err(Error::Config(format!("sweep K={bad} outside 1..={}", cfg.k)));
    }
    sweep_k_on(&generate(cfg)?, k_values)
}
