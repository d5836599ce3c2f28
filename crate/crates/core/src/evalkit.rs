//! Person-search evaluation: IoU-gated true positives, average precision,
//! mAP and CMC.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{iou, BoundingBox};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A retrieved box counts only if its IoU with the ground truth exceeds this.
pub const DEFAULT_IOU_THRESH: f64 = 0.5;
pub const DEFAULT_CMC_DEPTH: usize = 10;

/// One annotated person box. `person_id: None` marks an unidentified pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct GtBox<T> {
    pub bbox: BoundingBox<T>,
    pub person_id: Option<u32>,
}

/// Gallery ground truth indexed by frame.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth<T> {
    frames: BTreeMap<String, Vec<GtBox<T>>>,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn new() -> Self {
        Self { frames: BTreeMap::new() }
    }

    /// Adds a box; a labeled identity must be positive and may appear at most once per frame.
    pub fn add(&mut self, gt: GtBox<T>) -> Result<()> {
        if gt.person_id == Some(0) {
            return Err(Error::Format(format!("person id 0 in frame {}; ids start at 1", gt.bbox.frame_id())));
        }
        let boxes = self.frames.entry(gt.bbox.frame_id().to_owned()).or_default();
        if let Some(pid) = gt.person_id {
            if boxes.iter().any(|b| b.person_id == Some(pid)) {
                return Err(Error::Format(format!("person {pid} annotated twice in frame {}", gt.bbox.frame_id())));
            }
        }
        boxes.push(gt);
        Ok(())
    }

    pub fn frame(&self, frame_id: &str) -> &[GtBox<T>] {
        self.frames.get(frame_id).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GtBox<T>> {
        self.frames.values().flatten()
    }
}

/// A gallery detection; `box_id` breaks distance ties.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub box_id: u64,
    pub bbox: BoundingBox<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query<T> {
    pub query_id: String,
    pub person_id: u32,
    pub bbox: BoundingBox<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry<T> {
    pub detection: Detection<T>,
    pub distance: T,
}

/// Gallery detections ordered by ascending distance, ties by `box_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult<T> {
    query: Query<T>,
    entries: Vec<RankedEntry<T>>,
}

fn same_box<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> bool {
    a.frame_id() == b.frame_id() && a.to_array() == b.to_array()
}

impl<T: Scalar> RankedResult<T> {
    /// Ranks `detections` by `distances`. The query's own box is dropped.
    pub fn from_distances(query: Query<T>, detections: &[Detection<T>], distances: &[T]) -> Result<Self> {
        if detections.len() != distances.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} detections but {} distances",
                detections.len(),
                distances.len()
            )));
        }
        if distances.iter().any(|d| d.is_nan()) {
            return Err(Error::Format(format!("NaN distance for query {}", query.query_id)));
        }
        let mut entries: Vec<RankedEntry<T>> = detections
            .iter()
            .zip(distances)
            .filter(|(det, _)| !same_box(&det.bbox, &query.bbox))
            .map(|(det, &distance)| RankedEntry { detection: det.clone(), distance })
            .collect();
        entries.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .unwrap_or(Ordering::Equal)
                .then(a.detection.box_id.cmp(&b.detection.box_id))
        });
        Ok(Self { query, entries })
    }

    pub fn query(&self) -> &Query<T> {
        &self.query
    }

    pub fn entries(&self) -> &[RankedEntry<T>] {
        &self.entries
    }
}

/// Ground-truth boxes of `person_id`, excluding the query's own box.
fn positives<'a, T: Scalar>(gt: &'a GroundTruth<T>, query: &'a Query<T>) -> impl Iterator<Item = &'a GtBox<T>> + 'a {
    gt.iter().filter(move |g| g.person_id == Some(query.person_id) && !same_box(&g.bbox, &query.bbox))
}

/// Walks the ranking and marks each detection as a true positive when it
/// overlaps an unconsumed same-identity ground-truth box in the same frame by
/// more than `iou_thresh`. Each ground-truth box is consumed at most once.
pub fn match_detections<T: Scalar>(
    ranked: &RankedResult<T>,
    gt: &GroundTruth<T>,
    person_id: u32,
    iou_thresh: T,
) -> Vec<bool> {
    let mut consumed: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    ranked
        .entries
        .iter()
        .map(|entry| {
            let frame = entry.detection.bbox.frame_id();
            let boxes = gt.frame(frame);
            let used = consumed.entry(frame).or_insert_with(|| vec![false; boxes.len()]);
            let mut best: Option<(usize, T)> = None;
            for (idx, g) in boxes.iter().enumerate() {
                if used[idx] || g.person_id != Some(person_id) || same_box(&g.bbox, &ranked.query.bbox) {
                    continue;
                }
                let overlap = iou(&entry.detection.bbox, &g.bbox);
                if overlap > iou_thresh && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((idx, overlap));
                }
            }
            match best {
                Some((idx, _)) => {
                    used[idx] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Non-interpolated AP: `sum_k precision@k * rel[k] / n_positives`.
pub fn average_precision(relevance: &[bool], n_positives: usize) -> Result<f64> {
    if n_positives == 0 {
        return Err(Error::NoPositives("relevance list".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / n_positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions<T> {
    pub iou_thresh: T,
    pub cmc_depth: usize,
}

impl<T: Scalar> Default for EvalOptions<T> {
    fn default() -> Self {
        Self { iou_thresh: T::lit(DEFAULT_IOU_THRESH), cmc_depth: DEFAULT_CMC_DEPTH }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAp {
    pub query_id: String,
    /// `None` when the query has no ground-truth positive and was skipped.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "mAP")]
    pub map: f64,
    /// `cmc[r]` is the fraction of evaluated queries with a hit in the top `r + 1`.
    pub cmc: Vec<f64>,
    pub per_query_ap: Vec<QueryAp>,
    pub n_queries: usize,
    /// Queries with at least one positive; the denominator of mAP and CMC.
    pub n_evaluated: usize,
}

impl EvalReport {
    pub fn rank1(&self) -> f64 {
        self.cmc.first().copied().unwrap_or(0.0)
    }
}

struct QueryOutcome {
    ap: Option<f64>,
    first_hit: Option<usize>,
}

fn evaluate_query<T: Scalar>(r: &RankedResult<T>, gt: &GroundTruth<T>, iou_thresh: T) -> QueryOutcome {
    let n_pos = positives(gt, &r.query).count();
    let rel = match_detections(r, gt, r.query.person_id, iou_thresh);
    QueryOutcome { ap: average_precision(&rel, n_pos).ok(), first_hit: rel.iter().position(|&x| x) }
}

/// mAP and CMC over all queries. Queries without positives are listed with
/// `ap: None` and excluded from both aggregates.
pub fn evaluate<T: Scalar>(ranked: &[RankedResult<T>], gt: &GroundTruth<T>, opts: &EvalOptions<T>) -> EvalReport {
    let outcomes: Vec<QueryOutcome> = ranked.par_iter().map(|r| evaluate_query(r, gt, opts.iou_thresh)).collect();
    let evaluated: Vec<&QueryOutcome> = outcomes.iter().filter(|o| o.ap.is_some()).collect();
    let n_evaluated = evaluated.len();
    let (map, cmc) = if n_evaluated == 0 {
        (0.0, vec![0.0; opts.cmc_depth])
    } else {
        let map = evaluated.iter().map(|o| o.ap.unwrap_or(0.0)).sum::<f64>() / n_evaluated as f64;
        let cmc = (0..opts.cmc_depth)
            .map(|r| {
                evaluated.iter().filter(|o| o.first_hit.is_some_and(|h| h <= r)).count() as f64 / n_evaluated as f64
            })
            .collect();
        (map, cmc)
    };
    EvalReport {
        map,
        cmc,
        per_query_ap: ranked
            .iter()
            .zip(&outcomes)
            .map(|(r, o)| QueryAp { query_id: r.query.query_id.clone(), ap: o.ap })
            .collect(),
        n_queries: ranked.len(),
        n_evaluated,
    }
}
