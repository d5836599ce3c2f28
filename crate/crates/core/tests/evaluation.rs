use apnet_core::boxgeom::BoundingBox;
use apnet_core::evalkit::{
    average_precision, evaluate, match_detections, Detection, EvalOptions, GroundTruth, GtBox, Query, RankedResult,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// AP as the area under the step precision/recall curve.
fn ap_oracle(rel: &[bool], n_pos: usize) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..rel.len() {
        let hits = rel[..=k].iter().filter(|&&r| r).count();
        let recall = hits as f64 / n_pos as f64;
        let precision = hits as f64 / (k + 1) as f64;
        area += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    area
}

fn overlap(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

struct Scene {
    gt: Vec<(String, [f64; 4], Option<u32>)>,
    dets: Vec<(u64, String, [f64; 4])>,
    queries: Vec<(String, u32, String, [f64; 4])>,
    dist: Vec<Vec<f64>>,
}

fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let n_frames = rng.random_range(2..6);
    let n_ids = rng.random_range(2..5);
    let mut gt = Vec::new();
    for f in 0..n_frames {
        let mut ids: Vec<u32> = (1..=n_ids).collect();
        for slot in 0..rng.random_range(1..4) {
            let pid = if rng.random_bool(0.2) || ids.is_empty() {
                None
            } else {
                Some(ids.remove(rng.random_range(0..ids.len())))
            };
            let x = slot as f64 * 60.0 + rng.random_range(0.0..10.0);
            gt.push((format!("f{f}"), [x, 0.0, x + 40.0, 100.0], pid));
        }
    }
    let mut dets = Vec::new();
    for (frame, b, _) in &gt {
        for _ in 0..rng.random_range(0..3) {
            // jitter ranges from tight overlap to a miss
            let s = rng.random_range(0.0..30.0);
            let bb = [b[0] + s, b[1], b[2] + s, b[3]];
            dets.push((dets.len() as u64, frame.clone(), bb));
        }
        if rng.random_bool(0.3) {
            dets.push((dets.len() as u64, frame.clone(), *b));
        }
    }
    let mut queries = Vec::new();
    for (frame, b, pid) in &gt {
        if let Some(p) = pid {
            if rng.random_bool(0.5) {
                queries.push((format!("q{}", queries.len()), *p, frame.clone(), *b));
            }
        }
    }
    let dist = queries.iter().map(|_| dets.iter().map(|_| rng.random_range(0..8) as f64 * 0.5).collect()).collect();
    Scene { gt, dets, queries, dist }
}

/// Brute-force reference: sort, scan every ground-truth box by hand, then AP and CMC.
fn evaluate_oracle(s: &Scene, thresh: f64, depth: usize) -> (f64, Vec<f64>, Vec<Option<f64>>) {
    let mut aps = Vec::new();
    let mut first_hits = Vec::new();
    for (qi, (_, pid, qframe, qbox)) in s.queries.iter().enumerate() {
        let is_query = |frame: &str, b: &[f64; 4]| frame == qframe && b == qbox;
        let n_pos = s.gt.iter().filter(|(f, b, p)| *p == Some(*pid) && !is_query(f, b)).count();
        if n_pos == 0 {
            aps.push(None);
            continue;
        }
        let mut order: Vec<usize> = (0..s.dets.len()).filter(|&j| !is_query(&s.dets[j].1, &s.dets[j].2)).collect();
        order.sort_by(|&a, &b| s.dist[qi][a].total_cmp(&s.dist[qi][b]).then(s.dets[a].0.cmp(&s.dets[b].0)));
        let mut used = vec![false; s.gt.len()];
        let mut rel = Vec::new();
        for j in order {
            let (_, frame, b) = &s.dets[j];
            let mut best: Option<(usize, f64)> = None;
            for (gi, (gf, gb, gp)) in s.gt.iter().enumerate() {
                if used[gi] || gf != frame || *gp != Some(*pid) || is_query(gf, gb) {
                    continue;
                }
                let o = overlap(*b, *gb);
                if o > thresh && best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((gi, o));
                }
            }
            if let Some((gi, _)) = best {
                used[gi] = true;
            }
            rel.push(best.is_some());
        }
        aps.push(Some(ap_oracle(&rel, n_pos)));
        first_hits.push(rel.iter().position(|&r| r));
    }
    let n = first_hits.len();
    let map = if n == 0 { 0.0 } else { aps.iter().flatten().sum::<f64>() / n as f64 };
    let cmc = (0..depth)
        .map(|r| {
            if n == 0 {
                0.0
            } else {
                first_hits.iter().filter(|h| h.is_some_and(|h| h <= r)).count() as f64 / n as f64
            }
        })
        .collect();
    (map, cmc, aps)
}

fn run_library(s: &Scene, opts: &EvalOptions<f64>) -> apnet_core::evalkit::EvalReport {
    let mut gt = GroundTruth::new();
    for (f, b, p) in &s.gt {
        gt.add(GtBox { bbox: BoundingBox::from_array(f.clone(), *b).unwrap(), person_id: *p }).unwrap();
    }
    let dets: Vec<_> = s
        .dets
        .iter()
        .map(|(id, f, b)| Detection { box_id: *id, bbox: BoundingBox::from_array(f.clone(), *b).unwrap() })
        .collect();
    let ranked: Vec<_> = s
        .queries
        .iter()
        .zip(&s.dist)
        .map(|((qid, pid, f, b), d)| {
            let q =
                Query { query_id: qid.clone(), person_id: *pid, bbox: BoundingBox::from_array(f.clone(), *b).unwrap() };
            RankedResult::from_distances(q, &dets, d).unwrap()
        })
        .collect();
    evaluate(&ranked, &gt, opts)
}

#[test]
fn evaluator_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let opts = EvalOptions::default();
    for _ in 0..200 {
        let s = random_scene(&mut rng);
        let report = run_library(&s, &opts);
        let (map, cmc, aps) = evaluate_oracle(&s, 0.5, opts.cmc_depth);
        assert!((report.map - map).abs() < 1e-9, "{} vs {map}", report.map);
        for (a, b) in report.cmc.iter().zip(&cmc) {
            assert!((a - b).abs() < 1e-9);
        }
        for (got, want) in report.per_query_ap.iter().zip(&aps) {
            match (got.ap, want) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
                (None, None) => {}
                other => panic!("{other:?}"),
            }
        }
    }
}

#[test]
fn iou_gate_is_strict() {
    let mut gt = GroundTruth::new();
    let g = BoundingBox::new("f", 0.0, 0.0, 10.0, 10.0).unwrap();
    gt.add(GtBox { bbox: g, person_id: Some(1) }).unwrap();
    // IoU exactly 0.5
    let half = BoundingBox::new("f", 0.0, 0.0, 10.0, 5.0).unwrap();
    let q = Query { query_id: "q".into(), person_id: 1, bbox: BoundingBox::new("other", 0.0, 0.0, 1.0, 1.0).unwrap() };
    let r = RankedResult::from_distances(q, &[Detection { box_id: 0, bbox: half }], &[0.0]).unwrap();
    assert_eq!(match_detections(&r, &gt, 1, 0.5), vec![false]);
    assert_eq!(match_detections(&r, &gt, 1, 0.49), vec![true]);
}

#[test]
fn each_gt_box_consumed_once() {
    let mut gt = GroundTruth::new();
    gt.add(GtBox { bbox: BoundingBox::new("f", 0.0, 0.0, 10.0, 10.0).unwrap(), person_id: Some(3) }).unwrap();
    let dets: Vec<_> = (0..3)
        .map(|i| Detection { box_id: i, bbox: BoundingBox::new("f", 0.0, 0.0, 10.0, 10.0 + i as f64).unwrap() })
        .collect();
    let q = Query { query_id: "q".into(), person_id: 3, bbox: BoundingBox::new("g", 0.0, 0.0, 1.0, 1.0).unwrap() };
    let r = RankedResult::from_distances(q, &dets, &[0.3, 0.1, 0.2]).unwrap();
    assert_eq!(match_detections(&r, &gt, 3, 0.5), vec![true, false, false]);
    assert_eq!(r.entries()[0].detection.box_id, 1);
}

proptest! {
    #[test]
    fn ap_matches_curve_area(rel in prop::collection::vec(any::<bool>(), 1..40), extra in 0usize..5) {
        let hits = rel.iter().filter(|&&r| r).count();
        let n_pos = hits + extra;
        prop_assume!(n_pos > 0);
        let ap = average_precision(&rel, n_pos).unwrap();
        prop_assert!((ap - ap_oracle(&rel, n_pos)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn promoting_a_hit_never_lowers_ap(rel in prop::collection::vec(any::<bool>(), 2..40), at in 1usize..40) {
        let at = at % rel.len();
        prop_assume!(at > 0 && rel[at] && !rel[at - 1]);
        let n_pos = rel.iter().filter(|&&r| r).count();
        let mut better = rel.clone();
        better.swap(at, at - 1);
        prop_assert!(average_precision(&better, n_pos).unwrap() >= average_precision(&rel, n_pos).unwrap());
    }

    #[test]
    fn cmc_is_monotone_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scene(&mut rng);
        let report = run_library(&s, &EvalOptions::default());
        prop_assert!(report.cmc.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(report.cmc.iter().all(|c| (0.0..=1.0).contains(c)));
        prop_assert!((0.0..=1.0).contains(&report.map));
    }
}
