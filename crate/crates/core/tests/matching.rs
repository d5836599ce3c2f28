use apnet_core::boxgeom::ValidityVector;
use apnet_core::matching::{dist_fused, dist_partial, dist_with_strategy, distance_matrix, MatchOptions, Strategy};
use apnet_core::partfeat::PartDescriptor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_desc(rng: &mut ChaCha8Rng, k: usize, kv: Option<usize>, d: usize) -> PartDescriptor<f64> {
    let run = |rng: &mut ChaCha8Rng, n: usize| {
        let lo = rng.random_range(1..=n);
        let hi = rng.random_range(lo..=n);
        (1..=n).map(|i| i >= lo && i <= hi).collect::<Vec<_>>()
    };
    let h = run(rng, k);
    let v = kv.map(|n| run(rng, n));
    let validity = ValidityVector::from_flags(h, v).unwrap();
    let parts = (0..validity.slot_count()).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let global = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    PartDescriptor::new(validity, parts, global, None).unwrap()
}

/// Independent reference: walk every slot index, check both flags, sum square roots.
fn partial_oracle(q: &PartDescriptor<f64>, g: &PartDescriptor<f64>) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for s in 0..q.validity().slot_count() {
        if let (Some(a), Some(b)) = (q.part(s), g.part(s)) {
            let mut sq = 0.0;
            for i in 0..a.len() {
                sq += (a[i] - b[i]) * (a[i] - b[i]);
            }
            total += sq.sqrt();
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}

#[test]
fn partial_distance_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let opts = MatchOptions::default();
    for _ in 0..500 {
        let kv = if rng.random_bool(0.3) { Some(3) } else { None };
        let q = random_desc(&mut rng, 7, kv, 16);
        let g = random_desc(&mut rng, 7, kv, 16);
        let (got, n) = dist_partial(&q, &g, &opts).unwrap();
        match (got, partial_oracle(&q, &g)) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
            (None, None) => assert_eq!(n, 0),
            other => panic!("mismatch {other:?}"),
        }
    }
}

#[test]
fn matrix_equals_pairwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let qs: Vec<_> = (0..6).map(|_| random_desc(&mut rng, 7, None, 8)).collect();
    let gs: Vec<_> = (0..9).map(|_| random_desc(&mut rng, 7, None, 8)).collect();
    let opts = MatchOptions { lambda: 0.7, normalize: false };
    for strategy in [Strategy::Fused].into_iter().chain(Strategy::ABLATION) {
        let m = distance_matrix(&qs, &gs, strategy, &opts).unwrap();
        assert_eq!((m.rows(), m.cols()), (6, 9));
        for (i, q) in qs.iter().enumerate() {
            for (j, g) in gs.iter().enumerate() {
                let single = dist_with_strategy(q, g, strategy, &opts).unwrap();
                assert_eq!(m.get(i, j), &single);
                if strategy == Strategy::Fused {
                    assert_eq!(&single, &dist_fused(q, g, &opts).unwrap());
                }
            }
        }
    }
}

#[test]
fn matrix_is_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let qs: Vec<_> = (0..40).map(|_| random_desc(&mut rng, 7, Some(2), 8)).collect();
    let gs: Vec<_> = (0..30).map(|_| random_desc(&mut rng, 7, Some(2), 8)).collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| distance_matrix(&qs, &gs, Strategy::Fused, &MatchOptions::default()).unwrap())
    };
    let one = run(1);
    let four = run(4);
    let bits =
        |m: &apnet_core::matching::DistanceMatrix<f64>| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&one), bits(&four));
}

proptest! {
    #[test]
    fn partial_is_symmetric_and_zero_on_self(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_desc(&mut rng, 7, Some(3), 6);
        let g = random_desc(&mut rng, 7, Some(3), 6);
        let opts = MatchOptions::default();
        prop_assert_eq!(dist_partial(&q, &g, &opts).unwrap(), dist_partial(&g, &q, &opts).unwrap());
        let (selfd, n) = dist_partial(&q, &q, &opts).unwrap();
        prop_assert_eq!(selfd, Some(0.0));
        prop_assert_eq!(n, q.validity().valid_count());
    }

    #[test]
    fn identical_extra_part_never_increases(seed in any::<u64>(), lo in 2usize..=7, len in 0usize..6) {
        let hi = (lo + len).min(7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_parts = || (0..7).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()).collect::<Vec<_>>();
        let (mut pq, mut pg) = (rand_parts(), rand_parts());
        let opts = MatchOptions::default();
        let make = |parts: &Vec<Vec<f64>>, from: usize| {
            PartDescriptor::new(ValidityVector::horizontal_range(7, from, hi).unwrap(), parts.clone(), vec![0.0; 6], None).unwrap()
        };
        let (before, n) = dist_partial(&make(&pq, lo), &make(&pg, lo), &opts).unwrap();
        // widen both runs by one stripe that carries identical features
        pq[lo - 2] = vec![0.25; 6];
        pg[lo - 2] = vec![0.25; 6];
        let (after, n2) = dist_partial(&make(&pq, lo - 1), &make(&pg, lo - 1), &opts).unwrap();
        prop_assert_eq!(n2, n + 1);
        prop_assert!(after.unwrap() <= before.unwrap());
    }

    #[test]
    fn fused_monotone_in_lambda(seed in any::<u64>(), l1 in 0.0..5.0f64, l2 in 0.0..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_desc(&mut rng, 7, None, 6);
        let g = random_desc(&mut rng, 7, None, 6);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = dist_fused(&q, &g, &MatchOptions { lambda: lo, normalize: false }).unwrap();
        let b = dist_fused(&q, &g, &MatchOptions { lambda: hi, normalize: false }).unwrap();
        prop_assert!(a.fused <= b.fused);
        prop_assert_eq!(a.fallback_used, a.mutual_count == 0);
    }
}
