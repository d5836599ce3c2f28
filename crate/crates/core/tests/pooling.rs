use apnet_core::boxgeom::ValidityVector;
use apnet_core::partfeat::{gap, id_loss, rap, row_project, FeatureMap, Kernel, PrototypeBank, RowProjection};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> FeatureMap<f64> {
    FeatureMap::from_fn(h, w, d, |_, _, _| rng.random_range(-3.0..3.0)).unwrap()
}

fn random_projection(rng: &mut ChaCha8Rng, rows: usize, din: usize, dout: usize, bias: bool) -> RowProjection<f64> {
    let kernels = (0..rows)
        .map(|_| {
            let w = (0..din * dout).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = (0..dout).map(|_| if bias { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
            Kernel::new(din, dout, w, b).unwrap()
        })
        .collect();
    RowProjection::new(kernels).unwrap()
}

/// Scalar-loop reference for the per-row projection.
fn project_oracle(t: &FeatureMap<f64>, p: &RowProjection<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..t.height() {
        for j in 0..t.width() {
            for o in 0..p.out_dim() {
                let mut acc = p.kernel(i).bias()[o];
                for c in 0..t.depth() {
                    acc += t.at(i, j)[c] * p.kernel(i).weight(c, o);
                }
                out.push(acc);
            }
        }
    }
    out
}

#[test]
fn row_project_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let t = random_map(&mut rng, 2, 2, 3);
        let p = random_projection(&mut rng, 2, 3, 2, true);
        let got = row_project(&t, &p).unwrap();
        for (a, b) in got.data().iter().zip(project_oracle(&t, &p)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn shared_kernels_equal_global_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = random_map(&mut rng, 7, 3, 4);
    let single = random_projection(&mut rng, 1, 4, 5, true);
    let shared = RowProjection::shared(single.kernel(0).clone(), 7).unwrap();
    let got = row_project(&t, &shared).unwrap();
    for i in 0..7 {
        for j in 0..3 {
            let one_pixel = FeatureMap::new(1, 1, 4, t.at(i, j).to_vec()).unwrap();
            assert_eq!(got.at(i, j), row_project(&one_pixel, &single).unwrap().data());
        }
    }
}

#[test]
fn gap_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_map(&mut rng, 3, 4, 2);
    let mut expect = [0.0; 2];
    for i in 0..3 {
        for j in 0..4 {
            for (e, v) in expect.iter_mut().zip(m.at(i, j)) {
                *e += v;
            }
        }
    }
    for (g, e) in gap(&m).iter().zip(expect) {
        assert!((g - e / 12.0).abs() < 1e-12);
    }
}

#[test]
fn rap_mean_equals_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (h, k) in [(7, 7), (14, 7), (6, 3)] {
        let m = random_map(&mut rng, h, 5, 3);
        let pooled = rap(&m, &ValidityVector::full(k, None)).unwrap();
        let g = gap(&m);
        for c in 0..3 {
            let mean = pooled.iter().map(|(_, f)| f[c]).sum::<f64>() / k as f64;
            assert!((mean - g[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn id_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let step = 1e-5;
    for _ in 0..50 {
        let d = rng.random_range(2..12);
        let c = rng.random_range(2..8);
        let protos = (0..c).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let bank = PrototypeBank::new(protos, rng.random_range(0.1..1.0)).unwrap();
        let f: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let label = rng.random_range(0..c);
        let (_, grad) = id_loss(&f, label, &bank).unwrap();
        for i in 0..d {
            let at = |h: f64| {
                let mut g = f.clone();
                g[i] += h;
                id_loss(&g, label, &bank).unwrap().0
            };
            let fd = (at(step) - at(-step)) / (2.0 * step);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "dim {i}: fd {fd} vs analytic {}", grad[i]);
        }
    }
}

proptest! {
    #[test]
    fn row_project_is_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t1 = random_map(&mut rng, 3, 2, 4);
        let t2 = random_map(&mut rng, 3, 2, 4);
        let p = random_projection(&mut rng, 3, 4, 3, false);
        let mix = FeatureMap::new(3, 2, 4, t1.data().iter().zip(t2.data()).map(|(x, y)| a * x + b * y).collect()).unwrap();
        let lhs = row_project(&mix, &p).unwrap();
        let (r1, r2) = (row_project(&t1, &p).unwrap(), row_project(&t2, &p).unwrap());
        for ((l, x), y) in lhs.data().iter().zip(r1.data()).zip(r2.data()) {
            prop_assert!((l - (a * x + b * y)).abs() < 1e-9);
        }
    }

    #[test]
    fn rap_mean_equals_gap_on_valid_rows(seed in any::<u64>(), lo in 1usize..=7, len in 1usize..=7) {
        let hi = (lo + len - 1).min(7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_map(&mut rng, 7, 3, 2);
        let v = ValidityVector::horizontal_range(7, lo, hi).unwrap();
        let pooled = rap(&m, &v).unwrap();
        prop_assert_eq!(pooled.len(), hi - lo + 1);
        let masked = apnet_core::partfeat::gap_masked(&m, &v).unwrap();
        for c in 0..2 {
            let mean = pooled.iter().map(|(_, f)| f[c]).sum::<f64>() / pooled.len() as f64;
            prop_assert!((mean - masked[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn id_loss_ignores_feature_scale(seed in any::<u64>(), s in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let protos = (0..4).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let bank = PrototypeBank::new(protos, 0.1).unwrap();
        let f: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = f.iter().map(|x| x * s).collect();
        let (a, _) = id_loss(&f, 1, &bank).unwrap();
        let (b, _) = id_loss(&scaled, 1, &bank).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
