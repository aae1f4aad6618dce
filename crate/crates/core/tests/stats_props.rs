use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundmem_core::grid::Matrix;
use soundmem_core::stats::{spearman, Dataset, ShapleyConfig};

/// Average ranks by counting, O(n²).
fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

#[test]
fn spearman_matches_brute_force_on_a_thousand_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1000 {
        let n = rng.gen_range(3..=50);
        // Half the draws come from a small alphabet to force ties.
        let levels = if rng.gen_bool(0.5) { 5 } else { 1_000_000 };
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.37 - 3.0).collect();
        if is_constant(&a) || is_constant(&b) {
            continue;
        }
        let want = naive_pearson(&naive_ranks(&a), &naive_ranks(&b));
        worst = worst.max((spearman(&a, &b) - want).abs());
        checked += 1;
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

proptest! {
    #[test]
    fn spearman_is_bounded_and_symmetric(v in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 3..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        prop_assume!(!is_constant(&a) && !is_constant(&b));
        let r = spearman(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - spearman(&b, &a)).abs() <= 1e-15);
        prop_assert!((spearman(&a, &a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(v in prop::collection::vec((-50f64..50.0, -50f64..50.0), 3..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        prop_assume!(!is_constant(&a) && !is_constant(&b));
        let warped: Vec<f64> = a.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        prop_assert!((spearman(&a, &b) - spearman(&warped, &b)).abs() <= 1e-12);
    }

    #[test]
    fn standardization_round_trips(
        rows in 2usize..30,
        cols in 1usize..8,
        seed in any::<u64>(),
        scale in 1e-3f64..1e3,
        shift in -1e3f64..1e3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0) * scale + shift);
        let names = (0..cols).map(|c| format!("f{c}")).collect();
        let ds = Dataset::new(names, x.clone(), vec![0.0; rows]).unwrap();
        let (z, dropped) = ds.standardized();
        prop_assert!(dropped.is_empty());
        let s = z.standardization.clone().unwrap();
        for r in 0..rows {
            let mut row = z.x.row(r).to_vec();
            s.invert(&mut row);
            for (c, v) in row.iter().enumerate() {
                let want = x.get(r, c);
                prop_assert!((v - want).abs() <= 1e-12 * want.abs().max(1.0), "{v} vs {want}");
            }
            s.apply(&mut row);
            for (c, v) in row.iter().enumerate() {
                prop_assert!((v - z.x.get(r, c)).abs() <= 1e-9);
            }
        }
        for c in 0..cols {
            let col = z.x.column(c);
            let mean = col.iter().sum::<f64>() / rows as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
            prop_assert!(mean.abs() <= 1e-9);
            prop_assert!((var - 1.0).abs() <= 1e-9);
        }
    }
}

fn importance_data(seed: u64) -> Dataset {
    let (n, p) = (50, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
    let y = (0..n)
        .map(|r| 3.0 * x.get(r, 0) + 1.5 * x.get(r, 1) - x.get(r, 2) + 0.2 * rng.gen_range(-1.0..1.0))
        .collect();
    Dataset::new((0..p).map(|c| format!("f{c:02}")).collect(), x, y).unwrap()
}

fn order(ds: &Dataset, seed: u64) -> Vec<String> {
    let cfg = ShapleyConfig {
        iterations: 200,
        seed,
        ..ShapleyConfig::default()
    };
    soundmem_core::stats::shapley_importance(ds, &cfg)
        .unwrap()
        .features
        .into_iter()
        .map(|f| f.feature)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn importance_order_survives_affine_rescaling(
        seed in 0u64..1000,
        scales in prop::collection::vec(0.01f64..100.0, 12),
        shifts in prop::collection::vec(-1e3f64..1e3, 12),
    ) {
        let ds = importance_data(seed);
        let mut moved = ds.clone();
        moved.x = Matrix::from_fn(ds.n_samples(), ds.n_features(), |r, c| ds.x.get(r, c) * scales[c] + shifts[c]);
        let before = order(&ds, seed);
        prop_assert_eq!(before[0].as_str(), "f00");
        prop_assert_eq!(before, order(&moved, seed));
    }
}
