use latentmv_core::data::{
    filter_universe, generate_synthetic, rank_transform, split_train_validation, Month, ReturnsPanel, UniverseRules,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows() as f64;
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.sum() / t;
        col.add_scalar_mut(-m);
    }
    c.transpose() * &c / (t - 1.0)
}

#[test]
fn three_planted_factors_dominate_the_spectrum() {
    for seed in 0..5 {
        let panel = generate_synthetic(60, 400, 3, 0.005, seed).unwrap();
        let cov = sample_covariance(&panel.returns);
        let mut eig: Vec<f64> = cov.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let share = eig[..3].iter().sum::<f64>() / cov.trace();
        assert!(share >= 0.95, "seed {seed}: top-3 share {share}");
        // and a fourth factor is not there
        assert!(eig[3] < 0.05 * eig[2], "seed {seed}");
    }
}

/// Panel with gaps, prices around the threshold and shuffled caps.
fn messy_panel(seed: u64) -> ReturnsPanel {
    let mut p = generate_synthetic(25, 60, 2, 0.02, seed).unwrap();
    let n = p.n_assets();
    for j in 0..n {
        for t in 0..(j * 7 + seed as usize) % 4 {
            p.returns[((t * 13 + j) % 60, j)] = f64::NAN;
        }
    }
    let prices = p.prices.as_mut().unwrap();
    for j in (0..n).step_by(5) {
        prices[(49, j)] = 4.0;
    }
    p
}

fn lax_rules(top: usize) -> UniverseRules {
    UniverseRules {
        min_history_fraction: 0.95,
        top_n_by_cap: top,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ranks_are_bounded_and_monotone_invariant(row in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let x = DMatrix::from_row_slice(1, row.len(), &row);
        let r = rank_transform(&x);
        prop_assert!(r.iter().all(|v| *v > -0.5 && *v <= 0.5));
        // a strictly increasing map leaves the ranks unchanged
        let warped = rank_transform(&x.map(|v| v.powi(3) * 2.0 + v.exp()));
        prop_assert_eq!(r, warped);
    }

    #[test]
    fn universe_is_idempotent_and_order_free(seed in 0u64..40, top in 3usize..20, shift in 1usize..24) {
        let panel = messy_panel(seed);
        let end: Month = panel.dates[49];
        let rules = lax_rules(top);
        let chosen = filter_universe(&panel, end, 48, &rules).unwrap();

        let cols: Vec<usize> = chosen.iter().map(|a| panel.asset_index(a).unwrap()).collect();
        let again = filter_universe(&panel.select_assets(&cols), end, 48, &rules).unwrap();
        prop_assert_eq!(&again, &chosen);

        let n = panel.n_assets();
        let rotated: Vec<usize> = (0..n).map(|j| (j + shift) % n).collect();
        let reordered = filter_universe(&panel.select_assets(&rotated), end, 48, &rules).unwrap();
        prop_assert_eq!(&reordered, &chosen);
    }

    #[test]
    fn split_is_an_ordered_partition(len in 2usize..400, fraction in 0.01f64..0.99) {
        let window: Vec<usize> = (0..len).collect();
        match split_train_validation(&window, fraction) {
            Ok((train, val)) => {
                prop_assert!(!train.is_empty() && !val.is_empty());
                prop_assert_eq!(train.len() + val.len(), len);
                prop_assert_eq!(val.len(), (fraction * len as f64).ceil() as usize);
                prop_assert!(train.last() < val.first());
                prop_assert_eq!([train, val].concat(), window);
            }
            // only when one block would be empty
            Err(_) => prop_assert!((fraction * len as f64).ceil() as usize >= len),
        }
    }
}
