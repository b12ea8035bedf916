//! Noise-off pipeline stages against the exact miner, and closed-form
//! quantities against Monte Carlo, each computed through an independent
//! route.

mod common;

use approx::assert_relative_eq;
use common::set;
use dpfim::dp::NoiseSource;
use dpfim::miner;
use dpfim::privbasis::{self, average_ev, BasisSet, FreqElementsMode};
use dpfim::tf::{self, TfConfig};
use dpfim::{Item, Itemset, TransactionDataset};
use rand::prelude::*;

/// 501 transactions over items 0..6 with all interesting supports distinct:
/// {0} 370, {1} 280, {0,1} 220, {2} 161, {0,2} 121, {1,2} 120, {3} 80.
fn distinct_support_fixture() -> TransactionDataset {
    let mut rows = Vec::new();
    let mut push = |items: &[Item], count: usize| {
        rows.extend(std::iter::repeat_with(|| set(items)).take(count));
    };
    push(&[0, 1, 2], 120);
    push(&[0, 1], 100);
    push(&[0, 3], 80);
    push(&[1, 4], 60);
    push(&[2], 40);
    push(&[5], 30);
    push(&[0], 70);
    push(&[0, 2], 1);
    TransactionDataset::with_universe(rows, 0..6).unwrap()
}

#[test]
fn lambda_choice_noise_off_picks_item_count_matching_theta() {
    // Marginals 0.9, 0.5, 0.1; the second-ranked itemset {1} has frequency
    // exactly 0.5, so the quality peaks at two items.
    let mut rows = Vec::new();
    rows.extend(std::iter::repeat_with(|| set(&[0, 1])).take(5));
    rows.extend(std::iter::repeat_with(|| set(&[0])).take(4));
    rows.push(set(&[2]));
    let d = TransactionDataset::new(rows).unwrap();
    let choice =
        privbasis::get_lambda(&d, 2, 1.0, 1.0, &mut NoiseSource::noiseless(0)).unwrap();
    assert_eq!(choice.lambda, 2);
    assert_eq!(choice.k1, 2);
    assert_eq!(choice.theta, 0.5);
    assert!(!choice.k1_clamped);
}

#[test]
fn freq_elements_noise_off_equals_exact_top_elements() {
    let d = distinct_support_fixture();
    let mut candidates: Vec<Itemset> = (0..6).map(|i| set(&[i])).collect();
    for a in 0..6 {
        for b in a + 1..6 {
            candidates.push(set(&[a, b]));
        }
    }
    let picked = privbasis::get_freq_elements(
        &d,
        &candidates,
        6,
        1.0,
        FreqElementsMode::Support,
        &mut NoiseSource::noiseless(0),
    )
    .unwrap();
    let exact = miner::exact_top_elements(&d, &candidates, 6).unwrap();
    let exact_sets: Vec<Itemset> = exact.into_iter().map(|r| r.itemset).collect();
    assert_eq!(picked, exact_sets);
}

#[test]
fn tf_noise_off_equals_exact_bounded_top_k() {
    let d = distinct_support_fixture();
    // eps large enough that the truncation margin stays below the support
    // gaps, so the noise-off ranking is undistorted.
    let cfg = TfConfig::new(6, 50.0, 2, 0.05);
    let out = tf::tf_select_and_release(&d, &cfg, &NoiseSource::noiseless(9)).unwrap();
    let exact = miner::exact_top_k_bounded(&d, 6, Some(2)).unwrap();
    assert_eq!(out.released.len(), exact.len());
    let n = d.n_transactions() as f64;
    for (got, want) in out.released.iter().zip(&exact) {
        assert_eq!(got.itemset, want.itemset);
        assert_eq!(got.noisy_frequency, want.support as f64 / n);
    }
    assert!(!out.diagnostics.pruning_disabled);
}

#[test]
fn average_ev_matches_monte_carlo() {
    // Overlapping bases so {2} exercises the inverse-variance fold.
    let b = BasisSet::new(vec![set(&[0, 1, 2]), set(&[2, 3])]).unwrap();
    let queries = common::candidate_pool(&b);
    let rows = vec![
        set(&[0, 1, 2, 3]),
        set(&[0, 1]),
        set(&[2, 3]),
        set(&[2]),
        set(&[0]),
        set(&[1, 2, 3]),
    ];
    let d = TransactionDataset::new(rows).unwrap();
    let n = d.n_transactions();
    let eps = 1.0;
    let closed = average_ev(&b, &queries, eps, n).unwrap();

    let trials = 30_000;
    let src = NoiseSource::from_seed(0xAE00);
    let supports = miner::support_counts(&d, &queries);
    let mut sq_err = vec![0.0f64; queries.len()];
    for t in 0..trials {
        let table =
            privbasis::candidate_counts(&d, &b, eps, &mut src.derive(&t.to_string()))
                .unwrap();
        for (qi, q) in queries.iter().enumerate() {
            let err = (table.get(q).unwrap().0 - supports[qi] as f64) / n as f64;
            sq_err[qi] += err * err;
        }
    }
    let mc = sq_err.iter().map(|s| s / trials as f64).sum::<f64>() / queries.len() as f64;
    assert_relative_eq!(mc, closed, max_relative = 0.05);
}

#[test]
fn reconstruction_weight_sum_identity() {
    // For one basis of size b the weights 2^(b-|X|) over all non-empty
    // subsets X sum to 3^b - 2^b.
    let d = TransactionDataset::with_universe(vec![set(&[0])], 0..6).unwrap();
    for b_len in 1..=6usize {
        let b = BasisSet::new(vec![Itemset::new(0..b_len as Item)]).unwrap();
        let table =
            privbasis::candidate_counts(&d, &b, 1.0, &mut NoiseSource::noiseless(0)).unwrap();
        let pool = common::candidate_pool(&b);
        assert_eq!(pool.len(), (1usize << b_len) - 1);
        let nv_sum: f64 = pool.iter().map(|x| table.get(x).unwrap().1).sum();
        assert_eq!(nv_sum, (3f64.powi(b_len as i32) - 2f64.powi(b_len as i32)));
    }
}

#[test]
fn single_basis_of_frequent_items_covers_every_frequent_itemset() {
    // Any itemset at least as frequent as the k-th is composed of items that
    // are themselves at least that frequent, so one basis of those items
    // covers them all.
    let mut rng = StdRng::seed_from_u64(0x0E0E);
    for _ in 0..50 {
        let d = common::random_small_dataset(&mut rng);
        let k = rng.gen_range(2..=20usize);
        let top = miner::exact_top_k(&d, k).unwrap();
        let s_k = top.last().unwrap().support;
        let items: Vec<Item> = d
            .universe()
            .iter()
            .copied()
            .filter(|&i| d.support(&set(&[i])) >= s_k)
            .collect();
        let basis = BasisSet::new(vec![Itemset::new(items.iter().copied())]).unwrap();
        for fi in miner::frequent_itemsets(&d, s_k, None) {
            assert!(
                basis.covers(&fi.itemset),
                "{{{}}} with support {} escapes the frequent-item basis {:?}",
                fi.itemset,
                fi.support,
                items
            );
        }
    }
}
