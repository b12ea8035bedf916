//! End-to-end pipeline behavior: determinism, branch diagnostics, the
//! oversized-clique retry path, and short-output signalling.

mod common;

use common::set;
use dpfim::dataset::{generate_synthetic, SyntheticSpec};
use dpfim::dp::NoiseSource;
use dpfim::privbasis::{self, PrivBasisConfig};
use dpfim::tf::{self, TfConfig};
use dpfim::{Item, TransactionDataset};

fn busy_dataset() -> TransactionDataset {
    let spec = SyntheticSpec {
        n: 400,
        universe_size: 12,
        planted: vec![(set(&[0, 1, 2]), 0.4), (set(&[3, 4]), 0.3)],
        background_rate: 0.2,
        seed: 5,
    };
    generate_synthetic(&spec).unwrap()
}

/// A tight 6-item core whose pair graph tends to come out complete, plus a
/// tail of rare singletons. With `l_max` at 4 a lambda of 5 or 6 forces an
/// oversized clique and the pair-budget retry.
fn clique_core_dataset() -> TransactionDataset {
    let mut rows = Vec::new();
    rows.extend(std::iter::repeat_with(|| set(&[0, 1, 2, 3, 4, 5])).take(60));
    for item in 6..30 {
        rows.push(set(&[item as Item]));
    }
    TransactionDataset::new(rows).unwrap()
}

fn retry_config() -> PrivBasisConfig {
    let mut cfg = PrivBasisConfig::new(25, 1.0);
    cfg.single_basis_cap = 4;
    cfg.l_max = 4;
    cfg
}

/// Scans seeds for ones that exercise the retry path; used to pick the
/// pinned seed in `oversized_clique_retry_recovers`.
#[test]
#[ignore]
fn probe_retry_seeds() {
    let d = clique_core_dataset();
    let cfg = retry_config();
    for seed in 0..200u64 {
        match privbasis::privbasis_main(&d, &cfg, &NoiseSource::from_seed(seed)) {
            Ok(out) if out.diagnostics.construction_retries >= 1 => {
                eprintln!(
                    "seed {seed}: lambda {} retries {} lambda2 {:?}->{:?} lens {:?}",
                    out.diagnostics.lambda,
                    out.diagnostics.construction_retries,
                    out.diagnostics.lambda2_requested,
                    out.diagnostics.lambda2_used,
                    out.diagnostics.basis_lens,
                );
            }
            Ok(_) => {}
            Err(e) => eprintln!("seed {seed}: error {e}"),
        }
    }
}

#[test]
fn pb_runs_are_seed_deterministic() {
    let d = busy_dataset();
    let cfg = PrivBasisConfig::new(10, 0.5);
    let a = privbasis::privbasis_main(&d, &cfg, &NoiseSource::from_seed(42)).unwrap();
    let b = privbasis::privbasis_main(&d, &cfg, &NoiseSource::from_seed(42)).unwrap();
    assert_eq!(a.released.len(), b.released.len());
    for (x, y) in a.released.iter().zip(&b.released) {
        assert_eq!(x.itemset, y.itemset);
        assert_eq!(x.noisy_frequency.to_bits(), y.noisy_frequency.to_bits());
    }
    assert_eq!(format!("{:?}", a.diagnostics), format!("{:?}", b.diagnostics));
    assert_eq!(a.ledger.entries(), b.ledger.entries());

    let c = privbasis::privbasis_main(&d, &cfg, &NoiseSource::from_seed(43)).unwrap();
    let same = a.released.len() == c.released.len()
        && a.released.iter().zip(&c.released).all(|(x, y)| {
            x.itemset == y.itemset && x.noisy_frequency.to_bits() == y.noisy_frequency.to_bits()
        });
    assert!(!same, "different seeds produced identical output");
}

#[test]
fn tf_runs_are_seed_deterministic() {
    let d = busy_dataset();
    let cfg = TfConfig::new(10, 0.5, 2, 0.1);
    let a = tf::tf_select_and_release(&d, &cfg, &NoiseSource::from_seed(42)).unwrap();
    let b = tf::tf_select_and_release(&d, &cfg, &NoiseSource::from_seed(42)).unwrap();
    assert_eq!(a.released.len(), b.released.len());
    for (x, y) in a.released.iter().zip(&b.released) {
        assert_eq!(x.itemset, y.itemset);
        assert_eq!(x.noisy_frequency.to_bits(), y.noisy_frequency.to_bits());
    }
    let c = tf::tf_select_and_release(&d, &cfg, &NoiseSource::from_seed(43)).unwrap();
    let same = a.released.len() == c.released.len()
        && a.released.iter().zip(&c.released).all(|(x, y)| {
            x.itemset == y.itemset && x.noisy_frequency.to_bits() == y.noisy_frequency.to_bits()
        });
    assert!(!same, "different seeds produced identical output");
}

#[test]
fn single_basis_branch_diagnostics() {
    let d = busy_dataset();
    let cfg = PrivBasisConfig::new(10, 1.0);
    let out = privbasis::privbasis_main(&d, &cfg, &NoiseSource::from_seed(7)).unwrap();
    let diag = &out.diagnostics;
    assert!(diag.lambda <= cfg.single_basis_cap, "expected the single-basis branch");
    assert_eq!(diag.lambda2_requested, None);
    assert_eq!(diag.lambda2_used, None);
    assert_eq!(diag.beta1, None);
    assert_eq!(diag.beta2, None);
    assert_eq!(diag.basis_width, 1);
    assert_eq!(diag.basis_lens, vec![diag.lambda]);
    assert_eq!(diag.basis_max_len, diag.lambda);
    assert_eq!(diag.construction_retries, 0);
    assert_eq!(out.ledger.entries().len(), 3);
}

#[test]
fn multi_basis_branch_diagnostics() {
    let d = busy_dataset();
    let mut cfg = PrivBasisConfig::new(10, 1.0);
    cfg.single_basis_cap = 2;
    let out = privbasis::privbasis_main(&d, &cfg, &NoiseSource::from_seed(7)).unwrap();
    let diag = &out.diagnostics;
    assert!(diag.lambda > cfg.single_basis_cap);
    let requested = diag.lambda2_requested.expect("multi branch records lambda2");
    let used = diag.lambda2_used.expect("multi branch records lambda2");
    assert!(used <= requested);
    let beta1 = diag.beta1.expect("multi branch splits the item budget");
    let beta2 = diag.beta2.expect("multi branch splits the item budget");
    assert!((beta1 + beta2 - 0.4).abs() <= 1e-12);
    assert_eq!(diag.basis_width, diag.basis_lens.len());
    assert_eq!(diag.basis_max_len, *diag.basis_lens.iter().max().unwrap());
    assert!(diag.basis_max_len <= cfg.l_max);
    assert_eq!(out.ledger.entries().len(), if used > 0 { 4 } else { 3 });
}

#[test]
fn oversized_clique_retry_recovers() {
    let d = clique_core_dataset();
    let cfg = retry_config();
    // Seed found with probe_retry_seeds: lambda lands above l_max and the
    // first pair graph contains a clique wider than any allowed basis.
    let out = privbasis::privbasis_main(&d, &cfg, &NoiseSource::from_seed(RETRY_SEED)).unwrap();
    let diag = &out.diagnostics;
    assert!(diag.construction_retries >= 1, "retry path not taken: {diag:?}");
    assert!(diag.lambda > cfg.single_basis_cap);
    assert!(diag.lambda2_used.unwrap() < diag.lambda2_requested.unwrap());
    assert!(diag.basis_max_len <= cfg.l_max);
    assert!(!out.released.is_empty());
}

const RETRY_SEED: u64 = 7;

#[test]
fn short_output_signals_thin_candidate_pool() {
    let d = TransactionDataset::new(vec![set(&[0]), set(&[1]), set(&[2])]).unwrap();
    let cfg = PrivBasisConfig::new(50, 1.0);
    let out = privbasis::privbasis_main(&d, &cfg, &NoiseSource::noiseless(0)).unwrap();
    assert!(out.diagnostics.short_output);
    assert!(out.diagnostics.k1_clamped);
    assert!(out.released.len() < 50);

    let full = privbasis::privbasis_main(
        &busy_dataset(),
        &PrivBasisConfig::new(10, 1.0),
        &NoiseSource::from_seed(1),
    )
    .unwrap();
    assert!(!full.diagnostics.short_output);
    assert_eq!(full.released.len(), 10);
}
