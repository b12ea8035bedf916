//! Shared fixtures for the criterion benches.

use dpfim::dataset::{generate_synthetic, SyntheticSpec};
use dpfim::{Itemset, TransactionDataset};

/// Deterministic market-basket-like dataset: a handful of planted itemsets
/// over the first items plus independent background noise.
pub fn benchmark_dataset(n: usize, universe_size: u32, seed: u64) -> TransactionDataset {
    let planted = vec![
        (Itemset::new([0, 1, 2]), 0.30),
        (Itemset::new([3, 4]), 0.25),
        (Itemset::new([5, 6, 7, 8]), 0.15),
        (Itemset::new([9]), 0.20),
    ];
    let spec = SyntheticSpec { n, universe_size, planted, background_rate: 0.08, seed };
    generate_synthetic(&spec).expect("valid benchmark spec")
}

/// Single basis holding the given number of highest-indexed universe items.
pub fn wide_basis(universe: &[u32], len: usize) -> Itemset {
    Itemset::new(universe.iter().rev().take(len).copied())
}
