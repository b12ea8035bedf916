#![allow(dead_code)]

use std::path::PathBuf;

use dpfim::dataset::{generate_synthetic, SyntheticSpec};
use dpfim::privbasis::BasisSet;
use dpfim::{Item, Itemset, TransactionDataset};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

pub fn set(items: &[Item]) -> Itemset {
    Itemset::new(items.iter().copied())
}

/// Marginals of the eleven heavy items in the built-in benchmark dataset.
/// The first nine carry the whole top-100; the last two sit just below the
/// boundary so the private item-count step has nearby but safe targets on
/// both sides.
pub const STANDIN_CORE: [f64; 11] =
    [0.9704, 0.9588, 0.9425, 0.9202, 0.8897, 0.8486, 0.7941, 0.7232, 0.6342, 0.6080, 0.5274];

pub const STANDIN_SEED: u64 = 0x5EED_D474;

/// A fixed dataset shaped like the classic mushroom benchmark: 8124
/// transactions over 119 items. Items 0..10 are drawn independently with the
/// `STANDIN_CORE` marginals, so the top-100 itemsets are combinations of the
/// nine heaviest items with smoothly graded, mostly distinct supports and a
/// majority of them longer than two items. The remaining 108 items form a
/// sparse background tail capped at 0.44.
pub fn standin_mushroom() -> TransactionDataset {
    let n = 8124;
    let universe = 119u32;
    let background: Vec<f64> = (0..universe as usize - STANDIN_CORE.len())
        .map(|j| (0.44 * (-(j as f64) / 22.0).exp()).max(0.015))
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(STANDIN_SEED);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<Item> = Vec::new();
        for (i, &p) in STANDIN_CORE.iter().enumerate() {
            if rng.gen::<f64>() < p {
                row.push(i as Item);
            }
        }
        for (j, &p) in background.iter().enumerate() {
            if rng.gen::<f64>() < p {
                row.push((STANDIN_CORE.len() + j) as Item);
            }
        }
        rows.push(Itemset::from_sorted(row));
    }
    TransactionDataset::with_universe(rows, 0..universe).unwrap()
}

pub fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// The real mushroom corpus when `data/mushroom.dat` is present (see the
/// README for the download), otherwise the built-in stand-in. The flag says
/// which one was returned.
pub fn mushroom_dataset() -> (TransactionDataset, bool) {
    let path = data_file("mushroom.dat");
    if path.is_file() {
        let d = TransactionDataset::load_fimi(&path)
            .unwrap_or_else(|e| panic!("{} exists but does not parse: {e}", path.display()));
        (d, true)
    } else {
        (standin_mushroom(), false)
    }
}

/// Small seeded dataset with one or two planted itemsets, for oracle round
/// trips. Universe stays at or below 12 items.
pub fn random_small_dataset(rng: &mut StdRng) -> TransactionDataset {
    let universe_size = rng.gen_range(5..=12u32);
    let n = rng.gen_range(80..=600usize);
    let mut planted = Vec::new();
    let first_len = rng.gen_range(2..=3usize.min(universe_size as usize));
    let mut items: Vec<Item> = (0..universe_size).collect();
    items.shuffle(rng);
    let first: Vec<Item> = items[..first_len].to_vec();
    planted.push((Itemset::new(first.iter().copied()), rng.gen_range(0.25..0.45)));
    if rng.gen_bool(0.5) && universe_size >= 6 {
        let second: Vec<Item> = items[first_len..first_len + 2].to_vec();
        planted.push((Itemset::new(second.iter().copied()), rng.gen_range(0.1..0.3)));
    }
    let spec = SyntheticSpec {
        n,
        universe_size,
        planted,
        background_rate: rng.gen_range(0.1..0.5),
        seed: rng.gen(),
    };
    generate_synthetic(&spec).unwrap()
}

/// One to three non-empty bases over the dataset's universe.
pub fn random_basis_set(rng: &mut StdRng, universe: &[Item]) -> BasisSet {
    let width = rng.gen_range(1..=3usize);
    let mut bases = Vec::with_capacity(width);
    for _ in 0..width {
        let len = rng.gen_range(1..=6usize.min(universe.len()));
        let mut pick = universe.to_vec();
        pick.shuffle(rng);
        bases.push(Itemset::new(pick[..len].iter().copied()));
    }
    BasisSet::new(bases).unwrap()
}

/// Every distinct non-empty subset of any basis, the candidate pool the
/// release step ranks over.
pub fn candidate_pool(b: &BasisSet) -> Vec<Itemset> {
    let mut out = std::collections::BTreeSet::new();
    for basis in b.bases() {
        let items = basis.items();
        for mask in 1u32..(1 << items.len()) {
            out.insert(Itemset::new(
                (0..items.len()).filter(|&j| mask & (1 << j) != 0).map(|j| items[j]),
            ));
        }
    }
    out.into_iter().collect()
}

/// Maximal cliques by exhaustive subset enumeration over at most 15
/// vertices, isolated vertices reported as singletons. Vertices are
/// 0..n_vertices and the output is sorted like `miner::maximal_cliques`.
pub fn brute_force_maximal_cliques(n_vertices: usize, edges: &[(Item, Item)]) -> Vec<Itemset> {
    assert!(n_vertices <= 15);
    let mut adj = vec![0u32; n_vertices];
    for &(a, b) in edges {
        adj[a as usize] |= 1 << b;
        adj[b as usize] |= 1 << a;
    }
    let mut cliques = Vec::new();
    for mask in 1u32..(1 << n_vertices) {
        let mut is_clique = true;
        let mut common = !mask & ((1u32 << n_vertices) - 1);
        let mut rest = mask;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if mask & !(1 << v) & !adj[v] != 0 {
                is_clique = false;
                break;
            }
            common &= adj[v];
        }
        if is_clique && common == 0 {
            cliques.push(Itemset::new(
                (0..n_vertices as u32).filter(|v| mask & (1 << v) != 0),
            ));
        }
    }
    cliques.sort_unstable();
    cliques
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}
