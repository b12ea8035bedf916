//! Exact (non-private) mining: top-k frequent itemsets, candidate ranking,
//! threshold mining, and maximal clique enumeration for pair graphs.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Item, Itemset, TransactionDataset};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("graph edge ({0}, {1}) is a self loop")]
    SelfLoop(Item, Item),
    #[error("graph edge endpoint {0} is not in the node set")]
    UnknownEndpoint(Item),
}

/// An itemset with its exact support and 1-based rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedItemset {
    pub itemset: Itemset,
    pub support: u64,
    pub rank: usize,
}

impl RankedItemset {
    pub fn frequency(&self, n_transactions: usize) -> f64 {
        self.support as f64 / n_transactions as f64
    }
}

/// Ranking order used everywhere ranks or top-k cutoffs appear: higher
/// support first, ties broken by shorter itemset, then lexicographically on
/// the sorted ids.
pub fn rank_cmp(a: (&Itemset, u64), b: (&Itemset, u64)) -> Ordering {
    b.1.cmp(&a.1)
        .then_with(|| a.0.len().cmp(&b.0.len()))
        .then_with(|| a.0.cmp(b.0))
}

/// Transaction-by-item bit matrix for fast candidate support counting.
struct BitIndex {
    columns: HashMap<Item, Vec<u64>>,
}

impl BitIndex {
    fn build(d: &TransactionDataset, items: impl IntoIterator<Item = Item>) -> Self {
        let words = d.n_transactions().div_ceil(64);
        let mut columns: HashMap<Item, Vec<u64>> =
            items.into_iter().map(|i| (i, vec![0u64; words])).collect();
        for (t_idx, t) in d.transactions().iter().enumerate() {
            for item in t.iter() {
                if let Some(col) = columns.get_mut(&item) {
                    col[t_idx / 64] |= 1 << (t_idx % 64);
                }
            }
        }
        BitIndex { columns }
    }

    fn column(&self, item: Item) -> Option<&[u64]> {
        self.columns.get(&item).map(|c| c.as_slice())
    }

    fn support(&self, items: &[Item]) -> u64 {
        let mut acc: Option<Vec<u64>> = None;
        for &item in items {
            let col = match self.column(item) {
                Some(c) => c,
                None => return 0,
            };
            match &mut acc {
                None => acc = Some(col.to_vec()),
                Some(a) => {
                    for (w, c) in a.iter_mut().zip(col) {
                        *w &= c;
                    }
                }
            }
        }
        match acc {
            Some(a) => a.iter().map(|w| w.count_ones() as u64).sum(),
            None => 0,
        }
    }
}

/// Exact supports of arbitrary candidate itemsets, in input order.
pub fn support_counts(d: &TransactionDataset, candidates: &[Itemset]) -> Vec<u64> {
    let involved: BTreeSet<Item> = candidates.iter().flat_map(|x| x.iter()).collect();
    let idx = BitIndex::build(d, involved);
    let n = d.n_transactions() as u64;
    candidates
        .iter()
        .map(|x| if x.is_empty() { n } else { idx.support(x.items()) })
        .collect()
}

/// The exact k highest-supported itemsets of any length, ranked by
/// [`rank_cmp`]. Only itemsets with positive support are ranked; if fewer
/// than `k` exist, all of them are returned.
pub fn exact_top_k(
    d: &TransactionDataset,
    k: usize,
) -> Result<Vec<RankedItemset>, MinerError> {
    exact_top_k_bounded(d, k, None)
}

/// [`exact_top_k`] restricted to itemsets of length at most `max_len`.
pub fn exact_top_k_bounded(
    d: &TransactionDataset,
    k: usize,
    max_len: Option<usize>,
) -> Result<Vec<RankedItemset>, MinerError> {
    if k == 0 {
        return Err(MinerError::ZeroK);
    }
    let mut collected = mine_levelwise(d, LevelBound::TopK(k), max_len);
    collected.sort_unstable_by(|a, b| rank_cmp((&a.0, a.1), (&b.0, b.1)));
    collected.truncate(k);
    Ok(attach_ranks(collected))
}

/// Every itemset with support at least `min_support` (and length at most
/// `max_len`, when given), ranked by [`rank_cmp`].
pub fn frequent_itemsets(
    d: &TransactionDataset,
    min_support: u64,
    max_len: Option<usize>,
) -> Vec<RankedItemset> {
    let floor = min_support.max(1);
    let mut collected = mine_levelwise(d, LevelBound::Threshold(floor), max_len);
    collected.retain(|(_, s)| *s >= floor);
    collected.sort_unstable_by(|a, b| rank_cmp((&a.0, a.1), (&b.0, b.1)));
    attach_ranks(collected)
}

/// Ranks the given candidates by exact support and returns the best
/// `min(j, |candidates|)`. Duplicate candidates are collapsed.
pub fn exact_top_elements(
    d: &TransactionDataset,
    candidates: &[Itemset],
    j: usize,
) -> Result<Vec<RankedItemset>, MinerError> {
    if candidates.is_empty() {
        return Err(MinerError::NoCandidates);
    }
    if j == 0 {
        return Err(MinerError::ZeroK);
    }
    let distinct: Vec<Itemset> =
        candidates.iter().collect::<BTreeSet<_>>().into_iter().cloned().collect();
    let supports = support_counts(d, &distinct);
    let mut scored: Vec<(Itemset, u64)> = distinct.into_iter().zip(supports).collect();
    scored.sort_unstable_by(|a, b| rank_cmp((&a.0, a.1), (&b.0, b.1)));
    scored.truncate(j);
    Ok(attach_ranks(scored))
}

fn attach_ranks(scored: Vec<(Itemset, u64)>) -> Vec<RankedItemset> {
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (itemset, support))| RankedItemset { itemset, support, rank: i + 1 })
        .collect()
}

enum LevelBound {
    /// Raise the support threshold to the running k-th best.
    TopK(usize),
    /// Fixed support threshold.
    Threshold(u64),
}

/// Level-wise candidate generation with support-based pruning. Returns every
/// counted itemset with positive support; the caller applies its own final
/// cutoff. Sound because support is antitone: once k itemsets with support
/// >= t are known, no itemset below t (nor any superset of one) can enter
/// the top k.
fn mine_levelwise(
    d: &TransactionDataset,
    bound: LevelBound,
    max_len: Option<usize>,
) -> Vec<(Itemset, u64)> {
    let max_len = max_len.unwrap_or(usize::MAX).max(1);
    let mut singles: HashMap<Item, u64> = HashMap::new();
    for t in d.transactions() {
        for item in t.iter() {
            *singles.entry(item).or_insert(0) += 1;
        }
    }
    let mut collected: Vec<(Itemset, u64)> = singles
        .into_iter()
        .map(|(i, s)| (Itemset::from_sorted(vec![i]), s))
        .collect();
    collected.sort_unstable_by(|a, b| a.0.cmp(&b.0));

    let threshold = |collected: &[(Itemset, u64)]| -> u64 {
        match bound {
            LevelBound::Threshold(t) => t,
            LevelBound::TopK(k) => {
                if collected.len() < k {
                    1
                } else {
                    let mut supports: Vec<u64> = collected.iter().map(|(_, s)| *s).collect();
                    supports.sort_unstable_by(|a, b| b.cmp(a));
                    supports[k - 1].max(1)
                }
            }
        }
    };

    let mut theta = threshold(&collected);
    let mut frontier: Vec<(Vec<Item>, u64)> = collected
        .iter()
        .filter(|(_, s)| *s >= theta)
        .map(|(x, s)| (x.items().to_vec(), *s))
        .collect();
    let index = BitIndex::build(d, frontier.iter().map(|(x, _)| x[0]));

    let mut level = 1;
    while frontier.len() >= 2 && level < max_len {
        level += 1;
        let frontier_keys: HashSet<&[Item]> =
            frontier.iter().map(|(x, _)| x.as_slice()).collect();
        let mut counted: Vec<(Vec<Item>, u64)> = Vec::new();
        for i in 0..frontier.len() {
            for j in (i + 1)..frontier.len() {
                let (a, b) = (&frontier[i].0, &frontier[j].0);
                if a[..level - 2] != b[..level - 2] {
                    break;
                }
                let mut cand = a.clone();
                cand.push(b[level - 2]);
                if !all_subsets_present(&cand, &frontier_keys) {
                    continue;
                }
                let support = index.support(&cand);
                if support > 0 {
                    counted.push((cand, support));
                }
            }
        }
        if counted.is_empty() {
            break;
        }
        collected.extend(
            counted.iter().map(|(x, s)| (Itemset::from_sorted(x.clone()), *s)),
        );
        theta = threshold(&collected);
        frontier = counted.into_iter().filter(|(_, s)| *s >= theta).collect();
        frontier.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    }
    collected.retain(|(_, s)| *s > 0);
    collected
}

/// For a sorted candidate of length n, checks that all n-1 of its proper
/// subsets obtained by dropping one of the first n-2 positions survive in
/// the previous frontier (the two join parents are present by construction).
fn all_subsets_present(cand: &[Item], frontier: &HashSet<&[Item]>) -> bool {
    if cand.len() <= 2 {
        return true;
    }
    let mut sub = Vec::with_capacity(cand.len() - 1);
    for drop in 0..cand.len() - 2 {
        sub.clear();
        sub.extend(cand.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, &v)| v));
        if !frontier.contains(sub.as_slice()) {
            return false;
        }
    }
    true
}

/// Undirected graph over items, built from an edge list with normalized,
/// deduplicated edges and no self loops.
#[derive(Debug, Clone)]
pub struct PairGraph {
    nodes: Vec<Item>,
    adj: HashMap<Item, BTreeSet<Item>>,
}

impl PairGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = Item>,
        edges: &[(Item, Item)],
    ) -> Result<Self, MinerError> {
        let nodes: BTreeSet<Item> = nodes.into_iter().collect();
        let mut adj: HashMap<Item, BTreeSet<Item>> =
            nodes.iter().map(|&v| (v, BTreeSet::new())).collect();
        for &(a, b) in edges {
            if a == b {
                return Err(MinerError::SelfLoop(a, b));
            }
            for v in [a, b] {
                if !nodes.contains(&v) {
                    return Err(MinerError::UnknownEndpoint(v));
                }
            }
            adj.get_mut(&a).unwrap().insert(b);
            adj.get_mut(&b).unwrap().insert(a);
        }
        Ok(PairGraph { nodes: nodes.into_iter().collect(), adj })
    }

    pub fn nodes(&self) -> &[Item] {
        &self.nodes
    }

    pub fn has_edge(&self, a: Item, b: Item) -> bool {
        self.adj.get(&a).is_some_and(|n| n.contains(&b))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|n| n.len()).sum::<usize>() / 2
    }
}

/// All maximal cliques, via Bron-Kerbosch with pivoting. Isolated nodes are
/// reported as singleton cliques. Output is sorted lexicographically, so the
/// order is deterministic.
pub fn maximal_cliques(g: &PairGraph) -> Vec<Itemset> {
    let n = g.nodes.len();
    if n == 0 {
        return Vec::new();
    }
    let pos: HashMap<Item, usize> =
        g.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let neighbors: Vec<BTreeSet<usize>> = g
        .nodes
        .iter()
        .map(|v| g.adj[v].iter().map(|u| pos[u]).collect())
        .collect();

    let mut out: Vec<Itemset> = Vec::new();
    let mut r: Vec<usize> = Vec::new();
    let p: BTreeSet<usize> = (0..n).collect();
    let x: BTreeSet<usize> = BTreeSet::new();
    bron_kerbosch(&neighbors, &mut r, p, x, &mut |clique| {
        out.push(Itemset::new(clique.iter().map(|&i| g.nodes[i])));
    });
    out.sort_unstable();
    out
}

fn bron_kerbosch(
    neighbors: &[BTreeSet<usize>],
    r: &mut Vec<usize>,
    mut p: BTreeSet<usize>,
    mut x: BTreeSet<usize>,
    report: &mut impl FnMut(&[usize]),
) {
    if p.is_empty() && x.is_empty() {
        report(r);
        return;
    }
    // Pivot on the vertex of P u X with the most neighbors in P.
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| (neighbors[u].intersection(&p).count(), std::cmp::Reverse(u)))
        .unwrap();
    let rest: Vec<usize> = p.difference(&neighbors[pivot]).copied().collect();
    for v in rest {
        let nv = &neighbors[v];
        r.push(v);
        bron_kerbosch(
            neighbors,
            r,
            p.intersection(nv).copied().collect(),
            x.intersection(nv).copied().collect(),
            report,
        );
        r.pop();
        p.remove(&v);
        x.insert(v);
    }
}
