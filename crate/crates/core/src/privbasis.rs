//! Top-k frequent itemset release via basis sets.
//!
//! The pipeline privately picks a small number of "basis" itemsets expected
//! to cover the true top k, then estimates the frequency of every subset of
//! every basis from noisy full-contingency bin tables, one Laplace-noised
//! table per basis. Splitting the budget over a few low-dimensional tables
//! gives far less noise per released frequency than perturbing the whole
//! candidate space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Item, Itemset, TransactionDataset};
use crate::dp::{self, BudgetLedger, DpError, NoiseSource};
use crate::miner::{self, MinerError, PairGraph};

/// Hard cap on basis length: bin tables have `2^len` bins.
pub const MAX_BASIS_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum PrivBasisError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error("basis construction input: {0}")]
    BadConstruction(String),
    #[error("maximal clique {{{clique}}} has {len} items, exceeding the basis length cap {l_max}")]
    OversizedClique { clique: Itemset, len: usize, l_max: usize },
    #[error("itemset {{{0}}} is not covered by any basis")]
    Uncovered(Itemset),
    #[error("basis {{{basis}}} has {len} items; bin tables support at most {MAX_BASIS_LEN}")]
    BasisTooLong { basis: Itemset, len: usize },
    #[error("no itemset has positive support")]
    NoFrequentItemsets,
}

/// Quality exponent used when picking frequent elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreqElementsMode {
    /// Quality is the support count with a one-sided exponent (sensitivity 1
    /// in the count domain). Default.
    #[default]
    Support,
    /// Quality is the raw frequency in `[0, 1]`, reproducing formulations
    /// whose exponent is `f * eps` rather than `f * n * eps`. Selectable for
    /// comparison; far weaker signal at realistic `n`.
    LiteralFrequency,
}

/// Tuning for [`privbasis_main`]. `alpha1/alpha2/alpha3` split the budget
/// across the basis-count, element-selection, and release steps and must sum
/// to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivBasisConfig {
    pub k: usize,
    pub eps: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Safety margin on k when estimating the top-k boundary frequency;
    /// defaults to 1.2 for k <= 100 and 1.1 above.
    pub eta: Option<f64>,
    /// When the sampled item count is at most this, a single basis holding
    /// all selected items is used and pair selection is skipped.
    pub single_basis_cap: usize,
    /// Maximum basis length the construction may produce.
    pub l_max: usize,
    pub freq_elements_mode: FreqElementsMode,
}

impl Default for PrivBasisConfig {
    fn default() -> Self {
        PrivBasisConfig {
            k: 0,
            eps: 0.0,
            alpha1: 0.1,
            alpha2: 0.4,
            alpha3: 0.5,
            eta: None,
            single_basis_cap: 12,
            l_max: 12,
            freq_elements_mode: FreqElementsMode::default(),
        }
    }
}

impl PrivBasisConfig {
    pub fn new(k: usize, eps: f64) -> Self {
        PrivBasisConfig { k, eps, ..Default::default() }
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(if self.k <= 100 { 1.2 } else { 1.1 })
    }

    pub fn validate(&self) -> Result<(), PrivBasisError> {
        let fail = |msg: String| Err(PrivBasisError::Config(msg));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        for (name, a) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("alpha3", self.alpha3)]
        {
            if !(a > 0.0 && a.is_finite()) {
                return fail(format!("{name} must be positive, got {a}"));
            }
        }
        let sum = self.alpha1 + self.alpha2 + self.alpha3;
        if (sum - 1.0).abs() > 1e-9 {
            return fail(format!("alpha1 + alpha2 + alpha3 must equal 1, got {sum}"));
        }
        if let Some(eta) = self.eta {
            if !(eta >= 1.0 && eta.is_finite()) {
                return fail(format!("eta must be at least 1, got {eta}"));
            }
        }
        if self.single_basis_cap == 0 || self.l_max == 0 {
            return fail("single_basis_cap and l_max must be at least 1".into());
        }
        if self.single_basis_cap > self.l_max {
            return fail(format!(
                "single_basis_cap {} exceeds l_max {}",
                self.single_basis_cap, self.l_max
            ));
        }
        if self.l_max > MAX_BASIS_LEN {
            return fail(format!("l_max {} exceeds the hard cap {MAX_BASIS_LEN}", self.l_max));
        }
        Ok(())
    }
}

/// A non-empty collection of non-empty basis itemsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BasisSet {
    bases: Vec<Itemset>,
}

impl BasisSet {
    pub fn new(bases: Vec<Itemset>) -> Result<Self, PrivBasisError> {
        if bases.is_empty() {
            return Err(PrivBasisError::BadConstruction("basis set has no bases".into()));
        }
        if bases.iter().any(|b| b.is_empty()) {
            return Err(PrivBasisError::BadConstruction("basis set contains an empty basis".into()));
        }
        Ok(BasisSet { bases })
    }

    pub fn bases(&self) -> &[Itemset] {
        &self.bases
    }

    /// Number of bases.
    pub fn width(&self) -> usize {
        self.bases.len()
    }

    /// Length of the longest basis.
    pub fn max_len(&self) -> usize {
        self.bases.iter().map(|b| b.len()).max().unwrap_or(0)
    }

    pub fn covers(&self, x: &Itemset) -> bool {
        self.bases.iter().any(|b| x.is_subset_of(b))
    }
}

/// Error variance of one reconstructed frequency: an itemset of size `x` in
/// a basis of size `b` sums `2^(b-x)` bins, each carrying Laplace noise of
/// scale `width/eps` in the count domain, giving variance
/// `2^(b-x+1) * width^2 / (eps^2 * n^2)` in the frequency domain.
pub fn ev_single(width: usize, basis_size: usize, itemset_size: usize, eps: f64, n: usize) -> f64 {
    debug_assert!(itemset_size >= 1 && itemset_size <= basis_size);
    2f64.powi((basis_size - itemset_size + 1) as i32) * (width as f64).powi(2)
        / (eps * eps * (n as f64).powi(2))
}

/// Inverse-variance combination of two independent estimates of the same
/// count. The combined variance is below both inputs.
pub fn combine_estimates(nc1: f64, v1: f64, nc2: f64, v2: f64) -> (f64, f64) {
    debug_assert!(v1 > 0.0 && v2 > 0.0);
    let nc = (v2 * nc1 + v1 * nc2) / (v1 + v2);
    let v = v1 * v2 / (v1 + v2);
    (nc, v)
}

/// Per-item variance factor `2^(len-1) / len^2` for packing loose items into
/// bases of a given length; minimized at length 3.
pub fn group_length_cost(len: usize) -> f64 {
    debug_assert!(len >= 1);
    2f64.powi(len as i32 - 1) / (len * len) as f64
}

/// Mean reconstruction error variance over the query itemsets, where each
/// query's variance is the inverse-variance combination over all bases
/// covering it. Errors if some query is covered by no basis.
pub fn average_ev(
    b: &BasisSet,
    queries: &[Itemset],
    eps: f64,
    n: usize,
) -> Result<f64, PrivBasisError> {
    average_ev_slices(b.bases(), queries, eps, n)
}

fn average_ev_slices(
    bases: &[Itemset],
    queries: &[Itemset],
    eps: f64,
    n: usize,
) -> Result<f64, PrivBasisError> {
    if queries.is_empty() {
        return Err(PrivBasisError::BadConstruction("no query itemsets for average EV".into()));
    }
    let width = bases.len();
    let mut total = 0.0;
    for q in queries {
        let mut v: Option<f64> = None;
        for basis in bases {
            if q.is_subset_of(basis) {
                let single = ev_single(width, basis.len(), q.len(), eps, n);
                v = Some(match v {
                    None => single,
                    Some(prev) => prev * single / (prev + single),
                });
            }
        }
        total += v.ok_or_else(|| PrivBasisError::Uncovered(q.clone()))?;
    }
    Ok(total / queries.len() as f64)
}

/// Builds a basis set covering the frequent items `f` (in selection order)
/// and frequent pairs `p`:
///
/// 1. maximal cliques of the pair graph with at least two nodes seed the
///    clique bases; a clique longer than `l_max` is an error,
/// 2. items in no pair are packed into loose bases of up to three items,
/// 3. clique bases are greedily pairwise merged while that strictly lowers
///    the average reconstruction variance over the pairs and loose items
///    (merges beyond `l_max` are never taken),
/// 4. loose bases are then removed one at a time, redistributing their items
///    to the smallest remaining bases, again only while the average variance
///    strictly drops.
pub fn construct_basis_set(
    f: &[Item],
    p: &[(Item, Item)],
    eps: f64,
    n: usize,
    l_max: usize,
) -> Result<BasisSet, PrivBasisError> {
    if f.is_empty() {
        return Err(PrivBasisError::BadConstruction("no frequent items".into()));
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for &item in f {
            if !seen.insert(item) {
                return Err(PrivBasisError::BadConstruction(format!(
                    "item {item} appears twice in the frequent item list"
                )));
            }
        }
    }
    let l_max = l_max.min(MAX_BASIS_LEN);
    let graph = PairGraph::new(f.iter().copied(), p)?;
    let cliques = miner::maximal_cliques(&graph);
    for c in &cliques {
        if c.len() > l_max {
            return Err(PrivBasisError::OversizedClique { len: c.len(), clique: c.clone(), l_max });
        }
    }
    let mut clique_bases: Vec<Itemset> = cliques.into_iter().filter(|c| c.len() >= 2).collect();

    let paired: std::collections::BTreeSet<Item> =
        p.iter().flat_map(|&(a, b)| [a, b]).collect();
    let loose: Vec<Item> = f.iter().copied().filter(|i| !paired.contains(i)).collect();
    let group = 3.min(l_max);
    let mut loose_bases: Vec<Itemset> =
        loose.chunks(group).map(|c| Itemset::new(c.iter().copied())).collect();

    let queries: Vec<Itemset> = p
        .iter()
        .map(|&(a, b)| Itemset::new([a, b]))
        .chain(loose.iter().map(|&i| Itemset::from_sorted(vec![i])))
        .collect();

    let joined =
        |a: &[Itemset], b: &[Itemset]| a.iter().chain(b.iter()).cloned().collect::<Vec<_>>();
    let mut current = average_ev_slices(&joined(&clique_bases, &loose_bases), &queries, eps, n)?;

    // Greedy pairwise merging of clique bases.
    loop {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for i in 0..clique_bases.len() {
            for j in (i + 1)..clique_bases.len() {
                let merged = clique_bases[i].union(&clique_bases[j]);
                if merged.len() > l_max {
                    continue;
                }
                let mut candidate = clique_bases.clone();
                candidate[i] = merged.clone();
                candidate.remove(j);
                let ev = average_ev_slices(&joined(&candidate, &loose_bases), &queries, eps, n)?;
                let key = (ev, merged.len(), i, j);
                if ev < current && best.as_ref().is_none_or(|b| key < *b) {
                    best = Some(key);
                }
            }
        }
        match best {
            Some((ev, _, i, j)) => {
                let other = clique_bases.remove(j);
                clique_bases[i] = clique_bases[i].union(&other);
                current = ev;
            }
            None => break,
        }
    }

    // Dissolve loose bases while redistribution lowers the average variance.
    loop {
        let mut best: Option<(f64, usize, Vec<Itemset>, Vec<Itemset>)> = None;
        for r in 0..loose_bases.len() {
            let mut nb_clique = clique_bases.clone();
            let mut nb_loose = loose_bases.clone();
            let removed = nb_loose.remove(r);
            if redistribute(&removed, &mut nb_clique, &mut nb_loose, l_max) {
                let ev = average_ev_slices(&joined(&nb_clique, &nb_loose), &queries, eps, n)?;
                if ev < current && best.as_ref().is_none_or(|b| (ev, r) < (b.0, b.1)) {
                    best = Some((ev, r, nb_clique, nb_loose));
                }
            }
        }
        match best {
            Some((ev, _, nb_clique, nb_loose)) => {
                clique_bases = nb_clique;
                loose_bases = nb_loose;
                current = ev;
            }
            None => break,
        }
    }

    let mut bases = clique_bases;
    bases.extend(loose_bases);
    BasisSet::new(bases)
}

/// Moves each item into the currently smallest basis with room under
/// `l_max`, clique bases winning ties. False if some item cannot be placed.
fn redistribute(
    items: &Itemset,
    clique_bases: &mut [Itemset],
    loose_bases: &mut [Itemset],
    l_max: usize,
) -> bool {
    for item in items.iter() {
        let target = clique_bases
            .iter()
            .enumerate()
            .map(|(i, b)| (b.len(), 0usize, i))
            .chain(loose_bases.iter().enumerate().map(|(i, b)| (b.len(), 1usize, i)))
            .filter(|&(len, _, _)| len < l_max)
            .min();
        let Some((_, class, idx)) = target else {
            return false;
        };
        let single = Itemset::from_sorted(vec![item]);
        if class == 0 {
            clique_bases[idx] = clique_bases[idx].union(&single);
        } else {
            loose_bases[idx] = loose_bases[idx].union(&single);
        }
    }
    true
}

/// One noisy full-contingency table per basis: bin `m` of basis `B_i` holds
/// `Lap(width/eps) + |{t : t intersect B_i = mask m}|`, where bit `j` of `m`
/// refers to the j-th smallest item of `B_i`. Built in one pass over the
/// data. With a noise-off source the tables are exact.
pub struct BinTable {
    bases: Vec<Itemset>,
    counts: Vec<Vec<f64>>,
}

impl BinTable {
    pub fn noisy(
        d: &TransactionDataset,
        b: &BasisSet,
        eps: f64,
        src: &mut NoiseSource,
    ) -> Result<BinTable, PrivBasisError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(DpError::BadEpsilon(eps).into());
        }
        for basis in b.bases() {
            if basis.len() > MAX_BASIS_LEN {
                return Err(PrivBasisError::BasisTooLong {
                    basis: basis.clone(),
                    len: basis.len(),
                });
            }
        }
        let scale = b.width() as f64 / eps;
        let mut counts: Vec<Vec<f64>> = Vec::with_capacity(b.width());
        for basis in b.bases() {
            let mut bins = vec![0.0f64; 1 << basis.len()];
            for bin in &mut bins {
                *bin = dp::laplace(scale, src)?;
            }
            counts.push(bins);
        }
        let positions: Vec<HashMap<Item, usize>> = b
            .bases()
            .iter()
            .map(|basis| basis.iter().enumerate().map(|(j, item)| (item, j)).collect())
            .collect();
        for t in d.transactions() {
            for (bi, pos) in positions.iter().enumerate() {
                let mut mask = 0usize;
                for item in t.iter() {
                    if let Some(&j) = pos.get(&item) {
                        mask |= 1 << j;
                    }
                }
                counts[bi][mask] += 1.0;
            }
        }
        Ok(BinTable { bases: b.bases().to_vec(), counts })
    }

    pub fn bases(&self) -> &[Itemset] {
        &self.bases
    }

    /// Bins of basis `i`, indexed by subset bitmask.
    pub fn counts(&self, i: usize) -> &[f64] {
        &self.counts[i]
    }
}

/// Reconstructed count and variance proxy per candidate itemset. Candidates
/// occurring in several bases are folded by inverse-variance combination.
#[derive(Debug, Default)]
pub struct CandidateTable {
    map: HashMap<Itemset, (f64, f64)>,
}

impl CandidateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_or_combine(&mut self, x: Itemset, nc: f64, nv: f64) {
        match self.map.entry(x) {
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert((nc, nv));
            }
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let (old_nc, old_nv) = *e.get();
                *e.get_mut() = combine_estimates(old_nc, old_nv, nc, nv);
            }
        }
    }

    /// Count and variance proxy for one candidate.
    pub fn get(&self, x: &Itemset) -> Option<(f64, f64)> {
        self.map.get(x).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Itemset, &(f64, f64))> {
        self.map.iter()
    }

    /// The k candidates of highest reconstructed count; ties prefer shorter,
    /// then lexicographically smaller itemsets.
    pub fn into_ranked(self, k: usize) -> Vec<(Itemset, f64)> {
        let mut all: Vec<(Itemset, f64)> =
            self.map.into_iter().map(|(x, (nc, _))| (x, nc)).collect();
        all.sort_unstable_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.len().cmp(&b.0.len()))
                .then_with(|| a.0.cmp(&b.0))
        });
        all.truncate(k);
        all
    }
}

/// Estimates every non-empty subset of every basis from the noisy bin
/// tables. The count of a subset is the sum of the bins of all its supersets
/// within the basis; the variance proxy is the number of bins summed.
pub fn candidate_counts(
    d: &TransactionDataset,
    b: &BasisSet,
    eps: f64,
    src: &mut NoiseSource,
) -> Result<CandidateTable, PrivBasisError> {
    let bins = BinTable::noisy(d, b, eps, src)?;
    let mut table = CandidateTable::new();
    for (bi, basis) in bins.bases().iter().enumerate() {
        let len = basis.len();
        let full = (1usize << len) - 1;
        let counts = bins.counts(bi);
        for x_mask in 1..=full {
            let comp = full & !x_mask;
            let mut nc = 0.0;
            let mut s = comp;
            loop {
                nc += counts[x_mask | s];
                if s == 0 {
                    break;
                }
                s = (s.wrapping_sub(1)) & comp;
            }
            let x_size = x_mask.count_ones() as usize;
            let nv = (1u64 << (len - x_size)) as f64;
            let items = basis.items();
            let x = Itemset::from_sorted(
                (0..len).filter(|&j| x_mask & (1 << j) != 0).map(|j| items[j]).collect(),
            );
            table.insert_or_combine(x, nc, nv);
        }
    }
    Ok(table)
}

/// A released itemset with its noisy frequency estimate. Both release
/// pipelines produce this shape, so evaluation is method-agnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasedItemset {
    pub itemset: Itemset,
    pub noisy_frequency: f64,
}

/// The k candidate itemsets of highest reconstructed frequency across the
/// basis bin tables. Returns fewer when the bases have fewer than k distinct
/// non-empty subsets.
pub fn basis_freq(
    d: &TransactionDataset,
    b: &BasisSet,
    k: usize,
    eps: f64,
    src: &mut NoiseSource,
) -> Result<Vec<ReleasedItemset>, PrivBasisError> {
    if k == 0 {
        return Err(PrivBasisError::Config("k must be at least 1".into()));
    }
    let n = d.n_transactions() as f64;
    let table = candidate_counts(d, b, eps, src)?;
    Ok(table
        .into_ranked(k)
        .into_iter()
        .map(|(itemset, nc)| ReleasedItemset { itemset, noisy_frequency: nc / n })
        .collect())
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Result of the private basis-count selection.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaChoice {
    pub lambda: usize,
    pub k1: usize,
    /// Exact frequency of the k1-th itemset, the target the item-count
    /// quality is centered on.
    pub theta: f64,
    /// True when fewer than k1 itemsets have positive support.
    pub k1_clamped: bool,
}

/// Privately selects how many of the most frequent items the top k itemsets
/// are expected to be drawn from: index `i` (1-based, over items ranked by
/// frequency) is scored by `(1 - |theta - f_item_i|) * n`, where `theta` is
/// the exact frequency of the `ceil(k * eta)`-th itemset, and sampled with a
/// two-sided exponent at sensitivity 1.
pub fn get_lambda(
    d: &TransactionDataset,
    k: usize,
    eps: f64,
    eta: f64,
    src: &mut NoiseSource,
) -> Result<LambdaChoice, PrivBasisError> {
    if k == 0 {
        return Err(PrivBasisError::Config("k must be at least 1".into()));
    }
    if !(eta >= 1.0 && eta.is_finite()) {
        return Err(PrivBasisError::Config(format!("eta must be at least 1, got {eta}")));
    }
    let n = d.n_transactions();
    let k1 = snap(eta * k as f64).ceil() as usize;
    let top = miner::exact_top_k(d, k1)?;
    let Some(last) = top.last() else {
        return Err(PrivBasisError::NoFrequentItemsets);
    };
    let k1_clamped = top.len() < k1;
    if k1_clamped {
        log::warn!("only {} itemsets have positive support; k1 clamped from {k1}", top.len());
    }
    let theta = last.frequency(n);

    let singletons: Vec<Itemset> =
        d.universe().iter().map(|&i| Itemset::from_sorted(vec![i])).collect();
    let mut supports: Vec<(u64, Item)> = miner::support_counts(d, &singletons)
        .into_iter()
        .zip(d.universe().iter().copied())
        .map(|(s, i)| (s, i))
        .collect();
    supports.sort_unstable_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let qualities: Vec<f64> = supports
        .iter()
        .map(|&(s, _)| (1.0 - (theta - s as f64 / n as f64).abs()) * n as f64)
        .collect();
    let idx = dp::exp_mechanism(&qualities, eps, 1.0, false, src)?;
    Ok(LambdaChoice { lambda: idx + 1, k1, theta, k1_clamped })
}

/// Privately selects `count` of the given candidate itemsets, highest
/// support favored, by repeated exponential mechanism without replacement at
/// a per-round budget of `eps/count`. Returns the selection in order.
/// A `count` beyond the candidate list is clamped.
pub fn get_freq_elements(
    d: &TransactionDataset,
    candidates: &[Itemset],
    count: usize,
    eps: f64,
    mode: FreqElementsMode,
    src: &mut NoiseSource,
) -> Result<Vec<Itemset>, PrivBasisError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if candidates.is_empty() {
        return Err(DpError::NoCandidates.into());
    }
    let count = if count > candidates.len() {
        log::warn!("requested {count} elements from {} candidates; clamping", candidates.len());
        candidates.len()
    } else {
        count
    };
    let supports = miner::support_counts(d, candidates);
    let n = d.n_transactions() as f64;
    let qualities: Vec<f64> = match mode {
        FreqElementsMode::Support => supports.iter().map(|&s| s as f64).collect(),
        FreqElementsMode::LiteralFrequency => supports.iter().map(|&s| s as f64 / n).collect(),
    };
    let picked = dp::sample_without_replacement(&qualities, count, eps, 1.0, true, src)?;
    Ok(picked.into_iter().map(|i| candidates[i].clone()).collect())
}

/// Pair-selection size for the two-level basis construction: starts from
/// `eta*k - lambda` and shrinks by the square root of how far that exceeds
/// `lambda`, capped by the number of available pairs.
pub fn lambda2_heuristic(k: usize, lambda: usize, eta: f64) -> usize {
    debug_assert!(lambda >= 1);
    let raw = snap(eta * k as f64) - lambda as f64;
    if raw <= 0.0 {
        return 0;
    }
    let ratio = (raw / lambda as f64).max(1.0);
    let lambda2 = snap(raw / ratio.sqrt()).floor() as usize;
    lambda2.min(lambda * (lambda - 1) / 2)
}

/// Per-run diagnostics: selected sizes, budget split, basis geometry, and
/// clamp/retry events.
#[derive(Debug, Clone, Serialize)]
pub struct PbDiagnostics {
    pub lambda: usize,
    pub k1: usize,
    pub theta: f64,
    pub k1_clamped: bool,
    pub lambda2_requested: Option<usize>,
    pub lambda2_used: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub basis_width: usize,
    pub basis_max_len: usize,
    pub basis_lens: Vec<usize>,
    pub construction_retries: u32,
    pub short_output: bool,
}

pub struct PbOutcome {
    pub released: Vec<ReleasedItemset>,
    pub diagnostics: PbDiagnostics,
    pub ledger: BudgetLedger,
}

/// End-to-end private top-k release.
///
/// Budget: `alpha1` picks the item count lambda; `alpha2` selects frequent
/// items (split between items and pairs proportionally to lambda against
/// lambda2 when two-level construction runs); `alpha3` builds the noisy bin
/// tables and releases the top k reconstructed frequencies. All randomness
/// comes from sub-streams of `src` labeled by step, so runs are reproducible
/// per seed and steps never share draws.
pub fn privbasis_main(
    d: &TransactionDataset,
    cfg: &PrivBasisConfig,
    src: &NoiseSource,
) -> Result<PbOutcome, PrivBasisError> {
    cfg.validate()?;
    let n = d.n_transactions();
    let eta = cfg.eta();
    let mut ledger = BudgetLedger::new(cfg.eps)?;

    let eps_lambda = ledger.spend("lambda", cfg.alpha1)?;
    let choice = get_lambda(d, cfg.k, eps_lambda, eta, &mut src.derive("lambda"))?;
    let lambda = choice.lambda;

    let singletons: Vec<Itemset> =
        d.universe().iter().map(|&i| Itemset::from_sorted(vec![i])).collect();

    let mut diag = PbDiagnostics {
        lambda,
        k1: choice.k1,
        theta: choice.theta,
        k1_clamped: choice.k1_clamped,
        lambda2_requested: None,
        lambda2_used: None,
        beta1: None,
        beta2: None,
        basis_width: 0,
        basis_max_len: 0,
        basis_lens: Vec::new(),
        construction_retries: 0,
        short_output: false,
    };

    let (basis, eps_release) = if lambda <= cfg.single_basis_cap {
        let eps_items = ledger.spend("items", cfg.alpha2)?;
        let f = get_freq_elements(
            d,
            &singletons,
            lambda,
            eps_items,
            cfg.freq_elements_mode,
            &mut src.derive("items"),
        )?;
        let basis = BasisSet::new(vec![Itemset::new(f.iter().flat_map(|x| x.iter()))])?;
        let eps_release = ledger.spend("release", cfg.alpha3)?;
        (basis, eps_release)
    } else {
        let lambda2_target = lambda2_heuristic(cfg.k, lambda, eta);
        diag.lambda2_requested = Some(lambda2_target);

        let (f, selected_pairs) = if lambda2_target == 0 {
            let eps_items = ledger.spend("items", cfg.alpha2)?;
            let f = get_freq_elements(
                d,
                &singletons,
                lambda,
                eps_items,
                cfg.freq_elements_mode,
                &mut src.derive("items"),
            )?;
            (f, Vec::new())
        } else {
            let beta1 = cfg.alpha2 * lambda as f64 / (lambda + lambda2_target) as f64;
            let beta2 = cfg.alpha2 - beta1;
            diag.beta1 = Some(beta1);
            diag.beta2 = Some(beta2);
            let eps_items = ledger.spend("items", beta1)?;
            let f = get_freq_elements(
                d,
                &singletons,
                lambda,
                eps_items,
                cfg.freq_elements_mode,
                &mut src.derive("items"),
            )?;
            let mut f_items: Vec<Item> = f.iter().map(|x| x.items()[0]).collect();
            f_items.sort_unstable();
            let mut pair_candidates = Vec::with_capacity(f_items.len() * (f_items.len() - 1) / 2);
            for (i, &a) in f_items.iter().enumerate() {
                for &b in &f_items[i + 1..] {
                    pair_candidates.push(Itemset::from_sorted(vec![a, b]));
                }
            }
            let eps_pairs = ledger.spend("pairs", beta2)?;
            let selected = get_freq_elements(
                d,
                &pair_candidates,
                lambda2_target,
                eps_pairs,
                cfg.freq_elements_mode,
                &mut src.derive("pairs"),
            )?;
            (f, selected)
        };

        let f_items: Vec<Item> = f.iter().map(|x| x.items()[0]).collect();
        let eps_release = ledger.spend("release", cfg.alpha3)?;
        let mut lambda2 = selected_pairs.len();
        let basis = loop {
            let pairs: Vec<(Item, Item)> = selected_pairs[..lambda2]
                .iter()
                .map(|x| (x.items()[0], x.items()[1]))
                .collect();
            match construct_basis_set(&f_items, &pairs, eps_release, n, cfg.l_max) {
                Ok(b) => break b,
                Err(PrivBasisError::OversizedClique { clique, len, .. })
                    if diag.construction_retries < 3 =>
                {
                    diag.construction_retries += 1;
                    let reduced = (lambda2 as f64 * 0.75).floor() as usize;
                    log::warn!(
                        "clique {{{clique}}} of {len} items exceeds l_max; \
                         retrying with lambda2 {lambda2} -> {reduced}"
                    );
                    lambda2 = reduced;
                }
                Err(e) => return Err(e),
            }
        };
        diag.lambda2_used = Some(lambda2);
        (basis, eps_release)
    };

    diag.basis_width = basis.width();
    diag.basis_max_len = basis.max_len();
    diag.basis_lens = basis.bases().iter().map(|b| b.len()).collect();

    let released = basis_freq(d, &basis, cfg.k, eps_release, &mut src.derive("release"))?;
    diag.short_output = released.len() < cfg.k;
    if diag.short_output {
        log::warn!(
            "bases yield only {} candidate itemsets for k = {}",
            released.len(),
            cfg.k
        );
    }
    ledger.seal();
    Ok(PbOutcome { released, diagnostics: diag, ledger })
}
