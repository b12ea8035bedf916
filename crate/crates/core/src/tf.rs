//! Truncated-frequency baseline for private top-k release.
//!
//! The candidate universe is every itemset of length at most `m`. Half the
//! budget selects k candidates, favoring high frequency; the other half
//! releases their true frequencies under Laplace noise. Instead of scoring
//! the astronomically large universe member by member, frequencies below
//! `f_k - gamma` are truncated to that bound, so the whole sub-threshold
//! pool collapses into one weight and only the above-threshold itemsets are
//! ever enumerated.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Item, Itemset, TransactionDataset};
use crate::dp::{self, BudgetLedger, DpError, NoiseSource};
use crate::miner::{self, MinerError};
use crate::privbasis::ReleasedItemset;

#[derive(Debug, Error)]
pub enum TfError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(
        "universe of {size} itemsets exceeds the explicit-enumeration guard {guard}; \
         use truncated-pruning mode or a smaller m"
    )]
    UniverseTooLarge { size: BigUint, guard: u64 },
}

/// How the k candidates are selected from the universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TfSelection {
    /// Perturb every truncated frequency with Laplace noise and keep the k
    /// largest.
    Laplace,
    /// k rounds of exponential sampling without replacement, each spending
    /// half the selection budget divided by k, two-sided exponent. Default.
    #[default]
    Exponential,
}

/// Whether the universe is materialized or pruned at the truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniverseMode {
    /// Enumerate and score every itemset of length <= m. Only viable for
    /// small universes; guarded by `universe_guard`.
    Explicit,
    /// Enumerate only itemsets above the truncation bound; the rest form a
    /// single pool sampled uniformly by combinatorial index. Default.
    #[default]
    TruncatedPruning,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TfConfig {
    pub k: usize,
    pub eps: f64,
    /// Maximum candidate itemset length.
    pub m: usize,
    /// Bound on the probability that a far-below-threshold itemset is
    /// selected; enters the truncation margin gamma.
    pub rho: f64,
    pub selection: TfSelection,
    pub universe_mode: UniverseMode,
    /// Largest universe the explicit mode will materialize.
    pub universe_guard: u64,
}

impl Default for TfConfig {
    fn default() -> Self {
        TfConfig {
            k: 0,
            eps: 0.0,
            m: 1,
            rho: 0.05,
            selection: TfSelection::default(),
            universe_mode: UniverseMode::default(),
            universe_guard: 10_000_000,
        }
    }
}

impl TfConfig {
    pub fn new(k: usize, eps: f64, m: usize, rho: f64) -> Self {
        TfConfig { k, eps, m, rho, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), TfError> {
        let fail = |msg: String| Err(TfError::Config(msg));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        if self.m == 0 {
            return fail("m must be at least 1".into());
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return fail(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if self.universe_guard == 0 {
            return fail("universe_guard must be at least 1".into());
        }
        Ok(())
    }
}

/// Number of non-empty itemsets of length at most `m` over `n_items` items.
pub fn universe_size(n_items: usize, m: usize) -> BigUint {
    (1..=m.min(n_items)).map(|i| binomial(n_items, i)).sum()
}

/// Truncation margin: `(4k / (eps n)) * (ln(k/rho) + ln u)`. Selecting an
/// itemset whose frequency is below `f_k - gamma` then has probability at
/// most `rho`.
pub fn gamma(k: usize, eps: f64, n: usize, rho: f64, u: &BigUint) -> f64 {
    debug_assert!(k >= 1 && n >= 1 && eps > 0.0 && rho > 0.0 && rho < 1.0 && !u.is_zero());
    let ln_u = match u.to_f64() {
        Some(f) if f.is_finite() => f.ln(),
        _ => u.bits() as f64 * std::f64::consts::LN_2,
    };
    4.0 * k as f64 / (eps * n as f64) * ((k as f64 / rho).ln() + ln_u)
}

/// `max(f_x, f_k - gamma)`; negative when gamma exceeds f_k, which is the
/// regime where truncation stops pruning anything.
pub fn truncated_frequency(f_x: f64, f_k: f64, gamma: f64) -> f64 {
    f_x.max(f_k - gamma)
}

fn binomial(n: usize, r: usize) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    let mut c = BigUint::from(1u32);
    for i in 0..r {
        c = c * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    c
}

/// Rank of a combination (strictly increasing 0-based indices) among all
/// `len`-subsets of `{0..n}` in lexicographic order, using hockey-stick
/// prefix sums.
fn combination_rank(indices: &[usize], n: usize) -> BigUint {
    let l = indices.len();
    let mut rank = BigUint::zero();
    let mut prev: i64 = -1;
    for (i, &c) in indices.iter().enumerate() {
        let r = l - i;
        rank += binomial((n as i64 - 1 - prev) as usize, r) - binomial(n - c, r);
        prev = c as i64;
    }
    rank
}

fn combination_unrank(mut rank: BigUint, n: usize, l: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(l);
    let mut c = 0usize;
    for i in 0..l {
        loop {
            let block = binomial(n - 1 - c, l - 1 - i);
            if rank < block {
                break;
            }
            rank -= block;
            c += 1;
        }
        out.push(c);
        c += 1;
    }
    out
}

/// Rank of an itemset in the size-then-lex order over all non-empty
/// itemsets of length <= m: shorter itemsets first, lex within a length.
fn global_rank(indices: &[usize], n_items: usize) -> BigUint {
    let offset: BigUint = (1..indices.len()).map(|i| binomial(n_items, i)).sum();
    offset + combination_rank(indices, n_items)
}

fn global_unrank(mut rank: BigUint, n_items: usize, m: usize) -> Vec<usize> {
    let mut l = 1usize;
    loop {
        let block = binomial(n_items, l);
        if rank < block {
            return combination_unrank(rank, n_items, l);
        }
        rank -= block;
        l += 1;
        debug_assert!(l <= m, "rank beyond the length-{m} universe");
    }
}

/// Uniform draw from `[0, bound)` by rejection on the top bit width. A
/// noise-off source deterministically returns 0.
fn uniform_below(bound: &BigUint, src: &mut NoiseSource) -> BigUint {
    debug_assert!(!bound.is_zero());
    if src.is_noise_off() {
        return BigUint::zero();
    }
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let top_mask: u8 = if bits % 8 == 0 { 0xff } else { (1u8 << (bits % 8)) - 1 };
    loop {
        let mut buf = vec![0u8; bytes];
        src.rng().fill_bytes(&mut buf);
        buf[bytes - 1] &= top_mask;
        let cand = BigUint::from_bytes_le(&buf);
        if &cand < bound {
            return cand;
        }
    }
}

/// The sub-threshold pool: all length-<= m itemsets except an excluded set
/// tracked by combinatorial rank. Draws are uniform over the remainder.
struct ResidualPool {
    n_items: usize,
    m: usize,
    excluded: Vec<BigUint>,
    remaining: BigUint,
}

impl ResidualPool {
    fn new(n_items: usize, m: usize, u: &BigUint, mut excluded: Vec<BigUint>) -> Self {
        excluded.sort_unstable();
        let remaining = u - BigUint::from(excluded.len());
        ResidualPool { n_items, m, excluded, remaining }
    }

    fn remaining(&self) -> &BigUint {
        &self.remaining
    }

    fn draw(&mut self, universe: &[Item], src: &mut NoiseSource) -> Itemset {
        debug_assert!(!self.remaining.is_zero());
        let mut adjusted = uniform_below(&self.remaining, src);
        for e in &self.excluded {
            if e <= &adjusted {
                adjusted += 1u32;
            } else {
                break;
            }
        }
        let pos = self.excluded.binary_search(&adjusted).unwrap_err();
        self.excluded.insert(pos, adjusted.clone());
        self.remaining -= 1u32;
        let indices = global_unrank(adjusted, self.n_items, self.m);
        Itemset::from_sorted(indices.into_iter().map(|i| universe[i]).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TfDiagnostics {
    pub m: usize,
    pub rho: f64,
    pub universe_size: String,
    pub gamma: f64,
    pub f_k: f64,
    /// Effective truncation bound `max(0, f_k - gamma)`.
    pub threshold: f64,
    /// True when gamma is at least f_k, so truncation prunes nothing and the
    /// enumerated set is simply every itemset with positive support.
    pub pruning_disabled: bool,
    /// Number of explicitly enumerated (above-threshold) itemsets, pruning
    /// mode only.
    pub above_threshold: Option<usize>,
    /// Size of the sub-threshold pool, pruning mode only.
    pub residual_size: Option<String>,
    pub short_output: bool,
}

pub struct TfOutcome {
    pub released: Vec<ReleasedItemset>,
    pub diagnostics: TfDiagnostics,
    pub ledger: BudgetLedger,
}

/// Selects k itemsets of length <= m (half the budget) and releases their
/// true frequencies under `Lap(2k/(n eps))` (the other half). Universes
/// smaller than k are released whole and flagged.
pub fn tf_select_and_release(
    d: &TransactionDataset,
    cfg: &TfConfig,
    src: &NoiseSource,
) -> Result<TfOutcome, TfError> {
    cfg.validate()?;
    let n = d.n_transactions();
    let n_items = d.universe().len();
    let u = universe_size(n_items, cfg.m);
    if u.is_zero() {
        return Err(TfError::Config("dataset has no items".into()));
    }
    let g = gamma(cfg.k, cfg.eps, n, cfg.rho, &u);
    let top = miner::exact_top_k_bounded(d, cfg.k, Some(cfg.m))?;
    let f_k =
        if top.len() == cfg.k { top.last().expect("k >= 1").frequency(n) } else { 0.0 };
    let threshold = (f_k - g).max(0.0);
    let pruning_disabled = f_k - g <= 0.0;

    let mut ledger = BudgetLedger::new(cfg.eps)?;
    let eps_select = ledger.spend("selection", 0.5)?;
    let eps_release = ledger.spend("release", 0.5)?;
    ledger.seal();

    let count = match u.to_usize() {
        Some(size) if size < cfg.k => size,
        _ => cfg.k,
    };
    let mut diag = TfDiagnostics {
        m: cfg.m,
        rho: cfg.rho,
        universe_size: u.to_string(),
        gamma: g,
        f_k,
        threshold,
        pruning_disabled,
        above_threshold: None,
        residual_size: None,
        short_output: count < cfg.k,
    };

    let mut sel_src = src.derive("selection");
    let selected = match cfg.universe_mode {
        UniverseMode::Explicit => {
            select_explicit(d, cfg, count, eps_select, threshold, &u, &mut sel_src)?
        }
        UniverseMode::TruncatedPruning => {
            select_pruning(d, cfg, count, eps_select, threshold, &u, &mut diag, &mut sel_src)?
        }
    };

    let mut rel_src = src.derive("release");
    let scale = cfg.k as f64 / (n as f64 * eps_release);
    let supports = miner::support_counts(d, &selected);
    let mut released: Vec<ReleasedItemset> = selected
        .into_iter()
        .zip(supports)
        .map(|(itemset, s)| {
            Ok(ReleasedItemset {
                itemset,
                noisy_frequency: s as f64 / n as f64 + dp::laplace(scale, &mut rel_src)?,
            })
        })
        .collect::<Result<_, DpError>>()?;
    released.sort_unstable_by(|a, b| {
        b.noisy_frequency
            .partial_cmp(&a.noisy_frequency)
            .unwrap()
            .then_with(|| a.itemset.len().cmp(&b.itemset.len()))
            .then_with(|| a.itemset.cmp(&b.itemset))
    });
    Ok(TfOutcome { released, diagnostics: diag, ledger })
}

fn select_explicit(
    d: &TransactionDataset,
    cfg: &TfConfig,
    count: usize,
    eps_select: f64,
    threshold: f64,
    u: &BigUint,
    src: &mut NoiseSource,
) -> Result<Vec<Itemset>, TfError> {
    if u > &BigUint::from(cfg.universe_guard) {
        return Err(TfError::UniverseTooLarge { size: u.clone(), guard: cfg.universe_guard });
    }
    let universe = d.universe().to_vec();
    let mut candidates: Vec<Itemset> = Vec::with_capacity(u.to_usize().unwrap_or(0));
    let mut stack = vec![0usize; cfg.m.min(universe.len())];
    for l in 1..=cfg.m.min(universe.len()) {
        combinations(&universe, l, &mut stack, &mut candidates);
    }
    debug_assert_eq!(BigUint::from(candidates.len()), *u);

    let n = d.n_transactions() as f64;
    let supports = miner::support_counts(d, &candidates);
    let pool_q = threshold * n;
    let qualities: Vec<f64> = supports.iter().map(|&s| (s as f64).max(pool_q)).collect();

    match cfg.selection {
        TfSelection::Exponential => {
            let picked =
                dp::sample_without_replacement(&qualities, count, eps_select, 1.0, false, src)?;
            Ok(picked.into_iter().map(|i| candidates[i].clone()).collect())
        }
        TfSelection::Laplace => {
            let scale = 2.0 * cfg.k as f64 / (n * eps_select);
            let mut noisy: Vec<(f64, usize)> = qualities
                .iter()
                .enumerate()
                .map(|(i, &q)| Ok((q / n + dp::laplace(scale, src)?, i)))
                .collect::<Result<_, DpError>>()?;
            noisy.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1))
            });
            Ok(noisy[..count].iter().map(|&(_, i)| candidates[i].clone()).collect())
        }
    }
}

/// Fills `out` with all `l`-combinations of `items` in lexicographic order.
fn combinations(items: &[Item], l: usize, stack: &mut [usize], out: &mut Vec<Itemset>) {
    fn rec(items: &[Item], l: usize, depth: usize, start: usize, stack: &mut [usize], out: &mut Vec<Itemset>) {
        if depth == l {
            out.push(Itemset::from_sorted(stack[..l].iter().map(|&i| items[i]).collect()));
            return;
        }
        for i in start..=(items.len() - (l - depth)) {
            stack[depth] = i;
            rec(items, l, depth + 1, i + 1, stack, out);
        }
    }
    rec(items, l, 0, 0, stack, out);
}

#[allow(clippy::too_many_arguments)]
fn select_pruning(
    d: &TransactionDataset,
    cfg: &TfConfig,
    count: usize,
    eps_select: f64,
    threshold: f64,
    u: &BigUint,
    diag: &mut TfDiagnostics,
    src: &mut NoiseSource,
) -> Result<Vec<Itemset>, TfError> {
    let n = d.n_transactions();
    let n_items = d.universe().len();
    let universe = d.universe().to_vec();
    let index_of: HashMap<Item, usize> =
        universe.iter().enumerate().map(|(i, &item)| (item, i)).collect();

    // Everything with frequency strictly above the truncation bound is
    // enumerated exactly; the rest share one truncated weight.
    let min_support = (threshold * n as f64).floor() as u64 + 1;
    let above = miner::frequent_itemsets(d, min_support, Some(cfg.m));
    let a_sets: Vec<Itemset> = above.iter().map(|r| r.itemset.clone()).collect();
    let a_supports: Vec<u64> = above.iter().map(|r| r.support).collect();
    let ranks: Vec<BigUint> = a_sets
        .iter()
        .map(|x| {
            let idx: Vec<usize> = x.iter().map(|item| index_of[&item]).collect();
            global_rank(&idx, n_items)
        })
        .collect();
    let mut pool = ResidualPool::new(n_items, cfg.m, u, ranks);
    diag.above_threshold = Some(a_sets.len());
    diag.residual_size = Some(pool.remaining().to_string());

    let pool_q = threshold * n as f64;
    let mut selected: Vec<Itemset> = Vec::with_capacity(count);

    match cfg.selection {
        TfSelection::Exponential => {
            let eps_round = eps_select / count as f64;
            let c = eps_round / 2.0;
            let mut alive: Vec<bool> = vec![true; a_sets.len()];
            for _ in 0..count {
                let choice = sample_round(&a_supports, &alive, pool_q, pool.remaining(), c, src);
                match choice {
                    Some(i) => {
                        alive[i] = false;
                        selected.push(a_sets[i].clone());
                    }
                    None => selected.push(pool.draw(&universe, src)),
                }
            }
        }
        TfSelection::Laplace => {
            let scale = 2.0 * cfg.k as f64 / (n as f64 * eps_select);
            // (value, pool?, index) for explicit candidates and for the top
            // order statistics of the pool's i.i.d. noisy values.
            let mut entries: Vec<(f64, bool, usize)> = Vec::new();
            for (i, &s) in a_supports.iter().enumerate() {
                let value = s as f64 / n as f64 + dp::laplace(scale, src)?;
                entries.push((value, false, i));
            }
            let pool_n = pool.remaining().to_f64().unwrap_or(f64::MAX);
            let pool_take = match pool.remaining().to_usize() {
                Some(r) => r.min(count),
                None => count,
            };
            let mut ln_p = 0.0f64;
            for i in 0..pool_take {
                let value = if src.is_noise_off() {
                    threshold
                } else {
                    ln_p += src.open01().ln() / (pool_n - i as f64);
                    threshold + laplace_quantile_from_ln(ln_p, scale)
                };
                entries.push((value, true, i));
            }
            entries.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then_with(|| a.1.cmp(&b.1))
                    .then_with(|| a.2.cmp(&b.2))
            });
            for &(_, from_pool, i) in entries.iter().take(count) {
                if from_pool {
                    selected.push(pool.draw(&universe, src));
                } else {
                    selected.push(a_sets[i].clone());
                }
            }
        }
    }
    Ok(selected)
}

/// One exponential-mechanism round over the alive explicit candidates plus
/// the pooled sub-threshold mass. Weights are handled in a max-shifted log
/// domain, so count-scale exponents cannot overflow. Returns the index of
/// the chosen explicit candidate, or None for the pool.
fn sample_round(
    supports: &[u64],
    alive: &[bool],
    pool_q: f64,
    pool_size: &BigUint,
    c: f64,
    src: &mut NoiseSource,
) -> Option<usize> {
    let pool_ln_weight = if pool_size.is_zero() {
        None
    } else {
        let ln_r = match pool_size.to_f64() {
            Some(f) if f.is_finite() => f.ln(),
            _ => pool_size.bits() as f64 * std::f64::consts::LN_2,
        };
        Some(c * pool_q + ln_r)
    };

    if src.is_noise_off() {
        // Explicit candidates always outweigh the pool's per-member quality;
        // fall to the pool only when none are alive.
        let best = alive
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a)
            .map(|(i, _)| (std::cmp::Reverse(supports[i]), i))
            .min();
        return best.map(|(_, i)| i);
    }

    let mut shift = f64::NEG_INFINITY;
    for (i, &a) in alive.iter().enumerate() {
        if a {
            shift = shift.max(c * supports[i] as f64);
        }
    }
    if let Some(w) = pool_ln_weight {
        shift = shift.max(w);
    }
    debug_assert!(shift.is_finite(), "no candidates left to sample");

    let mut total = 0.0f64;
    for (i, &a) in alive.iter().enumerate() {
        if a {
            total += (c * supports[i] as f64 - shift).exp();
        }
    }
    if let Some(w) = pool_ln_weight {
        total += (w - shift).exp();
    }
    let mut target = src.open01() * total;
    for (i, &a) in alive.iter().enumerate() {
        if a {
            target -= (c * supports[i] as f64 - shift).exp();
            if target <= 0.0 {
                return Some(i);
            }
        }
    }
    None
}

/// Laplace quantile at probability `p` given `ln p`, stable in both tails.
fn laplace_quantile_from_ln(ln_p: f64, scale: f64) -> f64 {
    use std::f64::consts::LN_2;
    if ln_p > -LN_2 {
        // p > 1/2: x = -scale * ln(2(1 - p)), with ln(1-p) via expm1.
        -scale * (LN_2 + (-ln_p.exp_m1()).ln())
    } else {
        scale * (LN_2 + ln_p)
    }
}
