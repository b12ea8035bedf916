//! Transaction data: canonical itemsets, datasets, FIMI text I/O, and a
//! seeded synthetic generator with exact frequency planting.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Item identifier. FIMI files use arbitrary non-negative integer ids.
pub type Item = u32;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dataset has no transactions")]
    Empty,
    #[error("transaction contains item {item} outside the declared universe")]
    OutsideUniverse { item: Item },
    #[error("transaction {index} is empty and cannot be written in FIMI format")]
    EmptyTransaction { index: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("conflicting plants: {0}")]
    PlantConflict(String),
}

/// A set of items in canonical form: sorted ascending, no duplicates.
///
/// Ordering is lexicographic on the sorted id sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Itemset(Vec<Item>);

impl Itemset {
    /// Builds an itemset from any iterator of ids, sorting and deduplicating.
    pub fn new(items: impl IntoIterator<Item = Item>) -> Self {
        let mut v: Vec<Item> = items.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Itemset(v)
    }

    /// Wraps a vector that is already strictly ascending.
    pub fn from_sorted(items: Vec<Item>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]), "not strictly sorted");
        Itemset(items)
    }

    pub fn empty() -> Self {
        Itemset(Vec::new())
    }

    pub fn items(&self) -> &[Item] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: Item) -> bool {
        self.0.binary_search(&item).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = Item> + '_ {
        self.0.iter().copied()
    }

    /// Subset test via a merge walk over the two sorted sequences.
    pub fn is_subset_of(&self, other: &Itemset) -> bool {
        is_sorted_subset(&self.0, &other.0)
    }

    pub fn union(&self, other: &Itemset) -> Itemset {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    v.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    v.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    v.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        v.extend_from_slice(&self.0[i..]);
        v.extend_from_slice(&other.0[j..]);
        Itemset(v)
    }
}

pub(crate) fn is_sorted_subset(sub: &[Item], sup: &[Item]) -> bool {
    let mut j = 0;
    for &x in sub {
        while j < sup.len() && sup[j] < x {
            j += 1;
        }
        if j == sup.len() || sup[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

impl fmt::Display for Itemset {
    /// Space-separated ids, matching one FIMI line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, item) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{item}")?;
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for Itemset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Itemset::new(Vec::<Item>::deserialize(d)?))
    }
}

impl FromIterator<Item> for Itemset {
    fn from_iter<T: IntoIterator<Item = Item>>(iter: T) -> Self {
        Itemset::new(iter)
    }
}

/// An immutable multiset of transactions over a declared item universe.
#[derive(Debug, Clone)]
pub struct TransactionDataset {
    transactions: Vec<Itemset>,
    universe: Vec<Item>,
}

impl TransactionDataset {
    /// Builds a dataset whose universe is exactly the set of observed items.
    pub fn new(transactions: Vec<Itemset>) -> Result<Self, DatasetError> {
        if transactions.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut universe: BTreeSet<Item> = BTreeSet::new();
        for t in &transactions {
            universe.extend(t.iter());
        }
        Ok(Self { transactions, universe: universe.into_iter().collect() })
    }

    /// Like [`Self::new`] but with an explicitly declared universe, which may
    /// include items that never occur in any transaction.
    pub fn with_universe(
        transactions: Vec<Itemset>,
        universe: impl IntoIterator<Item = Item>,
    ) -> Result<Self, DatasetError> {
        if transactions.is_empty() {
            return Err(DatasetError::Empty);
        }
        let universe: BTreeSet<Item> = universe.into_iter().collect();
        for t in &transactions {
            for item in t.iter() {
                if !universe.contains(&item) {
                    return Err(DatasetError::OutsideUniverse { item });
                }
            }
        }
        Ok(Self { transactions, universe: universe.into_iter().collect() })
    }

    pub fn transactions(&self) -> &[Itemset] {
        &self.transactions
    }

    pub fn n_transactions(&self) -> usize {
        self.transactions.len()
    }

    /// Declared item universe, sorted ascending.
    pub fn universe(&self) -> &[Item] {
        &self.universe
    }

    /// Number of transactions containing `x`. The empty itemset is contained
    /// in every transaction.
    pub fn support(&self, x: &Itemset) -> u64 {
        self.transactions.iter().filter(|t| x.is_subset_of(t)).count() as u64
    }

    /// Fraction of transactions containing `x`.
    pub fn frequency(&self, x: &Itemset) -> f64 {
        self.support(x) as f64 / self.transactions.len() as f64
    }

    /// Parses FIMI text: one transaction per line, whitespace-separated item
    /// ids, blank lines skipped, duplicate ids within a line collapsed.
    pub fn parse_fimi(text: &str) -> Result<Self, DatasetError> {
        let mut transactions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut items = Vec::new();
            for tok in line.split_whitespace() {
                let item: Item = tok.parse().map_err(|_| DatasetError::Parse {
                    line: i + 1,
                    msg: format!("invalid item id {tok:?}"),
                })?;
                items.push(item);
            }
            transactions.push(Itemset::new(items));
        }
        Self::new(transactions)
    }

    pub fn load_fimi(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::parse_fimi(&fs::read_to_string(path)?)
    }

    /// Renders the dataset as FIMI text. Empty transactions have no line
    /// representation and are rejected.
    pub fn to_fimi_string(&self) -> Result<String, DatasetError> {
        let mut out = String::new();
        for (index, t) in self.transactions.iter().enumerate() {
            if t.is_empty() {
                return Err(DatasetError::EmptyTransaction { index });
            }
            out.push_str(&t.to_string());
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save_fimi(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        fs::write(path, self.to_fimi_string()?)?;
        Ok(())
    }
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Universe is `0..universe_size`.
    pub universe_size: u32,
    /// Each `(itemset, target)` is contained in exactly `round(target * n)`
    /// transactions of the output.
    pub planted: Vec<(Itemset, f64)>,
    /// Independent inclusion probability for every item that does not occur
    /// in any planted itemset.
    pub background_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        if self.n == 0 {
            return Err(DatasetError::InvalidSpec("n must be at least 1".into()));
        }
        if self.universe_size == 0 {
            return Err(DatasetError::InvalidSpec("universe_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.background_rate) {
            return Err(DatasetError::InvalidSpec(format!(
                "background_rate {} outside [0, 1]",
                self.background_rate
            )));
        }
        for (x, f) in &self.planted {
            if x.is_empty() {
                return Err(DatasetError::InvalidSpec("planted itemset is empty".into()));
            }
            if !(0.0..=1.0).contains(f) {
                return Err(DatasetError::InvalidSpec(format!(
                    "planted frequency {f} for {{{x}}} outside [0, 1]"
                )));
            }
            if let Some(&item) = x.items().iter().find(|&&i| i >= self.universe_size) {
                return Err(DatasetError::InvalidSpec(format!(
                    "planted item {item} outside universe 0..{}",
                    self.universe_size
                )));
            }
        }
        for i in 0..self.planted.len() {
            for j in 0..self.planted.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (&self.planted[i].0, &self.planted[j].0);
                if a.is_subset_of(b) {
                    return Err(DatasetError::PlantConflict(format!(
                        "{{{a}}} is a subset of {{{b}}}; exact counts for both cannot be satisfied"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generates a seeded dataset in which every planted itemset has an exact
/// support of `round(target * n)`.
///
/// Plants are laid out in disjoint transaction blocks and background items
/// are drawn only from items outside all plants, so planted supports are
/// exact rather than approximate. Plants that cannot be satisfied exactly
/// (one a subset of another, or combined counts exceeding `n`) are rejected.
///
/// Every transaction in the output is non-empty: a transaction that receives
/// neither a plant nor any background item is given a single uniformly chosen
/// free item instead, which leaves planted supports untouched. When the
/// universe has no free items this fill is impossible, so specs whose plants
/// cover the whole universe must also cover all `n` transactions.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TransactionDataset, DatasetError> {
    spec.validate()?;
    let counts: Vec<usize> =
        spec.planted.iter().map(|(_, f)| (f * spec.n as f64).round() as usize).collect();
    let total: usize = counts.iter().sum();
    if total > spec.n {
        return Err(DatasetError::PlantConflict(format!(
            "planted counts sum to {total} but n = {}",
            spec.n
        )));
    }

    let planted_items: BTreeSet<Item> =
        spec.planted.iter().flat_map(|(x, _)| x.iter()).collect();
    let free_items: Vec<Item> =
        (0..spec.universe_size).filter(|i| !planted_items.contains(i)).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut transactions = Vec::with_capacity(spec.n);
    for ((x, _), &c) in spec.planted.iter().zip(&counts) {
        for _ in 0..c {
            transactions.push(x.items().to_vec());
        }
    }
    transactions.resize(spec.n, Vec::new());
    for t in &mut transactions {
        for &item in &free_items {
            if rng.gen::<f64>() < spec.background_rate {
                t.push(item);
            }
        }
        if t.is_empty() {
            if free_items.is_empty() {
                return Err(DatasetError::InvalidSpec(format!(
                    "plants cover the whole universe but only {total} of {} transactions; \
                     empty transactions cannot be represented",
                    spec.n
                )));
            }
            t.push(free_items[rng.gen_range(0..free_items.len())]);
        }
    }
    transactions.shuffle(&mut rng);

    let transactions: Vec<Itemset> = transactions.into_iter().map(Itemset::new).collect();
    TransactionDataset::with_universe(transactions, 0..spec.universe_size)
}
