//! Differentially private top-k frequent itemset mining.
//!
//! Two release pipelines over FIMI-style transaction data, built on shared
//! mining and noise primitives:
//!
//! - [`privbasis`]: picks a small set of basis itemsets privately, estimates
//!   every basis subset from per-basis noisy bin tables, and releases the
//!   top k reconstructed frequencies.
//! - [`tf`]: the truncated-frequency baseline, selecting out of all itemsets
//!   of bounded length with half the budget and releasing noisy frequencies
//!   with the other half.
//!
//! Supporting modules: [`dataset`] (transactions, FIMI I/O, synthetic
//! generation), [`miner`] (exact top-k mining, support counting, maximal
//! cliques), [`dp`] (Laplace and exponential mechanisms, seeded noise
//! streams, budget ledger), and [`eval`] (FNR/RE metrics and the seeded
//! experiment harness).
//!
//! Every randomized entry point draws from a [`NoiseSource`] seeded by the
//! caller; the same seed reproduces the same run bit for bit, and a
//! noise-off source turns both pipelines into exact oracles for testing.

pub mod dataset;
pub mod dp;
pub mod eval;
pub mod miner;
pub mod privbasis;
pub mod tf;

pub use dataset::{Item, Itemset, SyntheticSpec, TransactionDataset};
pub use dp::{BudgetLedger, NoiseSource};
pub use eval::{ExperimentPlan, RunResult};
pub use miner::{PairGraph, RankedItemset};
pub use privbasis::{BasisSet, PbOutcome, PrivBasisConfig, ReleasedItemset};
pub use tf::{TfConfig, TfOutcome};
