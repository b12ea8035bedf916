//! Metrics and seeded experiment orchestration.
//!
//! A plan file names datasets, k values, an epsilon grid, methods, and a
//! repetition count; the harness derives one seed per run, executes each
//! method, scores it against the exact miner's top k, and emits per-run CSV
//! rows plus per-cell mean and standard-error rows. Everything is
//! deterministic given the plan.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{DatasetError, Itemset, TransactionDataset};
use crate::dp::NoiseSource;
use crate::miner::{self, MinerError};
use crate::privbasis::{privbasis_main, PrivBasisConfig, ReleasedItemset};
use crate::tf::{tf_select_and_release, TfConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("plan: {0}")]
    Plan(String),
    #[error("dataset {id}: {err}")]
    Dataset { id: String, err: DatasetError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("plan parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("record file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Fraction of the reference top-k absent from the published list. The
/// denominator is the reference size, so a short published list counts its
/// missing slots as false negatives.
pub fn fnr(published: &[Itemset], actual_top_k: &[Itemset]) -> f64 {
    debug_assert!(!actual_top_k.is_empty());
    let have: HashSet<&Itemset> = published.iter().collect();
    let missing = actual_top_k.iter().filter(|x| !have.contains(x)).count();
    missing as f64 / actual_top_k.len() as f64
}

/// Median over the published itemsets of `|noisy_frequency - f| / f`, taking
/// f from the dataset. Itemsets with zero true support cannot be scored that
/// way; they are excluded from the median and returned as a separate count.
pub fn relative_error(
    published: &[ReleasedItemset],
    d: &TransactionDataset,
) -> (Option<f64>, usize) {
    let sets: Vec<Itemset> = published.iter().map(|r| r.itemset.clone()).collect();
    let supports = miner::support_counts(d, &sets);
    let n = d.n_transactions() as f64;
    let mut ratios = Vec::with_capacity(published.len());
    let mut zero_support = 0usize;
    for (rec, s) in published.iter().zip(supports) {
        if s == 0 {
            zero_support += 1;
        } else {
            let f = s as f64 / n;
            ratios.push((rec.noisy_frequency - f).abs() / f);
        }
    }
    (median(&mut ratios), zero_support)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub id: String,
    pub path: PathBuf,
}

/// One method column of the experiment grid. `k` and `eps` inside the
/// embedded configs are ignored; the grid supplies them per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    Pb {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        noise_off: bool,
        #[serde(default)]
        config: PrivBasisConfig,
    },
    Tf {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        noise_off: bool,
        #[serde(default)]
        config: TfConfig,
        /// Run m in {1, 2, 3} and keep the best-scoring run, recording which
        /// m won.
        #[serde(default)]
        best_m: bool,
    },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Pb { label, .. } => label.clone().unwrap_or_else(|| "pb".into()),
            MethodSpec::Tf { label, best_m, config, .. } => label.clone().unwrap_or_else(|| {
                if *best_m {
                    "tf-best".into()
                } else {
                    format!("tf-m{}", config.m)
                }
            }),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub base_seed: u64,
    pub repetitions: usize,
    pub ks: Vec<usize>,
    pub eps: Vec<f64>,
    pub datasets: Vec<DatasetRef>,
    pub methods: Vec<MethodSpec>,
    /// Off gives byte-identical CSV across identical runs of the same plan.
    #[serde(default = "default_true")]
    pub emit_wall_time: bool,
    /// When set, every run's released records are written here as JSON, so
    /// all metrics can be recomputed from raw outputs.
    #[serde(default)]
    pub raw_output_dir: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self, EvalError> {
        let plan: ExperimentPlan = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |msg: String| Err(EvalError::Plan(msg));
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return fail("ks must be non-empty positive values".into());
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return fail("eps grid must be non-empty positive values".into());
        }
        if self.datasets.is_empty() {
            return fail("at least one dataset is required".into());
        }
        if self.methods.is_empty() {
            return fail("at least one method is required".into());
        }
        let mut ids = HashSet::new();
        for ds in &self.datasets {
            if !ids.insert(&ds.id) {
                return fail(format!("duplicate dataset id {:?}", ds.id));
            }
        }
        let mut labels = HashSet::new();
        for m in &self.methods {
            if !labels.insert(m.label()) {
                return fail(format!("duplicate method label {:?}", m.label()));
            }
        }
        Ok(())
    }
}

/// One CSV row: either a run (rep = "1", "2", ...) or a per-cell aggregate
/// (rep = "mean"). Diagnostics that do not apply to the row's method stay
/// empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub k: usize,
    pub eps: f64,
    pub method: String,
    pub rep: String,
    pub seed: Option<u64>,
    pub fnr: Option<f64>,
    pub re: Option<f64>,
    pub wall_ms: Option<f64>,
    pub fnr_se: Option<f64>,
    pub re_se: Option<f64>,
    pub zero_support: Option<usize>,
    pub lambda: Option<usize>,
    pub lambda2: Option<usize>,
    pub basis_width: Option<usize>,
    pub basis_max_len: Option<usize>,
    pub m: Option<usize>,
    pub gamma: Option<f64>,
    pub error: Option<String>,
}

impl RunResult {
    fn blank(dataset: &str, k: usize, eps: f64, method: &str, rep: String) -> Self {
        RunResult {
            dataset: dataset.into(),
            k,
            eps,
            method: method.into(),
            rep,
            seed: None,
            fnr: None,
            re: None,
            wall_ms: None,
            fnr_se: None,
            re_se: None,
            zero_support: None,
            lambda: None,
            lambda2: None,
            basis_width: None,
            basis_max_len: None,
            m: None,
            gamma: None,
            error: None,
        }
    }
}

/// Run seed for one cell repetition: a hash of the base seed and the cell
/// coordinates, so repetitions are distinct and runs are independent of
/// grid iteration order.
pub fn derive_run_seed(
    base_seed: u64,
    dataset: &str,
    k: usize,
    eps: f64,
    method: &str,
    rep: usize,
) -> u64 {
    let mut h = Sha256::new();
    h.update(b"dpfim.run.seed");
    h.update(base_seed.to_le_bytes());
    h.update((dataset.len() as u64).to_le_bytes());
    h.update(dataset.as_bytes());
    h.update((k as u64).to_le_bytes());
    h.update(eps.to_bits().to_le_bytes());
    h.update((method.len() as u64).to_le_bytes());
    h.update(method.as_bytes());
    h.update((rep as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("sha256 yields 32 bytes"))
}

struct RunRecords {
    released: Vec<ReleasedItemset>,
    lambda: Option<usize>,
    lambda2: Option<usize>,
    basis_width: Option<usize>,
    basis_max_len: Option<usize>,
    m: Option<usize>,
    gamma: Option<f64>,
}

fn execute_method(
    spec: &MethodSpec,
    d: &TransactionDataset,
    k: usize,
    eps: f64,
    seed: u64,
    actual: &[Itemset],
) -> Result<RunRecords, String> {
    match spec {
        MethodSpec::Pb { noise_off, config, .. } => {
            let mut cfg = config.clone();
            cfg.k = k;
            cfg.eps = eps;
            let src = NoiseSource::with_mode(seed, *noise_off);
            let out = privbasis_main(d, &cfg, &src).map_err(|e| e.to_string())?;
            Ok(RunRecords {
                released: out.released,
                lambda: Some(out.diagnostics.lambda),
                lambda2: out.diagnostics.lambda2_used,
                basis_width: Some(out.diagnostics.basis_width),
                basis_max_len: Some(out.diagnostics.basis_max_len),
                m: None,
                gamma: None,
            })
        }
        MethodSpec::Tf { noise_off, config, best_m, .. } => {
            let ms: Vec<usize> = if *best_m { vec![1, 2, 3] } else { vec![config.m] };
            let mut best: Option<(f64, RunRecords)> = None;
            for m in ms {
                let mut cfg = config.clone();
                cfg.k = k;
                cfg.eps = eps;
                cfg.m = m;
                let src = NoiseSource::with_mode(seed, *noise_off).derive(&format!("m{m}"));
                let out = tf_select_and_release(d, &cfg, &src).map_err(|e| e.to_string())?;
                let published: Vec<Itemset> =
                    out.released.iter().map(|r| r.itemset.clone()).collect();
                let score = fnr(&published, actual);
                let records = RunRecords {
                    released: out.released,
                    lambda: None,
                    lambda2: None,
                    basis_width: None,
                    basis_max_len: None,
                    m: Some(m),
                    gamma: Some(out.diagnostics.gamma),
                };
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, records));
                }
            }
            Ok(best.expect("at least one m").1)
        }
    }
}

/// Executes the full grid. Method failures become rows with the error
/// column set; dataset load failures abort. The exact top k per
/// (dataset, k) is computed once and shared read-only across methods.
pub fn run_experiments(plan: &ExperimentPlan) -> Result<Vec<RunResult>, EvalError> {
    plan.validate()?;
    if let Some(dir) = &plan.raw_output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut results = Vec::new();
    for ds in &plan.datasets {
        let d = TransactionDataset::load_fimi(&ds.path)
            .map_err(|err| EvalError::Dataset { id: ds.id.clone(), err })?;
        for &k in &plan.ks {
            let actual: Vec<Itemset> = miner::exact_top_k(&d, k)?
                .into_iter()
                .map(|r| r.itemset)
                .collect();
            for &eps in &plan.eps {
                for spec in &plan.methods {
                    let label = spec.label();
                    let mut cell: Vec<RunResult> = Vec::with_capacity(plan.repetitions);
                    for rep in 1..=plan.repetitions {
                        let seed = derive_run_seed(plan.base_seed, &ds.id, k, eps, &label, rep);
                        let mut row =
                            RunResult::blank(&ds.id, k, eps, &label, rep.to_string());
                        row.seed = Some(seed);
                        let start = Instant::now();
                        match execute_method(spec, &d, k, eps, seed, &actual) {
                            Ok(records) => {
                                let published: Vec<Itemset> = records
                                    .released
                                    .iter()
                                    .map(|r| r.itemset.clone())
                                    .collect();
                                let (re, zero) = relative_error(&records.released, &d);
                                row.fnr = Some(fnr(&published, &actual));
                                row.re = re;
                                row.zero_support = Some(zero);
                                row.lambda = records.lambda;
                                row.lambda2 = records.lambda2;
                                row.basis_width = records.basis_width;
                                row.basis_max_len = records.basis_max_len;
                                row.m = records.m;
                                row.gamma = records.gamma;
                                if let Some(dir) = &plan.raw_output_dir {
                                    let name = format!(
                                        "{}_{}_k{}_eps{}_rep{}.json",
                                        ds.id, label, k, eps, rep
                                    );
                                    write_records(&dir.join(name), &records.released)?;
                                }
                            }
                            Err(msg) => row.error = Some(msg),
                        }
                        if plan.emit_wall_time {
                            row.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
                        }
                        cell.push(row);
                    }
                    let aggregate = aggregate_cell(&cell, &ds.id, k, eps, &label);
                    results.extend(cell);
                    results.push(aggregate);
                }
            }
        }
    }
    Ok(results)
}

fn mean_and_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

fn aggregate_cell(cell: &[RunResult], dataset: &str, k: usize, eps: f64, label: &str) -> RunResult {
    let mut row = RunResult::blank(dataset, k, eps, label, "mean".into());
    let fnrs: Vec<f64> = cell.iter().filter_map(|r| r.fnr).collect();
    let res: Vec<f64> = cell.iter().filter_map(|r| r.re).collect();
    let walls: Vec<f64> = cell.iter().filter_map(|r| r.wall_ms).collect();
    let (fnr_mean, fnr_se) = mean_and_se(&fnrs);
    let (re_mean, re_se) = mean_and_se(&res);
    row.fnr = fnr_mean;
    row.fnr_se = fnr_se;
    row.re = re_mean;
    row.re_se = re_se;
    row.wall_ms = mean_and_se(&walls).0;
    row
}

/// Serializes result rows as CSV with a fixed header; Nones become empty
/// fields.
pub fn write_csv<W: Write>(results: &[RunResult], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for row in results {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(results: &[RunResult]) -> Result<String, EvalError> {
    let mut buf = Vec::new();
    write_csv(results, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Writes one run's released records as a JSON array of
/// `{"itemset": [...], "noisy_frequency": ...}`.
pub fn write_records(path: &Path, records: &[ReleasedItemset]) -> Result<(), EvalError> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), records)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ReleasedItemset>, EvalError> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Item;

    fn set(items: &[Item]) -> Itemset {
        Itemset::new(items.iter().copied())
    }

    fn rec(items: &[Item], nf: f64) -> ReleasedItemset {
        ReleasedItemset { itemset: set(items), noisy_frequency: nf }
    }

    #[test]
    fn fnr_counts_missing_and_short_lists() {
        let actual = vec![set(&[1]), set(&[2]), set(&[3]), set(&[4])];
        assert_eq!(fnr(&actual.clone(), &actual), 0.0);
        assert_eq!(fnr(&[set(&[9])], &actual), 1.0);
        assert_eq!(fnr(&[set(&[1]), set(&[9])], &actual), 0.75);
        // Short published list: the two absent slots are false negatives.
        assert_eq!(fnr(&[set(&[1]), set(&[2])], &actual), 0.5);
    }

    #[test]
    fn relative_error_median_and_zero_support() {
        let d = TransactionDataset::new(vec![set(&[1, 2]), set(&[1])]).unwrap();
        // f({1}) = 1.0, f({2}) = 0.5, f({1,2}) = 0.5, {9} unseen.
        let published = vec![
            rec(&[1], 1.0),
            rec(&[2], 0.6),
            rec(&[1, 2], 0.5),
            rec(&[9], 0.3),
        ];
        let (re, zero) = relative_error(&published, &d);
        // Ratios: 0, 0.2, 0 -> median 0; {9} excluded.
        assert_eq!(re, Some(0.0));
        assert_eq!(zero, 1);

        let (re, _) = relative_error(&[rec(&[2], 0.6)], &d);
        assert!((re.unwrap() - 0.2).abs() < 1e-12);

        let (re, zero) = relative_error(&[rec(&[9], 0.3)], &d);
        assert_eq!(re, None);
        assert_eq!(zero, 1);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0]), Some(3.0));
        assert_eq!(median(&mut [3.0, 1.0]), Some(2.0));
        assert_eq!(median(&mut [5.0, 1.0, 3.0]), Some(3.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    const PLAN: &str = r#"
        base_seed = 7
        repetitions = 2
        ks = [3]
        eps = [1.0]
        emit_wall_time = false

        [[datasets]]
        id = "toy"
        path = "PLACEHOLDER"

        [[methods]]
        kind = "pb"
        noise_off = true

        [[methods]]
        kind = "tf"
        [methods.config]
        m = 2
        rho = 0.1
    "#;

    fn toy_plan(path: &Path) -> ExperimentPlan {
        let text = PLAN.replace("PLACEHOLDER", path.to_str().unwrap());
        ExperimentPlan::from_toml_str(&text).unwrap()
    }

    fn toy_dataset_file(dir: &Path) -> PathBuf {
        let rows = vec![
            set(&[1, 2, 3]),
            set(&[1, 2, 3]),
            set(&[1, 2]),
            set(&[1, 4]),
            set(&[2, 3]),
            set(&[1]),
        ];
        let d = TransactionDataset::new(rows).unwrap();
        let path = dir.join("toy.dat");
        d.save_fimi(&path).unwrap();
        path
    }

    #[test]
    fn plan_parses_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let plan = toy_plan(&toy_dataset_file(dir.path()));
        assert_eq!(plan.repetitions, 2);
        assert_eq!(plan.methods.len(), 2);
        assert_eq!(plan.methods[1].label(), "tf-m2");
        assert!(plan.emit_wall_time == false);

        let mut bad = plan.clone();
        bad.repetitions = 0;
        assert!(bad.validate().is_err());
        let mut bad = plan.clone();
        bad.datasets.push(bad.datasets[0].clone());
        assert!(bad.validate().is_err());
        let mut bad = plan;
        bad.methods.push(bad.methods[1].clone());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn run_seeds_are_distinct_and_stable() {
        let a = derive_run_seed(7, "toy", 3, 1.0, "pb", 1);
        assert_eq!(a, derive_run_seed(7, "toy", 3, 1.0, "pb", 1));
        assert_ne!(a, derive_run_seed(7, "toy", 3, 1.0, "pb", 2));
        assert_ne!(a, derive_run_seed(7, "toy", 3, 0.5, "pb", 1));
        assert_ne!(a, derive_run_seed(7, "toy", 3, 1.0, "tf-m2", 1));
        assert_ne!(a, derive_run_seed(8, "toy", 3, 1.0, "pb", 1));
    }

    #[test]
    fn records_roundtrip_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let records = vec![rec(&[1, 2], 0.25), rec(&[3], 0.5)];
        write_records(&path, &records).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);
    }

    #[test]
    fn experiment_grid_emits_runs_and_aggregates_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let plan = toy_plan(&toy_dataset_file(dir.path()));
        let results = run_experiments(&plan).unwrap();
        // 2 methods x (2 runs + 1 mean row).
        assert_eq!(results.len(), 6);
        let reps: Vec<&str> = results.iter().map(|r| r.rep.as_str()).collect();
        assert_eq!(reps, ["1", "2", "mean", "1", "2", "mean"]);
        assert!(results[0].seed.is_some());
        assert!(results[2].seed.is_none());
        assert!(results.iter().all(|r| r.error.is_none()));
        assert!(results.iter().all(|r| r.wall_ms.is_none()));
        // PB rows carry basis diagnostics, TF rows carry m and gamma.
        assert!(results[0].lambda.is_some());
        assert!(results[0].m.is_none());
        assert!(results[3].m == Some(2));
        assert!(results[3].gamma.is_some());

        let again = run_experiments(&plan).unwrap();
        assert_eq!(csv_string(&results).unwrap(), csv_string(&again).unwrap());
    }

    #[test]
    fn csv_header_is_stable() {
        let row = RunResult::blank("d", 1, 1.0, "pb", "1".into());
        let text = csv_string(&[row]).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "dataset,k,eps,method,rep,seed,fnr,re,wall_ms,fnr_se,re_se,zero_support,\
             lambda,lambda2,basis_width,basis_max_len,m,gamma,error"
        );
    }

    #[test]
    fn failed_runs_become_error_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = toy_dataset_file(dir.path());
        let mut plan = toy_plan(&path);
        // Explicit enumeration with an impossible guard must fail the run.
        plan.methods = vec![MethodSpec::Tf {
            label: None,
            noise_off: false,
            config: {
                let mut cfg = TfConfig::new(0, 0.0, 2, 0.1);
                cfg.universe_mode = crate::tf::UniverseMode::Explicit;
                cfg.universe_guard = 1;
                cfg
            },
            best_m: false,
        }];
        let results = run_experiments(&plan).unwrap();
        assert_eq!(results.len(), 3);
        assert!(results[0].error.as_deref().unwrap().contains("guard"));
        assert!(results[0].fnr.is_none());
        assert!(results[2].fnr.is_none());
    }
}
