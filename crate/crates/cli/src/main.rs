//! Command-line front end: exact mining, the two private release pipelines,
//! synthetic data generation, and experiment grids.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dpfim::dataset::{SyntheticSpec, TransactionDataset};
use dpfim::eval::{self, ExperimentPlan};
use dpfim::privbasis::{privbasis_main, FreqElementsMode, PrivBasisConfig, ReleasedItemset};
use dpfim::tf::{tf_select_and_release, TfConfig, TfSelection, UniverseMode};
use dpfim::{Itemset, NoiseSource};

#[derive(Parser)]
#[command(
    name = "dpfim",
    version,
    about = "Differentially private top-k frequent itemset mining"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact (non-private) top-k mining
    MineExact {
        /// FIMI transaction file: one transaction of space-separated item
        /// ids per line
        fimi: PathBuf,
        #[arg(long)]
        k: usize,
        /// Only consider itemsets up to this length
        #[arg(long)]
        max_len: Option<usize>,
        /// Write JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Private top-k release through basis sets
    Privbasis {
        fimi: PathBuf,
        #[arg(long)]
        k: usize,
        /// Total privacy budget
        #[arg(long)]
        eps: f64,
        /// RNG seed; generated and printed if omitted
        #[arg(long)]
        seed: Option<u64>,
        /// TOML file tuning the budget split and basis construction
        #[arg(long)]
        config: Option<PathBuf>,
        /// Diagnostic mode: run the full pipeline with all noise zeroed
        #[arg(long)]
        noise_off: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated-frequency baseline release
    Tf {
        fimi: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        /// Maximum candidate itemset length
        #[arg(long)]
        m: usize,
        /// Error-probability bound in (0,1)
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// laplace | exponential
        #[arg(long, default_value = "exponential")]
        selection: String,
        /// explicit | truncated-pruning
        #[arg(long, default_value = "truncated-pruning")]
        universe_mode: String,
        /// Largest universe the explicit mode will materialize
        #[arg(long)]
        universe_guard: Option<u64>,
        #[arg(long)]
        noise_off: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic FIMI dataset with exactly planted itemsets
    GenSynthetic {
        /// Number of transactions
        #[arg(long)]
        n: usize,
        /// Items are 0..universe-size
        #[arg(long)]
        universe_size: u32,
        /// Planted itemset with target frequency, e.g. "1 2 3:0.4";
        /// repeatable
        #[arg(long = "plant")]
        plants: Vec<String>,
        /// Independent rate for items outside every plant
        #[arg(long, default_value_t = 0.0)]
        background_rate: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment grid from a TOML plan and emit CSV
    Experiment {
        plan: PathBuf,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().cmd {
        Cmd::MineExact { fimi, k, max_len, out } => mine_exact(&fimi, k, max_len, out),
        Cmd::Privbasis { fimi, k, eps, seed, config, noise_off, out } => {
            privbasis(&fimi, k, eps, seed, config, noise_off, out)
        }
        Cmd::Tf {
            fimi,
            k,
            eps,
            m,
            rho,
            seed,
            selection,
            universe_mode,
            universe_guard,
            noise_off,
            out,
        } => tf(
            &fimi,
            k,
            eps,
            m,
            rho,
            seed,
            &selection,
            &universe_mode,
            universe_guard,
            noise_off,
            out,
        ),
        Cmd::GenSynthetic { n, universe_size, plants, background_rate, seed, out } => {
            gen_synthetic(n, universe_size, &plants, background_rate, seed, &out)
        }
        Cmd::Experiment { plan, out } => experiment(&plan, out),
    }
}

fn load(fimi: &Path) -> Result<TransactionDataset> {
    TransactionDataset::load_fimi(fimi)
        .with_context(|| format!("loading {}", fimi.display()))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or_else(rand::random);
    eprintln!("seed: {seed}");
    seed
}

fn emit_json<T: Serialize>(value: &T, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            writeln!(lock)?;
        }
    }
    Ok(())
}

fn mine_exact(fimi: &Path, k: usize, max_len: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let d = load(fimi)?;
    let ranked = dpfim::miner::exact_top_k_bounded(&d, k, max_len)?;
    let n = d.n_transactions();
    #[derive(Serialize)]
    struct Row<'a> {
        itemset: &'a Itemset,
        support: u64,
        frequency: f64,
        rank: usize,
    }
    let rows: Vec<Row> = ranked
        .iter()
        .map(|r| Row {
            itemset: &r.itemset,
            support: r.support,
            frequency: r.frequency(n),
            rank: r.rank,
        })
        .collect();
    eprintln!("{} transactions, {} items, {} itemsets", n, d.universe().len(), rows.len());
    emit_json(&rows, out)
}

/// Pipeline tuning file: budget split, basis construction bounds, and an
/// optional default seed (overridden by --seed).
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PbFileConfig {
    seed: Option<u64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    alpha3: Option<f64>,
    eta: Option<f64>,
    single_basis_cap: Option<usize>,
    l_max: Option<usize>,
    freq_elements_mode: Option<FreqElementsMode>,
}

fn privbasis(
    fimi: &Path,
    k: usize,
    eps: f64,
    seed: Option<u64>,
    config: Option<PathBuf>,
    noise_off: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let d = load(fimi)?;
    let mut cfg = PrivBasisConfig::new(k, eps);
    let mut file_seed = None;
    if let Some(path) = config {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let file: PbFileConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        file_seed = file.seed;
        if let Some(v) = file.alpha1 {
            cfg.alpha1 = v;
        }
        if let Some(v) = file.alpha2 {
            cfg.alpha2 = v;
        }
        if let Some(v) = file.alpha3 {
            cfg.alpha3 = v;
        }
        if file.eta.is_some() {
            cfg.eta = file.eta;
        }
        if let Some(v) = file.single_basis_cap {
            cfg.single_basis_cap = v;
        }
        if let Some(v) = file.l_max {
            cfg.l_max = v;
        }
        if let Some(v) = file.freq_elements_mode {
            cfg.freq_elements_mode = v;
        }
    }
    let seed = resolve_seed(seed.or(file_seed));
    let src = NoiseSource::with_mode(seed, noise_off);
    let outcome = privbasis_main(&d, &cfg, &src)?;

    let diag = &outcome.diagnostics;
    eprintln!("lambda: {} (k1={}, theta={:.6})", diag.lambda, diag.k1, diag.theta);
    if let (Some(b1), Some(b2)) = (diag.beta1, diag.beta2) {
        eprintln!("item/pair budget split: beta1={b1:.6}, beta2={b2:.6}");
    }
    if let Some(l2) = diag.lambda2_used {
        eprintln!(
            "lambda2: {l2} used of {} requested ({} construction retries)",
            diag.lambda2_requested.unwrap_or(l2),
            diag.construction_retries
        );
    }
    eprintln!(
        "basis set: width {}, max length {}, lengths {:?}",
        diag.basis_width, diag.basis_max_len, diag.basis_lens
    );
    for (label, fraction) in outcome.ledger.entries() {
        eprintln!("budget: {label} = {fraction} * eps = {}", fraction * eps);
    }
    report_released(&outcome.released, k);
    emit_json(&outcome.released, out)
}

#[allow(clippy::too_many_arguments)]
fn tf(
    fimi: &Path,
    k: usize,
    eps: f64,
    m: usize,
    rho: f64,
    seed: Option<u64>,
    selection: &str,
    universe_mode: &str,
    universe_guard: Option<u64>,
    noise_off: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let d = load(fimi)?;
    let mut cfg = TfConfig::new(k, eps, m, rho);
    cfg.selection = match selection {
        "laplace" => TfSelection::Laplace,
        "exponential" => TfSelection::Exponential,
        other => bail!("unknown selection method {other:?} (laplace | exponential)"),
    };
    cfg.universe_mode = match universe_mode {
        "explicit" => UniverseMode::Explicit,
        "truncated-pruning" => UniverseMode::TruncatedPruning,
        other => bail!("unknown universe mode {other:?} (explicit | truncated-pruning)"),
    };
    if let Some(g) = universe_guard {
        cfg.universe_guard = g;
    }
    let seed = resolve_seed(seed);
    let src = NoiseSource::with_mode(seed, noise_off);
    let outcome = tf_select_and_release(&d, &cfg, &src)?;

    let diag = &outcome.diagnostics;
    eprintln!(
        "universe: {} itemsets of length <= {}, gamma = {:.6}, f_k = {:.6}",
        diag.universe_size, diag.m, diag.gamma, diag.f_k
    );
    if diag.pruning_disabled {
        eprintln!("gamma >= f_k: truncation prunes nothing on this dataset");
    }
    if let (Some(a), Some(r)) = (diag.above_threshold, &diag.residual_size) {
        eprintln!("enumerated {a} above-threshold itemsets, residual pool {r}");
    }
    for (label, fraction) in outcome.ledger.entries() {
        eprintln!("budget: {label} = {fraction} * eps = {}", fraction * eps);
    }
    report_released(&outcome.released, k);
    emit_json(&outcome.released, out)
}

fn report_released(released: &[ReleasedItemset], k: usize) {
    if released.len() < k {
        eprintln!("released {} itemsets (fewer than k = {k})", released.len());
    } else {
        eprintln!("released {} itemsets", released.len());
    }
}

fn parse_plant(text: &str) -> Result<(Itemset, f64)> {
    let (items, freq) = text
        .rsplit_once(':')
        .with_context(|| format!("plant {text:?} must look like \"1 2 3:0.4\""))?;
    let ids: Vec<u32> = items
        .split([' ', ','])
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().with_context(|| format!("bad item id {s:?} in plant")))
        .collect::<Result<_>>()?;
    if ids.is_empty() {
        bail!("plant {text:?} names no items");
    }
    let freq: f64 = freq.trim().parse().with_context(|| format!("bad frequency in {text:?}"))?;
    Ok((Itemset::new(ids), freq))
}

fn gen_synthetic(
    n: usize,
    universe_size: u32,
    plants: &[String],
    background_rate: f64,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let seed = resolve_seed(seed);
    let planted = plants.iter().map(|p| parse_plant(p)).collect::<Result<Vec<_>>>()?;
    let spec = SyntheticSpec { n, universe_size, planted, background_rate, seed };
    let d = dpfim::dataset::generate_synthetic(&spec)?;
    d.save_fimi(out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "wrote {} transactions over {} items to {}",
        d.n_transactions(),
        d.universe().len(),
        out.display()
    );
    Ok(())
}

fn experiment(plan_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut plan = ExperimentPlan::load(plan_path)
        .with_context(|| format!("loading plan {}", plan_path.display()))?;
    // Dataset paths in the plan are relative to the plan file.
    if let Some(dir) = plan_path.parent() {
        for ds in &mut plan.datasets {
            if ds.path.is_relative() {
                ds.path = dir.join(&ds.path);
            }
        }
        if let Some(raw) = &plan.raw_output_dir {
            if raw.is_relative() {
                plan.raw_output_dir = Some(dir.join(raw));
            }
        }
    }
    eprintln!(
        "{} datasets x {} ks x {} eps x {} methods x {} reps, base seed {}",
        plan.datasets.len(),
        plan.ks.len(),
        plan.eps.len(),
        plan.methods.len(),
        plan.repetitions,
        plan.base_seed
    );
    let results = eval::run_experiments(&plan)?;
    match out {
        Some(path) => {
            let file = std::fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            eval::write_csv(&results, std::io::BufWriter::new(file))?;
            eprintln!("wrote {} rows to {}", results.len(), path.display());
        }
        None => {
            eval::write_csv(&results, std::io::stdout().lock())?;
        }
    }
    Ok(())
}
