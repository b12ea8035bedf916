//! Differential privacy primitives: a seeded noise source with labeled
//! sub-streams, Laplace noise, exponential mechanism selection in the log
//! domain, repeated selection without replacement, and a budget ledger.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("noise scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("sensitivity must be positive and finite, got {0}")]
    BadSensitivity(f64),
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("quality score at index {0} is not finite")]
    NonFiniteQuality(usize),
    #[error("cannot select {requested} of {available} candidates without replacement")]
    NotEnoughCandidates { requested: usize, available: usize },
    #[error("budget ledger: {0}")]
    Budget(String),
}

/// Seeded randomness for one privacy mechanism invocation.
///
/// Pipelines give every step its own sub-stream via [`NoiseSource::derive`];
/// derivation depends only on the original seed and the label, never on how
/// many draws were already made, so steps cannot perturb each other.
pub struct NoiseSource {
    root: [u8; 32],
    rng: ChaCha12Rng,
    noise_off: bool,
}

impl NoiseSource {
    pub fn from_seed(seed: u64) -> Self {
        Self::with_mode(seed, false)
    }

    /// Noise-off diagnostic mode: Laplace draws are exactly zero and
    /// selection mechanisms return deterministic argmaxes (the infinite-
    /// epsilon limit). This mode provides no privacy; it exists so tests can
    /// compare pipeline output against exact mining.
    pub fn noiseless(seed: u64) -> Self {
        Self::with_mode(seed, true)
    }

    pub fn with_mode(seed: u64, noise_off: bool) -> Self {
        let mut h = Sha256::new();
        h.update(b"dpfim.noise.root");
        h.update(seed.to_le_bytes());
        let root: [u8; 32] = h.finalize().into();
        NoiseSource { root, rng: ChaCha12Rng::from_seed(root), noise_off }
    }

    /// Independent sub-stream for a named pipeline step.
    pub fn derive(&self, label: &str) -> NoiseSource {
        let mut h = Sha256::new();
        h.update(self.root);
        h.update(b"/");
        h.update(label.as_bytes());
        let root: [u8; 32] = h.finalize().into();
        NoiseSource { root, rng: ChaCha12Rng::from_seed(root), noise_off: self.noise_off }
    }

    pub fn is_noise_off(&self) -> bool {
        self.noise_off
    }

    /// Uniform draw from the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    fn gumbel(&mut self) -> f64 {
        -(-self.open01().ln()).ln()
    }
}

/// Zero-mean Laplace draw with the given scale (variance `2 * scale^2`).
/// Exactly zero when the source is in noise-off mode.
pub fn laplace(scale: f64, src: &mut NoiseSource) -> Result<f64, DpError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DpError::BadScale(scale));
    }
    if src.is_noise_off() {
        return Ok(0.0);
    }
    let v = src.open01() - 0.5;
    Ok(-scale * v.signum() * (-2.0 * v.abs()).ln_1p())
}

fn validate_mechanism_args(
    qualities: &[f64],
    eps: f64,
    sensitivity: f64,
) -> Result<(), DpError> {
    if qualities.is_empty() {
        return Err(DpError::NoCandidates);
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(DpError::BadEpsilon(eps));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(DpError::BadSensitivity(sensitivity));
    }
    for (i, q) in qualities.iter().enumerate() {
        if !q.is_finite() {
            return Err(DpError::NonFiniteQuality(i));
        }
    }
    Ok(())
}

/// Exponential mechanism: selects index `i` with probability proportional to
/// `exp(eps * q[i] / (c * sensitivity))`, where `c` is 2, or 1 when
/// `one_sided` is set (valid for quality functions that are monotone in the
/// presence of any one record, e.g. support counts).
///
/// Sampling happens entirely in the log domain: each exponent is perturbed
/// with independent Gumbel noise and the argmax is returned, which realizes
/// the softmax distribution without ever exponentiating, so exponents in the
/// thousands are handled exactly as written. In noise-off mode the argmax of
/// the raw qualities is returned, lowest index winning ties.
pub fn exp_mechanism(
    qualities: &[f64],
    eps: f64,
    sensitivity: f64,
    one_sided: bool,
    src: &mut NoiseSource,
) -> Result<usize, DpError> {
    validate_mechanism_args(qualities, eps, sensitivity)?;
    let denom = if one_sided { 1.0 } else { 2.0 } * sensitivity;
    let coeff = eps / denom;
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &q) in qualities.iter().enumerate() {
        let score = if src.is_noise_off() { q } else { coeff * q + src.gumbel() };
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

/// `count` rounds of [`exp_mechanism`], each over the not-yet-selected
/// candidates with a per-round budget of `eps / count`. Returns indices in
/// selection order. `count == 0` selects nothing and spends nothing.
pub fn sample_without_replacement(
    qualities: &[f64],
    count: usize,
    eps: f64,
    sensitivity: f64,
    one_sided: bool,
    src: &mut NoiseSource,
) -> Result<Vec<usize>, DpError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if count > qualities.len() {
        return Err(DpError::NotEnoughCandidates {
            requested: count,
            available: qualities.len(),
        });
    }
    validate_mechanism_args(qualities, eps, sensitivity)?;
    let eps_round = eps / count as f64;
    let mut alive: Vec<usize> = (0..qualities.len()).collect();
    let mut picked = Vec::with_capacity(count);
    let mut round_q = Vec::with_capacity(qualities.len());
    for _ in 0..count {
        round_q.clear();
        round_q.extend(alive.iter().map(|&i| qualities[i]));
        let local = exp_mechanism(&round_q, eps_round, sensitivity, one_sided, src)?;
        picked.push(alive.remove(local));
    }
    Ok(picked)
}

const FRACTION_TOLERANCE: f64 = 1e-9;

/// Append-only record of how a total epsilon is split across pipeline steps.
/// Spending is expressed as fractions of the total; the ledger rejects any
/// spend that would push the sum past 1, so composition cannot be exceeded
/// by construction.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetLedger {
    total_eps: f64,
    entries: Vec<(String, f64)>,
    sealed: bool,
}

impl BudgetLedger {
    pub fn new(total_eps: f64) -> Result<Self, DpError> {
        if !(total_eps > 0.0 && total_eps.is_finite()) {
            return Err(DpError::BadEpsilon(total_eps));
        }
        Ok(BudgetLedger { total_eps, entries: Vec::new(), sealed: false })
    }

    /// Records a named spend and returns the epsilon amount it grants
    /// (`fraction * total_eps`).
    pub fn spend(&mut self, label: &str, fraction: f64) -> Result<f64, DpError> {
        if self.sealed {
            return Err(DpError::Budget(format!(
                "ledger is sealed; cannot spend {fraction} on {label:?}"
            )));
        }
        if !(fraction > 0.0 && fraction.is_finite()) {
            return Err(DpError::Budget(format!(
                "spend fraction for {label:?} must be positive, got {fraction}"
            )));
        }
        let after = self.spent_fraction() + fraction;
        if after > 1.0 + FRACTION_TOLERANCE {
            return Err(DpError::Budget(format!(
                "spending {fraction} on {label:?} would overspend the budget \
                 (already spent {})",
                self.spent_fraction()
            )));
        }
        self.entries.push((label.to_string(), fraction));
        Ok(fraction * self.total_eps)
    }

    /// Freezes the ledger; any later spend is an error.
    pub fn seal(&mut self) {
        self.sealed = true;
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn spent_fraction(&self) -> f64 {
        self.entries.iter().map(|(_, f)| f).sum()
    }

    pub fn total_eps(&self) -> f64 {
        self.total_eps
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}
