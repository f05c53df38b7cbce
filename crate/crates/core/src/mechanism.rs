//! Predicate-selection distributions.
//!
//! On a symmetric outcome space a selection rule is fully described by one
//! probability `p̃_j` per stopping-time class: every outcome whose stopping
//! time on the password's chain is `j` is emitted with probability `p̃_j`.
//! The aggregate probability of halting after round `j` is `P̂_j = O_j p̃_j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CashError, Result};
use crate::outcome_space::{stopping_time, DigestChain, Outcome, OutcomeSpace, Predicate};

/// Tolerance on `Σ O_j p̃_j = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Slack allowed on the privacy-ratio and cost checks.
pub const CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingDistribution {
    space: OutcomeSpace,
    class_probs: Vec<f64>,
    stop_probs: Vec<f64>,
    expected_rounds: f64,
    epsilon: Option<f64>,
}

impl StoppingDistribution {
    /// Wraps per-outcome class probabilities. Only shape and finiteness are
    /// checked here; use [`validate`] for the selection constraints.
    pub fn new(space: OutcomeSpace, class_probs: Vec<f64>) -> Result<Self> {
        if class_probs.len() != space.rounds() {
            return Err(CashError::LengthMismatch {
                expected: space.rounds(),
                actual: class_probs.len(),
            });
        }
        if class_probs.iter().any(|p| !p.is_finite()) {
            return Err(CashError::InvalidParameter("class probabilities must be finite".into()));
        }
        let stop_probs: Vec<f64> = class_probs
            .iter()
            .zip(space.class_sizes())
            .map(|(&p, &o)| p * o as f64)
            .collect();
        let expected_rounds = stop_probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (i + 1) as f64 * p)
            .sum();
        Ok(Self {
            space,
            class_probs,
            stop_probs,
            expected_rounds,
            epsilon: None,
        })
    }

    /// Distribution from aggregate stopping probabilities `P̂_j`.
    pub fn from_stop_probs(space: OutcomeSpace, stop_probs: &[f64]) -> Result<Self> {
        if stop_probs.len() != space.rounds() {
            return Err(CashError::LengthMismatch {
                expected: space.rounds(),
                actual: stop_probs.len(),
            });
        }
        let class_probs = stop_probs
            .iter()
            .zip(space.class_sizes())
            .map(|(&p, &o)| p / o as f64)
            .collect();
        Self::new(space, class_probs)
    }

    /// Tags the distribution with the security level it was built for.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    /// `(p̃_1, ..., p̃_n)`.
    pub fn class_probs(&self) -> &[f64] {
        &self.class_probs
    }

    /// `(P̂_1, ..., P̂_n)`.
    pub fn stop_probs(&self) -> &[f64] {
        &self.stop_probs
    }

    /// `Σ j P̂_j`.
    pub fn expected_rounds(&self) -> f64 {
        self.expected_rounds
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn rounds(&self) -> usize {
        self.space.rounds()
    }

    /// The tagged ε, or else the smallest ε this distribution satisfies.
    pub fn privacy_level(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| privacy_ratio(self).ln())
    }

    pub fn total_mass(&self) -> f64 {
        self.stop_probs.iter().sum()
    }
}

/// Exponential mechanism with utility `U(j) = (1 - j)/(n - 1)`.
pub fn exponential_distribution(epsilon: f64, space: &OutcomeSpace) -> Result<StoppingDistribution> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(CashError::InvalidParameter(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    let n = space.rounds();
    let weights: Vec<f64> = (1..=n)
        .map(|j| (epsilon * (1.0 - j as f64) / (n as f64 - 1.0)).exp())
        .collect();
    let total: f64 = weights
        .iter()
        .zip(space.class_sizes())
        .map(|(&w, &o)| w * o as f64)
        .sum();
    let class_probs = weights.iter().map(|w| w / total).collect();
    Ok(StoppingDistribution::new(space.clone(), class_probs)?.with_epsilon(epsilon))
}

/// Largest `k` with `k · E[rounds] <= cost_ratio`.
pub fn fit_k(dist: &StoppingDistribution, cost_ratio: f64) -> Result<u64> {
    let e = dist.expected_rounds();
    let too_small = || CashError::BudgetTooSmall {
        cost_ratio,
        expected_rounds: e,
    };
    if !(cost_ratio.is_finite() && e > 0.0) {
        return Err(too_small());
    }
    let mut k = (cost_ratio / e).floor();
    // absorb rounding when cost_ratio is an exact multiple of E
    if (k + 1.0) * e <= cost_ratio * (1.0 + 1e-12) {
        k += 1.0;
    }
    while k >= 1.0 && k * e > cost_ratio * (1.0 + 1e-12) {
        k -= 1.0;
    }
    if k < 1.0 {
        return Err(too_small());
    }
    Ok(k as u64)
}

/// Security and cost parameters of a deployed mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub epsilon: f64,
    /// `C_srv / C_H`.
    pub cost_ratio: f64,
    pub k: u64,
    /// Iterations of the equal-cost deterministic baseline.
    pub k_det: u64,
}

impl MechanismParams {
    pub fn fit(dist: &StoppingDistribution, epsilon: f64, cost_ratio: f64) -> Result<Self> {
        let k = fit_k(dist, cost_ratio)?;
        Ok(Self {
            epsilon,
            cost_ratio,
            k,
            k_det: deterministic_k(cost_ratio),
        })
    }
}

/// `k' = floor(C_srv / C_H)`, at least 1.
pub fn deterministic_k(cost_ratio: f64) -> u64 {
    (cost_ratio.floor() as u64).max(1)
}

/// `max_{i,j} p̃_i / p̃_j`.
pub fn privacy_ratio(dist: &StoppingDistribution) -> f64 {
    let probs = dist.class_probs();
    let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return f64::INFINITY;
    }
    if min <= 0.0 {
        return f64::INFINITY;
    }
    max / min
}

/// Information leaked by the stored outcome, in bits.
pub fn info_leak_bits(epsilon: f64) -> f64 {
    epsilon / std::f64::consts::LN_2
}

/// Pass/fail for each selection constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub normalization: bool,
    pub range: bool,
    pub privacy: bool,
    pub cost: bool,
    pub mass: f64,
    pub privacy_ratio: f64,
    pub expected_rounds: f64,
    /// `cost_ratio / k - E[rounds]`; negative when the budget is exceeded.
    pub cost_slack: f64,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.normalization && self.range && self.privacy && self.cost
    }
}

/// Checks `dist` against normalization, range, ε-ratio and cost.
pub fn validate(dist: &StoppingDistribution, epsilon: f64, cost_ratio: f64, k: u64) -> ConstraintReport {
    let mass = dist.total_mass();
    let ratio = privacy_ratio(dist);
    let budget = cost_ratio / k as f64;
    let expected = dist.expected_rounds();
    ConstraintReport {
        normalization: (mass - 1.0).abs() <= NORMALIZATION_TOL,
        range: dist
            .class_probs()
            .iter()
            .all(|&p| (-NORMALIZATION_TOL..=1.0 + NORMALIZATION_TOL).contains(&p)),
        privacy: ratio <= epsilon.exp() + CONSTRAINT_TOL,
        cost: expected <= budget + CONSTRAINT_TOL,
        mass,
        privacy_ratio: ratio,
        expected_rounds: expected,
        cost_slack: budget - expected,
    }
}

/// Draws a stopping time `j` with probability `P̂_j`.
pub fn sample_stopping_time<R: Rng + ?Sized>(dist: &StoppingDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * dist.total_mass();
    let mut acc = 0.0;
    for (i, &p) in dist.stop_probs().iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    // u landed on the rounding gap; pick the last class with mass
    dist.stop_probs()
        .iter()
        .rposition(|&p| p > 0.0)
        .map_or(dist.rounds(), |i| i + 1)
}

/// Uniform outcome from class `stop` given the firing residue of each slot.
pub fn outcome_in_class<R: Rng + ?Sized>(
    space: &OutcomeSpace,
    firing: &[u64],
    stop: usize,
    rng: &mut R,
) -> Outcome {
    let predicates = space
        .moduli()
        .iter()
        .zip(firing)
        .enumerate()
        .map(|(slot, (&l, &fire))| {
            let residue = match (slot + 1).cmp(&stop) {
                std::cmp::Ordering::Less => {
                    let r = rng.gen_range(0..l - 1);
                    if r >= fire {
                        r + 1
                    } else {
                        r
                    }
                }
                std::cmp::Ordering::Equal => fire,
                std::cmp::Ordering::Greater => rng.gen_range(0..l),
            };
            Predicate::new(residue, l).expect("residue below modulus")
        })
        .collect();
    Outcome::new(space, predicates).expect("moduli follow the space")
}

/// Samples an outcome for a password whose firing residues are `firing`.
pub fn sample_outcome_from_residues<R: Rng + ?Sized>(
    dist: &StoppingDistribution,
    firing: &[u64],
    rng: &mut R,
) -> Outcome {
    let stop = sample_stopping_time(dist, rng);
    outcome_in_class(dist.space(), firing, stop, rng)
}

/// Samples an outcome for the password whose digest chain is `chain`.
pub fn sample_outcome<R: Rng + ?Sized>(
    dist: &StoppingDistribution,
    chain: &DigestChain,
    rng: &mut R,
) -> Outcome {
    let firing = chain.firing_residues(dist.space());
    sample_outcome_from_residues(dist, &firing, rng)
}

/// Probability that selection on `chain` emits `outcome`.
pub fn selection_probability(dist: &StoppingDistribution, outcome: &Outcome, chain: &DigestChain) -> f64 {
    dist.class_probs()[stopping_time(outcome, chain) - 1]
}

/// Wire format used to hand a distribution from the optimizer to the KDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFile {
    pub moduli: Vec<u64>,
    pub class_probs: Vec<f64>,
    pub epsilon: f64,
    pub k: u64,
}

impl DistributionFile {
    pub fn new(dist: &StoppingDistribution, k: u64) -> Self {
        Self {
            moduli: dist.space().moduli().to_vec(),
            class_probs: dist.class_probs().to_vec(),
            epsilon: dist.privacy_level(),
            k,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut out = serde_json::to_string_pretty(self)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn distribution(&self) -> Result<StoppingDistribution> {
        let space = OutcomeSpace::new(self.moduli.clone())?;
        Ok(StoppingDistribution::new(space, self.class_probs.clone())?.with_epsilon(self.epsilon))
    }
}
