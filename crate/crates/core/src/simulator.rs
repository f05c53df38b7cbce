//! Monte Carlo validation of the adversary analysis.
//!
//! Passwords are the integers `0..N` rendered in decimal. Each trial creates
//! an account for a uniformly random password and then runs a concrete
//! attack: `S_1` is a random set of guesses hashed one round, and `S_{m+1}`
//! is drawn from the guesses of `S_m` whose slot-`m` predicate did not fire.
//! The attack succeeds when the true password reaches its own stopping round.
//!
//! Hashing all `N` passwords under a fresh salt per trial is too slow for
//! validation runs, so digest chains are precomputed for a pool of salts and
//! each account draws its salt from that pool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    enumerate_vertices, feasible_region, max_budget_bound, p_adv, AdversaryStrategy, AttackContext,
    FEASIBILITY_TOL,
};
use crate::error::{CashError, Result};
use crate::kdf::{digest_chain_with, Sha256Hash};
use crate::mechanism::{exponential_distribution, sample_outcome_from_residues, StoppingDistribution};
use crate::outcome_space::{reduce_digest, stopping_time_from_residues, Outcome, OutcomeSpace};

pub const DEFAULT_PWD_SPACE: usize = 10_000;
pub const DEFAULT_K: u64 = 4;
pub const DEFAULT_SALT_POOL: usize = 32;
pub const DEFAULT_TRIALS: usize = 10_000;

/// Child generator for `(seed, trial, lane)`; identical in serial and
/// parallel runs.
pub fn child_rng(seed: u64, trial: u64, lane: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    key[16..24].copy_from_slice(&lane.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub pwd_space_size: usize,
    pub k: u64,
    pub dist: StoppingDistribution,
    /// Adversary budget in underlying-hash invocations.
    pub budget: f64,
    pub trials: usize,
    pub rng_seed: u64,
    pub salt_pool: usize,
}

impl SimConfig {
    pub fn new(dist: StoppingDistribution, budget: f64) -> Self {
        Self {
            pwd_space_size: DEFAULT_PWD_SPACE,
            k: DEFAULT_K,
            dist,
            budget,
            trials: DEFAULT_TRIALS,
            rng_seed: 0,
            salt_pool: DEFAULT_SALT_POOL,
        }
    }

    /// Budget chosen so that `B/(k N) = beta`.
    pub fn with_beta(dist: StoppingDistribution, beta: f64) -> Self {
        let mut cfg = Self::new(dist, 0.0);
        cfg.budget = beta * cfg.k as f64 * cfg.pwd_space_size as f64;
        cfg
    }

    pub fn space(&self) -> &OutcomeSpace {
        self.dist.space()
    }

    pub fn beta(&self) -> f64 {
        self.budget / (self.k as f64 * self.pwd_space_size as f64)
    }

    /// Rounds of hashing the budget pays for, `B/k`.
    pub fn round_budget(&self) -> f64 {
        self.budget / self.k as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CashError::InvalidParameter("trials must be at least 1".into()));
        }
        if self.pwd_space_size == 0 || self.k == 0 || self.salt_pool == 0 {
            return Err(CashError::InvalidParameter(
                "password space, k and salt pool must be positive".into(),
            ));
        }
        if self.pwd_space_size > u32::MAX as usize {
            return Err(CashError::InvalidParameter("password space too large".into()));
        }
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return Err(CashError::InvalidParameter("budget must be finite and >= 0".into()));
        }
        let bound = max_budget_bound(self.space(), self.pwd_space_size as f64);
        if self.round_budget() > bound * (1.0 + 1e-12) {
            return Err(CashError::InvalidParameter(format!(
                "B/k = {} exceeds the max-budget bound {bound}",
                self.round_budget()
            )));
        }
        Ok(())
    }

    pub fn attack_context(&self) -> AttackContext {
        AttackContext {
            budget: self.budget,
            k: self.k,
            k_det: self.k,
            pwd_space: self.pwd_space_size as f64,
        }
    }
}

/// Firing residues of every password under every pooled salt.
#[derive(Debug, Clone)]
pub struct PasswordTable {
    space: OutcomeSpace,
    k: u64,
    pwd_space: usize,
    salts: Vec<Vec<u8>>,
    /// `[salt][slot][password]`
    residues: Vec<u32>,
}

impl PasswordTable {
    pub fn build(space: &OutcomeSpace, k: u64, pwd_space: usize, salt_pool: usize, seed: u64) -> Self {
        let mut salt_rng = child_rng(seed, u64::MAX, u64::MAX);
        let salts: Vec<Vec<u8>> = (0..salt_pool)
            .map(|_| {
                let mut s = vec![0u8; 16];
                salt_rng.fill(&mut s[..]);
                s
            })
            .collect();
        let slots = space.slots();
        let per_salt: Vec<Vec<u32>> = salts
            .par_iter()
            .map(|salt| {
                let mut rows = vec![0u32; slots * pwd_space];
                for pwd in 0..pwd_space {
                    let chain = digest_chain_with(&Sha256Hash, pwd.to_string().as_bytes(), salt, k, slots);
                    for (slot, (&l, d)) in space.moduli().iter().zip(chain.digests()).enumerate() {
                        rows[slot * pwd_space + pwd] = reduce_digest(d.as_bytes(), l) as u32;
                    }
                }
                rows
            })
            .collect();
        let residues = per_salt.concat();
        Self {
            space: space.clone(),
            k,
            pwd_space,
            salts,
            residues,
        }
    }

    pub fn for_config(cfg: &SimConfig) -> Self {
        Self::build(cfg.space(), cfg.k, cfg.pwd_space_size, cfg.salt_pool, cfg.rng_seed)
    }

    fn matches(&self, cfg: &SimConfig) -> bool {
        self.space == *cfg.space()
            && self.k == cfg.k
            && self.pwd_space == cfg.pwd_space_size
            && self.salts.len() == cfg.salt_pool
    }

    pub fn salts(&self) -> &[Vec<u8>] {
        &self.salts
    }

    /// Residues of every password at `slot` under pooled salt `salt`.
    fn slot_residues(&self, salt: usize, slot: usize) -> &[u32] {
        let start = (salt * self.space.slots() + slot) * self.pwd_space;
        &self.residues[start..start + self.pwd_space]
    }

    /// Firing residues of `pwd` under pooled salt `salt`.
    pub fn firing(&self, salt: usize, pwd: usize) -> Vec<u64> {
        (0..self.space.slots())
            .map(|s| self.slot_residues(salt, s)[pwd] as u64)
            .collect()
    }

    /// Creates an account for a uniformly random password.
    pub fn create_account<R: Rng + ?Sized>(&self, dist: &StoppingDistribution, rng: &mut R) -> UserAccount {
        let salt = rng.gen_range(0..self.salts.len());
        let password = rng.gen_range(0..self.pwd_space);
        let firing = self.firing(salt, password);
        let outcome = sample_outcome_from_residues(dist, &firing, rng);
        let stop = stopping_time_from_residues(&outcome, &firing);
        UserAccount {
            password,
            salt,
            outcome,
            stop,
        }
    }
}

/// The secret side of one simulated account.
#[derive(Debug, Clone, PartialEq)]
pub struct UserAccount {
    pub password: usize,
    /// Index into the salt pool.
    pub salt: usize,
    pub outcome: Outcome,
    pub stop: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub success: bool,
    /// `|S_m|` for each round.
    pub set_sizes: Vec<usize>,
    /// `|S_m ∩ T_m|` for each predicate slot.
    pub fired: Vec<usize>,
}

#[derive(Default)]
struct Scratch {
    candidates: Vec<u32>,
    survivors: Vec<u32>,
}

fn run_attack<R: Rng + ?Sized>(
    table: &PasswordTable,
    round_budget: f64,
    b: &[f64],
    user: &UserAccount,
    rng: &mut R,
    scratch: &mut Scratch,
) -> TrialOutcome {
    let n = table.space.rounds();
    let target = user.password as u32;
    let candidates = &mut scratch.candidates;
    let survivors = &mut scratch.survivors;
    candidates.clear();
    candidates.extend(0..table.pwd_space as u32);
    survivors.resize(table.pwd_space, 0);

    let mut success = false;
    let mut set_sizes = Vec::with_capacity(n);
    let mut fired = Vec::with_capacity(n - 1);
    for (m, &frac) in b.iter().enumerate() {
        let want = (frac * round_budget).round().max(0.0) as usize;
        let len = candidates.len();
        let size = want.min(len);
        if size <= len / 2 {
            // partial Fisher-Yates: the first `size` entries become S_m
            for i in 0..size {
                let j = rng.gen_range(i..len);
                candidates.swap(i, j);
            }
        } else if size < len {
            // shuffle the excluded tail instead; the head is then a uniform subset
            for i in (size..len).rev() {
                let j = rng.gen_range(0..=i);
                candidates.swap(i, j);
            }
        }
        let chosen = &candidates[..size];
        set_sizes.push(size);
        let holds_target = chosen.contains(&target);
        if holds_target && user.stop == m + 1 {
            success = true;
        }
        if m + 1 == n {
            break;
        }
        let fire = user.outcome.predicates()[m].residue() as u32;
        let row = table.slot_residues(user.salt, m);
        let mut kept = 0;
        for &pwd in chosen {
            survivors[kept] = pwd;
            kept += (row[pwd as usize] != fire) as usize;
        }
        fired.push(size - kept);
        survivors.truncate(kept);
        std::mem::swap(candidates, survivors);
        survivors.resize(table.pwd_space, 0);
    }
    TrialOutcome {
        success,
        set_sizes,
        fired,
    }
}

/// Runs allocation `b` once against `user`.
pub fn run_strategy<R: Rng + ?Sized>(
    table: &PasswordTable,
    config: &SimConfig,
    b: &AdversaryStrategy,
    user: &UserAccount,
    rng: &mut R,
) -> Result<TrialOutcome> {
    if !table.matches(config) {
        return Err(CashError::InvalidParameter("password table does not match the configuration".into()));
    }
    let region = feasible_region(config.space(), config.beta());
    if !region.contains(b.fractions(), FEASIBILITY_TOL) {
        return Err(CashError::InfeasibleStrategy(format!(
            "{:?} at beta {}",
            b.fractions(),
            config.beta()
        )));
    }
    Ok(run_attack(
        table,
        config.round_budget(),
        b.fractions(),
        user,
        rng,
        &mut Scratch::default(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSizes {
    pub mean_size: f64,
    /// Mean `|S_m ∩ T_m|`; absent for the last round.
    pub mean_fired: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexEstimate {
    pub strategy: Vec<f64>,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub set_sizes: Vec<RoundSizes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub empirical_p_adv: f64,
    pub std_error: f64,
    pub analytic_p_adv: f64,
    pub beta: f64,
    pub trials: usize,
    /// Index into `vertices` of the best empirical strategy.
    pub best_vertex: usize,
    pub vertices: Vec<VertexEstimate>,
}

impl SimResult {
    pub fn z_score(&self) -> f64 {
        let diff = self.analytic_p_adv - self.empirical_p_adv;
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn binomial_se(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Estimates `P_adv,B` by running every vertex strategy `trials` times.
pub fn estimate_p_adv(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let table = PasswordTable::for_config(config);
    estimate_p_adv_with(&table, config)
}

/// As [`estimate_p_adv`], reusing a prebuilt table.
pub fn estimate_p_adv_with(table: &PasswordTable, config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    if !table.matches(config) {
        return Err(CashError::InvalidParameter("password table does not match the configuration".into()));
    }
    let beta = config.beta();
    let vertices = if beta > 0.0 {
        enumerate_vertices(&feasible_region(config.space(), beta))?
    } else {
        vec![AdversaryStrategy({
            let mut b = vec![0.0; config.space().rounds()];
            b[0] = 1.0;
            b
        })]
    };
    let n = config.space().rounds();
    let round_budget = config.round_budget();
    let trials = config.trials;

    let mut estimates = Vec::with_capacity(vertices.len());
    for (vi, v) in vertices.iter().enumerate() {
        let (wins, size_sums, fired_sums) = (0..trials as u64)
            .into_par_iter()
            .map_init(Scratch::default, |scratch, t| {
                let mut account_rng = child_rng(config.rng_seed, t, 0);
                let user = table.create_account(&config.dist, &mut account_rng);
                let mut attack_rng = child_rng(config.rng_seed, t, vi as u64 + 1);
                let out = run_attack(table, round_budget, &v.0, &user, &mut attack_rng, scratch);
                (
                    out.success as u64,
                    out.set_sizes.iter().map(|&s| s as u64).collect::<Vec<_>>(),
                    out.fired.iter().map(|&s| s as u64).collect::<Vec<_>>(),
                )
            })
            .reduce(
                || (0, vec![0; n], vec![0; n - 1]),
                |mut a, b| {
                    a.0 += b.0;
                    a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
                    a.2.iter_mut().zip(&b.2).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let empirical = wins as f64 / trials as f64;
        let set_sizes = (0..n)
            .map(|m| RoundSizes {
                mean_size: size_sums[m] as f64 / trials as f64,
                mean_fired: fired_sums.get(m).map(|&f| f as f64 / trials as f64),
            })
            .collect();
        estimates.push(VertexEstimate {
            strategy: v.0.clone(),
            analytic: (beta * crate::adversary::strategy_payoff(&v.0, &config.dist)).min(1.0),
            empirical,
            std_error: binomial_se(empirical, trials),
            set_sizes,
        });
    }
    let best_vertex = estimates
        .iter()
        .enumerate()
        .fold(0, |best, (i, e)| if e.empirical > estimates[best].empirical { i } else { best });
    let best = &estimates[best_vertex];
    Ok(SimResult {
        empirical_p_adv: best.empirical,
        std_error: best.std_error,
        analytic_p_adv: p_adv(&config.dist, &config.attack_context()),
        beta,
        trials,
        best_vertex,
        vertices: estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRates {
    pub round: usize,
    pub modulus: u64,
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
    /// Binomial standard deviation of each frequency under `1/ℓ`.
    pub sigma: f64,
    pub max_abs_z: f64,
    pub within_3_sigma: bool,
}

/// Frequency with which each residue fires on round-`m` digests of random
/// passwords; each should be `1/ℓ_m`.
pub fn halt_rate_check(space: &OutcomeSpace, k: u64, samples: usize, seed: u64) -> Result<Vec<SlotRates>> {
    if samples == 0 || k == 0 {
        return Err(CashError::InvalidParameter("samples and k must be positive".into()));
    }
    let slots = space.slots();
    let residues: Vec<Vec<u64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i, 0);
            let pwd = rng.gen::<u64>().to_string();
            let mut salt = [0u8; 16];
            rng.fill(&mut salt);
            let chain = digest_chain_with(&Sha256Hash, pwd.as_bytes(), &salt, k, slots);
            chain.firing_residues(space)
        })
        .collect();
    let out = space
        .moduli()
        .iter()
        .enumerate()
        .map(|(slot, &l)| {
            let mut counts = vec![0u64; l as usize];
            for r in &residues {
                counts[r[slot] as usize] += 1;
            }
            let p = 1.0 / l as f64;
            let sigma = binomial_se(p, samples);
            let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / samples as f64).collect();
            let max_abs_z = frequencies
                .iter()
                .map(|f| ((f - p) / sigma).abs())
                .fold(0.0, f64::max);
            SlotRates {
                round: slot + 1,
                modulus: l,
                counts,
                frequencies,
                sigma,
                max_abs_z,
                within_3_sigma: max_abs_z <= 3.0,
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationCell {
    pub rounds: usize,
    pub epsilon: f64,
    pub beta: f64,
}

/// `n ∈ {2, 3}` × `ε ∈ {0, 0.5, 1.609}` × `β ∈ {0.5, 1.0, 1.4}`.
pub fn standard_matrix() -> Vec<ValidationCell> {
    let mut cells = Vec::new();
    for rounds in [2, 3] {
        for epsilon in [0.0, 0.5, 1.609] {
            for beta in [0.5, 1.0, 1.4] {
                cells.push(ValidationCell {
                    rounds,
                    epsilon,
                    beta,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub pwd_space: usize,
    pub k: u64,
    pub trials: usize,
    pub seed: u64,
    pub salt_pool: usize,
    /// Added to every analytic value; a non-zero value is a negative control.
    pub perturbation: f64,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            pwd_space: DEFAULT_PWD_SPACE,
            k: DEFAULT_K,
            trials: DEFAULT_TRIALS,
            seed: 0,
            salt_pool: DEFAULT_SALT_POOL,
            perturbation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: ValidationCell,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z: f64,
    pub pass: bool,
}

/// Compares analytic and empirical `P_adv` on every cell (exponential
/// mechanism, `ℓ_i = n`). A cell passes within three standard errors.
pub fn run_validation_matrix(cells: &[ValidationCell], cfg: &MatrixConfig) -> Result<Vec<CellReport>> {
    let mut tables: Vec<(usize, PasswordTable)> = Vec::new();
    let mut reports = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let space = OutcomeSpace::uniform(cell.rounds)?;
        let dist = exponential_distribution(cell.epsilon, &space)?;
        let config = SimConfig {
            pwd_space_size: cfg.pwd_space,
            k: cfg.k,
            budget: cell.beta * cfg.k as f64 * cfg.pwd_space as f64,
            dist,
            trials: cfg.trials,
            rng_seed: cfg.seed.wrapping_add(i as u64),
            salt_pool: cfg.salt_pool,
        };
        config.validate()?;
        if !tables.iter().any(|(r, _)| *r == cell.rounds) {
            let table = PasswordTable::build(&space, cfg.k, cfg.pwd_space, cfg.salt_pool, cfg.seed);
            tables.push((cell.rounds, table));
        }
        let table = &tables.iter().find(|(r, _)| *r == cell.rounds).expect("table built").1;
        let result = estimate_p_adv_with(table, &config)?;
        let analytic = result.analytic_p_adv + cfg.perturbation;
        let diff = analytic - result.empirical_p_adv;
        let z = if result.std_error > 0.0 {
            diff / result.std_error
        } else if diff.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        reports.push(CellReport {
            cell: *cell,
            analytic,
            empirical: result.empirical_p_adv,
            std_error: result.std_error,
            z,
            pass: z.abs() <= 3.0,
        });
    }
    Ok(reports)
}
