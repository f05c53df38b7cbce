//! Optimal offline adversary against randomized halting.
//!
//! The adversary splits its budget across rounds: `b_m` is the fraction of
//! the budget spent on passwords hashed at least `m` times. Because a random
//! guess survives slot `m` with probability `(ℓ_m - 1)/ℓ_m`, feasible
//! allocations satisfy `b_{m+1} <= b_m (ℓ_m - 1)/ℓ_m`; there are only `|P|`
//! passwords, so `b_1 <= 1/β` with `β = B/(k|P|)`. The success probability
//! is `β` times a linear payoff in `b`, so it is maximized at a vertex of the
//! feasible polytope.

use serde::{Deserialize, Serialize};

use crate::error::{CashError, Result};
use crate::mechanism::StoppingDistribution;
use crate::outcome_space::OutcomeSpace;

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const DEDUP_TOL: f64 = 1e-9;
/// Largest `n` accepted by [`enumerate_vertices`].
pub const MAX_VERTEX_ROUNDS: usize = 8;

/// Budget and cost parameters of one attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackContext {
    /// Underlying-hash invocations available to the adversary.
    pub budget: f64,
    /// Hash iterations per round of the randomized scheme.
    pub k: u64,
    /// Hash iterations of the equal-cost deterministic scheme.
    pub k_det: u64,
    pub pwd_space: f64,
}

impl AttackContext {
    pub fn new(budget: f64, k: u64, k_det: u64, pwd_space: f64) -> Result<Self> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(CashError::InvalidParameter("budget must be finite and >= 0".into()));
        }
        if k == 0 || k_det == 0 {
            return Err(CashError::InvalidParameter("k and k' must be positive".into()));
        }
        if !(pwd_space.is_finite() && pwd_space > 0.0) {
            return Err(CashError::InvalidParameter("password space must be positive".into()));
        }
        Ok(Self {
            budget,
            k,
            k_det,
            pwd_space,
        })
    }

    /// `β = B / (k |P|)`.
    pub fn beta(&self) -> f64 {
        self.budget / (self.k as f64 * self.pwd_space)
    }

    /// `B / (k' |P|)`.
    pub fn det_ratio(&self) -> f64 {
        self.budget / (self.k_det as f64 * self.pwd_space)
    }
}

/// One linear inequality `coeffs · b <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

/// The feasible region `F_B`: the halfspaces plus `Σ b_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    rounds: usize,
    beta: f64,
    halfspaces: Vec<Halfspace>,
}

impl FeasibleRegion {
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    /// Upper bound on `b_1`.
    pub fn first_round_cap(&self) -> f64 {
        first_round_cap(self.beta)
    }

    pub fn contains(&self, b: &[f64], tol: f64) -> bool {
        b.len() == self.rounds
            && (b.iter().sum::<f64>() - 1.0).abs() <= tol
            && self.halfspaces.iter().all(|h| dot(&h.coeffs, b) <= h.bound + tol)
    }
}

fn first_round_cap(beta: f64) -> f64 {
    if beta <= 1.0 {
        1.0
    } else {
        1.0 / beta
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Constraint system of `F_B` for budget ratio `beta`.
pub fn feasible_region(space: &OutcomeSpace, beta: f64) -> FeasibleRegion {
    let n = space.rounds();
    let mut halfspaces = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut coeffs = vec![0.0; n];
        coeffs[i] = -1.0;
        halfspaces.push(Halfspace { coeffs, bound: 0.0 });
    }
    let mut cap = vec![0.0; n];
    cap[0] = 1.0;
    halfspaces.push(Halfspace {
        coeffs: cap,
        bound: first_round_cap(beta),
    });
    for (m, &l) in space.moduli().iter().enumerate() {
        let mut coeffs = vec![0.0; n];
        coeffs[m + 1] = 1.0;
        coeffs[m] = -((l - 1) as f64) / l as f64;
        halfspaces.push(Halfspace { coeffs, bound: 0.0 });
    }
    FeasibleRegion {
        rounds: n,
        beta,
        halfspaces,
    }
}

/// A budget allocation `(b_1, ..., b_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryStrategy(pub Vec<f64>);

impl AdversaryStrategy {
    /// Checks membership in `region`.
    pub fn new(region: &FeasibleRegion, b: Vec<f64>) -> Result<Self> {
        if region.contains(&b, FEASIBILITY_TOL) {
            Ok(Self(b))
        } else {
            Err(CashError::InfeasibleStrategy(format!("{b:?} at beta {}", region.beta())))
        }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.0
    }
}

/// Solves the square system `a x = rhs` by Gaussian elimination with
/// partial pivoting; `None` when singular.
pub(crate) fn solve_square(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (rhs[row] - s) / a[row][row];
    }
    Some(x)
}

/// Calls `visit` with every `size`-subset of `0..total` in lexicographic order.
pub(crate) fn for_each_combination(total: usize, size: usize, mut visit: impl FnMut(&[usize])) {
    if size > total {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        visit(&idx);
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + total - size {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All vertices of `region`.
pub fn enumerate_vertices(region: &FeasibleRegion) -> Result<Vec<AdversaryStrategy>> {
    let n = region.rounds();
    if n > MAX_VERTEX_ROUNDS {
        return Err(CashError::TooManyRounds {
            rounds: n,
            limit: MAX_VERTEX_ROUNDS,
        });
    }
    let hs = region.halfspaces();
    let mut vertices: Vec<AdversaryStrategy> = Vec::new();
    // the equality is always active, so n - 1 inequalities complete a basis
    for_each_combination(hs.len(), n - 1, |active| {
        let mut a: Vec<Vec<f64>> = active.iter().map(|&i| hs[i].coeffs.clone()).collect();
        let mut rhs: Vec<f64> = active.iter().map(|&i| hs[i].bound).collect();
        a.push(vec![1.0; n]);
        rhs.push(1.0);
        let Some(mut b) = solve_square(a, rhs) else {
            return;
        };
        if !region.contains(&b, FEASIBILITY_TOL) {
            return;
        }
        for v in b.iter_mut() {
            if v.abs() < 1e-15 {
                *v = 0.0;
            }
        }
        let duplicate = vertices.iter().any(|v| {
            v.0.iter()
                .zip(&b)
                .all(|(x, y)| (x - y).abs() <= DEDUP_TOL)
        });
        if !duplicate {
            vertices.push(AdversaryStrategy(b));
        }
    });
    Ok(vertices)
}

/// `w_i = Π_{j<i} ℓ_j/(ℓ_j - 1)`: the inverse survival fraction of round `i`.
pub fn payoff_weights(space: &OutcomeSpace) -> Vec<f64> {
    let mut weights = Vec::with_capacity(space.rounds());
    let mut w = 1.0;
    weights.push(w);
    for &l in space.moduli() {
        w *= l as f64 / (l - 1) as f64;
        weights.push(w);
    }
    weights
}

/// `Σ_i P̂_i b_i w_i`; multiply by `β` for the success probability.
pub fn strategy_payoff(b: &[f64], dist: &StoppingDistribution) -> f64 {
    payoff_weights(dist.space())
        .iter()
        .zip(dist.stop_probs())
        .zip(b)
        .map(|((w, p), b)| w * p * b)
        .sum()
}

/// `1 + Σ_{m<n} Π_{i<=m} (ℓ_i - 1)/ℓ_i`: the value of `β` at which every
/// password can be hashed to completion.
pub fn max_budget_factor(space: &OutcomeSpace) -> f64 {
    regime_thresholds(space).last().copied().unwrap_or(1.0)
}

/// Threshold on `B/k` above which the adversary always succeeds.
pub fn max_budget_bound(space: &OutcomeSpace, pwd_space: f64) -> f64 {
    max_budget_factor(space) * pwd_space
}

/// Values of `β` where the vertex structure of `F_B` changes: `1`, then the
/// partial sums of survival products (5/3 and 19/9 for three rounds of ℓ=3).
pub fn regime_thresholds(space: &OutcomeSpace) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut survive = 1.0;
    let mut total = 1.0;
    for &l in space.moduli() {
        survive *= (l - 1) as f64 / l as f64;
        total += survive;
        out.push(total);
    }
    out
}

/// Success probability of the optimal adversary at budget ratio `beta`.
pub fn p_adv_at_beta(dist: &StoppingDistribution, beta: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    if beta >= max_budget_factor(dist.space()) {
        return 1.0;
    }
    let region = feasible_region(dist.space(), beta);
    let vertices = enumerate_vertices(&region).unwrap_or_else(|_| {
        panic!("vertex enumeration is limited to {MAX_VERTEX_ROUNDS} rounds")
    });
    let best = vertices
        .iter()
        .map(|v| strategy_payoff(&v.0, dist))
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return 1.0;
    }
    (beta * best).clamp(0.0, 1.0)
}

/// `P_adv,B` for the randomized scheme.
pub fn p_adv(dist: &StoppingDistribution, ctx: &AttackContext) -> f64 {
    p_adv_at_beta(dist, ctx.beta())
}

/// `P_det,B` for the equal-cost deterministic scheme.
pub fn p_det(ctx: &AttackContext) -> f64 {
    ctx.det_ratio().min(1.0)
}

/// `G_B = P_det,B - P_adv,B`.
pub fn gain(dist: &StoppingDistribution, ctx: &AttackContext) -> f64 {
    p_det(ctx) - p_adv(dist, ctx)
}
