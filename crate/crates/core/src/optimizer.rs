//! Budget-aware mechanism design.
//!
//! For a fixed `k` the design problem is linear in `(p̃_1, ..., p̃_n, P)`:
//! `P` must dominate `β · payoff(v)` for every vertex `v` of the adversary's
//! feasible region, and the selection constraints are linear in `p̃`. The
//! outer search walks candidate values of `k`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    enumerate_vertices, feasible_region, max_budget_factor, p_adv, p_det, payoff_weights,
    regime_thresholds, AdversaryStrategy, AttackContext,
};
use crate::error::{CashError, Result};
use crate::lp::{solve_lp, LinearProgram, Sense};
use crate::mechanism::{deterministic_k, exponential_distribution, fit_k, StoppingDistribution};
use crate::outcome_space::OutcomeSpace;

/// Cap on the number of `k` values tried per design.
pub const MAX_K_CANDIDATES: usize = 4096;

/// Variables `p̃_1..p̃_n` then `P_adv`. Rows, in order: range, normalization,
/// ratio (every ordered pair), one per vertex, cost.
pub fn build_design_lp(
    epsilon: f64,
    space: &OutcomeSpace,
    cost_ratio: f64,
    ctx: &AttackContext,
    vertices: &[AdversaryStrategy],
) -> LinearProgram {
    let n = space.rounds();
    let sizes: Vec<f64> = space.class_sizes().iter().map(|&o| o as f64).collect();
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = LinearProgram::minimize(objective);

    for i in 0..n {
        let mut row = vec![0.0; n + 1];
        row[i] = 1.0;
        lp.add(row, Sense::Le, 1.0);
    }

    let mut norm = sizes.clone();
    norm.push(0.0);
    lp.add(norm, Sense::Eq, 1.0);

    let ratio = epsilon.exp();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut row = vec![0.0; n + 1];
                row[i] = 1.0;
                row[j] = -ratio;
                lp.add(row, Sense::Le, 0.0);
            }
        }
    }

    let beta = ctx.beta();
    let weights = payoff_weights(space);
    for v in vertices {
        let mut row: Vec<f64> = (0..n)
            .map(|i| beta * sizes[i] * weights[i] * v.0[i])
            .collect();
        row.push(-1.0);
        lp.add(row, Sense::Le, 0.0);
    }

    let mut cost: Vec<f64> = (0..n).map(|i| (i + 1) as f64 * sizes[i]).collect();
    cost.push(0.0);
    lp.add(cost, Sense::Le, cost_ratio / ctx.k as f64);
    lp
}

/// The best design found for one `(ε, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalDesign {
    pub dist: StoppingDistribution,
    pub k: u64,
    pub k_det: u64,
    pub p_adv: f64,
    pub p_det: f64,
    pub gain: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub det_ratio: f64,
    /// Value of the LP's `P` variable, clamped to 1.
    pub lp_objective: f64,
}

/// Candidate values of `k` for a given cost ratio and budget.
pub fn k_candidates(space: &OutcomeSpace, cost_ratio: f64, budget: f64, pwd_space: f64) -> Vec<u64> {
    let hi = cost_ratio.floor();
    if hi < 1.0 {
        return Vec::new();
    }
    let hi = hi as u64;
    let lo = ((cost_ratio / space.rounds() as f64).floor() as u64).clamp(1, hi);
    let count = (hi - lo + 1) as usize;
    if count <= MAX_K_CANDIDATES {
        return (lo..=hi).collect();
    }
    let mut ks: Vec<u64> = Vec::with_capacity(MAX_K_CANDIDATES + 16);
    let (lo_f, hi_f) = (lo as f64, hi as f64);
    let steps = (MAX_K_CANDIDATES - 1) as f64;
    for i in 0..MAX_K_CANDIDATES {
        let k = (lo_f * (hi_f / lo_f).powf(i as f64 / steps)).round() as u64;
        ks.push(k.clamp(lo, hi));
    }
    // k at which β crosses a change in the vertex structure
    if budget > 0.0 {
        for t in regime_thresholds(space) {
            let k = budget / (t * pwd_space);
            for cand in [k.floor(), k.ceil()] {
                if cand >= lo_f && cand <= hi_f {
                    ks.push(cand as u64);
                }
            }
        }
    }
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Solves the design LP for one `k`; `None` when it is infeasible.
fn design_for_k(
    epsilon: f64,
    space: &OutcomeSpace,
    cost_ratio: f64,
    ctx: &AttackContext,
) -> Result<Option<(Vec<f64>, f64)>> {
    let beta = ctx.beta();
    let saturated = beta >= max_budget_factor(space);
    let vertices = if saturated || beta <= 0.0 {
        Vec::new()
    } else {
        enumerate_vertices(&feasible_region(space, beta))?
    };
    let lp = build_design_lp(epsilon, space, cost_ratio, ctx, &vertices);
    match solve_lp(&lp) {
        Ok(sol) => {
            let n = space.rounds();
            let value = if saturated || (beta > 0.0 && vertices.is_empty()) {
                1.0
            } else {
                sol.x[n]
            };
            Ok(Some((sol.x[..n].to_vec(), value)))
        }
        Err(CashError::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Cleans LP round-off: clamps to `[0, 1]` and renormalizes the mass.
fn tidy_probs(space: &OutcomeSpace, raw: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = raw.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let mass: f64 = clamped
        .iter()
        .zip(space.class_sizes())
        .map(|(p, &o)| p * o as f64)
        .sum();
    clamped.iter().map(|p| p / mass).collect()
}

/// Minimizes `P_adv,B` over `(p̃, k)` subject to the privacy and cost
/// constraints, with the budget `B` known in advance.
pub fn optimal_mechanism(
    epsilon: f64,
    space: &OutcomeSpace,
    cost_ratio: f64,
    budget: f64,
    pwd_space: f64,
) -> Result<OptimalDesign> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(CashError::InvalidParameter(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    if !(cost_ratio.is_finite() && cost_ratio > 0.0) {
        return Err(CashError::InvalidParameter("cost ratio must be positive".into()));
    }
    let k_det = deterministic_k(cost_ratio);
    let mut best: Option<(u64, Vec<f64>, f64)> = None;
    for k in k_candidates(space, cost_ratio, budget, pwd_space) {
        let ctx = AttackContext::new(budget, k, k_det, pwd_space)?;
        let Some((probs, value)) = design_for_k(epsilon, space, cost_ratio, &ctx)? else {
            continue;
        };
        let value = value.min(1.0);
        let better = match &best {
            None => true,
            Some((_, _, v)) => value < *v - 1e-12,
        };
        if better {
            best = Some((k, probs, value));
        }
    }
    let (k, raw, lp_value) = best.ok_or(CashError::NoFeasibleK)?;
    let dist = StoppingDistribution::new(space.clone(), tidy_probs(space, &raw))?.with_epsilon(epsilon);
    let ctx = AttackContext::new(budget, k, k_det, pwd_space)?;
    let p_adv = p_adv(&dist, &ctx);
    let p_det = p_det(&ctx);
    Ok(OptimalDesign {
        dist,
        k,
        k_det,
        p_adv,
        p_det,
        gain: p_det - p_adv,
        epsilon,
        beta: ctx.beta(),
        det_ratio: ctx.det_ratio(),
        lp_objective: lp_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Exponential,
    Optimal,
}

impl MechanismKind {
    pub fn label(&self) -> &'static str {
        match self {
            MechanismKind::Exponential => "exp",
            MechanismKind::Optimal => "opt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub det_ratio: f64,
    pub p_det: f64,
    pub p_adv: f64,
    pub gain: f64,
}

/// `points` budget ratios `B/(k'|P|)` evenly spaced on `(0, max_ratio]`.
pub fn budget_grid(points: usize, max_ratio: f64) -> Vec<f64> {
    (1..=points)
        .map(|i| i as f64 * max_ratio / points as f64)
        .collect()
}

/// Gain of the chosen mechanism at each budget ratio of `grid`.
pub fn gain_curve(
    kind: MechanismKind,
    epsilon: f64,
    space: &OutcomeSpace,
    cost_ratio: f64,
    pwd_space: f64,
    grid: &[f64],
) -> Result<Vec<CurveRow>> {
    let k_det = deterministic_k(cost_ratio);
    let budget_at = |ratio: f64| ratio * k_det as f64 * pwd_space;
    match kind {
        MechanismKind::Exponential => {
            let dist = exponential_distribution(epsilon, space)?;
            let k = fit_k(&dist, cost_ratio)?;
            grid.iter()
                .map(|&ratio| {
                    let ctx = AttackContext::new(budget_at(ratio), k, k_det, pwd_space)?;
                    let (pd, pa) = (p_det(&ctx), p_adv(&dist, &ctx));
                    Ok(CurveRow {
                        det_ratio: ratio,
                        p_det: pd,
                        p_adv: pa,
                        gain: pd - pa,
                    })
                })
                .collect()
        }
        MechanismKind::Optimal => grid
            .par_iter()
            .map(|&ratio| {
                let d = optimal_mechanism(epsilon, space, cost_ratio, budget_at(ratio), pwd_space)?;
                Ok(CurveRow {
                    det_ratio: ratio,
                    p_det: d.p_det,
                    p_adv: d.p_adv,
                    gain: d.gain,
                })
            })
            .collect(),
    }
}

/// Formats `v` with nine significant digits in positional notation.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new leading digit (9.999999999 -> 10.00000000)
    let significant = s
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if significant > 9 && decimals > 0 {
        return format!("{v:.prec$}", prec = decimals - 1);
    }
    s
}

pub const CURVE_HEADER: &str = "det_ratio,p_det,p_adv,gain";

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            format_sig9(r.det_ratio),
            format_sig9(r.p_det),
            format_sig9(r.p_adv),
            format_sig9(r.gain)
        )?;
    }
    Ok(())
}

/// First ε of a sorted sweep whose gain curve differs from the previous one
/// by less than `tol` at every budget point.
pub fn stationary_epsilon(curves: &[(f64, Vec<CurveRow>)], tol: f64) -> Option<f64> {
    curves.windows(2).find_map(|w| {
        let (_, prev) = &w[0];
        let (eps, cur) = &w[1];
        let stable = prev.len() == cur.len()
            && prev.iter().zip(cur).all(|(a, b)| (a.gain - b.gain).abs() < tol);
        stable.then_some(*eps)
    })
}
