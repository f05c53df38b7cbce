//! Dense two-phase simplex with Bland's rule.
//!
//! Small problems only: the design programs have a handful of variables
//! and a few dozen rows, so the full tableau is kept in memory.

use crate::error::{CashError, Result};

pub const MAX_PIVOTS: usize = 100_000;
const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
const PHASE_ONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min` (or `max`) of `objective · x` subject to row constraints and
/// per-variable bounds `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LinearProgram {
    /// Minimization over `vars` non-negative variables.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            maximize: false,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self {
            maximize: true,
            ..Self::minimize(objective)
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, sense, rhs });
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: Option<f64>) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |what: &str| Err(CashError::InvalidParameter(format!("linear program: {what}")));
        if self.lower.len() != n || self.upper.len() != n {
            return bad("bound vectors do not match the variable count");
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return bad("non-finite objective coefficient");
        }
        for c in &self.constraints {
            if c.coeffs.len() != n {
                return bad("constraint width does not match the variable count");
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return bad("non-finite constraint coefficient");
            }
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if l.is_nan() || *l == f64::INFINITY || u.is_some_and(|u| !u.is_finite()) {
                return bad("invalid variable bound");
            }
            if u.is_some_and(|u| u < *l) {
                return Err(CashError::Infeasible);
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let r = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(r);
        }
        for ((v, l), u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - v);
            if let Some(u) = u {
                worst = worst.max(v - u);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// How an original variable maps onto non-negative tableau columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// `x = lower + y`
    Shifted { col: usize, lower: f64 },
    /// `x = y⁺ - y⁻`
    Free { pos: usize, neg: usize },
}

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self, row: usize) -> f64 {
        self.a[row][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > MAX_PIVOTS {
            return Err(CashError::IterationLimit(MAX_PIVOTS));
        }
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (r, line) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
        Ok(())
    }

    /// Minimizes `cost · y` over columns where `allowed` is true.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        loop {
            // reduced costs c_j - c_B B^-1 A_j, read off the canonical tableau
            let entering = (0..self.cols).find(|&j| {
                if !allowed[j] || self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(r, &b)| cost[b] * self.a[r][j])
                        .sum::<f64>();
                reduced < -COST_TOL
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.a.len() {
                let coef = self.a[r][col];
                if coef > PIVOT_TOL {
                    let ratio = self.rhs(r) / coef;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((best, best_ratio)) => {
                            let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                            if ratio < best_ratio && !tie
                                || tie && self.basis[r] < self.basis[best]
                            {
                                Some((r, ratio))
                            } else {
                                Some((best, best_ratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(CashError::Unbounded);
            };
            self.pivot(row, col)?;
        }
    }
}

/// Solves `lp`, returning an optimal basic solution.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let n = lp.num_vars();

    // map variables to non-negative columns
    let mut maps = Vec::with_capacity(n);
    let mut structural = 0usize;
    for &lower in &lp.lower {
        if lower == f64::NEG_INFINITY {
            maps.push(VarMap::Free {
                pos: structural,
                neg: structural + 1,
            });
            structural += 2;
        } else {
            maps.push(VarMap::Shifted {
                col: structural,
                lower,
            });
            structural += 1;
        }
    }

    // rows in terms of the structural columns, with b >= 0
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    let mut push_row = |coeffs: &[f64], sense: Sense, rhs: f64| {
        let mut line = vec![0.0; structural];
        let mut rhs = rhs;
        for (i, &c) in coeffs.iter().enumerate() {
            match maps[i] {
                VarMap::Shifted { col, lower } => {
                    line[col] += c;
                    rhs -= c * lower;
                }
                VarMap::Free { pos, neg } => {
                    line[pos] += c;
                    line[neg] -= c;
                }
            }
        }
        rows.push((line, sense, rhs));
    };
    for c in &lp.constraints {
        push_row(&c.coeffs, c.sense, c.rhs);
    }
    for (i, u) in lp.upper.iter().enumerate() {
        if let Some(u) = u {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            push_row(&e, Sense::Le, *u);
        }
    }
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|v| *v = -*v);
            row.2 = -row.2;
            row.1 = match row.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    let m = rows.len();
    let slacks = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let artificials = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let cols = structural + slacks + artificials;
    let first_artificial = structural + slacks;

    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0usize; m];
    let (mut s, mut art) = (structural, first_artificial);
    for (r, (line, sense, rhs)) in rows.iter().enumerate() {
        a[r][..structural].copy_from_slice(line);
        a[r][cols] = *rhs;
        match sense {
            Sense::Le => {
                a[r][s] = 1.0;
                basis[r] = s;
                s += 1;
            }
            Sense::Ge => {
                a[r][s] = -1.0;
                s += 1;
                a[r][art] = 1.0;
                basis[r] = art;
                art += 1;
            }
            Sense::Eq => {
                a[r][art] = 1.0;
                basis[r] = art;
                art += 1;
            }
        }
    }
    let mut tab = Tableau {
        a,
        basis,
        cols,
        pivots: 0,
    };

    if artificials > 0 {
        let mut cost = vec![0.0; cols];
        cost[first_artificial..].iter_mut().for_each(|c| *c = 1.0);
        tab.optimize(&cost, &vec![true; cols])?;
        let infeasibility: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= first_artificial)
            .map(|r| tab.rhs(r))
            .sum();
        if infeasibility > PHASE_ONE_TOL {
            return Err(CashError::Infeasible);
        }
        // drive zero-valued artificials out of the basis; drop redundant rows
        let mut r = 0;
        while r < tab.a.len() {
            if tab.basis[r] >= first_artificial {
                let replacement = (0..first_artificial).find(|&j| tab.a[r][j].abs() > 1e-9);
                match replacement {
                    Some(j) => tab.pivot(r, j)?,
                    None => {
                        tab.a.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let sign = if lp.maximize { -1.0 } else { 1.0 };
    let mut cost = vec![0.0; cols];
    for (i, &c) in lp.objective.iter().enumerate() {
        match maps[i] {
            VarMap::Shifted { col, .. } => cost[col] = sign * c,
            VarMap::Free { pos, neg } => {
                cost[pos] = sign * c;
                cost[neg] = -sign * c;
            }
        }
    }
    let allowed: Vec<bool> = (0..cols).map(|j| j < first_artificial).collect();
    tab.optimize(&cost, &allowed)?;

    let mut y = vec![0.0; cols];
    for (r, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(r);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, lower } => lower + y[col],
            VarMap::Free { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        pivots: tab.pivots,
    })
}
