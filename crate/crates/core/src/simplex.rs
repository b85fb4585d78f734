//! Dense two-phase simplex with Bland's rule, for the small linear
//! programs behind the arbitrage dichotomy and feasibility certification.
//! Deterministic: Bland's smallest-index rule both for entering and for
//! ratio-test ties, so no cycling and no run-to-run variation.

use crate::scalar::{cast, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum RowOp {
    Le,
    Eq,
}

/// Maximize `objective · x` subject to the rows and `x ≥ 0`.
#[derive(Debug, Clone)]
pub(crate) struct LpProblem<F: Scalar> {
    pub n_vars: usize,
    pub rows: Vec<(Vec<F>, RowOp, F)>,
    pub objective: Vec<F>,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome<F: Scalar> {
    Optimal { x: Vec<F>, value: F },
    Infeasible,
    Unbounded,
}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-8;

struct Tableau<F: Scalar> {
    rows: Vec<Vec<F>>, // m × (ncols + 1), last column is the rhs
    basis: Vec<usize>,
    ncols: usize,
}

impl<F: Scalar> Tableau<F> {
    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v = *v / pivot;
        }
        for r in 0..self.rows.len() {
            if r == row {
                continue;
            }
            let factor = self.rows[r][col];
            if factor == F::zero() {
                continue;
            }
            for c in 0..=self.ncols {
                let delta = self.rows[row][c] * factor;
                self.rows[r][c] = self.rows[r][c] - delta;
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes `costs · x` from the current basic feasible solution;
    /// `false` means unbounded. `barred` columns never enter.
    fn optimize(&mut self, costs: &[F], barred: &[bool]) -> bool {
        let cost_eps = cast::<F>(COST_EPS);
        let pivot_eps = cast::<F>(PIVOT_EPS);
        loop {
            // reduced cost r_j = c_j − c_B · B⁻¹ a_j; Bland: smallest
            // improving index enters
            let mut entering = None;
            for j in 0..self.ncols {
                if barred[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut r = costs[j];
                for (i, &bi) in self.basis.iter().enumerate() {
                    r = r - costs[bi] * self.rows[i][j];
                }
                if r > cost_eps {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return true;
            };
            // ratio test, ties broken by smallest basic index
            let mut leaving: Option<(usize, F)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > pivot_eps {
                    let ratio = self.rows[i][self.ncols] / a;
                    let better = match leaving {
                        None => true,
                        Some((best_i, best_ratio)) => {
                            ratio < best_ratio - pivot_eps
                                || (ratio <= best_ratio + pivot_eps
                                    && self.basis[i] < self.basis[best_i])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return false;
            };
            self.pivot(row, col);
        }
    }
}

pub(crate) fn solve<F: Scalar>(lp: &LpProblem<F>) -> Result<LpOutcome<F>> {
    let n = lp.n_vars;
    if lp.objective.len() != n {
        return Err(Error::SupportMismatch(lp.objective.len(), n));
    }
    for (coeffs, _, _) in &lp.rows {
        if coeffs.len() != n {
            return Err(Error::SupportMismatch(coeffs.len(), n));
        }
    }
    let m = lp.rows.len();

    struct RowSpec<F> {
        coeffs: Vec<F>,
        rhs: F,
        op: RowOp,
        negated: bool,
    }
    let specs: Vec<RowSpec<F>> = lp
        .rows
        .iter()
        .map(|(coeffs, op, rhs)| {
            let negate = *rhs < F::zero();
            RowSpec {
                coeffs: if negate {
                    coeffs.iter().map(|&c| -c).collect()
                } else {
                    coeffs.clone()
                },
                rhs: if negate { -*rhs } else { *rhs },
                op: *op,
                negated: negate,
            }
        })
        .collect();

    // column layout: structural | one slack/surplus per row | artificials
    let n_slack = m;
    let mut artificial_cols = Vec::new();
    {
        let mut next = n + n_slack;
        for spec in &specs {
            // a flipped Le row is a Ge row (needs surplus + artificial);
            // Eq rows always need an artificial
            if matches!(spec.op, RowOp::Eq) || spec.negated {
                artificial_cols.push(next);
                next += 1;
            }
        }
    }
    let n_art = artificial_cols.len();
    let ncols = n + n_slack + n_art;

    let mut rows: Vec<Vec<F>> = Vec::with_capacity(m);
    let mut basis = vec![usize::MAX; m];
    let mut art_iter = 0usize;
    for (i, spec) in specs.iter().enumerate() {
        let mut row = vec![F::zero(); ncols + 1];
        row[..n].copy_from_slice(&spec.coeffs);
        row[ncols] = spec.rhs;
        match (spec.op, spec.negated) {
            (RowOp::Le, false) => {
                row[n + i] = F::one();
                basis[i] = n + i;
            }
            (RowOp::Le, true) => {
                row[n + i] = -F::one();
                let art = artificial_cols[art_iter];
                art_iter += 1;
                row[art] = F::one();
                basis[i] = art;
            }
            (RowOp::Eq, _) => {
                let art = artificial_cols[art_iter];
                art_iter += 1;
                row[art] = F::one();
                basis[i] = art;
            }
        }
        rows.push(row);
    }

    let mut tableau = Tableau { rows, basis, ncols };
    let barred_none = vec![false; ncols];

    if n_art > 0 {
        // phase 1: minimize the artificial mass
        let mut phase1 = vec![F::zero(); ncols];
        for &a in &artificial_cols {
            phase1[a] = -F::one();
        }
        if !tableau.optimize(&phase1, &barred_none) {
            // bounded above by 0, so this cannot happen
            return Err(Error::NoConvergence(0));
        }
        let art_mass: F = tableau
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| artificial_cols.contains(&b))
            .map(|(i, _)| tableau.rows[i][ncols])
            .fold(F::zero(), |acc, v| acc + v);
        if art_mass > cast(PHASE1_TOL) {
            return Ok(LpOutcome::Infeasible);
        }
        // drive basic artificials out where a real pivot exists; rows with
        // no such pivot are redundant and stay at zero
        for i in 0..m {
            if artificial_cols.contains(&tableau.basis[i]) {
                if let Some(col) =
                    (0..n + n_slack).find(|&j| tableau.rows[i][j].abs() > cast(PIVOT_EPS))
                {
                    tableau.pivot(i, col);
                }
            }
        }
    }

    // phase 2 with artificial columns barred
    let mut costs = vec![F::zero(); ncols];
    costs[..n].copy_from_slice(&lp.objective);
    let mut barred = vec![false; ncols];
    for &a in &artificial_cols {
        barred[a] = true;
    }
    if !tableau.optimize(&costs, &barred) {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![F::zero(); n];
    for (i, &b) in tableau.basis.iter().enumerate() {
        if b < n {
            x[b] = tableau.rows[i][tableau.ncols];
        }
    }
    let value = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(&c, &v)| c * v)
        .fold(F::zero(), |acc, v| acc + v);
    Ok(LpOutcome::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(n: usize, rows: Vec<(Vec<f64>, RowOp, f64)>, objective: Vec<f64>) -> LpProblem<f64> {
        LpProblem {
            n_vars: n,
            rows,
            objective,
        }
    }

    #[test]
    fn basic_max() {
        // max x + y s.t. x + y ≤ 1
        let out = solve(&lp(
            2,
            vec![(vec![1.0, 1.0], RowOp::Le, 1.0)],
            vec![1.0, 1.0],
        ))
        .unwrap();
        match out {
            LpOutcome::Optimal { value, .. } => assert!((value - 1.0).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classic_two_var() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6)
        let out = solve(&lp(
            2,
            vec![
                (vec![1.0, 0.0], RowOp::Le, 4.0),
                (vec![0.0, 2.0], RowOp::Le, 12.0),
                (vec![3.0, 2.0], RowOp::Le, 18.0),
            ],
            vec![3.0, 5.0],
        ))
        .unwrap();
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 36.0).abs() < 1e-9);
                assert!((x[0] - 2.0).abs() < 1e-9);
                assert!((x[1] - 6.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equality_constraints() {
        // max x s.t. x + y = 1 → 1 at (1, 0)
        let out = solve(&lp(
            2,
            vec![(vec![1.0, 1.0], RowOp::Eq, 1.0)],
            vec![1.0, 0.0],
        ))
        .unwrap();
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 1.0).abs() < 1e-10);
                assert!((x[0] - 1.0).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_rhs_becomes_ge() {
        // x ≥ 2 written as −x ≤ −2; max −x → x = 2
        let out = solve(&lp(1, vec![(vec![-1.0], RowOp::Le, -2.0)], vec![-1.0])).unwrap();
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 2.0).abs() < 1e-10);
                assert!((value + 2.0).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        // x ≤ 1 and x ≥ 2
        let out = solve(&lp(
            1,
            vec![(vec![1.0], RowOp::Le, 1.0), (vec![-1.0], RowOp::Le, -2.0)],
            vec![0.0],
        ))
        .unwrap();
        assert!(matches!(out, LpOutcome::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        // max x with only a vacuous row
        let out = solve(&lp(1, vec![(vec![-1.0], RowOp::Le, 0.0)], vec![1.0])).unwrap();
        assert!(matches!(out, LpOutcome::Unbounded));
    }

    #[test]
    fn degenerate_does_not_cycle() {
        // a cycling-prone instance; Bland's rule must terminate
        let out = solve(&lp(
            4,
            vec![
                (vec![0.5, -5.5, -2.5, 9.0], RowOp::Le, 0.0),
                (vec![0.5, -1.5, -0.5, 1.0], RowOp::Le, 0.0),
                (vec![1.0, 0.0, 0.0, 0.0], RowOp::Le, 1.0),
            ],
            vec![10.0, -57.0, -9.0, -24.0],
        ))
        .unwrap();
        match out {
            LpOutcome::Optimal { value, .. } => assert!((value - 1.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn redundant_equality_rows() {
        // x + y = 1 twice; still solvable
        let out = solve(&lp(
            2,
            vec![
                (vec![1.0, 1.0], RowOp::Eq, 1.0),
                (vec![1.0, 1.0], RowOp::Eq, 1.0),
            ],
            vec![0.0, 1.0],
        ))
        .unwrap();
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 1.0).abs() < 1e-10);
                assert!((x[1] - 1.0).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }
}
