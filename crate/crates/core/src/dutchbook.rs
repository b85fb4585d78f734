//! The arbitrage dichotomy for payoff systems on a finite sample space:
//! either some positive combination of the payoffs is strictly negative
//! everywhere, or some non-trivial non-negative measure gives every payoff
//! a non-negative integral. Decided by linear programming; every answer
//! ships with a certificate that [`verify`] re-checks from the raw matrix,
//! independent of the solver.

use serde::Serialize;

use crate::scalar::{cast, to_f64, Scalar};
use crate::simplex::{solve, LpOutcome, LpProblem, RowOp};
use crate::{Error, Result};

/// Slack allowed on the measure branch's integrals.
pub const MEASURE_SLACK: f64 = 1e-9;

/// `n` payoff functions on a sample space of `|Ω|` points, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSystem<F: Scalar> {
    payoffs: Vec<Vec<F>>,
}

impl<F: Scalar> PayoffSystem<F> {
    pub fn new(payoffs: Vec<Vec<F>>) -> Result<Self> {
        if payoffs.is_empty() {
            return Err(Error::EmptySupport);
        }
        let omega = payoffs[0].len();
        if omega == 0 {
            return Err(Error::EmptySupport);
        }
        for row in &payoffs {
            if row.len() != omega {
                return Err(Error::SupportMismatch(row.len(), omega));
            }
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteWeight(i));
                }
            }
        }
        Ok(Self { payoffs })
    }

    pub fn n_payoffs(&self) -> usize {
        self.payoffs.len()
    }

    pub fn n_points(&self) -> usize {
        self.payoffs[0].len()
    }

    pub fn payoffs(&self) -> &[Vec<F>] {
        &self.payoffs
    }

    /// `Σᵢ sᵢ Xᵢ(ω)` for every `ω`.
    fn combination(&self, s: &[F]) -> Vec<F> {
        let omega = self.n_points();
        let mut out = vec![F::zero(); omega];
        for (si, row) in s.iter().zip(&self.payoffs) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o = *o + *si * x;
            }
        }
        out
    }

    /// `∫ Xᵢ dμ` for every `i`.
    fn integrals(&self, mu: &[F]) -> Vec<F> {
        self.payoffs
            .iter()
            .map(|row| {
                row.iter()
                    .zip(mu)
                    .map(|(&x, &m)| x * m)
                    .fold(F::zero(), |a, v| a + v)
            })
            .collect()
    }
}

/// Which side of the dichotomy holds, with its witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "branch", rename_all = "lowercase")]
pub enum Branch<F: Scalar> {
    /// Positive weights whose combination is strictly negative everywhere.
    Arbitrage { weights: Vec<F> },
    /// A non-negative measure of positive total mass giving every payoff a
    /// non-negative integral. `boundary` marks the knife edge where the
    /// integrals vanish and no strict arbitrage exists either.
    Measure { mu: Vec<F>, boundary: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyCertificate<F: Scalar> {
    #[serde(flatten)]
    pub branch: Branch<F>,
    /// Arbitrage: `min_ω −Σ sᵢXᵢ(ω)` (strictly positive).
    /// Measure: `min_i ∫Xᵢ dμ` (at least `−1e−9`).
    pub verification_margin: F,
}

/// Decides the dichotomy. Strictness is handled by an auxiliary margin
/// variable: maximize `t` subject to `Σ sᵢXᵢ(ω) ≤ −t` with `sᵢ ≥ 1`
/// (positivity by scale invariance) and `t ≤ 1` (any strict arbitrage
/// rescales to margin 1). `t > tol` certifies arbitrage; otherwise the
/// measure branch is solved for the worst payoff integral.
pub fn decide<F: Scalar>(system: &PayoffSystem<F>, tol: F) -> Result<DichotomyCertificate<F>> {
    if !(tol > F::zero()) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n = system.n_payoffs();
    let omega = system.n_points();

    // Arbitrage LP over (u, t⁺, t⁻) with s = 1 + u and t = t⁺ − t⁻:
    // for each ω: Σᵢ uᵢXᵢ(ω) + t ≤ −ΣᵢXᵢ(ω), plus t⁺ ≤ 1.
    let mut rows = Vec::with_capacity(omega + 1);
    for w in 0..omega {
        let mut coeffs = vec![F::zero(); n + 2];
        let mut rhs = F::zero();
        for i in 0..n {
            coeffs[i] = system.payoffs[i][w];
            rhs = rhs - system.payoffs[i][w];
        }
        coeffs[n] = F::one();
        coeffs[n + 1] = -F::one();
        rows.push((coeffs, RowOp::Le, rhs));
    }
    {
        let mut cap = vec![F::zero(); n + 2];
        cap[n] = F::one();
        rows.push((cap, RowOp::Le, F::one()));
    }
    let mut objective = vec![F::zero(); n + 2];
    objective[n] = F::one();
    objective[n + 1] = -F::one();
    let arb = solve(&LpProblem {
        n_vars: n + 2,
        rows,
        objective,
    })?;
    let (t_star, weights) = match arb {
        LpOutcome::Optimal { x, value } => {
            let s: Vec<F> = x[..n].iter().map(|&u| F::one() + u).collect();
            (value, s)
        }
        LpOutcome::Infeasible => {
            // s = 1, t pushed low enough always satisfies the rows
            return Err(Error::NoConvergence(0));
        }
        LpOutcome::Unbounded => (F::one(), vec![F::one(); n]),
    };

    if t_star > tol {
        let margin = weights_margin(system, &weights);
        if margin > F::zero() {
            return Ok(DichotomyCertificate {
                branch: Branch::Arbitrage { weights },
                verification_margin: margin,
            });
        }
        // numerically ambiguous: fall through to the measure branch
    }

    // Measure LP over (μ, m⁺, m⁻): maximize the worst integral m subject
    // to ∫Xᵢ dμ ≥ m and Σμ = 1.
    let bound = system
        .payoffs
        .iter()
        .flatten()
        .fold(F::zero(), |a, &v| a.max(v.abs()))
        + F::one();
    let mut rows = Vec::with_capacity(n + 2);
    for i in 0..n {
        let mut coeffs = vec![F::zero(); omega + 2];
        for w in 0..omega {
            coeffs[w] = -system.payoffs[i][w];
        }
        coeffs[omega] = F::one();
        coeffs[omega + 1] = -F::one();
        rows.push((coeffs, RowOp::Le, F::zero()));
    }
    {
        let mut mass = vec![F::zero(); omega + 2];
        for c in mass.iter_mut().take(omega) {
            *c = F::one();
        }
        rows.push((mass, RowOp::Eq, F::one()));
        let mut cap = vec![F::zero(); omega + 2];
        cap[omega] = F::one();
        rows.push((cap, RowOp::Le, bound));
    }
    let mut objective = vec![F::zero(); omega + 2];
    objective[omega] = F::one();
    objective[omega + 1] = -F::one();
    let msr = solve(&LpProblem {
        n_vars: omega + 2,
        rows,
        objective,
    })?;
    match msr {
        LpOutcome::Optimal { x, .. } => {
            let mu: Vec<F> = x[..omega].iter().map(|&v| v.max(F::zero())).collect();
            let margin = system
                .integrals(&mu)
                .into_iter()
                .fold(F::infinity(), F::min);
            Ok(DichotomyCertificate {
                branch: Branch::Measure {
                    mu,
                    boundary: t_star >= -tol,
                },
                verification_margin: margin,
            })
        }
        _ => Err(Error::NoConvergence(0)),
    }
}

fn weights_margin<F: Scalar>(system: &PayoffSystem<F>, s: &[F]) -> F {
    system
        .combination(s)
        .into_iter()
        .map(|v| -v)
        .fold(F::infinity(), F::min)
}

/// Re-checks a certificate against the raw matrix, independent of how it
/// was produced.
pub fn verify<F: Scalar>(
    system: &PayoffSystem<F>,
    cert: &DichotomyCertificate<F>,
) -> bool {
    match &cert.branch {
        Branch::Arbitrage { weights } => {
            weights.len() == system.n_payoffs()
                && weights.iter().all(|&s| s > F::zero() && s.is_finite())
                && weights_margin(system, weights) > F::zero()
        }
        Branch::Measure { mu, .. } => {
            mu.len() == system.n_points()
                && mu.iter().all(|&m| m >= F::zero() && m.is_finite())
                && mu.iter().fold(F::zero(), |a, &v| a + v) > F::zero()
                && system
                    .integrals(mu)
                    .into_iter()
                    .all(|v| v >= -cast::<F>(MEASURE_SLACK))
        }
    }
}

/// Convenience: `decide` then `verify`, erroring if the certificate fails
/// its own invariant.
pub fn decide_verified<F: Scalar>(
    system: &PayoffSystem<F>,
    tol: F,
) -> Result<DichotomyCertificate<F>> {
    let cert = decide(system, tol)?;
    if !verify(system, &cert) {
        return Err(Error::ConditionFailed(format!(
            "certificate failed independent verification (margin {})",
            to_f64(cert.verification_margin)
        )));
    }
    Ok(cert)
}
