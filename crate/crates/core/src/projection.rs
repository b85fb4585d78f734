//! Minimization of f-divergences over convex sets of measures described by
//! linear mean-value constraints, with verified first-order certificates.
//!
//! The solver works on the dual. For dual variables `λ` the per-atom
//! combination `sᵢ = Σⱼ λⱼ gⱼ(i)` determines the inner minimizer
//! `pᵢ = qᵢ · x*(sᵢ)` with `x*(s) = argmin_{x≥0} f(x) + s·x` (for the
//! information-divergence generator this is the exponential tilt
//! `x* = e^{−s}`, the fact that makes the alternating-minimization
//! simplification work). A damped Newton iteration drives the constraint
//! residuals to zero; inequalities are handled by enumerating active sets
//! in deterministic order and checking the KKT sign conditions, which is
//! exact at desk scale and certifiable. Atoms where the reference vanishes
//! stay at zero — absolute continuity is built in, matching how the
//! reversed projection behaves.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::divergence::{f_divergence, ExtendedReal, FDivergenceSpec};
use crate::linalg::solve_linear;
use crate::measure::Measure;
use crate::scalar::{cast, to_f64, Scalar};
use crate::simplex::{solve as lp_solve, LpOutcome, LpProblem, RowOp};
use crate::{Error, Result};

const ITER_CAP: usize = 10_000;
const DEFAULT_TOL: f64 = 1e-9;
const CONSTRAINT_TOL: f64 = 1e-8;
const DUAL_FLOOR: f64 = -1e-10;
const MAX_INEQUALITIES: usize = 12;

/// One linear functional with its right-hand side: `Σ g(i)·pᵢ = target`
/// for equalities, `Σ g(i)·pᵢ ≤ target` for inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint<F: Scalar> {
    pub g: Vec<F>,
    pub target: F,
}

impl<F: Scalar> LinearConstraint<F> {
    pub fn new(g: Vec<F>, target: F) -> Self {
        Self { g, target }
    }
}

/// A convex set of measures: equality and inequality mean-value
/// constraints, optionally restricted to probability measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet<F: Scalar> {
    support_size: usize,
    equalities: Vec<LinearConstraint<F>>,
    inequalities: Vec<LinearConstraint<F>>,
    require_probability: bool,
}

impl<F: Scalar> ConstraintSet<F> {
    pub fn new(
        support_size: usize,
        equalities: Vec<LinearConstraint<F>>,
        inequalities: Vec<LinearConstraint<F>>,
        require_probability: bool,
    ) -> Result<Self> {
        if support_size == 0 {
            return Err(Error::EmptySupport);
        }
        for c in equalities.iter().chain(&inequalities) {
            if c.g.len() != support_size {
                return Err(Error::SupportMismatch(c.g.len(), support_size));
            }
            if !c.target.is_finite() || c.g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "constraint coefficients must be finite".into(),
                ));
            }
        }
        Ok(Self {
            support_size,
            equalities,
            inequalities,
            require_probability,
        })
    }

    pub fn support_size(&self) -> usize {
        self.support_size
    }

    pub fn equalities(&self) -> &[LinearConstraint<F>] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[LinearConstraint<F>] {
        &self.inequalities
    }

    pub fn require_probability(&self) -> bool {
        self.require_probability
    }

    fn dot(g: &[F], p: &[F]) -> F {
        g.iter().zip(p).map(|(&a, &b)| a * b).fold(F::zero(), |x, v| x + v)
    }

    /// Largest violation across all constraints at `p`.
    pub fn max_violation(&self, p: &[F]) -> F {
        let mut v = F::zero();
        for c in &self.equalities {
            v = v.max((Self::dot(&c.g, p) - c.target).abs());
        }
        for c in &self.inequalities {
            v = v.max((Self::dot(&c.g, p) - c.target).max(F::zero()));
        }
        if self.require_probability {
            let mass = p.iter().fold(F::zero(), |a, &x| a + x);
            v = v.max((mass - F::one()).abs());
        }
        v
    }
}

#[derive(Serialize, Deserialize)]
struct EqRepr<F> {
    g: Vec<F>,
    target: F,
}

#[derive(Serialize, Deserialize)]
struct IneqRepr<F> {
    g: Vec<F>,
    bound: F,
}

#[derive(Serialize, Deserialize)]
struct CsetRepr<F> {
    #[serde(default = "Vec::new")]
    equalities: Vec<EqRepr<F>>,
    #[serde(default = "Vec::new")]
    inequalities: Vec<IneqRepr<F>>,
    #[serde(default)]
    probability: bool,
}

impl<F: Scalar + Serialize> Serialize for ConstraintSet<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CsetRepr {
            equalities: self
                .equalities
                .iter()
                .map(|c| EqRepr {
                    g: c.g.clone(),
                    target: c.target,
                })
                .collect(),
            inequalities: self
                .inequalities
                .iter()
                .map(|c| IneqRepr {
                    g: c.g.clone(),
                    bound: c.target,
                })
                .collect(),
            probability: self.require_probability,
        }
        .serialize(serializer)
    }
}

impl<'de, F: Scalar + Deserialize<'de>> Deserialize<'de> for ConstraintSet<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = CsetRepr::<F>::deserialize(deserializer)?;
        let support_size = repr
            .equalities
            .first()
            .map(|c| c.g.len())
            .or_else(|| repr.inequalities.first().map(|c| c.g.len()))
            .ok_or_else(|| {
                D::Error::custom("constraint set without constraints: support size unknown")
            })?;
        ConstraintSet::new(
            support_size,
            repr.equalities
                .into_iter()
                .map(|c| LinearConstraint::new(c.g, c.target))
                .collect(),
            repr.inequalities
                .into_iter()
                .map(|c| LinearConstraint::new(c.g, c.bound))
                .collect(),
            repr.probability,
        )
        .map_err(D::Error::custom)
    }
}

/// A projection with its certificate data.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionResult<F: Scalar> {
    pub q_star: Measure<F>,
    /// attained `D_f(q_star, Q)`
    pub value: F,
    /// dual variables: equalities, then inequalities (zero when inactive),
    /// then the normalization constraint when `require_probability`
    pub duals: Vec<F>,
    /// activity flag per inequality
    pub active: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}

/// Feasibility evidence produced before any projection runs.
#[derive(Debug, Clone)]
pub struct FeasibilityCertificate<F: Scalar> {
    pub witness: Measure<F>,
    /// worst slack over inequalities and (where the generator demands
    /// interior points) atom positivity; `+∞` when neither applies
    pub strict_margin: F,
}

fn dom_min<F: Scalar>(spec: &FDivergenceSpec<F>) -> F {
    match spec.fprime_at_inf() {
        ExtendedReal::Finite(v) => -v,
        ExtendedReal::PlusInfinity => F::neg_infinity(),
    }
}

/// `d x*(s) / ds` by central difference, clamped inside the dual domain.
fn tilt_slope<F: Scalar>(spec: &FDivergenceSpec<F>, s: F, domain_min: F) -> F {
    let mut h = cast::<F>(1e-6) * (F::one() + s.abs());
    if domain_min.is_finite() {
        let room = (s - domain_min) / cast(2.0);
        h = h.min(room);
    }
    (spec.tilt_argmin(s + h) - spec.tilt_argmin(s - h)) / (h + h)
}

struct DualSolve<F> {
    p: Vec<F>,
    duals: Vec<F>,
    iterations: usize,
    converged: bool,
}

/// Damped Newton on the dual of the equality-constrained problem.
fn solve_dual<F: Scalar>(
    q: &[F],
    rows: &[(Vec<F>, F)],
    spec: &FDivergenceSpec<F>,
    tol: F,
    init: &[F],
) -> DualSolve<F> {
    let d = rows.len();
    let n = q.len();
    let domain_min = dom_min(spec);
    let margin = if domain_min.is_finite() {
        cast::<F>(1e-12) * (F::one() + domain_min.abs())
    } else {
        F::zero()
    };

    let combination = |duals: &[F], i: usize| -> F {
        let mut s = F::zero();
        for (j, row) in rows.iter().enumerate() {
            s = s + duals[j] * row.0[i];
        }
        s
    };
    let in_domain = |duals: &[F]| -> bool {
        if !domain_min.is_finite() {
            return true;
        }
        (0..n).all(|i| q[i] == F::zero() || combination(duals, i) > domain_min + margin)
    };
    let primal = |duals: &[F]| -> Vec<F> {
        (0..n)
            .map(|i| {
                if q[i] == F::zero() {
                    F::zero()
                } else {
                    q[i] * spec.tilt_argmin(combination(duals, i))
                }
            })
            .collect()
    };
    let residual = |p: &[F]| -> Vec<F> {
        rows.iter()
            .map(|(g, t)| {
                g.iter().zip(p).map(|(&a, &b)| a * b).fold(F::zero(), |x, v| x + v) - *t
            })
            .collect()
    };
    let norm = |r: &[F]| r.iter().fold(F::zero(), |a, &v| a.max(v.abs()));

    let mut duals = init.to_vec();
    if !in_domain(&duals) {
        duals = vec![F::zero(); d];
    }
    let mut p = primal(&duals);
    let mut r = residual(&p);
    let mut iterations = 0usize;

    while iterations < ITER_CAP {
        if norm(&r) <= tol {
            return DualSolve {
                p,
                duals,
                iterations,
                converged: true,
            };
        }
        iterations += 1;
        // Jacobian of the residual map: J_{jl} = Σ_i q_i x*'(s_i) g_j g_l
        let slopes: Vec<F> = (0..n)
            .map(|i| {
                if q[i] == F::zero() {
                    F::zero()
                } else {
                    tilt_slope(spec, combination(&duals, i), domain_min)
                }
            })
            .collect();
        let mut jac = vec![vec![F::zero(); d]; d];
        for i in 0..n {
            if q[i] == F::zero() {
                continue;
            }
            let w = q[i] * slopes[i];
            for j in 0..d {
                for l in j..d {
                    let v = w * rows[j].0[i] * rows[l].0[i];
                    jac[j][l] = jac[j][l] + v;
                    if l != j {
                        jac[l][j] = jac[l][j] + v;
                    }
                }
            }
        }
        let neg_r: Vec<F> = r.iter().map(|&v| -v).collect();
        let mut step = None;
        let mut damping = F::zero();
        for _ in 0..8 {
            let mut m = jac.clone();
            if damping > F::zero() {
                for (j, row) in m.iter_mut().enumerate() {
                    row[j] = row[j] - damping;
                }
            }
            if let Some(s) = solve_linear(m, neg_r.clone()) {
                if s.iter().all(|v| v.is_finite()) {
                    step = Some(s);
                    break;
                }
            }
            damping = if damping == F::zero() {
                cast::<F>(1e-8)
            } else {
                damping * cast(10.0)
            };
        }
        let Some(step) = step else {
            break;
        };
        // backtrack into the domain and onto residual descent
        let r_norm = norm(&r);
        let mut alpha = F::one();
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<F> = duals
                .iter()
                .zip(&step)
                .map(|(&l, &s)| l + alpha * s)
                .collect();
            if in_domain(&trial) {
                let tp = primal(&trial);
                let tr = residual(&tp);
                if norm(&tr) <= r_norm * (F::one() - cast::<F>(1e-4) * alpha) || norm(&tr) <= tol {
                    duals = trial;
                    p = tp;
                    r = tr;
                    accepted = true;
                    break;
                }
            }
            alpha = alpha / cast(2.0);
        }
        if !accepted {
            break;
        }
    }
    let converged = norm(&r) <= tol;
    DualSolve {
        p,
        duals,
        iterations,
        converged,
    }
}

/// Certifies feasibility before solving: finds a witness maximizing the
/// worst slack (inequalities, and atom positivity where `f(0) = ∞` forces
/// interior points), or reports infeasibility.
pub fn certify_feasible<F: Scalar>(
    q: &Measure<F>,
    cset: &ConstraintSet<F>,
    spec: &FDivergenceSpec<F>,
) -> Result<FeasibilityCertificate<F>> {
    if cset.support_size() != q.len() {
        return Err(Error::SupportMismatch(cset.support_size(), q.len()));
    }
    let n = q.len();
    // atoms allowed to carry mass: the support of q, plus zero-q atoms when
    // the generator prices them linearly
    let allow_zero_q = !matches!(spec.fprime_at_inf(), ExtendedReal::PlusInfinity);
    let active_atoms: Vec<usize> = (0..n)
        .filter(|&i| q.weights()[i] > F::zero() || allow_zero_q)
        .collect();
    let need_positive = matches!(spec.f_at_zero(), ExtendedReal::PlusInfinity);
    let witness_of = |x: &[F]| -> Result<Measure<F>> {
        let mut w = vec![F::zero(); n];
        for (k, &i) in active_atoms.iter().enumerate() {
            w[i] = x[k].max(F::zero());
        }
        Measure::new(w, q.labels().map(|l| l.to_vec()))
    };
    let build_lp = |couple_positivity: bool| -> LpProblem<F> {
        let nv = active_atoms.len() + 1; // p over active atoms, then t
        let t_col = nv - 1;
        let mut rows = Vec::new();
        for c in &cset.equalities {
            let mut coeffs = vec![F::zero(); nv];
            for (k, &i) in active_atoms.iter().enumerate() {
                coeffs[k] = c.g[i];
            }
            rows.push((coeffs, RowOp::Eq, c.target));
        }
        if cset.require_probability {
            let mut coeffs = vec![F::zero(); nv];
            for k in 0..active_atoms.len() {
                coeffs[k] = F::one();
            }
            rows.push((coeffs, RowOp::Eq, F::one()));
        }
        for c in &cset.inequalities {
            let mut coeffs = vec![F::zero(); nv];
            for (k, &i) in active_atoms.iter().enumerate() {
                coeffs[k] = c.g[i];
            }
            coeffs[t_col] = F::one();
            rows.push((coeffs, RowOp::Le, c.target));
        }
        if need_positive && couple_positivity {
            for (k, &i) in active_atoms.iter().enumerate() {
                if q.weights()[i] > F::zero() {
                    let mut coeffs = vec![F::zero(); nv];
                    coeffs[k] = -F::one();
                    coeffs[t_col] = F::one();
                    rows.push((coeffs, RowOp::Le, F::zero()));
                }
            }
        }
        let mut cap = vec![F::zero(); nv];
        cap[t_col] = F::one();
        rows.push((cap, RowOp::Le, F::one()));
        let mut objective = vec![F::zero(); nv];
        objective[t_col] = F::one();
        LpProblem {
            n_vars: nv,
            rows,
            objective,
        }
    };

    let outcome = lp_solve(&build_lp(true))?;
    let (x, margin) = match outcome {
        LpOutcome::Optimal { x, value } => (x, value),
        LpOutcome::Infeasible => {
            return Err(Error::Infeasible(
                "no measure on the admissible support satisfies the constraints".into(),
            ))
        }
        LpOutcome::Unbounded => {
            return Err(Error::NoConvergence(0));
        }
    };
    let witness = witness_of(&x)?;
    if f_divergence(&witness, q, spec)?.is_finite() {
        return Ok(FeasibilityCertificate {
            witness,
            strict_margin: margin,
        });
    }
    // slack and positivity may compete for the same margin variable; retry
    // with the inequalities uncoupled before declaring the set unusable
    if let LpOutcome::Optimal { x, .. } = lp_solve(&build_lp(false))? {
        let witness = witness_of(&x)?;
        if f_divergence(&witness, q, spec)?.is_finite() {
            return Ok(FeasibilityCertificate {
                witness,
                strict_margin: margin,
            });
        }
    }
    Err(Error::Infeasible(
        "feasible points exist but none has finite divergence".into(),
    ))
}

/// Projects `Q` onto the constraint set, minimizing `D_f(P, Q)`.
pub fn project<F: Scalar>(
    q: &Measure<F>,
    cset: &ConstraintSet<F>,
    spec: &FDivergenceSpec<F>,
    tol: F,
) -> Result<ProjectionResult<F>> {
    let init = vec![
        F::zero();
        cset.equalities.len()
            + cset.inequalities.len()
            + usize::from(cset.require_probability)
    ];
    project_from(q, cset, spec, tol, &init)
}

/// [`project`] with explicit initial duals, laid out as the result's
/// `duals` field (equalities, inequalities, then normalization).
pub fn project_from<F: Scalar>(
    q: &Measure<F>,
    cset: &ConstraintSet<F>,
    spec: &FDivergenceSpec<F>,
    tol: F,
    init_duals: &[F],
) -> Result<ProjectionResult<F>> {
    if cset.support_size() != q.len() {
        return Err(Error::SupportMismatch(cset.support_size(), q.len()));
    }
    if let ExtendedReal::Finite(v) = spec.fprime_at_inf() {
        if !(v > F::zero()) {
            return Err(Error::InvalidSpec(
                "projection requires f'(inf) > 0".into(),
            ));
        }
    }
    let tol = if tol > F::zero() { tol } else { cast(DEFAULT_TOL) };
    let n_eq = cset.equalities.len();
    let n_in = cset.inequalities.len();
    let expected = n_eq + n_in + usize::from(cset.require_probability);
    if init_duals.len() != expected {
        return Err(Error::SupportMismatch(init_duals.len(), expected));
    }
    if n_in > MAX_INEQUALITIES {
        return Err(Error::InvalidParameter(format!(
            "at most {MAX_INEQUALITIES} inequalities supported"
        )));
    }
    certify_feasible(q, cset, spec)?;

    // deterministic active-set order: small sets first, then by mask
    let mut masks: Vec<u32> = (0..(1u32 << n_in)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let ktol = tol.max(cast(CONSTRAINT_TOL)).max(tol * cast(10.0));
    let mut total_iterations = 0usize;
    for mask in masks {
        let mut rows: Vec<(Vec<F>, F)> = Vec::new();
        let mut init = Vec::new();
        for (j, c) in cset.equalities.iter().enumerate() {
            rows.push((c.g.clone(), c.target));
            init.push(init_duals[j]);
        }
        let mut active_idx = Vec::new();
        for (j, c) in cset.inequalities.iter().enumerate() {
            if mask & (1 << j) != 0 {
                rows.push((c.g.clone(), c.target));
                init.push(init_duals[n_eq + j]);
                active_idx.push(j);
            }
        }
        if cset.require_probability {
            rows.push((vec![F::one(); q.len()], F::one()));
            init.push(init_duals[expected - 1]);
        }

        let sol = solve_dual(q.weights(), &rows, spec, tol, &init);
        total_iterations += sol.iterations;
        if !sol.converged {
            continue;
        }
        // KKT: active inequality duals non-negative, inactive ones satisfied
        let dual_floor = cast::<F>(DUAL_FLOOR);
        let active_duals_ok = active_idx
            .iter()
            .enumerate()
            .all(|(k, _)| sol.duals[n_eq + k] >= dual_floor);
        if !active_duals_ok {
            continue;
        }
        let inactive_ok = cset.inequalities.iter().enumerate().all(|(j, c)| {
            if mask & (1 << j) != 0 {
                return true;
            }
            ConstraintSet::dot(&c.g, &sol.p) <= c.target + ktol
        });
        if !inactive_ok {
            continue;
        }
        // atoms outside the reference support are held at zero mass; with
        // a finite f'(inf) that is only optimal while adding mass there
        // costs f'(inf) + s_i >= 0
        if let ExtendedReal::Finite(slope) = spec.fprime_at_inf() {
            let zero_atoms_ok = (0..q.len())
                .filter(|&i| q.weights()[i] == F::zero())
                .all(|i| {
                    let s_i = rows
                        .iter()
                        .zip(&sol.duals)
                        .map(|((g, _), &l)| l * g[i])
                        .fold(F::zero(), |a, v| a + v);
                    slope + s_i >= -ktol
                });
            if !zero_atoms_ok {
                continue;
            }
        }
        let q_star = q.with_weights(sol.p.clone());
        let value = match f_divergence(&q_star, q, spec)? {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PlusInfinity => continue,
        };
        // assemble duals in the declared layout
        let mut duals = vec![F::zero(); expected];
        duals[..n_eq].copy_from_slice(&sol.duals[..n_eq]);
        for (k, &j) in active_idx.iter().enumerate() {
            duals[n_eq + j] = sol.duals[n_eq + k];
        }
        if cset.require_probability {
            duals[expected - 1] = sol.duals[rows.len() - 1];
        }
        let mut active = vec![false; n_in];
        for &j in &active_idx {
            active[j] = true;
        }
        return Ok(ProjectionResult {
            q_star,
            value,
            duals,
            active,
            iterations: total_iterations,
            converged: true,
        });
    }
    Err(Error::NoConvergence(total_iterations))
}

/// Report of the tightening-tolerance run: successive solutions must be
/// pointwise Cauchy on the support of `Q` and land on the projection.
#[derive(Debug, Clone)]
pub struct AsymptoticReport<F: Scalar> {
    pub tolerances: Vec<F>,
    /// sup-distance between consecutive solutions on the support of `Q`
    pub sup_diffs: Vec<F>,
    /// sup-distance between the tightest solution and `project` at the
    /// default tolerance
    pub final_vs_projection: F,
    pub cauchy_ok: bool,
    pub matches: bool,
}

const ASYMPTOTIC_TOL: f64 = 1e-6;

pub fn asymptotic_sequence_check<F: Scalar>(
    q: &Measure<F>,
    cset: &ConstraintSet<F>,
    spec: &FDivergenceSpec<F>,
    schedule: &[F],
) -> Result<AsymptoticReport<F>> {
    if schedule.len() < 2 {
        return Err(Error::InvalidParameter(
            "schedule needs at least two tolerances".into(),
        ));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter(
            "schedule must be strictly decreasing".into(),
        ));
    }
    let runs: Vec<ProjectionResult<F>> = schedule
        .iter()
        .map(|&t| project(q, cset, spec, t))
        .collect::<Result<_>>()?;
    let support: Vec<usize> = (0..q.len())
        .filter(|&i| q.weights()[i] > F::zero())
        .collect();
    let sup = |a: &Measure<F>, b: &Measure<F>| {
        support
            .iter()
            .map(|&i| (a.weights()[i] - b.weights()[i]).abs())
            .fold(F::zero(), F::max)
    };
    let sup_diffs: Vec<F> = runs
        .windows(2)
        .map(|w| sup(&w[0].q_star, &w[1].q_star))
        .collect();
    let reference = project(q, cset, spec, cast(DEFAULT_TOL))?;
    let final_vs_projection = sup(&runs.last().unwrap().q_star, &reference.q_star);
    let bound = cast::<F>(ASYMPTOTIC_TOL);
    let cauchy_ok = sup_diffs.last().map(|&d| d <= bound).unwrap_or(true);
    let matches = final_vs_projection <= bound;
    Ok(AsymptoticReport {
        tolerances: schedule.to_vec(),
        sup_diffs,
        final_vs_projection,
        cauchy_ok,
        matches,
    })
}

/// Certification that a projection with `f'(∞) = ∞` onto a set of
/// probability measures stays a probability measure.
#[derive(Debug, Clone)]
pub struct MassPreservationReport<F: Scalar> {
    pub result: ProjectionResult<F>,
    pub mass: F,
    pub deviation: F,
    pub ok: bool,
}

const MASS_TOL: f64 = 1e-8;
const PROBABILITY_INPUT_TOL: f64 = 1e-9;

pub fn mass_preservation_check<F: Scalar>(
    q: &Measure<F>,
    cset: &ConstraintSet<F>,
    spec: &FDivergenceSpec<F>,
    tol: F,
) -> Result<MassPreservationReport<F>> {
    if !matches!(spec.fprime_at_inf(), ExtendedReal::PlusInfinity) {
        return Err(Error::ConditionFailed(
            "mass preservation requires f'(inf) = +inf".into(),
        ));
    }
    if (q.total_mass() - F::one()).abs() > cast(PROBABILITY_INPUT_TOL) {
        return Err(Error::NotProbability(to_f64(q.total_mass())));
    }
    if !cset.require_probability() {
        return Err(Error::ConditionFailed(
            "the constraint set must be restricted to probability measures".into(),
        ));
    }
    let result = project(q, cset, spec, tol)?;
    let mass = result.q_star.total_mass();
    let deviation = (mass - F::one()).abs();
    Ok(MassPreservationReport {
        ok: deviation <= cast(MASS_TOL),
        mass,
        deviation,
        result,
    })
}

/// Certification of the reversed projection onto `{Σ g·p ≤ μ̃}`: the bound
/// becomes active, total mass strictly drops, and the projection stays
/// absolutely continuous with respect to `Q`.
#[derive(Debug, Clone)]
pub struct MassReductionReport<F: Scalar> {
    pub result: ProjectionResult<F>,
    pub constraint_value: F,
    pub equality_active: bool,
    pub mass_before: F,
    pub mass_after: F,
    pub mass_strictly_reduced: bool,
    pub absolutely_continuous: bool,
    pub ok: bool,
}

pub fn mass_reduction_check<F: Scalar>(
    q: &Measure<F>,
    g: &[F],
    mu_tilde: F,
    spec: &FDivergenceSpec<F>,
    tol: F,
) -> Result<MassReductionReport<F>> {
    if g.len() != q.len() {
        return Err(Error::SupportMismatch(g.len(), q.len()));
    }
    if g.iter().any(|&v| !(v > F::zero())) {
        return Err(Error::InvalidParameter(
            "the constraint function must be positive".into(),
        ));
    }
    if matches!(spec.fprime_at_inf(), ExtendedReal::PlusInfinity) {
        return Err(Error::ConditionFailed(
            "mass reduction requires f'(inf) < inf".into(),
        ));
    }
    let mu = q.expectation(g)?;
    if !(mu_tilde > F::zero() && mu_tilde < mu) {
        return Err(Error::TargetOutOfRange {
            target: to_f64(mu_tilde),
        });
    }
    let cset = ConstraintSet::new(
        q.len(),
        vec![],
        vec![LinearConstraint::new(g.to_vec(), mu_tilde)],
        false,
    )?;
    let result = project(q, &cset, spec, tol)?;
    let constraint_value = result.q_star.expectation(g)?;
    let equality_active = (constraint_value - mu_tilde).abs() <= cast(MASS_TOL);
    let mass_before = q.total_mass();
    let mass_after = result.q_star.total_mass();
    let mass_strictly_reduced = mass_before - mass_after > tol.max(F::zero());
    let absolutely_continuous = q
        .weights()
        .iter()
        .zip(result.q_star.weights())
        .all(|(&qi, &pi)| qi > F::zero() || pi == F::zero());
    Ok(MassReductionReport {
        ok: equality_active && mass_strictly_reduced && absolutely_continuous,
        constraint_value,
        equality_active,
        mass_before,
        mass_after,
        mass_strictly_reduced,
        absolutely_continuous,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(w: &[f64]) -> Measure<f64> {
        Measure::from_weights(w.to_vec()).unwrap()
    }

    fn die_constraints() -> ConstraintSet<f64> {
        ConstraintSet::new(
            6,
            vec![LinearConstraint::new(
                vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                4.5,
            )],
            vec![],
            true,
        )
        .unwrap()
    }

    /// Independent oracle for the mean-constrained probability projection
    /// under the information-divergence generator: bisection on the
    /// normalized exponential tilt p(θ) ∝ q·e^{θg}.
    fn tilt_oracle(q: &[f64], g: &[f64], target: f64) -> (Vec<f64>, f64) {
        let mean = |theta: f64| -> f64 {
            let w: Vec<f64> = q
                .iter()
                .zip(g)
                .map(|(&qi, &gi)| qi * (theta * gi).exp())
                .collect();
            let z: f64 = w.iter().sum();
            w.iter().zip(g).map(|(&wi, &gi)| wi * gi).sum::<f64>() / z
        };
        let (mut lo, mut hi) = (-50.0, 50.0);
        assert!(mean(lo) < target && target < mean(hi));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        let w: Vec<f64> = q
            .iter()
            .zip(g)
            .map(|(&qi, &gi)| qi * (theta * gi).exp())
            .collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|&wi| wi / z).collect();
        let value: f64 = p
            .iter()
            .zip(q)
            .filter(|(&pi, _)| pi > 0.0)
            .map(|(&pi, &qi)| pi * (pi / qi).ln())
            .sum();
        (p, value)
    }

    #[test]
    fn projecting_a_feasible_point_is_identity() {
        let q = Measure::uniform_probability(4).unwrap();
        let cset = ConstraintSet::new(
            4,
            vec![LinearConstraint::new(vec![0.0f64, 1.0, 2.0, 3.0], 1.5)],
            vec![],
            true,
        )
        .unwrap();
        let spec = FDivergenceSpec::kl();
        let out = project(&q, &cset, &spec, 1e-10).unwrap();
        assert!(out.value.abs() < 1e-12);
        for (a, b) in out.q_star.weights().iter().zip(q.weights()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn die_mean_projection_matches_tilt_oracle() {
        let q = Measure::uniform_probability(6).unwrap();
        let spec = FDivergenceSpec::kl();
        let out = project(&q, &die_constraints(), &spec, 1e-10).unwrap();
        let g = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (oracle_p, oracle_value) = tilt_oracle(q.weights(), &g, 4.5);
        for (a, b) in out.q_star.weights().iter().zip(&oracle_p) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!((out.value - oracle_value).abs() < 1e-8);
        // frozen values for the tilted die
        let expected = [0.0543, 0.0788, 0.1142, 0.1654, 0.2398, 0.3475];
        for (a, e) in out.q_star.weights().iter().zip(&expected) {
            assert!((a - e).abs() < 1.01e-4, "{a} vs {e}");
        }
        // constraints hold and the mass stays 1
        assert!(die_constraints().max_violation(out.q_star.weights()) < 1e-8);
    }

    #[test]
    fn reverse_kl_inequality_shrinks_mass() {
        // uniform reference on {0,1,2}, E[g] pushed below its value at Q
        let q = Measure::uniform_probability(3).unwrap();
        let spec = FDivergenceSpec::reverse_kl();
        let cset = ConstraintSet::new(
            3,
            vec![],
            vec![LinearConstraint::new(vec![0.0f64, 1.0, 2.0], 0.5)],
            false,
        )
        .unwrap();
        let out = project(&q, &cset, &spec, 1e-10).unwrap();
        assert!(out.active[0]);
        assert!(out.q_star.total_mass() < 1.0 - 1e-3);
        let ev = out.q_star.expectation(&[0.0, 1.0, 2.0]).unwrap();
        assert!((ev - 0.5).abs() < 1e-8);
        // the unconstrained atom keeps its reference weight: λg(0) = 0
        assert!((out.q_star.weights()[0] - 1.0 / 3.0).abs() < 1e-8);
        // dual feasibility and complementary slackness
        assert!(out.duals[0] >= -1e-10);
        let slack = 0.5 - ev;
        assert!((out.duals[0] * slack).abs() <= 1e-8);
    }

    /// Refined primal grid search on three atoms with one inequality.
    fn grid_oracle_rkl(q: &[f64; 3], g: &[f64; 3], bound: f64) -> f64 {
        let spec = FDivergenceSpec::<f64>::reverse_kl();
        let eval = |p: &[f64; 3]| -> f64 {
            let mut v = 0.0;
            for i in 0..3 {
                if q[i] == 0.0 {
                    v += p[i]; // f'(inf) = 1
                } else if p[i] == 0.0 {
                    return f64::INFINITY;
                } else {
                    v += spec.eval(p[i] / q[i]) * q[i];
                }
            }
            v
        };
        let hi = q.iter().fold(0.0f64, |a, &b| a.max(b)) * 1.5 + 0.1;
        // free box search (covers an inactive constraint) ...
        let mut center = [hi / 2.0; 3];
        let mut radius = hi / 2.0;
        let mut best = (f64::INFINITY, center);
        for _level in 0..12 {
            let steps = 24;
            for a in 0..=steps {
                for b in 0..=steps {
                    for c in 0..=steps {
                        let p = [
                            (center[0] - radius + 2.0 * radius * a as f64 / steps as f64).max(0.0),
                            (center[1] - radius + 2.0 * radius * b as f64 / steps as f64).max(0.0),
                            (center[2] - radius + 2.0 * radius * c as f64 / steps as f64).max(0.0),
                        ];
                        if p.iter().zip(g).map(|(x, y)| x * y).sum::<f64>() <= bound {
                            let v = eval(&p);
                            if v < best.0 {
                                best = (v, p);
                            }
                        }
                    }
                }
            }
            center = best.1;
            radius = radius * 8.0 / steps as f64;
        }
        // ... plus a slice search on the constraint plane itself, where a box
        // grid sticks tangentially: p2 is eliminated via the active bound
        let mut center2 = [hi / 2.0; 2];
        let mut radius2 = hi / 2.0;
        let mut best2 = f64::INFINITY;
        let mut best2_at = center2;
        for _level in 0..12 {
            let steps = 40;
            for a in 0..=steps {
                for b in 0..=steps {
                    let p0 = (center2[0] - radius2 + 2.0 * radius2 * a as f64 / steps as f64).max(0.0);
                    let p1 = (center2[1] - radius2 + 2.0 * radius2 * b as f64 / steps as f64).max(0.0);
                    let p2 = (bound - g[0] * p0 - g[1] * p1) / g[2];
                    if p2 < 0.0 {
                        continue;
                    }
                    let v = eval(&[p0, p1, p2]);
                    if v < best2 {
                        best2 = v;
                        best2_at = [p0, p1];
                    }
                }
            }
            center2 = best2_at;
            radius2 = radius2 * 8.0 / steps as f64;
        }
        best.0.min(best2)
    }

    #[test]
    fn reverse_kl_matches_grid_oracle() {
        let q = Measure::uniform_probability(3).unwrap();
        let spec = FDivergenceSpec::reverse_kl();
        let g = [0.1, 1.1, 2.1];
        let mu = q.expectation(&g).unwrap();
        let bound = mu / 2.0;
        let cset =
            ConstraintSet::new(3, vec![], vec![LinearConstraint::new(g.to_vec(), bound)], false)
                .unwrap();
        let out = project(&q, &cset, &spec, 1e-10).unwrap();
        let oracle = grid_oracle_rkl(&[1.0 / 3.0; 3], &g, bound);
        assert!(
            (out.value - oracle).abs() < 1e-5,
            "solver {} vs grid {}",
            out.value,
            oracle
        );
    }

    #[test]
    fn four_atom_single_equality_matches_brute_force_and_tilt() {
        // unnormalized projection onto one mean constraint: the solver,
        // the closed-form tilt, and an exhaustive slice grid must agree
        let qw = [0.1f64, 0.4, 0.2, 0.3];
        let g = [1.0f64, 2.0, 3.0, 4.0];
        let target = 2.0;
        let q = m(&qw);
        let spec = FDivergenceSpec::kl();
        let cset = ConstraintSet::new(
            4,
            vec![LinearConstraint::new(g.to_vec(), target)],
            vec![],
            false,
        )
        .unwrap();
        let out = project(&q, &cset, &spec, 1e-10).unwrap();

        // closed-form exponential tilt p = q·e^{−βg} (independent 1-D
        // bisection on the unnormalized constraint)
        let h = |beta: f64| -> f64 {
            qw.iter()
                .zip(&g)
                .map(|(&qi, &gi)| gi * qi * (-beta * gi).exp())
                .sum()
        };
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let beta = 0.5 * (lo + hi);
        let tilt: Vec<f64> = qw
            .iter()
            .zip(&g)
            .map(|(&qi, &gi)| qi * (-beta * gi).exp())
            .collect();
        for (a, b) in out.q_star.weights().iter().zip(&tilt) {
            assert!((a - b).abs() < 1e-8, "{a} vs tilt {b}");
        }

        // exhaustive grid on the constraint slice: p3 eliminated exactly
        let eval = |p: &[f64; 4]| -> f64 {
            let mut v = 0.0;
            for i in 0..4 {
                if p[i] == 0.0 {
                    v += qw[i]; // f(0)·q = 1·q for the KL generator
                } else {
                    v += spec.eval(p[i] / qw[i]) * qw[i];
                }
            }
            v
        };
        let mut center = [0.3f64; 3];
        let mut radius = 0.3f64;
        let mut best = f64::INFINITY;
        let mut best_at = center;
        for _ in 0..12 {
            let steps = 30;
            for a in 0..=steps {
                for b in 0..=steps {
                    for c in 0..=steps {
                        let p0 = (center[0] - radius + 2.0 * radius * a as f64 / steps as f64)
                            .max(0.0);
                        let p1 = (center[1] - radius + 2.0 * radius * b as f64 / steps as f64)
                            .max(0.0);
                        let p2 = (center[2] - radius + 2.0 * radius * c as f64 / steps as f64)
                            .max(0.0);
                        let p3 = (target - g[0] * p0 - g[1] * p1 - g[2] * p2) / g[3];
                        if p3 < 0.0 {
                            continue;
                        }
                        let v = eval(&[p0, p1, p2, p3]);
                        if v < best {
                            best = v;
                            best_at = [p0, p1, p2];
                        }
                    }
                }
            }
            center = best_at;
            radius = radius * 8.0 / steps as f64;
        }
        assert!(
            (out.value - best).abs() < 1e-5,
            "solver {} vs grid {}",
            out.value,
            best
        );
    }

    #[test]
    fn adding_constraints_cannot_decrease_the_value() {
        let q = Measure::uniform_probability(6).unwrap();
        let spec = FDivergenceSpec::kl();
        let one = project(&q, &die_constraints(), &spec, 1e-10).unwrap();
        let richer = ConstraintSet::new(
            6,
            vec![
                LinearConstraint::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 4.5),
                LinearConstraint::new(vec![1.0, 4.0, 9.0, 16.0, 25.0, 36.0], 22.0),
            ],
            vec![],
            true,
        )
        .unwrap();
        let two = project(&q, &richer, &spec, 1e-10).unwrap();
        assert!(two.value >= one.value - 1e-10);
    }

    #[test]
    fn refuses_optima_that_need_mass_outside_the_support() {
        // with f'(inf) = 1, pushing the mean to 5 is served far more
        // cheaply by mass on the zero-reference atom (cost p) than by
        // inflating the supported atom (cost ~ -ln p + p); the solver keeps
        // zero atoms at zero, so the honest answer is non-convergence, not
        // a silently suboptimal point
        let q = m(&[1.0, 0.0]);
        let spec = FDivergenceSpec::reverse_kl();
        let cset = ConstraintSet::new(
            2,
            vec![LinearConstraint::new(vec![1.0, 10.0], 5.0)],
            vec![],
            false,
        )
        .unwrap();
        assert!(matches!(
            project(&q, &cset, &spec, 1e-9),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn infeasible_sets_are_reported() {
        let q = Measure::uniform_probability(3).unwrap();
        let spec = FDivergenceSpec::kl();
        // mean outside the attainable range of g on the simplex
        let cset = ConstraintSet::new(
            3,
            vec![LinearConstraint::new(vec![0.0, 1.0, 2.0], 5.0)],
            vec![],
            true,
        )
        .unwrap();
        assert!(matches!(
            project(&q, &cset, &spec, 1e-9),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn asymptotic_sequence_stabilizes() {
        let q = Measure::uniform_probability(6).unwrap();
        let spec = FDivergenceSpec::kl();
        let schedule = [1e-3, 1e-5, 1e-7, 1e-9];
        let report =
            asymptotic_sequence_check(&q, &die_constraints(), &spec, &schedule).unwrap();
        assert!(report.cauchy_ok, "sup diffs {:?}", report.sup_diffs);
        assert!(report.matches);
        // feasible reference: constant sequence
        let trivial = ConstraintSet::new(6, vec![], vec![], true).unwrap();
        let report = asymptotic_sequence_check(&q, &trivial, &spec, &[1e-4, 1e-8]).unwrap();
        assert!(report.final_vs_projection < 1e-9);
    }

    #[test]
    fn distinct_initializations_agree() {
        let q = Measure::uniform_probability(6).unwrap();
        let spec = FDivergenceSpec::kl();
        let a = project_from(&q, &die_constraints(), &spec, 1e-10, &[0.0, 0.0]).unwrap();
        let b = project_from(&q, &die_constraints(), &spec, 1e-10, &[1.5, -0.5]).unwrap();
        for (x, y) in a.q_star.weights().iter().zip(b.q_star.weights()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn preserved_mass_stays_one() {
        let spec = FDivergenceSpec::kl();
        let q = Measure::uniform_probability(6).unwrap();
        let report = mass_preservation_check(&q, &die_constraints(), &spec, 1e-9).unwrap();
        assert!(report.ok);
        assert!(report.deviation < 1e-10);

        // trivial set {Σp = 1}: the projection is Q itself
        let trivial = ConstraintSet::new(6, vec![], vec![], true).unwrap();
        let report = mass_preservation_check(&q, &trivial, &spec, 1e-9).unwrap();
        assert!(report.ok);
        for (a, b) in report.result.q_star.weights().iter().zip(q.weights()) {
            assert!((a - b).abs() < 1e-9);
        }

        // perturbed reference
        let q2 = m(&[0.3, 0.1, 0.15, 0.15, 0.1, 0.2]);
        let report = mass_preservation_check(&q2, &die_constraints(), &spec, 1e-9).unwrap();
        assert!(report.ok, "deviation {}", report.deviation);
    }

    #[test]
    fn reduction_certifies_all_three_conclusions() {
        let spec = FDivergenceSpec::reverse_kl();
        let q = Measure::uniform_probability(3).unwrap();
        let g = [0.1, 1.1, 2.1];
        let mu = q.expectation(&g).unwrap();
        let report = mass_reduction_check(&q, &g, mu / 2.0, &spec, 1e-9).unwrap();
        assert!(report.ok);
        assert!(report.equality_active);
        assert!(report.mass_strictly_reduced);
        assert!(report.absolutely_continuous);

        // a reference with a zero atom: the projection stays zero there
        let qz = m(&[0.5, 0.0, 0.5]);
        let g = [0.3, 1.0, 2.0];
        let mu = qz.expectation(&g).unwrap();
        let report = mass_reduction_check(&qz, &g, mu / 2.0, &spec, 1e-9).unwrap();
        assert!(report.ok);
        assert_eq!(report.result.q_star.weights()[1], 0.0);

        // bound approaching μ deactivates the constraint in the limit
        let q = Measure::uniform_probability(3).unwrap();
        let g = [0.1, 1.1, 2.1];
        let mu = q.expectation(&g).unwrap();
        let report = mass_reduction_check(&q, &g, mu * 0.999, &spec, 1e-9).unwrap();
        let gap = report.mass_before - report.mass_after;
        assert!(gap > 0.0 && gap < 1e-2, "gap {gap}");

        // μ̃ outside (0, μ) rejected
        assert!(matches!(
            mass_reduction_check(&q, &g, mu * 1.5, &spec, 1e-9),
            Err(Error::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn preservation_check_rejects_wrong_spec() {
        let q = Measure::uniform_probability(6).unwrap();
        let spec = FDivergenceSpec::reverse_kl();
        assert!(matches!(
            mass_preservation_check(&q, &die_constraints(), &spec, 1e-9),
            Err(Error::ConditionFailed(_))
        ));
    }

    #[test]
    fn constraint_set_json_round_trip() {
        let cset = ConstraintSet::new(
            3,
            vec![LinearConstraint::new(vec![1.0, 2.0, 3.0], 2.0)],
            vec![LinearConstraint::new(vec![0.0, 1.0, 0.0], 0.4)],
            true,
        )
        .unwrap();
        let s = serde_json::to_string(&cset).unwrap();
        assert!(s.contains(r#""bound":0.4"#));
        assert!(s.contains(r#""target":2.0"#));
        assert!(s.contains(r#""probability":true"#));
        let back: ConstraintSet<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cset);
    }
}
