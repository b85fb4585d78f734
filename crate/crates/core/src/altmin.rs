//! Cyclic projection onto mean-value constraint sets, its unnormalized
//! simplification, and Gram-Schmidt acceleration.
//!
//! To project a reference measure onto `C = ∩ᵢ Cᵢ` with
//! `Cᵢ = {P : Σⱼ fᵢ(j)pⱼ = μᵢ ∧ Σⱼ pⱼ = 1}` one can project on the sets in
//! cyclic order. Dropping the normalization from each set gives
//! `C̃ᵢ = {P : Σⱼ fᵢ(j)pⱼ = μᵢ}` plus `C̃₀ = {P : Σⱼ pⱼ = 1}`, and
//! projecting on the `C̃ᵢ` cyclically is much cheaper: the unnormalized
//! projection onto a single mean constraint is the exponential tilt
//! `pⱼ = qⱼ e^{−β fᵢ(j)}` with `β` from a one-dimensional root find.
//! Replacing the constraint functions by a family orthogonal with respect
//! to the reference (Gram-Schmidt) accelerates the cycle.

use crate::divergence::{kl_extended, FDivergenceSpec};
use crate::linalg::symmetric_eigenvalues;
use crate::measure::Measure;
use crate::projection::{certify_feasible, project, ConstraintSet, LinearConstraint};
use crate::scalar::{cast, ksum, to_f64, Scalar};
use crate::{Error, Result};

/// `Σⱼ fᵢ(j)·pⱼ = target`, one cycle stop.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstraint<F: Scalar> {
    pub f: Vec<F>,
    pub target: F,
}

impl<F: Scalar> MomentConstraint<F> {
    pub fn new(f: Vec<F>, target: F) -> Self {
        Self { f, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltMinVariant {
    /// projects on the full `Cᵢ` (constraint plus normalization) per stop
    NormalizedCyclic,
    /// projects on the `C̃ᵢ` (single tilts) in cyclic order
    UnnormalizedCyclic,
    /// unnormalized cycle over the Gram-Schmidt-orthogonalized family
    Orthogonalized,
}

impl AltMinVariant {
    pub fn label(&self) -> &'static str {
        match self {
            AltMinVariant::NormalizedCyclic => "normalized-cyclic",
            AltMinVariant::UnnormalizedCyclic => "unnormalized-cyclic",
            AltMinVariant::Orthogonalized => "orthogonalized",
        }
    }
}

/// Per-cycle snapshot of the iteration.
#[derive(Debug, Clone)]
pub struct CycleSnapshot<F: Scalar> {
    pub measure: Measure<F>,
    /// divergence of the iterate from the starting reference
    pub divergence: F,
    /// worst residual over the original constraints (and normalization)
    pub max_residual: F,
    pub total_mass: F,
}

#[derive(Debug, Clone)]
pub struct AltMinTrace<F: Scalar> {
    pub variant: AltMinVariant,
    pub cycles: Vec<CycleSnapshot<F>>,
    pub cycles_to_tol: usize,
    pub converged: bool,
}

impl<F: Scalar> AltMinTrace<F> {
    pub fn fixed_point(&self) -> &Measure<F> {
        &self.cycles.last().expect("at least one cycle").measure
    }
}

const ROOT_WIDTH: f64 = 1e-14;
const TILDE_RESIDUAL: f64 = 1e-10;
// the already-satisfied short-circuit must sit well below the cycle
// tolerances: leftover residual gets amplified by the inverse basis
// transform when cycling over an orthogonalized family
const TILDE_EARLY_EXIT: f64 = 1e-13;

/// Unnormalized projection onto `C̃ = {P : Σⱼ f(j)pⱼ = μ}`:
/// `pⱼ = qⱼ e^{−β f(j)}` with `β` solving `Σⱼ f(j) qⱼ e^{−β f(j)} = μ`.
/// The root function is strictly decreasing in `β` whenever `f` has any
/// nonzero value on the support, which the bracketing relies on.
pub fn project_tilde<F: Scalar>(q: &Measure<F>, f: &[F], target: F) -> Result<Measure<F>> {
    if f.len() != q.len() {
        return Err(Error::SupportMismatch(f.len(), q.len()));
    }
    let h = |beta: F| -> F {
        ksum(
            q.weights()
                .iter()
                .zip(f)
                .map(|(&qj, &fj)| fj * qj * (-beta * fj).exp()),
        )
    };
    let tilt = |beta: F| -> Measure<F> {
        let w = q
            .weights()
            .iter()
            .zip(f)
            .map(|(&qj, &fj)| qj * (-beta * fj).exp())
            .collect();
        q.with_weights(w)
    };
    // degenerate constraint: f vanishes on the support
    if q.weights().iter().zip(f).all(|(&qj, &fj)| qj * fj == F::zero()) {
        return if target.abs() <= cast(TILDE_RESIDUAL) {
            Ok(q.clone())
        } else {
            Err(Error::TargetOutOfRange {
                target: to_f64(target),
            })
        };
    }

    let at_zero = h(F::zero());
    if (at_zero - target).abs() <= cast::<F>(TILDE_EARLY_EXIT) * (F::one() + target.abs()) {
        return Ok(q.clone()); // already satisfied, β = 0
    }
    // bracket the root: h decreasing, so target < h(lo) and target > h(hi)
    let mut lo = -F::one();
    let mut hi = F::one();
    let mut expansions = 0;
    while h(lo) <= target {
        lo = lo + lo;
        expansions += 1;
        if expansions > 200 || !h(lo).is_finite() {
            return Err(Error::TargetOutOfRange {
                target: to_f64(target),
            });
        }
    }
    expansions = 0;
    while h(hi) >= target {
        hi = hi + hi;
        expansions += 1;
        if expansions > 200 || !h(hi).is_finite() {
            return Err(Error::TargetOutOfRange {
                target: to_f64(target),
            });
        }
    }
    debug_assert!(h(lo) > h(hi), "root function must be decreasing");
    let width = cast::<F>(ROOT_WIDTH);
    while hi - lo > width * (F::one() + lo.abs().max(hi.abs())) {
        let mid = (lo + hi) / cast(2.0);
        if h(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut beta = (lo + hi) / cast(2.0);
    // one Newton polish: h'(β) = −Σ f² q e^{−βf}
    let hp = -ksum(
        q.weights()
            .iter()
            .zip(f)
            .map(|(&qj, &fj)| fj * fj * qj * (-beta * fj).exp()),
    );
    if hp.is_finite() && hp != F::zero() {
        let polished = beta - (h(beta) - target) / hp;
        if polished.is_finite() && (h(polished) - target).abs() <= (h(beta) - target).abs() {
            beta = polished;
        }
    }
    let out = tilt(beta);
    let residual = (out.expectation(f)? - target).abs();
    if residual > cast::<F>(TILDE_RESIDUAL) * (F::one() + target.abs()) {
        return Err(Error::NoConvergence(0));
    }
    Ok(out)
}

fn moment_cset<F: Scalar>(
    support: usize,
    constraints: &[MomentConstraint<F>],
    probability: bool,
) -> Result<ConstraintSet<F>> {
    ConstraintSet::new(
        support,
        constraints
            .iter()
            .map(|c| LinearConstraint::new(c.f.clone(), c.target))
            .collect(),
        vec![],
        probability,
    )
}

struct CycleState<F: Scalar> {
    reference: Measure<F>,
    current: Measure<F>,
    constraints: Vec<MomentConstraint<F>>,
    include_normalization: bool,
    tol: F,
}

impl<F: Scalar> CycleState<F> {
    fn max_residual(&self) -> F {
        let mut r = F::zero();
        for c in &self.constraints {
            let v = self
                .current
                .expectation(&c.f)
                .expect("support validated")
                - c.target;
            r = r.max(v.abs());
        }
        if self.include_normalization {
            r = r.max((self.current.total_mass() - F::one()).abs());
        }
        r
    }

    fn snapshot(&self) -> CycleSnapshot<F> {
        CycleSnapshot {
            measure: self.current.clone(),
            divergence: kl_extended(&self.current, &self.reference)
                .expect("aligned supports")
                .expect_finite("cyclic iterates stay absolutely continuous"),
            max_residual: self.max_residual(),
            total_mass: self.current.total_mass(),
        }
    }

    fn finish(self, variant: AltMinVariant, cycles: Vec<CycleSnapshot<F>>) -> AltMinTrace<F> {
        let converged = cycles
            .last()
            .map(|c| c.max_residual <= self.tol)
            .unwrap_or(false);
        AltMinTrace {
            variant,
            cycles_to_tol: cycles.len(),
            converged,
            cycles,
        }
    }
}

fn run_cycles<F: Scalar>(
    mut state: CycleState<F>,
    variant: AltMinVariant,
    max_cycles: usize,
    mut step: impl FnMut(&Measure<F>) -> Result<Measure<F>>,
) -> Result<AltMinTrace<F>> {
    let mut cycles = Vec::new();
    for _ in 0..max_cycles {
        let previous = state.current.clone();
        state.current = step(&state.current)?;
        cycles.push(state.snapshot());
        let change = previous
            .weights()
            .iter()
            .zip(state.current.weights())
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max);
        // residuals alone can oscillate across the cycle; require the
        // iterate itself to settle as well
        if state.max_residual() <= state.tol && change <= state.tol {
            return Ok(state.finish(variant, cycles));
        }
    }
    let mut trace = state.finish(variant, cycles);
    trace.converged = false;
    Ok(trace)
}

fn validate_inputs<F: Scalar>(
    q: &Measure<F>,
    constraints: &[MomentConstraint<F>],
    probability: bool,
) -> Result<()> {
    if constraints.is_empty() {
        return Err(Error::EmptySupport);
    }
    for c in constraints {
        if c.f.len() != q.len() {
            return Err(Error::SupportMismatch(c.f.len(), q.len()));
        }
    }
    // feasibility pre-check through the projection machinery
    let cset = moment_cset(q.len(), constraints, probability)?;
    certify_feasible(q, &cset, &FDivergenceSpec::kl())?;
    Ok(())
}

/// Cyclic projection onto `C = ∩ᵢ Cᵢ` with `Cᵢ = {Σ fᵢ p = μᵢ ∧ Σ p = 1}`.
///
/// With `include_normalization` each cycle stop projects onto the full
/// `Cᵢ` (normalization inside every projection, through the dual solver);
/// without it the iteration runs the unnormalized simplification, a cycle
/// of cheap single-constraint tilts over `C̃₀, C̃₁, …, C̃_k`. Both target
/// the same set and share the fixed point; they differ in the work per
/// stop and the number of cycles. Terminates when every residual and the
/// iterate movement fall below `tol` over a full cycle.
pub fn altmin_cyclic<F: Scalar>(
    q: &Measure<F>,
    constraints: &[MomentConstraint<F>],
    include_normalization: bool,
    tol: F,
    max_cycles: usize,
) -> Result<AltMinTrace<F>> {
    validate_inputs(q, constraints, true)?;
    let state = CycleState {
        reference: q.clone(),
        current: q.clone(),
        constraints: constraints.to_vec(),
        include_normalization: true,
        tol,
    };
    if include_normalization {
        let spec = FDivergenceSpec::kl();
        let sets: Vec<ConstraintSet<F>> = constraints
            .iter()
            .map(|c| moment_cset(q.len(), std::slice::from_ref(c), true))
            .collect::<Result<_>>()?;
        let inner_tol = tol * cast(0.01);
        run_cycles(
            state,
            AltMinVariant::NormalizedCyclic,
            max_cycles,
            move |current| {
                let mut p = current.clone();
                for cset in &sets {
                    p = project(&p, cset, &spec, inner_tol)?.q_star;
                }
                Ok(p)
            },
        )
    } else {
        let ones = vec![F::one(); q.len()];
        let constraints_owned = constraints.to_vec();
        run_cycles(
            state,
            AltMinVariant::UnnormalizedCyclic,
            max_cycles,
            move |current| {
                let mut p = project_tilde(current, &ones, F::one())?;
                for c in &constraints_owned {
                    p = project_tilde(&p, &c.f, c.target)?;
                }
                Ok(p)
            },
        )
    }
}

/// Output of the Gram-Schmidt step: functions orthonormal in `L²(Q)`, the
/// lower-triangular change of basis, and its condition diagnostics.
#[derive(Debug, Clone)]
pub struct Orthogonalized<F: Scalar> {
    pub functions: Vec<Vec<F>>,
    /// `functions[i] = Σ_{j≤i} transform[i][j] · input[j]`
    pub transform: Vec<Vec<F>>,
    /// condition number of the input Gram matrix
    pub gram_condition: F,
}

impl<F: Scalar> Orthogonalized<F> {
    /// Applies the same lower-triangular map to the constraint targets, the
    /// unique transformation that leaves the feasible set unchanged.
    pub fn transform_targets(&self, targets: &[F]) -> Result<Vec<F>> {
        if targets.len() != self.transform.len() {
            return Err(Error::SupportMismatch(targets.len(), self.transform.len()));
        }
        Ok(self
            .transform
            .iter()
            .map(|row| {
                row.iter()
                    .zip(targets)
                    .map(|(&c, &t)| c * t)
                    .fold(F::zero(), |a, v| a + v)
            })
            .collect())
    }
}

const RANK_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-10;

/// Gram-Schmidt orthonormalization with respect to
/// `⟨u, v⟩_Q = Σ_a u(a)·v(a)·q(a)`, with a second pass for stability.
pub fn orthogonalize<F: Scalar>(
    functions: &[Vec<F>],
    q: &Measure<F>,
) -> Result<Orthogonalized<F>> {
    if functions.is_empty() {
        return Err(Error::EmptySupport);
    }
    for f in functions {
        if f.len() != q.len() {
            return Err(Error::SupportMismatch(f.len(), q.len()));
        }
    }
    let inner = |u: &[F], v: &[F]| -> F {
        ksum(
            u.iter()
                .zip(v)
                .zip(q.weights())
                .map(|((&a, &b), &w)| a * b * w),
        )
    };
    let k = functions.len();
    // condition number of the input Gram matrix, for the report
    let gram: Vec<Vec<F>> = (0..k)
        .map(|i| (0..k).map(|j| inner(&functions[i], &functions[j])).collect())
        .collect();
    let eigen = symmetric_eigenvalues(&gram);
    let max_ev = eigen.iter().fold(F::zero(), |a, &v| a.max(v));
    let min_ev = eigen.iter().fold(F::infinity(), |a, &v| a.min(v));
    let gram_condition = if min_ev > F::zero() {
        max_ev / min_ev
    } else {
        F::infinity()
    };

    let mut ortho: Vec<Vec<F>> = Vec::with_capacity(k);
    let mut transform: Vec<Vec<F>> = Vec::with_capacity(k);
    for (i, f) in functions.iter().enumerate() {
        let mut v = f.clone();
        let mut coeffs = vec![F::zero(); i + 1];
        coeffs[i] = F::one();
        // two MGS passes keep the family orthonormal to ~1e-14
        for _pass in 0..2 {
            for (j, h) in ortho.iter().enumerate() {
                let c = inner(&v, h);
                for (vv, &hv) in v.iter_mut().zip(h) {
                    *vv = *vv - c * hv;
                }
                for (cc, &tj) in coeffs.iter_mut().zip(&transform[j]) {
                    *cc = *cc - c * tj;
                }
            }
        }
        let norm_sq = inner(&v, &v);
        let scale = inner(f, f).max(F::one());
        if norm_sq <= cast::<F>(RANK_TOL * RANK_TOL) * scale {
            return Err(Error::RankDeficient(format!(
                "function {i} is linearly dependent on its predecessors in L2(Q)"
            )));
        }
        let norm = norm_sq.sqrt();
        for vv in v.iter_mut() {
            *vv = *vv / norm;
        }
        for cc in coeffs.iter_mut() {
            *cc = *cc / norm;
        }
        coeffs.resize(k, F::zero());
        // keep lower-triangular layout: coeffs beyond i are zero
        let mut row = vec![F::zero(); k];
        row[..=i].copy_from_slice(&coeffs[..=i]);
        ortho.push(v);
        transform.push(row);
    }
    // defining property, verified before returning
    for i in 0..k {
        for j in 0..=i {
            let g = inner(&ortho[i], &ortho[j]);
            let expected = if i == j { F::one() } else { F::zero() };
            if (g - expected).abs() > cast(ORTHO_TOL) {
                return Err(Error::RankDeficient(format!(
                    "orthonormalization drifted at ({i},{j}): {}",
                    to_f64(g)
                )));
            }
        }
    }
    Ok(Orthogonalized {
        functions: ortho,
        transform,
        gram_condition,
    })
}

/// The accelerated cycle: orthogonalizes `{1, f₁, …, f_k}` against the
/// reference and runs the unnormalized cycle on the transformed
/// constraints. The feasible set is unchanged, so the fixed point is the
/// same; the cycle count is what improves.
pub fn altmin_accelerated<F: Scalar>(
    q: &Measure<F>,
    constraints: &[MomentConstraint<F>],
    tol: F,
    max_cycles: usize,
) -> Result<AltMinTrace<F>> {
    validate_inputs(q, constraints, true)?;
    let mut inputs: Vec<Vec<F>> = Vec::with_capacity(constraints.len() + 1);
    let mut targets: Vec<F> = Vec::with_capacity(constraints.len() + 1);
    inputs.push(vec![F::one(); q.len()]);
    targets.push(F::one());
    for c in constraints {
        inputs.push(c.f.clone());
        targets.push(c.target);
    }
    let ortho = orthogonalize(&inputs, q)?;
    let transformed = ortho.transform_targets(&targets)?;
    let cycle: Vec<MomentConstraint<F>> = ortho
        .functions
        .iter()
        .zip(&transformed)
        .map(|(h, &t)| MomentConstraint::new(h.clone(), t))
        .collect();
    let state = CycleState {
        reference: q.clone(),
        current: q.clone(),
        constraints: constraints.to_vec(), // residuals against the originals
        include_normalization: true,
        tol,
    };
    run_cycles(
        state,
        AltMinVariant::Orthogonalized,
        max_cycles,
        move |current| {
            let mut p = current.clone();
            for c in &cycle {
                p = project_tilde(&p, &c.f, c.target)?;
            }
            Ok(p)
        },
    )
}
