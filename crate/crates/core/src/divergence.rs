//! Extended divergence for unnormalized measures and general f-divergences.
//!
//! The extended divergence
//! `D(λ‖μ) = Σᵢ λᵢ ln(λᵢ/μᵢ) − (λᵢ − μᵢ)`
//! coincides with the classical divergence on probability vectors and stays
//! meaningful for arbitrary non-negative vectors: it is the mean codelength
//! difference between the product-Poisson codes with mean vectors λ and μ.
//!
//! General f-divergences `D_f(P,Q) = Σ f(pᵢ/qᵢ)·qᵢ` are evaluated with the
//! boundary conventions `f(0) = lim_{x→0} f(x)` and `f(x/0)·0 = f′(∞)·x`,
//! resolved per atom by an explicit case split so no NaN ever leaks out of a
//! `0/0` corner.

use std::fmt;
use std::sync::Arc;

use crate::measure::Measure;
use crate::scalar::{cast, to_f64, KahanSum, Scalar};
use crate::{Error, Result};

/// `[0, ∞]`-valued results. Divergences live here; no sentinel floats cross
/// module boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal<F: Scalar> {
    Finite(F),
    PlusInfinity,
}

impl<F: Scalar> ExtendedReal<F> {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<F> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            ExtendedReal::PlusInfinity => None,
        }
    }

    /// The finite value, panicking on `+∞`; for contexts that have already
    /// established finiteness.
    pub fn expect_finite(&self, what: &str) -> F {
        match self {
            ExtendedReal::Finite(v) => *v,
            ExtendedReal::PlusInfinity => panic!("{what} is infinite"),
        }
    }

    /// Absolute difference, with `|∞ − ∞| = 0`.
    pub fn abs_diff(&self, other: &Self) -> ExtendedReal<F> {
        match (self, other) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => {
                ExtendedReal::Finite((*a - *b).abs())
            }
            (ExtendedReal::PlusInfinity, ExtendedReal::PlusInfinity) => {
                ExtendedReal::Finite(F::zero())
            }
            _ => ExtendedReal::PlusInfinity,
        }
    }
}

impl<F: Scalar> From<F> for ExtendedReal<F> {
    fn from(v: F) -> Self {
        ExtendedReal::Finite(v)
    }
}

impl<F: Scalar> PartialOrd for ExtendedReal<F> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use ExtendedReal::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.partial_cmp(b),
            (Finite(_), PlusInfinity) => Some(std::cmp::Ordering::Less),
            (PlusInfinity, Finite(_)) => Some(std::cmp::Ordering::Greater),
            (PlusInfinity, PlusInfinity) => Some(std::cmp::Ordering::Equal),
        }
    }
}

impl<F: Scalar> fmt::Display for ExtendedReal<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PlusInfinity => write!(f, "inf"),
        }
    }
}

fn check_supports<F: Scalar>(p: &Measure<F>, q: &Measure<F>) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    if let (Some(a), Some(b)) = (p.labels(), q.labels()) {
        if a != b {
            return Err(Error::LabelMismatch);
        }
    }
    Ok(())
}

/// Extended divergence `D(λ‖μ) = Σᵢ λᵢ ln(λᵢ/μᵢ) − (λᵢ − μᵢ)`.
///
/// Per-atom boundary cases, resolved before any division:
/// `λᵢ = μᵢ = 0` contributes 0; `λᵢ = 0 < μᵢ` contributes `μᵢ`;
/// `λᵢ > 0 = μᵢ` makes the divergence `+∞`.
///
/// The result is non-negative and zero exactly when `λ = μ`.
pub fn kl_extended<F: Scalar>(lambda: &Measure<F>, mu: &Measure<F>) -> Result<ExtendedReal<F>> {
    check_supports(lambda, mu)?;
    let mut acc = KahanSum::new();
    for (&l, &m) in lambda.weights().iter().zip(mu.weights()) {
        if l == F::zero() {
            acc.add(m); // 0·ln 0 ≡ 0, leaving the +μᵢ term
        } else if m == F::zero() {
            return Ok(ExtendedReal::PlusInfinity);
        } else {
            acc.add(l * (l / m).ln() - l + m);
        }
    }
    Ok(ExtendedReal::Finite(acc.value()))
}

/// `D(Po(λ⃗)‖Po(μ⃗))`: the divergence of product-Poisson count distributions
/// with the given mean vectors. Numerically identical to [`kl_extended`];
/// the name documents the Poisson reading of the inputs.
pub fn kl_poisson_product<F: Scalar>(
    lambda: &Measure<F>,
    mu: &Measure<F>,
) -> Result<ExtendedReal<F>> {
    kl_extended(lambda, mu)
}

/// A convex generator `f` with its boundary data: `f(0) = lim_{x→0} f(x)`
/// and `f′(∞) = lim_{x→∞} f(x)/x`.
///
/// Construction spot-checks `f(1) = 0`, non-negativity on a log grid over
/// `[1e−6, 1e6]`, and the declared boundary values where finite.
#[derive(Clone)]
pub struct FDivergenceSpec<F: Scalar> {
    name: String,
    f: Arc<dyn Fn(F) -> F + Send + Sync>,
    f_at_zero: ExtendedReal<F>,
    fprime_at_inf: ExtendedReal<F>,
    /// `x*(s) = argmin_{x ≥ 0} f(x) + s·x` in closed form, when known.
    /// Solvers fall back to a derivative-free search otherwise.
    tilt_argmin: Option<Arc<dyn Fn(F) -> F + Send + Sync>>,
}

impl<F: Scalar> fmt::Debug for FDivergenceSpec<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FDivergenceSpec")
            .field("name", &self.name)
            .field("f_at_zero", &self.f_at_zero)
            .field("fprime_at_inf", &self.fprime_at_inf)
            .finish()
    }
}

impl<F: Scalar> FDivergenceSpec<F> {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(F) -> F + Send + Sync + 'static,
        f_at_zero: ExtendedReal<F>,
        fprime_at_inf: ExtendedReal<F>,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            f: Arc::new(f),
            f_at_zero,
            fprime_at_inf,
            tilt_argmin: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let tol = cast::<F>(1e-12);
        let one = (self.f)(F::one());
        if one.abs() > tol {
            return Err(Error::InvalidSpec(format!(
                "f(1) = {} but must be 0",
                to_f64(one)
            )));
        }
        // 49 log-spaced sample points over [1e-6, 1e6].
        for k in 0..49 {
            let x = cast::<F>(10f64.powf(-6.0 + 12.0 * k as f64 / 48.0));
            let v = (self.f)(x);
            if !v.is_finite() || v < -tol {
                return Err(Error::InvalidSpec(format!(
                    "f({}) = {} violates non-negativity",
                    to_f64(x),
                    to_f64(v)
                )));
            }
        }
        let rel = |a: F, b: F| (a - b).abs() / b.abs().max(F::one());
        if let ExtendedReal::Finite(v) = self.f_at_zero {
            let probe = (self.f)(cast(1e-8));
            if rel(probe, v) > cast(1e-4) {
                return Err(Error::InvalidSpec(format!(
                    "declared f(0) = {} but f(1e-8) = {}",
                    to_f64(v),
                    to_f64(probe)
                )));
            }
        }
        if let ExtendedReal::Finite(v) = self.fprime_at_inf {
            let x = cast::<F>(1e8);
            let probe = (self.f)(x) / x;
            if rel(probe, v) > cast(1e-4) {
                return Err(Error::InvalidSpec(format!(
                    "declared f'(inf) = {} but f(1e8)/1e8 = {}",
                    to_f64(v),
                    to_f64(probe)
                )));
            }
        }
        Ok(())
    }

    pub fn with_tilt_argmin(mut self, argmin: impl Fn(F) -> F + Send + Sync + 'static) -> Self {
        self.tilt_argmin = Some(Arc::new(argmin));
        self
    }

    /// `f(x) = x·ln(x) − (x − 1)`: the information-divergence generator,
    /// with `f(0) = 1` and `f′(∞) = +∞`.
    pub fn kl() -> Self {
        Self {
            name: "kl".into(),
            f: Arc::new(|x: F| x * x.ln() - (x - F::one())),
            f_at_zero: ExtendedReal::Finite(F::one()),
            fprime_at_inf: ExtendedReal::PlusInfinity,
            // argmin of x ln x − x + 1 + s x is e^{−s}
            tilt_argmin: Some(Arc::new(|s: F| (-s).exp())),
        }
    }

    /// `f(x) = −ln(x) + x − 1`: the reversed information-divergence
    /// generator, with `f(0) = +∞` and `f′(∞) = 1`.
    pub fn reverse_kl() -> Self {
        Self {
            name: "reverse-kl".into(),
            f: Arc::new(|x: F| -(x.ln()) + x - F::one()),
            f_at_zero: ExtendedReal::PlusInfinity,
            fprime_at_inf: ExtendedReal::Finite(F::one()),
            // argmin of −ln x + x − 1 + s x is 1/(1+s), for s > −1
            tilt_argmin: Some(Arc::new(|s: F| (F::one() + s).recip())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: F) -> F {
        (self.f)(x)
    }

    pub fn f_at_zero(&self) -> ExtendedReal<F> {
        self.f_at_zero
    }

    pub fn fprime_at_inf(&self) -> ExtendedReal<F> {
        self.fprime_at_inf
    }

    /// `argmin_{x ≥ 0} f(x) + s·x`. Uses the closed form when present,
    /// otherwise a bracketed golden-section search on the convex objective.
    pub fn tilt_argmin(&self, s: F) -> F {
        if let Some(ref a) = self.tilt_argmin {
            return a(s);
        }
        self.tilt_argmin_numeric(s)
    }

    pub(crate) fn tilt_argmin_numeric(&self, s: F) -> F {
        let obj = |x: F| (self.f)(x) + s * x;
        // Expand until the objective starts increasing; convexity makes the
        // minimum bracketed by [0, hi].
        let mut hi = F::one();
        let mut last = obj(hi);
        for _ in 0..200 {
            let next = obj(hi + hi);
            if next > last {
                break;
            }
            hi = hi + hi;
            last = next;
        }
        let mut lo = F::zero();
        // Golden-section to ~1e-15 relative width.
        let inv_phi = cast::<F>(0.618_033_988_749_894_9);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut f1, mut f2) = (obj(x1), obj(x2));
        let tol = cast::<F>(1e-15);
        for _ in 0..200 {
            if hi - lo <= tol * (F::one() + hi.abs()) {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = obj(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = obj(x2);
            }
        }
        (lo + hi) / cast(2.0)
    }
}

/// `D_f(P,Q) = Σᵢ f(pᵢ/qᵢ)·qᵢ` with the boundary conventions applied per
/// atom: `qᵢ > 0, pᵢ = 0` contributes `f(0)·qᵢ`; `qᵢ = 0` contributes
/// `f′(∞)·pᵢ` (zero when `pᵢ = 0`); `+∞` propagates.
pub fn f_divergence<F: Scalar>(
    p: &Measure<F>,
    q: &Measure<F>,
    spec: &FDivergenceSpec<F>,
) -> Result<ExtendedReal<F>> {
    check_supports(p, q)?;
    let mut acc = KahanSum::new();
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if qi > F::zero() {
            if pi == F::zero() {
                match spec.f_at_zero() {
                    ExtendedReal::Finite(v) => acc.add(v * qi),
                    ExtendedReal::PlusInfinity => return Ok(ExtendedReal::PlusInfinity),
                }
            } else {
                acc.add(spec.eval(pi / qi) * qi);
            }
        } else if pi > F::zero() {
            match spec.fprime_at_inf() {
                ExtendedReal::Finite(v) => acc.add(v * pi),
                ExtendedReal::PlusInfinity => return Ok(ExtendedReal::PlusInfinity),
            }
        }
        // pi = qi = 0 contributes nothing
    }
    Ok(ExtendedReal::Finite(acc.value()))
}
