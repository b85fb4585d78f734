//! Special functions needed by the goodness-of-fit machinery: the standard
//! normal cdf (via `erfc`) and the regularized lower incomplete gamma (for
//! the χ²₁ cdf). Both are implemented directly — series plus continued
//! fraction — so the two cdf routes stay numerically independent of each
//! other.

use crate::scalar::{cast, Scalar};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// `erf(x)` by its confluent series; accurate for `|x| ≲ 2.5` where it is
/// used (all terms positive, no cancellation).
fn erf_series<F: Scalar>(x: F) -> F {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        let denom = cast::<F>(2.0 * n as f64 + 1.0);
        term = term * (x2 + x2) / denom;
        let next = sum + term;
        if next == sum || n > 500 {
            break;
        }
        sum = next;
    }
    cast::<F>(2.0 / SQRT_PI) * (-x2).exp() * sum
}

/// `erfc(x)` for `x ≥ 2.5` by the Legendre continued fraction, evaluated
/// with the modified Lentz algorithm.
fn erfc_cf<F: Scalar>(x: F) -> F {
    let tiny = cast::<F>(1e-300);
    let eps = F::epsilon();
    let mut f = x;
    let mut c = x;
    let mut d = F::zero();
    for j in 1..300 {
        let a = cast::<F>(j as f64 / 2.0);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - F::one()).abs() < eps {
            break;
        }
    }
    (-(x * x)).exp() / (cast::<F>(SQRT_PI) * f)
}

/// Complementary error function over the full real line.
pub fn erfc<F: Scalar>(x: F) -> F {
    let cut = cast::<F>(2.5);
    if x >= cut {
        erfc_cf(x)
    } else if x <= -cut {
        cast::<F>(2.0) - erfc_cf(-x)
    } else {
        F::one() - erf_series(x)
    }
}

/// Error function.
pub fn erf<F: Scalar>(x: F) -> F {
    if x.abs() <= cast(2.5) {
        erf_series(x)
    } else {
        F::one() - erfc(x)
    }
}

/// Standard normal cdf `Φ(z)`. `Φ(0) = 0.5` exactly and
/// `Φ(−z) = 1 − Φ(z)` to machine precision by construction.
pub fn normal_cdf<F: Scalar>(z: F) -> F {
    let u = z / cast::<F>(std::f64::consts::SQRT_2);
    cast::<F>(0.5) * erfc(-u)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<F: Scalar>(x: F) -> F {
    debug_assert!(x > F::zero());
    let half = cast::<F>(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = cast::<F>(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(F::one() - x);
    }
    let xm1 = x - F::one();
    let mut a = cast::<F>(LANCZOS[0]);
    for (i, &ci) in LANCZOS.iter().enumerate().skip(1) {
        a = a + cast::<F>(ci) / (xm1 + cast::<F>(i as f64));
    }
    let t = xm1 + cast::<F>(LANCZOS_G) + half;
    let ln_sqrt_2pi = cast::<F>(0.918_938_533_204_672_8);
    ln_sqrt_2pi + (xm1 + half) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`: series for `x < a + 1`,
/// continued fraction otherwise.
pub fn gamma_p<F: Scalar>(a: F, x: F) -> F {
    debug_assert!(a > F::zero() && x >= F::zero());
    if x == F::zero() {
        return F::zero();
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + F::one() {
        // series Σ x^n / (a(a+1)…(a+n))
        let mut term = a.recip();
        let mut sum = term;
        for n in 1..1000 {
            term = term * x / (a + cast::<F>(n as f64));
            sum = sum + term;
            if term.abs() < sum.abs() * F::epsilon() {
                break;
            }
        }
        sum * log_prefactor.exp()
    } else {
        // Lentz continued fraction for Q(a, x)
        let tiny = cast::<F>(1e-300);
        let mut b = x + F::one() - a;
        let mut c = tiny.recip();
        let mut d = b.recip();
        let mut h = d;
        for i in 1..1000 {
            let an = -cast::<F>(i as f64) * (cast::<F>(i as f64) - a);
            b = b + cast::<F>(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = d.recip();
            let delta = d * c;
            h = h * delta;
            if (delta - F::one()).abs() < F::epsilon() {
                break;
            }
        }
        F::one() - log_prefactor.exp() * h
    }
}

/// χ² cdf with one degree of freedom, `P(1/2, t/2)`.
pub fn chi2_cdf_1<F: Scalar>(t: F) -> F {
    if t <= F::zero() {
        return F::zero();
    }
    gamma_p(cast(0.5), t / cast(2.0))
}

/// Compensated (double-word) arithmetic with a separate power-of-two
/// exponent, for long products whose plain rounding would breach tight
/// absolute-error contracts. Only the operations the binomial anchor
/// needs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Compensated<F: Scalar> {
    hi: F,
    lo: F,
    exp2: i32,
}

fn splitter<F: Scalar>() -> F {
    // Dekker split constant 2^ceil(t/2) + 1 for t mantissa bits
    let bits = -F::epsilon().log2();
    let half = (to_f64_bits(bits) / 2.0).ceil();
    cast::<F>(2.0).powi(half as i32) + F::one()
}

fn to_f64_bits<F: Scalar>(x: F) -> f64 {
    crate::scalar::to_f64(x)
}

fn two_sum<F: Scalar>(a: F, b: F) -> (F, F) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod<F: Scalar>(a: F, b: F) -> (F, F) {
    let p = a * b;
    let sp = splitter::<F>();
    let a_big = sp * a;
    let a_hi = a_big - (a_big - a);
    let a_lo = a - a_hi;
    let b_big = sp * b;
    let b_hi = b_big - (b_big - b);
    let b_lo = b - b_hi;
    let err = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo;
    (p, err)
}

impl<F: Scalar> Compensated<F> {
    pub(crate) fn one() -> Self {
        Self {
            hi: F::one(),
            lo: F::zero(),
            exp2: 0,
        }
    }

    pub(crate) fn mul_scalar(mut self, b: F) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = two_sum(p, self.lo * b + e);
        self.hi = hi;
        self.lo = lo;
        self.rescale()
    }

    pub(crate) fn div_scalar(mut self, b: F) -> Self {
        let q1 = self.hi / b;
        let (p, e) = two_prod(q1, b);
        let q2 = ((self.hi - p) - e + self.lo) / b;
        let (hi, lo) = two_sum(q1, q2);
        self.hi = hi;
        self.lo = lo;
        self.rescale()
    }

    fn rescale(mut self) -> Self {
        // keep hi in a comfortable binade so split/products cannot overflow
        let big = cast::<F>(2.0).powi(200);
        let small = big.recip();
        while self.hi.abs() > big {
            self.hi = self.hi * small;
            self.lo = self.lo * small;
            self.exp2 += 200;
        }
        while self.hi != F::zero() && self.hi.abs() < small {
            self.hi = self.hi * big;
            self.lo = self.lo * big;
            self.exp2 -= 200;
        }
        self
    }

    pub(crate) fn to_scalar(self) -> F {
        (self.hi + self.lo) * cast::<F>(2.0).powi(self.exp2)
    }
}

/// `C(n,k)·p^k·(1−p)^{n−k}` with compensated products: the relative error
/// stays near machine epsilon instead of growing with `n`.
pub(crate) fn binomial_pmf_exactish<F: Scalar>(n: usize, k: usize, p: F) -> F {
    let q = F::one() - p;
    let mut acc = Compensated::one();
    for i in 1..=k {
        acc = acc
            .mul_scalar(cast((n - k + i) as f64))
            .div_scalar(cast(i as f64))
            .mul_scalar(p);
    }
    for _ in 0..(n - k) {
        acc = acc.mul_scalar(q);
    }
    acc.to_scalar()
}
