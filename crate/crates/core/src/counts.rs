//! Exact distributions on truncated grids of `ℕ₀^k`: Poisson products,
//! binomial thinning, convolution powers, Bernoulli sums, and the
//! thin-convolve experiments built from them.
//!
//! Everything here is exact enumeration on a finite grid. The mass beyond
//! the grid is tracked explicitly in `tail_mass`, so every "exact" claim is
//! auditable: operations that promise exactness require the tail to sit
//! below [`EXACT_TAIL_CEILING`].

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::divergence::{kl_extended, ExtendedReal};
use crate::measure::Measure;
use crate::scalar::{cast, ksum, to_f64, KahanSum, Scalar};
use crate::special::ln_gamma;
use crate::{Error, Result};

/// Ceiling on `tail_mass` for operations that claim exact results.
pub const EXACT_TAIL_CEILING: f64 = 1e-12;
/// Per-dimension upper-tail target used when truncation bounds are chosen
/// automatically.
pub const PER_DIM_TAIL: f64 = 1e-14;
/// Hard cap on grid cells.
pub const GRID_CELL_LIMIT: usize = 10_000_000;

const MASS_BALANCE_TOL: f64 = 1e-12;

// 1e-12 at f64; wider scalar types keep their own epsilon-scaled slack
fn mass_tol<F: Scalar>() -> F {
    cast::<F>(MASS_BALANCE_TOL).max(F::epsilon() * cast(64.0))
}

/// A probability distribution on the grid `∏ [0 ..= cutoffᵢ] ⊂ ℕ₀^k`, with
/// the untracked probability beyond the grid in `tail_mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution<F: Scalar> {
    cutoffs: Vec<usize>,
    probs: Vec<F>, // row-major, last dimension fastest
    tail_mass: F,
}

#[derive(Serialize, Deserialize)]
struct CountRepr<F> {
    dims: usize,
    cutoffs: Vec<usize>,
    probs: Vec<F>,
    tail_mass: F,
}

fn grid_len(cutoffs: &[usize]) -> Result<usize> {
    let mut cells: usize = 1;
    for &c in cutoffs {
        cells = cells
            .checked_mul(c + 1)
            .filter(|&n| n <= GRID_CELL_LIMIT)
            .ok_or(Error::GridTooLarge {
                cells: usize::MAX,
                limit: GRID_CELL_LIMIT,
            })?;
    }
    Ok(cells)
}

fn strides(cutoffs: &[usize]) -> Vec<usize> {
    let k = cutoffs.len();
    let mut st = vec![1usize; k];
    for d in (0..k.saturating_sub(1)).rev() {
        st[d] = st[d + 1] * (cutoffs[d + 1] + 1);
    }
    st
}

/// Row-major walk over a grid; the flat index runs sequentially while the
/// coordinate odometer tracks it (last dimension fastest).
fn each_cell(cutoffs: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let k = cutoffs.len();
    let mut coords = vec![0usize; k];
    let total: usize = cutoffs.iter().map(|&c| c + 1).product();
    for idx in 0..total {
        f(idx, &coords);
        for d in (0..k).rev() {
            if coords[d] < cutoffs[d] {
                coords[d] += 1;
                break;
            }
            coords[d] = 0;
        }
    }
}

impl<F: Scalar> CountDistribution<F> {
    pub fn new(cutoffs: Vec<usize>, probs: Vec<F>, tail_mass: F) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::EmptySupport);
        }
        let cells = grid_len(&cutoffs)?;
        if probs.len() != cells {
            return Err(Error::SupportMismatch(probs.len(), cells));
        }
        if !(tail_mass >= F::zero()) || !tail_mass.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tail mass {} invalid",
                to_f64(tail_mass)
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFiniteWeight(i));
            }
            if p < F::zero() {
                return Err(Error::NegativeWeight {
                    index: i,
                    value: to_f64(p),
                });
            }
        }
        let total = ksum(probs.iter().copied()) + tail_mass;
        if (total - F::one()).abs() > mass_tol::<F>() {
            return Err(Error::NotProbability(to_f64(total)));
        }
        Ok(Self {
            cutoffs,
            probs,
            tail_mass,
        })
    }

    /// Point mass at the origin of the given grid shape.
    pub fn point_mass_at_origin(cutoffs: Vec<usize>) -> Result<Self> {
        let cells = grid_len(&cutoffs)?;
        let mut probs = vec![F::zero(); cells];
        probs[0] = F::one();
        Self::new(cutoffs, probs, F::zero())
    }

    pub fn dims(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn tail_mass(&self) -> F {
        self.tail_mass
    }

    pub fn prob_at(&self, coords: &[usize]) -> Result<F> {
        if coords.len() != self.dims() {
            return Err(Error::SupportMismatch(coords.len(), self.dims()));
        }
        let st = strides(&self.cutoffs);
        let mut idx = 0usize;
        for d in 0..coords.len() {
            if coords[d] > self.cutoffs[d] {
                return Err(Error::IndexOutOfRange {
                    index: coords[d],
                    len: self.cutoffs[d] + 1,
                });
            }
            idx += coords[d] * st[d];
        }
        Ok(self.probs[idx])
    }

    /// Errors unless the tail is small enough for exact-mode claims.
    pub fn assert_exact(&self) -> Result<()> {
        if self.tail_mass > cast(EXACT_TAIL_CEILING) {
            return Err(Error::InvalidParameter(format!(
                "tail mass {:e} above the exact-mode ceiling {EXACT_TAIL_CEILING:e}",
                to_f64(self.tail_mass)
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<F> {
        let k = self.dims();
        let mut acc: Vec<KahanSum<F>> = vec![KahanSum::new(); k];
        each_cell(&self.cutoffs, |idx, coords| {
            let p = self.probs[idx];
            if p != F::zero() {
                for d in 0..k {
                    acc[d].add(p * cast(coords[d] as f64));
                }
            }
        });
        acc.into_iter().map(|a| a.value()).collect()
    }

    /// Entropy in nats over the grid, with `0·ln 0 ≡ 0`.
    pub fn entropy(&self) -> F {
        let mut acc = KahanSum::new();
        for &p in &self.probs {
            if p > F::zero() {
                acc.add(-(p * p.ln()));
            }
        }
        acc.value()
    }

    /// Re-truncates so each dimension's upper tail is at most
    /// `per_dim_tail`; the dropped mass joins `tail_mass`.
    pub fn trim(&self, per_dim_tail: f64) -> Self {
        let k = self.dims();
        let mut marginals: Vec<Vec<F>> = self
            .cutoffs
            .iter()
            .map(|&c| vec![F::zero(); c + 1])
            .collect();
        each_cell(&self.cutoffs, |idx, coords| {
            let p = self.probs[idx];
            if p != F::zero() {
                for d in 0..k {
                    marginals[d][coords[d]] = marginals[d][coords[d]] + p;
                }
            }
        });
        let bound = cast::<F>(per_dim_tail);
        let mut new_cutoffs = vec![0usize; k];
        for d in 0..k {
            let mut tail = F::zero();
            let mut cut = self.cutoffs[d];
            for v in (0..=self.cutoffs[d]).rev() {
                if tail + marginals[d][v] > bound {
                    cut = v;
                    break;
                }
                tail = tail + marginals[d][v];
                if v == 0 {
                    cut = 0;
                }
            }
            new_cutoffs[d] = cut;
        }
        if new_cutoffs == self.cutoffs {
            return self.clone();
        }
        let new_st = strides(&new_cutoffs);
        let mut probs = vec![F::zero(); grid_len(&new_cutoffs).expect("shrinking grid")];
        each_cell(&self.cutoffs, |idx, coords| {
            let p = self.probs[idx];
            if p == F::zero() {
                return;
            }
            if coords.iter().zip(&new_cutoffs).all(|(&c, &m)| c <= m) {
                let mut j = 0usize;
                for d in 0..k {
                    j += coords[d] * new_st[d];
                }
                probs[j] = probs[j] + p;
            }
        });
        let tail = (F::one() - ksum(probs.iter().copied())).max(F::zero());
        Self {
            cutoffs: new_cutoffs,
            probs,
            tail_mass: tail,
        }
    }

    /// Embeds into a larger grid (zero padding); errors if any cutoff would
    /// shrink.
    fn expand_to(&self, cutoffs: &[usize]) -> Result<Self> {
        if cutoffs.len() != self.dims() {
            return Err(Error::SupportMismatch(cutoffs.len(), self.dims()));
        }
        if cutoffs
            .iter()
            .zip(&self.cutoffs)
            .any(|(&new, &old)| new < old)
        {
            return Err(Error::InvalidParameter(
                "expand_to cannot shrink a grid".into(),
            ));
        }
        if cutoffs == self.cutoffs.as_slice() {
            return Ok(self.clone());
        }
        let cells = grid_len(cutoffs)?;
        let st = strides(cutoffs);
        let mut probs = vec![F::zero(); cells];
        let k = self.dims();
        each_cell(&self.cutoffs, |idx, coords| {
            let p = self.probs[idx];
            if p != F::zero() {
                let mut j = 0usize;
                for d in 0..k {
                    j += coords[d] * st[d];
                }
                probs[j] = p;
            }
        });
        Ok(Self {
            cutoffs: cutoffs.to_vec(),
            probs,
            tail_mass: self.tail_mass,
        })
    }

    /// Binomial `α`-thinning: every counted observation is kept
    /// independently with probability `α`, coordinate by coordinate:
    /// `(T_α P)(j⃗) = Σ_{m⃗ ≥ j⃗} P(m⃗) · ∏ᵢ C(mᵢ, jᵢ) α^{jᵢ} (1−α)^{mᵢ−jᵢ}`.
    pub fn thin(&self, alpha: F) -> Result<Self> {
        if !(alpha >= F::zero() && alpha <= F::one()) {
            return Err(Error::AlphaOutOfRange(to_f64(alpha)));
        }
        if alpha == F::one() {
            return Ok(self.clone());
        }
        if alpha == F::zero() {
            // every observation deleted: all mass (tail included) at origin
            let mut probs = vec![F::zero(); self.probs.len()];
            probs[0] = F::one();
            return Ok(Self {
                cutoffs: self.cutoffs.clone(),
                probs,
                tail_mass: F::zero(),
            });
        }
        let mut probs = self.probs.clone();
        for axis in 0..self.dims() {
            let size = self.cutoffs[axis] + 1;
            let kernel = binomial_kernel(size, alpha);
            apply_axis_kernel(&mut probs, &self.cutoffs, axis, &kernel);
        }
        Ok(Self {
            cutoffs: self.cutoffs.clone(),
            probs,
            tail_mass: self.tail_mass,
        })
    }

    /// Distribution of the sum of independent draws from `self` and `other`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::SupportMismatch(self.dims(), other.dims()));
        }
        let out_cutoffs: Vec<usize> = self
            .cutoffs
            .iter()
            .zip(&other.cutoffs)
            .map(|(&a, &b)| a + b)
            .collect();
        let cells = grid_len(&out_cutoffs)?;
        let out_st = strides(&out_cutoffs);
        let offsets = |cd: &Self| {
            let mut list = Vec::new();
            let k = cd.dims();
            each_cell(&cd.cutoffs, |idx, coords| {
                let p = cd.probs[idx];
                if p != F::zero() {
                    let mut o = 0usize;
                    for d in 0..k {
                        o += coords[d] * out_st[d];
                    }
                    list.push((o, p));
                }
            });
            list
        };
        let a = offsets(self);
        let b = offsets(other);
        let mut probs = vec![F::zero(); cells];
        for &(oa, pa) in &a {
            for &(ob, pb) in &b {
                probs[oa + ob] = probs[oa + ob] + pa * pb;
            }
        }
        let tail = (F::one() - ksum(probs.iter().copied())).max(F::zero());
        Ok(Self {
            cutoffs: out_cutoffs,
            probs,
            tail_mass: tail,
        })
    }

    /// `n`-fold convolution power by repeated squaring: `O(log n)`
    /// convolutions.
    pub fn convolve_power(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "convolution power requires n >= 1".into(),
            ));
        }
        let mut result: Option<Self> = None;
        let mut base = self.clone();
        let mut rem = n;
        loop {
            if rem & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(acc) => acc.convolve(&base)?,
                });
            }
            rem >>= 1;
            if rem == 0 {
                break;
            }
            base = base.convolve(&base)?;
        }
        Ok(result.expect("n >= 1"))
    }
}

impl<F: Scalar + Serialize> Serialize for CountDistribution<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CountRepr {
            dims: self.dims(),
            cutoffs: self.cutoffs.clone(),
            probs: self.probs.clone(),
            tail_mass: self.tail_mass,
        }
        .serialize(serializer)
    }
}

impl<'de, F: Scalar + Deserialize<'de>> Deserialize<'de> for CountDistribution<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = CountRepr::<F>::deserialize(deserializer)?;
        if repr.dims != repr.cutoffs.len() {
            return Err(D::Error::custom(format!(
                "dims field {} does not match {} cutoffs",
                repr.dims,
                repr.cutoffs.len()
            )));
        }
        CountDistribution::new(repr.cutoffs, repr.probs, repr.tail_mass).map_err(D::Error::custom)
    }
}

/// `K[m][j] = C(m,j) αʲ (1−α)^{m−j}` for `j ≤ m < size`.
fn binomial_kernel<F: Scalar>(size: usize, alpha: F) -> Vec<Vec<F>> {
    (0..size).map(|m| binomial_row(m, alpha)).collect()
}

/// One binomial pmf row `C(m,·) α^· (1−α)^{m−·}`, anchored at its mode in
/// log space and recurred outward so large `m` cannot underflow the whole
/// row through a tiny starting term.
fn binomial_row<F: Scalar>(m: usize, alpha: F) -> Vec<F> {
    let mut row = vec![F::zero(); m + 1];
    if alpha == F::zero() {
        row[0] = F::one();
        return row;
    }
    if alpha == F::one() {
        row[m] = F::one();
        return row;
    }
    if m == 0 {
        row[0] = F::one();
        return row;
    }
    let mf = cast::<F>(m as f64);
    let j_star = ((m as f64) * to_f64(alpha)).round().clamp(0.0, m as f64) as usize;
    let jf = cast::<F>(j_star as f64);
    let ln_anchor = ln_gamma(mf + F::one())
        - ln_gamma(jf + F::one())
        - ln_gamma(mf - jf + F::one())
        + jf * alpha.ln()
        + (mf - jf) * (F::one() - alpha).ln();
    row[j_star] = ln_anchor.exp();
    let ratio = alpha / (F::one() - alpha);
    for j in j_star..m {
        let jf = cast::<F>(j as f64);
        row[j + 1] = row[j] * (mf - jf) / (jf + F::one()) * ratio;
    }
    for j in (1..=j_star).rev() {
        let jf = cast::<F>(j as f64);
        row[j - 1] = row[j] * jf / (mf - jf + F::one()) / ratio;
    }
    row
}

/// Applies a lower-triangular kernel along one axis:
/// `out[j] = Σ_{m ≥ j} in[m]·K[m][j]` on every line parallel to the axis.
fn apply_axis_kernel<F: Scalar>(
    probs: &mut [F],
    cutoffs: &[usize],
    axis: usize,
    kernel: &[Vec<F>],
) {
    let st = strides(cutoffs);
    let size = cutoffs[axis] + 1;
    let stride = st[axis];
    let block = size * stride;
    let outer = probs.len() / block;
    let mut line = vec![F::zero(); size];
    for o in 0..outer {
        for i in 0..stride {
            let base = o * block + i;
            for (m, slot) in line.iter_mut().enumerate() {
                *slot = probs[base + m * stride];
            }
            for j in 0..size {
                let mut acc = F::zero();
                for m in j..size {
                    let p = line[m];
                    if p != F::zero() {
                        acc = acc + p * kernel[m][j];
                    }
                }
                probs[base + j * stride] = acc;
            }
        }
    }
}

/// Poisson pmf via the stable recurrence `p[i] = p[i−1]·λ/i`, truncated at
/// the smallest cutoff whose upper tail is at most [`PER_DIM_TAIL`].
pub fn poisson_pmf<F: Scalar>(lambda: F) -> Result<CountDistribution<F>> {
    poisson_pmf_impl(lambda, None)
}

/// Poisson pmf truncated at an explicit cutoff (any tail mass).
pub fn poisson_pmf_truncated<F: Scalar>(lambda: F, cutoff: usize) -> Result<CountDistribution<F>> {
    poisson_pmf_impl(lambda, Some(cutoff))
}

fn poisson_pmf_impl<F: Scalar>(lambda: F, cutoff: Option<usize>) -> Result<CountDistribution<F>> {
    if !(lambda >= F::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Poisson intensity {} must be non-negative",
            to_f64(lambda)
        )));
    }
    if lambda > cast(700.0) {
        return Err(Error::InvalidParameter(
            "Poisson intensity above 700 underflows the pmf recurrence".into(),
        ));
    }
    if lambda == F::zero() {
        let c = cutoff.unwrap_or(0);
        let mut probs = vec![F::zero(); c + 1];
        probs[0] = F::one();
        return CountDistribution::new(vec![c], probs, F::zero());
    }
    let mut probs = Vec::new();
    let mut p = (-lambda).exp();
    let mut cum = KahanSum::new();
    let target = F::one() - cast(PER_DIM_TAIL);
    let mut i = 0usize;
    loop {
        probs.push(p);
        cum.add(p);
        let done = match cutoff {
            Some(c) => i >= c,
            None => cum.value() >= target && cast::<F>(i as f64) >= lambda,
        };
        if done {
            break;
        }
        i += 1;
        if i > GRID_CELL_LIMIT {
            return Err(Error::GridTooLarge {
                cells: i,
                limit: GRID_CELL_LIMIT,
            });
        }
        p = p * lambda / cast(i as f64);
    }
    let tail = (F::one() - cum.value()).max(F::zero());
    CountDistribution::new(vec![probs.len() - 1], probs, tail)
}

/// Binomial pmf `bin(n, p)` on its full support (zero tail).
pub fn binomial_pmf<F: Scalar>(n: usize, p: F) -> Result<CountDistribution<F>> {
    if !(p >= F::zero() && p <= F::one()) {
        return Err(Error::InvalidParameter(format!(
            "binomial success probability {} outside [0,1]",
            to_f64(p)
        )));
    }
    if n > 10_000 {
        return Err(Error::GridTooLarge {
            cells: n,
            limit: 10_000,
        });
    }
    CountDistribution::new(vec![n], binomial_row(n, p), F::zero())
}

/// `Po(λ⃗) = ⊗ᵢ Po(λᵢ)`: the product measure of coordinate Poissons.
pub fn product_poisson<F: Scalar>(
    lambda: &Measure<F>,
    cutoffs: Option<&[usize]>,
) -> Result<CountDistribution<F>> {
    let k = lambda.len();
    if let Some(cs) = cutoffs {
        if cs.len() != k {
            return Err(Error::SupportMismatch(cs.len(), k));
        }
    }
    let mut marginals = Vec::with_capacity(k);
    for d in 0..k {
        let l = lambda.weights()[d];
        let pmf = match cutoffs {
            Some(cs) => poisson_pmf_truncated(l, cs[d])?,
            None => poisson_pmf(l)?,
        };
        marginals.push(pmf);
    }
    let out_cutoffs: Vec<usize> = marginals.iter().map(|m| m.cutoffs()[0]).collect();
    grid_len(&out_cutoffs)?;
    // outer product, each new dimension innermost (row-major, last fastest)
    let mut probs = vec![F::one()];
    for m in &marginals {
        let mp = m.probs();
        let mut next = Vec::with_capacity(probs.len() * mp.len());
        for &a in &probs {
            for &b in mp {
                next.push(a * b);
            }
        }
        probs = next;
    }
    let tail = (F::one() - ksum(probs.iter().copied())).max(F::zero());
    CountDistribution::new(out_cutoffs, probs, tail)
}

/// Total variation distance `½ Σ |p − q|`; both tails are counted in full,
/// making the result an upper bracket when tails are nonzero.
pub fn total_variation<F: Scalar>(
    p: &CountDistribution<F>,
    q: &CountDistribution<F>,
) -> Result<F> {
    if p.dims() != q.dims() {
        return Err(Error::SupportMismatch(p.dims(), q.dims()));
    }
    let union: Vec<usize> = p
        .cutoffs()
        .iter()
        .zip(q.cutoffs())
        .map(|(&a, &b)| a.max(b))
        .collect();
    let pe = p.expand_to(&union)?;
    let qe = q.expand_to(&union)?;
    let mut acc = KahanSum::new();
    for (&a, &b) in pe.probs.iter().zip(&qe.probs) {
        acc.add((a - b).abs());
    }
    acc.add(p.tail_mass);
    acc.add(q.tail_mass);
    Ok(acc.value() / cast(2.0))
}

/// Extended divergence between two grid distributions, with the per-atom
/// boundary conventions of [`kl_extended`]. Off-grid mass enters through
/// the linear terms (`+ tail_q − tail_p`); with tails at the exact-mode
/// ceiling the residual error stays below `~1e−12` up to a log factor.
pub fn kl_counts<F: Scalar>(
    p: &CountDistribution<F>,
    q: &CountDistribution<F>,
) -> Result<ExtendedReal<F>> {
    if p.dims() != q.dims() {
        return Err(Error::SupportMismatch(p.dims(), q.dims()));
    }
    let union: Vec<usize> = p
        .cutoffs()
        .iter()
        .zip(q.cutoffs())
        .map(|(&a, &b)| a.max(b))
        .collect();
    let pe = p.expand_to(&union)?;
    let qe = q.expand_to(&union)?;
    let mut acc = KahanSum::new();
    for (&a, &b) in pe.probs.iter().zip(&qe.probs) {
        if a == F::zero() {
            acc.add(b);
        } else if b == F::zero() {
            return Ok(ExtendedReal::PlusInfinity);
        } else {
            acc.add(a * (a / b).ln() - a + b);
        }
    }
    acc.add(q.tail_mass);
    acc.add(-p.tail_mass);
    Ok(ExtendedReal::Finite(acc.value()))
}

const PROBABILITY_TOL: f64 = 1e-12;

fn probability_tol<F: Scalar>() -> F {
    cast::<F>(PROBABILITY_TOL).max(F::epsilon() * cast(16.0))
}

/// The distribution of a single Bernoulli random vector given by its mean
/// vector: mass `wᵢ` on the base vector `eᵢ`, remaining mass on the origin.
pub fn bernoulli_vector_distribution<F: Scalar>(m: &Measure<F>) -> Result<CountDistribution<F>> {
    let k = m.len();
    let mass = m.total_mass();
    if mass > F::one() + probability_tol::<F>() {
        return Err(Error::NotProbability(to_f64(mass)));
    }
    let cutoffs = vec![1usize; k];
    let cells = grid_len(&cutoffs)?;
    let st = strides(&cutoffs);
    let mut probs = vec![F::zero(); cells];
    for (i, &w) in m.weights().iter().enumerate() {
        probs[st[i]] = w;
    }
    probs[0] = (F::one() - mass).max(F::zero());
    CountDistribution::new(cutoffs, probs, F::zero())
}

/// Exact distribution of a Bernoulli sum: the convolution of the
/// base-vector distributions given by the summand mean vectors. A summand
/// with total mass below one keeps the deficit on the origin (a count
/// that may also record nothing); mass above one is rejected.
pub fn bernoulli_sum<F: Scalar>(summands: &[Measure<F>]) -> Result<CountDistribution<F>> {
    if summands.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut acc: Option<CountDistribution<F>> = None;
    for m in summands {
        let dist = bernoulli_vector_distribution(m)?;
        acc = Some(match acc {
            None => dist,
            Some(prev) => prev.convolve(&dist)?,
        });
    }
    Ok(acc.expect("non-empty summand list"))
}

/// One row of the thin-convolve experiment.
#[derive(Debug, Clone)]
pub struct ThinLawRow<F: Scalar> {
    pub n: usize,
    /// `D(T_{1/n}(P^{*n}) ‖ Po(λ⃗))`
    pub divergence: F,
    /// total variation against `Po(λ⃗)`
    pub tv: F,
    /// entropy of the thinned convolution power
    pub entropy: F,
    /// max deviation of the row's mean vector from `λ⃗`
    pub mean_error: F,
}

#[derive(Debug, Clone)]
pub struct ThinLawReport<F: Scalar> {
    pub rows: Vec<ThinLawRow<F>>,
    /// entropy of the limiting product Poisson
    pub h_poisson: F,
    pub max_mean_error: F,
    /// every row's mean matched `λ⃗` within `1e−8`
    pub mean_preserved: bool,
}

const THIN_LAW_MEAN_PRE: f64 = 1e-9;
const THIN_LAW_MEAN_POST: f64 = 1e-8;

/// Runs the thin-convolve experiment: for each `n` computes divergence,
/// total variation and entropy of `T_{1/n}(P^{*n})` against `Po(λ⃗)`, and
/// verifies every iterate keeps mean `λ⃗`.
pub fn thin_law_experiment<F: Scalar>(
    p: &CountDistribution<F>,
    lambda: &Measure<F>,
    n_list: &[usize],
) -> Result<ThinLawReport<F>> {
    if p.dims() != lambda.len() {
        return Err(Error::SupportMismatch(p.dims(), lambda.len()));
    }
    p.assert_exact()?;
    let mean = p.mean();
    let pre_dev = mean
        .iter()
        .zip(lambda.weights())
        .map(|(&a, &b)| (a - b).abs())
        .fold(F::zero(), F::max);
    if pre_dev > cast(THIN_LAW_MEAN_PRE) {
        return Err(Error::MeanMismatch(to_f64(pre_dev)));
    }
    let h_poisson = product_poisson(lambda, None)?.entropy();
    let mut rows = Vec::with_capacity(n_list.len());
    let mut max_mean_error = F::zero();
    for &n in n_list {
        let alpha = F::one() / cast(n as f64);
        let thinned = p.convolve_power(n)?.thin(alpha)?.trim(PER_DIM_TAIL);
        let reference = product_poisson(lambda, Some(thinned.cutoffs()))?;
        let divergence = match kl_counts(&thinned, &reference)? {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PlusInfinity => {
                return Err(Error::InvalidParameter(format!(
                    "divergence infinite at n = {n}: thinned support escapes the Poisson reference"
                )))
            }
        };
        let tv = total_variation(&thinned, &reference)?;
        let entropy = thinned.entropy();
        let mean_error = thinned
            .mean()
            .iter()
            .zip(lambda.weights())
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max);
        max_mean_error = max_mean_error.max(mean_error);
        rows.push(ThinLawRow {
            n,
            divergence,
            tv,
            entropy,
            mean_error,
        });
    }
    Ok(ThinLawReport {
        rows,
        h_poisson,
        max_mean_error,
        mean_preserved: max_mean_error <= cast(THIN_LAW_MEAN_POST),
    })
}

#[derive(Debug, Clone)]
pub struct MaxentEntry<F: Scalar> {
    pub entropy: F,
    /// `H(Po(λ⃗)) − H(config)`; non-negative when the Poisson bound holds
    pub margin: F,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct MaxentReport<F: Scalar> {
    pub h_poisson: F,
    pub entries: Vec<MaxentEntry<F>>,
    pub all_ok: bool,
}

const MAXENT_SLACK: f64 = 1e-10;

/// Checks `H(config) ≤ H(Po(λ⃗))` for every Bernoulli-sum configuration
/// with mean `λ⃗`; reports the margins.
pub fn maxent_check<F: Scalar>(
    lambda: &Measure<F>,
    family: &[Vec<Measure<F>>],
) -> Result<MaxentReport<F>> {
    let h_poisson = product_poisson(lambda, None)?.entropy();
    let mut entries = Vec::with_capacity(family.len());
    let mut all_ok = true;
    for config in family {
        let dist = bernoulli_sum(config)?;
        let dev = dist
            .mean()
            .iter()
            .zip(lambda.weights())
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max);
        if dev > cast(THIN_LAW_MEAN_PRE) {
            return Err(Error::MeanMismatch(to_f64(dev)));
        }
        let entropy = dist.entropy();
        let margin = h_poisson - entropy;
        let ok = margin >= -cast::<F>(MAXENT_SLACK);
        all_ok &= ok;
        entries.push(MaxentEntry {
            entropy,
            margin,
            ok,
        });
    }
    Ok(MaxentReport {
        h_poisson,
        entries,
        all_ok,
    })
}

#[derive(Debug, Clone)]
pub struct ThinIdentityRow<F: Scalar> {
    pub n: usize,
    pub divergence: ExtendedReal<F>,
    /// `|D(T_{1/n}(P^{*n}) ‖ T_{1/n}(Q^{*n})) − D(P‖Q)|`
    pub deviation: F,
}

#[derive(Debug, Clone)]
pub struct ThinIdentityReport<F: Scalar> {
    pub d_base: ExtendedReal<F>,
    /// `D(λ⃗‖μ⃗)` computed from the mean vectors by the extended formula
    pub d_means: ExtendedReal<F>,
    pub mean_deviation: F,
    pub rows: Vec<ThinIdentityRow<F>>,
    pub all_within: bool,
}

const THIN_IDENTITY_TOL: f64 = 1e-8;

/// Verifies the divergence-preservation chain for Bernoulli-vector
/// distributions: thinning the `n`-fold convolution changes nothing, and
/// both agree with the extended divergence of the mean vectors.
pub fn thin_divergence_identity<F: Scalar>(
    p: &Measure<F>,
    q: &Measure<F>,
    n_list: &[usize],
) -> Result<ThinIdentityReport<F>> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    let pd = bernoulli_vector_distribution(p)?;
    let qd = bernoulli_vector_distribution(q)?;
    let d_base = kl_counts(&pd, &qd)?;
    let d_means = kl_extended(p, q)?;
    let tol = cast::<F>(THIN_IDENTITY_TOL);
    let mean_deviation = d_base.abs_diff(&d_means).finite().unwrap_or(F::infinity());
    let mut all_within = mean_deviation <= tol;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let alpha = F::one() / cast(n as f64);
        let pn = pd.convolve_power(n)?.thin(alpha)?;
        let qn = qd.convolve_power(n)?.thin(alpha)?;
        let divergence = kl_counts(&pn, &qn)?;
        let deviation = divergence.abs_diff(&d_base).finite().unwrap_or(F::infinity());
        all_within &= deviation <= tol;
        rows.push(ThinIdentityRow {
            n,
            divergence,
            deviation,
        });
    }
    Ok(ThinIdentityReport {
        d_base,
        d_means,
        mean_deviation,
        rows,
        all_within,
    })
}
