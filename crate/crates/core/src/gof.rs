//! Exact goodness-of-fit machinery for the symmetric two-category test:
//! the signed log-likelihood statistic, exact binomial tails, the
//! intersection property, and the exact distribution of the `G²` statistic
//! under fixed-`n` (classical) versus Poissonized sampling.
//!
//! In the classical analysis `n` is fixed and `X ~ bin(n, ½)` under the
//! null; the Poisson analysis treats both category counts as independent
//! Poisson variables, so `N = X + Y` is random and the `G²` staircase mixes
//! over `N`. The mixing makes the staircase hug the χ²₁ reference far more
//! closely — quantified here by [`QQTable::uniformity_gap`].

use crate::counts::poisson_pmf_truncated;
use crate::divergence::kl_extended;
use crate::measure::Measure;
use crate::scalar::{cast, to_f64, KahanSum, Scalar};
use crate::special::{binomial_pmf_exactish, chi2_cdf_1, normal_cdf};
use crate::{Error, Result};

const BRACKET_SLACK: f64 = 1e-12;
const MAX_TRIALS: usize = 10_000;
const POISSON_QQ_TAIL: f64 = 1e-12;

/// The signed log-likelihood statistic for an observation `x` out of `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofStatistic<F: Scalar> {
    pub n: usize,
    pub x: usize,
    /// signed root: `±√(2·divergence)`, negative iff `x < n/2`
    pub g: F,
    /// the `G²` statistic, `2·divergence`
    pub g2: F,
    /// `D(bin(n, x/n) ‖ bin(n, ½))` in nats
    pub divergence: F,
}

fn check_range(n: usize, x: usize) -> Result<()> {
    if n == 0 || n > MAX_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "trial count {n} outside 1..={MAX_TRIALS}"
        )));
    }
    if x > n {
        return Err(Error::IndexOutOfRange { index: x, len: n + 1 });
    }
    Ok(())
}

/// `D(bin(n, x/n) ‖ bin(n, ½)) = x·ln(2x/n) + (n−x)·ln(2(n−x)/n)` in nats,
/// with `0·ln 0 ≡ 0`; the boundaries give `n·ln 2`.
pub fn binom_divergence<F: Scalar>(n: usize, x: usize) -> Result<F> {
    check_range(n, x)?;
    let nf = cast::<F>(n as f64);
    let xf = cast::<F>(x as f64);
    let mf = cast::<F>((n - x) as f64);
    let two = cast::<F>(2.0);
    let mut d = F::zero();
    if x > 0 {
        d = d + xf * (two * xf / nf).ln();
    }
    if x < n {
        d = d + mf * (two * mf / nf).ln();
    }
    Ok(d)
}

/// Signed statistic `G_n(x) = ±√(2·D)`, taking the `+` branch at
/// `x = n/2` (ties included).
pub fn g_statistic<F: Scalar>(n: usize, x: usize) -> Result<GofStatistic<F>> {
    let divergence = binom_divergence::<F>(n, x)?;
    let g2 = cast::<F>(2.0) * divergence;
    let root = g2.sqrt();
    let g = if cast::<F>(2.0 * x as f64) >= cast(n as f64) {
        root
    } else {
        -root
    };
    Ok(GofStatistic {
        n,
        x,
        g,
        g2,
        divergence,
    })
}

/// Exact binomial cdf `Pr(X ≤ k)` for `X ~ bin(n, p)`: the pmf is anchored
/// at its mode in log space, recurred outward, and the partial sum is
/// compensated, keeping absolute error below `1e−13` up to `n = 10⁴`.
pub fn binom_cdf<F: Scalar>(n: usize, p: F, k: i64) -> Result<F> {
    if n == 0 || n > MAX_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "trial count {n} outside 1..={MAX_TRIALS}"
        )));
    }
    if !(p >= F::zero() && p <= F::one()) {
        return Err(Error::InvalidParameter(format!(
            "success probability {} outside [0,1]",
            to_f64(p)
        )));
    }
    if k < 0 {
        return Ok(F::zero());
    }
    if k as usize >= n {
        return Ok(F::one());
    }
    let k = k as usize;
    if p == F::zero() {
        return Ok(F::one());
    }
    if p == F::one() {
        return Ok(F::zero()); // k < n here
    }
    let pmf = binom_pmf_row(n, p);
    let mut acc = KahanSum::new();
    for &v in &pmf[..=k] {
        acc.add(v);
    }
    Ok(acc.value().min(F::one()))
}

fn binom_pmf_row<F: Scalar>(n: usize, p: F) -> Vec<F> {
    let nf = cast::<F>(n as f64);
    let mode = ((n as f64) * to_f64(p)).round().clamp(0.0, n as f64) as usize;
    let q = F::one() - p;
    let mut row = vec![F::zero(); n + 1];
    // the anchor's relative error is the common-mode error of the whole
    // row, so it is computed with compensated products rather than through
    // log-gamma differences (whose absolute error at n ~ 1e4 would cost
    // ~1e-11 of the 1e-13 budget)
    row[mode] = binomial_pmf_exactish(n, mode, p);
    let ratio = p / q;
    for j in mode..n {
        let jf = cast::<F>(j as f64);
        row[j + 1] = row[j] * (nf - jf) / (jf + F::one()) * ratio;
    }
    for j in (1..=mode).rev() {
        let jf = cast::<F>(j as f64);
        row[j - 1] = row[j] * jf / (nf - jf + F::one()) / ratio;
    }
    row
}

/// One row of the intersection report: the bracket
/// `Pr(X < k) ≤ Φ(G_n(k)) ≤ Pr(X ≤ k)` at a single `k`.
#[derive(Debug, Clone, Copy)]
pub struct IntersectionRow<F: Scalar> {
    pub k: usize,
    pub phi_g: F,
    pub cdf_strict: F,
    pub cdf: F,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct IntersectionReport<F: Scalar> {
    pub n: usize,
    pub rows: Vec<IntersectionRow<F>>,
    pub all_ok: bool,
}

/// Checks the bracket `Pr(X<k) ≤ Φ(G_n(k)) ≤ Pr(X≤k)` for every
/// `k ∈ {0..n}` under `X ~ bin(n, ½)`.
pub fn intersection_check<F: Scalar>(n: usize) -> Result<IntersectionReport<F>> {
    check_range(n, 0)?;
    let half = cast::<F>(0.5);
    let slack = cast::<F>(BRACKET_SLACK);
    let mut rows = Vec::with_capacity(n + 1);
    let mut all_ok = true;
    for k in 0..=n {
        let phi_g = normal_cdf(g_statistic::<F>(n, k)?.g);
        let cdf_strict = binom_cdf(n, half, k as i64 - 1)?;
        let cdf = binom_cdf(n, half, k as i64)?;
        let ok = cdf_strict - slack <= phi_g && phi_g <= cdf + slack;
        all_ok &= ok;
        rows.push(IntersectionRow {
            k,
            phi_g,
            cdf_strict,
            cdf,
            ok,
        });
    }
    Ok(IntersectionReport { n, rows, all_ok })
}

/// An atom of a `G²` staircase: its value, the cdf just below and at the
/// atom, and the χ²₁ reference cdf at the value.
#[derive(Debug, Clone, Copy)]
pub struct QQRow<F: Scalar> {
    pub g2: F,
    pub cdf_left: F,
    pub cdf_right: F,
    pub chi2_cdf: F,
}

/// The exact distribution of a `G²` statistic, sorted by value, against
/// the χ²₁ reference.
#[derive(Debug, Clone)]
pub struct QQTable<F: Scalar> {
    pub rows: Vec<QQRow<F>>,
}

impl<F: Scalar> QQTable<F> {
    /// Maximum deviation between the statistic's cdf staircase and the χ²₁
    /// reference: `max` over atoms of `max(|c − left|, |c − right|)`. This
    /// is the sup-distance between the two cdfs, so smaller means the
    /// staircase hugs the reference more tightly.
    pub fn uniformity_gap(&self) -> F {
        let mut gap = F::zero();
        for row in &self.rows {
            gap = gap
                .max((row.chi2_cdf - row.cdf_left).abs())
                .max((row.chi2_cdf - row.cdf_right).abs());
        }
        gap
    }

    /// Whether `cdf_left ≤ chi2_cdf ≤ cdf_right` holds on every atom.
    pub fn intersects_everywhere(&self) -> bool {
        let slack = cast::<F>(BRACKET_SLACK);
        self.rows
            .iter()
            .all(|r| r.cdf_left - slack <= r.chi2_cdf && r.chi2_cdf <= r.cdf_right + slack)
    }

    fn from_atoms(mut atoms: Vec<(F, F)>) -> Self {
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite g2 values"));
        // merge exactly-equal atom values (the zero atom in particular)
        let mut merged: Vec<(F, F)> = Vec::with_capacity(atoms.len());
        for (v, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 = last.1 + w,
                _ => merged.push((v, w)),
            }
        }
        let mut rows = Vec::with_capacity(merged.len());
        let mut cum = KahanSum::new();
        for (v, w) in merged {
            let cdf_left = cum.value();
            cum.add(w);
            rows.push(QQRow {
                g2: v,
                cdf_left,
                cdf_right: cum.value(),
                chi2_cdf: chi2_cdf_1(v),
            });
        }
        Self { rows }
    }
}

/// Exact distribution of `G²` under `bin(n, ½)`: atoms paired across the
/// symmetry `x ↔ n−x`, sorted by value, with per-atom cdf brackets and the
/// χ²₁ reference.
pub fn classical_qq<F: Scalar>(n: usize) -> Result<QQTable<F>> {
    check_range(n, 0)?;
    let pmf = binom_pmf_row(n, cast::<F>(0.5));
    let mut atoms = Vec::new();
    for x in 0..=n / 2 {
        let g2 = g_statistic::<F>(n, x)?.g2;
        let weight = if x == n - x {
            pmf[x]
        } else {
            pmf[x] + pmf[n - x]
        };
        atoms.push((g2, weight));
    }
    Ok(QQTable::from_atoms(atoms))
}

/// The smallest cutoff with `Pr(N > cutoff) ≤ 1e−12` for
/// `N ~ Po(total_intensity)`.
pub fn poisson_qq_cutoff<F: Scalar>(total_intensity: F) -> Result<usize> {
    if !(total_intensity > F::zero()) {
        return Err(Error::InvalidParameter(
            "total intensity must be positive".into(),
        ));
    }
    let mut p = (-total_intensity).exp();
    let mut cum = KahanSum::new();
    let target = F::one() - cast(POISSON_QQ_TAIL);
    let mut n = 0usize;
    loop {
        cum.add(p);
        if cum.value() >= target && cast::<F>(n as f64) >= total_intensity {
            return Ok(n);
        }
        n += 1;
        if n > MAX_TRIALS {
            return Err(Error::InvalidParameter(
                "intensity too large for the exact mixture".into(),
            ));
        }
        p = p * total_intensity / cast(n as f64);
    }
}

/// Exact distribution of `(G_N(X))²` when `N ~ Po(total_intensity)` and
/// `X | N = n ~ bin(n, ½)`: the per-`n` staircases mixed by the Poisson
/// weights. The `N = 0` atom carries `G² = 0` (no data, no evidence).
pub fn poisson_qq<F: Scalar>(total_intensity: F, n_cutoff: usize) -> Result<QQTable<F>> {
    if !(total_intensity > F::zero()) {
        return Err(Error::InvalidParameter(
            "total intensity must be positive".into(),
        ));
    }
    let weights = poisson_pmf_truncated(total_intensity, n_cutoff)?;
    let mut atoms: Vec<(F, F)> = vec![(F::zero(), weights.probs()[0])];
    for n in 1..=n_cutoff {
        let w = weights.probs()[n];
        let pmf = binom_pmf_row(n, cast::<F>(0.5));
        for x in 0..=n / 2 {
            let g2 = g_statistic::<F>(n, x)?.g2;
            let mass = if x == n - x {
                pmf[x]
            } else {
                pmf[x] + pmf[n - x]
            };
            atoms.push((g2, w * mass));
        }
    }
    Ok(QQTable::from_atoms(atoms))
}

/// `D(Po(ℓ)⊗Po(m) ‖ Po(n/2)⊗Po(n/2))` with `n = ℓ + m`, evaluated through
/// the extended divergence of the mean vectors. Algebraically equal to
/// [`binom_divergence`]`(ℓ+m, ℓ)` — the fixed-`n` and Poissonized analyses
/// price the same observation identically.
pub fn poisson_two_sample_divergence<F: Scalar>(l: usize, m: usize) -> Result<F> {
    if l == 0 && m == 0 {
        return Err(Error::InvalidParameter(
            "two-sample divergence needs at least one count".into(),
        ));
    }
    let half_n = cast::<F>((l + m) as f64) / cast(2.0);
    let observed = Measure::from_weights(vec![cast(l as f64), cast(m as f64)])?;
    let null = Measure::from_weights(vec![half_n, half_n])?;
    Ok(kl_extended(&observed, &null)?.expect_finite("two-sample divergence"))
}

/// Detection preset for a two-detector interference experiment: under the
/// blocked-path scenario both detectors see independent Poisson streams of
/// equal intensity, so the symmetry test of [`poisson_qq`] applies with
/// `total = 2·intensity`; unblocked, everything arrives at one detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachZehnderPreset<F: Scalar> {
    pub blocked: bool,
    pub detector1_intensity: F,
    pub detector2_intensity: F,
    pub total_intensity: F,
}

pub fn mach_zehnder_preset<F: Scalar>(blocked: bool, intensity: F) -> Result<MachZehnderPreset<F>> {
    if !(intensity > F::zero()) {
        return Err(Error::InvalidParameter(
            "detector intensity must be positive".into(),
        ));
    }
    let (d1, d2) = if blocked {
        (intensity, intensity)
    } else {
        (intensity + intensity, F::zero())
    };
    Ok(MachZehnderPreset {
        blocked,
        detector1_intensity: d1,
        detector2_intensity: d2,
        total_intensity: d1 + d2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn binom_divergence_examples() {
        assert_eq!(binom_divergence::<f64>(20, 10).unwrap(), 0.0);
        assert!((binom_divergence::<f64>(20, 20).unwrap() - 20.0 * LN2).abs() < 1e-12);
        assert!((binom_divergence::<f64>(20, 0).unwrap() - 20.0 * LN2).abs() < 1e-12);

        // cross-check against the full binomial-pmf divergence oracle:
        // D(bin(20, 0.75) ‖ bin(20, 0.5)) = Σ_k b(k) ln(b(k)/b0(k))
        let p = binom_pmf_row::<f64>(20, 0.75);
        let q = binom_pmf_row::<f64>(20, 0.5);
        let oracle: f64 = p
            .iter()
            .zip(&q)
            .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
            .sum();
        let d = binom_divergence::<f64>(20, 15).unwrap();
        assert!((d - oracle).abs() < 1e-12, "{d} vs oracle {oracle}");
        assert!((d - 2.616_24).abs() < 5e-6);
    }

    #[test]
    fn binom_divergence_range_errors() {
        assert!(binom_divergence::<f64>(20, 21).is_err());
        assert!(binom_divergence::<f64>(0, 0).is_err());
    }

    #[test]
    fn g_statistic_examples() {
        let s = g_statistic::<f64>(20, 10).unwrap();
        assert_eq!(s.g, 0.0);
        assert!(s.g.is_sign_positive());

        let s = g_statistic::<f64>(20, 15).unwrap();
        assert!((s.g - 2.287_46).abs() < 5e-6);
        assert!((s.g2 - 2.0 * s.divergence).abs() < 1e-12);

        let s = g_statistic::<f64>(20, 5).unwrap();
        assert!((s.g + 2.287_46).abs() < 5e-6);
    }

    #[test]
    fn g_statistic_antisymmetry() {
        for n in [7usize, 20, 31] {
            for x in 0..=n {
                if 2 * x == n {
                    continue;
                }
                let a = g_statistic::<f64>(n, x).unwrap().g;
                let b = g_statistic::<f64>(n, n - x).unwrap().g;
                assert!((a + b).abs() < 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn binom_cdf_examples() {
        assert_eq!(binom_cdf(20, 0.5f64, 20).unwrap(), 1.0);
        assert_eq!(binom_cdf(20, 0.5f64, -1).unwrap(), 0.0);

        // exact rational oracle: Σ_{i≤15} C(20,i) / 2^20
        let numerator: u64 = (0..=15).map(|i| binom_coeff_u64(20, i)).sum();
        let oracle = numerator as f64 / (1u64 << 20) as f64;
        let got = binom_cdf(20, 0.5f64, 15).unwrap();
        assert!((got - oracle).abs() < 1e-13, "{got} vs {oracle}");
        assert!((got - 0.994_091).abs() < 5e-7);
    }

    fn binom_coeff_u64(n: u64, k: u64) -> u64 {
        let mut acc = 1u64;
        for i in 0..k {
            acc = acc * (n - i) / (i + 1);
        }
        acc
    }

    #[test]
    fn binom_cdf_deep_tail_accuracy() {
        // exact rational tail for n = 50: Σ_{i≤5} C(50,i)/2^50
        let numerator: u128 = (0..=5).map(|i| binom_coeff_u128(50, i)).sum();
        let oracle = numerator as f64 / (1u128 << 50) as f64;
        let got = binom_cdf(50, 0.5f64, 5).unwrap();
        assert!((got - oracle).abs() < 1e-16, "{got} vs {oracle}");
    }

    fn binom_coeff_u128(n: u128, k: u128) -> u128 {
        let mut acc = 1u128;
        for i in 0..k {
            acc = acc * (n - i) / (i + 1);
        }
        acc
    }

    #[test]
    fn binom_cdf_survives_ten_thousand_trials() {
        // symmetry identity: Pr(X ≤ n/2) = (1 + pmf(n/2))/2 for even n,
        // with the midpoint pmf from exact big-integer arithmetic
        use num_bigint::BigUint;
        let n = 10_000usize;
        let mut c = BigUint::from(1u32);
        for i in 0..n / 2 {
            c = c * BigUint::from(n - i) / BigUint::from(i + 1);
        }
        // pmf = C(n, n/2) / 2^n through the top 110 bits and an exact
        // power-of-two scale
        let bits = c.bits();
        let shift = bits.saturating_sub(110);
        let top: BigUint = c >> shift;
        let top_f64 = top.to_string().parse::<f64>().unwrap();
        let pmf_mid = top_f64 * 2f64.powi(shift as i32 - n as i32);
        let oracle = 0.5 * (1.0 + pmf_mid);
        let got = binom_cdf(n, 0.5f64, (n / 2) as i64).unwrap();
        assert!((got - oracle).abs() < 1e-13, "{got} vs {oracle}");
        assert!(binom_cdf(10_001, 0.5f64, 0).is_err());
    }

    #[test]
    fn intersection_examples() {
        let report = intersection_check::<f64>(20).unwrap();
        assert!(report.all_ok);
        let row = &report.rows[15];
        assert!((row.cdf_strict - 0.979_305).abs() < 5e-7);
        assert!((row.phi_g - 0.988_917).abs() < 5e-6);
        assert!((row.cdf - 0.994_091).abs() < 5e-7);

        let report = intersection_check::<f64>(1).unwrap();
        assert!(report.all_ok);
        let row = &report.rows[0];
        assert_eq!(row.cdf_strict, 0.0);
        assert!((row.cdf - 0.5).abs() < 1e-15);
        assert!((row.phi_g - normal_cdf(-(2.0 * LN2).sqrt())).abs() < 1e-15);
        assert!((row.phi_g - 0.119).abs() < 1e-3);

        // symmetry pins Φ(0) = ½ inside the midpoint bracket
        let report = intersection_check::<f64>(20).unwrap();
        let mid = &report.rows[10];
        assert!(mid.cdf_strict < 0.5 && 0.5 < mid.cdf);
        assert_eq!(mid.phi_g, 0.5);
    }

    #[test]
    fn intersection_holds_up_to_thirty() {
        for n in 1..=30 {
            assert!(intersection_check::<f64>(n).unwrap().all_ok, "n = {n}");
        }
    }

    #[test]
    fn classical_qq_structure() {
        let t = classical_qq::<f64>(20).unwrap();
        // atoms strictly increasing
        for pair in t.rows.windows(2) {
            assert!(pair[0].g2 < pair[1].g2);
        }
        // zero atom: mass C(20,10)/2^20, χ² cdf 0
        let zero = &t.rows[0];
        assert_eq!(zero.g2, 0.0);
        assert_eq!(zero.chi2_cdf, 0.0);
        assert_eq!(zero.cdf_left, 0.0);
        assert!((zero.cdf_right - 0.176_197).abs() < 5e-7);
        assert!(t.intersects_everywhere());
        // total mass 1
        assert!((t.rows.last().unwrap().cdf_right - 1.0).abs() < 1e-12);

        let t1 = classical_qq::<f64>(1).unwrap();
        assert_eq!(t1.rows.len(), 1);
        assert!((t1.rows[0].g2 - 2.0 * LN2).abs() < 1e-15);
        assert!((t1.rows[0].chi2_cdf - 0.761).abs() < 5e-4);
    }

    #[test]
    fn poisson_qq_mixture() {
        let cutoff = poisson_qq_cutoff(20.0f64).unwrap();
        let t = poisson_qq(20.0f64, cutoff).unwrap();
        // cumulative probabilities account for all but the Poisson tail
        let total = t.rows.last().unwrap().cdf_right;
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
        for pair in t.rows.windows(2) {
            assert!(pair[0].g2 < pair[1].g2);
        }
        // mixing shrinks the staircase deviation (the Fig-1 → Fig-2 effect)
        let classical_gap = classical_qq::<f64>(20).unwrap().uniformity_gap();
        let poisson_gap = t.uniformity_gap();
        assert!(
            poisson_gap < classical_gap,
            "poisson {poisson_gap} !< classical {classical_gap}"
        );
    }

    #[test]
    fn poisson_qq_low_intensity_concentrates_at_zero() {
        let t = poisson_qq(1e-6f64, 2).unwrap();
        assert_eq!(t.rows[0].g2, 0.0);
        assert!(t.rows[0].cdf_right > 1.0 - 1e-5);
    }

    #[test]
    fn two_sample_divergence_matches_binomial() {
        assert_eq!(poisson_two_sample_divergence::<f64>(10, 10).unwrap(), 0.0);
        let a = poisson_two_sample_divergence::<f64>(15, 5).unwrap();
        let b = binom_divergence::<f64>(20, 15).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((a - 2.616_24).abs() < 5e-6);
        let c = poisson_two_sample_divergence::<f64>(1, 0).unwrap();
        assert!((c - LN2).abs() < 1e-15);
        assert!(poisson_two_sample_divergence::<f64>(0, 0).is_err());

        // exhaustive agreement for all splits of n = 20
        for l in 0..=20usize {
            let a = poisson_two_sample_divergence::<f64>(l, 20 - l).unwrap();
            let b = binom_divergence::<f64>(20, l).unwrap();
            assert!((a - b).abs() < 1e-12, "l = {l}: {a} vs {b}");
        }
    }

    #[test]
    fn mach_zehnder_preset_maps_to_poisson_test() {
        let preset = mach_zehnder_preset(true, 10.0f64).unwrap();
        assert_eq!(preset.total_intensity, 20.0);
        assert_eq!(preset.detector1_intensity, preset.detector2_intensity);
        // symmetric observation carries zero evidence against equality
        assert_eq!(poisson_two_sample_divergence::<f64>(10, 10).unwrap(), 0.0);

        let open = mach_zehnder_preset(false, 10.0f64).unwrap();
        assert_eq!(open.detector2_intensity, 0.0);
        assert_eq!(open.total_intensity, 20.0);
    }
}
