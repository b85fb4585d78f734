//! Finite-support unnormalized measures, their algebra, and the
//! codelength correspondence.
//!
//! A [`Measure`] is a vector of non-negative weights over an explicit finite
//! support. Adding two measures combines independent count experiments;
//! multiplying by `α ∈ [0, 1]` is the deletion channel that keeps each
//! observation with probability `α`. Conditioning on a subset recovers a
//! probability measure, and `ℓ(a) = −ln μ(a|A)` turns it into the codelength
//! function that minimizes mean code length, with `Σ e^{−ℓ(a)} ≤ 1` as the
//! feasibility test.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::{cast, ksum, to_f64, Scalar};
use crate::{Error, Result};

/// A finite-support measure: non-negative mass per atom, arbitrary total.
///
/// Zero weights are legal atoms. Values are immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure<F: Scalar> {
    weights: Vec<F>,
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr<F> {
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    weights: Vec<F>,
}

impl<F: Scalar> Measure<F> {
    /// Builds a measure, validating non-negativity, finiteness and label
    /// distinctness.
    pub fn new(weights: Vec<F>, labels: Option<Vec<String>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySupport);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFiniteWeight(i));
            }
            if w < F::zero() {
                return Err(Error::NegativeWeight {
                    index: i,
                    value: to_f64(w),
                });
            }
        }
        if let Some(ref ls) = labels {
            if ls.len() != weights.len() {
                return Err(Error::SupportMismatch(ls.len(), weights.len()));
            }
            let mut seen = std::collections::HashSet::new();
            for l in ls {
                if !seen.insert(l.as_str()) {
                    return Err(Error::DuplicateLabel(l.clone()));
                }
            }
        }
        Ok(Self { weights, labels })
    }

    pub fn from_weights(weights: Vec<F>) -> Result<Self> {
        Self::new(weights, None)
    }

    /// The uniform probability measure on `n` atoms.
    pub fn uniform_probability(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        let w = F::one() / cast::<F>(n as f64);
        Self::from_weights(vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least one atom by construction
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn weight(&self, index: usize) -> Result<F> {
        self.weights
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.weights.len(),
            })
    }

    pub fn total_mass(&self) -> F {
        ksum(self.weights.iter().copied())
    }

    /// `Σ g(i)·wᵢ`, the unnormalized expectation of an atom function.
    pub fn expectation(&self, g: &[F]) -> Result<F> {
        if g.len() != self.weights.len() {
            return Err(Error::SupportMismatch(g.len(), self.weights.len()));
        }
        Ok(ksum(
            self.weights.iter().zip(g.iter()).map(|(&w, &gi)| w * gi),
        ))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::SupportMismatch(
                self.weights.len(),
                other.weights.len(),
            ));
        }
        if let (Some(a), Some(b)) = (&self.labels, &other.labels) {
            if a != b {
                return Err(Error::LabelMismatch);
            }
        }
        Ok(())
    }

    /// Pointwise sum: the combined counts of two independent experiments.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let weights = self
            .weights
            .iter()
            .zip(other.weights.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            weights,
            labels: self.labels.clone().or_else(|| other.labels.clone()),
        })
    }

    /// The deletion channel: each observation kept with probability `α`.
    /// Only `α ∈ [0, 1]` has that interpretation; anything else is rejected.
    pub fn scale(&self, alpha: F) -> Result<Self> {
        if !(alpha >= F::zero() && alpha <= F::one()) {
            return Err(Error::AlphaOutOfRange(to_f64(alpha)));
        }
        Ok(self.scale_raw(alpha))
    }

    /// Unchecked scalar multiply for internal arithmetic.
    pub(crate) fn scale_raw(&self, c: F) -> Self {
        Self {
            weights: self.weights.iter().map(|&w| w * c).collect(),
            labels: self.labels.clone(),
        }
    }

    pub(crate) fn with_weights(&self, weights: Vec<F>) -> Self {
        debug_assert_eq!(weights.len(), self.weights.len());
        Self {
            weights,
            labels: self.labels.clone(),
        }
    }

    fn subset_mass(&self, subset: &[usize]) -> Result<F> {
        let mut seen = vec![false; self.weights.len()];
        let mut mass = F::zero();
        for &i in subset {
            if i >= self.weights.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.weights.len(),
                });
            }
            if seen[i] {
                return Err(Error::InvalidParameter(format!(
                    "atom {i} listed twice in subset"
                )));
            }
            seen[i] = true;
            mass = mass + self.weights[i];
        }
        Ok(mass)
    }

    /// `μ(a|A) = μ(a) / μ(A)`: the probability measure the subset induces.
    /// Atoms outside `A` keep a zero weight so the support stays aligned.
    pub fn condition(&self, subset: &[usize]) -> Result<Self> {
        let mass = self.subset_mass(subset)?;
        if !(mass > F::zero()) || !mass.is_finite() {
            return Err(Error::ZeroMassSubset);
        }
        let mut weights = vec![F::zero(); self.weights.len()];
        for &i in subset {
            weights[i] = self.weights[i] / mass;
        }
        Ok(Self {
            weights,
            labels: self.labels.clone(),
        })
    }

    /// The optimal codelengths for the subset: `ℓ(a) = −ln μ(a|A)`.
    ///
    /// A zero-mass atom inside `A` has infinite codelength; it is only
    /// represented as `+∞` when `allow_infinite` is set, otherwise it is an
    /// error. Atoms outside `A` always carry `+∞` (they are never coded).
    pub fn codelengths_from(&self, subset: &[usize], allow_infinite: bool) -> Result<CodelengthFn<F>> {
        let mass = self.subset_mass(subset)?;
        if !(mass > F::zero()) || !mass.is_finite() {
            return Err(Error::ZeroMassSubset);
        }
        let mut lengths = vec![F::infinity(); self.weights.len()];
        for &i in subset {
            let w = self.weights[i];
            if w == F::zero() {
                if !allow_infinite {
                    return Err(Error::ZeroMassAtom(i));
                }
                continue; // stays +∞
            }
            lengths[i] = -(w / mass).ln();
        }
        CodelengthFn::new(lengths)
    }
}

impl<F: Scalar + Serialize> Serialize for Measure<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr {
            labels: self.labels.clone(),
            weights: self.weights.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de, F: Scalar + Deserialize<'de>> Deserialize<'de> for Measure<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::<F>::deserialize(deserializer)?;
        Measure::new(repr.weights, repr.labels).map_err(D::Error::custom)
    }
}

/// An abstract codelength function in nats, one length per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct CodelengthFn<F: Scalar> {
    lengths: Vec<F>,
}

/// Outcome of the Kraft-sum test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KraftReport<F: Scalar> {
    pub sum: F,
    pub satisfied: bool,
}

const KRAFT_SLACK: f64 = 1e-12;

impl<F: Scalar> CodelengthFn<F> {
    /// Lengths may be `+∞` (atoms that are never coded); NaN and `−∞` are
    /// rejected since they break the Kraft sum.
    pub fn new(lengths: Vec<F>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::EmptySupport);
        }
        for (i, &l) in lengths.iter().enumerate() {
            if l.is_nan() || l == F::neg_infinity() {
                return Err(Error::NonFiniteWeight(i));
            }
        }
        Ok(Self { lengths })
    }

    pub fn lengths(&self) -> &[F] {
        &self.lengths
    }

    /// `Σ e^{−ℓ(a)}`, with `satisfied ⇔ sum ≤ 1 + 1e−12`.
    pub fn kraft_check(&self) -> KraftReport<F> {
        let sum = ksum(self.lengths.iter().map(|&l| (-l).exp()));
        KraftReport {
            sum,
            satisfied: sum <= F::one() + cast(KRAFT_SLACK),
        }
    }
}
