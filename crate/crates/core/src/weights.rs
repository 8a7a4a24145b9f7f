//! Finite-support laws for the weight vector `W = (W_0, ..., W_{b-1})`.
//!
//! A [`WeightSpec`] is validated once and is immutable afterwards. Every
//! expectation over the law (the structure function, mixed moments, the
//! pair sums used by the variance recursions) is evaluated exactly over the
//! finite support, so the moment oracles elsewhere in the crate can be
//! compared at machine precision.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::keyed::{self, NodeKey};

pub type C64 = Complex64;

/// Atom probabilities must sum to one within this tolerance.
pub const PROB_TOL: f64 = 1e-12;
/// `E(sum W_i) = 1` is checked within this tolerance.
pub const MEAN_TOL: f64 = 1e-9;
/// A support vector is conservative when it sums to one within this tolerance.
pub const CONSERVATION_TOL: f64 = 1e-12;
/// Moduli within this distance of one count as unit weights.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WeightError {
    #[error("branching number must be at least 2, got {0}")]
    BranchingTooSmall(i64),
    #[error("bad probabilities: {0}")]
    BadProbabilities(String),
    #[error("E(sum of W_i) = {re} + {im}i, expected 1")]
    MeanNotOne { re: f64, im: f64 },
    #[error("weight vector has {got} components, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("weight support is empty")]
    EmptySupport,
    #[error("weight values must be finite")]
    NonFiniteValue,
    #[error("phi is not finite at p = {0}")]
    NonFinitePhi(f64),
    #[error("moment integrand is not finite at p = {0}")]
    NonFiniteMoment(f64),
    #[error("invalid weight spec file: {0}")]
    Parse(String),
}

/// One atom of the common law of the components in the i.i.d. model.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub p: f64,
    pub value: C64,
}

/// One atom of the joint law of the whole vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorAtom {
    pub p: f64,
    pub vector: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightModel {
    /// `W` is a fixed vector.
    Deterministic(Vec<C64>),
    /// The `b` components are i.i.d. with the given atoms.
    IidComponents(Vec<Atom>),
    /// `W` is drawn from a finite list of vectors.
    MixtureOfVectors(Vec<VectorAtom>),
}

/// One sampled realization of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<C64>,
}

impl WeightVector {
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }
}

/// A validated weight law.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    b: usize,
    model: WeightModel,
    conservative: bool,
    zero_weight: bool,
    real: bool,
    nonnegative: bool,
    /// `(mass, value)` pairs with `E(sum_i f(W_i)) = sum mass * f(value)`.
    components: Vec<(f64, C64)>,
    /// Cumulative atom probabilities used by the sampler.
    cumulative: Vec<f64>,
}

impl WeightSpec {
    /// Validates a raw model.
    ///
    /// The branching number is taken as a signed integer so that file input
    /// such as `"b": 1` or `"b": -3` reports `BranchingTooSmall` rather than a
    /// parse failure.
    pub fn validate(b: i64, model: WeightModel) -> Result<Self, WeightError> {
        if b < 2 {
            return Err(WeightError::BranchingTooSmall(b));
        }
        let b = b as usize;

        let check_vec = |v: &[C64]| -> Result<(), WeightError> {
            if v.len() != b {
                return Err(WeightError::WrongLength {
                    expected: b,
                    got: v.len(),
                });
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(WeightError::NonFiniteValue);
            }
            Ok(())
        };

        let probs: Vec<f64> = match &model {
            WeightModel::Deterministic(v) => {
                check_vec(v)?;
                vec![1.0]
            }
            WeightModel::IidComponents(atoms) => {
                if atoms.iter().any(|a| !a.value.re.is_finite() || !a.value.im.is_finite()) {
                    return Err(WeightError::NonFiniteValue);
                }
                atoms.iter().map(|a| a.p).collect()
            }
            WeightModel::MixtureOfVectors(atoms) => {
                for a in atoms {
                    check_vec(&a.vector)?;
                }
                atoms.iter().map(|a| a.p).collect()
            }
        };
        if probs.is_empty() {
            return Err(WeightError::EmptySupport);
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(WeightError::BadProbabilities(format!(
                "atom probability {p} is outside (0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(WeightError::BadProbabilities(format!(
                "atom probabilities sum to {total}"
            )));
        }

        let components: Vec<(f64, C64)> = match &model {
            WeightModel::Deterministic(v) => v.iter().map(|&z| (1.0, z)).collect(),
            WeightModel::IidComponents(atoms) => {
                atoms.iter().map(|a| (b as f64 * a.p, a.value)).collect()
            }
            WeightModel::MixtureOfVectors(atoms) => atoms
                .iter()
                .flat_map(|a| a.vector.iter().map(move |&z| (a.p, z)))
                .collect(),
        };

        let mean: C64 = components.iter().map(|&(m, z)| z * m).sum();
        if (mean - C64::new(1.0, 0.0)).norm() > MEAN_TOL {
            return Err(WeightError::MeanNotOne {
                re: mean.re,
                im: mean.im,
            });
        }

        let sums_to_one = |v: &[C64]| (v.iter().sum::<C64>() - 1.0).norm() <= CONSERVATION_TOL;
        let conservative = match &model {
            WeightModel::Deterministic(v) => sums_to_one(v),
            WeightModel::MixtureOfVectors(atoms) => atoms.iter().all(|a| sums_to_one(&a.vector)),
            // Only a degenerate component law can force the sum.
            WeightModel::IidComponents(atoms) => {
                let first = atoms[0].value;
                atoms.iter().all(|a| (a.value - first).norm() <= CONSERVATION_TOL)
                    && (first * b as f64 - 1.0).norm() <= CONSERVATION_TOL
            }
        };

        let zero_weight = components.iter().any(|&(_, z)| z == C64::new(0.0, 0.0));
        let real = components.iter().all(|&(_, z)| z.im == 0.0);
        let nonnegative = real && components.iter().all(|&(_, z)| z.re >= 0.0);

        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }

        Ok(Self {
            b,
            model,
            conservative,
            zero_weight,
            real,
            nonnegative,
            components,
            cumulative,
        })
    }

    pub fn deterministic(values: Vec<C64>) -> Result<Self, WeightError> {
        Self::validate(values.len() as i64, WeightModel::Deterministic(values))
    }

    pub fn iid(b: i64, atoms: Vec<Atom>) -> Result<Self, WeightError> {
        Self::validate(b, WeightModel::IidComponents(atoms))
    }

    pub fn mixture(b: i64, atoms: Vec<VectorAtom>) -> Result<Self, WeightError> {
        Self::validate(b, WeightModel::MixtureOfVectors(atoms))
    }

    /// Real i.i.d. components from `(probability, value)` pairs.
    pub fn iid_real(b: i64, atoms: &[(f64, f64)]) -> Result<Self, WeightError> {
        Self::iid(
            b,
            atoms
                .iter()
                .map(|&(p, v)| Atom {
                    p,
                    value: C64::new(v, 0.0),
                })
                .collect(),
        )
    }

    /// Real deterministic weights.
    pub fn deterministic_real(values: &[f64]) -> Result<Self, WeightError> {
        Self::deterministic(values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn model(&self) -> &WeightModel {
        &self.model
    }

    /// Whether `sum_i W_i = 1` almost surely.
    pub fn is_conservative(&self) -> bool {
        self.conservative
    }

    /// Whether some component vanishes with positive probability.
    pub fn has_zero_weight(&self) -> bool {
        self.zero_weight
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub(crate) fn components(&self) -> &[(f64, C64)] {
        &self.components
    }

    /// Enumerates the joint support as `(probability, vector)` pairs.
    ///
    /// For i.i.d. components this is the full product of the atom list, of
    /// size `atoms^b`.
    pub fn support(&self) -> Vec<(f64, Vec<C64>)> {
        match &self.model {
            WeightModel::Deterministic(v) => vec![(1.0, v.clone())],
            WeightModel::MixtureOfVectors(atoms) => {
                atoms.iter().map(|a| (a.p, a.vector.clone())).collect()
            }
            WeightModel::IidComponents(atoms) => {
                let k = atoms.len();
                let total = k.pow(self.b as u32);
                let mut out = Vec::with_capacity(total);
                let mut digits = vec![0usize; self.b];
                for _ in 0..total {
                    let p = digits.iter().map(|&d| atoms[d].p).product();
                    out.push((p, digits.iter().map(|&d| atoms[d].value).collect()));
                    for d in digits.iter_mut().rev() {
                        *d += 1;
                        if *d < k {
                            break;
                        }
                        *d = 0;
                    }
                }
                out
            }
        }
    }

    /// Number of vectors in the joint support.
    pub fn support_size(&self) -> usize {
        match &self.model {
            WeightModel::Deterministic(_) => 1,
            WeightModel::MixtureOfVectors(atoms) => atoms.len(),
            WeightModel::IidComponents(atoms) => atoms.len().saturating_pow(self.b as u32),
        }
    }

    /// Natural log of `E(sum_i |W_i|^p)`, evaluated as a log-sum-exp so that
    /// large `p` neither overflows nor underflows. Only meaningful for `p > 0`.
    fn ln_abs_moment_sum(&self, p: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|&&(_, z)| z.norm() > 0.0)
            .map(|&(m, z)| m.ln() + p * z.norm().ln())
            .collect();
        log_sum_exp(&terms)
    }

    /// The structure function `phi_W(p) = -log_b E(sum_i |W_i|^p)`.
    ///
    /// `phi(0) = -1` under the `0^0 = 1` convention; for `p < 0` a zero
    /// weight of positive probability makes the moment infinite and the
    /// result is `-inf`.
    pub fn phi(&self, p: f64) -> f64 {
        if p == 0.0 {
            return -1.0;
        }
        if p < 0.0 && self.zero_weight {
            return f64::NEG_INFINITY;
        }
        -self.ln_abs_moment_sum(p) / (self.b as f64).ln()
    }

    /// `d phi / dp = -E(sum |W_i|^p ln|W_i|) / (ln b * E(sum |W_i|^p))`.
    pub fn phi_derivative(&self, p: f64) -> Result<f64, WeightError> {
        if p <= 0.0 && self.zero_weight {
            return Err(WeightError::NonFiniteMoment(p));
        }
        let nonzero: Vec<(f64, f64)> = self
            .components
            .iter()
            .filter(|&&(_, z)| z.norm() > 0.0)
            .map(|&(m, z)| (m.ln() + p * z.norm().ln(), z.norm().ln()))
            .collect();
        let lse = log_sum_exp(&nonzero.iter().map(|t| t.0).collect::<Vec<_>>());
        let weighted: f64 = nonzero.iter().map(|&(lt, ll)| (lt - lse).exp() * ll).sum();
        let d = -weighted / (self.b as f64).ln();
        if d.is_finite() {
            Ok(d)
        } else {
            Err(WeightError::NonFiniteMoment(p))
        }
    }

    /// `E(sum_i |W_i|^p)` (equal to `b^{-phi(p)}`).
    pub fn abs_moment_sum(&self, p: f64) -> f64 {
        if p == 0.0 {
            return self.b as f64;
        }
        self.components.iter().map(|&(m, z)| m * z.norm().powf(p)).sum()
    }

    /// Signed moment sum `E(sum_i W_i^q)`.
    pub fn moment_sum(&self, q: u32) -> C64 {
        self.components.iter().map(|&(m, z)| z.powu(q) * m).sum()
    }

    /// Exact `E(prod_k W_k^{e_k})`, or of `|W_k|^{e_k}` with `use_modulus`.
    pub fn mixed_moment(&self, exponents: &[u32], use_modulus: bool) -> C64 {
        assert_eq!(exponents.len(), self.b, "one exponent per component");
        let f = |z: C64, e: u32| -> C64 {
            if use_modulus {
                C64::new(z.norm().powi(e as i32), 0.0)
            } else {
                z.powu(e)
            }
        };
        match &self.model {
            WeightModel::Deterministic(v) => {
                v.iter().zip(exponents).map(|(&z, &e)| f(z, e)).product()
            }
            WeightModel::IidComponents(atoms) => exponents
                .iter()
                .map(|&e| atoms.iter().map(|a| f(a.value, e) * a.p).sum::<C64>())
                .product(),
            WeightModel::MixtureOfVectors(atoms) => atoms
                .iter()
                .map(|a| {
                    a.vector
                        .iter()
                        .zip(exponents)
                        .map(|(&z, &e)| f(z, e))
                        .product::<C64>()
                        * a.p
                })
                .sum(),
        }
    }

    /// `E(|sum_i W_i|^2)`.
    pub fn abs_sum_sq_mean(&self) -> f64 {
        match &self.model {
            WeightModel::IidComponents(atoms) => {
                let b = self.b as f64;
                let m1: C64 = atoms.iter().map(|a| a.value * a.p).sum();
                let m2: f64 = atoms.iter().map(|a| a.value.norm_sqr() * a.p).sum();
                b * m2 + b * (b - 1.0) * m1.norm_sqr()
            }
            _ => self
                .support()
                .iter()
                .map(|(p, v)| p * v.iter().sum::<C64>().norm_sqr())
                .sum(),
        }
    }

    /// `sum_{i != j} E(W_i conj(W_j))`, which is real.
    pub fn offdiag_pair_sum(&self) -> f64 {
        match &self.model {
            WeightModel::IidComponents(atoms) => {
                let b = self.b as f64;
                let m1: C64 = atoms.iter().map(|a| a.value * a.p).sum();
                b * (b - 1.0) * m1.norm_sqr()
            }
            _ => self
                .support()
                .iter()
                .map(|(p, v)| {
                    let s: C64 = v.iter().sum();
                    let d: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                    p * (s.norm_sqr() - d)
                })
                .sum(),
        }
    }

    /// The law of `W^(beta) = b^{phi(beta)} (|W_0|^beta, ..., |W_{b-1}|^beta)`.
    ///
    /// The atom structure is preserved, so a realization keyed by the same
    /// seed picks the same atoms under both laws.
    pub fn beta_transform(&self, beta: f64) -> Result<WeightSpec, WeightError> {
        let phi = self.phi(beta);
        if !phi.is_finite() || beta <= 0.0 {
            return Err(WeightError::NonFinitePhi(beta));
        }
        let scale = (self.b as f64).powf(phi);
        let map = |z: &C64| C64::new(scale * z.norm().powf(beta), 0.0);
        let model = match &self.model {
            WeightModel::Deterministic(v) => WeightModel::Deterministic(v.iter().map(map).collect()),
            WeightModel::IidComponents(atoms) => WeightModel::IidComponents(
                atoms
                    .iter()
                    .map(|a| Atom {
                        p: a.p,
                        value: map(&a.value),
                    })
                    .collect(),
            ),
            WeightModel::MixtureOfVectors(atoms) => WeightModel::MixtureOfVectors(
                atoms
                    .iter()
                    .map(|a| VectorAtom {
                        p: a.p,
                        vector: a.vector.iter().map(map).collect(),
                    })
                    .collect(),
            ),
        };
        WeightSpec::validate(self.b as i64, model)
    }

    /// Number of 64-bit draws one node consumes from its level stream.
    pub(crate) fn draws_per_node(&self) -> u64 {
        match &self.model {
            WeightModel::Deterministic(_) => 0,
            WeightModel::IidComponents(_) => self.b as u64,
            WeightModel::MixtureOfVectors(_) => 1,
        }
    }

    fn pick(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1)
    }

    /// Fills `out` with one draw of `W`, consuming exactly
    /// [`draws_per_node`](Self::draws_per_node) values from `rng`.
    pub(crate) fn sample_into<R: rand::RngCore>(&self, rng: &mut R, out: &mut [C64]) {
        match &self.model {
            WeightModel::Deterministic(v) => out.copy_from_slice(v),
            WeightModel::IidComponents(atoms) => {
                for slot in out.iter_mut() {
                    *slot = atoms[self.pick(keyed::unit_f64(rng.next_u64()))].value;
                }
            }
            WeightModel::MixtureOfVectors(atoms) => {
                let k = self.pick(keyed::unit_f64(rng.next_u64()));
                out.copy_from_slice(&atoms[k].vector);
            }
        }
    }

    /// The weight vector attached to `node`, as a pure function of
    /// `(self, seed, node)`.
    pub fn sample(&self, node: NodeKey, seed: u64) -> WeightVector {
        let mut rng = keyed::level_stream(seed, node.level);
        keyed::seek(&mut rng, node.index, self.draws_per_node());
        let mut values = vec![C64::new(0.0, 0.0); self.b];
        self.sample_into(&mut rng, &mut values);
        WeightVector { values }
    }

    /// Parses the JSON spec file format.
    pub fn from_json_str(s: &str) -> Result<Self, WeightError> {
        let raw: RawSpec = serde_json::from_str(s).map_err(|e| WeightError::Parse(e.to_string()))?;
        WeightSpec::try_from(raw)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// File format

/// `[re, im]`, `[re]` or a bare number.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonComplex {
    Scalar(f64),
    Parts(PartsWrapper),
}

#[derive(Debug, Clone, Copy)]
struct PartsWrapper(C64);

impl Serialize for PartsWrapper {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartsWrapper {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let parts = Vec::<f64>::deserialize(d)?;
        match parts.as_slice() {
            [re] => Ok(PartsWrapper(C64::new(*re, 0.0))),
            [re, im] => Ok(PartsWrapper(C64::new(*re, *im))),
            _ => Err(serde::de::Error::custom(
                "complex numbers are [re, im] or [re]",
            )),
        }
    }
}

impl From<JsonComplex> for C64 {
    fn from(c: JsonComplex) -> C64 {
        match c {
            JsonComplex::Scalar(re) => C64::new(re, 0.0),
            JsonComplex::Parts(PartsWrapper(z)) => z,
        }
    }
}

impl From<C64> for JsonComplex {
    fn from(z: C64) -> Self {
        JsonComplex::Parts(PartsWrapper(z))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawAtom {
    p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    value: Option<JsonComplex>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    vector: Option<Vec<JsonComplex>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawWeights {
    Deterministic { values: Vec<JsonComplex> },
    Iid { atoms: Vec<RawAtom> },
    Mixture { atoms: Vec<RawAtom> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    b: i64,
    weights: RawWeights,
}

impl TryFrom<RawSpec> for WeightSpec {
    type Error = WeightError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        let to_vec = |v: Vec<JsonComplex>| v.into_iter().map(C64::from).collect::<Vec<_>>();
        let model = match raw.weights {
            RawWeights::Deterministic { values } => WeightModel::Deterministic(to_vec(values)),
            RawWeights::Iid { atoms } => WeightModel::IidComponents(
                atoms
                    .into_iter()
                    .map(|a| {
                        a.value
                            .map(|v| Atom { p: a.p, value: v.into() })
                            .ok_or_else(|| WeightError::Parse("iid atom needs a \"value\"".into()))
                    })
                    .collect::<Result<_, _>>()?,
            ),
            RawWeights::Mixture { atoms } => WeightModel::MixtureOfVectors(
                atoms
                    .into_iter()
                    .map(|a| {
                        a.vector
                            .map(|v| VectorAtom {
                                p: a.p,
                                vector: to_vec(v),
                            })
                            .ok_or_else(|| {
                                WeightError::Parse("mixture atom needs a \"vector\"".into())
                            })
                    })
                    .collect::<Result<_, _>>()?,
            ),
        };
        WeightSpec::validate(raw.b, model)
    }
}

impl From<&WeightSpec> for RawSpec {
    fn from(spec: &WeightSpec) -> Self {
        let conv = |v: &[C64]| v.iter().map(|&z| JsonComplex::from(z)).collect::<Vec<_>>();
        let weights = match &spec.model {
            WeightModel::Deterministic(v) => RawWeights::Deterministic { values: conv(v) },
            WeightModel::IidComponents(atoms) => RawWeights::Iid {
                atoms: atoms
                    .iter()
                    .map(|a| RawAtom {
                        p: a.p,
                        value: Some(a.value.into()),
                        vector: None,
                    })
                    .collect(),
            },
            WeightModel::MixtureOfVectors(atoms) => RawWeights::Mixture {
                atoms: atoms
                    .iter()
                    .map(|a| RawAtom {
                        p: a.p,
                        value: None,
                        vector: Some(conv(&a.vector)),
                    })
                    .collect(),
            },
        };
        RawSpec {
            b: spec.b as i64,
            weights,
        }
    }
}

impl Serialize for WeightSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpec::deserialize(d)?;
        WeightSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn validate_examples() {
        let id = WeightSpec::deterministic_real(&[0.5, 0.5]).unwrap();
        assert!(id.is_conservative());

        let s = WeightSpec::iid_real(2, &[(0.6, 1.0), (0.4, -0.25)]).unwrap();
        assert!(!s.is_conservative());
        assert_abs_diff_eq!(s.moment_sum(1).re, 1.0, epsilon = 1e-15);

        let err = WeightSpec::deterministic_real(&[0.7, 0.7]).unwrap_err();
        assert!(matches!(err, WeightError::MeanNotOne { .. }));
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            WeightSpec::validate(1, WeightModel::Deterministic(vec![c(1.0, 0.0)])).unwrap_err(),
            WeightError::BranchingTooSmall(1)
        );
        assert!(matches!(
            WeightSpec::iid_real(2, &[(0.5, 1.0), (0.4, 0.0)]).unwrap_err(),
            WeightError::BadProbabilities(_)
        ));
        assert!(matches!(
            WeightSpec::iid_real(2, &[(1.5, 0.5), (-0.5, 0.5)]).unwrap_err(),
            WeightError::BadProbabilities(_)
        ));
        assert!(matches!(
            WeightSpec::validate(3, WeightModel::Deterministic(vec![c(0.5, 0.0), c(0.5, 0.0)]))
                .unwrap_err(),
            WeightError::WrongLength { expected: 3, got: 2 }
        ));
        assert_eq!(
            WeightSpec::iid(2, vec![]).unwrap_err(),
            WeightError::EmptySupport
        );
    }

    #[test]
    fn phi_examples() {
        let id3 = catalog::identity(3);
        assert_abs_diff_eq!(id3.phi(2.0), 1.0, epsilon = 1e-12);
        let levy = catalog::levy_c();
        assert_abs_diff_eq!(levy.phi(2.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(levy.phi(3.0), 0.5, epsilon = 1e-12);
        let s = WeightSpec::iid_real(2, &[(0.5, 0.8), (0.5, 0.2)]).unwrap();
        assert_abs_diff_eq!(s.phi(2.0), -(0.68f64).log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi(2.0), 0.556393, epsilon = 1e-6);

        let ext = catalog::extinction();
        assert_eq!(ext.phi(0.0), -1.0);
        assert_eq!(ext.phi(-1.0), f64::NEG_INFINITY);
        assert!(catalog::clt().phi(-1.0).is_finite());
    }

    #[test]
    fn phi_derivative_examples() {
        for p in [0.5, 1.0, 2.5, 7.0] {
            assert_abs_diff_eq!(catalog::identity(2).phi_derivative(p).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(catalog::levy_c().phi_derivative(p).unwrap(), 0.5, epsilon = 1e-12);
            let pm = WeightSpec::iid_real(2, &[(0.75, 1.0), (0.25, -1.0)]).unwrap();
            assert_abs_diff_eq!(pm.phi_derivative(p).unwrap(), 0.0, epsilon = 1e-12);
        }
        assert!(matches!(
            catalog::extinction().phi_derivative(0.0),
            Err(WeightError::NonFiniteMoment(_))
        ));
        // Zero atoms contribute nothing for p > 0.
        assert!(catalog::extinction().phi_derivative(1.0).is_ok());
    }

    #[test]
    fn phi_derivative_matches_finite_difference() {
        for spec in catalog::all() {
            for p in [0.7, 1.3, 2.0, 4.5] {
                let h = 1e-5;
                let fd = (spec.spec.phi(p + h) - spec.spec.phi(p - h)) / (2.0 * h);
                assert_abs_diff_eq!(spec.spec.phi_derivative(p).unwrap(), fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn mixed_moment_examples() {
        let s = catalog::clt();
        assert_abs_diff_eq!(s.mixed_moment(&[2, 2], false).re, 0.390625, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mixed_moment(&[0, 0], false).re, 1.0, epsilon = 1e-15);
        let d = catalog::ternary();
        assert_abs_diff_eq!(d.mixed_moment(&[1, 1, 1], false).re, -0.27, epsilon = 1e-15);
    }

    #[test]
    fn beta_transform_examples() {
        let w2 = catalog::levy_c().beta_transform(2.0).unwrap();
        match w2.model() {
            WeightModel::Deterministic(v) => {
                for z in v {
                    assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
                    assert_eq!(z.im, 0.0);
                }
            }
            other => panic!("unexpected model {other:?}"),
        }
        let s2 = catalog::sign().beta_transform(2.0).unwrap();
        for &(_, z) in s2.components() {
            assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
        }
        assert!(s2.is_conservative());
        for spec in catalog::all() {
            let t = spec.spec.beta_transform(1.7).unwrap();
            assert_abs_diff_eq!(t.phi(1.0), 0.0, epsilon = 1e-12);
            assert!(t.is_nonnegative());
        }
    }

    #[test]
    fn sample_is_deterministic_and_matches_frequencies() {
        let id = catalog::identity(2);
        let v = id.sample(NodeKey { level: 3, index: 5 }, 9);
        assert_eq!(v.values(), &[c(0.5, 0.0), c(0.5, 0.0)]);

        let s = catalog::clt();
        let key = NodeKey { level: 4, index: 11 };
        assert_eq!(s.sample(key, 42), s.sample(key, 42));

        // 1e5 distinct keys, two components each.
        let n = 100_000u64;
        let mut ones = 0u64;
        for i in 0..n {
            let v = s.sample(NodeKey { level: 17, index: i }, 3);
            ones += v.values().iter().filter(|z| z.re == 1.0).count() as u64;
        }
        let draws = (2 * n) as f64;
        let freq = ones as f64 / draws;
        let se = (0.6 * 0.4 / draws).sqrt();
        assert!((freq - 0.6).abs() < 3.0 * se, "freq {freq}");

        let m = catalog::critical();
        let mut first = 0u64;
        for i in 0..n {
            let v = m.sample(NodeKey { level: 2, index: i }, 8);
            if v.values()[0].re == 1.0 {
                first += 1;
            }
        }
        let freq = first as f64 / n as f64;
        let se = ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
        assert!((freq - 1.0 / 3.0).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn json_round_trip_and_shorthands() {
        let text = r#"{"b": 2, "weights": {"kind": "iid", "atoms": [
            {"p": 0.6, "value": 1}, {"p": 0.4, "value": [-0.25]}]}}"#;
        let s = WeightSpec::from_json_str(text).unwrap();
        assert_eq!(s, catalog::clt());
        let back = WeightSpec::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(back, s);

        let levy = r#"{"b": 2, "weights": {"kind": "deterministic",
            "values": [[0.5, 0.5], [0.5, -0.5]]}}"#;
        assert_eq!(WeightSpec::from_json_str(levy).unwrap(), catalog::levy_c());

        let bad = r#"{"b": 2, "weights": {"kind": "deterministic", "values": [0.7, 0.7]}}"#;
        assert!(matches!(
            WeightSpec::from_json_str(bad),
            Err(WeightError::MeanNotOne { .. })
        ));
        let small = r#"{"b": 1, "weights": {"kind": "deterministic", "values": [1]}}"#;
        assert_eq!(
            WeightSpec::from_json_str(small).unwrap_err(),
            WeightError::BranchingTooSmall(1)
        );
        assert!(matches!(
            WeightSpec::from_json_str("{not json"),
            Err(WeightError::Parse(_))
        ));
    }

    fn any_catalog_spec() -> impl Strategy<Value = WeightSpec> {
        let specs: Vec<WeightSpec> = catalog::all().into_iter().map(|e| e.spec).collect();
        proptest::sample::select(specs)
    }

    proptest! {
        #[test]
        fn beta_transform_phi_identity(spec in any_catalog_spec(), p in 0.5f64..6.0, beta in 0.5f64..6.0) {
            let t = spec.beta_transform(beta).unwrap();
            let lhs = t.phi(p);
            let rhs = spec.phi(beta * p) - p * spec.phi(beta);
            prop_assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }

        #[test]
        fn phi_is_concave(spec in any_catalog_spec(), a in 0.01f64..8.0, b in 0.01f64..8.0, t in 0.0f64..1.0) {
            let (p1, p3) = if a < b { (a, b) } else { (b, a) };
            let p2 = p1 + t * (p3 - p1);
            let interp = spec.phi(p1) + t * (spec.phi(p3) - spec.phi(p1));
            prop_assert!(spec.phi(p2) >= interp - 1e-10);
        }

        #[test]
        fn unit_patterns_recover_phi(spec in any_catalog_spec(), p in 1u32..7) {
            let b = spec.b();
            let mut total = 0.0;
            for i in 0..b {
                let mut e = vec![0u32; b];
                e[i] = p;
                total += spec.mixed_moment(&e, true).re;
            }
            let expected = (b as f64).powf(-spec.phi(p as f64));
            prop_assert!((total - expected).abs() <= 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn phi_at_one() {
        for e in catalog::all() {
            let s = &e.spec;
            assert!(s.phi(1.0) <= 1e-12);
            if s.is_nonnegative() {
                assert_abs_diff_eq!(s.phi(1.0), 0.0, epsilon = 1e-12);
            }
        }
    }
}
