//! Regime classification from the structure function.
//!
//! Everything here is a deterministic computation on `phi_W` and on the
//! finite support of `W`: the smallest root `beta` of `phi = 0`, the phase
//! parameter `p_0`, condition (C), the normalizing constants of the central
//! limit theorems and the extinction probability of the surviving tree.

use serde::{Deserialize, Serialize};

use crate::weights::{WeightSpec, C64, UNIT_TOL};

/// Upper end of every search over `p`.
pub const P_MAX: f64 = 256.0;
/// Absolute tolerance on roots in `p`.
pub const ROOT_TOL: f64 = 1e-9;
/// Grid step of the `max phi` scans.
pub const GRID_STEP: f64 = 1.0 / 64.0;
/// A value of `phi` above this counts as positive.
pub const PHI_POSITIVE_TOL: f64 = 1e-12;
/// `phi(2) = 0` is decided by `|E(sum |W_i|^2) - 1| <= PHI2_ZERO_TOL`.
pub const PHI2_ZERO_TOL: f64 = 1e-12;
/// `phi(p_0)` this close to zero is a boundary case.
pub const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegimeError {
    #[error("wrong regime: {0}")]
    WrongRegime(String),
    #[error("phi is not finite at p = {0}")]
    NonFinitePhi(f64),
    #[error("depth must be at least 1")]
    DepthMustBePositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionC {
    C1,
    C2,
    #[serde(rename = "C3_critical")]
    C3Critical,
    #[serde(rename = "fails")]
    Fails,
}

impl ConditionC {
    pub fn holds(self) -> bool {
        self != ConditionC::Fails
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Almost sure uniform and `L^p` convergence.
    ConvergentLp,
    /// Critical conservative convergence, not uniformly Hölder.
    ConservativeCritical,
    /// `F_n -> 0` uniformly.
    Degenerate,
    /// `F_n` is almost surely unbounded.
    DivergentUnbounded,
    /// `F_n / sigma_n` is tight and has a central limit.
    TightCLT,
    /// A boundary case the theory does not decide.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub condition_c: ConditionC,
    pub regime: Regime,
    pub beta: Option<f64>,
    #[serde(with = "crate::extended")]
    pub p0: f64,
    pub phi_at_2: f64,
    pub sigma: Option<f64>,
    pub critical_gamma: Option<f64>,
    pub extinction_prob: f64,
    pub notes: Vec<String>,
}

/// Law of `N = #{i : |W_i| > 0}` as polynomial coefficients `P(N = k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionPolynomial {
    pub coefficients: Vec<f64>,
}

impl ExtinctionPolynomial {
    pub fn new(spec: &WeightSpec) -> Self {
        let mut coefficients = vec![0.0; spec.b() + 1];
        for (p, v) in spec.support() {
            let alive = v.iter().filter(|z| z.norm() > 0.0).count();
            coefficients[alive] += p;
        }
        Self { coefficients }
    }

    /// `P(x) = E(x^N)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    /// `E(N)`.
    pub fn mean(&self) -> f64 {
        self.derivative(1.0)
    }
}

/// Argmax and max of `phi` over `[lo, hi]`: a scan on the `GRID_STEP` grid,
/// refined by golden-section search around the best grid point. By
/// concavity the bracket around the grid maximum contains the true maximum.
fn max_phi(spec: &WeightSpec, lo: f64, hi: f64) -> (f64, f64) {
    let steps = ((hi - lo) / GRID_STEP).ceil() as usize;
    let grid = |k: usize| (lo + k as f64 * GRID_STEP).min(hi);
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..=steps {
        let v = spec.phi(grid(k));
        if v > best.1 {
            best = (k, v);
        }
    }
    let mut a = grid(best.0.saturating_sub(1));
    let mut c = grid((best.0 + 1).min(steps));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = c - inv_phi * (c - a);
    let mut x2 = a + inv_phi * (c - a);
    let (mut f1, mut f2) = (spec.phi(x1), spec.phi(x2));
    while c - a > ROOT_TOL {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (c - a);
            f2 = spec.phi(x2);
        } else {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - inv_phi * (c - a);
            f1 = spec.phi(x1);
        }
    }
    let mid = 0.5 * (a + c);
    let candidates = [(grid(best.0), best.1), (mid, spec.phi(mid))];
    candidates
        .into_iter()
        .fold((lo, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
}

/// Bisection for a sign change of `f` on `[lo, hi]` with `f(lo) < 0 <= f(hi)`
/// (or the reverse).
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let lo_negative = f(lo) < 0.0;
    while hi - lo > ROOT_TOL * 0.1 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest root of `phi(p) = 0` on `[1, P_MAX]`.
///
/// Nonnegative weights give `phi(1) = 0` and the answer 1. Returns `None`
/// when `phi < 0` throughout.
pub fn solve_beta(spec: &WeightSpec) -> Option<f64> {
    let at_one = spec.phi(1.0);
    if spec.is_nonnegative() || at_one >= -PHI_POSITIVE_TOL {
        return Some(1.0);
    }
    let (p_star, top) = max_phi(spec, 1.0, P_MAX);
    if top < 0.0 {
        return None;
    }
    Some(bisect(1.0, p_star, |p| spec.phi(p)))
}

/// `ln b * (p phi'(p) - phi(p))`, written as `sum_j pi_j ln(m_j / pi_j)` with
/// `pi_j` the normalized `p`-th moment weights, so that it stays accurate when
/// `phi` is nearly linear.
fn g_scaled(spec: &WeightSpec, p: f64) -> f64 {
    let logs: Vec<(f64, f64)> = spec
        .components()
        .iter()
        .filter(|(_, z)| z.norm() > 0.0)
        .map(|&(m, z)| (m.ln(), m.ln() + p * z.norm().ln()))
        .collect();
    let lse = crate::weights::log_sum_exp(&logs.iter().map(|t| t.1).collect::<Vec<_>>());
    logs.iter()
        .map(|&(ln_m, ln_t)| {
            let ln_pi = ln_t - lse;
            let pi = ln_pi.exp();
            if pi == 0.0 {
                0.0
            } else {
                pi * (ln_m - ln_pi)
            }
        })
        .sum()
}

/// `g(p) = p phi'(p) - phi(p)`.
pub fn g_function(spec: &WeightSpec, p: f64) -> f64 {
    g_scaled(spec, p) / (spec.b() as f64).ln()
}

/// The zero of `g(p) = p phi'(p) - phi(p)` on `(0, P_MAX]`, or `+inf` when
/// `g` stays positive up to the cap. `g` is nonincreasing with `g(0+) = 1`.
pub fn compute_p0(spec: &WeightSpec) -> Result<f64, RegimeError> {
    let top = spec.phi(P_MAX);
    if !top.is_finite() {
        return Err(RegimeError::NonFinitePhi(P_MAX));
    }
    if g_scaled(spec, P_MAX) > 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut lo = 0.0;
    let mut hi = P_MAX;
    while hi - lo > ROOT_TOL * 0.1 {
        let mid = 0.5 * (lo + hi);
        if g_scaled(spec, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn is_unit(z: C64) -> bool {
    (z.norm() - 1.0).abs() <= UNIT_TOL
}

/// Which case of condition (C) holds, tested in the order C1, C2, C3.
pub fn check_condition_c(spec: &WeightSpec) -> ConditionC {
    let (_, top12) = max_phi(spec, 1.0 + GRID_STEP, 2.0);
    let right_of_one = spec.phi(1.0 + 1e-6);
    if top12.max(right_of_one) > PHI_POSITIVE_TOL {
        return ConditionC::C1;
    }
    if !spec.is_conservative() {
        return ConditionC::Fails;
    }
    let (_, top) = max_phi(spec, 1.0 + GRID_STEP, P_MAX);
    if top > PHI_POSITIVE_TOL {
        return ConditionC::C2;
    }
    let bounded = spec
        .components()
        .iter()
        .all(|&(_, z)| z.norm() <= 1.0 + UNIT_TOL);
    let unit_mass: f64 = spec
        .components()
        .iter()
        .filter(|&&(_, z)| is_unit(z))
        .map(|&(m, _)| m)
        .sum();
    let single_unit: f64 = spec
        .support()
        .iter()
        .filter(|(_, v)| v.iter().filter(|&&z| is_unit(z)).count() == 1)
        .map(|(p, _)| p)
        .sum();
    if bounded && (unit_mass - 1.0).abs() <= 1e-9 && single_unit < 1.0 - 1e-12 {
        ConditionC::C3Critical
    } else {
        ConditionC::Fails
    }
}

/// The constant `gamma` of the critical structure: every entry either has
/// modulus at most `gamma`, or has modulus one with partial sums
/// `(sum_{k<i} W_k, sum_{k<=i} W_k)` equal to `(0, 1)` or `(1, 0)`.
///
/// Returns the smallest admissible `gamma`, or `None` when a unit entry sits
/// at the wrong partial sums or `gamma` falls outside `(0, 1)`.
pub fn check_critical_structure(spec: &WeightSpec) -> Option<f64> {
    let close = |z: C64, x: f64| (z - x).norm() <= 1e-9;
    let mut gamma: f64 = 0.0;
    for (_, v) in spec.support() {
        let mut before = C64::new(0.0, 0.0);
        for &z in &v {
            let after = before + z;
            if is_unit(z) {
                let ok = (close(before, 0.0) && close(after, 1.0))
                    || (close(before, 1.0) && close(after, 0.0));
                if !ok {
                    return None;
                }
            } else {
                gamma = gamma.max(z.norm());
            }
            before = after;
        }
    }
    (gamma > 0.0 && gamma < 1.0).then_some(gamma)
}

fn phi2_is_zero(spec: &WeightSpec) -> bool {
    (spec.abs_moment_sum(2.0) - 1.0).abs() <= PHI2_ZERO_TOL
}

/// The normalizing constant `sigma` of the central limit theorem.
///
/// Defined for nonconservative laws outside condition (C), where
/// `phi(2) <= 0`.
pub fn sigma(spec: &WeightSpec) -> Result<f64, RegimeError> {
    if spec.is_conservative() {
        return Err(RegimeError::WrongRegime("sigma needs a nonconservative law".into()));
    }
    let cond = check_condition_c(spec);
    if cond.holds() {
        return Err(RegimeError::WrongRegime(format!(
            "sigma needs condition (C) to fail, but {cond:?} holds"
        )));
    }
    let phi2 = spec.phi(2.0);
    if !phi2.is_finite() {
        return Err(RegimeError::NonFinitePhi(2.0));
    }
    let value = if phi2_is_zero(spec) {
        spec.offdiag_pair_sum().sqrt()
    } else if phi2 < 0.0 {
        ((spec.abs_sum_sq_mean() - 1.0) / (spec.abs_moment_sum(2.0) - 1.0)).sqrt()
    } else {
        return Err(RegimeError::WrongRegime("sigma needs phi(2) <= 0".into()));
    };
    Ok(value)
}

/// `sigma_n`, the equivalent of `sqrt(E|F_n(1)|^2)`: `sigma b^{-n phi(2)/2}`,
/// or `sigma sqrt(n)` when `phi(2) = 0`.
pub fn sigma_n(spec: &WeightSpec, n: u32) -> Result<f64, RegimeError> {
    if n == 0 {
        return Err(RegimeError::DepthMustBePositive);
    }
    let s = sigma(spec)?;
    if phi2_is_zero(spec) {
        Ok(s * (n as f64).sqrt())
    } else {
        Ok(s * spec.abs_moment_sum(2.0).powf(n as f64 / 2.0))
    }
}

/// Probability that the tree of nonzero weights dies out: the smallest fixed
/// point of `P(x) = E(x^N)` on `[0, 1]`.
pub fn extinction_probability(spec: &WeightSpec) -> f64 {
    if !spec.has_zero_weight() {
        return 0.0;
    }
    let poly = ExtinctionPolynomial::new(spec);
    if poly.mean() <= 1.0 + 1e-12 {
        return 1.0;
    }
    if poly.eval(0.0) == 0.0 {
        return 0.0;
    }
    // P(x) - x is convex, positive at 0 and zero at 1 with positive slope, so
    // it dips below zero; its minimizer solves P'(x) = 1.
    let x_min = bisect(0.0, 1.0, |x| poly.derivative(x) - 1.0);
    let f = |x: f64| poly.eval(x) - x;
    let (mut lo, mut hi) = (0.0, x_min);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Runs the decision table.
pub fn classify(spec: &WeightSpec) -> RegimeReport {
    let condition_c = check_condition_c(spec);
    let beta = solve_beta(spec);
    let p0 = compute_p0(spec).unwrap_or(f64::NAN);
    let phi_at_2 = spec.phi(2.0);
    let extinction_prob = extinction_probability(spec);
    let mut critical_gamma = None;
    let mut notes = Vec::new();

    let boundary = |notes: &mut Vec<String>| -> bool {
        let at = spec.phi(p0);
        if p0.is_finite() && at.abs() <= BOUNDARY_TOL {
            notes.push(format!(
                "phi(p0) = {at:e} at p0 = {p0}: convergence at the threshold exponent phi(p0)/p0 is not decided"
            ));
            true
        } else {
            false
        }
    };

    let regime = match condition_c {
        ConditionC::C1 | ConditionC::C2 => Regime::ConvergentLp,
        ConditionC::C3Critical => match check_critical_structure(spec) {
            Some(g) => {
                critical_gamma = Some(g);
                Regime::ConservativeCritical
            }
            None => {
                notes.push(
                    "critical conservative law without the gamma structure: the limit behavior is not decided"
                        .into(),
                );
                Regime::Undetermined
            }
        },
        ConditionC::Fails => {
            if p0 <= 1.0 {
                notes.push(format!(
                    "b^(n alpha) F_n -> 0 uniformly for alpha <= phi(p0)/p0 = {}",
                    spec.phi(p0) / p0
                ));
                Regime::Degenerate
            } else if spec.is_conservative() || p0 <= 2.0 {
                if boundary(&mut notes) {
                    Regime::Undetermined
                } else {
                    Regime::DivergentUnbounded
                }
            } else {
                Regime::TightCLT
            }
        }
    };

    let sigma = match regime {
        Regime::TightCLT | Regime::DivergentUnbounded | Regime::Undetermined => sigma(spec).ok(),
        _ => None,
    };

    RegimeReport {
        condition_c,
        regime,
        beta,
        p0,
        phi_at_2,
        sigma,
        critical_gamma,
        extinction_prob,
        notes,
    }
}
