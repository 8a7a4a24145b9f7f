//! Exact moments of `F_n(1)`, of the normalized `Z_n(1) = F_n(1)/sigma_n`
//! and of the limits, by recursion over the first split of the tree, plus a
//! brute-force enumeration oracle for small depths.
//!
//! Every recursion rests on the identity `F_{n+1}(1) = sum_i W_i F_n^{(i)}(1)`
//! with independent subtree copies `F_n^{(i)}`. Raising it to the power `q`
//! and taking expectations gives multinomial sums over the exponent vectors
//! `beta` with `|beta| = q`.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::regime::{self, RegimeError, PHI2_ZERO_TOL};
use crate::weights::{WeightSpec, C64};

/// Largest order with exact `u64` multinomial coefficients.
pub const MAX_ORDER: u32 = 20;
/// Largest number of joint weight assignments [`brute_force_moments`] visits.
pub const MAX_COMBINATIONS: u128 = 10_000_000;
/// `|1 - E(sum W_i^q)|` below this is treated as a zero denominator.
pub const DENOMINATOR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MomentError {
    #[error("wrong regime: {0}")]
    WrongRegime(String),
    #[error("the recursion needs real weights")]
    ComplexSpec,
    #[error("denominator {value} at order {order} is not positive")]
    DenominatorNotPositive { order: u32, value: f64 },
    #[error("{combinations} weight assignments exceed the enumeration limit")]
    TooManyCombinations { combinations: u128 },
    #[error("order {0} is above the supported maximum 20")]
    OrderTooLarge(u32),
    #[error("depth must be at least 1")]
    DepthMustBePositive,
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

/// `q! / prod beta_k!` in exact integer arithmetic.
pub fn multinomial(beta: &[u32]) -> Result<u64, MomentError> {
    let q: u32 = beta.iter().sum();
    if q > MAX_ORDER {
        return Err(MomentError::OrderTooLarge(q));
    }
    // Built as a product of binomials; each partial product stays integral.
    let mut acc: u128 = 1;
    let mut seen = 0u128;
    for &k in beta {
        for j in 1..=k as u128 {
            seen += 1;
            acc = acc * seen / j;
        }
    }
    Ok(acc as u64)
}

/// All `beta` in `N^b` with `|beta| = q`, in lexicographic order.
fn compositions(b: usize, q: u32) -> Vec<Vec<u32>> {
    fn rec(b: usize, q: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == b - 1 {
            prefix.push(q);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=q {
            prefix.push(k);
            rec(b, q - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(b, q, &mut Vec::with_capacity(b), &mut out);
    out
}

/// The exponent vectors of order `q` with every entry below `q`, i.e. all
/// but the `b` concentrated ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub q: u32,
    pub indices: Vec<Vec<u32>>,
}

impl MultiIndexSet {
    pub fn new(b: usize, q: u32) -> Self {
        let indices = compositions(b, q)
            .into_iter()
            .filter(|beta| beta.iter().all(|&k| k < q))
            .collect();
        Self { q, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The precomputed terms `gamma_beta E(prod W_k^{beta_k})` of one order.
struct Terms {
    items: Vec<(Vec<u32>, C64)>,
}

impl Terms {
    /// Terms for the weights `scale * W`.
    fn new(spec: &WeightSpec, q: u32, only_even: bool, scale: f64) -> Result<Self, MomentError> {
        let factor = scale.powi(q as i32);
        let set = MultiIndexSet::new(spec.b(), q);
        let mut items = Vec::with_capacity(set.len());
        for beta in set.indices {
            if only_even && beta.iter().any(|k| k % 2 == 1) {
                continue;
            }
            let gamma = multinomial(&beta)? as f64;
            items.push((beta.clone(), spec.mixed_moment(&beta, false) * gamma * factor));
        }
        Ok(Self { items })
    }

    /// `sum_beta gamma_beta E(prod W^beta) prod_k lower[beta_k]`.
    fn apply(&self, lower: &[C64]) -> C64 {
        self.items
            .iter()
            .map(|(beta, c)| beta.iter().map(|&k| lower[k as usize]).product::<C64>() * c)
            .sum()
    }
}

fn check_order(q: u32) -> Result<(), MomentError> {
    if q > MAX_ORDER {
        Err(MomentError::OrderTooLarge(q))
    } else {
        Ok(())
    }
}

fn phi2_is_zero(spec: &WeightSpec) -> bool {
    (spec.abs_moment_sum(2.0) - 1.0).abs() <= PHI2_ZERO_TOL
}

/// The factor `b^{phi(2)/2}` in `W~ = b^{phi(2)/2} W`, the weights of the
/// normalized recursion.
fn tilde_scale(spec: &WeightSpec) -> f64 {
    spec.abs_moment_sum(2.0).sqrt().recip()
}

/// `v_n = E|F_n(1)|^2` in closed form.
pub fn second_moment_exact(spec: &WeightSpec, n: u32) -> Result<f64, MomentError> {
    let s = spec.abs_moment_sum(2.0);
    if !s.is_finite() {
        return Err(RegimeError::NonFinitePhi(2.0).into());
    }
    let off = spec.offdiag_pair_sum();
    if phi2_is_zero(spec) {
        return Ok(1.0 + n as f64 * off);
    }
    let ell = off / (1.0 - s);
    Ok(ell + (1.0 - ell) * s.powi(n as i32))
}

/// `E(F_n(1)^k)` for `k = 0..=q`, by the unnormalized recursion started from
/// `F_0(1) = 1`. Complex weights are allowed.
pub fn finite_n_raw_moments(spec: &WeightSpec, q: u32, n: u32) -> Result<Vec<C64>, MomentError> {
    check_order(q)?;
    let terms: Vec<Terms> = (0..=q)
        .map(|k| Terms::new(spec, k, false, 1.0))
        .collect::<Result<_, _>>()?;
    let diag: Vec<C64> = (0..=q).map(|k| spec.moment_sum(k)).collect();
    let mut m = vec![C64::new(1.0, 0.0); q as usize + 1];
    for _ in 0..n {
        let mut next = vec![C64::new(1.0, 0.0); q as usize + 1];
        for k in 1..=q as usize {
            next[k] = diag[k] * m[k] + terms[k].apply(&m);
        }
        m = next;
    }
    Ok(m)
}

/// `E(F_n(1)^q)`.
pub fn finite_n_raw_moment(spec: &WeightSpec, q: u32, n: u32) -> Result<C64, MomentError> {
    Ok(finite_n_raw_moments(spec, q, n)?[q as usize])
}

fn clt_preconditions(spec: &WeightSpec) -> Result<(), MomentError> {
    if !spec.is_real() {
        return Err(MomentError::ComplexSpec);
    }
    regime::sigma(spec).map_err(|e| match e {
        RegimeError::WrongRegime(msg) => MomentError::WrongRegime(msg),
        other => other.into(),
    })?;
    Ok(())
}

/// `E(Z_n(1)^k)` for `k = 0..=q` with `Z_n = F_n / sigma_n`.
///
/// With `W~ = b^{phi(2)/2} W` and `r_n = sigma_n b^{phi(2)/2} / sigma_{n+1}`
/// (1 when `phi(2) < 0`, `sqrt(n/(n+1))` when `phi(2) = 0`), the normalized
/// variables satisfy `Z_{n+1} = r_n sum_i W~_i Z_n^{(i)}` and
///
/// `M_{n+1}^(q) = r_n^q E(sum W~_i^q) M_n^(q) + r_n^q sum_{S_q} gamma_beta E(prod W~^beta) prod M_n^(beta_k)`.
///
/// The first term carries the signed moment `E(sum W~_i^q)`, which equals
/// `b^{-phi_W~(q)}` only for even `q` or nonnegative weights. The recursion
/// starts at `n = 1` from the exact law of `F_1(1) = sum W_i`.
pub fn finite_n_moments(spec: &WeightSpec, q: u32, n: u32) -> Result<Vec<f64>, MomentError> {
    check_order(q)?;
    if n == 0 {
        return Err(MomentError::DepthMustBePositive);
    }
    clt_preconditions(spec)?;
    let c = tilde_scale(spec);
    let critical = phi2_is_zero(spec);
    let terms: Vec<Terms> = (0..=q)
        .map(|k| Terms::new(spec, k, false, c))
        .collect::<Result<_, _>>()?;
    let diag: Vec<f64> = (0..=q).map(|k| c.powi(k as i32) * spec.moment_sum(k).re).collect();

    let sigma1 = regime::sigma_n(spec, 1)?;
    let mut m: Vec<f64> = (0..=q)
        .map(|k| {
            spec.support()
                .iter()
                .map(|(p, v)| p * (v.iter().map(|z| z.re).sum::<f64>() / sigma1).powi(k as i32))
                .sum()
        })
        .collect();
    for step in 1..n {
        let r = if critical {
            (step as f64 / (step + 1) as f64).sqrt()
        } else {
            1.0
        };
        let lower: Vec<C64> = m.iter().map(|&x| C64::new(x, 0.0)).collect();
        let mut next = vec![1.0; q as usize + 1];
        for k in 1..=q as usize {
            let rk = r.powi(k as i32);
            next[k] = rk * (diag[k] * m[k] + terms[k].apply(&lower).re);
        }
        m = next;
    }
    Ok(m)
}

/// `E(Z_n(1)^q)`.
pub fn finite_n_moment(spec: &WeightSpec, q: u32, n: u32) -> Result<f64, MomentError> {
    Ok(finite_n_moments(spec, q, n)?[q as usize])
}

/// Moments of the limit law of `Z_n(1)`: `M^(0) = M^(2) = 1`, odd orders 0,
/// and for `2p >= 4`
///
/// `M^(2p) = (1 - b^{-phi_W~(2p)})^{-1} sum_{beta in S_2p, beta even} gamma_beta E(prod W~^beta) prod M^(beta_k)`.
pub fn limit_moment_even(spec: &WeightSpec, order: u32) -> Result<f64, MomentError> {
    check_order(order)?;
    clt_preconditions(spec)?;
    if spec.is_conservative() {
        return Err(MomentError::WrongRegime("the limit needs a nonconservative law".into()));
    }
    if order % 2 == 1 {
        return Ok(0.0);
    }
    let c = tilde_scale(spec);
    let mut m = vec![C64::new(0.0, 0.0); order as usize + 1];
    m[0] = C64::new(1.0, 0.0);
    if order >= 2 {
        m[2] = C64::new(1.0, 0.0);
    }
    for k in (4..=order).step_by(2) {
        let denom = 1.0 - c.powi(k as i32) * spec.abs_moment_sum(k as f64);
        if denom <= 0.0 {
            return Err(MomentError::DenominatorNotPositive { order: k, value: denom });
        }
        let t = Terms::new(spec, k, true, c)?;
        m[k as usize] = t.apply(&m) / denom;
    }
    Ok(m[order as usize].re)
}

/// `m_k = E(F(1)^k)` for `k = 0..=q` of the limit `F = lim F_n`, from the
/// fixed point `F(1) = sum W_i F^{(i)}(1)`:
///
/// `m_q = (1 - E(sum W_i^q))^{-1} sum_{S_q} gamma_beta E(prod W^beta) prod m_{beta_k}`.
pub fn limit_moments_convergent(spec: &WeightSpec, q: u32) -> Result<Vec<f64>, MomentError> {
    check_order(q)?;
    if !spec.is_real() {
        return Err(MomentError::ComplexSpec);
    }
    let cond = regime::check_condition_c(spec);
    if !cond.holds() {
        return Err(MomentError::WrongRegime("condition (C) fails".into()));
    }
    for k in 2..=q {
        let s = spec.abs_moment_sum(k as f64);
        if s >= 1.0 {
            return Err(MomentError::DenominatorNotPositive { order: k, value: 1.0 - s });
        }
    }
    let mut m = vec![C64::new(1.0, 0.0); q as usize + 1];
    for k in 2..=q {
        let denom = 1.0 - spec.moment_sum(k).re;
        if denom.abs() < DENOMINATOR_TOL {
            return Err(MomentError::DenominatorNotPositive { order: k, value: denom });
        }
        m[k as usize] = Terms::new(spec, k, false, 1.0)?.apply(&m) / denom;
    }
    Ok(m.iter().map(|z| z.re).collect())
}

pub fn limit_moment_convergent(spec: &WeightSpec, q: u32) -> Result<f64, MomentError> {
    Ok(limit_moments_convergent(spec, q)?[q as usize])
}

/// How [`brute_force_moment`] scales `F_n(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    /// Divide by `sigma_n`.
    Sigma,
}

/// Exact moments of `F_n(1)` by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    /// `E(F_n(1)^k)` for `k = 0..=q`.
    pub raw: Vec<C64>,
    /// `E|F_n(1)|^2`.
    pub abs2: f64,
    pub combinations: u128,
}

/// Enumerates every assignment of support vectors to the internal nodes of
/// the depth-`n` tree and accumulates the moments of `F_n(1)` with the joint
/// probabilities.
pub fn brute_force_moments(spec: &WeightSpec, q: u32, n: u32) -> Result<BruteForce, MomentError> {
    let support = spec.support();
    let b = spec.b();
    let s = support.len() as u128;
    let nodes: u32 = (0..n).map(|l| (b as u32).pow(l)).sum();
    let combinations = s.checked_pow(nodes).unwrap_or(u128::MAX);
    if combinations > MAX_COMBINATIONS {
        return Err(MomentError::TooManyCombinations { combinations });
    }
    let qn = q as usize + 1;
    let total = combinations as u64;
    const BLOCK: u64 = 1 << 14;
    let blocks = total.div_ceil(BLOCK);
    let partials: Vec<(Vec<C64>, f64)> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut acc = vec![C64::new(0.0, 0.0); qn];
            let mut abs2 = 0.0;
            let mut digits = vec![0usize; nodes as usize];
            let mut q_nodes = vec![C64::new(0.0, 0.0); nodes as usize];
            for idx in blk * BLOCK..((blk + 1) * BLOCK).min(total) {
                let mut rest = idx;
                for d in digits.iter_mut() {
                    *d = (rest % s as u64) as usize;
                    rest /= s as u64;
                }
                let mut prob = 1.0;
                let mut f = C64::new(0.0, 0.0);
                if nodes == 0 {
                    f = C64::new(1.0, 0.0);
                }
                // Internal nodes in breadth-first order; node j has children
                // b j + 1 ..= b j + b.
                for j in 0..nodes as usize {
                    let (p, v) = &support[digits[j]];
                    prob *= p;
                    let qj = if j == 0 { C64::new(1.0, 0.0) } else { q_nodes[j] };
                    for (i, w) in v.iter().enumerate() {
                        let child = b * j + 1 + i;
                        let qc = qj * w;
                        if child < nodes as usize {
                            q_nodes[child] = qc;
                        } else {
                            f += qc;
                        }
                    }
                }
                let mut pw = C64::new(prob, 0.0);
                for slot in acc.iter_mut() {
                    *slot += pw;
                    pw *= f;
                }
                abs2 += prob * f.norm_sqr();
            }
            (acc, abs2)
        })
        .collect();
    let mut raw = vec![C64::new(0.0, 0.0); qn];
    let mut abs2 = 0.0;
    for (acc, a) in partials {
        for (r, x) in raw.iter_mut().zip(acc) {
            *r += x;
        }
        abs2 += a;
    }
    Ok(BruteForce {
        raw,
        abs2,
        combinations,
    })
}

/// `E(F_n(1)^q)`, or `E(Z_n(1)^q)` under [`Normalization::Sigma`].
pub fn brute_force_moment(
    spec: &WeightSpec,
    q: u32,
    n: u32,
    normalization: Normalization,
) -> Result<C64, MomentError> {
    let raw = brute_force_moments(spec, q, n)?.raw[q as usize];
    match normalization {
        Normalization::Raw => Ok(raw),
        Normalization::Sigma => Ok(raw / regime::sigma_n(spec, n)?.powi(q as i32)),
    }
}

/// Which computation produced a table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VRecursion,
    #[serde(rename = "eq44")]
    Eq44,
    #[serde(rename = "eq45")]
    Eq45,
    Sesi,
    BruteForce,
}

/// A finite depth or the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Finite(u32),
    Limit,
}

impl Serialize for Depth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Depth::Finite(n) => s.serialize_u32(*n),
            Depth::Limit => s.serialize_str("limit"),
        }
    }
}

impl<'de> Deserialize<'de> for Depth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u32),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) => Ok(Depth::Finite(n)),
            Repr::S(s) if s == "limit" => Ok(Depth::Limit),
            Repr::S(s) => Err(serde::de::Error::custom(format!("bad depth {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub q: u32,
    pub n: Depth,
    pub value: f64,
    /// Imaginary part, present only for complex raw moments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imag: Option<f64>,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentTable {
    pub entries: Vec<MomentEntry>,
}

impl MomentTable {
    fn push(&mut self, q: u32, n: Depth, value: C64, method: Method) {
        if value.re.is_finite() && value.im.is_finite() {
            self.entries.push(MomentEntry {
                q,
                n,
                value: value.re,
                imag: (value.im != 0.0).then_some(value.im),
                method,
            });
        }
    }

    /// Every quantity the law supports up to `order`, at depth `n`:
    /// `v_n`, the raw recursion, the normalized recursion and its limit in
    /// the CLT regime, the limit moments under condition (C), and the
    /// enumeration oracle when it is small enough.
    pub fn compute(spec: &WeightSpec, order: u32, n: u32) -> Result<Self, MomentError> {
        check_order(order)?;
        let mut t = MomentTable::default();
        if let Ok(v) = second_moment_exact(spec, n) {
            t.push(2, Depth::Finite(n), C64::new(v, 0.0), Method::VRecursion);
        }
        let raw = finite_n_raw_moments(spec, order, n)?;
        for k in 1..=order {
            t.push(k, Depth::Finite(n), raw[k as usize], Method::Sesi);
        }
        if let Ok(m) = limit_moments_convergent(spec, order) {
            for k in 1..=order {
                t.push(k, Depth::Limit, C64::new(m[k as usize], 0.0), Method::Sesi);
            }
        }
        if n >= 1 {
            if let Ok(m) = finite_n_moments(spec, order, n) {
                for k in 1..=order {
                    t.push(k, Depth::Finite(n), C64::new(m[k as usize], 0.0), Method::Eq44);
                }
                for k in (2..=order).step_by(2) {
                    if let Ok(v) = limit_moment_even(spec, k) {
                        t.push(k, Depth::Limit, C64::new(v, 0.0), Method::Eq45);
                    }
                }
            }
        }
        if let Ok(bf) = brute_force_moments(spec, order, n) {
            for k in 1..=order {
                t.push(k, Depth::Finite(n), bf.raw[k as usize], Method::BruteForce);
            }
        }
        Ok(t)
    }

    pub fn find(&self, q: u32, n: Depth, method: Method) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.q == q && e.n == n && e.method == method)
            .map(|e| e.value)
    }
}
