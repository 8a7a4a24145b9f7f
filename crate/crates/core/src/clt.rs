//! Monte Carlo ensembles for the central limit theorems.
//!
//! * `Zn`: `F_n(1) / sigma_n` outside condition (C), whose law approaches
//!   that of `B(F_{W^(2)}(1))`, Brownian motion run in multifractal time;
//! * `Reference`: direct samples `sqrt(F_{W^(2), n}(1)) g` of that limit with
//!   an independent standard normal `g`;
//! * `Rn`: the rescaled fluctuation `(F_n(1) - F(1)) / (sigma b^{-n phi(2)/2})`
//!   of a convergent cascade, with `F` approximated by `F_{n + tail}` on the
//!   same tree.
//!
//! Replica `i` of an ensemble uses its own seed derived from the ensemble
//! seed, so results do not depend on the worker count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{terminal_values, CascadeError};
use crate::keyed::{self, Domain};
use crate::moments::{self, Depth, Method, MomentError};
use crate::regime::{self, Regime, RegimeError};
use crate::weights::{WeightError, WeightSpec, C64};

/// Level of the coarse grid for path snapshots.
pub const SNAPSHOT_LEVEL: u32 = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CltError {
    #[error("wrong regime: {0}")]
    WrongRegime(String),
    #[error("an ensemble needs at least 2 replicas, got {0}")]
    CountTooSmall(usize),
    #[error("tail 0 makes every residual vanish")]
    DegenerateTail,
    #[error("the central limit theorems need real weights")]
    NotReal,
    #[error("sample is empty")]
    EmptySample,
    #[error("moment order {0} is outside 1..=4")]
    BadOrder(u32),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    Zn,
    Rn,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnsembleOptions {
    /// Keep each replica's normalized path on the level-`s` grid.
    pub snapshot_level: Option<u32>,
    /// Skip the regime guard.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSample {
    pub spec: WeightSpec,
    pub kind: EnsembleKind,
    pub depth: u32,
    pub tail: Option<u32>,
    pub count: usize,
    pub seed: u64,
    /// Divisor applied to the raw values (`sigma_n`, or the residual scale).
    pub scale: f64,
    pub values: Vec<f64>,
    /// Per-replica normalized paths on the snapshot grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<f64>>>,
}

fn require_real(spec: &WeightSpec) -> Result<(), CltError> {
    if spec.is_real() {
        Ok(())
    } else {
        Err(CltError::NotReal)
    }
}

fn require_count(count: usize) -> Result<(), CltError> {
    if count < 2 {
        Err(CltError::CountTooSmall(count))
    } else {
        Ok(())
    }
}

fn prefix_path(increments: &[C64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for z in increments {
        acc += z.re;
        out.push(acc / scale);
    }
    out
}

fn split(results: Vec<(f64, Option<Vec<f64>>)>) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
    let has_paths = results.first().is_some_and(|r| r.1.is_some());
    let mut values = Vec::with_capacity(results.len());
    let mut paths = Vec::new();
    for (v, p) in results {
        values.push(v);
        if let Some(p) = p {
            paths.push(p);
        }
    }
    (values, has_paths.then_some(paths))
}

/// `count` replicas of `Z_n(1) = F_n(1) / sigma_n`.
pub fn normalized_ensemble(spec: &WeightSpec, n: u32, count: usize, seed: u64) -> Result<EnsembleSample, CltError> {
    normalized_ensemble_with(spec, n, count, seed, EnsembleOptions::default())
}

pub fn normalized_ensemble_with(
    spec: &WeightSpec,
    n: u32,
    count: usize,
    seed: u64,
    opts: EnsembleOptions,
) -> Result<EnsembleSample, CltError> {
    require_count(count)?;
    require_real(spec)?;
    if !opts.force {
        let report = regime::classify(spec);
        if report.regime != Regime::TightCLT {
            return Err(CltError::WrongRegime(format!(
                "normalized ensembles need the TightCLT regime, got {:?}",
                report.regime
            )));
        }
    }
    let scale = regime::sigma_n(spec, n)?;
    let snap = opts.snapshot_level.map(|s| s.min(n));
    let results: Vec<(f64, Option<Vec<f64>>)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let tv = terminal_values(spec, n, keyed::replica_seed(seed, Domain::Normalized, i), snap);
            let path = tv.snapshot.as_ref().map(|inc| prefix_path(inc, scale));
            (tv.by_level[n as usize].re / scale, path)
        })
        .collect();
    let (values, paths) = split(results);
    Ok(EnsembleSample {
        spec: spec.clone(),
        kind: EnsembleKind::Zn,
        depth: n,
        tail: None,
        count,
        seed,
        scale,
        values,
        paths,
    })
}

/// `count` samples of `sqrt(F_{W^(2), n}(1)) g`.
pub fn reference_sample(spec: &WeightSpec, n: u32, count: usize, seed: u64) -> Result<EnsembleSample, CltError> {
    reference_sample_with(spec, n, count, seed, EnsembleOptions::default())
}

pub fn reference_sample_with(
    spec: &WeightSpec,
    n: u32,
    count: usize,
    seed: u64,
    opts: EnsembleOptions,
) -> Result<EnsembleSample, CltError> {
    require_count(count)?;
    require_real(spec)?;
    let time = spec.beta_transform(2.0)?;
    if !opts.force {
        let report = regime::classify(&time);
        if report.regime != Regime::ConvergentLp {
            return Err(CltError::WrongRegime(format!(
                "the time change W^(2) must be convergent, got {:?}",
                report.regime
            )));
        }
    }
    let snap = opts.snapshot_level.map(|s| s.min(n));
    let results: Vec<(f64, Option<Vec<f64>>)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let s = keyed::replica_seed(seed, Domain::Reference, i);
            let tv = terminal_values(&time, n, s, snap);
            let mut rng = keyed::reference_stream(s);
            let g: f64 = rng.sample(StandardNormal);
            let value = tv.by_level[n as usize].re.max(0.0).sqrt() * g;
            let path = tv.snapshot.as_ref().map(|inc| {
                let gauss: Vec<C64> = inc
                    .iter()
                    .map(|dt| {
                        let z: f64 = rng.sample(StandardNormal);
                        C64::new(dt.re.max(0.0).sqrt() * z, 0.0)
                    })
                    .collect();
                prefix_path(&gauss, 1.0)
            });
            (value, path)
        })
        .collect();
    let (values, paths) = split(results);
    Ok(EnsembleSample {
        spec: spec.clone(),
        kind: EnsembleKind::Reference,
        depth: n,
        tail: None,
        count,
        seed,
        scale: 1.0,
        values,
        paths,
    })
}

/// `sigma = sqrt(m_2 - 1)`, the standard deviation of the limit `F(1)`.
pub fn residual_sigma(spec: &WeightSpec) -> Result<f64, CltError> {
    let m2 = moments::limit_moment_convergent(spec, 2)?;
    Ok((m2 - 1.0).sqrt())
}

/// `count` replicas of `(F_n(1) - F_{n+tail}(1)) / (sigma b^{-n phi(2)/2})`.
///
/// The truncated limit makes the expected square `1 - b^{-tail phi(2)}`
/// rather than 1.
pub fn residual_ensemble(
    spec: &WeightSpec,
    n: u32,
    tail: u32,
    count: usize,
    seed: u64,
) -> Result<EnsembleSample, CltError> {
    residual_ensemble_with(spec, n, tail, count, seed, EnsembleOptions::default())
}

pub fn residual_ensemble_with(
    spec: &WeightSpec,
    n: u32,
    tail: u32,
    count: usize,
    seed: u64,
    opts: EnsembleOptions,
) -> Result<EnsembleSample, CltError> {
    require_count(count)?;
    require_real(spec)?;
    if tail == 0 {
        return Err(CltError::DegenerateTail);
    }
    if !opts.force {
        let report = regime::classify(spec);
        if report.regime != Regime::ConvergentLp || report.phi_at_2 <= 0.0 {
            return Err(CltError::WrongRegime(format!(
                "residuals need the ConvergentLp regime with phi(2) > 0, got {:?} with phi(2) = {}",
                report.regime, report.phi_at_2
            )));
        }
    }
    let sigma = residual_sigma(spec)?;
    let scale = sigma * spec.abs_moment_sum(2.0).powf(n as f64 / 2.0);
    let depth = n + tail;
    let snap = opts.snapshot_level.map(|s| s.min(n));
    let results: Vec<(f64, Option<Vec<f64>>)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let s = keyed::replica_seed(seed, Domain::Residual, i);
            let tv = terminal_values(spec, depth, s, None);
            let value = (tv.by_level[n as usize].re - tv.by_level[depth as usize].re) / scale;
            let path = snap.map(|lvl| {
                let fine = terminal_values(spec, depth, s, Some(lvl)).snapshot.unwrap_or_default();
                let coarse = terminal_values(spec, n, s, Some(lvl)).snapshot.unwrap_or_default();
                let diff: Vec<C64> = coarse.iter().zip(&fine).map(|(a, b)| a - b).collect();
                prefix_path(&diff, scale)
            });
            (value, path)
        })
        .collect();
    let (values, paths) = split(results);
    Ok(EnsembleSample {
        spec: spec.clone(),
        kind: EnsembleKind::Rn,
        depth: n,
        tail: Some(tail),
        count,
        seed,
        scale,
        values,
        paths,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_distance(a: &EnsembleSample, b: &EnsembleSample) -> f64 {
    ks_statistic(&a.values, &b.values)
}

pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStat {
    pub order: u32,
    pub estimate: f64,
    pub std_error: f64,
    pub target: Option<f64>,
    pub target_method: Option<Method>,
}

impl MomentStat {
    /// `|estimate - target| / std_error`.
    pub fn z_score(&self) -> Option<f64> {
        self.target.map(|t| (self.estimate - t).abs() / self.std_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub kind: EnsembleKind,
    pub depth: u32,
    pub count: usize,
    pub seed: u64,
    pub ks_statistic: Option<f64>,
    pub moments: Vec<MomentStat>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn moment(&self, order: u32) -> Option<&MomentStat> {
        self.moments.iter().find(|m| m.order == order)
    }
}

/// Mean of `x^k` with its jackknife standard error.
fn jackknife_power_mean(xs: &[f64], k: u32) -> (f64, f64) {
    let n = xs.len() as f64;
    let powers: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
    let total: f64 = powers.iter().sum();
    let mean = total / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let loo: Vec<f64> = powers.iter().map(|p| (total - p) / (n - 1.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / n;
    let var = loo.iter().map(|t| (t - loo_mean).powi(2)).sum::<f64>() * (n - 1.0) / n;
    (mean, var.sqrt())
}

/// Exact value of `E(X^k)` for the sampled quantity, when available.
fn target(sample: &EnsembleSample, k: u32, notes: &mut Vec<String>) -> Option<(f64, Method)> {
    let spec = &sample.spec;
    match sample.kind {
        EnsembleKind::Zn => moments::finite_n_moment(spec, k, sample.depth)
            .ok()
            .map(|v| (v, Method::Eq44)),
        EnsembleKind::Reference => {
            if k % 2 == 1 {
                return Some((0.0, Method::Eq45));
            }
            let limit = moments::limit_moment_even(spec, k).ok()?;
            if k == 4 {
                if let (Ok(time), true) = (spec.beta_transform(2.0), true) {
                    let vhat = moments::second_moment_exact(&time, sample.depth).ok();
                    let m2hat = moments::limit_moment_convergent(&time, 2).ok();
                    if let (Some(v), Some(m)) = (vhat, m2hat) {
                        notes.push(format!(
                            "depth-{} time change shifts E(Z^4) by 3 (v - m2) = {:.6e}",
                            sample.depth,
                            3.0 * (v - m)
                        ));
                    }
                }
            }
            Some((limit, Method::Eq45))
        }
        EnsembleKind::Rn => match k {
            1 => Some((0.0, Method::VRecursion)),
            2 => {
                let tail = sample.tail.unwrap_or(0) as i32;
                let factor = 1.0 - spec.abs_moment_sum(2.0).powi(tail);
                notes.push(format!(
                    "F is truncated at depth n + {tail}: E(R_n^2) = 1 - b^(-tail phi(2)) = {factor:.6}"
                ));
                Some((factor, Method::VRecursion))
            }
            _ => None,
        },
    }
}

/// Empirical moments of orders in `1..=4` with jackknife standard errors and
/// the exact targets the moment recursions provide.
pub fn moment_report(sample: &EnsembleSample, orders: &[u32]) -> Result<ComparisonReport, CltError> {
    if sample.values.is_empty() {
        return Err(CltError::EmptySample);
    }
    if let Some(&bad) = orders.iter().find(|&&k| !(1..=4).contains(&k)) {
        return Err(CltError::BadOrder(bad));
    }
    let mut notes = Vec::new();
    let moments = orders
        .iter()
        .map(|&k| {
            let (estimate, std_error) = jackknife_power_mean(&sample.values, k);
            let t = target(sample, k, &mut notes);
            MomentStat {
                order: k,
                estimate,
                std_error,
                target: t.map(|t| t.0),
                target_method: t.map(|t| t.1),
            }
        })
        .collect();
    Ok(ComparisonReport {
        kind: sample.kind,
        depth: sample.depth,
        count: sample.count,
        seed: sample.seed,
        ks_statistic: None,
        moments,
        notes,
    })
}

/// Reference table entry used by reports: the exact value for `(q, n)`.
pub fn exact_target(spec: &WeightSpec, q: u32, n: Depth) -> Option<f64> {
    match n {
        Depth::Finite(n) => moments::finite_n_moment(spec, q, n).ok(),
        Depth::Limit => moments::limit_moment_even(spec, q).ok(),
    }
}
