use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ols, AnalysisError};
use crate::cascade::{CascadeRealization, SamplePath};
use crate::weights::C64;

/// Cells per parallel work item.
const CELL_CHUNK: usize = 256;

fn cross(o: C64, a: C64, b: C64) -> f64 {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
fn hull(points: &[C64]) -> Vec<C64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<C64> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<C64> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Diameter of a planar point set, scanning pairs of hull vertices.
///
/// Hulls of path segments stay small, and the pair scan has no trouble with
/// nearly collinear vertices.
pub fn diameter(points: &[C64]) -> f64 {
    let h = hull(points);
    let mut best: f64 = 0.0;
    for (i, p) in h.iter().enumerate() {
        for q in &h[i + 1..] {
            best = best.max((p - q).norm());
        }
    }
    best
}

fn real_diameter(points: &[C64]) -> f64 {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z.re), hi.max(z.re)));
    hi - lo
}

/// Oscillation of the sampled values over each level-`m` cell of a grid of
/// `b^level + 1` values (cell endpoints are shared with the neighbors).
pub fn oscillations_of(values: &[C64], b: usize, level: u32, m: u32) -> Result<Vec<f64>, AnalysisError> {
    if m > level {
        return Err(AnalysisError::LevelTooDeep { level: m, path_level: level });
    }
    let span = b.pow(level - m);
    let cells = b.pow(m);
    let real = values.iter().all(|z| z.im == 0.0);
    let osc = |k: usize| {
        let window = &values[k * span..=(k + 1) * span];
        if real {
            real_diameter(window)
        } else {
            diameter(window)
        }
    };
    let mut out = vec![0.0; cells];
    out.par_chunks_mut(CELL_CHUNK).enumerate().for_each(|(c, dst)| {
        for (j, d) in dst.iter_mut().enumerate() {
            *d = osc(c * CELL_CHUNK + j);
        }
    });
    Ok(out)
}

/// `Osc_F(I_w)` for every word of length `m`, from the samples of `path`.
///
/// Sampled oscillations can only under-estimate the supremum over the cell;
/// the gap shrinks as the cell holds more grid points.
pub fn oscillations(path: &SamplePath, m: u32) -> Result<Vec<f64>, AnalysisError> {
    oscillations_of(&path.values, path.b, path.level, m)
}

/// Least-squares free-energy slopes over an explicit level window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub q: Vec<f64>,
    pub tau_hat: Vec<f64>,
    pub level_lo: u32,
    pub level_hi: u32,
    /// `partition_sums[i][j] = sum_{Osc > 0} Osc^{q_i}` at level `level_lo + j`.
    pub partition_sums: Vec<Vec<f64>>,
}

/// Default regression window `n/4 ..= n - 4` for a depth-`n` path, widened
/// to three levels on shallow paths.
pub fn default_tau_window(depth: u32) -> RangeInclusive<u32> {
    let lo = depth / 4;
    let hi = depth.saturating_sub(4).max(lo + 2).min(depth);
    lo..=hi
}

/// For each `q`, the slope of `-log_b sum_{Osc(I_w) != 0} Osc(I_w)^q` against
/// `m` over `level_lo..=level_hi`.
pub fn tau_estimate(
    path: &SamplePath,
    q_list: &[f64],
    level_lo: u32,
    level_hi: u32,
) -> Result<TauEstimate, AnalysisError> {
    if level_hi > path.level {
        return Err(AnalysisError::LevelTooDeep {
            level: level_hi,
            path_level: path.level,
        });
    }
    if level_hi < level_lo + 2 {
        return Err(AnalysisError::WindowTooShort {
            lo: level_lo,
            hi: level_hi,
            needed: 3,
        });
    }
    let mut ln_osc_by_level = Vec::new();
    for m in level_lo..=level_hi {
        ln_osc_by_level.push(positive_logs(&oscillations(path, m)?, m)?);
    }
    Ok(tau_from_logs(path.b, q_list, level_lo, &ln_osc_by_level))
}

fn positive_logs(osc: &[f64], m: u32) -> Result<Vec<f64>, AnalysisError> {
    let logs: Vec<f64> = osc.iter().filter(|&&o| o > 0.0).map(|o| o.ln()).collect();
    if logs.is_empty() {
        Err(AnalysisError::AllCellsZero(m))
    } else {
        Ok(logs)
    }
}

/// The regression step of [`tau_estimate`] on per-level `ln Osc` values.
fn tau_from_logs(b: usize, q_list: &[f64], level_lo: u32, ln_osc_by_level: &[Vec<f64>]) -> TauEstimate {
    let ln_b = (b as f64).ln();
    let level_hi = level_lo + ln_osc_by_level.len() as u32 - 1;
    let xs: Vec<f64> = (level_lo..=level_hi).map(|m| m as f64).collect();
    let mut tau_hat = Vec::with_capacity(q_list.len());
    let mut partition_sums = Vec::with_capacity(q_list.len());
    for &q in q_list {
        let ln_sums: Vec<f64> = ln_osc_by_level
            .iter()
            .map(|logs| {
                let terms: Vec<f64> = logs.iter().map(|l| q * l).collect();
                crate::weights::log_sum_exp(&terms)
            })
            .collect();
        let ys: Vec<f64> = ln_sums.iter().map(|s| -s / ln_b).collect();
        tau_hat.push(ols(&xs, &ys).0);
        partition_sums.push(ln_sums.iter().map(|s| s.exp()).collect());
    }
    TauEstimate {
        q: q_list.to_vec(),
        tau_hat,
        level_lo,
        level_hi,
        partition_sums,
    }
}

/// Entry `m` is `sup_t |F_{m+1}(t) - F_m(t)|` over the level-`(m+1)` grid,
/// for `m = 0..depth`.
pub fn cauchy_profile(real: &CascadeRealization) -> Result<Vec<f64>, AnalysisError> {
    if real.depth() < 2 {
        return Err(AnalysisError::TooShallow);
    }
    let b = real.spec().b();
    let mut out = Vec::with_capacity(real.depth() as usize);
    for m in 0..real.depth() {
        let coarse = real.path(m)?;
        let fine = real.path(m + 1)?;
        let q = real.level(m)?;
        let sup = fine
            .values
            .par_iter()
            .enumerate()
            .map(|(j, &v)| {
                let cell = j / b;
                let coarse_val = if cell == q.len() {
                    coarse.values[cell]
                } else {
                    let frac = (j % b) as f64 / b as f64;
                    coarse.values[cell] + q[cell] * frac
                };
                (v - coarse_val).norm()
            })
            .reduce(|| 0.0, f64::max);
        out.push(sup);
    }
    Ok(out)
}
