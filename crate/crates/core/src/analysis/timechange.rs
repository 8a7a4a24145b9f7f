use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{ols, oscillations_of, AnalysisError};
use crate::cascade::{CascadeRealization, SamplePath};
use crate::weights::C64;

/// Right-continuous generalized inverse `G^{-1}(y) = sup{t : G(t) <= y}` of a
/// nondecreasing piecewise linear path.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneInverse {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl MonotoneInverse {
    pub fn eval(&self, y: f64) -> f64 {
        let n = self.values.len();
        if y < self.values[0] {
            return self.times[0];
        }
        // First knot strictly above y.
        let j = self.values.partition_point(|&g| g <= y);
        if j == n {
            return self.times[n - 1];
        }
        let (g0, g1) = (self.values[j - 1], self.values[j]);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        t0 + (y - g0) / (g1 - g0) * (t1 - t0)
    }

    /// `G(t)` by linear interpolation between knots.
    pub fn forward(&self, t: f64) -> f64 {
        let n = self.times.len();
        let j = self.times.partition_point(|&s| s <= t);
        if j == 0 {
            return self.values[0];
        }
        if j == n {
            return self.values[n - 1];
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let (g0, g1) = (self.values[j - 1], self.values[j]);
        g0 + (t - t0) / (t1 - t0) * (g1 - g0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The generalized inverse of a real nondecreasing path.
pub fn invert_monotone(path: &SamplePath) -> Result<MonotoneInverse, AnalysisError> {
    for (k, w) in path.values.windows(2).enumerate() {
        if w[1].re < w[0].re || w[1].im != 0.0 {
            return Err(AnalysisError::NotMonotone(k + 1));
        }
    }
    if path.values[0].im != 0.0 {
        return Err(AnalysisError::NotMonotone(0));
    }
    Ok(MonotoneInverse {
        times: (0..path.values.len()).map(|k| path.time(k)).collect(),
        values: path.values.iter().map(|z| z.re).collect(),
    })
}

/// Graph of `B = F o G^{-1}` at the images of the grid: knot `k` is
/// `(G(t_k), F(t_k))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricCurve {
    pub level: u32,
    pub b: usize,
    pub knots: Vec<(f64, C64)>,
}

impl ParametricCurve {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.iter().map(|k| k.0)
    }

    pub fn values(&self) -> impl Iterator<Item = C64> + '_ {
        self.knots.iter().map(|k| k.1)
    }
}

/// Pairs the depth-`n` path of `F_W` with the companion `F_{W^(beta)}` of the
/// same tree.
pub fn time_change(real: &CascadeRealization, beta: f64) -> Result<ParametricCurve, AnalysisError> {
    let n = real.depth();
    let g = real.coupled_companion(beta)?;
    let f = real.path(n)?;
    Ok(ParametricCurve {
        level: n,
        b: real.spec().b(),
        knots: g.values.iter().map(|z| z.re).zip(f.values).collect(),
    })
}

/// Pooled Hölder slope of `B` from cell statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub slope: f64,
    pub level_lo: u32,
    pub level_hi: u32,
    /// Slope fitted on each level alone (`None` when a level has fewer than
    /// two distinct cell lengths).
    pub per_level: Vec<Option<f64>>,
    /// Cells used in the pooled regression.
    pub cells: usize,
    /// Cells dropped because `|J_w| = 0` or the oscillation vanished.
    pub excluded: usize,
}

/// Default window `max(1, n/8) ..= n/2` for a depth-`n` curve.
///
/// The oscillation of `F` over `I_w` is `|Q(w)|` times that of an independent
/// subtree of depth `n - |w|`, so coarse words see almost converged subtrees.
pub fn default_holder_window(depth: u32) -> RangeInclusive<u32> {
    (depth / 8).max(1)..=(depth / 2).max(3)
}

/// Least-squares slope of `ln Osc_B(J_w)` against `ln |J_w|`, pooled over
/// every word `w` with `|w|` in `levels`, where `J_w` is the companion
/// increment over `I_w` and `Osc_B(J_w) = Osc_F(I_w)`.
pub fn holder_estimate(
    curve: &ParametricCurve,
    real: &CascadeRealization,
    levels: RangeInclusive<u32>,
) -> Result<HolderEstimate, AnalysisError> {
    let (lo, hi) = (*levels.start(), *levels.end());
    if hi < lo + 2 {
        return Err(AnalysisError::WindowTooShort { lo, hi, needed: 3 });
    }
    if hi > curve.level || curve.level > real.depth() {
        return Err(AnalysisError::LevelTooDeep {
            level: hi,
            path_level: curve.level.min(real.depth()),
        });
    }
    let values: Vec<C64> = curve.values().collect();
    let times: Vec<f64> = curve.times().collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0;
    let mut per_level = Vec::new();
    for m in lo..=hi {
        let osc = oscillations_of(&values, curve.b, curve.level, m)?;
        let span = curve.b.pow(curve.level - m);
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for (k, &o) in osc.iter().enumerate() {
            let j = times[(k + 1) * span] - times[k * span];
            if j > 0.0 && o > 0.0 {
                lx.push(j.ln());
                ly.push(o.ln());
            } else {
                excluded += 1;
            }
        }
        let spread = lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - lx.iter().cloned().fold(f64::INFINITY, f64::min);
        per_level.push((lx.len() >= 2 && spread > 1e-9).then(|| ols(&lx, &ly).0));
        xs.extend(lx);
        ys.extend(ly);
    }
    if xs.len() < 2 {
        return Err(AnalysisError::DegenerateCells { excluded });
    }
    Ok(HolderEstimate {
        slope: ols(&xs, &ys).0,
        level_lo: lo,
        level_hi: hi,
        per_level,
        cells: xs.len(),
        excluded,
    })
}
