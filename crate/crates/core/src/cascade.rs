//! Seeded realizations of the cascade tree and the sample paths `F_n`.
//!
//! Node `w` at level `l` carries the weight vector `W(w)` sampled from the
//! keyed stream at `NodeKey { level: l, index: k }`, where `k` is the base-`b`
//! integer encoding of `w`. The products are `Q(w i) = Q(w) W_i(w)` with
//! `Q(root) = 1`, and `F_n` has increment `Q(w)` over the cell `I_w`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::keyed::{self, NodeKey};
use crate::weights::{WeightSpec, C64};

/// Largest number of level-`n` cells built without an explicit override.
pub const MAX_CELLS: u64 = 1 << 26;

/// Parents handled per parallel work item.
const CHUNK: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CascadeError {
    #[error("b^depth = {b}^{depth} exceeds the 2^26 cell guard")]
    DepthTooLarge { b: usize, depth: u32 },
    #[error("word at level {word_level} is deeper than level {n}")]
    WordTooDeep { word_level: u32, n: u32 },
    #[error("level {level} exceeds the realized depth {depth}")]
    LevelTooDeep { level: u32, depth: u32 },
    #[error("word index {index} is out of range for level {level}")]
    BadWord { level: u32, index: u64 },
    #[error("phi is not finite at p = {0}")]
    NonFinitePhi(f64),
}

fn check_depth(b: usize, depth: u32, allow_large: bool) -> Result<(), CascadeError> {
    if allow_large {
        return Ok(());
    }
    match (b as u64).checked_pow(depth) {
        Some(cells) if cells <= MAX_CELLS => Ok(()),
        _ => Err(CascadeError::DepthTooLarge { b, depth }),
    }
}

/// Values of `F_n` on the level-`n` grid: entry `k` is `F_n(k b^{-n})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub level: u32,
    pub b: usize,
    pub values: Vec<C64>,
}

impl SamplePath {
    /// Prefix sums of the level increments, with compensated summation.
    pub fn from_increments(level: u32, b: usize, increments: &[C64]) -> Self {
        let mut values = Vec::with_capacity(increments.len() + 1);
        values.push(C64::new(0.0, 0.0));
        let (mut sum, mut comp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for &x in increments {
            neumaier_add(&mut sum, &mut comp, x);
            values.push(sum + comp);
        }
        Self { level, b, values }
    }

    /// Grid point `k b^{-level}`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 / (self.b as f64).powi(self.level as i32)
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|z| z.im == 0.0)
    }

    /// `F(1)`.
    pub fn terminal(&self) -> C64 {
        *self.values.last().expect("nonempty path")
    }

    /// `max_k |F(k b^{-level})|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn neumaier_add(sum: &mut C64, comp: &mut C64, x: C64) {
    let two_sum = |s: f64, c: &mut f64, x: f64| -> f64 {
        let t = s + x;
        if s.abs() >= x.abs() {
            *c += (s - t) + x;
        } else {
            *c += (x - t) + s;
        }
        t
    };
    sum.re = two_sum(sum.re, &mut comp.re, x.re);
    sum.im = two_sum(sum.im, &mut comp.im, x.im);
}

/// Compensated sum of a slice.
pub(crate) fn compensated_sum(xs: &[C64]) -> C64 {
    let (mut sum, mut comp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for &x in xs {
        neumaier_add(&mut sum, &mut comp, x);
    }
    sum + comp
}

/// A depth-`n` realization with every level of products stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRealization {
    spec: WeightSpec,
    seed: u64,
    depth: u32,
    /// `q_levels[l][k] = Q(w)` for the level-`l` word with index `k`.
    q_levels: Vec<Vec<C64>>,
}

/// Products of level `level + 1` from those of level `level`.
fn next_level(spec: &WeightSpec, seed: u64, level: u32, parents: &[C64]) -> Vec<C64> {
    let b = spec.b();
    let draws = spec.draws_per_node();
    let mut children = vec![C64::new(0.0, 0.0); parents.len() * b];
    children
        .par_chunks_mut(CHUNK * b)
        .zip(parents.par_chunks(CHUNK))
        .enumerate()
        .for_each(|(chunk, (out, qs))| {
            let mut rng = keyed::level_stream(seed, level);
            keyed::seek(&mut rng, (chunk * CHUNK) as u64, draws);
            let mut w = vec![C64::new(0.0, 0.0); b];
            for (q, dst) in qs.iter().zip(out.chunks_mut(b)) {
                spec.sample_into(&mut rng, &mut w);
                for (d, &wi) in dst.iter_mut().zip(&w) {
                    *d = q * wi;
                }
            }
        });
    children
}

impl CascadeRealization {
    /// Builds levels `0..=depth`, refusing more than [`MAX_CELLS`] cells.
    pub fn realize(spec: &WeightSpec, depth: u32, seed: u64) -> Result<Self, CascadeError> {
        Self::realize_with_guard(spec, depth, seed, false)
    }

    pub fn realize_with_guard(
        spec: &WeightSpec,
        depth: u32,
        seed: u64,
        allow_large: bool,
    ) -> Result<Self, CascadeError> {
        let root = Self {
            spec: spec.clone(),
            seed,
            depth: 0,
            q_levels: vec![vec![C64::new(1.0, 0.0)]],
        };
        root.extend_with_guard(depth, allow_large)
    }

    /// Deepens the tree. The result is bit-identical to realizing directly at
    /// `new_depth` with the same seed.
    pub fn extend(self, new_depth: u32) -> Result<Self, CascadeError> {
        self.extend_with_guard(new_depth, false)
    }

    pub fn extend_with_guard(mut self, new_depth: u32, allow_large: bool) -> Result<Self, CascadeError> {
        check_depth(self.spec.b(), new_depth, allow_large)?;
        for level in self.depth..new_depth {
            let next = next_level(&self.spec, self.seed, level, &self.q_levels[level as usize]);
            self.q_levels.push(next);
        }
        self.depth = self.depth.max(new_depth);
        Ok(self)
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn q_levels(&self) -> &[Vec<C64>] {
        &self.q_levels
    }

    /// `Q(w)` for every word of length `level`.
    pub fn level(&self, level: u32) -> Result<&[C64], CascadeError> {
        self.q_levels
            .get(level as usize)
            .map(Vec::as_slice)
            .ok_or(CascadeError::LevelTooDeep {
                level,
                depth: self.depth,
            })
    }

    /// `W(w)` recomputed from the seed.
    pub fn weights_at(&self, node: NodeKey) -> Vec<C64> {
        self.spec.sample(node, self.seed).into_values()
    }

    /// The path `F_m` on its level-`m` grid.
    pub fn path(&self, m: u32) -> Result<SamplePath, CascadeError> {
        Ok(SamplePath::from_increments(m, self.spec.b(), self.level(m)?))
    }

    /// `F_n(I_w)`, the increment over the cell of `word`: `Q(w)` times the
    /// mass of the subtree below `w` down to level `n`.
    pub fn increment(&self, word: NodeKey, n: u32) -> Result<C64, CascadeError> {
        if word.level > n {
            return Err(CascadeError::WordTooDeep {
                word_level: word.level,
                n,
            });
        }
        let leaves = self.level(n)?;
        let b = self.spec.b() as u64;
        if word.index >= b.pow(word.level) {
            return Err(CascadeError::BadWord {
                level: word.level,
                index: word.index,
            });
        }
        let span = b.pow(n - word.level);
        let start = (word.index * span) as usize;
        Ok(compensated_sum(&leaves[start..start + span as usize]))
    }

    /// `max_{|w| = m} |Q(w)|`.
    pub fn max_level_product(&self, m: u32) -> Result<f64, CascadeError> {
        Ok(self.level(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// Level-`m` increments `b^{m phi(beta)} |Q(w)|^beta` of the companion
    /// cascade driven by `W^(beta)` on the same tree.
    pub fn companion_increments(&self, beta: f64, m: u32) -> Result<Vec<f64>, CascadeError> {
        let phi = self.spec.phi(beta);
        if !phi.is_finite() || beta <= 0.0 {
            return Err(CascadeError::NonFinitePhi(beta));
        }
        let log_scale = m as f64 * phi * (self.spec.b() as f64).ln();
        let scale = log_scale.exp();
        let half = beta / 2.0;
        Ok(self
            .level(m)?
            .iter()
            .map(|q| {
                let n2 = q.norm_sqr();
                if n2 == 0.0 {
                    return 0.0;
                }
                let direct = n2.powf(half) * scale;
                if direct.is_finite() && direct > 0.0 {
                    direct
                } else {
                    (log_scale + half * n2.ln()).exp()
                }
            })
            .collect())
    }

    /// The path of `F_{W^(beta)}` at the realized depth, built from `|Q|`.
    pub fn coupled_companion(&self, beta: f64) -> Result<SamplePath, CascadeError> {
        self.coupled_companion_at(beta, self.depth)
    }

    pub fn coupled_companion_at(&self, beta: f64, m: u32) -> Result<SamplePath, CascadeError> {
        let inc: Vec<C64> = self
            .companion_increments(beta, m)?
            .into_iter()
            .map(|x| C64::new(x, 0.0))
            .collect();
        Ok(SamplePath::from_increments(m, self.spec.b(), &inc))
    }
}

/// Free-function forms of the realization methods.
pub fn realize(spec: &WeightSpec, depth: u32, seed: u64) -> Result<CascadeRealization, CascadeError> {
    CascadeRealization::realize(spec, depth, seed)
}

pub fn extend(real: CascadeRealization, new_depth: u32) -> Result<CascadeRealization, CascadeError> {
    real.extend(new_depth)
}

pub fn path(real: &CascadeRealization, m: u32) -> Result<SamplePath, CascadeError> {
    real.path(m)
}

/// Output of [`terminal_values`].
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalValues {
    /// `F_l(1)` for `l = 0..=depth`.
    pub by_level: Vec<C64>,
    /// `F_depth(I_w)` for every `w` of length `snapshot_level`, if requested.
    pub snapshot: Option<Vec<C64>>,
}

struct Walker<'a> {
    spec: &'a WeightSpec,
    depth: u32,
    draws: u64,
    /// Per-level stream and the node index it is positioned at.
    cursors: Vec<(rand_chacha::ChaCha8Rng, u64)>,
    sums: Vec<(C64, C64)>,
    snapshot_level: Option<u32>,
    snapshot: Vec<C64>,
    scratch: Vec<Vec<C64>>,
}

impl Walker<'_> {
    fn visit(&mut self, level: u32, index: u64, q: C64) -> C64 {
        let (s, c) = &mut self.sums[level as usize];
        neumaier_add(s, c, q);
        if level == self.depth {
            return q;
        }
        if q == C64::new(0.0, 0.0) {
            // Dead subtree: every descendant product vanishes.
            return q;
        }
        {
            let (rng, pos) = &mut self.cursors[level as usize];
            if *pos != index {
                keyed::seek(rng, index, self.draws);
            }
            let mut w = std::mem::take(&mut self.scratch[level as usize]);
            self.spec.sample_into(rng, &mut w);
            *pos = index + 1;
            self.scratch[level as usize] = w;
        }
        let b = self.spec.b() as u64;
        let mut mass = C64::new(0.0, 0.0);
        for i in 0..b {
            let wi = self.scratch[level as usize][i as usize];
            let child = index * b + i;
            let m = self.visit(level + 1, child, q * wi);
            if self.snapshot_level == Some(level + 1) {
                self.snapshot[child as usize] = m;
            }
            mass += m;
        }
        mass
    }
}

/// `F_l(1)` at every level of a depth-`depth` tree, by depth-first traversal
/// in `O(depth * b)` memory. Samples are the same as in
/// [`CascadeRealization::realize`] for the same seed.
pub fn terminal_values(
    spec: &WeightSpec,
    depth: u32,
    seed: u64,
    snapshot_level: Option<u32>,
) -> TerminalValues {
    let b = spec.b();
    let snap = snapshot_level.filter(|&s| s <= depth);
    let mut walker = Walker {
        spec,
        depth,
        draws: spec.draws_per_node(),
        cursors: (0..depth).map(|l| (keyed::level_stream(seed, l), 0)).collect(),
        sums: vec![(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); depth as usize + 1],
        snapshot_level: snap,
        snapshot: vec![C64::new(0.0, 0.0); snap.map_or(0, |s| b.pow(s))],
        scratch: vec![vec![C64::new(0.0, 0.0); b]; depth as usize],
    };
    let total = walker.visit(0, 0, C64::new(1.0, 0.0));
    let by_level = walker.sums.iter().map(|(s, c)| s + c).collect();
    let snapshot = snap.map(|s| {
        if s == 0 {
            vec![total]
        } else {
            std::mem::take(&mut walker.snapshot)
        }
    });
    TerminalValues { by_level, snapshot }
}
