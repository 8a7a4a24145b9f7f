//! Named weight laws used throughout the tests, the book and the CLI
//! examples. Each one sits in a different regime.

use crate::weights::{VectorAtom, WeightSpec, C64};

#[derive(Debug, Clone)]
pub struct Entry {
    pub name: &'static str,
    pub spec: WeightSpec,
}

/// `(1/b, ..., 1/b)`: `F_n(t) = t` for every `n`.
pub fn identity(b: usize) -> WeightSpec {
    WeightSpec::deterministic_real(&vec![1.0 / b as f64; b]).expect("valid")
}

/// `((1+i)/2, (1-i)/2)`, whose limit is the Lévy dragon curve.
pub fn levy_c() -> WeightSpec {
    WeightSpec::deterministic(vec![C64::new(0.5, 0.5), C64::new(0.5, -0.5)]).expect("valid")
}

/// I.i.d. `{1 w.p. 0.6, -0.25 w.p. 0.4}`, `b = 2`: all moduli at most one, so
/// the normalized cascade satisfies a functional CLT with multifractal time.
pub fn clt() -> WeightSpec {
    WeightSpec::iid_real(2, &[(0.6, 1.0), (0.4, -0.25)]).expect("valid")
}

/// I.i.d. `{0.8, 0.2}` with probability one half each: an L^2-bounded
/// martingale.
pub fn convergent() -> WeightSpec {
    WeightSpec::iid_real(2, &[(0.5, 0.8), (0.5, 0.2)]).expect("valid")
}

/// I.i.d. `+-2^{-1/2}` with `P(+) = (2 + sqrt 2)/4`: constant modulus, and the
/// Brownian limit is run in ordinary time.
pub fn sign() -> WeightSpec {
    let v = std::f64::consts::FRAC_1_SQRT_2;
    let p = (2.0 + std::f64::consts::SQRT_2) / 4.0;
    WeightSpec::iid_real(2, &[(p, v), (1.0 - p, -v)]).expect("valid")
}

/// Deterministic `(0.9, -0.5, 0.6)` with `b = 3`.
pub fn ternary() -> WeightSpec {
    WeightSpec::deterministic_real(&[0.9, -0.5, 0.6]).expect("valid")
}

/// I.i.d. `{2.4 w.p. 0.2, 0.025 w.p. 0.8}`: the cascade degenerates to zero.
pub fn degenerate() -> WeightSpec {
    WeightSpec::iid_real(2, &[(0.2, 2.4), (0.8, 0.025)]).expect("valid")
}

/// `b = 4` mixture `{1/3: (1, -1, 1, 0), 2/3: (1/4, 1/4, 1/4, 1/4)}`: critical
/// and conservative.
pub fn critical() -> WeightSpec {
    let r = |xs: [f64; 4]| xs.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>();
    WeightSpec::mixture(
        4,
        vec![
            VectorAtom {
                p: 1.0 / 3.0,
                vector: r([1.0, -1.0, 1.0, 0.0]),
            },
            VectorAtom {
                p: 2.0 / 3.0,
                vector: r([0.25; 4]),
            },
        ],
    )
    .expect("valid")
}

/// I.i.d. `{0.625 w.p. 0.8, 0 w.p. 0.2}`: the tree dies out with probability
/// 1/16.
pub fn extinction() -> WeightSpec {
    WeightSpec::iid_real(2, &[(0.8, 0.625), (0.2, 0.0)]).expect("valid")
}

/// The eight non-trivial example laws.
pub fn examples() -> Vec<Entry> {
    vec![
        Entry { name: "levy_c", spec: levy_c() },
        Entry { name: "clt", spec: clt() },
        Entry { name: "convergent", spec: convergent() },
        Entry { name: "sign", spec: sign() },
        Entry { name: "ternary", spec: ternary() },
        Entry { name: "degenerate", spec: degenerate() },
        Entry { name: "critical", spec: critical() },
        Entry { name: "extinction", spec: extinction() },
    ]
}

/// Every catalogued law, including the identity cascades for `b = 2, 3`.
pub fn all() -> Vec<Entry> {
    let mut out = vec![
        Entry { name: "identity2", spec: identity(2) },
        Entry { name: "identity3", spec: identity(3) },
    ];
    out.extend(examples());
    out
}

/// Looks a law up by name.
pub fn by_name(name: &str) -> Option<WeightSpec> {
    all().into_iter().find(|e| e.name == name).map(|e| e.spec)
}
