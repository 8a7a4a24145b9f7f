//! Complex b-adic independent multiplicative cascades.
//!
//! A cascade is driven by a random weight vector `W = (W_0, ..., W_{b-1})`
//! with `E(sum W_i) = 1`. Level `n` of the construction multiplies weights
//! down a `b`-ary tree and integrates the resulting piecewise constant
//! density, giving a random continuous function `F_n` on `[0, 1]`.
//!
//! The crate covers
//!
//! * [`weights`]: validated finite-support laws and the structure function
//!   `phi_W(p) = -log_b E(sum |W_i|^p)`;
//! * [`regime`]: which limit theorem applies to a given law;
//! * [`cascade`]: seeded, refinement-stable realizations and sample paths;
//! * [`analysis`]: oscillations, free-energy slopes and the multifractal
//!   time change;
//! * [`moments`]: exact moment recursions and a brute-force oracle;
//! * [`clt`]: Monte Carlo ensembles for the central limit theorems.
//!
//! ```
//! use cascadelab::{catalog, regime};
//!
//! let spec = catalog::levy_c();
//! let beta = regime::solve_beta(&spec).unwrap();
//! assert!((beta - 2.0).abs() < 1e-9);
//! ```

pub mod analysis;
pub mod cascade;
pub mod catalog;
pub mod clt;
mod error;
pub mod keyed;
pub mod moments;
pub mod regime;
pub mod weights;

pub use error::{Error, ErrorClass};
pub use keyed::NodeKey;
pub use weights::{Atom, VectorAtom, WeightError, WeightModel, WeightSpec, WeightVector, C64};

/// Serde helpers for extended reals: infinities are written as `"inf"` and
/// `"-inf"` because JSON has no literal for them.
pub mod extended {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_str("inf")
        } else if *x == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not an extended real: {other}"))),
            },
        }
    }
}
