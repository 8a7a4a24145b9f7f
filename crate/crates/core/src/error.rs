use crate::analysis::AnalysisError;
use crate::cascade::CascadeError;
use crate::clt::CltError;
use crate::moments::MomentError;
use crate::regime::RegimeError;
use crate::weights::WeightError;

/// Union of the module errors, for callers that do not care which stage failed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Clt(#[from] CltError),
}

/// Coarse failure classes, used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input or an argument outside an operation's domain.
    Validation,
    /// The law is outside the hypotheses of the requested computation.
    Regime,
    /// A size guard refused the request.
    Resource,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            Error::Weight(_) => Validation,
            Error::Regime(e) => match e {
                RegimeError::WrongRegime(_) => Regime,
                _ => Validation,
            },
            Error::Cascade(e) => match e {
                CascadeError::DepthTooLarge { .. } => Resource,
                _ => Validation,
            },
            Error::Analysis(_) => Validation,
            Error::Moment(e) => match e {
                MomentError::WrongRegime(_)
                | MomentError::ComplexSpec
                | MomentError::DenominatorNotPositive { .. } => Regime,
                MomentError::TooManyCombinations { .. } | MomentError::OrderTooLarge(_) => Resource,
                _ => Validation,
            },
            Error::Clt(e) => match e {
                CltError::WrongRegime(_) => Regime,
                CltError::Cascade(CascadeError::DepthTooLarge { .. }) => Resource,
                CltError::Moment(m) => Error::Moment(m.clone()).class(),
                CltError::Regime(r) => Error::Regime(r.clone()).class(),
                _ => Validation,
            },
        }
    }

    /// Process exit status: 2 validation, 3 regime, 4 resource guard.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Regime => 3,
            ErrorClass::Resource => 4,
        }
    }

    /// Stable machine-readable tag such as `"MeanNotOne"`.
    pub fn kind(&self) -> String {
        let dbg = match self {
            Error::Weight(e) => format!("{e:?}"),
            Error::Regime(e) => format!("{e:?}"),
            Error::Cascade(e) => format!("{e:?}"),
            Error::Analysis(e) => format!("{e:?}"),
            Error::Moment(e) => format!("{e:?}"),
            Error::Clt(e) => match e {
                CltError::Moment(m) => format!("{m:?}"),
                CltError::Cascade(c) => format!("{c:?}"),
                CltError::Regime(r) => format!("{r:?}"),
                other => format!("{other:?}"),
            },
        };
        dbg.split(|c: char| !c.is_alphanumeric() && c != '_')
            .next()
            .unwrap_or("Error")
            .to_string()
    }
}
