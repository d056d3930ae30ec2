use thiserror::Error;

use crate::event::FaultKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("modulus family is custom; Osgood divergence is undecidable analytically")]
    OsgoodUndecidable,

    #[error("(jap:cond) violated on probe set: {0}")]
    JapCondViolated(String),

    #[error("{value} lies outside the image {image:?} of the map")]
    Domain { value: f64, image: (f64, f64) },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown model `{name}`; valid names: {valid}")]
    UnknownModel { name: String, valid: String },

    #[error("integration fault ({kind:?}) at t = {time}")]
    Fault { kind: FaultKind, time: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
