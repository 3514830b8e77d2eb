use std::fmt;

use pairsurv::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Input,
    Numeric,
    Config,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Input => 2,
            Kind::Numeric => 3,
            Kind::Config => 4,
        }
    }
}

/// An error that already knows its exit code.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn classify(e: &Error) -> Kind {
    match e {
        Error::DuplicateUnit(..)
        | Error::IncompletePair(..)
        | Error::BothTreated(_)
        | Error::NeitherTreated(_)
        | Error::InvalidPosition { .. }
        | Error::NegativeTime(_)
        | Error::EmptyInput
        | Error::LengthMismatch { .. } => Kind::Input,
        Error::DegenerateRiskSet
        | Error::DegenerateColumn(_)
        | Error::NotACorrelationMatrix(_)
        | Error::NoInformation(_)
        | Error::TargetUnreachable { .. } => Kind::Numeric,
        Error::InvalidGamma(_)
        | Error::TooManyPairs { .. }
        | Error::InvalidGrid
        | Error::DimensionTooLarge(..)
        | Error::GridTooLarge(..)
        | Error::InvalidArgument(_) => Kind::Config,
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind.code();
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return classify(e).code();
        }
    }
    1
}
