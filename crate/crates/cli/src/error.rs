//! Exit-code classification. Every failure ends the process with one
//! stderr line `error kind=<usage|data|runtime> code=<n> reason=<text>`.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Runtime,
}

impl ErrorKind {
    pub fn code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Runtime => 3,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Runtime => "runtime",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub reason: String,
}

impl CliError {
    pub fn usage(reason: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, reason: reason.into() }
    }

    pub fn data(reason: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, reason: reason.into() }
    }

    pub fn runtime(reason: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Runtime, reason: reason.into() }
    }

    /// The single machine-parsable line.
    pub fn line(&self) -> String {
        let reason: String = self.reason.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error kind={} code={} reason={reason}", self.kind.label(), self.kind.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<cep3::Error> for CliError {
    fn from(e: cep3::Error) -> Self {
        use cep3::Error as E;
        let kind = match &e {
            E::MalformedRow { .. }
            | E::NegativeTime { .. }
            | E::FeatureArity { .. }
            | E::EmptyStream
            | E::FeaturesPresent(_)
            | E::NotInCommunity { .. }
            | E::Container(_)
            | E::Io(_)
            | E::Json(_) => ErrorKind::Data,
            E::InvalidSplit(_) | E::InvalidArgument(_) | E::UnstableHawkes { .. } => ErrorKind::Usage,
            E::Shape { .. } | E::NonFinite { .. } | E::NonScalarLoss { .. } | E::EmptyCommunity | E::PairBudget { .. } => ErrorKind::Runtime,
        };
        Self { kind, reason: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
