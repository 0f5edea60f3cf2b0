use std::fmt;

use proxisim_core::Error;

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

pub const CONFIG: i32 = 2;
pub const DATA: i32 = 3;
pub const NUMERICAL: i32 = 4;

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: CONFIG, error: error.into() }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: DATA, error: error.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            CONFIG => "config",
            DATA => "data",
            NUMERICAL => "numerical",
            _ => "internal",
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = format!("{:#}", self.error).replace('\n', " ");
        write!(f, "error[{}]: {msg}", self.kind())
    }
}

/// Core errors map to an exit code by kind; anything else is a data problem.
impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.chain().find_map(|e| e.downcast_ref::<Error>()) {
            Some(Error::Invalid(_)) => CONFIG,
            Some(Error::StepTooCoarse { .. } | Error::Domain(_) | Error::AbsorbingLocation(_)) => NUMERICAL,
            _ => DATA,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        anyhow::Error::from(error).into()
    }
}
