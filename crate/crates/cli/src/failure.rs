use std::fmt;

use itosym::Error;

/// A message and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const CONFIG: u8 = 1;
pub const EVALUATION: u8 = 2;
pub const UNCLASSIFIED: u8 = 3;
pub const ALL_TRUNCATED: u8 = 4;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: CONFIG, message: message.into() }
    }

    pub fn evaluation(message: impl Into<String>) -> Self {
        Failure { code: EVALUATION, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_)
            | Error::InvalidParams(_)
            | Error::GridTooSmall(_)
            | Error::Unsupported(_)
            | Error::NoWSymmetry(_)
            | Error::NonInvertible(_) => CONFIG,
            _ => EVALUATION,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("i/o error: {e}"))
    }
}
