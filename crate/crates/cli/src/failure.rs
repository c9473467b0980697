use std::fmt;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_ENVIRONMENT: u8 = 4;

/// A failed command and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn diverged(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DIVERGED,
            message: message.into(),
        }
    }
}

impl From<kdpinn::Error> for Failure {
    fn from(e: kdpinn::Error) -> Self {
        let code = match e {
            kdpinn::Error::Environment(_) => EXIT_ENVIRONMENT,
            kdpinn::Error::NonFinite(_) => EXIT_DIVERGED,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::config(e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
