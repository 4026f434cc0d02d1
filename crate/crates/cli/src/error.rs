use std::fmt;

use serde_json::json;

use fractal_spectra::error::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Resource,
    Io,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Numeric => "numeric",
            ErrorKind::Resource => "resource",
            ErrorKind::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Resource => 4,
            ErrorKind::Io => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// Offending config key, as a path like `.a`.
    pub key: Option<String>,
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message: message.into(),
            key: Some(key.into()),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Io,
            message: message.into(),
            key: None,
        }
    }

    /// Attach a key path to a library error raised while validating it.
    pub fn at(err: CoreError, key: &str) -> Self {
        let mut e = CliError::from(err);
        e.key = Some(key.to_string());
        e
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    pub fn to_json(&self) -> String {
        let body = json!({
            "error": {
                "kind": self.kind.name(),
                "key": self.key,
                "message": self.message,
                "exit_code": self.exit_code(),
            }
        });
        serde_json::to_string_pretty(&body).expect("error JSON serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{} error at {k}: {}", self.kind.name(), self.message),
            None => write!(f, "{} error: {}", self.kind.name(), self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let kind = match err {
            CoreError::Parameter(_) | CoreError::Precondition(_) => ErrorKind::Config,
            CoreError::Resource { .. } => ErrorKind::Resource,
            CoreError::Numeric(_) | CoreError::Structure(_) | CoreError::Index { .. } => ErrorKind::Numeric,
        };
        CliError {
            kind,
            message: err.to_string(),
            key: None,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::io(err.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_kind() {
        assert_eq!(CliError::from(CoreError::Parameter("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(CoreError::Numeric("x".into())).exit_code(), 3);
        let cap = CoreError::Resource {
            level: 12,
            vertices: 1 << 30,
            cap: 10,
        };
        assert_eq!(CliError::from(cap).exit_code(), 4);
    }

    #[test]
    fn error_json_carries_key() {
        let e = CliError::config(".a", "missing");
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["key"], ".a");
        assert_eq!(v["error"]["kind"], "config");
        assert_eq!(v["error"]["exit_code"], 2);
    }
}
