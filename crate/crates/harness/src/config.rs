use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

fn default_true() -> bool {
    true
}

/// Connection settings for an OpenAI-style chat-completion endpoint.
///
/// The token itself is never stored: `token_env` names the environment
/// variable it is read from at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL up to and including the API version, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Retries after the first attempt.
    #[serde(default = "default_retries")]
    pub retry_budget: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// The endpoint serves `/completions` with `echo` and `logprobs`.
    #[serde(default)]
    pub logprobs: bool,
    /// Forced-choice margins are allowed as a fallback.
    #[serde(default = "default_true")]
    pub forced_choice: bool,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            token_env: None,
            max_concurrency: default_concurrency(),
            timeout_secs: default_timeout(),
            retry_budget: default_retries(),
            backoff_base_ms: default_backoff(),
            temperature: 0.0,
            max_tokens: None,
            logprobs: false,
            forced_choice: true,
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let cfg: EndpointConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.max_concurrency == 0 {
            return Err(HarnessError::Config(
                "max_concurrency must be at least 1".into(),
            ));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(HarnessError::Config("timeout_secs must be positive".into()));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(HarnessError::Config(
                "base_url and model are required".into(),
            ));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Bearer token from the configured environment variable, if any.
    pub fn token(&self) -> Result<Option<String>, HarnessError> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| {
                HarnessError::Config(format!("environment variable {var} is not set"))
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let cfg: EndpointConfig =
            serde_json::from_str(r#"{"base_url": "http://x/v1", "model": "m"}"#).unwrap();
        assert_eq!(cfg, EndpointConfig::new("http://x/v1", "m"));
        cfg.validate().unwrap();
        let bad = EndpointConfig {
            max_concurrency: 0,
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
        let bad = EndpointConfig {
            timeout_secs: 0.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn token_is_not_serialized() {
        let cfg = EndpointConfig {
            token_env: Some("MAZENAV_TEST_TOKEN_UNSET".into()),
            ..EndpointConfig::new("u", "m")
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("MAZENAV_TEST_TOKEN_UNSET"));
        assert!(cfg.token().is_err());
    }
}
