use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::EndpointConfig;
use crate::HarnessError;

/// Failure of a single HTTP attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("rate limited or out of quota")]
    Quota,
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {0}: {1}")]
    Status(u16, String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl CallError {
    fn from_reqwest(e: reqwest::Error) -> Self {
        if e.is_timeout() {
            CallError::Timeout
        } else if e.is_connect() {
            CallError::Unreachable(e.to_string())
        } else {
            CallError::Malformed(e.to_string())
        }
    }
}

/// Result of a call after retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallOutcome {
    pub text: Option<String>,
    pub attempts: u32,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    cfg: EndpointConfig,
    token: Option<String>,
}

impl ChatClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let token = cfg.token()?;
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(ChatClient { http, cfg, token })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.base_url.trim_end_matches('/'))
    }

    async fn post(&self, path: &str, body: Value) -> Result<Value, CallError> {
        let mut req = self.http.post(self.url(path)).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.map_err(CallError::from_reqwest)?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(CallError::Quota);
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(CallError::Status(
                status.as_u16(),
                body.chars().take(200).collect(),
            ));
        }
        resp.json::<Value>().await.map_err(CallError::from_reqwest)
    }

    /// One chat request with a single user message.
    pub async fn chat_once(&self, prompt: &str) -> Result<String, CallError> {
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        });
        if let Some(m) = self.cfg.max_tokens {
            body["max_tokens"] = json!(m);
        }
        let v = self.post("chat/completions", body).await?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| CallError::Malformed("no choices[0].message.content".into()))
    }

    /// Chat request with exponential backoff. Quota and connection errors
    /// that survive the retry budget are returned as run-level failures;
    /// anything else yields an outcome without text.
    pub async fn chat(&self, prompt: &str) -> Result<CallOutcome, HarnessError> {
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let err = match self.chat_once(prompt).await {
                Ok(text) => {
                    return Ok(CallOutcome {
                        text: Some(text),
                        attempts,
                        latency_ms: started.elapsed().as_millis() as u64,
                        error: None,
                    })
                }
                Err(e) => e,
            };
            if attempts > self.cfg.retry_budget {
                return match err {
                    CallError::Quota => Err(HarnessError::QuotaExhausted),
                    CallError::Unreachable(m) => Err(HarnessError::EndpointUnreachable(m)),
                    other => Ok(CallOutcome {
                        text: None,
                        attempts,
                        latency_ms: started.elapsed().as_millis() as u64,
                        error: Some(other.to_string()),
                    }),
                };
            }
            tracing::debug!(attempt = attempts, error = %err, "retrying");
            let delay = self
                .cfg
                .backoff_base_ms
                .saturating_mul(1 << (attempts - 1).min(10));
            tokio::time::sleep(Duration::from_millis(delay)).await;
        }
    }

    /// Log-probability of `continuation` given `context`, summed over the
    /// continuation's tokens, from an echoing `/completions` call.
    pub async fn continuation_logprob(
        &self,
        context: &str,
        continuation: &str,
    ) -> Result<f64, CallError> {
        let text = format!("{context}{continuation}");
        let body = json!({
            "model": self.cfg.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
            "temperature": 0.0,
        });
        let v = self.post("completions", body).await?;
        let lp = v
            .pointer("/choices/0/logprobs")
            .ok_or_else(|| CallError::Malformed("no logprobs".into()))?;
        let offsets = lp.get("text_offset").and_then(Value::as_array);
        let values = lp.get("token_logprobs").and_then(Value::as_array);
        let (Some(offsets), Some(values)) = (offsets, values) else {
            return Err(CallError::Malformed(
                "logprobs lack text_offset/token_logprobs".into(),
            ));
        };
        let start = context.len() as u64;
        Ok(offsets
            .iter()
            .zip(values)
            .filter(|(o, _)| o.as_u64().is_some_and(|o| o >= start))
            .filter_map(|(_, v)| v.as_f64())
            .sum())
    }
}
