//! Blocking JSON-over-HTTP client with a per-endpoint rate limiter and
//! bounded exponential-backoff retries.
//!
//! Shared by the chat-completion, remote stance and remote toxicity clients.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts = `max_retries + 1`.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn no_retries() -> Self {
        Self {
            max_retries: 0,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    /// Backoff before retry number `retry` (0-based): `base * 2^retry`, capped.
    pub fn delay_for(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(32)).unwrap_or(u64::MAX);
        let ms = self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

/// Spaces successive requests at least `1 / rate` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn unlimited() -> Self {
        Self {
            min_interval: None,
            next_slot: Mutex::new(None),
        }
    }

    /// `requests_per_second <= 0` disables limiting.
    pub fn per_second(requests_per_second: f64) -> Self {
        if !(requests_per_second > 0.0) || !requests_per_second.is_finite() {
            return Self::unlimited();
        }
        Self {
            min_interval: Some(Duration::from_secs_f64(1.0 / requests_per_second)),
            next_slot: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue a request.
    pub fn acquire(&self) {
        let Some(interval) = self.min_interval else {
            return;
        };
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CallError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    #[error("request rejected with {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl CallError {
    /// Transport failures, 5xx, 408 and 429 are retried; other 4xx are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            CallError::Transport(_) | CallError::Server { .. } => true,
            CallError::Rejected { status, .. } => matches!(status, 408 | 429),
            CallError::Decode(_) => false,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PostError {
    /// Non-retryable failure (bad credentials, quota, malformed request).
    #[error("fatal: {0}")]
    Fatal(CallError),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: CallError },
}

impl PostError {
    pub fn last_error(&self) -> &CallError {
        match self {
            PostError::Fatal(e) => e,
            PostError::Exhausted { last, .. } => last,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivered<T> {
    pub value: T,
    /// Retries performed before success.
    pub retries: u32,
}

pub struct JsonClient {
    agent: ureq::Agent,
    limiter: RateLimiter,
    retry: RetryPolicy,
    headers: Vec<(String, String)>,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("retry", &self.retry)
            .field("limiter", &self.limiter)
            .field("headers", &self.headers.iter().map(|(k, _)| k).collect::<Vec<_>>())
            .finish()
    }
}

impl JsonClient {
    pub fn new(timeout: Duration, requests_per_second: f64, retry: RetryPolicy) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            limiter: RateLimiter::per_second(requests_per_second),
            retry,
            headers: Vec::new(),
        }
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    fn post_once<T: DeserializeOwned>(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<T, CallError> {
        self.limiter.acquire();
        let mut req = self.agent.post(url);
        for (k, v) in &self.headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| CallError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CallError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| CallError::Decode(e.to_string())),
            500..=599 => Err(CallError::Server { status, body: text }),
            _ => Err(CallError::Rejected { status, body: text }),
        }
    }

    /// POSTs `body` and decodes the JSON reply, retrying retryable failures.
    pub fn post_json<T: DeserializeOwned>(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<Delivered<T>, PostError> {
        let mut retries = 0;
        loop {
            match self.post_once(url, body) {
                Ok(value) => return Ok(Delivered { value, retries }),
                Err(e) if !e.is_retryable() => return Err(PostError::Fatal(e)),
                Err(e) if retries >= self.retry.max_retries => {
                    warn!(url, error = %e, "retries exhausted");
                    return Err(PostError::Exhausted {
                        attempts: retries + 1,
                        last: e,
                    });
                }
                Err(e) => {
                    let delay = self.retry.delay_for(retries);
                    debug!(url, error = %e, ?delay, "retrying");
                    thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay_ms: 100,
            max_delay_ms: 1000,
        };
        assert_eq!(p.delay_for(0), Duration::from_millis(100));
        assert_eq!(p.delay_for(1), Duration::from_millis(200));
        assert_eq!(p.delay_for(3), Duration::from_millis(800));
        assert_eq!(p.delay_for(4), Duration::from_millis(1000));
        assert_eq!(p.delay_for(63), Duration::from_millis(1000));
    }

    #[test]
    fn retryable_classification() {
        assert!(CallError::Transport("x".into()).is_retryable());
        assert!(CallError::Server { status: 503, body: String::new() }.is_retryable());
        assert!(CallError::Rejected { status: 429, body: String::new() }.is_retryable());
        assert!(!CallError::Rejected { status: 401, body: String::new() }.is_retryable());
        assert!(!CallError::Rejected { status: 403, body: String::new() }.is_retryable());
        assert!(!CallError::Decode("x".into()).is_retryable());
    }

    #[test]
    fn limiter_spaces_requests() {
        let l = RateLimiter::per_second(50.0);
        let t0 = Instant::now();
        for _ in 0..4 {
            l.acquire();
        }
        // three full intervals of 20 ms between four requests
        assert!(t0.elapsed() >= Duration::from_millis(55));
    }

    #[test]
    fn non_positive_rate_is_unlimited() {
        let l = RateLimiter::per_second(0.0);
        let t0 = Instant::now();
        for _ in 0..100 {
            l.acquire();
        }
        assert!(t0.elapsed() < Duration::from_millis(50));
    }
}
