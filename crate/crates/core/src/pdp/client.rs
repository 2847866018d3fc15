use std::time::{Duration, Instant};

use thiserror::Error;

use super::wire::{WireRequest, WireResponse};
use crate::policy::Action;

#[derive(Debug, Error)]
pub enum PepError {
    /// The service could not be reached within the budget.
    #[error("no answer from the decision point within {0:?}")]
    Timeout(Duration),
    /// The service answered, but not with a usable decision.
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Enforcement-point client. Forwards requests and returns the service's
/// decision unchanged; nothing is decided locally.
#[derive(Debug, Clone)]
pub struct PepClient {
    http: reqwest::Client,
    endpoint: String,
    timeout: Duration,
}

const RETRY_PAUSE: Duration = Duration::from_millis(20);

impl PepClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            http: reqwest::Client::new(),
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            timeout,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub async fn decide(&self, request: &WireRequest) -> Result<WireResponse, PepError> {
        let path = match request.action {
            Action::Read | Action::Write => "/v1/decide",
            Action::VerifyChain => "/v1/verify-chain",
        };
        let url = format!("{}{}", self.endpoint, path);
        let deadline = Instant::now() + self.timeout;
        let response = loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(PepError::Timeout(self.timeout));
            }
            match self
                .http
                .post(&url)
                .json(request)
                .timeout(remaining)
                .send()
                .await
            {
                Ok(r) => break r,
                Err(e) if e.is_timeout() => return Err(PepError::Timeout(self.timeout)),
                Err(e) if e.is_connect() => {
                    let pause = RETRY_PAUSE.min(deadline.saturating_duration_since(Instant::now()));
                    tokio::time::sleep(pause).await;
                }
                Err(e) => return Err(PepError::Protocol(e.to_string())),
            }
        };
        let status = response.status();
        let body = response
            .bytes()
            .await
            .map_err(|e| PepError::Protocol(e.to_string()))?;
        if !status.is_success() {
            return Err(PepError::Protocol(format!(
                "status {status}: {}",
                String::from_utf8_lossy(&body)
            )));
        }
        let decoded: WireResponse = serde_json::from_slice(&body)
            .map_err(|e| PepError::Protocol(format!("bad response body: {e}")))?;
        if decoded.request_id != request.request_id {
            return Err(PepError::Protocol(format!(
                "response for {} answered request {}",
                decoded.request_id, request.request_id
            )));
        }
        Ok(decoded)
    }

    pub async fn health(&self) -> Result<serde_json::Value, PepError> {
        let r = self
            .http
            .get(format!("{}/v1/health", self.endpoint))
            .timeout(self.timeout)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() {
                    PepError::Timeout(self.timeout)
                } else {
                    PepError::Protocol(e.to_string())
                }
            })?;
        r.json()
            .await
            .map_err(|e| PepError::Protocol(e.to_string()))
    }
}

/// One-shot convenience around [`PepClient::decide`].
pub async fn pep_request(
    endpoint: &str,
    request: &WireRequest,
    timeout: Duration,
) -> Result<WireResponse, PepError> {
    PepClient::new(endpoint, timeout).decide(request).await
}
