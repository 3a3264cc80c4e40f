use std::time::{Duration, Instant};

use serde::Serialize;

use super::{ModelEndpoint, ModelError, VqaRequest, VqaResponse};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpModelConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each further attempt.
    pub backoff: Duration,
}

impl HttpModelConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpModelConfig {
            base_url: base_url.into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            backoff: Duration::from_millis(250),
        }
    }
}

/// Client for a model served over the `/answer` + `/health` JSON protocol.
#[derive(Debug, Clone)]
pub struct HttpModel {
    config: HttpModelConfig,
    client: reqwest::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    image_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_url: Option<&'a str>,
    question: &'a str,
}

enum Failure {
    Retry(ModelError),
    Fatal(ModelError),
}

impl HttpModel {
    pub fn new(config: HttpModelConfig) -> Result<HttpModel, ModelError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ModelError::TransportFailure(e.to_string()))?;
        Ok(HttpModel { config, client })
    }

    pub fn config(&self) -> &HttpModelConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    async fn attempt(&self, request: &VqaRequest) -> Result<VqaResponse, Failure> {
        let started = Instant::now();
        let body = WireRequest {
            image_id: &request.image.image_id,
            image_url: request.image.locator.as_deref(),
            question: &request.question,
        };
        let response = self
            .client
            .post(self.url("answer"))
            .json(&body)
            .send()
            .await
            .map_err(transport_failure)?;

        let status = response.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Retry(ModelError::TransportFailure(format!("HTTP {status}"))));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(ModelError::TransportFailure(format!("HTTP {status}"))));
        }
        let value: serde_json::Value = response.json().await.map_err(|e| {
            if e.is_timeout() {
                Failure::Retry(ModelError::Timeout)
            } else {
                Failure::Fatal(ModelError::MalformedResponse(e.to_string()))
            }
        })?;

        let answer = match value.get("answer") {
            Some(serde_json::Value::String(a)) if !a.trim().is_empty() => a.clone(),
            Some(_) => {
                return Err(Failure::Fatal(ModelError::MalformedResponse(
                    "\"answer\" is not a non-empty string".into(),
                )))
            }
            None => {
                return Err(Failure::Fatal(ModelError::MalformedResponse(
                    "missing \"answer\" field".into(),
                )))
            }
        };
        let confidence = match value.get("confidence") {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => match v.as_f64() {
                Some(c) if (0.0..=1.0).contains(&c) => Some(c),
                _ => {
                    return Err(Failure::Fatal(ModelError::MalformedResponse(
                        "\"confidence\" must be a number in [0, 1]".into(),
                    )))
                }
            },
        };
        Ok(VqaResponse {
            answer,
            confidence,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

fn transport_failure(e: reqwest::Error) -> Failure {
    if e.is_timeout() {
        Failure::Retry(ModelError::Timeout)
    } else {
        Failure::Retry(ModelError::TransportFailure(e.to_string()))
    }
}

impl ModelEndpoint for HttpModel {
    async fn answer(&self, request: &VqaRequest) -> Result<VqaResponse, ModelError> {
        let mut attempt = 0;
        loop {
            match self.attempt(request).await {
                Ok(response) => return Ok(response),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) if attempt >= self.config.max_retries => return Err(e),
                Err(Failure::Retry(_)) => {
                    tokio::time::sleep(self.config.backoff * 2u32.saturating_pow(attempt)).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn health(&self) -> Result<(), ModelError> {
        let response = self
            .client
            .get(self.url("health"))
            .send()
            .await
            .map_err(|e| match transport_failure(e) {
                Failure::Retry(e) | Failure::Fatal(e) => e,
            })?;
        if !response.status().is_success() {
            return Err(ModelError::TransportFailure(format!(
                "health check returned HTTP {}",
                response.status()
            )));
        }
        let value: serde_json::Value = response
            .json()
            .await
            .map_err(|e| ModelError::MalformedResponse(e.to_string()))?;
        match value.get("status").and_then(|s| s.as_str()) {
            Some("ok") => Ok(()),
            _ => Err(ModelError::MalformedResponse(format!(
                "health status is not \"ok\": {value}"
            ))),
        }
    }
}
