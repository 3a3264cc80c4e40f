//! Black-box access to a VQA model.
//!
//! A model is anything implementing [`ModelEndpoint`]: the HTTP client for a
//! served model, or the table-driven [`MockModel`] used for scripted runs.

use std::collections::HashMap;
use std::future::Future;
use std::num::NonZeroUsize;
use std::path::Path;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

mod http;

pub use http::{HttpModel, HttpModelConfig};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    /// File path or URL, forwarded to the model as `image_url`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaRequest {
    pub image: ImageRef,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaResponse {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum ModelError {
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transport failure: {0}")]
    TransportFailure(String),
}

pub trait ModelEndpoint: Sync {
    fn answer(
        &self,
        request: &VqaRequest,
    ) -> impl Future<Output = Result<VqaResponse, ModelError>> + Send;

    fn health(&self) -> impl Future<Output = Result<(), ModelError>> + Send;
}

/// Answers many requests with at most `parallelism` in flight.
///
/// `out[i]` always answers `requests[i]`; a failed item never aborts the batch.
pub async fn answer_batch<E: ModelEndpoint>(
    endpoint: &E,
    requests: &[VqaRequest],
    parallelism: NonZeroUsize,
) -> Vec<Result<VqaResponse, ModelError>> {
    stream::iter(requests)
        .map(|r| endpoint.answer(r))
        .buffered(parallelism.get())
        .collect()
        .await
}

/// Lowercased, `?!.,` stripped, whitespace collapsed: the mock table key form.
pub fn normalize_question(question: &str) -> String {
    question
        .chars()
        .filter(|c| !matches!(c, '?' | '!' | '.' | ','))
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    pub image_id: String,
    pub question: String,
    pub answer: String,
}

/// On-disk mock table: `{"default": "...", "entries": [{"image_id", "question", "answer"}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockTable {
    pub default: String,
    #[serde(default)]
    pub entries: Vec<MockEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum MockTableError {
    #[error("failed to read mock table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("mock table {path} is malformed: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("mock table default answer is empty")]
    EmptyDefault,
}

/// Deterministic, total model answering from a lookup table.
#[derive(Debug, Clone)]
pub struct MockModel {
    answers: HashMap<(String, String), String>,
    default: String,
}

impl MockModel {
    pub fn new(table: MockTable) -> Result<MockModel, MockTableError> {
        if table.default.trim().is_empty() {
            return Err(MockTableError::EmptyDefault);
        }
        let answers = table
            .entries
            .into_iter()
            .map(|e| ((e.image_id, normalize_question(&e.question)), e.answer))
            .collect();
        Ok(MockModel {
            answers,
            default: table.default,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MockModel, MockTableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MockTableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let table = serde_json::from_str(&text).map_err(|source| MockTableError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        MockModel::new(table)
    }

    pub fn lookup(&self, image_id: &str, question: &str) -> &str {
        self.answers
            .get(&(image_id.to_owned(), normalize_question(question)))
            .unwrap_or(&self.default)
    }
}

impl ModelEndpoint for MockModel {
    async fn answer(&self, request: &VqaRequest) -> Result<VqaResponse, ModelError> {
        Ok(VqaResponse {
            answer: self.lookup(&request.image.image_id, &request.question).to_owned(),
            confidence: None,
            latency_ms: 0,
        })
    }

    async fn health(&self) -> Result<(), ModelError> {
        Ok(())
    }
}

/// Runtime-selected endpoint.
#[derive(Debug, Clone)]
pub enum Endpoint {
    Http(HttpModel),
    Mock(MockModel),
}

impl ModelEndpoint for Endpoint {
    async fn answer(&self, request: &VqaRequest) -> Result<VqaResponse, ModelError> {
        match self {
            Endpoint::Http(m) => m.answer(request).await,
            Endpoint::Mock(m) => m.answer(request).await,
        }
    }

    async fn health(&self) -> Result<(), ModelError> {
        match self {
            Endpoint::Http(m) => m.health().await,
            Endpoint::Mock(m) => m.health().await,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock() -> MockModel {
        MockModel::new(MockTable {
            default: "nothing".into(),
            entries: vec![MockEntry {
                image_id: "img1".into(),
                question: "do you see the white small dog".into(),
                answer: "yes".into(),
            }],
        })
        .unwrap()
    }

    fn request(image: &str, question: &str) -> VqaRequest {
        VqaRequest {
            image: ImageRef {
                image_id: image.into(),
                locator: None,
            },
            question: question.into(),
        }
    }

    #[tokio::test]
    async fn mock_answers_from_table_or_default() {
        let m = mock();
        let hit = m.answer(&request("img1", "Do you see the white small dog?")).await.unwrap();
        assert_eq!(hit.answer, "yes");
        let miss = m.answer(&request("img2", "Do you see the white small dog?")).await.unwrap();
        assert_eq!(miss.answer, "nothing");
        let again = m.answer(&request("img1", "do you see  the white small dog")).await.unwrap();
        assert_eq!(again, hit);
    }

    #[test]
    fn mock_requires_a_default() {
        let table = MockTable {
            default: " ".into(),
            entries: vec![],
        };
        assert!(matches!(MockModel::new(table), Err(MockTableError::EmptyDefault)));
    }

    #[tokio::test]
    async fn batch_is_ordered_and_independent_of_parallelism() {
        let m = mock();
        let requests: Vec<_> = (0..10)
            .map(|i| request(&format!("img{}", i % 3), "Do you see the white small dog?"))
            .collect();
        let one = answer_batch(&m, &requests, NonZeroUsize::new(1).unwrap()).await;
        let four = answer_batch(&m, &requests, NonZeroUsize::new(4).unwrap()).await;
        assert_eq!(one, four);
        assert_eq!(one[1].as_ref().unwrap().answer, "yes");
        assert!(answer_batch(&m, &[], NonZeroUsize::new(2).unwrap()).await.is_empty());
    }

    #[test]
    fn model_errors_serialize_with_a_tag() {
        let json = serde_json::to_string(&ModelError::TransportFailure("503".into())).unwrap();
        assert_eq!(json, r#"{"error":"transport_failure","detail":"503"}"#);
        let back: ModelError = serde_json::from_str(r#"{"error":"timeout"}"#).unwrap();
        assert_eq!(back, ModelError::Timeout);
    }
}
