use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingProvider};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

/// Client for OpenAI-compatible `/embeddings` endpoints.
pub struct OpenAiEmbedder {
    client: Client,
    base_url: String,
    api_key: String,
    model_id: String,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    index: usize,
    embedding: Vec<f64>,
}

impl OpenAiEmbedder {
    pub fn new(model_id: &str, api_key: String, base_url: Option<&str>) -> Self {
        OpenAiEmbedder {
            client: Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
            base_url: base_url.unwrap_or(DEFAULT_BASE_URL).trim_end_matches('/').to_string(),
            api_key,
            model_id: model_id.to_string(),
        }
    }

    /// Reads the key from `OPENAI_API_KEY`.
    pub fn from_env(model_id: &str, base_url: Option<&str>) -> Result<Self, EmbeddingError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| EmbeddingError::AuthError(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(model_id, key, base_url))
    }
}

pub(crate) fn classify_status(status: StatusCode, body: String) -> EmbeddingError {
    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
        EmbeddingError::AuthError(body)
    } else if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        EmbeddingError::ProviderUnavailable(format!("{status}: {body}"))
    } else {
        EmbeddingError::BadResponse(format!("{status}: {body}"))
    }
}

impl EmbeddingProvider for OpenAiEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let resp = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&Request {
                model: &self.model_id,
                input: texts,
            })
            .send()
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(classify_status(status, resp.text().unwrap_or_default()));
        }
        let mut body: Response = resp
            .json()
            .map_err(|e| EmbeddingError::BadResponse(e.to_string()))?;
        body.data.sort_by_key(|d| d.index);
        Ok(body.data.into_iter().map(|d| d.embedding).collect())
    }
}
