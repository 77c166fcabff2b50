//! Client side of the model sidecar's JSON-over-HTTP protocol.
//!
//! Endpoints: `POST /v1/embed/text`, `POST /v1/embed/image`,
//! `POST /v1/generate/text`, `POST /v1/generate/image` and `GET /v1/health`.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that overrides the configured backend endpoint.
pub const ENDPOINT_ENV: &str = "MMGUARD_BACKEND_URL";

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar unreachable at {url}: {message}")]
    Unavailable { url: String, message: String },
    #[error("sidecar returned HTTP {status} for {url}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("malformed sidecar response from {url}: {message}")]
    Protocol { url: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedTextRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedTextResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedImageRequest {
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedImageResponse {
    pub dim: usize,
    pub vector: Vec<f32>,
}

/// Decoding parameters forwarded with every text-generation request.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams { temperature: 1.2, max_tokens: 64, top_p: 0.95 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateTextRequest {
    pub caption: String,
    pub kind: String,
    pub seed: u64,
    #[serde(flatten)]
    pub decoding: DecodingParams,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateTextResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateImageRequest {
    pub image_b64: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateImageResponse {
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HealthResponse {
    pub status: String,
    pub dim: usize,
    #[serde(default)]
    pub models: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct SidecarClient {
    base_url: String,
    agent: ureq::Agent,
}

impl SidecarClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(60))
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        SidecarClient { base_url: base_url.into().trim_end_matches('/').to_string(), agent }
    }

    /// Uses the endpoint from `MMGUARD_BACKEND_URL` when set, else `configured`.
    pub fn from_env_or(configured: &str) -> Self {
        match std::env::var(ENDPOINT_ENV) {
            Ok(url) if !url.is_empty() => Self::new(url),
            _ => Self::new(configured),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    fn read<T: DeserializeOwned>(
        url: String,
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T, SidecarError> {
        let mut response =
            result.map_err(|e| SidecarError::Unavailable { url: url.clone(), message: e.to_string() })?;
        let status = response.status().as_u16();
        if status >= 400 {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(SidecarError::Status { url, status, body });
        }
        response.body_mut().read_json::<T>().map_err(|e| SidecarError::Protocol { url, message: e.to_string() })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, SidecarError> {
        let url = self.url(path);
        let result = self.agent.post(&url).send_json(body);
        Self::read(url, result)
    }

    pub fn health(&self) -> Result<HealthResponse, SidecarError> {
        let url = self.url("/v1/health");
        let result = self.agent.get(&url).call();
        Self::read(url, result)
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<EmbedTextResponse, SidecarError> {
        self.post("/v1/embed/text", &EmbedTextRequest { texts: texts.to_vec() })
    }

    pub fn embed_image(&self, image_b64: String) -> Result<EmbedImageResponse, SidecarError> {
        self.post("/v1/embed/image", &EmbedImageRequest { image_b64 })
    }

    pub fn generate_text(&self, request: &GenerateTextRequest) -> Result<GenerateTextResponse, SidecarError> {
        self.post("/v1/generate/text", request)
    }

    pub fn generate_image(&self, request: &GenerateImageRequest) -> Result<GenerateImageResponse, SidecarError> {
        self.post("/v1/generate/image", request)
    }
}
