//! Inference-service clients: multimodal chat (MLLM / VLM / LLM) and the
//! zero-shot category classifier, with retry and a shared in-flight cap.

mod http;
mod mock;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::frame::Frame;

pub use http::{HttpChatClient, HttpClassifier};
pub use mock::{MockChatClient, MockClassifier, MockFixture};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    /// Network failure, timeout, 5xx or 429. Retried.
    #[error("transport error: {0}")]
    Transport(String),
    /// Malformed or unexpected reply. Not retried.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("empty response")]
    Empty,
    #[error("bad endpoint `{0}`")]
    Endpoint(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport(_))
    }
}

/// Why a request is made. Mocks key their canned answers on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    DiversityAndText,
    ContentVariation,
    ClipCaption,
    Refine,
    Compose,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::DiversityAndText => "diversity_and_text",
            Purpose::ContentVariation => "content_variation",
            Purpose::ClipCaption => "clip_caption",
            Purpose::Refine => "refine",
            Purpose::Compose => "compose",
        }
    }
}

/// Request metadata that never goes over the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestContext {
    pub video_id: String,
    pub purpose: Purpose,
    /// Text inputs the prompt was built from (raw captions for refine/compose).
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub prompt: String,
    pub images: Vec<Frame>,
    pub context: RequestContext,
}

impl ChatRequest {
    /// SHA-256 over the prompt and raw image bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.prompt.len() as u64).to_le_bytes());
        h.update(self.prompt.as_bytes());
        for img in &self.images {
            h.update(img.width.to_le_bytes());
            h.update(img.height.to_le_bytes());
            h.update(&img.data);
        }
        hex::encode(h.finalize())
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError>;
    fn tag(&self) -> String;
}

/// Zero-shot classifier: returns candidate labels ranked by score, best first.
pub trait Classifier: Send + Sync {
    fn rank(&self, text: &str, labels: &[&str]) -> Result<Vec<(String, f64)>, ClientError>;
    fn tag(&self) -> String;
}

/// Counting semaphore shared by every worker that talks to inference services.
#[derive(Debug)]
pub struct InflightBudget {
    available: Mutex<usize>,
    freed: Condvar,
}

pub struct InflightPermit<'a> {
    budget: &'a InflightBudget,
}

impl InflightBudget {
    pub fn new(cap: usize) -> Self {
        Self {
            available: Mutex::new(cap.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InflightPermit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        InflightPermit { budget: self }
    }
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        *self.budget.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.budget.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        Self {
            retries: cfg.retry_count,
            base_delay: Duration::from_millis(cfg.retry_base_ms),
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1 << attempt.min(16))
    }
}

/// One call plus up to `policy.retries` retries with exponential backoff.
/// Empty replies count as failures.
pub fn complete_with_retry(
    client: &dyn ChatClient,
    req: &ChatRequest,
    policy: RetryPolicy,
    budget: &InflightBudget,
) -> Result<String, ClientError> {
    let mut attempt = 0;
    loop {
        let result = {
            let _permit = budget.acquire();
            client.complete(req)
        };
        match result {
            Ok(text) if text.trim().is_empty() => return Err(ClientError::Empty),
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < policy.retries => {
                log::warn!(
                    "{} for {}/{} failed ({e}); retry {} of {}",
                    client.tag(),
                    req.context.video_id,
                    req.context.purpose.as_str(),
                    attempt + 1,
                    policy.retries
                );
                std::thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn chat_client_from_endpoint(endpoint: &str, model: &str, timeout: Duration) -> Result<Arc<dyn ChatClient>, ClientError> {
    if endpoint == "mock" {
        return Ok(Arc::new(MockChatClient::default()));
    }
    if let Some(path) = endpoint.strip_prefix("mock:") {
        let fixture = MockFixture::load(path).map_err(|e| ClientError::Endpoint(format!("{endpoint}: {e}")))?;
        return Ok(Arc::new(MockChatClient::new(fixture)));
    }
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        return Ok(Arc::new(HttpChatClient::new(endpoint, model, timeout)));
    }
    Err(ClientError::Endpoint(endpoint.to_string()))
}

pub fn classifier_from_endpoint(endpoint: &str, timeout: Duration) -> Result<Arc<dyn Classifier>, ClientError> {
    if endpoint == "mock" {
        return Ok(Arc::new(MockClassifier::default()));
    }
    if let Some(path) = endpoint.strip_prefix("mock:") {
        return MockClassifier::load(path)
            .map(|c| Arc::new(c) as Arc<dyn Classifier>)
            .map_err(|e| ClientError::Endpoint(format!("{endpoint}: {e}")));
    }
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        return Ok(Arc::new(HttpClassifier::new(endpoint, timeout)));
    }
    Err(ClientError::Endpoint(endpoint.to_string()))
}

/// The four clients a run needs, plus the shared call discipline.
#[derive(Clone)]
pub struct Clients {
    pub mllm: Arc<dyn ChatClient>,
    pub vlm: Arc<dyn ChatClient>,
    pub llm: Arc<dyn ChatClient>,
    pub classifier: Arc<dyn Classifier>,
    pub budget: Arc<InflightBudget>,
    pub retry: RetryPolicy,
}

impl Clients {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ClientError> {
        let timeout = Duration::from_secs(cfg.client_timeout_s);
        Ok(Self {
            mllm: chat_client_from_endpoint(&cfg.mllm_endpoint, &cfg.mllm_model, timeout)?,
            vlm: chat_client_from_endpoint(&cfg.vlm_endpoint, &cfg.vlm_model, timeout)?,
            llm: chat_client_from_endpoint(&cfg.llm_endpoint, &cfg.llm_model, timeout)?,
            classifier: classifier_from_endpoint(&cfg.classifier_endpoint, timeout)?,
            budget: Arc::new(InflightBudget::new(cfg.max_inflight)),
            retry: RetryPolicy::from_config(cfg),
        })
    }

    /// Same client behind all three chat roles.
    pub fn uniform(chat: Arc<dyn ChatClient>, classifier: Arc<dyn Classifier>, retry: RetryPolicy) -> Self {
        Self {
            mllm: chat.clone(),
            vlm: chat.clone(),
            llm: chat,
            classifier,
            budget: Arc::new(InflightBudget::new(4)),
            retry,
        }
    }
}
