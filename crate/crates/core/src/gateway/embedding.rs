use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::retry::{RetryPolicy, Sleeper, ThreadSleeper};
use super::run_with_retries;
use super::transport::{http_agent, join_url, post_json, TransportError};
use crate::distiller::{EmbeddingProvider, ProviderError};

/// Remote embedding model behind an OpenAI-style `POST {base_url}/embeddings`.
pub struct HttpEmbeddingProvider {
    base_url: String,
    api_key: Option<String>,
    model: String,
    dimension: usize,
    batch_size: usize,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    agent: ureq::Agent,
}

impl HttpEmbeddingProvider {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
        dimension: usize,
        timeout: Duration,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            api_key,
            model: model.into(),
            dimension,
            batch_size: 32,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            agent: http_agent(timeout),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, TransportError> {
        #[derive(Deserialize)]
        struct Item {
            #[serde(default)]
            index: usize,
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Body {
            data: Vec<Item>,
        }
        let url = join_url(&self.base_url, "embeddings");
        let payload = serde_json::json!({ "model": self.model, "input": texts });
        let body = post_json(&self.agent, &url, self.api_key.as_deref(), &payload)?;
        let mut parsed: Body =
            serde_json::from_str(&body).map_err(|e| TransportError::Malformed(e.to_string()))?;
        parsed.data.sort_by_key(|d| d.index);
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let delays = self
            .retry
            .delays(&mut ChaCha8Rng::seed_from_u64(texts.len() as u64));
        let (result, attempts) = run_with_retries(
            self.retry.max_attempts,
            &delays,
            self.sleeper.as_ref(),
            || self.request(texts),
        );
        let vectors = result.map_err(|error| ProviderError::Transport { error, attempts })?;
        if vectors.len() != texts.len() {
            return Err(ProviderError::Count {
                expected: texts.len(),
                got: vectors.len(),
            });
        }
        Ok(vectors)
    }
}
