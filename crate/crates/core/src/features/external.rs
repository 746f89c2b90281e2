//! HTTP client for an external embedding service.
//!
//! Request body `{"texts": [..]}`, response body `{"vectors": [[..], ..]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingProvider;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub dimension: usize,
    /// Name used in cache keys and model bindings.
    #[serde(default = "default_provider_name")]
    pub provider: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_provider_name() -> String {
    "external".into()
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_timeout_s() -> u64 {
    60
}

impl ExternalConfig {
    pub fn new(endpoint: impl Into<String>, dimension: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            dimension,
            provider: default_provider_name(),
            api_key_env: None,
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub struct ExternalProvider {
    config: ExternalConfig,
    id: String,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl ExternalProvider {
    pub fn new(config: ExternalConfig) -> Result<Self> {
        if config.dimension == 0 {
            return Err(Error::Validation("external provider dimension must be positive".into()));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Validation(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .build()
            .into();
        Ok(Self {
            id: format!("{}-d{}", config.provider, config.dimension),
            config,
            agent,
            api_key,
        })
    }

    fn post_once(&self, texts: &[String]) -> std::result::Result<EmbedResponse, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(&EmbedRequest { texts }) {
            Ok(mut resp) => resp
                .body_mut()
                .read_json::<EmbedResponse>()
                .map_err(|e| Attempt::Fatal(Error::ProviderContract(format!("bad response body: {e}")))),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Attempt::retry(format!("HTTP {code}"))
            }
            Err(ureq::Error::StatusCode(code)) => {
                Err(Attempt::Fatal(Error::Transport(format!("HTTP {code} from {}", self.config.endpoint))))
            }
            Err(e) => Attempt::retry(e.to_string()),
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl Attempt {
    fn retry<T>(msg: String) -> std::result::Result<T, Attempt> {
        Err(Attempt::Retry(msg))
    }
}

impl EmbeddingProvider for ExternalProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed_documents(&self, docs: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
        let texts: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.post_once(&texts) {
                Ok(resp) => return Ok(resp.vectors),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("embedding request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::Transport(format!(
            "{} unreachable after {} attempts: {last}",
            self.config.endpoint,
            self.config.max_retries + 1
        )))
    }
}
