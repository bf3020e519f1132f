//! Client for the `POST {endpoint}/logprobs` provider contract.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{LogprobProvider, SentenceRequest, TokenizedSentence, TOKEN_ENV};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct LogprobRequest<'a> {
    text: &'a str,
    context: Option<&'a str>,
}

#[derive(Debug, Deserialize)]
struct LogprobResponse {
    model_id: String,
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

/// Remote provider. Each sentence is attempted up to `attempts` times with
/// exponential backoff starting at `backoff_base`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    url: String,
    agent: ureq::Agent,
    token: Option<String>,
    expected_model: Option<String>,
    attempts: u32,
    backoff_base: Duration,
}

impl HttpProvider {
    pub fn new(endpoint: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpProvider {
            url: format!("{}/logprobs", endpoint.trim_end_matches('/')),
            agent,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            expected_model: None,
            attempts: 3,
            backoff_base: Duration::from_millis(500),
        }
    }

    pub fn with_expected_model(mut self, model_id: Option<String>) -> Self {
        self.expected_model = model_id;
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_retry(mut self, attempts: u32, backoff_base: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff_base = backoff_base;
        self
    }

    fn post_once(&self, body: &LogprobRequest<'_>) -> std::result::Result<String, String> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        if resp.status() != 200 {
            return Err(format!("http status {}", resp.status()));
        }
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

impl LogprobProvider for HttpProvider {
    fn model_id(&self) -> Option<&str> {
        self.expected_model.as_deref()
    }

    fn fetch(&self, request: &SentenceRequest<'_>) -> Result<TokenizedSentence> {
        let body = LogprobRequest {
            text: request.text,
            context: request.context,
        };
        let mut last_err = String::new();
        let mut raw = None;
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            match self.post_once(&body) {
                Ok(text) => {
                    raw = Some(text);
                    break;
                }
                Err(e) => {
                    log::warn!(
                        "sentence {}: attempt {} of {} failed: {e}",
                        request.sent_index,
                        attempt + 1,
                        self.attempts
                    );
                    last_err = e;
                }
            }
        }
        let raw = raw.ok_or_else(|| Error::Transport {
            sent_index: request.sent_index,
            message: last_err,
        })?;

        let resp: LogprobResponse = serde_json::from_str(&raw).map_err(|e| {
            Error::Protocol(format!("sentence {}: bad response body: {e}", request.sent_index))
        })?;
        if let Some(want) = &self.expected_model {
            if *want != resp.model_id {
                return Err(Error::Protocol(format!(
                    "server model {:?} does not match expected {want:?}",
                    resp.model_id
                )));
            }
        }
        Ok(TokenizedSentence {
            doc_id: request.doc_id.to_owned(),
            sent_index: request.sent_index,
            tokens: resp.tokens,
            logprobs: resp.logprobs,
            context_id: request.context_id.clone(),
            model_id: resp.model_id,
        })
    }
}
