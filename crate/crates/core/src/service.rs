//! HTTP clients for external scorer and translator services.
//!
//! Wire format (UTF-8 JSON over HTTP/1.1):
//!
//! * `POST {base}/v1/score` with `{"items":[{question, question_lang, passage,
//!   passage_lang, prompt_suffix, target_lang_tag}]}`, answered by
//!   `{"items":[{avg_log_likelihood, num_tokens}]}` in the same order.
//! * `POST {base}/v1/translate` with `{"text","src","tgt"}`, answered by `{"text"}`.
//! * `GET {base}/v1/health` answered by `{"status":"ok"}`.
//!
//! Failures come back as 4xx/5xx with `{"error": "..."}`.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ServiceError};
use crate::lang::LanguageCode;
use crate::likelihood::LikelihoodScore;
use crate::parallel::map_chunks;
use crate::reranker::{Scorer, ScorerRequest};
use crate::translate::Translator;

pub const MAX_BATCH_SIZE: usize = 256;
const BODY_EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceEndpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub batch_size: usize,
    /// First retry delay; doubled on every further attempt.
    pub backoff_base_ms: u64,
    /// Chunks in flight at once.
    pub parallelism: usize,
}

impl Default for ServiceEndpoint {
    fn default() -> Self {
        ServiceEndpoint {
            base_url: "http://127.0.0.1:8080".into(),
            timeout_ms: 30_000,
            max_retries: 3,
            batch_size: 64,
            backoff_base_ms: 250,
            parallelism: 4,
        }
    }
}

impl ServiceEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        ServiceEndpoint {
            base_url: base_url.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::Validation(format!(
                "service url {:?} must start with http:// or https://",
                self.base_url
            )));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Validation("service timeout must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size > MAX_BATCH_SIZE {
            return Err(Error::Validation(format!(
                "batch_size {} outside 1..={MAX_BATCH_SIZE}",
                self.batch_size
            )));
        }
        if self.parallelism == 0 {
            return Err(Error::Validation("parallelism must be at least 1".into()));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreItem<'a> {
    question: &'a str,
    question_lang: LanguageCode,
    passage: &'a str,
    passage_lang: LanguageCode,
    prompt_suffix: Option<&'a str>,
    target_lang_tag: Option<LanguageCode>,
}

#[derive(Debug, Serialize)]
struct ScoreRequestBody<'a> {
    items: Vec<ScoreItem<'a>>,
}

#[derive(Debug, Deserialize)]
struct ScoreResponseItem {
    avg_log_likelihood: f64,
    num_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct ScoreResponseBody {
    items: Vec<ScoreResponseItem>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TranslateBody<'a> {
    text: &'a str,
    src: LanguageCode,
    tgt: LanguageCode,
}

#[derive(Debug, Deserialize)]
struct TranslateResponse {
    text: String,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

/// JSON body of a `/v1/score` call.
pub fn encode_score_request(requests: &[ScorerRequest]) -> String {
    let body = ScoreRequestBody {
        items: requests
            .iter()
            .map(|r| ScoreItem {
                question: &r.question_text,
                question_lang: r.question_lang,
                passage: &r.passage_text,
                passage_lang: r.passage_lang,
                prompt_suffix: r.prompt_suffix.as_deref(),
                target_lang_tag: r.target_lang_tag,
            })
            .collect(),
    };
    serde_json::to_string(&body).expect("score requests always serialize")
}

/// Parse a `/v1/score` response that must hold exactly `expected` items.
pub fn decode_score_response(body: &str, expected: usize) -> Result<Vec<LikelihoodScore>, ServiceError> {
    let parsed: ScoreResponseBody = serde_json::from_str(body)
        .map_err(|e| ServiceError::Protocol(format!("bad score response: {e}")))?;
    if parsed.items.len() != expected {
        return Err(ServiceError::Protocol(format!(
            "sent {expected} items, got {} scores back",
            parsed.items.len()
        )));
    }
    parsed
        .items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            if !item.avg_log_likelihood.is_finite() {
                return Err(ServiceError::Protocol(format!("item {i}: non-finite score")));
            }
            if item.num_tokens == 0 {
                return Err(ServiceError::Protocol(format!("item {i}: num_tokens must be at least 1")));
            }
            Ok(LikelihoodScore {
                avg_log_likelihood: item.avg_log_likelihood,
                num_tokens: item.num_tokens as usize,
            })
        })
        .collect()
}

/// JSON body of a `/v1/translate` call.
pub fn encode_translate_request(text: &str, src: LanguageCode, tgt: LanguageCode) -> String {
    serde_json::to_string(&TranslateBody { text, src, tgt }).expect("translate requests always serialize")
}

pub fn decode_translate_response(body: &str) -> Result<String, ServiceError> {
    let parsed: TranslateResponse = serde_json::from_str(body)
        .map_err(|e| ServiceError::Protocol(format!("bad translate response: {e}")))?;
    if parsed.text.is_empty() {
        return Err(ServiceError::Protocol("empty translation".into()));
    }
    Ok(parsed.text)
}

fn excerpt(body: &str) -> String {
    let msg = serde_json::from_str::<ErrorBody>(body)
        .map(|b| b.error)
        .unwrap_or_else(|_| body.to_owned());
    match msg.char_indices().nth(BODY_EXCERPT_CHARS) {
        Some((cut, _)) => format!("{}...", &msg[..cut]),
        None => msg,
    }
}

fn map_ureq(e: ureq::Error) -> ServiceError {
    match e {
        ureq::Error::Io(_)
        | ureq::Error::Timeout(_)
        | ureq::Error::HostNotFound
        | ureq::Error::ConnectionFailed
        | ureq::Error::Protocol(_)
        | ureq::Error::BodyStalled => ServiceError::Transport(e.to_string()),
        other => ServiceError::Other(other.to_string()),
    }
}

/// Blocking JSON-over-HTTP client shared by the scorer and translator.
#[derive(Debug, Clone)]
struct Client {
    endpoint: ServiceEndpoint,
    agent: ureq::Agent,
}

enum Method<'a> {
    Get,
    Post(&'a str),
}

impl Client {
    fn new(endpoint: ServiceEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Client { endpoint, agent })
    }

    fn once(&self, path: &str, method: &Method<'_>) -> Result<String, ServiceError> {
        let url = self.endpoint.url(path);
        let response = match method {
            Method::Get => self.agent.get(&url).call(),
            Method::Post(body) => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(*body),
        };
        let mut response = response.map_err(map_ureq)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(map_ureq)?;
        if !(200..300).contains(&status) {
            return Err(ServiceError::Status {
                status,
                body: excerpt(&text),
            });
        }
        Ok(text)
    }

    /// Transport failures are retried with exponential backoff; everything else
    /// is returned at once.
    fn call(&self, path: &str, method: Method<'_>) -> Result<String, ServiceError> {
        let mut attempt = 0;
        loop {
            match self.once(path, &method) {
                Err(ServiceError::Transport(msg)) if attempt < self.endpoint.max_retries => {
                    let delay = self.endpoint.backoff_base_ms.saturating_mul(1 << attempt.min(20));
                    log::debug!("{path}: {msg}; retry {} in {delay} ms", attempt + 1);
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn health(&self) -> Result<(), ServiceError> {
        let body = self.call("/v1/health", Method::Get)?;
        #[derive(Deserialize)]
        struct Health {
            status: String,
        }
        match serde_json::from_str::<Health>(&body) {
            Ok(h) if h.status == "ok" => Ok(()),
            Ok(h) => Err(ServiceError::Protocol(format!("health status {:?}", h.status))),
            Err(e) => Err(ServiceError::Protocol(format!("bad health response: {e}"))),
        }
    }
}

/// [`Scorer`] backed by a `/v1/score` service. Safe to share between threads.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    client: Client,
}

impl HttpScorer {
    pub fn new(endpoint: ServiceEndpoint) -> Result<Self> {
        Ok(HttpScorer {
            client: Client::new(endpoint)?,
        })
    }

    pub fn endpoint(&self) -> &ServiceEndpoint {
        &self.client.endpoint
    }

    pub fn health(&self) -> Result<(), ServiceError> {
        self.client.health()
    }

    fn score_chunk(&self, chunk: &[ScorerRequest]) -> Result<Vec<LikelihoodScore>, ServiceError> {
        let body = encode_score_request(chunk);
        let text = self.client.call("/v1/score", Method::Post(&body))?;
        decode_score_response(&text, chunk.len())
    }
}

impl Scorer for HttpScorer {
    fn score(&self, request: &ScorerRequest) -> Result<LikelihoodScore, ServiceError> {
        self.score_batch(std::slice::from_ref(request))
            .pop()
            .expect("one response per request")
    }

    /// Splits into chunks of `batch_size`; up to `parallelism` chunks are in
    /// flight at once. A failed chunk fails every request in it.
    fn score_batch(&self, requests: &[ScorerRequest]) -> Vec<Result<LikelihoodScore, ServiceError>> {
        let chunks: Vec<&[ScorerRequest]> = requests.chunks(self.client.endpoint.batch_size).collect();
        let per_chunk = map_chunks(&chunks, self.client.endpoint.parallelism, |group| {
            group.iter().map(|c| (c.len(), self.score_chunk(c))).collect()
        });
        let mut out = Vec::with_capacity(requests.len());
        for (n, result) in per_chunk {
            match result {
                Ok(scores) => out.extend(scores.into_iter().map(Ok)),
                Err(e) => out.extend(std::iter::repeat_n(Err(e), n)),
            }
        }
        out
    }
}

/// [`Translator`] backed by a `/v1/translate` service.
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    client: Client,
}

impl HttpTranslator {
    pub fn new(endpoint: ServiceEndpoint) -> Result<Self> {
        Ok(HttpTranslator {
            client: Client::new(endpoint)?,
        })
    }

    pub fn health(&self) -> Result<(), ServiceError> {
        self.client.health()
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, src: LanguageCode, tgt: LanguageCode) -> Result<String, ServiceError> {
        if tgt.is_und() {
            return Err(ServiceError::Precondition("translation target language must be known".into()));
        }
        if text.is_empty() {
            return Err(ServiceError::Precondition("nothing to translate".into()));
        }
        let body = encode_translate_request(text, src, tgt);
        let response = self.client.call("/v1/translate", Method::Post(&body))?;
        decode_translate_response(&response)
    }
}
