use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::log::{resume_scan, Fingerprint, LogLock, ResponseLog, ResponseRecord, TokenLogprob};
use super::spec::{render_prompt, DecodingMode, ElicitationSpec, ModelEndpoint};
use super::wire::{ChatRequest, ChatResponse, Message};
use crate::corpus::Item;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassSummary {
    pub requested: usize,
    pub skipped: usize,
    pub failed: usize,
    pub appended: usize,
    pub corrupt_lines: Vec<usize>,
    pub failures: Vec<FailedRequest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedRequest {
    pub item_id: String,
    pub sample_index: u32,
    pub error: String,
}

enum Failure {
    /// Worth retrying: transport errors, 429 and 5xx.
    Transient(String),
    Fatal(String),
    /// 2xx with a body we could not interpret; kept verbatim.
    Malformed { body: String, error: String },
}

fn errors_path(log_path: &Path) -> PathBuf {
    let mut s = log_path.as_os_str().to_owned();
    s.push(".errors.jsonl");
    PathBuf::from(s)
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn build_request(item: &Item, sample_index: u32, spec: &ElicitationSpec, model: &str) -> ChatRequest {
    let sampled = spec.decoding.mode == DecodingMode::Sampled;
    ChatRequest {
        model: model.to_owned(),
        messages: vec![Message { role: "user".into(), content: render_prompt(&spec.prompt_template, item) }],
        temperature: Some(if sampled { spec.decoding.temperature } else { 0.0 }),
        max_tokens: Some(spec.max_tokens),
        logprobs: (spec.logprobs_requested > 0).then_some(true),
        top_logprobs: (spec.logprobs_requested > 0).then_some(spec.logprobs_requested),
        seed: Some(sample_index as u64),
    }
}

/// Text, finish reason and first-position alternatives of the first choice.
type Interpreted = (String, Option<String>, Option<Vec<TokenLogprob>>);

fn interpret(body: &str) -> std::result::Result<Interpreted, String> {
    let resp: ChatResponse = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let choice = resp.choices.into_iter().next().ok_or("response has no choices")?;
    let logprobs = choice
        .logprobs
        .and_then(|l| l.content)
        .and_then(|c| c.into_iter().next())
        .map(|first| {
            if first.top_logprobs.is_empty() {
                vec![TokenLogprob { token: first.token, logprob: first.logprob.min(0.0) }]
            } else {
                first
                    .top_logprobs
                    .into_iter()
                    .map(|t| TokenLogprob { token: t.token, logprob: t.logprob.min(0.0) })
                    .collect()
            }
        });
    if logprobs.as_ref().is_some_and(|l| l.iter().any(|t| t.logprob.is_nan())) {
        return Err("NaN logprob".into());
    }
    Ok((choice.message.content, choice.finish_reason, logprobs))
}

struct Requester {
    client: reqwest::Client,
    url: String,
    token: Option<String>,
    endpoint: ModelEndpoint,
}

impl Requester {
    async fn once(&self, request: &ChatRequest) -> std::result::Result<String, Failure> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().await.map_err(|e| Failure::Transient(e.to_string()))?;
        if status.is_success() {
            Ok(body)
        } else if status.as_u16() == 429 || status.is_server_error() {
            Err(Failure::Transient(format!("HTTP {status}: {body}")))
        } else {
            Err(Failure::Fatal(format!("HTTP {status}: {body}")))
        }
    }

    async fn with_retries(&self, request: &ChatRequest) -> std::result::Result<String, Failure> {
        let policy = &self.endpoint.retry;
        let mut attempt = 0;
        loop {
            match self.once(request).await {
                Err(Failure::Transient(msg)) if attempt + 1 < policy.max_attempts => {
                    let exp = policy.base_delay_ms.saturating_mul(1u64 << attempt.min(20));
                    let capped = exp.min(policy.max_delay_ms) as f64;
                    let jittered = capped * (0.5 + 0.5 * rand::random::<f64>());
                    tracing::debug!(attempt, %msg, "retrying request");
                    tokio::time::sleep(Duration::from_millis(jittered as u64)).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Issue one request for every `(item, sample)` pair not yet in the log and
/// append the results. Failed requests are counted and left missing so a
/// rerun picks them up.
pub async fn run_pass(
    items: &[Item],
    spec: &ElicitationSpec,
    endpoint: &ModelEndpoint,
    log_path: &Path,
) -> Result<PassSummary> {
    let spec = spec.clone().validated()?;
    endpoint.validate()?;
    let _lock = LogLock::acquire(log_path)?;
    let spec_hash = spec.hash();

    let ids: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
    let scan = resume_scan(log_path, &ids, spec.num_samples(), &spec_hash)?;
    let by_id: std::collections::HashMap<&str, &Item> = items.iter().map(|i| (i.id.as_str(), i)).collect();

    let token = match &endpoint.token_env {
        Some(var) => Some(std::env::var(var).map_err(|_| {
            Error::Config(format!("environment variable {var} (API token) is not set"))
        })?),
        None => None,
    };
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
        .build()
        .map_err(|e| Error::Endpoint(e.to_string()))?;
    let requester = Requester { client, url: endpoint.chat_url(), token, endpoint: endpoint.clone() };

    let mut summary = PassSummary {
        skipped: scan.completed,
        requested: scan.missing.len(),
        corrupt_lines: scan.corrupt_lines.clone(),
        ..Default::default()
    };
    if scan.missing.is_empty() {
        return Ok(summary);
    }

    let mut log = ResponseLog::open(log_path)?;
    let mut forensics: Option<ResponseLog> = None;
    let requester = &requester;
    let spec = &spec;
    let by_id = &by_id;

    let mut results = stream::iter(scan.missing.iter().cloned())
        .map(|(id, sample)| async move {
            let item = by_id[id.as_str()];
            let request = build_request(item, sample, spec, &requester.endpoint.model_name);
            let outcome = requester.with_retries(&request).await;
            (id, sample, outcome)
        })
        .buffer_unordered(endpoint.max_concurrent);

    while let Some((item_id, sample_index, outcome)) = results.next().await {
        let failure = match outcome {
            Ok(body) => match interpret(&body) {
                Ok((raw_text, finish_reason, first_position_logprobs)) => {
                    let record = ResponseRecord {
                        item_id,
                        sample_index,
                        raw_text,
                        finish_reason,
                        first_position_logprobs: first_position_logprobs.filter(|l| !l.is_empty()),
                        fingerprint: Fingerprint {
                            spec_hash: spec_hash.clone(),
                            model: endpoint.model_name.clone(),
                            timestamp: now(),
                        },
                    };
                    log.append(&record)?;
                    summary.appended += 1;
                    continue;
                }
                Err(error) => Failure::Malformed { body, error },
            },
            Err(f) => f,
        };
        let message = match failure {
            Failure::Transient(m) | Failure::Fatal(m) => m,
            Failure::Malformed { body, error } => {
                let path = errors_path(log_path);
                if forensics.is_none() {
                    forensics = Some(ResponseLog::open(&path)?);
                }
                let entry = serde_json::json!({
                    "item_id": item_id,
                    "sample_index": sample_index,
                    "error": error,
                    "body": body,
                });
                let f = forensics.as_mut().expect("opened above");
                f.append_raw(&entry.to_string())?;
                format!("malformed response: {error}")
            }
        };
        tracing::warn!(%item_id, sample_index, %message, "request failed");
        summary.failed += 1;
        summary.failures.push(FailedRequest { item_id, sample_index, error: message });
    }
    Ok(summary)
}
