use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{AnswerKey, Item};
use crate::error::{Error, Result};

/// Shipped elicitation prompt. The wording is not canonical; reports flag it.
pub const DEFAULT_PROMPT_TEMPLATE: &str = "Answer the question below. Give your answer on the first line. \
On the second line, state how confident you are that your answer is correct, written as \
\"Confidence: N%\" with N between 0 and 100.\n\nQuestion: {question}{choices}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMode {
    Greedy,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub mode: DecodingMode,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "one")]
    pub num_samples: u32,
}

fn one() -> u32 {
    1
}

impl Decoding {
    pub fn greedy() -> Self {
        Decoding { mode: DecodingMode::Greedy, temperature: 0.0, num_samples: 1 }
    }

    pub fn sampled(temperature: f64, num_samples: u32) -> Self {
        Decoding { mode: DecodingMode::Sampled, temperature, num_samples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationSpec {
    pub prompt_template: String,
    pub decoding: Decoding,
    pub max_tokens: u32,
    /// Top-k alternatives requested at each position; 0 disables logprobs.
    pub logprobs_requested: u32,
}

impl Default for ElicitationSpec {
    fn default() -> Self {
        ElicitationSpec {
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_owned(),
            decoding: Decoding::greedy(),
            max_tokens: 64,
            logprobs_requested: 20,
        }
    }
}

impl ElicitationSpec {
    /// Validate and canonicalise: greedy forces one sample at temperature 0.
    pub fn validated(mut self) -> Result<Self> {
        match self.decoding.mode {
            DecodingMode::Greedy => {
                self.decoding.num_samples = 1;
                self.decoding.temperature = 0.0;
            }
            DecodingMode::Sampled => {
                if !(self.decoding.temperature > 0.0 && self.decoding.temperature.is_finite()) {
                    return Err(Error::Config("sampled decoding requires temperature > 0".into()));
                }
                if self.decoding.num_samples == 0 {
                    return Err(Error::Config("num_samples must be at least 1".into()));
                }
            }
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if !self.prompt_template.contains("{question}") {
            return Err(Error::Config("prompt template lacks a {question} placeholder".into()));
        }
        Ok(self)
    }

    /// Short content hash identifying this spec in response logs.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serialises");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }

    pub fn num_samples(&self) -> u32 {
        self.decoding.num_samples
    }
}

/// Fill `{question}`, `{choices}` and `{domain}` placeholders.
pub fn render_prompt(template: &str, item: &Item) -> String {
    let choices = match &item.answer_key {
        AnswerKey::Choices { options, .. } => {
            let mut block = String::from("\nOptions:");
            for (i, opt) in options.iter().enumerate() {
                block.push_str(&format!("\n{}. {}", (b'A' + i as u8) as char, opt));
            }
            block
        }
        AnswerKey::Aliases(_) => String::new(),
    };
    template
        .replace("{question}", &item.question)
        .replace("{choices}", &choices)
        .replace("{domain}", item.domain_tag.as_deref().unwrap_or(""))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay_ms: 250, max_delay_ms: 8_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_concurrency() -> usize {
    8
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelEndpoint {
            base_url: base_url.into(),
            model_name: model_name.into(),
            token_env: None,
            timeout_secs: default_timeout(),
            max_concurrent: default_concurrency(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent == 0 {
            return Err(Error::Config("max_concurrent must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::Config("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn chat_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_forces_single_sample() {
        let spec = ElicitationSpec {
            decoding: Decoding { mode: DecodingMode::Greedy, temperature: 0.7, num_samples: 10 },
            ..Default::default()
        };
        let spec = spec.validated().unwrap();
        assert_eq!(spec.decoding.num_samples, 1);
        assert_eq!(spec.decoding.temperature, 0.0);
    }

    #[test]
    fn sampled_needs_temperature() {
        let spec = ElicitationSpec { decoding: Decoding::sampled(0.0, 10), ..Default::default() };
        assert!(spec.validated().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ElicitationSpec::default();
        let mut b = a.clone();
        b.decoding = Decoding::sampled(0.7, 10);
        assert_eq!(a.hash(), ElicitationSpec::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn renders_choices() {
        let item = Item::choice("m", "Which?", vec!["x".into(), "y".into()], 1, Some("bio".into()));
        let p = render_prompt("Q: {question}{choices} [{domain}]", &item);
        assert_eq!(p, "Q: Which?\nOptions:\nA. x\nB. y [bio]");
    }

    #[test]
    fn endpoint_validation() {
        let mut e = ModelEndpoint::new("http://localhost:1/v1", "m");
        assert!(e.validate().is_ok());
        e.max_concurrent = 0;
        assert!(e.validate().is_err());
        assert_eq!(ModelEndpoint::new("http://h/v1/", "m").chat_url(), "http://h/v1/chat/completions");
    }
}
