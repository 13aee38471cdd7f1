//! Resolved run configuration and artifact metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Benchmark, SliceSpec};
use crate::elicit::{RetryPolicy, DEFAULT_PROMPT_TEMPLATE};
use crate::error::{Error, Result};
use crate::probe::ProbeConfig;
use crate::psychometrics::{MetricPolicy, UnparsedPolicy, VrsPolicy};
use crate::targets::DEFAULT_ASSISTANT_TEMPLATE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub workdir: PathBuf,
    pub corpus: Option<PathBuf>,
    pub benchmark: Benchmark,
    pub exclusions: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { workdir: PathBuf::from("."), corpus: None, benchmark: Benchmark::OpenDomainQa, exclusions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub partition: u64,
    pub bootstrap: u64,
    pub shuffle: u64,
    pub probe: u64,
    pub world: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { partition: 2026, bootstrap: 0, shuffle: 43, probe: 0, world: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: Option<String>,
    pub model_name: String,
    pub token_env: Option<String>,
    pub timeout_secs: f64,
    pub max_concurrent: usize,
    pub retry: RetryPolicy,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: None,
            model_name: "default".into(),
            token_env: None,
            timeout_secs: 60.0,
            max_concurrent: 8,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElicitationConfig {
    pub prompt_template: String,
    pub assistant_template: String,
    pub max_tokens: u32,
    pub logprobs: u32,
    /// Sampled passes only.
    pub temperature: f64,
    pub samples: u32,
}

impl Default for ElicitationConfig {
    fn default() -> Self {
        ElicitationConfig {
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            assistant_template: DEFAULT_ASSISTANT_TEMPLATE.into(),
            max_tokens: 64,
            logprobs: 20,
            temperature: 0.7,
            samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub ceiling_threshold_pct: f64,
    pub unparsed: UnparsedPolicy,
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub vrs: VrsPolicy,
    /// Parser profile name; defaults by benchmark.
    pub parser_profile: Option<String>,
    /// Extra profile definitions (TOML or JSON).
    pub parser_profiles: Option<PathBuf>,
    /// Confidence target for n = 0..=k correct; default table when absent.
    pub target_table: Option<Vec<f64>>,
    pub modal_filter: bool,
    /// Gate rules (TOML or JSON); the shipped default when absent.
    pub gate: Option<PathBuf>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            ceiling_threshold_pct: 95.0,
            unparsed: UnparsedPolicy::CountIncorrect,
            bootstrap_resamples: 10_000,
            level: 0.95,
            vrs: VrsPolicy::default(),
            parser_profile: None,
            parser_profiles: None,
            target_table: None,
            modal_filter: false,
            gate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub slices: Vec<SliceSpec>,
    pub seeds: Seeds,
    pub endpoint: EndpointConfig,
    pub elicitation: ElicitationConfig,
    pub policy: PolicyConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            slices: vec![
                SliceSpec { name: "T-eval".into(), size: 1000 },
                SliceSpec { name: "T-cal".into(), size: 2000 },
            ],
            seeds: Seeds::default(),
            endpoint: EndpointConfig::default(),
            elicitation: ElicitationConfig::default(),
            policy: PolicyConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

/// Parse a `key=value` override. Values are read as TOML literals, falling
/// back to a bare string.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((path, value))
}

fn set(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {} descends into a non-table", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Defaults, then the optional file, then `key=value` overrides in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set(&mut table, &path, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.policy.level > 0.0 && self.policy.level < 1.0) {
            return Err(Error::Config(format!("policy.level must lie in (0, 1), got {}", self.policy.level)));
        }
        if self.policy.bootstrap_resamples == 0 {
            return Err(Error::Config("policy.bootstrap_resamples must be positive".into()));
        }
        if self.elicitation.samples == 0 || !(self.elicitation.temperature > 0.0) {
            return Err(Error::Config("elicitation.samples and elicitation.temperature must be positive".into()));
        }
        self.probe.validate()
    }

    pub fn metric_policy(&self) -> MetricPolicy {
        MetricPolicy {
            ceiling_threshold_pct: self.policy.ceiling_threshold_pct,
            unparsed: self.policy.unparsed,
            bootstrap_resamples: self.policy.bootstrap_resamples,
            bootstrap_seed: self.seeds.bootstrap,
            level: self.policy.level,
            vrs: self.policy.vrs.clone(),
        }
    }

    /// Hash of everything that affects stage outputs: seeds, slices,
    /// elicitation, policies and probe settings. Paths and connection
    /// details are left out.
    pub fn hash(&self) -> String {
        let material = serde_json::json!({
            "slices": self.slices,
            "seeds": self.seeds,
            "model": self.endpoint.model_name,
            "elicitation": self.elicitation,
            "policy": self.policy,
            "probe": self.probe,
        });
        hex::encode(&Sha256::digest(material.to_string().as_bytes())[..8])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Metadata written next to each stage output as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub stage: String,
    pub config_hash: String,
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ArtifactMeta {
    pub fn new(stage: &str, config: &RunConfig, inputs: &[&Path]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| Ok(InputDigest { path: p.display().to_string(), sha256: file_digest(p)? }))
            .collect::<Result<_>>()?;
        Ok(ArtifactMeta {
            stage: stage.to_owned(),
            config_hash: config.hash(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs,
        })
    }

    pub fn write_for(&self, artifact: &Path) -> Result<()> {
        let p = meta_path(artifact);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    /// Sidecar of `artifact`, if present.
    pub fn read_for(artifact: &Path) -> Result<Option<Self>> {
        let p = meta_path(artifact);
        match fs::read_to_string(&p) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&p, e)),
        }
    }
}
