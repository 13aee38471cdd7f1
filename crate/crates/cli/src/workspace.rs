use std::fs;
use std::path::{Path, PathBuf};

use csft_core::config::{file_digest, ArtifactMeta, InputDigest, RunConfig};
use csft_core::corpus::load_corpus;
use csft_core::elicit::LogLock;
use csft_core::{Error as CoreError, Item};

use crate::error::{CliError, CliResult};

/// Resolved configuration plus the directory artifacts live in.
pub struct Workspace {
    pub cfg: RunConfig,
    pub root: PathBuf,
}

impl Workspace {
    pub fn open(config: &Option<PathBuf>, overrides: &[String]) -> CliResult<Self> {
        if let Some(p) = config {
            if !p.exists() {
                return Err(CliError::Config(format!("config file {} not found", p.display())));
            }
        }
        let cfg = RunConfig::resolve(config.as_deref(), overrides)?;
        let root = cfg.paths.workdir.clone();
        Ok(Workspace { cfg, root })
    }

    /// Resolve against the workdir unless absolute.
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Like `path`, but the file must already exist.
    pub fn input(&self, p: &Path, producer: &'static str) -> CliResult<PathBuf> {
        let full = self.path(p);
        if full.exists() {
            Ok(full)
        } else {
            Err(CliError::MissingInput { path: full, producer })
        }
    }

    /// Path as recorded in sidecars and reports: relative to the workdir
    /// when possible, so artifacts do not depend on where the run lived.
    pub fn display(&self, p: &Path) -> String {
        p.strip_prefix(&self.root).unwrap_or(p).display().to_string()
    }

    /// Exclusive lock on the workdir for stages that write artifacts.
    pub fn lock(&self) -> CliResult<LogLock> {
        fs::create_dir_all(&self.root).map_err(|e| CoreError::io(&self.root, e))?;
        Ok(LogLock::acquire(&self.root.join(".csft"))?)
    }

    pub fn meta(&self, stage: &str, inputs: &[&Path]) -> CliResult<ArtifactMeta> {
        let inputs = inputs
            .iter()
            .map(|p| Ok(InputDigest { path: self.display(p), sha256: file_digest(p)? }))
            .collect::<Result<_, CoreError>>()?;
        let mut meta = ArtifactMeta::new(stage, &self.cfg, &[])?;
        meta.inputs = inputs;
        Ok(meta)
    }

    pub fn write_meta(&self, stage: &str, artifact: &Path, inputs: &[&Path]) -> CliResult<()> {
        Ok(self.meta(stage, inputs)?.write_for(artifact)?)
    }

    pub fn corpus_path(&self, arg: &Option<PathBuf>) -> CliResult<PathBuf> {
        let p = arg
            .clone()
            .or_else(|| self.cfg.paths.corpus.clone())
            .ok_or_else(|| CliError::Config("no corpus given; pass --corpus or set paths.corpus".into()))?;
        self.input(&p, "simulate")
    }

    pub fn corpus(&self, arg: &Option<PathBuf>) -> CliResult<(PathBuf, Vec<Item>)> {
        let p = self.corpus_path(arg)?;
        let items = load_corpus(&p, self.cfg.paths.benchmark)?;
        Ok((p, items))
    }
}
