//! Append-only response log and its lock file.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub spec_hash: String,
    pub model: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// One generation. `(item_id, sample_index, spec_hash)` is unique per log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub item_id: String,
    pub sample_index: u32,
    pub raw_text: String,
    pub finish_reason: Option<String>,
    pub first_position_logprobs: Option<Vec<TokenLogprob>>,
    pub fingerprint: Fingerprint,
}

impl ResponseRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if let Some(lps) = &self.first_position_logprobs {
            if lps.is_empty() {
                return Err("logprob list present but empty".into());
            }
            if lps.iter().any(|t| !(t.logprob <= 0.0)) {
                return Err("logprob above zero".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    /// Expected `(item_id, sample_index)` pairs with no record under the spec hash.
    pub missing: BTreeSet<(String, u32)>,
    pub completed: usize,
    /// 1-based line numbers that failed to parse.
    pub corrupt_lines: Vec<usize>,
    /// The file ends in a partial line (interrupted write).
    pub torn_tail: bool,
    /// Records under the spec hash that appear more than once.
    pub duplicates: usize,
}

/// Read every well-formed record; malformed lines are reported, not fatal.
pub fn read_log(path: &Path) -> Result<(Vec<ResponseRecord>, Vec<usize>, bool)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), Vec::new(), false)),
        Err(e) => return Err(Error::io(path, e)),
    };
    let torn = !text.is_empty() && !text.ends_with('\n');
    let mut records = Vec::new();
    let mut corrupt = Vec::new();
    let lines: Vec<&str> = text.split('\n').collect();
    let last = lines.len() - 1;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        // An unterminated final line is never trusted, even if it parses.
        if i == last && torn {
            corrupt.push(i + 1);
            continue;
        }
        match serde_json::from_str::<ResponseRecord>(line) {
            Ok(r) if r.validate().is_ok() => records.push(r),
            _ => corrupt.push(i + 1),
        }
    }
    Ok((records, corrupt, torn))
}

/// Complement of the completed `(item, sample)` pairs for `spec_hash`.
pub fn resume_scan(
    path: &Path,
    item_ids: &[&str],
    num_samples: u32,
    spec_hash: &str,
) -> Result<ScanReport> {
    let (records, corrupt_lines, torn_tail) = read_log(path)?;
    let mut done = BTreeSet::new();
    let mut duplicates = 0;
    for r in records.iter().filter(|r| r.fingerprint.spec_hash == spec_hash) {
        if !done.insert((r.item_id.clone(), r.sample_index)) {
            duplicates += 1;
        }
    }
    let mut missing = BTreeSet::new();
    let mut completed = 0;
    for id in item_ids {
        for s in 0..num_samples {
            let key = ((*id).to_owned(), s);
            if done.contains(&key) {
                completed += 1;
            } else {
                missing.insert(key);
            }
        }
    }
    if torn_tail {
        tracing::warn!(path = %path.display(), "response log ends in a torn write; that record will be re-requested");
    }
    Ok(ScanReport { missing, completed, corrupt_lines, torn_tail, duplicates })
}

/// Exclusive `<log>.lock` held for the duration of a pass.
#[derive(Debug)]
pub struct LogLock {
    path: PathBuf,
}

impl LogLock {
    pub fn acquire(log_path: &Path) -> Result<Self> {
        let path = lock_path(log_path);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LogLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for LogLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn lock_path(log_path: &Path) -> PathBuf {
    let mut s = log_path.as_os_str().to_owned();
    s.push(".lock");
    PathBuf::from(s)
}

/// Serialized appender. Opening a log whose last line is torn starts the
/// next record on a fresh line; existing bytes are never modified.
#[derive(Debug)]
pub struct ResponseLog {
    file: File,
    path: PathBuf,
}

impl ResponseLog {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(|e| Error::io(path, e))?;
            file.read_exact(&mut last).map_err(|e| Error::io(path, e))?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(ResponseLog { file, path: path.to_owned() })
    }

    pub fn append(&mut self, record: &ResponseRecord) -> Result<()> {
        self.append_raw(&serde_json::to_string(record)?)
    }

    pub(crate) fn append_raw(&mut self, line: &str) -> Result<()> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        self.file
            .write_all(buf.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Write records to a fresh log file (used by the simulator).
pub fn write_log(path: &Path, records: &[ResponseRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
