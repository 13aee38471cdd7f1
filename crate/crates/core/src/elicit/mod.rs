//! Chat-completion elicitation with resumable, append-only response logs.

pub mod log;
mod pass;
pub mod spec;
pub mod wire;

pub use log::{lock_path, read_log, resume_scan, write_log, Fingerprint, LogLock, ResponseLog, ResponseRecord, ScanReport, TokenLogprob};
pub use pass::{run_pass, PassSummary};
pub use spec::{render_prompt, DEFAULT_PROMPT_TEMPLATE, Decoding, DecodingMode, ElicitationSpec, ModelEndpoint, RetryPolicy};
