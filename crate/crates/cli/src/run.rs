use std::path::{Path, PathBuf};

use gcosod::{Error, ErrorCategory, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Internal => 4,
    }
}

#[derive(Debug, Serialize)]
pub struct RunConfig<T: Serialize> {
    pub subcommand: &'static str,
    pub tool_version: &'static str,
    pub settings: T,
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

/// Creates a fresh `<out>/<subcommand>-<hash>` directory and writes
/// `run_config.json` into it. A previous run with the same config is
/// replaced wholesale so stale files never survive.
pub fn prepare<T: Serialize>(out: &Path, config: &RunConfig<T>) -> Result<PathBuf> {
    let text = to_json(config)?;
    let digest = Sha256::digest(text.as_bytes());
    let hash: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    let dir = out.join(format!("{}-{hash}", config.subcommand));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_text(&dir.join("run_config.json"), &text)?;
    Ok(dir)
}
