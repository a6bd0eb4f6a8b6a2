use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::config::Resolved;
use crate::error::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn manifest(config: &Resolved, inputs: &[(String, PathBuf)]) -> Result<String, CliError> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut s = format!(
        "# dpagd run manifest; replay with `dpagd {} --config <this file>`\n\
         # command = {}\n# version = {}\n# timestamp = {stamp} (unix seconds)\n",
        config.command,
        config.command,
        env!("CARGO_PKG_VERSION"),
    );
    for (name, path) in inputs {
        s.push_str(&format!("# sha256 {name} = {}\n", sha256_file(path)?));
    }
    s.push_str(&config.render());
    Ok(s)
}

fn staged(path: &Path, contents: &str) -> Result<NamedTempFile, CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    Ok(tmp)
}

/// Writes every `(path, contents)` to a temporary sibling first, then
/// renames them into place, so a failure leaves no partial file.
pub fn write_atomic(files: &[(PathBuf, String)]) -> Result<(), CliError> {
    let staged: Vec<(NamedTempFile, &PathBuf)> = files
        .iter()
        .map(|(p, c)| staged(p, c).map(|t| (t, p)))
        .collect::<Result<_, _>>()?;
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}
