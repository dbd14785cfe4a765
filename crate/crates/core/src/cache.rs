//! On-disk table cache.
//!
//! Tables are stored as CSV text followed by a trailer line
//! `# sha256=<hex>` covering every preceding byte. Writes go to a temporary
//! file in the same directory and are moved into place with an atomic
//! rename, so a concurrent reader sees either the old file or the new one.
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

const TRAILER: &str = "# sha256=";

fn hex_digest(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves the cache directory: `GEOGREEN_CACHE` overrides `fallback`.
pub fn cache_dir(fallback: Option<&Path>) -> Option<PathBuf> {
    match std::env::var_os("GEOGREEN_CACHE") {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => fallback.map(Path::to_path_buf),
    }
}

/// Writes a CSV table atomically with a checksum trailer.
pub fn write_table(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut body = String::with_capacity(16 * rows.len() + header.len() + 1);
    body.push_str(header);
    body.push('\n');
    for r in rows {
        body.push_str(r);
        body.push('\n');
    }
    let digest = hex_digest(body.as_bytes());
    body.push_str(TRAILER);
    body.push_str(&digest);
    body.push('\n');
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("cache path {} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(body.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a table written by [`write_table`], verifying header and checksum.
/// Returns the data rows.
pub fn read_table(path: &Path, header: &str) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let idx =
        text.rfind(TRAILER).ok_or_else(|| Error::Cache(format!("{}: missing checksum trailer", path.display())))?;
    let (body, trailer) = text.split_at(idx);
    let want = trailer[TRAILER.len()..].trim();
    if hex_digest(body.as_bytes()) != want {
        return Err(Error::Cache(format!("{}: checksum mismatch", path.display())));
    }
    let mut lines = body.lines();
    if lines.next() != Some(header) {
        return Err(Error::Cache(format!("{}: unexpected header", path.display())));
    }
    Ok(lines.map(str::to_string).collect())
}

/// Writes a JSON value atomically with a checksum trailer.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_table(path, "json", &[serde_json::to_string(value)?])
}

/// Reads a JSON value written by [`write_json`].
pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let rows = read_table(path, "json")?;
    let first = rows.first().ok_or_else(|| Error::Cache(format!("{}: empty JSON table", path.display())))?;
    serde_json::from_str(first).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))
}
