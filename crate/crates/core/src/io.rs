//! File formats: point patterns as CSV with a comment header and a window
//! sidecar, JSON helpers and content hashes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{Point, PointPattern, Window};

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Provenance written into the first line of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub config_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn comment_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

/// Path of the window sidecar for a pattern file: `<stem>.window.json`.
pub fn window_sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.window.json"))
}

/// Writes `x,y` rows (after an optional comment header) and the window
/// sidecar.
pub fn write_pattern(path: &Path, pattern: &PointPattern, header: Option<&Header>) -> Result<()> {
    let mut out = String::with_capacity(32 * pattern.len() + 64);
    if let Some(h) = header {
        out.push_str(&h.comment_line());
        out.push('\n');
    }
    out.push_str("x,y\n");
    for p in pattern.points() {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    fs::write(path, out)?;
    write_json(&window_sidecar(path), pattern.window())
}

/// Reads a pattern CSV. Lines starting with `#` and the `x,y` header are
/// skipped. The window comes from `window`, else the sidecar, else an
/// error.
pub fn read_pattern(path: &Path, window: Option<Window>) -> Result<PointPattern> {
    let window = match window {
        Some(w) => w,
        None => {
            let sidecar = window_sidecar(path);
            if !sidecar.exists() {
                return Err(Error::InvalidParameter(format!(
                    "no window given and sidecar {} not found",
                    sidecar.display()
                )));
            }
            read_json(&sidecar)?
        }
    };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut points = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.eq_ignore_ascii_case("x,y") {
            continue;
        }
        let mut cols = t.split(',');
        let mut next = |name: &str| -> Result<f64> {
            let raw = cols.next().ok_or_else(|| Error::Parse { line: k + 1, msg: format!("missing {name}") })?;
            raw.trim()
                .parse()
                .map_err(|e| Error::Parse { line: k + 1, msg: format!("bad {name} {raw:?}: {e}") })
        };
        let (x, y) = (next("x")?, next("y")?);
        points.push(Point::new(x, y));
    }
    PointPattern::new(points, window)
}

/// Writes serializable rows as CSV after the header comment and any extra
/// `# ...` comment lines.
pub fn write_csv<T: Serialize>(path: &Path, header: &Header, comments: &[String], rows: &[T]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", header.comment_line())?;
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    for row in rows {
        w.serialize(row).map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}
