//! Report envelopes and file writers.

use serde::Serialize;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use spectrakit::{Error, Result};

#[derive(Serialize)]
struct Envelope<'a, I: Serialize, R: Serialize> {
    toolkit: &'static str,
    version: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<String>,
    inputs: &'a I,
    result: &'a R,
}

pub fn write_json<I: Serialize, R: Serialize>(
    path: &Path,
    command: &'static str,
    stamp: bool,
    inputs: &I,
    result: &R,
) -> Result<()> {
    let generated_at = stamp.then(|| {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("unix:{secs}")
    });
    let env = Envelope {
        toolkit: "spectrakit",
        version: env!("CARGO_PKG_VERSION"),
        command,
        generated_at,
        inputs,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env)
        .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Plain table writer; floats use the shortest round-trip representation.
pub struct Table {
    path: std::path::PathBuf,
    inner: csv::Writer<std::fs::File>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut t = Table {
            path: path.to_path_buf(),
            inner: csv::Writer::from_writer(file),
        };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<()> {
        self.inner
            .write_record(cells.into_iter().collect::<Vec<_>>())
            .map_err(|e| self.err(e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn err(&self, e: csv::Error) -> Error {
        Error::io(&self.path, std::io::Error::other(e.to_string()))
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Shortest round-trip decimal, switching to exponent form for very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// File-name-safe rendering of a selection or kind label.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            c if c.is_ascii_alphanumeric() || c == '_' => c,
            ':' => '_',
            _ => '-',
        })
        .collect()
}
