//! Table and document writers. Files are written once, via a temporary file and a rename.

use serde::Serialize;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// Writes `bytes` to `path` so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

/// Serializes `rows` as CSV with a header taken from the row type.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(doc: &T) -> io::Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(doc).map_err(io::Error::other)?;
    v.push(b'\n');
    Ok(v)
}

/// One functional value of a condition report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRow {
    pub label: String,
    pub n: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub functional: String,
    pub value: f64,
    pub error_bound: f64,
    pub status: String,
}

pub const CONDITIONS_HEADER: &str = "label,n,epsilon,delta,functional,value,error_bound,status";

/// One distance of a study or distances run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub label: String,
    pub n: u64,
    pub seed: u64,
    pub metric: String,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub value: f64,
    pub bound: f64,
    pub method: String,
    pub status: String,
}

pub const STUDY_HEADER: &str = "label,n,seed,metric,epsilon,delta,value,bound,method,status";
