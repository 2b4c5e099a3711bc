//! On-disk formats: CSV datasets with a `node.dim` header, JSON artifacts,
//! sectioned `key=value` config files. Every write goes through a temp file in
//! the destination directory and is renamed into place.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::graph::CausalGraph;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: header mismatch: expected [{expected}], found [{found}]")]
    Header { path: PathBuf, expected: String, found: String },
    #[error("{path}: row {row} has {got} fields, expected {expected}")]
    RowWidth { path: PathBuf, row: usize, got: usize, expected: usize },
    #[error("{path}: row {row}, column {column}: cannot parse '{value}' as a number")]
    Number { path: PathBuf, row: usize, column: String, value: String },
    #[error("{path}: no header row")]
    Empty { path: PathBuf },
    #[error("{path}:{line}: {message}")]
    Config { path: PathBuf, line: usize, message: String },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path` via a sibling temp file and a rename, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(fs_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fs_err(dir))?;
    tmp.write_all(bytes).map_err(fs_err(path))?;
    tmp.as_file().sync_all().map_err(fs_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Fs { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// CSV text for a matrix. Floats use Rust's shortest round-trip formatting.
pub fn matrix_to_csv(header: &[String], data: ArrayView2<'_, f64>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in data.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, header: &[String], data: ArrayView2<'_, f64>) -> Result<(), IoError> {
    write_atomic(path, matrix_to_csv(header, data).as_bytes())
}

/// Writes a dataset with the graph's `node.dim` header.
pub fn write_dataset(path: &Path, graph: &CausalGraph, data: ArrayView2<'_, f64>) -> Result<(), IoError> {
    write_matrix(path, &graph.column_names(), data)
}

/// Reads a numeric CSV with a header row.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Array2<f64>), IoError> {
    let csv_err = |source| IoError::Csv { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(fs_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(IoError::Empty { path: path.to_path_buf() });
    }
    let width = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|source| match source.kind() {
            csv::ErrorKind::UnequalLengths { len, .. } => IoError::RowWidth {
                path: path.to_path_buf(),
                row: r + 1,
                got: *len as usize,
                expected: width,
            },
            _ => IoError::Csv { path: path.to_path_buf(), source },
        })?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IoError::Number {
                path: path.to_path_buf(),
                row: r + 1,
                column: header[c].clone(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let data = Array2::from_shape_vec((rows, width), values).expect("row widths checked");
    Ok((header, data))
}

/// Reads a dataset and checks its header against the graph's columns.
pub fn read_dataset(path: &Path, graph: &CausalGraph) -> Result<Array2<f64>, IoError> {
    let (header, data) = read_matrix(path)?;
    let expected = graph.column_names();
    if header != expected {
        return Err(IoError::Header { path: path.to_path_buf(), expected: expected.join(","), found: header.join(",") });
    }
    Ok(data)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(fs_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

/// Flat `key = value` lines grouped under optional `[section]` headers.
/// Keys inside a section are returned as `section.key`. `#` and `;` start
/// comments.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>, IoError> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: &str| IoError::Config { path: path.to_path_buf(), line: i + 1, message: message.to_string() };
        // a comment marker counts mid-line only after whitespace
        let cut = [" #", "\t#", " ;", "\t;"].iter().filter_map(|m| raw.find(m)).min().unwrap_or(raw.len());
        let line = raw[..cut].trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header"))?.trim();
            if name.is_empty() {
                return Err(err("empty section name"));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(err("empty key"));
        }
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        out.insert(full, value.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, IoError> {
    let text = std::fs::read_to_string(path).map_err(fs_err(path))?;
    parse_config(&text, path)
}
