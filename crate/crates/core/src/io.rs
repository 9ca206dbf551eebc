//! Dense matrix files (Matrix Market array format, headerless CSV) and system manifests.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::modred::LtiSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("mtx") => Ok(MatrixFormat::MatrixMarket),
            Some("csv") => Ok(MatrixFormat::Csv),
            _ => Err(Error::Parse(format!(
                "{}: unknown matrix format (expected .mtx or .csv)",
                path.display()
            ))),
        }
    }
}

fn parse_f64(tok: &str, what: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: invalid number '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(v)
}

/// Parses a `%%MatrixMarket matrix array real general` document.
pub fn parse_matrix_market(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty Matrix Market file".into()))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse(format!("bad Matrix Market header '{header}'")));
    }
    if fields[2] != "array" || fields[3] != "real" || fields[4] != "general" {
        return Err(Error::Parse(format!(
            "unsupported Matrix Market type '{} {} {}' (only 'array real general')",
            fields[2], fields[3], fields[4]
        )));
    }
    let mut tokens = lines
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('%'))
        .flat_map(str::split_whitespace);
    let mut dim = |name: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {name} in size line")))?
            .parse()
            .map_err(|_| Error::Parse(format!("invalid {name} in size line")))
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let values = tokens
        .map(|t| parse_f64(t, "Matrix Market entry"))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != rows * cols {
        return Err(Error::Parse(format!(
            "Matrix Market size {rows}x{cols} needs {} entries, found {}",
            rows * cols,
            values.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, &values))
}

pub fn format_matrix_market(m: &DMatrix<f64>) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for v in m.iter() {
        out.push_str(&format!("{v:e}\n"));
    }
    out
}

/// Parses headerless comma-separated rows; all rows must have the same length.
pub fn parse_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(format!("CSV: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse(format!(
                    "CSV row {} has {} fields, expected {c}",
                    rows + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            data.push(parse_f64(field, "CSV entry")?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty CSV file".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn format_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Reads a matrix, choosing the format from the file extension.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let format = MatrixFormat::from_path(path)?;
    let text = read_text(path)?;
    let parsed = match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(&text),
        MatrixFormat::Csv => parse_csv(&text),
    };
    parsed.map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let text = match MatrixFormat::from_path(path)? {
        MatrixFormat::MatrixMarket => format_matrix_market(m),
        MatrixFormat::Csv => format_csv(m),
    };
    fs::write(path, text)?;
    Ok(())
}

fn find_in_dir(dir: &Path, name: &str) -> Result<PathBuf> {
    for ext in ["mtx", "csv"] {
        for stem in [name.to_string(), name.to_ascii_lowercase()] {
            let p = dir.join(format!("{stem}.{ext}"));
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{}: no {name}.mtx or {name}.csv", dir.display()),
    )))
}

fn manifest_entry(base: &Path, manifest: &Value, key: &str) -> Result<DMatrix<f64>> {
    match manifest.get(key) {
        Some(Value::String(p)) => read_matrix(&base.join(p)),
        Some(Value::Array(rows)) => inline_matrix(rows, key),
        _ => Err(Error::Parse(format!("manifest has no entry \"{key}\""))),
    }
}

/// Row-major nested arrays, e.g. `[[1, 0], [0, -1]]`.
fn inline_matrix(rows: &[Value], key: &str) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Parse(format!("\"{key}\" must be a list of rows")))?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse(format!("\"{key}\" has ragged rows")));
        }
        for v in row {
            data.push(v.as_f64().ok_or_else(|| Error::Parse(format!("\"{key}\" has a non-numeric entry")))?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols.unwrap_or(0), &data))
}

/// Files that make up a system input, for hashing and manifests.
pub fn system_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        return ["A", "B", "C"].iter().map(|k| find_in_dir(path, k)).collect();
    }
    let mut files = vec![path.to_path_buf()];
    let manifest: Value = serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for key in ["A", "B", "C"] {
        if let Some(Value::String(p)) = manifest.get(key) {
            files.push(base.join(p));
        }
    }
    Ok(files)
}

/// Reads `(A, B, C)` from a directory holding `A`, `B`, `C` matrix files or from a
/// JSON manifest `{"A": path, "B": path, "C": path}` (paths relative to the manifest;
/// inline row-major arrays are also accepted).
pub fn read_system(path: &Path) -> Result<LtiSystem> {
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let (a, b, c) = if path.is_dir() {
        (
            read_matrix(&find_in_dir(path, "A")?)?,
            read_matrix(&find_in_dir(path, "B")?)?,
            read_matrix(&find_in_dir(path, "C")?)?,
        )
    } else {
        let text = read_text(path)?;
        let manifest: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        (
            manifest_entry(base, &manifest, "A")?,
            manifest_entry(base, &manifest, "B")?,
            manifest_entry(base, &manifest, "C")?,
        )
    };
    let sys = LtiSystem::new(a, b, c)?;
    Ok(match label {
        Some(l) => sys.with_label(l),
        None => sys,
    })
}

/// Writes `A`, `B`, `C` into `dir` with the given extension (`mtx` or `csv`).
pub fn write_system(dir: &Path, sys: &LtiSystem, ext: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join(format!("A.{ext}")), &sys.a)?;
    write_matrix(&dir.join(format!("B.{ext}")), &sys.b)?;
    write_matrix(&dir.join(format!("C.{ext}")), &sys.c)?;
    Ok(())
}
