//! Shared on-disk formats.
//!
//! * MAT-CSV: first line `rows cols`, then one comma-separated line per row.
//! * MAT-BIN: magic `ESIM`, version byte, `u64` rows and cols (little endian),
//!   then row-major little-endian `f64` values.
//! * VEC: a single-column matrix in either encoding. The text reader also
//!   accepts a bare list of one float per line without the size header.
//! * Manifests: `key = value` lines, `#` comments.
//!
//! Values are always stored as `f64`. Writing uses Rust's shortest round-trip
//! float formatting, so MAT-CSV round trips are exact for `f64` too.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAT_BIN_MAGIC: &[u8; 4] = b"ESIM";
pub const MAT_BIN_VERSION: u8 = 1;
const MAT_BIN_HEADER: usize = 4 + 1 + 8 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Bin,
}

impl MatrixFormat {
    /// Picks the encoding from a file extension: `.bin`/`.esim` are binary,
    /// everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("bin") || ext.eq_ignore_ascii_case("esim") => {
                MatrixFormat::Bin
            }
            _ => MatrixFormat::Csv,
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" | "mat-csv" => Ok(MatrixFormat::Csv),
            "bin" | "mat-bin" => Ok(MatrixFormat::Bin),
            other => Err(Error::Format(format!("unknown matrix format `{other}`"))),
        }
    }
}

pub fn encode_matrix_csv<T: Real>(m: &DMatrix<T>) -> String {
    let mut out = String::with_capacity(m.len() * 20 + 16);
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", m[(r, c)].as_f64());
        }
        out.push('\n');
    }
    out
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("invalid number `{}`", token.trim())))
}

fn parse_dims(line: &str, lineno: usize) -> Option<Result<(usize, usize)>> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 2 {
        return None;
    }
    let rows = tokens[0].parse::<usize>();
    let cols = tokens[1].parse::<usize>();
    match (rows, cols) {
        (Ok(r), Ok(c)) => Some(Ok((r, c))),
        _ => Some(Err(Error::parse(lineno, "size header must be `rows cols`"))),
    }
}

/// Parses MAT-CSV text. Blank lines and `#` comments are skipped.
pub fn parse_matrix_csv<T: Real>(text: &str) -> Result<DMatrix<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty matrix file"))?;
    let (rows, cols) = match parse_dims(header, hline) {
        Some(dims) => dims?,
        None => return Err(Error::parse(hline, "missing `rows cols` header")),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (lineno, line) in lines {
        if seen_rows == rows {
            return Err(Error::parse(lineno, format!("more than {rows} data rows")));
        }
        let before = data.len();
        for tok in line.split(',') {
            data.push(T::lit(parse_f64(tok, lineno)?));
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                lineno,
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::parse(
            text.lines().count().max(1),
            format!("expected {rows} data rows, found {seen_rows}"),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn encode_matrix_bin<T: Real>(m: &DMatrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAT_BIN_HEADER + 8 * m.len());
    out.extend_from_slice(MAT_BIN_MAGIC);
    out.push(MAT_BIN_VERSION);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].as_f64().to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix_bin<T: Real>(bytes: &[u8]) -> Result<DMatrix<T>> {
    if bytes.len() < MAT_BIN_HEADER || &bytes[..4] != MAT_BIN_MAGIC {
        return Err(Error::Format("missing ESIM magic".into()));
    }
    if bytes[4] != MAT_BIN_VERSION {
        return Err(Error::Format(format!(
            "unsupported MAT-BIN version {}",
            bytes[4]
        )));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let rows = usize::try_from(word(5)).map_err(|_| Error::Format("row count overflow".into()))?;
    let cols = usize::try_from(word(13)).map_err(|_| Error::Format("col count overflow".into()))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
    let payload = &bytes[MAT_BIN_HEADER..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "MAT-BIN payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data: Vec<T> = payload
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Reads a matrix file, detecting MAT-BIN by its magic bytes.
pub fn read_matrix<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAT_BIN_MAGIC) {
        return decode_matrix_bin(&bytes);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{} is neither MAT-BIN nor text", path.display())))?;
    parse_matrix_csv(&text)
}

pub fn write_matrix<T: Real>(path: &Path, m: &DMatrix<T>, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Csv => encode_matrix_csv(m).into_bytes(),
        MatrixFormat::Bin => encode_matrix_bin(m),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses VEC text: either a MAT-CSV single column or one float per line.
pub fn parse_vector<T: Real>(text: &str) -> Result<DVector<T>> {
    let first = text
        .lines()
        .map(|l| strip_comment(l).trim())
        .find(|l| !l.is_empty());
    if let Some(first) = first {
        if first.split_whitespace().count() == 2 {
            let m = parse_matrix_csv::<T>(text)?;
            if m.ncols() != 1 {
                return Err(Error::Shape(format!(
                    "vector file has {} columns, expected 1",
                    m.ncols()
                )));
            }
            return Ok(m.column(0).into_owned());
        }
    }
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        values.push(T::lit(parse_f64(line, i + 1)?));
    }
    Ok(DVector::from_vec(values))
}

pub fn read_vector<T: Real>(path: &Path) -> Result<DVector<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAT_BIN_MAGIC) {
        let m = decode_matrix_bin::<T>(&bytes)?;
        if m.ncols() != 1 {
            return Err(Error::Shape(format!(
                "vector file has {} columns, expected 1",
                m.ncols()
            )));
        }
        return Ok(m.column(0).into_owned());
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{} is neither MAT-BIN nor text", path.display())))?;
    parse_vector(&text)
}

pub fn write_vector<T: Real>(path: &Path, v: &DVector<T>, format: MatrixFormat) -> Result<()> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix(path, &m, format)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Ordered `key = value` text used for manifests and sidecars.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.insert(key.into(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected `key = value`"))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
