//! Feature files: the FVB1 binary container and CSV.
//!
//! FVB1 layout, little-endian: magic `FVB1`, `u32 n`, `u32 d`, `i32` labels
//! `[n]`, then `f32` data `[n·d]` row-major. Features are held as `f64` in
//! memory and narrowed to `f32` on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use vbcgcd_core::FeatureMatrix;

use crate::error::{IoError, Result};

const FVB1_MAGIC: &[u8; 4] = b"FVB1";
const FVB1_HEADER: u64 = 12;

/// On-disk feature formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Fvb1,
    Csv,
}

impl FeatureFormat {
    /// `.csv` means CSV, anything else FVB1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FeatureFormat::Csv,
            _ => FeatureFormat::Fvb1,
        }
    }
}

pub fn read_features(path: &Path, format: FeatureFormat) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        FeatureFormat::Fvb1 => {
            let mut bytes = Vec::new();
            reader.read_to_end(&mut bytes).map_err(|e| IoError::io(path, e))?;
            decode_fvb1(&bytes)
        }
        FeatureFormat::Csv => read_csv(reader),
    }
}

pub fn write_features(m: &FeatureMatrix, path: &Path, format: FeatureFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        FeatureFormat::Fvb1 => w.write_all(&encode_fvb1(m)).map_err(|e| IoError::io(path, e))?,
        FeatureFormat::Csv => write_csv(m, &mut w)?,
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn encode_fvb1(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FVB1_HEADER as usize + m.rows() * (4 + 4 * m.dim()));
    out.extend_from_slice(FVB1_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for &l in m.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for &v in m.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn format_error(offset: u64, message: impl Into<String>) -> IoError {
    IoError::Format {
        format: "FVB1",
        offset,
        message: message.into(),
    }
}

pub fn decode_fvb1(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < 4 || &bytes[..4] != FVB1_MAGIC {
        return Err(format_error(0, "bad magic"));
    }
    if bytes.len() < FVB1_HEADER as usize {
        return Err(format_error(bytes.len() as u64, "truncated header"));
    }
    let word = |at: usize| [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]];
    let n = u32::from_le_bytes(word(4)) as u64;
    let d = u32::from_le_bytes(word(8)) as u64;
    let expected = FVB1_HEADER + 4 * n + 4 * n * d;
    if (bytes.len() as u64) < expected {
        return Err(format_error(
            bytes.len() as u64,
            format!("truncated body, expected {expected} bytes"),
        ));
    }
    if (bytes.len() as u64) > expected {
        return Err(format_error(expected, "trailing bytes"));
    }
    if d == 0 && n > 0 {
        return Err(format_error(8, "zero feature dimension"));
    }
    let labels_at = FVB1_HEADER as usize;
    let labels: Vec<i32> = (0..n as usize).map(|i| i32::from_le_bytes(word(labels_at + 4 * i))).collect();
    let data_at = labels_at + 4 * n as usize;
    let mut data = Vec::with_capacity((n * d) as usize);
    for i in 0..(n * d) as usize {
        let v = f32::from_le_bytes(word(data_at + 4 * i));
        if !v.is_finite() {
            return Err(format_error((data_at + 4 * i) as u64, "non-finite feature"));
        }
        data.push(f64::from(v));
    }
    Ok(FeatureMatrix::new(d as usize, data, labels)?)
}

fn csv_error(line: u64, message: impl Into<String>) -> IoError {
    IoError::Csv {
        line,
        message: message.into(),
    }
}

/// Reads CSV features. A first row containing a non-numeric cell is a
/// header; a header column named `label` supplies labels, otherwise every
/// row is unlabeled (`-1`).
pub fn read_csv<R: Read>(reader: R) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut label_col = None;
    let mut dim = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 1;
        let rec = rec.map_err(|e| csv_error(line, e.to_string()))?;
        if i == 0 && rec.iter().any(|c| c.parse::<f64>().is_err()) {
            label_col = rec.iter().position(|c| c == "label");
            let width = rec.len() - usize::from(label_col.is_some());
            dim = Some(width);
            continue;
        }
        let width = rec.len() - usize::from(label_col.is_some());
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => return Err(csv_error(line, format!("expected {d} features, found {width}"))),
            _ => {}
        }
        let mut label = -1;
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_col {
                label = cell
                    .parse::<i32>()
                    .map_err(|_| csv_error(line, format!("bad label {cell:?}")))?;
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_error(line, format!("bad number {cell:?}")))?;
            if !v.is_finite() {
                return Err(csv_error(line, "non-finite feature"));
            }
            data.push(v);
        }
        labels.push(label);
    }
    let dim = dim.unwrap_or(0);
    if dim == 0 && !labels.is_empty() {
        return Err(csv_error(1, "no feature columns"));
    }
    Ok(FeatureMatrix::new(dim, data, labels)?)
}

/// Writes a `label,f0,f1,…` header and one row per sample. Values are
/// narrowed to `f32`, matching FVB1.
pub fn write_csv<W: Write>(m: &FeatureMatrix, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let to_err = |e: csv::Error| csv_error(0, e.to_string());
    let mut header = vec!["label".to_string()];
    header.extend((0..m.dim()).map(|j| format!("f{j}")));
    wtr.write_record(&header).map_err(to_err)?;
    for (i, row) in m.iter_rows().enumerate() {
        let mut rec = vec![m.label(i).to_string()];
        rec.extend(row.iter().map(|&v| (v as f32).to_string()));
        wtr.write_record(&rec).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| csv_error(0, e.to_string()))
}
