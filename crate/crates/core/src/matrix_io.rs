//! Exchange formats for [`PredictionMatrix`].
//!
//! `smx` is a little-endian binary layout:
//!
//! ```text
//! "SMXP" | version: u16 = 1 | k: u16 | n: u64 | n x (k probs, true, pred) as f64
//! ```
//!
//! `csv` has the header `p0,...,p{k-1},true,pred` and integer labels.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{PredictionMatrix, PredictionRecord};

pub const SMX_MAGIC: [u8; 4] = *b"SMXP";
pub const SMX_VERSION: u16 = 1;
const SMX_HEADER_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Smx,
    Csv,
}

impl MatrixFormat {
    /// Picks a format from the file extension; anything but `.csv` is smx.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Smx,
        }
    }
}

pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<PredictionMatrix> {
    let path = path.as_ref();
    let tag = path.display().to_string();
    let matrix = match format {
        MatrixFormat::Smx => {
            let mut bytes = Vec::new();
            File::open(path)?.read_to_end(&mut bytes)?;
            decode_smx(&bytes, path)?
        }
        MatrixFormat::Csv => read_csv(path)?,
    };
    Ok(matrix.with_source_tag(tag))
}

pub fn write_matrix(
    matrix: &PredictionMatrix,
    path: impl AsRef<Path>,
    format: MatrixFormat,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Smx => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(&encode_smx(matrix))?;
            w.flush()?;
        }
        MatrixFormat::Csv => write_csv(matrix, path)?,
    }
    Ok(())
}

pub fn encode_smx(matrix: &PredictionMatrix) -> Vec<u8> {
    let k = matrix.k();
    let mut out = Vec::with_capacity(SMX_HEADER_LEN as usize + matrix.len() * (k + 2) * 8);
    out.extend_from_slice(&SMX_MAGIC);
    out.extend_from_slice(&SMX_VERSION.to_le_bytes());
    out.extend_from_slice(&(k as u16).to_le_bytes());
    out.extend_from_slice(&(matrix.len() as u64).to_le_bytes());
    for rec in matrix {
        for p in &rec.probs {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&(rec.true_label as f64).to_le_bytes());
        out.extend_from_slice(&(rec.pred_label as f64).to_le_bytes());
    }
    out
}

pub fn decode_smx(bytes: &[u8], path: &Path) -> Result<PredictionMatrix> {
    let path_buf = || PathBuf::from(path);
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path_buf(),
            expected: SMX_HEADER_LEN,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != SMX_MAGIC {
        return Err(Error::BadSmxMagic {
            path: path_buf(),
            found: magic,
        });
    }
    if (bytes.len() as u64) < SMX_HEADER_LEN {
        return Err(Error::Truncated {
            path: path_buf(),
            expected: SMX_HEADER_LEN,
            actual: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SMX_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path_buf(),
            version,
        });
    }
    let k = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if k < 2 {
        return Err(Error::Malformed {
            path: path_buf(),
            reason: format!("header declares k = {k}"),
        });
    }
    let row_bytes = (k as u64 + 2) * 8;
    let expected = n
        .checked_mul(row_bytes)
        .and_then(|p| p.checked_add(SMX_HEADER_LEN))
        .ok_or(Error::SizeOverflow {
            path: path_buf(),
            count: n,
            rows: k as u64 + 2,
            cols: 8,
        })?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::TrailingBytes {
            path: path_buf(),
            extra: actual - expected,
        });
    }

    let mut records = Vec::with_capacity(n as usize);
    let payload = &bytes[SMX_HEADER_LEN as usize..];
    for (row, chunk) in payload.chunks_exact(row_bytes as usize).enumerate() {
        let mut values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        let mut probs = Vec::with_capacity(k);
        for col in 0..k {
            let p = values.next().unwrap();
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    path: path_buf(),
                    row,
                    col,
                });
            }
            probs.push(p);
        }
        let true_label = label_from_f64(values.next().unwrap(), k, row, k, path)?;
        let pred_label = label_from_f64(values.next().unwrap(), k, row, k + 1, path)?;
        records.push(PredictionRecord::new(probs, true_label, pred_label));
    }
    PredictionMatrix::new(k, records, path.display().to_string())
}

fn label_from_f64(v: f64, k: usize, row: usize, col: usize, path: &Path) -> Result<usize> {
    if !v.is_finite() {
        return Err(Error::NonFinite {
            path: path.into(),
            row,
            col,
        });
    }
    if v < 0.0 || v.fract() != 0.0 || v >= k as f64 {
        return Err(Error::Malformed {
            path: path.into(),
            reason: format!("row {row}: label value {v} is not a class index below {k}"),
        });
    }
    Ok(v as usize)
}

fn read_csv(path: &Path) -> Result<PredictionMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    let k = parse_csv_header(&header).map_err(|reason| Error::Malformed {
        path: path.into(),
        reason,
    })?;

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        if rec.len() != k + 2 {
            return Err(Error::KMismatch {
                path: path.into(),
                row,
                expected: k + 2,
                actual: rec.len(),
            });
        }
        let mut probs = Vec::with_capacity(k);
        for col in 0..k {
            let p: f64 = rec[col].parse().map_err(|_| Error::Malformed {
                path: path.into(),
                reason: format!("row {row}, column {col}: `{}` is not a number", &rec[col]),
            })?;
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    path: path.into(),
                    row,
                    col,
                });
            }
            probs.push(p);
        }
        let label = |col: usize| -> Result<usize> {
            let l: usize = rec[col].parse().map_err(|_| Error::Malformed {
                path: path.into(),
                reason: format!("row {row}, column {col}: `{}` is not a label", &rec[col]),
            })?;
            if l >= k {
                return Err(Error::LabelOutOfRange { row, label: l, k });
            }
            Ok(l)
        };
        records.push(PredictionRecord::new(probs, label(k)?, label(k + 1)?));
    }
    PredictionMatrix::new(k, records, path.display().to_string())
}

fn parse_csv_header(header: &csv::StringRecord) -> std::result::Result<usize, String> {
    let n = header.len();
    if n < 4 {
        return Err(format!("header has {n} columns, need p0,p1,...,true,pred"));
    }
    let k = n - 2;
    for (i, name) in header.iter().take(k).enumerate() {
        if name != format!("p{i}") {
            return Err(format!("header column {i} is `{name}`, expected `p{i}`"));
        }
    }
    if &header[k] != "true" || &header[k + 1] != "pred" {
        return Err("header must end with `true,pred`".into());
    }
    Ok(k)
}

fn write_csv(matrix: &PredictionMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_csv_to(matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_csv_to<W: Write>(
    matrix: &PredictionMatrix,
    w: &mut csv::Writer<W>,
) -> Result<()> {
    let k = matrix.k();
    let mut header: Vec<String> = (0..k).map(|i| format!("p{i}")).collect();
    header.push("true".into());
    header.push("pred".into());
    w.write_record(&header)?;
    let mut fields = Vec::with_capacity(k + 2);
    for rec in matrix {
        fields.clear();
        fields.extend(rec.probs.iter().map(|p| p.to_string()));
        fields.push(rec.true_label.to_string());
        fields.push(rec.pred_label.to_string());
        w.write_record(&fields)?;
    }
    Ok(())
}
