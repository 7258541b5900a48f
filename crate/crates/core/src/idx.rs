//! IDX image/label files and the perturbed-dataset sidecars.
//!
//! Image files: big-endian `u32` magic 2051, count, rows, cols, then
//! `count * rows * cols` bytes in row-major order. Label files: magic 2049,
//! count, then one byte per label. Sidecars and flag files are headerless.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const IMAGE_HEADER_LEN: u64 = 16;
pub const LABEL_HEADER_LEN: u64 = 8;

/// Sidecar byte pair marking an unperturbed image.
pub const CLEAN_SENTINEL: [u8; 2] = [0xFF, 0xFF];
pub const SIDECAR_ENTRY_LEN: u64 = 2;

pub const FLAG_CLEAN: u8 = 0;
pub const FLAG_PERTURBED: u8 = 1;

/// Total file size for an image file, `None` on overflow.
pub fn image_file_size(count: u64, rows: u64, cols: u64) -> Option<u64> {
    count
        .checked_mul(rows)?
        .checked_mul(cols)?
        .checked_add(IMAGE_HEADER_LEN)
}

pub fn label_file_size(count: u64) -> u64 {
    LABEL_HEADER_LEN + count
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn to_u32(path: &Path, what: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        reason: format!("{what} {v} does not fit in a u32 header field"),
    })
}

pub fn image_header(count: u32, rows: u32, cols: u32) -> [u8; 16] {
    let mut h = [0u8; 16];
    h[0..4].copy_from_slice(&IMAGE_MAGIC.to_be_bytes());
    h[4..8].copy_from_slice(&count.to_be_bytes());
    h[8..12].copy_from_slice(&rows.to_be_bytes());
    h[12..16].copy_from_slice(&cols.to_be_bytes());
    h
}

pub fn label_header(count: u32) -> [u8; 8] {
    let mut h = [0u8; 8];
    h[0..4].copy_from_slice(&LABEL_MAGIC.to_be_bytes());
    h[4..8].copy_from_slice(&count.to_be_bytes());
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    count: usize,
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl IdxImages {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        let per = rows * cols;
        if per == 0 {
            if !pixels.is_empty() {
                return Err(Error::invalid(
                    "pixels",
                    "non-empty buffer for zero-area images",
                ));
            }
        } else if pixels.len() % per != 0 {
            return Err(Error::invalid(
                "pixels",
                format!("{} bytes is not a multiple of {rows}x{cols}", pixels.len()),
            ));
        }
        let count = if per == 0 { 0 } else { pixels.len() / per };
        Ok(Self {
            count,
            rows,
            cols,
            pixels,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let per = self.rows * self.cols;
        &self.pixels[i * per..(i + 1) * per]
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let p = Path::new("<memory>");
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        out.extend_from_slice(&image_header(
            to_u32(p, "count", self.count())?,
            to_u32(p, "rows", self.rows)?,
            to_u32(p, "cols", self.cols)?,
        ));
        out.extend_from_slice(&self.pixels);
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let (count, rows, cols) = check_image_layout(bytes, path)?;
        Ok(Self {
            count,
            rows,
            cols,
            pixels: bytes[IMAGE_HEADER_LEN as usize..].to_vec(),
        })
    }
}

fn check_magic(bytes: &[u8], path: &Path, expected: u32, header_len: u64) -> Result<()> {
    if (bytes.len() as u64) < header_len {
        if bytes.len() >= 4 && be_u32(bytes, 0) != expected {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected,
                found: be_u32(bytes, 0),
            });
        }
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header_len,
            actual: bytes.len() as u64,
        });
    }
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_payload(path: &Path, expected: u64, actual: u64) -> Result<()> {
    if actual < expected {
        Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual,
        })
    } else if actual > expected {
        Err(Error::TrailingBytes {
            path: path.to_path_buf(),
            extra: actual - expected,
        })
    } else {
        Ok(())
    }
}

fn check_image_layout(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize)> {
    check_magic(bytes, path, IMAGE_MAGIC, IMAGE_HEADER_LEN)?;
    let (count, rows, cols) = (be_u32(bytes, 4), be_u32(bytes, 8), be_u32(bytes, 12));
    let expected = image_file_size(count.into(), rows.into(), cols.into())
        .filter(|&s| usize::try_from(s).is_ok())
        .ok_or_else(|| Error::SizeOverflow {
            path: path.to_path_buf(),
            count: count.into(),
            rows: rows.into(),
            cols: cols.into(),
        })?;
    check_payload(path, expected, bytes.len() as u64)?;
    Ok((count as usize, rows as usize, cols as usize))
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    IdxImages::decode(&std::fs::read(path)?, path)
}

pub fn write_idx_images(images: &IdxImages, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = IdxWriter::images(path, images.count(), images.rows, images.cols)?;
    for i in 0..images.count() {
        w.push(images.image(i))?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub labels: Vec<u8>,
}

impl IdxLabels {
    pub fn new(labels: Vec<u8>) -> Self {
        Self { labels }
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let count = to_u32(Path::new("<memory>"), "count", self.labels.len())?;
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&label_header(count));
        out.extend_from_slice(&self.labels);
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        check_magic(bytes, path, LABEL_MAGIC, LABEL_HEADER_LEN)?;
        let count = be_u32(bytes, 4);
        check_payload(path, label_file_size(count.into()), bytes.len() as u64)?;
        Ok(Self {
            labels: bytes[LABEL_HEADER_LEN as usize..].to_vec(),
        })
    }
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<IdxLabels> {
    let path = path.as_ref();
    IdxLabels::decode(&std::fs::read(path)?, path)
}

pub fn write_idx_labels(labels: &IdxLabels, path: impl AsRef<Path>) -> Result<()> {
    let mut w = IdxWriter::labels(path.as_ref(), labels.count())?;
    for &l in &labels.labels {
        w.push(&[l])?;
    }
    w.finish()
}

/// Streaming writer: the header is written up front and `finish` checks that
/// exactly the declared number of records arrived.
pub struct IdxWriter {
    out: BufWriter<File>,
    path: PathBuf,
    record_len: usize,
    expected: u64,
    written: u64,
}

impl IdxWriter {
    pub fn images(path: &Path, count: usize, rows: usize, cols: usize) -> Result<Self> {
        let header = image_header(
            to_u32(path, "count", count)?,
            to_u32(path, "rows", rows)?,
            to_u32(path, "cols", cols)?,
        );
        Self::create(path, &header, rows * cols, count)
    }

    pub fn labels(path: &Path, count: usize) -> Result<Self> {
        let header = label_header(to_u32(path, "count", count)?);
        Self::create(path, &header, 1, count)
    }

    /// Headerless file of fixed-width records.
    pub fn raw(path: &Path, record_len: usize, count: usize) -> Result<Self> {
        Self::create(path, &[], record_len, count)
    }

    fn create(path: &Path, header: &[u8], record_len: usize, count: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(header)?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            record_len,
            expected: count as u64,
            written: 0,
        })
    }

    pub fn push(&mut self, record: &[u8]) -> Result<()> {
        if record.len() != self.record_len {
            return Err(Error::LengthMismatch {
                what: "record",
                expected: self.record_len,
                actual: record.len(),
            });
        }
        if self.written == self.expected {
            return Err(Error::CountMismatch {
                path: self.path.clone(),
                expected: self.expected,
                actual: self.written + 1,
            });
        }
        self.out.write_all(record)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::CountMismatch {
                path: self.path,
                expected: self.expected,
                actual: self.written,
            });
        }
        self.out.flush()?;
        Ok(())
    }
}

/// One sidecar entry. `level` is the stored level byte (0..=9), one less
/// than the 1..=10 intensity it encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SidecarEntry {
    Clean,
    Perturbed { type_code: u8, level: u8 },
}

pub const MAX_TYPE_CODE: u8 = 11;
pub const MAX_LEVEL_BYTE: u8 = 9;

impl SidecarEntry {
    pub fn to_bytes(self) -> [u8; 2] {
        match self {
            SidecarEntry::Clean => CLEAN_SENTINEL,
            SidecarEntry::Perturbed { type_code, level } => [type_code, level],
        }
    }

    pub fn from_bytes(bytes: [u8; 2], index: usize) -> Result<Self> {
        match bytes {
            CLEAN_SENTINEL => Ok(SidecarEntry::Clean),
            [t, l] if t <= MAX_TYPE_CODE && l <= MAX_LEVEL_BYTE => Ok(SidecarEntry::Perturbed {
                type_code: t,
                level: l,
            }),
            [0xFF, _] | [_, 0xFF] => Err(Error::InvalidSidecarEntry {
                index,
                reason: format!("half sentinel {:02x}{:02x}", bytes[0], bytes[1]),
            }),
            [t, _] if t > MAX_TYPE_CODE => Err(Error::InvalidSidecarEntry {
                index,
                reason: format!("type code {t} outside 0..={MAX_TYPE_CODE}"),
            }),
            [_, l] => Err(Error::InvalidSidecarEntry {
                index,
                reason: format!("level byte {l} outside 0..={MAX_LEVEL_BYTE}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PerturbationSidecar {
    pub entries: Vec<SidecarEntry>,
}

impl PerturbationSidecar {
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|e| e.to_bytes()).collect()
    }

    pub fn decode(bytes: &[u8], count: usize, path: &Path) -> Result<Self> {
        check_payload(path, count as u64 * SIDECAR_ENTRY_LEN, bytes.len() as u64)?;
        let entries = bytes
            .chunks_exact(2)
            .enumerate()
            .map(|(i, b)| SidecarEntry::from_bytes([b[0], b[1]], i))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

pub fn read_sidecar(path: impl AsRef<Path>, count: usize) -> Result<PerturbationSidecar> {
    let path = path.as_ref();
    PerturbationSidecar::decode(&std::fs::read(path)?, count, path)
}

pub fn write_sidecar(sidecar: &PerturbationSidecar, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, sidecar.encode())?;
    Ok(())
}

pub fn read_flags(path: impl AsRef<Path>, count: usize) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    check_payload(path, count as u64, bytes.len() as u64)?;
    if let Some(i) = bytes.iter().position(|&b| b > FLAG_PERTURBED) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("flag byte {} at index {i} is neither 0 nor 1", bytes[i]),
        });
    }
    Ok(bytes)
}

pub fn write_flags(flags: &[u8], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, flags)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IdxKind {
    Images,
    Labels,
}

/// Header summary of an IDX file, as reported by `inspect`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdxHeaderReport {
    pub path: PathBuf,
    pub magic: Option<u32>,
    pub kind: Option<IdxKind>,
    pub count: Option<u32>,
    pub rows: Option<u32>,
    pub cols: Option<u32>,
    pub expected_size: Option<u64>,
    pub actual_size: u64,
    pub problem: Option<String>,
}

impl IdxHeaderReport {
    pub fn is_ok(&self) -> bool {
        self.problem.is_none()
    }
}

impl fmt::Display for IdxHeaderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        writeln!(f, "path: {}", self.path.display())?;
        writeln!(f, "magic: {}", opt(self.magic.map(u64::from)))?;
        let kind = match self.kind {
            Some(IdxKind::Images) => "images",
            Some(IdxKind::Labels) => "labels",
            None => "unknown",
        };
        writeln!(f, "kind: {kind}")?;
        writeln!(f, "count: {}", opt(self.count.map(u64::from)))?;
        if self.kind != Some(IdxKind::Labels) {
            writeln!(f, "rows: {}", opt(self.rows.map(u64::from)))?;
            writeln!(f, "cols: {}", opt(self.cols.map(u64::from)))?;
        }
        writeln!(f, "expected size: {}", opt(self.expected_size))?;
        writeln!(f, "actual size: {}", self.actual_size)?;
        write!(f, "status: {}", self.problem.as_deref().unwrap_or("ok"))
    }
}

/// Reads only the header and the file length. Fails only when the file
/// cannot be opened; format problems land in `problem`.
pub fn inspect(path: impl AsRef<Path>) -> Result<IdxHeaderReport> {
    let path = path.as_ref();
    let mut file = File::open(path)?;
    let actual_size = file.metadata()?.len();
    let mut header = Vec::with_capacity(16);
    Read::by_ref(&mut file).take(16).read_to_end(&mut header)?;

    let mut report = IdxHeaderReport {
        path: path.to_path_buf(),
        magic: None,
        kind: None,
        count: None,
        rows: None,
        cols: None,
        expected_size: None,
        actual_size,
        problem: None,
    };
    if header.len() < 8 {
        report.problem = Some(format!("truncated header ({} bytes)", header.len()));
        return Ok(report);
    }
    let magic = be_u32(&header, 0);
    report.magic = Some(magic);
    report.count = Some(be_u32(&header, 4));
    match magic {
        IMAGE_MAGIC => {
            report.kind = Some(IdxKind::Images);
            if header.len() < 16 {
                report.problem = Some(format!("truncated header ({} bytes)", header.len()));
                return Ok(report);
            }
            let (rows, cols) = (be_u32(&header, 8), be_u32(&header, 12));
            report.rows = Some(rows);
            report.cols = Some(cols);
            report.expected_size =
                image_file_size(be_u32(&header, 4).into(), rows.into(), cols.into());
            if report.expected_size.is_none() {
                report.problem = Some("declared size overflows".into());
                return Ok(report);
            }
        }
        LABEL_MAGIC => {
            report.kind = Some(IdxKind::Labels);
            report.expected_size = Some(label_file_size(be_u32(&header, 4).into()));
        }
        other => {
            report.problem = Some(format!(
                "bad magic {other:#010x}, expected {IMAGE_MAGIC:#010x} or {LABEL_MAGIC:#010x}"
            ));
            return Ok(report);
        }
    }
    let expected = report.expected_size.unwrap();
    if actual_size < expected {
        report.problem = Some(format!(
            "truncated payload: {} bytes missing",
            expected - actual_size
        ));
    } else if actual_size > expected {
        report.problem = Some(format!("{} trailing bytes", actual_size - expected));
    }
    Ok(report)
}
