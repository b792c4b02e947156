//! Embedding files.
//!
//! Binary layout (little-endian):
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `NUQE`                |
//! | 4      | 1    | version, `1`                |
//! | 5      | 1    | flags, bit 0 = has labels    |
//! | 6      | 4    | `N` rows (u32)              |
//! | 10     | 4    | `d` columns (u32)           |
//! | 14     | 4    | `C` classes (u32, 0 if none) |
//! | 18     | 4Nd  | f32 values, row-major       |
//! | ..     | 4N   | u32 labels, if flagged      |
//!
//! Paths ending in `.csv` are read and written as CSV instead: `d` float
//! columns plus an optional integer label column.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dataset::{EmbeddingDataset, PointMatrix};
use crate::error::{NuqError, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"NUQE";
pub const EMBEDDING_VERSION: u8 = 1;
pub const EMBEDDING_HEADER_LEN: usize = 18;

const FLAG_LABELS: u8 = 1;

/// Contents of an embedding file; labels are optional.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub points: PointMatrix,
    pub labels: Option<Vec<u32>>,
    /// Class count; zero for unlabeled files.
    pub num_classes: usize,
}

impl EmbeddingFile {
    pub fn unlabeled(points: PointMatrix) -> Self {
        EmbeddingFile {
            points,
            labels: None,
            num_classes: 0,
        }
    }

    pub fn from_dataset(ds: &EmbeddingDataset) -> Self {
        EmbeddingFile {
            points: ds.points().clone(),
            labels: Some(ds.labels().to_vec()),
            num_classes: ds.num_classes(),
        }
    }

    pub fn into_dataset(self) -> Result<EmbeddingDataset> {
        let labels = self
            .labels
            .ok_or_else(|| NuqError::input("embedding file has no labels"))?;
        EmbeddingDataset::new(self.points, labels, self.num_classes)
    }
}

/// Where the label column sits in a CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    None,
    First,
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = NuqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(LabelColumn::None),
            "first" => Ok(LabelColumn::First),
            "last" => Ok(LabelColumn::Last),
            other => Err(NuqError::config(format!(
                "unknown label column {other:?} (expected none, first or last)"
            ))),
        }
    }
}

pub fn encode_embeddings(file: &EmbeddingFile) -> Result<Vec<u8>> {
    let n = file.points.rows();
    let d = file.points.dim();
    let labeled = file.labels.is_some();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| NuqError::input(format!("{what} {v} does not fit in u32")))
    };
    let mut out =
        Vec::with_capacity(EMBEDDING_HEADER_LEN + 4 * n * d + if labeled { 4 * n } else { 0 });
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.push(EMBEDDING_VERSION);
    out.push(if labeled { FLAG_LABELS } else { 0 });
    out.extend_from_slice(&to_u32(n, "row count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "dimension")?.to_le_bytes());
    out.extend_from_slice(
        &to_u32(if labeled { file.num_classes } else { 0 }, "class count")?.to_le_bytes(),
    );
    for v in file.points.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = &file.labels {
        if labels.len() != n {
            return Err(NuqError::input(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        for y in labels {
            out.extend_from_slice(&y.to_le_bytes());
        }
    }
    Ok(out)
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub(crate) fn read_f32(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub(crate) fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Decodes `count` finite f32 values starting at `at`.
pub(crate) fn decode_f32s(bytes: &[u8], at: usize, count: usize) -> Result<Vec<f32>> {
    (0..count)
        .map(|i| {
            let off = at + 4 * i;
            let v = read_f32(bytes, off);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(NuqError::parse(off as u64, format!("non-finite value {v}")))
            }
        })
        .collect()
}

/// Decodes `count` labels at `at`, each below `num_classes`.
pub(crate) fn decode_labels(
    bytes: &[u8],
    at: usize,
    count: usize,
    num_classes: usize,
) -> Result<Vec<u32>> {
    (0..count)
        .map(|i| {
            let off = at + 4 * i;
            let y = read_u32(bytes, off);
            if (y as usize) < num_classes {
                Ok(y)
            } else {
                Err(NuqError::parse(
                    off as u64,
                    format!("label {y} is not below class count {num_classes}"),
                ))
            }
        })
        .collect()
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingFile> {
    if bytes.len() < 4 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(NuqError::parse(0, "bad magic, expected NUQE"));
    }
    if bytes.len() < EMBEDDING_HEADER_LEN {
        return Err(NuqError::parse(bytes.len() as u64, "truncated header"));
    }
    if bytes[4] != EMBEDDING_VERSION {
        return Err(NuqError::parse(
            4,
            format!("unsupported version {}", bytes[4]),
        ));
    }
    let flags = bytes[5];
    if flags & !FLAG_LABELS != 0 {
        return Err(NuqError::parse(
            5,
            format!("unknown flag bits {flags:#04x}"),
        ));
    }
    let labeled = flags & FLAG_LABELS != 0;
    let n = read_u32(bytes, 6) as usize;
    let d = read_u32(bytes, 10) as usize;
    let c = read_u32(bytes, 14) as usize;
    if d == 0 {
        return Err(NuqError::parse(10, "dimension is zero"));
    }
    if labeled && c == 0 && n > 0 {
        return Err(NuqError::parse(14, "labeled file declares zero classes"));
    }
    let values_at = EMBEDDING_HEADER_LEN;
    let labels_at = values_at as u128 + 4 * n as u128 * d as u128;
    let expected = labels_at + if labeled { 4 * n as u128 } else { 0 };
    if (bytes.len() as u128) < expected {
        return Err(NuqError::parse(
            bytes.len() as u64,
            format!("truncated payload, expected {expected} bytes"),
        ));
    }
    if (bytes.len() as u128) > expected {
        return Err(NuqError::parse(
            expected as u64,
            "trailing bytes after payload",
        ));
    }
    let values = decode_f32s(bytes, values_at, n * d)?;
    let labels = if labeled {
        Some(decode_labels(bytes, labels_at as usize, n, c)?)
    } else {
        None
    };
    Ok(EmbeddingFile {
        points: PointMatrix::new(d, values)?,
        labels,
        num_classes: if labeled { c } else { 0 },
    })
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| NuqError::Io(e.error))?;
    Ok(())
}

/// Reads a binary or (by extension) CSV embedding file.
pub fn read_embeddings(path: &Path, label_col: LabelColumn) -> Result<EmbeddingFile> {
    let bytes = fs::read(path)?;
    if is_csv(path) {
        parse_csv(&bytes, label_col)
    } else {
        decode_embeddings(&bytes)
    }
}

pub fn write_embeddings(file: &EmbeddingFile, path: &Path) -> Result<()> {
    let bytes = if is_csv(path) {
        encode_csv(file)?
    } else {
        encode_embeddings(file)?
    };
    write_atomic(path, &bytes)
}

pub fn read_dataset(path: &Path, label_col: LabelColumn) -> Result<EmbeddingDataset> {
    read_embeddings(path, label_col)?.into_dataset()
}

/// Parses CSV rows of floats. A first row that does not parse is taken as
/// a header.
pub fn parse_csv(bytes: &[u8], label_col: LabelColumn) -> Result<EmbeddingFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut dim = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte());
            NuqError::parse(off, e.to_string())
        })?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let fields: Vec<&str> = rec.iter().collect();
        let (label_field, value_fields) = match label_col {
            LabelColumn::None => (None, &fields[..]),
            LabelColumn::First if !fields.is_empty() => (Some(fields[0]), &fields[1..]),
            LabelColumn::Last if !fields.is_empty() => {
                (Some(fields[fields.len() - 1]), &fields[..fields.len() - 1])
            }
            _ => return Err(NuqError::parse(offset, "empty record")),
        };
        let parsed: std::result::Result<Vec<f32>, _> =
            value_fields.iter().map(|f| f.parse::<f32>()).collect();
        let label = label_field.map(|f| f.parse::<u32>());
        let (parsed, label) = match (parsed, label) {
            (Ok(p), None) => (p, None),
            (Ok(p), Some(Ok(y))) => (p, Some(y)),
            _ if row == 0 => continue,
            _ => {
                return Err(NuqError::parse(
                    offset,
                    format!("unparseable record {}", row + 1),
                ))
            }
        };
        if let Some(v) = parsed.iter().find(|v| !v.is_finite()) {
            return Err(NuqError::parse(offset, format!("non-finite value {v}")));
        }
        match dim {
            None if parsed.is_empty() => {
                return Err(NuqError::parse(offset, "record has no value columns"))
            }
            None => dim = Some(parsed.len()),
            Some(d) if d != parsed.len() => {
                return Err(NuqError::parse(
                    offset,
                    format!("record has {} values, expected {d}", parsed.len()),
                ));
            }
            _ => {}
        }
        values.extend(parsed);
        if let Some(y) = label {
            labels.push(y);
        }
    }
    let dim = dim.ok_or_else(|| NuqError::parse(0, "no data records"))?;
    let points = PointMatrix::new(dim, values)?;
    Ok(match label_col {
        LabelColumn::None => EmbeddingFile::unlabeled(points),
        _ => {
            let num_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
            EmbeddingFile {
                points,
                labels: Some(labels),
                num_classes,
            }
        }
    })
}

/// CSV with labels, when present, in the last column.
pub fn encode_csv(file: &EmbeddingFile) -> Result<Vec<u8>> {
    let mut out = String::new();
    for (i, row) in file.points.iter_rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &file.labels {
            fields.push(labels[i].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out.into_bytes())
}
