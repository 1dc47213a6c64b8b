use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Idx,
    Csv,
}

fn parse_error(source: &str, position: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        position: position.into(),
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize, source: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            parse_error(
                source,
                format!("byte {offset}"),
                format!("truncated header: file has {} bytes", bytes.len()),
            )
        })
}

/// Parse an IDX image file (`u8` pixels, 3 dimensions) into a `[n × rows·cols]`
/// matrix scaled to `[0, 1]`. Returns the matrix and the image shape.
pub fn parse_idx_images(bytes: &[u8], source: &str) -> Result<(Array2<f64>, (usize, usize))> {
    let magic = be_u32(bytes, 0, source)?;
    if magic != IDX_IMAGES {
        return Err(parse_error(
            source,
            "byte 0",
            format!("bad IDX image magic {magic:#010x}, expected {IDX_IMAGES:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, source)? as usize;
    let rows = be_u32(bytes, 8, source)? as usize;
    let cols = be_u32(bytes, 12, source)? as usize;
    let pixels = rows * cols;
    let expected = 16 + n * pixels;
    if bytes.len() < expected {
        return Err(parse_error(
            source,
            format!("byte {}", bytes.len()),
            format!("truncated image data: expected {expected} bytes for {n} images of {rows}x{cols}"),
        ));
    }
    if bytes.len() > expected {
        return Err(parse_error(
            source,
            format!("byte {expected}"),
            format!("{} trailing bytes after image data", bytes.len() - expected),
        ));
    }
    let data = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    let features = Array2::from_shape_vec((n, pixels), data).expect("checked length");
    Ok((features, (rows, cols)))
}

/// Parse an IDX label file (`u8` labels, 1 dimension).
pub fn parse_idx_labels(bytes: &[u8], source: &str) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, source)?;
    if magic != IDX_LABELS {
        return Err(parse_error(
            source,
            "byte 0",
            format!("bad IDX label magic {magic:#010x}, expected {IDX_LABELS:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, source)? as usize;
    let expected = 8 + n;
    if bytes.len() != expected {
        return Err(parse_error(
            source,
            format!("byte {}", bytes.len().min(expected)),
            format!(
                "expected {n} labels ({expected} bytes), file has {} bytes",
                bytes.len()
            ),
        ));
    }
    Ok(bytes[8..].to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Load an IDX image/label file pair. `classes` defaults to the largest
/// label plus one.
pub fn load_idx(images: &Path, labels: &Path, classes: Option<usize>) -> Result<Dataset> {
    let img_name = images.display().to_string();
    let lbl_name = labels.display().to_string();
    let (features, _) = parse_idx_images(&read(images)?, &img_name)?;
    let raw = parse_idx_labels(&read(labels)?, &lbl_name)?;
    if raw.len() != features.nrows() {
        return Err(parse_error(
            &lbl_name,
            "byte 4",
            format!("{} labels for {} images", raw.len(), features.nrows()),
        ));
    }
    let classes = classes.unwrap_or_else(|| raw.iter().map(|&l| l as usize + 1).max().unwrap_or(0));
    if let Some((i, &l)) = raw.iter().enumerate().find(|(_, &l)| l as usize >= classes) {
        return Err(parse_error(
            &lbl_name,
            format!("byte {}", 8 + i),
            format!("label {l} out of range for {classes} classes"),
        ));
    }
    Dataset::new(features, raw.into_iter().map(usize::from).collect(), classes)
}

/// Parse CSV with the integer label in the first column and features after
/// it. A first row whose first cell is not numeric is treated as a header.
/// Features already in `[0, 1]` are kept; otherwise the whole matrix is
/// min-max scaled into `[0, 1]`.
pub fn parse_csv(reader: impl std::io::Read, source: &str, classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(source, format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(r as u64 + 1, |p| p.line());
        let first = record.get(0).unwrap_or("");
        if r == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        if record.len() < 2 {
            return Err(parse_error(
                source,
                format!("line {line}"),
                "need a label and at least one feature",
            ));
        }
        match width {
            None => width = Some(record.len() - 1),
            Some(w) if w != record.len() - 1 => {
                return Err(parse_error(
                    source,
                    format!("line {line}"),
                    format!("{} features, expected {w}", record.len() - 1),
                ));
            }
            _ => {}
        }
        let label: usize = first.parse().map_err(|_| {
            parse_error(
                source,
                format!("line {line}"),
                format!("label `{first}` is not a non-negative integer"),
            )
        })?;
        if let Some(k) = classes {
            if label >= k {
                return Err(parse_error(
                    source,
                    format!("line {line}"),
                    format!("label {label} out of range for {k} classes"),
                ));
            }
        }
        labels.push(label);
        for (c, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.parse().map_err(|_| {
                parse_error(
                    source,
                    format!("line {line}, column {}", c + 1),
                    format!("`{cell}` is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    source,
                    format!("line {line}, column {}", c + 1),
                    "non-finite feature",
                ));
            }
            values.push(v);
        }
    }
    let Some(width) = width else {
        return Err(parse_error(source, "line 1", "no data rows"));
    };
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if lo < 0.0 || hi > 1.0 {
        let span = hi - lo;
        for v in &mut values {
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m + 1));
    let features = Array2::from_shape_vec((labels.len(), width), values).expect("rectangular");
    Dataset::new(features, labels, classes)
}

pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(
        std::io::BufReader::new(file),
        &path.display().to_string(),
        classes,
    )
}

/// Companion label file of an IDX image file, by the usual naming convention
/// (`*-images-idx3-ubyte` next to `*-labels-idx1-ubyte`).
fn idx_labels_path(images: &Path) -> Result<PathBuf> {
    let name = images
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::config(format!("bad IDX path {}", images.display())))?;
    let label_name = name
        .replace("images-idx3", "labels-idx1")
        .replace("images.idx3", "labels.idx1");
    if label_name == name {
        return Err(Error::config(format!(
            "cannot derive the label file for {}; give the label path explicitly",
            images.display()
        )));
    }
    Ok(images.with_file_name(label_name))
}

/// Load a dataset in either format. IDX label files are located by the
/// standard naming convention.
pub fn load_dataset(path: &Path, format: DataFormat, classes: Option<usize>) -> Result<Dataset> {
    match format {
        DataFormat::Idx => load_idx(path, &idx_labels_path(path)?, classes),
        DataFormat::Csv => load_csv(path, classes),
    }
}
