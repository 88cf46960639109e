//! Matrix, dataset, and image file formats.
//!
//! Two matrix formats are supported:
//!
//! * **binary**: 8-byte magic (`CRTM` + u32 LE format version 1), two u32 LE
//!   dims (rows, cols), then `rows * cols` f64 LE values in column-major
//!   order. Save/load round-trips are bit-exact.
//! * **csv**: one file line per matrix row, values printed with 17
//!   significant digits so parsing reproduces the exact f64.
//!
//! Datasets are described by a plain `key=value` manifest (keys `data_path`,
//! `labels_path`, `height`, `width`, `value_min`, `value_max`); relative
//! paths resolve against the manifest's directory. Pixel values are rescaled
//! to `[0, 1]` at load time using the declared value range.
//!
//! Single images (one matrix column, row-major vectorization) can be exported
//! as binary PGM (`P5`, maxval 255).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{CrtError, Result};
use crate::Matrix;

const MAGIC: &[u8; 4] = b"CRTM";
const FORMAT_VERSION: u32 = 1;

/// On-disk matrix encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// Pick the format from a file extension: `.csv` is CSV, anything else
    /// is the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

fn check_saveable(m: &Matrix, path: &Path) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(CrtError::InvalidArgument(
            "zero dimension rejected".to_string(),
        ));
    }
    for (idx, v) in m.as_slice().iter().enumerate() {
        if !v.is_finite() {
            return Err(CrtError::parse(
                path,
                format!("non-finite value at linear index {idx}"),
            ));
        }
    }
    Ok(())
}

/// Write a matrix to `path` in the given format.
pub fn save_matrix(m: &Matrix, path: &Path, format: MatrixFormat) -> Result<()> {
    check_saveable(m, path)?;
    let file = fs::File::create(path).map_err(|e| CrtError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MatrixFormat::Binary => write_binary(m, &mut w),
        MatrixFormat::Csv => write_csv(m, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| CrtError::io(path, e))
}

fn write_binary(m: &Matrix, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u32).to_le_bytes())?;
    w.write_all(&(m.ncols() as u32).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_csv(m: &Matrix, w: &mut impl Write) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                w.write_all(b",")?;
            }
            // 17 significant digits: parses back to the identical f64.
            write!(w, "{:.16e}", m[(i, j)])?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Load a matrix from `path` in the given format.
///
/// Rejects malformed headers, dimension mismatches, and non-finite values.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Matrix> {
    match format {
        MatrixFormat::Binary => load_binary(path),
        MatrixFormat::Csv => load_csv(path),
    }
}

fn load_binary(path: &Path) -> Result<Matrix> {
    let file = fs::File::open(path).map_err(|e| CrtError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| CrtError::parse(path, "truncated header"))?;
    if &header[0..4] != MAGIC {
        return Err(CrtError::parse(path, "bad magic, expected CRTM"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CrtError::parse(
            path,
            format!("unsupported format version {version}"),
        ));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(CrtError::parse(path, "zero dimension rejected"));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| CrtError::parse(path, "dimension overflow"))?;
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for idx in 0..count {
        r.read_exact(&mut buf).map_err(|_| {
            CrtError::parse(
                path,
                format!("dimension mismatch: expected {count} values, file ends at {idx}"),
            )
        })?;
        let v = f64::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(CrtError::parse(
                path,
                format!("non-finite value at linear index {idx}"),
            ));
        }
        data.push(v);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| CrtError::io(path, e))? != 0 {
        return Err(CrtError::parse(
            path,
            "dimension mismatch: trailing bytes after declared data",
        ));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

fn load_csv(path: &Path) -> Result<Matrix> {
    let file = fs::File::open(path).map_err(|e| CrtError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CrtError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col_no, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CrtError::parse(
                    path,
                    format!("unparseable value at row {line_no}, column {col_no}"),
                )
            })?;
            if !v.is_finite() {
                return Err(CrtError::parse(
                    path,
                    format!("non-finite value at row {line_no}, column {col_no}"),
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CrtError::parse(
                    path,
                    format!(
                        "dimension mismatch: row {line_no} has {} values, expected {}",
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CrtError::parse(path, "empty matrix"));
    }
    let nrows = rows.len();
    let ncols = rows[0].len();
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// A matrix of vectorized images with per-column class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// `p x n` data, one image per column.
    pub data: Matrix,
    /// Class id per column; ids are contiguous from 0.
    pub labels: Vec<usize>,
    pub height: usize,
    pub width: usize,
}

impl LabeledDataset {
    /// Build a dataset, checking the geometry/label invariants.
    pub fn new(data: Matrix, labels: Vec<usize>, height: usize, width: usize) -> Result<Self> {
        if height * width != data.nrows() {
            return Err(CrtError::DimensionMismatch(format!(
                "height * width = {} but data has {} rows",
                height * width,
                data.nrows()
            )));
        }
        if labels.len() != data.ncols() {
            return Err(CrtError::DimensionMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                data.ncols()
            )));
        }
        let max = *labels
            .iter()
            .max()
            .ok_or_else(|| CrtError::InvalidArgument("empty dataset".to_string()))?;
        let mut seen = vec![false; max + 1];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(CrtError::InvalidArgument(
                "non-contiguous labels: class ids must cover 0..=max".to_string(),
            ));
        }
        Ok(LabeledDataset {
            data,
            labels,
            height,
            width,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Description of an on-disk dataset.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub data_path: PathBuf,
    pub labels_path: PathBuf,
    pub height: usize,
    pub width: usize,
    /// Declared raw pixel range `[value_min, value_max]`.
    pub value_min: f64,
    pub value_max: f64,
}

impl DatasetManifest {
    /// Parse a `key=value` manifest file. Relative `data_path`/`labels_path`
    /// are resolved against the manifest's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CrtError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut data_path = None;
        let mut labels_path = None;
        let mut height = None;
        let mut width = None;
        let mut value_min = None;
        let mut value_max = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CrtError::parse(path, format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| CrtError::parse(path, format!("bad {what}: {value:?}"));
            match key {
                "data_path" => data_path = Some(resolve(base, value)),
                "labels_path" => labels_path = Some(resolve(base, value)),
                "height" => height = Some(value.parse().map_err(|_| bad("height"))?),
                "width" => width = Some(value.parse().map_err(|_| bad("width"))?),
                "value_min" => value_min = Some(value.parse().map_err(|_| bad("value_min"))?),
                "value_max" => value_max = Some(value.parse().map_err(|_| bad("value_max"))?),
                other => {
                    return Err(CrtError::parse(path, format!("unknown key {other:?}")));
                }
            }
        }
        let missing = |what: &str| CrtError::parse(path, format!("missing key {what}"));
        Ok(DatasetManifest {
            data_path: data_path.ok_or_else(|| missing("data_path"))?,
            labels_path: labels_path.ok_or_else(|| missing("labels_path"))?,
            height: height.ok_or_else(|| missing("height"))?,
            width: width.ok_or_else(|| missing("width"))?,
            value_min: value_min.ok_or_else(|| missing("value_min"))?,
            value_max: value_max.ok_or_else(|| missing("value_max"))?,
        })
    }

    /// Write the manifest as `key=value` lines.
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = format!(
            "data_path={}\nlabels_path={}\nheight={}\nwidth={}\nvalue_min={}\nvalue_max={}\n",
            self.data_path.display(),
            self.labels_path.display(),
            self.height,
            self.width,
            self.value_min,
            self.value_max,
        );
        fs::write(path, text).map_err(|e| CrtError::io(path, e))
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Load class labels: a text file with one integer per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CrtError::io(path, e))?;
    let mut labels = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse().map_err(|_| {
            CrtError::parse(path, format!("bad label at line {line_no}: {line:?}"))
        })?);
    }
    Ok(labels)
}

/// Write class labels, one integer per line.
pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CrtError::io(path, e))
}

/// Load the dataset a manifest describes, rescaling pixel values to `[0, 1]`
/// with the manifest's declared range.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<LabeledDataset> {
    if manifest.value_max <= manifest.value_min {
        return Err(CrtError::InvalidArgument(format!(
            "value range [{}, {}] is empty",
            manifest.value_min, manifest.value_max
        )));
    }
    let format = MatrixFormat::from_path(&manifest.data_path);
    let raw = load_matrix(&manifest.data_path, format)?;
    let labels = load_labels(&manifest.labels_path)?;
    let span = manifest.value_max - manifest.value_min;
    for (idx, v) in raw.as_slice().iter().enumerate() {
        if *v < manifest.value_min || *v > manifest.value_max {
            return Err(CrtError::parse(
                &manifest.data_path,
                format!("value {v} at linear index {idx} outside declared range"),
            ));
        }
    }
    let data = raw.map(|v| (v - manifest.value_min) / span);
    LabeledDataset::new(data, labels, manifest.height, manifest.width)
}

/// Export one vectorized image (row-major, length `height * width`) as a
/// binary PGM. Values are affinely mapped so the minimum becomes 0 and the
/// maximum 255 (rounding half up); a constant image maps to 128 everywhere.
pub fn export_image_pgm(v: &[f64], height: usize, width: usize, path: &Path) -> Result<()> {
    if v.len() != height * width {
        return Err(CrtError::DimensionMismatch(format!(
            "vector length {} != {height} x {width}",
            v.len()
        )));
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut bytes = Vec::with_capacity(v.len());
    if hi > lo {
        let scale = 255.0 / (hi - lo);
        bytes.extend(v.iter().map(|&x| ((x - lo) * scale).round() as u8));
    } else {
        bytes.resize(v.len(), 128u8);
    }
    let file = fs::File::create(path).map_err(|e| CrtError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{width} {height}\n255\n")
        .and_then(|_| w.write_all(&bytes))
        .and_then(|_| w.flush())
        .map_err(|e| CrtError::io(path, e))
}

/// Read a binary PGM written by [`export_image_pgm`] (or any maxval-255 P5
/// file). Returns `(height, width, bytes)` with bytes in row-major order.
pub fn read_image_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let raw = fs::read(path).map_err(|e| CrtError::io(path, e))?;
    let mut pos = 0usize;
    let mut token = |raw: &[u8]| -> Result<String> {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < raw.len() && raw[pos] == b'#' {
            while pos < raw.len() && raw[pos] != b'\n' {
                pos += 1;
            }
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CrtError::parse(path, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };
    if token(&raw)? != "P5" {
        return Err(CrtError::parse(path, "not a P5 PGM"));
    }
    let width: usize = token(&raw)?
        .parse()
        .map_err(|_| CrtError::parse(path, "bad width"))?;
    let height: usize = token(&raw)?
        .parse()
        .map_err(|_| CrtError::parse(path, "bad height"))?;
    let maxval: usize = token(&raw)?
        .parse()
        .map_err(|_| CrtError::parse(path, "bad maxval"))?;
    if maxval != 255 {
        return Err(CrtError::parse(path, format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    if raw.len() < pos + height * width {
        return Err(CrtError::parse(path, "truncated pixel data"));
    }
    Ok((height, width, raw[pos..pos + height * width].to_vec()))
}
