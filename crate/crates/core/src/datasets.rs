//! Data plumbing: IDX image/label files, image-to-signal flattening, the
//! three-cluster signal generator, and the signals CSV format.
//!
//! IDX is the big-endian binary layout used by the classic digit datasets:
//! a magic word, one u32 per dimension, then an unsigned-byte payload.
//! Pixel bytes are mapped to [0, 1] by dividing by 255.

use crate::diffuse::{DiffuseError, SignalSet};
use crate::graph::Graph;
use ndarray::Array1;
use rand::Rng;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad magic {found:#010x} at byte {offset}, expected {expected:#010x}")]
    BadMagic { offset: usize, found: u32, expected: u32 },
    #[error("truncated file: need {needed} bytes at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("{extra} trailing bytes after offset {offset}")]
    TrailingData { offset: usize, extra: usize },
    #[error("image dimensions {rows}x{cols} must be positive")]
    BadDimensions { rows: usize, cols: usize },
    #[error("image index {index} out of range for {count} images")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("intensity {value} at image {index} outside [0, 1]")]
    BadIntensity { index: usize, value: f64 },
    #[error("image {index} has {got} pixels, expected {expected}")]
    PixelCount { index: usize, expected: usize, got: usize },
    #[error("label {label} at index {index} does not fit in one byte")]
    LabelTooLarge { index: usize, label: usize },
    #[error("{nodes} nodes but {labels} cluster labels")]
    LabelsMismatch { nodes: usize, labels: usize },
    #[error("cluster {cluster} has {size} nodes, need at least 2")]
    ClusterTooSmall { cluster: usize, size: usize },
    #[error("cluster {cluster} spans the whole graph, no outside nodes")]
    NoOutsideNodes { cluster: usize },
    #[error("per_type must be at least 1")]
    ZeroPerType,
    #[error("signal set has no labels to write")]
    MissingLabels,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Diffuse(#[from] DiffuseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// A batch of equally sized grayscale images with intensities in [0, 1],
/// flattened row-major, plus optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    rows: usize,
    cols: usize,
    pixels: Vec<Array1<f64>>,
    labels: Option<Vec<usize>>,
}

impl ImageSet {
    pub fn new(
        rows: usize,
        cols: usize,
        pixels: Vec<Array1<f64>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DatasetError::BadDimensions { rows, cols });
        }
        for (index, img) in pixels.iter().enumerate() {
            if img.len() != rows * cols {
                return Err(DatasetError::PixelCount {
                    index,
                    expected: rows * cols,
                    got: img.len(),
                });
            }
            for &value in img {
                if !(0.0..=1.0).contains(&value) {
                    return Err(DatasetError::BadIntensity { index, value });
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != pixels.len() {
                return Err(DatasetError::LabelsMismatch { nodes: pixels.len(), labels: l.len() });
            }
        }
        Ok(ImageSet { rows, cols, pixels, labels })
    }

    pub fn count(&self) -> usize {
        self.pixels.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.pixels.len() {
            return Err(DatasetError::LabelsMismatch {
                nodes: self.pixels.len(),
                labels: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Row-major flattening of one image: a signal on the rows x cols lattice.
    pub fn signal(&self, index: usize) -> Result<&Array1<f64>> {
        self.pixels
            .get(index)
            .ok_or(DatasetError::IndexOutOfRange { index, count: self.pixels.len() })
    }

    pub fn signals(&self) -> &[Array1<f64>] {
        &self.pixels
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, needed: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if needed > available {
            return Err(DatasetError::Truncated { offset: self.offset, needed, available });
        }
        let out = &self.bytes[self.offset..self.offset + needed];
        self.offset += needed;
        Ok(out)
    }

    fn read_u32(&mut self) -> Result<u32> {
        let raw = self.take(4)?;
        Ok(u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]))
    }

    fn expect_magic(&mut self, expected: u32) -> Result<()> {
        let offset = self.offset;
        let found = self.read_u32()?;
        if found != expected {
            return Err(DatasetError::BadMagic { offset, found, expected });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(DatasetError::TrailingData {
                offset: self.offset,
                extra: self.bytes.len() - self.offset,
            });
        }
        Ok(())
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageSet> {
    let mut r = Reader { bytes, offset: 0 };
    r.expect_magic(IMAGE_MAGIC)?;
    let count = r.read_u32()? as usize;
    let rows = r.read_u32()? as usize;
    let cols = r.read_u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(DatasetError::BadDimensions { rows, cols });
    }
    let payload = r.take(count * rows * cols)?;
    r.finish()?;
    let pixels = payload
        .chunks_exact(rows * cols)
        .map(|img| img.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    Ok(ImageSet { rows, cols, pixels, labels: None })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader { bytes, offset: 0 };
    r.expect_magic(LABEL_MAGIC)?;
    let count = r.read_u32()? as usize;
    let payload = r.take(count)?;
    r.finish()?;
    Ok(payload.iter().map(|&b| b as usize).collect())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<ImageSet> {
    parse_idx_images(&std::fs::read(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_idx_labels(&std::fs::read(path)?)
}

pub fn write_idx_images(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.count() * set.rows * set.cols);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.count() as u32).to_be_bytes());
    out.extend_from_slice(&(set.rows as u32).to_be_bytes());
    out.extend_from_slice(&(set.cols as u32).to_be_bytes());
    for img in &set.pixels {
        out.extend(img.iter().map(|&v| (v * 255.0).round() as u8));
    }
    out
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for (index, &label) in labels.iter().enumerate() {
        if label > 255 {
            return Err(DatasetError::LabelTooLarge { index, label });
        }
        out.push(label as u8);
    }
    Ok(out)
}

/// Synthetic classification signals on a clustered graph: each signal is 1 on
/// two distinct nodes drawn from its home cluster and on one node drawn from
/// the rest of the graph, 0 elsewhere, labeled by the home cluster. Generates
/// `per_type` signals per cluster, in ascending cluster order.
pub fn cluster_signals(
    g: &Graph,
    labels: &[usize],
    per_type: usize,
    rng: &mut impl Rng,
) -> Result<SignalSet> {
    if labels.len() != g.n() {
        return Err(DatasetError::LabelsMismatch { nodes: g.n(), labels: labels.len() });
    }
    if per_type == 0 {
        return Err(DatasetError::ZeroPerType);
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut signals = Vec::with_capacity(classes.len() * per_type);
    let mut signal_labels = Vec::with_capacity(classes.len() * per_type);
    for &class in &classes {
        let home: Vec<usize> = (0..g.n()).filter(|&i| labels[i] == class).collect();
        let outside: Vec<usize> = (0..g.n()).filter(|&i| labels[i] != class).collect();
        if home.len() < 2 {
            return Err(DatasetError::ClusterTooSmall { cluster: class, size: home.len() });
        }
        if outside.is_empty() {
            return Err(DatasetError::NoOutsideNodes { cluster: class });
        }
        for _ in 0..per_type {
            let first = rng.random_range(0..home.len());
            // second draw over the remaining nodes, shifted past the first
            let mut second = rng.random_range(0..home.len() - 1);
            if second >= first {
                second += 1;
            }
            let far = rng.random_range(0..outside.len());
            let mut v = Array1::zeros(g.n());
            v[home[first]] = 1.0;
            v[home[second]] = 1.0;
            v[outside[far]] = 1.0;
            signals.push(v);
            signal_labels.push(class);
        }
    }
    Ok(SignalSet::new(signals, Some(signal_labels))?)
}

/// Signals CSV: one signal per row, comma-separated reals, with an optional
/// trailing integer label column.
pub fn signals_to_csv(set: &SignalSet, with_labels: bool) -> Result<String> {
    let labels =
        if with_labels { Some(set.labels().ok_or(DatasetError::MissingLabels)?) } else { None };
    let mut out = String::new();
    for (i, signal) in set.signals().iter().enumerate() {
        for (j, v) in signal.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn signals_from_csv(text: &str, with_labels: bool) -> Result<SignalSet> {
    let mut signals = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if with_labels {
            let last = fields
                .pop()
                .filter(|f| !f.is_empty())
                .ok_or_else(|| DatasetError::Parse { line, msg: "missing label column".into() })?;
            let label: usize = last
                .parse()
                .map_err(|_| DatasetError::Parse { line, msg: format!("bad label {last:?}") })?;
            labels.push(label);
        }
        let signal = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| DatasetError::Parse { line, msg: format!("bad value {f:?}") })
            })
            .collect::<Result<Array1<f64>>>()?;
        signals.push(signal);
    }
    Ok(SignalSet::new(signals, with_labels.then_some(labels))?)
}
