//! Datasets: the synthetic exemplar task and MNIST in IDX format.
//!
//! Toy datasets are drawn from a `ChaCha8Rng` seeded with the caller's seed:
//! exemplar coordinates come from `Uniform[-1, 1]` and sample noise from the
//! ziggurat normal sampler in `rand_distr`, in that order.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{PcError, PcResult};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Closed interval every input entry lies in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub name: String,
    pub normalization: Normalization,
    /// Image geometry for pixel datasets.
    pub image_shape: Option<(usize, usize)>,
}

/// Immutable collection of `(input, one-hot target)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<DVector<f64>>,
    targets: Vec<DVector<f64>>,
    labels: Vec<usize>,
    exemplars: Option<Vec<DVector<f64>>>,
    n_classes: usize,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(
        inputs: Vec<DVector<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
        exemplars: Option<Vec<DVector<f64>>>,
        meta: DatasetMeta,
    ) -> PcResult<Self> {
        if inputs.len() != labels.len() {
            return Err(PcError::CountMismatch {
                images: inputs.len(),
                labels: labels.len(),
            });
        }
        let dim = inputs.first().map_or(0, |v| v.len());
        if inputs.iter().any(|v| v.len() != dim) {
            return Err(PcError::ShapeMismatch("inputs have differing lengths".into()));
        }
        let Normalization { low, high } = meta.normalization;
        if inputs.iter().flat_map(|v| v.iter()).any(|&v| !(low..=high).contains(&v)) {
            return Err(PcError::Domain(format!(
                "input entry outside the declared range [{low}, {high}]"
            )));
        }
        let targets = labels
            .iter()
            .map(|&l| one_hot(l, n_classes))
            .collect::<PcResult<Vec<_>>>()?;
        Ok(Self {
            inputs,
            targets,
            labels,
            exemplars,
            n_classes,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |v| v.len())
    }

    pub fn output_dim(&self) -> usize {
        self.n_classes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[DVector<f64>] {
        &self.targets
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn exemplars(&self) -> Option<&[DVector<f64>]> {
        self.exemplars.as_deref()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn pair(&self, index: usize) -> (&DVector<f64>, &DVector<f64>) {
        (&self.inputs[index], &self.targets[index])
    }

    /// Samples `[start, start + count)`, clipped to the dataset.
    pub fn slice(&self, start: usize, count: usize) -> Dataset {
        let end = (start + count).min(self.len());
        let start = start.min(end);
        Dataset {
            inputs: self.inputs[start..end].to_vec(),
            targets: self.targets[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            exemplars: self.exemplars.clone(),
            n_classes: self.n_classes,
            meta: self.meta.clone(),
        }
    }

    /// Mean input of every class; classes with no samples give a zero vector.
    pub fn class_means(&self) -> Vec<DVector<f64>> {
        let dim = self.input_dim();
        let mut sums = vec![DVector::zeros(dim); self.n_classes];
        let mut counts = vec![0usize; self.n_classes];
        for (x, &l) in self.inputs.iter().zip(&self.labels) {
            sums[l] += x;
            counts[l] += 1;
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, c)| if c == 0 { s } else { s / c as f64 })
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Unit vector with a one at `label`.
pub fn one_hot(label: usize, n: usize) -> PcResult<DVector<f64>> {
    if label >= n {
        return Err(PcError::Domain(format!(
            "label {label} out of range for {n} classes"
        )));
    }
    let mut v = DVector::zeros(n);
    v[label] = 1.0;
    Ok(v)
}

/// `n_classes` exemplars uniform on `[-1, 1]^dim`; sample `k` belongs to
/// class `k % n_classes` and equals its exemplar plus `N(0, noise_sd^2)` noise.
pub fn make_toy_dataset(
    seed: u64,
    n_samples: usize,
    noise_sd: f64,
    n_classes: usize,
    dim: usize,
) -> PcResult<Dataset> {
    if n_classes == 0 || dim == 0 {
        return Err(PcError::InvalidConfig("need at least one class and one dimension".into()));
    }
    if n_samples < n_classes {
        return Err(PcError::InvalidConfig(format!(
            "{n_samples} samples cannot cover {n_classes} classes"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(PcError::InvalidConfig(format!("invalid noise sd {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exemplars: Vec<DVector<f64>> = (0..n_classes)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0)))
        .collect();
    let normal = Normal::new(0.0, noise_sd).expect("finite non-negative sd");
    let mut inputs = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let class = k % n_classes;
        let noise = DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
        inputs.push(&exemplars[class] + noise);
        labels.push(class);
    }
    Dataset::new(
        inputs,
        labels,
        n_classes,
        Some(exemplars),
        DatasetMeta {
            name: "toy".into(),
            normalization: Normalization {
                low: f64::NEG_INFINITY,
                high: f64::INFINITY,
            },
            image_shape: None,
        },
    )
}

/// Maps a pixel byte onto `[-1, 1]`.
pub fn pixel_to_unit(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

/// Inverse of [`pixel_to_unit`], clamping out-of-range values.
pub fn unit_to_pixel(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Raw IDX image container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        if self.rows * self.cols == 0 {
            0
        } else {
            self.pixels.len() / (self.rows * self.cols)
        }
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[index * size..(index + 1) * size]
    }
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> PcResult<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| PcError::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> PcResult<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(PcError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_body(bytes: &[u8], header: usize, body: usize, path: &Path) -> PcResult<()> {
    if bytes.len() < header + body {
        return Err(PcError::Truncated {
            path: path.to_path_buf(),
            expected: header + body,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Parses an IDX image file body (already decompressed).
pub fn decode_idx_images(bytes: &[u8], path: &Path) -> PcResult<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let body = count * rows * cols;
    check_body(bytes, 16, body, path)?;
    Ok(IdxImages {
        rows,
        cols,
        pixels: bytes[16..16 + body].to_vec(),
    })
}

pub fn decode_idx_labels(bytes: &[u8], path: &Path) -> PcResult<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    check_body(bytes, 8, count, path)?;
    Ok(bytes[8..8 + count].to_vec())
}

/// Reads a file, transparently inflating gzip (`1f 8b` prefix).
pub fn read_maybe_gzip(path: &Path) -> PcResult<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| PcError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| PcError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Loads an MNIST-style image/label pair, pixels mapped to `[-1, 1]` and
/// labels one-hot in 10 dimensions.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> PcResult<Dataset> {
    let images = decode_idx_images(&read_maybe_gzip(images_path)?, images_path)?;
    let labels = decode_idx_labels(&read_maybe_gzip(labels_path)?, labels_path)?;
    mnist_dataset(&images, &labels)
}

/// Builds a dataset from decoded IDX contents.
pub fn mnist_dataset(images: &IdxImages, labels: &[u8]) -> PcResult<Dataset> {
    if images.count() != labels.len() {
        return Err(PcError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        });
    }
    let inputs = (0..images.count())
        .map(|i| DVector::from_iterator(images.rows * images.cols, images.image(i).iter().map(|&p| pixel_to_unit(p))))
        .collect();
    let labels = labels.iter().map(|&l| l as usize).collect();
    Dataset::new(
        inputs,
        labels,
        10,
        None,
        DatasetMeta {
            name: "mnist".into(),
            normalization: Normalization {
                low: -1.0,
                high: 1.0,
            },
            image_shape: Some((images.rows, images.cols)),
        },
    )
}
