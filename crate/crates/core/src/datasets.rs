//! Labelled datasets: MNIST in IDX format, its two-class and random-label
//! variants, and synthetic standard-normal inputs.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// One flattened sample per row.
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Precondition(format!("label {bad} outside [0, {num_classes})")));
        }
        if !inputs.is_finite() {
            return Err(Error::Precondition("inputs contain non-finite values".into()));
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.inputs.row(i), self.labels[i])
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            name: self.name.clone(),
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// One-hot encoding of `label` over `num_classes`.
pub fn one_hot(label: usize, num_classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; num_classes];
    y[label] = 1.0;
    y
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: "truncated header".into(),
        })
}

struct Idx {
    dims: Vec<usize>,
    payload: Vec<u8>,
}

fn parse_idx(path: &Path, magic: u32) -> Result<Idx> {
    let bytes = read_maybe_gz(path)?;
    let found = be_u32(&bytes, 0, path)?;
    if found != magic {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("bad magic number {found:#010x}, expected {magic:#010x}"),
        });
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|k| be_u32(&bytes, 4 + 4 * k, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let expected: usize = dims.iter().product();
    let payload = bytes[start..].to_vec();
    if payload.len() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("payload has {} bytes, header implies {expected}", payload.len()),
        });
    }
    Ok(Idx { dims, payload })
}

/// Reads an IDX image/label pair (optionally gzip-compressed). Pixels are
/// scaled to `[0, 1]` and each image is flattened row-major.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_idx(images_path, IDX_IMAGES_MAGIC)?;
    let labels = parse_idx(labels_path, IDX_LABELS_MAGIC)?;
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!("{} labels for {n} images", labels.dims[0]),
        });
    }
    let d = images.dims[1] * images.dims[2];
    let data = images.payload.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.payload.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(Matrix::from_vec(n, d, data)?, labels, num_classes, "mnist")
}

/// Writes a dataset back to IDX (uncompressed). Inputs are expected in
/// `[0, 1]` with `rows × cols` pixels per sample.
pub fn write_idx(data: &Dataset, rows: usize, cols: usize, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    if rows * cols != data.dim() {
        return Err(Error::Dimension(format!("{rows}x{cols} images but dim {}", data.dim())));
    }
    let n = data.len() as u32;
    let mut img = Vec::with_capacity(16 + data.inputs.as_slice().len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend(data.inputs.as_slice().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + data.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend(data.labels.iter().map(|&l| l as u8));
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(ip, img).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, lab).map_err(|e| Error::io(lp, e))?;
    Ok(())
}

/// Digits 0–4 become class 0 and 5–9 class 1.
pub fn relabel_mnist2(d: &Dataset) -> Result<Dataset> {
    if d.num_classes != 10 {
        return Err(Error::Precondition(format!(
            "two-class relabelling needs 10 classes, dataset has {}",
            d.num_classes
        )));
    }
    Ok(Dataset {
        inputs: d.inputs.clone(),
        labels: d.labels.iter().map(|&l| usize::from(l >= 5)).collect(),
        num_classes: 2,
        name: format!("{}-2", d.name),
    })
}

/// Replaces labels with i.i.d. uniform draws over the same classes.
pub fn randomize_labels(d: &Dataset, seed: u64) -> Dataset {
    let mut r = rng::seeded(seed);
    Dataset {
        inputs: d.inputs.clone(),
        labels: (0..d.len()).map(|_| r.random_range(0..d.num_classes)).collect(),
        num_classes: d.num_classes,
        name: format!("{}-random", d.name),
    }
}

/// Rows i.i.d. `N(0, I_dim)` with uniform labels.
pub fn gaussian_synthetic(n_samples: usize, dim: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 || dim == 0 || num_classes == 0 {
        return Err(Error::Precondition("gaussian_synthetic needs positive counts".into()));
    }
    let mut r = rng::seeded(seed);
    let inputs = Matrix::from_vec(n_samples, dim, rng::normal_vec(&mut r, n_samples * dim))?;
    let labels = (0..n_samples).map(|_| r.random_range(0..num_classes)).collect();
    Dataset::new(inputs, labels, num_classes, "gaussian")
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    idx
}

/// Seeded shuffle, then the first `n` rows.
pub fn subset(d: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    split(d, n, seed).map(|(head, _)| head)
}

/// Seeded shuffle split into the first `n` rows and the remainder.
pub fn split(d: &Dataset, n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n > d.len() {
        return Err(Error::Precondition(format!("subset of {n} from {} samples", d.len())));
    }
    let idx = permutation(d.len(), seed);
    Ok((d.select(&idx[..n]), d.select(&idx[n..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(labels: Vec<usize>, classes: usize) -> Dataset {
        let n = labels.len();
        Dataset::new(Matrix::from_fn(n, 3, |i, j| (i * 3 + j) as f64), labels, classes, "tiny").unwrap()
    }

    #[test]
    fn mnist2_mapping() {
        let d = tiny(vec![3, 7, 0, 4, 5, 9], 10);
        let two = relabel_mnist2(&d).unwrap();
        assert_eq!(two.labels, vec![0, 1, 0, 0, 1, 1]);
        assert_eq!(two.num_classes, 2);
        assert_eq!(two.inputs, d.inputs);
        let h = two.class_histogram();
        assert_eq!(h.len(), 2);
        assert_eq!(h.iter().sum::<usize>(), d.len());
        assert_eq!(relabel_mnist2(&tiny(vec![0; 4], 10)).unwrap().labels, vec![0; 4]);
        assert!(relabel_mnist2(&tiny(vec![0], 3)).is_err());
    }

    #[test]
    fn random_labels_deterministic_and_inputs_untouched() {
        let d = tiny(vec![0; 50], 10);
        let a = randomize_labels(&d, 4);
        assert_eq!(a.labels, randomize_labels(&d, 4).labels);
        assert_ne!(a.labels, randomize_labels(&d, 5).labels);
        assert_eq!(a.inputs.as_slice(), d.inputs.as_slice());
    }

    #[test]
    fn random_label_frequencies_within_three_sigma() {
        let n = 100_000;
        let d = Dataset::new(Matrix::zeros(n, 1), vec![0; n], 10, "z").unwrap();
        let h = randomize_labels(&d, 99).class_histogram();
        let p = 0.1;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for count in h {
            assert!((count as f64 - n as f64 * p).abs() < 3.0 * sigma, "{count}");
        }
    }

    #[test]
    fn gaussian_moments() {
        let n = 10_000;
        let d = gaussian_synthetic(n, 5, 3, 1).unwrap();
        for j in 0..5 {
            let col = d.inputs.col(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt());
            assert!((var - 1.0).abs() < 0.1);
        }
        assert_eq!(d, gaussian_synthetic(n, 5, 3, 1).unwrap());
        assert!(gaussian_synthetic(0, 5, 3, 1).is_err());
    }

    #[test]
    fn subsets() {
        let d = tiny((0..100).map(|i| i % 10).collect(), 10);
        let full = subset(&d, 100, 3).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..100).map(|i| full.inputs.row(i).to_vec()).collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(Matrix::from_rows(&rows).unwrap(), d.inputs);
        let one = subset(&d, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        let a = subset(&d, 10, 1).unwrap();
        let b = subset(&d, 10, 2).unwrap();
        assert_ne!(a.inputs, b.inputs);
        assert!(matches!(subset(&d, 101, 0), Err(Error::Precondition(_))));
        let (head, rest) = split(&d, 30, 8).unwrap();
        assert_eq!(head.len() + rest.len(), 100);
    }

    #[test]
    fn one_hot_sums_to_one() {
        let y = one_hot(2, 4);
        assert_eq!(y.iter().sum::<f64>(), 1.0);
        assert_eq!(y[2], 1.0);
    }
}
