use std::path::{Path, PathBuf};

use rand::seq::index;

use crate::error::{Error, Result};
use crate::mlp::Sample;
use crate::rng::{self, tag};

use super::idx::{read_idx_images, read_idx_labels, IdxImages};

/// Feature rows in `[0, 1]` with class labels and a per-class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    n_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    class_index: Vec<Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, n_classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {y} outside 0..{n_classes}"
            )));
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("features must lie in [0, 1]".into()));
        }
        let mut class_index = vec![Vec::new(); n_classes];
        for (i, &y) in labels.iter().enumerate() {
            class_index[y].push(i);
        }
        Ok(Self {
            dim,
            n_classes,
            features,
            labels,
            class_index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.class_index.iter().map(Vec::len).collect()
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        (self.features(i), self.labels[i])
    }

    pub fn samples(&self) -> Vec<Sample<'_>> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }

    pub fn samples_at(&self, indices: &[usize]) -> Vec<Sample<'_>> {
        indices.iter().map(|&i| self.sample(i)).collect()
    }

    pub fn inputs(&self) -> Vec<&[f64]> {
        (0..self.len()).map(|i| self.features(i)).collect()
    }

    /// Rows `indices` as a new dataset (same class count).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim, self.n_classes).expect("rows of a valid dataset")
    }
}

/// Flattens images to rows scaled by `1/255`. The class count is the largest label plus one.
pub fn to_dataset(images: &IdxImages, labels: &[u8]) -> Result<LabeledDataset> {
    if images.count != labels.len() {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let features = images.pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(features, labels, images.rows * images.cols, n_classes)
}

/// Stratified draw of `per_class` rows from every class, without replacement.
/// Selected rows keep their original relative order.
pub fn subsample(dataset: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut picked = Vec::with_capacity(per_class * dataset.n_classes);
    for (c, members) in dataset.class_index.iter().enumerate() {
        if per_class > members.len() {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} rows, cannot take {per_class}",
                members.len()
            )));
        }
        let mut rng = rng::stream(seed, &[tag::SUBSAMPLE, c as u64]);
        picked.extend(index::sample(&mut rng, members.len(), per_class).into_iter().map(|i| members[i]));
    }
    picked.sort_unstable();
    Ok(dataset.select(&picked))
}

/// Which pair of files to read from a data directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Default data directory: `$MNIST_DIR`.
pub fn default_data_dir() -> Option<PathBuf> {
    std::env::var_os("MNIST_DIR").map(PathBuf::from)
}

fn find_file(dir: &Path, prefix: &str, kind: &str) -> Result<PathBuf> {
    let candidates = [
        format!("{prefix}-{kind}-ubyte"),
        format!("{prefix}-{kind}-ubyte.gz"),
        format!("{prefix}-{}", kind.replacen('-', ".", 1) + "-ubyte"),
        format!("{prefix}-{}", kind.replacen('-', ".", 1) + "-ubyte.gz"),
    ];
    candidates
        .iter()
        .map(|c| dir.join(c))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::io(
                dir.join(&candidates[0]),
                std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found"),
            )
        })
}

/// Loads `<prefix>-images-idx3-ubyte[.gz]` and `<prefix>-labels-idx1-ubyte[.gz]`.
pub fn load_idx_pair(dir: &Path, prefix: &str) -> Result<LabeledDataset> {
    let images = read_idx_images(&find_file(dir, prefix, "images-idx3")?)?;
    let labels = read_idx_labels(&find_file(dir, prefix, "labels-idx1")?)?;
    to_dataset(&images, &labels)
}

pub fn load_mnist(dir: &Path, split: Split) -> Result<LabeledDataset> {
    load_idx_pair(dir, split.prefix())
}
