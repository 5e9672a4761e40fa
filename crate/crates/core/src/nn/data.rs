//! Training images: CIFAR-10 binary batches or a directory of PNGs.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};

use super::{ChannelNorm, NnError};
use crate::error::{Error, Result};
use crate::features::RasterImage;

const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

/// Labelled images in `[0, 1]`, one `(channel, y, x)` row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub images: Array2<f64>,
    pub labels: Vec<usize>,
    pub channels: usize,
    pub size: usize,
    pub n_classes: usize,
}

impl TrainSet {
    pub fn new(images: Array2<f64>, labels: Vec<usize>, channels: usize, size: usize) -> Result<Self, NnError> {
        if images.nrows() != labels.len() || images.ncols() != channels * size * size {
            return Err(NnError::Data(format!(
                "{} images of width {} with {} labels do not fit {channels}x{size}x{size}",
                images.nrows(),
                images.ncols(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(NnError::Data("empty training set".into()));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(TrainSet { images, labels, channels, size, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> TrainSet {
        TrainSet {
            images: self.images.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ..*self
        }
    }

    /// Keeps the first `per_class` images of each listed class, relabelled
    /// `0..classes.len()` in the listed order.
    pub fn filter_classes(&self, classes: &[usize], per_class: usize) -> TrainSet {
        let mut counts = vec![0; classes.len()];
        let mut idx = Vec::new();
        let mut labels = Vec::new();
        for (i, y) in self.labels.iter().enumerate() {
            if let Some(k) = classes.iter().position(|c| c == y) {
                if counts[k] < per_class {
                    counts[k] += 1;
                    idx.push(i);
                    labels.push(k);
                }
            }
        }
        TrainSet {
            images: self.images.select(Axis(0), &idx),
            labels,
            channels: self.channels,
            size: self.size,
            n_classes: classes.len(),
        }
    }

    /// Per-channel mean and (population) std over all pixels.
    pub fn channel_norm(&self) -> ChannelNorm {
        let hw = self.size * self.size;
        let mut mean = vec![0.0; self.channels];
        let mut std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let block = self.images.slice(ndarray::s![.., c * hw..(c + 1) * hw]);
            let n = block.len() as f64;
            let m = block.sum() / n;
            let v = block.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            mean[c] = m;
            // constant channels would otherwise divide by zero
            std[c] = v.sqrt().max(1e-6);
        }
        ChannelNorm { mean, std }
    }
}

/// Reads CIFAR-10 binary records (label byte + 3072 RGB bytes, channel-major).
pub fn load_cifar_binary(files: &[PathBuf], limit: Option<usize>) -> Result<TrainSet> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    'files: for path in files {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(NnError::Data(format!(
                "{}: size {} is not a multiple of the {CIFAR_RECORD}-byte record",
                path.display(),
                bytes.len()
            ))
            .into());
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD) {
            if limit.is_some_and(|l| labels.len() >= l) {
                break 'files;
            }
            labels.push(rec[0] as usize);
            rows.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let n = labels.len();
    let images = Array2::from_shape_vec((n, CIFAR_RECORD - 1), rows).expect("sized");
    Ok(TrainSet::new(images, labels, 3, CIFAR_SIDE)?)
}

/// Reads `root/<class>/*.png`; classes are the sorted subdirectory names.
/// Images are resized to `size` if needed.
pub fn load_png_directory(root: &Path, size: usize, limit: Option<usize>) -> Result<(TrainSet, Vec<String>)> {
    let mut classes: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    classes.sort();
    if classes.is_empty() {
        return Err(NnError::Data(format!("{}: no class subdirectories", root.display())).into());
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    'classes: for (k, dir) in classes.iter().enumerate() {
        for file in sorted_entries(dir)? {
            if file.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("png")) != Some(true) {
                continue;
            }
            if limit.is_some_and(|l| labels.len() >= l) {
                break 'classes;
            }
            let img = RasterImage::load_png(&file)?.resized(size, size);
            rows.extend(img.chw());
            labels.push(k);
        }
    }
    let names = classes
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let n = labels.len();
    let images = Array2::from_shape_vec((n, 3 * size * size), rows).expect("sized");
    Ok((TrainSet::new(images, labels, 3, size)?, names))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    out.sort();
    Ok(out)
}

/// Dispatches on the path: a `.bin` file or a directory holding `.bin`
/// batches is CIFAR binary, any other directory is a PNG class tree.
pub fn load_training_data(path: &Path, size: usize, limit: Option<usize>) -> Result<TrainSet> {
    if path.is_file() {
        return load_cifar_binary(&[path.to_path_buf()], limit);
    }
    let bins: Vec<PathBuf> = sorted_entries(path)?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "bin"))
        .collect();
    if bins.is_empty() {
        return Ok(load_png_directory(path, size, limit)?.0);
    }
    // prefer the training batches when a full CIFAR directory is given
    let train: Vec<PathBuf> = bins
        .iter()
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("data_batch")))
        .cloned()
        .collect();
    load_cifar_binary(if train.is_empty() { &bins } else { &train }, limit)
}
