//! IDX (MNIST) ingestion.

use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::models::IMAGE_DIM;
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug)]
pub struct MnistDataset {
    /// (N, 784) in [−1, 1].
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl MnistDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` examples (all if `n` exceeds the size).
    pub fn truncate(mut self, n: usize) -> Self {
        if n < self.len() {
            let idx: Vec<usize> = (0..n).collect();
            self.images = self.images.gather_rows(&idx);
            self.labels.truncate(n);
        }
        self
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }
}

pub fn normalize_byte(b: u8) -> f32 {
    f32::from(b) / 127.5 - 1.0
}

/// Loads the four standard IDX files from `dir`, returning (train, test).
pub fn load_mnist(dir: &Path) -> Result<(MnistDataset, MnistDataset)> {
    let train = load_split(dir, Split::Train)?;
    let test = load_split(dir, Split::Test)?;
    Ok((train, test))
}

pub fn load_split(dir: &Path, split: Split) -> Result<MnistDataset> {
    let (img, lab) = match split {
        Split::Train => (TRAIN_IMAGES, TRAIN_LABELS),
        Split::Test => (TEST_IMAGES, TEST_LABELS),
    };
    let images = read_idx_images(&dir.join(img))?;
    let labels = read_idx_labels(&dir.join(lab))?;
    if images.rows() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.rows(),
            labels: labels.len(),
        });
    }
    Ok(MnistDataset {
        images,
        labels,
        split,
    })
}

fn read_magic(cur: &mut Cursor<Vec<u8>>, path: &Path, expected: u32) -> Result<()> {
    let found = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Truncated(format!("{}: missing magic", path.display())))?;
    if found != expected {
        return Err(Error::WrongMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn read_dim(cur: &mut Cursor<Vec<u8>>, path: &Path) -> Result<usize> {
    cur.read_u32::<BigEndian>()
        .map(|v| v as usize)
        .map_err(|_| Error::Truncated(format!("{}: header", path.display())))
}

pub fn read_idx_images(path: &Path) -> Result<Tensor> {
    let mut cur = Cursor::new(fs::read(path)?);
    read_magic(&mut cur, path, IMAGES_MAGIC)?;
    let n = read_dim(&mut cur, path)?;
    let rows = read_dim(&mut cur, path)?;
    let cols = read_dim(&mut cur, path)?;
    if rows * cols != IMAGE_DIM {
        return Err(Error::InvalidArgument(format!(
            "{}: expected 28x28 images, got {rows}x{cols}",
            path.display()
        )));
    }
    let mut bytes = vec![0u8; n * IMAGE_DIM];
    cur.read_exact(&mut bytes).map_err(|_| {
        Error::Truncated(format!("{}: {n} images declared", path.display()))
    })?;
    let data = bytes.into_iter().map(normalize_byte).collect();
    Tensor::new(vec![n, IMAGE_DIM], data)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(fs::read(path)?);
    read_magic(&mut cur, path, LABELS_MAGIC)?;
    let n = read_dim(&mut cur, path)?;
    let mut labels = vec![0u8; n];
    cur.read_exact(&mut labels).map_err(|_| {
        Error::Truncated(format!("{}: {n} labels declared", path.display()))
    })?;
    Ok(labels)
}

/// Writes raw 28×28 byte images as an IDX3 file.
pub fn write_idx_images(path: &Path, images: &[[u8; IMAGE_DIM]]) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.len() * IMAGE_DIM);
    out.write_u32::<BigEndian>(IMAGES_MAGIC)?;
    out.write_u32::<BigEndian>(images.len() as u32)?;
    out.write_u32::<BigEndian>(28)?;
    out.write_u32::<BigEndian>(28)?;
    for img in images {
        out.extend_from_slice(img);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(LABELS_MAGIC)?;
    out.write_u32::<BigEndian>(labels.len() as u32)?;
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}

pub fn mnist_paths(dir: &Path) -> [PathBuf; 4] {
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS].map(|f| dir.join(f))
}
