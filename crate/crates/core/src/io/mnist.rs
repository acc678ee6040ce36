//! MNIST in the IDX format: `idx3-ubyte` images and `idx1-ubyte` labels.

use std::path::Path;

use crate::error::{Result, ScError};
use crate::nn::model::Shape;
use crate::reference::FloatTensor;

const IMAGE_MAGIC: u32 = 0x0803;
const LABEL_MAGIC: u32 = 0x0801;

/// Greyscale images with labels, pixels row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if rows * cols * labels.len() != pixels.len() {
            return Err(ScError::Shape(format!(
                "{} pixels for {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
            return Err(ScError::OutOfRange(format!("label {bad} outside 0..=9")));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let (images, labels) = (images.as_ref(), labels.as_ref());
        let (count, rows, cols, pixels) = read_images(images)?;
        let label_data = read_labels(labels)?;
        if label_data.len() != count {
            return Err(ScError::Format {
                path: labels.to_path_buf(),
                message: format!(
                    "{} labels but {} images in {}",
                    label_data.len(),
                    count,
                    images.display()
                ),
            });
        }
        if let Some(i) = label_data.iter().position(|&l| l > 9) {
            return Err(ScError::Parse {
                path: labels.to_path_buf(),
                offset: 8 + i,
                message: format!("label {} outside 0..=9", label_data[i]),
            });
        }
        Self::new(rows, cols, pixels, label_data)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape::new(1, self.rows, self.cols)
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// First `n` images.
    pub fn truncated(mut self, n: usize) -> Self {
        let n = n.min(self.len());
        self.pixels.truncate(n * self.rows * self.cols);
        self.labels.truncate(n);
        self
    }

    /// Centers every image on a `size`x`size` canvas of zero pixels.
    pub fn padded(&self, size: usize) -> Result<Self> {
        if size < self.rows || size < self.cols {
            return Err(ScError::Shape(format!(
                "cannot pad {}x{} images to {size}x{size}",
                self.rows, self.cols
            )));
        }
        let (top, left) = ((size - self.rows) / 2, (size - self.cols) / 2);
        let mut pixels = vec![0u8; size * size * self.len()];
        for (i, out) in pixels.chunks_exact_mut(size * size).enumerate() {
            for (y, row) in self.image(i).chunks_exact(self.cols).enumerate() {
                let start = (y + top) * size + left;
                out[start..start + self.cols].copy_from_slice(row);
            }
        }
        Ok(Self {
            rows: size,
            cols: size,
            pixels,
            labels: self.labels.clone(),
        })
    }

    /// Image `i` as bipolar reals `2p/255 - 1`.
    pub fn bipolar(&self, i: usize) -> FloatTensor {
        let data = self.image(i).iter().map(|&p| pixel_value(p)).collect();
        FloatTensor::from_shape(self.shape(), data).expect("dataset shape is consistent")
    }

    /// Image `i` as bipolar levels of the given width.
    pub fn levels(&self, i: usize, width: u32) -> Vec<u32> {
        self.image(i)
            .iter()
            .map(|&p| pixel_level(p, width))
            .collect()
    }
}

pub fn pixel_value(p: u8) -> f64 {
    2.0 * p as f64 / 255.0 - 1.0
}

/// Bipolar level of a pixel: `round(p / 255 * (2^width - 1))`.
pub fn pixel_level(p: u8, width: u32) -> u32 {
    let max = (1u64 << width) - 1;
    ((p as u64 * max + 127) / 255) as u32
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| ScError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Cursor<'a> {
    path: &'a Path,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let bytes = self.take(4, what)?;
        Ok(u32::from_be_bytes(bytes.try_into().unwrap()))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(ScError::Parse {
                path: self.path.to_path_buf(),
                offset: self.data.len(),
                message: format!(
                    "truncated {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.data.len()
                ),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let magic = self.u32("header")?;
        if magic != expected {
            return Err(ScError::Parse {
                path: self.path.to_path_buf(),
                offset: 0,
                message: format!("bad magic {magic:#010x}, expected {expected:#010x}"),
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(ScError::Parse {
                path: self.path.to_path_buf(),
                offset: self.pos,
                message: format!("{} trailing bytes", self.data.len() - self.pos),
            });
        }
        Ok(())
    }
}

/// `(count, rows, cols, pixels)`.
pub fn read_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let data = read(path)?;
    let mut c = Cursor {
        path,
        data: &data,
        pos: 0,
    };
    c.magic(IMAGE_MAGIC)?;
    let count = c.u32("header")? as usize;
    let rows = c.u32("header")? as usize;
    let cols = c.u32("header")? as usize;
    let pixels = c.take(count * rows * cols, "pixel data")?.to_vec();
    c.finish()?;
    Ok((count, rows, cols, pixels))
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let data = read(path)?;
    let mut c = Cursor {
        path,
        data: &data,
        pos: 0,
    };
    c.magic(LABEL_MAGIC)?;
    let count = c.u32("header")? as usize;
    let labels = c.take(count, "label data")?.to_vec();
    c.finish()?;
    Ok(labels)
}

/// Writes a dataset as an IDX image/label pair.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let mut img = Vec::with_capacity(16 + dataset.pixels.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for v in [dataset.len(), dataset.rows, dataset.cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend_from_slice(&dataset.pixels);
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    lab.extend_from_slice(&dataset.labels);
    for (path, bytes) in [(images, img), (labels, lab)] {
        std::fs::write(path, bytes).map_err(|source| ScError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}
