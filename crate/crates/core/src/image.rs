//! Binary PGM (P5) output: image grids and matrix heatmaps.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIDE: usize = 28;
const GUTTER: u8 = 255;

pub fn pixel_byte(x: f32) -> u8 {
    ((f64::from(x) + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }
}

/// Lays out (N, 784) images row-major on a `rows × cols` grid with 1-pixel
/// white gutters. Unused cells stay black.
pub fn image_grid(images: &Tensor, rows: usize, cols: usize) -> Result<Pgm> {
    let n = images.rows();
    if rows * cols < n || rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "{n} images do not fit a {rows}x{cols} grid"
        )));
    }
    if images.cols() != SIDE * SIDE {
        return Err(Error::ShapeMismatch {
            op: "image_grid",
            left: images.shape().to_vec(),
            right: vec![n, SIDE * SIDE],
        });
    }
    let width = cols * SIDE + cols - 1;
    let height = rows * SIDE + rows - 1;
    let mut pixels = vec![GUTTER; width * height];
    for r in 0..rows {
        for c in 0..cols {
            let idx = r * cols + c;
            let (x0, y0) = (c * (SIDE + 1), r * (SIDE + 1));
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let v = if idx < n {
                        pixel_byte(images.row(idx)[y * SIDE + x])
                    } else {
                        0
                    };
                    pixels[(y0 + y) * width + x0 + x] = v;
                }
            }
        }
    }
    Ok(Pgm {
        width,
        height,
        pixels,
    })
}

pub fn write_image_grid(images: &Tensor, rows: usize, cols: usize, path: &Path) -> Result<()> {
    image_grid(images, rows, cols)?.write(path)
}

/// Grayscale heatmap of a square matrix: |v| / max|v| mapped to 0..255,
/// each entry drawn as a `cell × cell` block.
pub fn heatmap(matrix: &[Vec<f64>], cell: usize) -> Pgm {
    let n = matrix.len();
    let max = matrix
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let width = n * cell;
    let mut pixels = vec![0u8; width * width];
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let b = (v.abs() / max * 255.0).round() as u8;
            for dy in 0..cell {
                let start = (i * cell + dy) * width + j * cell;
                pixels[start..start + cell].fill(b);
            }
        }
    }
    Pgm {
        width,
        height: width,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(p: &Pgm) -> &[u8] {
        &p.pixels
    }

    #[test]
    fn black_and_white_singletons() {
        let black = image_grid(&Tensor::filled(&[1, 784], -1.0), 1, 1).unwrap();
        assert!(payload(&black).iter().all(|&b| b == 0));
        let white = image_grid(&Tensor::filled(&[1, 784], 1.0), 1, 1).unwrap();
        assert!(payload(&white).iter().all(|&b| b == 255));
        assert_eq!((white.width, white.height), (28, 28));
    }

    #[test]
    fn five_by_five_layout() {
        let g = image_grid(&Tensor::zeros(&[25, 784]), 5, 5).unwrap();
        assert_eq!(g.width, 5 * 28 + 4);
        assert_eq!(g.width, 144);
        assert_eq!(g.height, 144);
        // gutter column after the first cell
        assert_eq!(g.pixels[28], 255);
        assert_eq!(g.pixels[0], pixel_byte(0.0));
    }

    #[test]
    fn header_is_p5() {
        let g = image_grid(&Tensor::zeros(&[2, 784]), 1, 2).unwrap();
        let bytes = g.to_bytes();
        assert!(bytes.starts_with(b"P5\n57 28\n255\n"));
        assert_eq!(bytes.len(), "P5\n57 28\n255\n".len() + 57 * 28);
    }

    #[test]
    fn too_many_images_rejected() {
        assert!(image_grid(&Tensor::zeros(&[5, 784]), 2, 2).is_err());
    }

    #[test]
    fn pixel_mapping_clamps() {
        assert_eq!(pixel_byte(-3.0), 0);
        assert_eq!(pixel_byte(3.0), 255);
        assert_eq!(pixel_byte(0.0), 128);
    }
}
