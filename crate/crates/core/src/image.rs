//! Normal-map and mask images with their on-disk formats.
//!
//! Normal maps are stored as 3-channel 32-bit PFM (sign and precision
//! matter); masks as 8-bit grayscale PNG mapped [0,255] <-> [0,1].
//! In-memory layout is row-major, top row first.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};

/// Camera-space unit normals per pixel; background pixels are the zero
/// vector. Stored normals use the viewer convention: a surface facing
/// the camera head-on reads (0, 0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalImage {
    pub width: usize,
    pub height: usize,
    data: Vec<[f32; 3]>,
}

impl NormalImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        NormalImage { width, height, data: vec![[0.0; 3]; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(CoreError::DimensionMismatch {
                expected: width * height,
                actual: data.len(),
                context: "normal image payload".into(),
            });
        }
        Ok(NormalImage { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f32; 3]) {
        self.data[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.data
    }

    #[inline]
    pub fn is_background(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == [0.0; 3]
    }

    /// Check the unit-length invariant on every non-background pixel.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.data.iter().enumerate() {
            if *p == [0.0; 3] {
                continue;
            }
            let n = (p[0] as f64).hypot(p[1] as f64).hypot(p[2] as f64);
            if !(0.9999..=1.0001).contains(&n) {
                return Err(CoreError::ImageDimensionMismatch(format!(
                    "normal at pixel {} has length {n:.6}",
                    i
                )));
            }
        }
        Ok(())
    }
}

/// Single-channel image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    data: Vec<f32>,
}

impl MaskImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        MaskImage { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(CoreError::DimensionMismatch {
                expected: width * height,
                actual: data.len(),
                context: "mask image payload".into(),
            });
        }
        for (i, &v) in data.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::ImageDimensionMismatch(format!(
                    "mask value {v} at pixel {i} outside [0,1]"
                )));
            }
        }
        Ok(MaskImage { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.data[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Hard-threshold into a binary mask.
    pub fn thresholded(&self, threshold: f32) -> MaskImage {
        MaskImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v > threshold { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Write a 3-channel PFM (little-endian, bottom row first per the spec
/// of the format).
pub fn save_pfm(path: impl AsRef<Path>, img: &NormalImage) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        write!(w, "PF\n{} {}\n-1.0\n", img.width, img.height)?;
        for y in (0..img.height).rev() {
            for x in 0..img.width {
                for c in img.get(x, y) {
                    w.write_all(&c.to_le_bytes())?;
                }
            }
        }
        w.flush()
    };
    emit().map_err(|e| CoreError::io(path, e))
}

fn read_pfm_token(r: &mut impl Read, path: &Path) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte).map_err(|e| CoreError::io(path, e))?;
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok)
        .map_err(|_| CoreError::parse(path, 0, "non-utf8 token in PFM header"))
}

/// Read a 3-channel PFM normal map.
pub fn load_pfm(path: impl AsRef<Path>) -> Result<NormalImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut r = BufReader::new(file);

    let magic = read_pfm_token(&mut r, path)?;
    if magic != "PF" {
        return Err(CoreError::parse(path, 1, format!("expected 'PF' magic, got '{magic}'")));
    }
    let width: usize = read_pfm_token(&mut r, path)?
        .parse()
        .map_err(|_| CoreError::parse(path, 2, "bad width"))?;
    let height: usize = read_pfm_token(&mut r, path)?
        .parse()
        .map_err(|_| CoreError::parse(path, 2, "bad height"))?;
    let scale: f32 = read_pfm_token(&mut r, path)?
        .parse()
        .map_err(|_| CoreError::parse(path, 3, "bad scale"))?;
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; width * height * 3 * 4];
    r.read_exact(&mut raw).map_err(|e| CoreError::io(path, e))?;

    let mut img = NormalImage::zeros(width, height);
    let mut off = 0;
    for y in (0..height).rev() {
        for x in 0..width {
            let mut px = [0.0f32; 3];
            for c in &mut px {
                let bytes: [u8; 4] = raw[off..off + 4].try_into().unwrap();
                *c = if little_endian {
                    f32::from_le_bytes(bytes)
                } else {
                    f32::from_be_bytes(bytes)
                };
                off += 4;
            }
            img.set(x, y, px);
        }
    }
    Ok(img)
}

/// Write a mask as 8-bit grayscale PNG.
pub fn save_mask(path: impl AsRef<Path>, mask: &MaskImage) -> Result<()> {
    let path = path.as_ref();
    let buf: Vec<u8> = mask
        .pixels()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, buf)
        .expect("buffer size matches dimensions");
    img.save(path)
        .map_err(|e| CoreError::InvalidData { path: path.into(), message: e.to_string() })
}

/// Read an 8-bit grayscale PNG as a mask.
pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskImage> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| CoreError::InvalidData { path: path.into(), message: e.to_string() })?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().iter().map(|&b| b as f32 / 255.0).collect();
    MaskImage::from_data(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let mut img = NormalImage::zeros(5, 3);
        img.set(0, 0, [0.0, 0.0, 1.0]);
        img.set(4, 2, [0.6, 0.8, 0.0]);
        img.set(2, 1, [-1.0, 0.0, 0.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.pfm");
        save_pfm(&p, &img).unwrap();
        let back = load_pfm(&p).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn mask_round_trip_quantized() {
        let mut m = MaskImage::zeros(4, 4);
        m.set(1, 2, 1.0);
        m.set(3, 0, 128.0 / 255.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        save_mask(&p, &m).unwrap();
        let back = load_mask(&p).unwrap();
        for (a, b) in m.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0);
        }
    }

    #[test]
    fn validate_flags_non_unit_normal() {
        let mut img = NormalImage::zeros(2, 2);
        img.set(0, 0, [0.5, 0.0, 0.0]);
        assert!(img.validate().is_err());
        img.set(0, 0, [0.0, 0.0, 1.0]);
        assert!(img.validate().is_ok());
    }

    #[test]
    fn mask_rejects_out_of_range() {
        assert!(MaskImage::from_data(1, 1, vec![1.5]).is_err());
    }
}
