//! Linear HDR RGB image buffer.

use crate::error::{Error, Result};
use crate::math::Rgb;

/// Row-major, top row first, interleaved RGB float32.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Image {
        Image { width, height, data: vec![0.0; 3 * width as usize * height as usize] }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Image> {
        if data.len() != 3 * width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "{} floats for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        3 * (y as usize * self.width as usize + x as usize)
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        Rgb::new(self.data[o] as f64, self.data[o + 1] as f64, self.data[o + 2] as f64)
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let o = self.offset(x, y);
        self.data[o] = c.r as f32;
        self.data[o + 1] = c.g as f32;
        self.data[o + 2] = c.b as f32;
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data
            .chunks_exact(3)
            .map(|p| Rgb::new(p[0] as f64, p[1] as f64, p[2] as f64))
    }

    pub fn same_size(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::InvalidArgument(format!(
                "image sizes differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> Rgb {
        let n = self.pixel_count().max(1) as f64;
        self.pixels().fold(Rgb::ZERO, |a, p| a + p) / n
    }

    /// Gamma-2.2 8-bit preview bytes (RGB).
    pub fn to_srgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| {
                let v = (v.max(0.0) as f64).min(1.0).powf(1.0 / 2.2);
                (v * 255.0 + 0.5) as u8
            })
            .collect()
    }
}
