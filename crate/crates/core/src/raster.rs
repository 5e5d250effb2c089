//! 8-bit raster images and real-valued maps.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};

/// Row-major 8-bit image with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero-sized image".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_gray_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Rec.601 luma of pixel `(x, y)`, in `[0, 255]`.
    #[inline]
    pub fn luma_at(&self, x: usize, y: usize) -> f64 {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            self.data[i] as f64
        } else {
            0.299 * self.data[i] as f64 + 0.587 * self.data[i + 1] as f64 + 0.114 * self.data[i + 2] as f64
        }
    }

    /// Single-channel Rec.601 luma image (rounded to nearest).
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = (0..self.pixel_count())
            .map(|i| {
                let (x, y) = (i % self.width, i / self.width);
                self.luma_at(x, y).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Sub-image copy; the rectangle must lie inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ImageBuffer {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        ImageBuffer {
            width: w,
            height: h,
            channels: self.channels,
            data,
        }
    }

    /// Inverts every sample (`255 − v`).
    pub fn inverted(&self) -> ImageBuffer {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = 255 - *v);
        out
    }

    pub fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let has_color = img.color().has_color();
        if has_color {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            Self::new(w as usize, h as usize, 3, rgb.into_raw())
        } else {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            Self::new(w as usize, h as usize, 1, g.into_raw())
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(
                GrayImage::from_raw(w, h, self.data.clone()).expect("consistent buffer"),
            )
        } else {
            DynamicImage::ImageRgb8(
                RgbImage::from_raw(w, h, self.data.clone()).expect("consistent buffer"),
            )
        }
    }

    /// Decodes PNG, JPEG or TIFF from a file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = image::ImageReader::open(path)
            .map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?
            .with_guessed_format()
            .map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
        reader.no_limits();
        let img = reader.decode().map_err(|source| Error::Decode {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_dynamic(img)
    }

    /// Width and height of an encoded image, read from its header only.
    pub fn probe_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
        let decode_err = |source| Error::Decode {
            path: "<memory>".into(),
            source,
        };
        let (w, h) = image::ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| decode_err(image::ImageError::IoError(e)))?
            .into_dimensions()
            .map_err(decode_err)?;
        Ok((w as usize, h as usize))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let decode_err = |source| Error::Decode {
            path: "<memory>".into(),
            source,
        };
        let mut reader = image::ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| decode_err(image::ImageError::IoError(e)))?;
        reader.no_limits();
        let img = reader.decode().map_err(decode_err)?;
        Self::from_dynamic(img)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut buf, ImageFormat::Png)
            .expect("in-memory PNG encoding");
        buf.into_inner()
    }
}

/// Dense real-valued map (crack strength, heatmaps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ScalarMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), width * height, "map size mismatch");
        Self {
            width,
            height,
            values,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    /// Edge-clamped lookup.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.values[y * self.width + x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_buffers() {
        assert!(ImageBuffer::new(2, 2, 1, vec![0; 3]).is_err());
        assert!(ImageBuffer::new(0, 2, 1, vec![]).is_err());
        assert!(ImageBuffer::new(1, 1, 2, vec![0, 0]).is_err());
    }

    #[test]
    fn png_round_trip_preserves_samples() {
        let img = ImageBuffer::new(3, 2, 3, (0..18).map(|v| v * 10).collect()).unwrap();
        let back = ImageBuffer::decode(&img.encode_png()).unwrap();
        assert_eq!(back, img);
        let gray = img.to_gray();
        assert_eq!(ImageBuffer::decode(&gray.encode_png()).unwrap(), gray);
    }

    #[test]
    fn luma_uses_rec601_weights() {
        let img = ImageBuffer::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        assert!((img.luma_at(0, 0) - 0.299 * 255.0).abs() < 1e-9);
        assert_eq!(img.to_gray().data(), &[76]);
    }

    #[test]
    fn crop_extracts_rectangle() {
        let img = ImageBuffer::from_gray_fn(4, 3, |x, y| (y * 4 + x) as u8).unwrap();
        let c = img.crop(1, 1, 2, 2);
        assert_eq!(c.data(), &[5, 6, 9, 10]);
    }
}
