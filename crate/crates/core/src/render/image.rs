use std::path::Path;

use crate::{Error, Real, Result};

/// Row-major interleaved image, values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![T::zero(); width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, value: &[T]) -> Self {
        let channels = value.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self { width, height, channels, data }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [T] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, o: &Self) -> bool {
        self.width == o.width && self.height == o.height && self.channels == o.channels
    }

    /// RGB image from an RGBA one composited over `background`.
    pub fn composite_over(&self, background: [T; 3]) -> Self {
        assert_eq!(self.channels, 4);
        let mut out = Self::new(self.width, self.height, 3);
        for (src, dst) in self.data.chunks_exact(4).zip(out.data.chunks_exact_mut(3)) {
            let t = T::one() - src[3];
            for c in 0..3 {
                dst[c] = src[c] + t * background[c];
            }
        }
        out
    }

    /// Single channel `c` as a new image.
    pub fn channel(&self, c: usize) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::from_usize_lossy(self.data.len().max(1))
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.f64())).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: T| (v.f64().clamp(0.0, 1.0) * 255.0).round() as u8;
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => image::GrayImage::from_raw(w, h, bytes).map(|i| i.save(path)),
            3 => image::RgbImage::from_raw(w, h, bytes).map(|i| i.save(path)),
            4 => image::RgbaImage::from_raw(w, h, bytes).map(|i| i.save(path)),
            c => return Err(Error::InvalidArgument(format!("cannot write {c}-channel PNG"))),
        }
        .expect("buffer sized from dimensions")?;
        Ok(())
    }

    /// Loads a PNG, converting to `channels` (1, 3 or 4).
    pub fn load_png(path: &Path, channels: usize) -> Result<Self> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw: Vec<u8> = match channels {
            1 => img.to_luma8().into_raw(),
            3 => img.to_rgb8().into_raw(),
            4 => img.to_rgba8().into_raw(),
            c => return Err(Error::InvalidArgument(format!("cannot read {c}-channel PNG"))),
        };
        Ok(Self { width: w, height: h, channels, data: raw.into_iter().map(|b| T::lit(b as f64 / 255.0)).collect() })
    }
}
