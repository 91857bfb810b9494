use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TileError {
    #[error("tile data has {actual} values, expected {expected} ({width}x{height}x{channels})")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("unsupported channel count {0}")]
    Channels(usize),
    #[error("tile value {value} at index {index} outside [0, 1]")]
    Range { index: usize, value: f64 },
    #[error("tile shapes differ: {0:?} vs {1:?}")]
    Shape((usize, usize, usize), (usize, usize, usize)),
}

/// Row-major raster with 1 or 3 interleaved channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tile<T> {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "tiles have 1 or 3 channels");
        Self {
            width,
            height,
            channels,
            data: vec![T::zero(); width * height * channels],
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<T>,
    ) -> Result<Self, TileError> {
        if channels != 1 && channels != 3 {
            return Err(TileError::Channels(channels));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(TileError::DataLength {
                width,
                height,
                channels,
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(TileError::Range {
                index,
                value: v.as_f64(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
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

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.index(x, y, c)]
    }

    /// Value at signed coordinates, zero outside the tile.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64, c: usize) -> T {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            T::zero()
        } else {
            self.get(x as usize, y as usize, c)
        }
    }

    /// Writes `v` clamped to `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = self.index(x, y, c);
        self.data[i] = v.max(T::zero()).min(T::one());
    }

    /// Sets every channel of a pixel given by signed coordinates; ignores
    /// pixels outside the tile.
    #[inline]
    pub fn put(&mut self, x: i64, y: i64, v: T) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        for c in 0..self.channels {
            self.set(x as usize, y as usize, c, v);
        }
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Pixels whose first channel is at least one half.
    pub fn to_mask(&self) -> Vec<bool> {
        let half = T::lit(0.5);
        (0..self.width * self.height)
            .map(|i| self.data[i * self.channels] >= half)
            .collect()
    }

    pub fn count_set(&self) -> usize {
        self.to_mask().into_iter().filter(|b| *b).count()
    }

    pub fn cast<U: Scalar>(&self) -> Tile<U> {
        Tile {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// 8-bit quantization, scaling by 255 and rounding half up.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| {
                let s = (v.as_f64() * 255.0 + 0.5).floor();
                s.clamp(0.0, 255.0) as u8
            })
            .collect()
    }

    pub fn from_u8(
        width: usize,
        height: usize,
        channels: usize,
        bytes: &[u8],
    ) -> Result<Self, TileError> {
        let data = bytes
            .iter()
            .map(|b| T::lit(f64::from(*b) / 255.0))
            .collect();
        Self::from_vec(width, height, channels, data)
    }
}
