//! Plain image buffers shared by rendering, preprocessing and the network.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Row-major depth in meters; `0.0` marks a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    /// Value at the pixel nearest to `(u, v)`, clamped into the image.
    pub fn at_nearest(&self, u: f64, v: f64) -> f32 {
        let x = clamp_index(u, self.width);
        let y = clamp_index(v, self.height);
        self.get(x, y)
    }

    pub fn hole_count(&self) -> usize {
        self.data.iter().filter(|&&d| d == 0.0).count()
    }
}

/// Interleaved 8-bit RGB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

pub(crate) fn clamp_index(coord: f64, len: usize) -> usize {
    let r = coord.round();
    if r <= 0.0 {
        0
    } else if r >= (len - 1) as f64 {
        len - 1
    } else {
        r as usize
    }
}
