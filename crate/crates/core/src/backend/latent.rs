use sha2::{Digest, Sha256};

use crate::imaging::hex_digest;

/// Channel-major latent grid, `channels x height x width`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTensor {
    channels: u32,
    height: u32,
    width: u32,
    data: Vec<f32>,
}

impl LatentTensor {
    pub fn zeros(channels: u32, height: u32, width: u32) -> Self {
        LatentTensor { channels, height, width, data: vec![0.0; (channels * height * width) as usize] }
    }

    pub fn from_vec(channels: u32, height: u32, width: u32, data: Vec<f32>) -> Option<Self> {
        (data.len() == (channels * height * width) as usize).then_some(LatentTensor { channels, height, width, data })
    }

    pub fn shape(&self) -> (u32, u32, u32) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, c: u32, y: u32, x: u32) -> usize {
        ((c * self.height + y) * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, c: u32, y: u32, x: u32) -> f32 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: u32, y: u32, x: u32, v: f32) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise combination of two latents of identical shape.
    pub fn zip_map(&self, other: &LatentTensor, f: impl Fn(f32, f32) -> f32) -> LatentTensor {
        assert_eq!(self.shape(), other.shape(), "latent shapes differ");
        LatentTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &LatentTensor) -> f32 {
        assert_eq!(self.shape(), other.shape(), "latent shapes differ");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(channels: u32, height: u32, width: u32, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 4 * (channels * height * width) as usize {
            return None;
        }
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Some(LatentTensor { channels, height, width, data })
    }

    /// Hex SHA-256 over the shape header and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.channels, self.height, self.width] {
            h.update(d.to_le_bytes());
        }
        h.update(self.to_le_bytes());
        hex_digest(h)
    }
}

/// Per-pixel relative depth in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[(y * self.width + x) as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn le_bytes_round_trip() {
        let z = LatentTensor::from_vec(2, 1, 3, vec![0.0, -1.5, 2.25, 1e-7, 3.0, f32::MAX]).unwrap();
        let back = LatentTensor::from_le_bytes(2, 1, 3, &z.to_le_bytes()).unwrap();
        assert_eq!(z, back);
        assert!(LatentTensor::from_le_bytes(2, 1, 3, &[0u8; 5]).is_none());
    }

    #[test]
    fn checksum_depends_on_shape() {
        let a = LatentTensor::zeros(1, 2, 3);
        let b = LatentTensor::zeros(1, 3, 2);
        assert_ne!(a.checksum(), b.checksum());
    }
}
