use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::ImagingError;

/// 8-bit sRGB color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
    pub const BLACK: Rgb = Rgb([0, 0, 0]);

    pub fn to_unit(self) -> [f32; 3] {
        self.0.map(|c| c as f32 / 255.0)
    }

    pub fn to_hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for Rgb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s.strip_prefix('#').unwrap_or(s);
        if hex.len() != 6 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(format!("invalid color {s:?}, expected #rrggbb"));
        }
        let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| e.to_string());
        Ok(Rgb([byte(0)?, byte(2)?, byte(4)?]))
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Rgb {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    Rgb,
    Rgba,
}

impl PixelFormat {
    pub fn channels(self) -> usize {
        match self {
            PixelFormat::Rgb => 3,
            PixelFormat::Rgba => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Vertical,
    Horizontal,
}

/// Row-major 8-bit raster. Values are treated as unit-interval floats by
/// the processing operations and quantized on write.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    format: PixelFormat,
    data: Vec<u8>,
}

impl fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("format", &self.format)
            .finish_non_exhaustive()
    }
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl RasterImage {
    /// Transparent black (RGBA) or black (RGB) image.
    pub fn new(width: u32, height: u32, format: PixelFormat) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        let len = width as usize * height as usize * format.channels();
        RasterImage { width, height, format, data: vec![0; len] }
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let mut img = RasterImage::new(width, height, PixelFormat::Rgb);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&color.0);
        }
        img
    }

    pub fn from_raw(width: u32, height: u32, format: PixelFormat, data: Vec<u8>) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize * format.channels();
        if width == 0 || height == 0 || data.len() != expected {
            return Err(ImagingError::Dimension(format!(
                "raw buffer of {} bytes does not match {width}x{height} {format:?}",
                data.len()
            )));
        }
        Ok(RasterImage { width, height, format, data })
    }

    /// Builds an image from unit-interval floats, `channels` per pixel.
    pub fn from_unit(width: u32, height: u32, format: PixelFormat, values: &[f32]) -> Self {
        assert_eq!(values.len(), width as usize * height as usize * format.channels());
        RasterImage { width, height, format, data: values.iter().map(|&v| quantize(v)).collect() }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn channels(&self) -> usize {
        self.format.channels()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * self.channels()
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels()]
    }

    pub fn rgb(&self, x: u32, y: u32) -> Rgb {
        let p = self.pixel(x, y);
        Rgb([p[0], p[1], p[2]])
    }

    /// Alpha in [0, 1]; opaque for RGB images.
    pub fn alpha(&self, x: u32, y: u32) -> f32 {
        match self.format {
            PixelFormat::Rgb => 1.0,
            PixelFormat::Rgba => self.pixel(x, y)[3] as f32 / 255.0,
        }
    }

    pub fn is_opaque_at(&self, x: u32, y: u32) -> bool {
        self.alpha(x, y) >= 0.5
    }

    pub fn set_rgb(&mut self, x: u32, y: u32, color: Rgb) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&color.0);
        if self.format == PixelFormat::Rgba {
            self.data[o + 3] = 255;
        }
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, px: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels();
        match (c, px.len()) {
            (3, 3) | (4, 4) => self.data[o..o + c].copy_from_slice(px),
            (3, 4) => self.data[o..o + 3].copy_from_slice(&px[..3]),
            (4, 3) => {
                self.data[o..o + 3].copy_from_slice(px);
                self.data[o + 3] = 255;
            }
            _ => panic!("unsupported pixel length {}", px.len()),
        }
    }

    /// Copy of the image with an alpha channel (opaque where it had none).
    pub fn to_rgba(&self) -> RasterImage {
        match self.format {
            PixelFormat::Rgba => self.clone(),
            PixelFormat::Rgb => {
                let data = self.data.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect();
                RasterImage { width: self.width, height: self.height, format: PixelFormat::Rgba, data }
            }
        }
    }

    /// Drops alpha without blending.
    pub fn to_rgb(&self) -> RasterImage {
        match self.format {
            PixelFormat::Rgb => self.clone(),
            PixelFormat::Rgba => {
                let data = self.data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
                RasterImage { width: self.width, height: self.height, format: PixelFormat::Rgb, data }
            }
        }
    }

    /// Planar unit floats for the RGB channels: `[r..., g..., b...]`.
    pub fn rgb_planes(&self) -> [Vec<f32>; 3] {
        let n = (self.width * self.height) as usize;
        let mut planes = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
        for (i, px) in self.data.chunks_exact(self.channels()).enumerate() {
            for c in 0..3 {
                planes[c][i] = px[c] as f32 / 255.0;
            }
        }
        planes
    }

    pub fn crop(&self, rect: Rect) -> RasterImage {
        assert!(rect.x + rect.w <= self.width && rect.y + rect.h <= self.height, "crop outside image");
        let mut out = RasterImage::new(rect.w, rect.h, self.format);
        for y in 0..rect.h {
            for x in 0..rect.w {
                out.set_pixel(x, y, self.pixel(rect.x + x, rect.y + y));
            }
        }
        out
    }

    /// Tight bounding box of pixels with alpha >= 0.5.
    pub fn opaque_bbox(&self) -> Option<Rect> {
        self.opaque_mask().bbox()
    }

    pub fn opaque_mask(&self) -> Mask {
        let mut m = Mask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_opaque_at(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Hex SHA-256 over the raw pixel bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.data);
        hex_digest(h)
    }

    pub fn to_dynamic(&self) -> image::DynamicImage {
        match self.format {
            PixelFormat::Rgb => image::DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width, self.height, self.data.clone()).expect("buffer size"),
            ),
            PixelFormat::Rgba => image::DynamicImage::ImageRgba8(
                image::RgbaImage::from_raw(self.width, self.height, self.data.clone()).expect("buffer size"),
            ),
        }
    }

    pub fn from_dynamic(img: image::DynamicImage) -> RasterImage {
        if img.color().has_alpha() {
            let buf = img.into_rgba8();
            let (w, h) = buf.dimensions();
            RasterImage { width: w, height: h, format: PixelFormat::Rgba, data: buf.into_raw() }
        } else {
            let buf = img.into_rgb8();
            let (w, h) = buf.dimensions();
            RasterImage { width: w, height: h, format: PixelFormat::Rgb, data: buf.into_raw() }
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<RasterImage, ImagingError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Ok(RasterImage::from_dynamic(img))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<RasterImage, ImagingError> {
        RasterImage::decode_png(&std::fs::read(path)?)
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Binary grid addressing an image of the same dimensions.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count())
            .finish()
    }
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Mask { width, height, bits: vec![true; width as usize * height as usize] }
    }

    pub fn from_rect(width: u32, height: u32, rect: Rect) -> Self {
        let mut m = Mask::new(width, height);
        for y in rect.y..(rect.y + rect.h).min(height) {
            for x in rect.x..(rect.x + rect.w).min(width) {
                m.set(x, y, true);
            }
        }
        m
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    pub fn bbox(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for (x, y) in self.iter_set() {
            any = true;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        any.then(|| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn union(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersect(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn subtract(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Mask {
        Mask { width: self.width, height: self.height, bits: self.bits.iter().map(|b| !b).collect() }
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        !self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Euclidean-disk dilation by `radius` pixels.
    pub fn dilate(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let offsets: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let mut out = Mask::new(self.width, self.height);
        let (w, h) = (self.width as i64, self.height as i64);
        for (x, y) in self.iter_set() {
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out.set(nx as u32, ny as u32, true);
                }
            }
        }
        out
    }

    /// Set pixels with at least one 4-neighbour outside the mask (or on the canvas edge).
    pub fn boundary(&self) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for (x, y) in self.iter_set() {
            let edge = x == 0
                || y == 0
                || x + 1 == self.width
                || y + 1 == self.height
                || !self.get(x - 1, y)
                || !self.get(x + 1, y)
                || !self.get(x, y - 1)
                || !self.get(x, y + 1);
            if edge {
                out.set(x, y, true);
            }
        }
        out
    }

    pub fn crop(&self, rect: Rect) -> Mask {
        Mask::from_fn(rect.w, rect.h, |x, y| self.get(rect.x + x, rect.y + y))
    }

    /// 0/255 grayscale PNG.
    pub fn to_gray(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect())
            .expect("buffer size")
    }

    pub fn from_gray(img: &image::GrayImage) -> Mask {
        let (w, h) = img.dimensions();
        Mask { width: w, height: h, bits: img.as_raw().iter().map(|&v| v >= 128).collect() }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_gray().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Mask, ImagingError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Ok(Mask::from_gray(&img.into_luma8()))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Mask, ImagingError> {
        Mask::decode_png(&std::fs::read(path)?)
    }
}
