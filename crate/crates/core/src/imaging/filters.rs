use super::raster::{quantize, Axis, Mask, PixelFormat, RasterImage, Rgb};

/// Normalized 1-D Gaussian kernel with radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i32;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f32> = (-radius..=radius).map(|i| (-(i * i) as f32 / denom).exp()).collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur of a single plane with replicated borders.
pub fn gaussian_blur_plane(plane: &[f32], width: u32, height: u32, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (width as i64, height as i64);
    let mut tmp = vec![0f32; plane.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f32;
            for (k, weight) in kernel.iter().enumerate() {
                let sx = (x + k as i64 - r).clamp(0, w - 1);
                acc += weight * plane[(y * w + sx) as usize];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0f32; plane.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f32;
            for (k, weight) in kernel.iter().enumerate() {
                let sy = (y + k as i64 - r).clamp(0, h - 1);
                acc += weight * tmp[(sy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Gaussian blur followed by a per-channel multiply clamped to 1.0.
/// Alpha, when present, is carried through untouched.
pub fn blur_brighten(img: &RasterImage, sigma: f32, factor: f32) -> RasterImage {
    let (w, h) = img.dims();
    let planes = img.rgb_planes().map(|p| gaussian_blur_plane(&p, w, h, sigma));
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let mut px = img.pixel(x, y).to_vec();
            for c in 0..3 {
                px[c] = quantize(planes[c][i] * factor);
            }
            out.set_pixel(x, y, &px);
        }
    }
    out
}

/// Linear interpolation from `c1` to `c2` along `axis`.
pub fn gradient_background(width: u32, height: u32, c1: Rgb, c2: Rgb, axis: Axis) -> RasterImage {
    let mut img = RasterImage::new(width, height, PixelFormat::Rgb);
    let (a, b) = (c1.to_unit(), c2.to_unit());
    let span = match axis {
        Axis::Vertical => height,
        Axis::Horizontal => width,
    };
    for y in 0..height {
        for x in 0..width {
            let pos = match axis {
                Axis::Vertical => y,
                Axis::Horizontal => x,
            };
            let t = if span > 1 { pos as f32 / (span - 1) as f32 } else { 0.0 };
            let px = [0, 1, 2].map(|c| quantize(a[c] + (b[c] - a[c]) * t));
            img.set_pixel(x, y, &px);
        }
    }
    img
}

/// Rec. 601 luma on the 0-255 scale.
pub fn luma_255(img: &RasterImage) -> Vec<f32> {
    let (w, h) = img.dims();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            out.push(0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32);
        }
    }
    out
}

/// Canny edge detector: Gaussian smoothing (sigma 1.4), Sobel gradients,
/// non-maximum suppression and hysteresis. Thresholds are on the Sobel
/// magnitude of 0-255 luma.
pub fn canny_edges(img: &RasterImage, low: f32, high: f32) -> Mask {
    assert!(low <= high, "canny: low threshold above high threshold");
    let (w, h) = img.dims();
    let smooth = gaussian_blur_plane(&luma_255(img), w, h, 1.4);
    let (wi, hi) = (w as i64, h as i64);
    let at = |x: i64, y: i64| smooth[(y.clamp(0, hi - 1) * wi + x.clamp(0, wi - 1)) as usize];

    let n = (w * h) as usize;
    let mut mag = vec![0f32; n];
    let mut dir = vec![0u8; n];
    for y in 0..hi {
        for x in 0..wi {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = (y * wi + x) as usize;
            mag[i] = (gx * gx + gy * gy).sqrt();
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            dir[i] = match angle {
                a if !(22.5..157.5).contains(&a) => 0,
                a if a < 67.5 => 1,
                a if a < 112.5 => 2,
                _ => 3,
            };
        }
    }

    let m = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= wi || y >= hi {
            0.0
        } else {
            mag[(y * wi + x) as usize]
        }
    };
    let mut nms = vec![0f32; n];
    for y in 0..hi {
        for x in 0..wi {
            let i = (y * wi + x) as usize;
            let v = mag[i];
            if v <= 0.0 {
                continue;
            }
            let (a, b) = match dir[i] {
                0 => (m(x - 1, y), m(x + 1, y)),
                1 => (m(x - 1, y - 1), m(x + 1, y + 1)),
                2 => (m(x, y - 1), m(x, y + 1)),
                _ => (m(x + 1, y - 1), m(x - 1, y + 1)),
            };
            if v >= a && v >= b {
                nms[i] = v;
            }
        }
    }

    let mut edges = Mask::new(w, h);
    let mut stack: Vec<(i64, i64)> = Vec::new();
    for y in 0..hi {
        for x in 0..wi {
            if nms[(y * wi + x) as usize] >= high && !edges.get(x as u32, y as u32) {
                edges.set(x as u32, y as u32, true);
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (nx, ny) = (cx + dx, cy + dy);
                            if nx < 0 || ny < 0 || nx >= wi || ny >= hi {
                                continue;
                            }
                            if !edges.get(nx as u32, ny as u32) && nms[(ny * wi + nx) as usize] >= low {
                                edges.set(nx as u32, ny as u32, true);
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_sums_to_one() {
        for sigma in [0.5, 1.4, 6.0, 8.0] {
            let s: f32 = gaussian_kernel(sigma).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn identity_blur_brighten() {
        let img = gradient_background(16, 16, Rgb([10, 20, 30]), Rgb([200, 100, 50]), Axis::Horizontal);
        assert_eq!(blur_brighten(&img, 0.0, 1.0), img);
    }

    #[test]
    fn brighten_clamps_to_white() {
        let img = RasterImage::filled(8, 8, Rgb([128, 128, 128]));
        let out = blur_brighten(&img, 0.0, 4.0);
        assert!(out.as_bytes().iter().all(|&v| v == 255));
    }

    #[test]
    fn blur_preserves_mean_of_impulse() {
        let (w, h) = (64u32, 64u32);
        let mut plane = vec![0f32; (w * h) as usize];
        plane[(32 * w + 32) as usize] = 1.0;
        let out = gaussian_blur_plane(&plane, w, h, 8.0);
        let before: f64 = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64;
        let after: f64 = out.iter().map(|&v| v as f64).sum::<f64>() / out.len() as f64;
        assert!((before - after).abs() < 1e-3);
        // Independent oracle: the centre value equals the squared kernel peak.
        let k = gaussian_kernel(8.0);
        let peak = k[k.len() / 2];
        assert!((out[(32 * w + 32) as usize] - peak * peak).abs() < 1e-6);
    }

    #[test]
    fn gradient_endpoints_and_midpoint() {
        let img = gradient_background(4, 512, Rgb::BLACK, Rgb::WHITE, Axis::Vertical);
        assert_eq!(img.rgb(0, 0), Rgb::BLACK);
        assert_eq!(img.rgb(3, 511), Rgb::WHITE);
        let mid = img.rgb(0, 255).0[0] as i32;
        assert!((mid - 127).abs() <= 1, "mid {mid}");
        let flat = gradient_background(8, 8, Rgb([9, 9, 9]), Rgb([9, 9, 9]), Axis::Vertical);
        assert_eq!(flat, RasterImage::filled(8, 8, Rgb([9, 9, 9])));
        let horiz = gradient_background(8, 4, Rgb::BLACK, Rgb::WHITE, Axis::Horizontal);
        for x in 0..8 {
            assert!((0..4).all(|y| horiz.rgb(x, y) == horiz.rgb(x, 0)));
        }
        assert_ne!(horiz.rgb(0, 0), horiz.rgb(7, 0));
    }

    #[test]
    fn uniform_image_has_no_edges() {
        let img = RasterImage::filled(32, 32, Rgb([90, 140, 30]));
        assert!(canny_edges(&img, 100.0, 200.0).is_empty());
    }
}
