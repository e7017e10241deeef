//! Object-to-mark image operations: elongation of the middle third,
//! stacked duplication, and tiling a region with copies.

use super::raster::{Axis, Mask, PixelFormat, RasterImage, Rect};
use super::ImagingError;

fn extent(img: &RasterImage, axis: Axis) -> u32 {
    match axis {
        Axis::Vertical => img.height(),
        Axis::Horizontal => img.width(),
    }
}

/// Trims fully transparent rows (vertical) or columns (horizontal) from both
/// ends; the other dimension is left alone.
pub fn trim_along(img: &RasterImage, axis: Axis) -> Option<RasterImage> {
    let bbox = img.opaque_bbox()?;
    let rect = match axis {
        Axis::Vertical => Rect::new(0, bbox.y, img.width(), bbox.h),
        Axis::Horizontal => Rect::new(bbox.x, 0, bbox.w, img.height()),
    };
    Some(img.crop(rect))
}

/// Copies line `src` of `from` into line `dst` of `to` (rows for vertical).
fn copy_line(from: &RasterImage, src: u32, to: &mut RasterImage, dst: u32, axis: Axis) {
    match axis {
        Axis::Vertical => {
            for x in 0..from.width() {
                to.set_pixel(x, dst, from.pixel(x, src));
            }
        }
        Axis::Horizontal => {
            for y in 0..from.height() {
                to.set_pixel(dst, y, from.pixel(src, y));
            }
        }
    }
}

/// Stretches the central third of the object's opaque extent to reach
/// `target` pixels along `axis`. Head and tail thirds are copied verbatim.
pub fn elongate(obj: &RasterImage, target: u32, axis: Axis) -> Result<RasterImage, ImagingError> {
    let obj = trim_along(obj, axis).ok_or(ImagingError::EmptyMask)?;
    let len = extent(&obj, axis);
    if len < 3 {
        return Err(ImagingError::DegenerateObject(len));
    }
    if target < len {
        return Err(ImagingError::TargetTooSmall { target, extent: len });
    }
    let third = len / 3;
    let body_src = len - 2 * third;
    let body_dst = target - 2 * third;
    let (w, h) = match axis {
        Axis::Vertical => (obj.width(), target),
        Axis::Horizontal => (target, obj.height()),
    };
    let mut out = RasterImage::new(w, h, obj.format());
    for i in 0..third {
        copy_line(&obj, i, &mut out, i, axis);
        copy_line(&obj, len - third + i, &mut out, target - third + i, axis);
    }

    let across = extent(&obj, other(axis));
    let channels = obj.channels();
    let scale = body_src as f64 / body_dst as f64;
    for j in 0..body_dst {
        let s = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (body_src - 1) as f64);
        let s0 = s.floor() as u32;
        let s1 = (s0 + 1).min(body_src - 1);
        let t = (s - s0 as f64) as f32;
        for k in 0..across {
            let (a, b) = match axis {
                Axis::Vertical => (obj.pixel(k, third + s0), obj.pixel(k, third + s1)),
                Axis::Horizontal => (obj.pixel(third + s0, k), obj.pixel(third + s1, k)),
            };
            let mut px = [0u8; 4];
            for c in 0..channels {
                px[c] = (a[c] as f32 * (1.0 - t) + b[c] as f32 * t).round() as u8;
            }
            match axis {
                Axis::Vertical => out.set_pixel(k, third + j, &px[..channels]),
                Axis::Horizontal => out.set_pixel(third + j, k, &px[..channels]),
            }
        }
    }
    Ok(out)
}

fn other(axis: Axis) -> Axis {
    match axis {
        Axis::Vertical => Axis::Horizontal,
        Axis::Horizontal => Axis::Vertical,
    }
}

/// Number of copies `stack_duplicate` uses: `ceil(target / extent)`.
pub fn stack_copies(target: u32, extent: u32) -> u32 {
    target.div_ceil(extent)
}

/// Stacks copies of the object until `target` is reached. The base copy
/// sits at the bottom (vertical) or left (horizontal); the far end is
/// cropped.
pub fn stack_duplicate(obj: &RasterImage, target: u32, axis: Axis) -> Result<RasterImage, ImagingError> {
    assert!(target > 0, "stack target must be positive");
    let obj = trim_along(obj, axis).ok_or(ImagingError::EmptyMask)?;
    let len = extent(&obj, axis);
    let (w, h) = match axis {
        Axis::Vertical => (obj.width(), target),
        Axis::Horizontal => (target, obj.height()),
    };
    let mut out = RasterImage::new(w, h, obj.format());
    for i in 0..target {
        // distance from the base end of the stack
        let from_base = i;
        let src_from_base = from_base % len;
        match axis {
            Axis::Vertical => copy_line(&obj, len - 1 - src_from_base, &mut out, target - 1 - from_base, axis),
            Axis::Horizontal => copy_line(&obj, src_from_base, &mut out, from_base, axis),
        }
    }
    Ok(out)
}

/// Tiles the object row-major from the region's bounding-box origin,
/// keeping only pixels inside `region`. The result has the region's
/// dimensions and is transparent elsewhere.
pub fn tile_fill(obj: &RasterImage, region: &Mask) -> Result<RasterImage, ImagingError> {
    let bbox = region.bbox().ok_or(ImagingError::EmptyMask)?;
    let obj = obj.to_rgba();
    let (ow, oh) = obj.dims();
    let mut out = RasterImage::new(region.width(), region.height(), PixelFormat::Rgba);
    for y in bbox.y..bbox.y + bbox.h {
        for x in bbox.x..bbox.x + bbox.w {
            if region.get(x, y) {
                out.set_pixel(x, y, obj.pixel((x - bbox.x) % ow, (y - bbox.y) % oh));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Rgb;

    fn thirds(w: u32, h: u32) -> RasterImage {
        let mut img = RasterImage::new(w, h, PixelFormat::Rgb);
        for y in 0..h {
            let c = match 3 * y / h {
                0 => Rgb([255, 0, 0]),
                1 => Rgb([0, 255, 0]),
                _ => Rgb([0, 0, 255]),
            };
            for x in 0..w {
                img.set_rgb(x, y, c);
            }
        }
        img
    }

    #[test]
    fn elongate_identity_at_same_length() {
        let obj = thirds(20, 90);
        assert_eq!(elongate(&obj, 90, Axis::Vertical).unwrap(), obj);
    }

    #[test]
    fn elongate_keeps_head_and_tail() {
        let obj = thirds(20, 90);
        let out = elongate(&obj, 210, Axis::Vertical).unwrap();
        assert_eq!(out.dims(), (20, 210));
        for x in 0..20 {
            assert!((0..30).all(|y| out.rgb(x, y) == Rgb([255, 0, 0])));
            assert!((30..180).all(|y| out.rgb(x, y) == Rgb([0, 255, 0])));
            assert!((180..210).all(|y| out.rgb(x, y) == Rgb([0, 0, 255])));
        }
    }

    #[test]
    fn elongate_rejects_degenerate_and_short_targets() {
        let obj = thirds(5, 2);
        assert!(matches!(elongate(&obj, 10, Axis::Vertical), Err(ImagingError::DegenerateObject(2))));
        let obj = thirds(5, 30);
        assert!(matches!(elongate(&obj, 10, Axis::Vertical), Err(ImagingError::TargetTooSmall { .. })));
    }

    #[test]
    fn elongate_measures_opaque_extent() {
        let mut obj = RasterImage::new(4, 40, PixelFormat::Rgba);
        for y in 10..40 {
            for x in 0..4 {
                obj.set_rgb(x, y, Rgb([1, 2, 3]));
            }
        }
        let out = elongate(&obj, 60, Axis::Vertical).unwrap();
        assert_eq!(out.dims(), (4, 60));
        assert!((0..60).all(|y| out.alpha(0, y) == 1.0));
    }

    #[test]
    fn stack_full_and_partial() {
        let mut obj = RasterImage::filled(6, 10, Rgb([50, 50, 50]));
        for x in 0..6 {
            obj.set_rgb(x, 0, Rgb([255, 0, 0]));
        }
        let out = stack_duplicate(&obj, 30, Axis::Vertical).unwrap();
        assert_eq!(out.dims(), (6, 30));
        let tops = (0..30).filter(|&y| out.rgb(0, y) == Rgb([255, 0, 0])).count();
        assert_eq!(tops, 3);

        let out = stack_duplicate(&obj, 25, Axis::Vertical).unwrap();
        assert_eq!(stack_copies(25, 10), 3);
        // Rows 5..25 are two full copies; the top copy lost its top half.
        let tops = (0..25).filter(|&y| out.rgb(0, y) == Rgb([255, 0, 0])).count();
        assert_eq!(tops, 2);
        assert_eq!(out.crop(Rect::new(0, 15, 6, 10)), obj);
    }

    #[test]
    fn tile_fill_copies() {
        let obj = RasterImage::filled(4, 4, Rgb([7, 7, 7]));
        let region = Mask::from_rect(16, 16, Rect::new(2, 2, 4, 4));
        let out = tile_fill(&obj, &region).unwrap();
        assert_eq!(out.opaque_mask(), region);
        let region = Mask::from_rect(16, 16, Rect::new(0, 0, 8, 8));
        assert_eq!(tile_fill(&obj, &region).unwrap().opaque_mask().count(), 64);
    }
}
