use super::raster::{Mask, PixelFormat, RasterImage};
use super::ImagingError;

/// What `composite` actually wrote.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CompositeReport {
    pub written: usize,
    /// Some masked patch pixels fell outside the base and were dropped.
    pub clipped: bool,
}

/// Replaces base pixels by patch pixels wherever `mask` is set. The mask
/// addresses the patch; `origin` places the patch's top-left on the base.
pub fn composite(base: &RasterImage, patch: &RasterImage, mask: &Mask, origin: (i64, i64)) -> (RasterImage, CompositeReport) {
    assert_eq!(patch.dims(), mask.dims(), "patch and mask dimensions differ");
    let mut out = base.clone();
    let mut report = CompositeReport::default();
    let (bw, bh) = (base.width() as i64, base.height() as i64);
    for (px, py) in mask.iter_set() {
        let (x, y) = (origin.0 + px as i64, origin.1 + py as i64);
        if x < 0 || y < 0 || x >= bw || y >= bh {
            report.clipped = true;
            continue;
        }
        out.set_pixel(x as u32, y as u32, patch.pixel(px, py));
        report.written += 1;
    }
    (out, report)
}

/// Pastes the opaque (alpha >= 0.5) pixels of an RGBA patch.
pub fn paste_opaque(base: &RasterImage, patch: &RasterImage, origin: (i64, i64)) -> (RasterImage, CompositeReport) {
    composite(base, patch, &patch.opaque_mask(), origin)
}

/// RGBA crop of `img` to the mask's bounding box with alpha = mask.
pub fn cutout(img: &RasterImage, mask: &Mask) -> Result<RasterImage, ImagingError> {
    if img.dims() != mask.dims() {
        return Err(ImagingError::Dimension(format!(
            "cutout: image {:?} vs mask {:?}",
            img.dims(),
            mask.dims()
        )));
    }
    let bbox = mask.bbox().ok_or(ImagingError::EmptyMask)?;
    let mut out = RasterImage::new(bbox.w, bbox.h, PixelFormat::Rgba);
    for y in 0..bbox.h {
        for x in 0..bbox.w {
            let (sx, sy) = (bbox.x + x, bbox.y + y);
            if mask.get(sx, sy) {
                let p = img.pixel(sx, sy);
                out.set_pixel(x, y, &[p[0], p[1], p[2], 255]);
            }
        }
    }
    Ok(out)
}

/// Block downsample: a `factor`x`factor` block is set iff its coverage is >= 0.5.
pub fn downsample_mask(mask: &Mask, factor: u32) -> Result<Mask, ImagingError> {
    let (w, h) = mask.dims();
    if factor == 0 || w % factor != 0 || h % factor != 0 {
        return Err(ImagingError::Dimension(format!("mask {w}x{h} is not divisible by factor {factor}")));
    }
    let block = (factor * factor) as usize;
    Ok(Mask::from_fn(w / factor, h / factor, |bx, by| {
        let mut set = 0usize;
        for y in by * factor..(by + 1) * factor {
            for x in bx * factor..(bx + 1) * factor {
                set += mask.get(x, y) as usize;
            }
        }
        2 * set >= block
    }))
}

/// Downsamples a family of masks and flags blocks claimed by more than one.
pub fn downsample_masks(masks: &[Mask], factor: u32) -> Result<(Vec<Mask>, Mask), ImagingError> {
    let small = masks.iter().map(|m| downsample_mask(m, factor)).collect::<Result<Vec<_>, _>>()?;
    let Some((w, h)) = small.first().map(Mask::dims) else {
        return Ok((small, Mask::new(1, 1)));
    };
    let overlap = Mask::from_fn(w, h, |x, y| small.iter().filter(|m| m.get(x, y)).count() > 1);
    Ok((small, overlap))
}

/// Bilinear resize (triangle filter).
pub fn resize(img: &RasterImage, width: u32, height: u32) -> RasterImage {
    if img.dims() == (width, height) {
        return img.clone();
    }
    let resized = image::imageops::resize(&img.to_dynamic().to_rgba8(), width, height, image::imageops::FilterType::Triangle);
    let out = RasterImage::from_raw(width, height, PixelFormat::Rgba, resized.into_raw()).expect("resize buffer");
    match img.format() {
        PixelFormat::Rgb => out.to_rgb(),
        PixelFormat::Rgba => out,
    }
}

/// Nearest-neighbour mask resize.
pub fn resize_mask(mask: &Mask, width: u32, height: u32) -> Mask {
    if mask.dims() == (width, height) {
        return mask.clone();
    }
    let (sw, sh) = mask.dims();
    Mask::from_fn(width, height, |x, y| {
        let sx = ((x as u64 * sw as u64) / width as u64) as u32;
        let sy = ((y as u64 * sh as u64) / height as u64) as u32;
        mask.get(sx.min(sw - 1), sy.min(sh - 1))
    })
}

/// Replaces the alpha channel with `mask` (set -> 255, unset -> 0).
pub fn with_alpha(img: &RasterImage, mask: &Mask) -> RasterImage {
    assert_eq!(img.dims(), mask.dims());
    let mut out = img.to_rgba();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.pixel(x, y);
            let a = if mask.get(x, y) { 255 } else { 0 };
            out.set_pixel(x, y, &[p[0], p[1], p[2], a]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{Rect, Rgb};

    #[test]
    fn composite_empty_and_full_mask() {
        let base = RasterImage::filled(8, 8, Rgb([1, 2, 3]));
        let patch = RasterImage::filled(8, 8, Rgb([9, 9, 9]));
        let (same, r) = composite(&base, &patch, &Mask::new(8, 8), (0, 0));
        assert_eq!(same, base);
        assert_eq!(r.written, 0);
        let (all, r) = composite(&base, &patch, &Mask::full(8, 8), (0, 0));
        assert_eq!(all, patch);
        assert!(!r.clipped);
    }

    #[test]
    fn composite_counts_changed_pixels() {
        let base = RasterImage::filled(32, 32, Rgb::BLACK);
        let patch = RasterImage::filled(10, 10, Rgb::WHITE);
        let (out, _) = composite(&base, &patch, &Mask::full(10, 10), (5, 5));
        let diff = (0..32)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| out.rgb(x, y) != base.rgb(x, y))
            .count();
        assert_eq!(diff, 100);
    }

    #[test]
    fn composite_reports_clipping() {
        let base = RasterImage::filled(8, 8, Rgb::BLACK);
        let patch = RasterImage::filled(4, 4, Rgb::WHITE);
        let (_, r) = composite(&base, &patch, &Mask::full(4, 4), (6, -1));
        assert!(r.clipped);
        assert_eq!(r.written, 6);
    }

    #[test]
    fn composite_idempotent_and_commutes_on_disjoint_masks() {
        let base = RasterImage::filled(16, 16, Rgb::BLACK);
        let a = RasterImage::filled(16, 16, Rgb([200, 0, 0]));
        let b = RasterImage::filled(16, 16, Rgb([0, 200, 0]));
        let ma = Mask::from_rect(16, 16, Rect::new(0, 0, 8, 16));
        let mb = Mask::from_rect(16, 16, Rect::new(8, 0, 8, 16));
        let once = composite(&base, &a, &ma, (0, 0)).0;
        assert_eq!(composite(&once, &a, &ma, (0, 0)).0, once);
        let ab = composite(&composite(&base, &a, &ma, (0, 0)).0, &b, &mb, (0, 0)).0;
        let ba = composite(&composite(&base, &b, &mb, (0, 0)).0, &a, &ma, (0, 0)).0;
        assert_eq!(ab, ba);
    }

    #[test]
    fn cutout_cases() {
        let img = RasterImage::filled(6, 4, Rgb([5, 6, 7]));
        let full = cutout(&img, &Mask::full(6, 4)).unwrap();
        assert_eq!(full.dims(), (6, 4));
        assert!((0..4).all(|y| (0..6).all(|x| full.alpha(x, y) == 1.0)));
        let mut one = Mask::new(6, 4);
        one.set(3, 2, true);
        assert_eq!(cutout(&img, &one).unwrap().dims(), (1, 1));
        assert!(matches!(cutout(&img, &Mask::new(6, 4)), Err(ImagingError::EmptyMask)));
    }

    #[test]
    fn downsample_cases() {
        let all = downsample_mask(&Mask::full(512, 512), 8).unwrap();
        assert_eq!(all.dims(), (64, 64));
        assert_eq!(all.count(), 64 * 64);

        let checker = Mask::from_fn(64, 64, |x, y| ((x / 8) + (y / 8)) % 2 == 0);
        let small = downsample_mask(&checker, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(small.get(x, y), (x + y) % 2 == 0);
            }
        }

        // Exactly half a block covered sits on the >= 0.5 threshold.
        let strip = Mask::from_rect(512, 512, Rect::new(0, 0, 4, 8));
        let s = downsample_mask(&strip, 8).unwrap();
        assert!(s.get(0, 0));
        assert_eq!(s.count(), 1);

        assert!(matches!(downsample_mask(&Mask::new(10, 8), 8), Err(ImagingError::Dimension(_))));
    }

    #[test]
    fn downsample_flags_overlaps() {
        let a = Mask::from_rect(16, 8, Rect::new(0, 0, 12, 8));
        let b = Mask::from_rect(16, 8, Rect::new(12, 0, 4, 8));
        let (small, overlap) = downsample_masks(&[a, b], 8).unwrap();
        assert!(small[0].get(1, 0) && small[1].get(1, 0));
        assert!(overlap.get(1, 0));
        assert!(!overlap.get(0, 0));
    }
}
