//! Deterministic raster primitives. Every operation is a pure function of
//! its inputs; nothing here mutates an argument.

mod compose;
mod filters;
mod raster;
mod transforms;

pub use compose::{composite, cutout, downsample_mask, downsample_masks, paste_opaque, resize, resize_mask, with_alpha, CompositeReport};
pub use filters::{blur_brighten, canny_edges, gaussian_blur_plane, gaussian_kernel, gradient_background, luma_255};
pub use raster::{Axis, Mask, PixelFormat, RasterImage, Rect, Rgb};
pub use transforms::{elongate, stack_copies, stack_duplicate, tile_fill, trim_along};

pub(crate) use raster::{hex_digest, quantize};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("mask is empty")]
    EmptyMask,
    #[error("object extent {0} px is too small to split into thirds")]
    DegenerateObject(u32),
    #[error("target {target} px is shorter than the object extent {extent} px")]
    TargetTooSmall { target: u32, extent: u32 },
    #[error(transparent)]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
