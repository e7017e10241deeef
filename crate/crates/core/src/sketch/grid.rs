use serde::{Deserialize, Serialize};

use super::SketchError;
use crate::chart::{MarkGeometry, PLAIN_BACKGROUND};
use crate::imaging::{resize_mask, with_alpha, Mask, RasterImage, Rect};

/// Where a mark's flat shape was drawn in the grid image.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPlacement {
    pub mark_id: usize,
    pub row: u32,
    pub col: u32,
    /// Shape rectangle in grid-image coordinates.
    pub shape_rect: Rect,
    /// Shape pixels within `shape_rect`.
    pub shape: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    pub side: u32,
    pub cell: (u32, u32),
    pub placements: Vec<GridPlacement>,
    pub canvas: (u32, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Draw every shape at the same size, filling the padded cell.
    pub equalize: bool,
    /// Fraction of each cell dimension kept free, split evenly between sides.
    pub padding: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { equalize: true, padding: 0.12 }
    }
}

pub fn grid_side(count: usize) -> u32 {
    (count as f64).sqrt().ceil() as u32
}

impl GridLayout {
    fn cell_rect(&self, p: &GridPlacement) -> Rect {
        Rect::new(p.col * self.cell.0, p.row * self.cell.1, self.cell.0, self.cell.1)
    }
}

/// Draws each mark's flat-color shape centered in its own cell of an
/// `N x N` grid, `N = ceil(sqrt(count))`, filled row-major. The image keeps
/// the full canvas size so it stays aligned with the backend's latent grid;
/// any remainder past the last cell is left blank.
pub fn build_grid(
    marks: &[&MarkGeometry],
    canvas: (u32, u32),
    opts: GridOptions,
) -> Result<(RasterImage, GridLayout), SketchError> {
    if marks.is_empty() {
        return Err(SketchError::EmptyGroup);
    }
    let side = grid_side(marks.len());
    let cell = (canvas.0 / side, canvas.1 / side);
    let inner = |c: u32| ((c as f64) * (1.0 - opts.padding)).floor() as u32;
    let (iw, ih) = (inner(cell.0), inner(cell.1));
    let mut img = RasterImage::filled(canvas.0, canvas.1, PLAIN_BACKGROUND);
    let mut placements = Vec::with_capacity(marks.len());
    for (i, mark) in marks.iter().enumerate() {
        if iw == 0 || ih == 0 {
            return Err(SketchError::CellOverflow { mark_id: mark.mark_id });
        }
        let shape = mark.mask.crop(mark.bbox);
        let (w, h) = shape.dims();
        let (sw, sh) = if opts.equalize {
            (iw, ih)
        } else if w <= iw && h <= ih {
            (w, h)
        } else {
            let s = (iw as f64 / w as f64).min(ih as f64 / h as f64);
            let (sw, sh) = ((w as f64 * s).floor() as u32, (h as f64 * s).floor() as u32);
            if sw == 0 || sh == 0 {
                return Err(SketchError::CellOverflow { mark_id: mark.mark_id });
            }
            (sw, sh)
        };
        let shape = resize_mask(&shape, sw, sh);
        let (row, col) = (i as u32 / side, i as u32 % side);
        let x0 = col * cell.0 + (cell.0 - sw) / 2;
        let y0 = row * cell.1 + (cell.1 - sh) / 2;
        for (x, y) in shape.iter_set() {
            img.set_rgb(x0 + x, y0 + y, mark.color);
        }
        placements.push(GridPlacement { mark_id: mark.mark_id, row, col, shape_rect: Rect::new(x0, y0, sw, sh), shape });
    }
    Ok((img, GridLayout { side, cell, placements, canvas }))
}

/// Cuts one cell-sized RGBA patch per placement out of a generated grid
/// image. Alpha is the drawn shape, so only the object survives.
pub fn disassemble(generated: &RasterImage, layout: &GridLayout) -> Result<Vec<(usize, RasterImage)>, SketchError> {
    if generated.dims() != layout.canvas {
        return Err(SketchError::Imaging {
            mark_id: None,
            source: crate::imaging::ImagingError::Dimension(format!(
                "grid image {:?} does not match layout {:?}",
                generated.dims(),
                layout.canvas
            )),
        });
    }
    Ok(layout
        .placements
        .iter()
        .map(|p| {
            let rect = layout.cell_rect(p);
            let mut alpha = Mask::new(rect.w, rect.h);
            for (x, y) in p.shape.iter_set() {
                alpha.set(p.shape_rect.x - rect.x + x, p.shape_rect.y - rect.y + y, true);
            }
            (p.mark_id, with_alpha(&generated.crop(rect), &alpha))
        })
        .collect())
}
