//! Stage one: pre-generate objects per mark group, fit them to the marks,
//! pre-generate a background and assemble the sketch visualization.

mod grid;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use grid::{build_grid, disassemble, grid_side, GridLayout, GridOptions, GridPlacement};

use crate::backend::{BackendError, Condition, DiffusionBackend, PipelineKind, PipelineRequest};
use crate::chart::{ChartKind, MarkGeometry, PlainVisualization};
use crate::imaging::{
    blur_brighten, cutout, elongate, gradient_background, paste_opaque, resize, stack_duplicate, tile_fill, Axis,
    ImagingError, Mask, RasterImage, Rgb,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PregenMethod {
    GridImg2img,
    DirectDepth2img,
    FreeformTxt2img,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkTransform {
    Rescale,
    Cutout,
    Elongate,
    Stack,
    TileFill,
}

impl MarkTransform {
    /// Transform used when a group does not name one.
    pub fn default_for(kind: ChartKind, method: PregenMethod) -> MarkTransform {
        match (kind, method) {
            (_, PregenMethod::FreeformTxt2img) => MarkTransform::Cutout,
            (ChartKind::Bar, _) => MarkTransform::Elongate,
            _ => MarkTransform::Rescale,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SketchError {
    #[error("mark {mark_id} does not fit its grid cell")]
    CellOverflow { mark_id: usize },
    #[error("no patch for mark {0}")]
    MissingPatch(usize),
    #[error("unknown mark {0}")]
    UnknownMark(usize),
    #[error("mark group is empty")]
    EmptyGroup,
    #[error("{}{source}", mark_id.map(|m| format!("mark {m}: ")).unwrap_or_default())]
    Imaging { mark_id: Option<usize>, source: ImagingError },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Marks sharing one sub-prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MarkGroup {
    pub index: usize,
    /// Full text sent to the backend for this group.
    pub prompt: String,
    pub mark_ids: Vec<usize>,
    pub method: PregenMethod,
    pub transform: MarkTransform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchParams {
    pub img2img_strength: f32,
    pub depth2img_strength: f32,
    pub steps: u32,
    pub guidance: f32,
    pub negative_prompt: String,
    pub seed: u64,
    pub grid: GridOptions,
    pub background_colors: (Rgb, Rgb),
    pub blur_sigma: f32,
    pub brighten: f32,
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams {
            img2img_strength: 0.82,
            depth2img_strength: 0.98,
            steps: 50,
            guidance: 20.0,
            negative_prompt: String::new(),
            seed: 0,
            grid: GridOptions::default(),
            background_colors: (Rgb::WHITE, Rgb([230, 230, 230])),
            blur_sigma: 6.0,
            brighten: 1.25,
        }
    }
}

impl SketchParams {
    fn request(&self, kind: PipelineKind, canvas: (u32, u32), prompt: &str, strength: f32) -> PipelineRequest {
        let mut req = PipelineRequest::new(kind, canvas, prompt);
        req.negative_prompt = self.negative_prompt.clone();
        req.strength = strength;
        req.guidance = self.guidance;
        req.steps = self.steps;
        req.seed = self.seed;
        req
    }
}

/// Objects generated for one group, keyed by mark id, plus the image the
/// backend produced (the grid for the grid method).
#[derive(Clone, Debug)]
pub struct GroupObjects {
    pub generated: RasterImage,
    pub grid_input: Option<RasterImage>,
    pub objects: BTreeMap<usize, RasterImage>,
}

fn lookup<'a>(plain: &'a PlainVisualization, ids: &[usize]) -> Result<Vec<&'a MarkGeometry>, SketchError> {
    ids.iter().map(|&id| plain.mark(id).ok_or(SketchError::UnknownMark(id))).collect()
}

/// Runs one pre-generation for a group of marks.
pub fn pregenerate_mark_group(
    plain: &PlainVisualization,
    group: &MarkGroup,
    backend: &dyn DiffusionBackend,
    params: &SketchParams,
) -> Result<GroupObjects, SketchError> {
    let marks = lookup(plain, &group.mark_ids)?;
    if marks.is_empty() {
        return Err(SketchError::EmptyGroup);
    }
    let canvas = plain.canvas();
    match group.method {
        PregenMethod::GridImg2img => {
            let (grid, layout) = build_grid(&marks, canvas, params.grid)?;
            let mut req = params.request(PipelineKind::Img2img, canvas, &group.prompt, params.img2img_strength);
            req.init_image = Some(grid.clone());
            let generated = backend.run_image_pipeline(&req)?;
            let objects = disassemble(&generated, &layout)?.into_iter().collect();
            Ok(GroupObjects { generated, grid_input: Some(grid), objects })
        }
        PregenMethod::DirectDepth2img => {
            let mut req = params.request(PipelineKind::Depth2img, canvas, &group.prompt, params.depth2img_strength);
            req.init_image = Some(plain.image.clone());
            req.condition = Some(Condition::Depth(backend.depth_map(&plain.image)?));
            let generated = backend.run_image_pipeline(&req)?;
            let objects = marks
                .iter()
                .map(|m| {
                    let obj = cutout(&generated, &m.mask)
                        .map_err(|source| SketchError::Imaging { mark_id: Some(m.mark_id), source })?;
                    Ok((m.mark_id, obj))
                })
                .collect::<Result<_, SketchError>>()?;
            Ok(GroupObjects { generated, grid_input: None, objects })
        }
        PregenMethod::FreeformTxt2img => {
            let req = params.request(PipelineKind::Txt2img, canvas, &group.prompt, 1.0);
            let generated = backend.run_image_pipeline(&req)?;
            let objects = marks.iter().map(|m| (m.mark_id, generated.clone())).collect();
            Ok(GroupObjects { generated, grid_input: None, objects })
        }
    }
}

fn trimmed(object: &RasterImage) -> Result<RasterImage, ImagingError> {
    let bbox = object.opaque_bbox().ok_or(ImagingError::EmptyMask)?;
    Ok(object.crop(bbox))
}

/// Uniform resize of `obj` to `width`, keeping its aspect ratio.
fn fit_width(obj: &RasterImage, width: u32) -> RasterImage {
    let h = ((obj.height() as f64 * width as f64 / obj.width() as f64).round() as u32).max(1);
    resize(obj, width, h)
}

/// Keeps only pixels that are opaque in `img` and set in `mask`.
fn clip_alpha(img: &RasterImage, mask: &Mask) -> RasterImage {
    debug_assert_eq!(img.dims(), mask.dims());
    let mut out = img.to_rgba();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let keep = mask.get(x, y) && img.is_opaque_at(x, y);
            let p = out.pixel(x, y);
            let px = [p[0], p[1], p[2], if keep { 255 } else { 0 }];
            out.set_pixel(x, y, &px);
        }
    }
    out
}

/// Turns a generated object into a patch the size of the mark's bounding
/// box. The result is opaque only inside the mark, so pasting it at the
/// mark's anchor never leaks outside the plain geometry.
pub fn object_to_mark(
    object: &RasterImage,
    geom: &MarkGeometry,
    transform: MarkTransform,
) -> Result<RasterImage, SketchError> {
    let err = |source| SketchError::Imaging { mark_id: Some(geom.mark_id), source };
    let b = geom.bbox;
    let shaped = match transform {
        MarkTransform::Cutout if object.dims() == geom.mask.dims() => cutout(object, &geom.mask).map_err(err)?,
        MarkTransform::Cutout | MarkTransform::Rescale => resize(&trimmed(object).map_err(err)?, b.w, b.h),
        MarkTransform::Elongate => {
            let obj = trimmed(object).map_err(err)?;
            let scaled = fit_width(&obj, b.w);
            if scaled.height() <= b.h {
                elongate(&scaled, b.h, Axis::Vertical).map_err(err)?
            } else {
                resize(&obj, b.w, b.h)
            }
        }
        MarkTransform::Stack => {
            let scaled = fit_width(&trimmed(object).map_err(err)?, b.w);
            stack_duplicate(&scaled, b.h, Axis::Vertical).map_err(err)?
        }
        MarkTransform::TileFill => {
            let obj = trimmed(object).map_err(err)?;
            tile_fill(&obj, &geom.mask).map_err(err)?.crop(b)
        }
    };
    let shaped = if shaped.dims() == (b.w, b.h) { shaped } else { resize(&shaped, b.w, b.h) };
    Ok(clip_alpha(&shaped, &geom.mask.crop(b)))
}

/// Text-to-image background, softened so marks stay legible; a plain
/// gradient when no prompt is given.
pub fn pregenerate_background(
    prompt: Option<&str>,
    canvas: (u32, u32),
    backend: &dyn DiffusionBackend,
    params: &SketchParams,
) -> Result<RasterImage, SketchError> {
    match prompt.filter(|p| !p.trim().is_empty()) {
        Some(prompt) => {
            let req = params.request(PipelineKind::Txt2img, canvas, prompt, 1.0);
            let img = backend.run_image_pipeline(&req)?;
            Ok(blur_brighten(&img.to_rgb(), params.blur_sigma, params.brighten))
        }
        None => {
            let (c1, c2) = params.background_colors;
            Ok(gradient_background(canvas.0, canvas.1, c1, c2, Axis::Vertical))
        }
    }
}

/// The assembled sketch and, per mark, the pixels its patch covers.
#[derive(Clone, Debug)]
pub struct Sketch {
    pub image: RasterImage,
    pub masks: BTreeMap<usize, Mask>,
}

/// Pastes the edge layer (networks) and then every mark patch, in
/// ascending mark id, over the background.
pub fn assemble(
    background: &RasterImage,
    patches: &BTreeMap<usize, RasterImage>,
    plain: &PlainVisualization,
) -> Result<Sketch, SketchError> {
    let mut image = background.to_rgb();
    if let Some(edges) = &plain.edge_layer {
        image = paste_opaque(&image, edges, (0, 0)).0;
    }
    let (w, h) = plain.canvas();
    let mut masks = BTreeMap::new();
    for mark in plain.stylizable_marks() {
        let patch = patches.get(&mark.mark_id).ok_or(SketchError::MissingPatch(mark.mark_id))?;
        let origin = (mark.anchor.0 as i64, mark.anchor.1 as i64);
        image = paste_opaque(&image, patch, origin).0;
        let mut mask = Mask::new(w, h);
        for (x, y) in patch.opaque_mask().iter_set() {
            let (cx, cy) = (mark.anchor.0 + x, mark.anchor.1 + y);
            if cx < w && cy < h {
                mask.set(cx, cy, true);
            }
        }
        masks.insert(mark.mark_id, mask);
    }
    Ok(Sketch { image, masks })
}

/// Everything the sketch stage produced, for persistence and later stages.
#[derive(Clone, Debug)]
pub struct SketchOutput {
    /// Per group: grid input image (grid method only) and backend output.
    pub groups: BTreeMap<usize, GroupObjects>,
    pub patches: BTreeMap<usize, RasterImage>,
    pub background: RasterImage,
    pub sketch: Sketch,
}

/// Runs the whole sketch stage. Groups are processed in index order so the
/// backend call sequence, and hence the trace, is stable.
pub fn run_sketch(
    plain: &PlainVisualization,
    groups: &[MarkGroup],
    background_prompt: Option<&str>,
    backend: &dyn DiffusionBackend,
    params: &SketchParams,
) -> Result<SketchOutput, SketchError> {
    let mut outputs = BTreeMap::new();
    let mut patches = BTreeMap::new();
    for group in groups {
        let objects = pregenerate_mark_group(plain, group, backend, params)?;
        for (&id, obj) in &objects.objects {
            let geom = plain.mark(id).ok_or(SketchError::UnknownMark(id))?;
            patches.insert(id, object_to_mark(obj, geom, group.transform)?);
        }
        outputs.insert(group.index, objects);
    }
    let background = pregenerate_background(background_prompt, plain.canvas(), backend, params)?;
    let sketch = assemble(&background, &patches, plain)?;
    Ok(SketchOutput { groups: outputs, patches, background, sketch })
}

#[cfg(test)]
mod tests;
