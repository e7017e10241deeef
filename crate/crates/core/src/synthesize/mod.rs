//! Stage two: turn the sketch into one coherent image.

mod dmp;
#[cfg(test)]
mod tests;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use dmp::{
    combine_latents, dmp, dmp_background_latent, dmp_background_source, dmp_mask_set, BackgroundSource, DmpGroup,
    DmpOutput, DmpParams, DmpSchedule, DmpStepRecord, MaskSetKind, MaskSetPair,
};

use crate::backend::{BackendError, Condition, DiffusionBackend, PipelineKind, PipelineRequest};
use crate::chart::PlainVisualization;
use crate::imaging::{canny_edges, paste_opaque, Mask, RasterImage};
use crate::sketch::MarkGroup;
use crate::workflow::{check_recipe, RecipeError, RecipeSelection};

/// Second-stage pipeline of a recipe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthPipeline {
    Dmp,
    Img2img,
    /// Depth-to-image after re-drawing the plain network edges.
    Depth2imgEdge,
    /// Image-to-image after re-drawing the plain network edges.
    Img2imgEdge,
    ControlnetCanny,
}

impl SynthPipeline {
    pub const ALL: [SynthPipeline; 5] = [
        SynthPipeline::Dmp,
        SynthPipeline::Img2img,
        SynthPipeline::Depth2imgEdge,
        SynthPipeline::Img2imgEdge,
        SynthPipeline::ControlnetCanny,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthPipeline::Dmp => "dmp",
            SynthPipeline::Img2img => "img2img",
            SynthPipeline::Depth2imgEdge => "depth2img_edge",
            SynthPipeline::Img2imgEdge => "img2img_edge",
            SynthPipeline::ControlnetCanny => "controlnet_canny",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("overlay_edges needs a network chart")]
    NotANetwork,
    #[error(transparent)]
    InvalidRecipe(#[from] RecipeError),
    #[error("invalid synthesis parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub smooth_strength: f32,
    pub img2img_strength: f32,
    /// Strength of DMP, depth-to-image and ControlNet.
    pub strength: f32,
    pub beta: f32,
    pub steps: u32,
    pub guidance: f32,
    pub negative_prompt: String,
    pub seed: u64,
    pub canny_thresholds: (f32, f32),
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            smooth_strength: 0.4,
            img2img_strength: 0.4,
            strength: 0.8,
            beta: 0.5,
            steps: 50,
            guidance: 20.0,
            negative_prompt: String::new(),
            seed: 0,
            canny_thresholds: (100.0, 200.0),
        }
    }
}

impl SynthParams {
    fn request(&self, kind: PipelineKind, init: &RasterImage, prompt: &str, strength: f32) -> PipelineRequest {
        let mut req = PipelineRequest::new(kind, init.dims(), prompt);
        req.init_image = Some(init.clone());
        req.negative_prompt = self.negative_prompt.clone();
        req.strength = strength;
        req.guidance = self.guidance;
        req.steps = self.steps;
        req.seed = self.seed;
        req
    }

    pub fn dmp_params(&self) -> DmpParams {
        DmpParams {
            strength: self.strength,
            beta: self.beta,
            steps: self.steps,
            guidance: self.guidance,
            negative_prompt: self.negative_prompt.clone(),
            seed: self.seed,
        }
    }
}

/// Low-strength image-to-image pass that evens out the sketch.
pub fn smooth(
    sketch: &RasterImage,
    prompt: &str,
    backend: &dyn DiffusionBackend,
    params: &SynthParams,
) -> Result<RasterImage, SynthError> {
    let req = params.request(PipelineKind::Img2img, sketch, prompt, params.smooth_strength);
    Ok(backend.run_image_pipeline(&req)?)
}

/// Redraws the plain chart's edge strokes on top of `img`.
pub fn overlay_edges(img: &RasterImage, plain: &PlainVisualization) -> Result<RasterImage, SynthError> {
    let layer = plain.edge_layer.as_ref().ok_or(SynthError::NotANetwork)?;
    Ok(paste_opaque(&img.to_rgb(), layer, (0, 0)).0)
}

pub fn img2img(
    img: &RasterImage,
    prompt: &str,
    strength: f32,
    backend: &dyn DiffusionBackend,
    params: &SynthParams,
) -> Result<RasterImage, SynthError> {
    Ok(backend.run_image_pipeline(&params.request(PipelineKind::Img2img, img, prompt, strength))?)
}

pub fn depth2img(
    img: &RasterImage,
    prompt: &str,
    strength: f32,
    backend: &dyn DiffusionBackend,
    params: &SynthParams,
) -> Result<RasterImage, SynthError> {
    let mut req = params.request(PipelineKind::Depth2img, img, prompt, strength);
    req.condition = Some(Condition::Depth(backend.depth_map(img)?));
    Ok(backend.run_image_pipeline(&req)?)
}

/// ControlNet with a Canny edge condition taken from `edges_source`.
pub fn controlnet_canny(
    img: &RasterImage,
    edges_source: &RasterImage,
    prompt: &str,
    backend: &dyn DiffusionBackend,
    params: &SynthParams,
) -> Result<RasterImage, SynthError> {
    let (low, high) = params.canny_thresholds;
    let mut req = params.request(PipelineKind::ControlnetCanny, img, prompt, params.strength);
    req.condition = Some(Condition::Edges(canny_edges(edges_source, low, high)));
    Ok(backend.run_image_pipeline(&req)?)
}

/// Builds the per-group DMP regions from the sketch masks of each mark.
pub fn dmp_groups(plain: &PlainVisualization, sketch_masks: &BTreeMap<usize, Mask>, groups: &[MarkGroup]) -> Vec<DmpGroup> {
    let (w, h) = plain.canvas();
    groups
        .iter()
        .map(|g| {
            let mut sketch_mask = Mask::new(w, h);
            let mut plain_mask = Mask::new(w, h);
            for id in &g.mark_ids {
                if let Some(m) = sketch_masks.get(id) {
                    sketch_mask = sketch_mask.union(m);
                }
                if let Some(m) = plain.mark(*id) {
                    plain_mask = plain_mask.union(&m.mask);
                }
            }
            DmpGroup { prompt: g.prompt.clone(), sketch_mask, plain_mask }
        })
        .collect()
}

/// Result of the synthesize stage.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub image: RasterImage,
    pub smoothed: Option<RasterImage>,
    /// Input of the second pipeline when edges were redrawn.
    pub edge_overlay: Option<RasterImage>,
    pub dmp: Option<DmpOutput>,
}

/// Sequences the stage's operations for a recipe. `prompt` is the
/// whole-image prompt; DMP uses the per-group prompts instead.
pub fn synthesize_dispatch(
    recipe: &RecipeSelection,
    sketch: &RasterImage,
    plain: &PlainVisualization,
    groups: &[DmpGroup],
    prompt: &str,
    params: &SynthParams,
    backend: &dyn DiffusionBackend,
) -> Result<SynthOutput, SynthError> {
    check_recipe(recipe)?;
    let smoothed = if recipe.smooth { Some(smooth(sketch, prompt, backend, params)?) } else { None };
    let input = smoothed.as_ref().unwrap_or(sketch);
    let mut out = SynthOutput { image: input.clone(), smoothed: smoothed.clone(), edge_overlay: None, dmp: None };
    out.image = match recipe.synthesize {
        SynthPipeline::Dmp => {
            let result = dmp(input, groups, &params.dmp_params(), backend)?;
            let image = result.image.clone();
            out.dmp = Some(result);
            image
        }
        SynthPipeline::Img2img => img2img(input, prompt, params.img2img_strength, backend, params)?,
        SynthPipeline::ControlnetCanny => controlnet_canny(input, sketch, prompt, backend, params)?,
        SynthPipeline::Depth2imgEdge => {
            let overlaid = overlay_edges(input, plain)?;
            let image = depth2img(&overlaid, prompt, params.strength, backend, params)?;
            out.edge_overlay = Some(overlaid);
            image
        }
        SynthPipeline::Img2imgEdge => {
            let overlaid = overlay_edges(input, plain)?;
            let image = img2img(&overlaid, prompt, params.img2img_strength, backend, params)?;
            out.edge_overlay = Some(overlaid);
            image
        }
    };
    Ok(out)
}
