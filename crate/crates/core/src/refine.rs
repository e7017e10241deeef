//! Stage three and post-processing: a low-strength quality pass over the
//! whole image, and mask-targeted regeneration of marks, the background or
//! arbitrary regions of a finished run.

use crate::backend::{BackendError, Condition, DiffusionBackend, PipelineKind, PipelineRequest};
use crate::imaging::{Mask, RasterImage};
use crate::workflow::{PromptSpec, RunState, WorkflowConfig};

#[derive(Debug, thiserror::Error)]
pub enum RegenError {
    #[error("unknown mark {0}")]
    UnknownMark(usize),
    #[error("no prompt given and none to reuse from the run")]
    RequiresPrompt,
    #[error("region mask is empty")]
    EmptyMask,
    #[error("region mask is {got:?} but the canvas is {canvas:?}")]
    MaskSize { got: (u32, u32), canvas: (u32, u32) },
    #[error("run state has no final image")]
    Incomplete,
    #[error("strength {0} outside [0, 1]")]
    InvalidStrength(f32),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn request(kind: PipelineKind, img: &RasterImage, prompt: &str, strength: f32, negative: &str, config: &WorkflowConfig) -> PipelineRequest {
    let mut req = PipelineRequest::new(kind, img.dims(), prompt);
    req.init_image = Some(img.clone());
    req.negative_prompt = negative.to_string();
    req.strength = strength;
    req.guidance = config.guidance;
    req.steps = config.steps;
    req.seed = config.seed;
    req
}

/// Depth-to-image at the refine strength with the full prompt followed by
/// the quality prompt.
pub fn refine(
    img: &RasterImage,
    prompts: &PromptSpec,
    config: &WorkflowConfig,
    backend: &dyn DiffusionBackend,
) -> Result<RasterImage, BackendError> {
    let mut req = request(PipelineKind::Depth2img, img, &prompts.refine_prompt(), config.strengths.refine, &prompts.negative, config);
    req.condition = Some(Condition::Depth(backend.depth_map(img)?));
    backend.run_image_pipeline(&req)
}

/// Output of one regeneration.
#[derive(Clone, Debug, PartialEq)]
pub struct Regenerated {
    pub image: RasterImage,
    /// Pixels the backend was allowed to change.
    pub mask: Mask,
    pub prompt: String,
    pub strength: f32,
    /// `mark <id>`, `background` or `region`.
    pub target: String,
}

fn inpaint(
    state: &RunState,
    mask: Mask,
    prompt: String,
    strength: f32,
    target: String,
    backend: &dyn DiffusionBackend,
) -> Result<Regenerated, RegenError> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(RegenError::InvalidStrength(strength));
    }
    let input = state.latest_image().ok_or(RegenError::Incomplete)?;
    if mask.dims() != input.dims() {
        return Err(RegenError::MaskSize { got: mask.dims(), canvas: input.dims() });
    }
    if mask.is_empty() {
        return Err(RegenError::EmptyMask);
    }
    let mut config = state.config.workflow.clone();
    config.seed = state.seed;
    let negative = &state.config.prompts.negative;
    let mut req = request(PipelineKind::Inpaint, input, &prompt, strength, negative, &config);
    req.mask = Some(mask.clone());
    let generated = backend.run_image_pipeline(&req)?;
    // Adapters are not trusted to honour the mask exactly.
    let mut image = input.to_rgb();
    for (x, y) in mask.iter_set() {
        image.set_rgb(x, y, generated.rgb(x, y));
    }
    if config.refine_after_regen {
        image = refine(&image, &state.config.prompts, &config, backend)?;
    }
    Ok(Regenerated { image, mask, prompt, strength, target })
}

/// Inpaints one mark over its dilated plain mask. Without a prompt the
/// mark's own group prompt is reused.
pub fn regenerate_mark(
    state: &RunState,
    mark_id: usize,
    prompt: Option<&str>,
    strength: Option<f32>,
    backend: &dyn DiffusionBackend,
) -> Result<Regenerated, RegenError> {
    let plain = state.plain.as_ref().ok_or(RegenError::Incomplete)?;
    let mark = plain.mark(mark_id).ok_or(RegenError::UnknownMark(mark_id))?;
    let prompt = match prompt {
        Some(p) => p.to_string(),
        None => {
            let group = state.binding.get(&mark_id).ok_or(RegenError::RequiresPrompt)?;
            state.config.prompts.group_prompt(*group)
        }
    };
    let mask = mark.mask.dilate(state.config.workflow.regen_dilation);
    let strength = strength.unwrap_or(state.config.workflow.strengths.regenerate);
    inpaint(state, mask, prompt, strength, format!("mark {mark_id}"), backend)
}

/// Inpaints the exact background mask, so mark pixels never change.
pub fn regenerate_background(
    state: &RunState,
    prompt: Option<&str>,
    strength: Option<f32>,
    backend: &dyn DiffusionBackend,
) -> Result<Regenerated, RegenError> {
    let plain = state.plain.as_ref().ok_or(RegenError::Incomplete)?;
    let prompt = match prompt {
        Some(p) => p.to_string(),
        None => state.config.prompts.background_prompt().ok_or(RegenError::RequiresPrompt)?,
    };
    let strength = strength.unwrap_or(state.config.workflow.strengths.regenerate);
    inpaint(state, plain.background_mask.clone(), prompt, strength, "background".into(), backend)
}

/// Inpaints a caller-supplied region. A low strength override gives the
/// gentle repair pass.
pub fn regenerate_region(
    state: &RunState,
    region: &Mask,
    prompt: &str,
    strength: Option<f32>,
    backend: &dyn DiffusionBackend,
) -> Result<Regenerated, RegenError> {
    let strength = strength.unwrap_or(state.config.workflow.strengths.regenerate);
    inpaint(state, region.clone(), prompt.to_string(), strength, "region".into(), backend)
}
