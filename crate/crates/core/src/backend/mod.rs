//! Uniform contract for every generative call.
//!
//! Orchestration code only ever talks to [`DiffusionBackend`] and branches
//! on [`BackendDescriptor::capabilities`], never on which backend it is.
//! Two implementations ship here: [`MockBackend`], a pure and fully
//! deterministic stand-in whose outputs are known in closed form, and
//! [`HttpAdapterBackend`], which forwards calls to an out-of-process
//! runtime over the JSON protocol in [`protocol`].

mod adapter;
mod latent;
mod mock;
pub mod protocol;
mod traced;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use adapter::HttpAdapterBackend;
pub use latent::{DepthMap, LatentTensor};
pub use mock::{MockBackend, MOCK_LATENT_CHANNELS, MOCK_LATENT_FACTOR};
pub use traced::{to_jsonl, TraceRecord, TracedBackend};

use crate::imaging::{Mask, RasterImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Txt2img,
    Img2img,
    Depth2img,
    Inpaint,
    ControlnetCanny,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Txt2img => "txt2img",
            PipelineKind::Img2img => "img2img",
            PipelineKind::Depth2img => "depth2img",
            PipelineKind::Inpaint => "inpaint",
            PipelineKind::ControlnetCanny => "controlnet_canny",
        }
    }

    pub fn capability(self) -> Capability {
        match self {
            PipelineKind::Txt2img => Capability::Txt2img,
            PipelineKind::Img2img => Capability::Img2img,
            PipelineKind::Depth2img => Capability::Depth2img,
            PipelineKind::Inpaint => Capability::Inpaint,
            PipelineKind::ControlnetCanny => Capability::ControlnetCanny,
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Txt2img,
    Img2img,
    Depth2img,
    Inpaint,
    ControlnetCanny,
    /// Step-level latent operations: encode, decode, add_noise, denoise_step.
    Stepwise,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::Txt2img,
        Capability::Img2img,
        Capability::Depth2img,
        Capability::Inpaint,
        Capability::ControlnetCanny,
        Capability::Stepwise,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BackendDescriptor {
    pub name: String,
    pub capabilities: BTreeSet<Capability>,
    /// Image pixels per latent cell along each axis.
    pub latent_factor: u32,
    pub latent_channels: u32,
    pub scheduler_steps_max: u32,
    /// 1 means calls must be serialized by the caller.
    pub max_parallel: u32,
    /// Model identifier per pipeline, when the runtime reports one.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub pipeline_models: std::collections::BTreeMap<String, String>,
}

impl BackendDescriptor {
    pub fn supports(&self, cap: Capability) -> bool {
        self.capabilities.contains(&cap)
    }

    /// Whether image dimensions fit the latent grid.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.latent_factor > 0 && width % self.latent_factor == 0 && height % self.latent_factor == 0
    }

    /// True when the runtime reports more than one distinct model across
    /// its pipelines (e.g. ControlNet on a different base model).
    pub fn mixed_models(&self) -> bool {
        let models: BTreeSet<&String> = self.pipeline_models.values().collect();
        models.len() > 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    Edges(Mask),
    Depth(DepthMap),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineRequest {
    pub kind: PipelineKind,
    /// Output size; must match `init_image` when one is given.
    pub canvas: (u32, u32),
    pub init_image: Option<RasterImage>,
    pub mask: Option<Mask>,
    pub condition: Option<Condition>,
    pub prompt: String,
    pub negative_prompt: String,
    pub strength: f32,
    pub guidance: f32,
    pub steps: u32,
    pub seed: u64,
}

impl PipelineRequest {
    /// Request with the kind's shared defaults; callers fill in the rest.
    pub fn new(kind: PipelineKind, canvas: (u32, u32), prompt: impl Into<String>) -> Self {
        PipelineRequest {
            kind,
            canvas,
            init_image: None,
            mask: None,
            condition: None,
            prompt: prompt.into(),
            negative_prompt: String::new(),
            strength: 1.0,
            guidance: 0.0,
            steps: 50,
            seed: 0,
        }
    }

    /// Strength actually applied: text-to-image always runs the full schedule.
    pub fn effective_strength(&self) -> f32 {
        match self.kind {
            PipelineKind::Txt2img => 1.0,
            _ => self.strength,
        }
    }

    /// Number of denoising steps executed: `round(strength * steps)`.
    pub fn executed_steps(&self) -> u32 {
        executed_steps(self.effective_strength(), self.steps)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::InvalidRequest(m));
        if !(0.0..=1.0).contains(&self.strength) || !self.strength.is_finite() {
            return bad(format!("strength {} outside [0, 1]", self.strength));
        }
        if !(self.guidance >= 0.0) {
            return bad(format!("guidance {} is negative", self.guidance));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        let needs_init = !matches!(self.kind, PipelineKind::Txt2img);
        if needs_init && self.init_image.is_none() {
            return bad(format!("{} requires an init image", self.kind));
        }
        if let Some(init) = &self.init_image {
            if init.dims() != self.canvas {
                return bad(format!("init image {:?} does not match canvas {:?}", init.dims(), self.canvas));
            }
        }
        match self.kind {
            PipelineKind::Inpaint => match &self.mask {
                None => return bad("inpaint requires a mask".into()),
                Some(m) if m.dims() != self.canvas => return bad("inpaint mask does not match canvas".into()),
                _ => {}
            },
            PipelineKind::ControlnetCanny => {
                if !matches!(self.condition, Some(Condition::Edges(_))) {
                    return bad("controlnet_canny requires an edge condition".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Widens an `f32` through its shortest decimal form, so 0.7f32 becomes
/// 0.7f64 rather than 0.699999988.
pub fn decimal_f64(v: f32) -> f64 {
    v.to_string().parse().unwrap_or(v as f64)
}

/// `round(alpha * n)`, the step count a strength maps to.
pub fn executed_steps(strength: f32, steps: u32) -> u32 {
    (decimal_f64(strength) * steps as f64).round() as u32
}

/// One denoising step of a stepwise run.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseStep {
    pub prompt: String,
    pub negative_prompt: String,
    /// 1-based index into the executed steps.
    pub step_index: u32,
    pub total_steps: u32,
    pub guidance: f32,
    pub condition: Option<DepthMap>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum BackendError {
    #[error("unsupported pipeline: {0}")]
    UnsupportedPipeline(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend failure: {0}")]
    BackendFailure(String),
}

/// A diffusion runtime. Implementations must be safe for concurrent
/// read-only calls or advertise `max_parallel = 1`.
pub trait DiffusionBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn run_image_pipeline(&self, req: &PipelineRequest) -> Result<RasterImage, BackendError>;

    fn encode(&self, img: &RasterImage) -> Result<LatentTensor, BackendError>;

    fn decode(&self, z: &LatentTensor) -> Result<RasterImage, BackendError>;

    fn add_noise(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError>;

    fn denoise_step(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError>;

    fn depth_map(&self, img: &RasterImage) -> Result<DepthMap, BackendError>;

    fn require(&self, cap: Capability) -> Result<(), BackendError> {
        if self.descriptor().supports(cap) {
            Ok(())
        } else {
            Err(BackendError::UnsupportedPipeline(format!(
                "backend {} lacks capability {cap:?}",
                self.descriptor().name
            )))
        }
    }
}

impl<B: DiffusionBackend + ?Sized> DiffusionBackend for &B {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn run_image_pipeline(&self, req: &PipelineRequest) -> Result<RasterImage, BackendError> {
        (**self).run_image_pipeline(req)
    }
    fn encode(&self, img: &RasterImage) -> Result<LatentTensor, BackendError> {
        (**self).encode(img)
    }
    fn decode(&self, z: &LatentTensor) -> Result<RasterImage, BackendError> {
        (**self).decode(z)
    }
    fn add_noise(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError> {
        (**self).add_noise(z, seed, level)
    }
    fn denoise_step(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError> {
        (**self).denoise_step(z, step)
    }
    fn depth_map(&self, img: &RasterImage) -> Result<DepthMap, BackendError> {
        (**self).depth_map(img)
    }
}

impl<B: DiffusionBackend + ?Sized> DiffusionBackend for Box<B> {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn run_image_pipeline(&self, req: &PipelineRequest) -> Result<RasterImage, BackendError> {
        (**self).run_image_pipeline(req)
    }
    fn encode(&self, img: &RasterImage) -> Result<LatentTensor, BackendError> {
        (**self).encode(img)
    }
    fn decode(&self, z: &LatentTensor) -> Result<RasterImage, BackendError> {
        (**self).decode(z)
    }
    fn add_noise(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError> {
        (**self).add_noise(z, seed, level)
    }
    fn denoise_step(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError> {
        (**self).denoise_step(z, step)
    }
    fn depth_map(&self, img: &RasterImage) -> Result<DepthMap, BackendError> {
        (**self).depth_map(img)
    }
}

/// Parameters of a single-prompt stepwise run.
#[derive(Clone, Copy, Debug)]
pub struct StepwiseParams<'a> {
    pub prompt: &'a str,
    pub negative_prompt: &'a str,
    pub strength: f32,
    pub steps: u32,
    pub guidance: f32,
    pub condition: Option<&'a DepthMap>,
    pub seed: u64,
}

impl StepwiseParams<'_> {
    pub fn denoise_step(&self, step_index: u32, total_steps: u32) -> DenoiseStep {
        DenoiseStep {
            prompt: self.prompt.to_string(),
            negative_prompt: self.negative_prompt.to_string(),
            step_index,
            total_steps,
            guidance: self.guidance,
            condition: self.condition.cloned(),
            seed: self.seed,
        }
    }
}

/// Runs `add_noise(start, alpha)` followed by `round(alpha * n)`
/// single-prompt denoising steps and returns every intermediate latent,
/// starting with the noised one. A one-group DMP run reproduces this trace.
pub fn stepwise_trace(
    backend: &dyn DiffusionBackend,
    start: &LatentTensor,
    params: &StepwiseParams<'_>,
) -> Result<Vec<LatentTensor>, BackendError> {
    backend.require(Capability::Stepwise)?;
    let total = executed_steps(params.strength, params.steps);
    let mut z = backend.add_noise(start, params.seed, params.strength)?;
    let mut trace = Vec::with_capacity(total as usize + 1);
    trace.push(z.clone());
    for i in 1..=total {
        z = backend.denoise_step(&z, &params.denoise_step(i, total))?;
        trace.push(z.clone());
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn executed_steps_rounds() {
        assert_eq!(executed_steps(0.8, 50), 40);
        assert_eq!(executed_steps(0.0, 50), 0);
        assert_eq!(executed_steps(0.33, 10), 3);
        assert_eq!(executed_steps(0.5, 5), 3);
        assert_eq!(executed_steps(0.45, 10), 5);
        assert_eq!(decimal_f64(0.7), 0.7);
    }

    #[test]
    fn request_validation_per_kind() {
        let mut req = PipelineRequest::new(PipelineKind::Img2img, (8, 8), "x");
        assert!(matches!(req.validate(), Err(BackendError::InvalidRequest(_))));
        req.init_image = Some(RasterImage::filled(8, 8, crate::imaging::Rgb::WHITE));
        assert!(req.validate().is_ok());
        req.kind = PipelineKind::Inpaint;
        assert!(req.validate().is_err());
        req.mask = Some(Mask::full(8, 8));
        assert!(req.validate().is_ok());
        req.kind = PipelineKind::ControlnetCanny;
        assert!(req.validate().is_err());
        req.condition = Some(Condition::Edges(Mask::new(8, 8)));
        assert!(req.validate().is_ok());
        req.strength = 1.5;
        assert!(req.validate().is_err());
        let txt = PipelineRequest::new(PipelineKind::Txt2img, (8, 8), "x");
        assert!(txt.validate().is_ok());
        assert_eq!(txt.effective_strength(), 1.0);
    }
}
