//! Wire format of the out-of-process adapter.
//!
//! Images and masks travel as base64 PNG, latents as base64 little-endian
//! `f32` with a `[C, h, w]` shape header, depth maps the same way with a
//! `[h, w]` header. Every response carries the request seed back.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendError, Condition, DenoiseStep, DepthMap, LatentTensor, PipelineKind, PipelineRequest};
use crate::imaging::{Mask, RasterImage};

pub const DESCRIPTOR_PATH: &str = "descriptor";
pub const PIPELINE_PATH: &str = "pipeline";
pub const ENCODE_PATH: &str = "encode";
pub const DECODE_PATH: &str = "decode";
pub const ADD_NOISE_PATH: &str = "add_noise";
pub const DENOISE_STEP_PATH: &str = "denoise_step";
pub const DEPTH_MAP_PATH: &str = "depth_map";

fn invalid(what: &str) -> impl Fn(String) -> BackendError + '_ {
    move |e| BackendError::InvalidRequest(format!("{what}: {e}"))
}

pub fn encode_image(img: &RasterImage) -> Result<String, BackendError> {
    let png = img.encode_png().map_err(|e| BackendError::BackendFailure(e.to_string()))?;
    Ok(STANDARD.encode(png))
}

pub fn decode_image(b64: &str) -> Result<RasterImage, BackendError> {
    let bytes = STANDARD.decode(b64).map_err(|e| invalid("image")(e.to_string()))?;
    RasterImage::decode_png(&bytes).map_err(|e| invalid("image")(e.to_string()))
}

pub fn encode_mask(mask: &Mask) -> Result<String, BackendError> {
    let png = mask.encode_png().map_err(|e| BackendError::BackendFailure(e.to_string()))?;
    Ok(STANDARD.encode(png))
}

pub fn decode_mask(b64: &str) -> Result<Mask, BackendError> {
    let bytes = STANDARD.decode(b64).map_err(|e| invalid("mask")(e.to_string()))?;
    Mask::decode_png(&bytes).map_err(|e| invalid("mask")(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireLatent {
    pub shape: [u32; 3],
    pub data: String,
}

impl From<&LatentTensor> for WireLatent {
    fn from(z: &LatentTensor) -> Self {
        let (c, h, w) = z.shape();
        WireLatent { shape: [c, h, w], data: STANDARD.encode(z.to_le_bytes()) }
    }
}

impl TryFrom<&WireLatent> for LatentTensor {
    type Error = BackendError;

    fn try_from(w: &WireLatent) -> Result<Self, BackendError> {
        let bytes = STANDARD.decode(&w.data).map_err(|e| invalid("latent")(e.to_string()))?;
        let [c, h, wd] = w.shape;
        LatentTensor::from_le_bytes(c, h, wd, &bytes)
            .ok_or_else(|| invalid("latent")(format!("payload does not match shape {:?}", w.shape)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireDepth {
    pub shape: [u32; 2],
    pub data: String,
}

impl From<&DepthMap> for WireDepth {
    fn from(d: &DepthMap) -> Self {
        let bytes: Vec<u8> = d.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        WireDepth { shape: [d.height, d.width], data: STANDARD.encode(bytes) }
    }
}

impl TryFrom<&WireDepth> for DepthMap {
    type Error = BackendError;

    fn try_from(w: &WireDepth) -> Result<Self, BackendError> {
        let bytes = STANDARD.decode(&w.data).map_err(|e| invalid("depth")(e.to_string()))?;
        let [height, width] = w.shape;
        if bytes.len() != 4 * (height * width) as usize {
            return Err(invalid("depth")(format!("payload does not match shape {:?}", w.shape)));
        }
        let values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Ok(DepthMap { width, height, values })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireCondition {
    Edges { mask: String },
    Depth { depth: WireDepth },
}

impl WireCondition {
    fn from_condition(c: &Condition) -> Result<Self, BackendError> {
        Ok(match c {
            Condition::Edges(m) => WireCondition::Edges { mask: encode_mask(m)? },
            Condition::Depth(d) => WireCondition::Depth { depth: d.into() },
        })
    }

    fn to_condition(&self) -> Result<Condition, BackendError> {
        Ok(match self {
            WireCondition::Edges { mask } => Condition::Edges(decode_mask(mask)?),
            WireCondition::Depth { depth } => Condition::Depth(depth.try_into()?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WirePipelineRequest {
    pub kind: PipelineKind,
    pub canvas: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<WireCondition>,
    pub prompt: String,
    #[serde(default)]
    pub negative_prompt: String,
    pub strength: f32,
    pub guidance: f32,
    pub steps: u32,
    pub seed: u64,
}

impl WirePipelineRequest {
    pub fn from_request(req: &PipelineRequest) -> Result<Self, BackendError> {
        Ok(WirePipelineRequest {
            kind: req.kind,
            canvas: [req.canvas.0, req.canvas.1],
            init_image: req.init_image.as_ref().map(encode_image).transpose()?,
            mask: req.mask.as_ref().map(encode_mask).transpose()?,
            condition: req.condition.as_ref().map(WireCondition::from_condition).transpose()?,
            prompt: req.prompt.clone(),
            negative_prompt: req.negative_prompt.clone(),
            strength: req.strength,
            guidance: req.guidance,
            steps: req.steps,
            seed: req.seed,
        })
    }

    pub fn to_request(&self) -> Result<PipelineRequest, BackendError> {
        Ok(PipelineRequest {
            kind: self.kind,
            canvas: (self.canvas[0], self.canvas[1]),
            init_image: self.init_image.as_deref().map(decode_image).transpose()?,
            mask: self.mask.as_deref().map(decode_mask).transpose()?,
            condition: self.condition.as_ref().map(WireCondition::to_condition).transpose()?,
            prompt: self.prompt.clone(),
            negative_prompt: self.negative_prompt.clone(),
            strength: self.strength,
            guidance: self.guidance,
            steps: self.steps,
            seed: self.seed,
        })
    }
}

/// Image-in request for `encode` and `depth_map`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub seed: u64,
    pub image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub seed: u64,
    pub latent: WireLatent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddNoiseRequest {
    pub seed: u64,
    pub level: f32,
    pub latent: WireLatent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DenoiseStepRequest {
    pub seed: u64,
    pub latent: WireLatent,
    pub prompt: String,
    #[serde(default)]
    pub negative_prompt: String,
    pub step_index: u32,
    pub total_steps: u32,
    pub guidance: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<WireDepth>,
}

impl DenoiseStepRequest {
    pub fn new(z: &LatentTensor, step: &DenoiseStep) -> Self {
        DenoiseStepRequest {
            seed: step.seed,
            latent: z.into(),
            prompt: step.prompt.clone(),
            negative_prompt: step.negative_prompt.clone(),
            step_index: step.step_index,
            total_steps: step.total_steps,
            guidance: step.guidance,
            condition: step.condition.as_ref().map(WireDepth::from),
        }
    }

    pub fn to_step(&self) -> Result<(LatentTensor, DenoiseStep), BackendError> {
        let step = DenoiseStep {
            prompt: self.prompt.clone(),
            negative_prompt: self.negative_prompt.clone(),
            step_index: self.step_index,
            total_steps: self.total_steps,
            guidance: self.guidance,
            condition: self.condition.as_ref().map(DepthMap::try_from).transpose()?,
            seed: self.seed,
        };
        Ok(((&self.latent).try_into()?, step))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub seed: u64,
    pub image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentResponse {
    pub seed: u64,
    pub latent: WireLatent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthResponse {
    pub seed: u64,
    pub depth: WireDepth,
}

/// Body of every non-2xx adapter response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: BackendError,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{Rect, Rgb};

    #[test]
    fn pipeline_request_round_trip() {
        let mut req = PipelineRequest::new(PipelineKind::ControlnetCanny, (16, 8), "fries");
        req.init_image = Some(RasterImage::filled(16, 8, Rgb([1, 2, 3])));
        req.mask = Some(Mask::from_rect(16, 8, Rect::new(2, 2, 3, 3)));
        req.condition = Some(Condition::Edges(Mask::from_rect(16, 8, Rect::new(0, 0, 16, 1))));
        req.negative_prompt = "blurry".into();
        req.strength = 0.8;
        req.guidance = 20.0;
        req.seed = u64::MAX;
        let wire = WirePipelineRequest::from_request(&req).unwrap();
        let json = serde_json::to_string(&wire).unwrap();
        let back: WirePipelineRequest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_request().unwrap(), req);
    }

    #[test]
    fn latent_and_depth_round_trip() {
        let z = LatentTensor::from_vec(4, 1, 2, (0..8).map(|i| i as f32 * 0.1 - 0.3).collect()).unwrap();
        assert_eq!(LatentTensor::try_from(&WireLatent::from(&z)).unwrap(), z);
        let d = DepthMap { width: 3, height: 1, values: vec![0.0, 0.5, 1.0] };
        assert_eq!(DepthMap::try_from(&WireDepth::from(&d)).unwrap(), d);
        let bad = WireLatent { shape: [4, 2, 2], data: WireLatent::from(&z).data };
        assert!(matches!(LatentTensor::try_from(&bad), Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn error_body_shape() {
        let body = ErrorBody { error: BackendError::UnsupportedPipeline("inpaint".into()) };
        let json = serde_json::to_value(&body).unwrap();
        assert_eq!(json, serde_json::json!({"error": {"kind": "unsupported_pipeline", "message": "inpaint"}}));
    }
}
