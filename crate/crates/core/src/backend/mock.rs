use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    BackendDescriptor, BackendError, Capability, DenoiseStep, DepthMap, DiffusionBackend, LatentTensor, PipelineKind,
    PipelineRequest,
};
use crate::imaging::{luma_255, quantize, PixelFormat, RasterImage};

pub const MOCK_LATENT_FACTOR: u32 = 8;
pub const MOCK_LATENT_CHANNELS: u32 = 4;

/// Contrast stretch applied after the box blur so target fields span most
/// of [0, 1] instead of clustering around 0.5.
const TARGET_CONTRAST: f32 = 3.0;

/// Pure, closed-form stand-in for a latent diffusion runtime.
///
/// Latents are area-downsampled RGB with channel 3 mirroring channel 0.
/// `denoise_step` moves `z` toward a prompt-keyed target so that the last
/// step lands on it exactly; `add_noise` blends toward a seeded field.
#[derive(Clone, Debug)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::with_capabilities(Capability::ALL)
    }
}

impl MockBackend {
    pub fn new() -> Self {
        MockBackend::default()
    }

    pub fn with_capabilities(caps: impl IntoIterator<Item = Capability>) -> Self {
        MockBackend {
            descriptor: BackendDescriptor {
                name: "mock".into(),
                capabilities: caps.into_iter().collect::<BTreeSet<_>>(),
                latent_factor: MOCK_LATENT_FACTOR,
                latent_channels: MOCK_LATENT_CHANNELS,
                scheduler_steps_max: 1000,
                max_parallel: 16,
                pipeline_models: Default::default(),
            },
        }
    }

    /// Prompt-keyed target latent for a `height x width` latent grid.
    pub fn target_latent(prompt: &str, seed: u64, height: u32, width: u32) -> LatentTensor {
        let mut h = Sha256::new();
        h.update(b"target\0");
        h.update(prompt.as_bytes());
        h.update(seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let n = (height * width) as usize;
        let mut planes: Vec<Vec<f32>> = (0..3).map(|_| (0..n).map(|_| rng.gen::<f32>()).collect()).collect();
        for plane in &mut planes {
            *plane = box_blur3(plane, width, height)
                .into_iter()
                .map(|b| (0.5 + (b - 0.5) * TARGET_CONTRAST).clamp(0.0, 1.0))
                .collect();
        }
        from_rgb_planes(&planes, height, width)
    }

    /// Seeded noise field in [0, 1] shared by every prompt.
    pub fn noise_field(seed: u64, height: u32, width: u32) -> LatentTensor {
        let mut h = Sha256::new();
        h.update(b"noise\0");
        h.update(seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let n = (height * width) as usize;
        let planes: Vec<Vec<f32>> = (0..3).map(|_| (0..n).map(|_| rng.gen::<f32>()).collect()).collect();
        from_rgb_planes(&planes, height, width)
    }

    fn check_shape(&self, z: &LatentTensor) -> Result<(), BackendError> {
        if z.channels() != MOCK_LATENT_CHANNELS || z.height() == 0 || z.width() == 0 {
            return Err(BackendError::InvalidRequest(format!("latent shape {:?} not supported", z.shape())));
        }
        if !z.is_finite() {
            return Err(BackendError::InvalidRequest("latent has non-finite values".into()));
        }
        Ok(())
    }

    fn latent_dims(&self, canvas: (u32, u32)) -> Result<(u32, u32), BackendError> {
        if !self.descriptor.fits(canvas.0, canvas.1) || canvas.0 == 0 || canvas.1 == 0 {
            return Err(BackendError::InvalidRequest(format!(
                "canvas {}x{} is not a multiple of latent factor {MOCK_LATENT_FACTOR}",
                canvas.0, canvas.1
            )));
        }
        Ok((canvas.1 / MOCK_LATENT_FACTOR, canvas.0 / MOCK_LATENT_FACTOR))
    }

    fn encode_raw(&self, img: &RasterImage) -> Result<LatentTensor, BackendError> {
        let (lh, lw) = self.latent_dims(img.dims())?;
        let f = MOCK_LATENT_FACTOR;
        let src = img.rgb_planes();
        let area = (f * f) as f32;
        let planes: Vec<Vec<f32>> = src
            .iter()
            .map(|plane| {
                let mut out = vec![0f32; (lh * lw) as usize];
                for ly in 0..lh {
                    for lx in 0..lw {
                        let mut sum = 0.0;
                        for y in ly * f..(ly + 1) * f {
                            let row = (y * img.width()) as usize;
                            for x in lx * f..(lx + 1) * f {
                                sum += plane[row + x as usize];
                            }
                        }
                        out[(ly * lw + lx) as usize] = sum / area;
                    }
                }
                out
            })
            .collect();
        Ok(from_rgb_planes(&planes, lh, lw))
    }

    fn decode_raw(&self, z: &LatentTensor) -> Result<RasterImage, BackendError> {
        self.check_shape(z)?;
        let f = MOCK_LATENT_FACTOR;
        let (w, h) = (z.width() * f, z.height() * f);
        let mut data = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    data.push(quantize(z.get(c, y / f, x / f)));
                }
            }
        }
        RasterImage::from_raw(w, h, PixelFormat::Rgb, data).map_err(|e| BackendError::BackendFailure(e.to_string()))
    }

    fn add_noise_raw(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError> {
        self.check_shape(z)?;
        if !(0.0..=1.0).contains(&level) {
            return Err(BackendError::InvalidRequest(format!("noise level {level} outside [0, 1]")));
        }
        if level == 0.0 {
            return Ok(z.clone());
        }
        let eta = MockBackend::noise_field(seed, z.height(), z.width());
        Ok(z.zip_map(&eta, |a, n| (1.0 - level) * a + level * n))
    }

    fn denoise_step_raw(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError> {
        self.check_shape(z)?;
        if step.step_index == 0 || step.step_index > step.total_steps {
            return Err(BackendError::InvalidRequest(format!(
                "step index {} outside 1..={}",
                step.step_index, step.total_steps
            )));
        }
        let target = MockBackend::target_latent(&step.prompt, step.seed, z.height(), z.width());
        if step.step_index == step.total_steps {
            return Ok(target);
        }
        let remaining = (step.total_steps - step.step_index + 1) as f32;
        Ok(z.zip_map(&target, |a, t| a + (t - a) / remaining))
    }
}

fn from_rgb_planes(planes: &[Vec<f32>], height: u32, width: u32) -> LatentTensor {
    let mut data = Vec::with_capacity(4 * planes[0].len());
    for plane in planes.iter().chain(std::iter::once(&planes[0])) {
        data.extend_from_slice(plane);
    }
    LatentTensor::from_vec(MOCK_LATENT_CHANNELS, height, width, data).expect("plane sizes match")
}

fn box_blur3(plane: &[f32], width: u32, height: u32) -> Vec<f32> {
    let (w, h) = (width as i64, height as i64);
    let at = |x: i64, y: i64| plane[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    sum += at(x + dx, y + dy);
                }
            }
            out.push(sum / 9.0);
        }
    }
    out
}

impl DiffusionBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn run_image_pipeline(&self, req: &PipelineRequest) -> Result<RasterImage, BackendError> {
        self.require(req.kind.capability())?;
        req.validate()?;
        let (lh, lw) = self.latent_dims(req.canvas)?;
        let total = req.executed_steps();
        if total == 0 {
            if let Some(init) = &req.init_image {
                return Ok(init.clone());
            }
        }
        let start = match &req.init_image {
            Some(init) if req.kind != PipelineKind::Txt2img => self.encode_raw(init)?,
            _ => LatentTensor::zeros(MOCK_LATENT_CHANNELS, lh, lw),
        };
        let mut z = self.add_noise_raw(&start, req.seed, req.effective_strength())?;
        for i in 1..=total {
            let step = DenoiseStep {
                prompt: req.prompt.clone(),
                negative_prompt: req.negative_prompt.clone(),
                step_index: i,
                total_steps: total,
                guidance: req.guidance,
                condition: None,
                seed: req.seed,
            };
            z = self.denoise_step_raw(&z, &step)?;
        }
        let generated = self.decode_raw(&z)?;
        match (req.kind, &req.init_image, &req.mask) {
            (PipelineKind::Inpaint, Some(init), Some(mask)) => {
                let mut out = init.to_rgb();
                for (x, y) in mask.iter_set() {
                    out.set_pixel(x, y, generated.pixel(x, y));
                }
                Ok(out)
            }
            _ => Ok(generated),
        }
    }

    fn encode(&self, img: &RasterImage) -> Result<LatentTensor, BackendError> {
        self.require(Capability::Stepwise)?;
        self.encode_raw(img)
    }

    fn decode(&self, z: &LatentTensor) -> Result<RasterImage, BackendError> {
        self.require(Capability::Stepwise)?;
        self.decode_raw(z)
    }

    fn add_noise(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError> {
        self.require(Capability::Stepwise)?;
        self.add_noise_raw(z, seed, level)
    }

    fn denoise_step(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError> {
        self.require(Capability::Stepwise)?;
        self.denoise_step_raw(z, step)
    }

    fn depth_map(&self, img: &RasterImage) -> Result<DepthMap, BackendError> {
        let values = luma_255(img).into_iter().map(|v| (v / 255.0).clamp(0.0, 1.0)).collect();
        Ok(DepthMap { width: img.width(), height: img.height(), values })
    }
}
