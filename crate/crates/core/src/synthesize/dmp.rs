//! Multi-prompt masked denoising.
//!
//! Every step denoises the shared latent once per group prompt, then
//! stitches the per-group results back together under latent-resolution
//! masks. Early steps use masks taken from the sketch; later steps switch
//! to the tighter plain-chart masks.

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::backend::{decimal_f64, executed_steps, Capability, DenoiseStep, DiffusionBackend, LatentTensor};
use crate::imaging::{downsample_mask, Mask, RasterImage};

/// Tolerance so products like 0.7 * 0.5 * 40, which are integers in
/// decimal but land just below in binary floating point, floor correctly.
/// Inputs are widened through their decimal form first.
const FLOOR_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DmpSchedule {
    pub strength: f32,
    pub beta: f32,
    pub steps: u32,
    /// Executed steps, `round(strength * steps)`.
    pub total: u32,
    /// Last step that uses sketch masks, `floor(strength * beta * steps)`.
    pub switch: u32,
    pub groups: usize,
}

impl DmpSchedule {
    pub fn new(strength: f32, beta: f32, steps: u32, groups: usize) -> Result<Self, SynthError> {
        if !(0.0..=1.0).contains(&strength) || !(0.0..=1.0).contains(&beta) {
            return Err(SynthError::InvalidParameter(format!("strength {strength} / beta {beta} outside [0, 1]")));
        }
        if steps == 0 || groups == 0 {
            return Err(SynthError::InvalidParameter("steps and group count must be positive".into()));
        }
        let total = executed_steps(strength, steps);
        let switch = ((decimal_f64(strength) * decimal_f64(beta) * steps as f64) + FLOOR_EPS).floor() as u32;
        Ok(DmpSchedule { strength, beta, steps, total, switch: switch.min(total), groups })
    }

    /// Noise level of the sketch-derived background latent at step `i`.
    pub fn background_noise_level(&self, i: u32) -> f32 {
        if self.total == 0 {
            return 0.0;
        }
        self.strength * (1.0 - i as f32 / self.total as f32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSetKind {
    Sketch,
    Plain,
}

/// Which mask set is active at step `i` (1-based).
pub fn dmp_mask_set(i: u32, schedule: &DmpSchedule) -> MaskSetKind {
    if i <= schedule.switch {
        MaskSetKind::Sketch
    } else {
        MaskSetKind::Plain
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "group", rename_all = "snake_case")]
pub enum BackgroundSource {
    /// The sketch latent re-noised to the step's level.
    Sketch,
    /// One of the prompt-biased group latents, rotated per step.
    Group(usize),
}

pub fn dmp_background_source(i: u32, schedule: &DmpSchedule) -> BackgroundSource {
    if i <= schedule.switch {
        BackgroundSource::Sketch
    } else {
        BackgroundSource::Group(((i - schedule.switch - 1) as usize) % schedule.groups)
    }
}

/// Picks the background latent for step `i`. `noised_sketch` is only
/// evaluated before the switch.
pub fn dmp_background_latent(
    i: u32,
    schedule: &DmpSchedule,
    group_latents: &[LatentTensor],
    noised_sketch: impl FnOnce(f32) -> Result<LatentTensor, SynthError>,
) -> Result<LatentTensor, SynthError> {
    match dmp_background_source(i, schedule) {
        BackgroundSource::Sketch => noised_sketch(schedule.background_noise_level(i)),
        BackgroundSource::Group(g) => Ok(group_latents[g].clone()),
    }
}

/// Canvas-resolution regions of one prompt group.
#[derive(Clone, Debug, PartialEq)]
pub struct DmpGroup {
    pub prompt: String,
    /// Union of the group's assembled patch pixels.
    pub sketch_mask: Mask,
    /// Union of the group's plain mark masks.
    pub plain_mask: Mask,
}

/// Latent-resolution masks, priority-resolved so groups never overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSetPair {
    pub sketch: Vec<Mask>,
    pub plain: Vec<Mask>,
    pub sketch_background: Mask,
    pub plain_background: Mask,
}

fn resolve_priority(masks: Vec<Mask>) -> (Vec<Mask>, Mask) {
    let (w, h) = masks[0].dims();
    let mut claimed = Mask::new(w, h);
    let resolved: Vec<Mask> = masks
        .into_iter()
        .map(|m| {
            let own = m.subtract(&claimed);
            claimed = claimed.union(&own);
            own
        })
        .collect();
    (resolved, claimed.complement())
}

impl MaskSetPair {
    /// Sketch masks are downsampled and dilated by one latent cell, plain
    /// masks only downsampled. A single group owns the whole grid.
    pub fn build(groups: &[DmpGroup], factor: u32) -> Result<Self, SynthError> {
        let Some(first) = groups.first() else {
            return Err(SynthError::InvalidParameter("DMP needs at least one group".into()));
        };
        let (w, h) = first.plain_mask.dims();
        if w % factor != 0 || h % factor != 0 {
            return Err(SynthError::InvalidParameter(format!("canvas {w}x{h} not divisible by latent factor {factor}")));
        }
        let (lw, lh) = (w / factor, h / factor);
        if groups.len() == 1 {
            let full = vec![Mask::full(lw, lh)];
            let none = Mask::new(lw, lh);
            return Ok(MaskSetPair { sketch: full.clone(), plain: full, sketch_background: none.clone(), plain_background: none });
        }
        let down = |m: &Mask| downsample_mask(m, factor).map_err(|e| SynthError::InvalidParameter(e.to_string()));
        let sketch = groups.iter().map(|g| Ok(down(&g.sketch_mask)?.dilate(1))).collect::<Result<Vec<_>, SynthError>>()?;
        let plain = groups.iter().map(|g| down(&g.plain_mask)).collect::<Result<Vec<_>, SynthError>>()?;
        let (sketch, sketch_background) = resolve_priority(sketch);
        let (plain, plain_background) = resolve_priority(plain);
        Ok(MaskSetPair { sketch, plain, sketch_background, plain_background })
    }

    pub fn active(&self, kind: MaskSetKind) -> (&[Mask], &Mask) {
        match kind {
            MaskSetKind::Sketch => (&self.sketch, &self.sketch_background),
            MaskSetKind::Plain => (&self.plain, &self.plain_background),
        }
    }
}

/// `sum_g M_g * z_g + M_bg * z_bg`, applied to every channel.
pub fn combine_latents(masks: &[Mask], latents: &[LatentTensor], background_mask: &Mask, background: Option<&LatentTensor>) -> LatentTensor {
    let mut out = latents[0].clone();
    let (c, h, w) = out.shape();
    for y in 0..h {
        for x in 0..w {
            let src = masks
                .iter()
                .position(|m| m.get(x, y))
                .map(|g| &latents[g])
                .or_else(|| background.filter(|_| background_mask.get(x, y)));
            let Some(src) = src else { continue };
            for ch in 0..c {
                out.set(ch, y, x, src.get(ch, y, x));
            }
        }
    }
    out
}

/// Per-step audit record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DmpStepRecord {
    pub step: u32,
    pub mask_set: MaskSetKind,
    pub background: BackgroundSource,
    pub group_checksums: Vec<String>,
    pub combined_checksum: String,
}

#[derive(Clone, Debug)]
pub struct DmpOutput {
    pub image: RasterImage,
    pub schedule: DmpSchedule,
    /// Noised start followed by the combined latent after each step.
    pub latents: Vec<LatentTensor>,
    pub steps: Vec<DmpStepRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmpParams {
    pub strength: f32,
    pub beta: f32,
    pub steps: u32,
    pub guidance: f32,
    pub negative_prompt: String,
    pub seed: u64,
}

/// Runs the masked multi-prompt denoising loop from the sketch.
pub fn dmp(
    sketch: &RasterImage,
    groups: &[DmpGroup],
    params: &DmpParams,
    backend: &dyn DiffusionBackend,
) -> Result<DmpOutput, SynthError> {
    backend.require(Capability::Stepwise)?;
    let schedule = DmpSchedule::new(params.strength, params.beta, params.steps, groups.len())?;
    let masks = MaskSetPair::build(groups, backend.descriptor().latent_factor)?;
    let sketch_latent = backend.encode(sketch)?;
    let mut z = backend.add_noise(&sketch_latent, params.seed, params.strength)?;
    let mut latents = vec![z.clone()];
    let mut records = Vec::with_capacity(schedule.total as usize);
    if schedule.total > 0 {
        let depth = backend.depth_map(sketch)?;
        for i in 1..=schedule.total {
            let group_latents = groups
                .iter()
                .map(|g| {
                    let step = DenoiseStep {
                        prompt: g.prompt.clone(),
                        negative_prompt: params.negative_prompt.clone(),
                        step_index: i,
                        total_steps: schedule.total,
                        guidance: params.guidance,
                        condition: Some(depth.clone()),
                        seed: params.seed,
                    };
                    backend.denoise_step(&z, &step)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let kind = dmp_mask_set(i, &schedule);
            let (active, background_mask) = masks.active(kind);
            let background = if background_mask.is_empty() {
                None
            } else {
                Some(dmp_background_latent(i, &schedule, &group_latents, |level| {
                    Ok(backend.add_noise(&sketch_latent, params.seed, level)?)
                })?)
            };
            z = combine_latents(active, &group_latents, background_mask, background.as_ref());
            records.push(DmpStepRecord {
                step: i,
                mask_set: kind,
                background: dmp_background_source(i, &schedule),
                group_checksums: group_latents.iter().map(LatentTensor::checksum).collect(),
                combined_checksum: z.checksum(),
            });
            latents.push(z.clone());
        }
    }
    let image = if schedule.total == 0 { backend.decode(&sketch_latent)? } else { backend.decode(&z)? };
    Ok(DmpOutput { image, schedule, latents, steps: records })
}
