use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, BackendError, DenoiseStep, DepthMap, DiffusionBackend, LatentTensor, PipelineRequest};
use crate::imaging::RasterImage;

/// One backend call as written to `trace.jsonl`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRecord {
    pub seq: u64,
    pub stage: String,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_checksum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Default)]
struct TraceLog {
    stage: String,
    records: Vec<TraceRecord>,
}

/// Wraps a backend and records every call with the current stage label.
pub struct TracedBackend<B> {
    inner: B,
    log: Mutex<TraceLog>,
}

impl<B: DiffusionBackend> TracedBackend<B> {
    pub fn new(inner: B) -> Self {
        TracedBackend { inner, log: Mutex::new(TraceLog::default()) }
    }

    /// Continues an earlier trace; new records are numbered after `prior`.
    pub fn resume(inner: B, prior: Vec<TraceRecord>) -> Self {
        TracedBackend { inner, log: Mutex::new(TraceLog { stage: String::new(), records: prior }) }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn set_stage(&self, stage: &str) {
        self.log.lock().expect("trace lock").stage = stage.to_string();
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        self.log.lock().expect("trace lock").records.clone()
    }

    pub fn take_records(&self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.log.lock().expect("trace lock").records)
    }

    fn push<T>(&self, mut rec: TraceRecord, result: &Result<T, BackendError>, checksum: impl Fn(&T) -> String) {
        match result {
            Ok(v) => rec.output_checksum = Some(checksum(v)),
            Err(e) => rec.error = Some(e.to_string()),
        }
        let mut log = self.log.lock().expect("trace lock");
        rec.seq = log.records.len() as u64;
        rec.stage = log.stage.clone();
        log.records.push(rec);
    }
}

/// Serializes records as one JSON object per line.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("trace record serializes") + "\n").collect()
}

impl<B: DiffusionBackend> DiffusionBackend for TracedBackend<B> {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn run_image_pipeline(&self, req: &PipelineRequest) -> Result<RasterImage, BackendError> {
        let out = self.inner.run_image_pipeline(req);
        let rec = TraceRecord {
            op: "run_image_pipeline".into(),
            pipeline: Some(req.kind.as_str().into()),
            model: self.descriptor().pipeline_models.get(req.kind.as_str()).cloned(),
            prompt: Some(req.prompt.clone()),
            strength: Some(req.effective_strength()),
            guidance: Some(req.guidance),
            steps: Some(req.steps),
            executed_steps: Some(req.executed_steps()),
            seed: Some(req.seed),
            ..Default::default()
        };
        self.push(rec, &out, RasterImage::checksum);
        out
    }

    fn encode(&self, img: &RasterImage) -> Result<LatentTensor, BackendError> {
        let out = self.inner.encode(img);
        self.push(TraceRecord { op: "encode".into(), ..Default::default() }, &out, LatentTensor::checksum);
        out
    }

    fn decode(&self, z: &LatentTensor) -> Result<RasterImage, BackendError> {
        let out = self.inner.decode(z);
        self.push(TraceRecord { op: "decode".into(), ..Default::default() }, &out, RasterImage::checksum);
        out
    }

    fn add_noise(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError> {
        let out = self.inner.add_noise(z, seed, level);
        let rec = TraceRecord { op: "add_noise".into(), seed: Some(seed), level: Some(level), ..Default::default() };
        self.push(rec, &out, LatentTensor::checksum);
        out
    }

    fn denoise_step(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError> {
        let out = self.inner.denoise_step(z, step);
        let rec = TraceRecord {
            op: "denoise_step".into(),
            prompt: Some(step.prompt.clone()),
            guidance: Some(step.guidance),
            steps: Some(step.total_steps),
            step_index: Some(step.step_index),
            seed: Some(step.seed),
            ..Default::default()
        };
        self.push(rec, &out, LatentTensor::checksum);
        out
    }

    fn depth_map(&self, img: &RasterImage) -> Result<DepthMap, BackendError> {
        let out = self.inner.depth_map(img);
        let checksum = |d: &DepthMap| {
            let z = LatentTensor::from_vec(1, d.height, d.width, d.values.clone()).expect("depth map shape");
            z.checksum()
        };
        self.push(TraceRecord { op: "depth_map".into(), ..Default::default() }, &out, checksum);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, PipelineKind};
    use crate::imaging::Rgb;

    #[test]
    fn records_calls_with_stage_and_order() {
        let traced = TracedBackend::new(MockBackend::new());
        traced.set_stage("sketch");
        let mut req = PipelineRequest::new(PipelineKind::Img2img, (16, 16), "fries");
        req.init_image = Some(RasterImage::filled(16, 16, Rgb::WHITE));
        req.strength = 0.82;
        traced.run_image_pipeline(&req).unwrap();
        traced.set_stage("synthesize");
        traced.depth_map(&RasterImage::filled(16, 16, Rgb::WHITE)).unwrap();
        let recs = traced.records();
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[0].seq, recs[0].stage.as_str()), (0, "sketch"));
        assert_eq!(recs[0].executed_steps, Some(41));
        assert_eq!(recs[1].stage, "synthesize");
        let jsonl = to_jsonl(&recs);
        assert_eq!(jsonl.lines().count(), 2);
        let back: TraceRecord = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(back, recs[0]);
    }

    #[test]
    fn errors_are_recorded() {
        let traced = TracedBackend::new(MockBackend::with_capabilities([]));
        assert!(traced.encode(&RasterImage::filled(8, 8, Rgb::WHITE)).is_err());
        assert!(traced.records()[0].error.is_some());
    }
}
