use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    self, AddNoiseRequest, DecodeRequest, DenoiseStepRequest, DepthResponse, ErrorBody, ImageRequest, ImageResponse,
    LatentResponse, WirePipelineRequest,
};
use super::{BackendDescriptor, BackendError, DenoiseStep, DepthMap, DiffusionBackend, LatentTensor, PipelineRequest};
use crate::imaging::RasterImage;

/// Forwards every call to an adapter runtime speaking [`protocol`] over
/// HTTP. The endpoint is the adapter's base URL, e.g.
/// `http://127.0.0.1:7860/adapter/v1`.
#[derive(Debug)]
pub struct HttpAdapterBackend {
    endpoint: String,
    client: Client,
    descriptor: BackendDescriptor,
}

impl HttpAdapterBackend {
    /// Fetches the descriptor; fails when the runtime is unreachable.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = Client::builder().timeout(timeout).build().map_err(transport)?;
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let resp = client.get(format!("{endpoint}/{}", protocol::DESCRIPTOR_PATH)).send().map_err(transport)?;
        let descriptor = read_json(resp)?;
        Ok(HttpAdapterBackend { endpoint, client, descriptor })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let resp = self.client.post(format!("{}/{path}", self.endpoint)).json(body).send().map_err(transport)?;
        read_json(resp)
    }
}

fn transport(e: reqwest::Error) -> BackendError {
    BackendError::BackendFailure(format!("adapter transport: {e}"))
}

fn read_json<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, BackendError> {
    let status = resp.status();
    let bytes = resp.bytes().map_err(transport)?;
    if !status.is_success() {
        return Err(match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => body.error,
            Err(_) => BackendError::BackendFailure(format!(
                "adapter returned {status}: {}",
                String::from_utf8_lossy(&bytes)
            )),
        });
    }
    serde_json::from_slice(&bytes).map_err(|e| BackendError::BackendFailure(format!("malformed adapter response: {e}")))
}

fn check_seed(sent: u64, echoed: u64) -> Result<(), BackendError> {
    if sent == echoed {
        Ok(())
    } else {
        Err(BackendError::BackendFailure(format!("adapter echoed seed {echoed}, expected {sent}")))
    }
}

impl DiffusionBackend for HttpAdapterBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn run_image_pipeline(&self, req: &PipelineRequest) -> Result<RasterImage, BackendError> {
        self.require(req.kind.capability())?;
        req.validate()?;
        let resp: ImageResponse = self.post(protocol::PIPELINE_PATH, &WirePipelineRequest::from_request(req)?)?;
        check_seed(req.seed, resp.seed)?;
        protocol::decode_image(&resp.image)
    }

    fn encode(&self, img: &RasterImage) -> Result<LatentTensor, BackendError> {
        self.require(super::Capability::Stepwise)?;
        let body = ImageRequest { seed: 0, image: protocol::encode_image(img)? };
        let resp: LatentResponse = self.post(protocol::ENCODE_PATH, &body)?;
        check_seed(0, resp.seed)?;
        (&resp.latent).try_into()
    }

    fn decode(&self, z: &LatentTensor) -> Result<RasterImage, BackendError> {
        self.require(super::Capability::Stepwise)?;
        let resp: ImageResponse = self.post(protocol::DECODE_PATH, &DecodeRequest { seed: 0, latent: z.into() })?;
        check_seed(0, resp.seed)?;
        protocol::decode_image(&resp.image)
    }

    fn add_noise(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError> {
        self.require(super::Capability::Stepwise)?;
        let resp: LatentResponse =
            self.post(protocol::ADD_NOISE_PATH, &AddNoiseRequest { seed, level, latent: z.into() })?;
        check_seed(seed, resp.seed)?;
        (&resp.latent).try_into()
    }

    fn denoise_step(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError> {
        self.require(super::Capability::Stepwise)?;
        let resp: LatentResponse = self.post(protocol::DENOISE_STEP_PATH, &DenoiseStepRequest::new(z, step))?;
        check_seed(step.seed, resp.seed)?;
        (&resp.latent).try_into()
    }

    fn depth_map(&self, img: &RasterImage) -> Result<DepthMap, BackendError> {
        let body = ImageRequest { seed: 0, image: protocol::encode_image(img)? };
        let resp: DepthResponse = self.post(protocol::DEPTH_MAP_PATH, &body)?;
        check_seed(0, resp.seed)?;
        (&resp.depth).try_into()
    }
}
