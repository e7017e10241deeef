//! Mock adapter runtime speaking the out-of-process backend protocol.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use vizstyle_core::backend::protocol::{
    self, AddNoiseRequest, DecodeRequest, DenoiseStepRequest, DepthResponse, ErrorBody, ImageRequest, ImageResponse,
    LatentResponse, WirePipelineRequest,
};
use vizstyle_core::backend::{BackendDescriptor, BackendError, DiffusionBackend, MockBackend};

struct AdapterFailure(BackendError);

impl From<BackendError> for AdapterFailure {
    fn from(e: BackendError) -> Self {
        AdapterFailure(e)
    }
}

impl From<JsonRejection> for AdapterFailure {
    fn from(e: JsonRejection) -> Self {
        AdapterFailure(BackendError::InvalidRequest(e.body_text()))
    }
}

impl IntoResponse for AdapterFailure {
    fn into_response(self) -> Response {
        let status = match self.0 {
            BackendError::InvalidRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
            BackendError::UnsupportedPipeline(_) => StatusCode::NOT_IMPLEMENTED,
            BackendError::BackendFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody { error: self.0 })).into_response()
    }
}

type AdapterResult<T> = Result<Json<T>, AdapterFailure>;
type Mock = Arc<MockBackend>;

async fn on_pool<T, F>(f: F) -> AdapterResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, BackendError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(AdapterFailure),
        Err(e) => Err(AdapterFailure(BackendError::BackendFailure(format!("worker failed: {e}")))),
    }
}

async fn descriptor(State(mock): State<Mock>) -> Json<BackendDescriptor> {
    Json(mock.descriptor().clone())
}

async fn pipeline(
    State(mock): State<Mock>,
    body: Result<Json<WirePipelineRequest>, JsonRejection>,
) -> AdapterResult<ImageResponse> {
    let Json(wire) = body?;
    on_pool(move || {
        let req = wire.to_request()?;
        let img = mock.run_image_pipeline(&req)?;
        Ok(ImageResponse { seed: req.seed, image: protocol::encode_image(&img)? })
    })
    .await
}

async fn encode(State(mock): State<Mock>, body: Result<Json<ImageRequest>, JsonRejection>) -> AdapterResult<LatentResponse> {
    let Json(req) = body?;
    on_pool(move || {
        let z = mock.encode(&protocol::decode_image(&req.image)?)?;
        Ok(LatentResponse { seed: req.seed, latent: (&z).into() })
    })
    .await
}

async fn decode(State(mock): State<Mock>, body: Result<Json<DecodeRequest>, JsonRejection>) -> AdapterResult<ImageResponse> {
    let Json(req) = body?;
    on_pool(move || {
        let img = mock.decode(&(&req.latent).try_into()?)?;
        Ok(ImageResponse { seed: req.seed, image: protocol::encode_image(&img)? })
    })
    .await
}

async fn add_noise(
    State(mock): State<Mock>,
    body: Result<Json<AddNoiseRequest>, JsonRejection>,
) -> AdapterResult<LatentResponse> {
    let Json(req) = body?;
    on_pool(move || {
        let z = mock.add_noise(&(&req.latent).try_into()?, req.seed, req.level)?;
        Ok(LatentResponse { seed: req.seed, latent: (&z).into() })
    })
    .await
}

async fn denoise_step(
    State(mock): State<Mock>,
    body: Result<Json<DenoiseStepRequest>, JsonRejection>,
) -> AdapterResult<LatentResponse> {
    let Json(req) = body?;
    on_pool(move || {
        let (z, step) = req.to_step()?;
        let out = mock.denoise_step(&z, &step)?;
        Ok(LatentResponse { seed: req.seed, latent: (&out).into() })
    })
    .await
}

async fn depth_map(State(mock): State<Mock>, body: Result<Json<ImageRequest>, JsonRejection>) -> AdapterResult<DepthResponse> {
    let Json(req) = body?;
    on_pool(move || {
        let d = mock.depth_map(&protocol::decode_image(&req.image)?)?;
        Ok(DepthResponse { seed: req.seed, depth: (&d).into() })
    })
    .await
}

fn path(name: &str) -> String {
    format!("/{name}")
}

/// Routes of the mock adapter, relative to its mount point.
pub fn adapter_router() -> Router {
    Router::new()
        .route(&path(protocol::DESCRIPTOR_PATH), get(descriptor))
        .route(&path(protocol::PIPELINE_PATH), post(pipeline))
        .route(&path(protocol::ENCODE_PATH), post(encode))
        .route(&path(protocol::DECODE_PATH), post(decode))
        .route(&path(protocol::ADD_NOISE_PATH), post(add_noise))
        .route(&path(protocol::DENOISE_STEP_PATH), post(denoise_step))
        .route(&path(protocol::DEPTH_MAP_PATH), post(depth_map))
        .with_state(Arc::new(MockBackend::new()))
}
