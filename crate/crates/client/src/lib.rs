//! Async client for the stylization service.

use std::time::Duration;

use reqwest::{Response, Url};
use serde::de::DeserializeOwned;
use serde::Serialize;
use vizstyle_core::api::{
    ApiError, ErrorResponse, GenerateRequest, GenerateResponse, InspectQuery, InspectResponse, RegenRequest,
    RegenResponse, ValidateRequest, ValidateResponse, GENERATE_PATH, HEALTH_PATH, INSPECT_PATH, REGEN_PATH,
    VALIDATE_PATH,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with a structured error.
    #[error(transparent)]
    Api(ApiError),
    #[error("service unreachable: {0}")]
    Transport(#[source] reqwest::Error),
    #[error("service returned {status}: {body}")]
    Unexpected { status: u16, body: String },
    #[error("invalid service url: {0}")]
    Url(String),
}

impl ClientError {
    /// Process exit status: the service's classification, or 2 when the
    /// service itself could not be used.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Api(e) => e.exit_code(),
            ClientError::Url(_) => 1,
            _ => 2,
        }
    }

    pub fn into_api_error(self) -> ApiError {
        match self {
            ClientError::Api(e) => e,
            ClientError::Url(m) => ApiError::bad_request(m),
            other => ApiError::new(vizstyle_core::api::ErrorKind::Backend, other.to_string()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:7860`.
    pub fn new(base: &str) -> Result<Self, ClientError> {
        Client::with_timeout(base, Duration::from_secs(3600))
    }

    pub fn with_timeout(base: &str, timeout: Duration) -> Result<Self, ClientError> {
        let base = Url::parse(base).map_err(|e| ClientError::Url(format!("{base}: {e}")))?;
        let http = reqwest::Client::builder().timeout(timeout).build().map_err(ClientError::Transport)?;
        Ok(Client { base, http })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str) -> Result<Url, ClientError> {
        self.base.join(path).map_err(|e| ClientError::Url(e.to_string()))
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, ClientError> {
        let resp = self.http.post(self.url(path)?).json(body).send().await.map_err(ClientError::Transport)?;
        read(resp).await
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        let resp = self.http.get(self.url(HEALTH_PATH)?).send().await.map_err(ClientError::Transport)?;
        read::<serde::de::IgnoredAny>(resp).await.map(|_| ())
    }

    pub async fn validate(&self, req: &ValidateRequest) -> Result<ValidateResponse, ClientError> {
        self.post(VALIDATE_PATH, req).await
    }

    pub async fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, ClientError> {
        self.post(GENERATE_PATH, req).await
    }

    pub async fn regen(&self, req: &RegenRequest) -> Result<RegenResponse, ClientError> {
        self.post(REGEN_PATH, req).await
    }

    pub async fn inspect(&self, query: &InspectQuery) -> Result<InspectResponse, ClientError> {
        let resp = self.http.get(self.url(INSPECT_PATH)?).query(query).send().await.map_err(ClientError::Transport)?;
        read(resp).await
    }
}

async fn read<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    let status = resp.status();
    let bytes = resp.bytes().await.map_err(ClientError::Transport)?;
    if status.is_success() {
        return serde_json::from_slice(&bytes).map_err(|e| ClientError::Unexpected {
            status: status.as_u16(),
            body: format!("malformed response: {e}"),
        });
    }
    match serde_json::from_slice::<ErrorResponse>(&bytes) {
        Ok(body) => Err(ClientError::Api(body.error)),
        Err(_) => Err(ClientError::Unexpected { status: status.as_u16(), body: String::from_utf8_lossy(&bytes).into() }),
    }
}
