//! JSON types exchanged between the service and its clients.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backend::TraceRecord;
use crate::chart::{MarkParams, PlainVisualization, ValidationError, Violation};
use crate::imaging::Rect;
use crate::refine::RegenError;
use crate::workflow::{ConfigError, FlagOverrides, RecipeSelection, RunError, Stage, StageError, StateError};

pub const HEALTH_PATH: &str = "/healthz";
pub const VALIDATE_PATH: &str = "/v1/validate";
pub const GENERATE_PATH: &str = "/v1/generate";
pub const REGEN_PATH: &str = "/v1/regen";
pub const INSPECT_PATH: &str = "/v1/inspect";
/// Mount point of the mock adapter runtime.
pub const ADAPTER_PREFIX: &str = "/adapter/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidateRequest {
    pub config: serde_json::Value,
    #[serde(default)]
    pub overrides: FlagOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MarkSummary {
    pub id: usize,
    pub kind: String,
    pub stylizable: bool,
    pub bbox: Rect,
    pub pixels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
}

/// One entry per mark of `plain`, with the sub-prompt index it is bound to.
pub fn mark_summaries(plain: &PlainVisualization, binding: &BTreeMap<usize, usize>) -> Vec<MarkSummary> {
    plain
        .marks
        .iter()
        .map(|m| MarkSummary {
            id: m.mark_id,
            kind: match m.params {
                MarkParams::Bar { .. } => "bar",
                MarkParams::PieSlice { .. } => "pie_slice",
                MarkParams::AreaBand { .. } => "area_band",
                MarkParams::Node { .. } => "node",
                MarkParams::Edge { .. } => "edge",
            }
            .into(),
            stylizable: m.is_stylizable(),
            bbox: m.bbox,
            pixels: m.mask.count(),
            group: binding.get(&m.mark_id).copied(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidateResponse {
    pub recipe: RecipeSelection,
    pub canvas: [u32; 2],
    pub marks: Vec<MarkSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateRequest {
    pub config: serde_json::Value,
    #[serde(default)]
    pub overrides: FlagOverrides,
    pub state_dir: PathBuf,
    /// Extra copy of the final image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateResponse {
    pub state_dir: PathBuf,
    pub final_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub attempt: u32,
    pub recipe: RecipeSelection,
    pub checksums: BTreeMap<String, String>,
    pub backend_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegenTarget {
    Mark { id: usize },
    Background,
    Mask { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegenRequest {
    pub state_dir: PathBuf,
    pub target: RegenTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f32>,
    /// Replaces the stored adapter endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegenResponse {
    pub version: u32,
    pub path: PathBuf,
    pub target: String,
    pub prompt: String,
    pub strength: f32,
    pub checksum: String,
    pub changed_pixels: usize,
    pub region_pixels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectStage {
    Plain,
    Sketch,
    Synth,
    Final,
    Trace,
}

impl InspectStage {
    pub fn as_str(self) -> &'static str {
        match self {
            InspectStage::Plain => "plain",
            InspectStage::Sketch => "sketch",
            InspectStage::Synth => "synth",
            InspectStage::Final => "final",
            InspectStage::Trace => "trace",
        }
    }
}

impl std::str::FromStr for InspectStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(InspectStage::Plain),
            "sketch" => Ok(InspectStage::Sketch),
            "synth" => Ok(InspectStage::Synth),
            "final" => Ok(InspectStage::Final),
            "trace" => Ok(InspectStage::Trace),
            other => Err(format!("unknown stage {other}; expected plain, sketch, synth, final or trace")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InspectQuery {
    pub state_dir: PathBuf,
    pub stage: InspectStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InspectResponse {
    pub stage: InspectStage,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub marks: Vec<MarkSummary>,
    /// Post-processing versions, newest last.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub versions: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_calls: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<TraceRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Backend,
    NotFound,
    Io,
    BadRequest,
}

impl ErrorKind {
    /// Process exit status for this class of failure.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Backend => 2,
            _ => 1,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorKind::Validation => 422,
            ErrorKind::Backend => 502,
            ErrorKind::NotFound => 404,
            ErrorKind::Io => 500,
            ErrorKind::BadRequest => 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
#[serde(rename_all = "camelCase")]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    /// State directory holding partial results, when one was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_dir: Option<PathBuf>,
}

/// Body of every error response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ApiError,
}

impl ApiError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        ApiError { kind, message: message.into(), stage: None, violations: Vec::new(), state_dir: None }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::NotFound, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::BadRequest, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        ApiError { violations: e.violations.clone(), ..ApiError::new(ErrorKind::Validation, e.to_string()) }
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        ApiError { violations: e.violations(), ..ApiError::new(ErrorKind::Validation, e.to_string()) }
    }
}

impl From<StateError> for ApiError {
    fn from(e: StateError) -> Self {
        match &e {
            StateError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ApiError::not_found(e.to_string())
            }
            _ => ApiError::new(ErrorKind::Io, e.to_string()),
        }
    }
}

impl From<RegenError> for ApiError {
    fn from(e: RegenError) -> Self {
        let kind = match e {
            RegenError::Backend(_) => ErrorKind::Backend,
            _ => ErrorKind::Validation,
        };
        ApiError::new(kind, e.to_string())
    }
}

impl From<&RunError> for ApiError {
    fn from(e: &RunError) -> Self {
        let (kind, violations) = match &e.source {
            s if s.is_backend() => (ErrorKind::Backend, Vec::new()),
            StageError::Invalid(v) => (ErrorKind::Validation, v.violations.clone()),
            StageError::Prompt(p) => {
                (ErrorKind::Validation, vec![Violation { field: p.field().into(), message: p.to_string() }])
            }
            StageError::State(_) => (ErrorKind::Io, Vec::new()),
            StageError::MissingStage(_) => (ErrorKind::NotFound, Vec::new()),
            _ => (ErrorKind::Validation, Vec::new()),
        };
        ApiError { stage: Some(e.stage), violations, ..ApiError::new(kind, e.to_string()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendError;
    use crate::workflow::PromptError;

    #[test]
    fn exit_codes() {
        assert_eq!(ErrorKind::Validation.exit_code(), 1);
        assert_eq!(ErrorKind::NotFound.exit_code(), 1);
        assert_eq!(ErrorKind::Backend.exit_code(), 2);
    }

    #[test]
    fn regen_target_wire_shape() {
        let t = RegenTarget::Mark { id: 2 };
        assert_eq!(serde_json::to_value(&t).unwrap(), serde_json::json!({"type": "mark", "id": 2}));
        let b: RegenTarget = serde_json::from_str(r#"{"type":"background"}"#).unwrap();
        assert_eq!(b, RegenTarget::Background);
    }

    #[test]
    fn regen_errors_classify() {
        assert_eq!(ApiError::from(RegenError::UnknownMark(9)).kind, ErrorKind::Validation);
        let backend = RegenError::Backend(BackendError::BackendFailure("down".into()));
        assert_eq!(ApiError::from(backend).kind, ErrorKind::Backend);
    }

    #[test]
    fn prompt_errors_name_the_field() {
        let state = crate::workflow::RunState::new(crate::workflow::RunConfig {
            chart: crate::chart::ChartSpec::bar(&[1.0]),
            prompts: crate::workflow::PromptSpec::new("c", &["x"]),
            workflow: Default::default(),
            backend: Default::default(),
        });
        let err = RunError { stage: Stage::Validate, source: PromptError::EmptyContext.into(), state: Box::new(state) };
        let api = ApiError::from(&err);
        assert_eq!(api.violations[0].field, "prompts.context");
        assert_eq!(api.stage, Some(Stage::Validate));
    }

    #[test]
    fn inspect_stage_parses() {
        assert_eq!("trace".parse::<InspectStage>(), Ok(InspectStage::Trace));
        assert!("nope".parse::<InspectStage>().is_err());
    }
}
