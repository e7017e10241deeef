use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompts::PromptSpec;
use super::recipe::RecipeOverrides;
use super::state::RunConfig;
use crate::backend::{BackendError, Capability, DiffusionBackend, HttpAdapterBackend, MockBackend};
use crate::chart::{
    palette_color, validate_spec, Canvas, ChartData, ChartKind, ChartSpec, Datum, Edge, Network, Node, Series,
    ValidationError, Violation, DEFAULT_CANVAS,
};
use crate::imaging::Rgb;
use crate::sketch::{GridOptions, MarkTransform, PregenMethod, SketchParams};
use crate::synthesize::SynthParams;

/// Environment variable that replaces the configured adapter endpoint.
pub const BACKEND_ENDPOINT_ENV: &str = "VIZ2VIZ_BACKEND_ENDPOINT";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Strengths {
    pub sketch_img2img: f32,
    pub sketch_depth2img: f32,
    pub smooth: f32,
    /// DMP, depth-to-image and ControlNet synthesis.
    pub synthesize: f32,
    /// Image-to-image synthesis.
    pub synthesize_img2img: f32,
    pub refine: f32,
    pub regenerate: f32,
    pub repair: f32,
}

impl Default for Strengths {
    fn default() -> Self {
        Strengths {
            sketch_img2img: 0.82,
            sketch_depth2img: 0.98,
            smooth: 0.4,
            synthesize: 0.8,
            synthesize_img2img: 0.4,
            refine: 0.30,
            regenerate: 0.8,
            repair: 0.2,
        }
    }
}

impl Strengths {
    fn named(&self) -> [(&'static str, f32); 8] {
        [
            ("sketchImg2img", self.sketch_img2img),
            ("sketchDepth2img", self.sketch_depth2img),
            ("smooth", self.smooth),
            ("synthesize", self.synthesize),
            ("synthesizeImg2img", self.synthesize_img2img),
            ("refine", self.refine),
            ("regenerate", self.regenerate),
            ("repair", self.repair),
        ]
    }
}

/// Per-group choice of pre-generation method and mark transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GroupOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pregen: Option<PregenMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<MarkTransform>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct WorkflowConfig {
    pub seed: u64,
    pub steps: u32,
    pub guidance: f32,
    pub strengths: Strengths,
    pub beta: f32,
    pub realism: bool,
    pub recipe: RecipeOverrides,
    /// Keyed by sub-prompt index.
    pub groups: BTreeMap<usize, GroupOverride>,
    /// Canvas used when the chart section does not set one.
    pub canvas: Canvas,
    pub trace: bool,
    pub background_colors: (Rgb, Rgb),
    pub blur_sigma: f32,
    pub brighten: f32,
    pub grid_padding: f64,
    pub equalize_grid: bool,
    /// Pixels added around a mark before it is regenerated.
    pub regen_dilation: u32,
    pub canny_low: f32,
    pub canny_high: f32,
    /// Generation attempts; each retry increments the seed.
    pub attempts: u32,
    pub refine_after_regen: bool,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        let sketch = SketchParams::default();
        WorkflowConfig {
            seed: 0,
            steps: 50,
            guidance: 20.0,
            strengths: Strengths::default(),
            beta: 0.5,
            realism: true,
            recipe: RecipeOverrides::default(),
            groups: BTreeMap::new(),
            canvas: DEFAULT_CANVAS,
            trace: true,
            background_colors: sketch.background_colors,
            blur_sigma: sketch.blur_sigma,
            brighten: sketch.brighten,
            grid_padding: sketch.grid.padding,
            equalize_grid: sketch.grid.equalize,
            regen_dilation: 4,
            canny_low: 100.0,
            canny_high: 200.0,
            attempts: 1,
            refine_after_regen: false,
        }
    }
}

impl WorkflowConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut v = Vec::new();
        let mut push = |field: &str, message: String| v.push(Violation { field: format!("workflow.{field}"), message });
        for (name, s) in self.strengths.named() {
            if !(0.0..=1.0).contains(&s) {
                push(&format!("strengths.{name}"), format!("strength {s} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            push("beta", format!("beta {} outside [0, 1]", self.beta));
        }
        if self.steps == 0 {
            push("steps", "at least one step is required".into());
        }
        if !(self.guidance.is_finite() && self.guidance >= 0.0) {
            push("guidance", "guidance must be a non-negative number".into());
        }
        if self.attempts == 0 {
            push("attempts", "at least one attempt is required".into());
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma > 0.0) {
            push("blurSigma", "blur sigma must be positive".into());
        }
        if !(self.brighten.is_finite() && self.brighten >= 0.0) {
            push("brighten", "brighten factor must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.grid_padding) {
            push("gridPadding", "grid padding must lie in [0, 1)".into());
        }
        if !(self.canny_low >= 0.0 && self.canny_low <= self.canny_high) {
            push("cannyLow", "canny thresholds must satisfy 0 <= low <= high".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { violations: v })
        }
    }

    pub fn sketch_params(&self, negative_prompt: &str) -> SketchParams {
        SketchParams {
            img2img_strength: self.strengths.sketch_img2img,
            depth2img_strength: self.strengths.sketch_depth2img,
            steps: self.steps,
            guidance: self.guidance,
            negative_prompt: negative_prompt.to_string(),
            seed: self.seed,
            grid: GridOptions { equalize: self.equalize_grid, padding: self.grid_padding },
            background_colors: self.background_colors,
            blur_sigma: self.blur_sigma,
            brighten: self.brighten,
        }
    }

    pub fn synth_params(&self, negative_prompt: &str) -> SynthParams {
        SynthParams {
            smooth_strength: self.strengths.smooth,
            img2img_strength: self.strengths.synthesize_img2img,
            strength: self.strengths.synthesize,
            beta: self.beta,
            steps: self.steps,
            guidance: self.guidance,
            negative_prompt: negative_prompt.to_string(),
            seed: self.seed,
            canny_thresholds: (self.canny_low, self.canny_high),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Adapter,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(rename = "type", default)]
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Restricts the mock's capability set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Vec<Capability>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
}

impl BackendConfig {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

    /// Replaces the endpoint with the environment variable when it is set.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(endpoint) = std::env::var(BACKEND_ENDPOINT_ENV) {
            if !endpoint.trim().is_empty() {
                self.endpoint = Some(endpoint);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        match self.kind {
            BackendKind::Adapter if self.endpoint.as_deref().map_or(true, |e| e.trim().is_empty()) => {
                Err(ValidationError::single("backend.endpoint", "the adapter backend needs an endpoint"))
            }
            BackendKind::Adapter if self.capabilities.is_some() => {
                Err(ValidationError::single("backend.capabilities", "capabilities can only be set for the mock backend"))
            }
            _ => Ok(()),
        }
    }

    /// Connects to the configured backend. The adapter performs blocking I/O.
    pub fn build(&self) -> Result<Box<dyn DiffusionBackend>, BackendError> {
        match self.kind {
            BackendKind::Mock => Ok(Box::new(match &self.capabilities {
                Some(caps) => MockBackend::with_capabilities(caps.iter().copied()),
                None => MockBackend::new(),
            })),
            BackendKind::Adapter => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| BackendError::InvalidRequest("adapter backend has no endpoint".into()))?;
                let timeout = self.timeout_ms.map_or(Self::DEFAULT_TIMEOUT, Duration::from_millis);
                Ok(Box::new(HttpAdapterBackend::connect(endpoint, timeout)?))
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum DatumInput {
    Value(f64),
    Full(DatumFull),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatumFull {
    #[serde(default)]
    label: Option<String>,
    value: f64,
    #[serde(default)]
    color: Option<Rgb>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesInput {
    #[serde(default)]
    label: Option<String>,
    points: Vec<(f64, f64)>,
    #[serde(default)]
    color: Option<Rgb>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NetworkInput {
    nodes: Vec<NodeInput>,
    #[serde(default)]
    edges: Vec<EdgeInput>,
    #[serde(default)]
    edge_color: Option<Rgb>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeInput {
    id: String,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default)]
    color: Option<Rgb>,
    #[serde(default)]
    position: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeInput {
    source: String,
    target: String,
    #[serde(default)]
    width: Option<f64>,
}

pub const DEFAULT_NODE_RADIUS: f64 = 24.0;
pub const DEFAULT_EDGE_WIDTH: f64 = 4.0;

/// The `chart` section of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChartSection {
    pub kind: ChartKind,
    /// Bar and pie: numbers or `{label, value, color}`; area: series of
    /// `{label, points, color}`; network: `{nodes, edges, edgeColor}`.
    pub data: serde_json::Value,
    /// Palette cycled over marks without an explicit color.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub colors: Vec<Rgb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canvas: Option<Canvas>,
}

impl ChartSection {
    fn color(&self, i: usize, explicit: Option<Rgb>) -> Rgb {
        explicit.unwrap_or_else(|| if self.colors.is_empty() { palette_color(i) } else { self.colors[i % self.colors.len()] })
    }

    fn parse<T: serde::de::DeserializeOwned>(&self) -> Result<T, ValidationError> {
        serde_path_to_error::deserialize(&self.data).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "chart.data".to_string() } else { format!("chart.data.{path}") };
            ValidationError::single(field, e.inner().to_string())
        })
    }

    /// Builds and validates the chart, falling back to `default_canvas`.
    pub fn to_spec(&self, default_canvas: Canvas) -> Result<ChartSpec, ValidationError> {
        let data = match self.kind {
            ChartKind::Bar | ChartKind::Pie => {
                let items: Vec<DatumInput> = self.parse()?;
                let data = items
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| match d {
                        DatumInput::Value(value) => Datum { label: format!("d{i}"), value, color: self.color(i, None) },
                        DatumInput::Full(f) => Datum {
                            label: f.label.unwrap_or_else(|| format!("d{i}")),
                            value: f.value,
                            color: self.color(i, f.color),
                        },
                    })
                    .collect();
                if self.kind == ChartKind::Bar {
                    ChartData::Bar(data)
                } else {
                    ChartData::Pie(data)
                }
            }
            ChartKind::Area => {
                let items: Vec<SeriesInput> = self.parse()?;
                ChartData::Area(
                    items
                        .into_iter()
                        .enumerate()
                        .map(|(i, s)| Series {
                            label: s.label.unwrap_or_else(|| format!("s{i}")),
                            points: s.points,
                            color: self.color(i, s.color),
                        })
                        .collect(),
                )
            }
            ChartKind::Network => {
                let net: NetworkInput = self.parse()?;
                let nodes = net
                    .nodes
                    .into_iter()
                    .enumerate()
                    .map(|(i, n)| Node {
                        id: n.id,
                        radius: n.radius.unwrap_or(DEFAULT_NODE_RADIUS),
                        color: self.color(i, n.color),
                        position: n.position,
                    })
                    .collect();
                let edges = net
                    .edges
                    .into_iter()
                    .map(|e| Edge { source: e.source, target: e.target, width: e.width.unwrap_or(DEFAULT_EDGE_WIDTH) })
                    .collect();
                ChartData::Network(Network { nodes, edges, edge_color: net.edge_color.unwrap_or(Rgb::BLACK) })
            }
        };
        validate_spec(ChartSpec { canvas: self.canvas.unwrap_or(default_canvas), data })
    }
}

/// A complete job description as read from disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConfigFile {
    pub chart: ChartSection,
    pub prompts: PromptSpec,
    #[serde(default)]
    pub workflow: WorkflowConfig,
    #[serde(default)]
    pub backend: BackendConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl ConfigError {
    pub fn violations(&self) -> Vec<Violation> {
        match self {
            ConfigError::Parse { path, message } => vec![Violation { field: path.clone(), message: message.clone() }],
            ConfigError::Invalid(v) => v.violations.clone(),
        }
    }
}

/// Command-line settings that map onto config fields.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlagOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `mock`, `adapter`, or an adapter endpoint URL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<bool>,
    /// Replaces the adapter endpoint without changing the backend type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, ConfigError> {
        serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Applies the overrides, validates, and snapshots the result.
    pub fn into_run_config(mut self, flags: &FlagOverrides) -> Result<RunConfig, ConfigError> {
        self.backend = self.backend.with_env_override();
        self.apply_overrides(flags)?;
        let chart = self.validate()?;
        Ok(RunConfig { chart, prompts: self.prompts, workflow: self.workflow, backend: self.backend })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn chart_spec(&self) -> Result<ChartSpec, ValidationError> {
        self.chart.to_spec(self.workflow.canvas)
    }

    /// Validates every section except the binding, which needs the rendered chart.
    pub fn validate(&self) -> Result<ChartSpec, ConfigError> {
        let spec = self.chart_spec()?;
        self.workflow.validate()?;
        self.backend.validate()?;
        Ok(spec)
    }

    pub fn apply_overrides(&mut self, flags: &FlagOverrides) -> Result<(), ValidationError> {
        if let Some(seed) = flags.seed {
            self.workflow.seed = seed;
        }
        if let Some(trace) = flags.trace {
            self.workflow.trace = trace;
        }
        if let Some(endpoint) = flags.endpoint.as_deref().filter(|e| !e.trim().is_empty()) {
            self.backend.endpoint = Some(endpoint.to_string());
        }
        match flags.backend.as_deref() {
            None => {}
            Some("mock") => self.backend.kind = BackendKind::Mock,
            Some("adapter") => self.backend.kind = BackendKind::Adapter,
            Some(url) if url.starts_with("http://") || url.starts_with("https://") => {
                self.backend.kind = BackendKind::Adapter;
                self.backend.endpoint = Some(url.to_string());
            }
            Some(other) => {
                return Err(ValidationError::single("--backend", format!("expected mock, adapter or a URL, got {other}")))
            }
        }
        Ok(())
    }
}
