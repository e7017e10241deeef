use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::imaging::Rgb;

/// Image pixels per latent cell assumed when no backend is involved.
pub const DEFAULT_LATENT_FACTOR: u32 = 8;
pub const DEFAULT_CANVAS: Canvas = Canvas { width: 512, height: 512 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Bar,
    Pie,
    Area,
    Network,
}

impl ChartKind {
    pub const ALL: [ChartKind; 4] = [ChartKind::Bar, ChartKind::Pie, ChartKind::Area, ChartKind::Network];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Bar => "bar",
            ChartKind::Pie => "pie",
            ChartKind::Area => "area",
            ChartKind::Network => "network",
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Default for Canvas {
    fn default() -> Self {
        DEFAULT_CANVAS
    }
}

/// A labelled value (one bar or one pie slice).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub label: String,
    pub value: f64,
    pub color: Rgb,
}

/// One area-chart series; bands are stacked in declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Radius in pixels.
    pub radius: f64,
    pub color: Rgb,
    /// Normalized position in [0, 1]^2; laid out when absent.
    pub position: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    /// Stroke width in pixels.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub edge_color: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum ChartData {
    Bar(Vec<Datum>),
    Pie(Vec<Datum>),
    Area(Vec<Series>),
    Network(Network),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub canvas: Canvas,
    pub data: ChartData,
}

impl ChartSpec {
    pub fn kind(&self) -> ChartKind {
        match self.data {
            ChartData::Bar(_) => ChartKind::Bar,
            ChartData::Pie(_) => ChartKind::Pie,
            ChartData::Area(_) => ChartKind::Area,
            ChartData::Network(_) => ChartKind::Network,
        }
    }

    pub fn bar(values: &[f64]) -> ChartSpec {
        ChartSpec { canvas: DEFAULT_CANVAS, data: ChartData::Bar(data_with_palette(values)) }
    }

    pub fn pie(values: &[f64]) -> ChartSpec {
        ChartSpec { canvas: DEFAULT_CANVAS, data: ChartData::Pie(data_with_palette(values)) }
    }
}

/// Tableau-like default palette, cycled.
pub const PALETTE: [Rgb; 10] = [
    Rgb([0x4e, 0x79, 0xa7]),
    Rgb([0xf2, 0x8e, 0x2b]),
    Rgb([0xe1, 0x57, 0x59]),
    Rgb([0x76, 0xb7, 0xb2]),
    Rgb([0x59, 0xa1, 0x4f]),
    Rgb([0xed, 0xc9, 0x48]),
    Rgb([0xb0, 0x7a, 0xa1]),
    Rgb([0xff, 0x9d, 0xa7]),
    Rgb([0x9c, 0x75, 0x5f]),
    Rgb([0xba, 0xb0, 0xac]),
];

pub fn palette_color(i: usize) -> Rgb {
    PALETTE[i % PALETTE.len()]
}

fn data_with_palette(values: &[f64]) -> Vec<Datum> {
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| Datum { label: format!("d{i}"), value, color: palette_color(i) })
        .collect()
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| format!("{}: {}", v.field, v.message)).collect();
        write!(f, "invalid input: {}", parts.join("; "))
    }
}

impl ValidationError {
    pub fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError { violations: vec![Violation { field: field.into(), message: message.into() }] }
    }
}

/// Checks every chart invariant against the default latent factor.
pub fn validate_spec(spec: ChartSpec) -> Result<ChartSpec, ValidationError> {
    validate_spec_for(spec, DEFAULT_LATENT_FACTOR)
}

/// Checks every chart invariant; the canvas must be a multiple of `latent_factor`.
pub fn validate_spec_for(spec: ChartSpec, latent_factor: u32) -> Result<ChartSpec, ValidationError> {
    let mut v = Vec::new();
    let mut push = |field: String, message: String| v.push(Violation { field, message });

    let Canvas { width, height } = spec.canvas;
    if width == 0 || height == 0 {
        push("chart.canvas".into(), "canvas dimensions must be positive".into());
    } else if latent_factor > 0 && (width % latent_factor != 0 || height % latent_factor != 0) {
        push(
            "chart.canvas".into(),
            format!("canvas {width}x{height} is not a multiple of the latent factor {latent_factor}"),
        );
    }

    match &spec.data {
        ChartData::Bar(data) | ChartData::Pie(data) => {
            let pie = spec.kind() == ChartKind::Pie;
            if data.is_empty() {
                push("chart.data".into(), "at least one value is required".into());
            }
            for (i, d) in data.iter().enumerate() {
                if !d.value.is_finite() {
                    push(format!("chart.data[{i}].value"), format!("non-finite value at index {i}"));
                } else if d.value < 0.0 {
                    push(format!("chart.data[{i}].value"), format!("negative value at index {i}"));
                } else if pie && d.value == 0.0 {
                    push(format!("chart.data[{i}].value"), format!("pie slice at index {i} must be positive"));
                }
            }
            if pie && data.len() < 2 {
                push("chart.data".into(), "a pie needs at least 2 slices".into());
            }
            if !pie && !data.is_empty() && data.iter().all(|d| d.value == 0.0) {
                push("chart.data".into(), "all bar values are zero".into());
            }
        }
        ChartData::Area(series) => {
            if series.is_empty() {
                push("chart.data".into(), "at least one series is required".into());
            }
            for (s, ser) in series.iter().enumerate() {
                if ser.points.len() < 2 {
                    push(format!("chart.data[{s}].points"), "a series needs at least 2 points".into());
                }
                for (i, &(x, y)) in ser.points.iter().enumerate() {
                    if !x.is_finite() || !y.is_finite() {
                        push(format!("chart.data[{s}].points[{i}]"), format!("non-finite point at index {i}"));
                    } else if y < 0.0 {
                        push(format!("chart.data[{s}].points[{i}]"), format!("negative value at index {i}"));
                    }
                }
                if ser.points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    push(format!("chart.data[{s}].points"), "x values must be strictly ascending".into());
                }
            }
        }
        ChartData::Network(net) => {
            let mut ids = HashSet::new();
            for (i, n) in net.nodes.iter().enumerate() {
                if !ids.insert(n.id.as_str()) {
                    push(format!("chart.data.nodes[{i}].id"), format!("duplicate node id {}", n.id));
                }
                if !(n.radius.is_finite() && n.radius > 0.0) {
                    push(format!("chart.data.nodes[{i}].radius"), format!("radius must be positive at index {i}"));
                }
                if let Some((x, y)) = n.position {
                    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                        push(format!("chart.data.nodes[{i}].position"), "position must lie in [0,1]^2".into());
                    }
                }
            }
            let mut seen = HashSet::new();
            for (i, e) in net.edges.iter().enumerate() {
                for end in [&e.source, &e.target] {
                    if !ids.contains(end.as_str()) {
                        push(format!("chart.data.edges[{i}]"), format!("unknown node id {end}"));
                    }
                }
                if e.source == e.target {
                    push(format!("chart.data.edges[{i}]"), format!("self-loop on node {}", e.source));
                }
                let key = if e.source <= e.target {
                    (e.source.as_str(), e.target.as_str())
                } else {
                    (e.target.as_str(), e.source.as_str())
                };
                if !seen.insert(key) {
                    push(format!("chart.data.edges[{i}]"), format!("duplicate edge {}-{}", e.source, e.target));
                }
                if !(e.width.is_finite() && e.width > 0.0) {
                    push(format!("chart.data.edges[{i}].width"), "stroke width must be positive".into());
                }
            }
        }
    }

    if v.is_empty() {
        Ok(spec)
    } else {
        Err(ValidationError { violations: v })
    }
}
