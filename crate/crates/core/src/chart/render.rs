use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::layout::layout_network;
use super::spec::{ChartData, ChartKind, ChartSpec, Datum, Network, Series};
use crate::imaging::{Mask, PixelFormat, RasterImage, Rect, Rgb};

/// Blank border around the drawable area, in pixels.
pub const MARGIN: u32 = 32;
/// Fraction of a bar slot filled by the bar.
pub const BAR_FILL: f64 = 0.7;
/// Marks smaller than a 4x4 block cannot be stylized meaningfully.
pub const MIN_MARK_PIXELS: usize = 16;
pub const PLAIN_BACKGROUND: Rgb = Rgb::WHITE;

/// Mark-kind specific geometry, in canvas pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarkParams {
    Bar { rect: Rect },
    /// Angles in radians, clockwise from twelve o'clock.
    PieSlice { start_angle: f64, end_angle: f64, center: (f64, f64), radius: f64 },
    AreaBand { upper: Vec<(f64, f64)>, lower: Vec<(f64, f64)> },
    Node { center: (f64, f64), radius: f64 },
    Edge { path: Vec<(f64, f64)>, width: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkGeometry {
    pub mark_id: usize,
    pub mask: Mask,
    pub bbox: Rect,
    /// Top-left placement reference (the bbox origin).
    pub anchor: (u32, u32),
    pub color: Rgb,
    pub params: MarkParams,
}

impl MarkGeometry {
    /// Network edges are drawn from the plain edge layer, never stylized.
    pub fn is_stylizable(&self) -> bool {
        !matches!(self.params, MarkParams::Edge { .. })
    }
}

#[derive(Clone, Debug)]
pub struct PlainVisualization {
    pub kind: ChartKind,
    pub image: RasterImage,
    pub marks: Vec<MarkGeometry>,
    pub background_mask: Mask,
    /// Visible edge strokes over transparency; present iff the chart is a network.
    pub edge_layer: Option<RasterImage>,
}

impl PlainVisualization {
    pub fn canvas(&self) -> (u32, u32) {
        self.image.dims()
    }

    pub fn mark(&self, id: usize) -> Option<&MarkGeometry> {
        self.marks.iter().find(|m| m.mark_id == id)
    }

    pub fn stylizable_marks(&self) -> impl Iterator<Item = &MarkGeometry> {
        self.marks.iter().filter(|m| m.is_stylizable())
    }

    pub fn edge_mask(&self) -> Option<Mask> {
        self.edge_layer.as_ref().map(RasterImage::opaque_mask)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("mark {mark_id} degenerates at canvas resolution: {reason}")]
    Degenerate { mark_id: usize, reason: String },
}

/// Exact complement of the union of mark masks.
pub fn background_mask(plain: &PlainVisualization) -> Mask {
    let (w, h) = plain.canvas();
    plain.marks.iter().fold(Mask::new(w, h), |acc, m| acc.union(&m.mask)).complement()
}

/// Flat-color rendering with exact per-mark masks. Masks are made disjoint
/// by giving contested pixels to the lowest mark id.
pub fn render_plain(spec: &ChartSpec) -> Result<PlainVisualization, RenderError> {
    let (w, h) = (spec.canvas.width, spec.canvas.height);
    let shapes: Vec<(Mask, Rgb, MarkParams)> = match &spec.data {
        ChartData::Bar(data) => bar_shapes(w, h, data),
        ChartData::Pie(data) => pie_shapes(w, h, data),
        ChartData::Area(series) => area_shapes(w, h, series),
        ChartData::Network(_) => {
            let laid = layout_network(spec, 0);
            let ChartData::Network(net) = &laid.data else { unreachable!() };
            network_shapes(w, h, net)
        }
    };

    let mut claimed = Mask::new(w, h);
    let mut marks = Vec::with_capacity(shapes.len());
    for (mark_id, (shape, color, params)) in shapes.into_iter().enumerate() {
        let mask = shape.subtract(&claimed);
        let Some(bbox) = mask.bbox() else {
            return Err(RenderError::Degenerate { mark_id, reason: "no pixels".into() });
        };
        if mask.count() < MIN_MARK_PIXELS {
            return Err(RenderError::Degenerate {
                mark_id,
                reason: format!("{} pixels, below the {MIN_MARK_PIXELS}-pixel minimum", mask.count()),
            });
        }
        claimed = claimed.union(&mask);
        marks.push(MarkGeometry { mark_id, mask, bbox, anchor: (bbox.x, bbox.y), color, params });
    }

    let mut image = RasterImage::filled(w, h, PLAIN_BACKGROUND);
    for m in &marks {
        for (x, y) in m.mask.iter_set() {
            image.set_rgb(x, y, m.color);
        }
    }
    let edge_layer = match &spec.data {
        ChartData::Network(net) => {
            let mut layer = RasterImage::new(w, h, PixelFormat::Rgba);
            for m in marks.iter().filter(|m| !m.is_stylizable()) {
                for (x, y) in m.mask.iter_set() {
                    layer.set_rgb(x, y, net.edge_color);
                }
            }
            Some(layer)
        }
        _ => None,
    };
    let mut plain = PlainVisualization {
        kind: spec.kind(),
        image,
        marks,
        background_mask: Mask::new(w, h),
        edge_layer,
    };
    plain.background_mask = background_mask(&plain);
    Ok(plain)
}

fn drawable(w: u32, h: u32, margin: u32) -> (f64, f64, f64, f64) {
    let m = margin as f64;
    (m, m, w as f64 - 2.0 * m, h as f64 - 2.0 * m)
}

/// Pixel height of a bar: value scaled linearly against the largest value.
pub fn bar_pixel_height(value: f64, max: f64, drawable_height: u32) -> u32 {
    if max <= 0.0 {
        return 0;
    }
    (value / max * drawable_height as f64).round() as u32
}

fn bar_shapes(w: u32, h: u32, data: &[Datum]) -> Vec<(Mask, Rgb, MarkParams)> {
    let (x0, _, dw, _) = drawable(w, h, MARGIN);
    let dh = h - 2 * MARGIN;
    let max = data.iter().map(|d| d.value).fold(0.0, f64::max);
    let slot = dw / data.len() as f64;
    let bar_w = (slot * BAR_FILL).round().max(1.0) as u32;
    data.iter()
        .enumerate()
        .map(|(i, d)| {
            let bh = bar_pixel_height(d.value, max, dh);
            let x = (x0 + i as f64 * slot + (slot - bar_w as f64) / 2.0).round() as u32;
            let rect = Rect::new(x, h - MARGIN - bh, bar_w, bh);
            (Mask::from_rect(w, h, rect), d.color, MarkParams::Bar { rect })
        })
        .collect()
}

/// Cumulative slice boundaries in radians; the last is exactly 2*pi.
pub fn pie_angles(values: &[f64]) -> Vec<(f64, f64)> {
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    let n = values.len();
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let start = TAU * acc / total;
            acc += v;
            let end = if i + 1 == n { TAU } else { TAU * acc / total };
            (start, end)
        })
        .collect()
}

/// Clockwise angle from twelve o'clock of the pixel centre, in [0, 2*pi).
pub fn pixel_angle(x: u32, y: u32, center: (f64, f64)) -> f64 {
    let dx = x as f64 + 0.5 - center.0;
    let dy = y as f64 + 0.5 - center.1;
    let a = dx.atan2(-dy);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

pub fn pie_center_radius(w: u32, h: u32) -> ((f64, f64), f64) {
    ((w as f64 / 2.0, h as f64 / 2.0), w.min(h) as f64 / 2.0 - MARGIN as f64)
}

fn pie_shapes(w: u32, h: u32, data: &[Datum]) -> Vec<(Mask, Rgb, MarkParams)> {
    let (center, radius) = pie_center_radius(w, h);
    let values: Vec<f64> = data.iter().map(|d| d.value).collect();
    let angles = pie_angles(&values);
    let mut masks = vec![Mask::new(w, h); data.len()];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - center.0, y as f64 + 0.5 - center.1);
            if dx * dx + dy * dy > radius * radius {
                continue;
            }
            let a = pixel_angle(x, y, center);
            // shared boundaries go to the lower id
            if let Some(k) = angles.iter().position(|&(_, end)| a <= end) {
                masks[k].set(x, y, true);
            }
        }
    }
    masks
        .into_iter()
        .zip(data)
        .zip(angles)
        .map(|((mask, d), (start_angle, end_angle))| {
            (mask, d.color, MarkParams::PieSlice { start_angle, end_angle, center, radius })
        })
        .collect()
}

/// Piecewise-linear value of a series at `x`; zero outside its x-range.
pub fn series_value(series: &Series, x: f64) -> f64 {
    let pts = &series.points;
    if pts.is_empty() || x < pts[0].0 || x > pts[pts.len() - 1].0 {
        return 0.0;
    }
    for win in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (win[0], win[1]);
        if x <= x1 {
            let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
            return y0 + t * (y1 - y0);
        }
    }
    pts[pts.len() - 1].1
}

fn area_shapes(w: u32, h: u32, series: &[Series]) -> Vec<(Mask, Rgb, MarkParams)> {
    let (x0, _, dw, dh) = drawable(w, h, MARGIN);
    let mut breaks: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (xmin, xmax) = (breaks[0], breaks[breaks.len() - 1]);
    let stacked = |x: f64| -> Vec<f64> {
        let mut acc = vec![0.0];
        for s in series {
            let last = *acc.last().unwrap();
            acc.push(last + series_value(s, x));
        }
        acc
    };
    let ymax = breaks.iter().map(|&x| *stacked(x).last().unwrap()).fold(0.0, f64::max);
    let span = (xmax - xmin).max(f64::MIN_POSITIVE);
    let to_px_x = |x: f64| x0 + (x - xmin) / span * dw;
    let to_px_y = |v: f64| h as f64 - MARGIN as f64 - if ymax > 0.0 { v / ymax * dh } else { 0.0 };

    let mut masks = vec![Mask::new(w, h); series.len()];
    if ymax > 0.0 {
        for px in MARGIN..w - MARGIN {
            let x = xmin + ((px as f64 + 0.5) - x0) / dw * span;
            let levels = stacked(x);
            for py in MARGIN..h - MARGIN {
                let v = (h as f64 - MARGIN as f64 - (py as f64 + 0.5)) / dh * ymax;
                if v <= 0.0 {
                    continue;
                }
                if let Some(k) = (0..series.len()).find(|&k| v > levels[k] && v <= levels[k + 1]) {
                    masks[k].set(px, py, true);
                }
            }
        }
    }
    masks
        .into_iter()
        .enumerate()
        .map(|(k, mask)| {
            let upper = breaks.iter().map(|&x| (to_px_x(x), to_px_y(stacked(x)[k + 1]))).collect();
            let lower = breaks.iter().map(|&x| (to_px_x(x), to_px_y(stacked(x)[k]))).collect();
            (mask, series[k].color, MarkParams::AreaBand { upper, lower })
        })
        .collect()
}

/// Canvas-pixel centre of a normalized node position.
pub fn node_center(w: u32, h: u32, margin: f64, pos: (f64, f64)) -> (f64, f64) {
    (margin + pos.0 * (w as f64 - 2.0 * margin), margin + pos.1 * (h as f64 - 2.0 * margin))
}

pub fn network_margin(net: &Network) -> f64 {
    let max_r = net.nodes.iter().map(|n| n.radius).fold(0.0, f64::max);
    (MARGIN as f64).max(max_r.ceil() + 2.0)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn network_shapes(w: u32, h: u32, net: &Network) -> Vec<(Mask, Rgb, MarkParams)> {
    let margin = network_margin(net);
    let centers: Vec<(f64, f64)> =
        net.nodes.iter().map(|n| node_center(w, h, margin, n.position.unwrap_or((0.5, 0.5)))).collect();
    let mut shapes = Vec::with_capacity(net.nodes.len() + net.edges.len());
    for (node, &c) in net.nodes.iter().zip(&centers) {
        let r = node.radius;
        let mask = Mask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - c.0, y as f64 + 0.5 - c.1);
            dx * dx + dy * dy <= r * r
        });
        shapes.push((mask, node.color, MarkParams::Node { center: c, radius: r }));
    }
    let index = |id: &str| net.nodes.iter().position(|n| n.id == id).expect("validated edge endpoint");
    for e in &net.edges {
        let (a, b) = (centers[index(&e.source)], centers[index(&e.target)]);
        let half = e.width / 2.0;
        let (lo_x, hi_x) = ((a.0.min(b.0) - half).floor().max(0.0) as u32, (a.0.max(b.0) + half).ceil().min(w as f64) as u32);
        let (lo_y, hi_y) = ((a.1.min(b.1) - half).floor().max(0.0) as u32, (a.1.max(b.1) + half).ceil().min(h as f64) as u32);
        let mut mask = Mask::new(w, h);
        for y in lo_y..hi_y {
            for x in lo_x..hi_x {
                if segment_distance((x as f64 + 0.5, y as f64 + 0.5), a, b) <= half {
                    mask.set(x, y, true);
                }
            }
        }
        shapes.push((mask, net.edge_color, MarkParams::Edge { path: vec![a, b], width: e.width }));
    }
    shapes
}
