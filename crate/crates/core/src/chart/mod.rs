//! Chart specifications, plain rendering, and exact per-mark geometry.

mod layout;
mod render;
mod spec;

pub use layout::layout_network;
pub use render::{
    background_mask, bar_pixel_height, network_margin, node_center, pie_angles, pie_center_radius, pixel_angle,
    render_plain, series_value, MarkGeometry, MarkParams, PlainVisualization, RenderError, BAR_FILL, MARGIN,
    MIN_MARK_PIXELS, PLAIN_BACKGROUND,
};
pub use spec::{
    palette_color, validate_spec, validate_spec_for, Canvas, ChartData, ChartKind, ChartSpec, Datum, Edge, Network,
    Node, Series, ValidationError, Violation, DEFAULT_CANVAS, DEFAULT_LATENT_FACTOR, PALETTE,
};
