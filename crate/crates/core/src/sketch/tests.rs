use proptest::prelude::*;

use super::*;
use crate::backend::MockBackend;
use crate::chart::{render_plain, ChartData, ChartSpec, Edge, MarkParams, Network, Node, DEFAULT_CANVAS};
use crate::imaging::{gaussian_blur_plane, Rect};

fn mock_image(prompt: &str, seed: u64, canvas: (u32, u32)) -> RasterImage {
    // Direct evaluation of the mock law: nearest upsample of the target.
    let z = MockBackend::target_latent(prompt, seed, canvas.1 / 8, canvas.0 / 8);
    let mut img = RasterImage::filled(canvas.0, canvas.1, Rgb::WHITE);
    for y in 0..canvas.1 {
        for x in 0..canvas.0 {
            let px = [0, 1, 2].map(|c| (z.get(c, y / 8, x / 8).clamp(0.0, 1.0) * 255.0).round() as u8);
            img.set_pixel(x, y, &px);
        }
    }
    img
}

fn group(index: usize, prompt: &str, ids: Vec<usize>, method: PregenMethod, transform: MarkTransform) -> MarkGroup {
    MarkGroup { index, prompt: prompt.into(), mark_ids: ids, method, transform }
}

fn network(n: usize) -> ChartSpec {
    let nodes = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            Node {
                id: format!("n{i}"),
                radius: 18.0,
                color: Rgb([200, 60, 60]),
                position: Some((0.5 + 0.4 * t.cos(), 0.5 + 0.4 * t.sin())),
            }
        })
        .collect();
    let edges = (0..n).map(|i| Edge { source: format!("n{i}"), target: format!("n{}", (i + 1) % n), width: 4.0 }).collect();
    ChartSpec { canvas: DEFAULT_CANVAS, data: ChartData::Network(Network { nodes, edges, edge_color: Rgb::BLACK }) }
}

#[test]
fn grid_group_patches_follow_the_mock_target() {
    let plain = render_plain(&ChartSpec::bar(&[3.0, 1.0, 2.0])).unwrap();
    let params = SketchParams { seed: 5, ..Default::default() };
    let g = group(0, "fries", vec![0, 1, 2], PregenMethod::GridImg2img, MarkTransform::Elongate);
    let out = pregenerate_mark_group(&plain, &g, &MockBackend::new(), &params).unwrap();
    let expected = mock_image("fries", 5, (512, 512));
    assert_eq!(out.generated, expected);
    let marks: Vec<_> = plain.marks.iter().collect();
    let (_, layout) = build_grid(&marks, (512, 512), params.grid).unwrap();
    for p in &layout.placements {
        let obj = &out.objects[&p.mark_id];
        let cell = Rect::new(p.col * layout.cell.0, p.row * layout.cell.1, layout.cell.0, layout.cell.1);
        for (x, y) in obj.opaque_mask().iter_set() {
            assert_eq!(obj.rgb(x, y), expected.rgb(cell.x + x, cell.y + y));
        }
        assert_eq!(obj.opaque_mask().count(), p.shape.count());
    }
}

#[test]
fn direct_pie_objects_match_slice_areas() {
    let plain = render_plain(&ChartSpec::pie(&[1.0, 2.0, 3.0, 4.0])).unwrap();
    let g = group(0, "apple pie", vec![0, 1, 2, 3], PregenMethod::DirectDepth2img, MarkTransform::Rescale);
    let out = pregenerate_mark_group(&plain, &g, &MockBackend::new(), &SketchParams::default()).unwrap();
    for m in &plain.marks {
        let obj = &out.objects[&m.mark_id];
        assert_eq!(obj.opaque_mask().count(), m.mask.count());
        let patch = object_to_mark(obj, m, MarkTransform::Rescale).unwrap();
        assert_eq!(patch.opaque_mask().count(), m.mask.count());
    }
}

#[test]
fn groups_with_different_prompts_differ() {
    let plain = render_plain(&ChartSpec::bar(&[1.0, 1.0])).unwrap();
    let backend = MockBackend::new();
    let params = SketchParams::default();
    let a = pregenerate_mark_group(&plain, &group(0, "fries", vec![0], PregenMethod::GridImg2img, MarkTransform::Elongate), &backend, &params).unwrap();
    let b = pregenerate_mark_group(&plain, &group(1, "cupcakes", vec![1], PregenMethod::GridImg2img, MarkTransform::Elongate), &backend, &params).unwrap();
    assert_ne!(a.generated, b.generated);
}

#[test]
fn node_rescale_spans_the_diameter() {
    let plain = render_plain(&network(5)).unwrap();
    let obj = RasterImage::filled(40, 30, Rgb([10, 200, 10]));
    for m in plain.stylizable_marks() {
        let MarkParams::Node { radius, .. } = m.params else { unreachable!() };
        let patch = object_to_mark(&obj, m, MarkTransform::Rescale).unwrap();
        let b = patch.opaque_bbox().unwrap();
        assert!((b.w as f64 - 2.0 * radius).abs() <= 1.0, "width {} radius {radius}", b.w);
        assert!((b.h as f64 - 2.0 * radius).abs() <= 1.0);
    }
}

#[test]
fn bar_elongation_fills_the_bar() {
    let plain = render_plain(&ChartSpec::bar(&[8.0, 2.0])).unwrap();
    let mut obj = RasterImage::filled(60, 90, Rgb([250, 200, 10]));
    for x in 0..60 {
        obj.set_rgb(x, 0, Rgb::BLACK);
    }
    let m = &plain.marks[0];
    let patch = object_to_mark(&obj, m, MarkTransform::Elongate).unwrap();
    assert_eq!(patch.dims(), (m.bbox.w, m.bbox.h));
    assert_eq!(patch.opaque_bbox(), Some(Rect::new(0, 0, m.bbox.w, m.bbox.h)));
    // head row survives elongation
    assert_eq!(patch.rgb(m.bbox.w / 2, 0), Rgb::BLACK);
}

#[test]
fn stack_fills_the_bar() {
    let plain = render_plain(&ChartSpec::bar(&[8.0])).unwrap();
    let obj = RasterImage::filled(30, 20, Rgb([120, 60, 20]));
    let m = &plain.marks[0];
    let patch = object_to_mark(&obj, m, MarkTransform::Stack).unwrap();
    assert_eq!(patch.opaque_mask().count(), m.mask.count());
}

#[test]
fn freeform_cutout_equals_slice_mask() {
    let plain = render_plain(&ChartSpec::pie(&[2.0, 5.0, 3.0])).unwrap();
    let g = group(0, "apple pie", vec![0, 1, 2], PregenMethod::FreeformTxt2img, MarkTransform::Cutout);
    let out = pregenerate_mark_group(&plain, &g, &MockBackend::new(), &SketchParams::default()).unwrap();
    for m in &plain.marks {
        let patch = object_to_mark(&out.objects[&m.mark_id], m, MarkTransform::Cutout).unwrap();
        assert_eq!(patch.opaque_mask(), m.mask.crop(m.bbox));
    }
}

#[test]
fn tile_fill_covers_the_area_band() {
    let spec = ChartSpec {
        canvas: DEFAULT_CANVAS,
        data: ChartData::Area(vec![crate::chart::Series {
            label: "a".into(),
            points: vec![(0.0, 2.0), (1.0, 5.0), (2.0, 3.0)],
            color: Rgb([40, 90, 200]),
        }]),
    };
    let plain = render_plain(&spec).unwrap();
    let obj = RasterImage::filled(25, 25, Rgb([1, 2, 3]));
    let m = &plain.marks[0];
    let patch = object_to_mark(&obj, m, MarkTransform::TileFill).unwrap();
    assert_eq!(patch.opaque_mask(), m.mask.crop(m.bbox));
}

#[test]
fn background_without_prompt_is_a_gradient() {
    let params = SketchParams::default();
    let bg = pregenerate_background(None, (64, 64), &MockBackend::new(), &params).unwrap();
    assert_eq!(bg.rgb(10, 0), Rgb::WHITE);
    assert_eq!(bg.rgb(10, 63), params.background_colors.1);
    assert!(bg.rgb(0, 20) == bg.rgb(63, 20));
}

#[test]
fn background_with_prompt_is_blurred_and_brightened_target() {
    let params = SketchParams { seed: 3, ..Default::default() };
    let bg = pregenerate_background(Some("a library"), (64, 64), &MockBackend::new(), &params).unwrap();
    // Oracle: blur each plane with the shared kernel, then scale and clamp.
    let src = mock_image("a library", 3, (64, 64));
    let planes = src.rgb_planes().map(|p| gaussian_blur_plane(&p, 64, 64, 6.0));
    for (x, y) in [(0, 0), (31, 17), (63, 63), (5, 50)] {
        let i = (y * 64 + x) as usize;
        for c in 0..3 {
            let want = (planes[c][i] * 1.25).clamp(0.0, 1.0) * 255.0;
            assert!((bg.pixel(x, y)[c] as f32 - want).abs() <= 0.5 + 1e-3);
        }
    }
}

#[test]
fn assemble_without_marks_keeps_background() {
    let mut plain = render_plain(&ChartSpec::bar(&[1.0])).unwrap();
    plain.marks.clear();
    let bg = gradient_background(512, 512, Rgb::WHITE, Rgb::BLACK, Axis::Vertical);
    let sketch = assemble(&bg, &BTreeMap::new(), &plain).unwrap();
    assert_eq!(sketch.image, bg);
    assert!(sketch.masks.is_empty());
}

#[test]
fn assemble_places_bars_inside_their_bbox_and_reports_missing() {
    let plain = render_plain(&ChartSpec::bar(&[3.0, 1.0, 2.0])).unwrap();
    let patches: BTreeMap<_, _> = plain
        .marks
        .iter()
        .map(|m| (m.mark_id, object_to_mark(&RasterImage::filled(20, 20, Rgb([9, 9, 9])), m, MarkTransform::Rescale).unwrap()))
        .collect();
    let bg = RasterImage::filled(512, 512, Rgb::WHITE);
    let sketch = assemble(&bg, &patches, &plain).unwrap();
    for m in &plain.marks {
        let mask = &sketch.masks[&m.mark_id];
        for (x, y) in mask.iter_set() {
            assert!(m.bbox.contains(x, y));
            assert_eq!(sketch.image.rgb(x, y), Rgb([9, 9, 9]));
        }
    }
    let mut partial = patches.clone();
    partial.remove(&1);
    assert!(matches!(assemble(&bg, &partial, &plain), Err(SketchError::MissingPatch(1))));
}

#[test]
fn network_edges_show_between_nodes() {
    let spec = network(4);
    let plain = render_plain(&spec).unwrap();
    let patches: BTreeMap<_, _> = plain
        .stylizable_marks()
        .map(|m| (m.mark_id, object_to_mark(&RasterImage::filled(8, 8, Rgb([0, 200, 0])), m, MarkTransform::Rescale).unwrap()))
        .collect();
    let bg = RasterImage::filled(512, 512, Rgb::WHITE);
    let sketch = assemble(&bg, &patches, &plain).unwrap();
    for m in plain.marks.iter().filter(|m| !m.is_stylizable()) {
        let MarkParams::Edge { path, .. } = &m.params else { unreachable!() };
        let (a, b) = (path[0], path[path.len() - 1]);
        let mid = (((a.0 + b.0) / 2.0) as u32, ((a.1 + b.1) / 2.0) as u32);
        assert_eq!(sketch.image.rgb(mid.0, mid.1), Rgb::BLACK);
    }
}

#[test]
fn run_sketch_is_deterministic() {
    let plain = render_plain(&ChartSpec::bar(&[3.0, 1.0, 2.0])).unwrap();
    let groups = vec![
        group(0, "fries", vec![0], PregenMethod::GridImg2img, MarkTransform::Elongate),
        group(1, "hamburgers", vec![1, 2], PregenMethod::GridImg2img, MarkTransform::Stack),
    ];
    let backend = MockBackend::new();
    let params = SketchParams::default();
    let a = run_sketch(&plain, &groups, Some("a diner"), &backend, &params).unwrap();
    let b = run_sketch(&plain, &groups, Some("a diner"), &backend, &params).unwrap();
    assert_eq!(a.sketch.image, b.sketch.image);
    assert_eq!(a.sketch.masks, b.sketch.masks);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn patches_stay_within_dilated_marks(
        values in prop::collection::vec(0.5f64..10.0, 1..6),
        transform in prop::sample::select(vec![MarkTransform::Rescale, MarkTransform::Elongate, MarkTransform::Stack, MarkTransform::TileFill]),
        ow in 8u32..60,
        oh in 8u32..60,
    ) {
        let plain = render_plain(&ChartSpec::bar(&values)).unwrap();
        let obj = RasterImage::filled(ow, oh, Rgb([90, 40, 160]));
        let patches: BTreeMap<_, _> = plain
            .marks
            .iter()
            .map(|m| (m.mark_id, object_to_mark(&obj, m, transform).unwrap()))
            .collect();
        let sketch = assemble(&RasterImage::filled(512, 512, Rgb::WHITE), &patches, &plain).unwrap();
        for m in &plain.marks {
            prop_assert!(sketch.masks[&m.mark_id].is_subset_of(&m.mask.dilate(2)));
        }
    }
}
