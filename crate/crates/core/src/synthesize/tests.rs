use proptest::prelude::*;

use super::*;
use crate::backend::{stepwise_trace, Capability, LatentTensor, MockBackend, StepwiseParams, TracedBackend};
use crate::chart::{render_plain, ChartData, ChartKind, ChartSpec, Edge, Network, Node, DEFAULT_CANVAS};
use crate::imaging::{Rect, Rgb};
use crate::sketch::PregenMethod;
use crate::workflow::select_recipe;

fn schedule(strength: f32, beta: f32, steps: u32, groups: usize) -> DmpSchedule {
    DmpSchedule::new(strength, beta, steps, groups).unwrap()
}

fn bar_groups(values: &[f64], prompts: &[&str]) -> (PlainVisualization, Vec<DmpGroup>) {
    let plain = render_plain(&ChartSpec::bar(values)).unwrap();
    let groups = prompts
        .iter()
        .enumerate()
        .map(|(g, p)| {
            let ids: Vec<usize> = plain.marks.iter().map(|m| m.mark_id).filter(|id| id % prompts.len() == g).collect();
            let mut mask = Mask::new(512, 512);
            for id in &ids {
                mask = mask.union(&plain.mark(*id).unwrap().mask);
            }
            DmpGroup { prompt: p.to_string(), sketch_mask: mask.dilate(6), plain_mask: mask }
        })
        .collect();
    (plain, groups)
}

fn params(strength: f32, beta: f32, steps: u32) -> DmpParams {
    DmpParams { strength, beta, steps, guidance: 20.0, negative_prompt: String::new(), seed: 11 }
}

#[test]
fn switch_step_examples() {
    assert_eq!(schedule(0.8, 0.5, 50, 2).switch, 20);
    assert_eq!(schedule(0.8, 0.5, 50, 2).total, 40);
    assert_eq!(schedule(0.7, 0.5, 40, 2).switch, 14);
    assert_eq!(schedule(0.8, 0.0, 50, 2).switch, 0);
    assert_eq!(schedule(0.8, 1.0, 50, 2).switch, 40);
}

#[test]
fn mask_set_follows_switch() {
    let s = schedule(0.8, 0.5, 50, 3);
    assert_eq!(dmp_mask_set(1, &s), MaskSetKind::Sketch);
    assert_eq!(dmp_mask_set(20, &s), MaskSetKind::Sketch);
    assert_eq!(dmp_mask_set(21, &s), MaskSetKind::Plain);
    let s0 = schedule(0.8, 0.0, 50, 3);
    assert!((1..=s0.total).all(|i| dmp_mask_set(i, &s0) == MaskSetKind::Plain));
    let s1 = schedule(0.8, 1.0, 50, 3);
    assert!((1..=s1.total).all(|i| dmp_mask_set(i, &s1) == MaskSetKind::Sketch));
}

#[test]
fn background_rotates_after_switch() {
    let s = schedule(0.8, 0.5, 50, 3);
    assert_eq!(dmp_background_source(20, &s), BackgroundSource::Sketch);
    let rotation: Vec<_> = (21..=24).map(|i| dmp_background_source(i, &s)).collect();
    assert_eq!(
        rotation,
        vec![BackgroundSource::Group(0), BackgroundSource::Group(1), BackgroundSource::Group(2), BackgroundSource::Group(0)]
    );
}

#[test]
fn background_noise_level_decays_to_zero() {
    let s = schedule(0.8, 0.5, 50, 2);
    assert!((s.background_noise_level(0) - 0.8).abs() < 1e-6);
    assert!((s.background_noise_level(20) - 0.4).abs() < 1e-6);
    assert_eq!(s.background_noise_level(40), 0.0);
}

#[test]
fn schedule_rejects_out_of_range() {
    assert!(DmpSchedule::new(1.2, 0.5, 50, 1).is_err());
    assert!(DmpSchedule::new(0.8, -0.1, 50, 1).is_err());
    assert!(DmpSchedule::new(0.8, 0.5, 50, 0).is_err());
}

#[test]
fn single_group_matches_plain_stepwise_run() {
    let (_, groups) = bar_groups(&[3.0, 1.0, 2.0], &["golden fries"]);
    let sketch = RasterImage::filled(512, 512, Rgb([120, 90, 40]));
    let backend = MockBackend::new();
    let p = params(0.8, 0.5, 50);
    let out = dmp(&sketch, &groups, &p, &backend).unwrap();

    let start = backend.encode(&sketch).unwrap();
    let depth = backend.depth_map(&sketch).unwrap();
    let sp = StepwiseParams {
        prompt: "golden fries",
        negative_prompt: "",
        strength: 0.8,
        steps: 50,
        guidance: 20.0,
        condition: Some(&depth),
        seed: 11,
    };
    let reference = stepwise_trace(&backend, &start, &sp).unwrap();
    assert_eq!(out.latents.len(), reference.len());
    for (a, b) in out.latents.iter().zip(&reference) {
        assert!(a.max_abs_diff(b) <= 1e-6);
    }
}

#[test]
fn each_group_converges_to_its_target_inside_its_plain_mask() {
    let prompts = ["fries", "ketchup", "mustard"];
    let (_, groups) = bar_groups(&[3.0, 1.0, 2.0, 4.0, 2.5, 1.5], &prompts);
    let sketch = RasterImage::filled(512, 512, Rgb::WHITE);
    let backend = MockBackend::new();
    let out = dmp(&sketch, &groups, &params(0.8, 0.5, 50), &backend).unwrap();
    let last = out.latents.last().unwrap();
    let masks = MaskSetPair::build(&groups, 8).unwrap();
    for (g, prompt) in prompts.iter().enumerate() {
        let target = MockBackend::target_latent(prompt, 11, 64, 64);
        assert!(!masks.plain[g].is_empty());
        for (x, y) in masks.plain[g].iter_set() {
            for c in 0..4 {
                assert!((last.get(c, y, x) - target.get(c, y, x)).abs() <= 1e-6);
            }
        }
    }
    assert_eq!(out.steps.len(), 40);
    assert_eq!(out.steps[19].mask_set, MaskSetKind::Sketch);
    assert_eq!(out.steps[20].mask_set, MaskSetKind::Plain);
}

#[test]
fn zero_strength_round_trips_the_sketch() {
    let (_, groups) = bar_groups(&[3.0, 1.0], &["a", "b"]);
    let mut sketch = RasterImage::filled(512, 512, Rgb([10, 200, 30]));
    sketch.set_rgb(5, 5, Rgb([250, 0, 0]));
    let backend = MockBackend::new();
    let out = dmp(&sketch, &groups, &params(0.0, 0.5, 50), &backend).unwrap();
    let expected = backend.decode(&backend.encode(&sketch).unwrap()).unwrap();
    assert_eq!(out.image, expected);
    assert!(out.steps.is_empty());
}

#[test]
fn dmp_requires_stepwise_capability() {
    let (_, groups) = bar_groups(&[3.0, 1.0], &["a", "b"]);
    let sketch = RasterImage::filled(512, 512, Rgb::WHITE);
    let backend = MockBackend::with_capabilities([Capability::Img2img]);
    let err = dmp(&sketch, &groups, &params(0.8, 0.5, 50), &backend).unwrap_err();
    assert!(matches!(err, SynthError::Backend(BackendError::UnsupportedPipeline(_))));
}

#[test]
fn single_group_owns_the_grid() {
    let (_, groups) = bar_groups(&[3.0], &["a"]);
    let pair = MaskSetPair::build(&groups, 8).unwrap();
    assert_eq!(pair.plain[0].count(), 64 * 64);
    assert!(pair.plain_background.is_empty());
}

#[test]
fn combine_prefers_lower_group_and_fills_background() {
    let mut m0 = Mask::new(2, 1);
    m0.set(0, 0, true);
    let bg = m0.complement();
    let a = LatentTensor::from_vec(1, 1, 2, vec![1.0, 1.0]).unwrap();
    let b = LatentTensor::from_vec(1, 1, 2, vec![5.0, 5.0]).unwrap();
    let out = combine_latents(&[m0], &[a], &bg, Some(&b));
    assert_eq!(out.data(), &[1.0, 5.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn masks_partition_the_latent_grid(rects in prop::collection::vec((0u32..480, 0u32..480, 8u32..120, 8u32..120), 2..5)) {
        let groups: Vec<DmpGroup> = rects
            .iter()
            .map(|&(x, y, w, h)| {
                let m = Mask::from_rect(512, 512, Rect::new(x, y, w.min(512 - x), h.min(512 - y)));
                DmpGroup { prompt: String::new(), sketch_mask: m.dilate(3), plain_mask: m }
            })
            .collect();
        let pair = MaskSetPair::build(&groups, 8).unwrap();
        for (set, bg) in [(&pair.sketch, &pair.sketch_background), (&pair.plain, &pair.plain_background)] {
            let union = set.iter().fold(bg.clone(), |acc, m| acc.union(m));
            prop_assert_eq!(union.count(), 64 * 64);
            let total: usize = set.iter().map(|m| m.count()).sum::<usize>() + bg.count();
            prop_assert_eq!(total, 64 * 64);
        }
    }

    #[test]
    fn switch_never_exceeds_total(strength in 0.0f32..=1.0, beta in 0.0f32..=1.0, steps in 1u32..200) {
        let s = DmpSchedule::new(strength, beta, steps, 2).unwrap();
        prop_assert!(s.switch <= s.total);
    }
}

fn ring_network() -> ChartSpec {
    let nodes = (0..4)
        .map(|i| {
            let t = i as f64 / 4.0 * std::f64::consts::TAU;
            Node {
                id: format!("n{i}"),
                radius: 30.0,
                color: Rgb([40, 120, 200]),
                position: Some((0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin())),
            }
        })
        .collect();
    let edges = (0..4).map(|i| Edge { source: format!("n{i}"), target: format!("n{}", (i + 1) % 4), width: 5.0 }).collect();
    ChartSpec { canvas: DEFAULT_CANVAS, data: ChartData::Network(Network { nodes, edges, edge_color: Rgb::BLACK }) }
}

#[test]
fn overlay_edges_restores_erased_strokes() {
    let plain = render_plain(&ring_network()).unwrap();
    assert_eq!(overlay_edges(&plain.image, &plain).unwrap(), plain.image.to_rgb());
    let edges = plain.edge_mask().unwrap();
    let mut erased = plain.image.to_rgb();
    for (x, y) in edges.iter_set() {
        erased.set_rgb(x, y, Rgb::WHITE);
    }
    let restored = overlay_edges(&erased, &plain).unwrap();
    for (x, y) in edges.iter_set() {
        assert_eq!(restored.rgb(x, y), Rgb::BLACK);
    }
    let (w, h) = plain.canvas();
    let off = edges.complement();
    for (x, y) in off.iter_set().filter(|&(x, y)| x < w && y < h) {
        assert_eq!(restored.rgb(x, y), erased.rgb(x, y));
    }
}

#[test]
fn overlay_edges_rejects_non_network() {
    let plain = render_plain(&ChartSpec::bar(&[1.0, 2.0])).unwrap();
    assert!(matches!(overlay_edges(&plain.image, &plain), Err(SynthError::NotANetwork)));
}

fn ops(traced: &TracedBackend<MockBackend>) -> Vec<String> {
    traced
        .records()
        .iter()
        .filter(|r| r.op == "run_image_pipeline")
        .map(|r| r.pipeline.clone().unwrap_or_default())
        .collect()
}

#[test]
fn network_dispatch_smooths_then_depth2img() {
    let plain = render_plain(&ring_network()).unwrap();
    let recipe = select_recipe(ChartKind::Network, true, Default::default()).unwrap();
    let traced = TracedBackend::new(MockBackend::new());
    let out = synthesize_dispatch(&recipe, &plain.image, &plain, &[], "lanterns", &SynthParams::default(), &traced).unwrap();
    assert_eq!(ops(&traced), vec!["img2img", "depth2img"]);
    let strengths: Vec<f32> = traced.records().iter().filter_map(|r| r.strength).collect();
    assert_eq!(strengths, vec![0.4, 0.8]);
    assert!(out.smoothed.is_some() && out.edge_overlay.is_some() && out.dmp.is_none());
}

#[test]
fn controlnet_takes_edges_from_the_unsmoothed_sketch() {
    let (plain, groups) = bar_groups(&[1.0, 2.0], &["a"]);
    let recipe = RecipeSelection {
        kind: ChartKind::Network,
        realistic: true,
        pregen: PregenMethod::GridImg2img,
        smooth: true,
        synthesize: SynthPipeline::ControlnetCanny,
        refine: false,
    };
    let traced = TracedBackend::new(MockBackend::new());
    synthesize_dispatch(&recipe, &plain.image, &plain, &groups, "x", &SynthParams::default(), &traced).unwrap();
    assert_eq!(ops(&traced), vec!["img2img", "controlnet_canny"]);
}

#[test]
fn dispatch_rejects_illegal_recipe_before_any_call() {
    let (plain, groups) = bar_groups(&[1.0, 2.0], &["a"]);
    let recipe = RecipeSelection {
        kind: ChartKind::Bar,
        realistic: true,
        pregen: PregenMethod::GridImg2img,
        smooth: false,
        synthesize: SynthPipeline::ControlnetCanny,
        refine: true,
    };
    let traced = TracedBackend::new(MockBackend::new());
    let err = synthesize_dispatch(&recipe, &plain.image, &plain, &groups, "x", &SynthParams::default(), &traced);
    assert!(matches!(err, Err(SynthError::InvalidRecipe(_))));
    assert!(traced.records().is_empty());
}

#[test]
fn bar_dispatch_runs_dmp() {
    let (plain, groups) = bar_groups(&[1.0, 2.0], &["a", "b"]);
    let recipe = select_recipe(ChartKind::Bar, true, Default::default()).unwrap();
    let traced = TracedBackend::new(MockBackend::new());
    let out = synthesize_dispatch(&recipe, &plain.image, &plain, &groups, "x", &SynthParams::default(), &traced).unwrap();
    assert!(out.dmp.is_some());
    assert!(ops(&traced).is_empty());
    let denoise = traced.records().iter().filter(|r| r.op == "denoise_step").count();
    assert_eq!(denoise, 2 * 40);
}

/// Fraction of `a`'s set pixels that lie within one pixel of `b`.
fn near_fraction(a: &Mask, b: &Mask) -> f64 {
    let grown = b.dilate(1);
    a.iter_set().filter(|&(x, y)| grown.get(x, y)).count() as f64 / a.count().max(1) as f64
}

#[test]
fn canny_agrees_with_reference_detector() {
    let mut img = RasterImage::filled(96, 96, Rgb::WHITE);
    for y in 20..70 {
        for x in 30..80 {
            img.set_rgb(x, y, Rgb([20, 20, 160]));
        }
    }
    let ours = canny_edges(&img, 100.0, 200.0);
    let gray = image::GrayImage::from_fn(96, 96, |x, y| {
        let p = img.rgb(x, y).0;
        image::Luma([(0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32).round() as u8])
    });
    let reference = imageproc::edges::canny(&gray, 100.0, 200.0);
    let theirs = Mask::from_fn(96, 96, |x, y| reference.get_pixel(x, y).0[0] > 0);
    assert!(ours.count() > 150 && theirs.count() > 150);
    assert!(near_fraction(&ours, &theirs) > 0.95);
    assert!(near_fraction(&theirs, &ours) > 0.95);
}
