use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::backend::{
    BackendDescriptor, BackendError, Capability, DenoiseStep, DepthMap, DiffusionBackend, LatentTensor, MockBackend,
    PipelineRequest,
};
use crate::chart::{ChartData, ChartKind, ChartSpec, Edge, Network, Node, Series, DEFAULT_CANVAS};
use crate::imaging::{RasterImage, Rgb};
use crate::sketch::PregenMethod;
use crate::synthesize::SynthPipeline;

fn bar_run(prompts: &[&str], seed: u64) -> RunState {
    let mut config = WorkflowConfig::default();
    config.seed = seed;
    run(&ChartSpec::bar(&[3.0, 1.0, 2.0]), &PromptSpec::new("a photo", prompts), &config, &MockBackend::new()).unwrap()
}

fn synth_fidelity(state: &RunState) -> BTreeMap<usize, f64> {
    let backend = MockBackend::new();
    let targets = mock_group_targets(&state.groups, state.seed, (64, 64));
    let synth = &state.synth.as_ref().unwrap().image;
    geometry_fidelity(synth, state.plain.as_ref().unwrap(), &state.groups, &targets, &backend).unwrap()
}

#[test]
fn single_prompt_bar_reaches_the_target() {
    let state = bar_run(&["fries"], 3);
    assert!(state.is_complete());
    let scores = synth_fidelity(&state);
    assert_eq!(scores.len(), 3);
    for s in scores.values() {
        assert!(*s >= 1.0 - 1.0 / 255.0, "{s}");
    }
    let recipe = state.recipe.unwrap();
    assert_eq!((recipe.synthesize, recipe.refine), (SynthPipeline::Dmp, true));
}

#[test]
fn uniform_gray_scores_low() {
    let state = bar_run(&["fries", "burgers", "cupcakes"], 0);
    let targets = mock_group_targets(&state.groups, 0, (64, 64));
    let gray = RasterImage::filled(512, 512, Rgb([128, 128, 128]));
    let scores = geometry_fidelity(&gray, state.plain.as_ref().unwrap(), &state.groups, &targets, &MockBackend::new()).unwrap();
    assert_eq!(scores.len(), 3);
    assert!(scores.values().all(|s| *s < 0.9));
}

#[test]
fn groups_without_marks_score_nothing() {
    let state = bar_run(&["fries"], 0);
    let mut groups = state.groups.clone();
    groups[0].mark_ids.clear();
    let targets = mock_group_targets(&groups, 0, (64, 64));
    let synth = &state.synth.as_ref().unwrap().image;
    let scores = geometry_fidelity(synth, state.plain.as_ref().unwrap(), &groups, &targets, &MockBackend::new()).unwrap();
    assert!(scores.is_empty());
}

#[test]
fn runs_are_deterministic() {
    let a = bar_run(&["fries", "burgers", "cupcakes"], 7);
    let b = bar_run(&["fries", "burgers", "cupcakes"], 7);
    assert_eq!(a.checksums(), b.checksums());
    assert_eq!(a.trace, b.trace);
    let c = bar_run(&["fries", "burgers", "cupcakes"], 8);
    assert_ne!(a.checksums()["final"], c.checksums()["final"]);
}

#[test]
fn trace_runs_sketch_then_synthesize_then_refine() {
    let state = bar_run(&["fries"], 0);
    let stages: Vec<&str> = state.trace.iter().map(|r| r.stage.as_str()).collect();
    let mut order = stages.clone();
    order.dedup();
    assert_eq!(order, vec!["sketch", "synthesize", "refine"]);
    assert!(state.trace.iter().enumerate().all(|(i, r)| r.seq == i as u64));
    let refine = state.trace.iter().find(|r| r.stage == "refine" && r.op == "run_image_pipeline").unwrap();
    assert_eq!(refine.prompt.as_deref(), Some(format!("a photo, fries, {DEFAULT_QUALITY_PROMPT}").as_str()));
    assert_eq!(refine.strength, Some(0.30));
}

#[test]
fn missing_stepwise_fails_at_synthesize_with_sketch_kept() {
    let caps = [Capability::Txt2img, Capability::Img2img, Capability::Depth2img, Capability::Inpaint];
    let backend = MockBackend::with_capabilities(caps);
    let err = run(&ChartSpec::bar(&[3.0, 1.0, 2.0]), &PromptSpec::new("c", &["x"]), &WorkflowConfig::default(), &backend)
        .unwrap_err();
    assert_eq!(err.stage, Stage::Synthesize);
    assert!(err.source.is_backend());
    assert!(err.state.sketch.is_some());
    assert!(err.state.final_image.is_none());
    assert_eq!(err.state.failure.as_ref().unwrap().stage, Stage::Synthesize);
}

#[test]
fn invalid_inputs_fail_validation() {
    let backend = MockBackend::new();
    let spec = ChartSpec::pie(&[2.0, -1.0, 3.0]);
    let err = run(&spec, &PromptSpec::new("c", &["x"]), &WorkflowConfig::default(), &backend).unwrap_err();
    assert_eq!(err.stage, Stage::Validate);
    assert!(!err.source.is_backend());

    let mut config = WorkflowConfig::default();
    config.recipe.pipeline = Some(SynthPipeline::ControlnetCanny);
    let err = run(&ChartSpec::bar(&[1.0]), &PromptSpec::new("c", &["x"]), &config, &backend).unwrap_err();
    assert!(matches!(err.source, StageError::Recipe(_)));

    let err = run(&ChartSpec::bar(&[1.0, 2.0, 3.0]), &PromptSpec::new("c", &["x", "y"]), &WorkflowConfig::default(), &backend)
        .unwrap_err();
    assert!(matches!(err.source, StageError::Prompt(PromptError::Ambiguous { .. })));
}

#[test]
fn group_pregen_override_must_be_legal() {
    let mut config = WorkflowConfig::default();
    config.groups.insert(0, GroupOverride { pregen: Some(PregenMethod::FreeformTxt2img), transform: None });
    let err = run(&ChartSpec::bar(&[1.0, 2.0]), &PromptSpec::new("c", &["x"]), &config, &MockBackend::new()).unwrap_err();
    assert!(matches!(err.source, StageError::Recipe(RecipeError::Pregen { .. })));
}

#[test]
fn saved_state_reruns_from_sketch_to_the_same_final() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        chart: ChartSpec::bar(&[3.0, 1.0, 2.0]),
        prompts: PromptSpec::new("a photo", &["fries", "burgers"]).with_binding(&[(0, 0), (1, 1), (2, 0)]),
        workflow: WorkflowConfig { seed: 4, ..Default::default() },
        backend: Default::default(),
    };
    let state = run_to_dir(&config, &MockBackend::new(), dir.path()).unwrap();
    for f in [CONFIG_FILE, STATE_FILE, PLAIN_FILE, SYNTH_FILE, FINAL_FILE, TRACE_FILE, SKETCH_IMAGE_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    for id in 0..3 {
        assert!(dir.path().join(MASKS_DIR).join(format!("mark_{id}.png")).exists());
        assert!(dir.path().join(SKETCH_DIR).join(format!("object_{id}.png")).exists());
    }
    assert!(dir.path().join(SKETCH_DIR).join("grid_1.png").exists());

    std::fs::remove_file(dir.path().join(SYNTH_FILE)).unwrap();
    std::fs::remove_file(dir.path().join(FINAL_FILE)).unwrap();
    let loaded = RunState::load(dir.path()).unwrap();
    assert!(loaded.synth.is_none() && loaded.final_image.is_none());
    assert_eq!(loaded.groups, state.groups);
    let rerun = rerun_from_sketch(loaded, &MockBackend::new()).unwrap();
    assert_eq!(rerun.final_image, state.final_image);
    assert_eq!(rerun.checksums(), state.checksums());
    assert_eq!(rerun.trace, state.trace);
}

#[test]
fn saved_trace_matches_memory() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        chart: ChartSpec::bar(&[2.0, 1.0]),
        prompts: PromptSpec::new("c", &["x"]),
        workflow: Default::default(),
        backend: Default::default(),
    };
    let state = run_to_dir(&config, &MockBackend::new(), dir.path()).unwrap();
    assert_eq!(read_trace(&dir.path().join(TRACE_FILE)).unwrap(), state.trace);
    let loaded = RunState::load(dir.path()).unwrap();
    assert_eq!(loaded.checksums(), state.checksums());
    assert_eq!(loaded.recipe, state.recipe);
    assert_eq!(loaded.binding, state.binding);
}

#[test]
fn failed_run_persists_partial_state() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        chart: ChartSpec::bar(&[2.0, 1.0]),
        prompts: PromptSpec::new("c", &["x"]),
        workflow: Default::default(),
        backend: Default::default(),
    };
    let backend = MockBackend::with_capabilities([Capability::Img2img, Capability::Txt2img, Capability::Depth2img]);
    let err = run_to_dir(&config, &backend, dir.path()).unwrap_err();
    assert_eq!(err.stage, Stage::Synthesize);
    assert!(dir.path().join(SKETCH_IMAGE_FILE).exists());
    assert!(!dir.path().join(FINAL_FILE).exists());
    let loaded = RunState::load(dir.path()).unwrap();
    assert_eq!(loaded.failure.unwrap().stage, Stage::Synthesize);
}

/// Fails every call made with seed 0.
struct FlakyBackend(MockBackend);

impl FlakyBackend {
    fn check(&self, seed: u64) -> Result<(), BackendError> {
        if seed == 0 {
            Err(BackendError::BackendFailure("transient".into()))
        } else {
            Ok(())
        }
    }
}

impl DiffusionBackend for FlakyBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        self.0.descriptor()
    }
    fn run_image_pipeline(&self, req: &PipelineRequest) -> Result<RasterImage, BackendError> {
        self.check(req.seed)?;
        self.0.run_image_pipeline(req)
    }
    fn encode(&self, img: &RasterImage) -> Result<LatentTensor, BackendError> {
        self.0.encode(img)
    }
    fn decode(&self, z: &LatentTensor) -> Result<RasterImage, BackendError> {
        self.0.decode(z)
    }
    fn add_noise(&self, z: &LatentTensor, seed: u64, level: f32) -> Result<LatentTensor, BackendError> {
        self.check(seed)?;
        self.0.add_noise(z, seed, level)
    }
    fn denoise_step(&self, z: &LatentTensor, step: &DenoiseStep) -> Result<LatentTensor, BackendError> {
        self.0.denoise_step(z, step)
    }
    fn depth_map(&self, img: &RasterImage) -> Result<DepthMap, BackendError> {
        self.0.depth_map(img)
    }
}

#[test]
fn retries_increment_the_seed() {
    let spec = ChartSpec::bar(&[2.0, 1.0]);
    let prompts = PromptSpec::new("c", &["x"]);
    let backend = FlakyBackend(MockBackend::new());
    let err = run(&spec, &prompts, &WorkflowConfig::default(), &backend).unwrap_err();
    assert_eq!(err.stage, Stage::Sketch);
    let config = WorkflowConfig { attempts: 2, ..Default::default() };
    let state = run(&spec, &prompts, &config, &backend).unwrap();
    assert_eq!((state.seed, state.attempt), (1, 1));
    let direct = run(&spec, &prompts, &WorkflowConfig { seed: 1, ..Default::default() }, &MockBackend::new()).unwrap();
    assert_eq!(state.final_image, direct.final_image);
}

fn ring(n: usize) -> ChartSpec {
    let nodes = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            Node { id: format!("n{i}"), radius: 26.0, color: Rgb([200, 80, 40]), position: Some((0.5 + 0.35 * t.cos(), 0.5 + 0.35 * t.sin())) }
        })
        .collect();
    let edges = (0..n).map(|i| Edge { source: format!("n{i}"), target: format!("n{}", (i + 1) % n), width: 4.0 }).collect();
    ChartSpec { canvas: DEFAULT_CANVAS, data: ChartData::Network(Network { nodes, edges, edge_color: Rgb::BLACK }) }
}

#[test]
fn network_run_skips_refine() {
    let state = run(&ring(5), &PromptSpec::new("lanterns at night", &["paper lantern"]), &WorkflowConfig::default(), &MockBackend::new())
        .unwrap();
    assert_eq!(state.recipe.unwrap().synthesize, SynthPipeline::Depth2imgEdge);
    assert_eq!(state.final_image.as_ref(), Some(&state.synth.as_ref().unwrap().image));
    assert!(state.trace.iter().all(|r| r.stage != "refine"));
    assert_eq!(state.binding.len(), 5);
}

#[test]
fn pie_and_area_runs_complete() {
    let prompts = PromptSpec::new("food", &["pizza", "cake"]);
    let state = run(&ChartSpec::pie(&[2.0, 1.0]), &prompts, &WorkflowConfig::default(), &MockBackend::new()).unwrap();
    assert_eq!(state.groups[0].method, PregenMethod::DirectDepth2img);
    let series = vec![
        Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)], color: Rgb([200, 0, 0]) },
        Series { label: "b".into(), points: vec![(0.0, 1.0), (1.0, 1.0), (2.0, 2.0)], color: Rgb([0, 0, 200]) },
    ];
    let area = ChartSpec { canvas: DEFAULT_CANVAS, data: ChartData::Area(series) };
    let state = run(&area, &prompts, &WorkflowConfig::default(), &MockBackend::new()).unwrap();
    assert!(state.is_complete());
    assert_eq!(state.synth.as_ref().unwrap().dmp_steps.len(), 40);
}

fn pipeline_strategy() -> impl Strategy<Value = Option<SynthPipeline>> {
    prop_oneof![Just(None), prop::sample::select(SynthPipeline::ALL.to_vec()).prop_map(Some)]
}

fn pregen_strategy() -> impl Strategy<Value = Option<PregenMethod>> {
    let all = vec![PregenMethod::GridImg2img, PregenMethod::DirectDepth2img, PregenMethod::FreeformTxt2img];
    prop_oneof![Just(None), prop::sample::select(all).prop_map(Some)]
}

proptest! {
    #[test]
    fn selected_recipes_always_validate(
        kind in prop::sample::select(ChartKind::ALL.to_vec()),
        realistic in any::<bool>(),
        pipeline in pipeline_strategy(),
        pregen in pregen_strategy(),
    ) {
        let overrides = RecipeOverrides { pipeline, pregen };
        match select_recipe(kind, realistic, overrides) {
            Ok(r) => {
                prop_assert!(check_recipe(&r).is_ok());
                prop_assert!(legal_pipelines(kind, realistic).contains(&r.synthesize));
            }
            Err(_) => prop_assert!(
                pipeline.is_some_and(|p| !legal_pipelines(kind, realistic).contains(&p))
                    || pregen.is_some_and(|m| !legal_pregen(kind).contains(&m))
            ),
        }
    }
}
