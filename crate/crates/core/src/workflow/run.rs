use std::collections::BTreeMap;
use std::path::Path;

use super::config::WorkflowConfig;
use super::prompts::{PromptError, PromptSpec};
use super::recipe::{legal_pregen, select_recipe, RecipeError, RecipeSelection};
use super::state::{RunConfig, RunState, Stage, StageFailure, StateError};
use crate::backend::{BackendError, DiffusionBackend, TracedBackend};
use crate::chart::{render_plain, validate_spec_for, ChartSpec, PlainVisualization, RenderError, ValidationError};
use crate::refine::refine;
use crate::sketch::{run_sketch, MarkGroup, MarkTransform, SketchError};
use crate::synthesize::{dmp_groups, synthesize_dispatch, SynthError};

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Recipe(#[from] RecipeError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("run state lacks the {0} stage")]
    MissingStage(Stage),
}

impl StageError {
    /// True when the backend, not the input, caused the failure.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            StageError::Backend(_) | StageError::Sketch(SketchError::Backend(_)) | StageError::Synth(SynthError::Backend(_))
        )
    }
}

/// A failed run: the stage, the cause, and everything produced before it.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct RunError {
    pub stage: Stage,
    pub source: StageError,
    pub state: Box<RunState>,
}

fn fail(stage: Stage, source: impl Into<StageError>, mut state: RunState) -> RunError {
    let source = source.into();
    state.failure = Some(StageFailure { stage, message: source.to_string() });
    RunError { stage, source, state: Box::new(state) }
}

/// One group per sub-prompt that has marks bound to it, in sub-prompt order.
pub fn build_groups(
    plain: &PlainVisualization,
    prompts: &PromptSpec,
    binding: &BTreeMap<usize, usize>,
    recipe: &RecipeSelection,
    config: &WorkflowConfig,
) -> Result<Vec<MarkGroup>, RecipeError> {
    let mut groups = Vec::new();
    for index in 0..prompts.sub_prompts.len() {
        let mark_ids: Vec<usize> = binding.iter().filter(|(_, &g)| g == index).map(|(&m, _)| m).collect();
        if mark_ids.is_empty() {
            continue;
        }
        let o = config.groups.get(&index).copied().unwrap_or_default();
        let method = o.pregen.unwrap_or(recipe.pregen);
        if !legal_pregen(plain.kind).contains(&method) {
            return Err(RecipeError::Pregen { kind: plain.kind, method });
        }
        let transform = o.transform.unwrap_or_else(|| MarkTransform::default_for(plain.kind, method));
        groups.push(MarkGroup { index, prompt: prompts.group_prompt(index), mark_ids, method, transform });
    }
    Ok(groups)
}

/// Runs every stage for a chart, prompt set and configuration.
pub fn run(
    spec: &ChartSpec,
    prompts: &PromptSpec,
    config: &WorkflowConfig,
    backend: &dyn DiffusionBackend,
) -> Result<RunState, RunError> {
    let config = RunConfig { chart: spec.clone(), prompts: prompts.clone(), workflow: config.clone(), backend: Default::default() };
    run_config(&config, backend)
}

/// Like [`run`], retrying backend failures with incremented seeds up to
/// `workflow.attempts` times.
pub fn run_config(config: &RunConfig, backend: &dyn DiffusionBackend) -> Result<RunState, RunError> {
    let attempts = config.workflow.attempts.max(1);
    let mut attempt = 0;
    loop {
        match run_attempt(config, attempt, backend) {
            Err(e) if e.source.is_backend() && attempt + 1 < attempts => attempt += 1,
            other => return other,
        }
    }
}

/// Runs and persists the state to `dir`, including partial state on failure.
pub fn run_to_dir(config: &RunConfig, backend: &dyn DiffusionBackend, dir: &Path) -> Result<RunState, RunError> {
    match run_config(config, backend) {
        Ok(state) => match state.save(dir) {
            Ok(()) => Ok(state),
            Err(e) => Err(fail(Stage::Persist, e, state)),
        },
        Err(err) => {
            if let Err(e) = err.state.save(dir) {
                return Err(fail(Stage::Persist, e, *err.state));
            }
            Err(err)
        }
    }
}

fn run_attempt(config: &RunConfig, attempt: u32, backend: &dyn DiffusionBackend) -> Result<RunState, RunError> {
    let seed = config.workflow.seed.wrapping_add(attempt as u64);
    let mut state = RunState::new(config.clone());
    state.attempt = attempt;
    state.seed = seed;
    state.descriptor = Some(backend.descriptor().clone());

    let factor = backend.descriptor().latent_factor;
    let spec = match validate_spec_for(config.chart.clone(), factor) {
        Ok(s) => s,
        Err(e) => return Err(fail(Stage::Validate, e, state)),
    };
    if let Err(e) = config.workflow.validate() {
        return Err(fail(Stage::Validate, e, state));
    }
    let recipe = match select_recipe(spec.kind(), config.workflow.realism, config.workflow.recipe) {
        Ok(r) => r,
        Err(e) => return Err(fail(Stage::Validate, e, state)),
    };
    state.recipe = Some(recipe);
    if let Err(e) = config.prompts.check(recipe.refine) {
        return Err(fail(Stage::Validate, e, state));
    }

    let plain = match render_plain(&spec) {
        Ok(p) => p,
        Err(e) => return Err(fail(Stage::Plain, e, state)),
    };
    state.plain = Some(plain.clone());
    match config.prompts.resolve_binding(&plain) {
        Ok(b) => state.binding = b,
        Err(e) => return Err(fail(Stage::Validate, e, state)),
    }
    match build_groups(&plain, &config.prompts, &state.binding, &recipe, &config.workflow) {
        Ok(g) => state.groups = g,
        Err(e) => return Err(fail(Stage::Validate, e, state)),
    }

    let traced = TracedBackend::new(backend);
    traced.set_stage(Stage::Sketch.as_str());
    let mut workflow = config.workflow.clone();
    workflow.seed = seed;
    let background = config.prompts.background_prompt();
    let sketch = run_sketch(&plain, &state.groups, background.as_deref(), &traced, &workflow.sketch_params(&config.prompts.negative));
    state.trace = traced.take_records();
    match sketch {
        Ok(s) => state.sketch = Some(s.into()),
        Err(e) => return Err(fail(Stage::Sketch, e, state)),
    }
    finish_from_sketch(state, backend)
}

/// Runs synthesize and refine on the stored sketch, discarding any later
/// artifacts. With the mock backend this reproduces the original final.
pub fn rerun_from_sketch(mut state: RunState, backend: &dyn DiffusionBackend) -> Result<RunState, RunError> {
    state.synth = None;
    state.final_image = None;
    state.failure = None;
    state.versions.clear();
    state.version_images.clear();
    state.trace.retain(|r| r.stage == Stage::Sketch.as_str());
    finish_from_sketch(state, backend)
}

fn finish_from_sketch(mut state: RunState, backend: &dyn DiffusionBackend) -> Result<RunState, RunError> {
    let (Some(recipe), Some(plain), Some(sketch)) = (state.recipe, state.plain.clone(), state.sketch.clone()) else {
        return Err(fail(Stage::Synthesize, StageError::MissingStage(Stage::Sketch), state));
    };
    let mut workflow = state.config.workflow.clone();
    workflow.seed = state.seed;
    let prompts = state.config.prompts.clone();

    let traced = TracedBackend::resume(backend, std::mem::take(&mut state.trace));
    traced.set_stage(Stage::Synthesize.as_str());
    let groups = dmp_groups(&plain, &sketch.masks, &state.groups);
    let params = workflow.synth_params(&prompts.negative);
    let synth = synthesize_dispatch(&recipe, &sketch.image, &plain, &groups, &prompts.full_prompt(), &params, &traced);
    let synth = match synth {
        Ok(s) => s,
        Err(e) => {
            state.trace = traced.take_records();
            return Err(fail(Stage::Synthesize, e, state));
        }
    };
    let synth_image = synth.image.clone();
    state.synth = Some(synth.into());

    let final_image = if recipe.refine {
        traced.set_stage(Stage::Refine.as_str());
        match refine(&synth_image, &prompts, &workflow, &traced) {
            Ok(img) => img,
            Err(e) => {
                state.trace = traced.take_records();
                return Err(fail(Stage::Refine, e, state));
            }
        }
    } else {
        synth_image
    };
    state.trace = traced.take_records();
    state.final_image = Some(final_image);
    Ok(state)
}
