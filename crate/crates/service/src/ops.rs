//! Blocking implementations of the service operations.

use std::fs;
use std::path::{Path, PathBuf};

use vizstyle_core::api::{
    mark_summaries, ApiError, ErrorKind, GenerateRequest, GenerateResponse, InspectQuery, InspectResponse,
    InspectStage, RegenRequest, RegenResponse, RegenTarget, ValidateRequest, ValidateResponse,
};
use vizstyle_core::backend::{BackendError, TracedBackend};
use vizstyle_core::chart::render_plain;
use vizstyle_core::imaging::{Mask, RasterImage};
use vizstyle_core::refine::{regenerate_background, regenerate_mark, regenerate_region};
use vizstyle_core::workflow::{
    read_trace, run_to_dir, select_recipe, ConfigFile, RegenVersion, RunState, Stage, CONFIG_FILE, FINAL_FILE,
    PLAIN_FILE, SKETCH_IMAGE_FILE, STATE_FILE, SYNTH_FILE, TRACE_FILE,
};

/// Trace label of post-processing calls.
pub const REGEN_STAGE: &str = "regenerate";

fn backend_error(e: BackendError) -> ApiError {
    ApiError::new(ErrorKind::Backend, e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> ApiError {
    let kind = if e.kind() == std::io::ErrorKind::NotFound { ErrorKind::NotFound } else { ErrorKind::Io };
    ApiError::new(kind, format!("{}: {e}", path.display()))
}

/// Parses and validates a config, including the binding against the
/// rendered chart, without touching a backend.
pub fn validate(req: ValidateRequest) -> Result<ValidateResponse, ApiError> {
    let config = ConfigFile::from_value(req.config)?.into_run_config(&req.overrides)?;
    let recipe = select_recipe(config.chart.kind(), config.workflow.realism, config.workflow.recipe)
        .map_err(|e| ApiError::new(ErrorKind::Validation, e.to_string()))?;
    config.prompts.check(recipe.refine).map_err(|e| prompt_error(&e))?;
    let plain = render_plain(&config.chart).map_err(|e| ApiError::new(ErrorKind::Validation, e.to_string()))?;
    let binding = config.prompts.resolve_binding(&plain).map_err(|e| prompt_error(&e))?;
    let (w, h) = plain.canvas();
    Ok(ValidateResponse { recipe, canvas: [w, h], marks: mark_summaries(&plain, &binding) })
}

fn prompt_error(e: &vizstyle_core::workflow::PromptError) -> ApiError {
    ApiError {
        violations: vec![vizstyle_core::chart::Violation { field: e.field().into(), message: e.to_string() }],
        ..ApiError::new(ErrorKind::Validation, e.to_string())
    }
}

/// Runs the pipeline into `state_dir`. A directory holding a completed run
/// is never overwritten.
pub fn generate(req: GenerateRequest) -> Result<GenerateResponse, ApiError> {
    let config = ConfigFile::from_value(req.config)?.into_run_config(&req.overrides)?;
    let dir = req.state_dir;
    if dir.join(FINAL_FILE).exists() {
        return Err(ApiError::bad_request(format!(
            "{} already holds a completed run; use regen or a new state directory",
            dir.display()
        )));
    }
    let backend = config.backend.build().map_err(backend_error)?;
    let state = match run_to_dir(&config, backend.as_ref(), &dir) {
        Ok(state) => state,
        Err(e) => {
            let mut api = ApiError::from(&e);
            if e.stage != Stage::Persist {
                api.state_dir = Some(dir);
            }
            return Err(api);
        }
    };
    let final_path = dir.join(FINAL_FILE);
    if let Some(out) = &req.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::copy(&final_path, out).map_err(|e| io_error(out, e))?;
    }
    Ok(GenerateResponse {
        state_dir: dir,
        final_path,
        out: req.out,
        seed: state.seed,
        attempt: state.attempt,
        recipe: state.recipe.expect("completed runs carry a recipe"),
        checksums: state.checksums(),
        backend_calls: state.trace.len(),
    })
}

fn load_state(dir: &Path) -> Result<RunState, ApiError> {
    if !dir.join(CONFIG_FILE).exists() || !dir.join(STATE_FILE).exists() {
        return Err(ApiError::not_found(format!("{} holds no run state", dir.display())));
    }
    Ok(RunState::load(dir)?)
}

fn changed_pixels(a: &RasterImage, b: &RasterImage) -> usize {
    let (w, h) = a.dims();
    (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| a.rgb(x, y) != b.rgb(x, y)).count()
}

/// Regenerates a mark, the background or a masked region of a completed
/// run and stores the result as the next `final_v<N>.png`.
pub fn regen(req: RegenRequest) -> Result<RegenResponse, ApiError> {
    let dir = req.state_dir;
    let mut state = load_state(&dir)?;
    if !state.is_complete() {
        return Err(ApiError::bad_request(format!("{} does not hold a completed run", dir.display())));
    }
    let mut backend_config = state.config.backend.clone().with_env_override();
    if let Some(endpoint) = req.endpoint.filter(|e| !e.trim().is_empty()) {
        backend_config.endpoint = Some(endpoint);
    }
    let backend = backend_config.build().map_err(backend_error)?;
    let traced = TracedBackend::new(backend.as_ref());
    traced.set_stage(REGEN_STAGE);
    let prompt = req.prompt.as_deref();
    let out = match &req.target {
        RegenTarget::Mark { id } => regenerate_mark(&state, *id, prompt, req.strength, &traced)?,
        RegenTarget::Background => regenerate_background(&state, prompt, req.strength, &traced)?,
        RegenTarget::Mask { path } => {
            let region = Mask::load_png(path).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
            let prompt = prompt.ok_or_else(|| ApiError::bad_request("a mask target needs --prompt"))?;
            regenerate_region(&state, &region, prompt, req.strength, &traced)?
        }
    };
    let before = state.latest_image().expect("completed runs have an image").clone();
    let changed = changed_pixels(&before, &out.image);
    let meta = RegenVersion {
        version: 0,
        target: out.target.clone(),
        prompt: out.prompt.clone(),
        strength: out.strength,
        checksum: String::new(),
    };
    let version = state.save_version(&dir, out.image, &traced.records(), meta)?;
    let saved = state.versions.last().expect("version was recorded");
    Ok(RegenResponse {
        version,
        path: dir.join(RegenVersion::image_file(version)),
        target: out.target,
        prompt: out.prompt,
        strength: out.strength,
        checksum: saved.checksum.clone(),
        changed_pixels: changed,
        region_pixels: out.mask.count(),
    })
}

fn missing(stage: InspectStage) -> ApiError {
    ApiError::not_found(format!("run state lacks the {} stage", stage.as_str()))
}

fn image_summary(stage: InspectStage, path: PathBuf, img: &RasterImage) -> InspectResponse {
    let (w, h) = img.dims();
    InspectResponse {
        stage,
        path,
        width: Some(w),
        height: Some(h),
        checksum: Some(img.checksum()),
        marks: Vec::new(),
        versions: Vec::new(),
        backend_calls: None,
        calls: Vec::new(),
    }
}

/// Summarizes one stage of a saved run.
pub fn inspect(query: InspectQuery) -> Result<InspectResponse, ApiError> {
    let dir = query.state_dir;
    let stage = query.stage;
    if !dir.join(CONFIG_FILE).exists() {
        return Err(missing(stage));
    }
    if stage == InspectStage::Trace {
        let path = dir.join(TRACE_FILE);
        if !path.exists() {
            return Err(missing(stage));
        }
        let calls = read_trace(&path)?;
        return Ok(InspectResponse {
            stage,
            path,
            width: None,
            height: None,
            checksum: None,
            marks: Vec::new(),
            versions: Vec::new(),
            backend_calls: Some(calls.len()),
            calls,
        });
    }
    if !dir.join(STATE_FILE).exists() {
        return Err(missing(stage));
    }
    let state = RunState::load(&dir)?;
    match stage {
        InspectStage::Plain => {
            let plain = state.plain.as_ref().ok_or_else(|| missing(stage))?;
            let mut out = image_summary(stage, dir.join(PLAIN_FILE), &plain.image);
            out.marks = mark_summaries(plain, &state.binding);
            Ok(out)
        }
        InspectStage::Sketch => {
            let sketch = state.sketch.as_ref().ok_or_else(|| missing(stage))?;
            Ok(image_summary(stage, dir.join(SKETCH_IMAGE_FILE), &sketch.image))
        }
        InspectStage::Synth => {
            let synth = state.synth.as_ref().ok_or_else(|| missing(stage))?;
            Ok(image_summary(stage, dir.join(SYNTH_FILE), &synth.image))
        }
        InspectStage::Final => {
            let img = state.final_image.as_ref().ok_or_else(|| missing(stage))?;
            let mut out = image_summary(stage, dir.join(FINAL_FILE), img);
            out.versions = state.version_images.keys().map(|v| dir.join(RegenVersion::image_file(*v))).collect();
            Ok(out)
        }
        InspectStage::Trace => unreachable!("handled above"),
    }
}
