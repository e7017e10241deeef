use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{BackendConfig, WorkflowConfig};
use super::prompts::PromptSpec;
use super::recipe::RecipeSelection;
use crate::backend::{to_jsonl, BackendDescriptor, TraceRecord};
use crate::chart::{render_plain, ChartSpec, PlainVisualization, RenderError};
use crate::imaging::{ImagingError, Mask, RasterImage};
use crate::sketch::{MarkGroup, SketchOutput};
use crate::synthesize::{DmpSchedule, DmpStepRecord, SynthOutput};

pub const CONFIG_FILE: &str = "config.json";
pub const STATE_FILE: &str = "state.json";
pub const PLAIN_FILE: &str = "plain.png";
pub const SYNTH_FILE: &str = "synth.png";
pub const FINAL_FILE: &str = "final.png";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const MASKS_DIR: &str = "masks";
pub const SKETCH_DIR: &str = "sketch";
pub const SKETCH_IMAGE_FILE: &str = "sketch/sketch.png";

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub chart: ChartSpec,
    pub prompts: PromptSpec,
    #[serde(default)]
    pub workflow: WorkflowConfig,
    #[serde(default)]
    pub backend: BackendConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Plain,
    Sketch,
    Synthesize,
    Refine,
    Persist,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Plain => "plain",
            Stage::Sketch => "sketch",
            Stage::Synthesize => "synthesize",
            Stage::Refine => "refine",
            Stage::Persist => "persist",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sketch-stage intermediates.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchArtifacts {
    /// Grid images sent to the backend, by group index.
    pub grids: BTreeMap<usize, RasterImage>,
    /// Backend output per group.
    pub generated: BTreeMap<usize, RasterImage>,
    pub objects: BTreeMap<usize, RasterImage>,
    pub patches: BTreeMap<usize, RasterImage>,
    pub background: Option<RasterImage>,
    pub image: RasterImage,
    /// Assembled patch pixels per mark.
    pub masks: BTreeMap<usize, Mask>,
}

impl From<SketchOutput> for SketchArtifacts {
    fn from(out: SketchOutput) -> Self {
        let mut grids = BTreeMap::new();
        let mut generated = BTreeMap::new();
        let mut objects = BTreeMap::new();
        for (g, group) in out.groups {
            if let Some(grid) = group.grid_input {
                grids.insert(g, grid);
            }
            generated.insert(g, group.generated);
            objects.extend(group.objects);
        }
        SketchArtifacts {
            grids,
            generated,
            objects,
            patches: out.patches,
            background: Some(out.background),
            image: out.sketch.image,
            masks: out.sketch.masks,
        }
    }
}

/// Synthesize-stage intermediates.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthArtifacts {
    pub image: RasterImage,
    pub smoothed: Option<RasterImage>,
    pub edge_overlay: Option<RasterImage>,
    pub dmp_schedule: Option<DmpSchedule>,
    pub dmp_steps: Vec<DmpStepRecord>,
}

impl From<SynthOutput> for SynthArtifacts {
    fn from(out: SynthOutput) -> Self {
        let (dmp_schedule, dmp_steps) = match out.dmp {
            Some(d) => (Some(d.schedule), d.steps),
            None => (None, Vec::new()),
        };
        SynthArtifacts { image: out.image, smoothed: out.smoothed, edge_overlay: out.edge_overlay, dmp_schedule, dmp_steps }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

/// One post-processing output, stored next to the run as `final_v<N>.png`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegenVersion {
    pub version: u32,
    pub target: String,
    pub prompt: String,
    pub strength: f32,
    pub checksum: String,
}

impl RegenVersion {
    pub fn image_file(version: u32) -> String {
        format!("final_v{version}.png")
    }

    pub fn trace_file(version: u32) -> String {
        format!("trace_v{version}.jsonl")
    }

    pub fn meta_file(version: u32) -> String {
        format!("regen_v{version}.json")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptor: Option<BackendDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recipe: Option<RecipeSelection>,
    binding: BTreeMap<usize, usize>,
    groups: Vec<MarkGroup>,
    seed: u64,
    attempt: u32,
    checksums: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dmp_schedule: Option<DmpSchedule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dmp_steps: Vec<DmpStepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<StageFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImagingError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("stored chart no longer renders: {0}")]
    Render(#[from] RenderError),
}

/// Intermediates, masks, configuration and trace of one run.
#[derive(Clone, Debug)]
pub struct RunState {
    pub config: RunConfig,
    pub descriptor: Option<BackendDescriptor>,
    pub recipe: Option<RecipeSelection>,
    pub binding: BTreeMap<usize, usize>,
    pub groups: Vec<MarkGroup>,
    /// Seed of the attempt that produced the artifacts.
    pub seed: u64,
    pub attempt: u32,
    pub plain: Option<PlainVisualization>,
    pub sketch: Option<SketchArtifacts>,
    pub synth: Option<SynthArtifacts>,
    pub final_image: Option<RasterImage>,
    pub trace: Vec<TraceRecord>,
    pub failure: Option<StageFailure>,
    pub versions: Vec<RegenVersion>,
    pub version_images: BTreeMap<u32, RasterImage>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StateError + '_ {
    move |source| StateError::Io { path: path.to_path_buf(), source }
}

fn write_png(path: &Path, img: &RasterImage) -> Result<(), StateError> {
    img.save_png(path).map_err(|source| StateError::Image { path: path.to_path_buf(), source })
}

fn write_mask(path: &Path, mask: &Mask) -> Result<(), StateError> {
    mask.save_png(path).map_err(|source| StateError::Image { path: path.to_path_buf(), source })
}

fn read_png(path: &Path) -> Result<RasterImage, StateError> {
    RasterImage::load_png(path).map_err(|source| StateError::Image { path: path.to_path_buf(), source })
}

fn read_png_opt(path: &Path) -> Result<Option<RasterImage>, StateError> {
    if path.exists() {
        read_png(path).map(Some)
    } else {
        Ok(None)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StateError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| StateError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StateError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| StateError::Json { path: path.to_path_buf(), source })
}

/// Files named `<prefix><n>.png` in `dir`, keyed by `n`.
fn numbered(dir: &Path, prefix: &str) -> Result<BTreeMap<usize, PathBuf>, StateError> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(n) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(".png")).and_then(|n| n.parse().ok()) {
            out.insert(n, path);
        }
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, StateError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|source| StateError::Json { path: path.to_path_buf(), source }))
        .collect()
}

impl RunState {
    pub fn new(config: RunConfig) -> Self {
        let seed = config.workflow.seed;
        RunState {
            config,
            descriptor: None,
            recipe: None,
            binding: BTreeMap::new(),
            groups: Vec::new(),
            seed,
            attempt: 0,
            plain: None,
            sketch: None,
            synth: None,
            final_image: None,
            trace: Vec::new(),
            failure: None,
            versions: Vec::new(),
            version_images: BTreeMap::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.final_image.is_some() && self.failure.is_none()
    }

    /// Newest post-processing output, or the run's final image.
    pub fn latest_image(&self) -> Option<&RasterImage> {
        self.version_images.values().next_back().or(self.final_image.as_ref())
    }

    pub fn next_version(&self) -> u32 {
        self.versions.iter().map(|v| v.version).max().unwrap_or(0) + 1
    }

    /// Checksums of every stage image present, keyed by stage name.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        if let Some(p) = &self.plain {
            out.insert("plain".into(), p.image.checksum());
        }
        if let Some(s) = &self.sketch {
            out.insert("sketch".into(), s.image.checksum());
        }
        if let Some(s) = &self.synth {
            out.insert("synth".into(), s.image.checksum());
        }
        if let Some(f) = &self.final_image {
            out.insert("final".into(), f.checksum());
        }
        out
    }

    fn manifest(&self) -> Manifest {
        Manifest {
            descriptor: self.descriptor.clone(),
            recipe: self.recipe,
            binding: self.binding.clone(),
            groups: self.groups.clone(),
            seed: self.seed,
            attempt: self.attempt,
            checksums: self.checksums(),
            dmp_schedule: self.synth.as_ref().and_then(|s| s.dmp_schedule),
            dmp_steps: self.synth.as_ref().map(|s| s.dmp_steps.clone()).unwrap_or_default(),
            failure: self.failure.clone(),
        }
    }

    /// Writes every artifact present to `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StateError> {
        fs::create_dir_all(dir.join(MASKS_DIR)).map_err(io_err(dir))?;
        write_json(&dir.join(CONFIG_FILE), &self.config)?;
        if let Some(plain) = &self.plain {
            write_png(&dir.join(PLAIN_FILE), &plain.image)?;
            for m in &plain.marks {
                write_mask(&dir.join(MASKS_DIR).join(format!("mark_{}.png", m.mark_id)), &m.mask)?;
            }
            write_mask(&dir.join(MASKS_DIR).join("background.png"), &plain.background_mask)?;
        }
        if let Some(sketch) = &self.sketch {
            let sdir = dir.join(SKETCH_DIR);
            fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
            for (g, img) in &sketch.grids {
                write_png(&sdir.join(format!("grid_{g}.png")), img)?;
            }
            for (g, img) in &sketch.generated {
                write_png(&sdir.join(format!("generated_{g}.png")), img)?;
            }
            for (id, img) in &sketch.objects {
                write_png(&sdir.join(format!("object_{id}.png")), img)?;
            }
            for (id, img) in &sketch.patches {
                write_png(&sdir.join(format!("patch_{id}.png")), img)?;
            }
            for (id, m) in &sketch.masks {
                write_mask(&sdir.join(format!("mask_{id}.png")), m)?;
            }
            if let Some(bg) = &sketch.background {
                write_png(&sdir.join("background.png"), bg)?;
            }
            write_png(&dir.join(SKETCH_IMAGE_FILE), &sketch.image)?;
        }
        if let Some(synth) = &self.synth {
            write_png(&dir.join(SYNTH_FILE), &synth.image)?;
            if let Some(img) = &synth.smoothed {
                write_png(&dir.join("smoothed.png"), img)?;
            }
            if let Some(img) = &synth.edge_overlay {
                write_png(&dir.join("edge_overlay.png"), img)?;
            }
        }
        if let Some(img) = &self.final_image {
            write_png(&dir.join(FINAL_FILE), img)?;
        }
        if self.config.workflow.trace {
            let path = dir.join(TRACE_FILE);
            fs::write(&path, to_jsonl(&self.trace)).map_err(io_err(&path))?;
        }
        write_json(&dir.join(STATE_FILE), &self.manifest())
    }

    /// Reads a saved state. The plain chart is re-rendered from the stored
    /// chart spec; sketch intermediates other than the image and masks are
    /// loaded when present.
    pub fn load(dir: &Path) -> Result<Self, StateError> {
        let config: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
        let manifest: Manifest = read_json(&dir.join(STATE_FILE))?;
        let mut state = RunState::new(config);
        state.descriptor = manifest.descriptor;
        state.recipe = manifest.recipe;
        state.binding = manifest.binding;
        state.groups = manifest.groups;
        state.seed = manifest.seed;
        state.attempt = manifest.attempt;
        state.failure = manifest.failure;
        if dir.join(PLAIN_FILE).exists() {
            state.plain = Some(render_plain(&state.config.chart)?);
        }
        if let Some(image) = read_png_opt(&dir.join(SKETCH_IMAGE_FILE))? {
            let sdir = dir.join(SKETCH_DIR);
            let load_all = |prefix: &str| -> Result<BTreeMap<usize, RasterImage>, StateError> {
                numbered(&sdir, prefix)?.into_iter().map(|(k, p)| Ok((k, read_png(&p)?))).collect()
            };
            let masks = numbered(&sdir, "mask_")?
                .into_iter()
                .map(|(k, p)| {
                    Mask::load_png(&p).map(|m| (k, m)).map_err(|source| StateError::Image { path: p.clone(), source })
                })
                .collect::<Result<_, _>>()?;
            state.sketch = Some(SketchArtifacts {
                grids: load_all("grid_")?,
                generated: load_all("generated_")?,
                objects: load_all("object_")?,
                patches: load_all("patch_")?,
                background: read_png_opt(&sdir.join("background.png"))?,
                image,
                masks,
            });
        }
        if let Some(image) = read_png_opt(&dir.join(SYNTH_FILE))? {
            state.synth = Some(SynthArtifacts {
                image,
                smoothed: read_png_opt(&dir.join("smoothed.png"))?,
                edge_overlay: read_png_opt(&dir.join("edge_overlay.png"))?,
                dmp_schedule: manifest.dmp_schedule,
                dmp_steps: manifest.dmp_steps,
            });
        }
        state.final_image = read_png_opt(&dir.join(FINAL_FILE))?;
        let trace = dir.join(TRACE_FILE);
        if trace.exists() {
            state.trace = read_trace(&trace)?;
        }
        for (n, path) in numbered(dir, "final_v")? {
            let version = n as u32;
            let meta = dir.join(RegenVersion::meta_file(version));
            if meta.exists() {
                state.versions.push(read_json(&meta)?);
            }
            state.version_images.insert(version, read_png(&path)?);
        }
        Ok(state)
    }

    /// Writes a post-processing result as the next version without
    /// touching any existing file.
    pub fn save_version(
        &mut self,
        dir: &Path,
        image: RasterImage,
        trace: &[TraceRecord],
        mut meta: RegenVersion,
    ) -> Result<u32, StateError> {
        let mut version = self.next_version().max(self.version_images.keys().max().map_or(1, |v| v + 1));
        while dir.join(RegenVersion::image_file(version)).exists() {
            version += 1;
        }
        meta.version = version;
        meta.checksum = image.checksum();
        write_png(&dir.join(RegenVersion::image_file(version)), &image)?;
        let tpath = dir.join(RegenVersion::trace_file(version));
        fs::write(&tpath, to_jsonl(trace)).map_err(io_err(&tpath))?;
        write_json(&dir.join(RegenVersion::meta_file(version)), &meta)?;
        self.versions.push(meta);
        self.version_images.insert(version, image);
        Ok(version)
    }
}
