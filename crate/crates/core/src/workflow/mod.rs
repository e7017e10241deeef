//! Recipe selection, prompts and configuration, end-to-end orchestration,
//! run-state persistence and geometry scoring.

mod config;
mod fidelity;
mod prompts;
mod recipe;
mod run;
mod state;
#[cfg(test)]
mod tests;

pub use config::{
    BackendConfig, BackendKind, ChartSection, ConfigError, ConfigFile, FlagOverrides, GroupOverride, Strengths,
    WorkflowConfig, BACKEND_ENDPOINT_ENV, DEFAULT_EDGE_WIDTH, DEFAULT_NODE_RADIUS,
};
pub use fidelity::{geometry_fidelity, geometry_scores, latent_similarity, mark_cells, mock_group_targets};
pub use prompts::{PromptError, PromptSpec, DEFAULT_NEGATIVE_PROMPT, DEFAULT_QUALITY_PROMPT};
pub use recipe::{check_recipe, legal_pipelines, legal_pregen, select_recipe, RecipeError, RecipeOverrides, RecipeSelection};
pub use run::{build_groups, rerun_from_sketch, run, run_config, run_to_dir, RunError, StageError};
pub use state::{
    read_trace, RegenVersion, RunConfig, RunState, SketchArtifacts, Stage, StageFailure, StateError, SynthArtifacts,
    CONFIG_FILE, FINAL_FILE, MASKS_DIR, PLAIN_FILE, SKETCH_DIR, SKETCH_IMAGE_FILE, STATE_FILE, SYNTH_FILE, TRACE_FILE,
};
