use serde::{Deserialize, Serialize};

use crate::chart::ChartKind;
use crate::sketch::PregenMethod;
use crate::synthesize::SynthPipeline;

/// One concrete path through the three stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecipeSelection {
    pub kind: ChartKind,
    pub realistic: bool,
    pub pregen: PregenMethod,
    pub smooth: bool,
    pub synthesize: SynthPipeline,
    pub refine: bool,
}

/// User choices layered over the defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecipeOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pregen: Option<PregenMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<SynthPipeline>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RecipeError {
    #[error("invalid recipe: {pipeline} is not a synthesize pipeline for {realism} {kind} charts")]
    Pipeline { kind: ChartKind, realism: &'static str, pipeline: &'static str },
    #[error("invalid recipe: {method:?} pre-generation is not available for {kind} charts")]
    Pregen { kind: ChartKind, method: PregenMethod },
    #[error("invalid recipe: {0}")]
    Flags(String),
}

fn realism_label(realistic: bool) -> &'static str {
    if realistic {
        "realistic"
    } else {
        "non-realistic"
    }
}

/// Synthesize pipelines allowed for a chart kind and style, default first.
pub fn legal_pipelines(kind: ChartKind, realistic: bool) -> &'static [SynthPipeline] {
    use SynthPipeline::*;
    match (kind, realistic) {
        (ChartKind::Network, true) => &[Depth2imgEdge, ControlnetCanny],
        (ChartKind::Network, false) => &[Img2imgEdge, ControlnetCanny],
        (ChartKind::Bar | ChartKind::Pie, true) => &[Dmp, Img2img],
        (ChartKind::Bar | ChartKind::Pie, false) => &[Img2img, Dmp],
        (ChartKind::Area, _) => &[Dmp, ControlnetCanny],
    }
}

/// Pre-generation methods allowed for a chart kind, default first.
pub fn legal_pregen(kind: ChartKind) -> &'static [PregenMethod] {
    match kind {
        ChartKind::Network | ChartKind::Bar => &[PregenMethod::GridImg2img],
        ChartKind::Pie | ChartKind::Area => &[PregenMethod::DirectDepth2img, PregenMethod::FreeformTxt2img],
    }
}

fn smooths(kind: ChartKind) -> bool {
    kind == ChartKind::Network
}

fn refines(kind: ChartKind) -> bool {
    kind != ChartKind::Network
}

/// Default recipe for a chart kind, with overrides applied and checked.
pub fn select_recipe(kind: ChartKind, realistic: bool, overrides: RecipeOverrides) -> Result<RecipeSelection, RecipeError> {
    let recipe = RecipeSelection {
        kind,
        realistic,
        pregen: overrides.pregen.unwrap_or(legal_pregen(kind)[0]),
        smooth: smooths(kind),
        synthesize: overrides.pipeline.unwrap_or(legal_pipelines(kind, realistic)[0]),
        refine: refines(kind),
    };
    check_recipe(&recipe)?;
    Ok(recipe)
}

pub fn check_recipe(r: &RecipeSelection) -> Result<(), RecipeError> {
    if !legal_pipelines(r.kind, r.realistic).contains(&r.synthesize) {
        return Err(RecipeError::Pipeline {
            kind: r.kind,
            realism: realism_label(r.realistic),
            pipeline: r.synthesize.as_str(),
        });
    }
    if !legal_pregen(r.kind).contains(&r.pregen) {
        return Err(RecipeError::Pregen { kind: r.kind, method: r.pregen });
    }
    if r.smooth != smooths(r.kind) || r.refine != refines(r.kind) {
        return Err(RecipeError::Flags(format!(
            "{} charts use smooth={} refine={}",
            r.kind,
            smooths(r.kind),
            refines(r.kind)
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_kind() {
        let r = select_recipe(ChartKind::Network, true, RecipeOverrides::default()).unwrap();
        assert_eq!((r.synthesize, r.smooth, r.refine), (SynthPipeline::Depth2imgEdge, true, false));
        let r = select_recipe(ChartKind::Network, false, RecipeOverrides::default()).unwrap();
        assert_eq!(r.synthesize, SynthPipeline::Img2imgEdge);
        let r = select_recipe(ChartKind::Bar, true, RecipeOverrides::default()).unwrap();
        assert_eq!((r.synthesize, r.smooth, r.refine), (SynthPipeline::Dmp, false, true));
        let r = select_recipe(ChartKind::Bar, false, RecipeOverrides::default()).unwrap();
        assert_eq!(r.synthesize, SynthPipeline::Img2img);
        let r = select_recipe(ChartKind::Pie, true, RecipeOverrides::default()).unwrap();
        assert_eq!(r.pregen, PregenMethod::DirectDepth2img);
        let r = select_recipe(ChartKind::Area, false, RecipeOverrides::default()).unwrap();
        assert_eq!((r.synthesize, r.refine), (SynthPipeline::Dmp, true));
    }

    #[test]
    fn bar_rejects_controlnet() {
        let o = RecipeOverrides { pipeline: Some(SynthPipeline::ControlnetCanny), pregen: None };
        assert!(matches!(select_recipe(ChartKind::Bar, true, o), Err(RecipeError::Pipeline { .. })));
    }

    #[test]
    fn pie_accepts_freeform() {
        let o = RecipeOverrides { pregen: Some(PregenMethod::FreeformTxt2img), pipeline: None };
        assert_eq!(select_recipe(ChartKind::Pie, true, o).unwrap().pregen, PregenMethod::FreeformTxt2img);
        let o = RecipeOverrides { pregen: Some(PregenMethod::GridImg2img), pipeline: None };
        assert!(select_recipe(ChartKind::Pie, true, o).is_err());
    }
}
