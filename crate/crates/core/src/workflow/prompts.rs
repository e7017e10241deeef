use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chart::PlainVisualization;

pub const DEFAULT_NEGATIVE_PROMPT: &str = "low quality, normal quality, worst quality, poorly drawn, error, abstract, blurry";
pub const DEFAULT_QUALITY_PROMPT: &str = "high resolution realistic clear photograph, 4k";

fn default_negative() -> String {
    DEFAULT_NEGATIVE_PROMPT.to_string()
}

fn default_quality() -> String {
    DEFAULT_QUALITY_PROMPT.to_string()
}

/// Context prompt, per-group sub-prompts and their binding to marks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PromptSpec {
    pub context: String,
    pub sub_prompts: Vec<String>,
    /// Mark id to sub-prompt index. When absent, a single sub-prompt binds
    /// every mark and otherwise marks bind to sub-prompts in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<BTreeMap<usize, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
    #[serde(default = "default_negative")]
    pub negative: String,
    #[serde(default = "default_quality")]
    pub quality: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompts.context must not be empty")]
    EmptyContext,
    #[error("prompts.subPrompts must not be empty")]
    NoSubPrompts,
    #[error("prompts.quality must not be empty when refine is enabled")]
    EmptyQuality,
    #[error("prompts.binding: mark {0} is not bound to a sub-prompt")]
    Unbound(usize),
    #[error("prompts.binding: mark {0} does not exist or cannot be stylized")]
    UnknownMark(usize),
    #[error("prompts.binding: mark {mark} refers to sub-prompt {index} of {count}")]
    BadIndex { mark: usize, index: usize, count: usize },
    #[error("prompts.binding is required: {marks} marks cannot be bound implicitly to {prompts} sub-prompts")]
    Ambiguous { marks: usize, prompts: usize },
}

impl PromptError {
    /// Dotted config path of the offending field.
    pub fn field(&self) -> &'static str {
        match self {
            PromptError::EmptyContext => "prompts.context",
            PromptError::NoSubPrompts => "prompts.subPrompts",
            PromptError::EmptyQuality => "prompts.quality",
            _ => "prompts.binding",
        }
    }
}

fn join(parts: &[&str]) -> String {
    parts.iter().map(|p| p.trim()).filter(|p| !p.is_empty()).collect::<Vec<_>>().join(", ")
}

impl PromptSpec {
    pub fn new(context: impl Into<String>, sub_prompts: &[&str]) -> Self {
        PromptSpec {
            context: context.into(),
            sub_prompts: sub_prompts.iter().map(|s| s.to_string()).collect(),
            binding: None,
            background: None,
            negative: default_negative(),
            quality: default_quality(),
        }
    }

    pub fn with_binding(mut self, pairs: &[(usize, usize)]) -> Self {
        self.binding = Some(pairs.iter().copied().collect());
        self
    }

    pub fn check(&self, refine: bool) -> Result<(), PromptError> {
        if self.context.trim().is_empty() {
            return Err(PromptError::EmptyContext);
        }
        if self.sub_prompts.is_empty() {
            return Err(PromptError::NoSubPrompts);
        }
        if refine && self.quality.trim().is_empty() {
            return Err(PromptError::EmptyQuality);
        }
        Ok(())
    }

    /// Text sent for one group: context then the group's sub-prompt.
    pub fn group_prompt(&self, index: usize) -> String {
        join(&[&self.context, self.sub_prompts.get(index).map_or("", String::as_str)])
    }

    /// Whole-image prompt: context, sub-prompts in order, background.
    pub fn full_prompt(&self) -> String {
        let mut parts = vec![self.context.as_str()];
        parts.extend(self.sub_prompts.iter().map(String::as_str));
        parts.extend(self.background.as_deref());
        join(&parts)
    }

    /// The whole-image prompt followed by the quality prompt.
    pub fn refine_prompt(&self) -> String {
        join(&[&self.full_prompt(), &self.quality])
    }

    /// Background text, with the context in front, if any was given.
    pub fn background_prompt(&self) -> Option<String> {
        self.background.as_deref().filter(|b| !b.trim().is_empty()).map(|b| join(&[&self.context, b]))
    }

    /// Resolves the binding against the stylizable marks of `plain`.
    pub fn resolve_binding(&self, plain: &PlainVisualization) -> Result<BTreeMap<usize, usize>, PromptError> {
        let marks: Vec<usize> = plain.stylizable_marks().map(|m| m.mark_id).collect();
        let count = self.sub_prompts.len();
        if count == 0 {
            return Err(PromptError::NoSubPrompts);
        }
        match &self.binding {
            Some(binding) => {
                for (&mark, &index) in binding {
                    if !marks.contains(&mark) {
                        return Err(PromptError::UnknownMark(mark));
                    }
                    if index >= count {
                        return Err(PromptError::BadIndex { mark, index, count });
                    }
                }
                if let Some(&m) = marks.iter().find(|m| !binding.contains_key(m)) {
                    return Err(PromptError::Unbound(m));
                }
                Ok(binding.clone())
            }
            None if count == 1 => Ok(marks.into_iter().map(|m| (m, 0)).collect()),
            None if count == marks.len() => Ok(marks.into_iter().enumerate().map(|(i, m)| (m, i)).collect()),
            None => Err(PromptError::Ambiguous { marks: marks.len(), prompts: count }),
        }
    }
}
