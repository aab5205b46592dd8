use serde::{Deserialize, Serialize};

use crate::concept::{Concept, TaskKind};
use crate::negatives::Arrangement;

use super::render::render_arrangement;
use super::{CaptionError, WHITE_BACKGROUND_SUFFIX};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system_text: String,
    pub user_text: String,
    pub attempt: u32,
}

/// Prompt assets. `{num_obj}`, `{obj_plural}` and `{obj_colors_text}`
/// (`{obj_relations_text}` for position) are substituted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub color_system: String,
    pub color_user: String,
    pub color_user_insistent: String,
    pub position_system: String,
    pub position_user: String,
    pub position_user_insistent: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            color_system: include_str!("../../assets/prompts/color_system.txt").to_string(),
            color_user: include_str!("../../assets/prompts/color_user.txt").to_string(),
            color_user_insistent: include_str!("../../assets/prompts/color_user_insistent.txt").to_string(),
            position_system: include_str!("../../assets/prompts/position_system.txt").to_string(),
            position_user: include_str!("../../assets/prompts/position_user.txt").to_string(),
            position_user_insistent: include_str!("../../assets/prompts/position_user_insistent.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn system(&self, task: TaskKind) -> &str {
        match task {
            TaskKind::ColorBinding => &self.color_system,
            TaskKind::PositionBinding => &self.position_system,
        }
    }

    pub fn user(&self, task: TaskKind, insistent: bool) -> &str {
        match (task, insistent) {
            (TaskKind::ColorBinding, false) => &self.color_user,
            (TaskKind::ColorBinding, true) => &self.color_user_insistent,
            (TaskKind::PositionBinding, false) => &self.position_user,
            (TaskKind::PositionBinding, true) => &self.position_user_insistent,
        }
    }

    pub fn pairs_placeholder(task: TaskKind) -> &'static str {
        match task {
            TaskKind::ColorBinding => "{obj_colors_text}",
            TaskKind::PositionBinding => "{obj_relations_text}",
        }
    }
}

/// One phrase per binding: `a green chair` or `a chair to the left of a lamp`.
pub fn pair_phrases(concept: &Concept) -> Vec<String> {
    let identity = Arrangement::identity(concept);
    match concept.task {
        TaskKind::ColorBinding => (0..concept.n)
            .map(|i| {
                let single = Arrangement {
                    object_tuple: vec![identity.object_tuple[i]],
                    attribute_tuple: vec![identity.attribute_tuple[i]],
                    scheme: identity.scheme,
                };
                strip_suffix(render_arrangement(concept, &single))
            })
            .collect(),
        TaskKind::PositionBinding => (0..concept.n - 1)
            .map(|i| {
                let single = Arrangement {
                    object_tuple: vec![i, i + 1],
                    attribute_tuple: vec![i],
                    scheme: identity.scheme,
                };
                strip_suffix(render_arrangement(concept, &single))
            })
            .collect(),
    }
}

fn strip_suffix(text: String) -> String {
    text.strip_suffix(WHITE_BACKGROUND_SUFFIX).map(str::to_string).unwrap_or(text)
}

pub fn build_contextual_prompt(
    concept: &Concept,
    attempt: u32,
    templates: &PromptTemplates,
) -> Result<PromptPair, CaptionError> {
    if attempt == 0 {
        return Err(CaptionError::InvalidAttempt);
    }
    let pairs_text = pair_phrases(concept)
        .iter()
        .map(|p| format!("'{p}'"))
        .collect::<Vec<_>>()
        .join(" and ");
    let obj_plural = if concept.n == 1 { "object" } else { "objects" };
    let user_text = templates
        .user(concept.task, attempt > 1)
        .replace("{num_obj}", &concept.n.to_string())
        .replace("{obj_plural}", obj_plural)
        .replace(PromptTemplates::pairs_placeholder(concept.task), &pairs_text);
    Ok(PromptPair { system_text: templates.system(concept.task).to_string(), user_text, attempt })
}
