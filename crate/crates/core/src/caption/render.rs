use crate::concept::{Concept, TaskKind, Track};
use crate::negatives::Arrangement;
use crate::text::{indefinite_article, words};
use crate::vocab::ObjectEntry;

use super::matcher::{check_concept, MatchConfig};
use super::CaptionRecord;

pub const WHITE_BACKGROUND_SUFFIX: &str = " on a white background";
pub const MINIMAL_GENERATOR_ID: &str = "template/minimal-v1";

/// `a red cube`, `an orange lamp`, or `red gloves` for pairs.
fn noun_phrase(object: &ObjectEntry, modifier: Option<&str>) -> String {
    let head = match modifier {
        Some(m) => format!("{m} {}", object.surface()),
        None => object.surface().to_string(),
    };
    if object.is_plural() {
        head
    } else {
        format!("{} {head}", indefinite_article(&head))
    }
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [only] => only.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Template text for any arrangement of the concept's elements.
pub fn render_arrangement(concept: &Concept, arrangement: &Arrangement) -> String {
    let object = |i: usize| &concept.objects[arrangement.object_tuple[i]];
    let attribute = |i: usize| concept.attributes()[arrangement.attribute_tuple[i]].as_str();
    let body = match concept.task {
        TaskKind::ColorBinding => {
            let items: Vec<String> =
                (0..arrangement.object_tuple.len()).map(|i| noun_phrase(object(i), Some(attribute(i)))).collect();
            join_list(&items)
        }
        TaskKind::PositionBinding => {
            let mut text = noun_phrase(object(0), None);
            for i in 0..arrangement.attribute_tuple.len() {
                text.push(' ');
                text.push_str(attribute(i));
                text.push(' ');
                text.push_str(&noun_phrase(object(i + 1), None));
            }
            text
        }
    };
    format!("{body}{WHITE_BACKGROUND_SUFFIX}")
}

pub fn render_minimal(concept: &Concept) -> CaptionRecord {
    let text = render_arrangement(concept, &Arrangement::identity(concept));
    let match_result = check_concept(&text, concept, None, MatchConfig::default());
    CaptionRecord {
        concept_id: concept.id.clone(),
        track: Track::Minimal,
        tokens: words(&text),
        text,
        match_result,
        attempts: 1,
        generator_id: MINIMAL_GENERATOR_ID.to_string(),
    }
}
