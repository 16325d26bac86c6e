use std::collections::HashSet;

use serde_json::Value;

use super::{validate, ExerciseKind, ExerciseSpec, SpecError};
use crate::placeholder;

/// Parse an exercise document. The result satisfies every spec invariant.
pub fn parse_exercise(document: &str) -> Result<ExerciseSpec, SpecError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| SpecError::Malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| SpecError::Malformed("document must be a JSON object".into()))?;
    match obj.get("kind") {
        Some(Value::String(k)) => {
            if ExerciseKind::parse(k).is_none() {
                return Err(SpecError::UnknownKind(k.clone()));
            }
        }
        Some(_) => return Err(SpecError::Malformed("kind must be a string".into())),
        None => return Err(SpecError::Malformed("missing field `kind`".into())),
    }

    let mut spec: ExerciseSpec =
        serde_json::from_value(value).map_err(|e| SpecError::Malformed(e.to_string()))?;

    let mut seen = HashSet::new();
    for slot in &spec.slots {
        if !seen.insert(slot.name.as_str()) {
            return Err(SpecError::DuplicateSlot(slot.name.clone()));
        }
    }
    if spec.kind.requires_lesson()
        && spec.lesson_text.as_deref().map_or(true, |l| l.trim().is_empty())
    {
        return Err(SpecError::MissingLesson(spec.kind));
    }
    let indices: Vec<u32> = spec.steps.iter().map(|s| s.index).collect();
    if indices.iter().enumerate().any(|(i, &ix)| ix as usize != i + 1) {
        return Err(SpecError::NonContiguousSteps(indices));
    }

    for step in &mut spec.steps {
        step.name = uppercase_outside_placeholders(&step.name);
    }

    let report = validate(&spec);
    if !report.is_empty() {
        return Err(SpecError::Invalid(report));
    }
    Ok(spec)
}

/// Serialize a spec back to the exercise file format.
pub fn serialize_exercise(spec: &ExerciseSpec) -> String {
    let mut s = serde_json::to_string_pretty(spec).expect("spec serializes");
    s.push('\n');
    s
}

pub(crate) fn uppercase_outside_placeholders(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in placeholder::regex().find_iter(text) {
        out.push_str(&text[last..m.start()].to_uppercase());
        out.push_str(m.as_str());
        last = m.end();
    }
    out.push_str(&text[last..].to_uppercase());
    out
}
