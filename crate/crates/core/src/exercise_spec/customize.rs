use std::collections::{BTreeMap, HashMap};

use super::parse::uppercase_outside_placeholders;
use super::{ExerciseSpec, SpecError};
use crate::placeholder;

pub type Bindings = BTreeMap<String, String>;

/// Substitute slot placeholders with bound text, or slot defaults when
/// unbound. Replacement is a single literal pass: text spliced in from a
/// binding is never expanded again. The result has no slots left.
pub fn apply_customizations(spec: &ExerciseSpec, bindings: &Bindings) -> Result<ExerciseSpec, SpecError> {
    for name in bindings.keys() {
        if spec.slot(name).is_none() {
            return Err(SpecError::UnknownSlot(name.clone()));
        }
    }
    let mut values: HashMap<&str, &str> = HashMap::new();
    for slot in &spec.slots {
        match bindings.get(&slot.name) {
            Some(v) => {
                values.insert(&slot.name, v);
            }
            None if slot.required => return Err(SpecError::MissingBinding(slot.name.clone())),
            None => {
                values.insert(&slot.name, &slot.default_text);
            }
        }
    }

    let mut out = spec.map_prose(|text| splice(text, &values));
    for step in &mut out.steps {
        step.name = uppercase_outside_placeholders(&step.name);
    }
    out.slots.clear();
    Ok(out)
}

fn splice(text: &str, values: &HashMap<&str, &str>) -> String {
    placeholder::regex()
        .replace_all(text, |caps: &regex::Captures<'_>| {
            let name = caps.get(1).unwrap().as_str();
            match values.get(name) {
                Some(v) => (*v).to_string(),
                None => caps[0].to_string(),
            }
        })
        .into_owned()
}
