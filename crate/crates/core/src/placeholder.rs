//! `{{slot_name}}` placeholder syntax.

use std::sync::OnceLock;

use regex::Regex;

pub fn regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}").unwrap())
}

/// Slot names referenced by `text`, in order of appearance.
pub fn names(text: &str) -> impl Iterator<Item = &str> {
    regex().captures_iter(text).map(|c| c.get(1).unwrap().as_str())
}

pub fn contains_placeholder(text: &str) -> bool {
    regex().is_match(text)
}
