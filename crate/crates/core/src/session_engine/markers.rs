//! Marker detection over normalized assistant text.

use std::sync::OnceLock;

use regex::Regex;

use crate::exercise_spec::Marker;

/// Strip markdown emphasis (`* _ #`), straighten apostrophes, uppercase and
/// collapse whitespace. Idempotent.
pub fn normalize_for_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        let c = match c {
            '*' | '_' | '#' => continue,
            '\u{2018}' | '\u{2019}' | '\u{02BC}' => '\'',
            c => c,
        };
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(c.to_uppercase());
    }
    out
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Markers present in `text`, in order of first appearance. Longer tokens are
/// matched first and claim their span, so "SCENE" never fires inside
/// "END OF SCENE".
pub fn detect_markers(text: &str, known: &[Marker]) -> Vec<Marker> {
    let norm = normalize_for_markers(text);
    let mut tokens: Vec<&Marker> = known.iter().filter(|m| !m.as_str().is_empty()).collect();
    tokens.sort_by(|a, b| b.as_str().len().cmp(&a.as_str().len()).then(a.cmp(b)));
    tokens.dedup();

    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut hits: Vec<(usize, Marker)> = Vec::new();
    for tok in tokens {
        let t = tok.as_str();
        let mut first = None;
        for (start, _) in norm.match_indices(t) {
            let end = start + t.len();
            let before_ok = norm[..start].chars().next_back().map_or(true, |c| !is_word_char(c));
            let after_ok = norm[end..].chars().next().map_or(true, |c| !is_word_char(c));
            if !before_ok || !after_ok {
                continue;
            }
            if claimed.iter().any(|&(s, e)| start < e && s < end) {
                continue;
            }
            claimed.push((start, end));
            first.get_or_insert(start);
        }
        if let Some(pos) = first {
            hits.push((pos, tok.clone()));
        }
    }
    hits.sort_by_key(|(pos, _)| *pos);
    hits.into_iter().map(|(_, m)| m).collect()
}

/// True when the text offers a numbered list of at least two options,
/// one per line, starting at 1.
pub fn has_choice_listing(text: &str) -> bool {
    static ONE: OnceLock<Regex> = OnceLock::new();
    static TWO: OnceLock<Regex> = OnceLock::new();
    let one = ONE.get_or_init(|| Regex::new(r"(?m)^[ \t>*_]*1[.)][*_]*[ \t]+\S").unwrap());
    let two = TWO.get_or_init(|| Regex::new(r"(?m)^[ \t>*_]*2[.)][*_]*[ \t]+\S").unwrap());
    match (one.find(text), two.find(text)) {
        (Some(a), Some(b)) => a.start() < b.start(),
        _ => false,
    }
}
