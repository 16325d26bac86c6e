//! Heuristic monitors over assistant turns.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::markers::normalize_for_markers;
use crate::exercise_spec::{ConstraintKind, ConstraintRule, Severity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintFinding {
    pub rule: ConstraintKind,
    /// Excerpt of the checked text; always a substring of it.
    pub evidence: String,
    pub severity: Severity,
}

pub const FEEDBACK_HEADINGS: [&str; 2] = ["GENERAL FEEDBACK", "ADVICE MOVING FORWARD"];

/// Phrases treated as handing the student an answer.
pub const ANSWER_GIVING_PHRASES: [&str; 9] = [
    "the answer is",
    "the correct answer is",
    "here is the answer",
    "here's the answer",
    "the solution is",
    "here is the solution",
    "here's the solution",
    "the connection is",
    "to answer your question directly",
];

/// Phrases treated as the model narrating its own role-play behavior.
pub const SELF_BEHAVIOR_PHRASES: [&str; 9] = [
    "as an inquisitive student",
    "as a chatty student",
    "as a skeptical student",
    "as a curious student",
    "i am playing",
    "i'm playing the role",
    "in my role as",
    "i will act like",
    "i'll act like",
];

const EXCERPT_CHARS: usize = 120;

/// Run every rule in `rules` against `text`.
pub fn check_constraints(text: &str, rules: &[ConstraintRule]) -> Vec<ConstraintFinding> {
    let mut out = Vec::new();
    for rule in rules {
        let evidence = match rule.kind {
            ConstraintKind::OneQuestionPerTurn => multi_question_evidence(text),
            ConstraintKind::NumberedQuestions => unnumbered_question(text),
            ConstraintKind::NoStepMention => step_mention(text),
            ConstraintKind::FeedbackFormat => feedback_missing(text),
            ConstraintKind::NoAnswerGiving => phrase_hit(text, answer_regex()),
            ConstraintKind::NoSelfBehaviorDescription => phrase_hit(text, self_behavior_regex()),
        };
        if let Some(evidence) = evidence {
            let severity = match rule.kind {
                ConstraintKind::NoAnswerGiving | ConstraintKind::NoSelfBehaviorDescription => Severity::Warn,
                _ => rule.severity,
            };
            out.push(ConstraintFinding { rule: rule.kind, evidence, severity });
        }
    }
    out
}

/// Byte offsets of sentence-terminal question marks. A `?` is terminal when,
/// after any run of further `?` and closing quotes, brackets or emphasis, it
/// is followed by whitespace or the end of the text. Runs like `??` count
/// once. Question marks inside backtick code spans are ignored.
pub fn terminal_question_marks(text: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut code_fence: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c == '`' {
            let mut n = 0;
            while i + n < chars.len() && chars[i + n].1 == '`' {
                n += 1;
            }
            code_fence = match code_fence {
                None => Some(n),
                Some(open) if open == n => None,
                keep => keep,
            };
            i += n;
            continue;
        }
        if c == '?' && code_fence.is_none() {
            let mut j = i;
            while j + 1 < chars.len() && chars[j + 1].1 == '?' {
                j += 1;
            }
            let mut k = j + 1;
            while k < chars.len() && is_closer(chars[k].1) {
                k += 1;
            }
            if k >= chars.len() || chars[k].1.is_whitespace() {
                out.push(chars[i].0);
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    out
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '*' | '_' | '\u{201D}' | '\u{2019}' | '\u{00BB}')
}

pub fn count_questions(text: &str) -> usize {
    terminal_question_marks(text).len()
}

/// Start of the sentence containing byte offset `at`.
fn sentence_start(text: &str, at: usize) -> usize {
    let head = &text[..at];
    let cut = head
        .char_indices()
        .rev()
        .find(|&(_, c)| matches!(c, '.' | '!' | '?' | '\n'))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    let rest = &text[cut..at];
    cut + (rest.len() - rest.trim_start().len())
}

fn question_end(text: &str, at: usize) -> usize {
    let tail = &text[at..];
    at + tail.find(|c: char| c != '?').unwrap_or(tail.len())
}

fn multi_question_evidence(text: &str) -> Option<String> {
    let qs = terminal_question_marks(text);
    if qs.len() <= 1 {
        return None;
    }
    let start = sentence_start(text, qs[0]);
    let end = question_end(text, *qs.last().unwrap());
    Some(text[start..end].to_string())
}

fn unnumbered_question(text: &str) -> Option<String> {
    static NUM: OnceLock<Regex> = OnceLock::new();
    let num = NUM.get_or_init(|| Regex::new(r"^[ \t>*_]*\d+[.)]").unwrap());
    for q in terminal_question_marks(text) {
        let line_start = text[..q].rfind('\n').map(|i| i + 1).unwrap_or(0);
        if !num.is_match(&text[line_start..q]) {
            let start = sentence_start(text, q);
            return Some(text[start..question_end(text, q)].to_string());
        }
    }
    None
}

fn step_mention(text: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\bstep\s+\d+").unwrap());
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim_start().starts_with('#') {
            if let Some(m) = re.find(line) {
                return Some(text[offset + m.start()..offset + m.end()].to_string());
            }
        }
        offset += line.len();
    }
    None
}

fn feedback_missing(text: &str) -> Option<String> {
    let norm = normalize_for_markers(text);
    if FEEDBACK_HEADINGS.iter().all(|h| norm.contains(h)) {
        return None;
    }
    let end = text.char_indices().nth(EXCERPT_CHARS).map(|(i, _)| i).unwrap_or(text.len());
    Some(text[..end].to_string())
}

fn phrase_regex(phrases: &[&str]) -> Regex {
    let alts: Vec<String> = phrases
        .iter()
        .map(|p| regex::escape(p).replace('\'', "['\u{2019}]"))
        .collect();
    Regex::new(&format!(r"(?i)\b(?:{})", alts.join("|"))).unwrap()
}

fn answer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| phrase_regex(&ANSWER_GIVING_PHRASES))
}

fn self_behavior_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| phrase_regex(&SELF_BEHAVIOR_PHRASES))
}

fn phrase_hit(text: &str, re: &Regex) -> Option<String> {
    re.find(text).map(|m| m.as_str().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exercise_spec::StepSelector;

    fn rule(kind: ConstraintKind) -> ConstraintRule {
        ConstraintRule { kind, severity: Severity::Fail, applies_to_steps: StepSelector::All }
    }

    #[test]
    fn two_numbered_questions() {
        let t = "1. What is your experience? 2. What is your role?";
        let f = check_constraints(t, &[rule(ConstraintKind::OneQuestionPerTurn)]);
        assert_eq!(f.len(), 1);
        assert!(f[0].evidence.contains("What is your experience?"));
        assert!(f[0].evidence.contains("What is your role?"));
        assert!(t.contains(&f[0].evidence));
    }

    #[test]
    fn question_mark_edge_cases() {
        assert_eq!(count_questions("Really?? Are you sure?"), 2);
        assert_eq!(count_questions("She asked \"why?\" and left."), 1);
        assert_eq!(count_questions("(is it?) Fine."), 1);
        assert_eq!(count_questions("Use `a?b` or `c? d` here."), 0);
        assert_eq!(count_questions("Is x?y valid"), 0);
        assert_eq!(count_questions("What now?"), 1);
    }

    #[test]
    fn feedback_headings() {
        let ok = "**GENERAL FEEDBACK**\nGood.\n\n## Advice moving forward\nPractice.";
        assert!(check_constraints(ok, &[rule(ConstraintKind::FeedbackFormat)]).is_empty());
        let bad = "GENERAL FEEDBACK: nice work overall.";
        let f = check_constraints(bad, &[rule(ConstraintKind::FeedbackFormat)]);
        assert_eq!(f.len(), 1);
        assert!(bad.starts_with(&f[0].evidence));
    }

    #[test]
    fn step_mention_outside_headings() {
        let r = [rule(ConstraintKind::NoStepMention)];
        assert!(check_constraints("# Step 2\nLet's go.", &r).is_empty());
        let f = check_constraints("Now for step 3 of the plan.", &r);
        assert_eq!(f[0].evidence, "step 3");
    }

    #[test]
    fn heuristics_are_warn_only() {
        let f = check_constraints("The answer is 42.", &[rule(ConstraintKind::NoAnswerGiving)]);
        assert_eq!(f[0].severity, Severity::Warn);
        let f = check_constraints(
            "As a skeptical student, I doubt it.",
            &[rule(ConstraintKind::NoSelfBehaviorDescription)],
        );
        assert_eq!(f[0].severity, Severity::Warn);
    }

    #[test]
    fn numbered_questions() {
        let r = [rule(ConstraintKind::NumberedQuestions)];
        assert!(check_constraints("Welcome!\n1. What is your experience?", &r).is_empty());
        assert_eq!(check_constraints("Welcome! What is your experience?", &r)[0].evidence, "What is your experience?");
    }
}
