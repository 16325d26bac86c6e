use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::constraints::ConstraintFinding;
use crate::exercise_spec::ConstraintKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftIssue {
    Loop,
    OffTrack,
    MultiQuestion,
    StepMention,
    Refusal,
    Argumentative,
    Shallow,
}

impl DriftIssue {
    pub const ALL: [DriftIssue; 7] = [
        DriftIssue::Loop,
        DriftIssue::OffTrack,
        DriftIssue::MultiQuestion,
        DriftIssue::StepMention,
        DriftIssue::Refusal,
        DriftIssue::Argumentative,
        DriftIssue::Shallow,
    ];
}

fn refusal() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(?:i\s+can(?:'|\u{2019}|no)t\s+(?:help\s+with|assist\s+with|continue|participate|play)|i(?:'m|\u{2019}m|\s+am)\s+(?:not\s+able|unable)\s+to\s+(?:continue|help|play)|as\s+an\s+ai(?:\s+language\s+model)?,)",
        )
        .unwrap()
    })
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Highest-priority drift visible in an assistant turn: loop, then refusal,
/// then multiple questions, then step mentions. Other issues are never
/// auto-detected.
pub fn detect_drift(text: &str, previous_assistant: Option<&str>, findings: &[ConstraintFinding]) -> Option<DriftIssue> {
    if let Some(prev) = previous_assistant {
        let a = squash(text);
        if !a.is_empty() && a == squash(prev) {
            return Some(DriftIssue::Loop);
        }
    }
    if refusal().is_match(text) {
        return Some(DriftIssue::Refusal);
    }
    if findings.iter().any(|f| f.rule == ConstraintKind::OneQuestionPerTurn) {
        return Some(DriftIssue::MultiQuestion);
    }
    if findings.iter().any(|f| f.rule == ConstraintKind::NoStepMention) {
        return Some(DriftIssue::StepMention);
    }
    None
}
