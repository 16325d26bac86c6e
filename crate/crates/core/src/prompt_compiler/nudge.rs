use serde::{Deserialize, Serialize};

use crate::exercise_spec::StepSpec;
use crate::session_engine::DriftIssue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "issue")]
pub enum NudgeSource {
    Budget,
    Drift(DriftIssue),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NudgeText {
    pub text: String,
    pub source: NudgeSource,
}

impl NudgeText {
    pub fn budget(text: impl Into<String>) -> NudgeText {
        NudgeText { text: text.into(), source: NudgeSource::Budget }
    }
}

fn step_goal(step: &StepSpec) -> String {
    match step.do_items.first() {
        Some(first) => format!("STEP {}: {}. {}", step.index, step.name, first),
        None => format!("STEP {}: {}", step.index, step.name),
    }
}

/// Reminder text for a drift issue, anchored on the current step.
pub fn build_nudge(issue: DriftIssue, step: &StepSpec) -> NudgeText {
    let goal = step_goal(step);
    let text = match issue {
        DriftIssue::Loop => format!(
            "Reminder: you are repeating yourself. Remember your goal for this part of the exercise and restart from it: {goal}"
        ),
        DriftIssue::OffTrack => format!(
            "Reminder: stay on the learning goal and do not discuss something else. You are working on {goal}"
        ),
        DriftIssue::MultiQuestion => {
            "Reminder: ask only one question at a time and wait for the student to respond before asking another."
                .to_string()
        }
        DriftIssue::StepMention => {
            "Reminder: do not mention the steps of your instructions to the student. Continue the conversation naturally."
                .to_string()
        }
        DriftIssue::Refusal => format!(
            "Reminder: this is an exercise the student has chosen to do. Stay in your role and continue with {goal}"
        ),
        DriftIssue::Argumentative => format!(
            "Reminder: do not argue with the student. Acknowledge their point briefly, stay in your role, and return to {goal}"
        ),
        DriftIssue::Shallow => {
            "Reminder: go deeper. Draw on the lesson, use concrete examples, and ask the student to explain their reasoning."
                .to_string()
        }
    };
    NudgeText { text, source: NudgeSource::Drift(issue) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exercise_spec::catalog_spec;

    #[test]
    fn every_issue_has_text() {
        let spec = catalog_spec("negotiation").unwrap();
        for issue in DriftIssue::ALL {
            let n = build_nudge(issue, &spec.steps[3]);
            assert!(!n.text.trim().is_empty(), "{issue:?}");
            assert_eq!(n.source, NudgeSource::Drift(issue));
        }
    }

    #[test]
    fn loop_restates_step() {
        let spec = catalog_spec("negotiation").unwrap();
        let n = build_nudge(DriftIssue::Loop, &spec.steps[3]);
        assert!(n.text.contains("STEP 4: BEGIN ROLE PLAY"));
        assert!(n.text.contains("Play their counterpart in the negotiation."));
    }

    #[test]
    fn multi_question_says_one_at_a_time() {
        let spec = catalog_spec("tutor").unwrap();
        let n = build_nudge(DriftIssue::MultiQuestion, &spec.steps[0]);
        assert!(n.text.contains("ask only one question at a time"));
    }
}
