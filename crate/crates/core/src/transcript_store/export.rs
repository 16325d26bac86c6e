use std::fmt::Write as _;

use super::Transcript;
use crate::exercise_spec::ExerciseKind;
use crate::model_client::Role;

/// Questions appended to an exported transcript for the student to answer.
pub fn reflection_questions(kind: ExerciseKind) -> &'static [&'static str] {
    match kind {
        ExerciseKind::RolePlay | ExerciseKind::GoalPlay => &[
            "What happened?",
            "What did you do?",
            "How did the simulation end?",
            "What would you do differently next time and why?",
        ],
        ExerciseKind::CritiqueScenario => &["Did the AI apply this concept correctly?"],
        ExerciseKind::TeachAi => &[
            "Which \"student\" did you choose to teach?",
            "What questions did the AI ask?",
            "To what extent did the AI realistically portray a novice?",
            "Did the AI ask a question that you weren't sure how to answer?",
            "What question did you suggest asking the AI student to check for understanding?",
        ],
        ExerciseKind::ReflectionCoach | ExerciseKind::IntegrationAgent => &[
            "Did the AI surprise you in any of your interactions?",
            "Was it helpful in thinking deeply about course content?",
            "Did it show bias and if so, how?",
            "Did it hallucinate or make a plausible sounding error about a topic we studied?",
        ],
        ExerciseKind::CoCreateCase => &[
            "Does the case illustrate the problem effectively (why or why not)?",
            "What might be your recommendation?",
            "How might a peer react to this case?",
        ],
        ExerciseKind::Tutor => &[
            "Explain the topic you worked on in your own words.",
            "Did the AI make any errors, and how did you notice them?",
        ],
    }
}

fn role_label(role: Role) -> &'static str {
    match role {
        Role::User => "Student",
        Role::Assistant => "AI",
        Role::System => "System",
    }
}

/// Render a transcript as a markdown document. Output depends only on the
/// transcript.
pub fn export_markdown(t: &Transcript) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", t.meta.spec_title);
    out.push('\n');
    let _ = writeln!(
        out,
        "Date: {} | Exercise: {} | Session: {}",
        t.meta.created_at.format("%Y-%m-%d %H:%M UTC"),
        t.meta.spec_id,
        t.meta.session_id
    );

    let mut step = 0;
    for (i, turn) in t.turns.iter().enumerate() {
        if turn.step_index != step {
            step = turn.step_index;
            out.push('\n');
            let _ = writeln!(out, "— STEP {}: {} —", step, t.step_name(step));
        }
        let body = if i == 0 && turn.role == Role::System && t.meta.hide_instructions {
            "(exercise instructions hidden)".to_string()
        } else {
            turn.text.trim_end().to_string()
        };
        let mut last = String::new();
        for f in &turn.findings {
            let _ = write!(last, " ⚑ {}", f.rule.as_str());
        }
        for (n, a) in t.annotations.iter().enumerate() {
            if a.turn_ordinal == i {
                let _ = write!(last, " [^{}]", n + 1);
            }
        }
        out.push('\n');
        let _ = writeln!(out, "**{}:** {}{}", role_label(turn.role), body, last);
    }

    if !t.annotations.is_empty() {
        out.push('\n');
        for (n, a) in t.annotations.iter().enumerate() {
            let note = a.note.trim().replace('\n', " ");
            let _ = writeln!(out, "[^{}]: {} ({}): {}", n + 1, a.author, a.created_at.format("%Y-%m-%d %H:%M UTC"), note);
        }
    }

    out.push('\n');
    out.push_str("## Reflection\n\n");
    for (n, q) in reflection_questions(t.meta.kind).iter().enumerate() {
        let _ = writeln!(out, "{}. {}", n + 1, q);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exercise_spec::{ConstraintKind, Severity};
    use crate::session_engine::{ConstraintFinding, Turn};
    use crate::transcript_store::{Annotation, TranscriptMeta};
    use chrono::{TimeZone, Utc};

    fn turn(role: Role, text: &str, step: u32) -> Turn {
        Turn {
            role,
            text: text.into(),
            timestamp: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
            step_index: step,
            detected_markers: vec![],
            findings: vec![],
            nudge: None,
        }
    }

    fn sample() -> Transcript {
        let meta = TranscriptMeta {
            session_id: "s1".into(),
            spec_id: "negotiation".into(),
            spec_title: "Negotiation".into(),
            kind: ExerciseKind::RolePlay,
            step_names: vec!["ASK QUESTIONS".into(), "PICK".into()],
            hide_instructions: false,
            created_at: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
        };
        let mut a = turn(Role::Assistant, "Hi?\nWhat now? Why?", 1);
        a.findings.push(ConstraintFinding {
            rule: ConstraintKind::OneQuestionPerTurn,
            evidence: "What now? Why?".into(),
            severity: Severity::Fail,
        });
        let turns = vec![turn(Role::System, "prompt", 1), turn(Role::User, "hello", 1), a, turn(Role::User, "ok", 2)];
        let notes = vec![Annotation {
            author: "prof".into(),
            turn_ordinal: 2,
            note: "two questions".into(),
            created_at: Utc.with_ymd_and_hms(2024, 5, 2, 9, 0, 0).unwrap(),
        }];
        Transcript::new(meta, turns, notes)
    }

    #[test]
    fn flags_banners_footnotes() {
        let md = export_markdown(&sample());
        assert!(md.starts_with("# Negotiation\n"));
        assert!(md.contains("— STEP 1: ASK QUESTIONS —"));
        assert!(md.contains("— STEP 2: PICK —"));
        assert!(md.contains("What now? Why? ⚑ one_question_per_turn [^1]\n"));
        assert!(md.contains("[^1]: prof (2024-05-02 09:00 UTC): two questions"));
        assert!(md.contains("What would you do differently next time and why?"));
        assert_eq!(md, export_markdown(&sample()));
    }
}
