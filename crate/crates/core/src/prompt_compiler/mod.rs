//! Renders exercise specs into system prompts, expands blueprint interviews
//! into generated prompts, and produces drift nudges.

mod blueprint;
mod nudge;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use blueprint::{
    compile_blueprint, filter_forbidden, interview_questions, BlueprintError, BlueprintKind, GeneratedPrompt, InterviewAnswers,
    TA_CLOSER, TA_OPENER_PREFIX, TUTOR_OPENER_PREFIX,
};
pub use nudge::{build_nudge, NudgeSource, NudgeText};

use crate::exercise_spec::{apply_customizations, validate, Bindings, ExerciseKind, ExerciseSpec, SpecError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub body: String,
    pub byte_length: usize,
}

impl PromptText {
    pub fn new(body: String) -> PromptText {
        let byte_length = body.len();
        PromptText { body, byte_length }
    }

    /// Append a reusable fragment as a trailing paragraph.
    pub fn with_fragment(&self, fragment: &str) -> PromptText {
        let mut body = self.body.clone();
        if !body.ends_with('\n') {
            body.push('\n');
        }
        body.push('\n');
        body.push_str(fragment.trim_end_matches('\n'));
        body.push('\n');
        PromptText::new(body)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CompileError {
    #[error("required slot {0:?} is not bound")]
    UnboundSlot(String),
    #[error("spec is invalid: {0}")]
    Invalid(String),
}

pub const STEPS_HEADING: &str = "Follow these steps in order:";
pub const DO_HEADING: &str = "You should do this:";
pub const DONT_HEADING: &str = "You should not do this:";

pub fn lesson_intro(kind: ExerciseKind) -> &'static str {
    match kind {
        ExerciseKind::CritiqueScenario => "You can draw on this information to create the scenario:",
        ExerciseKind::IntegrationAgent => "For context:",
        _ => "You can draw on this information to create the scenario and to give the student feedback.",
    }
}

/// Render a spec into the system-prompt layout. Unbound optional slots take
/// their defaults; an unbound required slot is an error.
pub fn compile_system_prompt(spec: &ExerciseSpec) -> Result<PromptText, CompileError> {
    let report = validate(spec);
    if !report.is_empty() {
        return Err(CompileError::Invalid(report.to_string()));
    }
    let spec = apply_customizations(spec, &Bindings::new()).map_err(|e| match e {
        SpecError::MissingBinding(name) => CompileError::UnboundSlot(name),
        other => CompileError::Invalid(other.to_string()),
    })?;

    let mut blocks: Vec<String> = vec![
        format!("GOAL: {}", spec.goal_text),
        format!("PERSONA: {}", spec.persona_text),
        format!("NARRATIVE: {}", spec.narrative_text),
        STEPS_HEADING.to_string(),
    ];
    for step in &spec.steps {
        blocks.push(format!("STEP {}: {}", step.index, step.name));
        if !step.do_items.is_empty() {
            let mut b = String::from(DO_HEADING);
            for (i, item) in step.do_items.iter().enumerate() {
                let _ = write!(b, "\n{}. {}", i + 1, item);
            }
            blocks.push(b);
        }
        if !step.dont_items.is_empty() {
            let mut b = String::from(DONT_HEADING);
            for item in &step.dont_items {
                let _ = write!(b, "\n- {item}");
            }
            blocks.push(b);
        }
        for item in &step.context_items {
            blocks.push(format!("Context for step {}: {}", step.index, item));
        }
        for item in &step.example_items {
            blocks.push(format!("Examples for step {}: {}", step.index, item));
        }
        if let Some(ins) = &step.transition.instruction {
            blocks.push(format!("Next step: {ins}"));
        }
    }
    if let Some(lesson) = &spec.lesson_text {
        blocks.push(format!("LESSON: {}", lesson_intro(spec.kind)));
        blocks.push(lesson.trim_end().to_string());
    }

    let mut body = blocks.join("\n\n").replace("\r\n", "\n");
    body.push('\n');
    Ok(PromptText::new(body))
}

const TUTOR_PROACTIVITY_RULE: &str = "Rule: Never ask the student if they understand or have any more questions; DO NOT ask if they follow, or if it makes sense, or if the explanation was helpful, or if something helps explain the general concept. The student doesn't know enough to know if they understand and it's your job to take the lead and scaffold the student and gauge their understanding. Always push the student to explain, talk a lot, give you examples until the student can explain all in their own words. That's how you can tell if they know something.";

/// Prompt fragment for models that defer to student self-assessment.
pub fn render_tutor_proactivity_rule() -> &'static str {
    TUTOR_PROACTIVITY_RULE
}
