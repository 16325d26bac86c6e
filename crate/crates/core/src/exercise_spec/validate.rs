use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ExerciseSpec, Severity, StepSelector, Trigger};
use crate::placeholder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationRule {
    EmptyId,
    EmptyTitle,
    EmptyGoal,
    EmptyPersona,
    EmptyNarrative,
    NoSteps,
    NonContiguousStepIndices,
    DuplicateSlotName,
    MissingLesson,
    EmptyStepName,
    StepNameNotUppercase,
    MarkerTriggerMismatch,
    EmptyMarker,
    SlotDefaultMismatch,
    ConstraintStepOutOfRange,
    ZeroTurnBudget,
    BudgetTriggerWithoutBudget,
    UnknownPlaceholder,
}

impl ValidationRule {
    pub fn describe(self) -> &'static str {
        match self {
            ValidationRule::EmptyId => "id is empty",
            ValidationRule::EmptyTitle => "title is empty",
            ValidationRule::EmptyGoal => "goal is empty",
            ValidationRule::EmptyPersona => "persona is empty",
            ValidationRule::EmptyNarrative => "narrative is empty",
            ValidationRule::NoSteps => "spec has no steps",
            ValidationRule::NonContiguousStepIndices => "non-contiguous step indices",
            ValidationRule::DuplicateSlotName => "duplicate slot name",
            ValidationRule::MissingLesson => "this kind requires a lesson",
            ValidationRule::EmptyStepName => "step name is empty",
            ValidationRule::StepNameNotUppercase => "step name is not uppercase",
            ValidationRule::MarkerTriggerMismatch => {
                "marker must be present exactly when trigger is assistant_marker"
            }
            ValidationRule::EmptyMarker => "marker token is empty",
            ValidationRule::SlotDefaultMismatch => {
                "required slots need an empty default, optional slots a non-empty one"
            }
            ValidationRule::ConstraintStepOutOfRange => "constraint names a step that does not exist",
            ValidationRule::ZeroTurnBudget => "turn budget must be at least 1",
            ValidationRule::BudgetTriggerWithoutBudget => "budget_exhausted trigger needs a turn budget",
            ValidationRule::UnknownPlaceholder => "placeholder names no slot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationFinding {
    pub path: String,
    pub rule: ValidationRule,
    pub severity: Severity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<ValidationFinding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn rules(&self) -> Vec<ValidationRule> {
        self.findings.iter().map(|f| f.rule).collect()
    }

    fn push(&mut self, path: impl Into<String>, rule: ValidationRule) {
        let severity = match rule {
            ValidationRule::StepNameNotUppercase => Severity::Warn,
            _ => Severity::Fail,
        };
        self.findings.push(ValidationFinding { path: path.into(), rule, severity });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.findings.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.path, v.rule.describe())?;
        }
        Ok(())
    }
}

/// Check every spec invariant and report all violations.
pub fn validate(spec: &ExerciseSpec) -> ValidationReport {
    use ValidationRule::*;
    let mut r = ValidationReport::default();

    for (path, value, rule) in [
        ("id", &spec.id, EmptyId),
        ("title", &spec.title, EmptyTitle),
        ("goal", &spec.goal_text, EmptyGoal),
        ("persona", &spec.persona_text, EmptyPersona),
        ("narrative", &spec.narrative_text, EmptyNarrative),
    ] {
        if value.trim().is_empty() {
            r.push(path, rule);
        }
    }

    if spec.steps.is_empty() {
        r.push("steps", NoSteps);
    }
    if spec.steps.iter().enumerate().any(|(i, s)| s.index as usize != i + 1) {
        r.push("steps", NonContiguousStepIndices);
    }

    let mut seen = HashSet::new();
    for (i, slot) in spec.slots.iter().enumerate() {
        if !seen.insert(slot.name.as_str()) {
            r.push(format!("slots[{i}].name"), DuplicateSlotName);
        }
        if slot.required != slot.default_text.is_empty() {
            r.push(format!("slots[{i}].default_text"), SlotDefaultMismatch);
        }
    }

    if spec.kind.requires_lesson()
        && spec.lesson_text.as_deref().map_or(true, |l| l.trim().is_empty())
    {
        r.push("lesson", MissingLesson);
    }

    for (i, step) in spec.steps.iter().enumerate() {
        let p = format!("steps[{i}]");
        if step.name.trim().is_empty() {
            r.push(format!("{p}.name"), EmptyStepName);
        } else if crate::exercise_spec::parse::uppercase_outside_placeholders(&step.name) != step.name {
            r.push(format!("{p}.name"), StepNameNotUppercase);
        }
        let t = &step.transition;
        match (&t.marker, t.trigger == Trigger::AssistantMarker) {
            (Some(m), true) if m.as_str().is_empty() => {
                r.push(format!("{p}.transition.marker"), EmptyMarker)
            }
            (Some(_), true) | (None, false) => {}
            _ => r.push(format!("{p}.transition"), MarkerTriggerMismatch),
        }
        if let Some(b) = &step.turn_budget {
            if b.max_student_turns == 0 {
                r.push(format!("{p}.turn_budget.max_student_turns"), ZeroTurnBudget);
            }
        } else if t.trigger == Trigger::BudgetExhausted {
            r.push(format!("{p}.turn_budget"), BudgetTriggerWithoutBudget);
        }
    }

    for (i, rule) in spec.constraints.iter().enumerate() {
        if let StepSelector::Steps(v) = &rule.applies_to_steps {
            if v.iter().any(|&s| s == 0 || s as usize > spec.steps.len()) {
                r.push(format!("constraints[{i}].applies_to"), ConstraintStepOutOfRange);
            }
        }
    }

    let slot_names: HashSet<&str> = spec.slots.iter().map(|s| s.name.as_str()).collect();
    let mut unknown = Vec::new();
    spec.for_each_text(|path, text| {
        for name in placeholder::names(text) {
            if !slot_names.contains(name) {
                unknown.push(path.to_string());
                break;
            }
        }
    });
    for path in unknown {
        r.push(path, UnknownPlaceholder);
    }
    r
}
