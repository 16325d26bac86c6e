//! Exercise specifications: the declarative form of a structured classroom
//! prompt (goal, persona, narrative, ordered steps, lesson) plus instructor
//! customization slots and machine-checked constraints.

mod catalog;
mod customize;
mod parse;
mod validate;

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

pub use catalog::{builtin_catalog, catalog_document, catalog_spec, CATALOG_IDS};
pub use customize::{apply_customizations, Bindings};
pub use parse::{parse_exercise, serialize_exercise};
pub use validate::{validate, ValidationFinding, ValidationReport, ValidationRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExerciseKind {
    RolePlay,
    GoalPlay,
    CritiqueScenario,
    TeachAi,
    CoCreateCase,
    ReflectionCoach,
    IntegrationAgent,
    Tutor,
}

impl ExerciseKind {
    pub const ALL: [ExerciseKind; 8] = [
        ExerciseKind::RolePlay,
        ExerciseKind::GoalPlay,
        ExerciseKind::CritiqueScenario,
        ExerciseKind::TeachAi,
        ExerciseKind::CoCreateCase,
        ExerciseKind::ReflectionCoach,
        ExerciseKind::IntegrationAgent,
        ExerciseKind::Tutor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExerciseKind::RolePlay => "role_play",
            ExerciseKind::GoalPlay => "goal_play",
            ExerciseKind::CritiqueScenario => "critique_scenario",
            ExerciseKind::TeachAi => "teach_ai",
            ExerciseKind::CoCreateCase => "co_create_case",
            ExerciseKind::ReflectionCoach => "reflection_coach",
            ExerciseKind::IntegrationAgent => "integration_agent",
            ExerciseKind::Tutor => "tutor",
        }
    }

    pub fn parse(s: &str) -> Option<ExerciseKind> {
        ExerciseKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Simulation kinds must carry a lesson.
    pub fn requires_lesson(self) -> bool {
        matches!(
            self,
            ExerciseKind::RolePlay | ExerciseKind::GoalPlay | ExerciseKind::CritiqueScenario
        )
    }
}

impl fmt::Display for ExerciseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseSpec {
    pub id: String,
    pub title: String,
    pub kind: ExerciseKind,
    #[serde(rename = "goal")]
    pub goal_text: String,
    #[serde(rename = "persona")]
    pub persona_text: String,
    #[serde(rename = "narrative")]
    pub narrative_text: String,
    pub steps: Vec<StepSpec>,
    #[serde(rename = "lesson", default, skip_serializing_if = "Option::is_none")]
    pub lesson_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<CustomizationSlot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintRule>,
}

impl ExerciseSpec {
    pub fn step(&self, index: u32) -> Option<&StepSpec> {
        self.steps.iter().find(|s| s.index == index)
    }

    pub fn final_step_index(&self) -> u32 {
        self.steps.last().map(|s| s.index).unwrap_or(0)
    }

    pub fn slot(&self, name: &str) -> Option<&CustomizationSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Constraint rules that apply while the session sits in `step`.
    pub fn rules_for_step(&self, step: u32) -> Vec<ConstraintRule> {
        self.constraints
            .iter()
            .filter(|r| r.applies_to_steps.contains(step))
            .cloned()
            .collect()
    }

    /// Every marker token named by a step transition, in step order.
    pub fn transition_markers(&self) -> Vec<Marker> {
        self.steps
            .iter()
            .filter_map(|s| s.transition.marker.clone())
            .collect()
    }

    pub fn longest_budget(&self) -> Option<u32> {
        self.steps
            .iter()
            .filter_map(|s| s.turn_budget.as_ref().map(|b| b.max_student_turns))
            .max()
    }

    /// Visit every free-text field with a dotted path, in document order.
    pub fn for_each_text(&self, mut f: impl FnMut(&str, &str)) {
        f("id", &self.id);
        f("title", &self.title);
        f("goal", &self.goal_text);
        f("persona", &self.persona_text);
        f("narrative", &self.narrative_text);
        for (i, step) in self.steps.iter().enumerate() {
            let p = format!("steps[{i}]");
            f(&format!("{p}.name"), &step.name);
            for (list, items) in [
                ("do", &step.do_items),
                ("dont", &step.dont_items),
                ("context", &step.context_items),
                ("examples", &step.example_items),
            ] {
                for (j, item) in items.iter().enumerate() {
                    f(&format!("{p}.{list}[{j}]"), item);
                }
            }
            if let Some(m) = &step.transition.marker {
                f(&format!("{p}.transition.marker"), m.as_str());
            }
            if let Some(ins) = &step.transition.instruction {
                f(&format!("{p}.transition.instruction"), ins);
            }
            if let Some(b) = &step.turn_budget {
                f(&format!("{p}.turn_budget.exhaustion_nudge"), &b.exhaustion_nudge);
            }
        }
        if let Some(lesson) = &self.lesson_text {
            f("lesson", lesson);
        }
    }

    /// Rewrite the prose fields that may carry slot placeholders.
    pub(crate) fn map_prose(&self, mut f: impl FnMut(&str) -> String) -> ExerciseSpec {
        let mut out = self.clone();
        out.goal_text = f(&self.goal_text);
        out.persona_text = f(&self.persona_text);
        out.narrative_text = f(&self.narrative_text);
        out.lesson_text = self.lesson_text.as_deref().map(&mut f);
        for step in &mut out.steps {
            step.name = f(&step.name);
            for items in [
                &mut step.do_items,
                &mut step.dont_items,
                &mut step.context_items,
                &mut step.example_items,
            ] {
                for item in items.iter_mut() {
                    *item = f(item);
                }
            }
            if let Some(ins) = &step.transition.instruction {
                step.transition.instruction = Some(f(ins));
            }
            if let Some(b) = &mut step.turn_budget {
                b.exhaustion_nudge = f(&b.exhaustion_nudge);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSpec {
    pub index: u32,
    pub name: String,
    #[serde(rename = "do", default, skip_serializing_if = "Vec::is_empty")]
    pub do_items: Vec<String>,
    #[serde(rename = "dont", default, skip_serializing_if = "Vec::is_empty")]
    pub dont_items: Vec<String>,
    #[serde(rename = "context", default, skip_serializing_if = "Vec::is_empty")]
    pub context_items: Vec<String>,
    #[serde(rename = "examples", default, skip_serializing_if = "Vec::is_empty")]
    pub example_items: Vec<String>,
    pub transition: TransitionRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_budget: Option<TurnBudget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    AssistantMarker,
    StudentChoiceMade,
    InfoGathered,
    BudgetExhausted,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub trigger: Trigger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<Marker>,
    /// The "Next step:" sentence rendered at the end of the step block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

/// A literal token the model is told to proclaim. Stored uppercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marker(String);

impl Marker {
    pub const CATALOG: [&'static str; 7] = [
        "BEGIN ROLE PLAY",
        "BEGIN ROLEPLAY",
        "END OF SCENE",
        "SCENE",
        "LESSON COMPLETE",
        "CASE COMPLETE",
        "LET'S BEGIN",
    ];

    pub fn new(token: &str) -> Marker {
        Marker(crate::session_engine::normalize_for_markers(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn catalog() -> Vec<Marker> {
        Marker::CATALOG.iter().map(|t| Marker::new(t)).collect()
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Marker {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Marker {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Marker::new(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomizationSlot {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub default_text: String,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    OneQuestionPerTurn,
    NumberedQuestions,
    NoStepMention,
    FeedbackFormat,
    NoAnswerGiving,
    NoSelfBehaviorDescription,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 6] = [
        ConstraintKind::OneQuestionPerTurn,
        ConstraintKind::NumberedQuestions,
        ConstraintKind::NoStepMention,
        ConstraintKind::FeedbackFormat,
        ConstraintKind::NoAnswerGiving,
        ConstraintKind::NoSelfBehaviorDescription,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::OneQuestionPerTurn => "one_question_per_turn",
            ConstraintKind::NumberedQuestions => "numbered_questions",
            ConstraintKind::NoStepMention => "no_step_mention",
            ConstraintKind::FeedbackFormat => "feedback_format",
            ConstraintKind::NoAnswerGiving => "no_answer_giving",
            ConstraintKind::NoSelfBehaviorDescription => "no_self_behavior_description",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepSelector {
    All,
    Steps(Vec<u32>),
}

impl StepSelector {
    pub fn contains(&self, step: u32) -> bool {
        match self {
            StepSelector::All => true,
            StepSelector::Steps(v) => v.contains(&step),
        }
    }
}

impl Serialize for StepSelector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StepSelector::All => s.serialize_str("all"),
            StepSelector::Steps(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for StepSelector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<u32>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "all" => Ok(StepSelector::All),
            Raw::Word(w) => Err(de::Error::custom(format!(
                "applies_to must be \"all\" or a list of step indices, got {w:?}"
            ))),
            Raw::List(v) => Ok(StepSelector::Steps(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRule {
    pub kind: ConstraintKind,
    pub severity: Severity,
    #[serde(rename = "applies_to")]
    pub applies_to_steps: StepSelector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnBudget {
    pub max_student_turns: u32,
    pub exhaustion_nudge: String,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("malformed exercise document: {0}")]
    Malformed(String),
    #[error("unknown exercise kind {0:?}")]
    UnknownKind(String),
    #[error("duplicate slot name {0:?}")]
    DuplicateSlot(String),
    #[error("exercise kind {0} requires a lesson")]
    MissingLesson(ExerciseKind),
    #[error("step indices must run 1..N without gaps, found {0:?}")]
    NonContiguousSteps(Vec<u32>),
    #[error("exercise spec is invalid: {0}")]
    Invalid(ValidationReport),
    #[error("required slot {0:?} has no binding")]
    MissingBinding(String),
    #[error("binding names unknown slot {0:?}")]
    UnknownSlot(String),
}
