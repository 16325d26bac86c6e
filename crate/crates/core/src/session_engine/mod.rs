//! One exercise session as an explicit state machine.

mod constraints;
mod drift;
mod markers;
mod pipeline;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use constraints::{
    check_constraints, count_questions, terminal_question_marks, ConstraintFinding, ANSWER_GIVING_PHRASES,
    FEEDBACK_HEADINGS, SELF_BEHAVIOR_PHRASES,
};
pub use drift::{detect_drift, DriftIssue};
pub use markers::{detect_markers, has_choice_listing, normalize_for_markers};
pub use pipeline::{exchange, exchange_streaming, replay_session, ExchangeOutcome};

use crate::exercise_spec::{apply_customizations, validate, Bindings, ExerciseSpec, Marker, SpecError, StepSpec, Trigger};
use crate::model_client::{ChatMessage, ChatModel, ChatRequest, ModelError, Role};
use crate::prompt_compiler::{build_nudge, compile_system_prompt, CompileError, NudgeSource, NudgeText};
use crate::transcript_store::{Transcript, TranscriptMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Wrapped,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub step_index: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detected_markers: Vec<Marker>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<ConstraintFinding>,
    /// Set on system turns injected as nudges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nudge: Option<NudgeSource>,
}

impl Turn {
    fn new(role: Role, text: &str, step_index: u32) -> Turn {
        Turn {
            role,
            text: text.to_string(),
            timestamp: Utc::now(),
            step_index,
            detected_markers: Vec::new(),
            findings: Vec::new(),
            nudge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistorySummary {
    pub text: String,
    /// History entries before this index (other than the system prompt) are
    /// replaced by the summary in outgoing requests.
    pub covered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub model_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    /// Assistant turns after which an info_gathered step advances anyway.
    pub info_gathered_cap: u32,
    pub hide_instructions: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            model_id: "scripted".into(),
            temperature: 0.7,
            max_output_tokens: 1024,
            info_gathered_cap: 4,
            hide_instructions: false,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SessionError {
    #[error("session is {0:?}, not active")]
    NotActive(SessionStatus),
    #[error("message text is empty")]
    EmptyMessage,
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("history needs at least two non-system turns to summarize")]
    NothingToSummarize,
    #[error("model failure: {0}")]
    Model(#[from] ModelError),
}

/// What an assistant turn changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub markers: Vec<Marker>,
    pub findings: Vec<ConstraintFinding>,
    pub drift: Option<DriftIssue>,
    pub advanced: Option<(u32, u32)>,
    pub wrapped: bool,
    pub nudge_queued: Option<NudgeText>,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub session_id: String,
    pub spec_id: String,
    /// The spec with bindings applied.
    pub spec: Arc<ExerciseSpec>,
    pub current_step: u32,
    pub student_turns_in_step: u32,
    pub assistant_turns_in_step: u32,
    pub nudges_in_step: u32,
    budget_fired_in_step: bool,
    pub status: SessionStatus,
    pub pending_nudge: Option<NudgeText>,
    pub history: Vec<Turn>,
    pub summary: Option<HistorySummary>,
    pub options: SessionOptions,
    pub created_at: DateTime<Utc>,
    known_markers: Vec<Marker>,
}

/// Start a session: bind slots, compile the prompt, open at step 1.
pub fn start_session(spec: &ExerciseSpec, bindings: &Bindings, options: SessionOptions) -> Result<SessionState, SessionError> {
    let report = validate(spec);
    if !report.is_empty() {
        return Err(SpecError::Invalid(report).into());
    }
    let bound = apply_customizations(spec, bindings)?;
    let prompt = compile_system_prompt(&bound)?;
    let mut known_markers = Marker::catalog();
    for m in bound.transition_markers() {
        if !known_markers.contains(&m) {
            known_markers.push(m);
        }
    }
    Ok(SessionState {
        session_id: uuid::Uuid::new_v4().to_string(),
        spec_id: spec.id.clone(),
        spec: Arc::new(bound),
        current_step: 1,
        student_turns_in_step: 0,
        assistant_turns_in_step: 0,
        nudges_in_step: 0,
        budget_fired_in_step: false,
        status: SessionStatus::Active,
        pending_nudge: None,
        history: vec![Turn::new(Role::System, &prompt.body, 1)],
        summary: None,
        options,
        created_at: Utc::now(),
        known_markers,
    })
}

impl SessionState {
    pub fn step_spec(&self) -> &StepSpec {
        self.spec.step(self.current_step).expect("current step exists")
    }

    pub fn system_prompt(&self) -> &str {
        &self.history[0].text
    }

    pub fn known_markers(&self) -> &[Marker] {
        &self.known_markers
    }

    fn last_assistant(&self) -> Option<&Turn> {
        self.history.iter().rev().find(|t| t.role == Role::Assistant)
    }

    fn advance(&mut self) -> Option<(u32, u32)> {
        let from = self.current_step;
        if from >= self.spec.final_step_index() {
            self.status = SessionStatus::Wrapped;
            return None;
        }
        self.current_step += 1;
        self.student_turns_in_step = 0;
        self.assistant_turns_in_step = 0;
        self.nudges_in_step = 0;
        self.budget_fired_in_step = false;
        Some((from, self.current_step))
    }

    /// Record a student message and build the model request for it.
    pub fn submit_user_turn(&mut self, text: &str) -> Result<ChatRequest, SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::NotActive(self.status));
        }
        if text.trim().is_empty() {
            return Err(SessionError::EmptyMessage);
        }
        if let Some(n) = self.pending_nudge.take() {
            let mut t = Turn::new(Role::System, &n.text, self.current_step);
            t.nudge = Some(n.source);
            self.history.push(t);
            self.nudges_in_step += 1;
        }
        let offered_choice = self.last_assistant().is_some_and(|t| has_choice_listing(&t.text));
        self.history.push(Turn::new(Role::User, text, self.current_step));
        self.student_turns_in_step += 1;
        if self.step_spec().transition.trigger == Trigger::StudentChoiceMade && offered_choice {
            self.advance();
        }
        Ok(self.build_request())
    }

    /// Messages for the next completion: system prompt, then the summary in
    /// place of covered turns, then the remaining history.
    pub fn build_request(&self) -> ChatRequest {
        let mut messages = vec![ChatMessage::system(self.system_prompt())];
        let mut start = 1;
        if let Some(s) = &self.summary {
            messages.push(ChatMessage::system(format!("Summary of the earlier conversation: {}", s.text)));
            start = s.covered.max(1);
        }
        for t in &self.history[start.min(self.history.len())..] {
            messages.push(ChatMessage { role: t.role, content: t.text.clone() });
        }
        ChatRequest {
            messages,
            model_id: self.options.model_id.clone(),
            temperature: self.options.temperature,
            max_output_tokens: self.options.max_output_tokens,
        }
    }

    /// Record an assistant reply: detect markers, run the step's monitors and
    /// apply at most one transition.
    pub fn ingest_assistant_turn(&mut self, text: &str) -> IngestOutcome {
        let step = self.step_spec().clone();
        let markers = detect_markers(text, &self.known_markers);
        let findings = check_constraints(text, &self.spec.rules_for_step(step.index));
        let drift = detect_drift(text, self.last_assistant().map(|t| t.text.as_str()), &findings);

        let mut turn = Turn::new(Role::Assistant, text, step.index);
        turn.detected_markers = markers.clone();
        turn.findings = findings.clone();
        self.history.push(turn);

        let mut outcome = IngestOutcome {
            markers,
            findings,
            drift,
            advanced: None,
            wrapped: false,
            nudge_queued: None,
        };
        if self.status != SessionStatus::Active {
            return outcome;
        }
        self.assistant_turns_in_step += 1;

        let over_budget = step
            .turn_budget
            .as_ref()
            .is_some_and(|b| self.student_turns_in_step > b.max_student_turns);
        let fire = over_budget
            || match step.transition.trigger {
                Trigger::AssistantMarker => step
                    .transition
                    .marker
                    .as_ref()
                    .is_some_and(|m| outcome.markers.contains(m)),
                Trigger::InfoGathered => {
                    has_choice_listing(text) || self.assistant_turns_in_step >= self.options.info_gathered_cap
                }
                Trigger::BudgetExhausted | Trigger::StudentChoiceMade | Trigger::Manual => false,
            };
        if fire {
            outcome.advanced = self.advance();
            outcome.wrapped = self.status == SessionStatus::Wrapped;
            return outcome;
        }

        if let Some(issue) = drift {
            if step.turn_budget.is_none() {
                let n = build_nudge(issue, &step);
                if self.queue_nudge(n.clone()) {
                    outcome.nudge_queued = Some(n);
                }
            }
        }
        outcome
    }

    /// Queue a reminder for the next request. Refused when the step already
    /// had its one nudge or one is pending.
    pub fn queue_nudge(&mut self, nudge: NudgeText) -> bool {
        if self.status != SessionStatus::Active || self.pending_nudge.is_some() || self.nudges_in_step > 0 {
            return false;
        }
        self.pending_nudge = Some(nudge);
        true
    }

    /// Queue the step's exhaustion nudge when the student has used exactly
    /// the budgeted number of turns. Fires at most once per step.
    pub fn enforce_budget(&mut self) -> Option<NudgeText> {
        if self.status != SessionStatus::Active || self.budget_fired_in_step {
            return None;
        }
        let budget = self.step_spec().turn_budget.clone()?;
        if self.student_turns_in_step != budget.max_student_turns {
            return None;
        }
        let n = NudgeText::budget(budget.exhaustion_nudge);
        self.budget_fired_in_step = true;
        self.pending_nudge = Some(n.clone());
        Some(n)
    }

    /// Ask the model for a summary of the conversation so far and use it in
    /// place of those turns from now on.
    pub async fn summarize_history(&mut self, model: &dyn ChatModel) -> Result<String, SessionError> {
        let start = self.summary.as_ref().map_or(1, |s| s.covered.max(1)).min(self.history.len());
        // The unanswered tail (nudge and student message) stays verbatim.
        let mut covered = self.history.len();
        while covered > start && self.history[covered - 1].role != Role::Assistant {
            covered -= 1;
        }
        if self.history.iter().filter(|t| t.role != Role::System).count() < 2 || covered <= start {
            return Err(SessionError::NothingToSummarize);
        }
        let elided = &self.history[start..covered];
        let mut transcript = String::new();
        if let Some(s) = &self.summary {
            transcript.push_str(&format!("Earlier summary: {}\n\n", s.text));
        }
        for t in elided {
            let label = match t.role {
                Role::User => "Student",
                Role::Assistant => "AI",
                Role::System => "Reminder",
            };
            transcript.push_str(&format!("{label}: {}\n\n", t.text));
        }
        let request = ChatRequest {
            messages: vec![
                ChatMessage::system(
                    "Summarize the conversation below between an AI and a student in one short paragraph. Keep the decisions the student made, where the exercise currently stands, and any open questions.",
                ),
                ChatMessage::user(transcript.trim_end()),
            ],
            model_id: self.options.model_id.clone(),
            temperature: 0.0,
            max_output_tokens: self.options.max_output_tokens,
        };
        let resp = model.complete(&request).await?;
        self.summary = Some(HistorySummary { text: resp.content.clone(), covered });
        Ok(resp.content)
    }

    /// Close the session and return its transcript. Idempotent.
    pub fn end_session(&mut self) -> Transcript {
        if self.status == SessionStatus::Active {
            self.status = SessionStatus::Wrapped;
        }
        self.transcript()
    }

    pub fn abort(&mut self) {
        if self.status == SessionStatus::Active {
            self.status = SessionStatus::Aborted;
        }
    }

    /// Transcript snapshot without changing status.
    pub fn transcript(&self) -> Transcript {
        let meta = TranscriptMeta {
            session_id: self.session_id.clone(),
            spec_id: self.spec_id.clone(),
            spec_title: self.spec.title.clone(),
            kind: self.spec.kind,
            step_names: self.spec.steps.iter().map(|s| s.name.clone()).collect(),
            hide_instructions: self.options.hide_instructions,
            created_at: self.created_at,
        };
        Transcript::new(meta, self.history.clone(), Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exercise_spec::catalog_spec;

    fn negotiation() -> SessionState {
        start_session(&catalog_spec("negotiation").unwrap(), &Bindings::new(), SessionOptions::default()).unwrap()
    }

    #[test]
    fn starts_at_step_one_with_prompt() {
        let s = negotiation();
        assert_eq!(s.current_step, 1);
        assert_eq!(s.history[0].role, Role::System);
        assert!(s.history[0].text.starts_with("GOAL: This is a role-playing scenario"));
        assert_ne!(s.session_id, negotiation().session_id);
    }

    #[test]
    fn first_request_is_system_plus_user() {
        let mut s = negotiation();
        let r = s.submit_user_turn("Hi").unwrap();
        assert_eq!(r.messages.len(), 2);
        assert_eq!(r.messages[0].role, Role::System);
        assert_eq!(r.messages[1], ChatMessage::user("Hi"));
    }

    #[test]
    fn pending_nudge_becomes_system_message() {
        let mut s = negotiation();
        s.submit_user_turn("Hi").unwrap();
        s.ingest_assistant_turn("Welcome. What is your experience?");
        s.pending_nudge = Some(NudgeText::budget("wrap up"));
        let r = s.submit_user_turn("Some").unwrap();
        let sys: Vec<_> = r.messages.iter().filter(|m| m.role == Role::System).collect();
        assert_eq!(sys.len(), 2);
        assert_eq!(sys[1].content, "wrap up");
        assert_eq!(r.messages.last().unwrap(), &ChatMessage::user("Some"));
        assert!(s.pending_nudge.is_none());
    }

    #[test]
    fn no_marker_no_change() {
        let mut s = negotiation();
        s.submit_user_turn("Hi").unwrap();
        s.ingest_assistant_turn("Welcome. What is your experience?");
        assert_eq!(s.current_step, 1);
        assert_eq!(s.student_turns_in_step, 1);
    }

    #[test]
    fn wrapped_rejects_messages() {
        let mut s = negotiation();
        s.end_session();
        assert_eq!(s.submit_user_turn("x"), Err(SessionError::NotActive(SessionStatus::Wrapped)));
    }

    #[test]
    fn budget_never_fires_without_budget() {
        let mut s = negotiation();
        for _ in 0..3 {
            s.submit_user_turn("x").unwrap();
            s.ingest_assistant_turn("Tell me more.");
            assert_eq!(s.enforce_budget(), None);
        }
    }
}
