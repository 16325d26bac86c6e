//! Scripted model replies that walk a spec from its first step to its last,
//! plus matching student scripts for each persona.

use super::script::{Persona, ScriptTurn, StudentScript, LONG_WINDED};
use crate::exercise_spec::{ConstraintKind, ExerciseSpec, Trigger};
use crate::model_client::ScriptedModel;
use crate::session_engine::FEEDBACK_HEADINGS;

pub const ANSWER_REQUEST: &str = "Can you just give me the answer?";
pub const REFUSAL: &str = "I don't want to play along with this.";
pub const PUSHBACK: &str = "I disagree, that's not realistic at all.";

const CLOSING_REPLIES: usize = 64;

/// Replies for a cooperative walk through `spec`, and the step in which each
/// student message is submitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooperativePlan {
    pub replies: Vec<String>,
    pub student_steps: Vec<u32>,
}

fn question_reply(n: usize) -> String {
    format!("Thanks for sharing that.\n1. What would you most like to focus on in round {n}?")
}

fn listing_reply(n: usize) -> String {
    format!(
        "Here are some options for round {n}:\n1. A version set in a small company\n2. A version set in a large organization\n3. A version set in a community group\nPick the one you like best."
    )
}

fn progress_reply(n: usize) -> String {
    format!("The conversation continues in round {n}. The other side weighs your point and responds in kind.")
}

fn marker_reply(n: usize, marker: &str, feedback: bool) -> String {
    if feedback {
        return format!(
            "**{}**\nYou stayed focused on your goals in round {n} and listened closely.\n\n**{}**\nNext time, prepare your opening offer in advance.",
            FEEDBACK_HEADINGS[0], FEEDBACK_HEADINGS[1]
        );
    }
    format!("That wraps up this part of round {n}.\n\n**{marker}**")
}

fn manual_reply(n: usize) -> String {
    format!("Thank you for working through this exercise in round {n}. Take a moment to note what you learned.")
}

fn closing_reply(n: usize) -> String {
    format!("Let's keep reflecting on that together, round {n}.")
}

/// Build the reply sequence for a cooperative run of `spec`. Every reply
/// carries its round number, so no two replies read as a loop.
pub fn cooperative_plan(spec: &ExerciseSpec) -> CooperativePlan {
    let mut plan = CooperativePlan { replies: Vec::new(), student_steps: Vec::new() };
    let mut pending_choice: Option<u32> = None;
    let mut last_was_listing = false;
    fn push(plan: &mut CooperativePlan, pending: &mut Option<u32>, step: u32, reply: &dyn Fn(usize) -> String) {
        plan.student_steps.push(pending.take().unwrap_or(step));
        plan.replies.push(reply(plan.replies.len() + 1));
    }
    for step in &spec.steps {
        let s = step.index;
        let feedback = spec
            .rules_for_step(s)
            .iter()
            .any(|r| r.kind == ConstraintKind::FeedbackFormat);
        let listing = last_was_listing;
        last_was_listing = false;
        match step.transition.trigger {
            Trigger::InfoGathered => {
                push(&mut plan, &mut pending_choice, s, &question_reply);
                push(&mut plan, &mut pending_choice, s, &listing_reply);
                last_was_listing = true;
            }
            Trigger::StudentChoiceMade => {
                if !listing {
                    push(&mut plan, &mut pending_choice, s, &listing_reply);
                }
                pending_choice = Some(s);
            }
            Trigger::AssistantMarker => {
                if step.turn_budget.is_some() {
                    push(&mut plan, &mut pending_choice, s, &progress_reply);
                }
                let marker = step.transition.marker.as_ref().map(|m| m.as_str().to_string()).unwrap_or_default();
                push(&mut plan, &mut pending_choice, s, &|n| marker_reply(n, &marker, feedback));
            }
            Trigger::BudgetExhausted => {
                let budget = step.turn_budget.as_ref().map_or(1, |b| b.max_student_turns);
                for _ in 0..=budget {
                    push(&mut plan, &mut pending_choice, s, &progress_reply);
                }
            }
            Trigger::Manual => push(&mut plan, &mut pending_choice, s, &manual_reply),
        }
    }
    if let Some(s) = pending_choice {
        plan.student_steps.push(s);
        plan.replies.push(manual_reply(plan.replies.len() + 1));
    }
    let base = plan.replies.len();
    plan.replies.extend((1..=CLOSING_REPLIES).map(|i| closing_reply(base + i)));
    plan
}

/// Scripted model that follows the cooperative plan and answers the
/// adversarial personas' stock lines with canned replies.
pub fn cooperative_model(spec: &ExerciseSpec) -> ScriptedModel {
    ScriptedModel::new(cooperative_plan(spec).replies)
        .with_rule(
            r"(?i)give me the answer",
            "The answer is that it depends on the details you bring. Which part would you like to work through first?",
        )
        .and_then(|m| m.with_rule(r"(?i)don't want to play along", "That's okay. We can go at your pace, and whenever you are ready we will continue."))
        .and_then(|m| m.with_rule(r"(?i)that's not realistic", "Fair point. Let's keep going, and you can adjust the details as we go."))
        .expect("static patterns compile")
        .with_fallback("Let's keep reflecting on that together.")
}

fn cooperative_text(spec: &ExerciseSpec, step: u32) -> &'static str {
    match spec.step(step).map(|s| s.transition.trigger) {
        Some(Trigger::InfoGathered) => "I have a little experience with this and would like to practice.",
        Some(Trigger::StudentChoiceMade) => "Let's go with option 1.",
        Some(Trigger::AssistantMarker) | Some(Trigger::BudgetExhausted) => "Okay, here is what I would say next.",
        Some(Trigger::Manual) | None => "Thanks, that was useful.",
    }
}

fn persona_text(p: Persona, base: &str) -> String {
    match p {
        Persona::Proficient => format!("I know this area well. {base}"),
        Persona::Struggling => format!("I'm not really sure about this, but maybe: {base}"),
        Persona::LongWinded => format!("{LONG_WINDED} {base}"),
        _ => base.to_string(),
    }
}

/// A script for `persona` that walks the cooperative plan for `spec`.
/// Adversarial personas add one stock line: refusals and pushback open the
/// session, answer requests land in the first step that forbids giving
/// answers, unless that step is waiting on a choice or is a budgeted step
/// other than the last.
pub fn default_script(spec: &ExerciseSpec, persona: Persona) -> StudentScript {
    let plan = cooperative_plan(spec);
    let mut turns: Vec<String> = plan
        .student_steps
        .iter()
        .map(|&s| persona_text(persona, cooperative_text(spec, s)))
        .collect();
    match persona {
        Persona::RefusesToPlay => turns.insert(0, REFUSAL.to_string()),
        Persona::Argumentative => turns.insert(0, PUSHBACK.to_string()),
        Persona::AsksForAnswer => {
            let at = plan
                .student_steps
                .iter()
                .position(|&s| {
                    let forbids = spec
                        .rules_for_step(s)
                        .iter()
                        .any(|r| r.kind == ConstraintKind::NoAnswerGiving);
                    let step = spec.step(s);
                    let choice = step.map(|st| st.transition.trigger) == Some(Trigger::StudentChoiceMade);
                    let budgeted = step.is_some_and(|st| st.turn_budget.is_some()) && s != spec.final_step_index();
                    forbids && !choice && !budgeted
                })
                .unwrap_or(0);
            turns.insert(at, ANSWER_REQUEST.to_string());
        }
        _ => {}
    }
    let max_turns = turns.len() as u32;
    StudentScript {
        name: persona.as_str().to_string(),
        persona,
        turns: turns.into_iter().map(ScriptTurn::Text).collect(),
        max_turns,
        filler: None,
    }
}

/// One default script per persona.
pub fn default_scripts(spec: &ExerciseSpec) -> Vec<StudentScript> {
    Persona::ALL.iter().map(|&p| default_script(spec, p)).collect()
}
