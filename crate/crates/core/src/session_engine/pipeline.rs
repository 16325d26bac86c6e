//! The student-message round trip shared by the service, the CLI and the
//! test battery.

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use super::{start_session, IngestOutcome, SessionError, SessionOptions, SessionState, SessionStatus, Turn};
use crate::exercise_spec::{Bindings, ExerciseSpec};
use crate::model_client::{ChatModel, ChatRequest, FinishReason, ModelError, Role, StreamEvent};
use crate::prompt_compiler::NudgeText;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeOutcome {
    pub reply: String,
    pub step_before: u32,
    pub step_after: u32,
    pub ingest: IngestOutcome,
    /// Exhaustion nudge queued for the next request, if this turn used up the budget.
    pub budget_nudge: Option<NudgeText>,
    pub status: SessionStatus,
    pub summarized: bool,
}

type DeltaSink<'a> = Option<&'a mut (dyn FnMut(&str) + Send)>;

async fn call(model: &dyn ChatModel, req: &ChatRequest, sink: &mut DeltaSink<'_>) -> Result<String, ModelError> {
    let resp = match sink {
        None => model.complete(req).await?,
        Some(f) => {
            let mut s = model.stream_complete(req).await?;
            let mut done = None;
            while let Some(ev) = s.next().await {
                match ev {
                    StreamEvent::Delta(d) => f(&d),
                    StreamEvent::Done(r) => {
                        done = Some(r);
                        break;
                    }
                }
            }
            done.ok_or_else(|| ModelError::Transport("stream ended without a final event".into()))?
        }
    };
    match resp.finish_reason {
        FinishReason::Length => Err(ModelError::OverLength),
        FinishReason::Error => Err(ModelError::Transport("completion ended with an error".into())),
        FinishReason::Stop => Ok(resp.content),
    }
}

async fn run(
    state: &mut SessionState,
    model: &dyn ChatModel,
    text: &str,
    mut sink: DeltaSink<'_>,
) -> Result<ExchangeOutcome, SessionError> {
    let step_before = state.current_step;
    let req = state.submit_user_turn(text)?;
    let mut summarized = false;
    let reply = match call(model, &req, &mut sink).await {
        Err(ModelError::OverLength) => {
            state.summarize_history(model).await.map_err(|e| match e {
                SessionError::NothingToSummarize => SessionError::Model(ModelError::OverLength),
                other => other,
            })?;
            summarized = true;
            call(model, &state.build_request(), &mut sink).await?
        }
        other => other?,
    };
    let ingest = state.ingest_assistant_turn(&reply);
    let budget_nudge = state.enforce_budget();
    Ok(ExchangeOutcome {
        reply,
        step_before,
        step_after: state.current_step,
        ingest,
        budget_nudge,
        status: state.status,
        summarized,
    })
}

/// Submit a student message, get the model's reply, ingest it and check the
/// budget. On failure the session is left exactly as it was.
pub async fn exchange(state: &mut SessionState, model: &dyn ChatModel, text: &str) -> Result<ExchangeOutcome, SessionError> {
    let snapshot = state.clone();
    let r = run(state, model, text, None).await;
    if r.is_err() {
        *state = snapshot;
    }
    r
}

/// As [`exchange`], forwarding reply chunks to `on_delta` as they arrive.
pub async fn exchange_streaming(
    state: &mut SessionState,
    model: &dyn ChatModel,
    text: &str,
    on_delta: &mut (dyn FnMut(&str) + Send),
) -> Result<ExchangeOutcome, SessionError> {
    let snapshot = state.clone();
    let r = run(state, model, text, Some(on_delta)).await;
    if r.is_err() {
        *state = snapshot;
    }
    r
}

/// Rebuild a session by feeding recorded student and assistant turns through
/// a fresh state machine. Recorded system turns are skipped; nudges are
/// re-derived.
pub fn replay_session(
    spec: &ExerciseSpec,
    bindings: &Bindings,
    options: SessionOptions,
    turns: &[Turn],
) -> Result<SessionState, SessionError> {
    let mut state = start_session(spec, bindings, options)?;
    for t in turns.iter().skip(1) {
        match t.role {
            Role::System => {}
            Role::User => {
                state.submit_user_turn(&t.text)?;
            }
            Role::Assistant => {
                state.ingest_assistant_turn(&t.text);
                state.enforce_budget();
            }
        }
    }
    Ok(state)
}
