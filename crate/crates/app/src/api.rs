use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use praxis_core::exercise_spec::{
    parse_exercise, serialize_exercise, Bindings, CustomizationSlot, ExerciseKind, ExerciseSpec, Marker, SpecError,
};
use praxis_core::model_client::Role;
use praxis_core::prompt_compiler::{
    compile_blueprint, compile_system_prompt, interview_questions, BlueprintKind, GeneratedPrompt, InterviewAnswers,
    NudgeSource,
};
use praxis_core::session_engine::{
    exchange, exchange_streaming, start_session, ConstraintFinding, ExchangeOutcome, SessionError, SessionOptions,
    SessionState, SessionStatus,
};
use praxis_core::transcript_store::{
    export_markdown, Annotation, AnnotationDraft, StepTraceEntry, StoreError, Transcript,
};

use crate::state::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    InvalidInput,
    ModelFailure,
    Conflict,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    /// Set on model failures; true when sending the same message again may work.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retryable: Option<bool>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> ApiError {
        let mut message = message.into();
        if message.trim().is_empty() {
            message = format!("{code:?}");
        }
        ApiError { code, message, retryable: None }
    }

    fn not_found(what: &str, id: &str) -> ApiError {
        ApiError::new(ErrorCode::NotFound, format!("{what} {id:?} not found"))
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::InvalidInput => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::ModelFailure => StatusCode::BAD_GATEWAY,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> ApiError {
        match &e {
            SessionError::NotActive(_) => ApiError::new(ErrorCode::Conflict, e.to_string()),
            SessionError::EmptyMessage | SessionError::Spec(_) | SessionError::Compile(_) => {
                ApiError::new(ErrorCode::InvalidInput, e.to_string())
            }
            SessionError::NothingToSummarize => ApiError {
                retryable: Some(false),
                ..ApiError::new(ErrorCode::ModelFailure, e.to_string())
            },
            SessionError::Model(m) => ApiError {
                retryable: Some(m.is_retryable()),
                ..ApiError::new(ErrorCode::ModelFailure, e.to_string())
            },
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let code = match e {
            StoreError::UnknownSession(_) | StoreError::UnknownToken => ErrorCode::NotFound,
            StoreError::Invalid(_) | StoreError::OutOfBounds { .. } => ErrorCode::InvalidInput,
            StoreError::Conflict(_) => ErrorCode::Conflict,
            StoreError::Corrupt { .. } | StoreError::Io(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<SpecError> for ApiError {
    fn from(e: SpecError) -> ApiError {
        ApiError::new(ErrorCode::InvalidInput, e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewerRole {
    #[default]
    Student,
    Instructor,
}

#[derive(Debug, Default, Deserialize)]
pub struct ViewQuery {
    #[serde(default)]
    pub role: ViewerRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub exercise_id: String,
    pub created_at: DateTime<Utc>,
    pub status: SessionStatus,
}

impl SessionHandle {
    fn of(s: &SessionState) -> SessionHandle {
        SessionHandle {
            session_id: s.session_id.clone(),
            exercise_id: s.spec_id.clone(),
            created_at: s.created_at,
            status: s.status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseSummary {
    pub id: String,
    pub title: String,
    pub kind: ExerciseKind,
    pub steps: Vec<String>,
    pub slots: Vec<CustomizationSlot>,
}

impl ExerciseSummary {
    fn of(s: &ExerciseSpec) -> ExerciseSummary {
        ExerciseSummary {
            id: s.id.clone(),
            title: s.title.clone(),
            kind: s.kind,
            steps: s.steps.iter().map(|x| x.name.clone()).collect(),
            slots: s.slots.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnView {
    pub ordinal: usize,
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<ConstraintFinding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub markers: Vec<Marker>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nudge: Option<NudgeSource>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptView {
    pub session_id: String,
    pub spec_id: String,
    pub spec_title: String,
    pub kind: ExerciseKind,
    pub created_at: DateTime<Utc>,
    pub role: ViewerRole,
    pub read_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<SessionStatus>,
    pub turns: Vec<TurnView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_trace: Option<Vec<StepTraceEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<Annotation>>,
}

/// What `role` may see of a transcript. Students never see system turns of
/// a session with hidden instructions, nor step metadata.
pub fn transcript_view(t: &Transcript, role: ViewerRole, status: Option<SessionStatus>, read_only: bool) -> TranscriptView {
    let instructor = role == ViewerRole::Instructor;
    let turns = t
        .turns
        .iter()
        .enumerate()
        .filter(|(_, x)| instructor || !(t.meta.hide_instructions && x.role == Role::System))
        .map(|(i, x)| TurnView {
            ordinal: i,
            role: x.role,
            text: x.text.clone(),
            step_index: instructor.then_some(x.step_index),
            findings: if instructor { x.findings.clone() } else { Vec::new() },
            markers: if instructor { x.detected_markers.clone() } else { Vec::new() },
            nudge: if instructor { x.nudge.clone() } else { None },
        })
        .collect();
    TranscriptView {
        session_id: t.meta.session_id.clone(),
        spec_id: t.meta.spec_id.clone(),
        spec_title: t.meta.spec_title.clone(),
        kind: t.meta.kind,
        created_at: t.meta.created_at,
        role,
        read_only,
        status,
        turns,
        step_names: instructor.then(|| t.meta.step_names.clone()),
        step_trace: instructor.then(|| t.step_trace.clone()),
        annotations: instructor.then(|| t.annotations.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    pub before: u32,
    pub after: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub markers: Vec<Marker>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<ConstraintFinding>,
    pub nudge_queued: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageReply {
    pub session_id: String,
    pub reply: String,
    pub status: SessionStatus,
    pub turn_ordinal: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepInfo>,
}

fn message_reply(s: &SessionState, out: &ExchangeOutcome, role: ViewerRole) -> MessageReply {
    let step = (role == ViewerRole::Instructor).then(|| StepInfo {
        before: out.step_before,
        after: out.step_after,
        name: s.step_spec().name.clone(),
        markers: out.ingest.markers.clone(),
        findings: out.ingest.findings.clone(),
        nudge_queued: s.pending_nudge.is_some(),
    });
    MessageReply {
        session_id: s.session_id.clone(),
        reply: out.reply.clone(),
        status: out.status,
        turn_ordinal: s.history.len() - 1,
        step,
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CreateSession {
    pub exercise_id: String,
    #[serde(default)]
    pub bindings: Bindings,
    #[serde(default)]
    pub hide_instructions: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PostMessage {
    pub text: String,
    #[serde(default)]
    pub stream: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareLink {
    pub token: String,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlueprintOutput {
    pub prompt: GeneratedPrompt,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewQuestion {
    pub field: String,
    pub question: String,
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/exercises", get(list_exercises).post(create_exercise))
        .route("/exercises/{id}", get(get_exercise))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/end", post(end_session))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .route("/sessions/{id}/export", get(export_session))
        .route("/sessions/{id}/share", post(share_session))
        .route("/sessions/{id}/annotations", post(annotate_session))
        .route("/share/{token}", get(get_share))
        .route("/blueprints", post(create_blueprint))
        .route("/blueprints/{kind}/questions", get(blueprint_questions))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_exercises(State(app): State<Arc<AppState>>) -> Json<Vec<ExerciseSummary>> {
    Json(app.exercises().iter().map(ExerciseSummary::of).collect())
}

async fn create_exercise(State(app): State<Arc<AppState>>, body: String) -> ApiResult<(StatusCode, Json<ExerciseSummary>)> {
    let spec = parse_exercise(&body)?;
    let summary = ExerciseSummary::of(&spec);
    if !app.add_exercise(spec) {
        return Err(ApiError::new(ErrorCode::Conflict, format!("exercise {:?} already exists", summary.id)));
    }
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_exercise(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let spec = app.exercise(&id).ok_or_else(|| ApiError::not_found("exercise", &id))?;
    let document: serde_json::Value =
        serde_json::from_str(&serialize_exercise(&spec)).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    let prompt = compile_system_prompt(&spec).ok().map(|p| p.body);
    Ok(Json(serde_json::json!({ "exercise": document, "prompt": prompt })))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionHandle>)> {
    let spec = app
        .exercise(&req.exercise_id)
        .ok_or_else(|| ApiError::not_found("exercise", &req.exercise_id))?;
    let options = SessionOptions {
        model_id: app.models.model_id(),
        hide_instructions: req.hide_instructions,
        ..SessionOptions::default()
    };
    let state = start_session(&spec, &req.bindings, options)?;
    app.store.save_session(&state.transcript())?;
    let handle = SessionHandle::of(&state);
    app.insert_session(state, app.models.for_spec(&spec));
    Ok((StatusCode::CREATED, Json(handle)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionHandle>> {
    let live = app.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let st = live.state.lock().await;
    Ok(Json(SessionHandle::of(&st)))
}

fn wants_stream(headers: &HeaderMap, body: &PostMessage) -> bool {
    body.stream
        || headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains("text/event-stream"))
}

fn sse_event(name: &str, data: &impl Serialize) -> Event {
    Event::default()
        .event(name)
        .json_data(data)
        .unwrap_or_else(|_| Event::default().event(name))
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(view): Query<ViewQuery>,
    headers: HeaderMap,
    Json(body): Json<PostMessage>,
) -> ApiResult<Response> {
    let live = app.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    if !wants_stream(&headers, &body) {
        let mut st = live.state.lock().await;
        let out = exchange(&mut st, live.model.as_ref(), &body.text).await?;
        app.store.save_session(&st.transcript())?;
        return Ok(Json(message_reply(&st, &out, view.role)).into_response());
    }

    {
        let st = live.state.lock().await;
        if st.status != SessionStatus::Active {
            return Err(SessionError::NotActive(st.status).into());
        }
    }
    let (tx, mut rx) = mpsc::unbounded_channel::<Event>();
    tokio::spawn(async move {
        let mut st = live.state.lock().await;
        let delta_tx = tx.clone();
        let mut on_delta = move |d: &str| {
            let _ = delta_tx.send(sse_event("delta", &serde_json::json!({ "text": d })));
        };
        let result = exchange_streaming(&mut st, live.model.as_ref(), &body.text, &mut on_delta).await;
        let event = match result {
            Ok(out) => match app.store.save_session(&st.transcript()) {
                Ok(_) => sse_event("done", &message_reply(&st, &out, view.role)),
                Err(e) => sse_event("error", &ApiError::from(e)),
            },
            Err(e) => sse_event("error", &ApiError::from(e)),
        };
        let _ = tx.send(event);
    });
    let stream = futures::stream::poll_fn(move |cx| rx.poll_recv(cx).map(|e| e.map(Ok::<_, Infallible>)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

async fn end_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionHandle>> {
    let live = app.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let mut st = live.state.lock().await;
    let t = st.end_session();
    app.store.save_session(&t)?;
    Ok(Json(SessionHandle::of(&st)))
}

async fn live_status(app: &AppState, id: &str) -> Option<SessionStatus> {
    match app.session(id) {
        Some(live) => Some(live.state.lock().await.status),
        None => None,
    }
}

async fn get_transcript(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(view): Query<ViewQuery>,
) -> ApiResult<Json<TranscriptView>> {
    let t = app.store.load(&id)?;
    let status = live_status(&app, &id).await;
    Ok(Json(transcript_view(&t, view.role, status, false)))
}

async fn export_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let t = app.store.load(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], export_markdown(&t)).into_response())
}

async fn share_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<ShareLink>)> {
    let st = app.store.create_share_token(&id)?;
    Ok((
        StatusCode::CREATED,
        Json(ShareLink { url: format!("/share/{}", st.token), token: st.token, session_id: st.session_id, created_at: st.created_at }),
    ))
}

async fn get_share(State(app): State<Arc<AppState>>, Path(token): Path<String>) -> ApiResult<Json<TranscriptView>> {
    let t = app.store.resolve_share(&token)?;
    let status = live_status(&app, t.session_id()).await;
    Ok(Json(transcript_view(&t, ViewerRole::Student, status, true)))
}

async fn annotate_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(draft): Json<AnnotationDraft>,
) -> ApiResult<Json<TranscriptView>> {
    if draft.author.trim().is_empty() || draft.note.trim().is_empty() {
        return Err(ApiError::new(ErrorCode::InvalidInput, "author and note must not be empty"));
    }
    let t = app.store.annotate(&id, draft)?;
    let status = live_status(&app, &id).await;
    Ok(Json(transcript_view(&t, ViewerRole::Instructor, status, false)))
}

async fn create_blueprint(Json(answers): Json<InterviewAnswers>) -> ApiResult<Json<BlueprintOutput>> {
    let prompt = compile_blueprint(answers.kind(), &answers)
        .map_err(|e| ApiError::new(ErrorCode::InvalidInput, e.to_string()))?;
    let rendered = prompt.render();
    Ok(Json(BlueprintOutput { prompt, rendered }))
}

pub fn parse_blueprint_kind(s: &str) -> Option<BlueprintKind> {
    match s {
        "tutor" => Some(BlueprintKind::Tutor),
        "ta" | "teaching_assistant" => Some(BlueprintKind::TeachingAssistant),
        _ => None,
    }
}

async fn blueprint_questions(Path(kind): Path<String>) -> ApiResult<Json<Vec<InterviewQuestion>>> {
    let kind = parse_blueprint_kind(&kind).ok_or_else(|| ApiError::not_found("blueprint", &kind))?;
    Ok(Json(
        interview_questions(kind)
            .iter()
            .map(|(f, q)| InterviewQuestion { field: f.to_string(), question: q.to_string() })
            .collect(),
    ))
}
