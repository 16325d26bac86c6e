use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use praxis_core::model_client::{
    collect_stream, ChatMessage, ChatModel, ChatRequest, FinishReason, HttpChatClient, ModelError, ProviderConfig,
};

#[derive(Clone)]
struct Mock {
    hits: Arc<AtomicUsize>,
    /// Status codes to answer with before succeeding.
    failures: Arc<Vec<u16>>,
    seen: Arc<Mutex<Vec<(Option<String>, Value)>>>,
    reply: Arc<dyn Fn(bool) -> Response + Send + Sync>,
}

async fn handler(State(m): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let n = m.hits.fetch_add(1, Ordering::SeqCst);
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    m.seen.lock().unwrap().push((auth, body.clone()));
    if let Some(&code) = m.failures.get(n) {
        return (StatusCode::from_u16(code).unwrap(), "{\"error\":\"nope\"}").into_response();
    }
    (m.reply)(body.get("stream").and_then(Value::as_bool).unwrap_or(false))
}

fn completion(content: &str, finish: &str) -> Response {
    Json(json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": finish}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3},
    }))
    .into_response()
}

fn sse(chunks: &[&str], done: bool) -> Response {
    let mut body = String::new();
    for c in chunks {
        body.push_str(&format!("data: {}\n\n", json!({"choices": [{"delta": {"content": c}}]})));
    }
    if done {
        body.push_str(&format!("data: {}\n\n", json!({"choices": [{"delta": {}, "finish_reason": "stop"}]})));
        body.push_str("data: [DONE]\n\n");
    }
    ([("content-type", "text/event-stream")], body).into_response()
}

async fn serve(failures: Vec<u16>, reply: Arc<dyn Fn(bool) -> Response + Send + Sync>) -> (String, Mock) {
    let mock = Mock { hits: Arc::default(), failures: Arc::new(failures), seen: Arc::default(), reply };
    let app = Router::new().route("/v1/chat/completions", post(handler)).with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), mock)
}

fn client(base: &str) -> HttpChatClient {
    let mut cfg = ProviderConfig::new(base, "test-model");
    cfg.retry_base_ms = 1;
    cfg.timeout_secs = 5.0;
    HttpChatClient::new(cfg).unwrap().with_token("sk-test")
}

fn request() -> ChatRequest {
    ChatRequest {
        messages: vec![ChatMessage::system("be brief"), ChatMessage::user("hello")],
        model_id: "test-model".into(),
        temperature: 0.2,
        max_output_tokens: 64,
    }
}

#[tokio::test]
async fn retries_server_errors_then_succeeds() {
    let (base, mock) = serve(vec![503, 429], Arc::new(|_| completion("hi there", "stop"))).await;
    let resp = client(&base).complete(&request()).await.unwrap();
    assert_eq!(resp.content, "hi there");
    assert_eq!(resp.usage.input_tokens, 12);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn gives_up_after_configured_retries() {
    let (base, mock) = serve(vec![500; 10], Arc::new(|_| completion("never", "stop"))).await;
    let err = client(&base).complete(&request()).await.unwrap_err();
    assert!(matches!(err, ModelError::Provider { status: 500, .. }));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 4);
}

#[tokio::test]
async fn auth_failure_is_not_retried() {
    let (base, mock) = serve(vec![401], Arc::new(|_| completion("never", "stop"))).await;
    let err = client(&base).complete(&request()).await.unwrap_err();
    assert!(matches!(err, ModelError::Auth(_)));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn missing_token_fails_before_any_request() {
    let (base, mock) = serve(vec![], Arc::new(|_| completion("never", "stop"))).await;
    let mut cfg = ProviderConfig::new(&base, "m");
    cfg.auth_token_env = "PRAXIS_TEST_UNSET_TOKEN_VARIABLE".into();
    let err = HttpChatClient::new(cfg).unwrap().complete(&request()).await.unwrap_err();
    assert!(matches!(err, ModelError::Auth(_)));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 0);
}

#[tokio::test]
async fn sends_bearer_token_and_wire_body() {
    let (base, mock) = serve(vec![], Arc::new(|_| completion("ok", "stop"))).await;
    client(&base).complete(&request()).await.unwrap();
    let seen = mock.seen.lock().unwrap();
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "hello");
    assert_eq!(body["max_tokens"], 64);
    assert!(body.get("stream").is_none());
}

#[tokio::test]
async fn length_finish_is_over_length() {
    let (base, _) = serve(vec![], Arc::new(|_| completion("cut", "length"))).await;
    assert_eq!(client(&base).complete(&request()).await.unwrap_err(), ModelError::OverLength);
}

#[tokio::test]
async fn context_overflow_status_is_over_length() {
    let reply = Arc::new(|_| {
        (StatusCode::BAD_REQUEST, "{\"error\":{\"code\":\"context_length_exceeded\"}}").into_response()
    });
    let (base, mock) = serve(vec![], reply).await;
    assert_eq!(client(&base).complete(&request()).await.unwrap_err(), ModelError::OverLength);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn stream_deltas_concatenate_to_content() {
    let (base, mock) = serve(vec![], Arc::new(|_| sse(&["Hel", "lo, ", "student", "!"], true))).await;
    let s = client(&base).stream_complete(&request()).await.unwrap();
    let (deltas, resp) = collect_stream(s).await;
    assert_eq!(deltas, vec!["Hel", "lo, ", "student", "!"]);
    assert_eq!(resp.content, "Hello, student!");
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    assert_eq!(mock.seen.lock().unwrap()[0].1["stream"], true);
}

#[tokio::test]
async fn truncated_stream_reports_error_finish() {
    let (base, _) = serve(vec![], Arc::new(|_| sse(&["partial"], false))).await;
    let s = client(&base).stream_complete(&request()).await.unwrap();
    let (deltas, resp) = collect_stream(s).await;
    assert_eq!(deltas, vec!["partial"]);
    assert_eq!(resp.finish_reason, FinishReason::Error);
}
