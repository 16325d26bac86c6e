use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use rand::Rng;
use serde_json::{json, Value};

use super::sse::{fold_items, SseDecoder, SseItem};
use super::{ChatModel, ChatRequest, ChatResponse, ChatStream, FinishReason, ModelError, ProviderConfig, StreamEvent, Usage};

/// Client for OpenAI-compatible `/chat/completions` endpoints.
#[derive(Clone)]
pub struct HttpChatClient {
    config: ProviderConfig,
    client: reqwest::Client,
    token: Option<String>,
}

impl HttpChatClient {
    pub fn new(config: ProviderConfig) -> Result<HttpChatClient, ModelError> {
        config.check()?;
        let client = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| ModelError::Config(e.to_string()))?;
        Ok(HttpChatClient { config, client, token: None })
    }

    /// Use an explicit token instead of reading the configured variable.
    pub fn with_token(mut self, token: impl Into<String>) -> HttpChatClient {
        self.token = Some(token.into());
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn resolve_token(&self) -> Result<String, ModelError> {
        if let Some(t) = &self.token {
            return Ok(t.clone());
        }
        match std::env::var(&self.config.auth_token_env) {
            Ok(t) if !t.trim().is_empty() => Ok(t),
            _ => Err(ModelError::Auth(format!(
                "environment variable {} is not set",
                self.config.auth_token_env
            ))),
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    async fn send_once(&self, body: &Value, token: &str) -> Result<reqwest::Response, ModelError> {
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(token)
            .json(body)
            .send()
            .await
            .map_err(map_transport)?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        Err(map_status(status, text))
    }

    async fn send_with_retry(&self, body: &Value) -> Result<reqwest::Response, ModelError> {
        let token = self.resolve_token()?;
        let mut attempt = 0;
        loop {
            match self.send_once(body, &token).await {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    let delay = backoff_delay(self.config.retry_base_ms, attempt, &mut rand::thread_rng());
                    tracing::warn!(error = %e, attempt, ?delay, "retrying chat completion");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Raw response body of a non-streamed completion.
    pub async fn complete_raw(&self, request: &ChatRequest) -> Result<String, ModelError> {
        let body = wire_request(request, false);
        let resp = self.send_with_retry(&body).await?;
        resp.text().await.map_err(map_transport)
    }

    /// Raw SSE body of a streamed completion, read to the end.
    pub async fn stream_raw(&self, request: &ChatRequest) -> Result<String, ModelError> {
        let body = wire_request(request, true);
        let resp = self.send_with_retry(&body).await?;
        resp.text().await.map_err(map_transport)
    }
}

#[async_trait]
impl ChatModel for HttpChatClient {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        let raw = self.complete_raw(request).await?;
        parse_completion_body(&raw)
    }

    async fn stream_complete(&self, request: &ChatRequest) -> Result<ChatStream, ModelError> {
        let body = wire_request(request, true);
        let resp = self.send_with_retry(&body).await?;
        let (tx, rx) = tokio::sync::mpsc::channel::<StreamEvent>(64);
        tokio::spawn(async move {
            let mut bytes = resp.bytes_stream();
            let mut decoder = SseDecoder::new();
            let mut items: Vec<SseItem> = Vec::new();
            let mut broken = false;
            while let Some(chunk) = bytes.next().await {
                let chunk = match chunk {
                    Ok(c) => c,
                    Err(e) => {
                        tracing::warn!(error = %e, "chat stream interrupted");
                        broken = true;
                        break;
                    }
                };
                for item in decoder.feed(&chunk) {
                    if let SseItem::Delta(d) = &item {
                        if tx.send(StreamEvent::Delta(d.clone())).await.is_err() {
                            return;
                        }
                    }
                    items.push(item);
                }
            }
            for item in decoder.finish() {
                if let SseItem::Delta(d) = &item {
                    let _ = tx.send(StreamEvent::Delta(d.clone())).await;
                }
                items.push(item);
            }
            let (_, mut resp) = fold_items(items);
            if broken {
                resp.finish_reason = FinishReason::Error;
            }
            let _ = tx.send(StreamEvent::Done(resp)).await;
        });
        Ok(Box::pin(futures::stream::unfold(rx, |mut rx| async move {
            rx.recv().await.map(|ev| (ev, rx))
        })))
    }
}

/// JSON body sent to the provider.
pub fn wire_request(request: &ChatRequest, stream: bool) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
        .collect();
    let mut body = json!({
        "model": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    });
    if stream {
        body["stream"] = Value::Bool(true);
    }
    body
}

/// Full-jitter exponential backoff: uniform in `[0, base * 2^attempt]`.
pub fn backoff_delay(base_ms: u64, attempt: u32, rng: &mut impl Rng) -> Duration {
    let cap = base_ms.saturating_mul(1u64 << attempt.min(20));
    Duration::from_millis(if cap == 0 { 0 } else { rng.gen_range(0..=cap) })
}

pub(crate) fn map_finish_reason(s: &str) -> FinishReason {
    match s {
        "stop" | "end_turn" | "stop_sequence" => FinishReason::Stop,
        "length" | "max_tokens" => FinishReason::Length,
        _ => FinishReason::Error,
    }
}

pub(crate) fn parse_usage(v: &Value) -> Usage {
    let n = |k: &str| v.get(k).and_then(Value::as_u64).unwrap_or(0) as u32;
    Usage { input_tokens: n("prompt_tokens"), output_tokens: n("completion_tokens") }
}

fn is_context_overflow(body: &str) -> bool {
    body.contains("context_length_exceeded") || body.contains("maximum context length")
}

fn map_status(status: u16, body: String) -> ModelError {
    match status {
        401 | 403 => ModelError::Auth(format!("provider rejected credentials ({status})")),
        429 => ModelError::RateLimited,
        408 => ModelError::Timeout,
        400 | 413 if is_context_overflow(&body) => ModelError::OverLength,
        _ => ModelError::Provider { status, body },
    }
}

fn map_transport(e: reqwest::Error) -> ModelError {
    if e.is_timeout() {
        ModelError::Timeout
    } else {
        ModelError::Transport(e.to_string())
    }
}

/// Parse a non-streamed provider body.
pub fn parse_completion_body(raw: &str) -> Result<ChatResponse, ModelError> {
    let v: Value = serde_json::from_str(raw).map_err(|e| ModelError::Malformed(e.to_string()))?;
    if let Some(err) = v.get("error") {
        if is_context_overflow(&err.to_string()) {
            return Err(ModelError::OverLength);
        }
        return Err(ModelError::Malformed(format!("provider error: {err}")));
    }
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ModelError::Malformed("no choices".into()))?;
    let finish = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .map(map_finish_reason)
        .unwrap_or(FinishReason::Stop);
    if finish == FinishReason::Length {
        return Err(ModelError::OverLength);
    }
    let content = match choice.pointer("/message/content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(_) => return Err(ModelError::Malformed("message content is not text".into())),
    };
    if finish == FinishReason::Stop && content.is_empty() {
        return Err(ModelError::Malformed("empty completion".into()));
    }
    let usage = v.get("usage").map(parse_usage).unwrap_or_default();
    Ok(ChatResponse { content, finish_reason: finish, usage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn backoff_stays_under_cap() {
        let mut rng = StdRng::seed_from_u64(7);
        for attempt in 0..6 {
            for _ in 0..50 {
                let d = backoff_delay(1000, attempt, &mut rng);
                assert!(d <= Duration::from_millis(1000 << attempt));
            }
        }
        assert_eq!(backoff_delay(0, 3, &mut rng), Duration::ZERO);
    }

    #[test]
    fn length_maps_to_overlength() {
        let raw = r#"{"choices":[{"message":{"content":"cut"},"finish_reason":"length"}]}"#;
        assert_eq!(parse_completion_body(raw), Err(ModelError::OverLength));
        let raw = r#"{"error":{"code":"context_length_exceeded","message":"too long"}}"#;
        assert_eq!(parse_completion_body(raw), Err(ModelError::OverLength));
    }

    #[test]
    fn malformed_bodies() {
        assert!(matches!(parse_completion_body("nope"), Err(ModelError::Malformed(_))));
        assert!(matches!(parse_completion_body("{}"), Err(ModelError::Malformed(_))));
        let raw = r#"{"choices":[{"message":{"content":""},"finish_reason":"stop"}]}"#;
        assert!(matches!(parse_completion_body(raw), Err(ModelError::Malformed(_))));
    }

    #[test]
    fn status_mapping() {
        assert!(matches!(map_status(401, String::new()), ModelError::Auth(_)));
        assert_eq!(map_status(429, String::new()), ModelError::RateLimited);
        assert!(map_status(503, String::new()).is_retryable());
        assert!(!map_status(404, String::new()).is_retryable());
        assert_eq!(map_status(400, "context_length_exceeded".into()), ModelError::OverLength);
    }
}
