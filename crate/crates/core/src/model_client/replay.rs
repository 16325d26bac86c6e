use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use futures::stream;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::http::{parse_completion_body, wire_request};
use super::sse::parse_sse_body;
use super::{ChatModel, ChatRequest, ChatResponse, ChatStream, HttpChatClient, ModelError, StreamEvent};

/// One captured exchange: hash of the wire request and the raw provider body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub request_hash: String,
    pub response: String,
}

/// SHA-256 hex of the JSON wire body for `request`.
pub fn request_hash(request: &ChatRequest, stream: bool) -> String {
    let body = serde_json::to_string(&wire_request(request, stream)).expect("request serializes");
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Answers requests from recorded fixtures; never touches the network.
pub struct ReplayModel {
    fixtures: HashMap<String, String>,
}

impl ReplayModel {
    pub fn new(fixtures: Vec<Fixture>) -> ReplayModel {
        ReplayModel { fixtures: fixtures.into_iter().map(|f| (f.request_hash, f.response)).collect() }
    }

    pub fn from_json(doc: &str) -> Result<ReplayModel, serde_json::Error> {
        Ok(ReplayModel::new(serde_json::from_str(doc)?))
    }

    pub fn load(path: &Path) -> std::io::Result<ReplayModel> {
        let doc = std::fs::read_to_string(path)?;
        ReplayModel::from_json(&doc).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    fn raw(&self, request: &ChatRequest, stream: bool) -> Result<&str, ModelError> {
        let h = request_hash(request, stream);
        self.fixtures.get(&h).map(String::as_str).ok_or(ModelError::NoFixture(h))
    }
}

#[async_trait]
impl ChatModel for ReplayModel {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        parse_completion_body(self.raw(request, false)?)
    }

    async fn stream_complete(&self, request: &ChatRequest) -> Result<ChatStream, ModelError> {
        let (deltas, resp) = parse_sse_body(self.raw(request, true)?);
        let mut events: Vec<StreamEvent> = deltas.into_iter().map(StreamEvent::Delta).collect();
        events.push(StreamEvent::Done(resp));
        Ok(Box::pin(stream::iter(events)))
    }
}

/// Wraps a live client and captures every exchange as a fixture.
pub struct FixtureRecorder {
    inner: HttpChatClient,
    captured: Mutex<Vec<Fixture>>,
}

impl FixtureRecorder {
    pub fn new(inner: HttpChatClient) -> FixtureRecorder {
        FixtureRecorder { inner, captured: Mutex::default() }
    }

    pub fn fixtures(&self) -> Vec<Fixture> {
        self.captured.lock().unwrap().clone()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let doc = serde_json::to_string_pretty(&self.fixtures()).expect("fixtures serialize");
        std::fs::write(path, doc)
    }
}

#[async_trait]
impl ChatModel for FixtureRecorder {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        let raw = self.inner.complete_raw(request).await?;
        self.captured
            .lock()
            .unwrap()
            .push(Fixture { request_hash: request_hash(request, false), response: raw.clone() });
        parse_completion_body(&raw)
    }

    async fn stream_complete(&self, request: &ChatRequest) -> Result<ChatStream, ModelError> {
        let raw = self.inner.stream_raw(request).await?;
        self.captured
            .lock()
            .unwrap()
            .push(Fixture { request_hash: request_hash(request, true), response: raw.clone() });
        let (deltas, resp) = parse_sse_body(&raw);
        let mut events: Vec<StreamEvent> = deltas.into_iter().map(StreamEvent::Delta).collect();
        events.push(StreamEvent::Done(resp));
        Ok(Box::pin(stream::iter(events)))
    }
}
