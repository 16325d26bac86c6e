#![allow(dead_code)]

use std::sync::Arc;

use serde_json::Value;

use praxis::{router, AppState, ModelSource};

pub struct Server {
    pub base: String,
    pub http: reqwest::Client,
    _dir: tempfile::TempDir,
}

pub async fn start(models: ModelSource) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::open(dir.path(), models).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Server { base: format!("http://{addr}"), http: reqwest::Client::new(), _dir: dir }
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(self.url(path)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let r = self.http.post(self.url(path)).json(body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn create(&self, exercise: &str, hide: bool) -> String {
        let (status, v) = self
            .post("/sessions", &serde_json::json!({ "exercise_id": exercise, "hide_instructions": hide }))
            .await;
        assert_eq!(status, 201, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    pub async fn say(&self, session: &str, text: &str) -> (u16, Value) {
        self.post(&format!("/sessions/{session}/messages?role=instructor"), &serde_json::json!({ "text": text }))
            .await
    }

    /// Post a streamed message; returns (event, data) pairs.
    pub async fn say_streaming(&self, session: &str, text: &str) -> Vec<(String, Value)> {
        let body = self
            .http
            .post(self.url(&format!("/sessions/{session}/messages")))
            .header("accept", "text/event-stream")
            .json(&serde_json::json!({ "text": text }))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        parse_sse(&body)
    }
}

pub fn parse_sse(body: &str) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for block in body.split("\n\n") {
        let mut event = String::from("message");
        let mut data = String::new();
        for line in block.lines() {
            if let Some(e) = line.strip_prefix("event:") {
                event = e.trim().to_string();
            } else if let Some(d) = line.strip_prefix("data:") {
                data.push_str(d.strip_prefix(' ').unwrap_or(d));
            }
        }
        if !data.is_empty() {
            out.push((event, serde_json::from_str(&data).unwrap()));
        }
    }
    out
}
