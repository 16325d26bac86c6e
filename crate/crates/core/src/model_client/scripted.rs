use std::sync::Mutex;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatModel, ChatRequest, ChatResponse, ModelError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRule {
    /// Regex matched against the last user message.
    pub pattern: String,
    pub reply: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ScriptDoc {
    #[serde(default)]
    replies: Vec<String>,
    #[serde(default)]
    rules: Vec<PatternRule>,
    #[serde(default)]
    fallback: Option<String>,
}

/// Deterministic stand-in model. Lookup order: the first pattern rule that
/// matches the last user message, then the next indexed reply, then the
/// fallback reply.
pub struct ScriptedModel {
    replies: Vec<String>,
    rules: Vec<(Regex, String)>,
    fallback: Option<String>,
    state: Mutex<ScriptState>,
}

#[derive(Default)]
struct ScriptState {
    next: usize,
    requests: Vec<ChatRequest>,
}

impl ScriptedModel {
    pub fn new(replies: Vec<String>) -> ScriptedModel {
        ScriptedModel { replies, rules: Vec::new(), fallback: None, state: Mutex::default() }
    }

    pub fn with_rule(mut self, pattern: &str, reply: impl Into<String>) -> Result<ScriptedModel, regex::Error> {
        self.rules.push((Regex::new(pattern)?, reply.into()));
        Ok(self)
    }

    pub fn with_fallback(mut self, reply: impl Into<String>) -> ScriptedModel {
        self.fallback = Some(reply.into());
        self
    }

    /// Load `{replies, rules, fallback}` from JSON.
    pub fn from_json(doc: &str) -> Result<ScriptedModel, String> {
        let d: ScriptDoc = serde_json::from_str(doc).map_err(|e| e.to_string())?;
        let mut m = ScriptedModel::new(d.replies);
        for r in d.rules {
            m = m.with_rule(&r.pattern, r.reply).map_err(|e| e.to_string())?;
        }
        m.fallback = d.fallback;
        Ok(m)
    }

    /// Fresh copy with the cursor rewound and no recorded requests.
    pub fn reset(&self) -> ScriptedModel {
        ScriptedModel {
            replies: self.replies.clone(),
            rules: self.rules.clone(),
            fallback: self.fallback.clone(),
            state: Mutex::default(),
        }
    }

    /// Requests seen so far, in order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn scripted_next(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        let mut st = self.state.lock().unwrap();
        st.requests.push(request.clone());
        if let Some(last) = request.last_user_message() {
            if let Some((_, reply)) = self.rules.iter().find(|(re, _)| re.is_match(last)) {
                return Ok(ChatResponse::stop(reply.clone()));
            }
        }
        if let Some(reply) = self.replies.get(st.next) {
            st.next += 1;
            return Ok(ChatResponse::stop(reply.clone()));
        }
        match &self.fallback {
            Some(f) => Ok(ChatResponse::stop(f.clone())),
            None => Err(ModelError::Exhausted),
        }
    }
}

#[async_trait]
impl ChatModel for ScriptedModel {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        self.scripted_next(request)
    }
}
