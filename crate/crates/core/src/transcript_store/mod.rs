//! Append-only session logs, markdown export, share tokens and annotations.
//!
//! Layout under the store root:
//! `events/<session_id>.jsonl` one event per line,
//! `index.json` session summaries (replaced atomically),
//! `shares.jsonl` minted share tokens.

mod export;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use export::{export_markdown, reflection_questions};

use crate::exercise_spec::ExerciseKind;
use crate::model_client::Role;
use crate::session_engine::{ConstraintFinding, Turn};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub session_id: String,
    pub spec_id: String,
    pub spec_title: String,
    pub kind: ExerciseKind,
    pub step_names: Vec<String>,
    #[serde(default)]
    pub hide_instructions: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTraceEntry {
    pub turn_ordinal: usize,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptFinding {
    pub turn_ordinal: usize,
    #[serde(flatten)]
    pub finding: ConstraintFinding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub author: String,
    pub turn_ordinal: usize,
    pub note: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationDraft {
    pub author: String,
    pub turn_ordinal: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub meta: TranscriptMeta,
    pub turns: Vec<Turn>,
    pub step_trace: Vec<StepTraceEntry>,
    pub findings: Vec<TranscriptFinding>,
    pub annotations: Vec<Annotation>,
}

impl Transcript {
    /// Build a transcript. The step trace (one entry per step change) and the
    /// finding list are derived from the turns.
    pub fn new(meta: TranscriptMeta, turns: Vec<Turn>, annotations: Vec<Annotation>) -> Transcript {
        let mut step_trace: Vec<StepTraceEntry> = Vec::new();
        for (i, t) in turns.iter().enumerate() {
            if step_trace.last().map(|e| e.step) != Some(t.step_index) {
                step_trace.push(StepTraceEntry { turn_ordinal: i, step: t.step_index });
            }
        }
        let findings = turns
            .iter()
            .enumerate()
            .flat_map(|(i, t)| {
                t.findings
                    .iter()
                    .map(move |f| TranscriptFinding { turn_ordinal: i, finding: f.clone() })
            })
            .collect();
        Transcript { meta, turns, step_trace, findings, annotations }
    }

    pub fn session_id(&self) -> &str {
        &self.meta.session_id
    }

    pub fn spec_id(&self) -> &str {
        &self.meta.spec_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.meta.created_at
    }

    pub fn step_name(&self, step: u32) -> &str {
        self.meta
            .step_names
            .get((step as usize).wrapping_sub(1))
            .map(String::as_str)
            .unwrap_or("")
    }

    pub fn check(&self) -> Result<(), StoreError> {
        if self.turns.is_empty() {
            return Err(StoreError::Invalid("transcript has no turns; the system turn is required".into()));
        }
        if self.turns[0].role != Role::System {
            return Err(StoreError::Invalid("first turn must be the system prompt".into()));
        }
        if self.step_trace.windows(2).any(|w| w[0].turn_ordinal >= w[1].turn_ordinal) {
            return Err(StoreError::Invalid("step trace ordinals must increase".into()));
        }
        if self.findings.iter().any(|f| f.turn_ordinal >= self.turns.len()) {
            return Err(StoreError::Invalid("finding references a missing turn".into()));
        }
        if self.annotations.iter().any(|a| a.turn_ordinal >= self.turns.len()) {
            return Err(StoreError::Invalid("annotation references a missing turn".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareToken {
    pub token: String,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub spec_id: String,
    pub spec_title: String,
    pub created_at: DateTime<Utc>,
    pub turns: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown share token")]
    UnknownToken,
    #[error("invalid transcript: {0}")]
    Invalid(String),
    #[error("turn ordinal {ordinal} is out of bounds (transcript has {len} turns)")]
    OutOfBounds { ordinal: usize, len: usize },
    #[error("stored log for {0} is ahead of or differs from the transcript being saved")]
    Conflict(String),
    #[error("corrupt event log {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("storage I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Event {
    #[serde(rename = "type")]
    kind: String,
    payload: Value,
    at: DateTime<Utc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    ordinal: usize,
    #[serde(flatten)]
    turn: Turn,
}

/// 128 random bits from the OS generator, URL-safe base64 without padding.
pub fn mint_token() -> String {
    let mut bytes = [0u8; 16];
    OsRng.fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

pub struct TranscriptStore {
    root: PathBuf,
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    index: Mutex<BTreeMap<String, IndexEntry>>,
    shares: RwLock<HashMap<String, ShareToken>>,
    shares_file: Mutex<()>,
}

impl TranscriptStore {
    pub fn open(root: impl AsRef<Path>) -> Result<TranscriptStore, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("events"))?;
        let index = match fs::read_to_string(root.join("index.json")) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| StoreError::Corrupt {
                path: "index.json".into(),
                reason: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        let mut shares = HashMap::new();
        match File::open(root.join("shares.jsonl")) {
            Ok(f) => {
                for line in BufReader::new(f).lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let t: ShareToken = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        path: "shares.jsonl".into(),
                        reason: e.to_string(),
                    })?;
                    shares.insert(t.token.clone(), t);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(TranscriptStore {
            root,
            session_locks: Mutex::default(),
            index: Mutex::new(index),
            shares: RwLock::new(shares),
            shares_file: Mutex::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn event_path(&self, session_id: &str) -> PathBuf {
        self.root.join("events").join(format!("{session_id}.jsonl"))
    }

    fn session_lock(&self, session_id: &str) -> Arc<Mutex<()>> {
        self.session_locks
            .lock()
            .unwrap()
            .entry(session_id.to_string())
            .or_default()
            .clone()
    }

    fn valid_id(session_id: &str) -> bool {
        !session_id.is_empty()
            && session_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    }

    pub fn exists(&self, session_id: &str) -> bool {
        Self::valid_id(session_id) && self.event_path(session_id).exists()
    }

    pub fn list(&self) -> Vec<IndexEntry> {
        self.index.lock().unwrap().values().cloned().collect()
    }

    /// Persist a transcript. A session already on disk only gets the turns
    /// and annotations it does not have yet. Annotations stored earlier but
    /// missing from `transcript` are kept.
    pub fn save_session(&self, transcript: &Transcript) -> Result<String, StoreError> {
        transcript.check()?;
        let id = transcript.session_id().to_string();
        if !Self::valid_id(&id) {
            return Err(StoreError::Invalid(format!("session id {id:?} is not a safe file name")));
        }
        let lock = self.session_lock(&id);
        let _guard = lock.lock().unwrap();

        let mut lines = Vec::new();
        let (have_turns, have_notes) = match self.load_unlocked(&id) {
            Ok(existing) => {
                let shared = existing.annotations.len().min(transcript.annotations.len());
                if existing.meta != transcript.meta
                    || existing.turns.len() > transcript.turns.len()
                    || existing.turns[..] != transcript.turns[..existing.turns.len()]
                    || existing.annotations[..shared] != transcript.annotations[..shared]
                {
                    return Err(StoreError::Conflict(id));
                }
                (existing.turns.len(), existing.annotations.len())
            }
            Err(StoreError::UnknownSession(_)) => {
                lines.push(event("meta", &transcript.meta, transcript.meta.created_at));
                (0, 0)
            }
            Err(e) => return Err(e),
        };

        for (i, turn) in transcript.turns.iter().enumerate().skip(have_turns) {
            let mut bare = turn.clone();
            bare.findings.clear();
            lines.push(event("turn", &TurnRecord { ordinal: i, turn: bare }, turn.timestamp));
            for f in &turn.findings {
                let tf = TranscriptFinding { turn_ordinal: i, finding: f.clone() };
                lines.push(event("finding", &tf, turn.timestamp));
            }
        }
        for a in transcript.annotations.iter().skip(have_notes) {
            lines.push(event("annotation", a, a.created_at));
        }
        self.append(&id, &lines)?;
        self.update_index(transcript)?;
        Ok(id)
    }

    fn append(&self, session_id: &str, lines: &[String]) -> Result<(), StoreError> {
        if lines.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(self.event_path(session_id))?;
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    fn update_index(&self, t: &Transcript) -> Result<(), StoreError> {
        let mut index = self.index.lock().unwrap();
        index.insert(
            t.session_id().to_string(),
            IndexEntry {
                session_id: t.session_id().to_string(),
                spec_id: t.meta.spec_id.clone(),
                spec_title: t.meta.spec_title.clone(),
                created_at: t.meta.created_at,
                turns: t.turns.len(),
            },
        );
        let tmp = self.root.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&*index).expect("index serializes"))?;
        fs::rename(&tmp, self.root.join("index.json"))?;
        Ok(())
    }

    pub fn load(&self, session_id: &str) -> Result<Transcript, StoreError> {
        if !Self::valid_id(session_id) {
            return Err(StoreError::UnknownSession(session_id.to_string()));
        }
        let lock = self.session_lock(session_id);
        let _guard = lock.lock().unwrap();
        self.load_unlocked(session_id)
    }

    fn load_unlocked(&self, session_id: &str) -> Result<Transcript, StoreError> {
        let path = self.event_path(session_id);
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownSession(session_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason: String| StoreError::Corrupt { path: path.display().to_string(), reason };
        let mut meta = None;
        let mut turns: Vec<Turn> = Vec::new();
        let mut annotations = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: Event = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            match ev.kind.as_str() {
                "meta" => meta = Some(serde_json::from_value(ev.payload).map_err(|e| corrupt(e.to_string()))?),
                "turn" => {
                    let r: TurnRecord = serde_json::from_value(ev.payload).map_err(|e| corrupt(e.to_string()))?;
                    if r.ordinal != turns.len() {
                        return Err(corrupt(format!("turn ordinal {} out of sequence", r.ordinal)));
                    }
                    turns.push(r.turn);
                }
                "finding" => {
                    let f: TranscriptFinding =
                        serde_json::from_value(ev.payload).map_err(|e| corrupt(e.to_string()))?;
                    let turn = turns
                        .get_mut(f.turn_ordinal)
                        .ok_or_else(|| corrupt("finding before its turn".into()))?;
                    turn.findings.push(f.finding);
                }
                "annotation" => annotations.push(serde_json::from_value(ev.payload).map_err(|e| corrupt(e.to_string()))?),
                other => return Err(corrupt(format!("unknown event type {other:?}"))),
            }
        }
        let meta = meta.ok_or_else(|| corrupt("missing meta event".into()))?;
        Ok(Transcript::new(meta, turns, annotations))
    }

    /// Append an annotation, timestamped under the session's write lock.
    pub fn annotate(&self, session_id: &str, draft: AnnotationDraft) -> Result<Transcript, StoreError> {
        if !Self::valid_id(session_id) {
            return Err(StoreError::UnknownSession(session_id.to_string()));
        }
        let lock = self.session_lock(session_id);
        let _guard = lock.lock().unwrap();
        let mut t = self.load_unlocked(session_id)?;
        if draft.turn_ordinal >= t.turns.len() {
            return Err(StoreError::OutOfBounds { ordinal: draft.turn_ordinal, len: t.turns.len() });
        }
        let a = Annotation {
            author: draft.author,
            turn_ordinal: draft.turn_ordinal,
            note: draft.note,
            created_at: Utc::now(),
        };
        self.append(session_id, &[event("annotation", &a, a.created_at)])?;
        t.annotations.push(a);
        Ok(t)
    }

    pub fn create_share_token(&self, session_id: &str) -> Result<ShareToken, StoreError> {
        if !self.exists(session_id) {
            return Err(StoreError::UnknownSession(session_id.to_string()));
        }
        let _file = self.shares_file.lock().unwrap();
        let mut shares = self.shares.write().unwrap();
        let mut token = mint_token();
        while shares.contains_key(&token) {
            tracing::error!("share token collision; minting again");
            token = mint_token();
        }
        let st = ShareToken { token: token.clone(), session_id: session_id.to_string(), created_at: Utc::now() };
        let mut f = OpenOptions::new().create(true).append(true).open(self.root.join("shares.jsonl"))?;
        let mut line = serde_json::to_string(&st).expect("token serializes");
        line.push('\n');
        f.write_all(line.as_bytes())?;
        shares.insert(token, st.clone());
        Ok(st)
    }

    pub fn share(&self, token: &str) -> Option<ShareToken> {
        self.shares.read().unwrap().get(token).cloned()
    }

    pub fn resolve_share(&self, token: &str) -> Result<Transcript, StoreError> {
        let st = self.share(token).ok_or(StoreError::UnknownToken)?;
        self.load(&st.session_id)
    }
}

fn event<T: Serialize>(kind: &str, payload: &T, at: DateTime<Utc>) -> String {
    serde_json::to_string(&Event {
        kind: kind.to_string(),
        payload: serde_json::to_value(payload).expect("payload serializes"),
        at,
    })
    .expect("event serializes")
}
