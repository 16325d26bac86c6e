use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use praxis_core::exercise_spec::{builtin_catalog, ExerciseSpec};
use praxis_core::model_client::{ChatModel, HttpChatClient, ModelError, ProviderConfig, ScriptedModel};
use praxis_core::session_engine::SessionState;
use praxis_core::test_harness::cooperative_model;
use praxis_core::transcript_store::{StoreError, TranscriptStore};

/// Where sessions get their model from.
#[derive(Clone)]
pub enum ModelSource {
    /// A generated scripted model that walks each exercise step by step.
    Cooperative,
    /// A fresh copy of the same scripted model for every session.
    Scripted(Arc<ScriptedModel>),
    /// One client shared by every session.
    Shared(Arc<dyn ChatModel>),
}

impl ModelSource {
    pub fn for_spec(&self, spec: &ExerciseSpec) -> Arc<dyn ChatModel> {
        match self {
            ModelSource::Cooperative => Arc::new(cooperative_model(spec)),
            ModelSource::Scripted(m) => Arc::new(m.reset()),
            ModelSource::Shared(m) => m.clone(),
        }
    }

    pub fn provider(config: ProviderConfig) -> Result<ModelSource, ModelError> {
        Ok(ModelSource::Shared(Arc::new(HttpChatClient::new(config)?)))
    }

    pub fn model_id(&self) -> String {
        match self {
            ModelSource::Cooperative => "cooperative".into(),
            ModelSource::Scripted(_) => "scripted".into(),
            ModelSource::Shared(_) => std::env::var("PRAXIS_MODEL").unwrap_or_else(|_| "default".into()),
        }
    }
}

/// Settings read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub data_dir: PathBuf,
    pub base_url: Option<String>,
    pub model: String,
}

impl EnvConfig {
    pub fn from_env() -> EnvConfig {
        EnvConfig {
            data_dir: std::env::var_os("PRAXIS_DATA_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("praxis-data")),
            base_url: std::env::var("PRAXIS_BASE_URL").ok().filter(|s| !s.trim().is_empty()),
            model: std::env::var("PRAXIS_MODEL").unwrap_or_else(|_| "gpt-4o".into()),
        }
    }

    pub fn provider(&self) -> Option<ProviderConfig> {
        self.base_url.as_ref().map(|u| ProviderConfig::new(u.clone(), self.model.clone()))
    }
}

pub struct LiveSession {
    pub state: tokio::sync::Mutex<SessionState>,
    pub model: Arc<dyn ChatModel>,
}

pub struct AppState {
    pub store: TranscriptStore,
    exercises: RwLock<BTreeMap<String, ExerciseSpec>>,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    pub models: ModelSource,
}

impl AppState {
    pub fn new(store: TranscriptStore, models: ModelSource) -> AppState {
        let exercises = builtin_catalog().into_iter().map(|s| (s.id.clone(), s)).collect();
        AppState {
            store,
            exercises: RwLock::new(exercises),
            sessions: Mutex::default(),
            models,
        }
    }

    pub fn open(data_dir: impl Into<PathBuf>, models: ModelSource) -> Result<AppState, StoreError> {
        Ok(AppState::new(TranscriptStore::open(data_dir.into())?, models))
    }

    pub fn exercises(&self) -> Vec<ExerciseSpec> {
        self.exercises.read().unwrap().values().cloned().collect()
    }

    pub fn exercise(&self, id: &str) -> Option<ExerciseSpec> {
        self.exercises.read().unwrap().get(id).cloned()
    }

    /// Register a spec; false when the id is taken.
    pub fn add_exercise(&self, spec: ExerciseSpec) -> bool {
        let mut ex = self.exercises.write().unwrap();
        if ex.contains_key(&spec.id) {
            return false;
        }
        ex.insert(spec.id.clone(), spec);
        true
    }

    pub fn insert_session(&self, state: SessionState, model: Arc<dyn ChatModel>) -> Arc<LiveSession> {
        let id = state.session_id.clone();
        let live = Arc::new(LiveSession { state: tokio::sync::Mutex::new(state), model });
        self.sessions.lock().unwrap().insert(id, live.clone());
        live
    }

    pub fn session(&self, id: &str) -> Option<Arc<LiveSession>> {
        self.sessions.lock().unwrap().get(id).cloned()
    }
}
