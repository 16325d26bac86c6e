//! Automated prompt test battery: scripted students against compiled
//! exercises, scored for step adherence.

mod battery;
mod cooperative;
mod score;
mod script;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use battery::{
    diff_cross_model, run_battery, run_battery_with_spec, run_script, BatteryReport, Divergence, FindingDivergence,
    ModelReport, RowDivergence, RowOutcome, RowResult, RunRecord,
};
pub use cooperative::{
    cooperative_model, cooperative_plan, default_script, default_scripts, CooperativePlan, ANSWER_REQUEST, PUSHBACK,
    REFUSAL,
};
pub use score::{score_adherence, AdherenceReport, Verdict};
pub use script::{Persona, ScriptTurn, StudentScript};

use crate::exercise_spec::{Bindings, SpecError};
use crate::model_client::{PatternRule, ProviderConfig};
use crate::session_engine::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryRow {
    WorksAsIntended,
    Consistency,
    LosesTrack,
    BreaksWhenPushed,
    FollowsSteps,
    ProficiencyLevels,
    EdgeCase,
    OutputQuality,
    CrossModel,
}

impl BatteryRow {
    pub const ALL: [BatteryRow; 9] = [
        BatteryRow::WorksAsIntended,
        BatteryRow::Consistency,
        BatteryRow::LosesTrack,
        BatteryRow::BreaksWhenPushed,
        BatteryRow::FollowsSteps,
        BatteryRow::ProficiencyLevels,
        BatteryRow::EdgeCase,
        BatteryRow::OutputQuality,
        BatteryRow::CrossModel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BatteryRow::WorksAsIntended => "works_as_intended",
            BatteryRow::Consistency => "consistency",
            BatteryRow::LosesTrack => "loses_track",
            BatteryRow::BreaksWhenPushed => "breaks_when_pushed",
            BatteryRow::FollowsSteps => "follows_steps",
            BatteryRow::ProficiencyLevels => "proficiency_levels",
            BatteryRow::EdgeCase => "edge_case",
            BatteryRow::OutputQuality => "output_quality",
            BatteryRow::CrossModel => "cross_model",
        }
    }

    /// Rows whose predicate only approximates the instructor's judgment.
    pub fn heuristic(self) -> bool {
        matches!(self, BatteryRow::OutputQuality | BatteryRow::BreaksWhenPushed)
    }
}

/// Where a battery's model replies come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Replies generated to walk the spec step by step.
    Cooperative,
    Scripted {
        #[serde(default)]
        replies: Vec<String>,
        #[serde(default)]
        rules: Vec<PatternRule>,
        #[serde(default)]
        fallback: Option<String>,
    },
    Replay {
        fixtures: PathBuf,
    },
    Provider(ProviderConfig),
}

impl ModelConfig {
    pub fn label(&self) -> String {
        match self {
            ModelConfig::Cooperative => "cooperative".into(),
            ModelConfig::Scripted { .. } => "scripted".into(),
            ModelConfig::Replay { fixtures } => format!("replay:{}", fixtures.display()),
            ModelConfig::Provider(p) => p.model_id.clone(),
        }
    }

    /// Offline configs give the same reply for the same request every time.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, ModelConfig::Provider(_))
    }
}

pub const LIVE_PASS_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPlan {
    pub spec_id: String,
    /// Exercise document to test instead of the built-in spec of that id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<PathBuf>,
    pub battery: Vec<BatteryRow>,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default)]
    pub scripts: Vec<StudentScript>,
    /// Add one generated script per persona to `scripts`.
    #[serde(default)]
    pub default_scripts: bool,
    #[serde(default)]
    pub model_configs: Vec<ModelConfig>,
    #[serde(default)]
    pub bindings: Bindings,
    /// Pass rate a row needs on live models; offline models need 1.0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_threshold: Option<f64>,
}

fn one() -> u32 {
    1
}

impl TestPlan {
    pub fn new(spec_id: &str, battery: Vec<BatteryRow>) -> TestPlan {
        TestPlan {
            spec_id: spec_id.to_string(),
            spec_file: None,
            battery,
            repetitions: 1,
            scripts: Vec::new(),
            default_scripts: false,
            model_configs: Vec::new(),
            bindings: Bindings::new(),
            pass_threshold: None,
        }
    }

    /// Model configs to run, defaulting to the cooperative scripted model.
    pub fn models(&self) -> Vec<ModelConfig> {
        if self.model_configs.is_empty() {
            vec![ModelConfig::Cooperative]
        } else {
            self.model_configs.clone()
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.repetitions == 0 {
            return Err(HarnessError::InvalidPlan("repetitions must be at least 1".into()));
        }
        if self.model_configs.len() > 2 {
            return Err(HarnessError::InvalidPlan("at most two model configs".into()));
        }
        if self.battery.contains(&BatteryRow::CrossModel) && self.model_configs.len() != 2 {
            return Err(HarnessError::InvalidPlan("cross_model needs exactly two model configs".into()));
        }
        if let Some(t) = self.pass_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(HarnessError::InvalidPlan("pass_threshold must be within [0, 1]".into()));
            }
        }
        for s in &self.scripts {
            s.check()?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid test plan: {0}")]
    InvalidPlan(String),
    #[error("invalid script {script}: {reason}")]
    InvalidScript { script: String, reason: String },
    #[error("unknown spec {0}")]
    UnknownSpec(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("cannot start a session: {0}")]
    Session(#[from] SessionError),
    #[error("spec/transcript mismatch: {0}")]
    Mismatch(String),
    #[error("reports come from different plans: {0}")]
    MismatchedPlans(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}
