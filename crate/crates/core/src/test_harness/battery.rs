use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cooperative::{cooperative_model, default_scripts};
use super::score::{score_adherence, AdherenceReport, Verdict};
use super::script::{Persona, StudentScript};
use super::{BatteryRow, HarnessError, ModelConfig, TestPlan, LIVE_PASS_THRESHOLD};
use crate::exercise_spec::{catalog_spec, parse_exercise, Bindings, ConstraintKind, ExerciseSpec};
use crate::model_client::{ChatModel, HttpChatClient, ReplayModel, ScriptedModel};
use crate::session_engine::{exchange, start_session, SessionOptions, SessionStatus};
use crate::transcript_store::Transcript;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub script: String,
    pub persona: Persona,
    pub repetition: u32,
    /// Run padded past the script to probe long sessions.
    pub extended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<AdherenceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn verdict(&self) -> Verdict {
        self.report.as_ref().map_or(Verdict::Fail, |r| r.verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowOutcome {
    Evaluated { passed: usize, total: usize, pass_rate: f64, threshold: f64, ok: bool },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub row: BatteryRow,
    #[serde(flatten)]
    pub outcome: RowOutcome,
    pub heuristic: bool,
}

impl RowResult {
    pub fn ok(&self) -> Option<bool> {
        match self.outcome {
            RowOutcome::Evaluated { ok, .. } => Some(ok),
            RowOutcome::Skipped { .. } => None,
        }
    }
}

/// Runs and row results for one model config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub spec_id: String,
    pub model: String,
    pub deterministic: bool,
    pub runs: Vec<RunRecord>,
    pub rows: Vec<RowResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowDivergence {
    pub row: BatteryRow,
    pub a: Option<bool>,
    pub b: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingDivergence {
    pub script: String,
    pub rule: String,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub rows: Vec<RowDivergence>,
    pub findings: Vec<FindingDivergence>,
}

impl Divergence {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.findings.is_empty()
    }

    /// The same divergence seen from the other side.
    pub fn mirrored(&self) -> Divergence {
        Divergence {
            rows: self.rows.iter().map(|r| RowDivergence { row: r.row, a: r.b, b: r.a }).collect(),
            findings: self
                .findings
                .iter()
                .map(|f| FindingDivergence { script: f.script.clone(), rule: f.rule.clone(), a: f.b, b: f.a })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub spec_id: String,
    pub models: Vec<ModelReport>,
    /// Row results over the runs of every model.
    pub rows: Vec<RowResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<Divergence>,
    /// Share of runs with verdict pass; absent when nothing ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_rate: Option<f64>,
}

impl BatteryReport {
    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.models.iter().flat_map(|m| m.runs.iter())
    }

    /// Nonzero when an offline run failed.
    pub fn exit_code(&self) -> i32 {
        let failed = self
            .models
            .iter()
            .filter(|m| m.deterministic)
            .flat_map(|m| &m.runs)
            .any(|r| r.verdict() == Verdict::Fail);
        i32::from(failed)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "battery for {}", self.spec_id);
        let _ = writeln!(out, "{:<20} {:<8} {:>7} {:>6}  note", "row", "status", "passed", "rate");
        for r in &self.rows {
            let note = if r.heuristic { "heuristic" } else { "" };
            match &r.outcome {
                RowOutcome::Evaluated { passed, total, pass_rate, ok, .. } => {
                    let status = if *ok { "pass" } else { "fail" };
                    let _ = writeln!(
                        out,
                        "{:<20} {:<8} {:>7} {:>6.2}  {note}",
                        r.row.as_str(),
                        status,
                        format!("{passed}/{total}"),
                        pass_rate
                    );
                }
                RowOutcome::Skipped { reason } => {
                    let _ = writeln!(out, "{:<20} {:<8} {:>7} {:>6}  {reason}", r.row.as_str(), "skip", "-", "-");
                }
            }
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<14} {:<18} {:>3} {:<3} {:<16} {:<8} {:<6} {:<7}",
            "model", "script", "rep", "ext", "steps", "in_order", "budget", "verdict"
        );
        for m in &self.models {
            for r in &m.runs {
                let (steps, in_order, budget) = match &r.report {
                    Some(a) => (
                        a.steps_visited.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
                        a.in_order.to_string(),
                        a.budget_respected.to_string(),
                    ),
                    None => ("-".into(), "-".into(), "-".into()),
                };
                let _ = writeln!(
                    out,
                    "{:<14} {:<18} {:>3} {:<3} {:<16} {:<8} {:<6} {:<7}{}",
                    m.model,
                    r.script,
                    r.repetition,
                    if r.extended { "yes" } else { "no" },
                    steps,
                    in_order,
                    budget,
                    r.verdict().as_str(),
                    r.error.as_ref().map(|e| format!("  error: {e}")).unwrap_or_default()
                );
            }
        }
        if let Some(d) = &self.divergence {
            out.push('\n');
            if d.is_empty() {
                out.push_str("cross-model: no divergence\n");
            }
            for r in &d.rows {
                let _ = writeln!(out, "cross-model row {}: {:?} vs {:?}", r.row.as_str(), r.a, r.b);
            }
            for f in &d.findings {
                let _ = writeln!(out, "cross-model findings {} {}: {} vs {}", f.script, f.rule, f.a, f.b);
            }
        }
        match self.pass_rate {
            Some(p) => {
                let _ = writeln!(out, "\nrun pass rate: {p:.2}");
            }
            None => out.push_str("\nno runs\n"),
        }
        out
    }
}

fn build_model(config: &ModelConfig, spec: &ExerciseSpec) -> Result<Box<dyn ChatModel>, String> {
    match config {
        ModelConfig::Cooperative => Ok(Box::new(cooperative_model(spec))),
        ModelConfig::Scripted { replies, rules, fallback } => {
            let mut m = ScriptedModel::new(replies.clone());
            for r in rules {
                m = m.with_rule(&r.pattern, r.reply.clone()).map_err(|e| e.to_string())?;
            }
            if let Some(f) = fallback {
                m = m.with_fallback(f.clone());
            }
            Ok(Box::new(m))
        }
        ModelConfig::Replay { fixtures } => ReplayModel::load(fixtures)
            .map(|m| Box::new(m) as Box<dyn ChatModel>)
            .map_err(|e| format!("cannot load fixtures {}: {e}", fixtures.display())),
        ModelConfig::Provider(p) => HttpChatClient::new(p.clone())
            .map(|m| Box::new(m) as Box<dyn ChatModel>)
            .map_err(|e| e.to_string()),
    }
}

/// Drive one scripted student through a session and return the transcript.
/// A model failure ends the run early; the partial transcript is returned
/// with the error.
pub async fn run_script(
    spec: &ExerciseSpec,
    bindings: &Bindings,
    options: SessionOptions,
    model: &dyn ChatModel,
    script: &StudentScript,
    max_turns: u32,
) -> Result<(Transcript, Option<String>), HarnessError> {
    let mut state = start_session(spec, bindings, options)?;
    let mut last_reply = String::new();
    for i in 0..max_turns as usize {
        if state.status != SessionStatus::Active {
            break;
        }
        let text = script.turn_text(i, &last_reply);
        match exchange(&mut state, model, &text).await {
            Ok(out) => last_reply = out.reply,
            Err(e) => return Ok((state.end_session(), Some(e.to_string()))),
        }
    }
    Ok((state.end_session(), None))
}

async fn one_run(
    plan: &TestPlan,
    spec: &ExerciseSpec,
    config: &ModelConfig,
    script: &StudentScript,
    repetition: u32,
    extra_turns: Option<u32>,
) -> Result<RunRecord, HarnessError> {
    let mut record = RunRecord {
        script: script.label().to_string(),
        persona: script.persona,
        repetition,
        extended: extra_turns.is_some(),
        report: None,
        error: None,
    };
    let model = match build_model(config, spec) {
        Ok(m) => m,
        Err(e) => {
            record.error = Some(e);
            return Ok(record);
        }
    };
    let mut options = SessionOptions::default();
    if let ModelConfig::Provider(p) = config {
        options.model_id = p.model_id.clone();
    }
    let max_turns = script.max_turns + extra_turns.unwrap_or(0);
    let (transcript, error) = run_script(spec, &plan.bindings, options, model.as_ref(), script, max_turns).await?;
    record.error = error;
    if record.error.is_none() {
        record.report = Some(score_adherence(&transcript, spec)?);
    }
    Ok(record)
}

fn rate_row(row: BatteryRow, outcomes: &[bool], threshold: f64, empty_reason: &str) -> RowResult {
    let outcome = if outcomes.is_empty() {
        RowOutcome::Skipped { reason: empty_reason.to_string() }
    } else {
        let passed = outcomes.iter().filter(|&&b| b).count();
        let total = outcomes.len();
        let pass_rate = passed as f64 / total as f64;
        RowOutcome::Evaluated { passed, total, pass_rate, threshold, ok: pass_rate >= threshold }
    };
    RowResult { row, outcome, heuristic: row.heuristic() }
}

fn row_outcomes(row: BatteryRow, spec: &ExerciseSpec, runs: &[RunRecord], repetitions: u32) -> (Vec<bool>, String) {
    let normal = || runs.iter().filter(|r| !r.extended);
    let of = |ps: &[Persona]| -> Vec<&RunRecord> { normal().filter(|r| ps.contains(&r.persona)).collect() };
    let no_script = |ps: &[Persona]| {
        let names: Vec<&str> = ps.iter().map(|p| p.as_str()).collect();
        format!("no {} script in plan", names.join(" or "))
    };
    match row {
        BatteryRow::WorksAsIntended => {
            let ps = [Persona::Cooperative];
            (of(&ps).iter().map(|r| r.verdict() == Verdict::Pass).collect(), no_script(&ps))
        }
        BatteryRow::Consistency => {
            if repetitions < 2 {
                return (Vec::new(), "needs at least 2 repetitions".into());
            }
            let mut groups: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
            for r in normal() {
                groups.entry(r.script.as_str()).or_default().push(r);
            }
            let out = groups
                .values()
                .map(|g| g.iter().all(|r| r.error.is_none() && r.report == g[0].report))
                .collect();
            (out, "no scripts in plan".into())
        }
        BatteryRow::LosesTrack => {
            let out = runs
                .iter()
                .filter(|r| r.extended)
                .map(|r| r.report.as_ref().is_some_and(|a| a.in_order))
                .collect();
            let reason = if spec.longest_budget().is_none() {
                "spec has no turn budget to extend"
            } else {
                "no cooperative script in plan"
            };
            (out, reason.into())
        }
        BatteryRow::BreaksWhenPushed => {
            let ps = [Persona::RefusesToPlay, Persona::Argumentative];
            let out = of(&ps)
                .iter()
                .map(|r| r.report.as_ref().is_some_and(|a| a.fail_findings == 0))
                .collect();
            (out, no_script(&ps))
        }
        BatteryRow::FollowsSteps => {
            let all: Vec<u32> = (1..=spec.final_step_index()).collect();
            let markers = spec.transition_markers();
            let out = normal()
                .map(|r| {
                    r.report
                        .as_ref()
                        .is_some_and(|a| a.steps_visited == all && markers.iter().all(|m| a.markers_seen.contains(m)))
                })
                .collect();
            (out, "no scripts in plan".into())
        }
        BatteryRow::ProficiencyLevels => {
            let ps = [Persona::Proficient, Persona::Struggling];
            let out = of(&ps).iter().map(|r| r.report.as_ref().is_some_and(|a| a.in_order)).collect();
            (out, no_script(&ps))
        }
        BatteryRow::EdgeCase => {
            let ps = [Persona::AsksForAnswer, Persona::LongWinded];
            (of(&ps).iter().map(|r| r.verdict() != Verdict::Fail).collect(), no_script(&ps))
        }
        BatteryRow::OutputQuality => {
            let has_rule = spec.constraints.iter().any(|c| c.kind == ConstraintKind::FeedbackFormat);
            if !has_rule {
                return (Vec::new(), "spec has no feedback_format rule".into());
            }
            let out = normal()
                .map(|r| r.report.as_ref().is_some_and(|a| a.feedback_format_present))
                .collect();
            (out, "no scripts in plan".into())
        }
        BatteryRow::CrossModel => (Vec::new(), "evaluated across models".into()),
    }
}

fn model_rows(plan: &TestPlan, spec: &ExerciseSpec, runs: &[RunRecord], threshold: f64) -> Vec<RowResult> {
    plan.battery
        .iter()
        .filter(|&&r| r != BatteryRow::CrossModel)
        .map(|&row| {
            let (outcomes, reason) = row_outcomes(row, spec, runs, plan.repetitions);
            rate_row(row, &outcomes, threshold, &reason)
        })
        .collect()
}

fn resolve_spec(plan: &TestPlan) -> Result<ExerciseSpec, HarnessError> {
    match &plan.spec_file {
        Some(path) => {
            let doc = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Io { path: path.display().to_string(), reason: e.to_string() })?;
            let spec = parse_exercise(&doc)?;
            if spec.id != plan.spec_id {
                return Err(HarnessError::InvalidPlan(format!(
                    "spec file has id {:?}, plan names {:?}",
                    spec.id, plan.spec_id
                )));
            }
            Ok(spec)
        }
        None => catalog_spec(&plan.spec_id).ok_or_else(|| HarnessError::UnknownSpec(plan.spec_id.clone())),
    }
}

/// Run a test plan against the spec it names.
pub async fn run_battery(plan: &TestPlan) -> Result<BatteryReport, HarnessError> {
    let spec = resolve_spec(plan)?;
    run_battery_with_spec(plan, &spec).await
}

pub async fn run_battery_with_spec(plan: &TestPlan, spec: &ExerciseSpec) -> Result<BatteryReport, HarnessError> {
    plan.check()?;
    if spec.id != plan.spec_id {
        return Err(HarnessError::Mismatch(format!("plan is for {:?}, spec is {:?}", plan.spec_id, spec.id)));
    }
    start_session(spec, &plan.bindings, SessionOptions::default())?;

    let mut scripts = plan.scripts.clone();
    if plan.default_scripts {
        scripts.extend(default_scripts(spec));
    }
    let extend = plan.battery.contains(&BatteryRow::LosesTrack);
    let extra = spec.longest_budget().map(|b| 3 * b);

    let mut models = Vec::new();
    for config in plan.models() {
        let threshold = if config.is_deterministic() {
            1.0
        } else {
            plan.pass_threshold.unwrap_or(LIVE_PASS_THRESHOLD)
        };
        let mut runs = Vec::new();
        for script in &scripts {
            for rep in 0..plan.repetitions {
                runs.push(one_run(plan, spec, &config, script, rep, None).await?);
            }
        }
        if let (true, Some(extra)) = (extend, extra) {
            for script in scripts.iter().filter(|s| s.persona == Persona::Cooperative) {
                runs.push(one_run(plan, spec, &config, script, 0, Some(extra)).await?);
            }
        }
        let rows = model_rows(plan, spec, &runs, threshold);
        models.push(ModelReport {
            spec_id: spec.id.clone(),
            model: config.label(),
            deterministic: config.is_deterministic(),
            runs,
            rows,
        });
    }

    let all_runs: Vec<RunRecord> = models.iter().flat_map(|m| m.runs.clone()).collect();
    let threshold = if models.iter().all(|m| m.deterministic) {
        1.0
    } else {
        plan.pass_threshold.unwrap_or(LIVE_PASS_THRESHOLD)
    };
    let mut divergence = None;
    let mut rows = Vec::new();
    for &row in &plan.battery {
        if row == BatteryRow::CrossModel {
            let d = diff_cross_model(&models[0], &models[1])?;
            rows.push(rate_row(row, &[d.is_empty()], 1.0, ""));
            divergence = Some(d);
        } else {
            let (outcomes, reason) = row_outcomes(row, spec, &all_runs, plan.repetitions);
            rows.push(rate_row(row, &outcomes, threshold, &reason));
        }
    }
    let pass_rate = if all_runs.is_empty() {
        None
    } else {
        Some(all_runs.iter().filter(|r| r.verdict() == Verdict::Pass).count() as f64 / all_runs.len() as f64)
    };
    Ok(BatteryReport { spec_id: spec.id.clone(), models, rows, divergence, pass_rate })
}

fn run_keys(m: &ModelReport) -> Vec<(String, u32, bool)> {
    let mut keys: Vec<_> = m.runs.iter().map(|r| (r.script.clone(), r.repetition, r.extended)).collect();
    keys.sort();
    keys
}

fn findings_by_script(m: &ModelReport) -> BTreeMap<(String, String), usize> {
    let mut out = BTreeMap::new();
    for r in &m.runs {
        if let Some(a) = &r.report {
            for (rule, n) in &a.findings_count {
                *out.entry((r.script.clone(), rule.clone())).or_insert(0) += n;
            }
        }
    }
    out
}

/// Rows whose outcome differs between two model reports, and findings whose
/// counts differ per script.
pub fn diff_cross_model(a: &ModelReport, b: &ModelReport) -> Result<Divergence, HarnessError> {
    if a.spec_id != b.spec_id {
        return Err(HarnessError::MismatchedPlans(format!("specs {:?} and {:?}", a.spec_id, b.spec_id)));
    }
    if run_keys(a) != run_keys(b) {
        return Err(HarnessError::MismatchedPlans("the reports ran different scripts".into()));
    }
    let rows_a: Vec<BatteryRow> = a.rows.iter().map(|r| r.row).collect();
    let rows_b: Vec<BatteryRow> = b.rows.iter().map(|r| r.row).collect();
    if rows_a != rows_b {
        return Err(HarnessError::MismatchedPlans("the reports cover different battery rows".into()));
    }
    let rows = a
        .rows
        .iter()
        .zip(&b.rows)
        .filter(|(x, y)| x.ok() != y.ok())
        .map(|(x, y)| RowDivergence { row: x.row, a: x.ok(), b: y.ok() })
        .collect();
    let fa = findings_by_script(a);
    let fb = findings_by_script(b);
    let mut keys: Vec<&(String, String)> = fa.keys().chain(fb.keys()).collect();
    keys.sort();
    keys.dedup();
    let findings = keys
        .into_iter()
        .filter_map(|k| {
            let (x, y) = (fa.get(k).copied().unwrap_or(0), fb.get(k).copied().unwrap_or(0));
            (x != y).then(|| FindingDivergence { script: k.0.clone(), rule: k.1.clone(), a: x, b: y })
        })
        .collect();
    Ok(Divergence { rows, findings })
}
