//! Acceptance gate: one pass/fail line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRng, TestRunner};
use serde::Deserialize;

use praxis_core::exercise_spec::{
    apply_customizations, catalog_spec, Bindings, ConstraintKind, ConstraintRule, Marker, Severity, StepSelector,
    CATALOG_IDS,
};
use praxis_core::model_client::Role;
use praxis_core::prompt_compiler::{
    compile_blueprint, compile_system_prompt, BlueprintKind, InterviewAnswers, TA_CLOSER, TA_OPENER_PREFIX,
    TUTOR_OPENER_PREFIX,
};
use praxis_core::session_engine::{check_constraints, detect_markers, exchange, start_session, SessionOptions};
use praxis_core::test_harness::{cooperative_model, BatteryReport};
use praxis_core::transcript_store::{export_markdown, TranscriptStore};

type Outcome = Result<String, String>;

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn praxis() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_praxis"));
    c.env_remove("PRAXIS_API_KEY")
        .env_remove("PRAXIS_BASE_URL")
        .env("HTTP_PROXY", "http://127.0.0.1:9")
        .env("HTTPS_PROXY", "http://127.0.0.1:9")
        .env("ALL_PROXY", "http://127.0.0.1:9")
        .env("RUST_LOG", "warn");
    c
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:?}, limit {limit:?}"))
    }
}

fn golden_compilation() -> Outcome {
    let start = Instant::now();
    let mut matched = 0;
    for id in CATALOG_IDS {
        let spec = catalog_spec(id).ok_or(format!("{id} missing from catalog"))?;
        let bound = apply_customizations(&spec, &Bindings::new()).map_err(|e| e.to_string())?;
        let body = compile_system_prompt(&bound).map_err(|e| e.to_string())?.body;
        let golden = std::fs::read(core_dir().join(format!("goldens/{id}.prompt.txt"))).map_err(|e| e.to_string())?;
        if body.as_bytes() != golden.as_slice() {
            return Err(format!("{id} differs from its golden file"));
        }
        matched += 1;
    }
    let out = praxis().args(["compile", "--all", "--golden"]).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("praxis compile --all --golden: {}", String::from_utf8_lossy(&out.stdout)));
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{matched}/8 byte-exact in {:?}", start.elapsed()))
}

async fn state_machine() -> Outcome {
    let start = Instant::now();
    let spec = catalog_spec("negotiation").unwrap();
    let model = cooperative_model(&spec);
    let mut state = start_session(&spec, &Bindings::new(), SessionOptions::default()).map_err(|e| e.to_string())?;
    let mut nudged_at = Vec::new();
    let mut role_play_marker = false;
    for i in 0..12 {
        let roleplay_turn = (state.current_step == 4).then(|| state.student_turns_in_step + 1);
        let out = exchange(&mut state, &model, &format!("student message {i}")).await.map_err(|e| e.to_string())?;
        role_play_marker |= out.ingest.markers.contains(&Marker::new("BEGIN ROLE PLAY"));
        if out.budget_nudge.is_some() {
            nudged_at.push(roleplay_turn);
        }
    }
    let steps: Vec<u32> = state.transcript().step_trace.iter().map(|e| e.step).collect();
    if steps != [1, 2, 3, 4, 5, 6] {
        return Err(format!("visited {steps:?}"));
    }
    if !role_play_marker {
        return Err("BEGIN ROLE PLAY not detected".into());
    }
    if nudged_at != [Some(6)] {
        return Err(format!("budget nudge at roleplay turns {nudged_at:?}"));
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("steps 1-6 in order, nudge at roleplay turn 6, {:?}", start.elapsed()))
}

#[derive(Deserialize)]
struct MarkerFixtures {
    variants: Vec<MarkerCase>,
    collisions: Vec<String>,
}

#[derive(Deserialize)]
struct MarkerCase {
    text: String,
    expect: Vec<String>,
}

fn markers() -> Outcome {
    let doc = std::fs::read_to_string(core_dir().join("tests/fixtures/markers.json")).map_err(|e| e.to_string())?;
    let f: MarkerFixtures = serde_json::from_str(&doc).map_err(|e| e.to_string())?;
    let known = Marker::catalog();
    let hits = f
        .variants
        .iter()
        .filter(|c| detect_markers(&c.text, &known) == c.expect.iter().map(|m| Marker::new(m)).collect::<Vec<_>>())
        .count();
    let scene = Marker::new("SCENE");
    let false_pos = f.collisions.iter().filter(|t| detect_markers(t, &known).contains(&scene)).count();
    let missed_end = f
        .collisions
        .iter()
        .filter(|t| !detect_markers(t, &known).contains(&Marker::new("END OF SCENE")))
        .count();
    let detail = format!("{hits}/{} variants, {false_pos} SCENE false positives in {} collisions", f.variants.len(), f.collisions.len());
    if f.variants.len() >= 20 && hits == f.variants.len() && false_pos == 0 && missed_end == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[derive(Deserialize)]
struct Corpus {
    turns: Vec<LabeledTurn>,
}

#[derive(Deserialize)]
struct LabeledTurn {
    text: String,
    questions: usize,
    feedback: bool,
    has_advice: bool,
}

fn constraints() -> Outcome {
    let doc = std::fs::read_to_string(core_dir().join("tests/fixtures/questions.json")).map_err(|e| e.to_string())?;
    let c: Corpus = serde_json::from_str(&doc).map_err(|e| e.to_string())?;
    let rule = |kind| [ConstraintRule { kind, severity: Severity::Fail, applies_to_steps: StepSelector::All }];
    let multi = rule(ConstraintKind::OneQuestionPerTurn);
    let format = rule(ConstraintKind::FeedbackFormat);
    let false_neg = c
        .turns
        .iter()
        .filter(|t| t.questions > 1 && check_constraints(&t.text, &multi).is_empty())
        .count();
    let lacking: Vec<&LabeledTurn> = c.turns.iter().filter(|t| t.feedback && !t.has_advice).collect();
    let unflagged = lacking.iter().filter(|t| check_constraints(&t.text, &format).is_empty()).count();
    let detail = format!(
        "{} turns, {false_neg} multi-question false negatives, {unflagged}/{} advice-less feedback turns unflagged",
        c.turns.len(),
        lacking.len()
    );
    if c.turns.len() == 30 && false_neg == 0 && unflagged == 0 && !lacking.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn blueprints() -> Outcome {
    let answer = prop_oneof![
        4 => "[a-zA-Z ,.\n]{0,40}",
        1 => Just("learning styles".to_string()),
        1 => Just("Learning\tSTYLES".to_string()),
        1 => Just("learnlearning stylesing style".to_string()),
        1 => Just("```".to_string()),
        1 => any::<String>(),
    ];
    let strategy = (any::<bool>(), answer.clone(), answer.clone(), answer.clone(), answer);
    let config = Config { cases: 2000, failure_persistence: None, ..Config::default() };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    let mut runner = TestRunner::new_with_rng(config, rng);
    let cases = std::cell::Cell::new(0usize);
    let prompts = std::cell::Cell::new(0usize);
    let result = runner.run(&strategy, |(tutor, a, b, c, d)| {
        cases.set(cases.get() + 1);
        let kind = if tutor { BlueprintKind::Tutor } else { BlueprintKind::TeachingAssistant };
        let Ok(p) = compile_blueprint(kind, &InterviewAnswers::from_answers(kind, [a, b, c, d])) else {
            return Ok(());
        };
        prompts.set(prompts.get() + 1);
        let rendered = p.render();
        let text = p.prompt_text();
        let fence: String = rendered.chars().take_while(|&c| c == '`').collect();
        prop_assert!(fence.len() >= 3 && rendered.starts_with(&(fence.clone() + "\n")));
        let close = format!("\n{fence}\n");
        prop_assert!(rendered.contains(&close));
        let opener = if tutor { TUTOR_OPENER_PREFIX } else { TA_OPENER_PREFIX };
        prop_assert!(text.starts_with(opener));
        if !tutor {
            prop_assert!(text.ends_with(TA_CLOSER));
        }
        prop_assert!(!mentions_learning_styles(&rendered));
        Ok(())
    });
    let detail = format!("{} cases, {} prompts checked", cases.get(), prompts.get());
    match result {
        Ok(()) if prompts.get() >= 1000 => Ok(detail),
        Ok(()) => Err(detail),
        Err(e) => Err(format!("{detail}: {e}")),
    }
}

fn mentions_learning_styles(s: &str) -> bool {
    regex::Regex::new(r"(?i)learning\s+style").unwrap().is_match(s)
}

fn battery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let plan = serde_json::json!({
        "spec_id": "negotiation",
        "battery": ["works_as_intended", "consistency", "loses_track", "breaks_when_pushed", "follows_steps",
                    "proficiency_levels", "edge_case", "output_quality"],
        "repetitions": 20,
        "default_scripts": true,
        "model_configs": [{ "type": "cooperative" }]
    });
    let path = dir.path().join("plan.json");
    std::fs::write(&path, plan.to_string()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = praxis().arg("test").arg(&path).arg("--json").output().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        return Err(format!("praxis test exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let report: BatteryReport = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let mut by_script: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in report.runs().filter(|r| !r.extended) {
        by_script.entry(r.script.as_str()).or_default().push(&r.report);
    }
    for (script, reports) in &by_script {
        if reports.len() != 20 || reports.iter().any(|r| r.is_none() || *r != reports[0]) {
            return Err(format!("{script}: {} runs, not all identical", reports.len()));
        }
    }
    let extended: Vec<_> = report.runs().filter(|r| r.extended).collect();
    if extended.is_empty() || !extended.iter().all(|r| r.report.as_ref().is_some_and(|a| a.in_order)) {
        return Err("extended loses_track run left the step order".into());
    }
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("{} scripts x 20 identical reports, extended run in order, {elapsed:?}", by_script.len()))
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = TranscriptStore::open(dir.path()).map_err(|e| e.to_string())?;
    let mut runner = TestRunner::deterministic();
    let strategy = support::transcript();
    let mut ids = HashSet::new();
    let mut saved = 0;
    while saved < 500 {
        let t = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        if !ids.insert(t.session_id().to_string()) {
            continue;
        }
        store.save_session(&t).map_err(|e| e.to_string())?;
        let back = store.load(t.session_id()).map_err(|e| e.to_string())?;
        if back != t {
            return Err(format!("{} did not round-trip", t.session_id()));
        }
        if export_markdown(&back) != export_markdown(&t) || export_markdown(&t) != export_markdown(&t) {
            return Err(format!("{} export is not deterministic", t.session_id()));
        }
        saved += 1;
    }
    let reopened = TranscriptStore::open(dir.path()).map_err(|e| e.to_string())?;
    if reopened.list().len() != 500 {
        return Err(format!("index lists {} sessions after reopening", reopened.list().len()));
    }
    let sessions: Vec<String> = ids.into_iter().collect();
    let mut tokens = HashSet::new();
    for i in 0..10_000 {
        let st = store.create_share_token(&sessions[i % sessions.len()]).map_err(|e| e.to_string())?;
        tokens.insert(st.token);
    }
    let collisions = 10_000 - tokens.len();
    if collisions != 0 {
        return Err(format!("{collisions} share token collisions"));
    }
    Ok(format!("{saved} transcripts round-tripped, 10000 tokens, 0 collisions"))
}

async fn offline() -> Outcome {
    let out = praxis().args(["compile", "negotiation"]).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err("compile needs more than the local binary".into());
    }
    let spec = catalog_spec("tutor").unwrap();
    let model = cooperative_model(&spec);
    let mut state = start_session(&spec, &Bindings::new(), SessionOptions::default()).map_err(|e| e.to_string())?;
    exchange(&mut state, &model, "hello").await.map_err(|e| e.to_string())?;
    if state.history.last().map(|t| t.role) != Some(Role::Assistant) {
        return Err("no reply from the scripted model".into());
    }
    Ok("suite ran with no API key, no provider URL and a dead proxy".into())
}

fn main() -> ExitCode {
    std::env::remove_var("PRAXIS_API_KEY");
    std::env::remove_var("PRAXIS_BASE_URL");
    let rt = tokio::runtime::Runtime::new().unwrap();
    let results: Vec<(&str, Outcome)> = vec![
        ("golden compilation", golden_compilation()),
        ("state machine", rt.block_on(state_machine())),
        ("marker detection", markers()),
        ("constraint checks", constraints()),
        ("blueprint properties", blueprints()),
        ("battery determinism", battery()),
        ("persistence", persistence()),
        ("offline", rt.block_on(offline())),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => println!("PASS {} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d}", i + 1)
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
