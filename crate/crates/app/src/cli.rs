use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use tokio::io::{AsyncBufReadExt, BufReader};

use praxis_core::exercise_spec::{apply_customizations, catalog_spec, parse_exercise, Bindings, ExerciseSpec, CATALOG_IDS};
use praxis_core::model_client::{ChatModel, ScriptedModel};
use praxis_core::prompt_compiler::{compile_blueprint, compile_system_prompt, interview_questions, InterviewAnswers};
use praxis_core::session_engine::{exchange_streaming, start_session, SessionOptions, SessionStatus};
use praxis_core::test_harness::{run_battery, StudentScript, TestPlan};
use praxis_core::transcript_store::{export_markdown, TranscriptStore};

use crate::api::{parse_blueprint_kind, router};
use crate::goldens::catalog_golden;
use crate::state::{AppState, EnvConfig, ModelSource};

#[derive(Debug, Parser)]
#[command(name = "praxis", version, about = "Structured classroom exercises for chat models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the system prompt compiled from an exercise.
    Compile {
        /// Catalog id or path to an exercise JSON file.
        spec: Option<String>,
        /// Compile every catalog exercise.
        #[arg(long)]
        all: bool,
        /// Compare against a golden file (the checked-in one when no path is given).
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        golden: Option<String>,
        /// Slot binding, NAME=TEXT.
        #[arg(long = "bind", value_parser = parse_binding)]
        bindings: Vec<(String, String)>,
    },
    /// Chat with an exercise in the terminal. Reads student messages from
    /// stdin, one per line; `/end` finishes.
    Run {
        spec: String,
        /// Scripted model file ({"replies": [...], "rules": [...], "fallback": ...}).
        #[arg(long)]
        scripted: Option<PathBuf>,
        /// Use the generated cooperative model.
        #[arg(long, conflicts_with = "scripted")]
        cooperative: bool,
        /// Student script file to play instead of reading stdin.
        #[arg(long)]
        student: Option<PathBuf>,
        #[arg(long = "bind", value_parser = parse_binding)]
        bindings: Vec<(String, String)>,
        #[arg(long)]
        hide_instructions: bool,
    },
    /// Run a test plan and print the battery report.
    Test {
        plan: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Interview for a tutor or teaching-assistant prompt.
    Blueprint {
        /// tutor or ta
        kind: String,
        /// JSON object of answers keyed by field, instead of asking.
        #[arg(long)]
        answers: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print a stored session as markdown.
    Export { session: String },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        scripted: Option<PathBuf>,
        #[arg(long, conflicts_with = "scripted")]
        cooperative: bool,
    },
}

fn parse_binding(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=TEXT, got {s:?}"))?;
    Ok((k.trim().to_string(), v.to_string()))
}

type CliResult<T> = Result<T, String>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

/// A catalog id or a path to an exercise document.
pub fn load_spec(arg: &str) -> CliResult<ExerciseSpec> {
    if let Some(s) = catalog_spec(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(format!("{arg:?} is neither a catalog exercise ({}) nor a file", CATALOG_IDS.join(", ")));
    }
    parse_exercise(&read(path)?).map_err(|e| format!("{arg}: {e}"))
}

fn first_difference(got: &str, want: &str) -> String {
    for (n, (a, b)) in got.lines().zip(want.lines()).enumerate() {
        if a != b {
            return format!("line {}:\n  compiled: {a}\n  golden:   {b}", n + 1);
        }
    }
    format!("line counts differ: compiled {}, golden {}", got.lines().count(), want.lines().count())
}

fn compile_one(id_or_path: &str, bindings: &Bindings, golden: Option<&str>) -> CliResult<(String, bool)> {
    let spec = load_spec(id_or_path)?;
    let bound = apply_customizations(&spec, bindings).map_err(|e| e.to_string())?;
    let prompt = compile_system_prompt(&bound).map_err(|e| e.to_string())?.body;
    let Some(golden) = golden else { return Ok((prompt, true)) };
    let want = if golden.is_empty() {
        catalog_golden(&spec.id)
            .ok_or_else(|| format!("no checked-in golden for {:?}", spec.id))?
            .to_string()
    } else {
        read(Path::new(golden))?
    };
    let want = want.replace("\r\n", "\n");
    if prompt == want {
        Ok((format!("ok {}", spec.id), true))
    } else {
        Ok((format!("MISMATCH {}: {}", spec.id, first_difference(&prompt, &want)), false))
    }
}

fn cmd_compile(spec: Option<String>, all: bool, golden: Option<String>, bindings: Vec<(String, String)>) -> CliResult<ExitCode> {
    let bindings: Bindings = bindings.into_iter().collect();
    let ids: Vec<String> = match (all, spec) {
        (true, None) => CATALOG_IDS.iter().map(|s| s.to_string()).collect(),
        (false, Some(s)) => vec![s],
        (true, Some(_)) => return Err("give either a spec or --all".into()),
        (false, None) => return Err("missing spec (catalog id or file), or --all".into()),
    };
    let mut ok = true;
    for id in &ids {
        let (text, good) = compile_one(id, &bindings, golden.as_deref())?;
        ok &= good;
        if golden.is_none() && ids.len() > 1 {
            println!("==> {id} <==");
        }
        if golden.is_some() {
            println!("{text}");
        } else {
            print!("{text}");
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn model_source(scripted: Option<&Path>, cooperative: bool, env: &EnvConfig) -> CliResult<ModelSource> {
    if let Some(p) = scripted {
        return Ok(ModelSource::Scripted(Arc::new(ScriptedModel::from_json(&read(p)?)?)));
    }
    if cooperative {
        return Ok(ModelSource::Cooperative);
    }
    match env.provider() {
        Some(cfg) => ModelSource::provider(cfg).map_err(|e| e.to_string()),
        None => Err("no model configured: set PRAXIS_BASE_URL (and PRAXIS_API_KEY), or pass --scripted or --cooperative".into()),
    }
}

async fn cmd_run(
    spec: String,
    scripted: Option<PathBuf>,
    cooperative: bool,
    student: Option<PathBuf>,
    bindings: Vec<(String, String)>,
    hide_instructions: bool,
) -> CliResult<ExitCode> {
    let env = EnvConfig::from_env();
    let spec = load_spec(&spec)?;
    let models = model_source(scripted.as_deref(), cooperative, &env)?;
    let model: Arc<dyn ChatModel> = models.for_spec(&spec);
    let bindings: Bindings = bindings.into_iter().collect();
    let options = SessionOptions { model_id: models.model_id(), hide_instructions, ..SessionOptions::default() };
    let mut state = start_session(&spec, &bindings, options).map_err(|e| e.to_string())?;
    let store = TranscriptStore::open(&env.data_dir).map_err(|e| e.to_string())?;
    let script = match &student {
        Some(p) => {
            let s: StudentScript = serde_json::from_str(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?;
            s.check().map_err(|e| e.to_string())?;
            Some(s)
        }
        None => None,
    };

    eprintln!("[{}] STEP 1: {}", spec.title, state.step_spec().name);
    let mut lines = BufReader::new(tokio::io::stdin()).lines();
    let mut last_reply = String::new();
    let mut i = 0usize;
    let mut failed = false;
    loop {
        if state.status != SessionStatus::Active {
            break;
        }
        let text = match &script {
            Some(s) if i < s.max_turns as usize => s.turn_text(i, &last_reply),
            Some(_) => break,
            None => match lines.next_line().await.map_err(|e| e.to_string())? {
                Some(l) if l.trim() == "/end" => break,
                Some(l) if l.trim().is_empty() => continue,
                Some(l) => l,
                None => break,
            },
        };
        i += 1;
        if script.is_some() {
            println!("Student: {text}");
        }
        print!("AI: ");
        let _ = std::io::stdout().flush();
        let mut on_delta = |d: &str| {
            print!("{d}");
            let _ = std::io::stdout().flush();
        };
        match exchange_streaming(&mut state, model.as_ref(), &text, &mut on_delta).await {
            Ok(out) => {
                println!("\n");
                if out.step_after != out.step_before {
                    eprintln!("[STEP {}: {}]", out.step_after, state.step_spec().name);
                }
                if out.budget_nudge.is_some() {
                    eprintln!("[turn budget reached; nudge queued]");
                }
                last_reply = out.reply;
            }
            Err(e) => {
                println!();
                eprintln!("error: {e}");
                failed = true;
                if script.is_some() {
                    break;
                }
            }
        }
    }
    let t = state.end_session();
    let id = store.save_session(&t).map_err(|e| e.to_string())?;
    eprintln!("session {id} saved under {}", env.data_dir.display());
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

async fn cmd_test(path: PathBuf, json: bool) -> CliResult<ExitCode> {
    let mut plan: TestPlan = serde_json::from_str(&read(&path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(f) = plan.spec_file.take() {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        plan.spec_file = Some(if f.is_relative() { base.join(f) } else { f });
    }
    let report = run_battery(&plan).await.map_err(|e| e.to_string())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
    } else {
        print!("{}", report.render_table());
    }
    Ok(ExitCode::from(report.exit_code() as u8))
}

async fn cmd_blueprint(kind: String, answers: Option<PathBuf>, json: bool) -> CliResult<ExitCode> {
    let kind = parse_blueprint_kind(&kind).ok_or_else(|| format!("unknown blueprint {kind:?}; use tutor or ta"))?;
    let questions = interview_questions(kind);
    let mut values: [String; 4] = Default::default();
    match answers {
        Some(p) => {
            let map: std::collections::BTreeMap<String, String> =
                serde_json::from_str(&read(&p)?).map_err(|e| format!("{}: {e}", p.display()))?;
            for (slot, (field, _)) in values.iter_mut().zip(questions) {
                *slot = map.get(field).cloned().unwrap_or_default();
            }
        }
        None => {
            let mut lines = BufReader::new(tokio::io::stdin()).lines();
            for (slot, (_, question)) in values.iter_mut().zip(questions) {
                eprintln!("{question}");
                *slot = lines.next_line().await.map_err(|e| e.to_string())?.unwrap_or_default();
            }
        }
    }
    let answers = InterviewAnswers::from_answers(kind, values);
    let prompt = compile_blueprint(kind, &answers).map_err(|e| e.to_string())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&prompt).map_err(|e| e.to_string())?);
    } else {
        print!("{}", prompt.render());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(session: String) -> CliResult<ExitCode> {
    let env = EnvConfig::from_env();
    let store = TranscriptStore::open(&env.data_dir).map_err(|e| e.to_string())?;
    let t = store.load(&session).map_err(|e| e.to_string())?;
    print!("{}", export_markdown(&t));
    Ok(ExitCode::SUCCESS)
}

async fn cmd_serve(port: u16, host: String, scripted: Option<PathBuf>, cooperative: bool) -> CliResult<ExitCode> {
    let env = EnvConfig::from_env();
    let models = match model_source(scripted.as_deref(), cooperative, &env) {
        Ok(m) => m,
        Err(_) if scripted.is_none() => {
            tracing::warn!("no model provider configured; serving the cooperative scripted model");
            ModelSource::Cooperative
        }
        Err(e) => return Err(e),
    };
    let app = AppState::open(&env.data_dir, models).map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind((host.as_str(), port))
        .await
        .map_err(|e| format!("cannot bind {host}:{port}: {e}"))?;
    tracing::info!(addr = %listener.local_addr().map_err(|e| e.to_string())?, data_dir = %env.data_dir.display(), "serving");
    axum::serve(listener, router(Arc::new(app)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

pub async fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Compile { spec, all, golden, bindings } => cmd_compile(spec, all, golden, bindings),
        Command::Run { spec, scripted, cooperative, student, bindings, hide_instructions } => {
            cmd_run(spec, scripted, cooperative, student, bindings, hide_instructions).await
        }
        Command::Test { plan, json } => cmd_test(plan, json).await,
        Command::Blueprint { kind, answers, json } => cmd_blueprint(kind, answers, json).await,
        Command::Export { session } => cmd_export(session),
        Command::Serve { port, host, scripted, cooperative } => cmd_serve(port, host, scripted, cooperative).await,
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

