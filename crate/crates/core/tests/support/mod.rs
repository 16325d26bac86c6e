//! Random transcripts for persistence tests.

#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;

use praxis_core::exercise_spec::{ConstraintKind, ExerciseKind, Marker, Severity};
use praxis_core::model_client::Role;
use praxis_core::prompt_compiler::NudgeSource;
use praxis_core::session_engine::{ConstraintFinding, DriftIssue, Turn};
use praxis_core::transcript_store::{Annotation, Transcript, TranscriptMeta};

fn timestamp() -> impl Strategy<Value = DateTime<Utc>> {
    (1_600_000_000i64..1_900_000_000, 0u32..1_000_000_000).prop_map(|(s, n)| Utc.timestamp_opt(s, n).unwrap())
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z ?!.,\n]{1,80}",
        any::<String>().prop_filter("non-empty", |s| !s.is_empty()),
        Just("**BEGIN ROLE PLAY**\n\"quoted\" \\ back\\slash \u{1F600}".to_string()),
    ]
}

fn finding(text: String) -> impl Strategy<Value = ConstraintFinding> {
    (prop::sample::select(ConstraintKind::ALL.to_vec()), prop::bool::ANY).prop_map(move |(rule, fail)| {
        let cut = text.char_indices().nth(10).map_or(text.len(), |(i, _)| i);
        ConstraintFinding {
            rule,
            evidence: text[..cut].to_string(),
            severity: if fail { Severity::Fail } else { Severity::Warn },
        }
    })
}

#[derive(Debug, Clone)]
struct RawTurn {
    text: String,
    advance: bool,
    marker: Option<&'static str>,
    findings: usize,
    nudge: Option<NudgeSource>,
    at: DateTime<Utc>,
}

fn raw_turn() -> impl Strategy<Value = RawTurn> {
    let nudge = prop_oneof![
        Just(None),
        Just(Some(NudgeSource::Budget)),
        prop::sample::select(DriftIssue::ALL.to_vec()).prop_map(|d| Some(NudgeSource::Drift(d))),
    ];
    (text(), prop::bool::weighted(0.2), prop::option::of(prop::sample::select(Marker::CATALOG.to_vec())), 0usize..3, nudge, timestamp())
        .prop_map(|(text, advance, marker, findings, nudge, at)| RawTurn { text, advance, marker, findings, nudge, at })
}

fn build(meta: TranscriptMeta, raws: Vec<RawTurn>, finding_pool: Vec<ConstraintFinding>, notes: Vec<(usize, String, String, DateTime<Utc>)>) -> Transcript {
    let steps = meta.step_names.len() as u32;
    let mut step = 1u32;
    let mut turns = vec![Turn {
        role: Role::System,
        text: "system prompt".into(),
        timestamp: meta.created_at,
        step_index: 1,
        detected_markers: Vec::new(),
        findings: Vec::new(),
        nudge: None,
    }];
    let mut pool = finding_pool.into_iter().cycle();
    for (i, r) in raws.into_iter().enumerate() {
        if r.advance && step < steps {
            step += 1;
        }
        let role = match (i % 2, r.nudge) {
            (_, Some(_)) if i % 5 == 4 => Role::System,
            (0, _) => Role::User,
            _ => Role::Assistant,
        };
        let mut t = Turn {
            role,
            text: r.text,
            timestamp: r.at,
            step_index: step,
            detected_markers: Vec::new(),
            findings: Vec::new(),
            nudge: None,
        };
        match role {
            Role::Assistant => {
                t.detected_markers = r.marker.into_iter().map(Marker::new).collect();
                t.findings = (0..r.findings).filter_map(|_| pool.next()).collect();
            }
            Role::System => t.nudge = r.nudge,
            Role::User => {}
        }
        turns.push(t);
    }
    let len = turns.len();
    let annotations = notes
        .into_iter()
        .map(|(o, author, note, created_at)| Annotation { author, turn_ordinal: o % len, note, created_at })
        .collect();
    Transcript::new(meta, turns, annotations)
}

pub fn transcript() -> impl Strategy<Value = Transcript> {
    let meta = (
        "[a-zA-Z0-9_-]{1,24}",
        prop::sample::select(praxis_core::exercise_spec::CATALOG_IDS.to_vec()),
        text(),
        prop::sample::select(ExerciseKind::ALL.to_vec()),
        prop::collection::vec("[A-Z ]{1,20}", 1..8),
        prop::bool::ANY,
        timestamp(),
    )
        .prop_map(|(session_id, spec_id, spec_title, kind, step_names, hide_instructions, created_at)| TranscriptMeta {
            session_id,
            spec_id: spec_id.to_string(),
            spec_title,
            kind,
            step_names,
            hide_instructions,
            created_at,
        });
    let notes = prop::collection::vec((0usize..64, "[a-z]{1,10}", text(), timestamp()), 0..4);
    let pool = text().prop_flat_map(|t| prop::collection::vec(finding(t), 1..4));
    (meta, prop::collection::vec(raw_turn(), 0..40), pool, notes)
        .prop_map(|(meta, raws, pool, notes)| build(meta, raws, pool, notes))
}
