use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::exercise_spec::{ExerciseSpec, Marker, Severity};
use crate::model_client::Role;
use crate::prompt_compiler::NudgeSource;
use crate::session_engine::{normalize_for_markers, FEEDBACK_HEADINGS};
use crate::transcript_store::Transcript;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Warn => "warn",
            Verdict::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdherenceReport {
    pub steps_visited: Vec<u32>,
    pub in_order: bool,
    pub markers_seen: Vec<Marker>,
    pub budget_respected: bool,
    pub findings_count: BTreeMap<String, usize>,
    pub fail_findings: usize,
    pub feedback_format_present: bool,
    pub student_turns: usize,
    pub verdict: Verdict,
}

/// Score one transcript against its spec. Pure.
pub fn score_adherence(t: &Transcript, spec: &ExerciseSpec) -> Result<AdherenceReport, HarnessError> {
    if t.meta.spec_id != spec.id {
        return Err(HarnessError::Mismatch(format!(
            "transcript is for {:?}, spec is {:?}",
            t.meta.spec_id, spec.id
        )));
    }
    let last = spec.final_step_index();
    if let Some(bad) = t.turns.iter().find(|x| x.step_index == 0 || x.step_index > last) {
        return Err(HarnessError::Mismatch(format!("turn at step {} outside 1..={last}", bad.step_index)));
    }

    let mut steps_visited: Vec<u32> = Vec::new();
    for turn in &t.turns {
        if steps_visited.last() != Some(&turn.step_index) {
            steps_visited.push(turn.step_index);
        }
    }
    let in_order = steps_visited.first() == Some(&1)
        && steps_visited.windows(2).all(|w| w[1] == w[0] + 1)
        && steps_visited.last() == Some(&last);

    let mut markers_seen: Vec<Marker> = Vec::new();
    for turn in t.turns.iter().filter(|x| x.role == Role::Assistant) {
        for m in &turn.detected_markers {
            if !markers_seen.contains(m) {
                markers_seen.push(m.clone());
            }
        }
    }

    let budget_respected = spec.steps.iter().all(|step| {
        let Some(budget) = &step.turn_budget else { return true };
        let in_step = |role: Role| t.turns.iter().filter(move |x| x.role == role && x.step_index == step.index);
        let students = in_step(Role::User).count() as u32;
        students <= budget.max_student_turns
            || in_step(Role::System).any(|x| x.nudge == Some(NudgeSource::Budget))
    });

    let mut findings_count = BTreeMap::new();
    let mut fail_findings = 0;
    let mut any = false;
    for f in t.turns.iter().flat_map(|x| &x.findings) {
        *findings_count.entry(f.rule.as_str().to_string()).or_insert(0) += 1;
        any = true;
        if f.severity == Severity::Fail {
            fail_findings += 1;
        }
    }

    let feedback_format_present = t.turns.iter().filter(|x| x.role == Role::Assistant).any(|x| {
        let norm = normalize_for_markers(&x.text);
        FEEDBACK_HEADINGS.iter().all(|h| norm.contains(h))
    });

    let verdict = if !in_order || !budget_respected || fail_findings > 0 {
        Verdict::Fail
    } else if any {
        Verdict::Warn
    } else {
        Verdict::Pass
    };

    Ok(AdherenceReport {
        steps_visited,
        in_order,
        markers_seen,
        budget_respected,
        findings_count,
        fail_findings,
        feedback_format_present,
        student_turns: t.turns.iter().filter(|x| x.role == Role::User).count(),
        verdict,
    })
}
