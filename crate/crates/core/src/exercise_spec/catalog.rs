use super::{parse_exercise, ExerciseSpec};

pub const CATALOG_IDS: [&str; 8] = [
    "negotiation",
    "goal-setting",
    "self-distancing",
    "critique-groupthink",
    "teach-the-ai",
    "integration-agent",
    "tutor",
    "co-create-case",
];

const DOCUMENTS: [(&str, &str); 8] = [
    ("negotiation", include_str!("../../catalog/negotiation.json")),
    ("goal-setting", include_str!("../../catalog/goal-setting.json")),
    ("self-distancing", include_str!("../../catalog/self-distancing.json")),
    ("critique-groupthink", include_str!("../../catalog/critique-groupthink.json")),
    ("teach-the-ai", include_str!("../../catalog/teach-the-ai.json")),
    ("integration-agent", include_str!("../../catalog/integration-agent.json")),
    ("tutor", include_str!("../../catalog/tutor.json")),
    ("co-create-case", include_str!("../../catalog/co-create-case.json")),
];

/// Raw exercise document for a built-in spec.
pub fn catalog_document(id: &str) -> Option<&'static str> {
    DOCUMENTS.iter().find(|(k, _)| *k == id).map(|(_, d)| *d)
}

pub fn catalog_spec(id: &str) -> Option<ExerciseSpec> {
    catalog_document(id).map(|d| parse_exercise(d).unwrap_or_else(|e| panic!("catalog spec {id}: {e}")))
}

pub fn builtin_catalog() -> Vec<ExerciseSpec> {
    CATALOG_IDS.iter().map(|id| catalog_spec(id).unwrap()).collect()
}
