//! Checked-in compiled prompts for the catalog, used by `compile --golden`.

const GOLDENS: [(&str, &str); 8] = [
    ("negotiation", include_str!("../../core/goldens/negotiation.prompt.txt")),
    ("goal-setting", include_str!("../../core/goldens/goal-setting.prompt.txt")),
    ("self-distancing", include_str!("../../core/goldens/self-distancing.prompt.txt")),
    ("critique-groupthink", include_str!("../../core/goldens/critique-groupthink.prompt.txt")),
    ("teach-the-ai", include_str!("../../core/goldens/teach-the-ai.prompt.txt")),
    ("integration-agent", include_str!("../../core/goldens/integration-agent.prompt.txt")),
    ("tutor", include_str!("../../core/goldens/tutor.prompt.txt")),
    ("co-create-case", include_str!("../../core/goldens/co-create-case.prompt.txt")),
];

pub fn catalog_golden(id: &str) -> Option<&'static str> {
    GOLDENS.iter().find(|(k, _)| *k == id).map(|(_, g)| *g)
}
