mod common;

use serde_json::json;

use praxis::ModelSource;
use praxis_core::model_client::ScriptedModel;

#[tokio::test]
async fn health_and_catalog() {
    let s = common::start(ModelSource::Cooperative).await;
    assert_eq!(s.get("/health").await, (200, json!({ "status": "ok" })));
    let (status, list) = s.get("/exercises").await;
    assert_eq!(status, 200);
    assert_eq!(list.as_array().unwrap().len(), 8);
    let (status, one) = s.get("/exercises/negotiation").await;
    assert_eq!(status, 200);
    assert!(one["prompt"].as_str().unwrap().contains("STEP 1"));
    assert_eq!(s.get("/exercises/nope").await.1["code"], "not_found");
}

#[tokio::test]
async fn create_session_reports_active() {
    let s = common::start(ModelSource::Cooperative).await;
    let (status, v) = s.post("/sessions", &json!({ "exercise_id": "negotiation" })).await;
    assert_eq!(status, 201);
    assert_eq!(v["status"], "active");
    assert_eq!(v["exercise_id"], "negotiation");
    let id = v["session_id"].as_str().unwrap();
    assert_eq!(s.get(&format!("/sessions/{id}")).await.1["status"], "active");
}

#[tokio::test]
async fn unknown_exercise_is_not_found() {
    let s = common::start(ModelSource::Cooperative).await;
    let (status, v) = s.post("/sessions", &json!({ "exercise_id": "missing" })).await;
    assert_eq!((status, v["code"].as_str()), (404, Some("not_found")));
    let (status, v) = s.say("no-such-session", "hi").await;
    assert_eq!((status, v["code"].as_str()), (404, Some("not_found")));
}

#[tokio::test]
async fn missing_required_binding_is_invalid_input() {
    let s = common::start(ModelSource::Cooperative).await;
    let doc = json!({
        "id": "custom-tutor", "title": "Custom", "kind": "tutor",
        "goal": "Help the student learn {{topic}}.", "persona": "A tutor.", "narrative": "One to one.",
        "steps": [{ "index": 1, "name": "teach", "do": ["Explain {{topic}}."], "transition": { "trigger": "manual" } }],
        "slots": [{ "name": "topic", "required": true }]
    });
    let r = s.http.post(s.url("/exercises")).body(doc.to_string()).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 201);
    let r = s.http.post(s.url("/exercises")).body(doc.to_string()).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 409);

    let (status, v) = s.post("/sessions", &json!({ "exercise_id": "custom-tutor" })).await;
    assert_eq!((status, v["code"].as_str()), (422, Some("invalid_input")));
    let (status, v) = s
        .post("/sessions", &json!({ "exercise_id": "custom-tutor", "bindings": { "colour": "blue" } }))
        .await;
    assert_eq!((status, v["code"].as_str()), (422, Some("invalid_input")));
    let (status, _) = s
        .post("/sessions", &json!({ "exercise_id": "custom-tutor", "bindings": { "topic": "photosynthesis" } }))
        .await;
    assert_eq!(status, 201);
}

#[tokio::test]
async fn wrapped_session_rejects_messages() {
    let s = common::start(ModelSource::Cooperative).await;
    let id = s.create("tutor", false).await;
    let (status, v) = s.post(&format!("/sessions/{id}/end"), &json!({})).await;
    assert_eq!((status, v["status"].as_str()), (200, Some("wrapped")));
    let (status, v) = s.say(&id, "hello?").await;
    assert_eq!((status, v["code"].as_str()), (409, Some("conflict")));
    let events = s.say_streaming(&id, "hello?").await;
    assert!(events.is_empty());
}

#[tokio::test]
async fn empty_message_is_invalid() {
    let s = common::start(ModelSource::Cooperative).await;
    let id = s.create("tutor", false).await;
    assert_eq!(s.say(&id, "   ").await.1["code"], "invalid_input");
}

#[tokio::test]
async fn sixth_roleplay_message_nudges_the_next_request() {
    let s = common::start(ModelSource::Cooperative).await;
    let id = s.create("negotiation", false).await;
    let mut queued = Vec::new();
    for i in 0..12 {
        let (status, v) = s.say(&id, &format!("message {i}")).await;
        assert_eq!(status, 200, "{v}");
        if v["step"]["before"] == 4 && v["step"]["nudge_queued"] == true {
            queued.push(i);
        }
    }
    assert_eq!(queued, vec![8]);
    let (_, t) = s.get(&format!("/sessions/{id}/transcript?role=instructor")).await;
    let turns = t["turns"].as_array().unwrap();
    let nudge = turns.iter().position(|x| x["nudge"]["type"] == "budget").unwrap();
    assert_eq!(turns[nudge]["role"], "system");
    assert_eq!(turns[nudge + 1]["role"], "user");
    assert_eq!(turns[nudge + 1]["text"], "message 9");
    let steps: Vec<u64> = t["step_trace"].as_array().unwrap().iter().map(|e| e["step"].as_u64().unwrap()).collect();
    assert_eq!(steps, vec![1, 2, 3, 4, 5, 6]);
}

#[tokio::test]
async fn streamed_chunks_match_stored_text() {
    let s = common::start(ModelSource::Cooperative).await;
    let id = s.create("negotiation", false).await;
    for i in 0..3 {
        let events = s.say_streaming(&id, &format!("streamed {i}")).await;
        let (last, done) = events.last().unwrap();
        assert_eq!(last, "done");
        let text: String = events.iter().filter(|(e, _)| e == "delta").map(|(_, d)| d["text"].as_str().unwrap()).collect();
        assert_eq!(text, done["reply"].as_str().unwrap());
        let (_, t) = s.get(&format!("/sessions/{id}/transcript")).await;
        let stored = t["turns"].as_array().unwrap().last().unwrap()["text"].clone();
        assert_eq!(stored.as_str().unwrap(), text);
    }
}

#[tokio::test]
async fn model_failure_is_reported_and_retryable() {
    let s = common::start(ModelSource::Scripted(std::sync::Arc::new(ScriptedModel::new(vec!["only one".into()])))).await;
    let id = s.create("tutor", false).await;
    assert_eq!(s.say(&id, "first").await.0, 200);
    let (status, v) = s.say(&id, "second").await;
    assert_eq!((status, v["code"].as_str(), v["retryable"].as_bool()), (502, Some("model_failure"), Some(false)));
    let (_, t) = s.get(&format!("/sessions/{id}/transcript")).await;
    assert_eq!(t["turns"].as_array().unwrap().len(), 3);
    let events = s.say_streaming(&id, "third").await;
    assert_eq!(events.last().unwrap().0, "error");
}

#[tokio::test]
async fn hidden_instructions_stay_hidden_from_students() {
    let s = common::start(ModelSource::Cooperative).await;
    let id = s.create("negotiation", true).await;
    s.say(&id, "hello").await;
    let (_, student) = s.get(&format!("/sessions/{id}/transcript")).await;
    let turns = student["turns"].as_array().unwrap();
    assert!(turns.iter().all(|x| x["role"] != "system"));
    assert!(student.get("step_trace").is_none());
    assert!(turns.iter().all(|x| x.get("step_index").is_none()));
    let (_, instructor) = s.get(&format!("/sessions/{id}/transcript?role=instructor")).await;
    assert_eq!(instructor["turns"][0]["role"], "system");

    let r = s.http.get(s.url(&format!("/sessions/{id}/export"))).send().await.unwrap();
    let md = r.text().await.unwrap();
    assert!(md.contains("(exercise instructions hidden)"));
    assert!(!md.contains("Follow these steps in order"));
}

#[tokio::test]
async fn share_view_is_the_read_only_student_view() {
    let s = common::start(ModelSource::Cooperative).await;
    let id = s.create("negotiation", true).await;
    s.say(&id, "hello").await;
    let (status, link) = s.post(&format!("/sessions/{id}/share"), &json!({})).await;
    assert_eq!(status, 201);
    let token = link["token"].as_str().unwrap();
    assert_eq!(link["url"], format!("/share/{token}"));
    let (_, shared) = s.get(&format!("/share/{token}")).await;
    let (_, mut student) = s.get(&format!("/sessions/{id}/transcript")).await;
    assert_eq!(shared["read_only"], true);
    student["read_only"] = json!(true);
    assert_eq!(shared, student);
    assert_eq!(s.get("/share/not-a-token").await.1["code"], "not_found");
}

#[tokio::test]
async fn annotations_are_stored_and_bounded() {
    let s = common::start(ModelSource::Cooperative).await;
    let id = s.create("tutor", false).await;
    s.say(&id, "hello").await;
    let path = format!("/sessions/{id}/annotations");
    let (status, v) = s.post(&path, &json!({ "author": "prof", "turn_ordinal": 2, "note": "good probing" })).await;
    assert_eq!(status, 200);
    assert_eq!(v["annotations"][0]["note"], "good probing");
    let (status, v) = s.post(&path, &json!({ "author": "prof", "turn_ordinal": 99, "note": "x" })).await;
    assert_eq!((status, v["code"].as_str()), (422, Some("invalid_input")));
    s.say(&id, "again").await;
    let (_, t) = s.get(&format!("/sessions/{id}/transcript?role=instructor")).await;
    assert_eq!(t["annotations"].as_array().unwrap().len(), 1);
    let md = s.http.get(s.url(&format!("/sessions/{id}/export"))).send().await.unwrap().text().await.unwrap();
    assert!(md.contains("prof") && md.contains("good probing"));
}

#[tokio::test]
async fn blueprint_endpoints() {
    let s = common::start(ModelSource::Cooperative).await;
    let (status, qs) = s.get("/blueprints/ta/questions").await;
    assert_eq!(status, 200);
    assert_eq!(qs.as_array().unwrap().len(), 4);
    let answers = json!({
        "kind": "teaching_assistant", "task": "grading essays", "elements": "rubric scores",
        "formatting": "a table", "categorization": "by criterion"
    });
    let (status, v) = s.post("/blueprints", &answers).await;
    assert_eq!(status, 200);
    let rendered = v["rendered"].as_str().unwrap();
    assert!(rendered.starts_with("```\nYou are an AI teaching assistant"));
    let (status, v) = s.post("/blueprints", &json!({ "kind": "tutor", "topic": "", "key_elements": "", "sticking_points": "", "examples_analogies": "" })).await;
    assert_eq!((status, v["code"].as_str()), (422, Some("invalid_input")));
}
