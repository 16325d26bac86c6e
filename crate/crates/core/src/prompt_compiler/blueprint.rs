//! Blueprint interviews expanded into prompts from fixed sentence templates.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const TUTOR_OPENER_PREFIX: &str = "You are an AI tutor and your job is to help the user";
pub const TA_OPENER_PREFIX: &str = "You are an AI teaching assistant and your job is to help the teacher";
pub const TA_CLOSER: &str = "this is a draft. Please adjust so that it works for you.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlueprintKind {
    Tutor,
    TeachingAssistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InterviewAnswers {
    Tutor {
        topic: String,
        key_elements: String,
        sticking_points: String,
        examples_analogies: String,
    },
    TeachingAssistant {
        task: String,
        elements: String,
        formatting: String,
        categorization: String,
    },
}

impl InterviewAnswers {
    pub fn kind(&self) -> BlueprintKind {
        match self {
            InterviewAnswers::Tutor { .. } => BlueprintKind::Tutor,
            InterviewAnswers::TeachingAssistant { .. } => BlueprintKind::TeachingAssistant,
        }
    }
}

/// Interview questions in the order they are asked, with the answer field
/// each one fills.
pub fn interview_questions(kind: BlueprintKind) -> [(&'static str, &'static str); 4] {
    match kind {
        BlueprintKind::Tutor => [
            ("topic", "What topic should the tutor help students learn?"),
            ("key_elements", "What are the key elements of that topic?"),
            ("sticking_points", "Where do students usually get stuck or hold misconceptions?"),
            ("examples_analogies", "Which examples or analogies help students understand it?"),
        ],
        BlueprintKind::TeachingAssistant => [
            ("task", "What task would you like help speeding up?"),
            ("elements", "What should the output include?"),
            ("formatting", "How should the output be formatted?"),
            ("categorization", "How should the information be organized or categorized?"),
        ],
    }
}

impl InterviewAnswers {
    /// Answers in interview order.
    pub fn from_answers(kind: BlueprintKind, a: [String; 4]) -> InterviewAnswers {
        let [a, b, c, d] = a;
        match kind {
            BlueprintKind::Tutor => InterviewAnswers::Tutor {
                topic: a,
                key_elements: b,
                sticking_points: c,
                examples_analogies: d,
            },
            BlueprintKind::TeachingAssistant => InterviewAnswers::TeachingAssistant {
                task: a,
                elements: b,
                formatting: c,
                categorization: d,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedPrompt {
    pub kind: BlueprintKind,
    pub opener: String,
    pub body: String,
    pub fenced: bool,
    pub closer: Option<String>,
    /// Fragments removed by the forbidden-phrase filter, in removal order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filtered: Vec<String>,
}

impl GeneratedPrompt {
    /// Prompt text as it goes inside the code block.
    pub fn prompt_text(&self) -> String {
        let mut s = format!("{}\n\n{}", self.opener, self.body);
        if let Some(c) = &self.closer {
            s.push_str("\n\nRemember, ");
            s.push_str(c);
        }
        s
    }

    /// Code block plus the note that follows it.
    pub fn render(&self) -> String {
        let text = self.prompt_text();
        let fence = "`".repeat(longest_backtick_run(&text).max(2) + 1);
        let note = match self.kind {
            BlueprintKind::Tutor => "This is a draft. Copy and paste the prompt into a new chat and test it out with a novice to the topic in mind, then refine it.",
            BlueprintKind::TeachingAssistant => "This is a draft. Copy and paste the prompt into a new chat and test it out to see if it helps you complete the task. Refine it so that it is useful for you and creates a repeatable process.",
        };
        format!("{fence}\n{text}\n{fence}\n\n{note}\n")
    }
}

fn longest_backtick_run(s: &str) -> usize {
    let mut best = 0;
    let mut run = 0;
    for c in s.chars() {
        if c == '`' {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BlueprintError {
    #[error("the topic must not be empty")]
    EmptyTopic,
    #[error("the task must not be empty")]
    EmptyTask,
    #[error("answers are for a {0:?} blueprint")]
    KindMismatch(BlueprintKind),
}

fn forbidden() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)learning\s+styles?").unwrap())
}

/// Remove every occurrence of the forbidden phrase, repeating until none
/// remain. Returns the cleaned text and the removed fragments.
pub fn filter_forbidden(text: &str) -> (String, Vec<String>) {
    let mut out = text.to_string();
    let mut removed = Vec::new();
    while let Some(m) = forbidden().find(&out) {
        tracing::info!(fragment = m.as_str(), "removed forbidden phrase from blueprint output");
        removed.push(m.as_str().to_string());
        out.replace_range(m.range(), "");
    }
    (out, removed)
}

struct Cleaner(Vec<String>);

impl Cleaner {
    fn clean(&mut self, s: &str) -> String {
        let (out, removed) = filter_forbidden(s);
        self.0.extend(removed);
        out.trim().to_string()
    }
}

pub fn compile_blueprint(kind: BlueprintKind, answers: &InterviewAnswers) -> Result<GeneratedPrompt, BlueprintError> {
    if answers.kind() != kind {
        return Err(BlueprintError::KindMismatch(answers.kind()));
    }
    let mut c = Cleaner(Vec::new());
    let (opener, body, closer) = match answers {
        InterviewAnswers::Tutor { topic, key_elements, sticking_points, examples_analogies } => {
            let topic = c.clean(topic);
            if topic.is_empty() {
                return Err(BlueprintError::EmptyTopic);
            }
            let elements = c.clean(key_elements);
            let sticking = c.clean(sticking_points);
            let examples = c.clean(examples_analogies);
            let opener = format!("{TUTOR_OPENER_PREFIX} learn about {topic}. First introduce yourself to the user.");
            let mut paras = vec![format!(
                "Your goal is to help the user learn about {topic}. Ask: What do you already know about {topic}? Wait for the student to respond. Do not move on until the student responds."
            )];
            let mut context = format!(
                "Given this information, help the student understand {topic} by providing explanations, examples, and analogies tailored to the student's prior knowledge."
            );
            if !elements.is_empty() {
                context.push_str(&format!(" Key elements of the topic are: {elements}."));
            }
            if !sticking.is_empty() {
                context.push_str(&format!(" Common misconceptions and sticking points are: {sticking}."));
            }
            if !examples.is_empty() {
                context.push_str(&format!(" Examples or analogies that help: {examples}."));
            }
            paras.push(context);
            paras.push("Guide the student in an open-ended way. Do not provide immediate answers or solutions to problems but help the student generate their own answers by asking leading questions. Ask the student to explain their thinking. If the student is struggling or gets the answer wrong, give additional support or a hint. If the student improves, praise them. When pushing the student for information, end your responses with a question so that the student has to keep generating ideas.".to_string());
            paras.push("Once the student shows an appropriate level of understanding, ask them to explain the concept in their own words, give examples, or apply the concept to a new problem or situation. When the student demonstrates that they know the concept, move the conversation to a close and tell them you're here to help if they have further questions.".to_string());
            paras.push("Rule: asking students if they understand or if they follow is not a good strategy (they may not know if they get it). Instead probe their understanding by asking them to explain, give examples, connect examples to the concept, compare and contrast examples, or apply their knowledge. Do not get sidetracked; stick to the learning goal.".to_string());
            paras.push("This is a dialogue so only ask one question at a time and always wait for the student to respond.".to_string());
            (opener, paras.join("\n\n"), None)
        }
        InterviewAnswers::TeachingAssistant { task, elements, formatting, categorization } => {
            let task = c.clean(task);
            if task.is_empty() {
                return Err(BlueprintError::EmptyTask);
            }
            let elements = c.clean(elements);
            let formatting = c.clean(formatting);
            let categorization = c.clean(categorization);
            let opener = format!("{TA_OPENER_PREFIX} with {task}. First introduce yourself to the user.");
            let mut goal = format!("Your goal is to help the teacher complete {task}.");
            if !elements.is_empty() {
                goal.push_str(&format!(" Focus on: {elements}."));
            }
            goal.push_str(" Ask: describe what you'd like done or what you need to accomplish specifically. Wait for the teacher to respond. Do not move on until the teacher responds.");
            let analyze = if elements.is_empty() {
                "Step 2: Analyze the material and identify what the teacher needs.".to_string()
            } else {
                format!("Step 2: Analyze the material to identify {elements}.")
            };
            let organize = if categorization.is_empty() {
                "Step 3: Organize the results into a clear structure.".to_string()
            } else {
                format!("Step 3: Organize the results. Categories: {categorization}.")
            };
            let format_step = if formatting.is_empty() {
                "Step 4: Format the information into a clean document.".to_string()
            } else {
                format!("Step 4: Format the information: {formatting}.")
            };
            let steps = [
                format!("Step 1: Ask the teacher to provide the material you need for {task}."),
                analyze,
                organize,
                format_step,
                "Step 5: Present the initial draft to the teacher and ask what they would like to change.".to_string(),
            ]
            .join("\n");
            let body = [
                goal,
                steps,
                "This is a dialogue so only ask one question at a time and always wait for the teacher to respond."
                    .to_string(),
            ]
            .join("\n\n");
            (opener, body, Some(TA_CLOSER.to_string()))
        }
    };
    Ok(GeneratedPrompt { kind, opener, body, fenced: true, closer, filtered: c.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_removal_reaches_fixed_point() {
        let (out, removed) = filter_forbidden("learning learning styles styles");
        assert!(!forbidden().is_match(&out));
        assert_eq!(removed.len(), 2);
    }

    #[test]
    fn fence_outgrows_backticks() {
        let p = compile_blueprint(
            BlueprintKind::Tutor,
            &InterviewAnswers::Tutor {
                topic: "shell ````quoting````".into(),
                key_elements: String::new(),
                sticking_points: String::new(),
                examples_analogies: String::new(),
            },
        )
        .unwrap();
        assert!(p.render().starts_with("`````\n"));
    }

    #[test]
    fn kind_mismatch() {
        let a = InterviewAnswers::Tutor {
            topic: "x".into(),
            key_elements: String::new(),
            sticking_points: String::new(),
            examples_analogies: String::new(),
        };
        assert_eq!(
            compile_blueprint(BlueprintKind::TeachingAssistant, &a),
            Err(BlueprintError::KindMismatch(BlueprintKind::Tutor))
        );
    }
}
