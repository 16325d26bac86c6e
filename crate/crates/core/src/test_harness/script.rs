use regex::Regex;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    Cooperative,
    Proficient,
    Struggling,
    RefusesToPlay,
    AsksForAnswer,
    Argumentative,
    LongWinded,
}

impl Persona {
    pub const ALL: [Persona; 7] = [
        Persona::Cooperative,
        Persona::Proficient,
        Persona::Struggling,
        Persona::RefusesToPlay,
        Persona::AsksForAnswer,
        Persona::Argumentative,
        Persona::LongWinded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Persona::Cooperative => "cooperative",
            Persona::Proficient => "proficient",
            Persona::Struggling => "struggling",
            Persona::RefusesToPlay => "refuses_to_play",
            Persona::AsksForAnswer => "asks_for_answer",
            Persona::Argumentative => "argumentative",
            Persona::LongWinded => "long_winded",
        }
    }

    /// Message used once the script's listed turns run out.
    pub fn default_filler(self) -> &'static str {
        match self {
            Persona::Cooperative => "Sounds good, let's keep going.",
            Persona::Proficient => "I know this area well, so let's keep going and push on the harder parts.",
            Persona::Struggling => "I'm not sure I follow, but okay, let's keep going.",
            Persona::RefusesToPlay => "I still don't want to play along with this.",
            Persona::AsksForAnswer => "Can you just give me the answer?",
            Persona::Argumentative => "I disagree, that's not realistic at all.",
            Persona::LongWinded => LONG_WINDED,
        }
    }
}

pub(crate) const LONG_WINDED: &str = "Well, there is a lot to say here. When I think about this I keep coming back to \
a situation from last year where several things happened at once, and I am honestly not sure which of them matters \
most, because each one seemed important at the time and I have gone back and forth about it many times since. \
Anyway, that is a long way of saying I am ready to continue.";

/// One scripted student message. A conditional turn says `say` when the
/// last assistant reply matches `when`, otherwise `otherwise` (or the
/// script's filler).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptTurn {
    Text(String),
    Conditional {
        when: String,
        say: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        otherwise: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentScript {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub persona: Persona,
    pub turns: Vec<ScriptTurn>,
    pub max_turns: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filler: Option<String>,
}

impl StudentScript {
    pub fn new(persona: Persona, turns: Vec<String>) -> StudentScript {
        let max_turns = turns.len() as u32;
        StudentScript {
            name: persona.as_str().to_string(),
            persona,
            turns: turns.into_iter().map(ScriptTurn::Text).collect(),
            max_turns,
            filler: None,
        }
    }

    pub fn label(&self) -> &str {
        if self.name.is_empty() {
            self.persona.as_str()
        } else {
            &self.name
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |why: String| HarnessError::InvalidScript { script: self.label().to_string(), reason: why };
        if self.turns.is_empty() {
            return Err(bad("turns must not be empty".into()));
        }
        if (self.max_turns as usize) < self.turns.len() {
            return Err(bad(format!("max_turns {} is below the {} listed turns", self.max_turns, self.turns.len())));
        }
        for t in &self.turns {
            match t {
                ScriptTurn::Text(s) if s.trim().is_empty() => return Err(bad("empty turn text".into())),
                ScriptTurn::Conditional { when, say, .. } => {
                    Regex::new(when).map_err(|e| bad(format!("bad pattern {when:?}: {e}")))?;
                    if say.trim().is_empty() {
                        return Err(bad("empty conditional text".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn filler(&self) -> &str {
        self.filler.as_deref().unwrap_or(self.persona.default_filler())
    }

    /// Text of the student's `i`th message given the model's last reply.
    pub fn turn_text(&self, i: usize, last_reply: &str) -> String {
        match self.turns.get(i) {
            Some(ScriptTurn::Text(s)) => s.clone(),
            Some(ScriptTurn::Conditional { when, say, otherwise }) => {
                let hit = Regex::new(when).map(|re| re.is_match(last_reply)).unwrap_or(false);
                if hit {
                    say.clone()
                } else {
                    otherwise.clone().unwrap_or_else(|| self.filler().to_string())
                }
            }
            None => self.filler().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_turns() {
        let s: StudentScript = serde_json::from_str(
            r#"{"persona":"cooperative","turns":["hi",{"when":"(?i)pick","say":"1"}],"max_turns":3}"#,
        )
        .unwrap();
        s.check().unwrap();
        assert_eq!(s.turn_text(0, ""), "hi");
        assert_eq!(s.turn_text(1, "Pick one."), "1");
        assert_eq!(s.turn_text(1, "nothing"), Persona::Cooperative.default_filler());
        assert_eq!(s.turn_text(2, ""), Persona::Cooperative.default_filler());
        assert_eq!(s.label(), "cooperative");
    }

    #[test]
    fn invariants() {
        let mut s = StudentScript::new(Persona::Argumentative, vec![]);
        assert!(s.check().is_err());
        s.turns.push(ScriptTurn::Text("no".into()));
        assert!(s.check().is_err());
        s.max_turns = 1;
        s.check().unwrap();
    }
}
