//! Scripted completion backend.
//!
//! A script is an ordered rule list; the first live rule whose matcher hits
//! the prompt supplies the response. Rules can carry a use budget, after
//! which they go dead and later rules (or the default response) take over.
//! This is enough to emulate multi-turn behavior — e.g. "fail twice, then
//! succeed" — without any model.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a64;
use crate::error::{EhcError, Result};
use crate::llm::CompletionBackend;

/// How a rule matches a prompt.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", content = "pattern", rename_all = "snake_case")]
pub enum MatchRule {
    /// Matches when the FNV-1a 64 hash of the whole prompt, printed as 16
    /// lowercase hex digits, equals the pattern. Lets scripts pin exact
    /// prompts without embedding them.
    ExactHash(String),
    /// Matches when the prompt contains the pattern.
    Substring(String),
    /// Matches when the regular expression finds a match in the prompt.
    Regex(String),
}

/// One scripted response.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ScriptRule {
    #[serde(flatten)]
    pub matcher: MatchRule,
    pub response: String,
    /// Remaining-use budget; `None` means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_uses: Option<u32>,
}

/// An ordered rule list plus the fallback response.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, Default)]
pub struct Script {
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default_response: String,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EhcError::Config(format!("cannot read script {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| EhcError::Config(format!("bad script {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| EhcError::Usage(format!("cannot serialize script: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Hex form of the prompt hash that [`MatchRule::ExactHash`] compares against.
pub fn prompt_hash(prompt: &str) -> String {
    format!("{:016x}", fnv1a64(prompt.as_bytes()))
}

/// Deterministic [`CompletionBackend`] over a [`Script`].
pub struct ScriptedBackend {
    script: Script,
    regexes: Vec<Option<regex::Regex>>,
    /// Uses consumed per rule; guarded so concurrent callers see a
    /// consistent first-match-wins outcome.
    uses: Mutex<Vec<u32>>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Result<Self> {
        let regexes = script
            .rules
            .iter()
            .map(|rule| match &rule.matcher {
                MatchRule::Regex(pattern) => regex::Regex::new(pattern)
                    .map(Some)
                    .map_err(|e| EhcError::Config(format!("bad script regex {pattern:?}: {e}"))),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let uses = Mutex::new(vec![0; script.rules.len()]);
        Ok(Self { script, regexes, uses })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(Script::load(path)?)
    }

    /// Convenience for tests: a script with a single unlimited substring rule.
    pub fn single(substring: &str, response: &str) -> Self {
        Self::new(Script {
            rules: vec![ScriptRule {
                matcher: MatchRule::Substring(substring.to_owned()),
                response: response.to_owned(),
                max_uses: None,
            }],
            default_response: String::new(),
        })
        .expect("substring rules cannot fail to compile")
    }

    /// Convenience for tests: every prompt gets the same response.
    pub fn constant(response: &str) -> Self {
        Self::new(Script { rules: Vec::new(), default_response: response.to_owned() })
            .expect("empty scripts are valid")
    }

    fn matches(&self, index: usize, prompt: &str) -> bool {
        match &self.script.rules[index].matcher {
            MatchRule::ExactHash(hex) => prompt_hash(prompt) == *hex,
            MatchRule::Substring(needle) => prompt.contains(needle),
            MatchRule::Regex(_) => self.regexes[index]
                .as_ref()
                .expect("regex compiled at construction")
                .is_match(prompt),
        }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, prompt: &str, _max_tokens: u32, _temperature: f64) -> Result<String> {
        // Hold the lock across match + increment so a budgeted rule cannot be
        // claimed twice under concurrency.
        let mut uses = self.uses.lock().expect("script lock poisoned");
        for (i, rule) in self.script.rules.iter().enumerate() {
            if let Some(budget) = rule.max_uses {
                if uses[i] >= budget {
                    continue;
                }
            }
            if self.matches(i, prompt) {
                uses[i] += 1;
                return Ok(rule.response.clone());
            }
        }
        Ok(self.script.default_response.clone())
    }
}
