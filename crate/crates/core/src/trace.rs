//! Run traces.
//!
//! Every stage of collection and inference appends a structured event, so
//! tests can assert on internal behavior (reflection counts, call budgets)
//! without guessing from outputs, and `--trace` can print a faithful log.

use crate::category::CategoryId;
use crate::memory::{RecordId, Tier};

/// What an LLM call was for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmCallKind {
    Labeling,
    Trajectory,
    Reflection,
    Insight,
    Program,
}

impl LlmCallKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LlmCallKind::Labeling => "labeling",
            LlmCallKind::Trajectory => "trajectory",
            LlmCallKind::Reflection => "reflection",
            LlmCallKind::Insight => "insight",
            LlmCallKind::Program => "program",
        }
    }
}

/// One logged stage.
#[derive(Debug, Clone)]
pub enum TraceEvent {
    Retrieval {
        category: Option<CategoryId>,
        k: usize,
        theta: f64,
        returned: Vec<(RecordId, f64, Tier)>,
    },
    LlmCall {
        kind: LlmCallKind,
        prompt: String,
        response: String,
    },
    Labeled {
        candidate: String,
        category: CategoryId,
        degenerate: bool,
    },
    Attempt {
        index: u32,
        success: bool,
        feedback: String,
    },
    Reflection {
        attempt: u32,
        text: String,
    },
    InsightRound {
        round: u32,
        ops_applied: usize,
        warnings: Vec<String>,
    },
    Execution {
        program: String,
        ok: bool,
        result: String,
        diagnostic: String,
    },
}

/// Append-only event log for one task run (or one insight-generation pass).
#[derive(Debug, Default)]
pub struct RunTrace {
    events: Vec<TraceEvent>,
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn llm_calls(&self, kind: LlmCallKind) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::LlmCall { kind: k, .. } if *k == kind))
            .count()
    }

    pub fn reflections(&self) -> Vec<&str> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Reflection { text, .. } => Some(text.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Compact one-line-per-event rendering for `--trace` output.
    pub fn render_lines(&self) -> Vec<String> {
        self.events
            .iter()
            .map(|e| match e {
                TraceEvent::Retrieval { category, k, theta, returned } => {
                    let cat = category.map_or("*".to_owned(), |c| c.to_string());
                    let hits: Vec<String> = returned
                        .iter()
                        .map(|(id, sim, tier)| format!("{id}:{sim:.4}:{}", tier.as_str()))
                        .collect();
                    format!("retrieve cat={cat} k={k} theta={theta} -> [{}]", hits.join(", "))
                }
                TraceEvent::LlmCall { kind, prompt, response } => format!(
                    "llm {} prompt={}B response={}B",
                    kind.as_str(),
                    prompt.len(),
                    response.len()
                ),
                TraceEvent::Labeled { candidate, category, degenerate } => format!(
                    "labeled candidate={candidate:?} category={category} degenerate={degenerate}"
                ),
                TraceEvent::Attempt { index, success, feedback } => {
                    format!("attempt {index} success={success} feedback={feedback:?}")
                }
                TraceEvent::Reflection { attempt, text } => {
                    format!("reflection after attempt {attempt}: {text:?}")
                }
                TraceEvent::InsightRound { round, ops_applied, warnings } => format!(
                    "insight round {round}: {ops_applied} ops applied, {} warnings",
                    warnings.len()
                ),
                TraceEvent::Execution { program, ok, result, diagnostic } => {
                    if *ok {
                        format!("execute {program:?} -> {result:?}")
                    } else {
                        format!("execute {program:?} failed: {diagnostic}")
                    }
                }
            })
            .collect()
    }
}
