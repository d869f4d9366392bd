//! Experience collection.
//!
//! A task gets up to `T` attempts. Each attempt retrieves history from
//! memory (category-scoped once the task has been labeled), prompts the
//! model for a trajectory, and judges it. Failures produce a reflection that
//! is concatenated onto the running reflection text and fed into the next
//! attempt. The final experience — the first success, or the last failure
//! with all accumulated reflections — is classified and stored into memory.

use std::collections::BTreeMap;
use std::path::Path;

use crate::category::{CategoryId, CategorySet};
use crate::embedding::Embedder;
use crate::error::{EhcError, Result};
use crate::llm::Completer;
use crate::memory::{HierarchicalMemory, MemoryRecord, RecordKind, RetrievalResult};
use crate::template::Template;
use crate::trace::{LlmCallKind, RunTrace, TraceEvent};

/// Caller-assigned task identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u64);

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One task: an instruction, an opaque environment payload (the serialized
/// scene, for the toy executor), and optionally the expected answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub content: String,
    pub payload: String,
    pub truth: Option<String>,
}

impl Task {
    pub fn new(id: TaskId, content: impl Into<String>, payload: impl Into<String>) -> Result<Self> {
        let content = content.into();
        if content.is_empty() {
            return Err(EhcError::Usage(format!("task {id} has empty content")));
        }
        Ok(Self { id, content, payload: payload.into(), truth: None })
    }

    pub fn with_truth(mut self, truth: impl Into<String>) -> Self {
        self.truth = Some(truth.into());
        self
    }

    /// The presentation block substituted for `{task}` in trajectory,
    /// reflection, and inference prompts.
    pub fn presentation(&self) -> String {
        if self.payload.is_empty() {
            format!("Task: {}", self.content)
        } else {
            format!("Task: {}\nScene: {}", self.content, self.payload)
        }
    }
}

/// One reasoning step of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Step {
    pub thought: String,
    pub action: String,
    pub observation: String,
}

/// A parsed attempt: steps plus the final answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_answer: String,
}

impl Trajectory {
    /// Parses completion text. Lines prefixed `Thought:` / `Action:` /
    /// `Observation:` build steps (a `Thought:` opens a new step; a repeated
    /// field within one step opens a new step); `Answer:` sets the final
    /// answer (the last one wins); all other lines are ignored. Text with no
    /// recognized line at all becomes a single free-form action step, so a
    /// trajectory always has at least one step.
    pub fn parse(text: &str) -> Self {
        let mut steps: Vec<Step> = Vec::new();
        let mut current = Step::default();
        let mut current_set = (false, false, false); // (thought, action, observation)
        let mut final_answer = String::new();
        let mut push = |step: &mut Step, set: &mut (bool, bool, bool)| {
            if set.0 || set.1 || set.2 {
                steps.push(std::mem::take(step));
                *set = (false, false, false);
            }
        };
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("Thought:") {
                if current_set.0 || current_set.1 || current_set.2 {
                    push(&mut current, &mut current_set);
                }
                current.thought = rest.trim().to_owned();
                current_set.0 = true;
            } else if let Some(rest) = line.strip_prefix("Action:") {
                if current_set.1 || current_set.2 {
                    push(&mut current, &mut current_set);
                }
                current.action = rest.trim().to_owned();
                current_set.1 = true;
            } else if let Some(rest) = line.strip_prefix("Observation:") {
                if current_set.2 {
                    push(&mut current, &mut current_set);
                }
                current.observation = rest.trim().to_owned();
                current_set.2 = true;
            } else if let Some(rest) = line.strip_prefix("Answer:") {
                final_answer = rest.trim().to_owned();
            }
        }
        push(&mut current, &mut current_set);
        if steps.is_empty() {
            let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
            steps.push(Step { thought: String::new(), action: collapsed, observation: String::new() });
        }
        Self { steps, final_answer }
    }

    /// Canonical text form: one line per non-empty field, then the answer
    /// line. `parse(render(t)) == t` for trajectories whose fields are
    /// non-empty single lines.
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        for step in &self.steps {
            if !step.thought.is_empty() {
                lines.push(format!("Thought: {}", step.thought));
            }
            if !step.action.is_empty() {
                lines.push(format!("Action: {}", step.action));
            }
            if !step.observation.is_empty() {
                lines.push(format!("Observation: {}", step.observation));
            }
        }
        if !self.final_answer.is_empty() {
            lines.push(format!("Answer: {}", self.final_answer));
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
}

/// The product of running one task to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Experience {
    pub task_id: TaskId,
    pub category: CategoryId,
    /// Final attempt's trajectory.
    pub trajectory: Trajectory,
    /// Newline-joined reflections; empty exactly for successes.
    pub reflections: String,
    pub outcome: Outcome,
    /// 1-based; at most the attempt budget.
    pub attempts_used: u32,
}

/// Judgment of one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub success: bool,
    pub feedback: String,
}

/// Decides whether an attempt solved its task.
pub trait Evaluator: Send + Sync {
    fn judge(&self, task: &Task, trajectory: &Trajectory) -> Result<Judgment>;
}

/// Collapses case and whitespace so answer comparison ignores formatting.
pub fn normalize_answer(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Compares the trajectory's final answer to the task's ground truth under
/// [`normalize_answer`]. Tasks without ground truth never pass.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactMatchEvaluator;

impl Evaluator for ExactMatchEvaluator {
    fn judge(&self, task: &Task, trajectory: &Trajectory) -> Result<Judgment> {
        let Some(truth) = &task.truth else {
            return Ok(Judgment {
                success: false,
                feedback: "no ground truth available".into(),
            });
        };
        let got = normalize_answer(&trajectory.final_answer);
        let want = normalize_answer(truth);
        if got == want {
            Ok(Judgment { success: true, feedback: "answer matches".into() })
        } else {
            Ok(Judgment {
                success: false,
                feedback: format!("expected {want:?}, got {got:?}"),
            })
        }
    }
}

/// The prompt templates the engines render.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub trajectory: Template,
    pub reflection: Template,
    pub labeling: Template,
    pub insight: Template,
    pub inference: Template,
}

pub const TRAJECTORY_PLACEHOLDERS: &[&str] = &["task", "history", "reflections"];
pub const REFLECTION_PLACEHOLDERS: &[&str] = &["task", "trajectory", "history"];
pub const LABELING_PLACEHOLDERS: &[&str] = &["task", "categories"];
pub const INSIGHT_PLACEHOLDERS: &[&str] = &["category", "insights", "pairs", "groups"];
pub const INFERENCE_PLACEHOLDERS: &[&str] = &["task", "insights", "exemplars"];

impl PromptTemplates {
    /// The templates shipped with the crate.
    pub fn defaults() -> Self {
        Self {
            trajectory: Template::parse(
                include_str!("../assets/templates/trajectory.txt"),
                TRAJECTORY_PLACEHOLDERS,
            )
            .expect("shipped trajectory template is valid"),
            reflection: Template::parse(
                include_str!("../assets/templates/reflection.txt"),
                REFLECTION_PLACEHOLDERS,
            )
            .expect("shipped reflection template is valid"),
            labeling: Template::parse(
                include_str!("../assets/templates/labeling.txt"),
                LABELING_PLACEHOLDERS,
            )
            .expect("shipped labeling template is valid"),
            insight: Template::parse(
                include_str!("../assets/templates/insight.txt"),
                INSIGHT_PLACEHOLDERS,
            )
            .expect("shipped insight template is valid"),
            inference: Template::parse(
                include_str!("../assets/templates/inference.txt"),
                INFERENCE_PLACEHOLDERS,
            )
            .expect("shipped inference template is valid"),
        }
    }
}

/// One labeling round trip: prompt the model for a category name, extract
/// the first-line candidate, and classify it against the category set.
/// Shared by the collection loop and the solver so both label identically.
pub fn label_task(
    llm: &Completer<'_>,
    templates: &PromptTemplates,
    categories: &CategorySet,
    embedder: &dyn Embedder,
    task_content: &str,
    trace: &mut RunTrace,
) -> Result<crate::category::Classified> {
    let labels: Vec<&str> = categories.labels().collect();
    let values: BTreeMap<&str, String> = [
        ("task", task_content.to_owned()),
        ("categories", labels.join("\n")),
    ]
    .into();
    let prompt = templates.labeling.render(&values)?;
    let completion = llm.complete(&prompt)?;
    trace.push(TraceEvent::LlmCall {
        kind: LlmCallKind::Labeling,
        prompt,
        response: completion.clone(),
    });
    let candidate = extract_candidate_label(&completion);
    let classified = categories.classify(&candidate, embedder)?;
    trace.push(TraceEvent::Labeled {
        candidate,
        category: classified.category,
        degenerate: classified.degenerate,
    });
    Ok(classified)
}

/// Renders retrieval hits as in-context example blocks; the literal
/// `(no examples)` when there are none.
pub fn render_history(hits: &RetrievalResult) -> String {
    render_exemplar_blocks(hits.entries.iter().map(|e| e.record.content.as_str()))
}

/// Shared exemplar-section renderer (also used for inference prompts).
pub fn render_exemplar_blocks<'a>(contents: impl Iterator<Item = &'a str>) -> String {
    let blocks: Vec<&str> = contents.collect();
    if blocks.is_empty() {
        "(no examples)".to_owned()
    } else {
        blocks.join("\n\n")
    }
}

fn render_reflections(reflections: &str) -> String {
    if reflections.is_empty() {
        "(none)".to_owned()
    } else {
        reflections.to_owned()
    }
}

/// Extracts a candidate category label from a completion: first line,
/// trimmed of whitespace and one layer of matching surrounding quotes.
pub fn extract_candidate_label(completion: &str) -> String {
    let line = completion.lines().next().unwrap_or("").trim();
    let stripped = line
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .or_else(|| line.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')))
        .unwrap_or(line);
    stripped.trim().to_owned()
}

/// Collection-loop wiring: model, evaluator, templates, and retrieval knobs.
pub struct ExperienceEngine<'a> {
    pub embedder: &'a dyn Embedder,
    pub llm: Completer<'a>,
    pub evaluator: &'a dyn Evaluator,
    pub categories: &'a CategorySet,
    pub templates: &'a PromptTemplates,
    /// Attempt budget `T`.
    pub max_attempts: u32,
    pub retrieval_k: usize,
    pub theta: f64,
}

impl ExperienceEngine<'_> {
    /// Runs the full attempt loop for one task, stores the resulting
    /// experience as a memory record, and returns it.
    ///
    /// Attempt 0 retrieves without a category filter; the task is labeled
    /// once — right after attempt 0 is judged — and every later retrieval is
    /// scoped to that category. A reflection is generated after every failed
    /// attempt (including the last), never after a success.
    pub fn run_task(
        &self,
        memory: &mut HierarchicalMemory,
        task: &Task,
        trace: &mut RunTrace,
    ) -> Result<Experience> {
        if self.max_attempts == 0 {
            return Err(EhcError::Usage("attempt budget must be at least 1".into()));
        }
        let query = self.embedder.embed(&task.content)?;
        let mut reflections = String::new();
        let mut category: Option<CategoryId> = None;
        let mut last_failure: Option<Trajectory> = None;

        for attempt in 0..self.max_attempts {
            let hits = memory.retrieve(&query, category, self.retrieval_k, self.theta);
            trace.push(TraceEvent::Retrieval {
                category,
                k: self.retrieval_k,
                theta: self.theta,
                returned: hits
                    .entries
                    .iter()
                    .map(|e| (e.record.id, e.similarity, e.tier))
                    .collect(),
            });
            let history = render_history(&hits);

            let values: BTreeMap<&str, String> = [
                ("task", task.presentation()),
                ("history", history.clone()),
                ("reflections", render_reflections(&reflections)),
            ]
            .into();
            let prompt = self.templates.trajectory.render(&values)?;
            let completion = self.llm.complete(&prompt).map_err(|e| {
                EhcError::Backend(format!("attempt {attempt}: {e}"))
            })?;
            trace.push(TraceEvent::LlmCall {
                kind: LlmCallKind::Trajectory,
                prompt,
                response: completion.clone(),
            });
            let trajectory = Trajectory::parse(&completion);
            let judgment = self.evaluator.judge(task, &trajectory)?;
            trace.push(TraceEvent::Attempt {
                index: attempt,
                success: judgment.success,
                feedback: judgment.feedback.clone(),
            });

            if attempt == 0 {
                let classified = label_task(
                    &self.llm,
                    self.templates,
                    self.categories,
                    self.embedder,
                    &task.content,
                    trace,
                )?;
                category = Some(classified.category);
            }
            let assigned = category.expect("labeled on attempt 0");

            if judgment.success {
                let experience = Experience {
                    task_id: task.id,
                    category: assigned,
                    trajectory,
                    reflections: String::new(),
                    outcome: Outcome::Success,
                    attempts_used: attempt + 1,
                };
                self.store_experience(memory, task, &experience)?;
                return Ok(experience);
            }

            let values: BTreeMap<&str, String> = [
                ("task", task.presentation()),
                ("trajectory", trajectory.render()),
                ("history", history),
            ]
            .into();
            let prompt = self.templates.reflection.render(&values)?;
            let reflection = self.llm.complete(&prompt).map_err(|e| {
                EhcError::Backend(format!("attempt {attempt}: {e}"))
            })?;
            trace.push(TraceEvent::LlmCall {
                kind: LlmCallKind::Reflection,
                prompt,
                response: reflection.clone(),
            });
            trace.push(TraceEvent::Reflection { attempt, text: reflection.clone() });
            if reflections.is_empty() {
                reflections = reflection;
            } else {
                reflections.push('\n');
                reflections.push_str(&reflection);
            }
            last_failure = Some(trajectory);
        }

        let experience = Experience {
            task_id: task.id,
            category: category.expect("labeled on attempt 0"),
            trajectory: last_failure.expect("at least one attempt ran"),
            reflections,
            outcome: Outcome::Failure,
            attempts_used: self.max_attempts,
        };
        self.store_experience(memory, task, &experience)?;
        Ok(experience)
    }

    /// Converts an experience to a memory record (embedding the originating
    /// task content) and stores it.
    fn store_experience(
        &self,
        memory: &mut HierarchicalMemory,
        task: &Task,
        experience: &Experience,
    ) -> Result<()> {
        let (kind, reflections) = match experience.outcome {
            Outcome::Success => (RecordKind::Success, None),
            Outcome::Failure => (RecordKind::Failure, Some(experience.reflections.clone())),
        };
        let record = MemoryRecord::new(
            memory.next_id(),
            experience.category,
            kind,
            experience.trajectory.render(),
            self.embedder.embed(&task.content)?,
            reflections,
        )?;
        memory.store(record)?;
        Ok(())
    }
}

/// A parsed seed corpus: `(category label, exemplar content)` rows.
#[derive(Debug, Clone, Default)]
pub struct SeedCorpus {
    entries: Vec<(String, String)>,
}

impl SeedCorpus {
    /// The curated corpus shipped with the crate: five exemplars per
    /// default category.
    pub fn defaults() -> Self {
        Self::parse(include_str!("../assets/seed_corpus.tsv"))
            .expect("shipped seed corpus is valid")
    }

    /// Parses corpus text: one `label<TAB>content` row per line; `\n`, `\t`,
    /// and `\\` escapes in the content are expanded; blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((label, raw)) = line.split_once('\t') else {
                return Err(EhcError::Config(format!(
                    "seed corpus line {}: expected label<TAB>content",
                    i + 1
                )));
            };
            entries.push((label.trim().to_owned(), unescape(raw)?));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EhcError::Config(format!("cannot read seed corpus {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rows for one label, in file order.
    pub fn for_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a str> {
        self.entries
            .iter()
            .filter(move |(l, _)| l == label)
            .map(|(_, c)| c.as_str())
    }
}

fn unescape(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            other => {
                return Err(EhcError::Config(format!(
                    "bad escape \\{} in seed corpus",
                    other.map_or_else(|| "<end>".to_owned(), |c| c.to_string())
                )))
            }
        }
    }
    Ok(out)
}

/// Inserts `examples_per_category` seed records per category, in category
/// order, embedding each exemplar's own text. Returns the number stored.
/// A category with too few corpus rows is a configuration error naming it.
pub fn seed_memory(
    memory: &mut HierarchicalMemory,
    categories: &CategorySet,
    corpus: &SeedCorpus,
    examples_per_category: usize,
    embedder: &dyn Embedder,
) -> Result<usize> {
    let mut stored = 0;
    for category in categories.ids() {
        let label = categories.label(category);
        let exemplars: Vec<&str> = corpus.for_label(label).take(examples_per_category).collect();
        if exemplars.len() < examples_per_category {
            return Err(EhcError::Config(format!(
                "seed corpus has {} exemplars for category {label:?}, need {examples_per_category}",
                exemplars.len()
            )));
        }
        for content in exemplars {
            let record = MemoryRecord::new(
                memory.next_id(),
                category,
                RecordKind::Seed,
                content.to_owned(),
                embedder.embed(content)?,
                None,
            )?;
            memory.store(record)?;
            stored += 1;
        }
    }
    Ok(stored)
}
