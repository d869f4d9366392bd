//! Task solving.
//!
//! At inference time a task is labeled, the matching category's memory and
//! insights are pulled in, and the model writes a single program expression
//! that the executor runs against the task's scene. One labeling call plus
//! one program call per task — no retry loop.

use std::collections::BTreeMap;

use crate::category::CategorySet;
use crate::embedding::Embedder;
use crate::error::{EhcError, Result};
use crate::exec::Executor;
use crate::experience::{label_task, normalize_answer, render_exemplar_blocks, PromptTemplates, Task};
use crate::insight::InsightPool;
use crate::llm::Completer;
use crate::memory::{HierarchicalMemory, RetrievalResult};
use crate::trace::{LlmCallKind, RunTrace, TraceEvent};

/// What solving one task produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    /// The program expression the model wrote.
    pub program: String,
    /// The executor's rendered result, or its diagnostic on failure.
    pub result: String,
    /// `Some(correct?)` when it can be decided: tasks with ground truth are
    /// checked against it, and an execution failure is always wrong.
    /// `None` only for a clean execution with no ground truth to check.
    pub verdict: Option<bool>,
}

/// Solver wiring: model, templates, categories, and retrieval knobs.
pub struct InferenceEngine<'a> {
    pub embedder: &'a dyn Embedder,
    pub llm: Completer<'a>,
    pub categories: &'a CategorySet,
    pub templates: &'a PromptTemplates,
    pub retrieval_k: usize,
    pub theta: f64,
}

/// The first non-empty line of a program completion, trimmed.
pub fn extract_program(completion: &str) -> String {
    completion
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_owned()
}

/// `{insights}` section of the solving prompt: numbered lines ordered by
/// weight descending (smaller id first on ties), or the `(no insights)`
/// literal.
pub fn render_ranked_insights(pool: &InsightPool, category: crate::category::CategoryId) -> String {
    let ranked = pool.ranked_for_category(category);
    if ranked.is_empty() {
        return "(no insights)".to_owned();
    }
    ranked
        .iter()
        .enumerate()
        .map(|(n, i)| format!("{}. [weight {}] {}", n + 1, i.weight, i.text))
        .collect::<Vec<_>>()
        .join("\n")
}

impl InferenceEngine<'_> {
    /// Fills the solving template from the task, the category's ranked
    /// insights, and the retrieval hits (already ordered by similarity).
    pub fn assemble_prompt(
        &self,
        task: &Task,
        pool: &InsightPool,
        category: crate::category::CategoryId,
        retrieval: &RetrievalResult,
    ) -> Result<String> {
        let values: BTreeMap<&str, String> = [
            ("task", task.presentation()),
            ("insights", render_ranked_insights(pool, category)),
            (
                "exemplars",
                render_exemplar_blocks(retrieval.entries.iter().map(|e| e.record.content.as_str())),
            ),
        ]
        .into();
        self.templates.inference.render(&values)
    }

    /// Labels the task, retrieves category-scoped context, asks the model
    /// for one program, executes it, and scores the result.
    pub fn solve(
        &self,
        memory: &mut HierarchicalMemory,
        pool: &InsightPool,
        task: &Task,
        executor: &dyn Executor,
        trace: &mut RunTrace,
    ) -> Result<Answer> {
        let classified = label_task(
            &self.llm,
            self.templates,
            self.categories,
            self.embedder,
            &task.content,
            trace,
        )?;
        let category = classified.category;

        let query = self.embedder.embed(&task.content)?;
        let retrieval = memory.retrieve(&query, Some(category), self.retrieval_k, self.theta);
        trace.push(TraceEvent::Retrieval {
            category: Some(category),
            k: self.retrieval_k,
            theta: self.theta,
            returned: retrieval
                .entries
                .iter()
                .map(|e| (e.record.id, e.similarity, e.tier))
                .collect(),
        });

        let prompt = self.assemble_prompt(task, pool, category, &retrieval)?;
        let completion = self
            .llm
            .complete(&prompt)
            .map_err(|e| EhcError::Backend(format!("task {}: {e}", task.id)))?;
        trace.push(TraceEvent::LlmCall {
            kind: LlmCallKind::Program,
            prompt,
            response: completion.clone(),
        });
        let program = extract_program(&completion);

        let outcome = executor.execute(&program, &task.payload);
        trace.push(TraceEvent::Execution {
            program: program.clone(),
            ok: outcome.ok,
            result: outcome.result.clone(),
            diagnostic: outcome.diagnostic.clone(),
        });

        if !outcome.ok {
            return Ok(Answer { program, result: outcome.diagnostic, verdict: Some(false) });
        }
        let verdict = task
            .truth
            .as_deref()
            .map(|truth| normalize_answer(&outcome.result) == normalize_answer(truth));
        Ok(Answer { program, result: outcome.result, verdict })
    }
}
