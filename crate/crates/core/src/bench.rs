//! Benchmark orchestration.
//!
//! A benchmark run generates a seeded task suite, splits it 50/50 per
//! category into train and test halves, prepares memory according to the
//! mode, solves the test half, and reports per-category accuracy plus
//! memory statistics. The three modes ablate the architecture:
//!
//! - `baseline` — empty memory, empty insight pool, no training pass;
//! - `hmr` — memory seeded from the corpus, then experience collection over
//!   the train half;
//! - `hmr_toel` — `hmr` plus insight distillation before the test pass.
//!
//! Reports are rendered as `key = value` lines with no timing data, so the
//! same seed and backend produce byte-identical report files.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::category::{CategoryId, CategorySet};
use crate::embedding::Embedder;
use crate::error::{EhcError, Result};
use crate::exec::Executor;
use crate::experience::{seed_memory, ExperienceEngine, PromptTemplates, SeedCorpus};
use crate::inference::InferenceEngine;
use crate::insight::{InsightEngine, InsightPool};
use crate::llm::{Completer, CompletionBackend};
use crate::memory::{HierarchicalMemory, PoolStats};
use crate::suite::{generate_suite, SuiteConfig, SuiteTask};
use crate::trace::RunTrace;

/// Salt mixed into the base seed for the train/test shuffle, so the split
/// draws are independent of suite generation (which uses the bare seed).
const SPLIT_SALT: u64 = 0x53504c4954; // "SPLIT"
/// Salt mixed into the base seed for insight distillation draws.
const DISTILL_SALT: u64 = 0x44495354494c4c; // "DISTILL"

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Baseline,
    Hmr,
    HmrToel,
}

impl BenchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::Baseline => "baseline",
            BenchMode::Hmr => "hmr",
            BenchMode::HmrToel => "hmr_toel",
        }
    }

    pub const ALL: [BenchMode; 3] = [BenchMode::Baseline, BenchMode::Hmr, BenchMode::HmrToel];
}

impl std::str::FromStr for BenchMode {
    type Err = EhcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(BenchMode::Baseline),
            "hmr" => Ok(BenchMode::Hmr),
            "hmr_toel" => Ok(BenchMode::HmrToel),
            other => Err(EhcError::Usage(format!(
                "unknown mode {other:?} (expected baseline, hmr, or hmr_toel)"
            ))),
        }
    }
}

/// Everything a benchmark run needs beyond numbers.
pub struct BenchContext<'a> {
    pub embedder: &'a dyn Embedder,
    pub backend: &'a dyn CompletionBackend,
    pub executor: &'a dyn Executor,
    pub categories: &'a CategorySet,
    pub templates: &'a PromptTemplates,
    /// Curated exemplars; required by the seeded modes.
    pub seed_corpus: Option<&'a SeedCorpus>,
}

/// Numeric knobs for a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub tasks_per_category: usize,
    pub capacity: usize,
    pub dim: usize,
    pub retrieval_k: usize,
    pub theta: f64,
    pub deep_theta_gate: bool,
    pub max_attempts: u32,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed_examples_per_category: usize,
    pub insight_initial_weight: u32,
    pub insight_max_per_category: usize,
    pub segment_len: usize,
    pub max_pairs: usize,
    pub max_groups: usize,
    pub insight_rounds: u32,
}

/// Per-category tallies plus end-of-run memory statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub seed: u64,
    /// `(label, correct, total)` per category in category order.
    pub per_category: Vec<(String, usize, usize)>,
    pub correct: usize,
    pub total: usize,
    pub train_tasks: usize,
    pub stats: PoolStats,
    pub insights_total: usize,
}

impl BenchReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Canonical `key = value` rendering. Deliberately carries no wall-clock
    /// data: rerunning the same seed against the same backend must produce
    /// identical bytes.
    pub fn render(&self) -> String {
        let mut lines = vec![
            format!("mode = {}", self.mode.as_str()),
            format!("seed = {}", self.seed),
            format!("tasks.total = {}", self.total),
            format!("tasks.correct = {}", self.correct),
            format!("accuracy = {}", self.accuracy()),
        ];
        for (label, correct, total) in &self.per_category {
            lines.push(format!("{label}.correct = {correct}"));
            lines.push(format!("{label}.total = {total}"));
        }
        lines.push(format!("train.tasks = {}", self.train_tasks));
        lines.push(format!("memory.fast = {}", self.stats.fast_count));
        lines.push(format!("memory.deep = {}", self.stats.deep_count));
        lines.push(format!("memory.evictions = {}", self.stats.evictions_total));
        lines.push(format!("memory.promotions = {}", self.stats.promotions_total));
        lines.push(format!("memory.fast_hits = {}", self.stats.fast_hits));
        lines.push(format!("memory.deep_hits = {}", self.stats.deep_hits));
        lines.push(format!("insights.total = {}", self.insights_total));
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Splits a suite into train/test halves, per category: each category's
/// tasks are shuffled with a salted per-category stream and the first half
/// (rounded down) trains. Returned vectors are in ascending task-id order.
pub fn split_suite(suite: &[SuiteTask], seed: u64) -> (Vec<&SuiteTask>, Vec<&SuiteTask>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let categories: std::collections::BTreeSet<CategoryId> =
        suite.iter().map(|t| t.category).collect();
    for category in categories {
        let mut members: Vec<&SuiteTask> =
            suite.iter().filter(|t| t.category == category).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
        rng.set_stream(category.0 as u64);
        members.shuffle(&mut rng);
        let cut = members.len() / 2;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_by_key(|t| t.task.id);
    test.sort_by_key(|t| t.task.id);
    (train, test)
}

/// A finished benchmark run: the report plus the final memory and insight
/// state, so callers can persist or inspect what the run built.
#[derive(Debug)]
pub struct BenchOutcome {
    pub report: BenchReport,
    pub memory: HierarchicalMemory,
    pub pool: InsightPool,
}

/// Runs one benchmark mode end to end.
pub fn run_bench(
    config: &BenchConfig,
    mode: BenchMode,
    ctx: &BenchContext<'_>,
    trace: &mut RunTrace,
) -> Result<BenchOutcome> {
    let suite = generate_suite(&SuiteConfig {
        seed: config.seed,
        tasks_per_category: config.tasks_per_category,
    })?;
    let (train, test) = split_suite(&suite, config.seed);

    let mut memory = HierarchicalMemory::new(config.capacity, config.dim)?
        .with_deep_theta_gate(config.deep_theta_gate);
    let mut pool = InsightPool::new(config.insight_initial_weight)?
        .with_max_per_category(config.insight_max_per_category)?;
    let llm = Completer::new(ctx.backend, config.max_tokens, config.temperature);

    let mut train_tasks = 0;
    if mode != BenchMode::Baseline {
        let corpus = ctx.seed_corpus.ok_or_else(|| {
            EhcError::Config(format!("mode {} needs a seed corpus", mode.as_str()))
        })?;
        seed_memory(
            &mut memory,
            ctx.categories,
            corpus,
            config.seed_examples_per_category,
            ctx.embedder,
        )?;
        let collector = ExperienceEngine {
            embedder: ctx.embedder,
            llm,
            evaluator: &crate::experience::ExactMatchEvaluator,
            categories: ctx.categories,
            templates: ctx.templates,
            max_attempts: config.max_attempts,
            retrieval_k: config.retrieval_k,
            theta: config.theta,
        };
        for suite_task in &train {
            collector.run_task(&mut memory, &suite_task.task, trace)?;
            train_tasks += 1;
        }
    }

    if mode == BenchMode::HmrToel {
        let distiller = InsightEngine {
            llm,
            templates: ctx.templates,
            categories: ctx.categories,
            segment_len: config.segment_len,
            max_pairs: config.max_pairs,
            max_groups: config.max_groups,
            rounds: config.insight_rounds,
        };
        distiller.distill_all(&mut pool, &memory, config.seed ^ DISTILL_SALT, trace)?;
    }

    let solver = InferenceEngine {
        embedder: ctx.embedder,
        llm,
        categories: ctx.categories,
        templates: ctx.templates,
        retrieval_k: config.retrieval_k,
        theta: config.theta,
    };
    let mut per_category: Vec<(String, usize, usize)> = ctx
        .categories
        .labels()
        .map(|label| (label.to_owned(), 0, 0))
        .collect();
    let mut correct = 0;
    for suite_task in &test {
        let answer = solver.solve(&mut memory, &pool, &suite_task.task, ctx.executor, trace)?;
        let tally = &mut per_category[suite_task.category.0];
        tally.2 += 1;
        if answer.verdict == Some(true) {
            tally.1 += 1;
            correct += 1;
        }
    }

    let report = BenchReport {
        mode,
        seed: config.seed,
        per_category,
        correct,
        total: test.len(),
        train_tasks,
        stats: memory.stats(),
        insights_total: pool.len(),
    };
    Ok(BenchOutcome { report, memory, pool })
}
