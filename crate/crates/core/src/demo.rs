//! Offline demo assets.
//!
//! Builds the scripted-model rule set that drives the shipped benchmark
//! demo. The script is constructed so the three benchmark modes peel apart
//! by capability:
//!
//! - judgment and counting programs are written from the task text alone,
//!   so every mode solves them;
//! - recognition and comparison programs are only written when the prompt's
//!   example section shows a same-category worked action (`Action: FILTER(
//!   shape=` / `Action: COMPARE(`) — which requires a populated memory;
//! - removal and replacement programs are only written when the prompt's
//!   insight section carries the category's distilled rule of thumb — which
//!   requires the distillation pass;
//! - addition is never solved: the scripted model has no program for it in
//!   any mode.
//!
//! With five test tasks per category this yields 10/35, 20/35, and 30/35
//! exactly. During training, the first three train tasks of every category
//! (by id) succeed on their first attempt and the other two fail out, so
//! every category contributes both successes and failures to distillation.

use crate::bench::{split_suite, BenchConfig};
use crate::category::DEFAULT_CATEGORY_LABELS;
use crate::error::Result;
use crate::llm::{MatchRule, Script, ScriptRule};
use crate::suite::{generate_suite, SuiteConfig, SuiteTask};

/// Seed the shipped demo assets are built from.
pub const DEMO_SEED: u64 = 42;
/// Suite size the shipped demo assets are built for.
pub const DEMO_TASKS_PER_CATEGORY: usize = 10;
/// Train tasks per category that the script solves during collection.
const TRAIN_SUCCESSES_PER_CATEGORY: usize = 3;

/// The reply used when no rule matches. It fails as a trajectory (wrong
/// answer) and as a program (the first line is not parseable).
pub const DEMO_DEFAULT_RESPONSE: &str =
    "Thought: I am not sure how to solve this one.\nAction: COUNT()\nAnswer: unknown";

/// How a category's test-task program rule is gated.
enum Gate {
    /// The program is written from the task text alone.
    Open,
    /// The prompt must also show this marker in its example section.
    Marker(&'static str),
    /// No program rule exists: the category is never solved.
    Never,
}

/// Phrase unique to each category's task phrasing, used to label tasks.
const LABEL_PHRASES: [&str; 7] = [
    "Is there a",
    "How many",
    "Identify all objects",
    "Compare the number",
    "Fill the empty slot",
    "Remove every",
    "Replace the color",
];

/// Thought line for each category's scripted success trajectories.
const TRAIN_THOUGHTS: [&str; 7] = [
    "Look for an object with the requested color and shape.",
    "Filter to the requested color, then count.",
    "Filter the scene down to the requested shape.",
    "Count each color, then compare the two counts.",
    "Rewrite the slot with the requested attributes.",
    "Drop every object with the requested color.",
    "Rewrite the color of every matching shape.",
];

/// Insight each category's distillation round adds. The removal and
/// replacement texts double as the markers their program rules require.
const INSIGHT_OPS: [&str; 7] = [
    "ADD Answer yes or no after checking for a matching object.",
    "ADD Count only the objects that satisfy every stated attribute.",
    "ADD Identify by filtering on the stated shape and render the matches.",
    "ADD Compare the two counts and answer greater, less, or equal.",
    "ADD Fill the slot by rewriting it with the requested attributes.",
    "ADD For removal tasks apply REMOVE to the matching set so the leftover scene is the answer.",
    "ADD For replacement tasks apply REPLACE with the new color to every matching object.",
];

fn gate_for(category: usize) -> Gate {
    match category {
        0 | 1 => Gate::Open,
        2 => Gate::Marker("Action: FILTER(shape="),
        3 => Gate::Marker("Action: COMPARE("),
        4 => Gate::Never,
        5 => Gate::Marker("REMOVE to the matching set"),
        6 => Gate::Marker("REPLACE with the new color"),
        _ => unreachable!("seven categories"),
    }
}

/// `(?s)^header.*part.*part...` with every literal escaped.
fn anchored(header: &str, parts: &[&str]) -> MatchRule {
    let mut pattern = format!("(?s)^{}", regex::escape(header));
    for part in parts {
        pattern.push_str(".*");
        pattern.push_str(&regex::escape(part));
    }
    MatchRule::Regex(pattern)
}

fn rule(matcher: MatchRule, response: impl Into<String>) -> ScriptRule {
    ScriptRule { matcher, response: response.into(), max_uses: None }
}

/// A success trajectory for one train task: correct action, correct answer.
fn success_trajectory(st: &SuiteTask) -> String {
    let truth = st.task.truth.as_deref().expect("suite tasks carry truth");
    format!(
        "Thought: {}\nAction: {}\nObservation: {}\nAnswer: {}",
        TRAIN_THOUGHTS[st.category.0],
        st.spec.correct_program(),
        truth,
        truth,
    )
}

/// Builds the demo script for a suite drawn with `seed` and
/// `tasks_per_category`. The same seed must be used for the benchmark run
/// the script drives, since rules are keyed to exact task presentations.
pub fn build_demo_script(seed: u64, tasks_per_category: usize) -> Result<Script> {
    let suite = generate_suite(&SuiteConfig { seed, tasks_per_category })?;
    let (train, test) = split_suite(&suite, seed);
    let mut rules = Vec::new();

    for (category, phrase) in LABEL_PHRASES.iter().enumerate() {
        rules.push(rule(
            anchored("Label the task.", &[phrase]),
            DEFAULT_CATEGORY_LABELS[category],
        ));
    }

    rules.push(rule(
        anchored("Reflect on the failed attempt.", &[]),
        "The attempt misread the task; derive the operation from the task wording next time.",
    ));

    for (category, op) in INSIGHT_OPS.iter().enumerate() {
        let header = format!(
            "Distill insights for category {}.",
            DEFAULT_CATEGORY_LABELS[category]
        );
        rules.push(rule(anchored(&header, &[]), *op));
    }

    for category in 0..DEFAULT_CATEGORY_LABELS.len() {
        let solved = train
            .iter()
            .filter(|st| st.category.0 == category)
            .take(TRAIN_SUCCESSES_PER_CATEGORY);
        for st in solved {
            rules.push(rule(
                anchored("Solve the task step by step.", &[&st.task.presentation()]),
                success_trajectory(st),
            ));
        }
    }

    for st in &test {
        let response = st.spec.correct_program();
        match gate_for(st.category.0) {
            Gate::Open => rules.push(rule(
                anchored("Write a program for the task.", &[&st.task.presentation()]),
                response,
            )),
            Gate::Marker(marker) => rules.push(rule(
                anchored("Write a program for the task.", &[&st.task.presentation(), marker]),
                response,
            )),
            Gate::Never => {}
        }
    }

    Ok(Script { rules, default_response: DEMO_DEFAULT_RESPONSE.to_owned() })
}

/// The benchmark knobs the shipped demo runs with.
pub fn demo_bench_config() -> BenchConfig {
    BenchConfig {
        seed: DEMO_SEED,
        tasks_per_category: DEMO_TASKS_PER_CATEGORY,
        capacity: 16,
        dim: 256,
        retrieval_k: 4,
        theta: 0.3,
        deep_theta_gate: false,
        max_attempts: 2,
        max_tokens: 256,
        temperature: 0.0,
        seed_examples_per_category: 5,
        insight_initial_weight: 2,
        insight_max_per_category: 20,
        segment_len: 3,
        max_pairs: 8,
        max_groups: 4,
        insight_rounds: 1,
    }
}
