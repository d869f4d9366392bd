//! `ehc` — benchmark harness for the hierarchical agent-memory stack.
//!
//! Subcommands: `run` (end-to-end benchmark), `suite` (print the generated
//! task suite), `inspect` (summarize or query a store file), `seed` (create
//! a store from the exemplar corpus). Configuration comes from a flat
//! `key = value` file (`--config`); `--seed` and `--mode` override it.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 backend error,
//! 4 store-format error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ehc_core::bench::{run_bench, BenchContext, BenchMode};
use ehc_core::category::CategorySet;
use ehc_core::config::Settings;
use ehc_core::exec::ToyExecutor;
use ehc_core::experience::seed_memory;
use ehc_core::insight::InsightPool;
use ehc_core::memory::{HierarchicalMemory, Tier};
use ehc_core::store::{load_store, save_store, StoreOptions};
use ehc_core::suite::{generate_suite, SuiteConfig};
use ehc_core::trace::RunTrace;
use ehc_core::{EhcError, Result, DEFAULT_CATEGORY_LABELS};

#[derive(Parser)]
#[command(
    name = "ehc",
    version,
    about = "Benchmark harness for the hierarchical agent-memory stack"
)]
struct Cli {
    /// Config file (flat `key = value` text).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured suite seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Log per-stage events to stderr.
    #[arg(long, global = true)]
    trace: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark; print the report and write the report file.
    Run {
        /// Override the configured mode (baseline, hmr, hmr_toel).
        #[arg(long, value_name = "MODE")]
        mode: Option<String>,
    },
    /// Print the deterministic task suite, one tab-separated task per line.
    Suite,
    /// Summarize a store file, or dry-run a retrieval against it.
    Inspect {
        /// Store file; defaults to the configured `store_path`.
        store: Option<PathBuf>,
        /// Retrieval dry-run query text.
        #[arg(long, value_name = "TEXT")]
        query: Option<String>,
        /// Results to show for --query.
        #[arg(long, default_value_t = 5, value_name = "N")]
        k: usize,
    },
    /// Create a store file seeded with the exemplar corpus.
    Seed {
        /// Store file; defaults to the configured `store_path`.
        store: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        settings.bench.seed = seed;
    }
    match cli.command {
        Command::Run { mode } => run_command(&settings, mode, cli.trace),
        Command::Suite => suite_command(&settings),
        Command::Inspect { store, query, k } => {
            inspect_command(&settings, store, query, k)
        }
        Command::Seed { store } => seed_command(&settings, store),
    }
}

fn store_options(settings: &Settings) -> StoreOptions {
    StoreOptions {
        default_capacity: settings.bench.capacity,
        default_dim: settings.bench.dim,
        deep_theta_gate: settings.bench.deep_theta_gate,
        insight_initial_weight: settings.bench.insight_initial_weight,
        insight_max_per_category: settings.bench.insight_max_per_category,
    }
}

/// The store path a command should use: explicit argument first, then the
/// configured `store_path`.
fn resolve_store_path(settings: &Settings, arg: Option<PathBuf>) -> Result<PathBuf> {
    arg.or_else(|| settings.store_path.clone()).ok_or_else(|| {
        EhcError::Config(
            "no store path: pass one as an argument or set `store_path`".into(),
        )
    })
}

fn run_command(settings: &Settings, mode: Option<String>, trace_flag: bool) -> Result<()> {
    let mode = match mode {
        Some(text) => text.parse::<BenchMode>()?,
        None => settings.mode,
    };
    let embedder = settings.build_embedder(trace_flag)?;
    let backend = settings.build_backend(trace_flag)?;
    let categories = CategorySet::default_set(embedder.as_ref())?;
    let templates = settings.load_templates()?;
    let corpus = if mode == BenchMode::Baseline {
        None
    } else {
        Some(settings.load_seed_corpus()?)
    };
    let executor = ToyExecutor::default();
    let ctx = BenchContext {
        embedder: embedder.as_ref(),
        backend: backend.as_ref(),
        executor: &executor,
        categories: &categories,
        templates: &templates,
        seed_corpus: corpus.as_ref(),
    };

    let started = Instant::now();
    let mut trace = RunTrace::new();
    let outcome = run_bench(&settings.bench, mode, &ctx, &mut trace)?;
    let elapsed = started.elapsed();

    if trace_flag {
        for line in trace.render_lines() {
            eprintln!("trace: {line}");
        }
    }

    // stdout and the report file carry identical bytes; timing goes to
    // stderr so reruns of the same configuration stay diffable.
    let rendered = outcome.report.render();
    print!("{rendered}");
    std::fs::write(&settings.report_path, &rendered)?;
    eprintln!(
        "wrote {} in {} ms",
        settings.report_path.display(),
        elapsed.as_millis()
    );

    if let Some(store_path) = &settings.store_path {
        save_store(store_path, &outcome.memory, &outcome.pool)?;
        eprintln!("saved store {}", store_path.display());
    }
    Ok(())
}

fn suite_command(settings: &Settings) -> Result<()> {
    let suite = generate_suite(&SuiteConfig {
        seed: settings.bench.seed,
        tasks_per_category: settings.bench.tasks_per_category,
    })?;
    let mut out = String::new();
    for st in &suite {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            st.task.id,
            DEFAULT_CATEGORY_LABELS[st.category.0],
            st.task.content,
            st.task.payload,
            st.task.truth.as_deref().unwrap_or(""),
        ));
    }
    print!("{out}");
    Ok(())
}

fn inspect_command(
    settings: &Settings,
    store: Option<PathBuf>,
    query: Option<String>,
    k: usize,
) -> Result<()> {
    let path = resolve_store_path(settings, store)?;
    if !path.exists() {
        return Err(EhcError::StoreFormat {
            line: 0,
            msg: format!("no such store file {}", path.display()),
        });
    }
    let (memory, pool) = load_store(&path, &store_options(settings))?;

    match query {
        None => {
            let stats = memory.stats();
            println!("store = {}", path.display());
            println!("records = {}", memory.len());
            println!("tier.fast = {}", stats.fast_count);
            println!("tier.deep = {}", stats.deep_count);
            for (index, label) in DEFAULT_CATEGORY_LABELS.iter().enumerate() {
                let count = memory
                    .fast_records()
                    .chain(memory.deep_records())
                    .filter(|r| r.category.0 == index)
                    .count();
                println!("category.{label} = {count}");
            }
            for kind in ["seed", "success", "failure"] {
                let count = memory
                    .fast_records()
                    .chain(memory.deep_records())
                    .filter(|r| r.kind.as_str() == kind)
                    .count();
                println!("kind.{kind} = {count}");
            }
            println!("clock = {}", memory.clock());
            println!("evictions = {}", stats.evictions_total);
            println!("promotions = {}", stats.promotions_total);
            println!("insights.total = {}", pool.len());
        }
        Some(text) => {
            let embedder = settings.build_embedder(false)?;
            if embedder.dim() != memory.dim() {
                return Err(EhcError::Config(format!(
                    "embedder dimension {} does not match store dimension {}",
                    embedder.dim(),
                    memory.dim()
                )));
            }
            let embedding = embedder.embed(&text)?;
            let result = memory.peek(&embedding, None, k, settings.bench.theta);
            println!("store = {}", path.display());
            println!("query = {text}");
            if result.entries.is_empty() {
                println!("(no matches)");
            }
            for (rank, entry) in result.entries.iter().enumerate() {
                println!(
                    "{}. id={} sim={:.4} tier={} category={} kind={} | {}",
                    rank + 1,
                    entry.record.id,
                    entry.similarity,
                    match entry.tier {
                        Tier::Fast => "fast",
                        Tier::Deep => "deep",
                    },
                    DEFAULT_CATEGORY_LABELS[entry.record.category.0],
                    entry.record.kind.as_str(),
                    first_line_excerpt(&entry.record.content, 60),
                );
            }
        }
    }
    Ok(())
}

fn seed_command(settings: &Settings, store: Option<PathBuf>) -> Result<()> {
    let path = resolve_store_path(settings, store)?;
    let options = store_options(settings);
    let (mut memory, pool) = if path.exists() {
        load_store(&path, &options)?
    } else {
        (
            HierarchicalMemory::new(options.default_capacity, options.default_dim)?
                .with_deep_theta_gate(options.deep_theta_gate),
            InsightPool::new(options.insight_initial_weight)?
                .with_max_per_category(options.insight_max_per_category)?,
        )
    };
    if !memory.is_empty() {
        return Err(EhcError::Usage(format!(
            "store {} already holds {} records; seeding starts from an empty store",
            path.display(),
            memory.len()
        )));
    }
    let embedder = settings.build_embedder(false)?;
    let categories = CategorySet::default_set(embedder.as_ref())?;
    let corpus = settings.load_seed_corpus()?;
    let stored = seed_memory(
        &mut memory,
        &categories,
        &corpus,
        settings.bench.seed_examples_per_category,
        embedder.as_ref(),
    )?;
    save_store(&path, &memory, &pool)?;
    println!("store = {}", path.display());
    println!("seeded.records = {stored}");
    Ok(())
}

/// First line of `text`, truncated to at most `max` characters.
fn first_line_excerpt(text: &str, max: usize) -> String {
    let line = text.lines().next().unwrap_or("");
    if line.chars().count() <= max {
        line.to_owned()
    } else {
        let cut: String = line.chars().take(max).collect();
        format!("{cut}…")
    }
}
