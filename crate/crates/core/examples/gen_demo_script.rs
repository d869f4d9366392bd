//! Regenerates the shipped demo script.
//!
//! Run after changing the suite generator, the split, or the demo script
//! builder:
//!
//! ```text
//! cargo run -p ehc-core --example gen_demo_script
//! ```
//!
//! Rewrites `assets/demo_script.json` at the repository root. A test guards
//! the file against drifting from the generator.

use ehc_core::demo::{build_demo_script, DEMO_SEED, DEMO_TASKS_PER_CATEGORY};

fn main() {
    let script = build_demo_script(DEMO_SEED, DEMO_TASKS_PER_CATEGORY)
        .expect("demo script builds");
    let mut json = serde_json::to_string_pretty(&script).expect("script serializes");
    json.push('\n');
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/demo_script.json");
    std::fs::write(path, json).expect("write demo script");
    println!("wrote {path} ({} rules)", script.rules.len());
}
