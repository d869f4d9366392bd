//! Snapshot persistence.
//!
//! A snapshot is a UTF-8 text file of JSON lines:
//!
//! 1. a header carrying the memory geometry, the logical clock, and the
//!    lifetime counters;
//! 2. one line per memory record (both tiers), sorted by creation time then
//!    id, each tagged `"type":"record"` and carrying its tier;
//! 3. one line per insight, ascending id, tagged `"type":"insight"`.
//!
//! Rendering is canonical — the same state always produces the same bytes —
//! so save → load → save round-trips identically. Parse errors name the
//! 1-based line they occurred on. An empty or missing file loads as a fresh
//! empty state using the caller's defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::category::CategoryId;
use crate::error::{EhcError, Result};
use crate::insight::{Insight, InsightId, InsightPool};
use crate::memory::{HierarchicalMemory, MemoryRecord, RecordId, RecordKind, Tier};

/// The only snapshot format this build reads and writes.
pub const FORMAT_VERSION: u32 = 1;

/// Runtime knobs a snapshot does not persist, plus the geometry to use when
/// the file is empty or absent.
#[derive(Debug, Clone)]
pub struct StoreOptions {
    pub default_capacity: usize,
    pub default_dim: usize,
    pub deep_theta_gate: bool,
    pub insight_initial_weight: u32,
    pub insight_max_per_category: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dim: usize,
    capacity: usize,
    clock: u64,
    evictions_total: u64,
    promotions_total: u64,
    fast_hits: u64,
    deep_hits: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Record(RecordLine),
    Insight(InsightLine),
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: u64,
    category: usize,
    kind: String,
    content: String,
    embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reflections: Option<String>,
    created_at: u64,
    last_access: u64,
    tier: String,
}

#[derive(Serialize, Deserialize)]
struct InsightLine {
    id: u64,
    category: usize,
    text: String,
    weight: u32,
}

fn kind_from_str(s: &str) -> Option<RecordKind> {
    match s {
        "seed" => Some(RecordKind::Seed),
        "success" => Some(RecordKind::Success),
        "failure" => Some(RecordKind::Failure),
        _ => None,
    }
}

fn tier_from_str(s: &str) -> Option<Tier> {
    match s {
        "fast" => Some(Tier::Fast),
        "deep" => Some(Tier::Deep),
        _ => None,
    }
}

/// Serializes memory and insights to canonical snapshot text.
pub fn render_store(memory: &HierarchicalMemory, pool: &InsightPool) -> String {
    let stats = memory.stats();
    let header = Header {
        format_version: FORMAT_VERSION,
        dim: memory.dim(),
        capacity: memory.capacity(),
        clock: memory.clock(),
        evictions_total: stats.evictions_total,
        promotions_total: stats.promotions_total,
        fast_hits: stats.fast_hits,
        deep_hits: stats.deep_hits,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');

    let mut records: Vec<&MemoryRecord> =
        memory.fast_records().chain(memory.deep_records()).collect();
    records.sort_by_key(|r| (r.created_at, r.id));
    for record in records {
        let tier = memory.tier_of(record.id).expect("record is resident");
        let line = Line::Record(RecordLine {
            id: record.id.0,
            category: record.category.0,
            kind: record.kind.as_str().to_owned(),
            content: record.content.clone(),
            embedding: record.embedding.values().to_vec(),
            reflections: record.reflections.clone(),
            created_at: record.created_at,
            last_access: record.last_access,
            tier: tier.as_str().to_owned(),
        });
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }

    for insight in pool.all() {
        let line = Line::Insight(InsightLine {
            id: insight.id.0,
            category: insight.category.0,
            text: insight.text.clone(),
            weight: insight.weight,
        });
        out.push_str(&serde_json::to_string(&line).expect("insight serializes"));
        out.push('\n');
    }
    out
}

fn fresh(options: &StoreOptions) -> Result<(HierarchicalMemory, InsightPool)> {
    let memory = HierarchicalMemory::new(options.default_capacity, options.default_dim)?
        .with_deep_theta_gate(options.deep_theta_gate);
    let pool = InsightPool::new(options.insight_initial_weight)?
        .with_max_per_category(options.insight_max_per_category)?;
    Ok((memory, pool))
}

fn bad(line: usize, msg: impl Into<String>) -> EhcError {
    EhcError::StoreFormat { line, msg: msg.into() }
}

/// Parses snapshot text into a memory and insight pool. Empty text loads
/// as a fresh state with the caller's defaults.
pub fn parse_store(
    text: &str,
    options: &StoreOptions,
) -> Result<(HierarchicalMemory, InsightPool)> {
    if text.trim().is_empty() {
        return fresh(options);
    }
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().expect("non-empty text has a first line");
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| bad(1, format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(
            1,
            format!(
                "unsupported format version {} (this build reads {FORMAT_VERSION})",
                header.format_version
            ),
        ));
    }
    let mut memory = HierarchicalMemory::new(header.capacity, header.dim)
        .map_err(|e| bad(1, e.to_string()))?
        .with_deep_theta_gate(options.deep_theta_gate);
    let mut pool = InsightPool::new(options.insight_initial_weight)?
        .with_max_per_category(options.insight_max_per_category)?;

    for (index, raw) in lines {
        let line_no = index + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|e| bad(line_no, e.to_string()))?;
        match line {
            Line::Record(r) => {
                let kind = kind_from_str(&r.kind)
                    .ok_or_else(|| bad(line_no, format!("unknown record kind {:?}", r.kind)))?;
                let tier = tier_from_str(&r.tier)
                    .ok_or_else(|| bad(line_no, format!("unknown tier {:?}", r.tier)))?;
                if r.embedding.len() != header.dim {
                    return Err(bad(
                        line_no,
                        format!(
                            "embedding has {} values, header says dim {}",
                            r.embedding.len(),
                            header.dim
                        ),
                    ));
                }
                if r.created_at > header.clock || r.last_access > header.clock {
                    return Err(bad(
                        line_no,
                        format!("record {} has timestamps ahead of the clock", r.id),
                    ));
                }
                let mut record = MemoryRecord::new(
                    RecordId(r.id),
                    CategoryId(r.category),
                    kind,
                    r.content,
                    crate::embedding::EmbeddingVector::from_values(r.embedding),
                    r.reflections,
                )
                .map_err(|e| bad(line_no, e.to_string()))?;
                record.created_at = r.created_at;
                record.last_access = r.last_access;
                memory
                    .insert_restored(record, tier)
                    .map_err(|e| bad(line_no, e.to_string()))?;
            }
            Line::Insight(i) => {
                pool.insert_restored(Insight {
                    id: InsightId(i.id),
                    category: CategoryId(i.category),
                    text: i.text,
                    weight: i.weight,
                })
                .map_err(|e| bad(line_no, e.to_string()))?;
            }
        }
    }
    let fast_count = memory.fast_records().count();
    if fast_count > header.capacity {
        return Err(bad(
            1,
            format!("{fast_count} fast records exceed capacity {}", header.capacity),
        ));
    }
    memory.restore_counters(
        header.clock,
        header.evictions_total,
        header.promotions_total,
        header.fast_hits,
        header.deep_hits,
    );
    Ok((memory, pool))
}

/// Loads a snapshot file; a missing file loads as a fresh empty state.
pub fn load_store(path: &Path, options: &StoreOptions) -> Result<(HierarchicalMemory, InsightPool)> {
    if !path.exists() {
        return fresh(options);
    }
    let text = std::fs::read_to_string(path)?;
    parse_store(&text, options)
}

/// Writes a snapshot file.
pub fn save_store(path: &Path, memory: &HierarchicalMemory, pool: &InsightPool) -> Result<()> {
    std::fs::write(path, render_store(memory, pool))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedder, ReferenceEmbedder};
    use crate::insight::InsightOp;

    fn options() -> StoreOptions {
        StoreOptions {
            default_capacity: 4,
            default_dim: 256,
            deep_theta_gate: false,
            insight_initial_weight: 2,
            insight_max_per_category: 20,
        }
    }

    fn populated() -> (HierarchicalMemory, InsightPool) {
        let embedder = ReferenceEmbedder::default();
        let mut memory = HierarchicalMemory::new(4, 256).unwrap();
        for (id, text, kind) in [
            (1, "count the red cubes", RecordKind::Seed),
            (2, "is there a ball", RecordKind::Success),
            (3, "remove the pyramids", RecordKind::Failure),
            (4, "compare blue to green", RecordKind::Success),
            (5, "replace cube colors", RecordKind::Seed),
            (6, "how many big objects", RecordKind::Success),
        ] {
            let reflections =
                (kind == RecordKind::Failure).then(|| "look before counting".to_owned());
            let record = MemoryRecord::new(
                RecordId(id),
                CategoryId((id as usize) % 7),
                kind,
                format!("Action: DO()\nAnswer: {text}"),
                embedder.embed(text).unwrap(),
                reflections,
            )
            .unwrap();
            memory.store(record).unwrap();
        }
        // Touch the pools so counters and tiers are non-trivial.
        let query = embedder.embed("count the red cubes").unwrap();
        memory.retrieve(&query, None, 2, 0.3);
        let mut pool = InsightPool::new(2).unwrap();
        pool.apply(CategoryId(1), &InsightOp::Add { text: "count after filtering".into() });
        pool.apply(CategoryId(5), &InsightOp::Add { text: "remove, then render".into() });
        pool.apply(CategoryId(1), &InsightOp::Upvote { id: InsightId(1) });
        (memory, pool)
    }

    #[test]
    fn empty_text_loads_fresh_defaults() {
        let (memory, pool) = parse_store("", &options()).unwrap();
        assert!(memory.is_empty());
        assert_eq!(memory.capacity(), 4);
        assert_eq!(memory.dim(), 256);
        assert!(pool.is_empty());
    }

    #[test]
    fn missing_file_loads_fresh_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let (memory, pool) = load_store(&dir.path().join("absent.jsonl"), &options()).unwrap();
        assert!(memory.is_empty() && pool.is_empty());
    }

    #[test]
    fn round_trip_preserves_state_and_bytes() {
        let (memory, pool) = populated();
        let first = render_store(&memory, &pool);
        let (restored_memory, restored_pool) = parse_store(&first, &options()).unwrap();
        let second = render_store(&restored_memory, &restored_pool);
        assert_eq!(first, second);
        // Geometry, counters, and tiers all survive.
        assert_eq!(restored_memory.clock(), memory.clock());
        assert_eq!(restored_memory.stats(), memory.stats());
        for record in memory.fast_records().chain(memory.deep_records()) {
            assert_eq!(restored_memory.tier_of(record.id), memory.tier_of(record.id));
            assert_eq!(restored_memory.get(record.id).unwrap(), record);
        }
        assert_eq!(restored_pool.get(InsightId(1)).unwrap().weight, 3);
    }

    #[test]
    fn restored_memory_retrieves_identically() {
        let (memory, pool) = populated();
        let (mut restored, _) = parse_store(&render_store(&memory, &pool), &options()).unwrap();
        let mut original = memory;
        let embedder = ReferenceEmbedder::default();
        let query = embedder.embed("compare blue to green").unwrap();
        let a = original.retrieve(&query, None, 3, 0.2);
        let b = restored.retrieve(&query, None, 3, 0.2);
        let view = |r: &crate::memory::RetrievalResult| -> Vec<(u64, f64, Tier)> {
            r.entries.iter().map(|e| (e.record.id.0, e.similarity, e.tier)).collect()
        };
        assert_eq!(view(&a), view(&b));
        assert_eq!(original.clock(), restored.clock());
    }

    #[test]
    fn save_and_load_round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot.jsonl");
        let (memory, pool) = populated();
        save_store(&path, &memory, &pool).unwrap();
        let (restored_memory, restored_pool) = load_store(&path, &options()).unwrap();
        save_store(&path, &restored_memory, &restored_pool).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            render_store(&memory, &pool)
        );
    }

    #[test]
    fn records_are_rendered_in_creation_order() {
        let (memory, pool) = populated();
        let text = render_store(&memory, &pool);
        let created: Vec<u64> = text
            .lines()
            .skip(1)
            .filter(|l| l.contains("\"type\":\"record\""))
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["created_at"].as_u64().unwrap())
            .collect();
        let mut sorted = created.clone();
        sorted.sort_unstable();
        assert_eq!(created, sorted);
    }

    #[test]
    fn header_errors_name_line_one() {
        let err = parse_store("not json", &options()).unwrap_err();
        assert!(matches!(err, EhcError::StoreFormat { line: 1, .. }), "{err}");
        let old = r#"{"format_version":9,"dim":8,"capacity":4,"clock":0,"evictions_total":0,"promotions_total":0,"fast_hits":0,"deep_hits":0}"#;
        let err = parse_store(old, &options()).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn body_errors_name_their_line() {
        let (memory, pool) = populated();
        let mut text = render_store(&memory, &pool);
        text.push_str("{\"type\":\"record\",\"garbage\":true}\n");
        let total_lines = text.lines().count();
        let err = parse_store(&text, &options()).unwrap_err();
        let EhcError::StoreFormat { line, .. } = err else { panic!("{err}") };
        assert_eq!(line, total_lines);
    }

    #[test]
    fn wrong_embedding_width_is_rejected_with_its_line() {
        let (memory, pool) = populated();
        let mut lines: Vec<String> = render_store(&memory, &pool).lines().map(String::from).collect();
        let mut value: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        value["embedding"] = serde_json::json!([1.0, 2.0]);
        lines[1] = value.to_string();
        let err = parse_store(&lines.join("\n"), &options()).unwrap_err();
        let EhcError::StoreFormat { line, msg } = err else { panic!("{err}") };
        assert_eq!(line, 2);
        assert!(msg.contains("dim 256"), "{msg}");
    }

    #[test]
    fn duplicate_ids_and_bad_enums_are_rejected() {
        let (memory, pool) = populated();
        let rendered = render_store(&memory, &pool);
        let record_line = rendered.lines().nth(1).unwrap();
        let duplicated = format!("{rendered}{record_line}\n");
        let err = parse_store(&duplicated, &options()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let mut value: serde_json::Value = serde_json::from_str(record_line).unwrap();
        value["kind"] = serde_json::json!("triumph");
        let mut lines: Vec<String> = rendered.lines().map(String::from).collect();
        lines[1] = value.to_string();
        let err = parse_store(&lines.join("\n"), &options()).unwrap_err();
        assert!(err.to_string().contains("triumph"), "{err}");
    }

    #[test]
    fn timestamps_ahead_of_the_clock_are_rejected() {
        let (memory, pool) = populated();
        let rendered = render_store(&memory, &pool);
        let mut lines: Vec<String> = rendered.lines().map(String::from).collect();
        let mut value: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        value["last_access"] = serde_json::json!(10_000);
        lines[1] = value.to_string();
        let err = parse_store(&lines.join("\n"), &options()).unwrap_err();
        assert!(err.to_string().contains("ahead of the clock"), "{err}");
    }

    #[test]
    fn overfull_fast_tier_is_rejected() {
        let embedder = ReferenceEmbedder::default();
        let mut memory = HierarchicalMemory::new(8, 256).unwrap();
        for id in 1..=5 {
            let record = MemoryRecord::new(
                RecordId(id),
                CategoryId(0),
                RecordKind::Seed,
                "x".into(),
                embedder.embed(&format!("record {id}")).unwrap(),
                None,
            )
            .unwrap();
            memory.store(record).unwrap();
        }
        let pool = InsightPool::new(2).unwrap();
        // Shrink the claimed capacity below the resident fast count.
        let mut lines: Vec<String> =
            render_store(&memory, &pool).lines().map(String::from).collect();
        let mut header: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        header["capacity"] = serde_json::json!(3);
        lines[0] = header.to_string();
        let err = parse_store(&lines.join("\n"), &options()).unwrap_err();
        assert!(err.to_string().contains("exceed capacity"), "{err}");
    }

    #[test]
    fn blank_lines_between_entries_are_tolerated() {
        let (memory, pool) = populated();
        let spaced = render_store(&memory, &pool).replace('\n', "\n\n");
        let (restored, restored_pool) = parse_store(&spaced, &options()).unwrap();
        assert_eq!(render_store(&restored, &restored_pool), render_store(&memory, &pool));
    }
}
