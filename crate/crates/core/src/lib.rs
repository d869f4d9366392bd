//! Two-tier agent memory with experience collection, insight distillation,
//! and program-generation inference.
//!
//! The crate is organized around a small set of subsystems:
//!
//! | Module       | Responsibility                                              |
//! |--------------|--------------------------------------------------------------|
//! | [`embedding`]| Deterministic hashed bag-of-tokens vectors + cosine scoring  |
//! | [`category`] | Fixed, ordered task-category set and label classification   |
//! | [`memory`]   | Fast/deep two-tier record store with LRU demotion            |
//! | [`store`]    | Line-delimited on-disk snapshot of records and insights      |
//! | [`llm`]      | Completion backends: scripted (offline) and HTTP             |
//! | [`template`] | Placeholder-based prompt templates                           |
//! | [`exec`]     | Symbolic scenes and the toy program executor                 |
//! | [`experience`]| Multi-attempt task collection with reflection accumulation |
//! | [`insight`]  | Weighted insight pool and contrast-pair/group builders       |
//! | [`inference`]| Label → retrieve → assemble → generate → execute pipeline    |
//! | [`suite`]    | Seeded synthetic task-suite generation                       |
//! | [`bench`]    | Benchmark modes, metrics, and report files                   |
//! | [`config`]   | Flat dotted-key configuration files                          |
//!
//! Everything that feeds retrieval, sampling, or report files is deterministic:
//! identical inputs (including seeds) produce byte-identical outputs.

pub mod bench;
pub mod category;
pub mod config;
pub mod demo;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod experience;
pub mod inference;
pub mod insight;
pub mod llm;
pub mod memory;
pub mod store;
pub mod suite;
pub mod template;
pub mod trace;

pub use category::{CategoryId, CategorySet, Classified, DEFAULT_CATEGORY_LABELS};
pub use embedding::{cosine_sim, EmbeddingVector, Embedder, ReferenceEmbedder, DEFAULT_DIM};
pub use error::{EhcError, Result};
pub use memory::{
    HierarchicalMemory, MemoryRecord, PoolStats, RecordId, RecordKind, RetrievalEntry,
    RetrievalResult, StoreReceipt, Tier,
};
