//! Insight distillation.
//!
//! Each category owns a small pool of weighted, natural-language insights.
//! After experience collection, the engine shows the model contrasting
//! material — failure/success pairs from the category and success groups
//! from neighboring categories — and applies the edit operations it replies
//! with: `ADD`, `EDIT`, `UPVOTE`, `DOWNVOTE`. Weights start at a configured
//! initial value, votes move them by one, and an insight downvoted to zero
//! is removed on the spot. Pools are capped per category; overflow evicts
//! the lowest-weighted insight (largest id on ties).

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::category::{CategoryId, CategorySet};
use crate::error::{EhcError, Result};
use crate::experience::{PromptTemplates, Trajectory};
use crate::llm::Completer;
use crate::memory::{HierarchicalMemory, MemoryRecord, RecordId, RecordKind};
use crate::trace::{LlmCallKind, RunTrace, TraceEvent};

/// Default weight for a freshly added insight.
pub const DEFAULT_INITIAL_WEIGHT: u32 = 2;
/// Default cap on insights per category.
pub const DEFAULT_MAX_PER_CATEGORY: usize = 20;
/// Default number of trajectory steps excerpted into contrast material.
pub const DEFAULT_SEGMENT_LEN: usize = 3;
/// Default cap on failure/success pairs per prompt.
pub const DEFAULT_MAX_PAIRS: usize = 8;
/// Default cap on cross-category groups per prompt.
pub const DEFAULT_MAX_GROUPS: usize = 4;
/// Default distillation rounds per category.
pub const DEFAULT_ROUNDS: u32 = 2;

/// Pool-assigned insight identifier, unique across categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InsightId(pub u64);

impl std::fmt::Display for InsightId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One weighted insight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insight {
    pub id: InsightId,
    pub category: CategoryId,
    pub text: String,
    pub weight: u32,
}

/// A single edit operation parsed from a model reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsightOp {
    Add { text: String },
    Edit { id: InsightId, text: String },
    Upvote { id: InsightId },
    Downvote { id: InsightId },
}

/// What applying one operation did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpEffect {
    Added { id: InsightId, evicted: Vec<InsightId> },
    Edited { id: InsightId },
    Reweighted { id: InsightId, weight: u32 },
    Removed { id: InsightId },
    Skipped { warning: String },
}

impl OpEffect {
    pub fn applied(&self) -> bool {
        !matches!(self, OpEffect::Skipped { .. })
    }
}

/// The weighted insight pool, all categories together.
#[derive(Debug, Clone)]
pub struct InsightPool {
    insights: BTreeMap<InsightId, Insight>,
    next_id: u64,
    initial_weight: u32,
    max_per_category: usize,
}

impl InsightPool {
    /// An empty pool whose future additions start at `initial_weight`.
    pub fn new(initial_weight: u32) -> Result<Self> {
        if initial_weight == 0 {
            return Err(EhcError::Config(
                "initial insight weight must be at least 1".into(),
            ));
        }
        Ok(Self {
            insights: BTreeMap::new(),
            next_id: 1,
            initial_weight,
            max_per_category: DEFAULT_MAX_PER_CATEGORY,
        })
    }

    pub fn with_max_per_category(mut self, max: usize) -> Result<Self> {
        if max == 0 {
            return Err(EhcError::Config(
                "insight cap per category must be at least 1".into(),
            ));
        }
        self.max_per_category = max;
        Ok(self)
    }

    pub fn initial_weight(&self) -> u32 {
        self.initial_weight
    }

    pub fn len(&self) -> usize {
        self.insights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insights.is_empty()
    }

    pub fn get(&self, id: InsightId) -> Option<&Insight> {
        self.insights.get(&id)
    }

    /// All insights, ascending id.
    pub fn all(&self) -> impl Iterator<Item = &Insight> {
        self.insights.values()
    }

    /// One category's insights, ascending id.
    pub fn for_category(&self, category: CategoryId) -> impl Iterator<Item = &Insight> {
        self.all().filter(move |i| i.category == category)
    }

    /// One category's insights ordered for prompting: weight descending,
    /// smaller id first on ties.
    pub fn ranked_for_category(&self, category: CategoryId) -> Vec<&Insight> {
        let mut ranked: Vec<&Insight> = self.for_category(category).collect();
        ranked.sort_by(|a, b| b.weight.cmp(&a.weight).then(a.id.cmp(&b.id)));
        ranked
    }

    /// Applies one operation for `category`. Operations naming an id that
    /// does not exist in that category are skipped with a warning rather
    /// than failing the round.
    pub fn apply(&mut self, category: CategoryId, op: &InsightOp) -> OpEffect {
        match op {
            InsightOp::Add { text } => {
                let id = InsightId(self.next_id);
                self.next_id += 1;
                self.insights.insert(
                    id,
                    Insight { id, category, text: text.clone(), weight: self.initial_weight },
                );
                let evicted = self.enforce_cap(category);
                OpEffect::Added { id, evicted }
            }
            InsightOp::Edit { id, text } => match self.get_in_category(*id, category) {
                Ok(()) => {
                    self.insights.get_mut(id).expect("checked").text = text.clone();
                    OpEffect::Edited { id: *id }
                }
                Err(warning) => OpEffect::Skipped { warning },
            },
            InsightOp::Upvote { id } => match self.get_in_category(*id, category) {
                Ok(()) => {
                    let insight = self.insights.get_mut(id).expect("checked");
                    insight.weight += 1;
                    OpEffect::Reweighted { id: *id, weight: insight.weight }
                }
                Err(warning) => OpEffect::Skipped { warning },
            },
            InsightOp::Downvote { id } => match self.get_in_category(*id, category) {
                Ok(()) => {
                    let insight = self.insights.get_mut(id).expect("checked");
                    insight.weight -= 1;
                    if insight.weight == 0 {
                        self.insights.remove(id);
                        OpEffect::Removed { id: *id }
                    } else {
                        OpEffect::Reweighted { id: *id, weight: self.insights[id].weight }
                    }
                }
                Err(warning) => OpEffect::Skipped { warning },
            },
        }
    }

    fn get_in_category(&self, id: InsightId, category: CategoryId) -> std::result::Result<(), String> {
        match self.insights.get(&id) {
            Some(i) if i.category == category => Ok(()),
            Some(_) => Err(format!("insight #{id} belongs to another category; skipping")),
            None => Err(format!("no insight #{id}; skipping")),
        }
    }

    /// Evicts lowest-weight insights (largest id first on ties) until the
    /// category is back under its cap. Returns the evicted ids.
    fn enforce_cap(&mut self, category: CategoryId) -> Vec<InsightId> {
        let mut evicted = Vec::new();
        while self.for_category(category).count() > self.max_per_category {
            let victim = self
                .for_category(category)
                .min_by(|a, b| a.weight.cmp(&b.weight).then(b.id.cmp(&a.id)))
                .map(|i| i.id)
                .expect("category is over cap, so non-empty");
            self.insights.remove(&victim);
            evicted.push(victim);
        }
        evicted
    }

    /// Re-inserts a previously saved insight verbatim, keeping id allocation
    /// ahead of it. Duplicate ids are rejected.
    pub(crate) fn insert_restored(&mut self, insight: Insight) -> Result<()> {
        if self.insights.contains_key(&insight.id) {
            return Err(EhcError::Usage(format!("duplicate insight id {}", insight.id)));
        }
        self.next_id = self.next_id.max(insight.id.0 + 1);
        self.insights.insert(insight.id, insight);
        Ok(())
    }
}

/// Parses edit operations from a model reply, one per line. Keywords are
/// case-insensitive and ids may carry a leading `#`. Blank lines are
/// skipped silently; anything else unparseable produces a warning and is
/// skipped. Vote lines may carry trailing commentary after the id.
pub fn parse_ops(text: &str) -> (Vec<InsightOp>, Vec<String>) {
    let mut ops = Vec::new();
    let mut warnings = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (keyword, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        match keyword.to_ascii_uppercase().as_str() {
            "ADD" => {
                if rest.is_empty() {
                    warnings.push(format!("ADD without text: {line:?}"));
                } else {
                    ops.push(InsightOp::Add { text: rest.to_owned() });
                }
            }
            "EDIT" => {
                let Some((id_token, text)) = rest.split_once(char::is_whitespace) else {
                    warnings.push(format!("EDIT without new text: {line:?}"));
                    continue;
                };
                match (parse_id(id_token), text.trim()) {
                    (Some(id), text) if !text.is_empty() => {
                        ops.push(InsightOp::Edit { id, text: text.to_owned() });
                    }
                    (None, _) => warnings.push(format!("EDIT with bad id: {line:?}")),
                    _ => warnings.push(format!("EDIT without new text: {line:?}")),
                }
            }
            "UPVOTE" | "DOWNVOTE" => {
                let id_token = rest.split_whitespace().next().unwrap_or("");
                match parse_id(id_token) {
                    Some(id) if keyword.eq_ignore_ascii_case("UPVOTE") => {
                        ops.push(InsightOp::Upvote { id });
                    }
                    Some(id) => ops.push(InsightOp::Downvote { id }),
                    None => warnings.push(format!("vote with bad id: {line:?}")),
                }
            }
            _ => warnings.push(format!("unrecognized operation: {line:?}")),
        }
    }
    (ops, warnings)
}

fn parse_id(token: &str) -> Option<InsightId> {
    token
        .strip_prefix('#')
        .unwrap_or(token)
        .parse::<u64>()
        .ok()
        .map(InsightId)
}

/// A same-category contrast: one failed attempt against one success.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastPair {
    pub failure_id: RecordId,
    pub success_id: RecordId,
    pub failure_excerpt: String,
    pub failure_reflections: String,
    pub success_excerpt: String,
}

/// A cross-category group: a success from the category under distillation
/// next to a success from a partner category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossGroup {
    pub own_id: RecordId,
    pub partner_category: CategoryId,
    pub partner_id: RecordId,
    pub own_excerpt: String,
    pub partner_excerpt: String,
}

/// A contiguous run of up to `segment_len` steps from the record's
/// trajectory, start drawn from the rng. The answer line is kept when the
/// excerpt reaches the final step.
fn excerpt(record: &MemoryRecord, segment_len: usize, rng: &mut impl Rng) -> String {
    debug_assert!(segment_len >= 1);
    let trajectory = Trajectory::parse(&record.content);
    let n = trajectory.steps.len();
    let len = segment_len.min(n);
    let start = rng.gen_range(0..=(n - len));
    let window = Trajectory {
        steps: trajectory.steps[start..start + len].to_vec(),
        final_answer: if start + len == n {
            trajectory.final_answer.clone()
        } else {
            String::new()
        },
    };
    window.render()
}

fn sorted_by_id<'a>(records: &[&'a MemoryRecord]) -> Vec<&'a MemoryRecord> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.id);
    sorted
}

/// Builds up to `max_pairs` contrast pairs: failures in ascending-id order,
/// each matched with a drawn success. Per pair the rng is consumed in a
/// fixed order — success index, success excerpt start, failure excerpt
/// start — so a seed pins the output exactly.
pub fn build_intra_pairs(
    successes: &[&MemoryRecord],
    failures: &[&MemoryRecord],
    segment_len: usize,
    max_pairs: usize,
    rng: &mut impl Rng,
) -> Vec<ContrastPair> {
    let successes = sorted_by_id(successes);
    let failures = sorted_by_id(failures);
    if successes.is_empty() {
        return Vec::new();
    }
    let mut pairs = Vec::new();
    for failure in failures.into_iter().take(max_pairs) {
        let success = successes[rng.gen_range(0..successes.len())];
        let success_excerpt = excerpt(success, segment_len, rng);
        let failure_excerpt = excerpt(failure, segment_len, rng);
        pairs.push(ContrastPair {
            failure_id: failure.id,
            success_id: success.id,
            failure_excerpt,
            failure_reflections: failure.reflections.clone().unwrap_or_default(),
            success_excerpt,
        });
    }
    pairs
}

/// Builds up to `max_groups` cross-category groups. Partner categories are
/// the other categories that have successes, visited round-robin in
/// ascending id order. Per group the rng is consumed in a fixed order — own
/// index, own start, partner index, partner start.
pub fn build_cross_groups(
    category: CategoryId,
    successes_by_category: &BTreeMap<CategoryId, Vec<&MemoryRecord>>,
    segment_len: usize,
    max_groups: usize,
    rng: &mut impl Rng,
) -> Vec<CrossGroup> {
    let own: Vec<&MemoryRecord> = successes_by_category
        .get(&category)
        .map(|v| sorted_by_id(v))
        .unwrap_or_default();
    if own.is_empty() {
        return Vec::new();
    }
    let partners: Vec<CategoryId> = successes_by_category
        .iter()
        .filter(|(c, v)| **c != category && !v.is_empty())
        .map(|(c, _)| *c)
        .collect();
    if partners.is_empty() {
        return Vec::new();
    }
    let mut groups = Vec::new();
    for g in 0..max_groups {
        let partner_category = partners[g % partners.len()];
        let partner_pool = sorted_by_id(&successes_by_category[&partner_category]);
        let own_record = own[rng.gen_range(0..own.len())];
        let own_excerpt = excerpt(own_record, segment_len, rng);
        let partner_record = partner_pool[rng.gen_range(0..partner_pool.len())];
        let partner_excerpt = excerpt(partner_record, segment_len, rng);
        groups.push(CrossGroup {
            own_id: own_record.id,
            partner_category,
            partner_id: partner_record.id,
            own_excerpt,
            partner_excerpt,
        });
    }
    groups
}

/// `{insights}` section of the distillation prompt: `#id [weight w] text`
/// lines in ascending-id order, or the `(no insights)` literal.
pub fn render_insight_list(pool: &InsightPool, category: CategoryId) -> String {
    let lines: Vec<String> = pool
        .for_category(category)
        .map(|i| format!("#{} [weight {}] {}", i.id, i.weight, i.text))
        .collect();
    if lines.is_empty() {
        "(no insights)".to_owned()
    } else {
        lines.join("\n")
    }
}

/// `{pairs}` section: numbered failure/success blocks, or `(none)`.
pub fn render_pairs(pairs: &[ContrastPair]) -> String {
    if pairs.is_empty() {
        return "(none)".to_owned();
    }
    pairs
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let reflections = if p.failure_reflections.is_empty() {
                "(none)"
            } else {
                &p.failure_reflections
            };
            format!(
                "Pair {}:\nFailed attempt (record #{}):\n{}\nReflections:\n{}\nSuccessful attempt (record #{}):\n{}",
                n + 1,
                p.failure_id,
                p.failure_excerpt,
                reflections,
                p.success_id,
                p.success_excerpt,
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// `{groups}` section: numbered own/partner blocks, or `(none)`.
pub fn render_groups(groups: &[CrossGroup], categories: &CategorySet) -> String {
    if groups.is_empty() {
        return "(none)".to_owned();
    }
    groups
        .iter()
        .enumerate()
        .map(|(n, g)| {
            format!(
                "Group {} (with {}):\nFrom this category (record #{}):\n{}\nFrom {} (record #{}):\n{}",
                n + 1,
                categories.label(g.partner_category),
                g.own_id,
                g.own_excerpt,
                categories.label(g.partner_category),
                g.partner_id,
                g.partner_excerpt,
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Outcome of distilling one category.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DistillationSummary {
    pub rounds_run: u32,
    pub ops_applied: usize,
    pub warnings: Vec<String>,
}

/// Distillation wiring: model, templates, and contrast-material knobs.
pub struct InsightEngine<'a> {
    pub llm: Completer<'a>,
    pub templates: &'a PromptTemplates,
    pub categories: &'a CategorySet,
    /// Steps per excerpt.
    pub segment_len: usize,
    pub max_pairs: usize,
    pub max_groups: usize,
    /// Distillation rounds per category.
    pub rounds: u32,
}

impl InsightEngine<'_> {
    fn validate(&self) -> Result<()> {
        if self.segment_len == 0 {
            return Err(EhcError::Config("segment length must be at least 1".into()));
        }
        Ok(())
    }

    /// Collected experiences (never seed exemplars) for one category,
    /// split by outcome, drawn from both memory tiers.
    fn experiences<'m>(
        &self,
        memory: &'m HierarchicalMemory,
        category: CategoryId,
    ) -> (Vec<&'m MemoryRecord>, Vec<&'m MemoryRecord>) {
        let mut successes = Vec::new();
        let mut failures = Vec::new();
        for record in memory.fast_records().chain(memory.deep_records()) {
            if record.category != category {
                continue;
            }
            match record.kind {
                RecordKind::Success => successes.push(record),
                RecordKind::Failure => failures.push(record),
                RecordKind::Seed => {}
            }
        }
        (sorted_by_id(&successes), sorted_by_id(&failures))
    }

    fn successes_by_category<'m>(
        &self,
        memory: &'m HierarchicalMemory,
    ) -> BTreeMap<CategoryId, Vec<&'m MemoryRecord>> {
        let mut map: BTreeMap<CategoryId, Vec<&'m MemoryRecord>> = BTreeMap::new();
        for record in memory.fast_records().chain(memory.deep_records()) {
            if record.kind == RecordKind::Success {
                map.entry(record.category).or_default().push(record);
            }
        }
        map
    }

    /// Runs the configured number of distillation rounds for one category.
    /// Each round rebuilds contrast material with fresh draws from `rng`,
    /// prompts the model, and applies the operations it returns.
    pub fn distill_category(
        &self,
        pool: &mut InsightPool,
        memory: &HierarchicalMemory,
        category: CategoryId,
        rng: &mut ChaCha8Rng,
        trace: &mut RunTrace,
    ) -> Result<DistillationSummary> {
        self.validate()?;
        let label = self.categories.label(category);
        let (successes, failures) = self.experiences(memory, category);
        let by_category = self.successes_by_category(memory);
        let mut summary = DistillationSummary::default();

        for round in 0..self.rounds {
            let pairs =
                build_intra_pairs(&successes, &failures, self.segment_len, self.max_pairs, rng);
            let groups =
                build_cross_groups(category, &by_category, self.segment_len, self.max_groups, rng);
            let values: BTreeMap<&str, String> = [
                ("category", label.to_owned()),
                ("insights", render_insight_list(pool, category)),
                ("pairs", render_pairs(&pairs)),
                ("groups", render_groups(&groups, self.categories)),
            ]
            .into();
            let prompt = self.templates.insight.render(&values)?;
            let completion = self.llm.complete(&prompt).map_err(|e| {
                EhcError::Backend(format!("insight round {round} for category {label}: {e}"))
            })?;
            trace.push(TraceEvent::LlmCall {
                kind: LlmCallKind::Insight,
                prompt,
                response: completion.clone(),
            });
            let (ops, mut warnings) = parse_ops(&completion);
            let mut applied = 0;
            for op in &ops {
                match pool.apply(category, op) {
                    OpEffect::Skipped { warning } => warnings.push(warning),
                    _ => applied += 1,
                }
            }
            trace.push(TraceEvent::InsightRound {
                round,
                ops_applied: applied,
                warnings: warnings.clone(),
            });
            summary.rounds_run += 1;
            summary.ops_applied += applied;
            summary.warnings.extend(warnings);
        }
        Ok(summary)
    }

    /// Distills every category that has at least one collected experience,
    /// in ascending category order. Per-category randomness comes from one
    /// seed with the category index as the stream, so categories are
    /// reproducible independently of each other.
    pub fn distill_all(
        &self,
        pool: &mut InsightPool,
        memory: &HierarchicalMemory,
        seed: u64,
        trace: &mut RunTrace,
    ) -> Result<DistillationSummary> {
        self.validate()?;
        let mut total = DistillationSummary::default();
        for category in self.categories.ids() {
            let (successes, failures) = self.experiences(memory, category);
            if successes.is_empty() && failures.is_empty() {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(category.0 as u64);
            let summary = self.distill_category(pool, memory, category, &mut rng, trace)?;
            total.rounds_run += summary.rounds_run;
            total.ops_applied += summary.ops_applied;
            total.warnings.extend(summary.warnings);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::CategorySet;
    use crate::embedding::{Embedder, ReferenceEmbedder};
    use crate::llm::{CompletionBackend, MatchRule, Script, ScriptRule, ScriptedBackend};

    fn pool() -> InsightPool {
        InsightPool::new(2).unwrap()
    }

    const CAT: CategoryId = CategoryId(1);
    const OTHER: CategoryId = CategoryId(2);

    #[test]
    fn zero_initial_weight_is_rejected() {
        assert!(matches!(InsightPool::new(0), Err(EhcError::Config(_))));
        assert!(InsightPool::new(1).is_ok());
    }

    #[test]
    fn add_assigns_sequential_ids_and_initial_weight() {
        let mut pool = pool();
        let OpEffect::Added { id: a, .. } = pool.apply(CAT, &InsightOp::Add { text: "x".into() })
        else {
            panic!("expected Added")
        };
        let OpEffect::Added { id: b, .. } = pool.apply(CAT, &InsightOp::Add { text: "y".into() })
        else {
            panic!("expected Added")
        };
        assert_eq!((a, b), (InsightId(1), InsightId(2)));
        assert_eq!(pool.get(a).unwrap().weight, 2);
        assert_eq!(pool.get(b).unwrap().text, "y");
    }

    #[test]
    fn votes_move_weight_by_one_and_edit_preserves_it() {
        let mut pool = pool();
        pool.apply(CAT, &InsightOp::Add { text: "x".into() });
        let id = InsightId(1);
        assert_eq!(
            pool.apply(CAT, &InsightOp::Upvote { id }),
            OpEffect::Reweighted { id, weight: 3 }
        );
        assert_eq!(
            pool.apply(CAT, &InsightOp::Edit { id, text: "better".into() }),
            OpEffect::Edited { id }
        );
        let insight = pool.get(id).unwrap();
        assert_eq!((insight.text.as_str(), insight.weight), ("better", 3));
        assert_eq!(
            pool.apply(CAT, &InsightOp::Downvote { id }),
            OpEffect::Reweighted { id, weight: 2 }
        );
    }

    #[test]
    fn downvoting_to_zero_removes_immediately() {
        let mut pool = InsightPool::new(1).unwrap();
        pool.apply(CAT, &InsightOp::Add { text: "x".into() });
        let id = InsightId(1);
        assert_eq!(pool.apply(CAT, &InsightOp::Downvote { id }), OpEffect::Removed { id });
        assert!(pool.get(id).is_none());
        assert!(pool.is_empty());
        // The id is not reused and later references warn.
        let effect = pool.apply(CAT, &InsightOp::Edit { id, text: "y".into() });
        assert!(matches!(effect, OpEffect::Skipped { .. }), "{effect:?}");
    }

    #[test]
    fn unknown_and_cross_category_ids_are_skipped_with_warnings() {
        let mut pool = pool();
        pool.apply(OTHER, &InsightOp::Add { text: "elsewhere".into() });
        let missing = pool.apply(CAT, &InsightOp::Upvote { id: InsightId(9) });
        let OpEffect::Skipped { warning } = missing else { panic!("expected skip") };
        assert!(warning.contains("#9"), "{warning}");
        let foreign = pool.apply(CAT, &InsightOp::Upvote { id: InsightId(1) });
        assert!(matches!(foreign, OpEffect::Skipped { .. }), "{foreign:?}");
        // And the foreign insight is untouched.
        assert_eq!(pool.get(InsightId(1)).unwrap().weight, 2);
    }

    #[test]
    fn overfull_category_evicts_lowest_weight_largest_id() {
        let mut pool = InsightPool::new(2).unwrap().with_max_per_category(3).unwrap();
        for text in ["a", "b", "c"] {
            pool.apply(CAT, &InsightOp::Add { text: text.into() });
        }
        pool.apply(CAT, &InsightOp::Upvote { id: InsightId(2) });
        pool.apply(CAT, &InsightOp::Upvote { id: InsightId(3) });
        // Weights now: #1=2, #2=3, #3=3. Adding #4 (weight 2) ties with #1;
        // the larger id goes.
        let OpEffect::Added { id, evicted } = pool.apply(CAT, &InsightOp::Add { text: "d".into() })
        else {
            panic!("expected Added")
        };
        assert_eq!(id, InsightId(4));
        assert_eq!(evicted, vec![InsightId(4)]);
        assert!(pool.get(InsightId(1)).is_some());
        // A strictly lower-weight resident is evicted instead of the newcomer.
        pool.apply(CAT, &InsightOp::Downvote { id: InsightId(1) });
        let OpEffect::Added { evicted, .. } = pool.apply(CAT, &InsightOp::Add { text: "e".into() })
        else {
            panic!("expected Added")
        };
        assert_eq!(evicted, vec![InsightId(1)]);
    }

    #[test]
    fn cap_is_per_category() {
        let mut pool = InsightPool::new(2).unwrap().with_max_per_category(1).unwrap();
        pool.apply(CAT, &InsightOp::Add { text: "a".into() });
        let OpEffect::Added { evicted, .. } = pool.apply(OTHER, &InsightOp::Add { text: "b".into() })
        else {
            panic!("expected Added")
        };
        assert!(evicted.is_empty());
        assert_eq!(pool.len(), 2);
    }

    #[test]
    fn op_parsing_accepts_the_documented_grammar() {
        let (ops, warnings) = parse_ops(
            "add Count with FILTER first\n\nEDIT #2 tighter wording\nupvote 3\nDOWNVOTE #4 too vague\n",
        );
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(
            ops,
            vec![
                InsightOp::Add { text: "Count with FILTER first".into() },
                InsightOp::Edit { id: InsightId(2), text: "tighter wording".into() },
                InsightOp::Upvote { id: InsightId(3) },
                InsightOp::Downvote { id: InsightId(4) },
            ]
        );
    }

    #[test]
    fn malformed_op_lines_warn_and_are_skipped() {
        let (ops, warnings) = parse_ops("ADD\nEDIT 5\nEDIT x new text\nUPVOTE abc\nponder deeply\n");
        assert!(ops.is_empty(), "{ops:?}");
        assert_eq!(warnings.len(), 5, "{warnings:?}");
    }

    fn record(id: u64, category: CategoryId, kind: RecordKind, steps: usize, reflections: Option<&str>) -> MemoryRecord {
        let embedder = ReferenceEmbedder::default();
        let mut lines: Vec<String> = (0..steps)
            .flat_map(|s| {
                vec![
                    format!("Thought: step {s} of record {id}"),
                    format!("Action: ACT{s}()"),
                    format!("Observation: obs {s}"),
                ]
            })
            .collect();
        lines.push("Answer: done".into());
        MemoryRecord::new(
            RecordId(id),
            category,
            kind,
            lines.join("\n"),
            embedder.embed(&format!("record {id}")).unwrap(),
            reflections.map(str::to_owned),
        )
        .unwrap()
    }

    #[test]
    fn excerpts_are_contiguous_windows_of_the_requested_length() {
        let success = record(3, CAT, RecordKind::Success, 4, None);
        let failure = record(7, CAT, RecordKind::Failure, 2, Some("oops"));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs = build_intra_pairs(&[&success], &[&failure], 3, 8, &mut rng);
        assert_eq!(pairs.len(), 1);
        let pair = &pairs[0];
        assert_eq!((pair.failure_id, pair.success_id), (RecordId(7), RecordId(3)));
        assert_eq!(pair.failure_reflections, "oops");
        // Success has 4 steps, window 3: start is 0 or 1 and steps stay
        // consecutive. Failure has 2 steps: the whole trajectory.
        let success_window = Trajectory::parse(&pair.success_excerpt);
        assert_eq!(success_window.steps.len(), 3);
        let first: usize = success_window.steps[0]
            .thought
            .strip_prefix("step ")
            .and_then(|s| s.split(' ').next())
            .and_then(|s| s.parse().ok())
            .unwrap();
        assert!(first <= 1, "window start {first}");
        for (offset, step) in success_window.steps.iter().enumerate() {
            assert_eq!(step.action, format!("ACT{}()", first + offset));
        }
        let failure_window = Trajectory::parse(&pair.failure_excerpt);
        assert_eq!(failure_window.steps.len(), 2);
        // Reaching the last step keeps the answer line.
        assert_eq!(failure_window.final_answer, "done");
    }

    #[test]
    fn pair_building_is_deterministic_per_seed() {
        let success = record(3, CAT, RecordKind::Success, 4, None);
        let failure = record(7, CAT, RecordKind::Failure, 2, Some("oops"));
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            build_intra_pairs(&[&success, &failure][..1], &[&failure], 3, 8, &mut rng)
        };
        assert_eq!(build(), build());
        // Frozen for seed 7: the 3-step window over 4 steps starts at 0, so
        // it stops short of the final step and carries no answer line.
        let pairs = build();
        assert!(pairs[0].success_excerpt.starts_with("Thought: step 0 of record 3"));
        assert_eq!(pairs[0].success_excerpt.lines().count(), 9);
        assert_eq!(Trajectory::parse(&pairs[0].success_excerpt).final_answer, "");
    }

    #[test]
    fn pair_count_respects_failures_and_the_cap() {
        let success = record(1, CAT, RecordKind::Success, 2, None);
        let failures: Vec<MemoryRecord> = (10..15)
            .map(|id| record(id, CAT, RecordKind::Failure, 2, Some("r")))
            .collect();
        let failure_refs: Vec<&MemoryRecord> = failures.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs = build_intra_pairs(&[&success], &failure_refs, 3, 3, &mut rng);
        assert_eq!(pairs.len(), 3);
        // Ascending failure ids.
        let ids: Vec<u64> = pairs.iter().map(|p| p.failure_id.0).collect();
        assert_eq!(ids, vec![10, 11, 12]);
        // No successes — no pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(build_intra_pairs(&[], &failure_refs, 3, 3, &mut rng).is_empty());
    }

    #[test]
    fn cross_groups_round_robin_partner_categories() {
        let own = record(1, CAT, RecordKind::Success, 2, None);
        let p2 = record(2, CategoryId(2), RecordKind::Success, 2, None);
        let p4 = record(4, CategoryId(4), RecordKind::Success, 2, None);
        let mut by_category: BTreeMap<CategoryId, Vec<&MemoryRecord>> = BTreeMap::new();
        by_category.insert(CAT, vec![&own]);
        by_category.insert(CategoryId(2), vec![&p2]);
        by_category.insert(CategoryId(4), vec![&p4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let groups = build_cross_groups(CAT, &by_category, 2, 4, &mut rng);
        let partners: Vec<usize> = groups.iter().map(|g| g.partner_category.0).collect();
        assert_eq!(partners, vec![2, 4, 2, 4]);
        assert!(groups.iter().all(|g| g.own_id == RecordId(1)));
    }

    #[test]
    fn cross_groups_need_own_and_partner_successes() {
        let own = record(1, CAT, RecordKind::Success, 2, None);
        let mut only_own: BTreeMap<CategoryId, Vec<&MemoryRecord>> = BTreeMap::new();
        only_own.insert(CAT, vec![&own]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(build_cross_groups(CAT, &only_own, 2, 4, &mut rng).is_empty());
        let mut no_own: BTreeMap<CategoryId, Vec<&MemoryRecord>> = BTreeMap::new();
        no_own.insert(OTHER, vec![&own]);
        assert!(build_cross_groups(CAT, &no_own, 2, 4, &mut rng).is_empty());
    }

    #[test]
    fn prompt_sections_use_placeholder_literals_when_empty() {
        let pool = pool();
        assert_eq!(render_insight_list(&pool, CAT), "(no insights)");
        assert_eq!(render_pairs(&[]), "(none)");
        let embedder = ReferenceEmbedder::default();
        let categories = CategorySet::default_set(&embedder).unwrap();
        assert_eq!(render_groups(&[], &categories), "(none)");
    }

    #[test]
    fn insight_list_renders_id_weight_and_text() {
        let mut pool = pool();
        pool.apply(CAT, &InsightOp::Add { text: "first".into() });
        pool.apply(CAT, &InsightOp::Add { text: "second".into() });
        pool.apply(CAT, &InsightOp::Upvote { id: InsightId(2) });
        assert_eq!(
            render_insight_list(&pool, CAT),
            "#1 [weight 2] first\n#2 [weight 3] second"
        );
    }

    #[test]
    fn ranked_listing_sorts_weight_descending_then_id() {
        let mut pool = pool();
        for text in ["a", "b", "c"] {
            pool.apply(CAT, &InsightOp::Add { text: text.into() });
        }
        pool.apply(CAT, &InsightOp::Upvote { id: InsightId(3) });
        let ranked: Vec<u64> = pool.ranked_for_category(CAT).iter().map(|i| i.id.0).collect();
        assert_eq!(ranked, vec![3, 1, 2]);
    }

    fn engine_fixture<'a>(
        backend: &'a dyn CompletionBackend,
        categories: &'a CategorySet,
        templates: &'a PromptTemplates,
    ) -> InsightEngine<'a> {
        InsightEngine {
            llm: Completer::new(backend, 256, 0.0),
            templates,
            categories,
            segment_len: DEFAULT_SEGMENT_LEN,
            max_pairs: DEFAULT_MAX_PAIRS,
            max_groups: DEFAULT_MAX_GROUPS,
            rounds: 2,
        }
    }

    #[test]
    fn distillation_applies_scripted_ops_across_rounds() {
        let embedder = ReferenceEmbedder::default();
        let categories = CategorySet::default_set(&embedder).unwrap();
        let templates = PromptTemplates::defaults();
        let backend = ScriptedBackend::new(Script {
            rules: vec![
                ScriptRule {
                    matcher: MatchRule::Substring("Distill insights for category counting".into()),
                    response: "ADD count with COUNT(FILTER(...))".into(),
                    max_uses: Some(1),
                },
                ScriptRule {
                    matcher: MatchRule::Substring("Distill insights for category counting".into()),
                    response: "UPVOTE 1\nUPVOTE 99".into(),
                    max_uses: None,
                },
            ],
            default_response: String::new(),
        })
        .unwrap();
        let engine = engine_fixture(&backend, &categories, &templates);
        let mut memory = HierarchicalMemory::new(16, 256).unwrap();
        memory.store(record(1, CategoryId(1), RecordKind::Success, 2, None)).unwrap();
        memory.store(record(2, CategoryId(1), RecordKind::Failure, 2, Some("off by one"))).unwrap();
        let mut pool = pool();
        let mut trace = RunTrace::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let summary = engine
            .distill_category(&mut pool, &memory, CategoryId(1), &mut rng, &mut trace)
            .unwrap();
        assert_eq!(summary.rounds_run, 2);
        assert_eq!(summary.ops_applied, 2); // the ADD and the valid UPVOTE
        assert_eq!(summary.warnings.len(), 1); // UPVOTE 99
        assert_eq!(pool.get(InsightId(1)).unwrap().weight, 3);
        assert_eq!(trace.llm_calls(LlmCallKind::Insight), 2);
    }

    #[test]
    fn distill_all_skips_categories_without_experiences() {
        let embedder = ReferenceEmbedder::default();
        let categories = CategorySet::default_set(&embedder).unwrap();
        let templates = PromptTemplates::defaults();
        let backend = ScriptedBackend::constant("ADD something useful");
        let engine = engine_fixture(&backend, &categories, &templates);
        let mut memory = HierarchicalMemory::new(16, 256).unwrap();
        memory.store(record(1, CategoryId(3), RecordKind::Success, 2, None)).unwrap();
        let mut pool = pool();
        let mut trace = RunTrace::new();
        let summary = engine.distill_all(&mut pool, &memory, 42, &mut trace).unwrap();
        // Only category 3 had material: 2 rounds, one ADD each.
        assert_eq!(summary.rounds_run, 2);
        assert_eq!(pool.len(), 2);
        assert!(pool.all().all(|i| i.category == CategoryId(3)));
    }

    #[test]
    fn backend_failures_name_the_round_and_category() {
        struct Failing;
        impl CompletionBackend for Failing {
            fn complete(&self, _: &str, _: u32, _: f64) -> Result<String> {
                Err(EhcError::Backend("boom".into()))
            }
        }
        let embedder = ReferenceEmbedder::default();
        let categories = CategorySet::default_set(&embedder).unwrap();
        let templates = PromptTemplates::defaults();
        let backend = Failing;
        let engine = engine_fixture(&backend, &categories, &templates);
        let mut memory = HierarchicalMemory::new(16, 256).unwrap();
        memory.store(record(1, CategoryId(1), RecordKind::Success, 2, None)).unwrap();
        let mut pool = pool();
        let mut trace = RunTrace::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = engine
            .distill_category(&mut pool, &memory, CategoryId(1), &mut rng, &mut trace)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("round 0") && msg.contains("counting"), "{msg}");
    }

    #[test]
    fn restored_insights_keep_ids_ahead() {
        let mut pool = pool();
        pool.insert_restored(Insight {
            id: InsightId(5),
            category: CAT,
            text: "restored".into(),
            weight: 4,
        })
        .unwrap();
        let dup = pool.insert_restored(Insight {
            id: InsightId(5),
            category: CAT,
            text: "again".into(),
            weight: 1,
        });
        assert!(dup.is_err());
        let OpEffect::Added { id, .. } = pool.apply(CAT, &InsightOp::Add { text: "new".into() })
        else {
            panic!("expected Added")
        };
        assert_eq!(id, InsightId(6));
    }
}
