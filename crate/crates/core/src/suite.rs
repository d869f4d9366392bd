//! Seeded benchmark-task generation.
//!
//! Generates scene-grounded tasks for the seven default categories, ids
//! assigned sequentially category by category. Scenes hold 3–8 objects over
//! small color/shape/size domains. Every ground truth is computed directly
//! from the generated object list — never by running a program — so the
//! executor path can be validated against it.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::category::{CategoryId, DEFAULT_CATEGORY_LABELS};
use crate::error::{EhcError, Result};
use crate::exec::{Scene, SceneObject};
use crate::experience::{Task, TaskId};

pub const COLORS: [&str; 4] = ["red", "blue", "green", "yellow"];
pub const SHAPES: [&str; 3] = ["cube", "ball", "pyramid"];
pub const SIZES: [&str; 2] = ["small", "big"];
/// Shape value marking the fillable slot in addition scenes.
pub const SLOT_SHAPE: &str = "slot";

const MIN_OBJECTS: usize = 3;
const MAX_OBJECTS: usize = 8;

/// The parameters a task was generated from, one variant per category in
/// category order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskSpec {
    Judgment { color: &'static str, shape: &'static str },
    Counting { color: &'static str },
    Recognition { shape: &'static str },
    Comparison { color_a: &'static str, color_b: &'static str },
    Addition { size: &'static str, color: &'static str, shape: &'static str },
    Removal { color: &'static str },
    Replacement { shape: &'static str, color: &'static str },
}

impl TaskSpec {
    pub fn category(&self) -> CategoryId {
        CategoryId(match self {
            TaskSpec::Judgment { .. } => 0,
            TaskSpec::Counting { .. } => 1,
            TaskSpec::Recognition { .. } => 2,
            TaskSpec::Comparison { .. } => 3,
            TaskSpec::Addition { .. } => 4,
            TaskSpec::Removal { .. } => 5,
            TaskSpec::Replacement { .. } => 6,
        })
    }

    /// The task instruction shown to the model.
    pub fn content(&self) -> String {
        match self {
            TaskSpec::Judgment { color, shape } => {
                format!("Is there a {color} {shape} in the scene?")
            }
            TaskSpec::Counting { color } => {
                format!("How many {color} objects are in the scene?")
            }
            TaskSpec::Recognition { shape } => {
                format!("Identify all objects with shape {shape}.")
            }
            TaskSpec::Comparison { color_a, color_b } => format!(
                "Compare the number of {color_a} objects to the number of {color_b} objects."
            ),
            TaskSpec::Addition { size, color, shape } => {
                format!("Fill the empty slot with a {size} {color} {shape}.")
            }
            TaskSpec::Removal { color } => format!("Remove every {color} object from the scene."),
            TaskSpec::Replacement { shape, color } => {
                format!("Replace the color of every {shape} with {color}.")
            }
        }
    }

    /// The ground truth for this spec on `scene`, computed by direct object
    /// inspection.
    pub fn truth(&self, scene: &Scene) -> String {
        let preds = |pairs: &[(&str, &str)]| -> Vec<(String, String)> {
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
        };
        match self {
            TaskSpec::Judgment { color, shape } => {
                let hits = scene.matching(&preds(&[("color", color), ("shape", shape)]));
                if hits.is_empty() { "no".into() } else { "yes".into() }
            }
            TaskSpec::Counting { color } => {
                scene.matching(&preds(&[("color", color)])).len().to_string()
            }
            TaskSpec::Recognition { shape } => {
                scene.subset(&scene.matching(&preds(&[("shape", shape)]))).render()
            }
            TaskSpec::Comparison { color_a, color_b } => {
                let a = scene.matching(&preds(&[("color", color_a)])).len();
                let b = scene.matching(&preds(&[("color", color_b)])).len();
                match a.cmp(&b) {
                    std::cmp::Ordering::Greater => "greater".into(),
                    std::cmp::Ordering::Less => "less".into(),
                    std::cmp::Ordering::Equal => "equal".into(),
                }
            }
            TaskSpec::Addition { size, color, shape } => {
                let slots = scene.matching(&preds(&[("shape", SLOT_SHAPE)]));
                scene
                    .with_replaced(
                        &slots,
                        &preds(&[("color", color), ("shape", shape), ("size", size)]),
                    )
                    .render()
            }
            TaskSpec::Removal { color } => {
                scene.without(&scene.matching(&preds(&[("color", color)]))).render()
            }
            TaskSpec::Replacement { shape, color } => {
                let hits = scene.matching(&preds(&[("shape", shape)]));
                scene.with_replaced(&hits, &preds(&[("color", color)])).render()
            }
        }
    }

    /// A program that solves this spec on any scene. Used to cross-validate
    /// the executor against [`TaskSpec::truth`] and to script demo replies.
    pub fn correct_program(&self) -> String {
        match self {
            TaskSpec::Judgment { color, shape } => {
                format!("EXISTS(FILTER(color={color} shape={shape}))")
            }
            TaskSpec::Counting { color } => format!("COUNT(FILTER(color={color}))"),
            TaskSpec::Recognition { shape } => format!("FILTER(shape={shape})"),
            TaskSpec::Comparison { color_a, color_b } => format!(
                "COMPARE(COUNT(FILTER(color={color_a})), COUNT(FILTER(color={color_b})))"
            ),
            TaskSpec::Addition { size, color, shape } => format!(
                "REPLACE(FILTER(shape={SLOT_SHAPE}), color={color} shape={shape} size={size})"
            ),
            TaskSpec::Removal { color } => format!("REMOVE(FILTER(color={color}))"),
            TaskSpec::Replacement { shape, color } => {
                format!("REPLACE(FILTER(shape={shape}), color={color})")
            }
        }
    }
}

/// A generated task plus the metadata the benchmark and demo need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteTask {
    pub task: Task,
    pub category: CategoryId,
    pub spec: TaskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub tasks_per_category: usize,
}

fn random_object(rng: &mut ChaCha8Rng) -> SceneObject {
    let color = *COLORS.choose(rng).expect("non-empty");
    let shape = *SHAPES.choose(rng).expect("non-empty");
    let size = *SIZES.choose(rng).expect("non-empty");
    SceneObject::new(&[("color", color), ("shape", shape), ("size", size)])
}

/// A scene of 3–8 random objects; for addition tasks one random position is
/// the bare slot object.
fn random_scene(rng: &mut ChaCha8Rng, with_slot: bool) -> Scene {
    let n = rng.gen_range(MIN_OBJECTS..=MAX_OBJECTS);
    let mut objects: Vec<SceneObject> = (0..n).map(|_| random_object(rng)).collect();
    if with_slot {
        let at = rng.gen_range(0..n);
        objects[at] = SceneObject::new(&[("shape", SLOT_SHAPE)]);
    }
    Scene::new(objects)
}

fn random_spec(category: CategoryId, rng: &mut ChaCha8Rng) -> TaskSpec {
    let color = |rng: &mut ChaCha8Rng| *COLORS.choose(rng).expect("non-empty");
    let shape = |rng: &mut ChaCha8Rng| *SHAPES.choose(rng).expect("non-empty");
    match category.0 {
        0 => TaskSpec::Judgment { color: color(rng), shape: shape(rng) },
        1 => TaskSpec::Counting { color: color(rng) },
        2 => TaskSpec::Recognition { shape: shape(rng) },
        3 => {
            let a = color(rng);
            let b = loop {
                let b = color(rng);
                if b != a {
                    break b;
                }
            };
            TaskSpec::Comparison { color_a: a, color_b: b }
        }
        4 => TaskSpec::Addition {
            size: *SIZES.choose(rng).expect("non-empty"),
            color: color(rng),
            shape: shape(rng),
        },
        5 => TaskSpec::Removal { color: color(rng) },
        6 => TaskSpec::Replacement { shape: shape(rng), color: color(rng) },
        _ => unreachable!("seven categories"),
    }
}

/// Generates `tasks_per_category` tasks for each of the seven default
/// categories, ids sequential in category-major order. The `(content,
/// scene)` pair is unique across the suite: colliding draws are discarded
/// and redrawn.
pub fn generate_suite(config: &SuiteConfig) -> Result<Vec<SuiteTask>> {
    if config.tasks_per_category == 0 {
        return Err(EhcError::Config("tasks per category must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(DEFAULT_CATEGORY_LABELS.len() * config.tasks_per_category);
    let mut next_id = 1u64;
    for index in 0..DEFAULT_CATEGORY_LABELS.len() {
        let category = CategoryId(index);
        for _ in 0..config.tasks_per_category {
            let mut tries = 0;
            let (spec, scene) = loop {
                let spec = random_spec(category, &mut rng);
                let scene = random_scene(&mut rng, matches!(spec, TaskSpec::Addition { .. }));
                if seen.insert((spec.content(), scene.render())) {
                    break (spec, scene);
                }
                tries += 1;
                if tries > 1000 {
                    return Err(EhcError::Config(format!(
                        "could not draw a distinct task for category {category} \
                         after 1000 tries; lower tasks_per_category"
                    )));
                }
            };
            let truth = spec.truth(&scene);
            let task = Task::new(TaskId(next_id), spec.content(), scene.render())?.with_truth(truth);
            next_id += 1;
            out.push(SuiteTask { task, category, spec });
        }
    }
    Ok(out)
}
