//! Synthetic ambiguous scenes with an exactly enumerable posterior.
//!
//! A scene is a finite weighted mixture of complete ground-truth
//! segmentations. Ambiguity comes from independent factors: adjacent objects
//! that are truly one object with some probability (merge factors), and
//! object boundaries that dilate or erode by an integer offset drawn from a
//! weighted set (boundary factors). Because the factors are independent, the
//! posterior factorizes and the full mixture enumerates as a product lattice
//! with exact rational weights — no floating-point drift, weights sum to
//! exactly one.
//!
//! Sampling hypotheses from the mixture reproduces the inference-time
//! interface of a distributional segmentation model: `k` independent draws
//! plus a mode (the highest-weight component). The exact
//! [`containment_probability`] is the statistical oracle that downstream
//! guarantees are verified against.
//!
//! Probabilities supplied as floats are converted to the exact rational value
//! of the float, and complementary/normalized weights are derived in rational
//! arithmetic, so exactness never depends on the decimal looking round.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, MaskError};
use crate::model::{GroundTruthImage, Hypothesis, Instance, SampleSet};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("scene enumerates {count} components, above the cap of {cap}; reduce objects or ambiguity factors")]
    TooManyComponents { count: u64, cap: u64 },
    #[error("sample count k must be at least 1")]
    NoSamples,
    #[error("mask dimensions {0}x{1} do not match scene {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// A boundary offset and its (unnormalized) weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetWeight {
    pub offset: i32,
    pub weight: f64,
}

/// Generator parameters for one scene family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub min_objects: u32,
    pub max_objects: u32,
    /// Probability that two adjacent objects are truly one.
    pub merge_probability: f64,
    /// Dilation/erosion offsets applied to ambiguous boundaries; weights are
    /// normalized exactly. Empty means no boundary ambiguity.
    #[serde(default)]
    pub boundary_offsets: Vec<OffsetWeight>,
    /// How many objects carry a boundary-offset factor.
    #[serde(default = "default_ambiguous_boundaries")]
    pub ambiguous_boundaries: u32,
    #[serde(default = "default_min_object_size")]
    pub min_object_size: u32,
    #[serde(default = "default_max_object_size")]
    pub max_object_size: u32,
    /// 1 or 2 object categories.
    #[serde(default = "default_categories")]
    pub categories: u32,
    #[serde(default = "default_max_components")]
    pub max_components: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_ambiguous_boundaries() -> u32 {
    1
}
fn default_min_object_size() -> u32 {
    8
}
fn default_max_object_size() -> u32 {
    16
}
fn default_categories() -> u32 {
    1
}
fn default_max_components() -> u64 {
    4096
}

impl SceneSpec {
    fn max_dilation(&self) -> u32 {
        self.boundary_offsets
            .iter()
            .filter(|o| o.weight > 0.0)
            .map(|o| o.offset.max(0) as u32)
            .max()
            .unwrap_or(0)
    }

    fn min_offset(&self) -> i32 {
        self.boundary_offsets
            .iter()
            .filter(|o| o.weight > 0.0)
            .map(|o| o.offset)
            .min()
            .unwrap_or(0)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.width == 0 || self.height == 0 {
            return fail(format!("grid {}x{} is empty", self.width, self.height));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return fail(format!(
                "object count range {}..={} is invalid",
                self.min_objects, self.max_objects
            ));
        }
        if !(0.0..=1.0).contains(&self.merge_probability) {
            return fail(format!(
                "merge probability {} outside [0, 1]",
                self.merge_probability
            ));
        }
        if self.min_object_size == 0 || self.min_object_size > self.max_object_size {
            return fail(format!(
                "object size range {}..={} is invalid",
                self.min_object_size, self.max_object_size
            ));
        }
        if !(1..=2).contains(&self.categories) {
            return fail(format!("categories must be 1 or 2, got {}", self.categories));
        }
        if self.boundary_offsets.iter().any(|o| o.weight < 0.0) {
            return fail("boundary offset weights must be non-negative".into());
        }
        if !self.boundary_offsets.is_empty()
            && self.boundary_offsets.iter().all(|o| o.weight <= 0.0)
        {
            return fail("boundary offsets need at least one positive weight".into());
        }
        // erosion must leave every object at least one pixel
        if self.min_object_size as i64 + 2 * self.min_offset() as i64 <= 0 {
            return fail(format!(
                "erosion offset {} would erase objects of size {}",
                self.min_offset(),
                self.min_object_size
            ));
        }
        let margin = self.max_dilation() + 1;
        if 2 * margin + self.min_object_size > self.width.min(self.height) {
            return fail(format!(
                "grid {}x{} cannot fit an object of size {} with margin {}",
                self.width, self.height, self.min_object_size, margin
            ));
        }
        Ok(())
    }
}

/// One complete ground-truth hypothesis and its exact mixture weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneComponent {
    pub weight: BigRational,
    pub ground_truth: GroundTruthImage,
}

/// A latent scene: the full mixture plus the component drawn as the actual
/// ground truth for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub components: Vec<SceneComponent>,
    /// Index of the realized component.
    pub realized: usize,
}

impl Scene {
    pub fn realized_ground_truth(&self) -> &GroundTruthImage {
        &self.components[self.realized].ground_truth
    }

    /// Index of the highest-weight component (ties to the lowest index).
    pub fn mode_index(&self) -> usize {
        let mut best = 0;
        for (i, component) in self.components.iter().enumerate() {
            if component.weight > self.components[best].weight {
                best = i;
            }
        }
        best
    }
}

/// ChaCha8 keyed with the little-endian seed in the first 8 bytes; the same
/// construction as `picksim::probe_rng` so seeds behave uniformly everywhere.
fn seeded_rng(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, Copy)]
struct ObjectLayout {
    row0: u32,
    col0: u32,
    w: u32,
    h: u32,
    shape: Shape,
    category: u32,
    /// Abuts the previous object in the same packed row.
    adjacent_to_prev: bool,
}

fn shape_mask(
    object: &ObjectLayout,
    offset: i32,
    width: u32,
    height: u32,
) -> Result<BinaryMask, MaskError> {
    match object.shape {
        Shape::Rect => {
            let r0 = (object.row0 as i64 - offset as i64).max(0) as u32;
            let c0 = (object.col0 as i64 - offset as i64).max(0) as u32;
            let r1 = ((object.row0 + object.h) as i64 + offset as i64).min(height as i64) as u32;
            let c1 = ((object.col0 + object.w) as i64 + offset as i64).min(width as i64) as u32;
            BinaryMask::rect(width, height, r0..r1, c0..c1)
        }
        Shape::Ellipse => {
            let cy = object.row0 as f64 + object.h as f64 / 2.0;
            let cx = object.col0 as f64 + object.w as f64 / 2.0;
            let b = object.h as f64 / 2.0 + offset as f64;
            let a = object.w as f64 / 2.0 + offset as f64;
            let mut pixels = Vec::new();
            for row in 0..height {
                for col in 0..width {
                    let dy = (row as f64 + 0.5 - cy) / b;
                    let dx = (col as f64 + 0.5 - cx) / a;
                    if dy * dy + dx * dx <= 1.0 {
                        pixels.push((row, col));
                    }
                }
            }
            BinaryMask::from_pixels(width, height, pixels)
        }
    }
}

/// A choice a factor can take: merge indicator or boundary offset.
#[derive(Debug, Clone, Copy)]
enum Choice {
    Separate,
    Merged,
    Offset(i32),
}

struct Factor {
    /// For merges: the index of the object merging with its predecessor.
    /// For boundaries: the object whose outline shifts.
    object: usize,
    choices: Vec<(Choice, BigRational)>,
}

fn exact_ratio(value: f64) -> BigRational {
    BigRational::from_float(value).expect("finite probability")
}

/// Lay out abutting objects and enumerate the ambiguity lattice.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene, SynthError> {
    spec.validate()?;
    let mut rng = seeded_rng(seed);
    let n_objects = rng.gen_range(spec.min_objects..=spec.max_objects);
    let margin = spec.max_dilation() + 1;

    // pack objects left-to-right in rows; objects in a row abut exactly
    let mut objects: Vec<ObjectLayout> = Vec::new();
    let mut x = margin;
    let mut y = margin;
    let mut row_height = 0u32;
    for _ in 0..n_objects {
        let w = rng.gen_range(spec.min_object_size..=spec.max_object_size);
        let h = rng.gen_range(spec.min_object_size..=spec.max_object_size);
        let mut adjacent = !objects.is_empty();
        if x + w + margin > spec.width {
            x = margin;
            y += row_height + margin;
            row_height = 0;
            adjacent = false;
        }
        if y + h + margin > spec.height {
            break; // grid is full
        }
        let shape = if rng.gen_bool(0.7) {
            Shape::Rect
        } else {
            Shape::Ellipse
        };
        let category = if spec.categories >= 2 {
            1 + rng.gen_range(0..spec.categories)
        } else {
            1
        };
        objects.push(ObjectLayout {
            row0: y,
            col0: x,
            w,
            h,
            shape,
            category,
            adjacent_to_prev: adjacent,
        });
        x += w;
        row_height = row_height.max(h);
    }
    if objects.is_empty() {
        return Err(SynthError::InvalidSpec(format!(
            "no object of size {}..={} fits a {}x{} grid with margin {margin}",
            spec.min_object_size, spec.max_object_size, spec.width, spec.height
        )));
    }

    let mut factors: Vec<Factor> = Vec::new();
    let merge_p = exact_ratio(spec.merge_probability);
    for (i, object) in objects.iter().enumerate() {
        if !object.adjacent_to_prev {
            continue;
        }
        let mut choices = Vec::new();
        let separate = BigRational::one() - merge_p.clone();
        if separate.is_positive() {
            choices.push((Choice::Separate, separate));
        }
        if merge_p.is_positive() {
            choices.push((Choice::Merged, merge_p.clone()));
        }
        factors.push(Factor { object: i, choices });
    }

    let offset_choices: Vec<(Choice, BigRational)> = {
        let total: BigRational = spec
            .boundary_offsets
            .iter()
            .filter(|o| o.weight > 0.0)
            .map(|o| exact_ratio(o.weight))
            .sum();
        spec.boundary_offsets
            .iter()
            .filter(|o| o.weight > 0.0)
            .map(|o| (Choice::Offset(o.offset), exact_ratio(o.weight) / total.clone()))
            .collect()
    };
    if offset_choices.len() > 1 {
        // a random subset of objects carries the boundary factor
        let n_ambiguous = (spec.ambiguous_boundaries as usize).min(objects.len());
        let mut indices: Vec<usize> = (0..objects.len()).collect();
        for i in 0..n_ambiguous {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        let mut chosen: Vec<usize> = indices[..n_ambiguous].to_vec();
        chosen.sort_unstable();
        for object in chosen {
            factors.push(Factor {
                object,
                choices: offset_choices.clone(),
            });
        }
    }

    let component_count = factors
        .iter()
        .map(|f| f.choices.len() as u64)
        .product::<u64>();
    if component_count > spec.max_components {
        return Err(SynthError::TooManyComponents {
            count: component_count,
            cap: spec.max_components,
        });
    }

    // enumerate the product lattice with a mixed-radix counter
    let image_id = seed;
    let mut components = Vec::with_capacity(component_count as usize);
    let mut assignment = vec![0usize; factors.len()];
    loop {
        let mut weight = BigRational::one();
        let mut offsets = vec![0i32; objects.len()];
        let mut merged_with_prev = vec![false; objects.len()];
        for (factor, &pick) in factors.iter().zip(&assignment) {
            let (choice, w) = &factor.choices[pick];
            weight *= w.clone();
            match choice {
                Choice::Separate => {}
                Choice::Merged => merged_with_prev[factor.object] = true,
                Choice::Offset(offset) => offsets[factor.object] = *offset,
            }
        }

        // group objects joined by merge indicators (chains union together)
        let mut instances: Vec<Instance> = Vec::new();
        let mut current: Option<(BinaryMask, u32)> = None;
        for (i, object) in objects.iter().enumerate() {
            let mask = shape_mask(object, offsets[i], spec.width, spec.height)?;
            current = Some(match current.take() {
                Some((acc, category)) if merged_with_prev[i] => {
                    (acc.union_of(&mask)?, category)
                }
                Some((acc, category)) => {
                    instances.push(Instance::new(acc, category, 1.0));
                    (mask, object.category)
                }
                None => (mask, object.category),
            });
        }
        if let Some((acc, category)) = current {
            instances.push(Instance::new(acc, category, 1.0));
        }

        components.push(SceneComponent {
            weight,
            ground_truth: GroundTruthImage {
                image_id,
                width: spec.width,
                height: spec.height,
                instances,
            },
        });

        // increment the mixed-radix counter
        let mut pos = factors.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < factors[pos].choices.len() {
                break;
            }
            assignment[pos] = 0;
        }
        if factors.is_empty() || assignment.iter().all(|&a| a == 0) {
            break;
        }
    }

    debug_assert!(components
        .iter()
        .map(|c| c.weight.clone())
        .sum::<BigRational>()
        .is_one());

    let realized = draw_component(&components, rng.next_u64());
    Ok(Scene {
        image_id,
        width: spec.width,
        height: spec.height,
        components,
        realized,
    })
}

/// Cumulative thresholds `floor(cum_weight * 2^64)` for exact mixture draws
/// from a single u64. The final threshold is exactly 2^64 because the
/// weights sum to one.
fn cumulative_thresholds(components: &[SceneComponent]) -> Vec<u128> {
    let scale = BigInt::one() << 64;
    let mut cum = BigRational::zero();
    components
        .iter()
        .map(|c| {
            cum += c.weight.clone();
            let scaled: BigInt = (cum.numer() * &scale) / cum.denom();
            scaled.to_u128().expect("cumulative weight is at most 1")
        })
        .collect()
}

fn draw_component(components: &[SceneComponent], r: u64) -> usize {
    let thresholds = cumulative_thresholds(components);
    let r = r as u128;
    thresholds
        .iter()
        .position(|&t| r < t)
        .expect("thresholds end at 2^64")
}

/// Draw `k` hypotheses from the mixture; the mode is the highest-weight
/// component. Sampled instances carry score 1.0.
pub fn sample_hypotheses(scene: &Scene, k: usize, seed: u64) -> Result<SampleSet, SynthError> {
    if k == 0 {
        return Err(SynthError::NoSamples);
    }
    let thresholds = cumulative_thresholds(&scene.components);
    let mut rng = seeded_rng(seed);
    let r = |r: u64| -> usize {
        thresholds
            .iter()
            .position(|&t| (r as u128) < t)
            .expect("thresholds end at 2^64")
    };
    let samples: Vec<Hypothesis> = (0..k)
        .map(|_| hypothesis_of(&scene.components[r(rng.next_u64())].ground_truth))
        .collect();
    let mode = hypothesis_of(&scene.components[scene.mode_index()].ground_truth);
    Ok(SampleSet {
        image_id: scene.image_id,
        width: scene.width,
        height: scene.height,
        samples,
        mode: Some(mode),
    })
}

fn hypothesis_of(ground_truth: &GroundTruthImage) -> Hypothesis {
    Hypothesis {
        instances: ground_truth.instances.clone(),
    }
}

/// Exact probability that `mask` is contained in some instance of the
/// realized ground truth: the total weight of components with a containing
/// instance.
pub fn containment_probability(scene: &Scene, mask: &BinaryMask) -> Result<BigRational, SynthError> {
    if mask.width() != scene.width || mask.height() != scene.height {
        return Err(SynthError::DimensionMismatch(
            mask.width(),
            mask.height(),
            scene.width,
            scene.height,
        ));
    }
    let mut probability = BigRational::zero();
    for component in &scene.components {
        let contained = component
            .ground_truth
            .instances
            .iter()
            .any(|inst| inst.mask.contains(mask).unwrap_or(false));
        if contained {
            probability += component.weight.clone();
        }
    }
    Ok(probability)
}

/// `containment_probability` as a float, for reporting.
pub fn containment_probability_f64(scene: &Scene, mask: &BinaryMask) -> Result<f64, SynthError> {
    Ok(containment_probability(scene, mask)?
        .to_f64()
        .expect("probability fits in f64"))
}
