//! File formats: COCO-compatible ground truth, the sample-set and prediction
//! interchange formats, and the exact-mixture sidecar for synthetic scenes.
//!
//! Masks travel as COCO segmentation objects: `{"size": [height, width],
//! "counts": [...]}` with uncompressed column-major run lengths. Compressed
//! (character-packed) counts strings and polygon lists are accepted on input;
//! polygons are rasterized even-odd at load time, and everything is written
//! back uncompressed. Loading and saving preserve every mask bit and every
//! score exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::model::{GroundTruthImage, Hypothesis, Instance, SampleSet};
use crate::synth::{Scene, SceneComponent};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },
    #[error("{0}")]
    Invalid(String),
}

fn schema_error(path: &Path, detail: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// RLE segmentation objects

/// COCO segmentation object: `{"size": [height, width], "counts": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RleJson {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: CountsJson,
}

/// Uncompressed integer counts or the COCO packed-string encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountsJson {
    Raw(Vec<u32>),
    Packed(String),
}

impl RleJson {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        RleJson {
            size: [mask.height(), mask.width()],
            counts: CountsJson::Raw(mask.counts().to_vec()),
        }
    }

    pub fn to_mask(&self) -> Result<BinaryMask, String> {
        let [height, width] = self.size;
        let counts = match &self.counts {
            CountsJson::Raw(counts) => counts.clone(),
            CountsJson::Packed(packed) => unpack_counts(packed),
        };
        BinaryMask::from_counts(width, height, counts).map_err(|e| e.to_string())
    }
}

/// Decode the COCO packed-counts string: 5-bit groups in chars '0'..'o',
/// continuation bit 0x20, sign extension, and stride-2 delta accumulation
/// from the third count on.
pub fn unpack_counts(packed: &str) -> Vec<u32> {
    let bytes = packed.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let mut x: i64 = 0;
        let mut shift = 0u32;
        loop {
            if i >= bytes.len() {
                break;
            }
            let c = (bytes[i].wrapping_sub(48)) as i64;
            i += 1;
            x |= (c & 0x1f) << shift;
            shift += 5;
            if c & 0x20 == 0 {
                // sign-extend the final group
                if x & (1 << (shift - 1)) != 0 {
                    x |= !0i64 << shift;
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts.into_iter().map(|c| c.max(0) as u32).collect()
}

/// Inverse of [`unpack_counts`].
pub fn pack_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &count) in counts.iter().enumerate() {
        let mut x = if i > 2 {
            count as i64 - counts[i - 2] as i64
        } else {
            count as i64
        };
        loop {
            let mut c = (x & 0x1f) as u8;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            out.push((c + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Polygon rasterization

/// Even-odd scanline rasterization of a polygon given as a flat
/// `[x0, y0, x1, y1, ...]` list; pixel centers at half-integer coordinates.
pub fn rasterize_polygon(polygon: &[f64], width: u32, height: u32) -> Result<BinaryMask, String> {
    if polygon.len() < 6 || polygon.len() % 2 != 0 {
        return Err(format!(
            "polygon needs at least 3 (x, y) vertex pairs, got {} values",
            polygon.len()
        ));
    }
    let n = polygon.len() / 2;
    let vertex = |i: usize| (polygon[(i % n) * 2], polygon[(i % n) * 2 + 1]);
    let mut pixels = vec![false; (width * height) as usize];
    let mut crossings: Vec<f64> = Vec::new();
    for row in 0..height {
        let y = row as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (x1, y1) = vertex(i);
            let (x2, y2) = vertex(i + 1);
            if y1 == y2 {
                continue;
            }
            // half-open edge span so shared vertices count once
            if (y1.min(y2)..y1.max(y2)).contains(&y) {
                crossings.push(x1 + (y - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let (xa, xb) = (pair[0], pair[1]);
            let col_start = (xa - 0.5).ceil().max(0.0) as u32;
            for col in col_start..width {
                let x = col as f64 + 0.5;
                if x >= xb {
                    break;
                }
                pixels[(row * width + col) as usize] = true;
            }
        }
    }
    BinaryMask::encode(width, height, &pixels).map_err(|e| e.to_string())
}

/// Proper-crossing self-intersection test over all edge pairs.
pub fn polygon_self_intersects(polygon: &[f64]) -> bool {
    let n = polygon.len() / 2;
    if n < 4 {
        return false;
    }
    let vertex = |i: usize| (polygon[(i % n) * 2], polygon[(i % n) * 2 + 1]);
    let orient = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| -> f64 {
        (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
    };
    for i in 0..n {
        for j in i + 1..n {
            // skip edges sharing a vertex
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (a, b) = (vertex(i), vertex(i + 1));
            let (c, d) = (vertex(j), vertex(j + 1));
            let o1 = orient(a, b, c);
            let o2 = orient(a, b, d);
            let o3 = orient(c, d, a);
            let o4 = orient(c, d, b);
            if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
                return true;
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// COCO ground truth

#[derive(Debug, Serialize, Deserialize)]
struct CocoDataset {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file_name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u32,
    #[serde(default)]
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    segmentation: SegmentationJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SegmentationJson {
    Rle(RleJson),
    Polygons(Vec<Vec<f64>>),
}

/// Ground truth plus the category table and any load warnings.
#[derive(Debug)]
pub struct LoadedGroundTruth {
    pub images: Vec<GroundTruthImage>,
    pub categories: BTreeMap<u32, String>,
    pub warnings: Vec<String>,
}

pub fn load_ground_truth(path: &Path) -> Result<LoadedGroundTruth, IoError> {
    let dataset: CocoDataset = read_json(path)?;
    let categories: BTreeMap<u32, String> = dataset
        .categories
        .iter()
        .map(|c| (c.id, c.name.clone()))
        .collect();
    let mut warnings = Vec::new();

    let mut by_image: BTreeMap<u64, Vec<Instance>> = BTreeMap::new();
    let mut dims: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for image in &dataset.images {
        dims.insert(image.id, (image.width, image.height));
        by_image.entry(image.id).or_default();
    }
    for ann in &dataset.annotations {
        let Some(&(width, height)) = dims.get(&ann.image_id) else {
            return Err(schema_error(
                path,
                format!("annotation {} references unknown image {}", ann.id, ann.image_id),
            ));
        };
        if !categories.is_empty() && !categories.contains_key(&ann.category_id) {
            return Err(schema_error(
                path,
                format!("annotation {} references unknown category {}", ann.id, ann.category_id),
            ));
        }
        let mask = match &ann.segmentation {
            SegmentationJson::Rle(rle) => {
                if rle.size != [height, width] {
                    return Err(schema_error(
                        path,
                        format!(
                            "annotation {}: RLE size {:?} does not match image {}x{}",
                            ann.id, rle.size, width, height
                        ),
                    ));
                }
                rle.to_mask()
                    .map_err(|e| schema_error(path, format!("annotation {}: {e}", ann.id)))?
            }
            SegmentationJson::Polygons(polygons) => {
                let mut mask = BinaryMask::empty(width, height)
                    .map_err(|e| schema_error(path, e.to_string()))?;
                for polygon in polygons {
                    if polygon_self_intersects(polygon) {
                        warnings.push(format!(
                            "annotation {}: polygon self-intersects; rasterized even-odd",
                            ann.id
                        ));
                    }
                    let part = rasterize_polygon(polygon, width, height)
                        .map_err(|e| schema_error(path, format!("annotation {}: {e}", ann.id)))?;
                    mask = mask
                        .union_of(&part)
                        .map_err(|e| schema_error(path, e.to_string()))?;
                }
                mask
            }
        };
        if mask.is_empty() {
            return Err(schema_error(
                path,
                format!("annotation {}: mask has zero area", ann.id),
            ));
        }
        by_image
            .get_mut(&ann.image_id)
            .unwrap()
            .push(Instance::new(mask, ann.category_id, 1.0));
    }

    let images = dataset
        .images
        .iter()
        .map(|image| GroundTruthImage {
            image_id: image.id,
            width: image.width,
            height: image.height,
            instances: by_image.remove(&image.id).unwrap_or_default(),
        })
        .collect();
    Ok(LoadedGroundTruth {
        images,
        categories,
        warnings,
    })
}

pub fn save_ground_truth(
    path: &Path,
    images: &[GroundTruthImage],
    categories: &BTreeMap<u32, String>,
) -> Result<(), IoError> {
    let mut annotations = Vec::new();
    let mut next_id = 1u64;
    for image in images {
        for inst in &image.instances {
            let bbox = inst.mask.bbox().map(|(r0, c0, r1, c1)| {
                [c0 as f64, r0 as f64, (c1 - c0) as f64, (r1 - r0) as f64]
            });
            annotations.push(CocoAnnotation {
                id: next_id,
                image_id: image.image_id,
                category_id: inst.category,
                segmentation: SegmentationJson::Rle(RleJson::from_mask(&inst.mask)),
                area: Some(inst.mask.area()),
                bbox,
                iscrowd: 0,
            });
            next_id += 1;
        }
    }
    let dataset = CocoDataset {
        images: images
            .iter()
            .map(|image| CocoImage {
                id: image.image_id,
                width: image.width,
                height: image.height,
                file_name: None,
            })
            .collect(),
        annotations,
        categories: categories
            .iter()
            .map(|(&id, name)| CocoCategory {
                id,
                name: name.clone(),
            })
            .collect(),
    };
    write_json(path, &dataset)
}

// ---------------------------------------------------------------------------
// Sample sets

#[derive(Debug, Serialize, Deserialize)]
struct SampleSetJson {
    image_id: u64,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<Vec<InstanceJson>>,
    samples: Vec<Vec<InstanceJson>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceJson {
    category_id: u32,
    score: f64,
    segmentation: RleJson,
}

impl InstanceJson {
    fn from_instance(inst: &Instance) -> Self {
        InstanceJson {
            category_id: inst.category,
            score: inst.score,
            segmentation: RleJson::from_mask(&inst.mask),
        }
    }

    fn to_instance(&self) -> Result<Instance, String> {
        Ok(Instance::new(
            self.segmentation.to_mask()?,
            self.category_id,
            self.score,
        ))
    }
}

fn instances_from_json(list: &[InstanceJson], context: &str) -> Result<Vec<Instance>, String> {
    list.iter()
        .enumerate()
        .map(|(i, inst)| inst.to_instance().map_err(|e| format!("{context}, instance {i}: {e}")))
        .collect()
}

pub fn load_samples(path: &Path) -> Result<Vec<SampleSet>, IoError> {
    let records: Vec<SampleSetJson> = read_json(path)?;
    records
        .iter()
        .enumerate()
        .map(|(ri, record)| {
            let samples = record
                .samples
                .iter()
                .enumerate()
                .map(|(si, sample)| {
                    Ok(Hypothesis {
                        instances: instances_from_json(
                            sample,
                            &format!("record {ri}, sample {si}"),
                        )?,
                    })
                })
                .collect::<Result<Vec<_>, String>>()
                .map_err(|e| schema_error(path, e))?;
            let mode = record
                .mode
                .as_ref()
                .map(|m| {
                    Ok(Hypothesis {
                        instances: instances_from_json(m, &format!("record {ri}, mode"))?,
                    })
                })
                .transpose()
                .map_err(|e: String| schema_error(path, e))?;
            Ok(SampleSet {
                image_id: record.image_id,
                width: record.width,
                height: record.height,
                samples,
                mode,
            })
        })
        .collect()
}

pub fn save_samples(path: &Path, sets: &[SampleSet]) -> Result<(), IoError> {
    let records: Vec<SampleSetJson> = sets
        .iter()
        .map(|set| SampleSetJson {
            image_id: set.image_id,
            width: set.width,
            height: set.height,
            mode: set
                .mode
                .as_ref()
                .map(|m| m.instances.iter().map(InstanceJson::from_instance).collect()),
            samples: set
                .samples
                .iter()
                .map(|s| s.instances.iter().map(InstanceJson::from_instance).collect())
                .collect(),
        })
        .collect();
    write_json(path, &records)
}

// ---------------------------------------------------------------------------
// Predictions

/// One prediction row: an instance tied to an image, optionally tagged with
/// the confidence requirement it was extracted at.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: u64,
    pub instance: Instance,
    pub p: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionJson {
    image_id: u64,
    category_id: u32,
    score: f64,
    segmentation: RleJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, IoError> {
    let records: Vec<PredictionJson> = read_json(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let mask = record
                .segmentation
                .to_mask()
                .map_err(|e| schema_error(path, format!("prediction {i}: {e}")))?;
            Ok(Prediction {
                image_id: record.image_id,
                instance: Instance::new(mask, record.category_id, record.score),
                p: record.p,
            })
        })
        .collect()
}

pub fn save_predictions(path: &Path, predictions: &[Prediction]) -> Result<(), IoError> {
    let records: Vec<PredictionJson> = predictions
        .iter()
        .map(|pred| PredictionJson {
            image_id: pred.image_id,
            category_id: pred.instance.category,
            score: pred.instance.score,
            segmentation: RleJson::from_mask(&pred.instance.mask),
            p: pred.p,
        })
        .collect();
    write_json(path, &records)
}

/// Group predictions by image, aligned with `images` order. Every prediction
/// must reference a known image and share its dimensions.
pub fn group_predictions(
    predictions: &[Prediction],
    images: &[GroundTruthImage],
) -> Result<Vec<Vec<Instance>>, IoError> {
    let index: BTreeMap<u64, usize> = images
        .iter()
        .enumerate()
        .map(|(i, image)| (image.image_id, i))
        .collect();
    let mut grouped: Vec<Vec<Instance>> = vec![Vec::new(); images.len()];
    for (i, pred) in predictions.iter().enumerate() {
        let Some(&slot) = index.get(&pred.image_id) else {
            return Err(IoError::Invalid(format!(
                "prediction {i} references image {} absent from the ground truth",
                pred.image_id
            )));
        };
        let image = &images[slot];
        let mask = &pred.instance.mask;
        if mask.width() != image.width || mask.height() != image.height {
            return Err(IoError::Invalid(format!(
                "prediction {i} is {}x{} but image {} is {}x{}",
                mask.width(),
                mask.height(),
                pred.image_id,
                image.width,
                image.height
            )));
        }
        grouped[slot].push(pred.instance.clone());
    }
    Ok(grouped)
}

// ---------------------------------------------------------------------------
// Exact-mixture sidecar

#[derive(Debug, Serialize, Deserialize)]
struct MixtureJson {
    image_id: u64,
    width: u32,
    height: u32,
    realized: usize,
    components: Vec<ComponentJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComponentJson {
    weight: WeightJson,
    instances: Vec<InstanceJson>,
}

/// Exact rational weight as decimal strings.
#[derive(Debug, Serialize, Deserialize)]
struct WeightJson {
    numer: String,
    denom: String,
}

pub fn save_mixtures(path: &Path, scenes: &[Scene]) -> Result<(), IoError> {
    let records: Vec<MixtureJson> = scenes
        .iter()
        .map(|scene| MixtureJson {
            image_id: scene.image_id,
            width: scene.width,
            height: scene.height,
            realized: scene.realized,
            components: scene
                .components
                .iter()
                .map(|component| ComponentJson {
                    weight: WeightJson {
                        numer: component.weight.numer().to_string(),
                        denom: component.weight.denom().to_string(),
                    },
                    instances: component
                        .ground_truth
                        .instances
                        .iter()
                        .map(InstanceJson::from_instance)
                        .collect(),
                })
                .collect(),
        })
        .collect();
    write_json(path, &records)
}

pub fn load_mixtures(path: &Path) -> Result<Vec<Scene>, IoError> {
    let records: Vec<MixtureJson> = read_json(path)?;
    records
        .iter()
        .enumerate()
        .map(|(ri, record)| {
            let components = record
                .components
                .iter()
                .enumerate()
                .map(|(ci, component)| {
                    let numer = BigInt::from_str(&component.weight.numer)
                        .map_err(|e| format!("record {ri}, component {ci}: bad weight: {e}"))?;
                    let denom = BigInt::from_str(&component.weight.denom)
                        .map_err(|e| format!("record {ri}, component {ci}: bad weight: {e}"))?;
                    Ok(SceneComponent {
                        weight: BigRational::new(numer, denom),
                        ground_truth: GroundTruthImage {
                            image_id: record.image_id,
                            width: record.width,
                            height: record.height,
                            instances: instances_from_json(
                                &component.instances,
                                &format!("record {ri}, component {ci}"),
                            )?,
                        },
                    })
                })
                .collect::<Result<Vec<_>, String>>()
                .map_err(|e| schema_error(path, e))?;
            if record.realized >= components.len() {
                return Err(schema_error(
                    path,
                    format!("record {ri}: realized index {} out of range", record.realized),
                ));
            }
            Ok(Scene {
                image_id: record.image_id,
                width: record.width,
                height: record.height,
                components,
                realized: record.realized,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Shared JSON plumbing

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let data = std::fs::read(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&data).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut data = serde_json::to_vec(value).expect("serializable value");
    data.push(b'\n');
    std::fs::write(path, data).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Render a mask's RLE as the canonical JSON text, for logs and goldens.
pub fn rle_json_text(mask: &BinaryMask) -> String {
    let mut out = String::new();
    write!(
        out,
        "{}",
        serde_json::to_string(&RleJson::from_mask(mask)).expect("serializable")
    )
    .unwrap();
    out
}
