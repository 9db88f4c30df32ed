//! Monte-Carlo double-pick-rate estimation and pickable-area fraction.
//!
//! The gripper footprint is a circle of fixed pixel radius. Probe centers are
//! sampled uniformly over the pixel grid; a probe is *valid* when its disc
//! lies fully inside exactly one predicted mask (a gripper must land entirely
//! on the object it picks), and a valid probe is a *double pick* when the
//! disc touches two or more distinct ground-truth masks (a footprint spanning
//! two items can lift both). Discs that overhang the image edge are invalid,
//! mirroring a gripper that cannot overhang the tote.
//!
//! # Reproducibility
//!
//! The probe stream is fully determined by the seed: a ChaCha8 generator is
//! keyed with the 64-bit seed in little-endian order in the first 8 key bytes
//! (remaining bytes zero, stream/nonce zero). Probe `i` consumes two 32-bit
//! draws, in order: `row = next_u32() % height`, `col = next_u32() % width`.
//! Any implementation following that recipe reproduces `(D, N, R)` exactly.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mask::{BinaryMask, MaskError};
use crate::model::Instance;

#[derive(Debug, Error)]
pub enum PickSimError {
    #[error("gripper radius must be at least 1 pixel, got {0}")]
    InvalidRadius(u32),
    #[error("probe count must be at least 1")]
    NoProbes,
    #[error("total ground-truth area is zero")]
    ZeroGroundTruthArea,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PickSimConfig {
    /// Gripper radius in pixels.
    pub radius: u32,
    /// Number of Monte-Carlo probes.
    pub n_probes: u64,
    pub seed: u64,
}

impl PickSimConfig {
    fn check(&self) -> Result<(), PickSimError> {
        if self.radius < 1 {
            return Err(PickSimError::InvalidRadius(self.radius));
        }
        if self.n_probes < 1 {
            return Err(PickSimError::NoProbes);
        }
        Ok(())
    }
}

/// Estimated double-pick rate `R = D / N`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PickSimResult {
    /// Valid probes that touched two or more ground-truth masks.
    pub double_picks: u64,
    /// Valid probes (disc inside the grid and exactly one predicted mask).
    pub valid_probes: u64,
    /// `D / N`; absent when no probe was valid.
    pub rate: Option<f64>,
    /// Binomial standard error `sqrt(R(1-R)/N)`; absent with the rate.
    pub std_err: Option<f64>,
}

/// The deterministic probe generator shared by this module and its consumers.
pub fn probe_rng(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Rasterize the gripper disc: pixels whose center distance to `center`
/// (a `(row, col)` pixel) is at most `radius`. A disc reaching past the grid
/// is reported as out of bounds, never silently clipped.
pub fn disc_pixels(
    center: (u32, u32),
    radius: u32,
    width: u32,
    height: u32,
) -> Result<Option<BinaryMask>, PickSimError> {
    if radius < 1 {
        return Err(PickSimError::InvalidRadius(radius));
    }
    let (row, col) = center;
    if row < radius || col < radius || row + radius >= height || col + radius >= width {
        return Ok(None);
    }
    let mut pixels = Vec::new();
    let r2 = (radius as i64) * (radius as i64);
    for dr in -(radius as i64)..=radius as i64 {
        for dc in -(radius as i64)..=radius as i64 {
            if dr * dr + dc * dc <= r2 {
                pixels.push(((row as i64 + dr) as u32, (col as i64 + dc) as u32));
            }
        }
    }
    Ok(Some(BinaryMask::from_pixels(width, height, pixels)?))
}

/// Disc offsets `(dr, dc)` with `dr² + dc² ≤ radius²`.
fn disc_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut offsets = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                offsets.push((dr, dc));
            }
        }
    }
    offsets
}

/// Decoded mask with bounding box for cheap probe rejection.
struct ProbeTarget {
    raster: Vec<bool>,
    width: usize,
    // half-open pixel bbox (row0, col0, row1, col1)
    bbox: Option<(u32, u32, u32, u32)>,
}

impl ProbeTarget {
    fn new(mask: &BinaryMask) -> Self {
        ProbeTarget {
            raster: mask.decode(),
            width: mask.width() as usize,
            bbox: mask.bbox(),
        }
    }

    fn get(&self, row: i64, col: i64) -> bool {
        self.raster[row as usize * self.width + col as usize]
    }

    /// Disc bbox must sit inside the mask bbox for containment to be possible.
    fn bbox_contains_disc(&self, center: (u32, u32), radius: u32) -> bool {
        let Some((r0, c0, r1, c1)) = self.bbox else {
            return false;
        };
        let (row, col) = center;
        row >= r0 + radius && col >= c0 + radius && row + radius < r1 && col + radius < c1
    }

    /// Disc bbox must overlap the mask bbox for intersection to be possible.
    fn bbox_touches_disc(&self, center: (u32, u32), radius: u32) -> bool {
        let Some((r0, c0, r1, c1)) = self.bbox else {
            return false;
        };
        let (row, col) = center;
        row + radius >= r0 && row < r1 + radius && col + radius >= c0 && col < c1 + radius
    }
}

/// Monte-Carlo estimate of the double-pick rate.
pub fn estimate_double_pick(
    predictions: &[Instance],
    ground_truths: &[Instance],
    width: u32,
    height: u32,
    config: &PickSimConfig,
) -> Result<PickSimResult, PickSimError> {
    config.check()?;
    let offsets = disc_offsets(config.radius);
    let preds: Vec<ProbeTarget> = predictions.iter().map(|i| ProbeTarget::new(&i.mask)).collect();
    let gts: Vec<ProbeTarget> = ground_truths.iter().map(|i| ProbeTarget::new(&i.mask)).collect();

    let mut rng = probe_rng(config.seed);
    let mut valid = 0u64;
    let mut double = 0u64;
    let radius = config.radius;
    for _ in 0..config.n_probes {
        let row = rng.next_u32() % height;
        let col = rng.next_u32() % width;
        if row < radius || col < radius || row + radius >= height || col + radius >= width {
            continue;
        }
        let mut containing = 0;
        for pred in &preds {
            if !pred.bbox_contains_disc((row, col), radius) {
                continue;
            }
            if offsets
                .iter()
                .all(|&(dr, dc)| pred.get(row as i64 + dr, col as i64 + dc))
            {
                containing += 1;
                if containing > 1 {
                    break;
                }
            }
        }
        if containing != 1 {
            continue;
        }
        valid += 1;
        let mut touched = 0;
        for gt in &gts {
            if !gt.bbox_touches_disc((row, col), radius) {
                continue;
            }
            if offsets
                .iter()
                .any(|&(dr, dc)| gt.get(row as i64 + dr, col as i64 + dc))
            {
                touched += 1;
                if touched >= 2 {
                    break;
                }
            }
        }
        if touched >= 2 {
            double += 1;
        }
    }

    let (rate, std_err) = if valid > 0 {
        let r = double as f64 / valid as f64;
        (Some(r), Some((r * (1.0 - r) / valid as f64).sqrt()))
    } else {
        (None, None)
    };
    Ok(PickSimResult {
        double_picks: double,
        valid_probes: valid,
        rate,
        std_err,
    })
}

/// Total predicted area over total ground-truth area.
pub fn pickable_area_fraction(
    predictions: &[Instance],
    ground_truths: &[Instance],
) -> Result<f64, PickSimError> {
    let gt_area: u64 = ground_truths.iter().map(|i| i.mask.area()).sum();
    if gt_area == 0 {
        return Err(PickSimError::ZeroGroundTruthArea);
    }
    let pred_area: u64 = predictions.iter().map(|i| i.mask.area()).sum();
    Ok(pred_area as f64 / gt_area as f64)
}
