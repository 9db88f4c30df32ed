//! Post-processing toolkit for distributional instance segmentation.
//!
//! A distributional segmentation model emits `k` complete segmentation
//! hypotheses per image instead of a single prediction. This crate turns those
//! samples into usable outputs and evaluates them:
//!
//! - [`mask`] — run-length-encoded binary masks with exact set algebra; the
//!   substrate for everything else.
//! - [`model`] — instances, hypotheses, sample sets, ground truth.
//! - [`confidence`] — p-confidence masks: intersection-derived regions that lie
//!   inside a single true object with empirical probability at least `p`.
//! - [`nms`] — standard score-ordered NMS and the high-recall Union-NMS
//!   variant that returns each keeper unioned with everything it suppressed.
//! - [`metrics`] — matching, mAP, AR (IoU and IoG), max-recall-at-high-precision,
//!   ROC-AUC calibration, and IoP exceedance fractions.
//! - [`picksim`] — Monte-Carlo double-pick-rate estimation with a circular
//!   gripper footprint, plus pickable-area fraction.
//! - [`synth`] — synthetic ambiguous scenes whose posterior over ground-truth
//!   segmentations is a finite, exactly enumerable mixture; the statistical
//!   oracle used to verify the confidence-mask containment guarantee.
//! - [`io`] — COCO-compatible ground-truth loading, the sample-set and
//!   prediction interchange formats, and report emission.

pub mod confidence;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod nms;
pub mod picksim;
pub mod report;
pub mod synth;

pub use mask::BinaryMask;
pub use model::{GroundTruthImage, Hypothesis, Instance, SampleSet};
