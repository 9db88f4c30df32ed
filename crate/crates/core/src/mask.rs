//! Run-length-encoded binary masks with exact set algebra.
//!
//! A [`BinaryMask`] is a set of pixels on a fixed `width × height` grid,
//! stored as COCO-style uncompressed RLE: run lengths in column-major pixel
//! order, alternating zero-runs and one-runs, starting with a zero-run. The
//! canonical form allows a leading count of 0 (mask starts with a one-run)
//! but no other zero-length run.
//!
//! All set operations walk the run lists directly in
//! `O(|runs_a| + |runs_b|)`; full rasters are materialized only by
//! [`BinaryMask::decode`]. Overlap ratios are computed from exact integer
//! pixel counts and divided once at the end.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("grid dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("grid {width}x{height} exceeds the supported pixel count")]
    GridTooLarge { width: u32, height: u32 },
    #[error("raster has {got} pixels, expected {expected}")]
    RasterLengthMismatch { expected: u64, got: u64 },
    #[error("run lengths sum to {got}, expected width*height = {expected}")]
    CountsSumMismatch { expected: u64, got: u64 },
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("{0} is undefined: denominator is empty")]
    UndefinedRatio(&'static str),
}

/// Binary pixel set on a fixed grid, stored as canonical column-major RLE.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    counts: Vec<u32>,
}

impl BinaryMask {
    /// Empty mask (no pixel set).
    pub fn empty(width: u32, height: u32) -> Result<Self, MaskError> {
        let n = checked_pixels(width, height)?;
        Ok(BinaryMask {
            width,
            height,
            counts: vec![n],
        })
    }

    /// Mask with every pixel set.
    pub fn full(width: u32, height: u32) -> Result<Self, MaskError> {
        let n = checked_pixels(width, height)?;
        Ok(BinaryMask {
            width,
            height,
            counts: vec![0, n],
        })
    }

    /// Build from raw RLE counts (column-major, zero-run first). Accepts
    /// non-canonical input (interior zero-length runs) and normalizes it.
    pub fn from_counts<I>(width: u32, height: u32, counts: I) -> Result<Self, MaskError>
    where
        I: IntoIterator<Item = u32>,
    {
        let n = checked_pixels(width, height)?;
        let mut canonical: Vec<u32> = Vec::new();
        let mut value = false; // value of the run about to be pushed
        let mut sum = 0u64;
        for c in counts {
            sum += c as u64;
            if c == 0 {
                value = !value;
                continue;
            }
            // parity of canonical.len() tells which value the next slot holds
            let next_slot_value = canonical.len() % 2 == 1;
            if value == next_slot_value {
                canonical.push(c);
            } else if canonical.is_empty() {
                // mask starts with a one-run: the permitted leading zero
                canonical.push(0);
                canonical.push(c);
            } else {
                // same value as the previously pushed run: merge
                *canonical.last_mut().unwrap() += c;
            }
            value = !value;
        }
        if sum != n as u64 {
            return Err(MaskError::CountsSumMismatch {
                expected: n as u64,
                got: sum,
            });
        }
        if canonical.is_empty() {
            canonical.push(n);
        }
        Ok(BinaryMask {
            width,
            height,
            counts: canonical,
        })
    }

    /// Encode a row-major boolean raster (`pixels[row * width + col]`).
    pub fn encode(width: u32, height: u32, pixels: &[bool]) -> Result<Self, MaskError> {
        let n = checked_pixels(width, height)?;
        if pixels.len() as u64 != n as u64 {
            return Err(MaskError::RasterLengthMismatch {
                expected: n as u64,
                got: pixels.len() as u64,
            });
        }
        let (w, h) = (width as usize, height as usize);
        let mut counts = Vec::new();
        let mut prev = false;
        let mut run = 0u32;
        for col in 0..w {
            for row in 0..h {
                let v = pixels[row * w + col];
                if v != prev {
                    counts.push(run);
                    run = 0;
                    prev = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Ok(BinaryMask {
            width,
            height,
            counts,
        })
    }

    /// Decode to a row-major boolean raster.
    pub fn decode(&self) -> Vec<bool> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut pixels = vec![false; w * h];
        let mut flat = 0usize; // column-major index
        let mut value = false;
        for &c in &self.counts {
            if value {
                for i in flat..flat + c as usize {
                    let (col, row) = (i / h, i % h);
                    pixels[row * w + col] = true;
                }
            }
            flat += c as usize;
            value = !value;
        }
        pixels
    }

    /// Mask from an iterator of set pixels given as `(row, col)`.
    pub fn from_pixels<I>(width: u32, height: u32, pixels: I) -> Result<Self, MaskError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let n = checked_pixels(width, height)? as usize;
        let mut raster = vec![false; n];
        for (row, col) in pixels {
            debug_assert!(row < height && col < width);
            raster[(row * width + col) as usize] = true;
        }
        Self::encode(width, height, &raster)
    }

    /// Axis-aligned rectangle covering `rows` × `cols` (half-open ranges).
    pub fn rect(
        width: u32,
        height: u32,
        rows: std::ops::Range<u32>,
        cols: std::ops::Range<u32>,
    ) -> Result<Self, MaskError> {
        let n = checked_pixels(width, height)?;
        let r0 = rows.start.min(height);
        let r1 = rows.end.min(height);
        let c0 = cols.start.min(width);
        let c1 = cols.end.min(width);
        if r0 >= r1 || c0 >= c1 {
            return BinaryMask::empty(width, height);
        }
        // Column-major: each covered column holds one run of (r1 - r0) ones.
        let h = height;
        let ones = r1 - r0;
        let mut counts = vec![c0 * h + r0];
        counts.push(ones);
        for _ in c0 + 1..c1 {
            counts.push(h - ones);
            counts.push(ones);
        }
        let sum: u64 = counts.iter().map(|&c| c as u64).sum();
        let trailing = n as u64 - sum;
        if trailing > 0 {
            counts.push(trailing as u32);
        }
        Ok(BinaryMask {
            width,
            height,
            counts,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Raw RLE counts (column-major, zero-run first).
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of set pixels, summed from the one-runs without decoding.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Value of pixel `(row, col)` without decoding (binary search the runs).
    pub fn get(&self, row: u32, col: u32) -> bool {
        debug_assert!(row < self.height && col < self.width);
        let flat = (col as u64) * self.height as u64 + row as u64;
        let mut acc = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            acc += c as u64;
            if flat < acc {
                return i % 2 == 1;
            }
        }
        false
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Pixelwise intersection.
    pub fn intersect(&self, other: &BinaryMask) -> Result<BinaryMask, MaskError> {
        self.check_dims(other)?;
        Ok(combine(self, other, |a, b| a && b))
    }

    /// Pixelwise union.
    pub fn union_of(&self, other: &BinaryMask) -> Result<BinaryMask, MaskError> {
        self.check_dims(other)?;
        Ok(combine(self, other, |a, b| a || b))
    }

    /// Pixels of `self` not in `other`.
    pub fn subtract(&self, other: &BinaryMask) -> Result<BinaryMask, MaskError> {
        self.check_dims(other)?;
        Ok(combine(self, other, |a, b| a && !b))
    }

    /// Intersection area without materializing the intersection mask.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64, MaskError> {
        self.check_dims(other)?;
        Ok(combined_area(self, other, |a, b| a && b))
    }

    /// `|self ∩ other ∖ excluded|` in a single three-stream walk.
    pub fn intersection_area_excluding(
        &self,
        other: &BinaryMask,
        excluded: &BinaryMask,
    ) -> Result<u64, MaskError> {
        self.check_dims(other)?;
        self.check_dims(excluded)?;
        Ok(combined_area3(self, other, excluded, |a, b, c| a && b && !c))
    }

    /// True iff every set pixel of `inner` is set in `self`.
    pub fn contains(&self, inner: &BinaryMask) -> Result<bool, MaskError> {
        self.check_dims(inner)?;
        Ok(combined_area(self, inner, |outer, inner| inner && !outer) == 0)
    }

    /// Intersection over union. Undefined (error) when both masks are empty.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64, MaskError> {
        self.check_dims(other)?;
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Err(MaskError::UndefinedRatio("iou"));
        }
        Ok(inter as f64 / union as f64)
    }

    /// Intersection over prediction area: `|pred ∩ gt| / |pred|`.
    pub fn iop(&self, gt: &BinaryMask) -> Result<f64, MaskError> {
        self.check_dims(gt)?;
        let denom = self.area();
        if denom == 0 {
            return Err(MaskError::UndefinedRatio("iop"));
        }
        Ok(self.intersection_area(gt)? as f64 / denom as f64)
    }

    /// Intersection over ground-truth area: `|pred ∩ gt| / |gt|`.
    pub fn iog(&self, gt: &BinaryMask) -> Result<f64, MaskError> {
        self.check_dims(gt)?;
        let denom = gt.area();
        if denom == 0 {
            return Err(MaskError::UndefinedRatio("iog"));
        }
        Ok(self.intersection_area(gt)? as f64 / denom as f64)
    }

    /// Bounding box `(row0, col0, row1, col1)` of the set pixels, half-open.
    /// `None` for the empty mask.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let h = self.height as u64;
        let mut flat = 0u64;
        let (mut r0, mut c0, mut r1, mut c1) = (u64::MAX, u64::MAX, 0u64, 0u64);
        let mut any = false;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 && c > 0 {
                any = true;
                let start = flat;
                let end = flat + c as u64 - 1;
                let (sc, sr) = (start / h, start % h);
                let (ec, er) = (end / h, end % h);
                c0 = c0.min(sc);
                c1 = c1.max(ec + 1);
                if sc == ec {
                    r0 = r0.min(sr);
                    r1 = r1.max(er + 1);
                } else {
                    // run spans whole columns in between
                    r0 = 0;
                    r1 = h;
                }
            }
            flat += c as u64;
        }
        any.then_some((r0 as u32, c0 as u32, r1 as u32, c1 as u32))
    }
}

fn checked_pixels(width: u32, height: u32) -> Result<u32, MaskError> {
    if width == 0 || height == 0 {
        return Err(MaskError::ZeroDimension { width, height });
    }
    let n = width as u64 * height as u64;
    u32::try_from(n).map_err(|_| MaskError::GridTooLarge { width, height })
}

/// Cursor over an RLE run stream, yielding `(value, remaining)` runs.
struct Runs<'a> {
    counts: &'a [u32],
    idx: usize,
    remaining: u64,
    value: bool,
}

impl<'a> Runs<'a> {
    fn new(mask: &'a BinaryMask) -> Self {
        Runs {
            counts: &mask.counts,
            idx: 0,
            remaining: 0,
            value: true, // flipped to false by the first refill
        }
    }

    /// Ensure the current run is non-empty; false once the stream is done.
    fn refill(&mut self) -> bool {
        while self.remaining == 0 {
            if self.idx >= self.counts.len() {
                return false;
            }
            self.remaining = self.counts[self.idx] as u64;
            self.value = self.idx % 2 == 1;
            self.idx += 1;
        }
        true
    }

    fn advance(&mut self, step: u64) {
        self.remaining -= step;
    }
}

struct RunBuilder {
    counts: Vec<u32>,
    last_value: bool,
}

impl RunBuilder {
    fn new() -> Self {
        RunBuilder {
            counts: Vec::new(),
            last_value: false,
        }
    }

    fn push(&mut self, value: bool, len: u64) {
        if len == 0 {
            return;
        }
        if self.counts.is_empty() {
            if value {
                self.counts.push(0);
            }
            self.counts.push(len as u32);
        } else if value == self.last_value {
            *self.counts.last_mut().unwrap() += len as u32;
        } else {
            self.counts.push(len as u32);
        }
        self.last_value = value;
    }

    fn finish(mut self, width: u32, height: u32, total: u64) -> BinaryMask {
        if self.counts.is_empty() {
            self.counts.push(total as u32);
        }
        BinaryMask {
            width,
            height,
            counts: self.counts,
        }
    }
}

fn combine(a: &BinaryMask, b: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
    let total = a.width as u64 * a.height as u64;
    let mut ra = Runs::new(a);
    let mut rb = Runs::new(b);
    let mut out = RunBuilder::new();
    let mut done = 0u64;
    while done < total {
        if !ra.refill() || !rb.refill() {
            break;
        }
        let step = ra.remaining.min(rb.remaining);
        out.push(f(ra.value, rb.value), step);
        ra.advance(step);
        rb.advance(step);
        done += step;
    }
    out.finish(a.width, a.height, total)
}

fn combined_area(a: &BinaryMask, b: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> u64 {
    let total = a.width as u64 * a.height as u64;
    let mut ra = Runs::new(a);
    let mut rb = Runs::new(b);
    let mut done = 0u64;
    let mut area = 0u64;
    while done < total {
        if !ra.refill() || !rb.refill() {
            break;
        }
        let step = ra.remaining.min(rb.remaining);
        if f(ra.value, rb.value) {
            area += step;
        }
        ra.advance(step);
        rb.advance(step);
        done += step;
    }
    area
}

fn combined_area3(
    a: &BinaryMask,
    b: &BinaryMask,
    c: &BinaryMask,
    f: impl Fn(bool, bool, bool) -> bool,
) -> u64 {
    let total = a.width as u64 * a.height as u64;
    let mut ra = Runs::new(a);
    let mut rb = Runs::new(b);
    let mut rc = Runs::new(c);
    let mut done = 0u64;
    let mut area = 0u64;
    while done < total {
        if !ra.refill() || !rb.refill() || !rc.refill() {
            break;
        }
        let step = ra.remaining.min(rb.remaining).min(rc.remaining);
        if f(ra.value, rb.value, rc.value) {
            area += step;
        }
        ra.advance(step);
        rb.advance(step);
        rc.advance(step);
        done += step;
    }
    area
}

/// Intersection of several masks minus `excluded`, folded pairwise so the
/// accumulator shrinks as it goes; bails out early once empty.
pub fn intersect_all_excluding(
    masks: &[&BinaryMask],
    excluded: &BinaryMask,
) -> Result<BinaryMask, MaskError> {
    let first = masks.first().expect("intersect_all_excluding needs a mask");
    let mut acc = first.subtract(excluded)?;
    for mask in &masks[1..] {
        if acc.is_empty() {
            break;
        }
        acc = acc.intersect(mask)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_rows(rows: &[&str]) -> BinaryMask {
        let height = rows.len() as u32;
        let width = rows[0].len() as u32;
        let pixels: Vec<bool> = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryMask::encode(width, height, &pixels).unwrap()
    }

    #[test]
    fn encode_all_false() {
        let m = BinaryMask::encode(2, 2, &[false; 4]).unwrap();
        assert_eq!(m.counts(), &[4]);
    }

    #[test]
    fn encode_all_true() {
        let m = BinaryMask::encode(2, 2, &[true; 4]).unwrap();
        assert_eq!(m.counts(), &[0, 4]);
    }

    #[test]
    fn encode_single_pixel_column_major() {
        // 3x3, only (row 0, col 0) set: column-major puts it first.
        let m = BinaryMask::from_pixels(3, 3, [(0, 0)]).unwrap();
        assert_eq!(m.counts(), &[0, 1, 8]);
    }

    #[test]
    fn encode_zero_grid_is_error() {
        assert_eq!(
            BinaryMask::encode(0, 2, &[]),
            Err(MaskError::ZeroDimension {
                width: 0,
                height: 2
            })
        );
    }

    #[test]
    fn decode_trivial_masks() {
        let empty = BinaryMask::from_counts(2, 2, [4]).unwrap();
        assert_eq!(empty.decode(), vec![false; 4]);
        let full = BinaryMask::from_counts(2, 2, [0, 4]).unwrap();
        assert_eq!(full.decode(), vec![true; 4]);
        let single = BinaryMask::from_counts(3, 3, [0, 1, 8]).unwrap();
        let mut expected = vec![false; 9];
        expected[0] = true;
        assert_eq!(single.decode(), expected);
    }

    #[test]
    fn from_counts_bad_sum_is_error() {
        assert_eq!(
            BinaryMask::from_counts(2, 2, [3]),
            Err(MaskError::CountsSumMismatch {
                expected: 4,
                got: 3
            })
        );
    }

    #[test]
    fn from_counts_normalizes_interior_zeros() {
        // [1, 2, 0, 1] has an interior zero: the two one-runs merge.
        let m = BinaryMask::from_counts(2, 2, [1, 2, 0, 1]).unwrap();
        assert_eq!(m.counts(), &[1, 3]);
        // zero-length leading run followed by more zeros collapses too
        let m = BinaryMask::from_counts(2, 2, [0, 0, 4]).unwrap();
        assert_eq!(m.counts(), &[4]);
    }

    #[test]
    fn area_examples() {
        assert_eq!(BinaryMask::empty(5, 5).unwrap().area(), 0);
        assert_eq!(BinaryMask::full(4, 4).unwrap().area(), 16);
        let rect = BinaryMask::rect(10, 10, 2..4, 3..6).unwrap();
        assert_eq!(rect.area(), 6);
    }

    #[test]
    fn set_ops_idempotence_and_identity() {
        let m = mask_from_rows(&["#.#", ".##", "..."]);
        let empty = BinaryMask::empty(3, 3).unwrap();
        assert_eq!(m.intersect(&m).unwrap(), m);
        assert_eq!(m.union_of(&m).unwrap(), m);
        assert!(m.subtract(&m).unwrap().is_empty());
        assert!(m.intersect(&empty).unwrap().is_empty());
        assert_eq!(m.union_of(&empty).unwrap(), m);
    }

    #[test]
    fn set_ops_on_overlapping_rects() {
        // rows 0-1 x cols 0-2 vs rows 0-1 x cols 1-3 in 5x5
        let a = BinaryMask::rect(5, 5, 0..2, 0..3).unwrap();
        let b = BinaryMask::rect(5, 5, 0..2, 1..4).unwrap();
        assert_eq!(a.intersect(&b).unwrap().area(), 4);
        assert_eq!(a.union_of(&b).unwrap().area(), 8);
        assert_eq!(a.intersection_area(&b).unwrap(), 4);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = BinaryMask::empty(3, 3).unwrap();
        let b = BinaryMask::empty(4, 3).unwrap();
        assert!(matches!(
            a.intersect(&b),
            Err(MaskError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn contains_examples() {
        let m = mask_from_rows(&["##.", "##.", "..."]);
        let empty = BinaryMask::empty(3, 3).unwrap();
        assert!(m.contains(&m).unwrap());
        assert!(m.contains(&empty).unwrap());
        let outer = BinaryMask::rect(10, 10, 0..2, 0..3).unwrap();
        let inner = BinaryMask::rect(10, 10, 0..1, 0..2).unwrap();
        assert!(outer.contains(&inner).unwrap());
        assert!(!inner.contains(&outer).unwrap());
    }

    #[test]
    fn overlap_ratios() {
        let a = BinaryMask::rect(8, 8, 0..2, 0..3).unwrap(); // 6 px
        let b = BinaryMask::rect(8, 8, 0..2, 1..4).unwrap(); // 6 px, overlap 4
        assert_eq!(a.iou(&b).unwrap(), 0.5);
        assert_eq!(a.iop(&b).unwrap(), 4.0 / 6.0);
        assert_eq!(a.iog(&b).unwrap(), 4.0 / 6.0);

        let disjoint = BinaryMask::rect(8, 8, 5..7, 5..7).unwrap();
        assert_eq!(a.iou(&disjoint).unwrap(), 0.0);
        assert_eq!(a.iop(&disjoint).unwrap(), 0.0);
        assert_eq!(a.iog(&disjoint).unwrap(), 0.0);
        assert_eq!(a.iou(&a).unwrap(), 1.0);
        assert_eq!(a.iop(&a).unwrap(), 1.0);
        assert_eq!(a.iog(&a).unwrap(), 1.0);
    }

    #[test]
    fn undefined_ratios_are_errors() {
        let empty = BinaryMask::empty(3, 3).unwrap();
        let m = BinaryMask::rect(3, 3, 0..1, 0..1).unwrap();
        assert_eq!(empty.iou(&empty), Err(MaskError::UndefinedRatio("iou")));
        assert_eq!(empty.iop(&m), Err(MaskError::UndefinedRatio("iop")));
        assert_eq!(m.iog(&empty), Err(MaskError::UndefinedRatio("iog")));
        // one side empty is fine for iou
        assert_eq!(m.iou(&empty).unwrap(), 0.0);
    }

    #[test]
    fn containment_implies_iop_one() {
        let outer = BinaryMask::rect(10, 10, 1..5, 1..5).unwrap();
        let inner = BinaryMask::rect(10, 10, 2..4, 2..4).unwrap();
        assert!(outer.contains(&inner).unwrap());
        assert_eq!(inner.iop(&outer).unwrap(), 1.0);
    }

    #[test]
    fn intersect_all_excluding_matches_pairwise() {
        let a = BinaryMask::rect(6, 6, 0..4, 0..4).unwrap();
        let b = BinaryMask::rect(6, 6, 1..5, 0..4).unwrap();
        let c = BinaryMask::rect(6, 6, 0..4, 1..5).unwrap();
        let claimed = BinaryMask::rect(6, 6, 1..2, 1..2).unwrap();
        let got = intersect_all_excluding(&[&a, &b, &c], &claimed).unwrap();
        let expected = a
            .intersect(&b)
            .unwrap()
            .intersect(&c)
            .unwrap()
            .subtract(&claimed)
            .unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn bbox_of_rect() {
        let m = BinaryMask::rect(10, 8, 2..5, 3..7).unwrap();
        assert_eq!(m.bbox(), Some((2, 3, 5, 7)));
        assert_eq!(BinaryMask::empty(4, 4).unwrap().bbox(), None);
        assert_eq!(BinaryMask::full(4, 4).unwrap().bbox(), Some((0, 0, 4, 4)));
    }

    #[test]
    fn get_matches_decode() {
        let m = mask_from_rows(&["#..#", ".##.", "#..#"]);
        let raster = m.decode();
        for row in 0..3 {
            for col in 0..4 {
                assert_eq!(m.get(row, col), raster[(row * 4 + col) as usize]);
            }
        }
    }
}
