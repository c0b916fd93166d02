//! The Min Mask Sketch.
//!
//! A `depth x width` grid of policy bitmasks. Adding an item ORs its mask
//! into one cell per row, chosen by hashing the item's key. Querying reads
//! the same `depth` cells back and returns the one with the fewest active
//! conditions. Because cells only ever gain bits, every cell an item was
//! written to still holds all of that item's bits, so the answer is always
//! a bit-superset of the true mask: collisions can only add restrictions.
//!
//! The grid size depends only on `epsilon` and `confidence`, never on how
//! many items have been added.
//!
//! There is deliberately no way to clear bits or delete an item. Lowering a
//! shared cell would corrupt the answer of every other item hashed there.
//!
//! Users are supposed to synchronize concurrent accesses to the data structure.

use std::f64::consts::E;

use thiserror::Error;

use crate::hash::RowHasher;
use crate::mask::{select_min_mask, PolicyMask};

pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_CONFIDENCE: f64 = 0.99;
/// Cells are 64-bit masks.
pub const CELL_WIDTH_BITS: u8 = 64;

/// Upper bound on `width * depth`, keeping grids addressable and the
/// on-disk dimensions within `u32`.
const MAX_CELLS: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("confidence must lie in (0, 1), got {0}")]
    Confidence(f64),
    #[error("epsilon {epsilon} and confidence {confidence} give a {depth}x{width} grid, larger than supported")]
    GridTooLarge {
        epsilon: f64,
        confidence: f64,
        width: u64,
        depth: u64,
    },
}

/// Tuning knobs fixed at creation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchParams {
    epsilon: f64,
    confidence: f64,
    seed: u64,
}

impl SketchParams {
    pub fn new(epsilon: f64, confidence: f64, seed: u64) -> Result<Self, ParamError> {
        compute_dimensions(epsilon, confidence)?;
        Ok(SketchParams {
            epsilon,
            confidence,
            seed,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SketchParams { seed, ..self }
    }

    pub fn cell_width_bits(&self) -> u8 {
        CELL_WIDTH_BITS
    }

    /// `(width, depth)` for these parameters.
    pub fn dimensions(&self) -> (usize, usize) {
        compute_dimensions(self.epsilon, self.confidence).expect("validated at construction")
    }
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams {
            epsilon: DEFAULT_EPSILON,
            confidence: DEFAULT_CONFIDENCE,
            seed: 0,
        }
    }
}

/// Grid dimensions `(width, depth)`:
/// `width = ceil(e / epsilon)`, `depth = max(1, ceil(ln(1 / (1 - confidence))))`.
pub fn compute_dimensions(epsilon: f64, confidence: f64) -> Result<(usize, usize), ParamError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ParamError::Epsilon(epsilon));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(ParamError::Confidence(confidence));
    }
    let width = (E / epsilon).ceil();
    let depth = (1.0 / (1.0 - confidence)).ln().ceil().max(1.0);
    let too_large = || ParamError::GridTooLarge {
        epsilon,
        confidence,
        width: width as u64,
        depth: depth as u64,
    };
    if width > u32::MAX as f64 || depth > u32::MAX as f64 {
        return Err(too_large());
    }
    let (width, depth) = (width as u64, depth as u64);
    if width * depth > MAX_CELLS {
        return Err(too_large());
    }
    Ok((width as usize, depth as usize))
}

/// How a query turns the `depth` candidate cells into one answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// The candidate with the fewest set bits (ties to the smaller value).
    #[default]
    MinPopcount,
    /// Bitwise AND of all candidates. Still a superset of the true mask and
    /// never has more bits than the min-popcount candidate.
    Intersection,
}

/// Answer to a point query, with the raw cells it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryEstimate {
    pub estimate: PolicyMask,
    /// One cell per row, in row order.
    pub candidates: Vec<PolicyMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaskSketch {
    params: SketchParams,
    width: usize,
    depth: usize,
    /// Row-major `depth * width` grid.
    cells: Vec<PolicyMask>,
    insert_count: u64,
}

impl MinMaskSketch {
    pub fn new(params: SketchParams) -> Self {
        let (width, depth) = params.dimensions();
        MinMaskSketch {
            params,
            width,
            depth,
            cells: vec![PolicyMask::EMPTY; width * depth],
            insert_count: 0,
        }
    }

    /// Builds a sketch directly from its stored parts. Dimensions must
    /// match the parameters and `cells` must hold `depth * width` entries.
    pub(crate) fn from_parts(params: SketchParams, cells: Vec<PolicyMask>, insert_count: u64) -> Self {
        let (width, depth) = params.dimensions();
        debug_assert_eq!(cells.len(), width * depth);
        MinMaskSketch {
            params,
            width,
            depth,
            cells,
            insert_count,
        }
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of `add` calls since creation, repeats included.
    pub fn insert_count(&self) -> u64 {
        self.insert_count
    }

    /// The whole grid, row-major.
    pub fn cells(&self) -> &[PolicyMask] {
        &self.cells
    }

    pub fn row(&self, row: usize) -> &[PolicyMask] {
        &self.cells[row * self.width..(row + 1) * self.width]
    }

    /// Size of the cell grid in bytes. Constant for the sketch's lifetime.
    pub fn grid_bytes(&self) -> usize {
        self.cells.len() * std::mem::size_of::<PolicyMask>()
    }

    /// Total number of set bits across the grid.
    pub fn total_set_bits(&self) -> u64 {
        self.cells.iter().map(|c| u64::from(c.popcount())).sum()
    }

    /// Column that `key` maps to in `row`.
    pub fn index_row(&self, key: impl AsRef<[u8]>, row: usize) -> usize {
        assert!(row < self.depth, "row {row} out of range for depth {}", self.depth);
        RowHasher::new(key.as_ref(), self.params.seed).column(row, self.width)
    }

    /// Flat grid offsets (`row * width + column`) of `key`'s cells, one per row.
    pub fn cell_offsets(&self, key: impl AsRef<[u8]>) -> Vec<usize> {
        let hasher = RowHasher::new(key.as_ref(), self.params.seed);
        (0..self.depth)
            .map(|row| row * self.width + hasher.column(row, self.width))
            .collect()
    }

    /// ORs `mask` into `key`'s cell in every row.
    pub fn add(&mut self, key: impl AsRef<[u8]>, mask: PolicyMask) {
        let hasher = RowHasher::new(key.as_ref(), self.params.seed);
        for row in 0..self.depth {
            let col = hasher.column(row, self.width);
            self.cells[row * self.width + col] |= mask;
        }
        self.insert_count += 1;
    }

    /// Min-popcount estimate of `key`'s mask.
    pub fn get_mask(&self, key: impl AsRef<[u8]>) -> QueryEstimate {
        self.get_mask_with(key, Estimator::MinPopcount)
    }

    pub fn get_mask_with(&self, key: impl AsRef<[u8]>, estimator: Estimator) -> QueryEstimate {
        let candidates: Vec<PolicyMask> = self
            .cell_offsets(key)
            .into_iter()
            .map(|offset| self.cells[offset])
            .collect();
        let estimate = match estimator {
            Estimator::MinPopcount => select_min_mask(&candidates).expect("depth is at least 1"),
            Estimator::Intersection => candidates.iter().fold(PolicyMask::new(u64::MAX), |acc, &c| acc & c),
        };
        QueryEstimate { estimate, candidates }
    }
}
