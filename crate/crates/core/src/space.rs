//! Byte accounting for sketch, log and exact policy storage, and empirical
//! error measurement for the sketch.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::baseline::ExactStore;
use crate::codec;
use crate::mask::PolicyMask;
use crate::sketch::{MinMaskSketch, SketchParams};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("space model field {0} must be positive")]
    NonPositive(&'static str),
}

/// Byte sizes used for storage comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceModel {
    pub sketch_header_bytes: u64,
    pub cell_bytes: u64,
    /// One policy-change entry: a timestamp plus one flag per condition.
    pub log_entry_bytes: u64,
    /// Policy bytes per row when stored as one boolean column per condition.
    pub exact_policy_bytes_per_row: u64,
    /// Primary data bytes per row.
    pub data_bytes_per_row: u64,
}

impl SpaceModel {
    /// The sizes this crate actually uses: the 56-byte file header and
    /// 64-bit cells.
    pub const ARTIFACT: SpaceModel = SpaceModel {
        sketch_header_bytes: codec::HEADER_BYTES as u64,
        cell_bytes: codec::CELL_BYTES as u64,
        log_entry_bytes: 43,
        exact_policy_bytes_per_row: 3,
        data_bytes_per_row: 16,
    };

    /// A compact layout: two 32-bit dimension fields and 32-bit cells.
    pub const PAPER_CALIBRATION: SpaceModel = SpaceModel {
        sketch_header_bytes: 8,
        cell_bytes: 4,
        ..SpaceModel::ARTIFACT
    };

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("cell_bytes", self.cell_bytes),
            ("log_entry_bytes", self.log_entry_bytes),
            ("data_bytes_per_row", self.data_bytes_per_row),
        ] {
            if v == 0 {
                return Err(ModelError::NonPositive(name));
            }
        }
        Ok(())
    }
}

impl Default for SpaceModel {
    fn default() -> Self {
        SpaceModel::ARTIFACT
    }
}

/// Header plus grid. Independent of how many items were added.
pub fn sketch_bytes(params: &SketchParams, model: &SpaceModel) -> u64 {
    let (width, depth) = params.dimensions();
    model.sketch_header_bytes + (width * depth) as u64 * model.cell_bytes
}

pub fn log_bytes(change_count: u64, model: &SpaceModel) -> u64 {
    change_count * model.log_entry_bytes
}

/// Policy bytes for `rows` rows stored with per-row boolean columns.
pub fn exact_bytes(rows: u64, model: &SpaceModel) -> u64 {
    rows * model.exact_policy_bytes_per_row
}

/// Smallest change count at which the log is at least as large as the sketch.
pub fn crossover_changes(params: &SketchParams, model: &SpaceModel) -> u64 {
    sketch_bytes(params, model).div_ceil(model.log_entry_bytes)
}

/// Policy bytes over data bytes per row: the most the sketch could save
/// relative to per-row columns if it took no space at all.
pub fn overhead_ratio(model: &SpaceModel) -> f64 {
    model.exact_policy_bytes_per_row as f64 / model.data_bytes_per_row as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurvePoint {
    pub changes: u64,
    pub log_bytes: u64,
    pub sketch_bytes: u64,
}

/// Log vs sketch size for 1..=max_changes policy changes.
pub fn space_curve(params: &SketchParams, model: &SpaceModel, max_changes: u64) -> Vec<CurvePoint> {
    let sketch = sketch_bytes(params, model);
    (1..=max_changes)
        .map(|changes| CurvePoint {
            changes,
            log_bytes: log_bytes(changes, model),
            sketch_bytes: sketch,
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(mut out: W, points: &[CurvePoint]) -> io::Result<()> {
    writeln!(out, "changes,log_bytes,sketch_bytes")?;
    for p in points {
        writeln!(out, "{},{},{}", p.changes, p.log_bytes, p.sketch_bytes)?;
    }
    Ok(())
}

/// Ordered `(key, mask)` adds.
pub type Workload = Vec<(Vec<u8>, PolicyMask)>;

/// `inserts` distinct keys, each with one random bit from `0..bits` set.
pub fn single_bit_workload(inserts: usize, bits: u32, seed: u64) -> Workload {
    assert!((1..=64).contains(&bits), "bits must be in 1..=64");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..inserts)
        .map(|i| {
            let bit = rng.gen_range(0..bits);
            (format!("item-{i}").into_bytes(), PolicyMask::new(1 << bit))
        })
        .collect()
}

/// Error statistics for one sketch seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedErrors {
    pub seed: u64,
    pub queries: u64,
    pub superset_violations: u64,
    pub extra_bits: u64,
    pub queries_with_extra: u64,
}

impl SeedErrors {
    pub fn extra_bit_rate(&self) -> f64 {
        ratio(self.extra_bits, self.queries)
    }

    pub fn any_extra_fraction(&self) -> f64 {
        ratio(self.queries_with_extra, self.queries)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Total queries across all seeds.
    pub trials: u64,
    pub superset_violations: u64,
    /// Mean number of estimate bits absent from the true mask, per query.
    pub extra_bit_rate: f64,
    /// Fraction of queries with at least one extra bit.
    pub any_extra_fraction: f64,
    pub per_seed: Vec<SeedErrors>,
}

impl ErrorReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "seed,extra_bit_rate,any_extra_fraction")?;
        for s in &self.per_seed {
            writeln!(out, "{},{},{}", s.seed, s.extra_bit_rate(), s.any_extra_fraction())?;
        }
        Ok(())
    }
}

fn run_seed(workload: &[(Vec<u8>, PolicyMask)], query_keys: &[Vec<u8>], params: SketchParams) -> SeedErrors {
    let mut sketch = MinMaskSketch::new(params);
    let mut exact = ExactStore::new();
    for (key, mask) in workload {
        sketch.add(key, *mask);
        exact.add(key, *mask);
    }
    let mut stats = SeedErrors {
        seed: params.seed(),
        queries: 0,
        superset_violations: 0,
        extra_bits: 0,
        queries_with_extra: 0,
    };
    for key in query_keys {
        let truth = exact.get(key);
        let estimate = sketch.get_mask(key).estimate;
        stats.queries += 1;
        if !estimate.is_superset_of(truth) {
            stats.superset_violations += 1;
        }
        let extra = estimate.extra_bits(truth).popcount();
        stats.extra_bits += u64::from(extra);
        if extra > 0 {
            stats.queries_with_extra += 1;
        }
    }
    stats
}

/// Builds a sketch and an exact store from `workload` once per seed
/// (`params.seed()`, `params.seed() + 1`, ...), queries every key in
/// `query_keys`, and aggregates the errors. Seeds run in parallel; results
/// are reported in seed order.
pub fn measure_error(
    workload: &[(Vec<u8>, PolicyMask)],
    query_keys: &[Vec<u8>],
    params: &SketchParams,
    seed_count: u64,
) -> ErrorReport {
    let per_seed: Vec<SeedErrors> = (0..seed_count)
        .into_par_iter()
        .map(|i| run_seed(workload, query_keys, params.with_seed(params.seed().wrapping_add(i))))
        .collect();
    let sum = |f: fn(&SeedErrors) -> u64| per_seed.iter().map(f).sum::<u64>();
    let trials = sum(|s| s.queries);
    ErrorReport {
        trials,
        superset_violations: sum(|s| s.superset_violations),
        extra_bit_rate: ratio(sum(|s| s.extra_bits), trials),
        any_extra_fraction: ratio(sum(|s| s.queries_with_extra), trials),
        per_seed,
    }
}

/// Paired comparison of two sketch configurations on the same workload and
/// seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthComparison {
    pub narrow: ErrorReport,
    pub wide: ErrorReport,
    /// One-sided signed-rank p-value for "narrow has more extra bits".
    pub p_value: f64,
}

impl WidthComparison {
    /// The wide configuration's mean error is no larger and the
    /// improvement is significant at `alpha`.
    pub fn wide_dominates(&self, alpha: f64) -> bool {
        self.wide.extra_bit_rate <= self.narrow.extra_bit_rate && self.p_value < alpha
    }
}

pub fn compare_widths(
    workload: &[(Vec<u8>, PolicyMask)],
    query_keys: &[Vec<u8>],
    narrow: &SketchParams,
    wide: &SketchParams,
    seed_count: u64,
) -> WidthComparison {
    let narrow = measure_error(workload, query_keys, narrow, seed_count);
    let wide = measure_error(workload, query_keys, wide, seed_count);
    let diffs: Vec<f64> = narrow
        .per_seed
        .iter()
        .zip(&wide.per_seed)
        .map(|(n, w)| n.extra_bit_rate() - w.extra_bit_rate())
        .collect();
    let p_value = signed_rank_p_greater(&diffs);
    WidthComparison { narrow, wide, p_value }
}

/// Largest sample for which the exact null distribution is enumerated.
const EXACT_SIGNED_RANK_LIMIT: usize = 200;

/// One-sided Wilcoxon signed-rank test of "differences tend to be
/// positive". Zero differences are dropped and tied magnitudes get average
/// ranks. Returns `P(W+ >= observed)` under random signs: exact for up to
/// 200 non-zero differences, normal approximation above that. With no
/// non-zero differences the p-value is 1.
pub fn signed_rank_p_greater(diffs: &[f64]) -> f64 {
    let mut nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return 1.0;
    }
    nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    // Doubled ranks keep average ranks integral.
    let mut doubled = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[j + 1].abs() == nonzero[i].abs() {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, times two
        let avg2 = (i + 1 + j + 1) as u64;
        doubled[i..=j].fill(avg2);
        i = j + 1;
    }
    let observed: u64 = nonzero
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    if n <= EXACT_SIGNED_RANK_LIMIT {
        let total: u64 = doubled.iter().sum();
        let mut dist = vec![0.0f64; total as usize + 1];
        dist[0] = 1.0;
        let mut reach = 0usize;
        for &r in &doubled {
            let r = r as usize;
            for s in (0..=reach).rev() {
                let p = dist[s] * 0.5;
                dist[s] = p;
                dist[s + r] += p;
            }
            reach += r;
        }
        dist[observed as usize..].iter().sum::<f64>().min(1.0)
    } else {
        let mean: f64 = doubled.iter().map(|&r| r as f64).sum::<f64>() / 2.0;
        let var: f64 = doubled.iter().map(|&r| (r as f64).powi(2)).sum::<f64>() / 4.0;
        let z = (observed as f64 - 1.0 - mean) / var.sqrt();
        1.0 - Normal::standard().cdf(z)
    }
}
