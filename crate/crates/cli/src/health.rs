//! Health-tracker records, a synthetic data generator, and the three-way
//! (sketch / exact / log) policy resolution report.

use std::collections::HashSet;
use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mms_core::policy::{attribute_decisions, ConditionRegistry, Decision, SharingContext};
use mms_core::{ExactStore, LogStore, MinMaskSketch, PolicyMask, SketchParams, Timestamp};

pub const CSV_HEADER: [&str; 4] = ["time", "heart_rate", "blood_sugar", "body_temp"];

#[derive(Debug, Clone, PartialEq)]
pub struct HealthRecord {
    pub time: Timestamp,
    /// beats per minute
    pub heart_rate: i16,
    /// mg/dL
    pub blood_sugar: i16,
    /// degrees Fahrenheit
    pub body_temp: f32,
}

/// Reads `time,heart_rate,blood_sugar,body_temp` rows. Errors name the
/// offending line; times must be unique.
pub fn read_records<R: Read>(input: R) -> Result<Vec<HealthRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().context("reading CSV header")?.clone();
    if header.iter().ne(CSV_HEADER) {
        bail!(
            "line 1: expected header `{}`, got `{}`",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        );
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.context("malformed CSV")?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            bail!("line {line}: expected 4 fields, got {}", row.len());
        }
        let field = |i: usize| &row[i];
        let time: Timestamp = field(0).parse().with_context(|| format!("line {line}: time"))?;
        let record = HealthRecord {
            time,
            heart_rate: field(1)
                .parse()
                .with_context(|| format!("line {line}: heart_rate {:?}", field(1)))?,
            blood_sugar: field(2)
                .parse()
                .with_context(|| format!("line {line}: blood_sugar {:?}", field(2)))?,
            body_temp: field(3)
                .parse()
                .with_context(|| format!("line {line}: body_temp {:?}", field(3)))?,
        };
        if !seen.insert(time) {
            bail!("line {line}: duplicate time {time}");
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut out: W, records: &[HealthRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for r in records {
        writeln!(out, "{},{},{},{:.1}", r.time, r.heart_rate, r.blood_sugar, r.body_temp)?;
    }
    Ok(())
}

/// `rows` readings `cadence_secs` apart starting at `start`, with
/// plausible values drawn from a seeded generator.
pub fn generate_records(start: Timestamp, rows: usize, cadence_secs: i64, seed: u64) -> Vec<HealthRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|i| HealthRecord {
            time: start.plus_seconds(i as i64 * cadence_secs),
            heart_rate: rng.gen_range(55..=170),
            blood_sugar: rng.gen_range(70..=180),
            body_temp: (rng.gen_range(970..=1004) as f32) / 10.0,
        })
        .collect()
}

/// Masks cycled through by the generated schedule: everything private,
/// exercising (blood sugar private), after a meal (only blood sugar shared).
const SCHEDULE_CYCLE: [u64; 3] = [0b111, 0b010, 0b101];

/// `changes` policy changes spread evenly over `span_secs` from `start`.
pub fn generate_schedule(start: Timestamp, span_secs: i64, changes: usize) -> LogStore {
    let mut log = LogStore::new();
    let step = if changes == 0 {
        0
    } else {
        (span_secs / changes as i64).max(1)
    };
    for i in 0..changes {
        let mask = PolicyMask::new(SCHEDULE_CYCLE[i % SCHEDULE_CYCLE.len()]);
        log.append(start.plus_seconds(i as i64 * step), mask)
            .expect("generated times strictly increase");
    }
    log
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchStatus {
    Exact,
    /// Superset of the exact mask with extra bits.
    Over,
    Violation,
}

impl SketchStatus {
    fn as_str(self) -> &'static str {
        match self {
            SketchStatus::Exact => "exact",
            SketchStatus::Over => "over",
            SketchStatus::Violation => "VIOLATION",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRow {
    pub time: Timestamp,
    pub log_mask: PolicyMask,
    pub exact_mask: PolicyMask,
    pub sketch_mask: PolicyMask,
    pub status: SketchStatus,
    /// Decisions from the sketch answer, in `HealthAttribute::ALL` order.
    pub decisions: [Decision; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemoReport {
    pub rows: Vec<DemoRow>,
}

impl DemoReport {
    pub fn log_exact_disagreements(&self) -> usize {
        self.rows.iter().filter(|r| r.log_mask != r.exact_mask).count()
    }

    pub fn count(&self, status: SketchStatus) -> usize {
        self.rows.iter().filter(|r| r.status == status).count()
    }

    pub fn is_consistent(&self) -> bool {
        self.log_exact_disagreements() == 0 && self.count(SketchStatus::Violation) == 0
    }

    pub fn write<W: Write>(&self, mut out: W, mask_width: usize) -> std::io::Result<()> {
        writeln!(
            out,
            "time,log_mask,exact_mask,sketch_mask,sketch_status,heart_rate,blood_sugar,body_temp"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.time,
                r.log_mask.to_bit_string(mask_width),
                r.exact_mask.to_bit_string(mask_width),
                r.sketch_mask.to_bit_string(mask_width),
                r.status.as_str(),
                r.decisions[0],
                r.decisions[1],
                r.decisions[2],
            )?;
        }
        writeln!(
            out,
            "# records={} log_exact_disagreements={} sketch_exact={} sketch_over={} sketch_violations={}",
            self.rows.len(),
            self.log_exact_disagreements(),
            self.count(SketchStatus::Exact),
            self.count(SketchStatus::Over),
            self.count(SketchStatus::Violation),
        )
    }
}

/// Stores each record's scheduled policy in a sketch and an exact store,
/// keyed by the record's canonical timestamp, then resolves every record
/// three ways and evaluates per-attribute decisions on the sketch answer.
pub fn run_demo(
    records: &[HealthRecord],
    schedule: &LogStore,
    registry: &ConditionRegistry,
    params: SketchParams,
    requester: &str,
) -> Result<DemoReport> {
    let mut sketch = MinMaskSketch::new(params);
    let mut exact = ExactStore::new();
    for r in records {
        let key = r.time.canonical();
        let mask = schedule.lookup(r.time);
        registry
            .validate(mask)
            .with_context(|| format!("schedule mask {mask} at {}", r.time))?;
        sketch.add(&key, mask);
        exact.add(&key, mask);
    }

    let mut rows = Vec::with_capacity(records.len());
    for (ordinal, r) in records.iter().enumerate() {
        let key = r.time.canonical();
        let log_mask = schedule.lookup(r.time);
        let exact_mask = exact.get(&key);
        let sketch_mask = sketch.get_mask(&key).estimate;
        let status = if sketch_mask == exact_mask {
            SketchStatus::Exact
        } else if sketch_mask.is_superset_of(exact_mask) {
            SketchStatus::Over
        } else {
            SketchStatus::Violation
        };
        let ctx = SharingContext {
            now: r.time,
            requester: requester.to_string(),
            record_ordinal: ordinal as u64,
            rng_seed: params.seed(),
        };
        let decisions = attribute_decisions(sketch_mask, registry, &ctx)?.map(|(_, d)| d);
        rows.push(DemoRow {
            time: r.time,
            log_mask,
            exact_mask,
            sketch_mask,
            status,
            decisions,
        });
    }
    Ok(DemoReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mms_core::health_demo_registry;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let recs = generate_records(ts("2024-03-01T06:00:00"), 5, 3, 1);
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back[1].time, ts("2024-03-01T06:00:03"));
        assert_eq!(back[4].heart_rate, recs[4].heart_rate);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let text =
            "time,heart_rate,blood_sugar,body_temp\n2024-03-01T06:00:00,70,90,98.6\n2024-03-01T06:00:03,fast,90,98.6\n";
        let err = format!("{:#}", read_records(text.as_bytes()).unwrap_err());
        assert!(err.contains("line 3"), "{err}");

        let dup =
            "time,heart_rate,blood_sugar,body_temp\n2024-03-01T06:00:00,70,90,98.6\n2024-03-01T06:00:00,71,90,98.6\n";
        let err = format!("{:#}", read_records(dup.as_bytes()).unwrap_err());
        assert!(err.contains("line 3") && err.contains("duplicate"), "{err}");

        let bad_header = "when,heart_rate,blood_sugar,body_temp\n";
        assert!(read_records(bad_header.as_bytes()).is_err());
    }

    #[test]
    fn empty_csv_gives_empty_report() {
        let recs = read_records("time,heart_rate,blood_sugar,body_temp\n".as_bytes()).unwrap();
        assert!(recs.is_empty());
        let report = run_demo(
            &recs,
            &LogStore::new(),
            &health_demo_registry(),
            SketchParams::default(),
            "doctor",
        )
        .unwrap();
        assert!(report.rows.is_empty());
        assert!(report.is_consistent());
    }

    #[test]
    fn exercise_window_shares_heart_rate_and_temperature() {
        let recs = generate_records(ts("2024-03-01T07:00:00"), 10, 3, 0);
        let mut schedule = LogStore::new();
        schedule
            .append(ts("2024-03-01T07:00:00"), PolicyMask::new(0b010))
            .unwrap();
        let report = run_demo(
            &recs,
            &schedule,
            &health_demo_registry(),
            SketchParams::default(),
            "doctor",
        )
        .unwrap();
        for row in &report.rows {
            assert_eq!(row.sketch_mask, PolicyMask::new(0b010));
            assert_eq!(row.decisions, [Decision::Share, Decision::Withhold, Decision::Share]);
        }
    }

    #[test]
    fn schedule_generator() {
        let log = generate_schedule(ts("2024-03-01T06:00:00"), 3600, 6);
        assert_eq!(log.len(), 6);
        assert_eq!(log.entries()[1].at, ts("2024-03-01T06:10:00"));
        assert_eq!(log.entries()[1].mask, PolicyMask::new(0b010));
    }

    #[test]
    fn schedule_masks_must_be_registered() {
        let recs = generate_records(ts("2024-03-01T07:00:00"), 1, 3, 0);
        let mut schedule = LogStore::new();
        schedule
            .append(ts("2024-03-01T07:00:00"), PolicyMask::new(0b1000))
            .unwrap();
        assert!(run_demo(
            &recs,
            &schedule,
            &health_demo_registry(),
            SketchParams::default(),
            "doctor"
        )
        .is_err());
    }
}
