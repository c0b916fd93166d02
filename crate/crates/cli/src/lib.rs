//! `mms`: create, update and query sketch files, compare storage footprints,
//! measure estimation error, and run the health-tracker demo.
//!
//! Data goes to stdout, diagnostics to stderr. Every command is
//! deterministic for a given set of flags.

pub mod health;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mms_core::sketch::{DEFAULT_CONFIDENCE, DEFAULT_EPSILON};
use mms_core::space::{self, SpaceModel};
use mms_core::{codec, ConditionRegistry, Estimator, LogStore, MinMaskSketch, PolicyMask, SketchParams, Timestamp};

#[derive(Debug, Parser)]
#[command(name = "mms", version, about = "Min Mask Sketch workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty sketch file.
    Create(CreateArgs),
    /// OR a policy mask into a key's cells.
    Add(AddArgs),
    /// Print the estimated policy mask of a key.
    Get(GetArgs),
    /// Compare sketch and log storage sizes over a range of policy changes.
    Compare(CompareArgs),
    /// Measure estimation error against an exact store.
    Measure(MeasureArgs),
    /// Resolve health records' policies via sketch, exact store and log.
    DemoHealth(DemoHealthArgs),
    /// Write a synthetic health CSV and policy schedule.
    GenHealth(GenHealthArgs),
}

#[derive(Debug, Args, Clone, Copy)]
pub struct SketchFlags {
    /// Error bound factor; sets the sketch width.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Confidence of the error bound; sets the sketch depth.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SketchFlags {
    fn params(&self) -> Result<SketchParams> {
        Ok(SketchParams::new(self.epsilon, self.confidence, self.seed)?)
    }
}

#[derive(Debug, Args)]
pub struct CreateArgs {
    #[command(flatten)]
    pub sketch: SketchFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AddArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub key: String,
    /// Unsigned decimal, 0b binary or 0x hex literal.
    #[arg(long)]
    pub mask: String,
    /// Reject masks with bits the registry does not define.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskFormat {
    Dec,
    Bits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorFlag {
    /// Candidate with the fewest set bits.
    Min,
    /// Intersection of all candidates.
    And,
}

#[derive(Debug, Args)]
pub struct GetArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub key: String,
    #[arg(long, value_enum, default_value_t = MaskFormat::Dec)]
    pub format: MaskFormat,
    /// Pads `--format bits` output to the registry's highest bit.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EstimatorFlag::Min)]
    pub estimator: EstimatorFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelPreset {
    /// 56-byte header, 64-bit cells.
    Artifact,
    /// 8-byte header, 32-bit cells.
    PaperCalibration,
    /// Artifact sizes with every field overridable.
    Custom,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    #[arg(long, default_value_t = 3000)]
    pub max_changes: u64,
    #[arg(long, value_enum, default_value_t = ModelPreset::Artifact)]
    pub model: ModelPreset,
    #[arg(long)]
    pub header_bytes: Option<u64>,
    #[arg(long)]
    pub cell_bytes: Option<u64>,
    #[arg(long)]
    pub log_entry_bytes: Option<u64>,
    #[arg(long)]
    pub exact_policy_bytes: Option<u64>,
    #[arg(long)]
    pub data_bytes: Option<u64>,
    /// Where to write the `changes,log_bytes,sketch_bytes` curve; `-` for
    /// stdout (the summary then goes to stderr).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl CompareArgs {
    fn model(&self) -> Result<SpaceModel> {
        let base = match self.model {
            ModelPreset::Artifact | ModelPreset::Custom => SpaceModel::ARTIFACT,
            ModelPreset::PaperCalibration => SpaceModel::PAPER_CALIBRATION,
        };
        let overrides = [
            self.header_bytes,
            self.cell_bytes,
            self.log_entry_bytes,
            self.exact_policy_bytes,
            self.data_bytes,
        ];
        if self.model != ModelPreset::Custom && overrides.iter().any(Option::is_some) {
            bail!("size overrides require --model custom");
        }
        let model = SpaceModel {
            sketch_header_bytes: self.header_bytes.unwrap_or(base.sketch_header_bytes),
            cell_bytes: self.cell_bytes.unwrap_or(base.cell_bytes),
            log_entry_bytes: self.log_entry_bytes.unwrap_or(base.log_entry_bytes),
            exact_policy_bytes_per_row: self.exact_policy_bytes.unwrap_or(base.exact_policy_bytes_per_row),
            data_bytes_per_row: self.data_bytes.unwrap_or(base.data_bytes_per_row),
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    /// Distinct keys added, each with one random bit.
    #[arg(long, default_value_t = 10_000)]
    pub inserts: usize,
    /// Number of sketch seeds (0, 1, ... offset by --seed).
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mask bits drawn from 0..bits.
    #[arg(long, default_value_t = 3)]
    pub bits: u32,
    #[arg(long, default_value_t = 0)]
    pub workload_seed: u64,
    /// Per-seed `seed,extra_bit_rate,any_extra_fraction` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoHealthArgs {
    /// Health CSV with header `time,heart_rate,blood_sugar,body_temp`.
    #[arg(long)]
    pub csv: PathBuf,
    /// Policy change log: `<timestamp> <mask>` per line.
    #[arg(long, alias = "policy-schedule")]
    pub schedule: PathBuf,
    /// Condition registry; defaults to the three per-attribute privacy bits.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[command(flatten)]
    pub sketch: SketchFlags,
    #[arg(long, default_value = "doctor")]
    pub requester: String,
}

#[derive(Debug, Args)]
pub struct GenHealthArgs {
    #[arg(long, default_value = "2024-03-01T06:00:00")]
    pub start: String,
    /// Number of readings; 1200 is one hour at one reading every 3 s.
    #[arg(long, default_value_t = 1200)]
    pub rows: usize,
    #[arg(long, default_value_t = 3)]
    pub cadence_secs: i64,
    /// Policy changes, spread evenly across the readings.
    #[arg(long, default_value_t = 6)]
    pub changes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub csv_out: PathBuf,
    #[arg(long)]
    pub schedule_out: PathBuf,
}

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// The command ran but observed a broken invariant.
    InvariantViolated,
}

fn load_sketch(path: &Path) -> Result<MinMaskSketch> {
    let bytes = fs::read(path).with_context(|| format!("reading sketch {}", path.display()))?;
    codec::deserialize(&bytes).with_context(|| format!("decoding sketch {}", path.display()))
}

fn save_sketch(path: &Path, sketch: &MinMaskSketch) -> Result<()> {
    fs::write(path, codec::serialize(sketch)).with_context(|| format!("writing sketch {}", path.display()))
}

fn load_registry(path: &Path) -> Result<ConditionRegistry> {
    let text = fs::read_to_string(path).with_context(|| format!("reading registry {}", path.display()))?;
    ConditionRegistry::parse(&text).with_context(|| format!("parsing registry {}", path.display()))
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Create(args) => {
            let sketch = MinMaskSketch::new(args.sketch.params()?);
            save_sketch(&args.out, &sketch)?;
            writeln!(
                err,
                "created {}x{} sketch ({} bytes) at {}",
                sketch.depth(),
                sketch.width(),
                codec::encoded_len(&sketch),
                args.out.display()
            )?;
            Ok(Outcome::Ok)
        }
        Command::Add(args) => {
            let mask: PolicyMask = args.mask.parse()?;
            if let Some(path) = &args.registry {
                load_registry(path)?.validate(mask)?;
            }
            let mut sketch = load_sketch(&args.sketch)?;
            sketch.add(&args.key, mask);
            save_sketch(&args.sketch, &sketch)?;
            Ok(Outcome::Ok)
        }
        Command::Get(args) => {
            let sketch = load_sketch(&args.sketch)?;
            let estimator = match args.estimator {
                EstimatorFlag::Min => Estimator::MinPopcount,
                EstimatorFlag::And => Estimator::Intersection,
            };
            let mask = sketch.get_mask_with(&args.key, estimator).estimate;
            let pad = match &args.registry {
                Some(path) => load_registry(path)?.highest_bit().map_or(1, |b| b as usize + 1),
                None => 0,
            };
            match args.format {
                MaskFormat::Dec => writeln!(out, "{mask}")?,
                MaskFormat::Bits => writeln!(out, "{}", mask.to_bit_string(pad))?,
            }
            Ok(Outcome::Ok)
        }
        Command::Compare(args) => compare(args, out, err),
        Command::Measure(args) => measure(args, out),
        Command::DemoHealth(args) => {
            let file = fs::File::open(&args.csv).with_context(|| format!("opening {}", args.csv.display()))?;
            let records = health::read_records(file).with_context(|| format!("parsing {}", args.csv.display()))?;
            let schedule_text = fs::read_to_string(&args.schedule)
                .with_context(|| format!("reading schedule {}", args.schedule.display()))?;
            let schedule: LogStore = schedule_text
                .parse()
                .with_context(|| format!("parsing schedule {}", args.schedule.display()))?;
            let registry = match &args.registry {
                Some(path) => load_registry(path)?,
                None => mms_core::health_demo_registry(),
            };
            let report = health::run_demo(&records, &schedule, &registry, args.sketch.params()?, &args.requester)?;
            let width = registry.highest_bit().map_or(1, |b| b as usize + 1);
            report.write(&mut *out, width)?;
            if report.is_consistent() {
                Ok(Outcome::Ok)
            } else {
                writeln!(err, "sketch/exact/log resolution disagreed; see report")?;
                Ok(Outcome::InvariantViolated)
            }
        }
        Command::GenHealth(args) => {
            let start: Timestamp = args.start.parse()?;
            let records = health::generate_records(start, args.rows, args.cadence_secs, args.seed);
            let schedule = health::generate_schedule(start, args.rows as i64 * args.cadence_secs, args.changes);
            let file =
                fs::File::create(&args.csv_out).with_context(|| format!("creating {}", args.csv_out.display()))?;
            health::write_records(std::io::BufWriter::new(file), &records)?;
            fs::write(&args.schedule_out, schedule.to_string())
                .with_context(|| format!("writing {}", args.schedule_out.display()))?;
            Ok(Outcome::Ok)
        }
    }
}

fn compare(args: CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome> {
    if args.max_changes < 1 {
        bail!("--max-changes must be at least 1");
    }
    let params = SketchParams::new(args.epsilon, args.confidence, 0)?;
    let model = args.model()?;
    let curve = space::space_curve(&params, &model, args.max_changes);

    let summary: &mut dyn Write = match &args.csv {
        Some(path) if path.as_os_str() == "-" => {
            space::write_curve_csv(&mut *out, &curve)?;
            err
        }
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            space::write_curve_csv(std::io::BufWriter::new(file), &curve)?;
            out
        }
        None => out,
    };
    let (width, depth) = params.dimensions();
    writeln!(summary, "model={}", model_name(args.model))?;
    writeln!(summary, "grid={depth}x{width}")?;
    writeln!(
        summary,
        "header_bytes={} cell_bytes={} log_entry_bytes={}",
        model.sketch_header_bytes, model.cell_bytes, model.log_entry_bytes
    )?;
    writeln!(summary, "sketch_bytes={}", space::sketch_bytes(&params, &model))?;
    writeln!(
        summary,
        "crossover_changes={}",
        space::crossover_changes(&params, &model)
    )?;
    writeln!(summary, "overhead_ratio={}", space::overhead_ratio(&model))?;
    writeln!(
        summary,
        "preset_crossovers artifact={} paper-calibration={}",
        space::crossover_changes(&params, &SpaceModel::ARTIFACT),
        space::crossover_changes(&params, &SpaceModel::PAPER_CALIBRATION)
    )?;
    Ok(Outcome::Ok)
}

fn model_name(preset: ModelPreset) -> &'static str {
    match preset {
        ModelPreset::Artifact => "artifact",
        ModelPreset::PaperCalibration => "paper-calibration",
        ModelPreset::Custom => "custom",
    }
}

fn measure(args: MeasureArgs, out: &mut dyn Write) -> Result<Outcome> {
    if args.inserts < 1 {
        bail!("--inserts must be at least 1");
    }
    if args.seeds < 1 {
        bail!("--seeds must be at least 1");
    }
    if !(1..=64).contains(&args.bits) {
        bail!("--bits must be in 1..=64");
    }
    let params = SketchParams::new(args.epsilon, args.confidence, args.seed)?;
    let workload = space::single_bit_workload(args.inserts, args.bits, args.workload_seed);
    let keys: Vec<Vec<u8>> = workload.iter().map(|(k, _)| k.clone()).collect();
    let report = space::measure_error(&workload, &keys, &params, args.seeds);

    if let Some(path) = &args.csv {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(std::io::BufWriter::new(file))?;
    }
    let (width, depth) = params.dimensions();
    writeln!(out, "grid={depth}x{width}")?;
    writeln!(out, "trials={}", report.trials)?;
    writeln!(out, "superset_violations={}", report.superset_violations)?;
    writeln!(out, "extra_bit_rate={}", report.extra_bit_rate)?;
    writeln!(out, "any_extra_fraction={}", report.any_extra_fraction)?;
    Ok(if report.superset_violations == 0 {
        Outcome::Ok
    } else {
        Outcome::InvariantViolated
    })
}
