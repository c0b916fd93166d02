//! Sharing conditions, their bit positions, and share/withhold evaluation.
//!
//! A [`ConditionRegistry`] assigns each bit position a named condition. A
//! mask activates a set of them; an item is shared only if every active
//! condition admits the request. Bits with no registered condition fail
//! closed.
//!
//! Because activation is conjunctive, adding bits can only turn a share
//! into a withhold. That is what makes a superset estimate from the sketch
//! safe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mask::{PolicyMask, MASK_BITS};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("mask activates bit {0}, which has no registered condition")]
    UnknownCondition(u32),
    #[error("bit position {0} is already registered")]
    DuplicateBit(u32),
    #[error("condition name {0:?} is already registered")]
    DuplicateName(String),
    #[error("bit position {0} is outside 0..{MASK_BITS}")]
    BitOutOfRange(u32),
    #[error("condition {name:?}: {message}")]
    InvalidCondition { name: String, message: String },
    #[error("registry line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Share,
    Withhold,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Share => "share",
            Decision::Withhold => "withhold",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named predicates for biased samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BiasPredicate {
    /// `record_ordinal % modulus == remainder`
    OrdinalModulo { modulus: u64, remainder: u64 },
    /// `start <= record_ordinal < end`
    OrdinalRange { start: u64, end: u64 },
    /// Requester identifier starts with the prefix, e.g. a region tag.
    RequesterPrefix(String),
    /// Hour of day of `now` in `[start, end)`.
    HourRange { start: u32, end: u32 },
}

impl BiasPredicate {
    fn holds(&self, ctx: &SharingContext) -> bool {
        use chrono::Timelike;
        match self {
            BiasPredicate::OrdinalModulo { modulus, remainder } => ctx.record_ordinal % modulus == *remainder,
            BiasPredicate::OrdinalRange { start, end } => (*start..*end).contains(&ctx.record_ordinal),
            BiasPredicate::RequesterPrefix(prefix) => ctx.requester.starts_with(prefix.as_str()),
            BiasPredicate::HourRange { start, end } => (*start..*end).contains(&ctx.now.inner().hour()),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            BiasPredicate::OrdinalModulo { .. } => "ordinal_mod",
            BiasPredicate::OrdinalRange { .. } => "ordinal_range",
            BiasPredicate::RequesterPrefix(_) => "requester_prefix",
            BiasPredicate::HourRange { .. } => "hour_range",
        }
    }

    fn args(&self) -> String {
        match self {
            BiasPredicate::OrdinalModulo { modulus, remainder } => format!("{modulus},{remainder}"),
            BiasPredicate::OrdinalRange { start, end } => format!("{start},{end}"),
            BiasPredicate::RequesterPrefix(p) => p.clone(),
            BiasPredicate::HourRange { start, end } => format!("{start},{end}"),
        }
    }

    fn parse(name: &str, args: &str) -> Result<Self, String> {
        let pair = |what: &str| -> Result<(u64, u64), String> {
            let parts: Vec<&str> = args.split(',').collect();
            match parts.as_slice() {
                [a, b] => Ok((
                    a.trim().parse().map_err(|_| format!("{what}: bad number {a:?}"))?,
                    b.trim().parse().map_err(|_| format!("{what}: bad number {b:?}"))?,
                )),
                _ => Err(format!("{what} takes two comma-separated arguments")),
            }
        };
        let pred = match name {
            "ordinal_mod" => {
                let (modulus, remainder) = pair(name)?;
                if modulus == 0 {
                    return Err("ordinal_mod modulus must be positive".into());
                }
                BiasPredicate::OrdinalModulo { modulus, remainder }
            }
            "ordinal_range" => {
                let (start, end) = pair(name)?;
                BiasPredicate::OrdinalRange { start, end }
            }
            "requester_prefix" => BiasPredicate::RequesterPrefix(args.to_string()),
            "hour_range" => {
                let (start, end) = pair(name)?;
                if start > 24 || end > 24 {
                    return Err("hour_range bounds must be within 0..=24".into());
                }
                BiasPredicate::HourRange {
                    start: start as u32,
                    end: end as u32,
                }
            }
            other => return Err(format!("unknown predicate {other:?}")),
        };
        Ok(pred)
    }
}

/// What a condition checks when it is active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConditionKind {
    /// Only the first `max_records` records of a result stream are shared.
    RecordLimit {
        max_records: u64,
    },
    /// Shared while `start <= now < end`.
    TimeWindow {
        start: Timestamp,
        end: Timestamp,
    },
    /// A fixed pseudo-random subset of `sample_size` ordinals out of
    /// `0..population`.
    RandomSample {
        sample_size: u64,
        population: u64,
        seed: u64,
    },
    BiasedSample(BiasPredicate),
    /// Shared only with the listed requesters.
    UserSet(BTreeSet<String>),
    /// Never shared.
    Private,
}

impl ConditionKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ConditionKind::RecordLimit { .. } => "record_limit",
            ConditionKind::TimeWindow { .. } => "time_window",
            ConditionKind::RandomSample { .. } => "random_sample",
            ConditionKind::BiasedSample(_) => "biased_sample",
            ConditionKind::UserSet(_) => "user_set",
            ConditionKind::Private => "private",
        }
    }

    fn admits(&self, ctx: &SharingContext) -> bool {
        match self {
            ConditionKind::RecordLimit { max_records } => ctx.record_ordinal < *max_records,
            ConditionKind::TimeWindow { start, end } => *start <= ctx.now && ctx.now < *end,
            ConditionKind::RandomSample {
                sample_size,
                population,
                seed,
            } => {
                if ctx.record_ordinal >= *population {
                    return false;
                }
                if sample_size >= population {
                    return true;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ctx.rng_seed.rotate_left(32));
                index::sample(&mut rng, *population as usize, *sample_size as usize)
                    .iter()
                    .any(|i| i as u64 == ctx.record_ordinal)
            }
            ConditionKind::BiasedSample(pred) => pred.holds(ctx),
            ConditionKind::UserSet(users) => users.contains(&ctx.requester),
            ConditionKind::Private => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionSpec {
    pub bit: u32,
    pub name: String,
    pub kind: ConditionKind,
}

impl ConditionSpec {
    pub fn new(bit: u32, name: impl Into<String>, kind: ConditionKind) -> Self {
        ConditionSpec {
            bit,
            name: name.into(),
            kind,
        }
    }

    pub fn mask(&self) -> PolicyMask {
        PolicyMask::new(1 << self.bit)
    }
}

/// The request a decision is made for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingContext {
    pub now: Timestamp,
    pub requester: String,
    /// Position of the record in the requested result stream.
    pub record_ordinal: u64,
    pub rng_seed: u64,
}

/// Bit position to condition map. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConditionRegistry {
    conditions: BTreeMap<u32, ConditionSpec>,
}

impl ConditionRegistry {
    pub fn new(conditions: impl IntoIterator<Item = ConditionSpec>) -> Result<Self, PolicyError> {
        let mut by_bit = BTreeMap::new();
        let mut names = BTreeSet::new();
        for spec in conditions {
            if spec.bit >= MASK_BITS {
                return Err(PolicyError::BitOutOfRange(spec.bit));
            }
            validate_kind(&spec)?;
            if !names.insert(spec.name.clone()) {
                return Err(PolicyError::DuplicateName(spec.name));
            }
            if by_bit.contains_key(&spec.bit) {
                return Err(PolicyError::DuplicateBit(spec.bit));
            }
            by_bit.insert(spec.bit, spec);
        }
        Ok(ConditionRegistry { conditions: by_bit })
    }

    pub fn conditions(&self) -> impl Iterator<Item = &ConditionSpec> {
        self.conditions.values()
    }

    pub fn get(&self, bit: u32) -> Option<&ConditionSpec> {
        self.conditions.get(&bit)
    }

    pub fn by_name(&self, name: &str) -> Option<&ConditionSpec> {
        self.conditions.values().find(|c| c.name == name)
    }

    pub fn highest_bit(&self) -> Option<u32> {
        self.conditions.keys().next_back().copied()
    }

    /// All registered bits.
    pub fn defined_mask(&self) -> PolicyMask {
        compose(self.conditions.values().map(ConditionSpec::mask))
    }

    /// Errors on the lowest bit of `mask` that has no registered condition.
    pub fn validate(&self, mask: PolicyMask) -> Result<(), PolicyError> {
        match mask.extra_bits(self.defined_mask()).positions().next() {
            Some(bit) => Err(PolicyError::UnknownCondition(bit)),
            None => Ok(()),
        }
    }

    /// Parses the line-oriented registry format:
    ///
    /// ```text
    /// # comment
    /// bit=0 name=limit25 kind=record_limit max_records=25
    /// bit=1 name=one_hour kind=time_window start=2024-03-01T09:00:00 end=2024-03-01T10:00:00
    /// bit=2 name=sample kind=random_sample sample_size=25 population=1200 seed=7
    /// bit=3 name=nyc kind=biased_sample predicate=requester_prefix args=nyc
    /// bit=4 name=care_team kind=user_set users=doctor,nurse
    /// bit=5 name=bt_private kind=private
    /// ```
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let mut specs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let spec = parse_line(line).map_err(|message| PolicyError::Parse { line: idx + 1, message })?;
            specs.push(spec);
        }
        ConditionRegistry::new(specs)
    }
}

impl FromStr for ConditionRegistry {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConditionRegistry::parse(s)
    }
}

impl fmt::Display for ConditionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.conditions.values() {
            write!(f, "bit={} name={} kind={}", c.bit, c.name, c.kind.kind_name())?;
            match &c.kind {
                ConditionKind::RecordLimit { max_records } => write!(f, " max_records={max_records}")?,
                ConditionKind::TimeWindow { start, end } => write!(f, " start={start} end={end}")?,
                ConditionKind::RandomSample {
                    sample_size,
                    population,
                    seed,
                } => write!(f, " sample_size={sample_size} population={population} seed={seed}")?,
                ConditionKind::BiasedSample(p) => write!(f, " predicate={} args={}", p.name(), p.args())?,
                ConditionKind::UserSet(users) => {
                    write!(f, " users={}", users.iter().cloned().collect::<Vec<_>>().join(","))?
                }
                ConditionKind::Private => {}
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn validate_kind(spec: &ConditionSpec) -> Result<(), PolicyError> {
    let invalid = |message: &str| PolicyError::InvalidCondition {
        name: spec.name.clone(),
        message: message.to_string(),
    };
    if spec.name.is_empty() || spec.name.contains(char::is_whitespace) {
        return Err(invalid("name must be non-empty and contain no whitespace"));
    }
    match &spec.kind {
        ConditionKind::TimeWindow { start, end } if start >= end => Err(invalid("time window start must precede end")),
        ConditionKind::RandomSample { population: 0, .. } => Err(invalid("random sample population must be positive")),
        ConditionKind::UserSet(users) if users.iter().any(|u| u.is_empty() || u.contains(',')) => {
            Err(invalid("user identifiers must be non-empty and contain no commas"))
        }
        _ => Ok(()),
    }
}

fn parse_line(line: &str) -> Result<ConditionSpec, String> {
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for token in line.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {token:?}"))?;
        if fields.insert(key, value).is_some() {
            return Err(format!("duplicate key {key:?}"));
        }
    }
    let mut take = |key: &str| fields.remove(key).ok_or_else(|| format!("missing {key}="));
    let bit: u32 = take("bit")?
        .parse()
        .map_err(|_| "bit must be a non-negative integer".to_string())?;
    let name = take("name")?.to_string();
    let kind_name = take("kind")?;
    let num = |v: &str, key: &str| {
        v.parse::<u64>()
            .map_err(|_| format!("{key} must be a non-negative integer"))
    };
    let time = |v: &str| v.parse::<Timestamp>().map_err(|e| e.to_string());

    let kind = match kind_name {
        "record_limit" => ConditionKind::RecordLimit {
            max_records: num(take("max_records")?, "max_records")?,
        },
        "time_window" => ConditionKind::TimeWindow {
            start: time(take("start")?)?,
            end: time(take("end")?)?,
        },
        "random_sample" => ConditionKind::RandomSample {
            sample_size: num(take("sample_size")?, "sample_size")?,
            population: num(take("population")?, "population")?,
            seed: match fields.remove("seed") {
                Some(v) => num(v, "seed")?,
                None => 0,
            },
        },
        "biased_sample" => {
            let predicate = take("predicate")?;
            let args = take("args")?;
            ConditionKind::BiasedSample(BiasPredicate::parse(predicate, args)?)
        }
        "user_set" => ConditionKind::UserSet(
            take("users")?
                .split(',')
                .filter(|u| !u.is_empty())
                .map(str::to_string)
                .collect(),
        ),
        "private" => ConditionKind::Private,
        other => return Err(format!("unknown condition kind {other:?}")),
    };
    if let Some(extra) = fields.keys().next() {
        return Err(format!("unexpected key {extra:?} for kind {kind_name}"));
    }
    Ok(ConditionSpec { bit, name, kind })
}

/// Union of the active conditions of every input.
pub fn compose(masks: impl IntoIterator<Item = PolicyMask>) -> PolicyMask {
    masks.into_iter().fold(PolicyMask::EMPTY, |acc, m| acc | m)
}

/// Shares iff every active condition admits `ctx`. An active bit without a
/// registered condition is an error.
pub fn evaluate(mask: PolicyMask, registry: &ConditionRegistry, ctx: &SharingContext) -> Result<Decision, PolicyError> {
    registry.validate(mask)?;
    let admitted = mask
        .positions()
        .all(|bit| registry.get(bit).expect("validated").kind.admits(ctx));
    Ok(if admitted { Decision::Share } else { Decision::Withhold })
}

/// Like [`evaluate`], but unknown bits withhold instead of erroring.
pub fn decide(mask: PolicyMask, registry: &ConditionRegistry, ctx: &SharingContext) -> Decision {
    evaluate(mask, registry, ctx).unwrap_or(Decision::Withhold)
}

/// The three attributes of a health record, each with its own privacy bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HealthAttribute {
    HeartRate,
    BloodSugar,
    BodyTemp,
}

impl HealthAttribute {
    pub const ALL: [HealthAttribute; 3] = [
        HealthAttribute::HeartRate,
        HealthAttribute::BloodSugar,
        HealthAttribute::BodyTemp,
    ];

    /// Name of the condition that makes this attribute private.
    pub fn condition_name(self) -> &'static str {
        match self {
            HealthAttribute::HeartRate => "hr_private",
            HealthAttribute::BloodSugar => "bs_private",
            HealthAttribute::BodyTemp => "bt_private",
        }
    }

    pub fn column_name(self) -> &'static str {
        match self {
            HealthAttribute::HeartRate => "heart_rate",
            HealthAttribute::BloodSugar => "blood_sugar",
            HealthAttribute::BodyTemp => "body_temp",
        }
    }
}

/// bit 0 = body temperature private, bit 1 = blood sugar private,
/// bit 2 = heart rate private. `0b010` shares heart rate and body
/// temperature while keeping blood sugar private.
pub fn health_demo_registry() -> ConditionRegistry {
    ConditionRegistry::new([
        ConditionSpec::new(0, "bt_private", ConditionKind::Private),
        ConditionSpec::new(1, "bs_private", ConditionKind::Private),
        ConditionSpec::new(2, "hr_private", ConditionKind::Private),
    ])
    .expect("static registry is valid")
}

/// Per-attribute decisions for one record. Each attribute is evaluated
/// against the mask with the other attributes' privacy bits removed, so
/// an attribute is withheld by its own privacy bit or by any shared
/// condition, never by another attribute's privacy bit.
pub fn attribute_decisions(
    mask: PolicyMask,
    registry: &ConditionRegistry,
    ctx: &SharingContext,
) -> Result<[(HealthAttribute, Decision); 3], PolicyError> {
    let mut attribute_bits = [PolicyMask::EMPTY; 3];
    for (slot, attr) in attribute_bits.iter_mut().zip(HealthAttribute::ALL) {
        let spec = registry
            .by_name(attr.condition_name())
            .ok_or_else(|| PolicyError::InvalidCondition {
                name: attr.condition_name().to_string(),
                message: "registry has no condition with this name".to_string(),
            })?;
        *slot = spec.mask();
    }
    let all_attribute_bits = compose(attribute_bits);
    let mut out = [(HealthAttribute::HeartRate, Decision::Share); 3];
    for (i, attr) in HealthAttribute::ALL.into_iter().enumerate() {
        let view = mask.extra_bits(all_attribute_bits) | (mask & attribute_bits[i]);
        out[i] = (attr, decide(view, registry, ctx));
    }
    Ok(out)
}
