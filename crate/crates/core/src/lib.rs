//! Min Mask Sketch: a Count-Min-style grid that stores per-item sharing
//! policy bitmasks in constant space.
//!
//! Masks are ORed into one cell per row on insert; a query returns the
//! cell with the fewest active conditions. Estimates are always a
//! bit-superset of the true mask, so errors only ever withhold data that
//! could have been shared.
//!
//! ```
//! use mms_core::{MinMaskSketch, PolicyMask, SketchParams};
//!
//! let mut sketch = MinMaskSketch::new(SketchParams::default());
//! sketch.add("abc", PolicyMask::new(0b110));
//! assert_eq!(sketch.get_mask("abc").estimate, PolicyMask::new(6));
//! assert_eq!(sketch.get_mask("never-added").estimate, PolicyMask::EMPTY);
//! ```
//!
//! Besides the sketch, the crate carries the condition registry used to turn
//! masks into share/withhold decisions, the exact and log-based reference
//! stores, and the space/error analysis used to compare them.

pub mod baseline;
pub mod codec;
pub mod hash;
pub mod mask;
pub mod policy;
pub mod sketch;
pub mod space;
pub mod time;

pub use baseline::{ExactStore, LogEntry, LogError, LogStore};
pub use codec::{deserialize, serialize, FormatError};
pub use mask::{select_min_mask, MaskError, PolicyMask};
pub use policy::{
    compose, decide, evaluate, health_demo_registry, ConditionKind, ConditionRegistry, ConditionSpec, Decision,
    HealthAttribute, PolicyError, SharingContext,
};
pub use sketch::{compute_dimensions, Estimator, MinMaskSketch, ParamError, QueryEstimate, SketchParams};
pub use space::{ErrorReport, SpaceModel};
pub use time::Timestamp;
