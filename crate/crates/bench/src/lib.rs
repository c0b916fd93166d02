//! Shared fixtures for the criterion benches.

use mms_core::{MinMaskSketch, PolicyMask, SketchParams};

/// Keys shaped like the canonical timestamp keys used by the health demo,
/// three seconds apart.
pub fn timestamp_keys(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let secs = i * 3;
            format!(
                "2024-03-01T{:02}:{:02}:{:02}",
                (secs / 3600) % 24,
                (secs / 60) % 60,
                secs % 60
            )
        })
        .collect()
}

pub fn filled_sketch(params: SketchParams, keys: &[String]) -> MinMaskSketch {
    let mut sketch = MinMaskSketch::new(params);
    for (i, key) in keys.iter().enumerate() {
        sketch.add(key, PolicyMask::new(1 << (i % 3)));
    }
    sketch
}
