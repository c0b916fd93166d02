//! Binary sketch files.
//!
//! All integers little-endian:
//!
//! ```text
//! offset size field
//!      0    4 magic "MMSK"
//!      4    2 version (1)
//!      6    2 reserved (0)
//!      8    8 epsilon (f64)
//!     16    8 confidence (f64)
//!     24    8 seed
//!     32    4 width
//!     36    4 depth
//!     40    1 cell width in bits (64)
//!     41    7 padding (0)
//!     48    8 insert count
//!     56      depth * width cells, u64, row-major
//! ```

use thiserror::Error;

use crate::mask::PolicyMask;
use crate::sketch::{MinMaskSketch, ParamError, SketchParams, CELL_WIDTH_BITS};

pub const MAGIC: [u8; 4] = *b"MMSK";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 56;
pub const CELL_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic {0:02x?}, expected \"MMSK\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}, expected {FORMAT_VERSION}")]
    UnsupportedVersion(u16),
    #[error("truncated sketch: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} unexpected trailing bytes after the cell grid")]
    TrailingBytes(usize),
    #[error("reserved or padding bytes are not zero")]
    NonZeroReserved,
    #[error("unsupported cell width of {0} bits")]
    UnsupportedCellWidth(u8),
    #[error("stored parameters are invalid: {0}")]
    InvalidParams(#[from] ParamError),
    #[error(
        "stored grid is {stored_depth}x{stored_width} but epsilon/confidence give {expected_depth}x{expected_width}"
    )]
    DimensionMismatch {
        stored_width: u32,
        stored_depth: u32,
        expected_width: usize,
        expected_depth: usize,
    },
}

/// Size of the encoded form of `sketch`.
pub fn encoded_len(sketch: &MinMaskSketch) -> usize {
    HEADER_BYTES + sketch.cells().len() * CELL_BYTES
}

pub fn serialize(sketch: &MinMaskSketch) -> Vec<u8> {
    let params = sketch.params();
    let mut out = Vec::with_capacity(encoded_len(sketch));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&params.epsilon().to_le_bytes());
    out.extend_from_slice(&params.confidence().to_le_bytes());
    out.extend_from_slice(&params.seed().to_le_bytes());
    out.extend_from_slice(&(sketch.width() as u32).to_le_bytes());
    out.extend_from_slice(&(sketch.depth() as u32).to_le_bytes());
    out.push(CELL_WIDTH_BITS);
    out.extend_from_slice(&[0u8; 7]);
    out.extend_from_slice(&sketch.insert_count().to_le_bytes());
    for cell in sketch.cells() {
        out.extend_from_slice(&cell.bits().to_le_bytes());
    }
    debug_assert_eq!(out.len(), encoded_len(sketch));
    out
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().unwrap())
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn deserialize(bytes: &[u8]) -> Result<MinMaskSketch, FormatError> {
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic(bytes[..4].try_into().unwrap()));
    }
    if bytes.len() < HEADER_BYTES {
        return Err(FormatError::Truncated {
            expected: HEADER_BYTES,
            actual: bytes.len(),
        });
    }
    let version = le_u16(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    if le_u16(bytes, 6) != 0 || bytes[41..48].iter().any(|&b| b != 0) {
        return Err(FormatError::NonZeroReserved);
    }
    let cell_bits = bytes[40];
    if cell_bits != CELL_WIDTH_BITS {
        return Err(FormatError::UnsupportedCellWidth(cell_bits));
    }

    let epsilon = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let confidence = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let seed = le_u64(bytes, 24);
    let params = SketchParams::new(epsilon, confidence, seed)?;

    let stored_width = le_u32(bytes, 32);
    let stored_depth = le_u32(bytes, 36);
    let (width, depth) = params.dimensions();
    if stored_width as usize != width || stored_depth as usize != depth {
        return Err(FormatError::DimensionMismatch {
            stored_width,
            stored_depth,
            expected_width: width,
            expected_depth: depth,
        });
    }
    let insert_count = le_u64(bytes, 48);

    let expected = HEADER_BYTES + width * depth * CELL_BYTES;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes(bytes.len() - expected));
    }
    let cells = bytes[HEADER_BYTES..]
        .chunks_exact(CELL_BYTES)
        .map(|c| PolicyMask::new(u64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(MinMaskSketch::from_parts(params, cells, insert_count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MinMaskSketch {
        let mut s = MinMaskSketch::new(SketchParams::new(0.1, 0.9, 99).unwrap());
        s.add("abc", PolicyMask::new(6));
        s.add("def", PolicyMask::new(1));
        s
    }

    #[test]
    fn default_sketch_size() {
        let s = MinMaskSketch::new(SketchParams::default());
        let bytes = serialize(&s);
        assert_eq!(bytes.len(), HEADER_BYTES + 108_760);
        assert_eq!(&bytes[..4], b"MMSK");
    }

    #[test]
    fn header_layout() {
        let s = sample();
        let b = serialize(&s);
        assert_eq!(le_u16(&b, 4), 1);
        assert_eq!(f64::from_le_bytes(b[8..16].try_into().unwrap()), 0.1);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 0.9);
        assert_eq!(le_u64(&b, 24), 99);
        assert_eq!(le_u32(&b, 32), 28);
        assert_eq!(le_u32(&b, 36), 3);
        assert_eq!(b[40], 64);
        assert_eq!(le_u64(&b, 48), 2);
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let back = deserialize(&serialize(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.get_mask("abc"), s.get_mask("abc"));
    }

    #[test]
    fn rejects_bad_magic() {
        let mut b = serialize(&sample());
        b[0] = b'X';
        assert!(matches!(deserialize(&b), Err(FormatError::BadMagic(_))));
    }

    #[test]
    fn rejects_unknown_version() {
        let mut b = serialize(&sample());
        b[4] = 2;
        assert_eq!(deserialize(&b).unwrap_err(), FormatError::UnsupportedVersion(2));
    }

    #[test]
    fn rejects_truncation() {
        let b = serialize(&sample());
        for cut in [0, 3, 20, HEADER_BYTES, b.len() - 1] {
            assert!(
                matches!(deserialize(&b[..cut]), Err(FormatError::Truncated { .. })),
                "cut at {cut}"
            );
        }
        let mut long = b.clone();
        long.push(0);
        assert_eq!(deserialize(&long).unwrap_err(), FormatError::TrailingBytes(1));
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let mut b = serialize(&sample());
        b[32..36].copy_from_slice(&27u32.to_le_bytes());
        assert!(matches!(deserialize(&b), Err(FormatError::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_params_and_fields() {
        let mut b = serialize(&sample());
        b[8..16].copy_from_slice(&1.5f64.to_le_bytes());
        assert!(matches!(
            deserialize(&b),
            Err(FormatError::InvalidParams(ParamError::Epsilon(_)))
        ));

        let mut b = serialize(&sample());
        b[40] = 32;
        assert_eq!(deserialize(&b).unwrap_err(), FormatError::UnsupportedCellWidth(32));

        let mut b = serialize(&sample());
        b[45] = 1;
        assert_eq!(deserialize(&b).unwrap_err(), FormatError::NonZeroReserved);
    }
}
