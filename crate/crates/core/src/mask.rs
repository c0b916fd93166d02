//! Policy bitmasks.
//!
//! A [`PolicyMask`] is an unsigned 64-bit integer where bit `i` set means
//! sharing condition `i` is active for the item and must be applied before
//! the item is shared. Masks only ever combine by bitwise OR.

use std::fmt;
use std::ops::{BitAnd, BitOr, BitOrAssign};
use std::str::FromStr;

use thiserror::Error;

/// Number of bits in a sketch cell, and therefore the maximum number of
/// distinct conditions a mask can carry.
pub const MASK_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask literal {0:?} is not an unsigned decimal or 0b/0x literal")]
    Malformed(String),
    #[error("mask literal {0:?} needs more than {MASK_BITS} bits")]
    Capacity(String),
    #[error("cannot select a mask from an empty candidate list")]
    NoCandidates,
}

/// Bit-set of active sharing conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct PolicyMask(u64);

impl PolicyMask {
    pub const EMPTY: PolicyMask = PolicyMask(0);

    pub const fn new(bits: u64) -> Self {
        PolicyMask(bits)
    }

    /// Mask with only `position` set. Positions outside `0..64` are a
    /// capacity error.
    pub fn bit(position: u32) -> Result<Self, MaskError> {
        if position >= MASK_BITS {
            return Err(MaskError::Capacity(format!("bit {position}")));
        }
        Ok(PolicyMask(1 << position))
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    /// Number of active conditions.
    pub const fn popcount(self) -> u32 {
        self.0.count_ones()
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn contains(self, position: u32) -> bool {
        position < MASK_BITS && self.0 & (1 << position) != 0
    }

    /// True when every bit of `other` is also set in `self`.
    pub const fn is_superset_of(self, other: PolicyMask) -> bool {
        self.0 & other.0 == other.0
    }

    /// Bits set in `self` but not in `truth`.
    pub const fn extra_bits(self, truth: PolicyMask) -> PolicyMask {
        PolicyMask(self.0 & !truth.0)
    }

    /// Index of the highest set bit, if any.
    pub const fn highest_bit(self) -> Option<u32> {
        if self.0 == 0 {
            None
        } else {
            Some(63 - self.0.leading_zeros())
        }
    }

    /// Iterator over the positions of set bits, lowest first.
    pub fn positions(self) -> impl Iterator<Item = u32> {
        let bits = self.0;
        (0..MASK_BITS).filter(move |i| bits & (1 << i) != 0)
    }

    /// Binary rendering, zero-padded to at least `min_width` digits.
    pub fn to_bit_string(self, min_width: usize) -> String {
        format!("{:0width$b}", self.0, width = min_width.max(1))
    }
}

impl From<u64> for PolicyMask {
    fn from(bits: u64) -> Self {
        PolicyMask(bits)
    }
}

impl From<PolicyMask> for u64 {
    fn from(mask: PolicyMask) -> Self {
        mask.0
    }
}

impl BitOr for PolicyMask {
    type Output = PolicyMask;
    fn bitor(self, rhs: PolicyMask) -> PolicyMask {
        PolicyMask(self.0 | rhs.0)
    }
}

impl BitOrAssign for PolicyMask {
    fn bitor_assign(&mut self, rhs: PolicyMask) {
        self.0 |= rhs.0;
    }
}

impl BitAnd for PolicyMask {
    type Output = PolicyMask;
    fn bitand(self, rhs: PolicyMask) -> PolicyMask {
        PolicyMask(self.0 & rhs.0)
    }
}

impl fmt::Display for PolicyMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Binary for PolicyMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Binary::fmt(&self.0, f)
    }
}

/// Accepts unsigned decimal, `0b`-prefixed binary and `0x`-prefixed hex.
/// Underscores are allowed as digit separators.
impl FromStr for PolicyMask {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let (digits, radix) = if let Some(rest) = trimmed.strip_prefix("0b").or_else(|| trimmed.strip_prefix("0B")) {
            (rest, 2)
        } else if let Some(rest) = trimmed.strip_prefix("0x").or_else(|| trimmed.strip_prefix("0X")) {
            (rest, 16)
        } else {
            (trimmed, 10)
        };
        let digits: String = digits.chars().filter(|&c| c != '_').collect();
        if digits.is_empty() || !digits.chars().all(|c| c.is_digit(radix)) {
            return Err(MaskError::Malformed(s.to_string()));
        }
        // Parse wide so that an overlong literal reports capacity rather
        // than a generic parse failure.
        let wide = u128::from_str_radix(&digits, radix).map_err(|_| MaskError::Capacity(s.to_string()))?;
        u64::try_from(wide)
            .map(PolicyMask)
            .map_err(|_| MaskError::Capacity(s.to_string()))
    }
}

/// Picks the candidate with the fewest set bits. Among equal popcounts the
/// numerically smallest wins, so the result is independent of input order.
pub fn select_min_mask(candidates: &[PolicyMask]) -> Result<PolicyMask, MaskError> {
    candidates
        .iter()
        .copied()
        .min_by_key(|m| (m.popcount(), m.bits()))
        .ok_or(MaskError::NoCandidates)
}
