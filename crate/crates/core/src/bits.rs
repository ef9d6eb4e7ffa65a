// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A fixed-width bit string such as `'1111'`.
///
/// Widths up to 64 bits are supported; the value is stored right-aligned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bits {
    value: u64,
    width: u32,
}

impl Bits {
    pub fn new(value: u64, width: u32) -> Option<Self> {
        if width == 0 || width > 64 {
            return None;
        }
        if width < 64 && value >> width != 0 {
            return None;
        }
        Some(Self { value, width })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    pub fn mask(width: u32) -> u64 {
        if width >= 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        }
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.value, width = self.width as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseBitsError(pub String);

impl fmt::Display for ParseBitsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid bit string `{}`", self.0)
    }
}

impl std::error::Error for ParseBitsError {}

impl FromStr for Bits {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.len() > 64 || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(ParseBitsError(s.to_string()));
        }
        let value = u64::from_str_radix(s, 2).map_err(|_| ParseBitsError(s.to_string()))?;
        Ok(Self {
            value,
            width: s.len() as u32,
        })
    }
}
