//! Exact decimal USD amounts.
//!
//! Costs are carried as an integer number of picodollars (10^-12 USD) so that
//! per-call costs and run totals add up exactly. Token prices in the model
//! registry have at most three fractional digits per million tokens, which
//! divides out to a whole number of picodollars per token.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const PICO_PER_USD: i128 = 1_000_000_000_000;
const MAX_FRAC_DIGITS: usize = 12;

/// A USD amount with exact decimal semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Usd(i128);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub fn from_picodollars(pico: i128) -> Self {
        Usd(pico)
    }

    pub fn picodollars(self) -> i128 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Lossy conversion for plotting and ratio computation.
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / PICO_PER_USD as f64
    }

    /// Render with a fixed number of fractional digits, rounding half away
    /// from zero. Used by reports that pin costs to four decimals.
    pub fn to_fixed(self, digits: usize) -> String {
        assert!(digits <= MAX_FRAC_DIGITS);
        let scale = 10i128.pow((MAX_FRAC_DIGITS - digits) as u32);
        let half = scale / 2;
        let rounded = if self.0 >= 0 {
            (self.0 + half) / scale
        } else {
            (self.0 - half) / scale
        };
        let unit = 10i128.pow(digits as u32);
        let sign = if rounded < 0 { "-" } else { "" };
        let abs = rounded.abs();
        if digits == 0 {
            format!("{sign}{abs}")
        } else {
            format!("{sign}{}.{:0width$}", abs / unit, abs % unit, width = digits)
        }
    }
}

/// Error parsing a decimal USD string.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MoneyError {
    #[error("invalid decimal amount: {0:?}")]
    Invalid(String),
    #[error("too many fractional digits (max {MAX_FRAC_DIGITS}): {0:?}")]
    TooPrecise(String),
}

impl FromStr for Usd {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let (negative, rest) = match trimmed.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, trimmed),
        };
        let (int_part, frac_part) = match rest.split_once('.') {
            Some((i, f)) => (i, f),
            None => (rest, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(MoneyError::Invalid(s.to_string()));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(MoneyError::Invalid(s.to_string()));
        }
        if frac_part.len() > MAX_FRAC_DIGITS {
            return Err(MoneyError::TooPrecise(s.to_string()));
        }
        let int_value: i128 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| MoneyError::Invalid(s.to_string()))?
        };
        let mut frac_value: i128 = 0;
        for c in frac_part.chars() {
            frac_value = frac_value * 10 + (c as u8 - b'0') as i128;
        }
        frac_value *= 10i128.pow((MAX_FRAC_DIGITS - frac_part.len()) as u32);
        let pico = int_value * PICO_PER_USD + frac_value;
        Ok(Usd(if negative { -pico } else { pico }))
    }
}

impl fmt::Display for Usd {
    /// Canonical form: minimal fractional digits, at least two ("0.45").
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.abs();
        let int = abs / PICO_PER_USD;
        let mut frac = format!("{:012}", abs % PICO_PER_USD);
        while frac.len() > 2 && frac.ends_with('0') {
            frac.pop();
        }
        write!(f, "{sign}{int}.{frac}")
    }
}

impl Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        self.0 += rhs.0;
    }
}

impl Sub for Usd {
    type Output = Usd;
    fn sub(self, rhs: Usd) -> Usd {
        Usd(self.0 - rhs.0)
    }
}

impl Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
