//! Exact non-negative fractions for threshold arithmetic.
//!
//! Threshold comparisons over document counts must not flip on the last ulp,
//! so the curation filters compare `count * den >= num * total` in integers.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy)]
pub struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn numer(&self) -> u128 {
        self.num
    }

    pub fn denom(&self) -> u128 {
        self.den
    }

    /// Parses the shortest decimal representation of `x`.
    pub fn from_f64(x: f64) -> Result<Self, Error> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidInput(format!(
                "expected a finite non-negative number, got {x}"
            )));
        }
        format!("{x}").parse()
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn mul(&self, other: &Ratio) -> Ratio {
        let a = gcd(self.num, other.den);
        let b = gcd(other.num, self.den);
        Ratio::new(
            (self.num / a) * (other.num / b),
            (self.den / b) * (other.den / a),
        )
    }

    /// `ceil(self * n)`.
    pub fn ceil_mul(&self, n: u128) -> u128 {
        let p = self.num * n;
        p.div_ceil(self.den)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::InvalidInput(format!("`{s}` is not a decimal number or a fraction"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let parse = |x: &str| -> Result<u128, Error> {
                if x.is_empty() || !x.chars().all(|c| c.is_ascii_digit()) {
                    return Err(bad());
                }
                x.parse().map_err(|_| bad())
            };
            let (n, d) = (parse(n)?, parse(d)?);
            if d == 0 {
                return Err(bad());
            }
            return Ok(Ratio::new(n, d));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let num: u128 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| bad())?
        };
        Ok(Ratio::new(num, 10u128.pow(frac.len() as u32)))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}
