//! Exact rational arithmetic helpers.
//!
//! Capacities and scaling factors are kept as arbitrary-precision rationals so
//! the capacity oracle can decide boundary points exactly; the simulator works
//! on `f64` mirrors of the same values.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rat = BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RatParseError {
    #[error("empty value")]
    Empty,
    #[error("invalid rational literal `{0}`")]
    Invalid(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().expect("rational out of f64 range")
}

/// Parses `"a/b"`, integer, or decimal literals exactly.
pub fn parse_rat(text: &str) -> Result<Rat, RatParseError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(RatParseError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| RatParseError::Invalid(s.to_string()))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| RatParseError::Invalid(s.to_string()))?;
        if d.is_zero() {
            return Err(RatParseError::ZeroDenominator(s.to_string()));
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || frac_part.chars().any(|c| !c.is_ascii_digit()) {
            return Err(RatParseError::Invalid(s.to_string()));
        }
        let negative = int_part.trim_start().starts_with('-');
        let int_val: BigInt = if int_part.is_empty() || int_part == "-" {
            BigInt::zero()
        } else {
            int_part
                .parse()
                .map_err(|_| RatParseError::Invalid(s.to_string()))?
        };
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let frac_val: BigInt = frac_part
            .parse()
            .map_err(|_| RatParseError::Invalid(s.to_string()))?;
        let mut numer = int_val.abs() * &scale + frac_val;
        if negative {
            numer = -numer;
        }
        return Ok(Rat::new(numer, scale));
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| RatParseError::Invalid(s.to_string()))?;
    Ok(Rat::from_integer(n))
}

/// Best rational approximation of `x` with denominator at most `max_den`,
/// via the Stern-Brocot walk. Used when a config file supplies a float.
pub fn rat_from_f64_bounded(x: f64, max_den: u64) -> Rat {
    assert!(x.is_finite(), "cannot rationalize non-finite value");
    let negative = x < 0.0;
    let x = x.abs();
    let whole = x.floor();
    let frac = x - whole;
    let (mut lo_n, mut lo_d, mut hi_n, mut hi_d) = (0u64, 1u64, 1u64, 0u64);
    let (mut best_n, mut best_d) = (0u64, 1u64);
    loop {
        let mid_n = lo_n + hi_n;
        let mid_d = lo_d + hi_d;
        if mid_d > max_den {
            break;
        }
        let mid = mid_n as f64 / mid_d as f64;
        if (mid - frac).abs() < (best_n as f64 / best_d as f64 - frac).abs() {
            best_n = mid_n;
            best_d = mid_d;
        }
        if mid < frac {
            lo_n = mid_n;
            lo_d = mid_d;
        } else if mid > frac {
            hi_n = mid_n;
            hi_d = mid_d;
        } else {
            break;
        }
    }
    let mut out = Rat::from_integer(BigInt::from(whole as u64))
        + Rat::new(BigInt::from(best_n), BigInt::from(best_d));
    if negative {
        out = -out;
    }
    out
}

/// Canonical text form: integers print bare, everything else as `a/b`.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
