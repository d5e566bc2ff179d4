//! Parsing and rendering of exact rationals.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse `{0}` as a rational (expected `p/q` or a decimal)")]
pub struct RationalParseError(pub String);

/// Accepts `p/q`, integers and finite decimals such as `1.05`.
pub fn parse_rational(s: &str) -> Result<BigRational, RationalParseError> {
    let err = || RationalParseError(s.to_string());
    let t = s.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| err())?;
        let q: BigInt = q.trim().parse().map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(p, q));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let digits: BigInt = format!("{int}{frac}").parse().unwrap_or_default();
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(digits, denom);
    Ok(if neg { -r } else { r })
}

/// Decimal rendering with `places` digits, rounding half away from zero.
pub fn format_decimal(r: &BigRational, places: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), places);
    let scaled = r.abs() * BigRational::from_integer(scale.clone());
    let rounded = (scaled + BigRational::new(1.into(), 2.into()))
        .floor()
        .to_integer();
    let (int, frac) = rounded.div_rem(&scale);
    let sign = if r.is_negative() && !rounded.is_zero() {
        "-"
    } else {
        ""
    };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{:0>width$}", frac.to_string(), width = places)
    }
}

/// `p/q` in lowest terms (`p` alone for integers).
pub fn format_fraction(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
