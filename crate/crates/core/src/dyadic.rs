//! Exact binary fixed-point values.
//!
//! A [`Dyadic`] is `mantissa * 2^exponent` with an arbitrary-precision
//! mantissa. Item sizes, thresholds and every `b`-bit truncation used by the
//! advice scheme are carried in this type so that comparisons are bit-exact.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DyadicError {
    #[error("value is zero; the most significant bit is undefined")]
    Zero,
    #[error("approximation needs at least one bit (got b = {0})")]
    NoBits(u32),
    #[error("`{0}` is not a dyadic rational")]
    NotDyadic(String),
    #[error("cannot parse `{0}` as a dyadic value")]
    Parse(String),
    #[error("subtraction would be negative")]
    Negative,
}

/// Exact value `mantissa * 2^exponent`, normalized so the mantissa is odd
/// (or the value is zero with exponent 0).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigUint,
    exponent: i64,
}

/// Which way a `b`-bit approximation rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rounding {
    Floor,
    Ceil,
}

/// Number of leading bits kept and the rounding direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApproxParams {
    bits: u32,
    mode: Rounding,
}

impl ApproxParams {
    pub fn new(bits: u32, mode: Rounding) -> Result<Self, DyadicError> {
        if bits == 0 {
            return Err(DyadicError::NoBits(bits));
        }
        Ok(Self { bits, mode })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mode(&self) -> Rounding {
        self.mode
    }

    pub fn apply(&self, v: &Dyadic) -> Result<Dyadic, DyadicError> {
        match self.mode {
            Rounding::Floor => v.floor_approx(self.bits),
            Rounding::Ceil => v.ceil_approx(self.bits),
        }
    }
}

impl Dyadic {
    pub fn new(mantissa: BigUint, exponent: i64) -> Self {
        if mantissa.is_zero() {
            return Self::zero();
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0);
        Self {
            mantissa: mantissa >> tz,
            exponent: exponent + tz as i64,
        }
    }

    pub fn zero() -> Self {
        Self {
            mantissa: BigUint::zero(),
            exponent: 0,
        }
    }

    pub fn one() -> Self {
        Self::from_u64(1)
    }

    pub fn from_u64(v: u64) -> Self {
        Self::new(BigUint::from(v), 0)
    }

    /// `numerator * 2^exponent`.
    pub fn from_parts(numerator: u64, exponent: i64) -> Self {
        Self::new(BigUint::from(numerator), exponent)
    }

    /// `2^exponent`.
    pub fn pow2(exponent: i64) -> Self {
        Self::from_parts(1, exponent)
    }

    pub fn mantissa(&self) -> &BigUint {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    /// Index `q` of the leading bit: `2^q <= v < 2^(q+1)`.
    pub fn msb_exponent(&self) -> Result<i64, DyadicError> {
        if self.is_zero() {
            return Err(DyadicError::Zero);
        }
        Ok(self.exponent + self.mantissa.bits() as i64 - 1)
    }

    /// Keep the `b` most significant bits, zeroing the rest.
    pub fn floor_approx(&self, b: u32) -> Result<Dyadic, DyadicError> {
        if b == 0 {
            return Err(DyadicError::NoBits(b));
        }
        let q = self.msb_exponent()?;
        let cutoff = q - b as i64 + 1;
        if self.exponent >= cutoff {
            return Ok(self.clone());
        }
        let shift = (cutoff - self.exponent) as u64;
        Ok(Dyadic::new(&self.mantissa >> shift, cutoff))
    }

    /// Keep the `b` most significant bits and add one unit in the last kept
    /// place, `2^(q-b+1)`.
    pub fn ceil_approx(&self, b: u32) -> Result<Dyadic, DyadicError> {
        let floor = self.floor_approx(b)?;
        let q = self.msb_exponent()?;
        Ok(floor + Dyadic::pow2(q - b as i64 + 1))
    }

    /// Unit in the last place kept by a `b`-bit approximation of `self`.
    pub fn approx_ulp(&self, b: u32) -> Result<Dyadic, DyadicError> {
        let q = self.msb_exponent()?;
        Ok(Dyadic::pow2(q - b as i64 + 1))
    }

    pub fn mul_pow2(&self, k: i64) -> Dyadic {
        if self.is_zero() {
            return Self::zero();
        }
        Dyadic {
            mantissa: self.mantissa.clone(),
            exponent: self.exponent + k,
        }
    }

    pub fn checked_sub(&self, other: &Dyadic) -> Result<Dyadic, DyadicError> {
        match self.cmp(other) {
            Ordering::Less => Err(DyadicError::Negative),
            Ordering::Equal => Ok(Dyadic::zero()),
            Ordering::Greater => {
                let (a, b, e) = align(self, other);
                Ok(Dyadic::new(a - b, e))
            }
        }
    }

    /// Largest integer not exceeding the value.
    pub fn floor_int(&self) -> BigUint {
        if self.exponent >= 0 {
            &self.mantissa << self.exponent as u64
        } else {
            &self.mantissa >> (-self.exponent) as u64
        }
    }

    /// Integer value, if the value is an integer that fits in `u64`.
    pub fn to_u64_exact(&self) -> Option<u64> {
        if self.exponent < 0 {
            return None;
        }
        self.floor_int().to_u64()
    }

    pub fn to_rational(&self) -> BigRational {
        let m = BigInt::from(self.mantissa.clone());
        if self.exponent >= 0 {
            BigRational::from_integer(m << self.exponent as u64)
        } else {
            BigRational::new(m, BigInt::one() << (-self.exponent) as u64)
        }
    }

    /// Exact conversion from a rational whose reduced denominator is a power
    /// of two.
    pub fn from_rational(r: &BigRational) -> Result<Dyadic, DyadicError> {
        let numer = r.numer();
        let denom = r.denom();
        if numer.sign() == num_bigint::Sign::Minus {
            return Err(DyadicError::Negative);
        }
        let d = denom.magnitude();
        let tz = d.trailing_zeros().unwrap_or(0);
        if (d >> tz) != BigUint::one() {
            return Err(DyadicError::NotDyadic(r.to_string()));
        }
        Ok(Dyadic::new(numer.magnitude().clone(), -(tz as i64)))
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        // Keep 64 leading bits so very long mantissas do not overflow.
        let bits = self.mantissa.bits() as i64;
        let drop = (bits - 64).max(0);
        let m = (&self.mantissa >> drop as u64)
            .to_f64()
            .unwrap_or(f64::INFINITY);
        m * 2f64.powi((self.exponent + drop) as i32)
    }

    /// Binary text form `0bINT.FRAC`.
    pub fn to_binary_string(&self) -> String {
        if self.is_zero() {
            return "0b0".into();
        }
        let int = self.floor_int();
        let mut s = format!("0b{}", int.to_str_radix(2));
        if self.exponent < 0 {
            let frac_bits = (-self.exponent) as usize;
            let mask = (BigUint::one() << frac_bits) - BigUint::one();
            let frac = &self.mantissa & mask;
            let digits = frac.to_str_radix(2);
            s.push('.');
            s.extend(std::iter::repeat_n('0', frac_bits - digits.len()));
            s.push_str(&digits);
        }
        s
    }

    fn parse_binary(body: &str, original: &str) -> Result<Dyadic, DyadicError> {
        let err = || DyadicError::Parse(original.to_string());
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        let digits: String = format!("{int}{frac}");
        if !digits.chars().all(|c| c == '0' || c == '1') {
            return Err(err());
        }
        let m = if digits.is_empty() {
            BigUint::zero()
        } else {
            BigUint::parse_bytes(digits.as_bytes(), 2).ok_or_else(err)?
        };
        Ok(Dyadic::new(m, -(frac.len() as i64)))
    }

    fn parse_decimal(s: &str) -> Result<Dyadic, DyadicError> {
        let err = || DyadicError::Parse(s.to_string());
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if (int.is_empty() && frac.is_empty())
            || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
        {
            return Err(err());
        }
        let digits = format!("{int}{frac}");
        let n = BigUint::parse_bytes(digits.as_bytes(), 10).ok_or_else(err)?;
        let k = frac.len() as u32;
        // n / 10^k = (n / 5^k) * 2^-k, dyadic iff 5^k divides n.
        let five_k = BigUint::from(5u32).pow(k);
        let (q, r) = n.div_rem(&five_k);
        if !r.is_zero() {
            return Err(DyadicError::NotDyadic(s.to_string()));
        }
        Ok(Dyadic::new(q, -(k as i64)))
    }
}

/// Shift both mantissas to the smaller exponent.
fn align(a: &Dyadic, b: &Dyadic) -> (BigUint, BigUint, i64) {
    let e = a.exponent.min(b.exponent);
    let am = &a.mantissa << (a.exponent - e) as u64;
    let bm = &b.mantissa << (b.exponent - e) as u64;
    (am, bm, e)
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let qa = self.exponent + self.mantissa.bits() as i64;
        let qb = other.exponent + other.mantissa.bits() as i64;
        if qa != qb {
            return qa.cmp(&qb);
        }
        let (a, b, _) = align(self, other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        &self + &rhs
    }
}

impl<'a> Add<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &'a Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let (a, b, e) = align(self, rhs);
        Dyadic::new(a + b, e)
    }
}

impl<'a> Sum<&'a Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = &'a Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |acc, v| &acc + v)
    }
}

impl Sum<Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |acc, v| &acc + &v)
    }
}

impl FromStr for Dyadic {
    type Err = DyadicError;

    /// Accepts `0b1101.01` style binary or a finite decimal such as
    /// `0.6875`. Decimals that are not dyadic are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some(body) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
            return Dyadic::parse_binary(body, s);
        }
        Dyadic::parse_decimal(t)
    }
}

/// Exact decimal expansion (always finite for a dyadic).
impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent >= 0 {
            return write!(f, "{}", self.floor_int());
        }
        let k = (-self.exponent) as u32;
        // m * 2^-k = m * 5^k / 10^k
        let scaled = &self.mantissa * BigUint::from(5u32).pow(k);
        let ten_k = BigUint::from(10u32).pow(k);
        let (int, frac) = scaled.div_rem(&ten_k);
        let digits = frac.to_str_radix(10);
        let pad = k as usize - digits.len();
        write!(f, "{int}.{}{digits}", "0".repeat(pad))
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dyadic({self})")
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    #[test]
    fn msb_examples() {
        assert_eq!(d("0.6875").msb_exponent().unwrap(), -1);
        assert_eq!(d("13").msb_exponent().unwrap(), 3);
        assert_eq!(d("1").msb_exponent().unwrap(), 0);
        assert_eq!(Dyadic::zero().msb_exponent(), Err(DyadicError::Zero));
    }

    #[test]
    fn floor_examples() {
        assert_eq!(d("13").floor_approx(2).unwrap(), d("12"));
        assert_eq!(d("0.6875").floor_approx(2).unwrap(), d("0.5"));
        assert_eq!(d("0.75").floor_approx(4).unwrap(), d("0.75"));
        assert!(Dyadic::zero().floor_approx(3).is_err());
        assert_eq!(d("0.5").floor_approx(0), Err(DyadicError::NoBits(0)));
    }

    #[test]
    fn ceil_examples() {
        assert_eq!(d("0.6875").ceil_approx(2).unwrap(), d("0.75"));
        assert_eq!(d("13").ceil_approx(2).unwrap(), d("16"));
        assert_eq!(d("0.5").ceil_approx(3).unwrap(), d("0.625"));
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(d("0.5") + d("0.25"), d("0.75"));
        let three = [d("0.5"), d("0.5"), d("0.5")];
        assert_eq!(three.iter().sum::<Dyadic>(), d("1.5"));
        let almost =
            d("0b0.0111111111111111111111111111111111111111111111111111111111111111111111111");
        assert_eq!(d("0.5").cmp(&almost), Ordering::Greater);
        assert_eq!(d("0.75").checked_sub(&d("0.25")).unwrap(), d("0.5"));
        assert_eq!(
            d("0.25").checked_sub(&d("0.75")),
            Err(DyadicError::Negative)
        );
        assert_eq!(d("0.375").mul_pow2(3), d("3"));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(d("0b0.1011"), d("0.6875"));
        assert_eq!(d("0b1101"), d("13"));
        assert_eq!(d(".5"), d("0.5"));
        assert!(matches!(
            "0.1".parse::<Dyadic>(),
            Err(DyadicError::NotDyadic(_))
        ));
        assert!(matches!(
            "abc".parse::<Dyadic>(),
            Err(DyadicError::Parse(_))
        ));
        assert!(matches!(
            "0b12".parse::<Dyadic>(),
            Err(DyadicError::Parse(_))
        ));
    }

    #[test]
    fn display_round_trips() {
        for s in ["0.6875", "13", "0", "0.000030517578125", "2.5"] {
            assert_eq!(d(s).to_string(), s);
        }
        assert_eq!(d("0.6875").to_binary_string(), "0b0.1011");
        assert_eq!(d("0.0625").to_binary_string(), "0b0.0001");
    }

    #[test]
    fn normalized_representation() {
        let a = Dyadic::from_parts(12, -4);
        assert_eq!(a.mantissa(), &BigUint::from(3u32));
        assert_eq!(a.exponent(), -2);
        assert_eq!(Dyadic::from_parts(0, 7), Dyadic::zero());
    }

    #[test]
    fn rational_conversion() {
        let v = d("0.6875");
        assert_eq!(Dyadic::from_rational(&v.to_rational()).unwrap(), v);
        let third = BigRational::new(BigInt::from(1), BigInt::from(3));
        assert!(Dyadic::from_rational(&third).is_err());
    }
}
