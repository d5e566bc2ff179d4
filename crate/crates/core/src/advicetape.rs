//! Bit-level advice channel between the oracle and the online strategy.
//!
//! The oracle appends fields; the strategy reads them back in the same order.
//! Every write is recorded in a named field ledger so bit usage can be
//! audited and a reader can verify it consumes exactly what was written.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::dyadic::{Dyadic, DyadicError, Rounding};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TapeError {
    #[error("advice underflow: wanted {wanted} bits at position {pos}, tape has {len}")]
    Underflow {
        wanted: usize,
        pos: usize,
        len: usize,
    },
    #[error("malformed self-delimiting code at bit {0}")]
    Decode(usize),
    #[error("self-delimiting integers must be >= 1")]
    ZeroGamma,
    #[error("reader expected field `{expected}` at bit {pos}, found {found}")]
    FieldMismatch {
        expected: String,
        found: String,
        pos: usize,
    },
    #[error("malformed tape dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
}

/// One named field on the tape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldEntry {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Bits written, broken down by field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BitBudgetReport {
    pub bits_written: usize,
    pub breakdown: Vec<(String, usize)>,
}

impl BitBudgetReport {
    pub fn bits_for(&self, field: &str) -> usize {
        self.breakdown
            .iter()
            .filter(|(n, _)| n == field)
            .map(|(_, c)| c)
            .sum()
    }
}

/// A `b`-bit approximation read back from the tape, together with the
/// exponent of its leading bit so callers can reconstruct neighbouring grid
/// points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedApprox {
    pub value: Dyadic,
    /// `None` when the encoded value was zero.
    pub msb: Option<i64>,
    pub bits: u32,
}

impl DecodedApprox {
    /// `2^(q-b+1)`, the grid spacing of the approximation.
    pub fn ulp(&self) -> Option<Dyadic> {
        self.msb.map(|q| Dyadic::pow2(q - self.bits as i64 + 1))
    }
}

/// Append-only bit sequence with a read cursor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdviceTape {
    bits: Vec<bool>,
    read_pos: usize,
    fields: Vec<FieldEntry>,
    read_field: usize,
}

impl AdviceTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn read_position(&self) -> usize {
        self.read_pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.read_pos
    }

    pub fn fields(&self) -> &[FieldEntry] {
        &self.fields
    }

    /// Rewind the reader to the start of the tape.
    pub fn rewind(&mut self) {
        self.read_pos = 0;
        self.read_field = 0;
    }

    pub fn report(&self) -> BitBudgetReport {
        BitBudgetReport {
            bits_written: self.bits.len(),
            breakdown: self
                .fields
                .iter()
                .map(|f| (f.name.clone(), f.len))
                .collect(),
        }
    }

    /// Open a named field; subsequent writes are accounted to it.
    pub fn begin_field(&mut self, name: &str) {
        self.fields.push(FieldEntry {
            name: name.to_string(),
            start: self.bits.len(),
            len: 0,
        });
    }

    /// Check that the reader is positioned at the start of field `name`.
    /// Only meaningful on tapes that carry a field ledger; tapes loaded from a
    /// dump have none and are accepted as-is.
    pub fn expect_field(&mut self, name: &str) -> Result<(), TapeError> {
        if self.fields.is_empty() {
            return Ok(());
        }
        match self.fields.get(self.read_field) {
            Some(f) if f.name == name && f.start == self.read_pos => {
                self.read_field += 1;
                Ok(())
            }
            Some(f) => Err(TapeError::FieldMismatch {
                expected: name.to_string(),
                found: format!("`{}` at bit {}", f.name, f.start),
                pos: self.read_pos,
            }),
            None => Err(TapeError::FieldMismatch {
                expected: name.to_string(),
                found: "end of ledger".into(),
                pos: self.read_pos,
            }),
        }
    }

    /// True when every written field has been consumed by the reader.
    pub fn fully_consumed(&self) -> bool {
        self.read_pos == self.bits.len()
            && (self.fields.is_empty() || self.read_field == self.fields.len())
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.bits.push(bit);
        if let Some(f) = self.fields.last_mut() {
            f.len += 1;
        }
    }

    pub fn write_bits(&mut self, bits: &[bool]) {
        for &b in bits {
            self.write_bit(b);
        }
    }

    pub fn read_bit(&mut self) -> Result<bool, TapeError> {
        let bit = *self.bits.get(self.read_pos).ok_or(TapeError::Underflow {
            wanted: 1,
            pos: self.read_pos,
            len: self.bits.len(),
        })?;
        self.read_pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: usize) -> Result<Vec<bool>, TapeError> {
        if self.remaining() < n {
            return Err(TapeError::Underflow {
                wanted: n,
                pos: self.read_pos,
                len: self.bits.len(),
            });
        }
        let out = self.bits[self.read_pos..self.read_pos + n].to_vec();
        self.read_pos += n;
        Ok(out)
    }

    /// Write the low `width` bits of `value`, most significant first.
    pub fn write_uint_fixed(&mut self, value: u64, width: u32) {
        for i in (0..width).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn read_uint_fixed(&mut self, width: u32) -> Result<u64, TapeError> {
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    /// Elias gamma: `floor(log2 u)` zeros followed by the binary form of `u`.
    pub fn write_gamma(&mut self, u: u64) -> Result<(), TapeError> {
        if u == 0 {
            return Err(TapeError::ZeroGamma);
        }
        let n = 63 - u.leading_zeros();
        for _ in 0..n {
            self.write_bit(false);
        }
        self.write_uint_fixed(u, n + 1);
        Ok(())
    }

    pub fn read_gamma(&mut self) -> Result<u64, TapeError> {
        let start = self.read_pos;
        let mut zeros = 0u32;
        loop {
            match self.read_bit() {
                Ok(false) => {
                    zeros += 1;
                    if zeros > 63 {
                        return Err(TapeError::Decode(start));
                    }
                }
                Ok(true) => break,
                Err(_) => return Err(TapeError::Decode(start)),
            }
        }
        let rest = self
            .read_uint_fixed(zeros)
            .map_err(|_| TapeError::Decode(start))?;
        Ok((1u64 << zeros) | rest)
    }

    /// Sign bit (1 = negative) followed by gamma of `|q| + 1`.
    pub fn write_signed_gamma(&mut self, q: i64) -> Result<(), TapeError> {
        self.write_bit(q < 0);
        self.write_gamma(q.unsigned_abs() + 1)
    }

    pub fn read_signed_gamma(&mut self) -> Result<i64, TapeError> {
        let neg = self.read_bit()?;
        let mag = self.read_gamma()? - 1;
        let mag = i64::try_from(mag).map_err(|_| TapeError::Decode(self.read_pos))?;
        Ok(if neg { -mag } else { mag })
    }

    /// Leading-bit exponent of `v` (signed gamma) then exactly `b` bits of
    /// `floor_approx(v, b)`. The rounding mode is applied by the reader.
    pub fn write_approx(&mut self, v: &Dyadic, b: u32) -> Result<(), TapeError> {
        let q = v.msb_exponent()?;
        let floor = v.floor_approx(b)?;
        self.write_signed_gamma(q)?;
        let cutoff = q - b as i64 + 1;
        // floor = k * 2^cutoff with 2^(b-1) <= k < 2^b
        let k = shifted_mantissa(&floor, cutoff);
        for i in (0..b as u64).rev() {
            self.write_bit(k.bit(i));
        }
        Ok(())
    }

    pub fn read_approx(&mut self, b: u32, mode: Rounding) -> Result<DecodedApprox, TapeError> {
        let q = self.read_signed_gamma()?;
        let bits = self.read_bits(b as usize)?;
        let mut k = BigUint::zero();
        for bit in bits {
            k <<= 1u32;
            if bit {
                k += 1u32;
            }
        }
        let cutoff = q - b as i64 + 1;
        let mut value = Dyadic::new(k, cutoff);
        if mode == Rounding::Ceil {
            value = value + Dyadic::pow2(cutoff);
        }
        Ok(DecodedApprox {
            value,
            msb: Some(q),
            bits: b,
        })
    }

    /// Nonnegative integer approximated to `b` bits. Zero is a single
    /// presence bit; otherwise a `1` bit precedes the [`write_approx`] code.
    ///
    /// [`write_approx`]: AdviceTape::write_approx
    pub fn write_count_approx(&mut self, value: u64, b: u32) -> Result<(), TapeError> {
        if value == 0 {
            self.write_bit(false);
            return Ok(());
        }
        self.write_bit(true);
        self.write_approx(&Dyadic::from_u64(value), b)
    }

    pub fn read_count_approx(&mut self, b: u32) -> Result<u64, TapeError> {
        if !self.read_bit()? {
            return Ok(0);
        }
        let d = self.read_approx(b, Rounding::Floor)?;
        d.value
            .to_u64_exact()
            .ok_or(TapeError::Decode(self.read_pos))
    }

    /// Text dump: `ADV1`, the bit length in decimal, then the payload in hex
    /// (bits packed most significant first, zero padded).
    pub fn to_dump(&self) -> String {
        let mut hex = String::with_capacity(self.bits.len() / 4 + 2);
        for chunk in self.bits.chunks(8) {
            let mut byte = 0u8;
            for (i, &b) in chunk.iter().enumerate() {
                if b {
                    byte |= 0x80 >> i;
                }
            }
            let _ = write!(hex, "{byte:02x}");
        }
        format!("ADV1\n{}\n{}\n", self.bits.len(), hex)
    }

    pub fn from_dump(text: &str) -> Result<Self, TapeError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("ADV1") {
            return Err(TapeError::Dump("missing ADV1 header".into()));
        }
        let len: usize = lines
            .next()
            .ok_or_else(|| TapeError::Dump("missing bit length".into()))?
            .parse()
            .map_err(|_| TapeError::Dump("bad bit length".into()))?;
        let hex = lines.next().unwrap_or("");
        if hex.len() != len.div_ceil(8) * 2 {
            return Err(TapeError::Dump(format!(
                "payload has {} hex digits, expected {}",
                hex.len(),
                len.div_ceil(8) * 2
            )));
        }
        let mut bits = Vec::with_capacity(len);
        for i in 0..len.div_ceil(8) {
            let byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| TapeError::Dump("bad hex digit".into()))?;
            for j in 0..8 {
                if bits.len() < len {
                    bits.push(byte & (0x80 >> j) != 0);
                }
            }
        }
        Ok(Self {
            bits,
            ..Self::default()
        })
    }
}

fn shifted_mantissa(v: &Dyadic, cutoff: i64) -> BigUint {
    let shift = v.exponent() - cutoff;
    debug_assert!(shift >= 0);
    if v.is_zero() {
        BigUint::zero()
    } else {
        v.mantissa() << shift as u64
    }
}

/// Length of the gamma code for `u`.
pub fn gamma_len(u: u64) -> usize {
    debug_assert!(u >= 1);
    2 * (63 - u.leading_zeros() as usize) + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn raw_round_trip() {
        let mut t = AdviceTape::new();
        t.write_bits(&bits("101"));
        assert_eq!(t.read_bits(3).unwrap(), bits("101"));

        let mut empty = AdviceTape::new();
        assert!(matches!(
            empty.read_bits(1),
            Err(TapeError::Underflow { .. })
        ));

        let mut zeros = AdviceTape::new();
        zeros.write_bits(&[false; 64]);
        assert_eq!(zeros.read_bits(64).unwrap(), vec![false; 64]);
    }

    #[test]
    fn gamma_codes() {
        let mut t = AdviceTape::new();
        t.write_gamma(1).unwrap();
        assert_eq!(t.bits(), bits("1").as_slice());

        let mut t = AdviceTape::new();
        t.write_gamma(5).unwrap();
        assert_eq!(t.bits(), bits("00101").as_slice());

        assert_eq!(AdviceTape::new().write_gamma(0), Err(TapeError::ZeroGamma));
    }

    #[test]
    fn gamma_exhaustive_round_trip() {
        let mut t = AdviceTape::new();
        for u in 1..=4096u64 {
            let before = t.len();
            t.write_gamma(u).unwrap();
            let len = t.len() - before;
            assert_eq!(len, gamma_len(u));
            assert!(len <= 2 * (63 - u.leading_zeros() as usize) + 1);
        }
        for u in 1..=4096u64 {
            assert_eq!(t.read_gamma().unwrap(), u);
        }
        assert!(t.fully_consumed());
    }

    #[test]
    fn malformed_gamma() {
        let mut t = AdviceTape::new();
        t.write_bits(&bits("000"));
        assert_eq!(t.read_gamma(), Err(TapeError::Decode(0)));
    }

    #[test]
    fn approx_examples() {
        let mut t = AdviceTape::new();
        t.write_approx(&"0.6875".parse().unwrap(), 2).unwrap();
        t.write_approx(&"13".parse().unwrap(), 2).unwrap();
        t.write_approx(&"0.6875".parse().unwrap(), 2).unwrap();
        let a = t.read_approx(2, Rounding::Floor).unwrap();
        assert_eq!(a.value, "0.5".parse().unwrap());
        assert_eq!(a.ulp().unwrap(), "0.25".parse().unwrap());
        assert_eq!(
            t.read_approx(2, Rounding::Floor).unwrap().value,
            "12".parse().unwrap()
        );
        assert_eq!(
            t.read_approx(2, Rounding::Ceil).unwrap().value,
            "0.75".parse().unwrap()
        );
    }

    #[test]
    fn truncated_approx_is_an_error() {
        let mut t = AdviceTape::new();
        t.write_approx(&"0.6875".parse().unwrap(), 8).unwrap();
        let mut short = AdviceTape::from_dump(&{
            let mut c = AdviceTape::new();
            c.write_bits(&t.bits()[..t.len() - 2]);
            c.to_dump()
        })
        .unwrap();
        assert!(short.read_approx(8, Rounding::Floor).is_err());
    }

    #[test]
    fn counts() {
        let mut t = AdviceTape::new();
        for v in [0u64, 1, 7, 1000, 4097] {
            t.write_count_approx(v, 4).unwrap();
        }
        let got: Vec<u64> = (0..5).map(|_| t.read_count_approx(4).unwrap()).collect();
        assert_eq!(got, vec![0, 1, 7, 960, 4096]);
    }

    #[test]
    fn field_ledger() {
        let mut t = AdviceTape::new();
        t.begin_field("flag");
        t.write_bit(true);
        t.begin_field("count");
        t.write_gamma(5).unwrap();
        let r = t.report();
        assert_eq!(r.bits_written, 6);
        assert_eq!(r.breakdown, vec![("flag".into(), 1), ("count".into(), 5)]);
        assert_eq!(
            r.breakdown.iter().map(|x| x.1).sum::<usize>(),
            r.bits_written
        );

        assert!(matches!(
            t.expect_field("count"),
            Err(TapeError::FieldMismatch { .. })
        ));
        t.expect_field("flag").unwrap();
        t.read_bit().unwrap();
        t.expect_field("count").unwrap();
        assert_eq!(t.read_gamma().unwrap(), 5);
        assert!(t.fully_consumed());
    }

    #[test]
    fn dump_round_trip() {
        let mut t = AdviceTape::new();
        t.write_bits(&bits("1011001110"));
        let dump = t.to_dump();
        assert_eq!(dump, "ADV1\n10\nb380\n");
        let back = AdviceTape::from_dump(&dump).unwrap();
        assert_eq!(back.bits(), t.bits());
        assert!(AdviceTape::from_dump("ADV2\n1\n80\n").is_err());
        assert!(AdviceTape::from_dump("ADV1\n9\n80\n").is_err());
    }
}
