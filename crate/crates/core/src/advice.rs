//! The `DH^b_2` advice record and its bit layout.
//!
//! Layout, in order: `beta_large` (1 bit; nothing follows when set),
//! `m_r` count, `subseq` (2 bits, `0..=2` for subsequences 1-3 and `3` for
//! the last), `case` (2 bits, only for the last subsequence: `0` = 2a,
//! `1` = 2b, `2` = 2c), the case fields, then `d` (approximation of the good
//! threshold, decoded rounding up), `m_b` count, and when `m_b > 0` the
//! `s_b` approximation (decoded rounding down) and the `e_b` count.
//!
//! Case fields: subsequence cases carry `a`; 2a carries `x_l`, `x_r`, `a`;
//! 2b carries `x_l`, `a_l`, `x_r`; 2c carries `x_l`.

use serde::Serialize;

use crate::advicetape::{AdviceTape, TapeError};
use crate::dyadic::{Dyadic, Rounding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LastCase {
    #[serde(rename = "2a")]
    A,
    #[serde(rename = "2b")]
    B,
    #[serde(rename = "2c")]
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Selector {
    /// Subsequence 1, 2 or 3 holds enough good 2-items.
    Subsequence(u8),
    Last(LastCase),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dh2bAdvice {
    pub beta_large: bool,
    /// Number of reserved bins.
    pub r: u64,
    pub selector: Selector,
    /// Good-marking budget for subsequence cases and Case 2a.
    pub a: u64,
    /// Good-marking budget for Case 2b.
    pub a_l: u64,
    pub x_l: u64,
    pub x_r: u64,
    /// `floor_b(d)`; the strategy works with `d_up = d_down + ulp`.
    pub d_down: Dyadic,
    /// Number of black reserved bins.
    pub m_b: u64,
    pub s_b_down: Option<Dyadic>,
    pub e_b: u64,
}

fn ulp(v: &Dyadic, b: u32) -> Dyadic {
    v.approx_ulp(b).expect("nonzero approximation")
}

impl Dh2bAdvice {
    /// Advice that only dispatches to `DH_2`.
    pub fn beta_large() -> Self {
        Dh2bAdvice {
            beta_large: true,
            r: 0,
            selector: Selector::Subsequence(1),
            a: 0,
            a_l: 0,
            x_l: 0,
            x_r: 0,
            d_down: Dyadic::zero(),
            m_b: 0,
            s_b_down: None,
            e_b: 0,
        }
    }

    pub fn d_up(&self, b: u32) -> Dyadic {
        &self.d_down + &ulp(&self.d_down, b)
    }

    /// Upper edge of the band of black sizes just above `s_b_down`.
    pub fn s_b_up(&self, b: u32) -> Option<Dyadic> {
        self.s_b_down.as_ref().map(|s| s + &ulp(s, b))
    }

    pub fn encode(&self, tape: &mut AdviceTape, b: u32) -> Result<(), TapeError> {
        tape.begin_field("beta_large");
        tape.write_bit(self.beta_large);
        if self.beta_large {
            return Ok(());
        }
        tape.begin_field("m_r");
        tape.write_count_approx(self.r, b)?;
        tape.begin_field("subseq");
        match self.selector {
            Selector::Subsequence(s) => tape.write_uint_fixed(u64::from(s - 1), 2),
            Selector::Last(c) => {
                tape.write_uint_fixed(3, 2);
                tape.begin_field("case");
                tape.write_uint_fixed(
                    match c {
                        LastCase::A => 0,
                        LastCase::B => 1,
                        LastCase::C => 2,
                    },
                    2,
                );
            }
        }
        let count = |tape: &mut AdviceTape, name: &str, v: u64| {
            tape.begin_field(name);
            tape.write_count_approx(v, b)
        };
        match self.selector {
            Selector::Subsequence(_) => count(tape, "a", self.a)?,
            Selector::Last(LastCase::A) => {
                count(tape, "x_l", self.x_l)?;
                count(tape, "x_r", self.x_r)?;
                count(tape, "a", self.a)?;
            }
            Selector::Last(LastCase::B) => {
                count(tape, "x_l", self.x_l)?;
                count(tape, "a_l", self.a_l)?;
                count(tape, "x_r", self.x_r)?;
            }
            Selector::Last(LastCase::C) => count(tape, "x_l", self.x_l)?,
        }
        tape.begin_field("d");
        tape.write_approx(&self.d_down, b)?;
        count(tape, "m_b", self.m_b)?;
        if self.m_b > 0 {
            tape.begin_field("s_b");
            let s = self
                .s_b_down
                .as_ref()
                .ok_or(TapeError::Decode(tape.len()))?;
            tape.write_approx(s, b)?;
            count(tape, "e_b", self.e_b)?;
        }
        Ok(())
    }

    pub fn decode(tape: &mut AdviceTape, b: u32) -> Result<Self, TapeError> {
        tape.expect_field("beta_large")?;
        if tape.read_bit()? {
            return Ok(Self::beta_large());
        }
        let mut adv = Self::beta_large();
        adv.beta_large = false;
        let count = |tape: &mut AdviceTape, name: &str| -> Result<u64, TapeError> {
            tape.expect_field(name)?;
            tape.read_count_approx(b)
        };
        adv.r = count(tape, "m_r")?;
        tape.expect_field("subseq")?;
        adv.selector = match tape.read_uint_fixed(2)? {
            s @ 0..=2 => Selector::Subsequence(s as u8 + 1),
            _ => {
                tape.expect_field("case")?;
                let pos = tape.read_position();
                Selector::Last(match tape.read_uint_fixed(2)? {
                    0 => LastCase::A,
                    1 => LastCase::B,
                    2 => LastCase::C,
                    _ => return Err(TapeError::Decode(pos)),
                })
            }
        };
        match adv.selector {
            Selector::Subsequence(_) => adv.a = count(tape, "a")?,
            Selector::Last(LastCase::A) => {
                adv.x_l = count(tape, "x_l")?;
                adv.x_r = count(tape, "x_r")?;
                adv.a = count(tape, "a")?;
            }
            Selector::Last(LastCase::B) => {
                adv.x_l = count(tape, "x_l")?;
                adv.a_l = count(tape, "a_l")?;
                adv.x_r = count(tape, "x_r")?;
            }
            Selector::Last(LastCase::C) => adv.x_l = count(tape, "x_l")?,
        }
        tape.expect_field("d")?;
        adv.d_down = tape.read_approx(b, Rounding::Floor)?.value;
        adv.m_b = count(tape, "m_b")?;
        if adv.m_b > 0 {
            tape.expect_field("s_b")?;
            adv.s_b_down = Some(tape.read_approx(b, Rounding::Floor)?.value);
            adv.e_b = count(tape, "e_b")?;
        }
        Ok(adv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(selector: Selector) -> Dh2bAdvice {
        Dh2bAdvice {
            beta_large: false,
            r: 96,
            selector,
            a: if matches!(selector, Selector::Last(LastCase::B | LastCase::C)) {
                0
            } else {
                40
            },
            a_l: if matches!(selector, Selector::Last(LastCase::B)) {
                12
            } else {
                0
            },
            x_l: if matches!(selector, Selector::Subsequence(_)) {
                0
            } else {
                32
            },
            x_r: match selector {
                Selector::Last(LastCase::A | LastCase::B) => 24,
                _ => 0,
            },
            d_down: "0.2890625".parse().unwrap(),
            m_b: 5,
            s_b_down: Some("0.3125".parse().unwrap()),
            e_b: 1,
        }
    }

    #[test]
    fn beta_large_is_one_bit() {
        let mut t = AdviceTape::new();
        Dh2bAdvice::beta_large().encode(&mut t, 8).unwrap();
        assert_eq!(t.bits(), &[true]);
        assert_eq!(
            Dh2bAdvice::decode(&mut t, 8).unwrap(),
            Dh2bAdvice::beta_large()
        );
    }

    #[test]
    fn round_trip_every_selector() {
        for sel in [
            Selector::Subsequence(1),
            Selector::Subsequence(2),
            Selector::Subsequence(3),
            Selector::Last(LastCase::A),
            Selector::Last(LastCase::B),
            Selector::Last(LastCase::C),
        ] {
            let adv = sample(sel);
            let mut t = AdviceTape::new();
            adv.encode(&mut t, 8).unwrap();
            assert_eq!(Dh2bAdvice::decode(&mut t, 8).unwrap(), adv, "{sel:?}");
            assert!(t.fully_consumed());
            // Same bits without the field ledger.
            let mut bare = AdviceTape::from_dump(&t.to_dump()).unwrap();
            assert_eq!(Dh2bAdvice::decode(&mut bare, 8).unwrap(), adv);
        }
    }

    #[test]
    fn no_black_bins_skips_tail_fields() {
        let mut adv = sample(Selector::Subsequence(2));
        adv.m_b = 0;
        adv.s_b_down = None;
        adv.e_b = 0;
        let mut t = AdviceTape::new();
        adv.encode(&mut t, 8).unwrap();
        assert_eq!(t.report().bits_for("s_b"), 0);
        assert_eq!(Dh2bAdvice::decode(&mut t, 8).unwrap(), adv);
    }

    #[test]
    fn derived_edges() {
        let adv = sample(Selector::Subsequence(1));
        // 0.2890625 = 0.0100101b, msb 2^-2, ulp at 8 bits is 2^-9.
        assert_eq!(adv.d_up(8), "0.291015625".parse().unwrap());
        assert_eq!(adv.s_b_up(8), Some("0.314453125".parse().unwrap()));
    }
}
