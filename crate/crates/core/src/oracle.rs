//! Offline advice computation for `DH^b_2` and the predicted ratio bounds.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::advice::{Dh2bAdvice, LastCase, Selector};
use crate::advicetape::{AdviceTape, FieldEntry, TapeError};
use crate::dyadic::{Dyadic, DyadicError};
use crate::model::{
    beta_of, ceil_u64, floor_u64, is_two_item, partition_groups, ratio, validate_covering,
    Covering, Instance, ModelError, ValidationReport,
};
use crate::rational::format_fraction;

/// Fixed constants of the ratio analysis.
pub mod constants {
    use super::*;

    pub fn beta_threshold() -> BigRational {
        ratio(121, 107)
    }
    pub fn target_ratio() -> BigRational {
        ratio(135, 242)
    }
    pub fn delta_t() -> BigRational {
        ratio(1, 11)
    }
    pub fn alpha_l_factor() -> BigRational {
        ratio(5, 14)
    }
    pub fn rho() -> BigRational {
        ratio(13, 121)
    }
    pub fn rho_prime() -> BigRational {
        ratio(26, 121)
    }
    /// Coefficients of `|G_2|` and `|G_22|` in the reserved-bin count.
    pub fn m_r_coeffs() -> (BigRational, BigRational) {
        (ratio(27, 121), ratio(2, 3))
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("advice needs b >= 4 bits (got {0})")]
    BitsTooSmall(u32),
    #[error("reference covering is invalid: {0}")]
    Invalid(ValidationReport),
    #[error("no chunk split of the last subsequence satisfies the constraints (Z = {z}, R = {r}, A0 = {a0})")]
    InfeasibleSplit { z: u64, r: u64, a0: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
}

/// `floor_b` of a nonnegative integer.
pub fn floor_count(x: u64, b: u32) -> u64 {
    if x == 0 {
        return 0;
    }
    let len = 64 - x.leading_zeros();
    if len <= b {
        x
    } else {
        let drop = len - b;
        (x >> drop) << drop
    }
}

/// True when `x` has at most `b` significant bits.
pub fn is_representable(x: u64, b: u32) -> bool {
    floor_count(x, b) == x
}

/// `epsilon = 2 / 2^(floor(b/2))`.
pub fn epsilon(bits: u32) -> Result<Dyadic, OracleError> {
    if bits < 4 {
        return Err(OracleError::BitsTooSmall(bits));
    }
    Ok(Dyadic::pow2(1 - i64::from(bits / 2)))
}

/// `max(0, 685/1452 - beta/3 - delta/4 - eps/4)`.
pub fn compute_alpha(beta: &BigRational, delta: &BigRational, eps: &BigRational) -> BigRational {
    let a = ratio(685, 1452) - beta / ratio(3, 1) - delta / ratio(4, 1) - eps / ratio(4, 1);
    if a < BigRational::zero() {
        BigRational::zero()
    } else {
        a
    }
}

fn frac(n: u64, d: u64) -> BigRational {
    if d == 0 {
        BigRational::zero()
    } else {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }
}

/// Quantities that depend only on `|G_2|`, `|G_22|` and `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleParams {
    pub bits: u32,
    pub eps: Dyadic,
    pub g2: u64,
    pub g22: u64,
    pub beta: Option<BigRational>,
    /// `g2 == 0` or `beta >= 121/107`.
    pub beta_large: bool,
    pub m_r: u64,
    /// `floor_b(m_r)`, the number of reserved bins.
    pub r: u64,
    pub m: u64,
    /// `g2 - 2m`, or 0 when that is not positive.
    pub n_good: u64,
    pub alpha0: BigRational,
    /// `floor_b(floor(alpha0 * g2))`.
    pub a0: u64,
}

impl OracleParams {
    pub fn derive(g2: usize, g22: usize, bits: u32) -> Result<Self, OracleError> {
        let eps = epsilon(bits)?;
        let e = eps.to_rational();
        let (g2, g22) = (g2 as u64, g22 as u64);
        let beta = beta_of(g22 as usize, g2 as usize);
        let beta_large = match &beta {
            None => true,
            Some(b) => *b >= constants::beta_threshold(),
        };
        let m_r = reserved_target(g2, g22, &e);
        let m = inflated_reserve(m_r, &e);
        let n_good = g2.saturating_sub(2 * m);
        let alpha0 = beta
            .as_ref()
            .map(|b| compute_alpha(b, &BigRational::zero(), &e))
            .unwrap_or_default();
        let a0 = floor_count(floor_u64(&(&alpha0 * frac(g2, 1))), bits);
        Ok(OracleParams {
            bits,
            eps,
            g2,
            g22,
            beta,
            beta_large,
            m_r,
            r: floor_count(m_r, bits),
            m,
            n_good,
            alpha0,
            a0,
        })
    }
}

/// `floor((1-eps)^2 (27 g2 / 121 + 2 g22 / 3))`.
pub fn reserved_target(g2: u64, g22: u64, eps: &BigRational) -> u64 {
    let (c2, c22) = constants::m_r_coeffs();
    let one = BigRational::one();
    let shrink = (&one - eps) * (&one - eps);
    floor_u64(&(shrink * (c2 * frac(g2, 1) + c22 * frac(g22, 1))))
}

/// `ceil((1+eps) m_r)`.
pub fn inflated_reserve(m_r: u64, eps: &BigRational) -> u64 {
    ceil_u64(&((BigRational::one() + eps) * frac(m_r, 1)))
}

/// `1 - size` of the `n`-th largest item (1-based), the good threshold `d`.
pub fn good_threshold(instance: &Instance, n: usize) -> Option<Dyadic> {
    if n == 0 || n > instance.len() {
        return None;
    }
    let order = descending_order(instance);
    Dyadic::one().checked_sub(instance.size(order[n - 1])).ok()
}

/// Item indices by size descending, ties by arrival.
pub fn descending_order(instance: &Instance) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..instance.len()).collect();
    idx.sort_by(|&a, &b| instance.size(b).cmp(instance.size(a)).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    BetaLarge,
    Subsequence(u8),
    Case2a,
    Case2b,
    Case2c,
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseKind::BetaLarge => write!(f, "beta-large"),
            CaseKind::Subsequence(s) => write!(f, "1:{s}"),
            CaseKind::Case2a => write!(f, "2a"),
            CaseKind::Case2b => write!(f, "2b"),
            CaseKind::Case2c => write!(f, "2c"),
        }
    }
}

impl Serialize for CaseKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlackStats {
    pub n_b: u64,
    pub m_rb: u64,
    pub s_b: Option<Dyadic>,
    pub x_b: u64,
    pub e_b: u64,
    pub m_b: u64,
}

/// Black-item statistics. Black items are non-2-items of size at least
/// `d_up`; `group2_bins` are the bins holding exactly one 2-item.
pub fn black_stats(
    instance: &Instance,
    covering: &Covering,
    group2_bins: &[usize],
    d_up: &Dyadic,
    r: u64,
    bits: u32,
) -> Result<BlackStats, OracleError> {
    let is_black = |i: usize| {
        let s = instance.size(i);
        !is_two_item(s) && s >= d_up
    };
    let n_b = group2_bins
        .iter()
        .filter(|&&b| covering.bins[b].items.iter().any(|&i| is_black(i)))
        .count() as u64;
    let m_rb = r.min(n_b);
    if m_rb == 0 {
        return Ok(BlackStats {
            n_b,
            ..Default::default()
        });
    }
    let mut blacks: Vec<usize> = (0..instance.len()).filter(|&i| is_black(i)).collect();
    blacks.sort_by(|&a, &b| instance.size(a).cmp(instance.size(b)).then(a.cmp(&b)));
    let s_b = instance.size(blacks[m_rb as usize - 1]).clone();
    let s_down = s_b.floor_approx(bits)?;
    let x_b = blacks[..m_rb as usize]
        .iter()
        .filter(|&&i| *instance.size(i) <= s_down)
        .count() as u64;
    let e_b = m_rb - x_b;
    Ok(BlackStats {
        n_b,
        m_rb,
        s_b: Some(s_b),
        x_b,
        e_b,
        m_b: x_b + floor_count(e_b, bits),
    })
}

#[derive(Debug, Clone)]
pub struct OraclePlan {
    pub bits: u32,
    pub params: OracleParams,
    pub t2: u64,
    pub case: CaseKind,
    /// Why the plan degraded to plain `DH_2`, if it did.
    pub fallback: Option<String>,
    pub d: Option<Dyadic>,
    pub good: Vec<usize>,
    /// Good 2-items per subsequence (1, 2, 3, last).
    pub subseq_good: [u64; 4],
    pub z: u64,
    pub x_l: u64,
    pub x_r: u64,
    pub y: u64,
    pub alpha: BigRational,
    pub delta: BigRational,
    pub alpha_l: BigRational,
    pub alpha_r: BigRational,
    pub black: BlackStats,
    pub m_w: u64,
    pub advice: Dh2bAdvice,
    pub layout: Vec<FieldEntry>,
}

impl OraclePlan {
    pub fn bits_written(&self) -> usize {
        self.layout.iter().map(|f| f.len).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let q = format_fraction;
        json!({
            "bits": self.bits,
            "epsilon": self.params.eps.to_string(),
            "g2": self.params.g2,
            "g22": self.params.g22,
            "beta": self.params.beta.as_ref().map(q),
            "t2": self.t2,
            "case": self.case,
            "fallback": self.fallback,
            "m_r": self.params.m_r,
            "m_r_floor": self.params.r,
            "m": self.params.m,
            "n_good": self.params.n_good,
            "d": self.d.as_ref().map(|d| d.to_string()),
            "good": self.good,
            "subseq_good": self.subseq_good,
            "z": self.z,
            "x_l": self.x_l,
            "x_r": self.x_r,
            "y": self.y,
            "alpha": q(&self.alpha),
            "delta": q(&self.delta),
            "alpha_l": q(&self.alpha_l),
            "alpha_r": q(&self.alpha_r),
            "black": {
                "n_b": self.black.n_b,
                "m_rb": self.black.m_rb,
                "s_b": self.black.s_b.as_ref().map(|s| s.to_string()),
                "x_b": self.black.x_b,
                "e_b": self.black.e_b,
                "m_b": self.black.m_b,
            },
            "m_w": self.m_w,
            "advice": self.advice,
            "layout": self.layout.iter().map(|f| json!({"field": f.name, "start": f.start, "len": f.len})).collect::<Vec<_>>(),
            "predicted": q(&theoretical_bound(self)),
        })
    }
}

struct Split {
    y: u64,
    x_l: u64,
    x_r: u64,
    alpha: BigRational,
    delta: BigRational,
    a: u64,
    good1: u64,
    good2: u64,
    case: LastCase,
}

/// Scan `Y` upward; for the first `Y` admitting a split, pick `X_L`.
/// With `delta <= 1/11` the smallest valid `X_L` is used (Case 2a). Otherwise
/// the smallest valid `X_L` whose first chunk holds at least `5 alpha / 14`
/// of `|G_2|` good items gives Case 2b, and failing that the smallest valid
/// `X_L` gives Case 2c.
#[allow(clippy::too_many_arguments)]
fn find_split(
    last_good: &[bool],
    r: u64,
    g2: u64,
    beta: &BigRational,
    eps: &BigRational,
    bits: u32,
) -> Option<Split> {
    let z = last_good.len() as u64;
    let mut prefix = vec![0u64; last_good.len() + 1];
    for (i, &g) in last_good.iter().enumerate() {
        prefix[i + 1] = prefix[i] + u64::from(g);
    }
    let total = prefix[last_good.len()];
    let g2r = frac(g2, 1);
    for y in 0..=z {
        let s = z - y;
        if s > r || y > r {
            continue;
        }
        let good3 = total - prefix[s as usize];
        let delta = frac(good3, g2);
        let alpha = compute_alpha(beta, &delta, eps);
        let a = floor_count(floor_u64(&(&alpha * &g2r)), bits);
        if s > a + y || prefix[s as usize] < a {
            continue;
        }
        let cap = r - y;
        let valid = |x_l: u64| {
            x_l <= s
                && x_l <= cap
                && s - x_l <= cap
                && is_representable(x_l, bits)
                && is_representable(s - x_l, bits)
        };
        let lo = s.saturating_sub(cap);
        let Some(first) = (lo..=s.min(cap)).find(|&x| valid(x)) else {
            continue;
        };
        let (x_l, case) = if delta <= constants::delta_t() {
            (first, LastCase::A)
        } else {
            let need = constants::alpha_l_factor() * &alpha;
            let b_choice =
                (lo..=s.min(cap)).find(|&x| valid(x) && frac(prefix[x as usize], g2) >= need);
            match b_choice {
                Some(x) => (x, LastCase::B),
                None => (first, LastCase::C),
            }
        };
        let good1 = prefix[x_l as usize];
        return Some(Split {
            y,
            x_l,
            x_r: s - x_l,
            alpha,
            delta,
            a,
            good1,
            good2: prefix[s as usize] - good1,
            case,
        });
    }
    None
}

/// Compute the advice tape and the audit plan from `sigma` and a valid,
/// canonicalized reference covering.
pub fn compute_advice(
    instance: &Instance,
    reference: &Covering,
    bits: u32,
) -> Result<(AdviceTape, OraclePlan), OracleError> {
    let report = validate_covering(instance, reference);
    if !report.is_ok() {
        return Err(OracleError::Invalid(report));
    }
    let part = partition_groups(instance, reference, 2)?;
    let params = OracleParams::derive(part.g2, part.g22, bits)?;
    let twos: Vec<usize> = (0..instance.len())
        .filter(|&i| is_two_item(instance.size(i)))
        .collect();
    let t2 = twos.len() as u64;
    let r = params.r;

    let mut plan = OraclePlan {
        bits,
        params: params.clone(),
        t2,
        case: CaseKind::BetaLarge,
        fallback: None,
        d: None,
        good: Vec::new(),
        subseq_good: [0; 4],
        z: 0,
        x_l: 0,
        x_r: 0,
        y: 0,
        alpha: BigRational::zero(),
        delta: BigRational::zero(),
        alpha_l: BigRational::zero(),
        alpha_r: BigRational::zero(),
        black: BlackStats::default(),
        m_w: 0,
        advice: Dh2bAdvice::beta_large(),
        layout: Vec::new(),
    };

    let fallback = if params.g2 == 0 {
        Some("no bins with exactly one 2-item")
    } else if params.beta_large {
        Some("beta at or above 121/107")
    } else if params.n_good == 0 {
        Some("no good items (n_g <= 0)")
    } else if r == 0 {
        Some("no reserved bins")
    } else if t2 < 3 * r {
        Some("fewer than three full subsequences of 2-items")
    } else {
        None
    };
    if let Some(why) = fallback {
        plan.fallback = (params.g2 > 0 && !params.beta_large).then(|| why.to_string());
        let mut tape = AdviceTape::new();
        plan.advice.encode(&mut tape, bits)?;
        plan.layout = tape.fields().to_vec();
        return Ok((tape, plan));
    }
    let beta = params.beta.clone().expect("g2 > 0");
    let eps = params.eps.to_rational();

    let order = descending_order(instance);
    let n_good = params.n_good as usize;
    let good: Vec<usize> = order[..n_good.min(order.len())].to_vec();
    let mut is_good = vec![false; instance.len()];
    for &i in &good {
        is_good[i] = true;
    }
    let d = good_threshold(instance, n_good).expect("n_good within range");

    let ru = r as usize;
    for (k, chunk) in [
        &twos[..ru],
        &twos[ru..2 * ru],
        &twos[2 * ru..3 * ru],
        &twos[3 * ru..],
    ]
    .iter()
    .enumerate()
    {
        plan.subseq_good[k] = chunk.iter().filter(|&&i| is_good[i]).count() as u64;
    }
    plan.z = t2 - 3 * r;

    let mut adv = Dh2bAdvice::beta_large();
    adv.beta_large = false;
    adv.r = r;
    let need = params.a0.saturating_sub(1);
    if let Some(s) = (0..3).find(|&k| plan.subseq_good[k] >= need) {
        plan.case = CaseKind::Subsequence(s as u8 + 1);
        adv.selector = Selector::Subsequence(s as u8 + 1);
        adv.a = params.a0;
        plan.alpha = params.alpha0.clone();
    } else {
        let last_good: Vec<bool> = twos[3 * ru..].iter().map(|&i| is_good[i]).collect();
        let split = find_split(&last_good, r, params.g2, &beta, &eps, bits).ok_or(
            OracleError::InfeasibleSplit {
                z: plan.z,
                r,
                a0: params.a0,
            },
        )?;
        plan.case = match split.case {
            LastCase::A => CaseKind::Case2a,
            LastCase::B => CaseKind::Case2b,
            LastCase::C => CaseKind::Case2c,
        };
        adv.selector = Selector::Last(split.case);
        plan.x_l = split.x_l;
        plan.x_r = split.x_r;
        plan.y = split.y;
        plan.alpha_l = frac(split.good1, params.g2);
        plan.alpha_r = frac(split.good2, params.g2);
        adv.x_l = split.x_l;
        match split.case {
            LastCase::A => {
                adv.x_r = split.x_r;
                adv.a = split.a;
            }
            LastCase::B => {
                adv.x_r = split.x_r;
                let a_l = constants::alpha_l_factor() * &split.alpha * frac(params.g2, 1);
                adv.a_l = floor_count(floor_u64(&a_l), bits);
            }
            LastCase::C => {}
        }
        plan.alpha = split.alpha;
        plan.delta = split.delta;
    }

    adv.d_down = d.floor_approx(bits)?;
    let d_up = adv.d_up(bits);
    let black = black_stats(instance, reference, &part.g2_bins, &d_up, r, bits)?;
    adv.m_b = floor_count(black.m_b, bits);
    if adv.m_b > 0 {
        adv.s_b_down = Some(black.s_b.as_ref().expect("m_rb > 0").floor_approx(bits)?);
        adv.e_b = floor_count(black.e_b, bits);
    }
    plan.m_w = r - adv.m_b;
    plan.black = black;
    plan.d = Some(d);
    plan.good = good;

    let mut tape = AdviceTape::new();
    adv.encode(&mut tape, bits)?;
    plan.advice = adv;
    plan.layout = tape.fields().to_vec();
    Ok((tape, plan))
}

fn two_thirds_cap(x: BigRational) -> BigRational {
    x.min(ratio(2, 3))
}

/// `min{(2 beta - 1) / (2 beta), 2/3}`; `2/3` when there is no `G_2`.
pub fn dh2_ratio(beta: Option<&BigRational>) -> BigRational {
    match beta {
        None => ratio(2, 3),
        Some(b) => {
            let two_b = b * ratio(2, 1);
            two_thirds_cap((&two_b - BigRational::one()) / two_b)
        }
    }
}

/// Desirable coverings (subsequence cases and 2a).
pub fn desirable_ratio(alpha: &BigRational, beta: &BigRational) -> BigRational {
    let two_b = beta * ratio(2, 1);
    two_thirds_cap((alpha + &two_b - BigRational::one()) / two_b)
}

/// Case 2b with `alpha_L^T = 5 alpha / 14`.
pub fn case2b_ratio(alpha: &BigRational, delta: &BigRational, beta: &BigRational) -> BigRational {
    let two_b = beta * ratio(2, 1);
    let one = BigRational::one();
    let num = (&one - constants::rho()) * (&two_b - &one)
        + constants::alpha_l_factor() * alpha
        + delta * ratio(2, 1);
    two_thirds_cap(num / two_b)
}

pub fn case2c_ratio(alpha_r: &BigRational, delta: &BigRational, beta: &BigRational) -> BigRational {
    let two_b = beta * ratio(2, 1);
    let one = BigRational::one();
    let num = (&one - constants::rho_prime()) * (&two_b - &one) + (alpha_r + delta) * ratio(2, 1);
    two_thirds_cap(num / two_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundCase {
    Desirable,
    Case2b,
    Case2c,
}

/// Worst-case bound of each regime with the fixed constants: `delta` at
/// its threshold `1/11`, `alpha` from [`compute_alpha`], and in Case 2c the
/// least second-chunk share `9 alpha / 14` left after the first chunk.
pub fn regime_bound(kind: BoundCase, beta: &BigRational, eps: &BigRational) -> BigRational {
    let delta = constants::delta_t();
    let alpha = compute_alpha(beta, &delta, eps);
    match kind {
        BoundCase::Desirable => desirable_ratio(&alpha, beta),
        BoundCase::Case2b => case2b_ratio(&alpha, &delta, beta),
        BoundCase::Case2c => {
            let alpha_r = (BigRational::one() - constants::alpha_l_factor()) * &alpha;
            case2c_ratio(&alpha_r, &delta, beta)
        }
    }
}

/// Ratio predicted for the plan's case from its exact parameters.
pub fn theoretical_bound(plan: &OraclePlan) -> BigRational {
    let beta = match (&plan.params.beta, plan.case) {
        (b, CaseKind::BetaLarge) => return dh2_ratio(b.as_ref()),
        (Some(b), _) => b,
        (None, _) => return ratio(2, 3),
    };
    match plan.case {
        CaseKind::BetaLarge => unreachable!(),
        CaseKind::Subsequence(_) | CaseKind::Case2a => desirable_ratio(&plan.alpha, beta),
        CaseKind::Case2b => case2b_ratio(&plan.alpha, &plan.delta, beta),
        CaseKind::Case2c => case2c_ratio(&plan.alpha_r, &plan.delta, beta),
    }
}
