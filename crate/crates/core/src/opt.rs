//! Offline optimum for small instances, the load upper bound, and exchange
//! canonicalization of reference coverings.

use std::collections::BTreeSet;

use num_traits::ToPrimitive;
use thiserror::Error;

use crate::dyadic::Dyadic;
use crate::model::{
    covering_score, is_two_item, partition_groups, validate_covering, Covering, Instance,
    ModelError, ValidationReport,
};
use crate::oracle::{self, OracleParams};

/// Largest instance `exact_opt` accepts by default.
pub const DEFAULT_EXACT_LIMIT: usize = 18;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("instance has {n} items; exact solving is limited to {limit} (use a generator's reference covering instead)")]
    TooLarge { n: usize, limit: usize },
    #[error("item sizes need more than 120 bits of common precision")]
    Precision,
    #[error("covering is invalid: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dyadic(#[from] crate::dyadic::DyadicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    ExactDp,
    Enumeration,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub covering: Covering,
    pub score: usize,
    pub method: OptMethod,
}

/// `floor(sum of sizes)`; no covering can beat it.
pub fn load_upper_bound(instance: &Instance) -> u64 {
    instance.total().floor_int().to_u64().unwrap_or(u64::MAX)
}

/// Sizes as integers over a common power-of-two denominator, plus the
/// integer that stands for 1.
fn scaled_weights(instance: &Instance) -> Result<(Vec<u128>, u128), OptError> {
    let min_exp = instance
        .sizes()
        .iter()
        .map(|s| s.exponent())
        .min()
        .unwrap_or(0)
        .min(0);
    let frac_bits = (-min_exp) as u64;
    if frac_bits > 120 {
        return Err(OptError::Precision);
    }
    let weights = instance
        .sizes()
        .iter()
        .map(|s| {
            let m = s.mantissa() << (s.exponent() - min_exp) as u64;
            m.to_u128().ok_or(OptError::Precision)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((weights, 1u128 << frac_bits))
}

pub fn exact_opt(instance: &Instance) -> Result<OptResult, OptError> {
    exact_opt_with_limit(instance, DEFAULT_EXACT_LIMIT)
}

/// Exact optimum by dynamic programming over item subsets.
///
/// `state[S]` is the lexicographically best (covered bins, fill of the open
/// bin) over all orders of the items in `S`, where an item is appended to the
/// open bin and the bin closes once it reaches level 1. A larger count
/// dominates any fill, and a larger fill dominates at equal count, so the
/// best final count is attained by some order and `O(2^n n)` suffices.
pub fn exact_opt_with_limit(instance: &Instance, limit: usize) -> Result<OptResult, OptError> {
    let n = instance.len();
    if n > limit || n > 26 {
        return Err(OptError::TooLarge { n, limit });
    }
    let (w, one) = scaled_weights(instance)?;
    let full = (1usize << n) - 1;
    const UNSET: u8 = u8::MAX;
    let mut count = vec![0u8; full + 1];
    let mut fill = vec![0u128; full + 1];
    let mut last = vec![UNSET; full + 1];
    for s in 0..full {
        if s != 0 && last[s] == UNSET {
            continue;
        }
        let (c, f) = (count[s], fill[s]);
        for (i, &wi) in w.iter().enumerate() {
            if s & (1 << i) != 0 {
                continue;
            }
            let t = s | (1 << i);
            let nf = f + wi;
            let cand = if nf >= one { (c + 1, 0) } else { (c, nf) };
            if last[t] == UNSET || cand > (count[t], fill[t]) {
                count[t] = cand.0;
                fill[t] = cand.1;
                last[t] = i as u8;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut s = full;
    while s != 0 {
        let i = last[s] as usize;
        order.push(i);
        s &= !(1 << i);
    }
    order.reverse();

    let mut groups: Vec<Vec<usize>> = vec![Vec::new()];
    let mut level = 0u128;
    for i in order {
        groups.last_mut().unwrap().push(i);
        level += w[i];
        if level >= one {
            groups.push(Vec::new());
            level = 0;
        }
    }
    let covering = Covering::from_groups(instance, &groups);
    let score = covering_score(&covering);
    debug_assert_eq!(score, if n == 0 { 0 } else { count[full] as usize });
    Ok(OptResult {
        covering,
        score,
        method: OptMethod::ExactDp,
    })
}

/// Exhaustive search over all set partitions. Independent of the DP and
/// only practical for about a dozen items.
pub fn enumeration_opt(instance: &Instance) -> Result<OptResult, OptError> {
    let n = instance.len();
    if n > 12 {
        return Err(OptError::TooLarge { n, limit: 12 });
    }
    let (w, one) = scaled_weights(instance)?;
    let mut best_blocks: Vec<Vec<usize>> = Vec::new();
    let mut best = 0usize;
    let mut blocks: Vec<(Vec<usize>, u128)> = Vec::new();

    fn rec(
        i: usize,
        w: &[u128],
        one: u128,
        blocks: &mut Vec<(Vec<usize>, u128)>,
        best: &mut usize,
        best_blocks: &mut Vec<Vec<usize>>,
    ) {
        if i == w.len() {
            let score = blocks.iter().filter(|(_, s)| *s >= one).count();
            if score > *best || best_blocks.is_empty() {
                *best = score;
                *best_blocks = blocks.iter().map(|(b, _)| b.clone()).collect();
            }
            return;
        }
        for k in 0..blocks.len() {
            blocks[k].0.push(i);
            blocks[k].1 += w[i];
            rec(i + 1, w, one, blocks, best, best_blocks);
            blocks[k].1 -= w[i];
            blocks[k].0.pop();
        }
        blocks.push((vec![i], w[i]));
        rec(i + 1, w, one, blocks, best, best_blocks);
        blocks.pop();
    }

    rec(0, &w, one, &mut blocks, &mut best, &mut best_blocks);
    let covering = Covering::from_groups(instance, &best_blocks);
    Ok(OptResult {
        score: covering_score(&covering),
        covering,
        method: OptMethod::Enumeration,
    })
}

fn swap_items(
    c: &mut Covering,
    instance: &Instance,
    (ba, ia): (usize, usize),
    (bb, ib): (usize, usize),
) {
    let pa = c.bins[ba]
        .items
        .iter()
        .position(|&x| x == ia)
        .expect("item in bin");
    let pb = c.bins[bb]
        .items
        .iter()
        .position(|&x| x == ib)
        .expect("item in bin");
    c.bins[ba].items[pa] = ib;
    c.bins[bb].items[pb] = ia;
    for b in [ba, bb] {
        c.bins[b].level = c.bins[b].items.iter().map(|&i| instance.size(i)).sum();
    }
}

/// Exchange-normalize a reference covering without changing its score:
///
/// 1. the bins with exactly one 2-item receive the `|G_2|` largest 2-items
///    (ties go to the lower arrival index), swapping with 2-items from bins
///    that hold two of them or are uncovered;
/// 2. black items (small items of size at least `ceil_b(d)`) held by those
///    bins are traded for smaller black items from other bins whenever the
///    bin stays covered.
///
/// Step 2 only runs when the oracle would actually use the advice
/// strategy (`|G_2| > 0`, beta below the dispatch threshold, positive number
/// of good items).
pub fn canonicalize(c: &Covering, instance: &Instance, bits: u32) -> Result<Covering, OptError> {
    let report = validate_covering(instance, c);
    if !report.is_ok() {
        return Err(OptError::Invalid(report));
    }
    let mut out = c.clone();
    let part = partition_groups(instance, &out, 2)?;
    let n = instance.len();

    // Step 1: largest 2-items into the one-2-item bins.
    let mut twos: Vec<usize> = (0..n).filter(|&i| is_two_item(instance.size(i))).collect();
    twos.sort_by(|&a, &b| instance.size(b).cmp(instance.size(a)).then(a.cmp(&b)));
    let mut target = vec![false; n];
    for &i in twos.iter().take(part.g2) {
        target[i] = true;
    }
    let assign = out.assignment(n);
    let mut g2_bin = vec![false; out.bins.len()];
    for &b in &part.g2_bins {
        g2_bin[b] = true;
    }
    let mut outgoing = Vec::new();
    for &b in &part.g2_bins {
        let two = out.bins[b]
            .items
            .iter()
            .copied()
            .find(|&i| is_two_item(instance.size(i)))
            .expect("G_2 bin holds a 2-item");
        if !target[two] {
            outgoing.push((b, two));
        }
    }
    let incoming: Vec<(usize, usize)> = twos
        .iter()
        .take(part.g2)
        .copied()
        .filter(|&i| !g2_bin[assign[i].expect("valid covering")])
        .map(|i| (assign[i].unwrap(), i))
        .collect();
    debug_assert_eq!(outgoing.len(), incoming.len());
    for (a, b) in outgoing.into_iter().zip(incoming) {
        swap_items(&mut out, instance, a, b);
    }

    // Step 2: smallest black items into the one-2-item bins.
    let params = match OracleParams::derive(part.g2, part.g22, bits) {
        Ok(p) => p,
        Err(_) => return Ok(out),
    };
    if params.beta_large || params.n_good == 0 {
        return Ok(out);
    }
    let d = match oracle::good_threshold(instance, params.n_good as usize) {
        Some(d) => d,
        None => return Ok(out),
    };
    let black_min = d.ceil_approx(bits)?;
    let is_black = |i: usize| {
        let s = instance.size(i);
        !is_two_item(s) && *s >= black_min
    };

    let mut changed = true;
    let mut passes = 0;
    while changed && passes < 64 {
        changed = false;
        passes += 1;
        let assign = out.assignment(n);
        let mut outside: BTreeSet<(Dyadic, usize)> = (0..n)
            .filter(|&i| is_black(i) && !g2_bin[assign[i].unwrap()])
            .map(|i| (instance.size(i).clone(), i))
            .collect();
        let mut inside: Vec<usize> = (0..n)
            .filter(|&i| is_black(i) && g2_bin[assign[i].unwrap()])
            .collect();
        inside.sort_by(|&a, &b| instance.size(b).cmp(instance.size(a)).then(a.cmp(&b)));
        for x in inside {
            let bx = out.assignment(n)[x].unwrap();
            let xs = instance.size(x).clone();
            let slack = out.bins[bx]
                .level
                .checked_sub(&Dyadic::one())
                .expect("G_2 bin is covered");
            // Smallest y with level - x + y >= 1, i.e. y >= x - slack.
            let lo = xs.checked_sub(&slack).unwrap_or_else(|_| Dyadic::zero());
            let pick = outside.range((lo, 0)..).find(|(ys, _)| *ys < xs).cloned();
            if let Some((ys, y)) = pick {
                let by = out.assignment(n)[y].unwrap();
                outside.remove(&(ys, y));
                swap_items(&mut out, instance, (bx, x), (by, y));
                outside.insert((xs, x));
                changed = true;
            }
        }
    }
    debug_assert_eq!(covering_score(&out), covering_score(c));
    Ok(out)
}
