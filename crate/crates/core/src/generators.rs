//! Seeded instance families. Families that know their optimum also return
//! a reference covering in which every bin is filled to exactly 1, so the
//! load bound certifies it.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::Dyadic;
use crate::model::{Covering, Instance, ModelError};
use crate::oracle::{OracleError, OracleParams};
use crate::rational::{format_fraction, parse_rational, RationalParseError};

/// Name of the generator PRNG, recorded alongside every seed.
pub const PRNG_NAME: &str = "chacha8";

/// Denominator exponent of the random families.
const GRID: i64 = 20;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Rational(#[from] RationalParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Placement of good 2-items in the arrival order of a beta family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoodProfile {
    /// All good 2-items first: the first subsequence suffices.
    Front,
    /// Uniformly shuffled.
    Spread,
    /// Few goods early and the bulk at the start of the last subsequence.
    Case2a,
    /// As `Case2a` plus a good-heavy tail.
    Case2b,
    /// Good-heavy tail with the last subsequence starting on non-goods.
    Case2c,
}

impl fmt::Display for GoodProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GoodProfile::Front => "front",
            GoodProfile::Spread => "spread",
            GoodProfile::Case2a => "case2a",
            GoodProfile::Case2b => "case2b",
            GoodProfile::Case2c => "case2c",
        };
        f.write_str(s)
    }
}

fn default_profile() -> GoodProfile {
    GoodProfile::Spread
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `n` sizes uniform on the grid `k / 2^10`.
    Uniform { n: usize },
    /// Groups of `1/alpha` items of size `alpha - u` followed by one item of
    /// size `alpha`, then all `u`-sized items; DNF covers one bin per
    /// group.
    DnfAdversary {
        /// A power of two `1/2^j`, as `p/q` or decimal.
        alpha: String,
        groups: usize,
        /// Exponent `e` of the filler size `u = 2^-e`.
        #[serde(default = "default_u_exp")]
        u_exp: u32,
    },
    /// Optimal coverings with prescribed `beta = (|G_22| + |G_2|) / |G_2|`.
    BetaFamily {
        beta: String,
        /// Target `|OPT|`.
        opt: usize,
        /// Fraction of `|OPT|` in `G_2 ∪ G_22` (default `7/10`).
        #[serde(default)]
        two_share: Option<String>,
        #[serde(default = "default_profile")]
        profile: GoodProfile,
    },
    /// `opt` unit-sum groups of items below 1/2.
    AllSmall { opt: usize },
    /// `n` items of size `1 - u` followed by `n` items of size `u`.
    CsirikTotik {
        n: usize,
        #[serde(default = "default_ct_exp")]
        u_exp: u32,
    },
}

fn default_u_exp() -> u32 {
    30
}

fn default_ct_exp() -> u32 {
    20
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Uniform { .. } => "uniform",
            Family::DnfAdversary { .. } => "dnf_adversary",
            Family::BetaFamily { .. } => "beta_family",
            Family::AllSmall { .. } => "all_small",
            Family::CsirikTotik { .. } => "csirik_totik",
        }
    }

    /// Compact `key=value` rendering for report rows.
    pub fn params(&self) -> String {
        match self {
            Family::Uniform { n } => format!("n={n}"),
            Family::DnfAdversary {
                alpha,
                groups,
                u_exp,
            } => {
                format!("alpha={alpha};groups={groups};u=2^-{u_exp}")
            }
            Family::BetaFamily {
                beta,
                opt,
                two_share,
                profile,
            } => {
                let mut s = format!("beta={beta};opt={opt};profile={profile}");
                if let Some(w) = two_share {
                    s.push_str(&format!(";two_share={w}"));
                }
                s
            }
            Family::AllSmall { opt } => format!("opt={opt}"),
            Family::CsirikTotik { n, u_exp } => format!("n={n};u=2^-{u_exp}"),
        }
    }

    /// Whether the arrival order depends on the advice width.
    pub fn depends_on_bits(&self) -> bool {
        matches!(
            self,
            Family::BetaFamily { profile, .. } if *profile != GoodProfile::Spread
        )
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    pub reference: Option<Covering>,
    /// `(|G_22|, |G_2|, |G_S|)` of the reference, when built by groups.
    pub groups: Option<(usize, usize, usize)>,
}

fn grid(k: u64) -> Dyadic {
    Dyadic::from_parts(k, -GRID)
}

/// Assemble `bins` (lists of sizes) into an instance in the order given by
/// `order` (pairs of bin index and position within the bin).
fn assemble(bins: &[Vec<Dyadic>], order: &[(usize, usize)]) -> Result<Generated, GeneratorError> {
    let mut sizes = Vec::with_capacity(order.len());
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); bins.len()];
    for (i, &(b, k)) in order.iter().enumerate() {
        sizes.push(bins[b][k].clone());
        groups[b].push(i);
    }
    let instance = Instance::new(sizes)?;
    let reference = Covering::from_groups(&instance, &groups);
    Ok(Generated {
        instance,
        reference: Some(reference),
        groups: None,
    })
}

fn all_positions(bins: &[Vec<Dyadic>]) -> Vec<(usize, usize)> {
    bins.iter()
        .enumerate()
        .flat_map(|(b, v)| (0..v.len()).map(move |k| (b, k)))
        .collect()
}

/// Split `total` grid units into pieces drawn from `[lo, hi]`; the last
/// piece takes the remainder.
fn split_units(rng: &mut ChaCha8Rng, total: u64, lo: u64, hi: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut rem = total;
    while rem > hi {
        let p = rng.gen_range(lo..=hi);
        out.push(p);
        rem -= p;
    }
    if rem > 0 {
        out.push(rem);
    }
    out
}

pub fn generate(family: &Family, seed: u64, bits: u32) -> Result<Generated, GeneratorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match family {
        Family::Uniform { n } => {
            let sizes = (0..*n)
                .map(|_| Dyadic::from_parts(rng.gen_range(1..1024), -10))
                .collect();
            Ok(Generated {
                instance: Instance::new(sizes)?,
                reference: None,
                groups: None,
            })
        }
        Family::DnfAdversary {
            alpha,
            groups,
            u_exp,
        } => dnf_adversary(alpha, *groups, *u_exp),
        Family::AllSmall { opt } => {
            let unit = 1u64 << 12;
            let bins: Vec<Vec<Dyadic>> = (0..*opt)
                .map(|_| {
                    split_units(&mut rng, unit, 64, unit / 2 - 1)
                        .into_iter()
                        .map(|k| Dyadic::from_parts(k, -12))
                        .collect()
                })
                .collect();
            let mut order = all_positions(&bins);
            order.shuffle(&mut rng);
            let mut g = assemble(&bins, &order)?;
            g.groups = Some((0, 0, *opt));
            Ok(g)
        }
        Family::CsirikTotik { n, u_exp } => {
            let u = Dyadic::pow2(-i64::from(*u_exp));
            let big = Dyadic::one()
                .checked_sub(&u)
                .map_err(|e| GeneratorError::Spec(e.to_string()))?;
            let bins: Vec<Vec<Dyadic>> = (0..*n).map(|_| vec![big.clone(), u.clone()]).collect();
            let order: Vec<(usize, usize)> = (0..*n)
                .map(|b| (b, 0))
                .chain((0..*n).map(|b| (b, 1)))
                .collect();
            let mut g = assemble(&bins, &order)?;
            g.groups = Some((0, *n, 0));
            Ok(g)
        }
        Family::BetaFamily {
            beta,
            opt,
            two_share,
            profile,
        } => beta_family(&mut rng, beta, *opt, two_share.as_deref(), *profile, bits),
    }
}

fn dnf_adversary(alpha: &str, groups: usize, u_exp: u32) -> Result<Generated, GeneratorError> {
    let a = parse_rational(alpha)?;
    let inv = (BigRational::one() / &a).to_integer();
    let p = inv
        .to_u64()
        .filter(|p| p.is_power_of_two() && *p >= 2 && a.numer() == &1.into());
    let p = p.ok_or_else(|| {
        GeneratorError::Spec(format!("alpha must be 1/2^j with j >= 1, got {alpha}"))
    })?;
    let j = i64::from(p.trailing_zeros());
    if i64::from(u_exp) <= j {
        return Err(GeneratorError::Spec(
            "filler u must be smaller than alpha".into(),
        ));
    }
    let alpha_d = Dyadic::pow2(-j);
    let u = Dyadic::pow2(-i64::from(u_exp));
    let piece = alpha_d.checked_sub(&u).expect("u < alpha");
    let mut sizes = Vec::new();
    for _ in 0..groups {
        for _ in 0..p {
            sizes.push(piece.clone());
        }
        sizes.push(alpha_d.clone());
    }
    // Fillers: pieces pair with one filler each to make alpha-units.
    sizes.extend(std::iter::repeat_n(u.clone(), groups * p as usize));
    let instance = Instance::new(sizes)?;

    // Reference: p alpha-units per bin, each a piece plus its filler or an
    // alpha item.
    let per_group = p as usize + 1;
    let filler0 = groups * per_group;
    let mut units: Vec<Vec<usize>> = Vec::with_capacity(groups * per_group);
    for g in 0..groups {
        for k in 0..p as usize {
            units.push(vec![g * per_group + k, filler0 + g * p as usize + k]);
        }
        units.push(vec![g * per_group + p as usize]);
    }
    let mut bins: Vec<Vec<usize>> = units
        .chunks(p as usize)
        .map(|c| c.iter().flatten().copied().collect())
        .collect();
    // An incomplete last bin stays uncovered.
    if bins.is_empty() {
        bins.push(Vec::new());
    }
    let reference = Covering::from_groups(&instance, &bins);
    Ok(Generated {
        instance,
        reference: Some(reference),
        groups: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Place {
    First,
    Last,
    Mixed,
}

/// Number of good 2-items to put in each region of the 2-item sequence.
struct Layout {
    /// `(length, goods, where)` per region, in arrival order.
    regions: Vec<(usize, usize, Place)>,
}

fn profile_layout(
    profile: GoodProfile,
    params: &OracleParams,
    t2: usize,
    n_good: usize,
) -> Option<Layout> {
    let r = params.r as usize;
    if profile == GoodProfile::Spread || r == 0 || t2 < 3 * r {
        return None;
    }
    if profile == GoodProfile::Front {
        return Some(Layout {
            regions: vec![(t2, n_good, Place::First)],
        });
    }
    let g2 = params.g2 as usize;
    let z = t2 - 3 * r;
    let beta = params.beta.clone()?;
    let eps = params.eps.to_rational();
    let tail = match profile {
        GoodProfile::Case2a => 0,
        _ => g2 / 11 + 2,
    };
    let delta = BigRational::new((tail as u64).into(), (g2 as u64).max(1).into());
    let alpha = crate::oracle::compute_alpha(&beta, &delta, &eps);
    let a = (alpha.clone() * BigRational::from_integer((g2 as u64).into()))
        .floor()
        .to_integer()
        .to_usize()
        .unwrap_or(0);
    let y = z.saturating_sub(a).div_ceil(2);
    let y = y.max(tail).min(z);
    let front_len = z - y;
    let early_cap = (params.a0 as usize).saturating_sub(2);
    let want_last = match profile {
        GoodProfile::Case2a => a + 2,
        _ => a + 2 + tail,
    };
    let early_total = n_good.saturating_sub(want_last);
    let per = (early_total / 3).min(early_cap);
    let extra = early_total
        .saturating_sub(3 * per)
        .min(early_cap.saturating_sub(per) * 3);
    let mut early = [per; 3];
    for k in 0..extra {
        early[k % 3] += 1;
    }
    let last_goods = n_good - early.iter().sum::<usize>();
    let mut regions: Vec<(usize, usize, Place)> =
        early.iter().map(|&g| (r, g, Place::Mixed)).collect();
    match profile {
        GoodProfile::Case2a => {
            regions.push((z, last_goods, Place::First));
        }
        GoodProfile::Case2b => {
            let head = last_goods.saturating_sub(tail).min(front_len);
            regions.push((front_len, head, Place::First));
            regions.push((y, last_goods - head, Place::Last));
        }
        GoodProfile::Case2c => {
            let cap = r.saturating_sub(y).min(front_len);
            let need = (alpha
                * BigRational::new(5.into(), 14.into())
                * BigRational::from_integer((g2 as u64).into()))
            .floor()
            .to_integer()
            .to_usize()
            .unwrap_or(0);
            let lead = need.saturating_sub(2).min(cap);
            let mid = last_goods.saturating_sub(tail).saturating_sub(lead);
            regions.push((cap, lead, Place::Mixed));
            regions.push((front_len - cap, mid.min(front_len - cap), Place::First));
            let rest = last_goods - lead - mid.min(front_len - cap);
            regions.push((y, rest, Place::Last));
        }
        _ => unreachable!(),
    }
    Some(Layout { regions })
}

fn beta_family(
    rng: &mut ChaCha8Rng,
    beta: &str,
    opt: usize,
    two_share: Option<&str>,
    profile: GoodProfile,
    bits: u32,
) -> Result<Generated, GeneratorError> {
    let beta_q = parse_rational(beta)?;
    if beta_q < BigRational::one() {
        return Err(GeneratorError::Spec(format!(
            "beta must be >= 1, got {beta}"
        )));
    }
    let share = match two_share {
        Some(s) => parse_rational(s)?,
        None => BigRational::new(7.into(), 10.into()),
    };
    let to_usize = |q: BigRational| q.round().to_integer().to_usize().unwrap_or(0);
    let n_opt = BigRational::from_integer(opt.into());
    let g2 = to_usize(&share * &n_opt / &beta_q).max(1);
    let g22 = to_usize((&beta_q - BigRational::one()) * BigRational::from_integer(g2.into()));
    if g2 + g22 > opt {
        return Err(GeneratorError::Spec(format!(
            "beta {} with two_share {} does not fit in opt {opt}",
            beta,
            format_fraction(&share)
        )));
    }
    let gs = opt - g2 - g22;

    // Pieces first so the item multiset does not depend on `bits`.
    let lo_d = 1u64 << (GRID - 2);
    let hi_d = 7u64 << (GRID - 4);
    let ds: Vec<u64> = index::sample(rng, (hi_d - lo_d) as usize, g2)
        .into_iter()
        .map(|k| lo_d + k as u64)
        .collect();
    let mut sorted_ds = ds.clone();
    sorted_ds.sort_unstable();
    let black_cut = sorted_ds[(3 * g2) / 4];
    let half = grid(1 << (GRID - 1));
    let mut bins: Vec<Vec<Dyadic>> = Vec::with_capacity(opt);
    for _ in 0..g22 {
        bins.push(vec![half.clone(), half.clone()]);
    }
    let one_units = 1u64 << GRID;
    for &d in &ds {
        let mut bin = vec![grid(one_units - d)];
        if d >= black_cut {
            bin.push(grid(d));
        } else {
            bin.extend(
                split_units(rng, d, 1 << (GRID - 7), 1 << (GRID - 5))
                    .into_iter()
                    .map(grid),
            );
        }
        bins.push(bin);
    }
    for _ in 0..gs {
        bins.push(
            split_units(rng, one_units, 1 << (GRID - 5), 1 << (GRID - 3))
                .into_iter()
                .map(grid)
                .collect(),
        );
    }

    // 2-item positions: G_22 bins hold two each, G_2 bins one (position 0).
    let mut twos: Vec<(usize, usize)> = Vec::with_capacity(2 * g22 + g2);
    for b in 0..g22 {
        twos.push((b, 0));
        twos.push((b, 1));
    }
    for k in 0..g2 {
        twos.push((g22 + k, 0));
    }
    let smalls: Vec<(usize, usize)> = (g22..bins.len())
        .flat_map(|b| {
            let skip = usize::from(b < g22 + g2);
            (skip..bins[b].len()).map(move |k| (b, k))
        })
        .collect();

    let params = OracleParams::derive(g2, g22, bits)?;
    let n_good = (params.n_good as usize).min(g2);
    // Goods: the n_good G_2 bins with the smallest deficit d.
    let mut g2_by_d: Vec<usize> = (0..g2).collect();
    g2_by_d.sort_by_key(|&k| ds[k]);
    let mut good_flag = vec![false; g2];
    for &k in &g2_by_d[..n_good] {
        good_flag[k] = true;
    }
    let mut goods: Vec<(usize, usize)> = Vec::new();
    let mut others: Vec<(usize, usize)> = Vec::new();
    for &(b, k) in &twos {
        if b >= g22 && good_flag[b - g22] {
            goods.push((b, k));
        } else {
            others.push((b, k));
        }
    }
    goods.shuffle(rng);
    others.shuffle(rng);

    let two_order: Vec<(usize, usize)> = match profile_layout(profile, &params, twos.len(), n_good)
    {
        None => {
            let mut all = twos.clone();
            all.shuffle(rng);
            all
        }
        Some(layout) => {
            let mut out = Vec::with_capacity(twos.len());
            let (mut gi, mut oi) = (0, 0);
            for (len, want, place) in layout.regions {
                let ng = want.min(goods.len() - gi).min(len);
                let no = (len - ng).min(others.len() - oi);
                let ng = (len - no).min(goods.len() - gi); // top up with goods
                let g = &goods[gi..gi + ng];
                let o = &others[oi..oi + no];
                gi += ng;
                oi += no;
                match place {
                    Place::First => out.extend(g.iter().chain(o).copied()),
                    Place::Last => out.extend(o.iter().chain(g).copied()),
                    Place::Mixed => {
                        let mut region: Vec<(usize, usize)> = g.iter().chain(o).copied().collect();
                        region.shuffle(rng);
                        out.extend(region);
                    }
                }
            }
            out.extend_from_slice(&goods[gi..]);
            out.extend_from_slice(&others[oi..]);
            out
        }
    };

    // Interleave small items uniformly at random with the 2-item stream.
    let mut small_order = smalls;
    small_order.shuffle(rng);
    let total = two_order.len() + small_order.len();
    let mut order = Vec::with_capacity(total);
    let (mut ti, mut si) = (0, 0);
    while ti < two_order.len() || si < small_order.len() {
        let left_t = two_order.len() - ti;
        let left_s = small_order.len() - si;
        if rng.gen_range(0..left_t + left_s) < left_t {
            order.push(two_order[ti]);
            ti += 1;
        } else {
            order.push(small_order[si]);
            si += 1;
        }
    }
    let mut g = assemble(&bins, &order)?;
    g.groups = Some((g22, g2, gs));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{partition_groups, validate_covering};
    use crate::opt::load_upper_bound;
    use num_traits::Signed;

    fn beta(beta: &str, opt: usize, profile: GoodProfile) -> Family {
        Family::BetaFamily {
            beta: beta.into(),
            opt,
            two_share: None,
            profile,
        }
    }

    #[test]
    fn beta_family_reference_is_optimal() {
        let g = generate(&beta("1.05", 400, GoodProfile::Spread), 3, 16).unwrap();
        let c = g.reference.unwrap();
        assert!(validate_covering(&g.instance, &c).is_ok());
        assert_eq!(c.score() as u64, load_upper_bound(&g.instance));
        assert_eq!(c.score(), 400);
        let p = partition_groups(&g.instance, &c, 2).unwrap();
        let (g22, g2, gs) = g.groups.unwrap();
        assert_eq!((p.g22, p.g2, p.gs), (g22, g2, gs));
        let b = p.beta.unwrap();
        let diff = (b - parse_rational("1.05").unwrap()).abs();
        assert!(diff <= BigRational::new(1.into(), (g2 as i64).into()));
    }

    #[test]
    fn beta_one_with_only_g2() {
        let f = Family::BetaFamily {
            beta: "1".into(),
            opt: 121,
            two_share: Some("1".into()),
            profile: GoodProfile::Front,
        };
        let g = generate(&f, 1, 16).unwrap();
        assert_eq!(g.groups, Some((0, 121, 0)));
        assert_eq!(g.reference.unwrap().bins.len(), 121);
    }

    #[test]
    fn deterministic_in_seed() {
        let f = beta("1.03", 300, GoodProfile::Case2b);
        let a = generate(&f, 9, 12).unwrap();
        let b = generate(&f, 9, 12).unwrap();
        assert_eq!(a.instance, b.instance);
        let c = generate(&f, 10, 12).unwrap();
        assert_ne!(a.instance, c.instance);
        // The multiset of sizes does not depend on the advice width.
        let d = generate(&f, 9, 16).unwrap();
        let mut x: Vec<_> = a.instance.sizes().to_vec();
        let mut y: Vec<_> = d.instance.sizes().to_vec();
        x.sort();
        y.sort();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&beta("0.9", 100, GoodProfile::Front), 0, 16).is_err());
        let f = Family::DnfAdversary {
            alpha: "1/3".into(),
            groups: 4,
            u_exp: 30,
        };
        assert!(generate(&f, 0, 16).is_err());
    }

    #[test]
    fn dnf_adversary_reference() {
        for (alpha, p) in [("1/2", 2usize), ("1/4", 4)] {
            let f = Family::DnfAdversary {
                alpha: alpha.into(),
                groups: 10,
                u_exp: 30,
            };
            let g = generate(&f, 0, 16).unwrap();
            assert_eq!(g.instance.len(), 10 * (2 * p + 1));
            let c = g.reference.unwrap();
            assert!(validate_covering(&g.instance, &c).is_ok());
            // floor(k (1 + alpha))
            assert_eq!(c.score(), 10 + 10 / p);
            assert_eq!(c.score() as u64, load_upper_bound(&g.instance));
        }
    }

    #[test]
    fn all_small_and_csirik_totik() {
        let g = generate(&Family::AllSmall { opt: 50 }, 4, 16).unwrap();
        assert!(g
            .instance
            .sizes()
            .iter()
            .all(|s| *s < "0.5".parse().unwrap()));
        assert_eq!(g.reference.unwrap().score(), 50);
        let g = generate(&Family::CsirikTotik { n: 20, u_exp: 20 }, 0, 16).unwrap();
        assert_eq!(g.instance.len(), 40);
        assert_eq!(g.reference.unwrap().score(), 20);
    }

    #[test]
    fn uniform_grid() {
        let g = generate(&Family::Uniform { n: 10 }, 5, 16).unwrap();
        assert_eq!(g.instance.len(), 10);
        assert!(g.reference.is_none());
    }
}
