//! Online strategies: dual next fit, dual harmonic, dual worst fit, and the
//! advice-driven `DH^b_2`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::advice::{Dh2bAdvice, LastCase, Selector};
use crate::advicetape::{AdviceTape, TapeError};
use crate::dyadic::Dyadic;
use crate::model::{
    classify_item, is_two_item, Bin, BinRole, Color, Covering, Instance, Item, ItemClass,
    ModelError,
};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("strategy dh2b needs an advice tape")]
    MissingAdvice,
    #[error("advice does not match the input: {0}")]
    Mismatch(String),
    #[error("unknown strategy `{0}` (expected dnf, dhk:<k> or dh2b)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Dnf,
    Dhk(u32),
    /// `DH^b_2` with `b` advice bits per approximated value.
    Dh2b(u32),
}

impl StrategyKind {
    pub fn needs_advice(&self) -> bool {
        matches!(self, StrategyKind::Dh2b(_))
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Dnf => write!(f, "dnf"),
            StrategyKind::Dhk(k) => write!(f, "dhk:{k}"),
            StrategyKind::Dh2b(_) => write!(f, "dh2b"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    /// `dnf`, `dhk:<k>`, `dh2b` (defaults to 16 bits) or `dh2b:<b>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StrategyError::UnknownStrategy(s.to_string());
        match s.split_once(':') {
            None if s == "dnf" => Ok(StrategyKind::Dnf),
            None if s == "dh2b" => Ok(StrategyKind::Dh2b(16)),
            Some(("dhk", k)) => {
                let k: u32 = k.parse().map_err(|_| bad())?;
                if k < 2 {
                    return Err(StrategyError::Model(ModelError::BadK(k)));
                }
                Ok(StrategyKind::Dhk(k))
            }
            Some(("dh2b", b)) => Ok(StrategyKind::Dh2b(b.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// Where one item went.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub item: usize,
    pub bin: usize,
    pub reason: &'static str,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "item {} -> bin {} ({})",
            self.item, self.bin, self.reason
        )
    }
}

/// Bookkeeping of a `DH^b_2` run, for audits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dh2bStats {
    pub beta_large: bool,
    /// Bin ids of the reserved bins; the first `black` of them are black.
    pub reserved: Vec<usize>,
    pub black: usize,
    /// Items declared good by the strategy.
    pub good_marked: Vec<usize>,
    /// White fill of each white reserved bin, in reserved order.
    pub white_levels: Vec<Dyadic>,
    pub d_up: Option<Dyadic>,
    pub bits_read: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub covering: Covering,
    pub placements: Vec<Placement>,
    pub dh2b: Option<Dh2bStats>,
}

impl RunOutcome {
    pub fn score(&self) -> usize {
        self.covering.score()
    }

    pub fn trace_lines(&self, instance: &Instance) -> Vec<String> {
        self.placements
            .iter()
            .map(|p| format!("{} size {}", p, instance.size(p.item)))
            .collect()
    }
}

/// A bin arena shared by the lanes of a run.
#[derive(Debug, Default)]
struct Arena {
    bins: Vec<Bin>,
}

impl Arena {
    fn open(&mut self, role: BinRole) -> usize {
        self.bins.push(Bin::new(role));
        self.bins.len() - 1
    }

    fn put(&mut self, bin: usize, item: &Item) {
        self.bins[bin].push(item.index, &item.size);
    }
}

/// One dual-next-fit lane: a single active bin, closed once covered.
#[derive(Debug)]
pub(crate) struct DnfLane {
    role: BinRole,
    active: Option<usize>,
}

impl DnfLane {
    fn new(role: BinRole) -> Self {
        DnfLane { role, active: None }
    }

    fn place(&mut self, arena: &mut Arena, item: &Item) -> usize {
        let bin = match self.active {
            Some(b) => b,
            None => arena.open(self.role),
        };
        arena.put(bin, item);
        self.active = if arena.bins[bin].is_covered() {
            None
        } else {
            Some(bin)
        };
        bin
    }
}

/// Dual worst fit over a fixed set of bins: the next item goes to the bin
/// with the least fill among those still below `target`, lowest index on
/// ties.
#[derive(Debug, Clone)]
pub struct Dwf {
    open: BTreeSet<(Dyadic, usize)>,
    levels: Vec<Dyadic>,
    target: Dyadic,
}

impl Dwf {
    pub fn new(levels: Vec<Dyadic>, target: Dyadic) -> Self {
        let open = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l < target)
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Dwf {
            open,
            levels,
            target,
        }
    }

    pub fn choose(&self) -> Option<usize> {
        self.open.iter().next().map(|(_, i)| *i)
    }

    pub fn add(&mut self, idx: usize, size: &Dyadic) {
        let old = self.levels[idx].clone();
        self.open.remove(&(old.clone(), idx));
        let new = &old + size;
        if new < self.target {
            self.open.insert((new.clone(), idx));
        }
        self.levels[idx] = new;
    }

    pub fn levels(&self) -> &[Dyadic] {
        &self.levels
    }
}

/// Index of the bin dual worst fit would use, or `None` when every bin has
/// reached `target` (the caller then falls back to its DNF lane).
pub fn dwf_place(levels: &[Dyadic], target: &Dyadic) -> Option<usize> {
    Dwf::new(levels.to_vec(), target.clone()).choose()
}

trait Online {
    fn place(
        &mut self,
        arena: &mut Arena,
        item: &Item,
    ) -> Result<(usize, &'static str), StrategyError>;
}

struct DnfStrategy(DnfLane);

impl Online for DnfStrategy {
    fn place(
        &mut self,
        arena: &mut Arena,
        item: &Item,
    ) -> Result<(usize, &'static str), StrategyError> {
        Ok((self.0.place(arena, item), "dnf"))
    }
}

struct DhkStrategy {
    k: u32,
    lanes: BTreeMap<ItemClass, DnfLane>,
}

impl DhkStrategy {
    fn new(k: u32) -> Self {
        DhkStrategy {
            k,
            lanes: BTreeMap::new(),
        }
    }
}

impl Online for DhkStrategy {
    fn place(
        &mut self,
        arena: &mut Arena,
        item: &Item,
    ) -> Result<(usize, &'static str), StrategyError> {
        let class = classify_item(&item.size, self.k)?;
        let lane = self.lanes.entry(class).or_insert_with(|| {
            DnfLane::new(match class {
                ItemClass::Small => BinRole::SmallDnf,
                ItemClass::TItem(_) => BinRole::Plain,
            })
        });
        let reason = match class {
            ItemClass::Small => "small-lane",
            ItemClass::TItem(2) => "two-lane",
            ItemClass::TItem(_) => "class-lane",
        };
        Ok((lane.place(arena, item), reason))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Pair two-by-two in plain bins.
    Pair,
    /// One per reserved bin, from a slot counter.
    Fill,
    /// Pair into reserved bins holding a non-good 2-item, else plain pairs.
    PairReserved,
    /// One per empty reserved bin until none is left, then plain pairs.
    FillEmpty,
}

struct Dh2b {
    adv: Dh2bAdvice,
    d_up: Dyadic,
    s_b_up: Option<Dyadic>,
    reserved: Vec<usize>,
    /// First 2-item of each reserved bin.
    res_two: Vec<Option<usize>>,
    res_two_size: Vec<Option<Dyadic>>,
    res_paired: Vec<bool>,
    res_good: Vec<bool>,
    black_filled: Vec<bool>,
    black_cursor: usize,
    band_used: u64,
    white: Dwf,
    /// 2-items seen so far.
    j: u64,
    fill_cursor: usize,
    pair_cursor: usize,
    empty_cursor: usize,
    /// Slots filled by the block that will be marked, and how many to mark.
    block: Vec<usize>,
    pairs: DnfLane,
    small: DnfLane,
    good_marked: Vec<usize>,
}

impl Dh2b {
    fn new(arena: &mut Arena, adv: Dh2bAdvice, b: u32) -> Result<Self, StrategyError> {
        if adv.m_b > adv.r {
            return Err(StrategyError::Mismatch(format!(
                "{} black bins requested but only {} reserved",
                adv.m_b, adv.r
            )));
        }
        let r = adv.r as usize;
        let m_b = adv.m_b as usize;
        let reserved: Vec<usize> = (0..r)
            .map(|i| {
                arena.open(BinRole::Reserved(if i < m_b {
                    Color::Black
                } else {
                    Color::White
                }))
            })
            .collect();
        let d_up = adv.d_up(b);
        let white = Dwf::new(vec![Dyadic::zero(); r - m_b], d_up.clone());
        Ok(Dh2b {
            s_b_up: adv.s_b_up(b),
            d_up,
            res_two: vec![None; r],
            res_two_size: vec![None; r],
            res_paired: vec![false; r],
            res_good: vec![false; r],
            black_filled: vec![false; m_b],
            black_cursor: 0,
            band_used: 0,
            white,
            j: 0,
            fill_cursor: 0,
            pair_cursor: 0,
            empty_cursor: 0,
            block: Vec::new(),
            pairs: DnfLane::new(BinRole::Plain),
            small: DnfLane::new(BinRole::SmallDnf),
            good_marked: Vec::new(),
            reserved,
            adv,
        })
    }

    /// Phase for the 2-item with running index `j`, plus the number of goods
    /// to mark once the block ending at `j` is complete.
    fn phase(&self, j: u64) -> (Phase, Option<u64>) {
        let r = self.adv.r;
        let start = 3 * r;
        let done = |end: u64, k: u64| if j + 1 == end { Some(k) } else { None };
        match self.adv.selector {
            Selector::Subsequence(s) => {
                let s = u64::from(s);
                let (lo, hi) = ((s - 1) * r, s * r);
                if j < lo {
                    (Phase::Pair, None)
                } else if j < hi {
                    (Phase::Fill, done(hi, self.adv.a.saturating_sub(1)))
                } else {
                    (Phase::PairReserved, None)
                }
            }
            Selector::Last(LastCase::A) => {
                let hi = start + self.adv.x_l + self.adv.x_r;
                if j < start {
                    (Phase::Pair, None)
                } else if j < hi {
                    (Phase::Fill, done(hi, self.adv.a.saturating_sub(1)))
                } else {
                    (Phase::PairReserved, None)
                }
            }
            Selector::Last(LastCase::B) => {
                let mid = start + self.adv.x_l;
                if j < start {
                    (Phase::Pair, None)
                } else if j < mid {
                    (Phase::Fill, done(mid, self.adv.a_l))
                } else if j < mid + self.adv.x_r {
                    (Phase::PairReserved, None)
                } else {
                    (Phase::FillEmpty, None)
                }
            }
            Selector::Last(LastCase::C) => {
                if j < start + self.adv.x_l {
                    (Phase::Pair, None)
                } else {
                    (Phase::FillEmpty, None)
                }
            }
        }
    }

    fn seat(&mut self, arena: &mut Arena, slot: usize, item: &Item) -> usize {
        let bin = self.reserved[slot];
        arena.put(bin, item);
        self.res_two[slot] = Some(item.index);
        self.res_two_size[slot] = Some(item.size.clone());
        bin
    }

    fn mark(&mut self, count: u64) {
        let mut block = std::mem::take(&mut self.block);
        block.sort_by(|&x, &y| {
            self.res_two_size[y]
                .cmp(&self.res_two_size[x])
                .then(self.res_two[x].cmp(&self.res_two[y]))
        });
        for &slot in block.iter().take(count as usize) {
            self.res_good[slot] = true;
            self.good_marked
                .push(self.res_two[slot].expect("filled slot"));
        }
    }

    fn place_two(
        &mut self,
        arena: &mut Arena,
        item: &Item,
    ) -> Result<(usize, &'static str), StrategyError> {
        let j = self.j;
        self.j += 1;
        let (phase, mark) = self.phase(j);
        let out = match phase {
            Phase::Pair => (self.pairs.place(arena, item), "pair"),
            Phase::Fill => {
                let slot = self.fill_cursor;
                if slot >= self.reserved.len() {
                    return Err(StrategyError::Mismatch(format!(
                        "2-item {} needs reserved bin {} of {}",
                        item.index,
                        slot,
                        self.reserved.len()
                    )));
                }
                self.fill_cursor += 1;
                self.block.push(slot);
                (self.seat(arena, slot, item), "reserved")
            }
            Phase::PairReserved => {
                while self.pair_cursor < self.reserved.len()
                    && (self.res_two[self.pair_cursor].is_none()
                        || self.res_good[self.pair_cursor]
                        || self.res_paired[self.pair_cursor])
                {
                    self.pair_cursor += 1;
                }
                if self.pair_cursor < self.reserved.len() {
                    let slot = self.pair_cursor;
                    self.res_paired[slot] = true;
                    let bin = self.reserved[slot];
                    arena.put(bin, item);
                    (bin, "reserved-pair")
                } else {
                    (self.pairs.place(arena, item), "pair")
                }
            }
            Phase::FillEmpty => {
                while self.empty_cursor < self.reserved.len()
                    && self.res_two[self.empty_cursor].is_some()
                {
                    self.empty_cursor += 1;
                }
                if self.empty_cursor < self.reserved.len() {
                    let slot = self.empty_cursor;
                    (self.seat(arena, slot, item), "reserved-tail")
                } else {
                    (self.pairs.place(arena, item), "pair")
                }
            }
        };
        if let Some(k) = mark {
            self.mark(k);
        }
        Ok(out)
    }

    fn place_small(&mut self, arena: &mut Arena, item: &Item) -> (usize, &'static str) {
        if item.size >= self.d_up {
            while self.black_cursor < self.black_filled.len()
                && self.black_filled[self.black_cursor]
            {
                self.black_cursor += 1;
            }
            if self.black_cursor < self.black_filled.len() {
                let fits = self.adv.s_b_down.as_ref().is_some_and(|s| item.size <= *s);
                let band = !fits
                    && self.band_used < self.adv.e_b
                    && self.s_b_up.as_ref().is_some_and(|s| item.size <= *s);
                if fits || band {
                    if band {
                        self.band_used += 1;
                    }
                    let slot = self.black_cursor;
                    self.black_filled[slot] = true;
                    let bin = self.reserved[slot];
                    arena.put(bin, item);
                    return (bin, if band { "black-band" } else { "black" });
                }
            }
            (self.small.place(arena, item), "small-dnf")
        } else if let Some(w) = self.white.choose() {
            self.white.add(w, &item.size);
            let bin = self.reserved[self.black_filled.len() + w];
            arena.put(bin, item);
            (bin, "white")
        } else {
            (self.small.place(arena, item), "small-dnf")
        }
    }

    fn stats(&self, bits_read: usize) -> Dh2bStats {
        Dh2bStats {
            beta_large: false,
            reserved: self.reserved.clone(),
            black: self.black_filled.len(),
            good_marked: self.good_marked.clone(),
            white_levels: self.white.levels().to_vec(),
            d_up: Some(self.d_up.clone()),
            bits_read,
        }
    }
}

impl Online for Dh2b {
    fn place(
        &mut self,
        arena: &mut Arena,
        item: &Item,
    ) -> Result<(usize, &'static str), StrategyError> {
        if is_two_item(&item.size) {
            self.place_two(arena, item)
        } else {
            Ok(self.place_small(arena, item))
        }
    }
}

fn drive(
    online: &mut dyn Online,
    arena: &mut Arena,
    instance: &Instance,
) -> Result<Vec<Placement>, StrategyError> {
    let mut placements = Vec::with_capacity(instance.len());
    for item in instance.items() {
        let (bin, reason) = online.place(arena, &item)?;
        placements.push(Placement {
            item: item.index,
            bin,
            reason,
        });
    }
    Ok(placements)
}

/// Run a strategy over `sigma` in arrival order. Each placement depends only
/// on earlier items and on the advice bits read before the first item.
pub fn run(
    kind: StrategyKind,
    instance: &Instance,
    tape: Option<&mut AdviceTape>,
) -> Result<RunOutcome, StrategyError> {
    let mut arena = Arena::default();
    let (placements, dh2b) = match kind {
        StrategyKind::Dnf => (
            drive(
                &mut DnfStrategy(DnfLane::new(BinRole::Plain)),
                &mut arena,
                instance,
            )?,
            None,
        ),
        StrategyKind::Dhk(k) => (drive(&mut DhkStrategy::new(k), &mut arena, instance)?, None),
        StrategyKind::Dh2b(b) => {
            let tape = tape.ok_or(StrategyError::MissingAdvice)?;
            let adv = Dh2bAdvice::decode(tape, b)?;
            let bits_read = tape.read_position();
            if adv.beta_large {
                let p = drive(&mut DhkStrategy::new(2), &mut arena, instance)?;
                let stats = Dh2bStats {
                    beta_large: true,
                    bits_read,
                    ..Default::default()
                };
                (p, Some(stats))
            } else {
                let mut s = Dh2b::new(&mut arena, adv, b)?;
                let p = drive(&mut s, &mut arena, instance)?;
                (p, Some(s.stats(bits_read)))
            }
        }
    };
    Ok(RunOutcome {
        covering: Covering::new(arena.bins),
        placements,
        dh2b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    fn inst(v: &[&str]) -> Instance {
        Instance::new(v.iter().map(|s| d(s)).collect()).unwrap()
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("dnf".parse::<StrategyKind>().unwrap(), StrategyKind::Dnf);
        assert_eq!(
            "dhk:3".parse::<StrategyKind>().unwrap(),
            StrategyKind::Dhk(3)
        );
        assert_eq!(
            "dh2b".parse::<StrategyKind>().unwrap(),
            StrategyKind::Dh2b(16)
        );
        assert_eq!(
            "dh2b:10".parse::<StrategyKind>().unwrap(),
            StrategyKind::Dh2b(10)
        );
        assert!("dhk:1".parse::<StrategyKind>().is_err());
        assert!("ff".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn dnf_examples() {
        assert_eq!(
            run(StrategyKind::Dnf, &inst(&["0.625", "0.625"]), None)
                .unwrap()
                .score(),
            1
        );
        assert_eq!(
            run(
                StrategyKind::Dnf,
                &inst(&["0.5", "0.5", "0.5", "0.5"]),
                None
            )
            .unwrap()
            .score(),
            2
        );
        let out = run(
            StrategyKind::Dnf,
            &inst(&["0.6875", "0.375", "0.984375"]),
            None,
        )
        .unwrap();
        assert_eq!(out.covering.bins[0].level, d("1.0625"));
        assert!(out.covering.bins[0].is_covered());
        assert!(!out.covering.bins[1].is_covered());
    }

    #[test]
    fn dnf_near_halves() {
        let u = Dyadic::pow2(-10);
        let half = d("0.5").checked_sub(&u).unwrap();
        let two_u = u.mul_pow2(1);
        let k = 200;
        let mut sizes = Vec::new();
        for _ in 0..k {
            sizes.extend([half.clone(), half.clone(), two_u.clone()]);
        }
        let out = run(StrategyKind::Dnf, &Instance::new(sizes).unwrap(), None).unwrap();
        assert!(out.score() >= k - 2);
    }

    #[test]
    fn dhk_example() {
        let i = inst(&["0.625", "0.6875", "0.25", "0.875"]);
        let out = run(StrategyKind::Dhk(2), &i, None).unwrap();
        assert_eq!(out.score(), 1);
        let lanes: Vec<&str> = out.placements.iter().map(|p| p.reason).collect();
        assert_eq!(lanes, ["two-lane", "two-lane", "small-lane", "two-lane"]);
    }

    #[test]
    fn dhk_without_two_items_matches_dnf() {
        let i = inst(&["0.25", "0.375", "0.125", "0.4375", "0.3125", "0.0625"]);
        assert_eq!(
            run(StrategyKind::Dhk(2), &i, None).unwrap().score(),
            run(StrategyKind::Dnf, &i, None).unwrap().score()
        );
    }

    #[test]
    fn dwf_examples() {
        let t = d("0.5");
        assert_eq!(dwf_place(&[d("0.375"), d("0.125"), d("0.25")], &t), Some(1));
        assert_eq!(dwf_place(&[d("0.125"), d("0.125")], &t), Some(0));
        assert_eq!(dwf_place(&[d("0.5"), d("0.75")], &t), None);
        let mut w = Dwf::new(vec![Dyadic::zero(); 2], t);
        w.add(0, &d("0.25"));
        assert_eq!(w.choose(), Some(1));
        w.add(1, &d("0.5"));
        assert_eq!(w.choose(), Some(0));
        w.add(0, &d("0.25"));
        assert_eq!(w.choose(), None);
    }

    #[test]
    fn dh2b_needs_tape() {
        assert!(matches!(
            run(StrategyKind::Dh2b(8), &inst(&["0.5"]), None),
            Err(StrategyError::MissingAdvice)
        ));
    }

    #[test]
    fn dh2b_beta_large_is_dh2() {
        let i = inst(&["0.625", "0.6875", "0.25", "0.875", "0.5", "0.125"]);
        let mut t = AdviceTape::new();
        Dh2bAdvice::beta_large().encode(&mut t, 8).unwrap();
        let a = run(StrategyKind::Dh2b(8), &i, Some(&mut t)).unwrap();
        let b = run(StrategyKind::Dhk(2), &i, None).unwrap();
        assert_eq!(a.covering, b.covering);
    }

    #[test]
    fn dh2b_subsequence_case_by_hand() {
        // r = 2 reserved bins, one black; subsequence 1; mark a - 1 = 1 good.
        let adv = Dh2bAdvice {
            beta_large: false,
            r: 2,
            selector: Selector::Subsequence(1),
            a: 2,
            a_l: 0,
            x_l: 0,
            x_r: 0,
            d_down: d("0.25"),
            m_b: 1,
            s_b_down: Some(d("0.375")),
            e_b: 0,
        };
        let mut t = AdviceTape::new();
        adv.encode(&mut t, 8).unwrap();
        // 0.75 and 0.625 fill reserved bins 0 and 1; 0.75 is marked good.
        // 0.5625 pairs with the non-good 0.625; 0.5 opens a plain bin.
        // 0.3125 is black (>= d_up) and goes to black bin 0.
        // 0.125 is white and goes to bin 1.
        let i = inst(&["0.75", "0.625", "0.5625", "0.5", "0.3125", "0.125"]);
        let out = run(StrategyKind::Dh2b(8), &i, Some(&mut t)).unwrap();
        let reasons: Vec<&str> = out.placements.iter().map(|p| p.reason).collect();
        assert_eq!(
            reasons,
            [
                "reserved",
                "reserved",
                "reserved-pair",
                "pair",
                "black",
                "white"
            ]
        );
        let st = out.dh2b.clone().unwrap();
        assert_eq!(st.good_marked, vec![0]);
        assert_eq!(st.reserved, vec![0, 1]);
        assert!(out.covering.bins[0].is_covered());
        assert!(out.covering.bins[1].is_covered());
        assert_eq!(out.score(), 2);
    }
}
