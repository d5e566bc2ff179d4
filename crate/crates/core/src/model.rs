//! Items, instances, bins and coverings, plus the group decomposition of a
//! reference covering.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::{Dyadic, DyadicError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("item size {0} is outside the open interval (0, 1)")]
    SizeOutOfRange(Dyadic),
    #[error("grouping parameter k must be >= 2 (got {0})")]
    BadK(u32),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: DyadicError },
    #[error("covering dump line {line}: {msg}")]
    CoveringParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One input item: its size and arrival position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub size: Dyadic,
    pub index: usize,
}

/// An input sequence. Sizes are validated to lie in `(0, 1)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Instance {
    sizes: Vec<Dyadic>,
}

impl Instance {
    pub fn new(sizes: Vec<Dyadic>) -> Result<Self, ModelError> {
        let one = Dyadic::one();
        if let Some(bad) = sizes.iter().find(|s| s.is_zero() || **s >= one) {
            return Err(ModelError::SizeOutOfRange(bad.clone()));
        }
        Ok(Self { sizes })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[Dyadic] {
        &self.sizes
    }

    pub fn size(&self, i: usize) -> &Dyadic {
        &self.sizes[i]
    }

    pub fn items(&self) -> impl Iterator<Item = Item> + '_ {
        self.sizes.iter().enumerate().map(|(index, size)| Item {
            size: size.clone(),
            index,
        })
    }

    pub fn total(&self) -> Dyadic {
        self.sizes.iter().sum()
    }

    /// Prefix of the first `n` items.
    pub fn prefix(&self, n: usize) -> Instance {
        Instance {
            sizes: self.sizes[..n.min(self.len())].to_vec(),
        }
    }

    /// One size per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut sizes = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: Dyadic = line.parse().map_err(|source| ModelError::Parse {
                line: no + 1,
                source,
            })?;
            sizes.push(v);
        }
        Self::new(sizes)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.sizes {
            writeln!(w, "{s}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Size class relative to a grouping parameter `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemClass {
    /// Size in `[1/t, 1/(t-1))`.
    TItem(u32),
    /// Size below `1/k`.
    Small,
}

impl ItemClass {
    pub fn is_two_item(&self) -> bool {
        matches!(self, ItemClass::TItem(2))
    }
}

pub fn classify_item(size: &Dyadic, k: u32) -> Result<ItemClass, ModelError> {
    if k < 2 {
        return Err(ModelError::BadK(k));
    }
    if size.is_zero() || *size >= Dyadic::one() {
        return Err(ModelError::SizeOutOfRange(size.clone()));
    }
    // t = ceil(1/size) is the unique t with 1/t <= size < 1/(t-1).
    let inv = size.to_rational().recip();
    let t = inv.ceil().to_integer();
    match t.to_u32() {
        Some(t) if t <= k => Ok(ItemClass::TItem(t)),
        _ => Ok(ItemClass::Small),
    }
}

/// `size >= 1/2`, the only non-small class once `k = 2`.
pub fn is_two_item(size: &Dyadic) -> bool {
    *size >= Dyadic::pow2(-1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Color {
    Black,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinRole {
    Plain,
    SmallDnf,
    Reserved(Color),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bin {
    pub items: Vec<usize>,
    pub level: Dyadic,
    pub role: BinRole,
}

impl Bin {
    pub fn new(role: BinRole) -> Self {
        Self {
            items: Vec::new(),
            level: Dyadic::zero(),
            role,
        }
    }

    pub fn push(&mut self, index: usize, size: &Dyadic) {
        self.items.push(index);
        self.level = &self.level + size;
    }

    pub fn is_covered(&self) -> bool {
        self.level >= Dyadic::one()
    }
}

/// Placement of items into bins. Bins that never reached level 1 are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Covering {
    pub bins: Vec<Bin>,
}

impl Covering {
    pub fn new(bins: Vec<Bin>) -> Self {
        Self { bins }
    }

    /// Build from lists of item indices, computing exact levels.
    pub fn from_groups(instance: &Instance, groups: &[Vec<usize>]) -> Self {
        let bins = groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                let mut b = Bin::new(BinRole::Plain);
                for &i in g {
                    b.push(i, instance.size(i));
                }
                b
            })
            .collect();
        Self { bins }
    }

    pub fn score(&self) -> usize {
        covering_score(self)
    }

    /// Map item index to bin index; `None` when unassigned.
    pub fn assignment(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (b, bin) in self.bins.iter().enumerate() {
            for &i in &bin.items {
                if i < n {
                    out[i] = Some(b);
                }
            }
        }
        out
    }

    /// JSON-lines dump: one bin per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, b) in self.bins.iter().enumerate() {
            let rec = BinRecord {
                bin: i,
                items: b.items.clone(),
                level: b.level.clone(),
                covered: b.is_covered(),
                role: b.role,
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable"))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("utf8")
    }

    /// Parse a JSON-lines dump. Levels are recomputed from `instance` and
    /// must match the recorded ones when they are present.
    pub fn read_jsonl<R: BufRead>(instance: &Instance, r: R) -> Result<Self, ModelError> {
        let mut bins = Vec::new();
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: BinRecordIn =
                serde_json::from_str(&line).map_err(|e| ModelError::CoveringParse {
                    line: no + 1,
                    msg: e.to_string(),
                })?;
            let mut bin = Bin::new(rec.role.unwrap_or(BinRole::Plain));
            for i in rec.items {
                if i >= instance.len() {
                    return Err(ModelError::CoveringParse {
                        line: no + 1,
                        msg: format!("item index {i} out of range"),
                    });
                }
                bin.push(i, instance.size(i));
            }
            if let Some(level) = rec.level {
                if level != bin.level {
                    return Err(ModelError::CoveringParse {
                        line: no + 1,
                        msg: format!("recorded level {level} != computed {}", bin.level),
                    });
                }
            }
            bins.push(bin);
        }
        Ok(Self { bins })
    }
}

#[derive(Serialize)]
struct BinRecord {
    bin: usize,
    items: Vec<usize>,
    level: Dyadic,
    covered: bool,
    role: BinRole,
}

#[derive(Deserialize)]
struct BinRecordIn {
    items: Vec<usize>,
    #[serde(default)]
    level: Option<Dyadic>,
    #[serde(default)]
    role: Option<BinRole>,
}

pub fn covering_score(c: &Covering) -> usize {
    c.bins.iter().filter(|b| b.is_covered()).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ItemUnassigned(usize),
    ItemDuplicated {
        item: usize,
        bins: Vec<usize>,
    },
    UnknownItem {
        bin: usize,
        item: usize,
    },
    LevelMismatch {
        bin: usize,
        recorded: Dyadic,
        actual: Dyadic,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ItemUnassigned(i) => write!(f, "item unassigned: {i}"),
            Violation::ItemDuplicated { item, bins } => {
                write!(f, "item {item} assigned more than once (bins {bins:?})")
            }
            Violation::UnknownItem { bin, item } => {
                write!(f, "bin {bin} references unknown item {item}")
            }
            Violation::LevelMismatch {
                bin,
                recorded,
                actual,
            } => {
                write!(f, "bin {bin} level {recorded} but items sum to {actual}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check that every item is placed exactly once and levels are exact sums.
pub fn validate_covering(instance: &Instance, c: &Covering) -> ValidationReport {
    let n = instance.len();
    let mut seen: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut violations = Vec::new();
    for (b, bin) in c.bins.iter().enumerate() {
        let mut sum = Dyadic::zero();
        for &i in &bin.items {
            if i >= n {
                violations.push(Violation::UnknownItem { bin: b, item: i });
                continue;
            }
            seen[i].push(b);
            sum = &sum + instance.size(i);
        }
        if sum != bin.level {
            violations.push(Violation::LevelMismatch {
                bin: b,
                recorded: bin.level.clone(),
                actual: sum,
            });
        }
    }
    for (i, bins) in seen.into_iter().enumerate() {
        match bins.len() {
            0 => violations.push(Violation::ItemUnassigned(i)),
            1 => {}
            _ => violations.push(Violation::ItemDuplicated { item: i, bins }),
        }
    }
    ValidationReport { violations }
}

/// Sorted multiset of non-small item types in a bin; empty means small-only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey(pub Vec<u32>);

impl GroupKey {
    pub fn is_small_only(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "S");
        }
        for t in &self.0 {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Group counts of the covered bins of a reference covering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupedPartition {
    pub k: u32,
    pub counts: BTreeMap<GroupKey, usize>,
    /// Covered bins with at least two 2-items.
    pub g22: usize,
    /// Covered bins with exactly one 2-item.
    pub g2: usize,
    /// Covered bins without 2-items.
    pub gs: usize,
    /// `(g22 + g2) / g2`; `None` when `g2 = 0`.
    pub beta: Option<BigRational>,
    /// Indices of the covered bins making up each of the three k=2 groups.
    pub g22_bins: Vec<usize>,
    pub g2_bins: Vec<usize>,
    pub gs_bins: Vec<usize>,
}

impl GroupedPartition {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// `T_2 = 2|G_22| + |G_2|`.
    pub fn t2(&self) -> usize {
        2 * self.g22 + self.g2
    }
}

pub fn beta_of(g22: usize, g2: usize) -> Option<BigRational> {
    if g2 == 0 {
        return None;
    }
    Some(BigRational::new(BigInt::from(g22 + g2), BigInt::from(g2)))
}

pub fn partition_groups(
    instance: &Instance,
    c: &Covering,
    k: u32,
) -> Result<GroupedPartition, ModelError> {
    let mut counts = BTreeMap::new();
    let (mut g22_bins, mut g2_bins, mut gs_bins) = (Vec::new(), Vec::new(), Vec::new());
    for (b, bin) in c.bins.iter().enumerate() {
        if !bin.is_covered() {
            continue;
        }
        let mut types = Vec::new();
        let mut twos = 0usize;
        for &i in &bin.items {
            if let ItemClass::TItem(t) = classify_item(instance.size(i), k)? {
                types.push(t);
            }
            if is_two_item(instance.size(i)) {
                twos += 1;
            }
        }
        types.sort_unstable();
        *counts.entry(GroupKey(types)).or_insert(0) += 1;
        match twos {
            0 => gs_bins.push(b),
            1 => g2_bins.push(b),
            _ => g22_bins.push(b),
        }
    }
    let (g22, g2, gs) = (g22_bins.len(), g2_bins.len(), gs_bins.len());
    Ok(GroupedPartition {
        k,
        counts,
        g22,
        g2,
        gs,
        beta: beta_of(g22, g2),
        g22_bins,
        g2_bins,
        gs_bins,
    })
}

/// `floor` of a nonnegative rational as `u64`.
pub(crate) fn floor_u64(r: &BigRational) -> u64 {
    r.floor().to_integer().to_u64().unwrap_or(0)
}

/// `ceil` of a nonnegative rational as `u64`.
pub(crate) fn ceil_u64(r: &BigRational) -> u64 {
    r.ceil().to_integer().to_u64().unwrap_or(0)
}

pub(crate) fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
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
    fn classify_examples() {
        assert_eq!(classify_item(&d("0.5"), 2).unwrap(), ItemClass::TItem(2));
        assert_eq!(classify_item(&d("0.4921875"), 2).unwrap(), ItemClass::Small);
        assert_eq!(classify_item(&d("0.375"), 3).unwrap(), ItemClass::TItem(3));
        assert_eq!(classify_item(&d("0.25"), 4).unwrap(), ItemClass::TItem(4));
        assert_eq!(classify_item(&d("0.25"), 3).unwrap(), ItemClass::Small);
        assert!(classify_item(&d("1"), 2).is_err());
        assert!(classify_item(&Dyadic::zero(), 2).is_err());
        assert!(classify_item(&d("0.5"), 1).is_err());
    }

    #[test]
    fn score_examples() {
        let i = inst(&["0.625", "0.5", "0.875"]);
        let c = Covering::from_groups(&i, &[vec![0, 1], vec![2]]);
        assert_eq!(covering_score(&c), 1);
        assert_eq!(covering_score(&Covering::default()), 0);
        let halves = Instance::new(vec![d("0.5"); 8]).unwrap();
        let c = Covering::from_groups(&halves, &[vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
        assert_eq!(covering_score(&c), 4);
    }

    #[test]
    fn validation_reports() {
        let i = inst(&["0.5", "0.5", "0.25"]);
        let good = Covering::from_groups(&i, &[vec![0, 1], vec![2]]);
        assert!(validate_covering(&i, &good).is_ok());

        let dropped = Covering::from_groups(&i, &[vec![0, 1]]);
        let r = validate_covering(&i, &dropped);
        assert_eq!(r.violations, vec![Violation::ItemUnassigned(2)]);
        assert!(r.to_string().contains("item unassigned"));

        let mut dup = Covering::from_groups(&i, &[vec![0, 1], vec![2, 0]]);
        let r = validate_covering(&i, &dup);
        assert!(matches!(
            r.violations[0],
            Violation::ItemDuplicated { item: 0, .. }
        ));

        dup.bins[0].level = d("0.75");
        let r = validate_covering(&i, &dup);
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::LevelMismatch { .. })));
    }

    #[test]
    fn partition_examples() {
        let i = inst(&[
            "0.625", "0.625", "0.5625", "0.3125", "0.1875", "0.375", "0.375", "0.3125",
        ]);
        let c = Covering::from_groups(&i, &[vec![0, 1], vec![2, 3, 4], vec![5, 6, 7]]);
        let p = partition_groups(&i, &c, 2).unwrap();
        assert_eq!((p.g22, p.g2, p.gs), (1, 1, 1));
        assert_eq!(p.beta, Some(ratio(2, 1)));
        assert_eq!(p.total(), covering_score(&c));

        let small = inst(&["0.375", "0.375", "0.375"]);
        let c = Covering::from_groups(&small, &[vec![0, 1, 2]]);
        let p = partition_groups(&small, &c, 2).unwrap();
        assert_eq!(p.g2, 0);
        assert_eq!(p.beta, None);

        let three = inst(&["0.5625", "0.34375", "0.34375"]);
        let c = Covering::from_groups(&three, &[vec![0, 1, 2]]);
        let p = partition_groups(&three, &c, 3).unwrap();
        assert_eq!(p.counts.keys().next().unwrap(), &GroupKey(vec![2, 3, 3]));
        assert_eq!(p.counts.keys().next().unwrap().to_string(), "233");
    }

    #[test]
    fn uncovered_bins_are_not_grouped() {
        let i = inst(&["0.5", "0.25"]);
        let c = Covering::from_groups(&i, &[vec![0, 1]]);
        let p = partition_groups(&i, &c, 2).unwrap();
        assert_eq!(p.total(), 0);
    }

    #[test]
    fn instance_text_format() {
        let text = "# sizes\n0.5\n0b0.011  # three eighths\n\n0.25\n";
        let i = Instance::parse(text).unwrap();
        assert_eq!(i.sizes(), &[d("0.5"), d("0.375"), d("0.25")]);
        assert!(matches!(
            Instance::parse("0.1\n"),
            Err(ModelError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Instance::parse("1.5\n"),
            Err(ModelError::SizeOutOfRange(_))
        ));
        assert_eq!(Instance::parse(&i.to_text()).unwrap(), i);
    }

    #[test]
    fn covering_jsonl_round_trip() {
        let i = inst(&["0.5", "0.5", "0.25"]);
        let c = Covering::from_groups(&i, &[vec![0, 1], vec![2]]);
        let text = c.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"covered\":true"));
        let back = Covering::read_jsonl(&i, text.as_bytes()).unwrap();
        assert_eq!(back, c);
        let bad = "{\"items\":[0],\"level\":\"0.75\"}\n";
        assert!(Covering::read_jsonl(&i, bad.as_bytes()).is_err());
    }
}
