//! Experiment runner: generator × strategy × advice width cells, one CSV
//! row per cell.

use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{generate, Family, Generated, GeneratorError, PRNG_NAME};
use crate::model::{partition_groups, validate_covering, Covering, Instance};
use crate::opt::{canonicalize, exact_opt_with_limit, load_upper_bound, DEFAULT_EXACT_LIMIT};
use crate::oracle::{compute_advice, dh2_ratio, theoretical_bound, OraclePlan};
use crate::rational::format_decimal;
use crate::strategies::{run, RunOutcome, StrategyKind};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BitsSpec {
    List(Vec<u32>),
    /// `"auto"`: `b = 2 ceil(log2 log2 n)` per instance, at least 4.
    Auto(String),
}

impl Default for BitsSpec {
    fn default() -> Self {
        BitsSpec::List(vec![16])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEntry {
    #[serde(flatten)]
    pub family: Family,
    /// Seeds for this generator; defaults to the config seed.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub generators: Vec<GeneratorEntry>,
    #[serde(default)]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub bits: BitsSpec,
    /// Largest instance solved exactly when no reference covering exists.
    #[serde(default = "default_exact_limit")]
    pub exact_limit: usize,
}

fn default_exact_limit() -> usize {
    DEFAULT_EXACT_LIMIT
}

impl ExperimentConfig {
    /// TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
        }
    }

    fn validate(&self) -> Result<Vec<StrategyKind>, ExperimentError> {
        if let BitsSpec::Auto(s) = &self.bits {
            if s != "auto" {
                return Err(ExperimentError::Config(format!(
                    "bits must be a list or \"auto\", got {s:?}"
                )));
            }
        }
        self.strategies
            .iter()
            .map(|s| {
                s.parse::<StrategyKind>()
                    .map_err(|e| ExperimentError::Config(e.to_string()))
            })
            .collect()
    }
}

/// `2 ceil(log2 log2 n)`, clamped to at least 4.
pub fn auto_bits(n: usize) -> u32 {
    let n = n.max(4) as f64;
    let b = 2.0 * n.log2().log2().ceil();
    (b as u32).max(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptSource {
    Exact,
    /// Generator covering matching the load bound.
    Reference,
    /// Load bound only; the ratio is a lower estimate.
    LoadBound,
}

impl OptSource {
    fn as_str(&self) -> &'static str {
        match self {
            OptSource::Exact => "exact",
            OptSource::Reference => "reference",
            OptSource::LoadBound => "load_bound",
        }
    }
}

/// One CSV row. Column order is fixed; see `docs/formats.md`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub cell: usize,
    pub family: String,
    pub params: String,
    pub seed: u64,
    pub prng: String,
    pub strategy: String,
    pub b: u32,
    pub n: usize,
    pub opt: u64,
    pub opt_source: String,
    pub score: u64,
    pub ratio: String,
    pub predicted: String,
    pub gap: String,
    pub bits: String,
    pub case: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u128>,
}

pub const COLUMNS: &[&str] = &[
    "cell",
    "family",
    "params",
    "seed",
    "prng",
    "strategy",
    "b",
    "n",
    "opt",
    "opt_source",
    "score",
    "ratio",
    "predicted",
    "gap",
    "bits",
    "case",
    "status",
];

/// Exact ratio `achieved / opt` and the additive gap
/// `achieved - predicted * opt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatioReport {
    pub ratio: Option<BigRational>,
    pub gap: Option<BigRational>,
}

pub fn measure_ratio(achieved: u64, opt: u64, predicted: Option<&BigRational>) -> RatioReport {
    if opt == 0 {
        return RatioReport {
            ratio: None,
            gap: None,
        };
    }
    let a = BigRational::from_integer(BigInt::from(achieved));
    let o = BigRational::from_integer(BigInt::from(opt));
    RatioReport {
        ratio: Some(&a / &o),
        gap: predicted.map(|p| a - p * o),
    }
}

/// Everything a cell computes, for callers that want more than the row.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub row: ReportRow,
    pub instance: Instance,
    pub reference: Option<Covering>,
    pub outcome: Option<RunOutcome>,
    pub plan: Option<OraclePlan>,
}

#[derive(Debug, Clone)]
struct CellSpec {
    cell: usize,
    family: Family,
    seed: u64,
    strategy: StrategyKind,
    bits: Option<u32>,
}

fn generate_for(
    family: &Family,
    seed: u64,
    bits: Option<u32>,
) -> Result<(Generated, u32), GeneratorError> {
    match bits {
        Some(b) => Ok((generate(family, seed, b)?, b)),
        None => {
            // The item multiset does not depend on b, only the order does.
            let first = generate(family, seed, 16)?;
            let b = auto_bits(first.instance.len());
            if b == 16 || !family.depends_on_bits() {
                Ok((first, b))
            } else {
                Ok((generate(family, seed, b)?, b))
            }
        }
    }
}

/// Run one cell end to end. Failures yield a row whose `status` explains
/// them rather than an error.
pub fn run_cell(
    cell: usize,
    family: &Family,
    seed: u64,
    strategy: StrategyKind,
    bits: Option<u32>,
    exact_limit: usize,
) -> CellResult {
    let mut row = ReportRow {
        cell,
        family: family.name().to_string(),
        params: family.params(),
        seed,
        prng: PRNG_NAME.to_string(),
        strategy: strategy.to_string(),
        b: bits.unwrap_or(0),
        n: 0,
        opt: 0,
        opt_source: String::new(),
        score: 0,
        ratio: String::new(),
        predicted: String::new(),
        gap: String::new(),
        bits: String::new(),
        case: String::new(),
        status: "ok".into(),
        wall_ms: None,
    };
    let fail = |mut row: ReportRow, msg: String, instance: Instance| {
        row.status = format!("error: {msg}");
        CellResult {
            row,
            instance,
            reference: None,
            outcome: None,
            plan: None,
        }
    };

    let (generated, b) = match generate_for(family, seed, bits) {
        Ok(x) => x,
        Err(e) => return fail(row, e.to_string(), Instance::default()),
    };
    row.b = b;
    let strategy = match strategy {
        StrategyKind::Dh2b(_) => StrategyKind::Dh2b(b),
        s => s,
    };
    let instance = generated.instance;
    row.n = instance.len();
    let load = load_upper_bound(&instance);

    // Reference covering and the source of |OPT|.
    let (reference, source) = match generated.reference {
        Some(c) if c.score() as u64 == load => (Some(c), OptSource::Reference),
        Some(c) if instance.len() <= exact_limit => {
            match exact_opt_with_limit(&instance, exact_limit) {
                Ok(r) => (Some(r.covering), OptSource::Exact),
                Err(_) => (Some(c), OptSource::LoadBound),
            }
        }
        Some(c) => (Some(c), OptSource::LoadBound),
        None if instance.len() <= exact_limit => match exact_opt_with_limit(&instance, exact_limit)
        {
            Ok(r) => (Some(r.covering), OptSource::Exact),
            Err(e) => return fail(row, e.to_string(), instance),
        },
        None => (None, OptSource::LoadBound),
    };
    if let Some(c) = &reference {
        let v = validate_covering(&instance, c);
        if !v.is_ok() {
            return fail(row, format!("reference covering invalid: {v}"), instance);
        }
    }
    let opt = match source {
        OptSource::LoadBound => load,
        _ => reference.as_ref().map(|c| c.score() as u64).unwrap_or(load),
    };
    row.opt = opt;
    row.opt_source = source.as_str().into();

    let beta = reference
        .as_ref()
        .and_then(|c| partition_groups(&instance, c, 2).ok())
        .and_then(|p| p.beta);

    let mut plan = None;
    let mut tape = None;
    let reference = match (&reference, strategy.needs_advice()) {
        (Some(c), true) => match canonicalize(c, &instance, b) {
            Ok(c) => Some(c),
            Err(e) => return fail(row, e.to_string(), instance),
        },
        _ => reference,
    };
    if strategy.needs_advice() {
        let Some(c) = &reference else {
            return fail(row, "advice needs a reference covering".into(), instance);
        };
        match compute_advice(&instance, c, b) {
            Ok((t, p)) => {
                row.bits = t.len().to_string();
                row.case = p.case.to_string();
                tape = Some(t);
                plan = Some(p);
            }
            Err(e) => return fail(row, e.to_string(), instance),
        }
    }

    let outcome = match run(strategy, &instance, tape.as_mut()) {
        Ok(o) => o,
        Err(e) => return fail(row, e.to_string(), instance),
    };
    let v = validate_covering(&instance, &outcome.covering);
    if !v.is_ok() {
        return fail(row, format!("strategy covering invalid: {v}"), instance);
    }
    row.score = outcome.score() as u64;

    let predicted = match (strategy, &plan) {
        (StrategyKind::Dh2b(_), Some(p)) => Some(theoretical_bound(p)),
        (StrategyKind::Dhk(2), _) if reference.is_some() => Some(dh2_ratio(beta.as_ref())),
        (StrategyKind::Dnf, _) => {
            // DNF bins close below 1 + max size, against the load bound.
            instance
                .sizes()
                .iter()
                .max()
                .map(|m| BigRational::one() / (BigRational::one() + m.to_rational()))
        }
        _ => None,
    };
    let rep = measure_ratio(row.score, opt, predicted.as_ref());
    match &rep.ratio {
        Some(r) => row.ratio = format_decimal(r, 6),
        None => row.status = "undefined ratio: opt is 0".into(),
    }
    if let Some(p) = &predicted {
        row.predicted = format_decimal(p, 6);
    }
    if let Some(g) = &rep.gap {
        row.gap = format_decimal(g, 6);
    }
    CellResult {
        row,
        instance,
        reference,
        outcome: Some(outcome),
        plan,
    }
}

fn cells(config: &ExperimentConfig, strategies: &[StrategyKind]) -> Vec<CellSpec> {
    let bits: Vec<Option<u32>> = match &config.bits {
        BitsSpec::List(v) => v.iter().map(|&b| Some(b)).collect(),
        BitsSpec::Auto(_) => vec![None],
    };
    let mut out = Vec::new();
    for g in &config.generators {
        let seeds = g.seeds.clone().unwrap_or_else(|| vec![config.seed]);
        for &seed in &seeds {
            for &b in &bits {
                for &s in strategies {
                    out.push(CellSpec {
                        cell: out.len(),
                        family: g.family.clone(),
                        seed,
                        strategy: s,
                        bits: b,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    /// Add a `wall_ms` column. Timing breaks byte-identical reruns.
    pub timing: bool,
}

/// All rows of an experiment, ordered by cell index.
pub fn run_experiment(
    config: &ExperimentConfig,
    opts: RunOptions,
) -> Result<Vec<ReportRow>, ExperimentError> {
    let strategies = config.validate()?;
    let specs = cells(config, &strategies);
    let work = || {
        specs
            .par_iter()
            .map(|c| {
                let start = std::time::Instant::now();
                let mut r = run_cell(
                    c.cell,
                    &c.family,
                    c.seed,
                    c.strategy,
                    c.bits,
                    config.exact_limit,
                )
                .row;
                if opts.timing {
                    r.wall_ms = Some(start.elapsed().as_millis());
                }
                r
            })
            .collect::<Vec<_>>()
    };
    let rows = if opts.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| ExperimentError::Config(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ReportRow], timing: bool, w: W) -> Result<(), ExperimentError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if timing {
        header.push("wall_ms");
    }
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.cell.to_string(),
            r.family.clone(),
            r.params.clone(),
            r.seed.to_string(),
            r.prng.clone(),
            r.strategy.clone(),
            r.b.to_string(),
            r.n.to_string(),
            r.opt.to_string(),
            r.opt_source.clone(),
            r.score.to_string(),
            r.ratio.clone(),
            r.predicted.clone(),
            r.gap.clone(),
            r.bits.clone(),
            r.case.clone(),
            r.status.clone(),
        ];
        if timing {
            rec.push(r.wall_ms.map(|t| t.to_string()).unwrap_or_default());
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ReportRow], timing: bool) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    write_csv(rows, timing, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Two columns of a results CSV, as whitespace-separated lines.
pub fn plot_data<R: std::io::Read>(input: R, x: &str, y: &str) -> Result<String, ExperimentError> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ExperimentError::Config(format!("no column `{name}`")))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut out = format!("# {x} {y}\n");
    for rec in rd.records() {
        let rec = rec?;
        let (a, b) = (rec.get(xi).unwrap_or(""), rec.get(yi).unwrap_or(""));
        if !a.is_empty() && !b.is_empty() {
            out.push_str(&format!("{a} {b}\n"));
        }
    }
    Ok(out)
}

/// Non-negative shortfall `max(0, predicted - ratio)` of a row, if both exist.
pub fn deficit(row: &ReportRow) -> Option<f64> {
    let r: f64 = row.ratio.parse().ok()?;
    let p: f64 = row.predicted.parse().ok()?;
    Some((p - r).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;

    #[test]
    fn ratio_examples() {
        let r = measure_ratio(1, 2, None);
        assert_eq!(r.ratio, Some(parse_rational("1/2").unwrap()));
        let r = measure_ratio(135, 242, None);
        assert_eq!(format_decimal(r.ratio.as_ref().unwrap(), 6), "0.557851");
        let r = measure_ratio(8, 15, Some(&parse_rational("1/2").unwrap()));
        assert_eq!(format_decimal(r.ratio.as_ref().unwrap(), 4), "0.5333");
        assert_eq!(r.gap, Some(parse_rational("1/2").unwrap()));
        assert_eq!(measure_ratio(3, 0, None).ratio, None);
    }

    #[test]
    fn empty_config_gives_header_only() {
        let cfg = ExperimentConfig::parse("").unwrap();
        let rows = run_experiment(&cfg, RunOptions::default()).unwrap();
        assert!(rows.is_empty());
        assert_eq!(csv_string(&rows, false).unwrap(), COLUMNS.join(",") + "\n");
    }

    #[test]
    fn auto_bits_values() {
        assert_eq!(auto_bits(16), 4);
        assert_eq!(auto_bits(1 << 10), 8);
        assert_eq!(auto_bits(1 << 16), 8);
        assert_eq!(auto_bits((1 << 16) + 1), 10);
    }

    #[test]
    fn config_forms() {
        let toml_cfg = r#"
            seed = 7
            strategies = ["dnf", "dhk:2"]
            bits = "auto"
            [[generators]]
            family = "uniform"
            n = 8
            seeds = [1, 2]
        "#;
        let c = ExperimentConfig::parse(toml_cfg).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.bits, BitsSpec::Auto("auto".into()));
        assert_eq!(c.generators[0].family, Family::Uniform { n: 8 });
        let json_cfg = r#"{"strategies": ["dnf"], "generators": [{"family": "all_small", "opt": 5}], "bits": [8]}"#;
        let c = ExperimentConfig::parse(json_cfg).unwrap();
        assert_eq!(c.bits, BitsSpec::List(vec![8]));
        assert!(ExperimentConfig::parse("strategies = [\"ff\"]")
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn uniform_cell_uses_exact_opt() {
        let r = run_cell(
            0,
            &Family::Uniform { n: 10 },
            3,
            StrategyKind::Dnf,
            Some(8),
            18,
        );
        assert_eq!(r.row.status, "ok");
        assert_eq!(r.row.opt_source, "exact");
        assert!(r.row.score <= r.row.opt);
    }

    #[test]
    fn rows_are_deterministic() {
        let cfg = ExperimentConfig::parse(
            r#"
            strategies = ["dnf", "dhk:2", "dh2b"]
            bits = [8, 12]
            [[generators]]
            family = "beta_family"
            beta = "1.05"
            opt = 200
            seeds = [1, 2]
            "#,
        )
        .unwrap();
        let a = csv_string(
            &run_experiment(
                &cfg,
                RunOptions {
                    jobs: 3,
                    timing: false,
                },
            )
            .unwrap(),
            false,
        )
        .unwrap();
        let b = csv_string(
            &run_experiment(
                &cfg,
                RunOptions {
                    jobs: 1,
                    timing: false,
                },
            )
            .unwrap(),
            false,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 2 * 2 * 3);
    }
}
