use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bincover_core::experiment::{
    plot_data, run_experiment, write_csv, ExperimentConfig, RunOptions,
};
use bincover_core::generators::{generate, Family};
use bincover_core::opt::{exact_opt_with_limit, DEFAULT_EXACT_LIMIT};
use bincover_core::{
    canonicalize, compute_advice, load_upper_bound, run, validate_covering, AdviceTape, Covering,
    Instance, StrategyKind,
};
use clap::{Parser, Subcommand};

/// Online bin covering with advice.
#[derive(Parser)]
#[command(name = "bincover", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline optimum and load bound.
    Opt {
        #[command(subcommand)]
        command: OptCommand,
    },
    /// Run an online strategy over an instance.
    Run {
        /// `dnf`, `dhk:<k>`, `dh2b` or `dh2b:<b>`.
        #[arg(long)]
        strategy: StrategyKind,
        #[arg(long)]
        instance: PathBuf,
        /// Advice tape dump, required by `dh2b`.
        #[arg(long)]
        advice: Option<PathBuf>,
        /// Print one line per placement.
        #[arg(long)]
        trace: bool,
        /// Write the resulting covering as JSON lines.
        #[arg(long)]
        covering: Option<PathBuf>,
    },
    /// Compute the advice tape for `dh2b`.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        /// Optimal covering (JSON lines), or `auto` to solve exactly.
        #[arg(long, default_value = "auto")]
        opt: String,
        #[arg(long, default_value_t = 16)]
        bits: u32,
        #[arg(long)]
        out: PathBuf,
        /// Write the oracle plan as JSON (`-` for stdout).
        #[arg(long)]
        plan_json: Option<PathBuf>,
        /// Echo the tape dump on stdout.
        #[arg(long)]
        dump_advice: bool,
    },
    /// Generate an instance and its reference covering.
    Generate {
        /// Family name, e.g. `beta_family`.
        family: String,
        /// Family parameters as `key=value`.
        params: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Advice width the arrival order is tuned for.
        #[arg(long, default_value_t = 16)]
        bits: u32,
        #[arg(long)]
        out: PathBuf,
        /// Write the reference covering as JSON lines.
        #[arg(long)]
        covering: Option<PathBuf>,
    },
    /// Experiment sweeps.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand)]
enum OptCommand {
    /// Exact optimum by subset dynamic programming.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EXACT_LIMIT)]
        limit: usize,
        /// Write the optimal covering as JSON lines.
        #[arg(long)]
        covering: Option<PathBuf>,
    },
    /// `floor(sum of sizes)`.
    Bound { instance: PathBuf },
}

#[derive(Subcommand)]
enum BenchCommand {
    Run {
        /// TOML or JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 for all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Add a `wall_ms` column.
        #[arg(long)]
        timing: bool,
    },
    /// Two columns of a results CSV.
    Plotdata {
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_covering(instance: &Instance, path: &Path) -> Result<Covering> {
    let f = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let c = Covering::read_jsonl(instance, BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))?;
    let report = validate_covering(instance, &c);
    if !report.is_ok() {
        bail!("{}: {report}", path.display());
    }
    Ok(c)
}

fn write_covering(c: &Covering, path: &Path) -> Result<()> {
    fs::write(path, c.to_jsonl()).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        io::stdout().write_all(text.as_bytes())?;
        Ok(())
    } else {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `key=value` pairs into a family spec; integers stay numbers.
fn family_from_args(name: &str, params: &[String]) -> Result<Family> {
    let mut map = serde_json::Map::new();
    map.insert("family".into(), name.into());
    for p in params {
        let Some((k, v)) = p.split_once('=') else {
            bail!("parameter `{p}` is not key=value");
        };
        let value = match v.parse::<u64>() {
            Ok(n) if k != "beta" && k != "alpha" && k != "two_share" => n.into(),
            _ => v.into(),
        };
        map.insert(k.into(), value);
    }
    serde_json::from_value(map.into()).with_context(|| format!("bad `{name}` parameters"))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Opt { command } => match command {
            OptCommand::Solve {
                instance,
                limit,
                covering,
            } => {
                let inst = read_instance(&instance)?;
                let r = exact_opt_with_limit(&inst, limit)?;
                writeln!(out, "score {}", r.score)?;
                writeln!(out, "load_bound {}", load_upper_bound(&inst))?;
                if let Some(p) = covering {
                    write_covering(&r.covering, &p)?;
                }
            }
            OptCommand::Bound { instance } => {
                let inst = read_instance(&instance)?;
                writeln!(out, "load_bound {}", load_upper_bound(&inst))?;
            }
        },
        Command::Run {
            strategy,
            instance,
            advice,
            trace,
            covering,
        } => {
            let inst = read_instance(&instance)?;
            let mut tape = match &advice {
                Some(p) => {
                    let text = fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    Some(AdviceTape::from_dump(&text)?)
                }
                None => None,
            };
            let o = run(strategy, &inst, tape.as_mut())?;
            if trace {
                for line in o.trace_lines(&inst) {
                    writeln!(out, "{line}")?;
                }
            }
            writeln!(out, "strategy {strategy}")?;
            writeln!(out, "score {}", o.score())?;
            if let Some(st) = &o.dh2b {
                writeln!(out, "advice_bits_read {}", st.bits_read)?;
            }
            if let Some(p) = covering {
                write_covering(&o.covering, &p)?;
            }
        }
        Command::Oracle {
            instance,
            opt,
            bits,
            out: tape_path,
            plan_json,
            dump_advice,
        } => {
            let inst = read_instance(&instance)?;
            let reference = if opt == "auto" {
                exact_opt_with_limit(&inst, DEFAULT_EXACT_LIMIT)
                    .context("`--opt auto` solves exactly; pass a covering for larger instances")?
                    .covering
            } else {
                read_covering(&inst, Path::new(&opt))?
            };
            let reference = canonicalize(&reference, &inst, bits)?;
            let (tape, plan) = compute_advice(&inst, &reference, bits)?;
            let dump = tape.to_dump();
            write_text(&tape_path, &dump)?;
            writeln!(out, "case {}", plan.case)?;
            writeln!(out, "bits_written {}", tape.len())?;
            for (field, n) in tape.report().breakdown {
                writeln!(out, "  {field} {n}")?;
            }
            if dump_advice {
                write!(out, "{dump}")?;
            }
            if let Some(p) = plan_json {
                let text = serde_json::to_string_pretty(&plan.to_json())? + "\n";
                write_text(&p, &text)?;
            }
        }
        Command::Generate {
            family,
            params,
            seed,
            bits,
            out: path,
            covering,
        } => {
            let fam = family_from_args(&family, &params)?;
            let g = generate(&fam, seed, bits)?;
            write_text(&path, &g.instance.to_text())?;
            writeln!(out, "n {}", g.instance.len())?;
            if let Some((g22, g2, gs)) = g.groups {
                writeln!(out, "groups g22={g22} g2={g2} gs={gs}")?;
            }
            if let Some(c) = &g.reference {
                writeln!(out, "reference_score {}", c.score())?;
                if let Some(p) = covering {
                    write_covering(c, &p)?;
                }
            } else if covering.is_some() {
                bail!("family `{family}` has no reference covering");
            }
        }
        Command::Bench { command } => match command {
            BenchCommand::Run {
                config,
                out: path,
                jobs,
                timing,
            } => {
                let text = fs::read_to_string(&config)
                    .with_context(|| format!("reading {}", config.display()))?;
                let cfg = ExperimentConfig::parse(&text)?;
                let rows = run_experiment(&cfg, RunOptions { jobs, timing })?;
                let f = fs::File::create(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                write_csv(&rows, timing, f)?;
                let failed = rows.iter().filter(|r| r.status != "ok").count();
                writeln!(out, "{} rows, {failed} not ok", rows.len())?;
            }
            BenchCommand::Plotdata { csv, x, y } => {
                let f =
                    fs::File::open(&csv).with_context(|| format!("reading {}", csv.display()))?;
                write!(out, "{}", plot_data(f, &x, &y)?)?;
            }
        },
    }
    Ok(())
}
