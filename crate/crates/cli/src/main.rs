//! `noc3d`: command-line front end for the 3D NoC design-space exploration
//! toolkit. Exit codes: 0 success, 1 runtime error, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use noc_core::error::Error;
use noc_core::experiments::{self, AlgoId, ExperimentConfig};
use noc_core::objectives::{EvalContext, ObjectiveSet};
use noc_core::topology::{build_mesh, Design, SystemConfig};
use noc_core::traffic::{generate_synthetic, load_profile, store_profile, SyntheticSpec};
use noc_core::Result;

/// Tool version plus the artifact schema version, bumped on breaking
/// changes to the JSON/CSV formats.
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (schema 1)");

#[derive(Parser)]
#[command(name = "noc3d", about = "3D heterogeneous NoC design-space exploration", version = VERSION)]
struct Cli {
    /// Worker threads for parallel evaluation (default: machine parallelism).
    /// Results are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic many-to-few traffic profile as CSV.
    GenTraffic(GenTraffic),
    /// Write the 3D mesh start design for a system.
    Mesh(Mesh),
    /// Evaluate a design's objectives for a case; prints JSON to stdout.
    Evaluate(Evaluate),
    /// Run one optimization case from an experiment config.
    Optimize(Optimize),
    /// Run all algorithms on one config at equal budgets and compare.
    Compare(Compare),
    /// Leave-one-out study over the config's traffic profiles.
    Loo(Loo),
    /// Per-layer link and core distribution of a design, as CSV.
    Report(Report),
}

#[derive(Args)]
struct GenTraffic {
    /// System config JSON (dims and core counts).
    #[arg(long)]
    system: PathBuf,
    /// Synthetic spec JSON; defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Mesh {
    #[arg(long)]
    system: PathBuf,
    /// Placement seed; canonical tile-scan placement when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output design JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    design: PathBuf,
    /// Traffic profile CSV.
    #[arg(long)]
    traffic: PathBuf,
    /// Objective case (1-5).
    #[arg(long, default_value_t = 5)]
    case: u8,
}

#[derive(Args)]
struct Optimize {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    case: Option<u8>,
    /// moo-stage, random-restart, or mosa.
    #[arg(long)]
    algo: Option<String>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Compare {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Loo {
    /// Experiment config JSON; its traffic sources are the study's profiles.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Report {
    #[arg(long)]
    design: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    json.push('\n');
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_system(path: &Path) -> Result<SystemConfig> {
    let config: SystemConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

fn load_config(cmd_path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(cmd_path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTraffic(a) => {
            let system = load_system(&a.system)?;
            let mut spec: SyntheticSpec = match &a.spec {
                Some(p) => read_json(p)?,
                None => SyntheticSpec::default(),
            };
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            let profile = generate_synthetic(&system, &spec)?;
            store_profile(&profile, &a.out)
        }
        Command::Mesh(a) => {
            let system = load_system(&a.system)?;
            let design = build_mesh(&system, a.seed)?;
            write_json(&a.out, &design)
        }
        Command::Evaluate(a) => {
            let system = load_system(&a.system)?;
            let design: Design = read_json(&a.design)?;
            let violations = noc_core::topology::validate(&design, &system);
            if !violations.is_empty() {
                return Err(Error::Config(format!("design: invalid ({:?})", violations)));
            }
            let traffic = load_profile(&a.traffic)?;
            let case = ObjectiveSet::from_case(a.case)?;
            let ctx = EvalContext::new(system, traffic)?;
            let vec = noc_core::objectives::evaluate(&design, &ctx, &case)?;
            let mut json = serde_json::to_string_pretty(&vec)
                .map_err(|e| Error::json("stdout", e))?;
            json.push('\n');
            print!("{json}");
            Ok(())
        }
        Command::Optimize(a) => {
            let mut cfg = load_config(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seeds = vec![seed];
            }
            if let Some(budget) = a.budget {
                cfg.budget = budget;
            }
            if let Some(case) = a.case {
                cfg.case = case;
            }
            if let Some(algo) = &a.algo {
                cfg.algo = algo.parse()?;
            }
            if let Some(out) = a.out {
                cfg.out_dir = out;
            }
            let summary = experiments::run_case(&cfg)?;
            println!(
                "case {} {:?}: median PHV {} over {} seed(s)",
                summary.case,
                summary.algo,
                summary.median_phv,
                summary.per_seed.len()
            );
            Ok(())
        }
        Command::Compare(a) => {
            let mut cfg = load_config(&a.config)?;
            if let Some(budget) = a.budget {
                cfg.budget = budget;
            }
            if let Some(out) = a.out {
                cfg.out_dir = out;
            }
            let base = cfg.out_dir.clone();
            let mut summaries = Vec::new();
            for algo in [AlgoId::MooStage, AlgoId::RandomRestart, AlgoId::Mosa] {
                let mut sub = cfg.clone();
                sub.algo = algo;
                sub.out_dir = base.join(match algo {
                    AlgoId::MooStage => "moo-stage",
                    AlgoId::RandomRestart => "random-restart",
                    AlgoId::Mosa => "mosa",
                });
                summaries.push(experiments::run_case(&sub)?);
            }
            write_json(&base.join("comparison.json"), &summaries)?;
            for s in &summaries {
                println!("{:?}: median PHV {}", s.algo, s.median_phv);
            }
            Ok(())
        }
        Command::Loo(a) => {
            let mut cfg = load_config(&a.config)?;
            if let Some(out) = a.out {
                cfg.out_dir = out;
            }
            let profiles = experiments::resolve_sources(&cfg)?;
            let report = experiments::leave_one_out(&profiles, &cfg)?;
            println!(
                "leave-one-out degradation: median {} mean {} max {}",
                report.median, report.mean, report.max
            );
            Ok(())
        }
        Command::Report(a) => {
            let design: Design = read_json(&a.design)?;
            let rows = experiments::layer_report(&design);
            let csv = experiments::layers_csv(&rows);
            match a.out {
                Some(path) => std::fs::write(&path, csv)
                    .map_err(|e| Error::io(path.display().to_string(), e)),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

/// Configuration problems exit with 2 and a message naming the offending
/// field; runtime failures exit with 1.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::TrafficSpec(_)
        | Error::Context(_)
        | Error::Parse { .. }
        | Error::Json { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
