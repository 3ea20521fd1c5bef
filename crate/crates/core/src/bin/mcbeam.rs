//! Command-line front end for the experiment harness.
//!
//! A JSON config supplies the experiment spec; flags override individual
//! fields. A JSON report goes to stdout on success and to stderr on failure
//! (nonzero exit).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mcbeam::distributed::{InterferencePolicy, StepRule};
use mcbeam::experiment::{
    compare_schemes, default_signaling_scenarios, rank_stats, run_experiment, signaling_table,
    write_comparison, write_experiment, write_rank_stats_file, write_signaling_file, Algorithm,
    ExperimentSpec, Scenario, SeedRange, SignalingScenario,
};
use mcbeam::{BeamError, Result};

#[derive(Parser)]
#[command(
    name = "mcbeam",
    version,
    about = "Coordinated multicast beamforming experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Centralized SDR beamforming over the seed and SINR grids.
    RunCentralized(Common),
    /// Distributed primal-decomposition beamforming.
    RunDistributed(DistributedArgs),
    /// Coordinated vs. nulling vs. orthogonal access on identical channels.
    CompareSchemes(Common),
    /// Rank statistics of the relaxation over U/G and SINR grids.
    RankStats(RankArgs),
    /// Backhaul scalars: centralized CSI exchange vs. one distributed round.
    SignalingTable(SignalingArgs),
}

#[derive(Args)]
struct Common {
    /// Base seed; seed i of the run is `seed + i`.
    #[arg(long)]
    seed: u64,
    /// JSON experiment spec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long = "bs")]
    num_bs: Option<usize>,
    #[arg(long = "groups")]
    num_groups: Option<usize>,
    #[arg(long = "users")]
    num_users: Option<usize>,
    #[arg(long = "antennas")]
    num_antennas: Option<usize>,
    /// Comma-separated SINR targets in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gamma_db: Option<Vec<f64>>,
    /// Gaussian randomization candidates.
    #[arg(long)]
    candidates: Option<usize>,
    /// Relative eigenvalue threshold of the rank test.
    #[arg(long)]
    eps_rank: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimized,
    Common,
    Fixed,
    Nulling,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepRuleArg {
    Resilient,
    Diminishing,
    Constant,
}

#[derive(Args)]
struct DistributedArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Cap value of the fixed policy.
    #[arg(long)]
    fixed_cap: Option<f64>,
    #[arg(long, value_enum)]
    step_rule: Option<StepRuleArg>,
    #[arg(long)]
    initial_step: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    convergence_tol: Option<f64>,
    /// Write per-round traces.
    #[arg(long)]
    trace: bool,
    /// JSON-lines dump of every backhaul message.
    #[arg(long)]
    backhaul: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated U/G values.
    #[arg(long, value_delimiter = ',')]
    users_per_group: Option<Vec<usize>>,
}

#[derive(Args)]
struct SignalingArgs {
    #[command(flatten)]
    common: Common,
    /// Table row as `B,U,A`; repeatable. Defaults to the reference rows.
    #[arg(long = "row", value_parser = parse_row)]
    rows: Vec<SignalingScenario>,
}

fn parse_row(s: &str) -> std::result::Result<SignalingScenario, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [b, u, a] => Ok(SignalingScenario {
            num_bs: b,
            num_users: u,
            num_antennas: a,
        }),
        _ => Err(format!("expected B,U,A, got {s:?}")),
    }
}

fn base_spec(common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BeamError::Io(format!("{}: {e}", path.display())))?;
            ExperimentSpec::from_json(&text)?
        }
        None => ExperimentSpec::new(
            Scenario {
                num_bs: 2,
                num_groups: 4,
                num_users: 8,
                num_antennas: 8,
            },
            vec![0.0],
            SeedRange { count: 20, base: 0 },
        ),
    };
    spec.seeds.base = common.seed;
    if let Some(n) = common.seeds {
        spec.seeds.count = n;
    }
    if let Some(v) = common.num_bs {
        spec.scenario.num_bs = v;
    }
    if let Some(v) = common.num_groups {
        spec.scenario.num_groups = v;
    }
    if let Some(v) = common.num_users {
        spec.scenario.num_users = v;
    }
    if let Some(v) = common.num_antennas {
        spec.scenario.num_antennas = v;
    }
    if let Some(g) = &common.gamma_db {
        spec.gamma_db = g.clone();
    }
    if let Some(n) = common.candidates {
        spec.randomization.num_candidates = n;
    }
    if let Some(e) = common.eps_rank {
        spec.eps_rank = e;
    }
    if let Some(dir) = &common.out {
        spec.output.dir = dir.clone();
    }
    Ok(spec)
}

fn distributed_spec(args: &DistributedArgs) -> Result<ExperimentSpec> {
    let mut spec = base_spec(&args.common)?;
    spec.algorithm = Algorithm::Distributed;
    if let Some(p) = args.policy {
        spec.policy = match p {
            PolicyArg::Optimized => InterferencePolicy::Optimized,
            PolicyArg::Common => InterferencePolicy::Common,
            PolicyArg::Nulling => InterferencePolicy::Nulling,
            PolicyArg::Fixed => InterferencePolicy::Fixed(args.fixed_cap.ok_or_else(|| {
                BeamError::InvalidConfig("--policy fixed needs --fixed-cap".into())
            })?),
        };
    } else if args.fixed_cap.is_some() {
        return Err(BeamError::InvalidConfig(
            "--fixed-cap needs --policy fixed".into(),
        ));
    }
    if let Some(r) = args.step_rule {
        spec.schedule.rule = match r {
            StepRuleArg::Resilient => StepRule::Resilient,
            StepRuleArg::Diminishing => StepRule::Diminishing,
            StepRuleArg::Constant => StepRule::Constant,
        };
    }
    if let Some(s) = args.initial_step {
        spec.schedule.initial_step = Some(s);
    }
    if let Some(n) = args.max_rounds {
        spec.schedule.max_rounds = n;
    }
    if let Some(t) = args.convergence_tol {
        spec.schedule.convergence_tol = t;
    }
    if args.trace {
        spec.trace = true;
    }
    if let Some(path) = &args.backhaul {
        spec.output.backhaul = Some(path.clone());
    }
    Ok(spec)
}

fn paths_json(files: &[PathBuf]) -> Vec<String> {
    files.iter().map(|p| p.display().to_string()).collect()
}

fn run(command: Command) -> Result<serde_json::Value> {
    match command {
        Command::RunCentralized(common) => {
            let mut spec = base_spec(&common)?;
            spec.algorithm = Algorithm::Centralized;
            let output = run_experiment(&spec)?;
            let files = write_experiment(&output, &spec.output)?;
            Ok(
                json!({"status": "ok", "files": paths_json(&files), "seed_failures": output.failures.len()}),
            )
        }
        Command::RunDistributed(args) => {
            let spec = distributed_spec(&args)?;
            let output = run_experiment(&spec)?;
            let files = write_experiment(&output, &spec.output)?;
            Ok(
                json!({"status": "ok", "files": paths_json(&files), "seed_failures": output.failures.len()}),
            )
        }
        Command::CompareSchemes(common) => {
            let spec = base_spec(&common)?;
            let output = compare_schemes(&spec)?;
            let files = write_comparison(&output, &spec.output)?;
            Ok(
                json!({"status": "ok", "files": paths_json(&files), "seed_failures": output.failures.len()}),
            )
        }
        Command::RankStats(args) => {
            let mut spec = base_spec(&args.common)?;
            if let Some(r) = args.users_per_group {
                spec.users_per_group = r;
            }
            let stats = rank_stats(&spec)?;
            let file = write_rank_stats_file(&stats, &spec.output)?;
            Ok(json!({"status": "ok", "files": paths_json(&[file])}))
        }
        Command::SignalingTable(args) => {
            let spec = base_spec(&args.common)?;
            let rows = if !args.rows.is_empty() {
                args.rows
            } else if !spec.signaling.is_empty() {
                spec.signaling.clone()
            } else {
                default_signaling_scenarios()
            };
            let table = signaling_table(&rows)?;
            let file = write_signaling_file(&table, &spec.output)?;
            Ok(json!({"status": "ok", "files": paths_json(&[file]), "rows": table}))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({"status": "error", "kind": e.kind(), "message": e.to_string()})
            );
            ExitCode::FAILURE
        }
    }
}
