//! Monte-Carlo experiment harness: seeded sweeps over SINR targets, scheme
//! comparisons, rank statistics of the relaxation and backhaul load tables.
//!
//! Seeds run in parallel; every output is ordered by SINR target, then seed.
//! Floating-point fields are written in shortest round-trip form so reruns
//! produce byte-identical CSV files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backhaul::{BackhaulLog, BackhaulMessage};
use crate::baselines::{interference_nulling, orthogonal_access};
use crate::centralized::{
    check_rank, solve_centralized, solve_relaxation, CentralizedOptions, DEFAULT_EPS_RANK,
};
use crate::distributed::{
    run_distributed, signaling_load, DistributedOptions, InterferencePolicy, SignalingMode,
    SubgradientSchedule,
};
use crate::error::{BeamError, Result};
use crate::model::{generate_channels, linear_to_db, SystemConfig};
use crate::randomization::RandomizationOptions;

/// RNG stream reserved for deriving per-seed randomization seeds; channel
/// streams use ids `b·U + u`.
const RANDOMIZATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "B")]
    pub num_bs: usize,
    #[serde(rename = "G")]
    pub num_groups: usize,
    #[serde(rename = "U")]
    pub num_users: usize,
    #[serde(rename = "A")]
    pub num_antennas: usize,
}

impl Scenario {
    pub fn config(&self, gamma_db: f64) -> Result<SystemConfig> {
        SystemConfig::symmetric(
            self.num_bs,
            self.num_groups,
            self.num_users,
            self.num_antennas,
            gamma_db,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub count: usize,
    pub base: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.count as u64).map(move |i| self.base.wrapping_add(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Centralized,
    Distributed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Directory receiving all CSV files.
    pub dir: PathBuf,
    /// Optional JSON-lines dump of every simulated backhaul message.
    pub backhaul: Option<PathBuf>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            backhaul: None,
        }
    }
}

/// One `{B, U, A}` row of the signaling table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalingScenario {
    #[serde(rename = "B")]
    pub num_bs: usize,
    #[serde(rename = "U")]
    pub num_users: usize,
    #[serde(rename = "A")]
    pub num_antennas: usize,
}

/// The three configurations of the reference signaling table.
pub fn default_signaling_scenarios() -> Vec<SignalingScenario> {
    [(2, 8, 8), (3, 12, 12), (4, 16, 16)]
        .into_iter()
        .map(|(b, u, a)| SignalingScenario {
            num_bs: b,
            num_users: u,
            num_antennas: a,
        })
        .collect()
}

fn default_gamma_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_eps_rank() -> f64 {
    DEFAULT_EPS_RANK
}

fn default_policy() -> InterferencePolicy {
    InterferencePolicy::Optimized
}

fn default_algorithm() -> Algorithm {
    Algorithm::Centralized
}

/// Full description of a reproducible experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    #[serde(default = "default_gamma_grid")]
    pub gamma_db: Vec<f64>,
    pub seeds: SeedRange,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub schedule: SubgradientSchedule,
    #[serde(default = "default_policy")]
    pub policy: InterferencePolicy,
    /// `seed` here is mixed with each channel seed.
    #[serde(default)]
    pub randomization: RandomizationOptions,
    #[serde(default = "default_eps_rank")]
    pub eps_rank: f64,
    /// Record per-round traces of distributed runs.
    #[serde(default)]
    pub trace: bool,
    /// `U/G` grid for rank statistics; empty means the scenario's own ratio.
    #[serde(default)]
    pub users_per_group: Vec<usize>,
    /// Rows of the signaling table; empty means the reference configurations.
    #[serde(default)]
    pub signaling: Vec<SignalingScenario>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, gamma_db: Vec<f64>, seeds: SeedRange) -> Self {
        Self {
            scenario,
            gamma_db,
            seeds,
            algorithm: default_algorithm(),
            schedule: SubgradientSchedule::default(),
            policy: default_policy(),
            randomization: RandomizationOptions::default(),
            eps_rank: default_eps_rank(),
            trace: false,
            users_per_group: Vec::new(),
            signaling: Vec::new(),
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BeamError::InvalidConfig(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BeamError::InvalidConfig(m.into()));
        if self.gamma_db.is_empty() {
            return bad("SINR target grid is empty");
        }
        if self.gamma_db.iter().any(|g| !g.is_finite()) {
            return bad("SINR targets must be finite");
        }
        if self.seeds.count == 0 {
            return bad("seed count must be positive");
        }
        if !(self.eps_rank > 0.0 && self.eps_rank < 1.0) {
            return bad("eps_rank must lie in (0, 1)");
        }
        if self.randomization.num_candidates == 0 {
            return bad("randomization needs at least one candidate");
        }
        if self.schedule.max_rounds == 0 {
            return bad("max_rounds must be positive");
        }
        if self.users_per_group.contains(&0) {
            return bad("users per group must be positive");
        }
        self.scenario.config(self.gamma_db[0]).map(|_| ())
    }

    pub fn centralized_options(&self, channel_seed: u64) -> CentralizedOptions {
        CentralizedOptions {
            eps_rank: self.eps_rank,
            randomization: self.randomization_for(channel_seed),
            ..CentralizedOptions::default()
        }
    }

    pub fn distributed_options(&self, channel_seed: u64) -> DistributedOptions {
        DistributedOptions {
            schedule: self.schedule,
            policy: self.policy,
            eps_rank: self.eps_rank,
            randomization: self.randomization_for(channel_seed),
            ..DistributedOptions::default()
        }
    }

    /// Randomization options with a seed derived from the channel seed, so
    /// candidate draws are independent of the channel draws.
    pub fn randomization_for(&self, channel_seed: u64) -> RandomizationOptions {
        let mut rng = ChaCha8Rng::seed_from_u64(channel_seed);
        rng.set_stream(RANDOMIZATION_STREAM);
        RandomizationOptions {
            seed: rng.next_u64() ^ self.randomization.seed,
            ..self.randomization
        }
    }
}

/// One per-seed result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub scheme: String,
    pub gamma_db: f64,
    pub sum_power_linear: f64,
    pub sum_power_db: f64,
    pub rounds: usize,
    pub all_rank_one: bool,
    pub backhaul_scalars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seed: u64,
    pub round: usize,
    pub sum_power_linear: f64,
    pub theta_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeanRecord {
    pub round: usize,
    pub mean_sum_power_linear: f64,
    pub mean_sum_power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub seed: u64,
    pub scheme: String,
    pub gamma_db: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub scheme: String,
    pub gamma_db: f64,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub mean_sum_power_linear: f64,
    pub mean_sum_power_db: f64,
    pub rank_one_fraction: f64,
}

/// Convergence traces of one SINR target, seed-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub gamma_db: f64,
    pub rows: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub records: Vec<SeedRecord>,
    pub failures: Vec<FailureRecord>,
    pub summary: Vec<SummaryRecord>,
    pub traces: Vec<TraceSet>,
    /// `(seed, gamma_db, log)` of distributed runs, seed-ordered.
    pub backhaul: Vec<(u64, f64, BackhaulLog)>,
}

impl ExperimentOutput {
    /// Records of `scheme` at `gamma_db`, in seed order.
    pub fn records_for(&self, scheme: &str, gamma_db: f64) -> Vec<&SeedRecord> {
        self.records
            .iter()
            .filter(|r| r.scheme == scheme && r.gamma_db == gamma_db)
            .collect()
    }

    /// Per-round mean trace over seeds. Seeds that stopped early contribute
    /// their last value to later rounds.
    pub fn trace_means(&self, gamma_db: f64) -> Vec<TraceMeanRecord> {
        let Some(set) = self.traces.iter().find(|t| t.gamma_db == gamma_db) else {
            return Vec::new();
        };
        let mut per_seed: Vec<Vec<f64>> = Vec::new();
        let mut last_seed = None;
        for row in &set.rows {
            if last_seed != Some(row.seed) {
                per_seed.push(Vec::new());
                last_seed = Some(row.seed);
            }
            per_seed
                .last_mut()
                .expect("pushed above")
                .push(row.sum_power_linear);
        }
        let rounds = per_seed.iter().map(Vec::len).max().unwrap_or(0);
        (0..rounds)
            .map(|r| {
                let mean = per_seed
                    .iter()
                    .map(|t| t.get(r).or(t.last()).copied().unwrap_or(f64::NAN))
                    .sum::<f64>()
                    / per_seed.len() as f64;
                TraceMeanRecord {
                    round: r,
                    mean_sum_power_linear: mean,
                    mean_sum_power_db: linear_to_db(mean),
                }
            })
            .collect()
    }

    fn summarize(&mut self, schemes: &[String], gammas: &[f64]) {
        self.summary.clear();
        for gamma in gammas {
            for scheme in schemes {
                let ok = self.records_for(scheme, *gamma);
                let failed = self
                    .failures
                    .iter()
                    .filter(|f| &f.scheme == scheme && f.gamma_db == *gamma)
                    .count();
                self.summary.push(summary_row(scheme, *gamma, &ok, failed));
            }
        }
    }
}

fn summary_row(scheme: &str, gamma_db: f64, ok: &[&SeedRecord], failed: usize) -> SummaryRecord {
    let n = ok.len();
    let mean = if n == 0 {
        f64::NAN
    } else {
        ok.iter().map(|r| r.sum_power_linear).sum::<f64>() / n as f64
    };
    let rank_one = if n == 0 {
        f64::NAN
    } else {
        ok.iter().filter(|r| r.all_rank_one).count() as f64 / n as f64
    };
    SummaryRecord {
        scheme: scheme.to_string(),
        gamma_db,
        seeds_ok: n,
        seeds_failed: failed,
        mean_sum_power_linear: mean,
        mean_sum_power_db: linear_to_db(mean),
        rank_one_fraction: rank_one,
    }
}

fn seed_record(
    seed: u64,
    scheme: &str,
    gamma_db: f64,
    power: f64,
    rounds: usize,
    rank_one: bool,
    scalars: usize,
) -> SeedRecord {
    SeedRecord {
        seed,
        scheme: scheme.to_string(),
        gamma_db,
        sum_power_linear: power,
        sum_power_db: linear_to_db(power),
        rounds,
        all_rank_one: rank_one,
        backhaul_scalars: scalars,
    }
}

fn failure(seed: u64, scheme: &str, gamma_db: f64, e: &BeamError) -> FailureRecord {
    FailureRecord {
        seed,
        scheme: scheme.to_string(),
        gamma_db,
        error: e.to_string(),
    }
}

/// Scheme label of a distributed run.
pub fn distributed_scheme_name(policy: InterferencePolicy) -> &'static str {
    match policy {
        InterferencePolicy::Optimized => "distributed",
        InterferencePolicy::Common => "distributed_common",
        InterferencePolicy::Fixed(_) => "distributed_fixed",
        InterferencePolicy::Nulling => "nulling",
    }
}

/// Outcome of one `(γ, seed)` job.
struct SeedOutcome {
    records: Vec<SeedRecord>,
    failures: Vec<FailureRecord>,
    trace: Vec<TraceRecord>,
    backhaul: Option<BackhaulLog>,
}

fn jobs(spec: &ExperimentSpec) -> Vec<(f64, u64)> {
    spec.gamma_db
        .iter()
        .flat_map(|&g| spec.seeds.seeds().map(move |s| (g, s)))
        .collect()
}

fn run_one(spec: &ExperimentSpec, gamma_db: f64, seed: u64) -> SeedOutcome {
    let mut out = SeedOutcome {
        records: Vec::new(),
        failures: Vec::new(),
        trace: Vec::new(),
        backhaul: None,
    };
    let config = match spec.scenario.config(gamma_db) {
        Ok(c) => c,
        Err(e) => {
            out.failures.push(failure(seed, "config", gamma_db, &e));
            return out;
        }
    };
    let channels = generate_channels(&config, seed);
    match spec.algorithm {
        Algorithm::Centralized => {
            const SCHEME: &str = "centralized";
            match solve_centralized(&channels, &config, &spec.centralized_options(seed)) {
                Ok(r) => {
                    let scalars = signaling_load(
                        config.num_bs,
                        config.num_users(),
                        config.num_antennas,
                        SignalingMode::Centralized,
                    )
                    .unwrap_or(0);
                    out.records.push(seed_record(
                        seed,
                        SCHEME,
                        gamma_db,
                        r.achieved_power,
                        0,
                        r.all_rank_one,
                        scalars,
                    ));
                }
                Err(e) => out.failures.push(failure(seed, SCHEME, gamma_db, &e)),
            }
        }
        Algorithm::Distributed => {
            let scheme = distributed_scheme_name(spec.policy);
            match run_distributed(&channels, &config, &spec.distributed_options(seed)) {
                Ok(r) => {
                    out.records.push(seed_record(
                        seed,
                        scheme,
                        gamma_db,
                        r.achieved_power,
                        r.rounds_used,
                        r.all_rank_one,
                        r.backhaul.total(),
                    ));
                    if spec.trace {
                        out.trace = r
                            .trace
                            .iter()
                            .map(|t| TraceRecord {
                                seed,
                                round: t.round,
                                sum_power_linear: t.sum_power,
                                theta_change: t.theta_change,
                            })
                            .collect();
                    }
                    if spec.output.backhaul.is_some() {
                        out.backhaul = Some(r.backhaul);
                    }
                }
                Err(e) => out.failures.push(failure(seed, scheme, gamma_db, &e)),
            }
        }
    }
    out
}

fn collect(spec: &ExperimentSpec, outcomes: Vec<((f64, u64), SeedOutcome)>) -> ExperimentOutput {
    let mut output = ExperimentOutput::default();
    let mut traces: Vec<TraceSet> = spec
        .gamma_db
        .iter()
        .map(|&g| TraceSet {
            gamma_db: g,
            rows: Vec::new(),
        })
        .collect();
    for ((gamma, seed), o) in outcomes {
        output.records.extend(o.records);
        output.failures.extend(o.failures);
        if let Some(set) = traces.iter_mut().find(|t| t.gamma_db == gamma) {
            set.rows.extend(o.trace);
        }
        if let Some(log) = o.backhaul {
            output.backhaul.push((seed, gamma, log));
        }
    }
    if spec.trace && spec.algorithm == Algorithm::Distributed {
        output.traces = traces;
    }
    output
}

/// Runs the spec's algorithm on every `(γ, seed)` pair. Per-seed failures
/// are recorded and do not stop the run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let jobs = jobs(spec);
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(g, s)| ((g, s), run_one(spec, g, s)))
        .collect();
    let mut output = collect(spec, outcomes);
    let scheme = match spec.algorithm {
        Algorithm::Centralized => "centralized",
        Algorithm::Distributed => distributed_scheme_name(spec.policy),
    };
    output.summarize(&[scheme.to_string()], &spec.gamma_db);
    Ok(output)
}

pub const COORDINATED: &str = "coordinated";
pub const NULLING: &str = "nulling";
pub const ORTHOGONAL: &str = "orthogonal";

/// Mean power of one scheme at one SINR target over the seeds where every
/// scheme succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub scheme: String,
    pub gamma_db: f64,
    pub mean_sum_power_linear: f64,
    pub mean_sum_power_db: f64,
    pub seeds_used: usize,
    pub seeds_excluded: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ComparisonOutput {
    /// Per-seed rows of all three schemes.
    pub records: Vec<SeedRecord>,
    pub failures: Vec<FailureRecord>,
    pub comparison: Vec<ComparisonRecord>,
}

impl ComparisonOutput {
    pub fn power(&self, scheme: &str, gamma_db: f64, seed: u64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.scheme == scheme && r.gamma_db == gamma_db && r.seed == seed)
            .map(|r| r.sum_power_linear)
    }

    pub fn mean(&self, scheme: &str, gamma_db: f64) -> Option<&ComparisonRecord> {
        self.comparison
            .iter()
            .find(|c| c.scheme == scheme && c.gamma_db == gamma_db)
    }
}

/// Coordinated (centralized relaxation), nulling and orthogonal access on
/// identical channels. Seeds where any scheme fails are excluded from every
/// mean and counted.
pub fn compare_schemes(spec: &ExperimentSpec) -> Result<ComparisonOutput> {
    spec.validate()?;
    let outcomes: Vec<SeedOutcome> = jobs(spec)
        .par_iter()
        .map(|&(gamma_db, seed)| {
            let mut out = SeedOutcome {
                records: Vec::new(),
                failures: Vec::new(),
                trace: Vec::new(),
                backhaul: None,
            };
            let config = match spec.scenario.config(gamma_db) {
                Ok(c) => c,
                Err(e) => {
                    out.failures.push(failure(seed, "config", gamma_db, &e));
                    return out;
                }
            };
            let channels = generate_channels(&config, seed);
            let copts = spec.centralized_options(seed);
            let csi_scalars = signaling_load(
                config.num_bs,
                config.num_users(),
                config.num_antennas,
                SignalingMode::Centralized,
            )
            .unwrap_or(0);
            match solve_centralized(&channels, &config, &copts) {
                Ok(r) => out.records.push(seed_record(
                    seed,
                    COORDINATED,
                    gamma_db,
                    r.achieved_power,
                    0,
                    r.all_rank_one,
                    csi_scalars,
                )),
                Err(e) => out.failures.push(failure(seed, COORDINATED, gamma_db, &e)),
            }
            match interference_nulling(&channels, &config, &spec.distributed_options(seed)) {
                Ok(r) => out.records.push(seed_record(
                    seed,
                    NULLING,
                    gamma_db,
                    r.sum_power,
                    1,
                    r.all_rank_one,
                    r.backhaul_scalars,
                )),
                Err(e) => out.failures.push(failure(seed, NULLING, gamma_db, &e)),
            }
            match orthogonal_access(&channels, &config, &copts) {
                Ok(r) if r.feasible => out.records.push(seed_record(
                    seed,
                    ORTHOGONAL,
                    gamma_db,
                    r.sum_power,
                    0,
                    r.all_rank_one,
                    0,
                )),
                Ok(r) => {
                    let msg = r
                        .per_cell
                        .iter()
                        .filter_map(|c| c.power.as_ref().err().map(|e| format!("BS {}: {e}", c.bs)))
                        .collect::<Vec<_>>()
                        .join("; ");
                    out.failures.push(FailureRecord {
                        seed,
                        scheme: ORTHOGONAL.into(),
                        gamma_db,
                        error: msg,
                    });
                }
                Err(e) => out.failures.push(failure(seed, ORTHOGONAL, gamma_db, &e)),
            }
            out
        })
        .collect();

    let mut output = ComparisonOutput::default();
    for o in outcomes {
        output.records.extend(o.records);
        output.failures.extend(o.failures);
    }
    let schemes = [COORDINATED, NULLING, ORTHOGONAL];
    for &gamma in &spec.gamma_db {
        let complete: Vec<u64> = spec
            .seeds
            .seeds()
            .filter(|&s| {
                schemes
                    .iter()
                    .all(|sc| output.power(sc, gamma, s).is_some())
            })
            .collect();
        let excluded = spec.seeds.count - complete.len();
        for scheme in schemes {
            let powers: Vec<f64> = complete
                .iter()
                .filter_map(|&s| output.power(scheme, gamma, s))
                .collect();
            let mean = if powers.is_empty() {
                f64::NAN
            } else {
                powers.iter().sum::<f64>() / powers.len() as f64
            };
            output.comparison.push(ComparisonRecord {
                scheme: scheme.to_string(),
                gamma_db: gamma,
                mean_sum_power_linear: mean,
                mean_sum_power_db: linear_to_db(mean),
                seeds_used: powers.len(),
                seeds_excluded: excluded,
            });
        }
    }
    Ok(output)
}

/// Rank statistics of the centralized relaxation at one `(U/G, γ)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub users_per_group: usize,
    pub gamma_db: f64,
    pub seeds: usize,
    pub failures: usize,
    /// Percentage of solved seeds whose blocks are all rank-one.
    pub rank_one_percent: f64,
    /// Mean of `Σ_g rank(W_g) / G` over seeds that are not all rank-one;
    /// `None` when every seed is rank-one.
    pub average_higher_rank: Option<f64>,
}

/// Block ranks of the relaxation for one seed.
pub fn relaxation_ranks(config: &SystemConfig, seed: u64, eps_rank: f64) -> Result<Vec<usize>> {
    let channels = generate_channels(config, seed);
    let solution = solve_relaxation(&channels, config, &conic::SolverOptions::default())?;
    Ok(solution
        .blocks
        .iter()
        .map(|w| check_rank(w, eps_rank))
        .collect())
}

/// Aggregates per-seed block ranks into rank statistics.
pub fn aggregate_ranks(
    users_per_group: usize,
    gamma_db: f64,
    ranks: &[Result<Vec<usize>>],
) -> RankStats {
    let solved: Vec<&Vec<usize>> = ranks.iter().filter_map(|r| r.as_ref().ok()).collect();
    let rank_one = solved.iter().filter(|r| r.iter().all(|&k| k <= 1)).count();
    let higher: Vec<f64> = solved
        .iter()
        .filter(|r| r.iter().any(|&k| k > 1))
        .map(|r| r.iter().sum::<usize>() as f64 / r.len() as f64)
        .collect();
    RankStats {
        users_per_group,
        gamma_db,
        seeds: ranks.len(),
        failures: ranks.len() - solved.len(),
        rank_one_percent: if solved.is_empty() {
            f64::NAN
        } else {
            100.0 * rank_one as f64 / solved.len() as f64
        },
        average_higher_rank: if higher.is_empty() {
            None
        } else {
            Some(higher.iter().sum::<f64>() / higher.len() as f64)
        },
    }
}

/// Rank statistics over the spec's `U/G` and `γ` grids. `U` is set to
/// `G · (U/G)` for each grid point.
pub fn rank_stats(spec: &ExperimentSpec) -> Result<Vec<RankStats>> {
    spec.validate()?;
    let ratios = if spec.users_per_group.is_empty() {
        vec![spec.scenario.num_users / spec.scenario.num_groups]
    } else {
        spec.users_per_group.clone()
    };
    let mut points = Vec::new();
    for &upg in &ratios {
        for &gamma in &spec.gamma_db {
            let scenario = Scenario {
                num_users: spec.scenario.num_groups * upg,
                ..spec.scenario
            };
            points.push((upg, gamma, scenario.config(gamma)?));
        }
    }
    let seeds: Vec<u64> = spec.seeds.seeds().collect();
    let work: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let ranks: Vec<Result<Vec<usize>>> = work
        .par_iter()
        .map(|&(p, s)| relaxation_ranks(&points[p].2, s, spec.eps_rank))
        .collect();
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, (upg, gamma, _))| {
            aggregate_ranks(*upg, *gamma, &ranks[p * seeds.len()..(p + 1) * seeds.len()])
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingRecord {
    #[serde(rename = "B")]
    pub num_bs: usize,
    #[serde(rename = "U")]
    pub num_users: usize,
    #[serde(rename = "A")]
    pub num_antennas: usize,
    pub centralized: usize,
    pub distributed_per_round: usize,
}

pub fn signaling_table(scenarios: &[SignalingScenario]) -> Result<Vec<SignalingRecord>> {
    scenarios
        .iter()
        .map(|s| {
            Ok(SignalingRecord {
                num_bs: s.num_bs,
                num_users: s.num_users,
                num_antennas: s.num_antennas,
                centralized: signaling_load(
                    s.num_bs,
                    s.num_users,
                    s.num_antennas,
                    SignalingMode::Centralized,
                )?,
                distributed_per_round: signaling_load(
                    s.num_bs,
                    s.num_users,
                    s.num_antennas,
                    SignalingMode::DistributedPerRound,
                )?,
            })
        })
        .collect()
}

/// Serializes `rows` as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(io_error)?;
    }
    writer.flush().map_err(|e| io_error(e.into()))?;
    Ok(())
}

/// CSV for the rank-statistics grid; undefined averages are written as `-`.
pub fn write_rank_stats<W: Write>(stats: &[RankStats], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record([
            "users_per_group",
            "gamma_db",
            "seeds",
            "failures",
            "rank_one_percent",
            "average_higher_rank",
        ])
        .map_err(io_error)?;
    for s in stats {
        writer
            .write_record([
                s.users_per_group.to_string(),
                s.gamma_db.to_string(),
                s.seeds.to_string(),
                s.failures.to_string(),
                s.rank_one_percent.to_string(),
                s.average_higher_rank
                    .map_or_else(|| "-".to_string(), |v| v.to_string()),
            ])
            .map_err(io_error)?;
    }
    writer.flush().map_err(|e| io_error(e.into()))?;
    Ok(())
}

fn io_error(e: csv::Error) -> BeamError {
    BeamError::Io(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| BeamError::Io(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| BeamError::Io(format!("{}: {e}", path.display())))
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv(rows, create(path)?)
}

/// File-name fragment for an SINR target, e.g. `10dB` or `-2.5dB`.
pub fn gamma_tag(gamma_db: f64) -> String {
    format!("{gamma_db}dB")
}

#[derive(Serialize)]
struct TaggedMessage<'a> {
    seed: u64,
    gamma_db: f64,
    #[serde(flatten)]
    message: &'a BackhaulMessage,
}

/// Writes every backhaul message as one JSON object per line, tagged with
/// its seed and SINR target.
pub fn write_backhaul_jsonl<W: Write>(logs: &[(u64, f64, BackhaulLog)], mut out: W) -> Result<()> {
    for (seed, gamma_db, log) in logs {
        for message in log.messages() {
            let tagged = TaggedMessage {
                seed: *seed,
                gamma_db: *gamma_db,
                message,
            };
            serde_json::to_writer(&mut out, &tagged).map_err(|e| BeamError::Io(e.to_string()))?;
            out.write_all(b"\n")
                .map_err(|e| BeamError::Io(e.to_string()))?;
        }
    }
    out.flush().map_err(|e| BeamError::Io(e.to_string()))
}

/// Writes `per_seed.csv`, `summary.csv`, `failures.csv` and, for traced
/// runs, `trace_<γ>.csv` and `trace_mean_<γ>.csv` into `paths.dir`.
/// Returns the files written.
pub fn write_experiment(output: &ExperimentOutput, paths: &OutputPaths) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: String, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = paths.dir.join(name);
        f(&path)?;
        written.push(path);
        Ok(())
    };
    put("per_seed.csv".into(), &|p| {
        write_csv_file(p, &output.records)
    })?;
    put("summary.csv".into(), &|p| {
        write_csv_file(p, &output.summary)
    })?;
    put("failures.csv".into(), &|p| {
        write_csv_file(p, &output.failures)
    })?;
    for set in &output.traces {
        let tag = gamma_tag(set.gamma_db);
        put(format!("trace_{tag}.csv"), &|p| {
            write_csv_file(p, &set.rows)
        })?;
        put(format!("trace_mean_{tag}.csv"), &|p| {
            write_csv_file(p, &output.trace_means(set.gamma_db))
        })?;
    }
    if let Some(path) = &paths.backhaul {
        write_backhaul_jsonl(&output.backhaul, create(path)?)?;
        written.push(path.clone());
    }
    Ok(written)
}

/// Writes `per_seed.csv`, `comparison.csv` and `failures.csv`.
pub fn write_comparison(output: &ComparisonOutput, paths: &OutputPaths) -> Result<Vec<PathBuf>> {
    let per_seed = paths.dir.join("per_seed.csv");
    let comparison = paths.dir.join("comparison.csv");
    let failures = paths.dir.join("failures.csv");
    write_csv_file(&per_seed, &output.records)?;
    write_csv_file(&comparison, &output.comparison)?;
    write_csv_file(&failures, &output.failures)?;
    Ok(vec![per_seed, comparison, failures])
}

pub fn write_rank_stats_file(stats: &[RankStats], paths: &OutputPaths) -> Result<PathBuf> {
    let path = paths.dir.join("rank_stats.csv");
    write_rank_stats(stats, create(&path)?)?;
    Ok(path)
}

pub fn write_signaling_file(rows: &[SignalingRecord], paths: &OutputPaths) -> Result<PathBuf> {
    let path = paths.dir.join("signaling.csv");
    write_csv_file(&path, rows)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec::new(
            Scenario {
                num_bs: 2,
                num_groups: 2,
                num_users: 4,
                num_antennas: 4,
            },
            vec![0.0, 5.0],
            SeedRange { count: 3, base: 7 },
        )
    }

    #[test]
    fn spec_json_round_trip_with_defaults() {
        let text =
            r#"{"scenario": {"B": 2, "G": 4, "U": 8, "A": 8}, "seeds": {"count": 5, "base": 1}}"#;
        let spec = ExperimentSpec::from_json(text).unwrap();
        assert_eq!(spec.gamma_db, vec![0.0]);
        assert_eq!(spec.algorithm, Algorithm::Centralized);
        assert_eq!(spec.policy, InterferencePolicy::Optimized);
        assert_eq!(spec.randomization.num_candidates, 100);
        assert_eq!(spec.eps_rank, 1e-4);
        let back = ExperimentSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_fields_and_bad_grids_rejected() {
        let text = r#"{"scenario": {"B": 2, "G": 4, "U": 8, "A": 8}, "seeds": {"count": 5, "base": 1}, "bogus": 1}"#;
        assert!(ExperimentSpec::from_json(text).is_err());
        let mut spec = small_spec();
        spec.gamma_db.clear();
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.scenario.num_users = 5;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.seeds.count = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn randomization_seed_depends_on_channel_seed() {
        let spec = small_spec();
        let a = spec.randomization_for(1).seed;
        let b = spec.randomization_for(2).seed;
        assert_ne!(a, b);
        assert_eq!(a, spec.randomization_for(1).seed);
    }

    #[test]
    fn rank_aggregation() {
        let ranks = vec![
            Ok(vec![1, 1]),
            Ok(vec![2, 1]),
            Ok(vec![2, 2]),
            Err(BeamError::NonOptimalSolution),
        ];
        let s = aggregate_ranks(3, 10.0, &ranks);
        assert_eq!(s.seeds, 4);
        assert_eq!(s.failures, 1);
        assert!((s.rank_one_percent - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.average_higher_rank, Some((1.5 + 2.0) / 2.0));
        let all_one = aggregate_ranks(1, 0.0, &[Ok(vec![1, 0])]);
        assert_eq!(all_one.rank_one_percent, 100.0);
        assert_eq!(all_one.average_higher_rank, None);
    }

    #[test]
    fn reference_signaling_table() {
        let rows = signaling_table(&default_signaling_scenarios()).unwrap();
        let pairs: Vec<(usize, usize)> = rows
            .iter()
            .map(|r| (r.centralized, r.distributed_per_round))
            .collect();
        assert_eq!(pairs, vec![(256, 16), (1728, 48), (6144, 96)]);
    }

    #[test]
    fn trace_means_carry_last_value() {
        let output = ExperimentOutput {
            traces: vec![TraceSet {
                gamma_db: 0.0,
                rows: vec![
                    TraceRecord {
                        seed: 0,
                        round: 0,
                        sum_power_linear: 4.0,
                        theta_change: 0.1,
                    },
                    TraceRecord {
                        seed: 0,
                        round: 1,
                        sum_power_linear: 2.0,
                        theta_change: 0.0,
                    },
                    TraceRecord {
                        seed: 1,
                        round: 0,
                        sum_power_linear: 6.0,
                        theta_change: 0.0,
                    },
                ],
            }],
            ..ExperimentOutput::default()
        };
        let means = output.trace_means(0.0);
        assert_eq!(means.len(), 2);
        assert_eq!(means[0].mean_sum_power_linear, 5.0);
        assert_eq!(means[1].mean_sum_power_linear, 4.0);
    }

    #[test]
    fn gamma_tags() {
        assert_eq!(gamma_tag(0.0), "0dB");
        assert_eq!(gamma_tag(10.0), "10dB");
        assert_eq!(gamma_tag(-2.5), "-2.5dB");
    }
}
