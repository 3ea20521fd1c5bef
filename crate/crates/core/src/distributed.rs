//! Primal decomposition of the relaxed problem into per-BS subproblems
//! coupled through inter-cell interference caps, with a projected
//! subgradient master problem driven over a simulated backhaul.
//!
//! Each round is a synchronous barrier: every BS solves its subproblem using
//! only its own channel rows, the SINR-row and cap-row sensitivities are
//! exchanged, and every BS applies the same projected subgradient step to
//! the caps it owns.

use conic::{solve_sdp, SdpProblem, SdpSolution, Sense, SolverOptions};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backhaul::{BackhaulLog, MessageKind};
use crate::centralized::{
    check_rank, principal_component, status_error, DEFAULT_EPS_RANK, POLISH_TOLERANCE,
};
use crate::error::{BeamError, Result};
use crate::model::{BeamformerSet, ChannelSet, CovarianceSet, LocalCsi, SystemConfig};
use crate::randomization::{power_opt_distributed, randomize_distributed, RandomizationOptions};
use crate::C64;

/// Interference caps `θ[b][u]` for every BS `b` and every user `u` it does
/// not serve.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceAllocation {
    num_bs: usize,
    num_users: usize,
    serving: Vec<usize>,
    values: Vec<f64>,
}

impl InterferenceAllocation {
    pub fn uniform(config: &SystemConfig, value: f64) -> Self {
        let num_users = config.num_users();
        let serving: Vec<usize> = (0..num_users).map(|u| config.serving_bs(u)).collect();
        let values = (0..config.num_bs * num_users)
            .map(|i| {
                if serving[i % num_users] == i / num_users {
                    0.0
                } else {
                    value
                }
            })
            .collect();
        Self {
            num_bs: config.num_bs,
            num_users,
            serving,
            values,
        }
    }

    /// `θ_{b,u} = γ_u σ_u²`.
    pub fn noise_scaled(config: &SystemConfig) -> Self {
        let mut theta = Self::uniform(config, 0.0);
        for (b, u) in theta.pairs().collect::<Vec<_>>() {
            theta.set(b, u, config.sinr_target[u] * config.noise_var[u]);
        }
        theta
    }

    /// Valid `(b, u)` pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_bs).flat_map(move |b| {
            (0..self.num_users)
                .filter(move |&u| self.serving[u] != b)
                .map(move |u| (b, u))
        })
    }

    pub fn len(&self) -> usize {
        self.pairs().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, bs: usize, user: usize) -> f64 {
        debug_assert_ne!(self.serving[user], bs);
        self.values[bs * self.num_users + user]
    }

    pub fn set(&mut self, bs: usize, user: usize, value: f64) {
        debug_assert_ne!(self.serving[user], bs);
        self.values[bs * self.num_users + user] = value;
    }

    /// `Σ_{j≠b(u)} θ_{j,u}`: interference allowance at user `u`.
    pub fn incoming(&self, _config: &SystemConfig, user: usize) -> f64 {
        (0..self.num_bs)
            .filter(|&j| j != self.serving[user])
            .map(|j| self.values[j * self.num_users + user])
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.pairs()
            .map(|(b, u)| self.get(b, u).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        self.pairs().map(|(b, u)| self.get(b, u)).sum::<f64>() / n as f64
    }

    /// `‖other - self‖∞ / ‖self‖∞`.
    pub fn relative_change(&self, other: &Self) -> f64 {
        let diff = self
            .pairs()
            .map(|(b, u)| (other.get(b, u) - self.get(b, u)).abs())
            .fold(0.0, f64::max);
        let scale = self.max_abs();
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }

    pub fn all_at_least(&self, floor: f64) -> bool {
        self.pairs()
            .all(|(b, u)| self.get(b, u) >= floor && self.get(b, u).is_finite())
    }
}

/// Dual-derived sensitivities reported by one BS.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBundle {
    pub bs: usize,
    /// `(u, λ_u)` for served users: `∂f*_b/∂θ_{j,u}` for any interferer `j`.
    pub lambda: Vec<(usize, f64)>,
    /// `(u, μ_{b,u})` for out-of-cell users: `-∂f*_b/∂θ_{b,u}`.
    pub mu: Vec<(usize, f64)>,
}

/// Initial `δ` of the resilient rule.
pub const DEFAULT_RESILIENT_STEP: f64 = 0.2;
/// Largest `δ` of the resilient rule.
pub const MAX_RESILIENT_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `σ_r = σ₀ / √(r + 1)`
    Diminishing,
    Constant,
    /// Per-pair `σ_{b,u} = θ_{b,u} (1 - e^{-δ_{b,u} sign s}) / s`, i.e.
    /// `θ ← θ e^{-δ sign s}`. `δ` grows by 1.2 while the sign of `s_{b,u}`
    /// persists and halves when it flips. Each BS keeps `δ` for its own caps.
    Resilient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgradientSchedule {
    pub rule: StepRule,
    /// `σ₀`, or the initial `δ` for the resilient rule. `None` selects
    /// `DEFAULT_RESILIENT_STEP` for the resilient rule and `0.1 · mean(θ⁽⁰⁾)`
    /// otherwise.
    pub initial_step: Option<f64>,
    pub theta_floor: f64,
    pub max_rounds: usize,
    /// Stop when `‖θ' - θ‖∞ / ‖θ‖∞` falls to this value.
    pub convergence_tol: f64,
    pub max_backtracks: usize,
}

impl Default for SubgradientSchedule {
    fn default() -> Self {
        Self {
            rule: StepRule::Resilient,
            initial_step: None,
            theta_floor: 1e-10,
            max_rounds: 200,
            convergence_tol: 1e-4,
            max_backtracks: 20,
        }
    }
}

impl SubgradientSchedule {
    /// `σ₀`, or the initial `δ` for the resilient rule.
    pub fn base_step(&self, theta0: &InterferenceAllocation) -> f64 {
        match self.rule {
            StepRule::Resilient => self.initial_step.unwrap_or(DEFAULT_RESILIENT_STEP),
            StepRule::Diminishing | StepRule::Constant => {
                self.initial_step.unwrap_or(0.1 * theta0.mean())
            }
        }
    }

    /// Per-coordinate steps for `round` at caps `theta` with subgradient `s`.
    /// `memory` holds the resilient rule's signed `δ` from the previous round
    /// (zero before the first).
    pub fn step_sizes(
        &self,
        round: usize,
        base: f64,
        theta: &[f64],
        s: &[f64],
        memory: &mut [f64],
    ) -> Vec<f64> {
        match self.rule {
            StepRule::Diminishing => vec![base / ((round + 1) as f64).sqrt(); theta.len()],
            StepRule::Constant => vec![base; theta.len()],
            StepRule::Resilient => theta
                .iter()
                .zip(s)
                .zip(memory.iter_mut())
                .map(|((&t, &v), prev)| {
                    if v == 0.0 {
                        return 0.0;
                    }
                    let delta = if *prev == 0.0 {
                        base
                    } else if prev.signum() == v.signum() {
                        (prev.abs() * 1.2).min(MAX_RESILIENT_STEP)
                    } else {
                        prev.abs() * 0.5
                    };
                    *prev = delta.copysign(v);
                    t * (1.0 - (-delta.copysign(v)).exp()) / v
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum InterferencePolicy {
    /// Per-pair caps optimized by the master problem.
    Optimized,
    /// One shared cap for every pair, optimized with the aggregate subgradient.
    Common,
    /// Every cap held at the given constant; one round, no signaling.
    Fixed(f64),
    /// Zero inter-cell interference by projection onto the null space of the
    /// out-of-cell channels; one round, no signaling.
    Nulling,
}

#[derive(Debug, Clone, Copy)]
pub struct DistributedOptions {
    pub schedule: SubgradientSchedule,
    pub policy: InterferencePolicy,
    pub eps_rank: f64,
    pub solver: SolverOptions,
    pub randomization: RandomizationOptions,
}

impl Default for DistributedOptions {
    fn default() -> Self {
        Self {
            schedule: SubgradientSchedule::default(),
            policy: InterferencePolicy::Optimized,
            eps_rank: DEFAULT_EPS_RANK,
            solver: SolverOptions::default(),
            randomization: RandomizationOptions::default(),
        }
    }
}

/// Subproblem of one BS with the row layout needed to read back duals.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub bs: usize,
    pub problem: SdpProblem,
    /// Global group id of each block.
    pub groups: Vec<usize>,
    /// `(user, row)` of each linearized SINR row.
    pub sinr_rows: Vec<(usize, usize)>,
    /// `(user, row)` of each outgoing cap row.
    pub cap_rows: Vec<(usize, usize)>,
    /// Block variables are `X` with `W = N X Nᴴ` when present.
    pub basis: Option<DMatrix<C64>>,
}

impl Subproblem {
    /// Transmit covariances in antenna coordinates.
    pub fn covariances(&self, solution: &SdpSolution) -> Vec<DMatrix<C64>> {
        match &self.basis {
            None => solution.blocks.clone(),
            Some(n) => solution
                .blocks
                .iter()
                .map(|x| n * x * n.adjoint())
                .collect(),
        }
    }
}

/// Per-BS relaxed subproblem with fixed caps. Served users get
/// `Tr(H_u W_g) - γ_u Σ_{k∈G_b∖g} Tr(H_u W_k) ≥ γ_u(σ_u² + Σ_{j≠b} θ_{j,u})`;
/// out-of-cell users get `Σ_{i∈G_b} Tr(H_u W_i) ≤ θ_{b,u}`.
/// Only `csi` (the rows `h[b][·]`) is read.
pub fn build_subproblem(
    csi: &LocalCsi,
    theta: &InterferenceAllocation,
    config: &SystemConfig,
) -> Subproblem {
    let b = csi.bs;
    let groups = config.groups_of_bs(b);
    let mut problem = SdpProblem::new(vec![config.num_antennas; groups.len()]);
    let mut sinr_rows = Vec::new();
    for (i, &g) in groups.iter().enumerate() {
        for u in config.users_of_group(g) {
            let gamma = config.sinr_target[u];
            let gram = csi.gram(u);
            let terms = (0..groups.len())
                .map(|k| {
                    if k == i {
                        (k, gram.clone())
                    } else {
                        (k, &gram * C64::new(-gamma, 0.0))
                    }
                })
                .collect();
            let rhs = gamma * (config.noise_var[u] + theta.incoming(config, u));
            let row = problem
                .add_constraint(terms, Sense::Geq, rhs)
                .expect("Hermitian rows");
            sinr_rows.push((u, row));
        }
    }
    let mut cap_rows = Vec::new();
    for u in config.out_of_cell_users(b) {
        let gram = csi.gram(u);
        let terms = (0..groups.len()).map(|k| (k, gram.clone())).collect();
        let row = problem
            .add_constraint(terms, Sense::Leq, theta.get(b, u))
            .expect("Hermitian rows");
        cap_rows.push((u, row));
    }
    Subproblem {
        bs: b,
        problem,
        groups,
        sinr_rows,
        cap_rows,
        basis: None,
    }
}

/// Orthonormal basis of the common null space of `h[b][u]ᴴ` over the
/// out-of-cell users.
pub fn nulling_basis(csi: &LocalCsi, config: &SystemConfig) -> DMatrix<C64> {
    let a = config.num_antennas;
    let mut gram = DMatrix::<C64>::zeros(a, a);
    for u in config.out_of_cell_users(csi.bs) {
        gram += csi.gram(u);
    }
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..a)
        .filter(|&j| eig.eigenvalues[j] <= 1e-10 * top.max(1.0))
        .collect();
    DMatrix::from_fn(a, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

/// Subproblem with `θ = 0` imposed structurally: `W_g = N X_g Nᴴ` with `N`
/// spanning the null space of every out-of-cell channel.
pub fn build_nulling_subproblem(csi: &LocalCsi, config: &SystemConfig) -> Subproblem {
    let b = csi.bs;
    let basis = nulling_basis(csi, config);
    let d = basis.ncols();
    let groups = config.groups_of_bs(b);
    let mut problem = SdpProblem::new(vec![d; groups.len()]);
    let mut sinr_rows = Vec::new();
    for (i, &g) in groups.iter().enumerate() {
        for u in config.users_of_group(g) {
            let gamma = config.sinr_target[u];
            let reduced: DVector<C64> = basis.adjoint() * &csi.h[u];
            let gram = &reduced * reduced.adjoint();
            let terms = (0..groups.len())
                .map(|k| {
                    if k == i {
                        (k, gram.clone())
                    } else {
                        (k, &gram * C64::new(-gamma, 0.0))
                    }
                })
                .collect();
            let row = problem
                .add_constraint(terms, Sense::Geq, gamma * config.noise_var[u])
                .expect("Hermitian rows");
            sinr_rows.push((u, row));
        }
    }
    Subproblem {
        bs: b,
        problem,
        groups,
        sinr_rows,
        cap_rows: Vec::new(),
        basis: Some(basis),
    }
}

/// Reads `λ_u = γ_u · (SINR-row multiplier)` and `μ_{b,u} = cap-row
/// multiplier` from an optimal subproblem solution.
pub fn extract_sensitivities(
    solution: &SdpSolution,
    sub: &Subproblem,
    config: &SystemConfig,
) -> Result<SensitivityBundle> {
    if !solution.is_optimal() {
        return Err(BeamError::NonOptimalSolution);
    }
    Ok(SensitivityBundle {
        bs: sub.bs,
        lambda: sub
            .sinr_rows
            .iter()
            .map(|&(u, row)| (u, config.sinr_target[u] * solution.duals[row].max(0.0)))
            .collect(),
        mu: sub
            .cap_rows
            .iter()
            .map(|&(u, row)| (u, solution.duals[row].max(0.0)))
            .collect(),
    })
}

/// `s_{b,u} = λ_u - μ_{b,u}` for every cap pair, in `theta.pairs()` order.
pub fn subgradient(
    theta: &InterferenceAllocation,
    bundles: &[SensitivityBundle],
) -> Vec<((usize, usize), f64)> {
    let mut lambda = vec![0.0; theta.num_users];
    let mut mu = vec![0.0; theta.num_bs * theta.num_users];
    for bundle in bundles {
        for &(u, l) in &bundle.lambda {
            lambda[u] = l;
        }
        for &(u, m) in &bundle.mu {
            mu[bundle.bs * theta.num_users + u] = m;
        }
    }
    theta
        .pairs()
        .map(|(b, u)| ((b, u), lambda[u] - mu[b * theta.num_users + u]))
        .collect()
}

/// Projected subgradient step `θ' = max(θ - σ s, θ_floor)`.
pub fn master_update(
    theta: &InterferenceAllocation,
    bundles: &[SensitivityBundle],
    step: f64,
    theta_floor: f64,
) -> InterferenceAllocation {
    master_update_scaled(theta, bundles, &vec![step; theta.len()], theta_floor)
}

/// Projected step with one step size per pair, in `theta.pairs()` order.
pub fn master_update_scaled(
    theta: &InterferenceAllocation,
    bundles: &[SensitivityBundle],
    steps: &[f64],
    theta_floor: f64,
) -> InterferenceAllocation {
    let mut next = theta.clone();
    for (((b, u), s), step) in subgradient(theta, bundles).into_iter().zip(steps) {
        next.set(b, u, (theta.get(b, u) - step * s).max(theta_floor));
    }
    next
}

/// Common-cap variant: every pair moves by the summed subgradient.
pub fn master_update_common(
    theta: &InterferenceAllocation,
    bundles: &[SensitivityBundle],
    step: f64,
    theta_floor: f64,
) -> InterferenceAllocation {
    let total: f64 = subgradient(theta, bundles).iter().map(|(_, s)| s).sum();
    let current = theta.pairs().next().map_or(0.0, |(b, u)| theta.get(b, u));
    let mut next = theta.clone();
    let value = (current - step * total).max(theta_floor);
    for (b, u) in theta.pairs().collect::<Vec<_>>() {
        next.set(b, u, value);
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalingMode {
    /// Full CSI exchange: `2AU(B-1)B` real scalars.
    Centralized,
    /// Dual exchange per subgradient round: `2B(B-1)(U/B)` real scalars.
    DistributedPerRound,
}

/// Closed-form backhaul load under equal per-cell user counts.
pub fn signaling_load(
    num_bs: usize,
    num_users: usize,
    num_antennas: usize,
    mode: SignalingMode,
) -> Result<usize> {
    if num_bs == 0 || !num_users.is_multiple_of(num_bs) {
        return Err(BeamError::UnequalCellLoad {
            users: num_users,
            bs: num_bs,
        });
    }
    Ok(match mode {
        SignalingMode::Centralized => 2 * num_antennas * num_users * (num_bs - 1) * num_bs,
        SignalingMode::DistributedPerRound => 2 * num_bs * (num_bs - 1) * (num_users / num_bs),
    })
}

pub fn signaling_load_for(config: &SystemConfig, mode: SignalingMode) -> Result<usize> {
    signaling_load(config.num_bs, config.num_users(), config.num_antennas, mode)
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub theta: InterferenceAllocation,
    pub per_bs_objective: Vec<f64>,
    /// `Σ_b f*_b` at this round's caps.
    pub sum_power: f64,
    /// Relative ∞-norm change of the caps produced by this round's update.
    pub theta_change: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone)]
pub struct DistributedResult {
    pub trace: Vec<RoundRecord>,
    pub theta: InterferenceAllocation,
    pub cov: CovarianceSet,
    pub per_bs_objective: Vec<f64>,
    /// `Σ_b f*_b` at the final caps.
    pub relaxed_power: f64,
    pub beams: BeamformerSet,
    pub achieved_power: f64,
    pub backhaul: BackhaulLog,
    pub rounds_used: usize,
    pub converged: bool,
    pub bs_rank_one: Vec<bool>,
    pub all_rank_one: bool,
    pub per_group_rank: Vec<usize>,
    pub candidate: Option<usize>,
}

struct RoundSolve {
    subs: Vec<Subproblem>,
    solutions: Vec<SdpSolution>,
}

fn solve_round(
    csis: &[LocalCsi],
    theta: &InterferenceAllocation,
    config: &SystemConfig,
    nulling: bool,
    solver: &SolverOptions,
    round: usize,
) -> std::result::Result<RoundSolve, (usize, BeamError)> {
    let results: Vec<(Subproblem, SdpSolution)> = csis
        .par_iter()
        .map(|csi| {
            let sub = if nulling {
                build_nulling_subproblem(csi, config)
            } else {
                build_subproblem(csi, theta, config)
            };
            let sol = solve_sdp(&sub.problem, solver);
            (sub, sol)
        })
        .collect();
    let mut subs = Vec::with_capacity(results.len());
    let mut solutions = Vec::with_capacity(results.len());
    for (sub, sol) in results {
        if let Some(e) = status_error(
            &sol,
            &format!("subproblem at BS {} in round {round}", sub.bs),
        ) {
            return Err((sub.bs, e));
        }
        subs.push(sub);
        solutions.push(sol);
    }
    Ok(RoundSolve { subs, solutions })
}

fn exchange_sensitivities(
    log: &mut BackhaulLog,
    round: usize,
    bundles: &[SensitivityBundle],
    config: &SystemConfig,
) {
    for bundle in bundles {
        for &(u, l) in &bundle.lambda {
            for j in (0..config.num_bs).filter(|&j| j != bundle.bs) {
                log.record(round, bundle.bs, j, MessageKind::SinrDual, Some(u), l);
            }
        }
        for &(u, m) in &bundle.mu {
            log.record(
                round,
                bundle.bs,
                config.serving_bs(u),
                MessageKind::CapDual,
                Some(u),
                m,
            );
        }
    }
    log.close_round(round);
}

/// Per-BS power LP over extracted directions, keeping each BS's own
/// directions when its LP fails. Needs only local CSI and the caps.
fn polish_locally(
    mut beams: BeamformerSet,
    csis: &[LocalCsi],
    theta: &InterferenceAllocation,
    config: &SystemConfig,
    enforce_caps: bool,
    opts: &DistributedOptions,
) -> BeamformerSet {
    for csi in csis {
        let groups = config.groups_of_bs(csi.bs);
        let dirs: Vec<DVector<C64>> = groups.iter().map(|&g| beams.w[g].clone()).collect();
        let out = power_opt_distributed(
            &dirs,
            theta,
            csi,
            config,
            enforce_caps,
            opts.randomization.feasibility_tol,
            &SolverOptions {
                tolerance: opts.solver.tolerance.min(POLISH_TOLERANCE),
                ..opts.solver
            },
        );
        if out.feasible {
            for (&g, w) in groups.iter().zip(out.beams) {
                beams.w[g] = w;
            }
        }
    }
    beams
}

/// Distributed multicast beamforming.
pub fn run_distributed(
    channels: &ChannelSet,
    config: &SystemConfig,
    opts: &DistributedOptions,
) -> Result<DistributedResult> {
    config.validate()?;
    channels.check_against(config)?;
    let schedule = &opts.schedule;
    if schedule.theta_floor.is_nan() || schedule.theta_floor <= 0.0 {
        return Err(BeamError::InvalidConfig(
            "theta_floor must be positive".into(),
        ));
    }
    let csis: Vec<LocalCsi> = (0..config.num_bs).map(|b| channels.local(b)).collect();
    let nulling = opts.policy == InterferencePolicy::Nulling;
    let iterative = matches!(
        opts.policy,
        InterferencePolicy::Optimized | InterferencePolicy::Common
    );

    let mut theta = match opts.policy {
        InterferencePolicy::Optimized => InterferenceAllocation::noise_scaled(config),
        InterferencePolicy::Common => {
            let t0 = InterferenceAllocation::noise_scaled(config);
            InterferenceAllocation::uniform(config, t0.mean())
        }
        InterferencePolicy::Fixed(c) => InterferenceAllocation::uniform(config, c),
        InterferencePolicy::Nulling => InterferenceAllocation::uniform(config, 0.0),
    };
    let base_step = schedule.base_step(&theta);
    let mut memory = vec![0.0; theta.len().max(1)];
    let mut log = BackhaulLog::new();
    let mut trace: Vec<RoundRecord> = Vec::new();
    let mut converged = !iterative;

    let mut current = solve_round(&csis, &theta, config, nulling, &opts.solver, 0).map_err(
        |(bs, e)| match e {
            BeamError::Infeasible(_) | BeamError::NumericalFailure(_) if iterative => {
                BeamError::SubproblemInfeasible {
                    bs,
                    round: 0,
                    backtracks: 0,
                }
            }
            other => other,
        },
    )?;
    let mut backtracks_used = 0;
    let mut round = 0;
    loop {
        let per_bs_objective: Vec<f64> = current.solutions.iter().map(|s| s.objective).collect();
        let sum_power = per_bs_objective.iter().sum();
        if !iterative {
            trace.push(RoundRecord {
                round,
                theta: theta.clone(),
                per_bs_objective,
                sum_power,
                theta_change: 0.0,
                backtracks: 0,
            });
            break;
        }

        let bundles: Vec<SensitivityBundle> = current
            .solutions
            .iter()
            .zip(&current.subs)
            .map(|(sol, sub)| extract_sensitivities(sol, sub, config))
            .collect::<Result<_>>()?;
        exchange_sensitivities(&mut log, round, &bundles, config);

        let sub_grad = subgradient(&theta, &bundles);
        let steps = match opts.policy {
            InterferencePolicy::Common => {
                let total: f64 = sub_grad.iter().map(|(_, s)| s).sum();
                let current = sub_grad
                    .first()
                    .map_or(0.0, |((b, u), _)| theta.get(*b, *u));
                schedule.step_sizes(round, base_step, &[current], &[total], &mut memory[..1])
            }
            _ => {
                let values: Vec<f64> = sub_grad
                    .iter()
                    .map(|((b, u), _)| theta.get(*b, *u))
                    .collect();
                let s: Vec<f64> = sub_grad.iter().map(|(_, s)| *s).collect();
                schedule.step_sizes(round, base_step, &values, &s, &mut memory)
            }
        };
        let update = |factor: f64| match opts.policy {
            InterferencePolicy::Common => {
                master_update_common(&theta, &bundles, factor * steps[0], schedule.theta_floor)
            }
            _ => {
                let scaled: Vec<f64> = steps.iter().map(|v| factor * v).collect();
                master_update_scaled(&theta, &bundles, &scaled, schedule.theta_floor)
            }
        };
        let mut next_theta = update(1.0);
        let theta_change = theta.relative_change(&next_theta);
        trace.push(RoundRecord {
            round,
            theta: theta.clone(),
            per_bs_objective,
            sum_power,
            theta_change,
            backtracks: backtracks_used,
        });
        if theta_change <= schedule.convergence_tol {
            converged = true;
            break;
        }
        if round + 1 >= schedule.max_rounds {
            break;
        }

        // Next round's subproblems; halve the step while any is infeasible.
        let mut attempt = 0;
        let next = loop {
            match solve_round(&csis, &next_theta, config, false, &opts.solver, round + 1) {
                Ok(solve) => break solve,
                Err((bs, _)) => {
                    attempt += 1;
                    if attempt > schedule.max_backtracks {
                        return Err(BeamError::SubproblemInfeasible {
                            bs,
                            round: round + 1,
                            backtracks: attempt - 1,
                        });
                    }
                    next_theta = update(0.5f64.powi(attempt as i32));
                }
            }
        };
        backtracks_used = attempt;
        theta = next_theta;
        current = next;
        round += 1;
    }
    let rounds_used = trace.len();

    // Rank feedback: one bit from every BS to every other BS.
    let mut cov = CovarianceSet {
        w: vec![DMatrix::zeros(config.num_antennas, config.num_antennas); config.num_groups()],
    };
    let mut per_group_rank = vec![0; config.num_groups()];
    let mut bs_rank_one = vec![true; config.num_bs];
    for (sub, sol) in current.subs.iter().zip(&current.solutions) {
        for (&g, w) in sub.groups.iter().zip(sub.covariances(sol)) {
            per_group_rank[g] = check_rank(&w, opts.eps_rank);
            bs_rank_one[sub.bs] &= per_group_rank[g] <= 1;
            cov.w[g] = w;
        }
    }
    let feedback_round = if iterative { rounds_used } else { 0 };
    if config.num_bs > 1 {
        for (b, &rank_one) in bs_rank_one.iter().enumerate() {
            for j in (0..config.num_bs).filter(|&j| j != b) {
                log.record(
                    feedback_round,
                    b,
                    j,
                    MessageKind::RankBit,
                    None,
                    f64::from(u8::from(rank_one)),
                );
            }
        }
        log.close_round(feedback_round);
    }
    let all_rank_one = bs_rank_one.iter().all(|&r| r);
    let per_bs_objective: Vec<f64> = current.solutions.iter().map(|s| s.objective).collect();
    let relaxed_power = per_bs_objective.iter().sum();

    let (beams, candidate) = if all_rank_one {
        let beams = BeamformerSet {
            w: cov
                .w
                .iter()
                .map(|w| {
                    principal_component(w).unwrap_or_else(|_| DVector::zeros(config.num_antennas))
                })
                .collect(),
        };
        (
            polish_locally(beams, &csis, &theta, config, !nulling, opts),
            None,
        )
    } else {
        let best = randomize_distributed(
            &cov,
            &csis,
            &theta,
            config,
            !nulling,
            &opts.randomization,
            &opts.solver,
            &mut log,
            feedback_round + 1,
        )?;
        (best.beams, Some(best.index))
    };
    let achieved_power = beams.sum_power();

    Ok(DistributedResult {
        trace,
        theta,
        cov,
        per_bs_objective,
        relaxed_power,
        beams,
        achieved_power,
        backhaul: log,
        rounds_used,
        converged,
        bs_rank_one,
        all_rank_one,
        per_group_rank,
        candidate,
    })
}

/// Worst relative cap excess `max (I_{b,u} - θ_{b,u}) / max(θ_{b,u}, floor)`
/// of a beamformer set, clipped at zero.
pub fn worst_cap_violation(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    theta: &InterferenceAllocation,
    config: &SystemConfig,
    floor: f64,
) -> f64 {
    theta
        .pairs()
        .map(|(b, u)| {
            let leak: f64 = config
                .groups_of_bs(b)
                .iter()
                .map(|&g| channels.get(b, u).dotc(&beams.w[g]).norm_sqr())
                .sum();
            let cap = theta.get(b, u);
            ((leak - cap) / cap.max(floor)).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Largest received power from any other cell's beam at any user.
pub fn max_cross_cell_interference(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    config: &SystemConfig,
) -> f64 {
    let mut worst: f64 = 0.0;
    for u in 0..config.num_users() {
        for (g, w) in beams.w.iter().enumerate() {
            let b = config.group_owner[g];
            if b != config.serving_bs(u) {
                worst = worst.max(channels.get(b, u).dotc(w).norm_sqr());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_channels;

    fn cfg_two_cells() -> SystemConfig {
        SystemConfig::symmetric(2, 2, 2, 3, 0.0).unwrap()
    }

    #[test]
    fn subproblem_counting() {
        let cfg = cfg_two_cells();
        let ch = generate_channels(&cfg, 4);
        let theta = InterferenceAllocation::noise_scaled(&cfg);
        let sub = build_subproblem(&ch.local(0), &theta, &cfg);
        assert_eq!(sub.sinr_rows.len(), 1);
        assert_eq!(sub.cap_rows.len(), 1);
        assert_eq!(sub.problem.block_dims().len(), 1);
    }

    #[test]
    fn incoming_caps_shift_only_sinr_rhs() {
        let cfg = SystemConfig::symmetric(2, 4, 8, 4, 3.0).unwrap();
        let ch = generate_channels(&cfg, 4);
        let theta = InterferenceAllocation::noise_scaled(&cfg);
        let mut doubled = theta.clone();
        for (b, u) in theta.pairs().collect::<Vec<_>>() {
            if b == 1 {
                doubled.set(b, u, 2.0 * theta.get(b, u));
            }
        }
        let a = build_subproblem(&ch.local(0), &theta, &cfg);
        let b = build_subproblem(&ch.local(0), &doubled, &cfg);
        for &(u, row) in &a.sinr_rows {
            let g = cfg.sinr_target[u];
            let expected = g * (cfg.noise_var[u] + 2.0 * theta.get(1, u));
            assert!((b.problem.constraints()[row].rhs - expected).abs() < 1e-12);
        }
        for &(_, row) in &a.cap_rows {
            assert_eq!(
                a.problem.constraints()[row].rhs,
                b.problem.constraints()[row].rhs
            );
        }
    }

    #[test]
    fn master_update_examples() {
        let cfg = cfg_two_cells();
        let theta = InterferenceAllocation::uniform(&cfg, 1.0);
        let bundles = vec![
            SensitivityBundle {
                bs: 0,
                lambda: vec![(0, 0.3)],
                mu: vec![(1, 0.1)],
            },
            SensitivityBundle {
                bs: 1,
                lambda: vec![(1, 0.3)],
                mu: vec![(0, 0.1)],
            },
        ];
        let next = master_update(&theta, &bundles, 0.5, 1e-10);
        assert!((next.get(0, 1) - 0.9).abs() < 1e-15);
        assert!((next.get(1, 0) - 0.9).abs() < 1e-15);

        let equal = vec![
            SensitivityBundle {
                bs: 0,
                lambda: vec![(0, 0.2)],
                mu: vec![(1, 0.2)],
            },
            SensitivityBundle {
                bs: 1,
                lambda: vec![(1, 0.2)],
                mu: vec![(0, 0.2)],
            },
        ];
        assert_eq!(master_update(&theta, &equal, 0.5, 1e-10), theta);

        let small = InterferenceAllocation::uniform(&cfg, 0.1);
        let steep = vec![
            SensitivityBundle {
                bs: 0,
                lambda: vec![(0, 10.0)],
                mu: vec![(1, 0.0)],
            },
            SensitivityBundle {
                bs: 1,
                lambda: vec![(1, 10.0)],
                mu: vec![(0, 0.0)],
            },
        ];
        let next = master_update(&small, &steep, 0.5, 1e-10);
        assert_eq!(next.get(0, 1), 1e-10);
    }

    #[test]
    fn resilient_steps_grow_and_halve() {
        let sched = SubgradientSchedule::default();
        let mut memory = vec![0.0; 2];
        let theta = [1.0, 2.0];
        let s = [0.5, -4.0];
        let steps = sched.step_sizes(0, 0.2, &theta, &s, &mut memory);
        // θ - σ s = θ e^{-δ sign s}
        assert!((theta[0] - steps[0] * s[0] - (-0.2f64).exp()).abs() < 1e-15);
        assert!((theta[1] - steps[1] * s[1] - 2.0 * 0.2f64.exp()).abs() < 1e-14);
        assert_eq!(memory, vec![0.2, -0.2]);

        sched.step_sizes(1, 0.2, &theta, &[1.0, 1.0], &mut memory);
        assert!((memory[0] - 0.24).abs() < 1e-15);
        assert!((memory[1] - 0.1).abs() < 1e-15);

        let mut big = vec![0.9];
        sched.step_sizes(2, 0.2, &[1.0], &[1.0], &mut big);
        assert_eq!(big[0], MAX_RESILIENT_STEP);

        let mut untouched = vec![0.3];
        let zero = sched.step_sizes(3, 0.2, &[1.0], &[0.0], &mut untouched);
        assert_eq!((zero[0], untouched[0]), (0.0, 0.3));
    }

    #[test]
    fn diminishing_and_constant_steps() {
        let theta0 = InterferenceAllocation::uniform(&cfg_two_cells(), 2.0);
        let dim = SubgradientSchedule {
            rule: StepRule::Diminishing,
            ..Default::default()
        };
        let base = dim.base_step(&theta0);
        assert!((base - 0.2).abs() < 1e-15);
        let steps = dim.step_sizes(3, base, &[1.0], &[1.0], &mut [0.0]);
        assert!((steps[0] - 0.1).abs() < 1e-15);
        let con = SubgradientSchedule {
            rule: StepRule::Constant,
            initial_step: Some(0.3),
            ..Default::default()
        };
        assert_eq!(
            con.step_sizes(7, con.base_step(&theta0), &[1.0], &[1.0], &mut [0.0]),
            vec![0.3]
        );
    }

    #[test]
    fn table_signaling_loads() {
        use SignalingMode::*;
        assert_eq!(signaling_load(2, 8, 8, Centralized).unwrap(), 256);
        assert_eq!(signaling_load(2, 8, 8, DistributedPerRound).unwrap(), 16);
        assert_eq!(signaling_load(3, 12, 12, Centralized).unwrap(), 1728);
        assert_eq!(signaling_load(3, 12, 12, DistributedPerRound).unwrap(), 48);
        assert_eq!(signaling_load(4, 16, 16, Centralized).unwrap(), 6144);
        assert_eq!(signaling_load(4, 16, 16, DistributedPerRound).unwrap(), 96);
        assert!(signaling_load(3, 8, 8, DistributedPerRound).is_err());
    }

    #[test]
    fn huge_cap_has_zero_multiplier() {
        let cfg = cfg_two_cells();
        let ch = generate_channels(&cfg, 9);
        let theta = InterferenceAllocation::uniform(&cfg, 1e6);
        let sub = build_subproblem(&ch.local(0), &theta, &cfg);
        let sol = solve_sdp(&sub.problem, &SolverOptions::default());
        let s = extract_sensitivities(&sol, &sub, &cfg).unwrap();
        assert!(s.mu[0].1.abs() < 1e-9);
        assert!(s.lambda[0].1 > 0.0);
    }

    #[test]
    fn non_optimal_solution_rejected() {
        let cfg = cfg_two_cells();
        let ch = generate_channels(&cfg, 9);
        let theta = InterferenceAllocation::uniform(&cfg, 1.0);
        let sub = build_subproblem(&ch.local(0), &theta, &cfg);
        let mut sol = solve_sdp(&sub.problem, &SolverOptions::default());
        sol.status = conic::SolveStatus::NumericalFailure;
        assert_eq!(
            extract_sensitivities(&sol, &sub, &cfg),
            Err(BeamError::NonOptimalSolution)
        );
    }

    #[test]
    fn nulling_basis_is_orthogonal_to_cross_channels() {
        let cfg = SystemConfig::symmetric(2, 2, 4, 4, 0.0).unwrap();
        let ch = generate_channels(&cfg, 2);
        let csi = ch.local(0);
        let n = nulling_basis(&csi, &cfg);
        assert_eq!(n.ncols(), 2);
        for u in cfg.out_of_cell_users(0) {
            assert!((n.adjoint() * &csi.h[u]).norm() < 1e-10);
        }
    }
}
