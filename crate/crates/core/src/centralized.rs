//! Centralized semidefinite relaxation with rank check, eigen-extraction
//! and fallback to Gaussian randomization.

use conic::linalg::hermitian_eigenvalues;
use conic::{solve_sdp, SdpProblem, SdpSolution, Sense, SolveStatus, SolverOptions};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{BeamError, Result};
use crate::model::{BeamformerSet, ChannelSet, CovarianceSet, SystemConfig};
use crate::randomization::{power_opt_centralized, randomize_centralized, RandomizationOptions};
use crate::C64;

/// LP accuracy when rescaling extracted rank-one directions; tighter than
/// the SDP so the rescaled power stays within solver slack of the bound.
pub const POLISH_TOLERANCE: f64 = 1e-10;

/// Default relative eigenvalue threshold for rank decisions.
pub const DEFAULT_EPS_RANK: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct CentralizedOptions {
    pub eps_rank: f64,
    pub solver: SolverOptions,
    pub randomization: RandomizationOptions,
}

impl Default for CentralizedOptions {
    fn default() -> Self {
        Self {
            eps_rank: DEFAULT_EPS_RANK,
            solver: SolverOptions::default(),
            randomization: RandomizationOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedResult {
    /// Relaxed optimum.
    pub cov: CovarianceSet,
    /// Relaxed objective; a lower bound on any feasible beamformer power.
    pub lower_bound: f64,
    pub beams: BeamformerSet,
    pub achieved_power: f64,
    pub all_rank_one: bool,
    pub per_group_rank: Vec<usize>,
    /// Index of the randomization candidate used, if any.
    pub candidate: Option<usize>,
}

/// One PSD block per group and one cleared-denominator SINR row per user:
/// `Tr(H_{b,u} W_g) - γ_u Σ_{k≠g} Tr(H_{j(k),u} W_k) ≥ γ_u σ_u²`.
pub fn build_centralized_sdp(channels: &ChannelSet, config: &SystemConfig) -> SdpProblem {
    let a = config.num_antennas;
    let mut problem = SdpProblem::new(vec![a; config.num_groups()]);
    for u in 0..config.num_users() {
        let own = config.user_group[u];
        let gamma = config.sinr_target[u];
        let terms = (0..config.num_groups())
            .map(|k| {
                let gram = channels.gram(config.group_owner[k], u);
                if k == own {
                    (k, gram)
                } else {
                    (k, gram * C64::new(-gamma, 0.0))
                }
            })
            .collect();
        problem
            .add_constraint(terms, Sense::Geq, gamma * config.noise_var[u])
            .expect("channel grams are Hermitian");
    }
    problem
}

/// Number of eigenvalues above `eps_rank · λ_max`; zero for the zero matrix.
pub fn check_rank(w: &DMatrix<C64>, eps_rank: f64) -> usize {
    let ev = hermitian_eigenvalues(w);
    let top = ev.last().copied().unwrap_or(0.0);
    if top.is_nan() || top <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&l| l > eps_rank * top).count()
}

/// `√λ₁ u₁` with the first significant entry made real-positive.
pub fn principal_component(w: &DMatrix<C64>) -> Result<DVector<C64>> {
    let eig = SymmetricEigen::new(w.clone());
    let (idx, &top) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(BeamError::ZeroMatrix)?;
    if top.is_nan() || top <= 0.0 {
        return Err(BeamError::ZeroMatrix);
    }
    let mut v: DVector<C64> = eig.eigenvectors.column(idx).into_owned();
    let peak = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if let Some(lead) = v.iter().find(|c| c.norm() > 1e-8 * peak).copied() {
        let phase = lead.conj() / lead.norm();
        v *= phase;
    }
    Ok(v * C64::new(top.sqrt(), 0.0))
}

/// Principal beamformer of a unit-rank covariance.
pub fn extract_rank_one(w: &DMatrix<C64>, eps_rank: f64) -> Result<DVector<C64>> {
    match check_rank(w, eps_rank) {
        0 => Err(BeamError::ZeroMatrix),
        1 => principal_component(w),
        rank => Err(BeamError::RankNotOne { rank }),
    }
}

pub(crate) fn status_error(solution: &SdpSolution, context: &str) -> Option<BeamError> {
    match solution.status {
        SolveStatus::Optimal => None,
        SolveStatus::Infeasible => Some(BeamError::Infeasible(context.to_string())),
        SolveStatus::NumericalFailure => Some(BeamError::NumericalFailure(format!(
            "{context}: gap {:.2e}, pinf {:.2e}, dinf {:.2e} after {} iterations",
            solution.gap,
            solution.primal_infeasibility,
            solution.dual_infeasibility,
            solution.iterations
        ))),
    }
}

/// Solves the relaxation only.
pub fn solve_relaxation(
    channels: &ChannelSet,
    config: &SystemConfig,
    solver: &SolverOptions,
) -> Result<SdpSolution> {
    config.validate()?;
    channels.check_against(config)?;
    let problem = build_centralized_sdp(channels, config);
    let solution = solve_sdp(&problem, solver);
    match status_error(&solution, "centralized SDR") {
        Some(e) => Err(e),
        None => Ok(solution),
    }
}

/// Centralized multicast beamforming: relax, check ranks, then extract or
/// randomize.
pub fn solve_centralized(
    channels: &ChannelSet,
    config: &SystemConfig,
    opts: &CentralizedOptions,
) -> Result<CentralizedResult> {
    let solution = solve_relaxation(channels, config, &opts.solver)?;
    let cov = CovarianceSet { w: solution.blocks };
    let lower_bound = solution.objective;
    let per_group_rank: Vec<usize> = cov.w.iter().map(|w| check_rank(w, opts.eps_rank)).collect();
    // A zero block is trivially rank-one in the beamforming sense (w = 0).
    let all_rank_one = per_group_rank.iter().all(|&r| r <= 1);

    if all_rank_one {
        let beams = BeamformerSet {
            w: cov
                .w
                .iter()
                .map(|w| {
                    principal_component(w).unwrap_or_else(|_| DVector::zeros(config.num_antennas))
                })
                .collect(),
        };
        // Rescale the extracted directions so that solver slack in the
        // discarded eigenvalues cannot leave a target short.
        let polish_solver = SolverOptions {
            tolerance: opts.solver.tolerance.min(POLISH_TOLERANCE),
            ..opts.solver
        };
        let polished = power_opt_centralized(
            &beams,
            channels,
            config,
            opts.randomization.feasibility_tol,
            &polish_solver,
        );
        let beams = if polished.feasible {
            polished.beams
        } else {
            beams
        };
        let achieved_power = beams.sum_power();
        return Ok(CentralizedResult {
            cov,
            lower_bound,
            beams,
            achieved_power,
            all_rank_one,
            per_group_rank,
            candidate: None,
        });
    }

    let best = randomize_centralized(&cov, channels, config, &opts.randomization, &opts.solver)?;
    Ok(CentralizedResult {
        cov,
        lower_bound,
        achieved_power: best.power,
        beams: best.beams,
        all_rank_one,
        per_group_rank,
        candidate: Some(best.index),
    })
}
