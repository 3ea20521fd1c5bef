//! Gaussian randomization: draw rank-one candidates from the relaxed
//! covariances and rescale their powers with an LP.

use conic::{solve_lp, LpProblem, Sense, SolverOptions};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backhaul::{BackhaulLog, MessageKind};
use crate::distributed::InterferenceAllocation;
use crate::error::{BeamError, Result};
use crate::model::{
    worst_sinr_violation, BeamformerSet, ChannelSet, CovarianceSet, LocalCsi, SystemConfig,
};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationOptions {
    pub num_candidates: usize,
    pub seed: u64,
    /// Relative SINR (and cap) slack accepted when re-validating a candidate.
    pub feasibility_tol: f64,
}

impl Default for RandomizationOptions {
    fn default() -> Self {
        Self {
            num_candidates: 100,
            seed: 0,
            feasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub index: usize,
    /// Unscaled draws `ŵ_g`.
    pub candidate: BeamformerSet,
    pub powers: Vec<f64>,
    /// `w_g = √p_g ŵ_g`.
    pub beams: BeamformerSet,
    pub feasible: bool,
    pub power: f64,
}

/// `F` with `F Fᴴ = W`, negative eigenvalues clipped at zero.
pub fn covariance_factor(w: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(w.clone());
    let mut f = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

fn standard_complex_normal(dim: usize, rng: &mut impl Rng) -> DVector<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// `ŵ = F z` with `z ~ CN(0, I)`.
pub fn draw_from_factor(factor: &DMatrix<C64>, rng: &mut impl Rng) -> DVector<C64> {
    factor * standard_complex_normal(factor.ncols(), rng)
}

/// One draw `ŵ_g ~ CN(0, W_g)` per group, in group order from one stream.
pub fn draw_candidate(cov: &CovarianceSet, rng: &mut impl Rng) -> BeamformerSet {
    BeamformerSet {
        w: cov
            .w
            .iter()
            .map(|w| draw_from_factor(&covariance_factor(w), rng))
            .collect(),
    }
}

/// Stream for group `group` of candidate `candidate`. Any BS that knows the
/// shared seed regenerates the same draw for its own groups.
pub fn candidate_rng(seed: u64, candidate: usize, group: usize, num_groups: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((candidate * num_groups + group) as u64);
    rng
}

fn scale_beams(candidate: &BeamformerSet, powers: &[f64]) -> BeamformerSet {
    BeamformerSet {
        w: candidate
            .w
            .iter()
            .zip(powers)
            .map(|(w, p)| w * C64::new(p.max(0.0).sqrt(), 0.0))
            .collect(),
    }
}

/// Power rescaling of fixed candidate directions for the full network:
/// `p_g |h_{b,u}ᴴŵ_g|² - γ_u Σ_{k≠g} p_k |h_{j,u}ᴴŵ_k|² ≥ γ_u σ_u²`, `p ≥ 0`.
pub fn power_opt_centralized(
    candidate: &BeamformerSet,
    channels: &ChannelSet,
    config: &SystemConfig,
    tol: f64,
    solver: &SolverOptions,
) -> CandidateOutcome {
    let g_count = config.num_groups();
    let mut lp = LpProblem::min_sum(g_count);
    for u in 0..config.num_users() {
        let own = config.user_group[u];
        let gamma = config.sinr_target[u];
        let coeffs = (0..g_count)
            .map(|k| {
                let gain = channels
                    .get(config.group_owner[k], u)
                    .dotc(&candidate.w[k])
                    .norm_sqr();
                if k == own {
                    gain
                } else {
                    -gamma * gain
                }
            })
            .collect();
        lp.add_constraint(coeffs, Sense::Geq, gamma * config.noise_var[u])
            .expect("finite coefficients");
    }
    let sol = solve_lp(&lp, solver);
    let powers: Vec<f64> = sol.x.iter().map(|p| p.max(0.0)).collect();
    let beams = scale_beams(candidate, &powers);
    let feasible = sol.is_optimal() && worst_sinr_violation(channels, &beams, config) <= tol;
    CandidateOutcome {
        index: 0,
        candidate: candidate.clone(),
        power: beams.sum_power(),
        powers,
        beams,
        feasible,
    }
}

/// Result of the per-BS power LP.
#[derive(Debug, Clone)]
pub struct LocalPowerOutcome {
    pub powers: Vec<f64>,
    pub beams: Vec<DVector<C64>>,
    pub feasible: bool,
    pub power: f64,
}

/// Power rescaling at BS `csi.bs` with inter-cell interference fixed by
/// `theta`: incoming caps enter the SINR right-hand side and outgoing caps
/// bound `Σ_i p_i |h_{b,u}ᴴŵ_i|²`. `candidate[i]` belongs to
/// `config.groups_of_bs(b)[i]`. Uses only local CSI.
pub fn power_opt_distributed(
    candidate: &[DVector<C64>],
    theta: &InterferenceAllocation,
    csi: &LocalCsi,
    config: &SystemConfig,
    enforce_caps: bool,
    tol: f64,
    solver: &SolverOptions,
) -> LocalPowerOutcome {
    let b = csi.bs;
    let groups = config.groups_of_bs(b);
    let n = groups.len();
    let mut lp = LpProblem::min_sum(n);
    let mut sinr_rows = Vec::new();
    for (i, &g) in groups.iter().enumerate() {
        for u in config.users_of_group(g) {
            let gamma = config.sinr_target[u];
            let coeffs = (0..n)
                .map(|k| {
                    let gain = csi.gain(u, &candidate[k]);
                    if k == i {
                        gain
                    } else {
                        -gamma * gain
                    }
                })
                .collect::<Vec<_>>();
            let rhs = gamma * (config.noise_var[u] + theta.incoming(config, u));
            lp.add_constraint(coeffs.clone(), Sense::Geq, rhs)
                .expect("finite coefficients");
            sinr_rows.push((coeffs, rhs));
        }
    }
    let mut cap_rows = Vec::new();
    if enforce_caps {
        for u in config.out_of_cell_users(b) {
            let coeffs: Vec<f64> = candidate.iter().map(|w| csi.gain(u, w)).collect();
            let cap = theta.get(b, u);
            lp.add_constraint(coeffs.clone(), Sense::Leq, cap)
                .expect("finite coefficients");
            cap_rows.push((coeffs, cap));
        }
    }
    let sol = solve_lp(&lp, solver);
    let powers: Vec<f64> = sol.x.iter().map(|p| p.max(0.0)).collect();
    let dot = |c: &[f64]| c.iter().zip(&powers).map(|(a, p)| a * p).sum::<f64>();
    let sinr_ok = sinr_rows.iter().all(|(c, rhs)| dot(c) >= rhs * (1.0 - tol));
    let caps_ok = cap_rows
        .iter()
        .all(|(c, cap)| dot(c) <= cap * (1.0 + tol) + 1e-12);
    let beams: Vec<DVector<C64>> = candidate
        .iter()
        .zip(&powers)
        .map(|(w, p)| w * C64::new(p.sqrt(), 0.0))
        .collect();
    LocalPowerOutcome {
        power: beams.iter().map(|w| w.norm_squared()).sum(),
        feasible: sol.is_optimal() && sinr_ok && caps_ok,
        powers,
        beams,
    }
}

fn factors(cov: &CovarianceSet) -> Vec<DMatrix<C64>> {
    cov.w.iter().map(covariance_factor).collect()
}

/// Best of `opts.num_candidates` rescaled candidates; ties go to the lowest
/// index.
pub fn randomize_centralized(
    cov: &CovarianceSet,
    channels: &ChannelSet,
    config: &SystemConfig,
    opts: &RandomizationOptions,
    solver: &SolverOptions,
) -> Result<CandidateOutcome> {
    let g_count = config.num_groups();
    let fs = factors(cov);
    let mut best: Option<CandidateOutcome> = None;
    for i in 0..opts.num_candidates {
        let candidate = BeamformerSet {
            w: (0..g_count)
                .map(|g| draw_from_factor(&fs[g], &mut candidate_rng(opts.seed, i, g, g_count)))
                .collect(),
        };
        let mut outcome =
            power_opt_centralized(&candidate, channels, config, opts.feasibility_tol, solver);
        outcome.index = i;
        if outcome.feasible && best.as_ref().is_none_or(|b| outcome.power < b.power) {
            best = Some(outcome);
        }
    }
    best.ok_or(BeamError::RandomizationExhausted {
        candidates: opts.num_candidates,
    })
}

/// Distributed randomization: every BS draws its own groups' candidates
/// from the shared seed, solves its local power LP, and shares its
/// per-candidate power (`B(B-1)` scalars per candidate). All BSs then pick
/// the same candidate index with minimal network power.
#[allow(clippy::too_many_arguments)]
pub fn randomize_distributed(
    cov: &CovarianceSet,
    csis: &[LocalCsi],
    theta: &InterferenceAllocation,
    config: &SystemConfig,
    enforce_caps: bool,
    opts: &RandomizationOptions,
    solver: &SolverOptions,
    log: &mut BackhaulLog,
    round: usize,
) -> Result<CandidateOutcome> {
    let g_count = config.num_groups();
    let fs = factors(cov);
    let mut best: Option<CandidateOutcome> = None;
    for i in 0..opts.num_candidates {
        let mut candidate = BeamformerSet::zeros(g_count, config.num_antennas);
        let mut powers = vec![0.0; g_count];
        let mut scaled = BeamformerSet::zeros(g_count, config.num_antennas);
        let mut per_bs_power = Vec::with_capacity(config.num_bs);
        for csi in csis {
            let groups = config.groups_of_bs(csi.bs);
            let local: Vec<DVector<C64>> = groups
                .iter()
                .map(|&g| draw_from_factor(&fs[g], &mut candidate_rng(opts.seed, i, g, g_count)))
                .collect();
            let out = power_opt_distributed(
                &local,
                theta,
                csi,
                config,
                enforce_caps,
                opts.feasibility_tol,
                solver,
            );
            for (k, &g) in groups.iter().enumerate() {
                candidate.w[g] = local[k].clone();
                powers[g] = out.powers[k];
                scaled.w[g] = out.beams[k].clone();
            }
            per_bs_power.push(if out.feasible {
                out.power
            } else {
                f64::INFINITY
            });
        }
        for (b, &p) in per_bs_power.iter().enumerate() {
            for j in (0..config.num_bs).filter(|&j| j != b) {
                log.record(round, b, j, MessageKind::RandPower, None, p);
            }
        }
        let total: f64 = per_bs_power.iter().sum();
        if total.is_finite() && best.as_ref().is_none_or(|b| total < b.power) {
            best = Some(CandidateOutcome {
                index: i,
                candidate,
                powers,
                beams: scaled,
                feasible: true,
                power: total,
            });
        }
    }
    log.close_round(round);
    best.ok_or(BeamError::RandomizationExhausted {
        candidates: opts.num_candidates,
    })
}

/// Relative Frobenius distance between the sample covariance of `draws`
/// and `target`.
pub fn empirical_covariance_error(draws: &[DVector<C64>], target: &DMatrix<C64>) -> f64 {
    let n = target.nrows();
    let mut acc = DMatrix::<C64>::zeros(n, n);
    for w in draws {
        acc += w * w.adjoint();
    }
    acc /= C64::new(draws.len() as f64, 0.0);
    (acc - target).norm() / target.norm()
}
