//! Interior-point solver for the two problem classes used by the
//! beamforming crates: semidefinite programs over complex Hermitian PSD
//! blocks with linear inequality rows, and linear programs over the
//! nonnegative orthant. Both report Lagrange multipliers for every row.
//!
//! Complex data is handled natively; no real embedding is exposed.

mod ipm;
pub mod linalg;
mod problem;

use nalgebra::DMatrix;
use thiserror::Error;

pub use nalgebra::Complex;
pub use problem::{
    LpConstraint, LpProblem, LpSolution, SdpConstraint, SdpProblem, SdpSolution, Sense, SolveStatus,
};

use ipm::{row_norm, ConeProgram, Row};

pub type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("constraint {constraint} references unknown block {block}")]
    UnknownBlock { constraint: usize, block: usize },
    #[error(
        "constraint {constraint}, block {block}: expected dimension {expected}, found {found:?}"
    )]
    DimensionMismatch {
        constraint: usize,
        block: usize,
        expected: usize,
        found: (usize, usize),
    },
    #[error("constraint {constraint}, block {block}: coefficient matrix is not Hermitian")]
    NotHermitian { constraint: usize, block: usize },
    #[error("constraint {constraint} has non-finite data")]
    NonFinite { constraint: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Bound on relative duality gap and relative primal/dual residuals.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Slack allowed when validating a Farkas certificate.
    pub infeasibility_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            infeasibility_tolerance: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

/// Rows are scaled to unit norm before solving; `scale[i]` maps the scaled
/// multiplier back to the caller's row. `None` marks rows dropped because
/// they have no coefficients and are trivially satisfied.
struct Standardized {
    program: ConeProgram,
    scale: Vec<Option<(usize, f64)>>,
}

fn sense_sign(sense: Sense) -> f64 {
    match sense {
        Sense::Geq => -1.0,
        Sense::Leq => 1.0,
    }
}

/// Returns `Err(())` when a coefficient-free row can never hold.
fn standardize(
    dims: Vec<usize>,
    mut lp_cost: Vec<f64>,
    raw: Vec<(Row, Sense, f64)>,
) -> Result<Standardized, ()> {
    let mut rows = Vec::with_capacity(raw.len());
    let mut b = Vec::with_capacity(raw.len());
    let mut scale = Vec::with_capacity(raw.len());
    for (mut row, sense, rhs) in raw {
        let norm = row_norm(&row);
        if norm <= 1e-300 {
            let holds = match sense {
                Sense::Geq => rhs <= 0.0,
                Sense::Leq => rhs >= 0.0,
            };
            if !holds {
                return Err(());
            }
            scale.push(None);
            continue;
        }
        let s = 1.0 / norm;
        for (_, a) in row.blocks.iter_mut() {
            *a *= C64::new(s, 0.0);
        }
        for (_, a) in row.lp.iter_mut() {
            *a *= s;
        }
        let slack = lp_cost.len();
        lp_cost.push(0.0);
        row.lp.push((slack, sense_sign(sense)));
        scale.push(Some((rows.len(), s)));
        rows.push(row);
        b.push(rhs * s);
    }
    Ok(Standardized {
        program: ConeProgram {
            dims,
            lp_cost,
            rows,
            b,
        },
        scale,
    })
}

/// Maps scaled standard-form multipliers back to nonnegative per-row duals.
fn unscale_duals(scale: &[Option<(usize, f64)>], senses: &[Sense], y: &[f64]) -> Vec<f64> {
    scale
        .iter()
        .zip(senses)
        .map(|(entry, sense)| match entry {
            None => 0.0,
            Some((i, s)) => {
                let raw = y[*i] * s;
                let oriented = match sense {
                    Sense::Geq => raw,
                    Sense::Leq => -raw,
                };
                oriented.max(0.0)
            }
        })
        .collect()
}

/// Solves `min Σ_k Tr(W_k)` subject to the problem's rows and `W_k ⪰ 0`.
pub fn solve_sdp(problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let dims = problem.block_dims().to_vec();
    let senses: Vec<Sense> = problem.constraints().iter().map(|c| c.sense).collect();
    let raw = problem
        .constraints()
        .iter()
        .map(|c| {
            let row = Row {
                blocks: c.terms.clone(),
                lp: Vec::new(),
            };
            (row, c.sense, c.rhs)
        })
        .collect();
    let zero_blocks = || dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let Ok(std) = standardize(dims.clone(), Vec::new(), raw) else {
        return SdpSolution {
            status: SolveStatus::Infeasible,
            blocks: zero_blocks(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            duals: vec![0.0; senses.len()],
            gap: f64::INFINITY,
            primal_infeasibility: f64::INFINITY,
            dual_infeasibility: f64::INFINITY,
            iterations: 0,
        };
    };
    let out = std.program.solve(opts);
    SdpSolution {
        status: out.status,
        duals: unscale_duals(&std.scale, &senses, &out.y),
        blocks: out.blocks,
        objective: out.pobj,
        dual_objective: out.dobj,
        gap: out.gap,
        primal_infeasibility: out.pinf,
        dual_infeasibility: out.dinf,
        iterations: out.iterations,
    }
}

/// Solves `min costᵀp` subject to the problem's rows and `p ≥ 0`.
///
/// A numerical failure of the direct form (typical when more rows are
/// active at the optimum than there are variables) is retried on the dual
/// LP, whose row multipliers are `p`.
pub fn solve_lp(problem: &LpProblem, opts: &SolverOptions) -> LpSolution {
    let direct = solve_lp_direct(problem, opts);
    if direct.status != SolveStatus::NumericalFailure {
        return direct;
    }
    match solve_lp_via_dual(problem, opts) {
        Some(sol) => sol,
        None => direct,
    }
}

/// `max bᵀy` s.t. `Aᵀy ≤ c` with `y_i = σ_i v_i`, `v ≥ 0`, where `σ_i` is
/// `+1` for `≥` rows and `-1` for `≤` rows. Returns `None` unless the dual
/// solves to optimality.
fn solve_lp_via_dual(problem: &LpProblem, opts: &SolverOptions) -> Option<LpSolution> {
    let n = problem.num_vars();
    let rows = problem.constraints();
    let sign: Vec<f64> = rows.iter().map(|c| -sense_sign(c.sense)).collect();
    let mut dual = LpProblem::with_costs(rows.iter().zip(&sign).map(|(c, s)| -s * c.rhs).collect());
    for j in 0..n {
        let coeffs = rows
            .iter()
            .zip(&sign)
            .map(|(c, s)| s * c.coeffs[j])
            .collect();
        dual.add_constraint(coeffs, Sense::Leq, problem.costs()[j])
            .ok()?;
    }
    let sol = solve_lp_direct(&dual, opts);
    if sol.status != SolveStatus::Optimal {
        return None;
    }
    let x = sol.duals;
    let objective = problem.costs().iter().zip(&x).map(|(c, v)| c * v).sum();
    Some(LpSolution {
        status: SolveStatus::Optimal,
        x,
        objective,
        dual_objective: -sol.objective,
        duals: sol.x.iter().map(|v| v.max(0.0)).collect(),
        gap: sol.gap,
        primal_infeasibility: sol.dual_infeasibility,
        dual_infeasibility: sol.primal_infeasibility,
        iterations: sol.iterations,
    })
}

fn solve_lp_direct(problem: &LpProblem, opts: &SolverOptions) -> LpSolution {
    let n = problem.num_vars();
    let senses: Vec<Sense> = problem.constraints().iter().map(|c| c.sense).collect();
    let raw = problem
        .constraints()
        .iter()
        .map(|c| {
            let lp = c
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(j, a)| (j, *a))
                .collect();
            (
                Row {
                    blocks: Vec::new(),
                    lp,
                },
                c.sense,
                c.rhs,
            )
        })
        .collect();
    let Ok(std) = standardize(Vec::new(), problem.costs().to_vec(), raw) else {
        return LpSolution {
            status: SolveStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            duals: vec![0.0; senses.len()],
            gap: f64::INFINITY,
            primal_infeasibility: f64::INFINITY,
            dual_infeasibility: f64::INFINITY,
            iterations: 0,
        };
    };
    let out = std.program.solve(opts);
    let x = out.x[..n].to_vec();
    let objective = problem.costs().iter().zip(&x).map(|(c, v)| c * v).sum();
    LpSolution {
        status: out.status,
        duals: unscale_duals(&std.scale, &senses, &out.y),
        x,
        objective,
        dual_objective: out.dobj,
        gap: out.gap,
        primal_infeasibility: out.pinf,
        dual_infeasibility: out.dinf,
        iterations: out.iterations,
    }
}

/// Largest `dual_i · |slack_i|` over rows, relative to `1 + |objective|`.
pub fn complementarity_residual(problem: &SdpProblem, solution: &SdpSolution) -> f64 {
    let worst = (0..problem.num_constraints())
        .map(|m| {
            let c = &problem.constraints()[m];
            let slack = problem.constraint_value(m, &solution.blocks) - c.rhs;
            solution.duals[m] * slack.abs()
        })
        .fold(0.0, f64::max);
    worst / (1.0 + solution.objective.abs())
}
