//! Problem and solution containers.

use nalgebra::DMatrix;

use crate::{ConicError, C64};

/// Direction of a scalar linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `lhs >= rhs`
    Geq,
    /// `lhs <= rhs`
    Leq,
}

/// Terminal state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// `Σ_k Tr(C_k W_k)  (>= | <=)  rhs`, with `C_k` Hermitian.
#[derive(Debug, Clone)]
pub struct SdpConstraint {
    pub terms: Vec<(usize, DMatrix<C64>)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Minimize `Σ_k Tr(W_k)` over Hermitian PSD blocks subject to linear
/// inequality constraints.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    block_dims: Vec<usize>,
    constraints: Vec<SdpConstraint>,
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>) -> Self {
        Self {
            block_dims,
            constraints: Vec::new(),
        }
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn constraints(&self) -> &[SdpConstraint] {
        &self.constraints
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Appends a constraint and returns its index. Coefficient matrices must
    /// match their block dimension and be Hermitian to 1e-9 (relative).
    pub fn add_constraint(
        &mut self,
        terms: Vec<(usize, DMatrix<C64>)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, ConicError> {
        let index = self.constraints.len();
        if !rhs.is_finite() {
            return Err(ConicError::NonFinite { constraint: index });
        }
        for (block, m) in &terms {
            let dim = *self
                .block_dims
                .get(*block)
                .ok_or(ConicError::UnknownBlock {
                    constraint: index,
                    block: *block,
                })?;
            if m.nrows() != dim || m.ncols() != dim {
                return Err(ConicError::DimensionMismatch {
                    constraint: index,
                    block: *block,
                    expected: dim,
                    found: (m.nrows(), m.ncols()),
                });
            }
            if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(ConicError::NonFinite { constraint: index });
            }
            let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let skew = (m - m.adjoint())
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            if skew > 1e-9 * scale.max(1e-300) {
                return Err(ConicError::NotHermitian {
                    constraint: index,
                    block: *block,
                });
            }
        }
        self.constraints.push(SdpConstraint { terms, sense, rhs });
        Ok(index)
    }

    /// Left-hand side `Σ_k Tr(C_k W_k)` of constraint `m` at `blocks`.
    pub fn constraint_value(&self, m: usize, blocks: &[DMatrix<C64>]) -> f64 {
        self.constraints[m]
            .terms
            .iter()
            .map(|(k, c)| crate::linalg::re_inner(c, &blocks[*k]))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub blocks: Vec<DMatrix<C64>>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Nonnegative multiplier per constraint, oriented so that
    /// `∂ objective / ∂ rhs = +dual` for `Geq` rows and `-dual` for `Leq` rows.
    pub duals: Vec<f64>,
    /// Relative duality gap `|p - d| / (1 + |p| + |d|)`.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// `Σ_j a_j p_j  (>= | <=)  rhs`.
#[derive(Debug, Clone)]
pub struct LpConstraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Minimize `costᵀp` subject to `p >= 0` and linear inequality rows.
#[derive(Debug, Clone)]
pub struct LpProblem {
    costs: Vec<f64>,
    constraints: Vec<LpConstraint>,
}

impl LpProblem {
    /// Objective `Σ_j p_j`.
    pub fn min_sum(num_vars: usize) -> Self {
        Self::with_costs(vec![1.0; num_vars])
    }

    pub fn with_costs(costs: Vec<f64>) -> Self {
        Self {
            costs,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn constraints(&self) -> &[LpConstraint] {
        &self.constraints
    }

    pub fn add_constraint(
        &mut self,
        coeffs: Vec<f64>,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, ConicError> {
        let index = self.constraints.len();
        if coeffs.len() != self.costs.len() {
            return Err(ConicError::DimensionMismatch {
                constraint: index,
                block: 0,
                expected: self.costs.len(),
                found: (coeffs.len(), 1),
            });
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ConicError::NonFinite { constraint: index });
        }
        self.constraints.push(LpConstraint { coeffs, sense, rhs });
        Ok(index)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub duals: Vec<f64>,
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
