//! Infeasible-start primal-dual path-following method (HKM direction with
//! Mehrotra predictor-corrector) over a product of complex Hermitian PSD
//! blocks and one nonnegative orthant.
//!
//! Standard form handled here:
//!
//! ```text
//! primal:  min  Σ_k Tr(X_k) + cᵀx   s.t.  Σ_k Tr(A_ik X_k) + a_iᵀx = b_i,  X ⪰ 0, x ≥ 0
//! dual:    max  bᵀy                 s.t.  Z_k = I - Σ_i y_i A_ik ⪰ 0,  z = c - Σ_i y_i a_i ≥ 0
//! ```

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{
    frobenius, hermitian_part, min_eigenvalue, nonneg_step_to_boundary, psd_step_to_boundary,
    re_inner, trace_re,
};
use crate::{SolveStatus, SolverOptions, C64};

/// One equality row of the standard form.
#[derive(Debug, Clone, Default)]
pub(crate) struct Row {
    pub blocks: Vec<(usize, DMatrix<C64>)>,
    pub lp: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProgram {
    pub dims: Vec<usize>,
    pub lp_cost: Vec<f64>,
    pub rows: Vec<Row>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutput {
    pub status: SolveStatus,
    pub blocks: Vec<DMatrix<C64>>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub pobj: f64,
    pub dobj: f64,
    pub gap: f64,
    pub pinf: f64,
    pub dinf: f64,
    pub iterations: usize,
}

struct Iterate {
    xs: Vec<DMatrix<C64>>,
    zs: Vec<DMatrix<C64>>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

struct Direction {
    dxs: Vec<DMatrix<C64>>,
    dzs: Vec<DMatrix<C64>>,
    dx: Vec<f64>,
    dz: Vec<f64>,
    dy: Vec<f64>,
}

const REFINEMENT_STEPS: usize = 3;

fn scaled_identity(n: usize, v: f64) -> DMatrix<C64> {
    DMatrix::from_diagonal_element(n, n, C64::new(v, 0.0))
}

impl ConeProgram {
    fn num_lp(&self) -> usize {
        self.lp_cost.len()
    }

    fn barrier_degree(&self) -> f64 {
        (self.dims.iter().sum::<usize>() + self.num_lp()) as f64
    }

    /// `A(X, x)`.
    fn apply(&self, xs: &[DMatrix<C64>], x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.blocks
                    .iter()
                    .map(|(k, a)| re_inner(a, &xs[*k]))
                    .sum::<f64>()
                    + row.lp.iter().map(|(l, a)| a * x[*l]).sum::<f64>()
            })
            .collect()
    }

    /// `Aᵀ(y)` split into block and orthant parts.
    fn adjoint(&self, y: &[f64]) -> (Vec<DMatrix<C64>>, Vec<f64>) {
        let mut blocks: Vec<DMatrix<C64>> =
            self.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut lp = vec![0.0; self.num_lp()];
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (k, a) in &row.blocks {
                blocks[*k] += a * C64::new(yi, 0.0);
            }
            for (l, a) in &row.lp {
                lp[*l] += a * yi;
            }
        }
        (blocks, lp)
    }

    fn initial_point(&self) -> Iterate {
        let n = self.barrier_degree().max(1.0);
        let mut xi: f64 = 10.0_f64.max(n.sqrt());
        let mut eta: f64 = 10.0_f64.max(n.sqrt());
        for (row, bi) in self.rows.iter().zip(&self.b) {
            let norm = row_norm(row);
            xi = xi.max(n.sqrt() * (1.0 + bi.abs()) / (1.0 + norm));
            eta = eta.max(norm);
        }
        let cmax = self.lp_cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        eta = eta.max(cmax);
        Iterate {
            xs: self.dims.iter().map(|&d| scaled_identity(d, xi)).collect(),
            zs: self.dims.iter().map(|&d| scaled_identity(d, eta)).collect(),
            x: vec![xi; self.num_lp()],
            z: vec![eta; self.num_lp()],
            y: vec![0.0; self.rows.len()],
        }
    }

    /// Checks whether `ŷ = y / bᵀy` is a Farkas certificate of primal
    /// infeasibility: `bᵀŷ = 1` and `-Aᵀŷ` in the cone.
    fn certifies_infeasibility(&self, y: &[f64], eps: f64) -> bool {
        let by: f64 = self.b.iter().zip(y).map(|(b, y)| b * y).sum();
        if !(by.is_finite() && by > 0.0) {
            return false;
        }
        let scaled: Vec<f64> = y.iter().map(|v| -v / by).collect();
        let (blocks, lp) = self.adjoint(&scaled);
        lp.iter().all(|v| *v >= -eps) && blocks.iter().all(|s| min_eigenvalue(s) >= -eps)
    }

    pub fn solve(&self, opts: &SolverOptions) -> IpmOutput {
        let m = self.rows.len();
        let n = self.barrier_degree();
        let b_norm = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_norm = (self.dims.iter().sum::<usize>() as f64
            + self.lp_cost.iter().map(|v| v * v).sum::<f64>())
        .sqrt();

        // Column view of the orthant coefficients.
        let mut lp_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_lp()];
        for (i, row) in self.rows.iter().enumerate() {
            for (l, a) in &row.lp {
                lp_cols[*l].push((i, *a));
            }
        }
        // Rows touching each block.
        let mut block_rows: Vec<Vec<(usize, &DMatrix<C64>)>> = vec![Vec::new(); self.dims.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for (k, a) in &row.blocks {
                block_rows[*k].push((i, a));
            }
        }

        let mut it = self.initial_point();
        let mut out = IpmOutput {
            status: SolveStatus::NumericalFailure,
            blocks: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            pobj: f64::NAN,
            dobj: f64::NAN,
            gap: f64::INFINITY,
            pinf: f64::INFINITY,
            dinf: f64::INFINITY,
            iterations: 0,
        };

        for iter in 0..=opts.max_iterations {
            // Residuals and progress measures.
            let ax = self.apply(&it.xs, &it.x);
            let rp: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let (aty_blocks, aty_lp) = self.adjoint(&it.y);
            let rd_blocks: Vec<DMatrix<C64>> = it
                .zs
                .iter()
                .zip(&aty_blocks)
                .map(|(z, aty)| {
                    let n = z.nrows();
                    scaled_identity(n, 1.0) - z - aty
                })
                .collect();
            let rd_lp: Vec<f64> = (0..self.num_lp())
                .map(|l| self.lp_cost[l] - it.z[l] - aty_lp[l])
                .collect();

            let pobj = it.xs.iter().map(trace_re).sum::<f64>()
                + self
                    .lp_cost
                    .iter()
                    .zip(&it.x)
                    .map(|(c, x)| c * x)
                    .sum::<f64>();
            let dobj: f64 = self.b.iter().zip(&it.y).map(|(b, y)| b * y).sum();
            let complementarity = it
                .xs
                .iter()
                .zip(&it.zs)
                .map(|(x, z)| re_inner(x, z))
                .sum::<f64>()
                + it.x.iter().zip(&it.z).map(|(x, z)| x * z).sum::<f64>();
            let mu = complementarity / n.max(1.0);

            let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm);
            let dinf = (rd_blocks.iter().map(|r| frobenius(r).powi(2)).sum::<f64>()
                + rd_lp.iter().map(|v| v * v).sum::<f64>())
            .sqrt()
                / (1.0 + c_norm);
            let scale = 1.0 + pobj.abs() + dobj.abs();
            let gap = ((pobj - dobj).abs()).max(complementarity.abs()) / scale;

            out.pobj = pobj;
            out.dobj = dobj;
            out.gap = (pobj - dobj).abs() / scale;
            out.pinf = pinf;
            out.dinf = dinf;
            out.iterations = iter;

            if !pobj.is_finite() || !dobj.is_finite() {
                out.status = SolveStatus::NumericalFailure;
                break;
            }
            if pinf <= opts.tolerance && dinf <= opts.tolerance && gap <= opts.tolerance {
                out.status = SolveStatus::Optimal;
                break;
            }
            if self.certifies_infeasibility(&it.y, opts.infeasibility_tolerance) {
                out.status = SolveStatus::Infeasible;
                break;
            }
            if iter == opts.max_iterations {
                out.status = SolveStatus::NumericalFailure;
                break;
            }

            let zinvs: Option<Vec<DMatrix<C64>>> = it
                .zs
                .iter()
                .map(|z| Cholesky::new(z.clone()).map(|c| c.inverse()))
                .collect();
            let Some(zinvs) = zinvs else {
                out.status = SolveStatus::NumericalFailure;
                break;
            };

            // Schur complement M_ij = Σ_k Re Tr(A_ik X_k A_jk Z_k⁻¹) + Σ_l a_il a_jl x_l / z_l.
            let mut schur = DMatrix::<f64>::zeros(m, m);
            for (k, rows) in block_rows.iter().enumerate() {
                let xk = &it.xs[k];
                let zinv = &zinvs[k];
                let products: Vec<DMatrix<C64>> =
                    rows.iter().map(|(_, a)| xk * *a * zinv).collect();
                for (p, (i, _)) in products.iter().zip(rows.iter()) {
                    for (j, aj) in rows.iter() {
                        if *j < *i {
                            continue;
                        }
                        schur[(*i, *j)] += re_inner(aj, p);
                    }
                }
            }
            for (l, col) in lp_cols.iter().enumerate() {
                let d = it.x[l] / it.z[l];
                for (i, ai) in col {
                    for (j, aj) in col {
                        if j < i {
                            continue;
                        }
                        schur[(*i, *j)] += ai * aj * d;
                    }
                }
            }
            for i in 0..m {
                for j in 0..i {
                    schur[(i, j)] = schur[(j, i)];
                }
            }
            let Some(factor) = factorize(schur) else {
                out.status = SolveStatus::NumericalFailure;
                break;
            };

            // X R_d Z⁻¹ terms shared by predictor and corrector.
            let xrz: Vec<DMatrix<C64>> = (0..self.dims.len())
                .map(|k| &it.xs[k] * &rd_blocks[k] * &zinvs[k])
                .collect();
            let xrz_lp: Vec<f64> = (0..self.num_lp())
                .map(|l| it.x[l] * rd_lp[l] / it.z[l])
                .collect();

            let direction = |target_mu: f64, second_order: Option<&Direction>| -> Direction {
                let ks: Vec<DMatrix<C64>> = (0..self.dims.len())
                    .map(|k| {
                        let mut kmat = &zinvs[k] * C64::new(target_mu, 0.0) - &it.xs[k];
                        if let Some(pred) = second_order {
                            kmat -= &pred.dxs[k] * &pred.dzs[k] * &zinvs[k];
                        }
                        kmat
                    })
                    .collect();
                let k_lp: Vec<f64> = (0..self.num_lp())
                    .map(|l| {
                        let mut v = target_mu / it.z[l] - it.x[l];
                        if let Some(pred) = second_order {
                            v -= pred.dx[l] * pred.dz[l] / it.z[l];
                        }
                        v
                    })
                    .collect();
                let a_k = self.apply(&ks, &k_lp);
                let a_xrz = self.apply(&xrz, &xrz_lp);
                let rhs = DVector::from_iterator(m, (0..m).map(|i| rp[i] - a_k[i] + a_xrz[i]));
                let recover = |dy: Vec<f64>| -> Direction {
                    let (a_dy, a_dy_lp) = self.adjoint(&dy);
                    let dzs: Vec<DMatrix<C64>> =
                        rd_blocks.iter().zip(&a_dy).map(|(r, a)| r - a).collect();
                    let dz: Vec<f64> = rd_lp.iter().zip(&a_dy_lp).map(|(r, a)| r - a).collect();
                    let dxs: Vec<DMatrix<C64>> = (0..self.dims.len())
                        .map(|k| hermitian_part(&(&ks[k] - &it.xs[k] * &dzs[k] * &zinvs[k])))
                        .collect();
                    let dx: Vec<f64> = (0..self.num_lp())
                        .map(|l| k_lp[l] - it.x[l] * dz[l] / it.z[l])
                        .collect();
                    Direction {
                        dxs,
                        dzs,
                        dx,
                        dz,
                        dy,
                    }
                };
                let residual = |d: &Direction| -> Vec<f64> {
                    let adx = self.apply(&d.dxs, &d.dx);
                    rp.iter().zip(&adx).map(|(r, a)| r - a).collect()
                };
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

                // Iterative refinement against the primal equation `A(dX, dx) = r_p`.
                let mut best = recover(factor.solve(&rhs).iter().copied().collect());
                let mut res = residual(&best);
                for _ in 0..REFINEMENT_STEPS {
                    let res_norm = norm(&res);
                    if res_norm <= 1e-14 * (1.0 + norm(&rp)) {
                        break;
                    }
                    let delta = factor.solve(&DVector::from_column_slice(&res));
                    let dy: Vec<f64> = best
                        .dy
                        .iter()
                        .zip(delta.iter())
                        .map(|(a, b)| a + b)
                        .collect();
                    let candidate = recover(dy);
                    let cand_res = residual(&candidate);
                    if norm(&cand_res) >= res_norm {
                        break;
                    }
                    best = candidate;
                    res = cand_res;
                }
                best
            };

            let step_lengths = |d: &Direction| -> Option<(f64, f64)> {
                let mut ap = nonneg_step_to_boundary(&it.x, &d.dx);
                let mut ad = nonneg_step_to_boundary(&it.z, &d.dz);
                for k in 0..self.dims.len() {
                    ap = ap.min(psd_step_to_boundary(&it.xs[k], &d.dxs[k])?);
                    ad = ad.min(psd_step_to_boundary(&it.zs[k], &d.dzs[k])?);
                }
                Some((ap, ad))
            };

            let predictor = direction(0.0, None);
            let Some((ap, ad)) = step_lengths(&predictor) else {
                out.status = SolveStatus::NumericalFailure;
                break;
            };
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let mut affine = 0.0;
            for k in 0..self.dims.len() {
                let xa = &it.xs[k] + &predictor.dxs[k] * C64::new(ap, 0.0);
                let za = &it.zs[k] + &predictor.dzs[k] * C64::new(ad, 0.0);
                affine += re_inner(&xa, &za);
            }
            for l in 0..self.num_lp() {
                affine += (it.x[l] + ap * predictor.dx[l]) * (it.z[l] + ad * predictor.dz[l]);
            }
            let mu_aff = affine / n.max(1.0);
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let corrector = direction(sigma * mu, Some(&predictor));

            let Some((ap, ad)) = step_lengths(&corrector) else {
                out.status = SolveStatus::NumericalFailure;
                break;
            };
            let fraction = 0.9 + 0.09 * ap.min(ad).min(1.0);
            let ap = (fraction * ap).min(1.0);
            let ad = (fraction * ad).min(1.0);
            if ap < 1e-14 && ad < 1e-14 {
                out.status = SolveStatus::NumericalFailure;
                break;
            }

            for k in 0..self.dims.len() {
                it.xs[k] = hermitian_part(&(&it.xs[k] + &corrector.dxs[k] * C64::new(ap, 0.0)));
                it.zs[k] = hermitian_part(&(&it.zs[k] + &corrector.dzs[k] * C64::new(ad, 0.0)));
            }
            for l in 0..self.num_lp() {
                it.x[l] += ap * corrector.dx[l];
                it.z[l] += ad * corrector.dz[l];
            }
            for i in 0..m {
                it.y[i] += ad * corrector.dy[i];
            }
        }

        out.blocks = it.xs;
        out.x = it.x;
        out.y = it.y;
        out
    }
}

pub(crate) fn row_norm(row: &Row) -> f64 {
    (row.blocks
        .iter()
        .map(|(_, a)| frobenius(a).powi(2))
        .sum::<f64>()
        + row.lp.iter().map(|(_, a)| a * a).sum::<f64>())
    .sqrt()
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Chol(c) => c.solve(rhs),
            Factor::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

fn factorize(schur: DMatrix<f64>) -> Option<Factor> {
    if schur.nrows() == 0 {
        return Some(Factor::Chol(Cholesky::new(schur)?));
    }
    if let Some(c) = Cholesky::new(schur.clone()) {
        return Some(Factor::Chol(c));
    }
    let lu = schur.lu();
    if lu.is_invertible() {
        Some(Factor::Lu(lu))
    } else {
        None
    }
}
