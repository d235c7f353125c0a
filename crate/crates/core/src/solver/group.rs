//! Block coordinate descent for the weighted group-lasso problem
//!
//! ```text
//! min_b  (y - X b)'(y - X b) + sum_j lambda_j ||b_j||_2
//! ```
//!
//! Each block update is exact: group j is zero iff 2||X_j' r|| <= lambda_j,
//! otherwise the stationarity system (G_j + nu I) b_j = z_j is solved through
//! the eigendecomposition of G_j = X_j'X_j with nu found by bisection on a
//! monotone scalar equation. Group norms come out exactly 0 or positive.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::groups::{CapStructure, GroupMap};

use super::SolverConfig;

/// Weighted group-lasso problem. `ancestry` records a composite-penalty
/// ordering when one exists; the solver itself only handles the plain grouped
/// penalty and rejects problems carrying a relation.
#[derive(Debug, Clone)]
pub struct GroupL1Problem {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub groups: GroupMap,
    pub penalties: DVector<f64>,
    pub ancestry: Option<CapStructure>,
}

impl GroupL1Problem {
    pub fn validate(&self) -> Result<()> {
        if self.design.nrows() != self.response.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {}",
                self.design.nrows(),
                self.response.len()
            )));
        }
        if self.design.ncols() != self.groups.p() {
            return Err(Error::Dimension(format!(
                "design has {} columns but groups cover {}",
                self.design.ncols(),
                self.groups.p()
            )));
        }
        if self.penalties.len() != self.groups.n_groups() {
            return Err(Error::Dimension(format!(
                "{} penalties for {} groups",
                self.penalties.len(),
                self.groups.n_groups()
            )));
        }
        for (j, &l) in self.penalties.iter().enumerate() {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::ParamDomain(format!(
                    "group penalty {j} must be finite and nonnegative, got {l}"
                )));
            }
        }
        Ok(())
    }
}

struct GroupBlock {
    cols: Vec<usize>,
    /// eigendecomposition of G_j = X_j' X_j
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

/// Solve `(G + nu I) b = z` for the block norm target: find nu > 0 with
/// `sum_i (nu w_i / (d_i + nu))^2 = lambda^2 / 4`, where w = U'z. The left
/// side increases from 0 to ||z||^2, so a root exists exactly when
/// 2||z|| > lambda, and bisection is safe.
fn block_shrink_factor(eigvals: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> f64 {
    let target = lambda * lambda / 4.0;
    let lhs = |nu: f64| -> f64 {
        w.iter()
            .zip(eigvals.iter())
            .map(|(wi, di)| {
                let t = nu * wi / (di + nu);
                t * t
            })
            .sum()
    };
    let mut hi = 1.0f64;
    while lhs(hi) < target {
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Group-lasso objective value for a given coefficient vector.
fn objective(problem: &GroupL1Problem, beta: &DVector<f64>) -> f64 {
    let r = &problem.response - &problem.design * beta;
    let mut obj = r.dot(&r);
    for j in 0..problem.groups.n_groups() {
        let norm: f64 = problem
            .groups
            .columns(j)
            .iter()
            .map(|&c| beta[c] * beta[c])
            .sum::<f64>()
            .sqrt();
        obj += problem.penalties[j] * norm;
    }
    obj
}

/// Worst groupwise KKT violation; zero at an exact optimum.
pub fn group_kkt_violation(problem: &GroupL1Problem, beta: &DVector<f64>) -> f64 {
    let r = &problem.response - &problem.design * beta;
    let mut worst = 0.0f64;
    for j in 0..problem.groups.n_groups() {
        let cols = problem.groups.columns(j);
        let corr: Vec<f64> = cols
            .iter()
            .map(|&c| 2.0 * problem.design.column(c).dot(&r))
            .collect();
        let corr_norm = corr.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bnorm: f64 = cols.iter().map(|&c| beta[c] * beta[c]).sum::<f64>().sqrt();
        let v = if bnorm > 0.0 {
            // gradient balance: 2 X_j' r = lambda_j b_j / ||b_j||
            cols.iter()
                .enumerate()
                .map(|(i, &c)| (corr[i] - problem.penalties[j] * beta[c] / bnorm).abs())
                .fold(0.0f64, f64::max)
        } else {
            (corr_norm - problem.penalties[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Block coordinate descent for the weighted group lasso.
pub fn solve_group_lasso(problem: &GroupL1Problem, cfg: &SolverConfig) -> Result<DVector<f64>> {
    solve_group_lasso_warm(problem, cfg, None)
}

/// As [`solve_group_lasso`], starting from `warm` when given.
pub fn solve_group_lasso_warm(
    problem: &GroupL1Problem,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    problem.validate()?;
    cfg.validate()?;
    if problem.ancestry.is_some() {
        return Err(Error::Unsupported(
            "mode solver for the composite (ancestry-ordered) penalty is not provided; \
             solve the plain grouped problem instead"
                .to_string(),
        ));
    }
    let p = problem.groups.p();
    let nj = problem.groups.n_groups();
    let blocks: Vec<GroupBlock> = (0..nj)
        .map(|j| {
            let cols = problem.groups.columns(j).to_vec();
            let xj = problem.design.select_columns(cols.iter());
            let gj = xj.transpose() * &xj;
            let eig = gj.symmetric_eigen();
            GroupBlock {
                cols,
                eigvals: eig.eigenvalues,
                eigvecs: eig.eigenvectors,
            }
        })
        .collect();

    let mut beta = match warm {
        Some(b) if b.len() == p => b.clone(),
        Some(b) => {
            return Err(Error::Dimension(format!(
                "warm start has length {}, expected {p}",
                b.len()
            )))
        }
        None => DVector::zeros(p),
    };
    let mut residual = &problem.response - &problem.design * &beta;
    let mut prev_obj = f64::INFINITY;

    for sweep in 0..cfg.max_iterations {
        let mut max_delta = 0.0f64;
        for (j, block) in blocks.iter().enumerate() {
            let m = block.cols.len();
            // z_j = X_j' (residual + X_j b_j): correlation with the partial
            // residual that excludes group j itself
            let mut z = DVector::zeros(m);
            for (i, &c) in block.cols.iter().enumerate() {
                z[i] = problem.design.column(c).dot(&residual);
            }
            let bj_old = DVector::from_fn(m, |i, _| beta[block.cols[i]]);
            // add back G_j b_j via the eigendecomposition
            let gb = &block.eigvecs
                * DVector::from_fn(m, |i, _| {
                    block.eigvals[i] * (block.eigvecs.column(i).dot(&bj_old))
                });
            z += gb;

            let znorm = z.norm();
            let lambda = problem.penalties[j];
            let bj_new = if 2.0 * znorm <= lambda {
                DVector::zeros(m)
            } else if lambda == 0.0 {
                // unpenalized block: plain least squares on the partial residual
                let w = block.eigvecs.transpose() * &z;
                let scaled = DVector::from_fn(m, |i, _| {
                    if block.eigvals[i] > 1e-12 {
                        w[i] / block.eigvals[i]
                    } else {
                        0.0
                    }
                });
                &block.eigvecs * scaled
            } else {
                let w = block.eigvecs.transpose() * &z;
                let nu = block_shrink_factor(&block.eigvals, &w, lambda);
                let scaled = DVector::from_fn(m, |i, _| w[i] / (block.eigvals[i] + nu));
                &block.eigvecs * scaled
            };

            let delta = &bj_new - &bj_old;
            let delta_max = delta.amax();
            if delta_max > 0.0 {
                for (i, &c) in block.cols.iter().enumerate() {
                    if delta[i] != 0.0 {
                        residual.axpy(-delta[i], &problem.design.column(c).into_owned(), 1.0);
                    }
                    beta[c] = bj_new[i];
                }
                max_delta = max_delta.max(delta_max);
            }
        }
        if cfg!(debug_assertions) {
            let obj = objective(problem, &beta);
            debug_assert!(
                obj <= prev_obj + 1e-9 * (1.0 + prev_obj.abs()),
                "group objective rose from {prev_obj} to {obj} in sweep {sweep}"
            );
            prev_obj = obj;
        }
        if max_delta < cfg.tolerance && group_kkt_violation(problem, &beta) < 10.0 * cfg.tolerance {
            return Ok(beta);
        }
    }
    Err(Error::NonConvergence {
        what: "group coordinate descent".to_string(),
        iterations: cfg.max_iterations,
        last_iterate: beta.iter().copied().collect(),
    })
}
