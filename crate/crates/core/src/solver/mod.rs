//! Deterministic conditional-mode solvers.
//!
//! Cyclic coordinate descent with exact soft-threshold updates for the
//! weighted l1 problem
//!
//! ```text
//! min_b  (y - X b)'(y - X b) + sum_j lambda_j |b_j|
//! ```
//!
//! and its quadratic generalization `min_b 1/2 (b - c)' P (b - c) + sum_j
//! lambda_j |b_j|`. Zeros in the solution are exact, not epsilon-thresholded.
//! Both reduce to the same Gram-form objective, so one engine serves both and
//! repeated solves at different penalties reuse the Gram matrix.

mod group;

pub use group::{group_kkt_violation, solve_group_lasso, solve_group_lasso_warm, GroupL1Problem};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Convergence controls for the coordinate-descent solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Converged when no coefficient moves more than this in a full sweep.
    pub tolerance: f64,
    /// Sweep cap before giving up with a non-convergence error.
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::ParamDomain(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::ParamDomain(
                "max_iterations must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// The weighted l1 problem: residual sum of squares (no 1/2 factor) plus
/// coefficient-wise penalties.
#[derive(Debug, Clone)]
pub struct WeightedL1Problem {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub penalties: DVector<f64>,
}

impl WeightedL1Problem {
    pub fn validate(&self) -> Result<()> {
        if self.design.nrows() != self.response.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {}",
                self.design.nrows(),
                self.response.len()
            )));
        }
        if self.design.ncols() != self.penalties.len() {
            return Err(Error::Dimension(format!(
                "design has {} columns but {} penalties given",
                self.design.ncols(),
                self.penalties.len()
            )));
        }
        validate_penalties(&self.penalties)
    }
}

/// The quadratic l1 problem: 1/2 (b - center)' precision (b - center) plus
/// coefficient-wise penalties. `precision` must be symmetric positive
/// semi-definite.
#[derive(Debug, Clone)]
pub struct QuadraticL1Problem {
    pub precision: DMatrix<f64>,
    pub center: DVector<f64>,
    pub penalties: DVector<f64>,
}

impl QuadraticL1Problem {
    pub fn validate(&self) -> Result<()> {
        let p = self.center.len();
        if self.precision.nrows() != p || self.precision.ncols() != p {
            return Err(Error::Dimension(format!(
                "precision is {}x{} but center has length {p}",
                self.precision.nrows(),
                self.precision.ncols()
            )));
        }
        if self.penalties.len() != p {
            return Err(Error::Dimension(format!(
                "{} penalties for {p} coefficients",
                self.penalties.len()
            )));
        }
        validate_penalties(&self.penalties)
    }
}

fn validate_penalties(penalties: &DVector<f64>) -> Result<()> {
    for (j, &l) in penalties.iter().enumerate() {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::ParamDomain(format!(
                "penalty {j} must be finite and nonnegative, got {l}"
            )));
        }
    }
    Ok(())
}

/// Gram-form objective `b' G b - 2 b' c + constant + sum_j lambda_j |b_j|`.
///
/// Holding the Gram matrix lets the per-draw solves in frequency selection and
/// model averaging reuse the expensive products and warm-start each other.
#[derive(Debug, Clone)]
pub struct GramLasso {
    gram: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
}

impl GramLasso {
    /// From a design and response: objective equals the residual sum of
    /// squares plus penalty, exactly.
    pub fn from_design(design: &DMatrix<f64>, response: &DVector<f64>) -> Self {
        GramLasso {
            gram: design.transpose() * design,
            lin: design.transpose() * response,
            constant: response.dot(response),
        }
    }

    /// From a quadratic form: objective equals
    /// 1/2 (b - center)' precision (b - center) plus penalty, exactly.
    pub fn from_quadratic(precision: &DMatrix<f64>, center: &DVector<f64>) -> Self {
        let half = precision * 0.5;
        let lin = &half * center;
        let constant = center.dot(&(&half * center));
        GramLasso {
            gram: half,
            lin,
            constant,
        }
    }

    pub fn p(&self) -> usize {
        self.lin.len()
    }

    pub fn objective(&self, beta: &DVector<f64>, penalties: &DVector<f64>) -> f64 {
        let quad = beta.dot(&(&self.gram * beta));
        let pen: f64 = penalties
            .iter()
            .zip(beta.iter())
            .map(|(l, b)| l * b.abs())
            .sum();
        self.constant + quad - 2.0 * beta.dot(&self.lin) + pen
    }

    /// Worst KKT stationarity violation of `beta`. Zero at an exact optimum.
    pub fn kkt_violation(&self, beta: &DVector<f64>, penalties: &DVector<f64>) -> f64 {
        let grad = 2.0 * (&self.gram * beta - &self.lin);
        let mut worst = 0.0f64;
        for j in 0..self.p() {
            let v = if beta[j] != 0.0 {
                (grad[j] + penalties[j] * beta[j].signum()).abs()
            } else {
                (grad[j].abs() - penalties[j]).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Cyclic coordinate descent from `warm` (zeros if absent). Returns the
    /// minimizer and its objective value. Converged means no coefficient
    /// moved more than the tolerance in a sweep AND the KKT stationarity
    /// violation is below ten times the tolerance.
    pub fn solve(
        &self,
        penalties: &DVector<f64>,
        warm: Option<&DVector<f64>>,
        cfg: &SolverConfig,
    ) -> Result<(DVector<f64>, f64)> {
        cfg.validate()?;
        let p = self.p();
        if penalties.len() != p {
            return Err(Error::Dimension(format!(
                "{} penalties for {p} coefficients",
                penalties.len()
            )));
        }
        validate_penalties(penalties)?;
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
        // g = G * beta, maintained incrementally
        let mut g = &self.gram * &beta;
        let mut prev_obj = f64::INFINITY;
        for sweep in 0..cfg.max_iterations {
            let mut max_delta = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[(j, j)];
                if gjj <= 0.0 {
                    // flat coordinate: the penalty decides
                    if penalties[j] > 0.0 && beta[j] != 0.0 {
                        let delta = -beta[j];
                        g.axpy(delta, &self.gram.column(j).into_owned(), 1.0);
                        beta[j] = 0.0;
                        max_delta = max_delta.max(delta.abs());
                    }
                    continue;
                }
                let rho = self.lin[j] - g[j] + gjj * beta[j];
                let thr = penalties[j] * 0.5;
                let new = if rho.abs() <= thr {
                    0.0
                } else {
                    (rho - thr.copysign(rho)) / gjj
                };
                if new != beta[j] {
                    let delta = new - beta[j];
                    // g += delta * G[:, j]
                    for i in 0..p {
                        g[i] += delta * self.gram[(i, j)];
                    }
                    beta[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if cfg!(debug_assertions) {
                let obj = self.objective(&beta, penalties);
                debug_assert!(
                    obj <= prev_obj + 1e-9 * (1.0 + prev_obj.abs()),
                    "objective rose from {prev_obj} to {obj} in sweep {sweep}"
                );
                prev_obj = obj;
            }
            if max_delta < cfg.tolerance
                && self.kkt_violation(&beta, penalties) < 10.0 * cfg.tolerance
            {
                let obj = self.objective(&beta, penalties);
                return Ok((beta, obj));
            }
        }
        Err(Error::NonConvergence {
            what: "coordinate descent".to_string(),
            iterations: cfg.max_iterations,
            last_iterate: beta.iter().copied().collect(),
        })
    }
}

/// Solve the weighted l1 problem by cyclic coordinate descent.
pub fn solve_weighted_lasso(
    problem: &WeightedL1Problem,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, f64)> {
    problem.validate()?;
    GramLasso::from_design(&problem.design, &problem.response).solve(&problem.penalties, None, cfg)
}

/// Weighted l1 solve from an initial point; used by the repeated solves in
/// frequency selection and model averaging.
pub fn solve_weighted_lasso_warm(
    problem: &WeightedL1Problem,
    cfg: &SolverConfig,
    warm: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    problem.validate()?;
    GramLasso::from_design(&problem.design, &problem.response).solve(
        &problem.penalties,
        Some(warm),
        cfg,
    )
}

/// Solve the quadratic l1 problem by cyclic coordinate descent.
pub fn solve_quadratic_lasso(
    problem: &QuadraticL1Problem,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    problem.validate()?;
    let (beta, _) = GramLasso::from_quadratic(&problem.precision, &problem.center).solve(
        &problem.penalties,
        None,
        cfg,
    )?;
    Ok(beta)
}
