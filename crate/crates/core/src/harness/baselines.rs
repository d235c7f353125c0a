//! Cross-validated reference baselines: the single-penalty lasso and the
//! adaptive lasso with inverse-magnitude weights, both tuned by 5-fold
//! cross-validation over a 100-point log-spaced penalty grid.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::solver::{GramLasso, SolverConfig};

const GRID_POINTS: usize = 100;
const GRID_SPAN: f64 = 1e-4;
const FOLDS: usize = 5;

/// A tuned baseline fit: coefficients at the cross-validated penalty.
pub struct BaselineFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
}

fn fold_assignment(n: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut fold = vec![0usize; n];
    for (pos, &i) in idx.iter().enumerate() {
        fold[i] = pos % FOLDS;
    }
    fold
}

fn rows_where(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    keep: impl Fn(usize) -> bool,
) -> (DMatrix<f64>, DVector<f64>) {
    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| keep(i)).collect();
    let xs = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
    let ys = DVector::from_fn(rows.len(), |i, _| y[rows[i]]);
    (xs, ys)
}

/// Cross-validate a weighted lasso over a common penalty scale: the grid runs
/// from the smallest scale that zeroes every coefficient down by four orders
/// of magnitude, warm-starting along the path.
fn cv_weighted(
    data: &Dataset,
    weights: &DVector<f64>,
    cfg: &SolverConfig,
    rng: &mut ChaCha20Rng,
) -> Result<BaselineFit> {
    let n = data.n();
    let p = data.p();
    if n < FOLDS * 2 {
        return Err(Error::Dimension(format!(
            "need at least {} rows for {FOLDS}-fold cross-validation",
            FOLDS * 2
        )));
    }
    // smallest common scale with an all-zero solution: max_j 2|x_j'y| / w_j
    let xty = data.x.transpose() * &data.y;
    let mut lambda_max = 0.0f64;
    for j in 0..p {
        if weights[j].is_finite() && weights[j] > 0.0 {
            lambda_max = lambda_max.max(2.0 * xty[j].abs() / weights[j]);
        }
    }
    if lambda_max <= 0.0 {
        lambda_max = 1.0;
    }
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| {
            let t = k as f64 / (GRID_POINTS - 1) as f64;
            lambda_max * GRID_SPAN.powf(t)
        })
        .collect();

    let fold = fold_assignment(n, rng);
    let mut cv_err = vec![0.0f64; GRID_POINTS];
    for f in 0..FOLDS {
        let (xtr, ytr) = rows_where(&data.x, &data.y, |i| fold[i] != f);
        let (xte, yte) = rows_where(&data.x, &data.y, |i| fold[i] == f);
        let gram = GramLasso::from_design(&xtr, &ytr);
        let mut warm: Option<DVector<f64>> = None;
        for (k, &lam) in grid.iter().enumerate() {
            let penalties = weights * lam;
            let (beta, _) = gram.solve(&penalties, warm.as_ref(), cfg)?;
            let resid = &yte - &xte * &beta;
            cv_err[k] += resid.norm_squared();
            warm = Some(beta);
        }
    }

    let best = (0..GRID_POINTS)
        .min_by(|&a, &b| cv_err[a].partial_cmp(&cv_err[b]).unwrap())
        .unwrap();
    let lambda = grid[best];
    let gram = GramLasso::from_design(&data.x, &data.y);
    let (beta, _) = gram.solve(&(weights * lambda), None, cfg)?;
    Ok(BaselineFit { beta, lambda })
}

/// Plain lasso with one cross-validated penalty.
pub fn cv_lasso(data: &Dataset, cfg: &SolverConfig, rng: &mut ChaCha20Rng) -> Result<BaselineFit> {
    cv_weighted(data, &DVector::from_element(data.p(), 1.0), cfg, rng)
}

/// Adaptive lasso: weights 1/|preliminary estimate|, with the preliminary
/// estimate the least-squares fit when n > p and the cross-validated lasso
/// otherwise.
pub fn cv_adaptive_lasso(
    data: &Dataset,
    cfg: &SolverConfig,
    rng: &mut ChaCha20Rng,
) -> Result<BaselineFit> {
    let prelim = if data.n() > data.p() {
        let xtx = data.x.transpose() * &data.x;
        match xtx.cholesky() {
            Some(chol) => chol.solve(&(data.x.transpose() * &data.y)),
            None => cv_lasso(data, cfg, rng)?.beta,
        }
    } else {
        cv_lasso(data, cfg, rng)?.beta
    };
    let weights = DVector::from_fn(data.p(), |j, _| 1.0 / prelim[j].abs().max(1e-8));
    cv_weighted(data, &weights, cfg, rng)
}
