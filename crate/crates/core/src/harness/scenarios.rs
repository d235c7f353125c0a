//! Data-generating processes for the built-in simulation scenarios, plus the
//! small two-covariate generator behind the adaptive-shrinkage demonstration.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, StandardizeMode};
use crate::error::{Error, Result};
use crate::groups::{CapStructure, GroupMap};
use crate::inference::SparsityPattern;

/// Standard normal third quantile: Phi^-1(2/3). Tertile cuts for the factor
/// scenarios sit at +/- this value.
const TERTILE: f64 = 0.430_727_299_295_457_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    /// Eight covariates, AR(0.5) correlation, beta = (3, 1.5, 0, 0, 2, 0, 0, 0).
    Ex1,
    /// Four covariates with the printed difficult correlation structure,
    /// beta = (5.6, 5.6, 5.6, 0).
    Ex2,
    /// One hundred covariates, beta_j = 5 at j = 10, 20, ..., 100.
    Ex3,
    /// Prediction, small p: beta = (3, 1.5, 0.1, 0.1, 2, 0, 0, 0); equal-size
    /// training and prediction splits.
    Ex4Small,
    /// Prediction, large p: beta_j = 0.5 at j = 10, 20, 30, 40, 50.
    Ex4Large,
    /// Logistic outcomes with intercept 5 and the Ex1 slope vector.
    Ex7,
    /// Fifteen 3-level factors (two dummies each); groups 1, 3, 5 active.
    Ex8,
    /// Four factors plus all pairwise interactions under the
    /// main-before-interaction ordering; factors 1, 2 and their interaction
    /// active.
    Ex9,
    /// Two independent covariates, beta = (3, 0): the adaptive-shrinkage
    /// demonstration.
    Fig2,
}

impl ScenarioId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ex1" => Ok(ScenarioId::Ex1),
            "ex2" => Ok(ScenarioId::Ex2),
            "ex3" => Ok(ScenarioId::Ex3),
            "ex4-small" => Ok(ScenarioId::Ex4Small),
            "ex4-large" => Ok(ScenarioId::Ex4Large),
            "ex7" => Ok(ScenarioId::Ex7),
            "ex8" => Ok(ScenarioId::Ex8),
            "ex9" => Ok(ScenarioId::Ex9),
            "fig2" => Ok(ScenarioId::Fig2),
            other => Err(Error::ParamDomain(format!(
                "unknown scenario '{other}' (expected ex1, ex2, ex3, ex4-small, ex4-large, ex7, ex8, ex9, fig2)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioId::Ex1 => "ex1",
            ScenarioId::Ex2 => "ex2",
            ScenarioId::Ex3 => "ex3",
            ScenarioId::Ex4Small => "ex4-small",
            ScenarioId::Ex4Large => "ex4-large",
            ScenarioId::Ex7 => "ex7",
            ScenarioId::Ex8 => "ex8",
            ScenarioId::Ex9 => "ex9",
            ScenarioId::Fig2 => "fig2",
        }
    }

    pub fn is_prediction(&self) -> bool {
        matches!(self, ScenarioId::Ex4Small | ScenarioId::Ex4Large)
    }

    pub fn is_grouped(&self) -> bool {
        matches!(self, ScenarioId::Ex8 | ScenarioId::Ex9)
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self, ScenarioId::Ex7)
    }
}

/// One simulation cell: a scenario at a sample size and noise level, run for
/// `reps` replications from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::ParamDomain(format!(
                "scenario needs n >= 10, got {}",
                self.n
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::ParamDomain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.reps == 0 {
            return Err(Error::ParamDomain("reps must be >= 1".to_string()));
        }
        if self.id.is_logistic() && self.sigma != 1.0 {
            return Err(Error::ParamDomain(
                "the logistic scenario has no noise scale; use sigma = 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One replication's data: centered training data (raw for the logistic
/// scenario), the true sparsity pattern (group-level when grouped), held-out
/// prediction rows for the prediction scenarios, and the group ordering for
/// the composite scenario.
pub struct GeneratedData {
    pub data: Dataset,
    pub truth: SparsityPattern,
    pub test: Option<(DMatrix<f64>, DVector<f64>)>,
    pub cap: Option<CapStructure>,
}

fn ar_correlation_chol(p: usize) -> Cholesky<f64, nalgebra::Dyn> {
    let corr = DMatrix::from_fn(p, p, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
    corr.cholesky().expect("AR(0.5) correlation is SPD")
}

/// The printed difficult correlation matrix, validated positive definite; a
/// failure aborts with the matrix in the message.
fn ex2_correlation_chol() -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let corr = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, -0.39, -0.39, 0.23, //
            -0.39, 1.0, -0.39, 0.23, //
            -0.39, -0.39, 1.0, 0.23, //
            0.23, 0.23, 0.23, 1.0,
        ],
    );
    let eigs = corr.clone().symmetric_eigen().eigenvalues;
    if eigs.min() <= 0.0 {
        return Err(Error::Numerical {
            context: "ex2 correlation matrix".to_string(),
            diagnostic: format!(
                "not positive definite: eigenvalues {:?}, matrix {corr}",
                eigs
            ),
        });
    }
    Ok(corr.cholesky().expect("validated SPD"))
}

fn gaussian_rows(
    n: usize,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    rng: &mut ChaCha20Rng,
) -> DMatrix<f64> {
    let p = chol.l().nrows();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let row = chol.l() * z;
        for j in 0..p {
            x[(i, j)] = row[j];
        }
    }
    x
}

fn linear_response(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    sigma: f64,
    rng: &mut ChaCha20Rng,
) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |i, _| {
        x.row(i).transpose().dot(beta) + sigma * rng.sample::<f64, _>(StandardNormal)
    })
}

fn ex1_beta() -> DVector<f64> {
    DVector::from_vec(vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0])
}

fn ex3_beta() -> DVector<f64> {
    let mut beta = DVector::zeros(100);
    for k in 1..=10 {
        beta[10 * k - 1] = 5.0;
    }
    beta
}

fn ex4_large_beta() -> DVector<f64> {
    let mut beta = DVector::zeros(100);
    for k in 1..=5 {
        beta[10 * k - 1] = 0.5;
    }
    beta
}

/// Cut a latent normal into a 3-level factor and code it with two dummies
/// (levels two and three against the first).
fn factor_dummies(z: f64) -> (f64, f64) {
    if z < -TERTILE {
        (0.0, 0.0)
    } else if z <= TERTILE {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    }
}

/// Generate one replication of a scenario. Centered for the linear
/// scenarios; the logistic scenario stays on the raw scale (its intercept
/// is fitted, not penalized).
pub fn generate_dataset(
    spec: &ScenarioSpec,
    rep: usize,
    rng: &mut ChaCha20Rng,
) -> Result<GeneratedData> {
    spec.validate()?;
    let _ = rep; // replication identity lives in the caller-provided stream
    match spec.id {
        ScenarioId::Ex1 | ScenarioId::Ex4Small => {
            let beta = if spec.id == ScenarioId::Ex1 {
                ex1_beta()
            } else {
                DVector::from_vec(vec![3.0, 1.5, 0.1, 0.1, 2.0, 0.0, 0.0, 0.0])
            };
            let chol = ar_correlation_chol(8);
            let x = gaussian_rows(spec.n, &chol, rng);
            let y = linear_response(&x, &beta, spec.sigma, rng);
            let test = if spec.id == ScenarioId::Ex4Small {
                let xt = gaussian_rows(spec.n, &chol, rng);
                let yt = linear_response(&xt, &beta, spec.sigma, rng);
                Some((xt, yt))
            } else {
                None
            };
            Ok(GeneratedData {
                data: Dataset::new(y, x)?.standardize(StandardizeMode::Center)?,
                truth: SparsityPattern::from_beta(&beta),
                test,
                cap: None,
            })
        }
        ScenarioId::Ex2 => {
            let beta = DVector::from_vec(vec![5.6, 5.6, 5.6, 0.0]);
            let chol = ex2_correlation_chol()?;
            let x = gaussian_rows(spec.n, &chol, rng);
            let y = linear_response(&x, &beta, spec.sigma, rng);
            Ok(GeneratedData {
                data: Dataset::new(y, x)?.standardize(StandardizeMode::Center)?,
                truth: SparsityPattern::from_beta(&beta),
                test: None,
                cap: None,
            })
        }
        ScenarioId::Ex3 | ScenarioId::Ex4Large => {
            let beta = if spec.id == ScenarioId::Ex3 {
                ex3_beta()
            } else {
                ex4_large_beta()
            };
            let chol = ar_correlation_chol(100);
            let x = gaussian_rows(spec.n, &chol, rng);
            let y = linear_response(&x, &beta, spec.sigma, rng);
            let test = if spec.id == ScenarioId::Ex4Large {
                let xt = gaussian_rows(spec.n, &chol, rng);
                let yt = linear_response(&xt, &beta, spec.sigma, rng);
                Some((xt, yt))
            } else {
                None
            };
            Ok(GeneratedData {
                data: Dataset::new(y, x)?.standardize(StandardizeMode::Center)?,
                truth: SparsityPattern::from_beta(&beta),
                test,
                cap: None,
            })
        }
        ScenarioId::Ex7 => {
            let beta = ex1_beta();
            let chol = ar_correlation_chol(8);
            let x = gaussian_rows(spec.n, &chol, rng);
            let y = DVector::from_fn(spec.n, |i, _| {
                let eta = 5.0 + x.row(i).transpose().dot(&beta);
                let mu = 1.0 / (1.0 + (-eta).exp());
                if rng.gen::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            });
            Ok(GeneratedData {
                data: Dataset::new(y, x)?,
                truth: SparsityPattern::from_beta(&beta),
                test: None,
                cap: None,
            })
        }
        ScenarioId::Ex8 => {
            let chol = ar_correlation_chol(15);
            let latents = gaussian_rows(spec.n, &chol, rng);
            let mut x = DMatrix::zeros(spec.n, 30);
            for i in 0..spec.n {
                for f in 0..15 {
                    let (d1, d2) = factor_dummies(latents[(i, f)]);
                    x[(i, 2 * f)] = d1;
                    x[(i, 2 * f + 1)] = d2;
                }
            }
            let mut beta = DVector::zeros(30);
            beta[0] = -1.2;
            beta[1] = 1.8;
            beta[4] = 1.0;
            beta[5] = 0.5;
            beta[8] = 1.0;
            beta[9] = 1.0;
            let y = linear_response(&x, &beta, spec.sigma, rng);
            let groups = GroupMap::from_sizes(&[2; 15]);
            let truth = SparsityPattern::from_beta_grouped(&beta, &groups);
            Ok(GeneratedData {
                data: Dataset::new(y, x)?
                    .standardize(StandardizeMode::Center)?
                    .with_groups(groups)?,
                truth,
                test: None,
                cap: None,
            })
        }
        ScenarioId::Ex9 => {
            let chol = ar_correlation_chol(4);
            let latents = gaussian_rows(spec.n, &chol, rng);
            // 4 main-effect groups of 2 dummies, then the 6 pairwise
            // interaction groups of 4 products each
            let pairs: Vec<(usize, usize)> = vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
            let p = 8 + 4 * pairs.len();
            let mut x = DMatrix::zeros(spec.n, p);
            for i in 0..spec.n {
                let mut dummies = [0.0f64; 8];
                for f in 0..4 {
                    let (d1, d2) = factor_dummies(latents[(i, f)]);
                    dummies[2 * f] = d1;
                    dummies[2 * f + 1] = d2;
                    x[(i, 2 * f)] = d1;
                    x[(i, 2 * f + 1)] = d2;
                }
                for (g, &(a, b)) in pairs.iter().enumerate() {
                    let base = 8 + 4 * g;
                    x[(i, base)] = dummies[2 * a] * dummies[2 * b];
                    x[(i, base + 1)] = dummies[2 * a] * dummies[2 * b + 1];
                    x[(i, base + 2)] = dummies[2 * a + 1] * dummies[2 * b];
                    x[(i, base + 3)] = dummies[2 * a + 1] * dummies[2 * b + 1];
                }
            }
            let mut beta = DVector::zeros(p);
            beta[0] = 3.0;
            beta[1] = 2.0;
            beta[2] = 3.0;
            beta[3] = 2.0;
            // interaction of the first two factors
            beta[8] = 1.0;
            beta[9] = 1.5;
            beta[10] = 2.0;
            beta[11] = 2.5;
            let y = linear_response(&x, &beta, spec.sigma, rng);
            let mut sizes = vec![2usize; 4];
            sizes.extend(vec![4usize; pairs.len()]);
            let groups = GroupMap::from_sizes(&sizes);
            let truth = SparsityPattern::from_beta_grouped(&beta, &groups);
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .flat_map(|(g, &(a, b))| [(a, 4 + g), (b, 4 + g)])
                .collect();
            let cap = CapStructure::new(4 + pairs.len(), edges)?;
            Ok(GeneratedData {
                data: Dataset::new(y, x)?
                    .standardize(StandardizeMode::Center)?
                    .with_groups(groups)?,
                truth,
                test: None,
                cap: Some(cap),
            })
        }
        ScenarioId::Fig2 => {
            let beta = DVector::from_vec(vec![3.0, 0.0]);
            let x = DMatrix::from_fn(spec.n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = linear_response(&x, &beta, spec.sigma, rng);
            Ok(GeneratedData {
                data: Dataset::new(y, x)?.standardize(StandardizeMode::Center)?,
                truth: SparsityPattern::from_beta(&beta),
                test: None,
                cap: None,
            })
        }
    }
}
