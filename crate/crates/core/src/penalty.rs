//! Penalty regimes for the shrinkage parameters: fixed, fully hierarchical
//! (gamma hyperprior, per-coefficient or shared), and the two empirical-Bayes
//! estimators (multi-chain EM and single-chain stochastic approximation).

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Smallest delta the empirical-Bayes update may reach; keeps the gamma
/// hyperprior proper.
pub const DELTA_FLOOR: f64 = 1e-12;

/// How the hyperprior rate delta is chosen in hierarchical modes.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaSetting {
    Fixed(f64),
    /// Marginal-likelihood update delta = (k r) / sum_j E(lambda_j^2 | y),
    /// the expectation approximated by short pilot chains run before the
    /// main chain.
    Eb1 {
        outer_steps: usize,
        inner_burn_in: usize,
        inner_draws: usize,
        rel_tol: f64,
    },
}

impl DeltaSetting {
    pub fn eb1_default() -> Self {
        DeltaSetting::Eb1 {
            outer_steps: 20,
            inner_burn_in: 250,
            inner_draws: 500,
            rel_tol: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DeltaSetting::Fixed(d) => {
                if !(d > &0.0) || !d.is_finite() {
                    return Err(Error::ParamDomain(format!(
                        "delta must be positive and finite, got {d}"
                    )));
                }
            }
            DeltaSetting::Eb1 {
                outer_steps,
                inner_draws,
                ..
            } => {
                if *outer_steps == 0 || *inner_draws == 0 {
                    return Err(Error::ParamDomain(
                        "EB delta estimation needs positive outer steps and inner draws"
                            .to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        match self {
            DeltaSetting::Fixed(d) => format!("fixed({d})"),
            DeltaSetting::Eb1 {
                outer_steps,
                inner_burn_in,
                inner_draws,
                rel_tol,
            } => format!(
                "eb1(outer={outer_steps},burn={inner_burn_in},draws={inner_draws},tol={rel_tol})"
            ),
        }
    }
}

/// Step-size schedule a_n = scale / n for the stochastic-approximation
/// regime. `truncate` clamps the log-scale iterates to [-(n+1), n+1], the
/// stabilized variant's growing compact sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaSchedule {
    pub step_scale: f64,
    pub truncate: bool,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule {
            step_scale: 1.0,
            truncate: false,
        }
    }
}

impl SaSchedule {
    pub fn step(&self, n: u64) -> f64 {
        self.step_scale / n as f64
    }
}

/// Which lambda regime a chain runs under.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyMode {
    /// lambda_j^2 held at the given values for the whole chain.
    Fixed { lambda2: DVector<f64> },
    /// Per-coefficient gamma(r, delta) hyperprior; lambda_j^2 joins the Gibbs
    /// sweep.
    Hierarchical { r: f64, delta: DeltaSetting },
    /// One shared lambda^2 with a gamma(r, delta) hyperprior: the
    /// single-penalty Bayesian lasso, kept as a comparison baseline.
    HierarchicalShared { r: f64, delta: DeltaSetting },
    /// Multi-chain EM on the marginal likelihood:
    /// lambda_j <- sqrt(2 / mean(tau_j^2 draws)) between pilot chains, then a
    /// final chain at the fixed estimate.
    EbEm {
        outer_steps: usize,
        inner_burn_in: usize,
        inner_draws: usize,
        rel_tol: f64,
    },
    /// Single-chain stochastic approximation on s_j = log lambda_j:
    /// s_j <- s_j + a_n (2 - e^{2 s_j} tau_j^2) after each sweep.
    EbSa { schedule: SaSchedule },
}

impl PenaltyMode {
    pub fn hierarchical_default() -> Self {
        PenaltyMode::Hierarchical {
            r: 0.1,
            delta: DeltaSetting::eb1_default(),
        }
    }

    pub fn eb_em_default() -> Self {
        PenaltyMode::EbEm {
            outer_steps: 20,
            inner_burn_in: 2000,
            inner_draws: 2000,
            rel_tol: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PenaltyMode::Fixed { lambda2 } => {
                for (j, &l) in lambda2.iter().enumerate() {
                    if !(l > 0.0) || !l.is_finite() {
                        return Err(Error::ParamDomain(format!(
                            "fixed lambda2[{j}] must be positive and finite, got {l}"
                        )));
                    }
                }
            }
            PenaltyMode::Hierarchical { r, delta }
            | PenaltyMode::HierarchicalShared { r, delta } => {
                if !(r > &0.0) || !r.is_finite() {
                    return Err(Error::ParamDomain(format!(
                        "hyperprior shape r must be positive, got {r}"
                    )));
                }
                delta.validate()?;
            }
            PenaltyMode::EbEm {
                outer_steps,
                inner_draws,
                ..
            } => {
                if *outer_steps == 0 || *inner_draws == 0 {
                    return Err(Error::ParamDomain(
                        "EM needs positive outer steps and inner draws".to_string(),
                    ));
                }
            }
            PenaltyMode::EbSa { schedule } => {
                if !(schedule.step_scale > 0.0) {
                    return Err(Error::ParamDomain(
                        "SA step scale must be positive".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical text form; feeds the chain config hash, so it covers every
    /// numeric setting.
    pub fn describe(&self) -> String {
        match self {
            PenaltyMode::Fixed { lambda2 } => {
                let vals: Vec<String> = lambda2.iter().map(|v| format!("{v:e}")).collect();
                format!("fixed[{}]", vals.join(","))
            }
            PenaltyMode::Hierarchical { r, delta } => {
                format!("hierarchical(r={r},delta={})", delta.describe())
            }
            PenaltyMode::HierarchicalShared { r, delta } => {
                format!("hierarchical-single(r={r},delta={})", delta.describe())
            }
            PenaltyMode::EbEm {
                outer_steps,
                inner_burn_in,
                inner_draws,
                rel_tol,
            } => format!(
                "eb-em(outer={outer_steps},burn={inner_burn_in},draws={inner_draws},tol={rel_tol})"
            ),
            PenaltyMode::EbSa { schedule } => format!(
                "eb-sa(scale={},truncate={})",
                schedule.step_scale, schedule.truncate
            ),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PenaltyMode::Fixed { .. } => "fixed",
            PenaltyMode::Hierarchical { .. } => "hierarchical",
            PenaltyMode::HierarchicalShared { .. } => "hierarchical-single",
            PenaltyMode::EbEm { .. } => "eb-em",
            PenaltyMode::EbSa { .. } => "eb-sa",
        }
    }
}

/// Run the EB update for delta: each outer step calls `mean_lambda2(delta)`
/// (a pilot chain) and sets delta = (k r) / sum(mean lambda2). Stops early
/// when the relative change drops below `rel_tol`.
pub(crate) fn resolve_delta_eb1<F>(
    r: f64,
    k: usize,
    outer_steps: usize,
    rel_tol: f64,
    mut mean_lambda2: F,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<DVector<f64>>,
{
    let mut delta = 1.0f64;
    for _ in 0..outer_steps {
        let means = mean_lambda2(delta)?;
        let total: f64 = means.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical {
                context: "EB delta update".to_string(),
                diagnostic: format!("sum of lambda2 means was {total}"),
            });
        }
        let next = ((k as f64 * r) / total).max(DELTA_FLOOR);
        let rel = (next - delta).abs() / delta.max(DELTA_FLOOR);
        delta = next;
        if rel < rel_tol {
            break;
        }
    }
    Ok(delta)
}

/// Run the EM update for lambda: each outer step calls `mean_tau2(lambda)`
/// (a pilot chain at fixed lambda) and maps lambda_j = sqrt(2 / mean tau_j^2).
pub(crate) fn resolve_lambda_em<F>(
    p: usize,
    outer_steps: usize,
    rel_tol: f64,
    mut mean_tau2: F,
) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut lambda = DVector::from_element(p, 1.0);
    for _ in 0..outer_steps {
        let means = mean_tau2(&lambda)?;
        let mut next = DVector::zeros(p);
        for j in 0..p {
            let m = means[j];
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::Numerical {
                    context: "EM lambda update".to_string(),
                    diagnostic: format!("mean tau2[{j}] was {m}"),
                });
            }
            next[j] = (2.0 / m).sqrt();
        }
        let rel = (0..p)
            .map(|j| (next[j] - lambda[j]).abs() / lambda[j].max(1e-300))
            .fold(0.0f64, f64::max);
        lambda = next;
        if rel < rel_tol {
            break;
        }
    }
    Ok(lambda)
}
