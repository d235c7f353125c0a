//! Gibbs sampler for Gaussian linear regression with per-coefficient
//! shrinkage.
//!
//! The hierarchy is
//!
//! ```text
//! y | X, b, s2          ~ N(X b, s2 I)
//! b | s2, tau2          ~ N(0, s2 diag(tau2))
//! tau2_j | lambda2_j    ~ Exp(lambda2_j / 2)
//! lambda2_j             ~ gamma(r, delta)      (hierarchical regimes)
//! pi(s2)                ~ 1/s2
//! ```
//!
//! One sweep block-updates b, then s2, then every 1/tau2_j (inverse-Gaussian),
//! then the lambda layer according to the active [`PenaltyMode`]: untouched
//! when fixed, a gamma draw per coefficient (or one shared draw) under the
//! hyperprior, or a stochastic-approximation step on log lambda.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_chacha::ChaCha20Rng;

use crate::chain::{ChainConfig, ChainDraw, ChainKind, ChainMeta, ChainStore};
use crate::data::Dataset;
use crate::dist::{
    sample_gamma, sample_inverse_gamma, sample_inverse_gaussian, sample_std_normal_vec,
    InverseGaussianParams,
};
use crate::error::{Error, Result};
use crate::penalty::{resolve_delta_eb1, resolve_lambda_em, DeltaSetting, PenaltyMode, SaSchedule};

/// |beta_j| is clamped here before forming the inverse-Gaussian conditional
/// mean; the singularity at beta_j = 0 is removable and this keeps the draw
/// finite.
pub const BETA_FLOOR: f64 = 1e-10;

/// One sampler state for the linear hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGibbsState {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub tau2: DVector<f64>,
    pub lambda2: DVector<f64>,
    pub delta: f64,
}

impl LinearGibbsState {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::ParamDomain(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        for (name, v) in [("tau2", &self.tau2), ("lambda2", &self.lambda2)] {
            for (j, &x) in v.iter().enumerate() {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(Error::ParamDomain(format!(
                        "{name}[{j}] must be positive and finite, got {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lambda regime after any empirical-Bayes resolution.
#[derive(Debug, Clone)]
enum Regime {
    Fixed,
    Hier {
        r: f64,
        delta: f64,
    },
    Shared {
        r: f64,
        delta: f64,
    },
    Sa {
        schedule: SaSchedule,
        s: DVector<f64>,
        n: u64,
    },
}

/// Sweep engine owning the data products the updates reuse.
pub struct LinearSampler {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    n: usize,
    p: usize,
    regime: Regime,
    a_buf: DMatrix<f64>,
    pub(crate) frozen_tau2: Option<DVector<f64>>,
    pub(crate) frozen_sigma2: Option<f64>,
}

fn check_centered(data: &Dataset) -> Result<()> {
    let scale = data.y.amax().max(data.x.amax()).max(1.0);
    if data.worst_mean() > 1e-8 * scale {
        return Err(Error::ParamDomain(
            "data must be centered before sampling (call standardize first)".to_string(),
        ));
    }
    Ok(())
}

impl LinearSampler {
    fn new(data: &Dataset) -> Self {
        let p = data.p();
        LinearSampler {
            xtx: data.x.transpose() * &data.x,
            xty: data.x.transpose() * &data.y,
            yty: data.y.dot(&data.y),
            n: data.n(),
            p,
            regime: Regime::Fixed,
            a_buf: DMatrix::zeros(p, p),
            frozen_tau2: None,
            frozen_sigma2: None,
        }
    }

    fn rss(&self, beta: &DVector<f64>) -> f64 {
        (self.yty - 2.0 * beta.dot(&self.xty) + beta.dot(&(&self.xtx * beta))).max(0.0)
    }

    /// Ridge start with unit ridge; scale-sane for arbitrary data.
    fn initial_state(&self, lambda2: DVector<f64>, delta: f64) -> Result<LinearGibbsState> {
        let mut a = self.xtx.clone();
        for j in 0..self.p {
            a[(j, j)] += 1.0;
        }
        let chol = Cholesky::new(a).ok_or_else(|| Error::Numerical {
            context: "ridge initialization".to_string(),
            diagnostic: "X'X + I was not positive definite".to_string(),
        })?;
        let beta = chol.solve(&self.xty);
        let sigma2 = (self.rss(&beta) / self.n as f64).max(1e-8);
        Ok(LinearGibbsState {
            beta,
            sigma2,
            tau2: DVector::from_element(self.p, 1.0),
            lambda2,
            delta,
        })
    }

    fn draw_beta(&mut self, state: &mut LinearGibbsState, rng: &mut ChaCha20Rng) -> Result<()> {
        self.a_buf.copy_from(&self.xtx);
        for j in 0..self.p {
            self.a_buf[(j, j)] += 1.0 / state.tau2[j];
        }
        let chol: Cholesky<f64, Dyn> =
            Cholesky::new(self.a_buf.clone()).ok_or_else(|| Error::Numerical {
                context: "beta full conditional".to_string(),
                diagnostic: format!(
                    "X'X + D^-1 not positive definite (min 1/tau2 {:.3e}, max {:.3e})",
                    state.tau2.map(|t| 1.0 / t).min(),
                    state.tau2.map(|t| 1.0 / t).max()
                ),
            })?;
        let mean = chol.solve(&self.xty);
        let z = sample_std_normal_vec(self.p, rng);
        let u = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor is invertible");
        state.beta = mean + u * state.sigma2.sqrt();
        Ok(())
    }

    fn draw_sigma2(&self, state: &mut LinearGibbsState, rng: &mut ChaCha20Rng) -> Result<()> {
        if let Some(s2) = self.frozen_sigma2 {
            state.sigma2 = s2;
            return Ok(());
        }
        let shape = (self.n as f64 - 1.0) / 2.0 + self.p as f64 / 2.0;
        let mut scale = self.rss(&state.beta) / 2.0;
        for j in 0..self.p {
            scale += state.beta[j] * state.beta[j] / state.tau2[j] / 2.0;
        }
        state.sigma2 = sample_inverse_gamma(shape, scale.max(1e-300), rng)?;
        Ok(())
    }

    fn draw_tau2(&self, state: &mut LinearGibbsState, rng: &mut ChaCha20Rng) -> Result<()> {
        if let Some(t) = &self.frozen_tau2 {
            state.tau2.copy_from(t);
            return Ok(());
        }
        let sigma = state.sigma2.sqrt();
        for j in 0..self.p {
            let lambda_j = state.lambda2[j].sqrt();
            let mu = lambda_j * sigma / state.beta[j].abs().max(BETA_FLOOR);
            let params = InverseGaussianParams::new(mu, state.lambda2[j])?;
            let inv_tau2 = sample_inverse_gaussian(params, rng).clamp(1e-300, 1e300);
            state.tau2[j] = 1.0 / inv_tau2;
        }
        Ok(())
    }

    fn update_lambda(&mut self, state: &mut LinearGibbsState, rng: &mut ChaCha20Rng) -> Result<()> {
        match &mut self.regime {
            Regime::Fixed => {}
            Regime::Hier { r, delta } => {
                for j in 0..state.lambda2.len() {
                    state.lambda2[j] = sample_gamma(*r + 1.0, *delta + state.tau2[j] / 2.0, rng)?;
                }
            }
            Regime::Shared { r, delta } => {
                let rate = *delta + state.tau2.iter().sum::<f64>() / 2.0;
                let shared = sample_gamma(state.tau2.len() as f64 + *r, rate, rng)?;
                state.lambda2.fill(shared);
            }
            Regime::Sa { schedule, s, n } => {
                let a_n = schedule.step(*n);
                for j in 0..s.len() {
                    s[j] += a_n * (2.0 - (2.0 * s[j]).exp() * state.tau2[j]);
                    if schedule.truncate {
                        let bound = *n as f64 + 1.0;
                        s[j] = s[j].clamp(-bound, bound);
                    }
                    state.lambda2[j] = (2.0 * s[j]).exp();
                }
                *n += 1;
            }
        }
        Ok(())
    }

    /// One full sweep: beta block, sigma2, every 1/tau2_j, then the lambda
    /// layer.
    pub(crate) fn step(
        &mut self,
        state: &mut LinearGibbsState,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        self.draw_beta(state, rng)?;
        self.draw_sigma2(state, rng)?;
        self.draw_tau2(state, rng)?;
        self.update_lambda(state, rng)
    }

    fn n_lambda(&self) -> usize {
        match self.regime {
            Regime::Shared { .. } => 1,
            _ => self.p,
        }
    }

    fn record(&self, state: &LinearGibbsState) -> ChainDraw {
        let lambda2 = match self.regime {
            Regime::Shared { .. } => vec![state.lambda2[0]],
            _ => state.lambda2.iter().copied().collect(),
        };
        ChainDraw {
            beta: state.beta.iter().copied().collect(),
            sigma2: state.sigma2,
            tau2: state.tau2.iter().copied().collect(),
            lambda2,
        }
    }

    /// Burn in, then record `draws` kept states with the given thinning;
    /// returns coordinatewise means of tau2 and lambda2 over the kept states.
    /// The empirical-Bayes pilot runs pass the evolving state back in so each
    /// outer step continues where the last one stopped.
    fn run_means(
        &mut self,
        state: &mut LinearGibbsState,
        burn_in: usize,
        draws: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        for _ in 0..burn_in {
            self.step(state, rng)?;
        }
        let mut tau_acc = DVector::zeros(self.p);
        let mut lam_acc = DVector::zeros(self.p);
        for _ in 0..draws {
            self.step(state, rng)?;
            tau_acc += &state.tau2;
            lam_acc += &state.lambda2;
        }
        Ok((tau_acc / draws as f64, lam_acc / draws as f64))
    }
}

/// One sweep of the linear sampler as a pure function of the state.
///
/// Covers the stateless regimes: fixed penalties and the hierarchical updates
/// with an explicit delta. The empirical-Bayes regimes need cross-sweep
/// bookkeeping and run through [`run_chain_linear`].
pub fn gibbs_step_linear(
    state: &LinearGibbsState,
    data: &Dataset,
    mode: &PenaltyMode,
    rng: &mut ChaCha20Rng,
) -> Result<LinearGibbsState> {
    state.validate()?;
    mode.validate()?;
    check_centered(data)?;
    if state.beta.len() != data.p() {
        return Err(Error::Dimension(format!(
            "state has {} coefficients, data has {}",
            state.beta.len(),
            data.p()
        )));
    }
    let mut sampler = LinearSampler::new(data);
    sampler.regime = match mode {
        PenaltyMode::Fixed { lambda2 } => {
            if lambda2.len() != data.p() {
                return Err(Error::Dimension(format!(
                    "{} fixed penalties for {} coefficients",
                    lambda2.len(),
                    data.p()
                )));
            }
            Regime::Fixed
        }
        PenaltyMode::Hierarchical {
            r,
            delta: DeltaSetting::Fixed(d),
        } => Regime::Hier { r: *r, delta: *d },
        PenaltyMode::HierarchicalShared {
            r,
            delta: DeltaSetting::Fixed(d),
        } => Regime::Shared { r: *r, delta: *d },
        other => {
            return Err(Error::Unsupported(format!(
                "single-step API does not drive the {} regime; use run_chain_linear",
                other.kind_name()
            )))
        }
    };
    let mut next = state.clone();
    if let PenaltyMode::Fixed { lambda2 } = mode {
        next.lambda2.copy_from(lambda2);
    }
    sampler.step(&mut next, rng)?;
    Ok(next)
}

/// Run a full chain: resolve any empirical-Bayes hyperparameters, burn in,
/// thin, and record `cfg.kept` draws. Deterministic given `cfg.seed`.
pub fn run_chain_linear(
    data: &Dataset,
    mode: &PenaltyMode,
    cfg: &ChainConfig,
) -> Result<ChainStore> {
    cfg.validate()?;
    mode.validate()?;
    check_centered(data)?;
    let p = data.p();
    let mut rng = cfg.seed.rng();
    let mut sampler = LinearSampler::new(data);

    let mut eb_lambda: Option<Vec<f64>> = None;
    let mut delta_used = 0.0;
    let lambda2_init: DVector<f64>;
    // when EB pilots ran, the main chain continues from their final state
    let mut warm_state: Option<LinearGibbsState> = None;

    match mode {
        PenaltyMode::Fixed { lambda2 } => {
            if lambda2.len() != p {
                return Err(Error::Dimension(format!(
                    "{} fixed penalties for {p} coefficients",
                    lambda2.len()
                )));
            }
            sampler.regime = Regime::Fixed;
            lambda2_init = lambda2.clone();
        }
        PenaltyMode::Hierarchical { r, delta } | PenaltyMode::HierarchicalShared { r, delta } => {
            let shared = matches!(mode, PenaltyMode::HierarchicalShared { .. });
            let n_lambda = if shared { 1 } else { p };
            let d = match delta {
                DeltaSetting::Fixed(d) => *d,
                DeltaSetting::Eb1 {
                    outer_steps,
                    inner_burn_in,
                    inner_draws,
                    rel_tol,
                } => {
                    let mut pilot: Option<LinearGibbsState> = None;
                    let resolved = resolve_delta_eb1(*r, n_lambda, *outer_steps, *rel_tol, |d| {
                        sampler.regime = if shared {
                            Regime::Shared { r: *r, delta: d }
                        } else {
                            Regime::Hier { r: *r, delta: d }
                        };
                        let state = match &mut pilot {
                            Some(s) => {
                                s.delta = d;
                                s
                            }
                            None => pilot
                                .insert(sampler.initial_state(DVector::from_element(p, 1.0), d)?),
                        };
                        let (_, lam_means) =
                            sampler.run_means(state, *inner_burn_in, *inner_draws, &mut rng)?;
                        Ok(if shared {
                            DVector::from_element(1, lam_means[0])
                        } else {
                            lam_means
                        })
                    })?;
                    warm_state = pilot;
                    resolved
                }
            };
            delta_used = d;
            sampler.regime = if shared {
                Regime::Shared { r: *r, delta: d }
            } else {
                Regime::Hier { r: *r, delta: d }
            };
            lambda2_init = DVector::from_element(p, 1.0);
        }
        PenaltyMode::EbEm {
            outer_steps,
            inner_burn_in,
            inner_draws,
            rel_tol,
        } => {
            sampler.regime = Regime::Fixed;
            let mut pilot: Option<LinearGibbsState> = None;
            let lambda_hat = resolve_lambda_em(p, *outer_steps, *rel_tol, |lambda| {
                let lam2 = lambda.map(|l| l * l);
                let state = match &mut pilot {
                    Some(s) => {
                        s.lambda2.copy_from(&lam2);
                        s
                    }
                    None => pilot.insert(sampler.initial_state(lam2, 0.0)?),
                };
                let (tau_means, _) =
                    sampler.run_means(state, *inner_burn_in, *inner_draws, &mut rng)?;
                Ok(tau_means)
            })?;
            eb_lambda = Some(lambda_hat.iter().copied().collect());
            lambda2_init = lambda_hat.map(|l| l * l);
        }
        PenaltyMode::EbSa { schedule } => {
            sampler.regime = Regime::Sa {
                schedule: *schedule,
                s: DVector::zeros(p),
                n: 1,
            };
            lambda2_init = DVector::from_element(p, 1.0);
        }
    }

    let mut state = match warm_state {
        Some(mut s) => {
            s.delta = delta_used;
            s
        }
        None => sampler.initial_state(lambda2_init, delta_used)?,
    };
    for _ in 0..cfg.burn_in {
        sampler.step(&mut state, &mut rng)?;
    }

    let meta = ChainMeta {
        kind: ChainKind::Linear,
        p,
        n_tau: p,
        n_lambda: sampler.n_lambda(),
        burn_in: cfg.burn_in,
        kept: cfg.kept,
        thin: cfg.thin,
        seed: cfg.seed,
        mode: mode.describe(),
        delta: delta_used,
        dataset_fingerprint: data.fingerprint(),
        eb_lambda: None,
        group_sizes: None,
        ancestry: None,
    };
    let mut store = ChainStore::new(meta);
    for _ in 0..cfg.kept {
        for _ in 0..cfg.thin {
            sampler.step(&mut state, &mut rng)?;
        }
        debug_assert!(state.validate().is_ok());
        store.record(sampler.record(&state));
    }

    store.meta.eb_lambda = match &sampler.regime {
        Regime::Sa { s, .. } => Some(s.iter().map(|v| v.exp()).collect()),
        _ => eb_lambda,
    };
    Ok(store)
}
