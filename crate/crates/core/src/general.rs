//! Beyond the Gaussian linear model: a quadratic surrogate for general
//! parametric likelihoods, and the grouped / composite-penalty samplers built
//! on it.
//!
//! The negative log-likelihood is expanded to second order at the MLE, giving
//! the pseudo-likelihood `exp(-1/2 (b - bt)' P (b - bt))` with `P` the
//! observed information. With `Xt` the symmetric square root of `P` and
//! `yt = Xt bt`, the linear-model machinery applies with the error variance
//! pinned at 1: there is no sigma^2 in these hierarchies.
//!
//! Full conditionals (coefficient-wise):
//!
//! ```text
//! b | .           ~ N((P + Dtau^-1)^-1 P bt, (P + Dtau^-1)^-1)
//! 1/tau2_j | .    ~ inverse-Gaussian(lambda_j / |b_j|, lambda2_j)
//! lambda2_j | .   ~ gamma(r + 1, delta + tau2_j / 2)
//! ```
//!
//! and grouped, with group sizes m_j (effective sizes k_j when an ancestry
//! relation makes the penalty composite):
//!
//! ```text
//! b_j | .         ~ N(A_j^-1 Xt_j'(yt - sum_{j'!=j} Xt_j' b_j'), A_j^-1)
//! 1/tau2_j | .    ~ inverse-Gaussian(lambda_j / ||b_j||, lambda2_j)
//! lambda2_j | .   ~ gamma(r + (m_j+1)/2, delta + tau2_j / 2)
//! ```

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_chacha::ChaCha20Rng;

use crate::chain::{ChainConfig, ChainDraw, ChainKind, ChainMeta, ChainStore};
use crate::data::Dataset;
use crate::dist::{
    sample_gamma, sample_inverse_gaussian, sample_std_normal_vec, InverseGaussianParams,
};
use crate::error::{Error, Result};
use crate::groups::{CapStructure, GroupMap};
use crate::linear::BETA_FLOOR;
use crate::penalty::{resolve_delta_eb1, resolve_lambda_em, DeltaSetting, PenaltyMode, SaSchedule};

/// Quadratic surrogate for a general likelihood: the MLE and the observed
/// information at it.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaSurrogate {
    pub beta_tilde: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl LsaSurrogate {
    pub fn new(beta_tilde: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let p = beta_tilde.len();
        if precision.nrows() != p || precision.ncols() != p {
            return Err(Error::Dimension(format!(
                "precision is {}x{} but center has length {p}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        if Cholesky::new(precision.clone()).is_none() {
            return Err(Error::Numerical {
                context: "LSA surrogate".to_string(),
                diagnostic: "observed information is not positive definite".to_string(),
            });
        }
        Ok(LsaSurrogate {
            beta_tilde,
            precision,
        })
    }

    pub fn p(&self) -> usize {
        self.beta_tilde.len()
    }

    /// Pseudo design and response: the symmetric (eigen) square root Xt of
    /// the precision, so Xt'Xt recomposes it, and yt = Xt * beta_tilde.
    ///
    /// The symmetric root is unique and permutation-equivariant; any root
    /// gives the same posterior.
    pub fn pseudo_data(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let eig = self.precision.clone().symmetric_eigen();
        let p = self.p();
        for i in 0..p {
            if eig.eigenvalues[i] <= 0.0 {
                return Err(Error::Numerical {
                    context: "LSA pseudo data".to_string(),
                    diagnostic: format!(
                        "precision eigenvalue {i} is {:.3e}; matrix not positive definite",
                        eig.eigenvalues[i]
                    ),
                });
            }
        }
        let sqrt_vals = eig.eigenvalues.map(|v| v.sqrt());
        let mut xt = DMatrix::zeros(p, p);
        for i in 0..p {
            let qi = eig.eigenvectors.column(i);
            let s = sqrt_vals[i];
            for a in 0..p {
                for b in 0..p {
                    xt[(a, b)] += s * qi[a] * qi[b];
                }
            }
        }
        let yt = &xt * &self.beta_tilde;
        Ok((xt, yt))
    }
}

/// Spec-level alias for [`LsaSurrogate::pseudo_data`].
pub fn lsa_pseudo_data(surrogate: &LsaSurrogate) -> Result<(DMatrix<f64>, DVector<f64>)> {
    surrogate.pseudo_data()
}

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Newton-Raphson fit of a Bernoulli logistic regression, returning the
/// slope-block surrogate. The intercept, when fitted, is unpenalized and
/// profiled out of the returned information (Schur complement), so only the
/// slope block feeds the shrinkage hierarchy.
pub fn fit_logistic_mle(data: &Dataset, fit_intercept: bool) -> Result<LsaSurrogate> {
    let n = data.n();
    let p = data.p();
    for (i, &yi) in data.y.iter().enumerate() {
        if yi != 0.0 && yi != 1.0 {
            return Err(Error::ParamDomain(format!(
                "logistic outcomes must be 0/1; row {} has {yi}",
                i + 1
            )));
        }
    }
    let q = p + usize::from(fit_intercept);
    // augmented design: intercept column first when fitted
    let design = |i: usize, j: usize| -> f64 {
        if fit_intercept {
            if j == 0 {
                1.0
            } else {
                data.x[(i, j - 1)]
            }
        } else {
            data.x[(i, j)]
        }
    };

    let mut theta = DVector::<f64>::zeros(q);
    let mut converged = false;
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(q);
        let mut hess = DMatrix::<f64>::zeros(q, q);
        for i in 0..n {
            let mut eta = 0.0;
            for j in 0..q {
                eta += design(i, j) * theta[j];
            }
            let mu = sigmoid(eta);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let resid = data.y[i] - mu;
            for j in 0..q {
                let xij = design(i, j);
                grad[j] += xij * resid;
                for k in j..q {
                    hess[(j, k)] += w * xij * design(i, k);
                }
            }
        }
        for j in 0..q {
            for k in 0..j {
                hess[(j, k)] = hess[(k, j)];
            }
        }
        if grad.amax() < 1e-8 {
            converged = true;
            break;
        }
        let chol = Cholesky::new(hess).ok_or_else(|| Error::Numerical {
            context: "logistic Newton step".to_string(),
            diagnostic: "information matrix not positive definite (rank deficiency?)".to_string(),
        })?;
        theta += chol.solve(&grad);
        if theta.amax() > 1e3 {
            return Err(Error::NonConvergence {
                what: "logistic MLE (separation: estimates diverging)".to_string(),
                iterations: 100,
                last_iterate: theta.iter().copied().collect(),
            });
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "logistic MLE".to_string(),
            iterations: 100,
            last_iterate: theta.iter().copied().collect(),
        });
    }
    // separated data saturates the probabilities and stalls Newton at a
    // finite iterate: strict perfect classification at any theta means the
    // data is separable and no MLE exists
    if theta.amax() > 1e-8 {
        let perfect = (0..n).all(|i| {
            let mut eta = 0.0;
            for j in 0..q {
                eta += design(i, j) * theta[j];
            }
            (data.y[i] == 1.0 && eta > 0.0) || (data.y[i] == 0.0 && eta < 0.0)
        });
        if perfect {
            return Err(Error::NonConvergence {
                what: "logistic MLE (separation: estimates diverging)".to_string(),
                iterations: 100,
                last_iterate: theta.iter().copied().collect(),
            });
        }
    }

    // observed information at the MLE
    let mut info = DMatrix::<f64>::zeros(q, q);
    for i in 0..n {
        let mut eta = 0.0;
        for j in 0..q {
            eta += design(i, j) * theta[j];
        }
        let mu = sigmoid(eta);
        let w = (mu * (1.0 - mu)).max(1e-12);
        for j in 0..q {
            for k in j..q {
                info[(j, k)] += w * design(i, j) * design(i, k);
            }
        }
    }
    for j in 0..q {
        for k in 0..j {
            info[(j, k)] = info[(k, j)];
        }
    }

    if fit_intercept {
        let beta = theta.rows(1, p).into_owned();
        let i00 = info[(0, 0)];
        let i0s = info.view((0, 1), (1, p)).into_owned();
        let iss = info.view((1, 1), (p, p)).into_owned();
        let correction = i0s.transpose() * &i0s / i00;
        LsaSurrogate::new(beta, iss - correction)
    } else {
        LsaSurrogate::new(theta, info)
    }
}

/// Sampler state for the surrogate hierarchy; no sigma^2.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaGibbsState {
    pub beta: DVector<f64>,
    pub tau2: DVector<f64>,
    pub lambda2: DVector<f64>,
    pub delta: f64,
}

impl LsaGibbsState {
    pub fn validate(&self) -> Result<()> {
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

/// Grouped sampler state: one tau2 and lambda2 per group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGibbsState {
    pub beta: DVector<f64>,
    pub tau2: DVector<f64>,
    pub lambda2: DVector<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone)]
enum LsaRegime {
    Fixed,
    Hier {
        r: f64,
        delta: f64,
    },
    Sa {
        schedule: SaSchedule,
        s: DVector<f64>,
        n: u64,
    },
}

struct LsaSampler {
    precision: DMatrix<f64>,
    h: DVector<f64>, // precision * beta_tilde
    p: usize,
    regime: LsaRegime,
    b_buf: DMatrix<f64>,
    frozen_tau2: Option<DVector<f64>>,
}

impl LsaSampler {
    fn new(surrogate: &LsaSurrogate) -> Self {
        let p = surrogate.p();
        LsaSampler {
            h: &surrogate.precision * &surrogate.beta_tilde,
            precision: surrogate.precision.clone(),
            p,
            regime: LsaRegime::Fixed,
            b_buf: DMatrix::zeros(p, p),
            frozen_tau2: None,
        }
    }

    fn initial_state(&self, lambda2: DVector<f64>, delta: f64) -> Result<LsaGibbsState> {
        let mut b = self.precision.clone();
        for j in 0..self.p {
            b[(j, j)] += 1.0;
        }
        let chol = Cholesky::new(b).ok_or_else(|| Error::Numerical {
            context: "surrogate ridge initialization".to_string(),
            diagnostic: "precision + I not positive definite".to_string(),
        })?;
        Ok(LsaGibbsState {
            beta: chol.solve(&self.h),
            tau2: DVector::from_element(self.p, 1.0),
            lambda2,
            delta,
        })
    }

    fn step(&mut self, state: &mut LsaGibbsState, rng: &mut ChaCha20Rng) -> Result<()> {
        // beta block
        self.b_buf.copy_from(&self.precision);
        for j in 0..self.p {
            self.b_buf[(j, j)] += 1.0 / state.tau2[j];
        }
        let chol = Cholesky::new(self.b_buf.clone()).ok_or_else(|| Error::Numerical {
            context: "surrogate beta full conditional".to_string(),
            diagnostic: "precision + Dtau^-1 not positive definite".to_string(),
        })?;
        let mean = chol.solve(&self.h);
        let z = sample_std_normal_vec(self.p, rng);
        let u = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor is invertible");
        state.beta = mean + u;

        // tau2
        if let Some(t) = &self.frozen_tau2 {
            state.tau2.copy_from(t);
        } else {
            for j in 0..self.p {
                let lambda_j = state.lambda2[j].sqrt();
                let mu = lambda_j / state.beta[j].abs().max(BETA_FLOOR);
                let params = InverseGaussianParams::new(mu, state.lambda2[j])?;
                state.tau2[j] = 1.0 / sample_inverse_gaussian(params, rng).clamp(1e-300, 1e300);
            }
        }

        // lambda layer
        match &mut self.regime {
            LsaRegime::Fixed => {}
            LsaRegime::Hier { r, delta } => {
                for j in 0..self.p {
                    state.lambda2[j] = sample_gamma(*r + 1.0, *delta + state.tau2[j] / 2.0, rng)?;
                }
            }
            LsaRegime::Sa { schedule, s, n } => {
                let a_n = schedule.step(*n);
                for j in 0..self.p {
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

    fn run_means(
        &mut self,
        state: &mut LsaGibbsState,
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

/// One sweep of the surrogate sampler for the stateless regimes.
pub fn gibbs_step_lsa(
    state: &LsaGibbsState,
    surrogate: &LsaSurrogate,
    mode: &PenaltyMode,
    rng: &mut ChaCha20Rng,
) -> Result<LsaGibbsState> {
    state.validate()?;
    mode.validate()?;
    if state.beta.len() != surrogate.p() {
        return Err(Error::Dimension(format!(
            "state has {} coefficients, surrogate has {}",
            state.beta.len(),
            surrogate.p()
        )));
    }
    let mut sampler = LsaSampler::new(surrogate);
    sampler.regime = match mode {
        PenaltyMode::Fixed { .. } => LsaRegime::Fixed,
        PenaltyMode::Hierarchical {
            r,
            delta: DeltaSetting::Fixed(d),
        } => LsaRegime::Hier { r: *r, delta: *d },
        other => {
            return Err(Error::Unsupported(format!(
                "single-step API does not drive the {} regime; use run_chain_lsa",
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

/// Full chain under the surrogate hierarchy. Supports fixed, hierarchical
/// (with fixed or EB-estimated delta), EM, and stochastic-approximation
/// regimes; the shared-lambda variant is a linear-model baseline only.
pub fn run_chain_lsa(
    surrogate: &LsaSurrogate,
    mode: &PenaltyMode,
    cfg: &ChainConfig,
) -> Result<ChainStore> {
    cfg.validate()?;
    mode.validate()?;
    let p = surrogate.p();
    let mut rng = cfg.seed.rng();
    let mut sampler = LsaSampler::new(surrogate);

    let mut eb_lambda: Option<Vec<f64>> = None;
    let mut delta_used = 0.0;
    let lambda2_init: DVector<f64>;
    // when EB pilots ran, the main chain continues from their final state
    let mut warm_state: Option<LsaGibbsState> = None;

    match mode {
        PenaltyMode::Fixed { lambda2 } => {
            if lambda2.len() != p {
                return Err(Error::Dimension(format!(
                    "{} fixed penalties for {p} coefficients",
                    lambda2.len()
                )));
            }
            sampler.regime = LsaRegime::Fixed;
            lambda2_init = lambda2.clone();
        }
        PenaltyMode::Hierarchical { r, delta } => {
            let d = match delta {
                DeltaSetting::Fixed(d) => *d,
                DeltaSetting::Eb1 {
                    outer_steps,
                    inner_burn_in,
                    inner_draws,
                    rel_tol,
                } => {
                    let mut pilot: Option<LsaGibbsState> = None;
                    let resolved = resolve_delta_eb1(*r, p, *outer_steps, *rel_tol, |d| {
                        sampler.regime = LsaRegime::Hier { r: *r, delta: d };
                        let state = match &mut pilot {
                            Some(s) => {
                                s.delta = d;
                                s
                            }
                            None => pilot
                                .insert(sampler.initial_state(DVector::from_element(p, 1.0), d)?),
                        };
                        let (_, lam) =
                            sampler.run_means(state, *inner_burn_in, *inner_draws, &mut rng)?;
                        Ok(lam)
                    })?;
                    warm_state = pilot;
                    resolved
                }
            };
            delta_used = d;
            sampler.regime = LsaRegime::Hier { r: *r, delta: d };
            lambda2_init = DVector::from_element(p, 1.0);
        }
        PenaltyMode::EbEm {
            outer_steps,
            inner_burn_in,
            inner_draws,
            rel_tol,
        } => {
            sampler.regime = LsaRegime::Fixed;
            let mut pilot: Option<LsaGibbsState> = None;
            let lambda_hat = resolve_lambda_em(p, *outer_steps, *rel_tol, |lambda| {
                let lam2 = lambda.map(|l| l * l);
                let state = match &mut pilot {
                    Some(s) => {
                        s.lambda2.copy_from(&lam2);
                        s
                    }
                    None => pilot.insert(sampler.initial_state(lam2, 0.0)?),
                };
                let (tau, _) = sampler.run_means(state, *inner_burn_in, *inner_draws, &mut rng)?;
                Ok(tau)
            })?;
            eb_lambda = Some(lambda_hat.iter().copied().collect());
            lambda2_init = lambda_hat.map(|l| l * l);
        }
        PenaltyMode::EbSa { schedule } => {
            sampler.regime = LsaRegime::Sa {
                schedule: *schedule,
                s: DVector::zeros(p),
                n: 1,
            };
            lambda2_init = DVector::from_element(p, 1.0);
        }
        PenaltyMode::HierarchicalShared { .. } => {
            return Err(Error::Unsupported(
                "shared-lambda regime is a linear-model baseline; not available for surrogates"
                    .to_string(),
            ))
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
        kind: ChainKind::Lsa,
        p,
        n_tau: p,
        n_lambda: p,
        burn_in: cfg.burn_in,
        kept: cfg.kept,
        thin: cfg.thin,
        seed: cfg.seed,
        mode: mode.describe(),
        delta: delta_used,
        dataset_fingerprint: surrogate_fingerprint(surrogate),
        eb_lambda: None,
        group_sizes: None,
        ancestry: None,
    };
    let mut store = ChainStore::new(meta);
    for _ in 0..cfg.kept {
        for _ in 0..cfg.thin {
            sampler.step(&mut state, &mut rng)?;
        }
        store.record(ChainDraw {
            beta: state.beta.iter().copied().collect(),
            sigma2: 1.0,
            tau2: state.tau2.iter().copied().collect(),
            lambda2: state.lambda2.iter().copied().collect(),
        });
    }
    store.meta.eb_lambda = match &sampler.regime {
        LsaRegime::Sa { s, .. } => Some(s.iter().map(|v| v.exp()).collect()),
        _ => eb_lambda,
    };
    Ok(store)
}

fn surrogate_fingerprint(surrogate: &LsaSurrogate) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update((surrogate.p() as u64).to_le_bytes());
    for v in surrogate.beta_tilde.iter() {
        h.update(v.to_le_bytes());
    }
    for v in surrogate.precision.iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Grouped sampler over the surrogate pseudo-data. `cap` carries the
/// ancestry relation; with no edges it reduces exactly to the plain group
/// sampler.
struct GroupSampler {
    xt: DMatrix<f64>,
    yt: DVector<f64>,
    groups: GroupMap,
    cap: CapStructure,
    /// per group: Gram block Xt_j' Xt_j
    gram: Vec<DMatrix<f64>>,
    k_eff: Vec<usize>,
    r: f64,
    delta: f64,
    hierarchical: bool,
    frozen_tau2: Option<DVector<f64>>,
}

impl GroupSampler {
    fn new(surrogate: &LsaSurrogate, groups: &GroupMap, cap: &CapStructure) -> Result<Self> {
        if groups.p() != surrogate.p() {
            return Err(Error::Dimension(format!(
                "groups cover {} columns, surrogate has {}",
                groups.p(),
                surrogate.p()
            )));
        }
        if cap.n_groups() != groups.n_groups() {
            return Err(Error::Dimension(format!(
                "ancestry relation over {} groups, map has {}",
                cap.n_groups(),
                groups.n_groups()
            )));
        }
        let (xt, yt) = surrogate.pseudo_data()?;
        let gram: Vec<DMatrix<f64>> = (0..groups.n_groups())
            .map(|j| {
                let xj = xt.select_columns(groups.columns(j).iter());
                xj.transpose() * &xj
            })
            .collect();
        let k_eff = (0..groups.n_groups())
            .map(|j| cap.effective_size(groups, j))
            .collect();
        Ok(GroupSampler {
            xt,
            yt,
            groups: groups.clone(),
            cap: cap.clone(),
            gram,
            k_eff,
            r: 0.1,
            delta: 1.0,
            hierarchical: true,
            frozen_tau2: None,
        })
    }

    fn initial_state(&self, delta: f64) -> Result<GroupGibbsState> {
        let p = self.groups.p();
        let nj = self.groups.n_groups();
        let mut a = self.xt.transpose() * &self.xt;
        for j in 0..p {
            a[(j, j)] += 1.0;
        }
        let chol = Cholesky::new(a).ok_or_else(|| Error::Numerical {
            context: "group ridge initialization".to_string(),
            diagnostic: "Xt'Xt + I not positive definite".to_string(),
        })?;
        Ok(GroupGibbsState {
            beta: chol.solve(&(self.xt.transpose() * &self.yt)),
            tau2: DVector::from_element(nj, 1.0),
            lambda2: DVector::from_element(nj, 1.0),
            delta,
        })
    }

    /// Prior variance for group j's coefficients: own 1/tau2 plus each
    /// ancestor's, inverted.
    fn sigma2_of(&self, tau2: &DVector<f64>, j: usize) -> f64 {
        let mut prec = 1.0 / tau2[j];
        for &a in self.cap.ancestors(j) {
            prec += 1.0 / tau2[a];
        }
        1.0 / prec
    }

    /// Norm the inverse-Gaussian conditional uses for group j: own block plus
    /// every descendant's.
    fn penalty_norm(&self, beta: &DVector<f64>, j: usize) -> f64 {
        let mut ss: f64 = self
            .groups
            .columns(j)
            .iter()
            .map(|&c| beta[c] * beta[c])
            .sum();
        for &d in self.cap.descendants(j) {
            ss += self
                .groups
                .columns(d)
                .iter()
                .map(|&c| beta[c] * beta[c])
                .sum::<f64>();
        }
        ss.sqrt()
    }

    fn step(&mut self, state: &mut GroupGibbsState, rng: &mut ChaCha20Rng) -> Result<()> {
        let nj = self.groups.n_groups();
        // full residual on the pseudo data, maintained incrementally
        let mut residual = &self.yt - &self.xt * &state.beta;
        for j in 0..nj {
            let cols = self.groups.columns(j).to_vec();
            let m = cols.len();
            // sigma_j^2 from the current tau2 before this group's draw
            let s2 = self.sigma2_of(&state.tau2, j);
            let mut a = self.gram[j].clone();
            for i in 0..m {
                a[(i, i)] += 1.0 / s2;
            }
            let chol = Cholesky::new(a).ok_or_else(|| Error::Numerical {
                context: "group beta full conditional".to_string(),
                diagnostic: format!("block {j} precision not positive definite"),
            })?;
            // z = Xt_j' (residual + Xt_j b_j)
            let b_old = DVector::from_fn(m, |i, _| state.beta[cols[i]]);
            let mut z = DVector::from_fn(m, |i, _| self.xt.column(cols[i]).dot(&residual));
            z += &self.gram[j] * &b_old;
            let mean = chol.solve(&z);
            let noise = chol
                .l()
                .transpose()
                .solve_upper_triangular(&sample_std_normal_vec(m, rng))
                .expect("Cholesky factor is invertible");
            let b_new = mean + noise;
            for (i, &c) in cols.iter().enumerate() {
                let d = b_new[i] - state.beta[c];
                if d != 0.0 {
                    residual.axpy(-d, &self.xt.column(c).into_owned(), 1.0);
                }
                state.beta[c] = b_new[i];
            }
        }

        if let Some(t) = &self.frozen_tau2 {
            state.tau2.copy_from(t);
        } else {
            for j in 0..nj {
                let lambda_j = state.lambda2[j].sqrt();
                let norm = self.penalty_norm(&state.beta, j).max(BETA_FLOOR);
                let params = InverseGaussianParams::new(lambda_j / norm, state.lambda2[j])?;
                state.tau2[j] = 1.0 / sample_inverse_gaussian(params, rng).clamp(1e-300, 1e300);
            }
        }

        if self.hierarchical {
            for j in 0..nj {
                let shape = self.r + (self.k_eff[j] as f64 + 1.0) / 2.0;
                state.lambda2[j] = sample_gamma(shape, self.delta + state.tau2[j] / 2.0, rng)?;
            }
        }
        Ok(())
    }

    fn run_means(
        &mut self,
        state: &mut GroupGibbsState,
        burn_in: usize,
        draws: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<DVector<f64>> {
        for _ in 0..burn_in {
            self.step(state, rng)?;
        }
        let nj = self.groups.n_groups();
        let mut lam_acc = DVector::zeros(nj);
        for _ in 0..draws {
            self.step(state, rng)?;
            lam_acc += &state.lambda2;
        }
        Ok(lam_acc / draws as f64)
    }
}

/// One sweep of the plain group sampler (empty ancestry).
pub fn gibbs_step_group(
    state: &GroupGibbsState,
    surrogate: &LsaSurrogate,
    groups: &GroupMap,
    mode: &PenaltyMode,
    rng: &mut ChaCha20Rng,
) -> Result<GroupGibbsState> {
    let cap = CapStructure::empty(groups.n_groups());
    gibbs_step_cap(state, &cap, surrogate, groups, mode, rng)
}

/// One sweep of the composite-penalty sampler.
pub fn gibbs_step_cap(
    state: &GroupGibbsState,
    structure: &CapStructure,
    surrogate: &LsaSurrogate,
    groups: &GroupMap,
    mode: &PenaltyMode,
    rng: &mut ChaCha20Rng,
) -> Result<GroupGibbsState> {
    mode.validate()?;
    let mut sampler = GroupSampler::new(surrogate, groups, structure)?;
    match mode {
        PenaltyMode::Fixed { .. } => {
            sampler.hierarchical = false;
        }
        PenaltyMode::Hierarchical {
            r,
            delta: DeltaSetting::Fixed(d),
        } => {
            sampler.r = *r;
            sampler.delta = *d;
        }
        other => {
            return Err(Error::Unsupported(format!(
                "single-step API does not drive the {} regime on grouped chains",
                other.kind_name()
            )))
        }
    }
    let mut next = state.clone();
    if let PenaltyMode::Fixed { lambda2 } = mode {
        if lambda2.len() != groups.n_groups() {
            return Err(Error::Dimension(format!(
                "{} fixed penalties for {} groups",
                lambda2.len(),
                groups.n_groups()
            )));
        }
        next.lambda2.copy_from(lambda2);
    }
    sampler.step(&mut next, rng)?;
    Ok(next)
}

/// Full chain for the plain group penalty.
pub fn run_chain_group(
    surrogate: &LsaSurrogate,
    groups: &GroupMap,
    mode: &PenaltyMode,
    cfg: &ChainConfig,
) -> Result<ChainStore> {
    let cap = CapStructure::empty(groups.n_groups());
    run_chain_cap_inner(surrogate, groups, &cap, mode, cfg, ChainKind::Group)
}

/// Full chain for the composite penalty.
pub fn run_chain_cap(
    surrogate: &LsaSurrogate,
    groups: &GroupMap,
    structure: &CapStructure,
    mode: &PenaltyMode,
    cfg: &ChainConfig,
) -> Result<ChainStore> {
    run_chain_cap_inner(surrogate, groups, structure, mode, cfg, ChainKind::Cap)
}

fn run_chain_cap_inner(
    surrogate: &LsaSurrogate,
    groups: &GroupMap,
    structure: &CapStructure,
    mode: &PenaltyMode,
    cfg: &ChainConfig,
    kind: ChainKind,
) -> Result<ChainStore> {
    cfg.validate()?;
    mode.validate()?;
    let mut rng = cfg.seed.rng();
    let mut sampler = GroupSampler::new(surrogate, groups, structure)?;
    let nj = groups.n_groups();

    let mut delta_used = 0.0;
    let mut lambda2_init = DVector::from_element(nj, 1.0);
    let mut warm_state: Option<GroupGibbsState> = None;
    match mode {
        PenaltyMode::Fixed { lambda2 } => {
            if lambda2.len() != nj {
                return Err(Error::Dimension(format!(
                    "{} fixed penalties for {nj} groups",
                    lambda2.len()
                )));
            }
            sampler.hierarchical = false;
            lambda2_init = lambda2.clone();
        }
        PenaltyMode::Hierarchical { r, delta } => {
            sampler.r = *r;
            let d = match delta {
                DeltaSetting::Fixed(d) => *d,
                DeltaSetting::Eb1 {
                    outer_steps,
                    inner_burn_in,
                    inner_draws,
                    rel_tol,
                } => {
                    let mut pilot: Option<GroupGibbsState> = None;
                    let resolved = resolve_delta_eb1(*r, nj, *outer_steps, *rel_tol, |d| {
                        sampler.delta = d;
                        let state = match &mut pilot {
                            Some(s) => {
                                s.delta = d;
                                s
                            }
                            None => pilot.insert(sampler.initial_state(d)?),
                        };
                        sampler.run_means(state, *inner_burn_in, *inner_draws, &mut rng)
                    })?;
                    warm_state = pilot;
                    resolved
                }
            };
            sampler.delta = d;
            delta_used = d;
        }
        other => {
            return Err(Error::Unsupported(format!(
                "{} regime is not available on grouped chains",
                other.kind_name()
            )))
        }
    }

    let mut state = match warm_state {
        Some(mut s) => {
            s.delta = delta_used;
            s
        }
        None => {
            let mut s = sampler.initial_state(delta_used)?;
            s.lambda2 = lambda2_init;
            s
        }
    };
    for _ in 0..cfg.burn_in {
        sampler.step(&mut state, &mut rng)?;
    }

    let meta = ChainMeta {
        kind,
        p: groups.p(),
        n_tau: nj,
        n_lambda: nj,
        burn_in: cfg.burn_in,
        kept: cfg.kept,
        thin: cfg.thin,
        seed: cfg.seed,
        mode: mode.describe(),
        delta: delta_used,
        dataset_fingerprint: surrogate_fingerprint(surrogate),
        eb_lambda: None,
        group_sizes: Some(groups.sizes()),
        ancestry: if structure.edges().is_empty() {
            None
        } else {
            Some(structure.edges().to_vec())
        },
    };
    let mut store = ChainStore::new(meta);
    for _ in 0..cfg.kept {
        for _ in 0..cfg.thin {
            sampler.step(&mut state, &mut rng)?;
        }
        store.record(ChainDraw {
            beta: state.beta.iter().copied().collect(),
            sigma2: 1.0,
            tau2: state.tau2.iter().copied().collect(),
            lambda2: state.lambda2.iter().copied().collect(),
        });
    }
    Ok(store)
}
