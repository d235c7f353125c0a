//! Everything downstream of a chain: plug-in selection at a point estimate of
//! lambda, frequency selection across draws, posterior model probabilities,
//! sparse model averaging for prediction, and prediction scoring.
//!
//! All of it works through the conditional posterior mode: each lambda draw is
//! plugged into the weighted l1 objective and solved, giving an exactly sparse
//! coefficient vector per draw.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::chain::ChainStore;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::general::LsaSurrogate;
use crate::groups::GroupMap;
use crate::solver::{solve_group_lasso_warm, GramLasso, GroupL1Problem, SolverConfig};

/// Which variables (or groups) a conditional mode keeps. Equal patterns hash
/// equal, so these key the model-probability counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SparsityPattern {
    bits: Vec<bool>,
}

impl SparsityPattern {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        SparsityPattern { bits }
    }

    /// Exact-zero test, coefficient-wise.
    pub fn from_beta(beta: &DVector<f64>) -> Self {
        SparsityPattern {
            bits: beta.iter().map(|&b| b != 0.0).collect(),
        }
    }

    /// Group-level pattern: a group is selected iff any of its coefficients
    /// is nonzero.
    pub fn from_beta_grouped(beta: &DVector<f64>, groups: &GroupMap) -> Self {
        SparsityPattern {
            bits: (0..groups.n_groups())
                .map(|j| groups.columns(j).iter().any(|&c| beta[c] != 0.0))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn selected(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn count_selected(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&j| self.bits[j]).collect()
    }

    /// "0110..." rendering used by the CSV reports.
    pub fn to_01_string(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }
}

/// A selected model: the pattern, the exactly sparse coefficients behind it,
/// the strategy that produced it, and the penalty point it was solved at.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub pattern: SparsityPattern,
    pub beta: DVector<f64>,
    pub strategy: String,
    pub lambda: DVector<f64>,
    /// Per-variable (or per-group) inclusion frequencies when the strategy
    /// computes them.
    pub inclusion_freq: Option<DVector<f64>>,
}

impl SelectionResult {
    /// The pattern must be exactly the nonzero set of `beta` (group-level
    /// when the problem is grouped).
    pub fn check_consistent(&self, groups: Option<&GroupMap>) -> Result<()> {
        let derived = match groups {
            Some(g) => SparsityPattern::from_beta_grouped(&self.beta, g),
            None => SparsityPattern::from_beta(&self.beta),
        };
        if derived != self.pattern {
            return Err(Error::Numerical {
                context: "selection result".to_string(),
                diagnostic: format!(
                    "pattern {} does not match nonzero set {}",
                    self.pattern.to_01_string(),
                    derived.to_01_string()
                ),
            });
        }
        Ok(())
    }
}

/// Point statistic of the lambda draws to plug into the mode solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatistic {
    Mean,
    Median,
    /// The empirical-Bayes point recorded by an EM or stochastic-approximation
    /// run.
    EbPoint,
}

impl PointStatistic {
    fn tag(&self) -> &'static str {
        match self {
            PointStatistic::Mean => "mean",
            PointStatistic::Median => "median",
            PointStatistic::EbPoint => "eb",
        }
    }
}

/// Which objective the conditional-mode solve minimizes.
///
/// The mode of the conditional posterior given lambda minimizes
/// L(b) + sum_j lambda_j |b_j| with L the minus log-(pseudo)likelihood; for
/// the Gaussian linear model (unit variance) L is half the residual sum of
/// squares, so on the no-half RSS solver the effective penalties are
/// 2 lambda_j. `PlainRss` instead plugs lambda_j directly into the no-half
/// objective. The quadratic surrogate is already in minus-log-likelihood
/// form, so the two settings coincide there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeObjective {
    #[default]
    PosteriorMode,
    PlainRss,
}

/// The conditional-mode problem a chain's lambda draws are plugged into.
pub enum ModeProblem<'a> {
    /// Weighted l1 on the original design: RSS + sum lambda_j |b_j|.
    Linear { data: &'a Dataset },
    /// Quadratic l1 around the surrogate MLE.
    Quadratic { surrogate: &'a LsaSurrogate },
    /// Weighted group lasso on the surrogate pseudo-data.
    Group {
        surrogate: &'a LsaSurrogate,
        groups: &'a GroupMap,
    },
}

impl<'a> ModeProblem<'a> {
    pub fn p(&self) -> usize {
        match self {
            ModeProblem::Linear { data } => data.p(),
            ModeProblem::Quadratic { surrogate } => surrogate.p(),
            ModeProblem::Group { surrogate, .. } => surrogate.p(),
        }
    }

    /// Penalty count: one per coefficient, or one per group.
    pub fn n_penalties(&self) -> usize {
        match self {
            ModeProblem::Group { groups, .. } => groups.n_groups(),
            _ => self.p(),
        }
    }

    pub fn groups(&self) -> Option<&'a GroupMap> {
        match self {
            ModeProblem::Group { groups, .. } => Some(groups),
            _ => None,
        }
    }

    fn pattern_of(&self, beta: &DVector<f64>) -> SparsityPattern {
        match self.groups() {
            Some(g) => SparsityPattern::from_beta_grouped(beta, g),
            None => SparsityPattern::from_beta(beta),
        }
    }

    /// Penalties actually handed to the solver. The RSS-convention solvers
    /// (linear, group) need doubled penalties to express the posterior-mode
    /// objective; the quadratic problem is already in that form.
    fn effective_lambda(&self, lambda: &DVector<f64>, objective: ModeObjective) -> DVector<f64> {
        match (self, objective) {
            (ModeProblem::Quadratic { .. }, _) => lambda.clone(),
            (_, ModeObjective::PlainRss) => lambda.clone(),
            (_, ModeObjective::PosteriorMode) => lambda * 2.0,
        }
    }
}

/// Prepared solver that amortizes the Gram products across repeated solves.
struct ModeSolver<'a> {
    problem: &'a ModeProblem<'a>,
    gram: Option<GramLasso>,
    group: Option<GroupL1Problem>,
}

impl<'a> ModeSolver<'a> {
    fn new(problem: &'a ModeProblem<'a>) -> Result<Self> {
        let (gram, group) = match problem {
            ModeProblem::Linear { data } => (Some(GramLasso::from_design(&data.x, &data.y)), None),
            ModeProblem::Quadratic { surrogate } => (
                Some(GramLasso::from_quadratic(
                    &surrogate.precision,
                    &surrogate.beta_tilde,
                )),
                None,
            ),
            ModeProblem::Group { surrogate, groups } => {
                let (xt, yt) = surrogate.pseudo_data()?;
                (
                    None,
                    Some(GroupL1Problem {
                        design: xt,
                        response: yt,
                        groups: (*groups).clone(),
                        penalties: DVector::zeros(groups.n_groups()),
                        ancestry: None,
                    }),
                )
            }
        };
        Ok(ModeSolver {
            problem,
            gram,
            group,
        })
    }

    fn solve(
        &mut self,
        lambda: &DVector<f64>,
        warm: Option<&DVector<f64>>,
        cfg: &SolverConfig,
    ) -> Result<DVector<f64>> {
        if let Some(gram) = &self.gram {
            let (beta, _) = gram.solve(lambda, warm, cfg)?;
            Ok(beta)
        } else {
            let gp = self.group.as_mut().expect("group problem prepared");
            gp.penalties.copy_from(lambda);
            solve_group_lasso_warm(gp, cfg, warm)
        }
    }

    /// Solve with coefficients outside `support` pinned at zero.
    fn solve_restricted(
        &self,
        lambda: &DVector<f64>,
        support: &SparsityPattern,
        cfg: &SolverConfig,
    ) -> Result<DVector<f64>> {
        let p = self.problem.p();
        match self.problem {
            ModeProblem::Linear { data } => {
                let cols: Vec<usize> = support.indices();
                let mut beta = DVector::zeros(p);
                if cols.is_empty() {
                    return Ok(beta);
                }
                let xs = data.x.select_columns(cols.iter());
                let lam = DVector::from_fn(cols.len(), |i, _| lambda[cols[i]]);
                let (bs, _) = GramLasso::from_design(&xs, &data.y).solve(&lam, None, cfg)?;
                for (i, &c) in cols.iter().enumerate() {
                    beta[c] = bs[i];
                }
                Ok(beta)
            }
            ModeProblem::Quadratic { surrogate } => {
                let cols: Vec<usize> = support.indices();
                let mut beta = DVector::zeros(p);
                if cols.is_empty() {
                    return Ok(beta);
                }
                let prec = surrogate.precision.select_columns(cols.iter());
                let prec = prec.select_rows(cols.iter());
                let center = DVector::from_fn(cols.len(), |i, _| surrogate.beta_tilde[cols[i]]);
                let lam = DVector::from_fn(cols.len(), |i, _| lambda[cols[i]]);
                let (bs, _) = GramLasso::from_quadratic(&prec, &center).solve(&lam, None, cfg)?;
                for (i, &c) in cols.iter().enumerate() {
                    beta[c] = bs[i];
                }
                Ok(beta)
            }
            ModeProblem::Group { surrogate, groups } => {
                let kept_groups: Vec<usize> = support.indices();
                let mut beta = DVector::zeros(p);
                if kept_groups.is_empty() {
                    return Ok(beta);
                }
                let (xt, yt) = surrogate.pseudo_data()?;
                let mut cols = Vec::new();
                let mut sub_groups = Vec::new();
                for &g in &kept_groups {
                    let start = cols.len();
                    cols.extend_from_slice(groups.columns(g));
                    sub_groups.push((start..cols.len()).collect::<Vec<usize>>());
                }
                let sub = GroupL1Problem {
                    design: xt.select_columns(cols.iter()),
                    response: yt,
                    groups: GroupMap::new(sub_groups, cols.len())?,
                    penalties: DVector::from_fn(kept_groups.len(), |i, _| lambda[kept_groups[i]]),
                    ancestry: None,
                };
                let bs = solve_group_lasso_warm(&sub, cfg, None)?;
                for (i, &c) in cols.iter().enumerate() {
                    beta[c] = bs[i];
                }
                Ok(beta)
            }
        }
    }
}

fn check_chain(chains: &ChainStore, problem: &ModeProblem) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::EmptyChains);
    }
    if chains.meta.p != problem.p() {
        return Err(Error::Dimension(format!(
            "chain has {} coefficients, problem has {}",
            chains.meta.p,
            problem.p()
        )));
    }
    let k = problem.n_penalties();
    if chains.meta.n_lambda != k && chains.meta.n_lambda != 1 {
        return Err(Error::Dimension(format!(
            "chain has {} penalties, problem needs {k} (or a shared one)",
            chains.meta.n_lambda
        )));
    }
    Ok(())
}

/// Expand a possibly shared lambda vector to the problem's penalty count.
fn expand_lambda(lambda: &DVector<f64>, k: usize) -> DVector<f64> {
    if lambda.len() == k {
        lambda.clone()
    } else {
        DVector::from_element(k, lambda[0])
    }
}

/// The per-draw conditional modes of a chain: one exactly sparse coefficient
/// vector per kept lambda draw. Frequency selection, model probabilities, and
/// model averaging are all views of this one computation.
pub struct ConditionalModes {
    pub betas: Vec<DVector<f64>>,
    pub patterns: Vec<SparsityPattern>,
}

/// Solve the mode problem at every lambda draw, warm-starting consecutive
/// solves.
pub fn conditional_modes(
    chains: &ChainStore,
    problem: &ModeProblem,
    objective: ModeObjective,
    cfg: &SolverConfig,
) -> Result<ConditionalModes> {
    check_chain(chains, problem)?;
    let k = problem.n_penalties();
    let mut solver = ModeSolver::new(problem)?;
    let mut betas = Vec::with_capacity(chains.len());
    let mut patterns = Vec::with_capacity(chains.len());
    let mut warm: Option<DVector<f64>> = None;
    for (i, lambda) in chains.lambda_draws().enumerate() {
        let lam = problem.effective_lambda(&expand_lambda(&lambda, k), objective);
        let beta = solver
            .solve(&lam, warm.as_ref(), cfg)
            .map_err(|e| match e {
                Error::NonConvergence {
                    what,
                    iterations,
                    last_iterate,
                } => Error::NonConvergence {
                    what: format!("{what} at draw {i}"),
                    iterations,
                    last_iterate,
                },
                other => other,
            })?;
        warm = Some(beta.clone());
        patterns.push(problem.pattern_of(&beta));
        betas.push(beta);
    }
    Ok(ConditionalModes { betas, patterns })
}

/// Plug a point estimate of lambda into the mode solve: posterior mean or
/// median of the lambda draws (on the lambda scale), or the chain's recorded
/// empirical-Bayes point.
pub fn select_point(
    chains: &ChainStore,
    problem: &ModeProblem,
    statistic: PointStatistic,
    objective: ModeObjective,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    check_chain(chains, problem)?;
    let k = problem.n_penalties();
    let lambda = match statistic {
        PointStatistic::Mean => expand_lambda(&chains.lambda_mean()?, k),
        PointStatistic::Median => expand_lambda(&chains.lambda_median()?, k),
        PointStatistic::EbPoint => {
            let eb = chains.meta.eb_lambda.as_ref().ok_or_else(|| {
                Error::Unsupported(
                    "chain carries no empirical-Bayes point (run an eb-em or eb-sa chain)"
                        .to_string(),
                )
            })?;
            expand_lambda(&DVector::from_vec(eb.clone()), k)
        }
    };
    let mut solver = ModeSolver::new(problem)?;
    let beta = solver.solve(&problem.effective_lambda(&lambda, objective), None, cfg)?;
    Ok(SelectionResult {
        pattern: problem.pattern_of(&beta),
        beta,
        strategy: statistic.tag().to_string(),
        lambda,
        inclusion_freq: None,
    })
}

/// Frequency selection: solve at every draw, keep variables selected in at
/// least `threshold` of them, then refit at the posterior-mean lambda
/// restricted to that support (zeros forced elsewhere).
pub fn select_freq(
    chains: &ChainStore,
    problem: &ModeProblem,
    threshold: f64,
    objective: ModeObjective,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let modes = conditional_modes(chains, problem, objective, cfg)?;
    select_freq_from_modes(&modes, chains, problem, threshold, objective, cfg)
}

/// As [`select_freq`] but reusing precomputed conditional modes.
pub fn select_freq_from_modes(
    modes: &ConditionalModes,
    chains: &ChainStore,
    problem: &ModeProblem,
    threshold: f64,
    objective: ModeObjective,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let k = problem.n_penalties();
    let n = modes.patterns.len() as f64;
    let mut freq = DVector::zeros(k);
    for pat in &modes.patterns {
        for j in 0..k {
            if pat.selected(j) {
                freq[j] += 1.0;
            }
        }
    }
    freq /= n;
    let support = SparsityPattern::from_bits((0..k).map(|j| freq[j] >= threshold).collect());
    let lambda = expand_lambda(&chains.lambda_mean()?, k);
    let solver = ModeSolver::new(problem)?;
    let beta =
        solver.solve_restricted(&problem.effective_lambda(&lambda, objective), &support, cfg)?;
    Ok(SelectionResult {
        pattern: problem.pattern_of(&beta),
        beta,
        strategy: "freq".to_string(),
        lambda,
        inclusion_freq: Some(freq),
    })
}

/// Empirical posterior model probabilities: the frequency of each sparsity
/// pattern among the per-draw conditional modes. Sorted by probability
/// descending (ties broken by pattern).
pub fn estimate_pmp(
    chains: &ChainStore,
    problem: &ModeProblem,
    objective: ModeObjective,
    cfg: &SolverConfig,
) -> Result<Vec<(SparsityPattern, f64)>> {
    let modes = conditional_modes(chains, problem, objective, cfg)?;
    Ok(pmp_from_modes(&modes))
}

/// As [`estimate_pmp`] but reusing precomputed conditional modes.
pub fn pmp_from_modes(modes: &ConditionalModes) -> Vec<(SparsityPattern, f64)> {
    let n = modes.patterns.len() as f64;
    let mut counts: HashMap<&SparsityPattern, usize> = HashMap::new();
    for pat in &modes.patterns {
        *counts.entry(pat).or_insert(0) += 1;
    }
    let mut out: Vec<(SparsityPattern, f64)> = counts
        .into_iter()
        .map(|(pat, c)| (pat.clone(), c as f64 / n))
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

/// Model-averaged prediction: the average over draws of x' b(lambda_draw),
/// with b the conditional mode. Predictions are on the centered scale of the
/// training data.
pub fn predict_bma(
    chains: &ChainStore,
    data: &Dataset,
    x_new: &DMatrix<f64>,
    objective: ModeObjective,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    let problem = ModeProblem::Linear { data };
    let modes = conditional_modes(chains, &problem, objective, cfg)?;
    predict_bma_from_modes(&modes, x_new)
}

/// As [`predict_bma`] but reusing precomputed conditional modes.
pub fn predict_bma_from_modes(
    modes: &ConditionalModes,
    x_new: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if modes.betas.is_empty() {
        return Err(Error::EmptyChains);
    }
    let p = modes.betas[0].len();
    if x_new.ncols() != p {
        return Err(Error::Dimension(format!(
            "prediction design has {} columns, model has {p}",
            x_new.ncols()
        )));
    }
    let mut mean_beta = DVector::zeros(p);
    for b in &modes.betas {
        mean_beta += b;
    }
    mean_beta /= modes.betas.len() as f64;
    // x (mean of b) equals the mean of x b: averaging the coefficient
    // vectors first saves a matrix product per draw
    Ok(x_new * mean_beta)
}

/// Mean squared prediction error.
pub fn compute_pse(predictions: &DVector<f64>, actuals: &DVector<f64>) -> Result<f64> {
    if predictions.len() != actuals.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Dimension("empty prediction set".to_string()));
    }
    Ok((predictions - actuals).norm_squared() / predictions.len() as f64)
}
