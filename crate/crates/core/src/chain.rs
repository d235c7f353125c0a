//! Chain storage: the ordered record of post-burn-in Gibbs draws together
//! with the provenance needed to reproduce or validate it.

use nalgebra::DVector;
use sha2::{Digest, Sha256};

use crate::dist::RngHandle;
use crate::error::{Error, Result};

/// Which sampler produced a chain. Linear chains carry a real sigma2 column;
/// the surrogate-based chains fix it at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    Linear,
    Lsa,
    Group,
    Cap,
}

impl ChainKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChainKind::Linear => "linear",
            ChainKind::Lsa => "lsa",
            ChainKind::Group => "group",
            ChainKind::Cap => "cap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ChainKind::Linear),
            "lsa" => Ok(ChainKind::Lsa),
            "group" => Ok(ChainKind::Group),
            "cap" => Ok(ChainKind::Cap),
            other => Err(Error::Manifest(format!("unknown chain kind '{other}'"))),
        }
    }
}

/// Burn-in, retention, and seeding for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub kept: usize,
    pub thin: usize,
    pub seed: RngHandle,
}

impl ChainConfig {
    pub fn new(burn_in: usize, kept: usize, thin: usize, seed: RngHandle) -> Self {
        ChainConfig {
            burn_in,
            kept,
            thin,
            seed,
        }
    }

    /// Burn-in and kept draws matching the reference runs: 10^4 + 10^4.
    pub fn reference(seed: RngHandle) -> Self {
        ChainConfig::new(10_000, 10_000, 1, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kept == 0 {
            return Err(Error::ParamDomain("kept draws must be >= 1".to_string()));
        }
        if self.thin == 0 {
            return Err(Error::ParamDomain("thin must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// One recorded draw. `tau2` and `lambda2` have length p for coefficient-wise
/// chains and J for grouped chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraw {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub tau2: Vec<f64>,
    pub lambda2: Vec<f64>,
}

/// Provenance carried with every chain: enough to recompute the config hash
/// and to refuse mismatched reloads.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMeta {
    pub kind: ChainKind,
    /// Coefficient count.
    pub p: usize,
    /// Number of tau^2 entries per draw (p, or J for grouped chains).
    pub n_tau: usize,
    /// Number of lambda^2 entries per draw (p, J, or 1 when shared).
    pub n_lambda: usize,
    pub burn_in: usize,
    pub kept: usize,
    pub thin: usize,
    pub seed: RngHandle,
    /// Canonical description of the penalty mode, including every numeric
    /// hyperparameter.
    pub mode: String,
    /// Delta actually used after any empirical-Bayes resolution.
    pub delta: f64,
    pub dataset_fingerprint: String,
    /// Final empirical-Bayes point estimate of lambda, when the mode
    /// produces one.
    pub eb_lambda: Option<Vec<f64>>,
    /// Group sizes for grouped chains.
    pub group_sizes: Option<Vec<usize>>,
    /// Ancestry edges for composite-penalty chains.
    pub ancestry: Option<Vec<(usize, usize)>>,
}

impl ChainMeta {
    /// Canonical string covering every numeric setting that affects results.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("kind={}\n", self.kind.name()));
        s.push_str(&format!("p={}\n", self.p));
        s.push_str(&format!("n_tau={}\n", self.n_tau));
        s.push_str(&format!("n_lambda={}\n", self.n_lambda));
        s.push_str(&format!("burn_in={}\n", self.burn_in));
        s.push_str(&format!("kept={}\n", self.kept));
        s.push_str(&format!("thin={}\n", self.thin));
        s.push_str(&format!("seed={}\n", self.seed.seed));
        s.push_str(&format!("stream={}\n", self.seed.stream));
        s.push_str(&format!("mode={}\n", self.mode));
        s.push_str(&format!("delta={:e}\n", self.delta));
        s.push_str(&format!("dataset={}\n", self.dataset_fingerprint));
        if let Some(sizes) = &self.group_sizes {
            let parts: Vec<String> = sizes.iter().map(|m| m.to_string()).collect();
            s.push_str(&format!("groups={}\n", parts.join(",")));
        }
        if let Some(edges) = &self.ancestry {
            let parts: Vec<String> = edges.iter().map(|(a, b)| format!("{a}>{b}")).collect();
            s.push_str(&format!("ancestry={}\n", parts.join(";")));
        }
        s
    }

    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ordered, append-only record of kept draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    pub meta: ChainMeta,
    draws: Vec<ChainDraw>,
}

impl ChainStore {
    pub fn new(meta: ChainMeta) -> Self {
        let cap = meta.kept;
        ChainStore {
            meta,
            draws: Vec::with_capacity(cap),
        }
    }

    pub fn record(&mut self, draw: ChainDraw) {
        debug_assert_eq!(draw.beta.len(), self.meta.p);
        debug_assert_eq!(draw.tau2.len(), self.meta.n_tau);
        debug_assert_eq!(draw.lambda2.len(), self.meta.n_lambda);
        self.draws.push(draw);
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[ChainDraw] {
        &self.draws
    }

    /// Per-draw lambda vectors on the lambda scale (square roots of the
    /// stored lambda^2 draws).
    pub fn lambda_draws(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.draws
            .iter()
            .map(|d| DVector::from_iterator(d.lambda2.len(), d.lambda2.iter().map(|v| v.sqrt())))
    }

    /// Coordinatewise mean of lambda (not lambda^2) draws.
    pub fn lambda_mean(&self) -> Result<DVector<f64>> {
        if self.is_empty() {
            return Err(Error::EmptyChains);
        }
        let k = self.meta.n_lambda;
        let mut acc = DVector::zeros(k);
        for d in &self.draws {
            for j in 0..k {
                acc[j] += d.lambda2[j].sqrt();
            }
        }
        Ok(acc / self.draws.len() as f64)
    }

    /// Coordinatewise median of lambda (not lambda^2) draws.
    pub fn lambda_median(&self) -> Result<DVector<f64>> {
        if self.is_empty() {
            return Err(Error::EmptyChains);
        }
        let k = self.meta.n_lambda;
        let mut out = DVector::zeros(k);
        let mut buf: Vec<f64> = Vec::with_capacity(self.draws.len());
        for j in 0..k {
            buf.clear();
            buf.extend(self.draws.iter().map(|d| d.lambda2[j].sqrt()));
            buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = buf.len();
            out[j] = if n % 2 == 1 {
                buf[n / 2]
            } else {
                0.5 * (buf[n / 2 - 1] + buf[n / 2])
            };
        }
        Ok(out)
    }

    /// Coordinatewise mean of a per-draw field selected by `f`.
    pub fn mean_of<F>(&self, len: usize, f: F) -> DVector<f64>
    where
        F: Fn(&ChainDraw) -> &[f64],
    {
        let mut acc = DVector::zeros(len);
        for d in &self.draws {
            let v = f(d);
            for j in 0..len {
                acc[j] += v[j];
            }
        }
        acc / self.draws.len().max(1) as f64
    }

    /// SHA-256 over the provenance and the exact bits of every draw.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.meta.canonical().as_bytes());
        for d in &self.draws {
            for v in &d.beta {
                h.update(v.to_le_bytes());
            }
            h.update(d.sigma2.to_le_bytes());
            for v in &d.tau2 {
                h.update(v.to_le_bytes());
            }
            for v in &d.lambda2 {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
