//! Random samplers for the distributions the full conditionals need:
//! inverse-Gaussian, gamma (rate parameterization), and multivariate normal
//! given a precision matrix. All draws are reproducible through [`RngHandle`]
//! streams.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Identifies one reproducible random stream.
///
/// The same `(seed, stream)` pair yields the same draw sequence on every run
/// and platform of the same build. Streams are cheap: parallel work items
/// (chains, replications) each get their own stream id off a shared seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngHandle {
    pub seed: u64,
    pub stream: u64,
}

impl RngHandle {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngHandle { seed, stream }
    }

    /// Same seed, different stream id.
    pub fn with_stream(&self, stream: u64) -> Self {
        RngHandle {
            seed: self.seed,
            stream,
        }
    }

    /// Instantiate the generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Parameters of the inverse-Gaussian density
/// f(x) = sqrt(shape / (2 pi)) x^{-3/2} exp{ -shape (x - mean)^2 / (2 mean^2 x) }, x > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGaussianParams {
    mean: f64,
    shape: f64,
}

impl InverseGaussianParams {
    pub fn new(mean: f64, shape: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::ParamDomain(format!(
                "inverse-Gaussian mean must be positive and finite, got {mean}"
            )));
        }
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(Error::ParamDomain(format!(
                "inverse-Gaussian shape must be positive and finite, got {shape}"
            )));
        }
        Ok(InverseGaussianParams { mean, shape })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }
}

/// Draw from the inverse-Gaussian distribution by the Michael-Schucany-Haas
/// transform: one chi-square root, one uniform accept step.
///
/// The smaller root is computed as mean / (1 + c + sqrt(c(c+2))) with
/// c = mean * y / (2 shape), which avoids the cancellation the textbook
/// `1 + c - sqrt(...)` form suffers when c is large (tiny |beta| makes the
/// conditional mean enormous).
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(params: InverseGaussianParams, rng: &mut R) -> f64 {
    let mu = params.mean;
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let c = mu * y / (2.0 * params.shape);
    let w = 1.0 / (1.0 + c + (c * (c + 2.0)).sqrt());
    let u: f64 = rng.gen();
    if u <= 1.0 / (1.0 + w) {
        mu * w
    } else {
        mu / w
    }
}

/// Draw from gamma(shape, rate) with density proportional to
/// x^{shape-1} exp(-rate x). Rate parameterization throughout the crate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::ParamDomain(format!(
            "gamma shape must be positive and finite, got {shape}"
        )));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::ParamDomain(format!(
            "gamma rate must be positive and finite, got {rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::ParamDomain(format!("gamma({shape}, rate {rate}): {e}")))?;
    Ok(g.sample(rng))
}

/// Draw from inverse-gamma(shape, scale): the reciprocal of a
/// gamma(shape, rate = scale) draw.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / sample_gamma(shape, scale, rng)?)
}

/// A vector of independent standard normals.
pub fn sample_std_normal_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

fn conditioning_report(m: &DMatrix<f64>) -> String {
    let diag = m.diagonal();
    let dmin = diag.min();
    let dmax = diag.max();
    format!(
        "Cholesky failed on {}x{} matrix (diag min {dmin:.3e}, diag max {dmax:.3e})",
        m.nrows(),
        m.ncols()
    )
}

/// Factor a symmetric positive-definite matrix, reporting its conditioning on
/// failure.
pub fn cholesky(matrix: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(matrix.clone()).ok_or_else(|| Error::Numerical {
        context: context.to_string(),
        diagnostic: conditioning_report(matrix),
    })
}

/// Draw from N(mean, precision^-1) given a Cholesky factor of the precision.
///
/// With precision = L L^T, the draw is mean + L^-T z: a triangular back-solve,
/// never an explicit inverse.
pub fn sample_mvn_with_chol<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    precision_chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DVector<f64> {
    let z = sample_std_normal_vec(mean.len(), rng);
    let u = precision_chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has positive diagonal");
    mean + u
}

/// Draw from N(mean, precision^-1).
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if precision.nrows() != precision.ncols() || precision.nrows() != mean.len() {
        return Err(Error::Dimension(format!(
            "mvn: mean length {} vs precision {}x{}",
            mean.len(),
            precision.nrows(),
            precision.ncols()
        )));
    }
    let chol = cholesky(precision, "sample_mvn")?;
    Ok(sample_mvn_with_chol(mean, &chol, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(stream: u64) -> ChaCha20Rng {
        RngHandle::new(0x5eed_ba1a_550, stream).rng()
    }

    /// Sample mean and variance against expectations, with tolerances in
    /// estimated standard errors of each statistic.
    fn check_moments(samples: &[f64], mean: f64, var: f64, se_tol: f64) {
        let n = samples.len() as f64;
        let m = samples.iter().sum::<f64>() / n;
        let v = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m4 = samples.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        let se_mean = (v / n).sqrt();
        let se_var = ((m4 - v * v).max(0.0) / n).sqrt();
        assert!(
            (m - mean).abs() < se_tol * se_mean,
            "mean {m} vs expected {mean} (se {se_mean})"
        );
        assert!(
            (v - var).abs() < se_tol * se_var,
            "variance {v} vs expected {var} (se {se_var})"
        );
    }

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let h = RngHandle::new(42, 7);
        let a: Vec<u64> = h
            .rng()
            .sample_iter(rand::distributions::Standard)
            .take(8)
            .collect();
        let b: Vec<u64> = h
            .rng()
            .sample_iter(rand::distributions::Standard)
            .take(8)
            .collect();
        assert_eq!(a, b);
        let c: Vec<u64> = h
            .with_stream(8)
            .rng()
            .sample_iter(rand::distributions::Standard)
            .take(8)
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn inverse_gaussian_rejects_bad_params() {
        assert!(InverseGaussianParams::new(-1.0, 1.0).is_err());
        assert!(InverseGaussianParams::new(1.0, 0.0).is_err());
        assert!(InverseGaussianParams::new(f64::NAN, 1.0).is_err());
        assert!(InverseGaussianParams::new(2.0, 4.0).is_ok());
    }

    #[test]
    fn inverse_gaussian_moments() {
        // mean = mu, variance = mu^3 / shape
        let params = InverseGaussianParams::new(2.0, 4.0).unwrap();
        let mut r = rng(1);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| sample_inverse_gaussian(params, &mut r))
            .collect();
        check_moments(&draws, 2.0, 2.0, 5.0);
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((m - 2.0).abs() < 0.01);
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((v - 2.0).abs() < 0.05);
    }

    #[test]
    fn inverse_gaussian_cdf_matches_quadrature() {
        // F(1) for IG(1, 1) by Simpson's rule on the density; the closed-form
        // value 0.6681020012 agrees to 9 digits.
        let (mu, lam) = (1.0, 1.0);
        let f = |x: f64| {
            (lam / (2.0 * std::f64::consts::PI)).sqrt()
                * x.powf(-1.5)
                * (-lam * (x - mu) * (x - mu) / (2.0 * mu * mu * x)).exp()
        };
        let (a, b, n) = (1e-9_f64, 1.0_f64, 200_000_usize);
        let h = (b - a) / n as f64;
        let mut simpson = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            simpson += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        simpson *= h / 3.0;
        assert!(
            (simpson - 0.6681020012).abs() < 1e-7,
            "quadrature drifted: {simpson}"
        );

        let params = InverseGaussianParams::new(mu, lam).unwrap();
        let mut r = rng(2);
        let n_draws = 1_000_000;
        let below = (0..n_draws)
            .filter(|_| sample_inverse_gaussian(params, &mut r) <= 1.0)
            .count();
        let ecdf = below as f64 / n_draws as f64;
        assert!(
            (ecdf - simpson).abs() < 0.005,
            "empirical CDF {ecdf} vs quadrature {simpson}"
        );
    }

    #[test]
    fn inverse_gaussian_extreme_mean_stays_finite() {
        // the |beta| underflow guard in the samplers produces means ~1e10
        let params = InverseGaussianParams::new(1e12, 400.0).unwrap();
        let mut r = rng(3);
        for _ in 0..10_000 {
            let x = sample_inverse_gaussian(params, &mut r);
            assert!(x.is_finite() && x > 0.0, "draw {x}");
        }
    }

    #[test]
    fn gamma_rejects_bad_params() {
        let mut r = rng(4);
        assert!(sample_gamma(0.0, 1.0, &mut r).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut r).is_err());
        assert!(sample_gamma(f64::INFINITY, 1.0, &mut r).is_err());
    }

    #[test]
    fn gamma_mean_shape3_rate2() {
        let mut r = rng(5);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| sample_gamma(3.0, 2.0, &mut r).unwrap())
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((m - 1.5).abs() < 0.01, "mean {m}");
        check_moments(&draws, 1.5, 0.75, 5.0);
    }

    #[test]
    fn gamma_unit_is_exponential() {
        let mut r = rng(6);
        let n = 1_000_000;
        let tail = (0..n)
            .filter(|_| sample_gamma(1.0, 1.0, &mut r).unwrap() > 1.0)
            .count() as f64
            / n as f64;
        assert!((tail - (-1.0f64).exp()).abs() < 0.005, "P(X>1) = {tail}");
    }

    #[test]
    fn gamma_small_shape_variance() {
        let mut r = rng(7);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| sample_gamma(0.1, 0.1, &mut r).unwrap())
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((v - 10.0).abs() < 0.5, "variance {v}");
    }

    #[test]
    fn mvn_identity_precision() {
        let mean = DVector::zeros(3);
        let precision = DMatrix::identity(3, 3);
        let chol = cholesky(&precision, "test").unwrap();
        let mut r = rng(8);
        let n = 1_000_000;
        let mut sums = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for _ in 0..n {
            let x = sample_mvn_with_chol(&mean, &chol, &mut r);
            for j in 0..3 {
                sums[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        for j in 0..3 {
            let m = sums[j] / n as f64;
            let v = sq[j] / n as f64 - m * m;
            assert!(m.abs() < 0.01, "mean[{j}] = {m}");
            assert!((v - 1.0).abs() < 0.01, "var[{j}] = {v}");
        }
    }

    #[test]
    fn mvn_diagonal_precision() {
        let mean = DVector::from_vec(vec![1.0, 1.0]);
        let precision = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 4.0]));
        let mut r = rng(9);
        let n = 1_000_000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        let chol = cholesky(&precision, "test").unwrap();
        for _ in 0..n {
            let x = sample_mvn_with_chol(&mean, &chol, &mut r);
            for j in 0..2 {
                sums[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        for j in 0..2 {
            let m = sums[j] / n as f64;
            let v = sq[j] / n as f64 - m * m;
            assert!((m - 1.0).abs() < 0.01, "mean[{j}] = {m}");
            assert!((v - 0.25).abs() < 0.01, "var[{j}] = {v}");
        }
    }

    #[test]
    fn mvn_covariance_matches_precision_inverse() {
        // precision [[2,1],[1,2]] has inverse [[2/3,-1/3],[-1/3,2/3]]
        let mean = DVector::zeros(2);
        let precision = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let chol = cholesky(&precision, "test").unwrap();
        let mut r = rng(10);
        let n = 1_000_000;
        let (mut s00, mut s01, mut s11) = (0.0f64, 0.0f64, 0.0f64);
        let (mut m0, mut m1) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let x = sample_mvn_with_chol(&mean, &chol, &mut r);
            m0 += x[0];
            m1 += x[1];
            s00 += x[0] * x[0];
            s01 += x[0] * x[1];
            s11 += x[1] * x[1];
        }
        let nf = n as f64;
        let (m0, m1) = (m0 / nf, m1 / nf);
        let c00 = s00 / nf - m0 * m0;
        let c01 = s01 / nf - m0 * m1;
        let c11 = s11 / nf - m1 * m1;
        assert!((c00 - 2.0 / 3.0).abs() < 0.01, "c00 {c00}");
        assert!((c01 + 1.0 / 3.0).abs() < 0.01, "c01 {c01}");
        assert!((c11 - 2.0 / 3.0).abs() < 0.01, "c11 {c11}");
    }

    #[test]
    fn mvn_3x3_frobenius_invariant() {
        // fixed SPD test matrix; sample covariance within 0.02 Frobenius
        let precision =
            DMatrix::from_row_slice(3, 3, &[3.0, 0.5, 0.2, 0.5, 2.0, -0.3, 0.2, -0.3, 1.5]);
        let target = precision.clone().try_inverse().unwrap();
        let mean = DVector::zeros(3);
        let chol = cholesky(&precision, "test").unwrap();
        let mut r = rng(11);
        let n = 1_000_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        let mut msum = DVector::<f64>::zeros(3);
        for _ in 0..n {
            let x = sample_mvn_with_chol(&mean, &chol, &mut r);
            acc += &x * x.transpose();
            msum += x;
        }
        let nf = n as f64;
        let mhat = msum / nf;
        let cov = acc / nf - &mhat * mhat.transpose();
        assert!((cov - target).norm() <= 0.02, "Frobenius error too large");
    }

    #[test]
    fn mvn_rejects_non_spd() {
        let mean = DVector::zeros(2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mut r = rng(12);
        let err = sample_mvn(&mean, &bad, &mut r).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }), "{err:?}");
    }

    #[test]
    fn determinism_bitwise() {
        let params = InverseGaussianParams::new(2.0, 4.0).unwrap();
        let seq = |stream: u64| -> Vec<u64> {
            let mut r = rng(stream);
            (0..64)
                .map(|i| {
                    let x = if i % 2 == 0 {
                        sample_inverse_gaussian(params, &mut r)
                    } else {
                        sample_gamma(1.1, 0.7, &mut r).unwrap()
                    };
                    x.to_bits()
                })
                .collect()
        };
        assert_eq!(seq(13), seq(13));
    }
}
