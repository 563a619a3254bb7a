//! Diffusions `dX = b(X) dt + sigma(X) dW` in either of two settings:
//! Brownian-type on `R^d` ([`Case::C1`]) or exponential / geometric-type on
//! `(0, inf)^d` ([`Case::C2`]), plus exact and Euler path sampling.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{NormalStream, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// State space `R^d`, weights `Q_i = 1`.
    C1,
    /// State space `(0, inf)^d`, weights `Q_i(x) = x_i`.
    C2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Exactness {
    GbmDiagonal,
    BmConstant,
    General,
}

pub type DriftFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type SigmaFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Coefficients {
    /// `b_i = mu_i x_i`, `sigma = diag(s x) L` with `L` the Cholesky factor of
    /// a constant correlation matrix.
    Gbm {
        mu: Vec<f64>,
        vol: Vec<f64>,
        chol: DMatrix<f64>,
        correlated: bool,
    },
    BmConstant {
        drift: Vec<f64>,
        sigma: DMatrix<f64>,
    },
    General {
        drift: DriftFn,
        sigma: SigmaFn,
    },
}

/// Immutable description of the underlying diffusion.
#[derive(Clone)]
pub struct DiffusionSpec {
    case: Case,
    x0: Vec<f64>,
    coeffs: Coefficients,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("DiffusionSpec");
        s.field("case", &self.case).field("x0", &self.x0);
        match &self.coeffs {
            Coefficients::Gbm {
                mu,
                vol,
                correlated,
                ..
            } => s
                .field("mu", mu)
                .field("vol", vol)
                .field("correlated", correlated),
            Coefficients::BmConstant { drift, sigma } => {
                s.field("drift", drift).field("sigma", sigma)
            }
            Coefficients::General { .. } => s.field("coefficients", &"general"),
        };
        s.finish()
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

impl DiffusionSpec {
    /// Independent geometric Brownian motions, case C2.
    pub fn gbm(x0: Vec<f64>, mu: Vec<f64>, vol: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        check_len(d, mu.len())?;
        check_len(d, vol.len())?;
        if let Some(x) = x0.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "C2 start must be positive, got {x}"
            )));
        }
        if let Some(s) = vol.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "volatility must be positive, got {s}"
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("drift rates must be finite".into()));
        }
        Ok(Self {
            case: Case::C2,
            x0,
            coeffs: Coefficients::Gbm {
                mu,
                vol,
                chol: DMatrix::identity(d, d),
                correlated: false,
            },
        })
    }

    /// Driftless GBM with unit start and the given volatilities.
    pub fn driftless_gbm(vol: Vec<f64>) -> Result<Self> {
        let d = vol.len();
        Self::gbm(vec![1.0; d], vec![0.0; d], vol)
    }

    /// Applies a constant correlation matrix to the Brownian drivers of a GBM spec.
    pub fn with_correlation(mut self, corr: DMatrix<f64>) -> Result<Self> {
        let d = self.dim();
        let Coefficients::Gbm {
            chol, correlated, ..
        } = &mut self.coeffs
        else {
            return Err(Error::InvalidParameter(
                "correlation applies to GBM specs only; pass a full sigma for Brownian specs"
                    .into(),
            ));
        };
        if corr.nrows() != d || corr.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: corr.nrows(),
            });
        }
        for i in 0..d {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(
                    "correlation diagonal must be 1".into(),
                ));
            }
            for j in 0..i {
                if (corr[(i, j)] - corr[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(
                        "correlation must be symmetric".into(),
                    ));
                }
            }
        }
        let factor = corr.clone().cholesky().ok_or_else(|| {
            Error::InvalidParameter("correlation is not positive definite".into())
        })?;
        *chol = factor.l();
        *correlated = corr != DMatrix::identity(d, d);
        Ok(self)
    }

    /// Brownian motion with constant drift vector and diffusion matrix, case C1.
    pub fn brownian(x0: Vec<f64>, drift: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = x0.len();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        check_len(d, drift.len())?;
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigma.nrows(),
            });
        }
        Ok(Self {
            case: Case::C1,
            x0,
            coeffs: Coefficients::BmConstant { drift, sigma },
        })
    }

    /// Standard `d`-dimensional Brownian motion started at the origin.
    pub fn standard_brownian(d: usize) -> Result<Self> {
        Self::brownian(vec![0.0; d], vec![0.0; d], DMatrix::identity(d, d))
    }

    /// User supplied coefficients. Smoothness and ellipticity of the
    /// coefficients are not checked.
    pub fn general(case: Case, x0: Vec<f64>, drift: DriftFn, sigma: SigmaFn) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if case == Case::C2 && x0.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidParameter("C2 start must be positive".into()));
        }
        Ok(Self {
            case,
            x0,
            coeffs: Coefficients::General { drift, sigma },
        })
    }

    pub fn case(&self) -> Case {
        self.case
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn exactness(&self) -> Exactness {
        match self.coeffs {
            Coefficients::Gbm { .. } => Exactness::GbmDiagonal,
            Coefficients::BmConstant { .. } => Exactness::BmConstant,
            Coefficients::General { .. } => Exactness::General,
        }
    }

    /// Per-coordinate volatilities of a GBM spec.
    pub fn gbm_vols(&self) -> Option<&[f64]> {
        match &self.coeffs {
            Coefficients::Gbm { vol, .. } => Some(vol),
            _ => None,
        }
    }

    /// `true` when `sigma` is diagonal with `sigma_ii` depending on `x_i` only
    /// (uncorrelated GBM, or Brownian motion with diagonal sigma).
    pub fn is_diagonal(&self) -> bool {
        match &self.coeffs {
            Coefficients::Gbm { correlated, .. } => !correlated,
            Coefficients::BmConstant { sigma, .. } => {
                let d = sigma.nrows();
                (0..d).all(|i| (0..d).all(|j| i == j || sigma[(i, j)] == 0.0))
            }
            Coefficients::General { .. } => false,
        }
    }

    /// `true` when the drift vanishes identically (known for built-in specs only).
    pub fn is_driftless(&self) -> bool {
        match &self.coeffs {
            Coefficients::Gbm { mu, .. } => mu.iter().all(|m| *m == 0.0),
            Coefficients::BmConstant { drift, .. } => drift.iter().all(|m| *m == 0.0),
            Coefficients::General { .. } => false,
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        match &self.coeffs {
            Coefficients::Gbm { mu, .. } => mu.iter().zip(x).map(|(m, xi)| m * xi).collect(),
            Coefficients::BmConstant { drift, .. } => drift.clone(),
            Coefficients::General { drift, .. } => drift(x),
        }
    }

    pub fn sigma(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.coeffs {
            Coefficients::Gbm { vol, chol, .. } => {
                let d = vol.len();
                DMatrix::from_fn(d, d, |i, j| vol[i] * x[i] * chol[(i, j)])
            }
            Coefficients::BmConstant { sigma, .. } => sigma.clone(),
            Coefficients::General { sigma, .. } => sigma(x),
        }
    }

    /// `Q_i(x)`: 1 in case C1 and `x_i` in case C2 (0-based `i`).
    pub fn q_weight(&self, x: &[f64], i: usize) -> Result<f64> {
        if i >= self.dim() || i >= x.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        Ok(match self.case {
            Case::C1 => 1.0,
            Case::C2 => x[i],
        })
    }

    /// `A(x) = sigma(x) sigma(x)^T`.
    pub fn a_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let s = self.sigma(x);
        &s * s.transpose()
    }

    /// A constant `C_1` with `A_ii(x) >= Q_i(x)^2 / C_1` for built-in specs.
    pub fn ellipticity_constant(&self) -> Option<f64> {
        match &self.coeffs {
            Coefficients::Gbm { vol, .. } => {
                let min_s2 = vol.iter().map(|s| s * s).fold(f64::INFINITY, f64::min);
                Some(1f64.max(1.0 / min_s2))
            }
            Coefficients::BmConstant { sigma, .. } => {
                let a = sigma * sigma.transpose();
                let min_diag = (0..a.nrows())
                    .map(|i| a[(i, i)])
                    .fold(f64::INFINITY, f64::min);
                (min_diag > 0.0).then(|| 1f64.max(1.0 / min_diag))
            }
            Coefficients::General { .. } => None,
        }
    }
}

/// A sampled path: `states` holds one row of `dim` coordinates per time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub dim: usize,
    pub states: Vec<f64>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidParameter(
            "sampling grid must start at 0".into(),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "sampling grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Exact sampling into a reusable buffer; `states` is resized to
/// `times.len() * dim`.
pub fn sample_exact_into(
    spec: &DiffusionSpec,
    times: &[f64],
    seed: SeedSpec,
    states: &mut Vec<f64>,
) -> Result<()> {
    check_times(times)?;
    let d = spec.dim();
    states.clear();
    states.extend_from_slice(&spec.x0);
    let mut stream = NormalStream::new(seed);
    let mut z = vec![0.0; d];
    let mut shock = vec![0.0; d];
    match &spec.coeffs {
        Coefficients::Gbm {
            mu,
            vol,
            chol,
            correlated,
        } => {
            let mut x = spec.x0.clone();
            for w in times.windows(2) {
                let dt = w[1] - w[0];
                let sd = dt.sqrt();
                stream.fill(&mut z);
                correlate(chol, *correlated, &z, &mut shock);
                for i in 0..d {
                    let s = vol[i];
                    x[i] *= ((mu[i] - 0.5 * s * s) * dt + s * sd * shock[i]).exp();
                }
                states.extend_from_slice(&x);
            }
        }
        Coefficients::BmConstant { drift, sigma } => {
            let mut x = spec.x0.clone();
            for w in times.windows(2) {
                let dt = w[1] - w[0];
                let sd = dt.sqrt();
                stream.fill(&mut z);
                for i in 0..d {
                    let mut acc = drift[i] * dt;
                    for j in 0..d {
                        acc += sigma[(i, j)] * sd * z[j];
                    }
                    x[i] += acc;
                }
                states.extend_from_slice(&x);
            }
        }
        Coefficients::General { .. } => return Err(Error::ExactSamplingUnavailable),
    }
    Ok(())
}

#[inline]
fn correlate(chol: &DMatrix<f64>, correlated: bool, z: &[f64], out: &mut [f64]) {
    if !correlated {
        out.copy_from_slice(z);
        return;
    }
    for i in 0..z.len() {
        out[i] = (0..=i).map(|j| chol[(i, j)] * z[j]).sum();
    }
}

/// Exact-in-law sampling on `times` for GBM and constant-coefficient
/// Brownian specs.
pub fn sample_path_exact(
    spec: &DiffusionSpec,
    times: &[f64],
    seed: SeedSpec,
) -> Result<PathSample> {
    let mut states = Vec::with_capacity(times.len() * spec.dim());
    sample_exact_into(spec, times, seed, &mut states)?;
    Ok(PathSample {
        times: times.to_vec(),
        dim: spec.dim(),
        states,
    })
}

/// Euler-Maruyama on `times`. In case C2 the scheme steps `Y = log X`,
/// which keeps every state positive.
pub fn sample_path_euler(
    spec: &DiffusionSpec,
    times: &[f64],
    seed: SeedSpec,
) -> Result<PathSample> {
    check_times(times)?;
    let d = spec.dim();
    let mut states = Vec::with_capacity(times.len() * d);
    states.extend_from_slice(&spec.x0);
    let mut stream = NormalStream::new(seed);
    let mut z = vec![0.0; d];
    let mut x = spec.x0.clone();
    let mut y: Vec<f64> = match spec.case {
        Case::C1 => x.clone(),
        Case::C2 => x.iter().map(|v| v.ln()).collect(),
    };
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let sd = dt.sqrt();
        stream.fill(&mut z);
        let b = spec.drift(&x);
        let s = spec.sigma(&x);
        match spec.case {
            Case::C1 => {
                for i in 0..d {
                    let noise: f64 = (0..d).map(|j| s[(i, j)] * z[j]).sum();
                    x[i] += b[i] * dt + sd * noise;
                }
            }
            Case::C2 => {
                for i in 0..d {
                    let mut hat_sq = 0.0;
                    let mut noise = 0.0;
                    for j in 0..d {
                        let hat = s[(i, j)] / x[i];
                        hat_sq += hat * hat;
                        noise += hat * z[j];
                    }
                    y[i] += (b[i] / x[i] - 0.5 * hat_sq) * dt + sd * noise;
                }
                for i in 0..d {
                    x[i] = y[i].exp();
                }
            }
        }
        states.extend_from_slice(&x);
    }
    Ok(PathSample {
        times: times.to_vec(),
        dim: d,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MeanEstimate;
    use approx::assert_relative_eq;

    #[test]
    fn q_weights() {
        let c1 = DiffusionSpec::standard_brownian(2).unwrap();
        assert_eq!(c1.q_weight(&[5.0, -3.0], 1).unwrap(), 1.0);
        let c2 = DiffusionSpec::driftless_gbm(vec![1.0, 1.0]).unwrap();
        assert_eq!(c2.q_weight(&[2.0, 3.0], 1).unwrap(), 3.0);
        let c3 = DiffusionSpec::driftless_gbm(vec![1.0; 3]).unwrap();
        assert_eq!(c3.q_weight(&[1.0, 1.0, 1.0], 0).unwrap(), 1.0);
        assert!(matches!(
            c2.q_weight(&[2.0, 3.0], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn a_matrix_examples() {
        let g = DiffusionSpec::driftless_gbm(vec![1.0, 2.0]).unwrap();
        let a = g.a_matrix(&[1.0, 1.0]);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        let b = DiffusionSpec::standard_brownian(3).unwrap();
        assert_eq!(b.a_matrix(&[0.3, -1.0, 2.0]), DMatrix::identity(3, 3));
        let one = DiffusionSpec::driftless_gbm(vec![1.0]).unwrap();
        assert_eq!(one.a_matrix(&[3.0])[(0, 0)], 9.0);
    }

    #[test]
    fn ellipticity_holds_for_builtin_specs() {
        let g = DiffusionSpec::driftless_gbm(vec![0.5, 2.0]).unwrap();
        let c1 = g.ellipticity_constant().unwrap();
        assert_eq!(c1, 4.0);
        for x in [[0.1, 3.0], [1.0, 1.0], [7.0, 0.02]] {
            let a = g.a_matrix(&x);
            assert_eq!(a, a.transpose());
            for i in 0..2 {
                let q = g.q_weight(&x, i).unwrap();
                assert!(a[(i, i)] >= q * q / c1 * (1.0 - 1e-14));
            }
        }
    }

    #[test]
    fn correlation_validation() {
        let g = DiffusionSpec::driftless_gbm(vec![1.0, 1.0]).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(g.clone().with_correlation(bad).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let c = g.with_correlation(ok).unwrap();
        assert!(!c.is_diagonal());
        let a = c.a_matrix(&[2.0, 3.0]);
        assert_relative_eq!(a[(0, 1)], 0.5 * 2.0 * 3.0, epsilon = 1e-14);
        assert_relative_eq!(a[(1, 1)], 9.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_gbm_lognormal_moments() {
        let spec = DiffusionSpec::driftless_gbm(vec![1.0]).unwrap();
        let n = 100_000;
        let mut terminal = Vec::with_capacity(n);
        let mut logs = Vec::with_capacity(n);
        for p in 0..n {
            let path = sample_path_exact(&spec, &[0.0, 1.0], SeedSpec::new(5, p as u64)).unwrap();
            terminal.push(path.terminal()[0]);
            logs.push(path.terminal()[0].ln());
        }
        let m = MeanEstimate::from_samples(&terminal);
        assert!((m.mean - 1.0).abs() < 3.0 * m.stderr, "{m:?}");
        let lm = MeanEstimate::from_samples(&logs);
        let var = logs.iter().map(|l| (l - lm.mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // Var of the sample variance for a normal is 2 sigma^4 / (n - 1)
        assert!(
            (var - 1.0).abs() < 3.0 * (2.0 / (n as f64 - 1.0)).sqrt(),
            "{var}"
        );
    }

    #[test]
    fn exact_brownian_increment_covariance() {
        let spec = DiffusionSpec::standard_brownian(2).unwrap();
        let n = 50_000;
        let times = [0.0, 0.5, 1.0];
        let mut c = [[0.0; 2]; 2];
        for p in 0..n {
            let path = sample_path_exact(&spec, &times, SeedSpec::new(9, p as u64)).unwrap();
            let inc: Vec<f64> = (0..2)
                .map(|k| path.state(2)[k] - path.state(1)[k])
                .collect();
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += inc[i] * inc[j] / n as f64;
                }
            }
        }
        // stderr of a product-moment of N(0, 0.5) is about 0.5 sqrt(2/n)
        let tol = 4.0 * 0.5 * (2.0 / n as f64).sqrt();
        assert!((c[0][0] - 0.5).abs() < tol);
        assert!((c[1][1] - 0.5).abs() < tol);
        assert!(c[0][1].abs() < tol);
    }

    #[test]
    fn sampling_is_deterministic_and_positive() {
        let spec = DiffusionSpec::gbm(vec![1.0, 2.0], vec![0.1, -0.2], vec![0.8, 1.5]).unwrap();
        let times: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        let a = sample_path_exact(&spec, &times, SeedSpec::new(3, 17)).unwrap();
        let b = sample_path_exact(&spec, &times, SeedSpec::new(3, 17)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.state(0), &[1.0, 2.0]);
        assert!(a.states.iter().all(|x| *x > 0.0));
        let e1 = sample_path_euler(&spec, &times, SeedSpec::new(3, 17)).unwrap();
        let e2 = sample_path_euler(&spec, &times, SeedSpec::new(3, 17)).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn general_spec_requires_euler() {
        let spec = DiffusionSpec::general(
            Case::C1,
            vec![0.0],
            Arc::new(|_x| vec![0.0]),
            Arc::new(|_x| DMatrix::zeros(1, 1)),
        )
        .unwrap();
        assert!(matches!(
            sample_path_exact(&spec, &[0.0, 1.0], SeedSpec::new(0, 0)),
            Err(Error::ExactSamplingUnavailable)
        ));
        let times: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let path = sample_path_euler(&spec, &times, SeedSpec::new(0, 0)).unwrap();
        assert!(path.states.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn log_euler_matches_exact_terminal_mean() {
        // For GBM the log-Euler scheme has no bias, so only MC noise remains.
        let spec = DiffusionSpec::gbm(vec![1.0], vec![0.05], vec![0.4]).unwrap();
        let steps = 1 << 12;
        let fine: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
        let n = 2_000;
        let euler: Vec<f64> = (0..n)
            .map(|p| {
                sample_path_euler(&spec, &fine, SeedSpec::new(1, p))
                    .unwrap()
                    .terminal()[0]
            })
            .collect();
        let exact: Vec<f64> = (0..20_000)
            .map(|p| {
                sample_path_exact(&spec, &[0.0, 1.0], SeedSpec::new(2, p))
                    .unwrap()
                    .terminal()[0]
            })
            .collect();
        let (me, mx) = (
            MeanEstimate::from_samples(&euler),
            MeanEstimate::from_samples(&exact),
        );
        let dt = 1.0 / steps as f64;
        assert!((me.mean - mx.mean).abs() <= 5.0 * (me.stderr + mx.stderr) + dt);
        assert!((mx.mean - 0.05f64.exp()).abs() < 3.0 * mx.stderr);
    }
}
