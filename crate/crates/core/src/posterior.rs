//! Kernel-regression posterior: mean, variance and batch covariance in the
//! noise-free form and the regularized (perturbation) form.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::Cholesky;

/// Diagonal jitter used when the modeling regularizer is zero. It only keeps
/// the factorization stable and is far below any modeling `sigma^2`.
pub const NOISE_FREE_JITTER: f64 = 1e-10;

/// Variances below `-VARIANCE_WARN_LEVEL` indicate a numerically broken fit.
pub const VARIANCE_WARN_LEVEL: f64 = 1e-6;

/// Ordered queries and their observed values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationHistory {
    dimension: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl ObservationHistory {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            points: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_parts(dimension: usize, points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::input(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let mut h = Self::new(dimension);
        for (p, v) in points.into_iter().zip(values) {
            h.push(p, v)?;
        }
        Ok(h)
    }

    /// Appends an observation. Re-observing a stored point is rejected.
    pub fn push(&mut self, point: Vec<f64>, value: f64) -> Result<()> {
        check_dim(self.dimension, point.len())?;
        if !value.is_finite() {
            return Err(Error::NonFinite { point, value });
        }
        if self.points.contains(&point) {
            return Err(Error::input(format!("point {point:?} already observed")));
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A factorized fit of `K_t + sigma^2 I` over an observation history.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    spec: KernelSpec,
    points: Vec<Vec<f64>>,
    regularizer: f64,
    chol: Option<Cholesky>,
    alpha: DVector<f64>,
}

impl PosteriorModel {
    /// Fits the model. `regularizer = 0` gives the noise-free interpolant
    /// (with [`NOISE_FREE_JITTER`] on the diagonal); a positive value gives the
    /// regularized predictor.
    pub fn fit(spec: &KernelSpec, history: &ObservationHistory, regularizer: f64) -> Result<Self> {
        if !(regularizer >= 0.0) || !regularizer.is_finite() {
            return Err(Error::input(format!(
                "regularizer must be nonnegative, got {regularizer}"
            )));
        }
        check_dim(spec.dimension(), history.dimension())?;
        let points = history.points().to_vec();
        if points.is_empty() {
            return Ok(Self {
                spec: spec.clone(),
                points,
                regularizer,
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        let diag = effective_diagonal(regularizer);
        let mut k = spec.gram_unchecked(&points);
        for i in 0..points.len() {
            k[(i, i)] += diag;
        }
        let chol = Cholesky::factor(&k)?;
        let alpha = chol.solve(&DVector::from_column_slice(history.values()));
        Ok(Self {
            spec: spec.clone(),
            points,
            regularizer,
            chol: Some(chol),
            alpha,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }

    /// The value actually added to the diagonal of `K_t`.
    pub fn diagonal_shift(&self) -> f64 {
        effective_diagonal(self.regularizer)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Lower Cholesky factor of `K_t + sigma^2 I`, `None` for the prior model.
    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.chol.as_ref().map(Cholesky::lower)
    }

    fn cross(&self, x: &[f64]) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| self.spec.eval_unchecked(p, x))
            .collect()
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dimension(), x.len())?;
        Ok(self.cross(x).iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum())
    }

    /// Posterior variance before clamping to `[0, k(x, x)]`.
    pub fn variance_unclamped(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dimension(), x.len())?;
        let prior = self.spec.eval_unchecked(x, x);
        let Some(chol) = &self.chol else {
            return Ok(prior);
        };
        let mut v = self.cross(x);
        chol.forward(&mut v);
        Ok(prior - v.iter().map(|a| a * a).sum::<f64>())
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        let prior = self.spec.signal_variance();
        Ok(self.variance_unclamped(x)?.clamp(0.0, prior))
    }

    pub fn mean_and_variance(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.spec.dimension(), x.len())?;
        let kx = self.cross(x);
        let mean = kx.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum();
        let prior = self.spec.eval_unchecked(x, x);
        let var = match &self.chol {
            None => prior,
            Some(chol) => {
                let mut v = kx;
                chol.forward(&mut v);
                prior - v.iter().map(|a| a * a).sum::<f64>()
            }
        };
        Ok((mean, var.clamp(0.0, prior)))
    }

    /// `K(X,X) - K(H,X)^T (K(H,H) + sigma^2 I)^{-1} K(H,X)` for the batch `X`
    /// and stored points `H`; the prior kernel matrix when `H` is empty.
    pub fn batch_covariance(&self, batch: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if batch.is_empty() {
            return Err(Error::input("batch must contain at least one point"));
        }
        self.spec.check_points(batch)?;
        let mut cov = self.spec.gram_unchecked(batch);
        if let Some(chol) = &self.chol {
            let cross = self.spec.matrix_unchecked(&self.points, batch);
            let v = chol.forward_matrix(&cross);
            // explicit column dots keep L = 1 bitwise equal to `variance_unclamped`
            for i in 0..batch.len() {
                for j in 0..=i {
                    let dot: f64 = v.column(i).iter().zip(v.column(j).iter()).map(|(a, b)| a * b).sum();
                    cov[(i, j)] -= dot;
                    if i != j {
                        cov[(j, i)] -= dot;
                    }
                }
            }
        }
        // symmetrize away roundoff
        let l = batch.len();
        for i in 0..l {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok(cov)
    }
}

fn effective_diagonal(regularizer: f64) -> f64 {
    if regularizer > 0.0 {
        regularizer
    } else {
        NOISE_FREE_JITTER
    }
}

/// `1/2 log det(I + sigma^{-2} K)` over the given points. This is the
/// information gain of the realized sequence, a lower bound on the maximum
/// over all point sets of the same size.
pub fn information_gain(spec: &KernelSpec, points: &[Vec<f64>], sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::input(format!("sigma^2 must be positive, got {sigma2}")));
    }
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut m = spec.gram(points)? / sigma2;
    for i in 0..points.len() {
        m[(i, i)] += 1.0;
    }
    Ok(0.5 * Cholesky::factor(&m)?.log_det())
}
