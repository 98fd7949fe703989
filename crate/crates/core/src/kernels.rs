//! Stationary ARD kernels and kernel-matrix assembly.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

const SQRT_5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    Matern52,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern52 => "matern52",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "rbf" | "squared-exponential" | "squared_exponential" => {
                Ok(KernelFamily::SquaredExponential)
            }
            "matern52" | "matern-5/2" | "matern" => Ok(KernelFamily::Matern52),
            other => Err(Error::input(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel family together with its ARD lengthscales and signal variance.
///
/// `k(x, x)` equals `signal_variance` for every `x`; keeping it at or below 1
/// matches the `k(x, x) <= 1` assumption of the regret bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    lengthscales: Vec<f64>,
    signal_variance: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::input("kernel needs at least one lengthscale"));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::input(format!("lengthscales must be positive, got {l}")));
        }
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::input(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        Ok(Self {
            family,
            lengthscales,
            signal_variance,
        })
    }

    /// Unit lengthscales and unit signal variance.
    pub fn isotropic(family: KernelFamily, dimension: usize) -> Result<Self> {
        Self::new(family, vec![1.0; dimension], 1.0)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn dimension(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), x.len())?;
        check_dim(self.dimension(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let s = (a - b) / l;
                s * s
            })
            .sum();
        match self.family {
            KernelFamily::SquaredExponential => self.signal_variance * (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                self.signal_variance * (1.0 + SQRT_5 * r + 5.0 * r2 / 3.0) * (-SQRT_5 * r).exp()
            }
        }
    }

    /// `|a| x |b|` matrix with entries `k(a_i, b_j)`.
    pub fn matrix(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.check_points(a)?;
        self.check_points(b)?;
        Ok(self.matrix_unchecked(a, b))
    }

    /// Symmetric Gram matrix of a single point list.
    pub fn gram(&self, a: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.check_points(a)?;
        Ok(self.gram_unchecked(a))
    }

    pub(crate) fn check_points(&self, pts: &[Vec<f64>]) -> Result<()> {
        pts.iter().try_for_each(|p| check_dim(self.dimension(), p.len()))
    }

    pub(crate) fn matrix_unchecked(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval_unchecked(&a[i], &b[j]))
    }

    pub(crate) fn gram_unchecked(&self, a: &[Vec<f64>]) -> DMatrix<f64> {
        let n = a.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_variance;
            for j in 0..i {
                let v = self.eval_unchecked(&a[i], &a[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// Free-function form of [`KernelSpec::matrix`].
pub fn kernel_matrix(spec: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    spec.matrix(a, b)
}
