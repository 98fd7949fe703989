//! Upper-confidence selection rules, sequential and batch, in the noise-free
//! and the perturbation setting.
//!
//! Sequential score: `m(x) + B sigma(x)`.
//! Batch score for `X = {x_1..x_L}` with posterior covariance `C`:
//! `(1/L) sum m(x_i) + B (2 sqrt(tr C / L) - sqrt(1^T C 1 / L^2))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::inner_opt::InnerMaximizer;
use crate::kernels::KernelSpec;
use crate::posterior::{ObservationHistory, PosteriorModel};

/// Negative quadratic forms below this are treated as a broken covariance.
const SQRT_NEGATIVE_TOLERANCE: f64 = 1e-8;
/// Unit-box infinity-norm radius inside which a proposal counts as a repeat.
const DUPLICATE_RADIUS: f64 = 1e-9;
/// Size of the nudge applied to repeated proposals, relative to box width.
const NUDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    NoiseFree,
    Perturbation,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::NoiseFree => "noise-free",
            Mode::Perturbation => "perturbation",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noise-free" | "noisefree" | "noise_free" => Ok(Mode::NoiseFree),
            "perturbation" | "perturbed" => Ok(Mode::Perturbation),
            other => Err(Error::input(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    /// Weight of the deviation term (the RKHS norm bound `B`).
    pub norm_bound: f64,
    pub batch_size: usize,
    /// Stabilizer in noise-free mode, modeling `sigma^2` in perturbation mode.
    pub regularizer: f64,
    pub mode: Mode,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            norm_bound: 1.0,
            batch_size: 1,
            regularizer: 0.0,
            mode: Mode::NoiseFree,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.norm_bound >= 0.0) || !self.norm_bound.is_finite() {
            return Err(Error::input(format!(
                "norm bound must be nonnegative, got {}",
                self.norm_bound
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::input("batch size must be at least 1"));
        }
        if !(self.regularizer >= 0.0) {
            return Err(Error::input(format!(
                "regularizer must be nonnegative, got {}",
                self.regularizer
            )));
        }
        if self.mode == Mode::Perturbation && self.regularizer == 0.0 {
            return Err(Error::input("perturbation mode needs a positive regularizer"));
        }
        Ok(())
    }

    /// Fits the posterior this configuration's rule is defined on.
    pub fn fit(&self, spec: &KernelSpec, history: &ObservationHistory) -> Result<PosteriorModel> {
        PosteriorModel::fit(spec, history, self.regularizer)
    }
}

pub fn sequential_acquisition(model: &PosteriorModel, cfg: &AcquisitionConfig, x: &[f64]) -> Result<f64> {
    let (m, v) = model.mean_and_variance(x)?;
    Ok(m + cfg.norm_bound * v.sqrt())
}

fn checked_sqrt(v: f64, what: &str) -> Result<f64> {
    if v < -SQRT_NEGATIVE_TOLERANCE {
        return Err(Error::Numerical(format!("{what} is negative: {v:e}")));
    }
    Ok(v.max(0.0).sqrt())
}

/// The bracketed deviation term `2 sqrt(tr C / L) - sqrt(1^T C 1 / L^2)`.
pub fn batch_deviation(cov: &nalgebra::DMatrix<f64>) -> Result<f64> {
    let l = cov.nrows();
    if l == 1 {
        return checked_sqrt(cov[(0, 0)], "posterior variance");
    }
    let lf = l as f64;
    let trace = checked_sqrt(cov.trace() / lf, "batch covariance trace")?;
    let total = checked_sqrt(cov.sum() / (lf * lf), "batch covariance sum")?;
    Ok(2.0 * trace - total)
}

pub fn batch_acquisition(
    model: &PosteriorModel,
    cfg: &AcquisitionConfig,
    batch: &[Vec<f64>],
) -> Result<f64> {
    if batch.len() != cfg.batch_size {
        return Err(Error::input(format!(
            "batch has {} points, config expects {}",
            batch.len(),
            cfg.batch_size
        )));
    }
    let cov = model.batch_covariance(batch)?;
    let mut mean = 0.0;
    for x in batch {
        mean += model.mean(x)?;
    }
    mean /= batch.len() as f64;
    Ok(mean + cfg.norm_bound * batch_deviation(&cov)?)
}

/// Points chosen for the next round and their acquisition value.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub points: Vec<Vec<f64>>,
    pub value: f64,
}

/// Maximizes the sequential rule (`batch_size == 1`) or the joint batch rule
/// over the `d * L` product box, then nudges any proposal that repeats a stored
/// point or an earlier point of the same batch.
pub fn select_next(
    model: &PosteriorModel,
    cfg: &AcquisitionConfig,
    domain: &BoxDomain,
    maximizer: &InnerMaximizer,
) -> Result<Selection> {
    if cfg.batch_size == 1 {
        select_sequential(model, cfg, domain, maximizer)
    } else {
        select_joint(model, cfg, domain, maximizer)
    }
}

fn select_sequential(
    model: &PosteriorModel,
    cfg: &AcquisitionConfig,
    domain: &BoxDomain,
    maximizer: &InnerMaximizer,
) -> Result<Selection> {
    cfg.validate()?;
    maximizer.validate()?;
    let found = maximizer.maximize(|x| sequential_acquisition(model, cfg, x), domain)?;
    let mut points = vec![found.point];
    let nudged = deduplicate(&mut points, model.points(), domain, maximizer.seed);
    let value = if nudged {
        sequential_acquisition(model, cfg, &points[0])?
    } else {
        found.value
    };
    Ok(Selection { points, value })
}

pub(crate) fn select_joint(
    model: &PosteriorModel,
    cfg: &AcquisitionConfig,
    domain: &BoxDomain,
    maximizer: &InnerMaximizer,
) -> Result<Selection> {
    cfg.validate()?;
    maximizer.validate()?;
    let d = domain.dim();
    let joint = domain.power(cfg.batch_size);
    let split = |flat: &[f64]| -> Vec<Vec<f64>> { flat.chunks(d).map(<[f64]>::to_vec).collect() };
    let found = maximizer.maximize(|flat| batch_acquisition(model, cfg, &split(flat)), &joint)?;
    let mut points = split(&found.point);
    let nudged = deduplicate(&mut points, model.points(), domain, maximizer.seed);
    let value = if nudged {
        batch_acquisition(model, cfg, &points)?
    } else {
        found.value
    };
    Ok(Selection { points, value })
}

fn is_repeat(x: &[f64], others: &[Vec<f64>], domain: &BoxDomain) -> bool {
    others.iter().any(|o| {
        (0..domain.dim()).all(|i| ((x[i] - o[i]) / domain.width(i)).abs() <= DUPLICATE_RADIUS)
    })
}

/// Returns true when any point was moved.
fn deduplicate(points: &mut [Vec<f64>], stored: &[Vec<f64>], domain: &BoxDomain, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut moved = false;
    for k in 0..points.len() {
        let (earlier, rest) = points.split_at_mut(k);
        let x = &mut rest[0];
        let mut tries = 0;
        while is_repeat(x, stored, domain) || is_repeat(x, earlier, domain) {
            for i in 0..domain.dim() {
                let step = NUDGE * domain.width(i) * (1 + tries) as f64;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut v = x[i] + sign * step;
                if v < domain.lower()[i] || v > domain.upper()[i] {
                    v = x[i] - sign * step;
                }
                x[i] = v;
            }
            moved = true;
            tries += 1;
        }
    }
    moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner_opt::Strategy;
    use crate::kernels::KernelFamily;
    use nalgebra::DMatrix;

    fn se1() -> KernelSpec {
        KernelSpec::isotropic(KernelFamily::SquaredExponential, 1).unwrap()
    }

    fn two_point_model() -> PosteriorModel {
        let h = ObservationHistory::from_parts(1, vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        PosteriorModel::fit(&se1(), &h, 0.0).unwrap()
    }

    #[test]
    fn prior_sequential_is_b_times_prior_std() {
        let m = PosteriorModel::fit(&se1(), &ObservationHistory::new(1), 0.0).unwrap();
        let cfg = AcquisitionConfig::default();
        assert_eq!(sequential_acquisition(&m, &cfg, &[0.3]).unwrap(), 1.0);
    }

    #[test]
    fn noise_free_at_stored_point_returns_value() {
        let m = two_point_model();
        let cfg = AcquisitionConfig::default();
        let v = sequential_acquisition(&m, &cfg, &[1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-4);
    }

    #[test]
    fn perturbation_single_observation() {
        let h = ObservationHistory::from_parts(1, vec![vec![0.0]], vec![2.0]).unwrap();
        let cfg = AcquisitionConfig {
            regularizer: 1.0,
            mode: Mode::Perturbation,
            ..Default::default()
        };
        let m = cfg.fit(&se1(), &h).unwrap();
        let v = sequential_acquisition(&m, &cfg, &[0.0]).unwrap();
        assert!((v - (1.0 + 0.5f64.sqrt())).abs() < 1e-12);
        assert!((v - 1.7071).abs() < 1e-4);
    }

    #[test]
    fn deviation_closed_forms() {
        let v = 0.36;
        let correlated = DMatrix::from_element(2, 2, v);
        assert!((batch_deviation(&correlated).unwrap() - v.sqrt()).abs() < 1e-15);
        let diag = DMatrix::identity(2, 2) * v;
        let want = 2.0 * v.sqrt() - (v / 2.0).sqrt();
        assert!((batch_deviation(&diag).unwrap() - want).abs() < 1e-15);
        assert!(want > v.sqrt());
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(batch_deviation(&bad).is_err());
        let tiny = DMatrix::from_row_slice(2, 2, &[-1e-12, 0.0, 0.0, -1e-12]);
        assert_eq!(batch_deviation(&tiny).unwrap(), 0.0);
    }

    #[test]
    fn batch_size_one_reduces_to_sequential() {
        let m = two_point_model();
        let cfg = AcquisitionConfig::default();
        for x in [0.1, 0.5, 0.77, -0.4] {
            let s = sequential_acquisition(&m, &cfg, &[x]).unwrap();
            let b = batch_acquisition(&m, &cfg, &[vec![x]]).unwrap();
            assert!((s - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn batch_permutation_invariant() {
        let m = two_point_model();
        let cfg = AcquisitionConfig {
            batch_size: 3,
            ..Default::default()
        };
        let x = vec![vec![0.2], vec![0.6], vec![-0.3]];
        let y = vec![vec![-0.3], vec![0.2], vec![0.6]];
        let a = batch_acquisition(&m, &cfg, &x).unwrap();
        let b = batch_acquisition(&m, &cfg, &y).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn wrong_batch_length_rejected() {
        let m = two_point_model();
        let cfg = AcquisitionConfig::default();
        assert!(batch_acquisition(&m, &cfg, &[vec![0.1], vec![0.2]]).is_err());
    }

    #[test]
    fn constant_objective_selection() {
        let m = PosteriorModel::fit(&se1(), &ObservationHistory::new(1), 0.0).unwrap();
        let cfg = AcquisitionConfig {
            norm_bound: 0.0,
            ..Default::default()
        };
        let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let sel = select_next(&m, &cfg, &dom, &InnerMaximizer::default()).unwrap();
        assert_eq!(sel.value, 0.0);
        assert!(dom.contains(&sel.points[0]));
    }

    #[test]
    fn sequential_selection_beats_grid() {
        let m = two_point_model();
        let cfg = AcquisitionConfig::default();
        let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let grid = (0..=10_000)
            .map(|i| sequential_acquisition(&m, &cfg, &[i as f64 / 10_000.0]).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let sel = select_next(&m, &cfg, &dom, &InnerMaximizer::default()).unwrap();
        let got = sequential_acquisition(&m, &cfg, &sel.points[0]).unwrap();
        assert!(got >= grid - 1e-6, "{got} vs {grid}");
    }

    #[test]
    fn batch_selection_beats_pair_grid() {
        let m = two_point_model();
        let cfg = AcquisitionConfig {
            batch_size: 2,
            ..Default::default()
        };
        let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let mut grid = f64::NEG_INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let pair = [vec![i as f64 / 200.0], vec![j as f64 / 200.0]];
                grid = grid.max(batch_acquisition(&m, &cfg, &pair).unwrap());
            }
        }
        let sel = select_next(&m, &cfg, &dom, &InnerMaximizer::default()).unwrap();
        let got = batch_acquisition(&m, &cfg, &sel.points).unwrap();
        assert!(got >= grid - 1e-4, "{got} vs {grid}");
    }

    #[test]
    fn single_point_batch_path_matches_sequential_path() {
        let m = two_point_model();
        let cfg = AcquisitionConfig::default();
        let dom = BoxDomain::cube(1, -1.0, 2.0).unwrap();
        let opt = InnerMaximizer::new(Strategy::CmaEs, 600, 3, 21).unwrap();
        let a = select_next(&m, &cfg, &dom, &opt).unwrap();
        let b = select_joint(&m, &cfg, &dom, &opt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repeated_points_are_nudged() {
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let stored = vec![vec![0.5, 0.5], vec![1.0, 1.0]];
        let mut pts = vec![vec![0.5, 0.5], vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(deduplicate(&mut pts, &stored, &dom, 4));
        for (k, p) in pts.iter().enumerate() {
            assert!(dom.contains(p));
            assert!(!is_repeat(p, &stored, &dom));
            assert!(!is_repeat(p, &pts[..k], &dom));
            assert!((p[0] - 0.5).abs() < 1e-4 || (p[0] - 1.0).abs() < 1e-4);
        }
        let mut fresh = vec![vec![0.1, 0.2]];
        assert!(!deduplicate(&mut fresh, &stored, &dom, 4));
        assert_eq!(fresh[0], vec![0.1, 0.2]);
    }

    #[test]
    fn zero_budget_is_input_error() {
        let m = two_point_model();
        let opt = InnerMaximizer {
            budget: 0,
            ..Default::default()
        };
        let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        assert!(matches!(
            select_next(&m, &AcquisitionConfig::default(), &dom, &opt),
            Err(Error::Input(_))
        ));
    }
}
