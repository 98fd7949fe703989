//! Synthetic test objectives, bounded perturbations and regret bookkeeping.
//!
//! Objectives are written in their usual minimization form. The optimizer
//! maximizes the *utility* `u(x) = -f(x)`; regret `u* - u(x) = f(x) - f*` is
//! the same number on either scale.

use std::f64::consts::{E, PI};

use nalgebra::DVector;

use crate::domain::BoxDomain;
use crate::error::{check_dim, Error, Result};
use crate::inner_opt::{InnerMaximizer, Strategy};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Rosenbrock,
    Nesterov,
    DifferentPowers,
    DixonPrice,
    Ackley,
    Levy,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::Rosenbrock,
        ObjectiveKind::Nesterov,
        ObjectiveKind::DifferentPowers,
        ObjectiveKind::DixonPrice,
        ObjectiveKind::Ackley,
        ObjectiveKind::Levy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Rosenbrock => "rosenbrock",
            ObjectiveKind::Nesterov => "nesterov",
            ObjectiveKind::DifferentPowers => "different-powers",
            ObjectiveKind::DixonPrice => "dixon-price",
            ObjectiveKind::Ackley => "ackley",
            ObjectiveKind::Levy => "levy",
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == key || k.name().replace('-', "") == key)
            .ok_or_else(|| Error::input(format!("unknown objective `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    kind: ObjectiveKind,
    domain: BoxDomain,
    optimizer: Vec<f64>,
}

impl Objective {
    pub fn new(kind: ObjectiveKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("objective dimension must be positive"));
        }
        let half_width = if kind == ObjectiveKind::Levy { 10.0 } else { 2.0 };
        let domain = BoxDomain::cube(dim, -half_width, half_width)?;
        let optimizer = match kind {
            ObjectiveKind::Rosenbrock | ObjectiveKind::Nesterov | ObjectiveKind::Levy => vec![1.0; dim],
            ObjectiveKind::Ackley | ObjectiveKind::DifferentPowers => vec![0.0; dim],
            ObjectiveKind::DixonPrice => (1..=dim as i32)
                .map(|i| {
                    let p = 2f64.powi(i);
                    2f64.powf(-(p - 2.0) / p)
                })
                .collect(),
        };
        let obj = Self {
            kind,
            domain,
            optimizer,
        };
        debug_assert!(obj.formula(&obj.optimizer).abs() < 1e-12);
        Ok(obj)
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn known_optimizer(&self) -> &[f64] {
        &self.optimizer
    }

    /// All six objectives attain 0 at their optimizer.
    pub fn known_optimum_value(&self) -> f64 {
        0.0
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if !self.domain.contains(x) {
            return Err(Error::input(format!(
                "{x:?} outside the {} domain",
                self.kind.name()
            )));
        }
        Ok(self.formula(x))
    }

    fn formula(&self, x: &[f64]) -> f64 {
        let d = x.len();
        match self.kind {
            ObjectiveKind::Rosenbrock => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            ObjectiveKind::Nesterov => {
                0.25 * (x[0] - 1.0).abs()
                    + x.windows(2)
                        .map(|w| (w[1] - 2.0 * w[0].abs() + 1.0).abs())
                        .sum::<f64>()
            }
            ObjectiveKind::DifferentPowers => x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = if d > 1 {
                        2.0 + 10.0 * i as f64 / (d - 1) as f64
                    } else {
                        2.0
                    };
                    v.abs().powf(p)
                })
                .sum(),
            ObjectiveKind::DixonPrice => {
                (x[0] - 1.0).powi(2)
                    + (1..d)
                        .map(|i| (i + 1) as f64 * (2.0 * x[i] * x[i] - x[i - 1]).powi(2))
                        .sum::<f64>()
            }
            ObjectiveKind::Ackley => {
                let n = d as f64;
                let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
                let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
                -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
            }
            ObjectiveKind::Levy => {
                let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
                let head = (PI * w[0]).sin().powi(2);
                let mid: f64 = w[..d - 1]
                    .iter()
                    .map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2)))
                    .sum();
                let wd = w[d - 1];
                let tail = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
                head + mid + tail
            }
        }
    }
}

/// Deterministic bounded perturbation `g(x) = scale * (2 hash01(seed, x) - 1)`.
///
/// `g` is a function of `x`: repeated queries return the same value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub scale: f64,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of the seed and the coordinate bit patterns onto `[0, 1]`.
fn hash01(seed: u64, x: &[f64]) -> f64 {
    let mut h = splitmix64(seed);
    for v in x {
        let bits = if *v == 0.0 { 0 } else { v.to_bits() };
        h = splitmix64(h ^ bits);
    }
    (h >> 11) as f64 / ((1u64 << 53) - 1) as f64
}

impl Perturbation {
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        self.scale * (2.0 * hash01(self.seed, x) - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedObjective {
    pub base: Objective,
    pub perturbation: Perturbation,
}

impl PerturbedObjective {
    pub fn new(base: Objective, noise_scale: f64, seed: u64) -> Result<Self> {
        if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
            return Err(Error::input(format!("noise scale must be nonnegative, got {noise_scale}")));
        }
        Ok(Self {
            base,
            perturbation: Perturbation {
                scale: noise_scale,
                seed,
            },
        })
    }

    pub fn perturbed_evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.base.evaluate(x)? + self.perturbation.value(x))
    }
}

/// `f(x) = sum_i c_i k(z_i, x)`, a function with exactly known RKHS norm
/// `sqrt(c^T K(Z, Z) c)`. Used to check the deterministic regret bounds.
#[derive(Debug, Clone)]
pub struct RkhsSpan {
    spec: KernelSpec,
    centers: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    domain: BoxDomain,
    norm: f64,
    optimum: f64,
}

impl RkhsSpan {
    pub fn new(
        spec: KernelSpec,
        centers: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        domain: BoxDomain,
    ) -> Result<Self> {
        if centers.len() != coefficients.len() || centers.is_empty() {
            return Err(Error::input("need matching, nonempty centers and coefficients"));
        }
        check_dim(spec.dimension(), domain.dim())?;
        let k = spec.gram(&centers)?;
        let c = DVector::from_column_slice(&coefficients);
        let norm = c.dot(&(k * &c)).max(0.0).sqrt();
        let mut f = Self {
            spec,
            centers,
            coefficients,
            domain,
            norm,
            optimum: f64::NAN,
        };
        f.optimum = f.locate_optimum()?;
        Ok(f)
    }

    /// Random span with `n_centers` centers drawn in the box and coefficients in `[-1, 1]`.
    pub fn random(spec: KernelSpec, domain: BoxDomain, n_centers: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..n_centers)
            .map(|_| {
                (0..domain.dim())
                    .map(|i| rng.random_range(domain.lower()[i]..domain.upper()[i]))
                    .collect()
            })
            .collect();
        let coefficients = (0..n_centers).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(spec, centers, coefficients, domain)
    }

    fn raw(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefficients)
            .map(|(z, c)| c * self.spec.eval_unchecked(z, x))
            .sum()
    }

    /// Maximum over a dense grid (low dimension) or many starts, polished by CMA-ES
    /// from the best centers and grid points.
    fn locate_optimum(&self) -> Result<f64> {
        let d = self.domain.dim();
        let mut best = f64::NEG_INFINITY;
        let mut seeds: Vec<Vec<f64>> = self.centers.clone();
        if d <= 3 {
            let per = match d {
                1 => 20_001usize,
                2 => 401,
                _ => 61,
            };
            let total = per.pow(d as u32);
            let mut grid_best = (f64::NEG_INFINITY, vec![0.0; d]);
            let mut u = vec![0.0; d];
            for idx in 0..total {
                let mut rest = idx;
                for v in u.iter_mut() {
                    *v = (rest % per) as f64 / (per - 1) as f64;
                    rest /= per;
                }
                let x = self.domain.from_unit(&u);
                let v = self.raw(&x);
                if v > grid_best.0 {
                    grid_best = (v, x);
                }
            }
            best = best.max(grid_best.0);
            seeds.push(grid_best.1);
        }
        let opt = InnerMaximizer::new(Strategy::CmaEs, 3000, 4, 7)?;
        for s in seeds {
            // a small box around the seed point
            let lo: Vec<f64> = (0..d)
                .map(|i| (s[i] - 0.1 * self.domain.width(i)).max(self.domain.lower()[i]))
                .collect();
            let hi: Vec<f64> = (0..d)
                .map(|i| (s[i] + 0.1 * self.domain.width(i)).min(self.domain.upper()[i]))
                .collect();
            let local = BoxDomain::new(lo, hi)?;
            best = best.max(opt.maximize(|x| Ok(self.raw(x)), &local)?.value);
        }
        best = best.max(opt.maximize(|x| Ok(self.raw(x)), &self.domain)?.value);
        Ok(best)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Numerically located maximum value.
    pub fn optimum(&self) -> f64 {
        self.optimum
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.domain.dim(), x.len())?;
        Ok(self.raw(x))
    }
}

/// One query's row in a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// 0 for initialization, then 1.. per acquisition round.
    pub round: usize,
    /// 1-based query index.
    pub step: usize,
    pub query: Vec<f64>,
    /// Value seen by the model (utility scale, perturbation included).
    pub observed: f64,
    /// Noise-free utility at the query.
    pub utility: f64,
    pub best_so_far: f64,
    pub simple_regret: f64,
    pub cumulative_regret: f64,
    pub gamma: f64,
    pub beta: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub steps: Vec<TraceStep>,
}

/// One evaluated query handed to [`regret_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub query: Vec<f64>,
    pub utility: f64,
    pub observed: f64,
}

impl RunTrace {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&TraceStep> {
        self.steps.last()
    }

    pub fn final_simple_regret(&self) -> f64 {
        self.last().map_or(f64::INFINITY, |s| s.simple_regret)
    }

    pub fn final_cumulative_regret(&self) -> f64 {
        self.last().map_or(0.0, |s| s.cumulative_regret)
    }

    pub fn simple_regrets(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.simple_regret).collect()
    }

    /// Regret accrued by rounds `>= 1`, i.e. by the acquisition rule itself.
    pub fn acquisition_regret(&self, optimum: f64) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.round > 0)
            .map(|s| optimum - s.utility)
            .sum()
    }
}

/// Appends the observations of one round. Regret is measured on the
/// noise-free utility even when the model sees perturbed values.
pub fn regret_update(trace: &mut RunTrace, optimum: f64, round: usize, batch: &[Observation]) {
    for obs in batch {
        let prev = trace.steps.last();
        let best = prev.map_or(obs.utility, |p| p.best_so_far.max(obs.utility));
        let cumulative = prev.map_or(0.0, |p| p.cumulative_regret) + (optimum - obs.utility);
        let step = prev.map_or(1, |p| p.step + 1);
        trace.steps.push(TraceStep {
            round,
            step,
            query: obs.query.clone(),
            observed: obs.observed,
            utility: obs.utility,
            best_so_far: best,
            simple_regret: optimum - best,
            cumulative_regret: cumulative,
            gamma: f64::NAN,
            beta: f64::NAN,
            bound: f64::NAN,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use rand::{Rng, SeedableRng};

    #[test]
    fn optima_are_zero() {
        for kind in ObjectiveKind::ALL {
            for d in [1usize, 2, 6, 10] {
                let obj = Objective::new(kind, d).unwrap();
                let v = obj.evaluate(obj.known_optimizer()).unwrap();
                assert!(v.abs() <= 1e-12, "{} d={d}: {v}", kind.name());
            }
        }
    }

    #[test]
    fn plug_in_values() {
        let r = Objective::new(ObjectiveKind::Rosenbrock, 2).unwrap();
        assert_eq!(r.evaluate(&[0.0, 0.0]).unwrap(), 1.0);
        let a = Objective::new(ObjectiveKind::Ackley, 3).unwrap();
        assert!(a.evaluate(&[0.0; 3]).unwrap().abs() < 1e-15);
        let dp = Objective::new(ObjectiveKind::DifferentPowers, 3).unwrap();
        // |x1|^2 + |x2|^7 + |x3|^12
        let v = dp.evaluate(&[1.5, -1.0, 0.5]).unwrap();
        assert!((v - (2.25 + 1.0 + 0.5f64.powi(12))).abs() < 1e-14);
        let n = Objective::new(ObjectiveKind::Nesterov, 2).unwrap();
        assert!((n.evaluate(&[0.0, 0.0]).unwrap() - 1.25).abs() < 1e-15);
        let dx = Objective::new(ObjectiveKind::DixonPrice, 2).unwrap();
        // (0-1)^2 + 2 (2 - 0)^2
        assert_eq!(dx.evaluate(&[0.0, 1.0]).unwrap(), 9.0);
    }

    #[test]
    fn domains_follow_the_table() {
        assert_eq!(Objective::new(ObjectiveKind::Levy, 2).unwrap().domain().upper(), &[10.0, 10.0]);
        assert_eq!(Objective::new(ObjectiveKind::Ackley, 2).unwrap().domain().lower(), &[-2.0, -2.0]);
    }

    #[test]
    fn out_of_box_and_dimension_errors() {
        let r = Objective::new(ObjectiveKind::Rosenbrock, 2).unwrap();
        assert!(r.evaluate(&[3.0, 0.0]).is_err());
        assert!(r.evaluate(&[0.0]).is_err());
    }

    #[test]
    fn names_parse() {
        for kind in ObjectiveKind::ALL {
            assert_eq!(kind.name().parse::<ObjectiveKind>().unwrap(), kind);
        }
        assert_eq!("DixonPrice".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::DixonPrice);
        assert!("sphere".parse::<ObjectiveKind>().is_err());
    }

    #[test]
    fn perturbation_is_bounded_and_consistent() {
        let base = Objective::new(ObjectiveKind::Ackley, 3).unwrap();
        let clean = PerturbedObjective::new(base.clone(), 0.0, 1).unwrap();
        let noisy = PerturbedObjective::new(base.clone(), 0.3, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut spread = 0.0f64;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = base.evaluate(&x).unwrap();
            assert_eq!(clean.perturbed_evaluate(&x).unwrap(), f);
            let y = noisy.perturbed_evaluate(&x).unwrap();
            assert!((y - f).abs() <= 0.3);
            assert_eq!(y, noisy.perturbed_evaluate(&x).unwrap());
            spread = spread.max((y - f).abs());
        }
        assert!(spread > 0.25);
        assert!(PerturbedObjective::new(base, -1.0, 0).is_err());
    }

    #[test]
    fn rkhs_norm_and_optimum() {
        let spec = KernelSpec::isotropic(KernelFamily::SquaredExponential, 1).unwrap();
        let dom = BoxDomain::cube(1, -2.0, 2.0).unwrap();
        let f = RkhsSpan::new(spec, vec![vec![0.0]], vec![2.0], dom).unwrap();
        assert!((f.norm() - 2.0).abs() < 1e-15);
        assert!((f.optimum() - 2.0).abs() < 1e-9);
        assert!((f.evaluate(&[0.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn regret_arithmetic() {
        let mut t = RunTrace::new(0);
        let obs = |u: f64| Observation {
            query: vec![0.0],
            utility: u,
            observed: u,
        };
        regret_update(&mut t, 10.0, 0, &[obs(7.0)]);
        assert_eq!(t.final_simple_regret(), 3.0);
        assert_eq!(t.final_cumulative_regret(), 3.0);
        regret_update(&mut t, 10.0, 1, &[obs(9.0), obs(6.0)]);
        assert_eq!(t.final_cumulative_regret(), 3.0 + 1.0 + 4.0);
        assert_eq!(t.final_simple_regret(), 1.0);
        regret_update(&mut t, 10.0, 2, &[obs(10.0)]);
        assert_eq!(t.final_simple_regret(), 0.0);
        assert_eq!(t.steps.iter().map(|s| s.step).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(t.acquisition_regret(10.0), 5.0);
    }
}
