//! Continuous maximization of acquisition functions over box domains.
//!
//! The default strategy is a restarted (mu/mu_w, lambda) CMA-ES working in
//! unit-cube coordinates with clip-on-sample box handling. Every strategy
//! first evaluates the box center and `restarts` seeded starts, and then only
//! ever *extends* its evaluation sequence as the budget grows: the trajectory
//! never depends on the budget, it is just truncated by it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    CmaEs,
    MultistartCoordinate,
    /// Nested dyadic grid; intended for 1-D and 2-D checks only.
    GridFallback,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cmaes" | "cma-es" | "cma" => Ok(Strategy::CmaEs),
            "coordinate" | "multistart-coordinate" => Ok(Strategy::MultistartCoordinate),
            "grid" => Ok(Strategy::GridFallback),
            other => Err(Error::input(format!("unknown inner strategy `{other}`"))),
        }
    }
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::CmaEs => "cmaes",
            Strategy::MultistartCoordinate => "coordinate",
            Strategy::GridFallback => "grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerMaximizer {
    pub strategy: Strategy,
    /// Objective evaluations, including the center and the seeded starts.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for InnerMaximizer {
    fn default() -> Self {
        Self {
            strategy: Strategy::CmaEs,
            budget: 2000,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Budgeted evaluator in unit coordinates that tracks the first-found best.
struct Tracker<'a, F> {
    obj: F,
    domain: &'a BoxDomain,
    budget: usize,
    used: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl<'a, F> Tracker<'a, F>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    /// Evaluates at unit point `u` (already inside `[0,1]^n`), ignoring the budget.
    fn force(&mut self, u: &[f64]) -> Result<f64> {
        let mut x = self.domain.from_unit(u);
        self.domain.clip(&mut x);
        let value = (self.obj)(&x)?;
        if !value.is_finite() {
            return Err(Error::NonFinite { point: x, value });
        }
        self.used += 1;
        match &self.best {
            Some((_, b)) if value <= *b => {}
            _ => self.best = Some((x, value)),
        }
        Ok(value)
    }

    fn eval(&mut self, u: &[f64]) -> Result<Option<f64>> {
        if self.exhausted() {
            return Ok(None);
        }
        self.force(u).map(Some)
    }
}

impl InnerMaximizer {
    pub fn new(strategy: Strategy, budget: usize, restarts: usize, seed: u64) -> Result<Self> {
        let m = Self {
            strategy,
            budget,
            restarts,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::input("inner maximizer budget must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::input("inner maximizer needs at least one restart"));
        }
        if self.budget < self.restarts {
            return Err(Error::input(format!(
                "budget {} smaller than restarts {}",
                self.budget, self.restarts
            )));
        }
        Ok(())
    }

    /// Maximizes `obj` over `domain`. The returned point lies in the closed box
    /// and its value is at least the value at the center and at every seeded start.
    pub fn maximize<F>(&self, obj: F, domain: &BoxDomain) -> Result<Maximum>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        self.validate()?;
        let n = domain.dim();
        let mut tracker = Tracker {
            obj,
            domain,
            budget: self.budget,
            used: 0,
            best: None,
        };
        let mut start_rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(self.restarts + 1);
        starts.push(vec![0.5; n]);
        for _ in 0..self.restarts {
            starts.push(uniform_unit(&mut start_rng, n));
        }
        for s in &starts {
            tracker.force(s)?;
        }
        match self.strategy {
            Strategy::CmaEs => self.run_cmaes(&mut tracker, &starts, &mut start_rng)?,
            Strategy::MultistartCoordinate => {
                self.run_coordinate(&mut tracker, &starts, &mut start_rng)?
            }
            Strategy::GridFallback => run_grid(&mut tracker, n)?,
        }
        let evaluations = tracker.used;
        let (point, value) = tracker.best.expect("at least the center was evaluated");
        Ok(Maximum {
            point,
            value,
            evaluations,
        })
    }

    fn run_cmaes<F>(
        &self,
        tracker: &mut Tracker<'_, F>,
        starts: &[Vec<f64>],
        start_rng: &mut ChaCha8Rng,
    ) -> Result<()>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let n = starts[0].len();
        let mut run = 0u64;
        while !tracker.exhausted() {
            let mean = match starts.get(run as usize) {
                Some(s) => s.clone(),
                None => uniform_unit(start_rng, n),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(run + 1);
            cmaes_run(tracker, mean, &mut rng)?;
            run += 1;
        }
        Ok(())
    }

    fn run_coordinate<F>(
        &self,
        tracker: &mut Tracker<'_, F>,
        starts: &[Vec<f64>],
        start_rng: &mut ChaCha8Rng,
    ) -> Result<()>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let n = starts[0].len();
        let mut run = 0usize;
        while !tracker.exhausted() {
            let mut x = match starts.get(run) {
                Some(s) => s.clone(),
                None => uniform_unit(start_rng, n),
            };
            run += 1;
            let Some(mut fx) = tracker.eval(&x)? else {
                break;
            };
            let mut step = 0.25;
            while step > 1e-9 {
                let mut improved = false;
                for j in 0..n {
                    for dir in [1.0, -1.0] {
                        let mut y = x.clone();
                        y[j] = (y[j] + dir * step).clamp(0.0, 1.0);
                        if y[j] == x[j] {
                            continue;
                        }
                        let Some(fy) = tracker.eval(&y)? else {
                            return Ok(());
                        };
                        if fy > fx {
                            x = y;
                            fx = fy;
                            improved = true;
                            break;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
        }
        Ok(())
    }
}

fn uniform_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn run_grid<F>(tracker: &mut Tracker<'_, F>, n: usize) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let remaining = tracker.budget.saturating_sub(tracker.used);
    // largest dyadic level with (2^k + 1)^n points inside the budget; levels nest
    let mut level = 0u32;
    while level < 30 {
        let per_dim = (1usize << (level + 1)) + 1;
        match per_dim.checked_pow(n as u32) {
            Some(total) if total <= remaining => level += 1,
            _ => break,
        }
    }
    let per_dim = (1usize << level) + 1;
    let Some(total) = per_dim.checked_pow(n as u32) else {
        return Ok(());
    };
    let mut u = vec![0.0; n];
    for idx in 0..total {
        let mut rest = idx;
        for v in u.iter_mut() {
            *v = (rest % per_dim) as f64 / (per_dim - 1) as f64;
            rest /= per_dim;
        }
        if tracker.eval(&u)?.is_none() {
            break;
        }
    }
    Ok(())
}

/// One CMA-ES descent from `mean` (unit coordinates), maximizing.
fn cmaes_run<F>(tracker: &mut Tracker<'_, F>, mut mean: Vec<f64>, rng: &mut ChaCha8Rng) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = mean.len();
    let nf = n as f64;
    let lambda = 4 + (3.0 * nf.ln()).floor() as usize;
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let ds = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut sigma = 0.3;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);

    let max_gens = 100 + (150.0 * (nf + 3.0).powi(2) / (lambda as f64).sqrt()) as usize;
    let patience = 10 + (30.0 * nf / lambda as f64).ceil() as usize;
    let mut run_best = f64::NEG_INFINITY;
    let mut stale = 0usize;

    for gen in 0..max_gens {
        let mut cands: Vec<(Vec<f64>, f64)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
            let y = &basis * z.component_mul(&scales);
            let x: Vec<f64> = (0..n)
                .map(|i| (mean[i] + sigma * y[i]).clamp(0.0, 1.0))
                .collect();
            let Some(v) = tracker.eval(&x)? else {
                return Ok(());
            };
            cands.push((x, v));
        }
        // stable sort keeps the candidate index as tie-breaker
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| cands[b].1.total_cmp(&cands[a].1));

        let gen_best = cands[order[0]].1;
        if gen == 0 || gen_best > run_best + 1e-12 * run_best.abs().max(1e-12) {
            run_best = gen_best;
            stale = 0;
        } else {
            stale += 1;
        }

        let old = DVector::from_column_slice(&mean);
        let mut new_mean = DVector::<f64>::zeros(n);
        for (w, &idx) in weights.iter().zip(&order) {
            new_mean += DVector::from_column_slice(&cands[idx].0) * *w;
        }
        let step = (&new_mean - &old) / sigma;

        // C^{-1/2} step
        let inv_sqrt = &basis
            * DMatrix::from_diagonal(&scales.map(|s| 1.0 / s))
            * basis.transpose();
        ps = &ps * (1.0 - cs) + (&inv_sqrt * &step) * (cs * (2.0 - cs) * mueff).sqrt();
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * (gen as i32 + 1))).sqrt() / chi_n
            < 1.4 + 2.0 / (nf + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        pc = &pc * (1.0 - cc) + &step * (hs * (cc * (2.0 - cc) * mueff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &idx) in weights.iter().zip(&order) {
            let d = (DVector::from_column_slice(&cands[idx].0) - &old) / sigma;
            rank_mu += (&d * d.transpose()) * *w;
        }
        cov = &cov * (1.0 - c1 - cmu)
            + (&pc * pc.transpose() + &cov * ((1.0 - hs) * cc * (2.0 - cc))) * c1
            + rank_mu * cmu;
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((cs / ds) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.min(1.0);
        mean = new_mean.as_slice().to_vec();

        let eig = cov.clone().symmetric_eigen();
        let min_ev = eig.eigenvalues.min();
        let max_ev = eig.eigenvalues.max();
        if !(min_ev > 0.0) || max_ev / min_ev > 1e14 {
            return Ok(());
        }
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(f64::sqrt);

        if sigma * scales.max() < 1e-11 || stale > patience {
            return Ok(());
        }
    }
    Ok(())
}

/// Free-function form of [`InnerMaximizer::maximize`].
pub fn maximize<F>(obj: F, domain: &BoxDomain, m: &InnerMaximizer) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    m.maximize(obj, domain)
}
