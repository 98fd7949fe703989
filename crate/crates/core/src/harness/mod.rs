//! Experiment driver: lattice initialization, the acquisition loop, random
//! baseline and multi-seed aggregation.

mod config;
mod output;

pub use config::{InitSpec, LatticeMethod, ProblemKind, RunConfig};
pub use output::{read_trace_file, write_suite_table, write_trace_file, SuiteRow};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{select_next, Mode};
use crate::benchmarks::{regret_update, Objective, Observation, Perturbation, RkhsSpan, RunTrace};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::lattice::{
    read_point_file, resize_to_box, search_alg6, search_alg7, search_korobov_full, LatticeSearchConfig,
    Rank1Lattice,
};
use crate::linalg::spectral_norm_symmetric;
use crate::posterior::{information_gain, ObservationHistory, PosteriorModel};

/// The noise-free function being optimized, on the maximization scale.
#[derive(Debug, Clone)]
pub enum Problem {
    Benchmark(Objective),
    Rkhs(RkhsSpan),
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        match cfg.problem {
            ProblemKind::Benchmark(kind) => Ok(Problem::Benchmark(Objective::new(kind, cfg.dim)?)),
            ProblemKind::RkhsSpan { centers } => Ok(Problem::Rkhs(RkhsSpan::random(
                cfg.kernel.clone(),
                BoxDomain::unit(cfg.dim),
                centers,
                cfg.objective_seed,
            )?)),
        }
    }

    pub fn domain(&self) -> &BoxDomain {
        match self {
            Problem::Benchmark(o) => o.domain(),
            Problem::Rkhs(f) => f.domain(),
        }
    }

    /// Noise-free utility `u(x)`; benchmarks are negated.
    pub fn utility(&self, x: &[f64]) -> Result<f64> {
        match self {
            Problem::Benchmark(o) => Ok(-o.evaluate(x)?),
            Problem::Rkhs(f) => f.evaluate(x),
        }
    }

    pub fn optimum(&self) -> f64 {
        match self {
            Problem::Benchmark(o) => -o.known_optimum_value(),
            Problem::Rkhs(f) => f.optimum(),
        }
    }

    /// RKHS norm of the utility, when known exactly.
    pub fn norm(&self) -> Option<f64> {
        match self {
            Problem::Benchmark(_) => None,
            Problem::Rkhs(f) => Some(f.norm()),
        }
    }
}

/// Unit-cube lattice of `count` points (the origin alone for `count == 1`).
pub fn init_lattice(dim: usize, count: usize, method: LatticeMethod, primes: usize, scs: usize) -> Result<Vec<Vec<f64>>> {
    match count {
        0 => Ok(Vec::new()),
        1 => Ok(vec![vec![0.0; dim]]),
        n => {
            let cfg = LatticeSearchConfig {
                n_primes: primes,
                dimension: dim,
                n_points: n,
                scs_iterations: scs,
            };
            let lat: Rank1Lattice = match method {
                LatticeMethod::Alg6 => search_alg6(&cfg)?,
                LatticeMethod::Alg7 => search_alg7(&cfg).or_else(|_| search_alg6(&cfg))?,
                LatticeMethod::Korobov => search_korobov_full(dim, n)?,
            };
            Ok(lat.into_points())
        }
    }
}

fn unit_init_points(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    match &cfg.init {
        InitSpec::None => Ok(Vec::new()),
        InitSpec::Lattice {
            count,
            method,
            primes,
            scs_iterations,
        } => init_lattice(cfg.dim, *count, *method, *primes, *scs_iterations),
        InitSpec::File(path) => {
            let pts = read_point_file(path)?;
            for p in &pts {
                if p.len() != cfg.dim {
                    return Err(Error::DimensionMismatch {
                        expected: cfg.dim,
                        got: p.len(),
                    });
                }
                if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::input(format!(
                        "{}: init point {p:?} outside [0,1]^d",
                        path.display()
                    )));
                }
            }
            Ok(pts)
        }
    }
}

/// A configuration with its problem and initialization resolved once, ready
/// to be run for any number of seeds.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: RunConfig,
    problem: Problem,
    init_points: Vec<Vec<f64>>,
    perturbation: Perturbation,
    norm_bound: f64,
}

/// Deterministic per-round seed.
fn mix(seed: u64, round: usize) -> u64 {
    let mut z = seed ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z ^ (z >> 33)
}

impl Experiment {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = Problem::build(cfg)?;
        let init_points = resize_to_box(&unit_init_points(cfg)?, problem.domain())?;
        let norm_bound = cfg.norm_bound.or(problem.norm()).unwrap_or(1.0);
        Ok(Self {
            cfg: cfg.clone(),
            problem,
            init_points,
            perturbation: Perturbation {
                scale: cfg.noise_scale,
                seed: cfg.objective_seed,
            },
            norm_bound,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    /// Weight of the deviation term actually used.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn init_points(&self) -> &[Vec<f64>] {
        &self.init_points
    }

    fn observe(&self, x: &[f64]) -> Result<Observation> {
        let utility = self.problem.utility(x)?;
        Ok(Observation {
            query: x.to_vec(),
            utility,
            observed: utility + self.perturbation.value(x),
        })
    }

    /// Evaluates the initialization set into a fresh history.
    pub fn robust_init(&self) -> Result<ObservationHistory> {
        let mut h = ObservationHistory::new(self.cfg.dim);
        for x in &self.init_points {
            let obs = self.observe(x)?;
            h.push(obs.query, obs.observed)?;
        }
        Ok(h)
    }

    fn fit(&self, history: &ObservationHistory) -> Result<PosteriorModel> {
        let reg = self.cfg.acquisition.regularizer;
        if !self.cfg.standardize || history.len() < 2 {
            return PosteriorModel::fit(&self.cfg.kernel, history, reg);
        }
        let vals = history.values();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let scaled = ObservationHistory::from_parts(
            history.dimension(),
            history.points().to_vec(),
            vals.iter().map(|v| (v - mean) / sd).collect(),
        )?;
        PosteriorModel::fit(&self.cfg.kernel, &scaled, reg)
    }

    /// Runs initialization and `rounds` acquisition rounds for one seed.
    pub fn run(&self, seed: u64) -> Result<RunTrace> {
        let cfg = &self.cfg;
        let domain = self.problem.domain();
        let optimum = self.problem.optimum();
        let mut acq = cfg.acquisition.clone();
        acq.norm_bound = self.norm_bound;

        let mut trace = RunTrace::new(seed);
        let mut history = ObservationHistory::new(cfg.dim);
        let init: Vec<Observation> = self
            .init_points
            .iter()
            .map(|x| self.observe(x))
            .collect::<Result<_>>()?;
        for obs in &init {
            history.push(obs.query.clone(), obs.observed)?;
        }
        regret_update(&mut trace, optimum, 0, &init);

        let mut beta = 0.0f64;
        for round in 1..=cfg.rounds {
            let mut step = || -> Result<Vec<Observation>> {
                let model = self.fit(&history)?;
                let maximizer = cfg.inner.with_seed(mix(seed, round));
                let sel = select_next(&model, &acq, domain, &maximizer)?;
                if acq.batch_size > 1 {
                    let cov = model.batch_covariance(&sel.points)?;
                    beta = beta.max(spectral_norm_symmetric(&cov));
                }
                sel.points.iter().map(|x| self.observe(x)).collect()
            };
            let batch = step().map_err(|e| e.at_round(round))?;
            for obs in &batch {
                history
                    .push(obs.query.clone(), obs.observed)
                    .map_err(|e| e.at_round(round))?;
            }
            regret_update(&mut trace, optimum, round, &batch);
            let diag = self
                .bound_diagnostics(&history, trace.len() - init.len(), beta)
                .map_err(|e| e.at_round(round))?;
            for s in trace.steps.iter_mut().rev().take(batch.len()) {
                s.gamma = diag.gamma;
                s.beta = diag.beta;
                s.bound = diag.bound;
            }
        }
        Ok(trace)
    }

    /// Information gain of everything observed so far, the batch spectral
    /// factor, and the deterministic bound on the acquisition rounds' cumulative
    /// regret (NaN when the relevant norms are unknown).
    fn bound_diagnostics(&self, history: &ObservationHistory, acquired: usize, beta: f64) -> Result<BoundDiagnostics> {
        let cfg = &self.cfg;
        let sigma2 = PosteriorModel::fit(&cfg.kernel, &ObservationHistory::new(cfg.dim), cfg.acquisition.regularizer)?
            .diagonal_shift();
        let gamma = information_gain(&cfg.kernel, history.points(), sigma2)?;
        let batch = cfg.acquisition.batch_size > 1;
        let beta_out = if batch { beta } else { f64::NAN };
        let t = acquired as f64;
        let kmax = cfg.kernel.signal_variance();
        let constant = |scale: f64| 8.0 * scale / (1.0 + scale / sigma2).ln();
        let norm = self.problem.norm().filter(|n| self.norm_bound >= *n - 1e-12);
        let bound = match (cfg.acquisition.mode, norm) {
            (_, None) => f64::NAN,
            (Mode::NoiseFree, Some(nf)) => {
                let c = if batch { constant(beta) } else { constant(kmax) };
                nf * (t * c * gamma).sqrt()
            }
            (Mode::Perturbation, Some(nf)) if self.cfg.noise_scale == 0.0 => {
                // g = 0, so h = f and the perturbation terms reduce to 2 T |f| sigma
                let c = if batch { constant(beta) } else { constant(kmax + sigma2) };
                nf * (t * c * gamma).sqrt() + 2.0 * t * nf * sigma2.sqrt()
            }
            (Mode::Perturbation, Some(_)) => f64::NAN,
        };
        Ok(BoundDiagnostics {
            gamma,
            beta: beta_out,
            bound,
        })
    }

    /// Uniform random search with the same total number of queries.
    pub fn run_random_baseline(&self, seed: u64) -> Result<RunTrace> {
        let domain = self.problem.domain();
        let optimum = self.problem.optimum();
        let total = self.init_points.len() + self.cfg.total_queries();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = RunTrace::new(seed);
        for _ in 0..total {
            let x: Vec<f64> = (0..domain.dim())
                .map(|i| rng.random_range(domain.lower()[i]..=domain.upper()[i]))
                .collect();
            let obs = self.observe(&x)?;
            regret_update(&mut trace, optimum, 0, &[obs]);
        }
        Ok(trace)
    }

    /// Whether the acquisition rounds respect the recorded regret bound.
    /// `None` when no bound is available.
    pub fn bound_holds(&self, trace: &RunTrace) -> Option<bool> {
        let last = trace.last()?;
        if !last.bound.is_finite() {
            return None;
        }
        Some(trace.acquisition_regret(self.problem.optimum()) <= last.bound)
    }
}

#[derive(Debug, Clone, Copy)]
struct BoundDiagnostics {
    gamma: f64,
    beta: f64,
    bound: f64,
}

/// One history of initialization observations for `cfg`.
pub fn robust_init(cfg: &RunConfig) -> Result<ObservationHistory> {
    Experiment::new(cfg)?.robust_init()
}

/// Runs `cfg` for one seed.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<RunTrace> {
    Experiment::new(cfg)?.run(seed)
}

/// Seeds used for `repetitions` runs: consecutive from the first configured seed.
pub fn suite_seeds(cfg: &RunConfig, repetitions: usize) -> Vec<u64> {
    let first = cfg.seeds.first().copied().unwrap_or(1);
    (0..repetitions as u64).map(|r| first + r).collect()
}

/// Per-step mean and standard error of simple regret across repetitions.
pub fn run_suite(configs: &[RunConfig], repetitions: usize) -> Result<Vec<SuiteRow>> {
    if repetitions == 0 {
        return Err(Error::input("need at least one repetition"));
    }
    let mut rows = Vec::new();
    for (ci, cfg) in configs.iter().enumerate() {
        let exp = Experiment::new(cfg)?;
        let traces = suite_seeds(cfg, repetitions)
            .into_iter()
            .map(|s| exp.run(s))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(aggregate(ci, &traces));
    }
    Ok(rows)
}

/// Mean and standard error per step over traces of equal length.
pub fn aggregate(config: usize, traces: &[RunTrace]) -> Vec<SuiteRow> {
    let steps = traces.iter().map(RunTrace::len).min().unwrap_or(0);
    let n = traces.len() as f64;
    (0..steps)
        .map(|i| {
            let vals: Vec<f64> = traces.iter().map(|t| t.steps[i].simple_regret).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let stderr = if traces.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            SuiteRow {
                config,
                step: traces[0].steps[i].step,
                mean,
                stderr,
                runs: traces.len(),
            }
        })
        .collect()
}
