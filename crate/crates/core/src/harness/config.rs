//! Flat `section.key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! objective.name = rosenbrock      # any benchmark name, or rkhs-span
//! objective.dim = 6
//! objective.noise_scale = 0        # bounded perturbation amplitude
//! objective.seed = 0               # perturbation / rkhs-span seed
//! objective.centers = 10           # rkhs-span only
//! kernel.family = matern52         # matern52 | se
//! kernel.lengthscales = 1.0        # one value or a comma list of length dim
//! kernel.variance = 1.0
//! acquisition.mode = noise-free    # noise-free | perturbation
//! acquisition.regularizer = 1e-6   # stabilizer (noise-free) or sigma^2 (perturbation)
//! acquisition.norm_bound = auto    # number, or auto: known RKHS norm, else 1
//! acquisition.batch_size = 5
//! run.rounds = 20                  # number of acquisition rounds N, T = N * L
//! run.seeds = 1,2,3
//! init.kind = lattice              # lattice | file | none
//! init.count = 20
//! init.method = alg7               # alg7 | alg6 | korobov
//! init.primes = 50
//! init.scs_iters = 3
//! init.file = points.txt           # init.kind = file; points in [0,1]^d
//! inner.strategy = cmaes           # cmaes | coordinate | grid
//! inner.budget = 2000
//! inner.restarts = 3
//! model.standardize = false        # z-score observations before fitting
//! output.dir = results
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::acquisition::{AcquisitionConfig, Mode};
use crate::benchmarks::ObjectiveKind;
use crate::error::{Error, Result};
use crate::inner_opt::{InnerMaximizer, Strategy};
use crate::kernels::{KernelFamily, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Benchmark(ObjectiveKind),
    /// Random `sum_i c_i k(z_i, .)` in `[0,1]^d` built from the run's kernel.
    RkhsSpan { centers: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeMethod {
    Alg6,
    Alg7,
    Korobov,
}

impl FromStr for LatticeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alg6" => Ok(LatticeMethod::Alg6),
            "alg7" => Ok(LatticeMethod::Alg7),
            "korobov" => Ok(LatticeMethod::Korobov),
            other => Err(Error::input(format!("unknown lattice method `{other}`"))),
        }
    }
}

impl LatticeMethod {
    pub fn name(self) -> &'static str {
        match self {
            LatticeMethod::Alg6 => "alg6",
            LatticeMethod::Alg7 => "alg7",
            LatticeMethod::Korobov => "korobov",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    None,
    Lattice {
        count: usize,
        method: LatticeMethod,
        primes: usize,
        scs_iterations: usize,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub dim: usize,
    pub noise_scale: f64,
    pub objective_seed: u64,
    pub kernel: KernelSpec,
    pub acquisition: AcquisitionConfig,
    /// `None` means: the problem's RKHS norm when known, else 1.
    pub norm_bound: Option<f64>,
    pub rounds: usize,
    pub init: InitSpec,
    pub inner: InnerMaximizer,
    pub seeds: Vec<u64>,
    pub standardize: bool,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for a benchmark objective: Matern 5/2 with unit lengthscales,
    /// 20 lattice points, sequential noise-free rule with a `1e-6` stabilizer.
    pub fn benchmark(kind: ObjectiveKind, dim: usize) -> Result<Self> {
        Ok(Self {
            problem: ProblemKind::Benchmark(kind),
            dim,
            noise_scale: 0.0,
            objective_seed: 0,
            kernel: KernelSpec::isotropic(KernelFamily::Matern52, dim)?,
            acquisition: AcquisitionConfig {
                norm_bound: 1.0,
                batch_size: 1,
                regularizer: 1e-6,
                mode: Mode::NoiseFree,
            },
            norm_bound: None,
            rounds: 10,
            init: InitSpec::Lattice {
                count: 20,
                method: LatticeMethod::Alg7,
                primes: 50,
                scs_iterations: 3,
            },
            inner: InnerMaximizer::default(),
            seeds: vec![1],
            standardize: false,
            output_dir: None,
        })
    }

    pub fn total_queries(&self) -> usize {
        self.rounds * self.acquisition.batch_size
    }

    pub fn init_count(&self) -> Option<usize> {
        match &self.init {
            InitSpec::Lattice { count, .. } => Some(*count),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::input("objective.dim must be positive"));
        }
        if self.kernel.dimension() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.kernel.dimension(),
            });
        }
        if let InitSpec::Lattice { count, primes, .. } = &self.init {
            if *count == 0 {
                return Err(Error::input("init.count must be at least 1 (use init.kind = none)"));
            }
            if *primes == 0 {
                return Err(Error::input("init.primes must be at least 1"));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::input("run.seeds must list at least one seed"));
        }
        if let ProblemKind::RkhsSpan { centers: 0 } = self.problem {
            return Err(Error::input("objective.centers must be positive"));
        }
        self.acquisition.validate()?;
        self.inner.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: idx + 1,
                    message: format!("expected `section.key = value`, got `{line}`"),
                });
            };
            let key = k.trim().to_ascii_lowercase();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line: idx + 1,
                    message: format!("unknown key `{key}`"),
                });
            }
            if map.insert(key.clone(), (idx + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config {
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Fields { map }.build()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative init files resolve against the config's directory
        if let InitSpec::File(p) = &cfg.init {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.init = InitSpec::File(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    /// Serializes back to the flat format; `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match self.problem {
            ProblemKind::Benchmark(kind) => put("objective.name", kind.name().into()),
            ProblemKind::RkhsSpan { centers } => {
                put("objective.name", "rkhs-span".into());
                put("objective.centers", centers.to_string());
            }
        }
        put("objective.dim", self.dim.to_string());
        put("objective.noise_scale", format!("{:e}", self.noise_scale));
        put("objective.seed", self.objective_seed.to_string());
        put("kernel.family", self.kernel.family().name().into());
        put("kernel.lengthscales", join(self.kernel.lengthscales().iter().map(|v| format!("{v:e}"))));
        put("kernel.variance", format!("{:e}", self.kernel.signal_variance()));
        put("acquisition.mode", self.acquisition.mode.name().into());
        put("acquisition.regularizer", format!("{:e}", self.acquisition.regularizer));
        put(
            "acquisition.norm_bound",
            self.norm_bound.map_or("auto".into(), |v| format!("{v:e}")),
        );
        put("acquisition.batch_size", self.acquisition.batch_size.to_string());
        put("run.rounds", self.rounds.to_string());
        put("run.seeds", join(self.seeds.iter().map(u64::to_string)));
        match &self.init {
            InitSpec::None => put("init.kind", "none".into()),
            InitSpec::Lattice {
                count,
                method,
                primes,
                scs_iterations,
            } => {
                put("init.kind", "lattice".into());
                put("init.count", count.to_string());
                put("init.method", method.name().into());
                put("init.primes", primes.to_string());
                put("init.scs_iters", scs_iterations.to_string());
            }
            InitSpec::File(p) => {
                put("init.kind", "file".into());
                put("init.file", p.display().to_string());
            }
        }
        put("inner.strategy", self.inner.strategy.name().into());
        put("inner.budget", self.inner.budget.to_string());
        put("inner.restarts", self.inner.restarts.to_string());
        put("model.standardize", self.standardize.to_string());
        if let Some(dir) = &self.output_dir {
            put("output.dir", dir.display().to_string());
        }
        s
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

const KNOWN_KEYS: &[&str] = &[
    "objective.name",
    "objective.dim",
    "objective.noise_scale",
    "objective.seed",
    "objective.centers",
    "kernel.family",
    "kernel.lengthscales",
    "kernel.variance",
    "acquisition.mode",
    "acquisition.regularizer",
    "acquisition.norm_bound",
    "acquisition.batch_size",
    "run.rounds",
    "run.seeds",
    "init.kind",
    "init.count",
    "init.method",
    "init.primes",
    "init.scs_iters",
    "init.file",
    "inner.strategy",
    "inner.budget",
    "inner.restarts",
    "model.standardize",
    "output.dir",
];

struct Fields {
    map: BTreeMap<String, (usize, String)>,
}

impl Fields {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse::<T>().map_err(|e| Error::Config {
                line: *line,
                message: format!("{key}: {e}"),
            }),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|t| {
                t.trim().parse::<T>().map_err(|e| Error::Config {
                    line: *line,
                    message: format!("{key}: `{}`: {e}", t.trim()),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn at_line(&self, key: &str, err: Error) -> Error {
        match (self.raw(key), err) {
            (Some((line, _)), Error::Input(message)) => Error::Config {
                line: *line,
                message,
            },
            (_, err) => err,
        }
    }

    fn build(self) -> Result<RunConfig> {
        let name: String = self.get("objective.name", String::new())?;
        if name.is_empty() {
            return Err(Error::input("objective.name is required"));
        }
        let problem = if name.eq_ignore_ascii_case("rkhs-span") {
            ProblemKind::RkhsSpan {
                centers: self.get("objective.centers", 10usize)?,
            }
        } else {
            let kind = name
                .parse::<ObjectiveKind>()
                .map_err(|e| self.at_line("objective.name", e))?;
            ProblemKind::Benchmark(kind)
        };
        let dim: usize = self.get("objective.dim", 0)?;
        if dim == 0 {
            return Err(Error::input("objective.dim is required and must be positive"));
        }
        let mut cfg = match problem {
            ProblemKind::Benchmark(kind) => RunConfig::benchmark(kind, dim)?,
            ProblemKind::RkhsSpan { .. } => RunConfig {
                problem,
                ..RunConfig::benchmark(ObjectiveKind::Rosenbrock, dim)?
            },
        };
        cfg.noise_scale = self.get("objective.noise_scale", 0.0)?;
        cfg.objective_seed = self.get("objective.seed", 0)?;

        let family: String = self.get("kernel.family", "matern52".to_string())?;
        let family = family
            .parse::<KernelFamily>()
            .map_err(|e| self.at_line("kernel.family", e))?;
        let mut ls: Vec<f64> = self.list("kernel.lengthscales")?.unwrap_or_else(|| vec![1.0]);
        if ls.len() == 1 {
            ls = vec![ls[0]; dim];
        }
        let variance = self.get("kernel.variance", 1.0)?;
        cfg.kernel =
            KernelSpec::new(family, ls, variance).map_err(|e| self.at_line("kernel.lengthscales", e))?;

        let mode: String = self.get("acquisition.mode", "noise-free".to_string())?;
        cfg.acquisition.mode = mode.parse().map_err(|e| self.at_line("acquisition.mode", e))?;
        cfg.acquisition.regularizer = self.get("acquisition.regularizer", 1e-6)?;
        cfg.acquisition.batch_size = self.get("acquisition.batch_size", 1usize)?;
        let nb: String = self.get("acquisition.norm_bound", "auto".to_string())?;
        cfg.norm_bound = if nb.eq_ignore_ascii_case("auto") {
            None
        } else {
            Some(self.get("acquisition.norm_bound", 1.0)?)
        };
        cfg.acquisition.norm_bound = cfg.norm_bound.unwrap_or(1.0);

        cfg.rounds = self.get("run.rounds", 10usize)?;
        if let Some(seeds) = self.list("run.seeds")? {
            cfg.seeds = seeds;
        }

        let kind: String = self.get("init.kind", "lattice".to_string())?;
        cfg.init = match kind.to_ascii_lowercase().as_str() {
            "none" => InitSpec::None,
            "lattice" => {
                let method: String = self.get("init.method", "alg7".to_string())?;
                InitSpec::Lattice {
                    count: self.get("init.count", 20usize)?,
                    method: method.parse().map_err(|e| self.at_line("init.method", e))?,
                    primes: self.get("init.primes", 50usize)?,
                    scs_iterations: self.get("init.scs_iters", 3usize)?,
                }
            }
            "file" => {
                let path: String = self.get("init.file", String::new())?;
                if path.is_empty() {
                    return Err(Error::input("init.kind = file needs init.file"));
                }
                InitSpec::File(PathBuf::from(path))
            }
            other => {
                return Err(self.at_line("init.kind", Error::input(format!("unknown init kind `{other}`"))))
            }
        };

        let strategy: String = self.get("inner.strategy", "cmaes".to_string())?;
        cfg.inner = InnerMaximizer {
            strategy: strategy
                .parse::<Strategy>()
                .map_err(|e| self.at_line("inner.strategy", e))?,
            budget: self.get("inner.budget", 2000usize)?,
            restarts: self.get("inner.restarts", 3usize)?,
            seed: 0,
        };
        cfg.standardize = self.get("model.standardize", false)?;
        cfg.output_dir = self
            .raw("output.dir")
            .map(|(_, v)| PathBuf::from(v.as_str()));
        cfg.validate()?;
        Ok(cfg)
    }
}
