//! Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p bkop-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bkop::acquisition::{batch_acquisition, sequential_acquisition, AcquisitionConfig, Mode};
use bkop::benchmarks::{Objective, ObjectiveKind};
use bkop::harness::{Experiment, InitSpec, LatticeMethod, ProblemKind, RunConfig};
use bkop::lattice::{
    covering_radius_estimate, search_alg6, search_alg7, search_korobov_full, separation_of_base,
    LatticeSearchConfig,
};
use bkop::{KernelFamily, KernelSpec, ObservationHistory, PosteriorModel};

type Check = Result<String, String>;

fn lattice_cfg(d: usize, n: usize) -> LatticeSearchConfig {
    LatticeSearchConfig::new(d, n)
}

fn table_cells(cells: &[(usize, usize, f64)], korobov: bool) -> Check {
    let mut got = Vec::new();
    let mut ok = true;
    for &(d, n, want) in cells {
        let lat = if korobov {
            search_korobov_full(d, n)
        } else {
            search_alg6(&lattice_cfg(d, n))
        }
        .map_err(|e| e.to_string())?;
        let two_rho = 2.0 * lat.separation();
        ok &= (two_rho - want).abs() <= 1e-4;
        got.push(format!("d={d},N={n}: {two_rho:.5} (want {want})"));
    }
    if ok {
        Ok(got.join("; "))
    } else {
        Err(got.join("; "))
    }
}

fn alg7_dominance() -> Check {
    let mut got = Vec::new();
    let mut ok = true;
    for d in [10, 20] {
        for n in [1000, 2000] {
            let cfg = lattice_cfg(d, n);
            let a6 = search_alg6(&cfg).map_err(|e| e.to_string())?.separation();
            let a7 = search_alg7(&cfg).map_err(|e| e.to_string())?.separation();
            ok &= a7 >= a6;
            got.push(format!("d={d},N={n}: 2rho {:.5} >= {:.5}", 2.0 * a7, 2.0 * a6));
        }
    }
    if ok {
        Ok(got.join("; "))
    } else {
        Err(got.join("; "))
    }
}

/// Half the minimum pairwise toroidal distance, over all point pairs.
fn pairwise_separation(base: &[u64], n: u64) -> f64 {
    let pts: Vec<Vec<u64>> = (0..n).map(|i| base.iter().map(|b| (i * b) % n).collect()).collect();
    let mut best = u64::MAX;
    for a in 0..pts.len() {
        for b in (a + 1)..pts.len() {
            let s: u64 = pts[a]
                .iter()
                .zip(&pts[b])
                .map(|(x, y)| {
                    let r = x.abs_diff(*y);
                    let r = r.min(n - r);
                    r * r
                })
                .sum();
            best = best.min(s);
        }
    }
    0.5 * (best as f64).sqrt() / n as f64
}

fn separation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..200 {
        let n: u64 = rng.random_range(2..=200);
        let d: usize = rng.random_range(1..=10);
        let base: Vec<u64> = (0..d).map(|_| rng.random_range(0..n)).collect();
        let fast = separation_of_base(&base, n as usize).map_err(|e| e.to_string())?;
        let slow = pairwise_separation(&base, n);
        if fast != slow {
            return Err(format!("trial {trial}: base {base:?}, N={n}: {fast} vs {slow}"));
        }
    }
    Ok("200/200 lattices equal".into())
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

fn random_spec(rng: &mut ChaCha8Rng, d: usize) -> KernelSpec {
    let family = if rng.random::<bool>() {
        KernelFamily::SquaredExponential
    } else {
        KernelFamily::Matern52
    };
    let ls = (0..d).map(|_| rng.random_range(0.2..1.5)).collect();
    KernelSpec::new(family, ls, rng.random_range(0.5..2.0)).unwrap()
}

fn random_history(rng: &mut ChaCha8Rng, spec: &KernelSpec, n: usize) -> ObservationHistory {
    let d = spec.dimension();
    let pts = random_points(rng, n, d);
    let vals = pts.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    ObservationHistory::from_parts(d, pts, vals).unwrap()
}

fn l1_reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let spec = random_spec(&mut rng, d);
        let n = rng.random_range(0..15);
        let h = random_history(&mut rng, &spec, n);
        let reg = [0.0, 1e-6, 0.1][rng.random_range(0..3)];
        let model = PosteriorModel::fit(&spec, &h, reg).map_err(|e| e.to_string())?;
        let cfg = AcquisitionConfig {
            norm_bound: rng.random_range(0.1..5.0),
            batch_size: 1,
            regularizer: reg,
            mode: Mode::NoiseFree,
        };
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let a = batch_acquisition(&model, &cfg, std::slice::from_ref(&x)).map_err(|e| e.to_string())?;
        let b = sequential_acquisition(&model, &cfg, &x).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
    }
    if worst <= 1e-10 {
        Ok(format!("max |diff| = {worst:e} over 100 models"))
    } else {
        Err(format!("max |diff| = {worst:e}"))
    }
}

/// ½ log det(I + K/σ²) by a direct Cholesky of the full matrix.
fn direct_half_logdet(spec: &KernelSpec, pts: &[Vec<f64>], sigma2: f64) -> f64 {
    let n = pts.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        spec.eval(&pts[i], &pts[j]).unwrap() / sigma2 + if i == j { 1.0 } else { 0.0 }
    });
    let l = m.cholesky().expect("SPD").l();
    (0..n).map(|i| l[(i, i)].ln()).sum()
}

fn logdet_chain() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut count = 0;
    for _ in 0..50 {
        for l in [2usize, 3, 4] {
            for sigma2 in [0.01, 1.0] {
                let d = rng.random_range(1..=3);
                let spec = random_spec(&mut rng, d);
                let pts = random_points(&mut rng, 12, d);
                let whole = direct_half_logdet(&spec, &pts, sigma2);
                let mut chain = 0.0;
                for start in (0..12).step_by(l) {
                    let past = ObservationHistory::from_parts(
                        d,
                        pts[..start].to_vec(),
                        vec![0.0; start],
                    )
                    .unwrap();
                    let model = PosteriorModel::fit(&spec, &past, sigma2).map_err(|e| e.to_string())?;
                    let a = model
                        .batch_covariance(&pts[start..start + l])
                        .map_err(|e| e.to_string())?;
                    let m = DMatrix::identity(l, l) + a / sigma2;
                    chain += 0.5 * m.determinant().ln();
                }
                worst = worst.max((whole - chain).abs() / whole.abs().max(1e-300));
                count += 1;
            }
        }
    }
    if worst <= 1e-8 {
        Ok(format!("max relative error {worst:e} over {count} sequences"))
    } else {
        Err(format!("max relative error {worst:e}"))
    }
}

fn variance_domination() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let d = rng.random_range(1..=4);
        let spec = random_spec(&mut rng, d);
        let n = rng.random_range(1..20);
        let h = random_history(&mut rng, &spec, n);
        let sigma2 = 10f64.powf(rng.random_range(-4.0..1.0));
        let exact = PosteriorModel::fit(&spec, &h, 0.0).map_err(|e| e.to_string())?;
        let reg = PosteriorModel::fit(&spec, &h, sigma2).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let gap = exact.variance(&x).unwrap() - reg.variance(&x).unwrap();
        worst = worst.max(gap);
    }
    if worst <= 1e-8 {
        Ok(format!("max(var_0 - var_sigma) = {worst:e} over 1000 constructions"))
    } else {
        Err(format!("max(var_0 - var_sigma) = {worst:e}"))
    }
}

fn batch_deviation_bound() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let d = rng.random_range(1..=3);
        let spec = random_spec(&mut rng, d);
        let n_centers = rng.random_range(1..6);
        let centers = random_points(&mut rng, n_centers, d);
        let coefs: Vec<f64> = (0..n_centers).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kz = DMatrix::from_fn(n_centers, n_centers, |i, j| spec.eval(&centers[i], &centers[j]).unwrap());
        let c = nalgebra::DVector::from_column_slice(&coefs);
        let norm2 = c.dot(&(kz * &c));
        let f = |x: &[f64]| -> f64 {
            centers
                .iter()
                .zip(&coefs)
                .map(|(z, ci)| ci * spec.eval(z, x).unwrap())
                .sum()
        };
        let n = rng.random_range(1..12);
        let pts = random_points(&mut rng, n, d);
        let vals = pts.iter().map(|p| f(p)).collect();
        let h = ObservationHistory::from_parts(d, pts, vals).unwrap();
        let model = PosteriorModel::fit(&spec, &h, 0.0).map_err(|e| e.to_string())?;
        let l = rng.random_range(1..=5);
        let batch = random_points(&mut rng, l, d);
        let a = model.batch_covariance(&batch).map_err(|e| e.to_string())?;
        let dev: f64 = batch.iter().map(|x| model.mean(x).unwrap() - f(x)).sum();
        worst = worst.max(dev * dev - norm2 * a.sum());
    }
    if worst <= 1e-8 {
        Ok(format!("max(lhs - rhs) = {worst:e} over 1000 constructions"))
    } else {
        Err(format!("max(lhs - rhs) = {worst:e}"))
    }
}

fn regret_bounds() -> Check {
    let mut runs = 0;
    let mut violations = Vec::new();
    let mut tightest = 0.0f64;
    for l in [1usize, 5] {
        for k in 0..20u64 {
            let mut cfg = RunConfig::benchmark(ObjectiveKind::Rosenbrock, 2).unwrap();
            cfg.problem = ProblemKind::RkhsSpan { centers: 6 };
            cfg.objective_seed = 100 + k;
            cfg.kernel = KernelSpec::new(KernelFamily::SquaredExponential, vec![0.25, 0.25], 1.0).unwrap();
            cfg.init = InitSpec::None;
            cfg.acquisition.batch_size = l;
            cfg.rounds = 40 / l;
            cfg.inner.budget = 1000;
            let exp = Experiment::new(&cfg).map_err(|e| e.to_string())?;
            let trace = exp.run(k + 1).map_err(|e| e.to_string())?;
            let bound = trace.last().unwrap().bound;
            let regret = trace.acquisition_regret(exp.problem().optimum());
            runs += 1;
            tightest = tightest.max(regret / bound);
            match exp.bound_holds(&trace) {
                Some(true) => {}
                _ => violations.push(format!("L={l} k={k}: R={regret:.4e} bound={bound:.4e}")),
            }
        }
    }
    if violations.is_empty() {
        Ok(format!("{runs} runs, 0 violations, max R_T/bound = {tightest:.3}"))
    } else {
        Err(format!("{} violations: {}", violations.len(), violations.join("; ")))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn batch_vs_random_config(kind: ObjectiveKind) -> RunConfig {
    let mut cfg = RunConfig::benchmark(kind, 6).unwrap();
    cfg.acquisition.batch_size = 5;
    cfg.rounds = 20;
    cfg.init = InitSpec::Lattice {
        count: 20,
        method: LatticeMethod::Alg7,
        primes: 50,
        scs_iterations: 3,
    };
    cfg.standardize = true;
    cfg
}

fn batch_vs_random(kind: ObjectiveKind) -> Check {
    let exp = Experiment::new(&batch_vs_random_config(kind)).map_err(|e| e.to_string())?;
    let (mut bo, mut rs) = (Vec::new(), Vec::new());
    for seed in 1..=10 {
        let t = exp.run(seed).map_err(|e| e.to_string())?;
        if t.len() != 120 {
            return Err(format!("seed {seed}: {} queries, expected 120", t.len()));
        }
        if t.steps.windows(2).any(|w| w[1].simple_regret > w[0].simple_regret) {
            return Err(format!("seed {seed}: simple regret increased"));
        }
        bo.push(t.final_simple_regret());
        rs.push(exp.run_random_baseline(seed).map_err(|e| e.to_string())?.final_simple_regret());
    }
    let (mb, mr) = (median(bo), median(rs));
    let msg = format!("median r_T batch {mb:.4e} vs random {mr:.4e}, all r_t monotone");
    if mb < mr {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn covering_vs_random() -> Check {
    let lat = search_alg6(&lattice_cfg(2, 100)).map_err(|e| e.to_string())?;
    let lat_r = covering_radius_estimate(lat.points(), 100_000, 1).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut wins = 0;
    for draw in 0..20 {
        let pts = random_points(&mut rng, 100, 2);
        let r = covering_radius_estimate(&pts, 100_000, 1000 + draw).map_err(|e| e.to_string())?;
        if lat_r < r {
            wins += 1;
        }
    }
    let msg = format!("lattice radius {lat_r:.4} smaller in {wins}/20 draws");
    if wins >= 16 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn objectives_at_optima() -> Check {
    let mut worst = 0.0f64;
    for kind in ObjectiveKind::ALL {
        for d in [2, 5, 10] {
            let f = Objective::new(kind, d).map_err(|e| e.to_string())?;
            let v = f.evaluate(f.known_optimizer()).map_err(|e| e.to_string())?;
            worst = worst.max(v.abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |f(x*)| = {worst:e} over 6 objectives, d in {{2,5,10}}"))
    } else {
        Err(format!("max |f(x*)| = {worst:e}"))
    }
}

fn main() -> ExitCode {
    let checks: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        (
            "alg6 separation, N=1000, d=10..50",
            Box::new(|| {
                table_cells(
                    &[
                        (10, 1000, 0.59632),
                        (20, 1000, 1.0051),
                        (30, 1000, 1.3031),
                        (40, 1000, 1.5482),
                        (50, 1000, 1.7571),
                    ],
                    false,
                )
            }),
        ),
        (
            "alg6 separation, N=2000/3000",
            Box::new(|| table_cells(&[(10, 2000, 0.54658), (10, 3000, 0.53359), (50, 3000, 1.7009)], false)),
        ),
        (
            "korobov separation, d=10",
            Box::new(|| table_cells(&[(10, 1000, 0.56639), (10, 2000, 0.51536), (10, 3000, 0.50000)], true)),
        ),
        ("alg7 dominates alg6", Box::new(alg7_dominance)),
        ("fast separation equals pairwise", Box::new(separation_oracle)),
        ("batch rule reduces to sequential at L=1", Box::new(l1_reduction)),
        ("log-det batch chain", Box::new(logdet_chain)),
        ("variance domination", Box::new(variance_domination)),
        ("batch deviation bound", Box::new(batch_deviation_bound)),
        ("cumulative regret bounds on rkhs-span objectives", Box::new(regret_bounds)),
        ("rosenbrock d=6 L=5 beats random", Box::new(|| batch_vs_random(ObjectiveKind::Rosenbrock))),
        ("ackley d=6 L=5 beats random", Box::new(|| batch_vs_random(ObjectiveKind::Ackley))),
        ("lattice covers better than random", Box::new(covering_vs_random)),
        ("objectives vanish at optimizers", Box::new(objectives_at_optima)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
