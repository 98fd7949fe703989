use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bkop::harness::{self, write_suite_table, write_trace_file, Experiment, RunConfig};
use bkop::lattice::{self, LatticeSearchConfig, Rank1Lattice};

#[derive(Parser)]
#[command(name = "bkop", version, about = "Batch kernel optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write a trace per seed.
    Run(RunArgs),
    /// Repeat configurations and write mean / standard-error regret tables.
    Suite(SuiteArgs),
    /// Rank-1 lattice utilities.
    #[command(subcommand)]
    Lattice(LatticeCommand),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds, overriding `run.seeds`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a uniform-random-search trace per seed.
    #[arg(long)]
    random_baseline: bool,
}

#[derive(Args)]
struct SuiteArgs {
    /// One or more configuration files.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LatticeCommand {
    /// Search for a well-separated generating vector.
    Search(SearchArgs),
    /// Write the points of a lattice with a given generating vector.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Alg6,
    Alg7,
    Korobov,
    Scs,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value_t = Method::Alg7)]
    method: Method,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    points: usize,
    #[arg(long, default_value_t = 50)]
    primes: usize,
    #[arg(long = "scs-iters", default_value_t = 3)]
    scs_iters: usize,
    /// Also write the points to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Comma-separated generating vector.
    #[arg(long, value_delimiter = ',', required = true)]
    base: Vec<u64>,
    #[arg(long)]
    points: usize,
    #[arg(long)]
    out: PathBuf,
}

/// `x` rounded to `digits` significant digits, trailing zeros kept.
fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.*}", digits.saturating_sub(1));
    }
    let s = format!("{x:.*e}", digits.saturating_sub(1));
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    // reformat from the rounded mantissa to avoid double rounding
    let rounded: f64 = format!("{mantissa}e{exp}").parse().expect("float");
    format!("{rounded:.decimals$}")
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds;
    }
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    ensure_dir(&out)?;
    let exp = Experiment::new(&cfg)?;
    fs::write(out.join("config.txt"), cfg.to_text()).context("writing config copy")?;
    let comments = |kind: &str, seed: u64| {
        vec![
            format!("{kind} seed={seed}"),
            format!("norm_bound={}", exp.norm_bound()),
            format!("optimum={:e}", exp.problem().optimum()),
        ]
    };
    for &seed in &cfg.seeds {
        let trace = exp.run(seed)?;
        let path = out.join(format!("trace_seed{seed}.csv"));
        write_trace_file(&path, &trace, &comments("bo", seed))?;
        let bound = match exp.bound_holds(&trace) {
            Some(true) => " bound=ok",
            Some(false) => " bound=VIOLATED",
            None => "",
        };
        println!(
            "seed {seed}: simple_regret={:.6e} cumulative_regret={:.6e}{bound} -> {}",
            trace.final_simple_regret(),
            trace.final_cumulative_regret(),
            path.display()
        );
        if args.random_baseline {
            let base = exp.run_random_baseline(seed)?;
            let path = out.join(format!("random_seed{seed}.csv"));
            write_trace_file(&path, &base, &comments("random", seed))?;
            println!(
                "seed {seed}: random simple_regret={:.6e} -> {}",
                base.final_simple_regret(),
                path.display()
            );
        }
    }
    Ok(())
}

fn suite_cmd(args: SuiteArgs) -> Result<()> {
    let configs = args
        .config
        .iter()
        .map(|p| load_config(p))
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(&args.out)?;
    let labels: Vec<String> = args
        .config
        .iter()
        .map(|p| p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()))
        .collect();
    let rows = harness::run_suite(&configs, args.reps)?;
    let path = args.out.join("suite.csv");
    write_suite_table(&path, &rows, &labels)?;
    for (i, label) in labels.iter().enumerate() {
        if let Some(last) = rows.iter().rfind(|r| r.config == i) {
            println!(
                "{label}: step {} mean_simple_regret={:.6e} stderr={:.6e}",
                last.step, last.mean, last.stderr
            );
        }
    }
    println!("-> {}", path.display());
    Ok(())
}

fn search_cmd(args: SearchArgs) -> Result<()> {
    let cfg = LatticeSearchConfig {
        n_primes: args.primes,
        dimension: args.dim,
        n_points: args.points,
        scs_iterations: args.scs_iters,
    };
    let lat: Rank1Lattice = match args.method {
        Method::Alg6 => lattice::search_alg6(&cfg)?,
        Method::Alg7 => lattice::search_alg7(&cfg)?,
        Method::Korobov => lattice::search_korobov_full(args.dim, args.points)?,
        Method::Scs => lattice::search_scs(args.dim, args.points, args.scs_iters)?,
    };
    let base: Vec<String> = lat.base().iter().map(u64::to_string).collect();
    let rho = lat.separation();
    println!("base = {}", base.join(","));
    println!("separation = {}", sig(rho, 5));
    println!("min_distance = {}", sig(2.0 * rho, 5));
    if let Some(out) = args.out {
        lattice::write_point_file(&out, lat.points())?;
    }
    Ok(())
}

fn gen_cmd(args: GenArgs) -> Result<()> {
    if args.base.is_empty() {
        bail!("--base must not be empty");
    }
    let lat = Rank1Lattice::generate(&args.base, args.points)?;
    lattice::write_point_file(&args.out, lat.points())?;
    println!(
        "{} points, separation = {} -> {}",
        lat.n_points(),
        sig(lat.separation(), 5),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run_cmd(a),
        Command::Suite(a) => suite_cmd(a),
        Command::Lattice(LatticeCommand::Search(a)) => search_cmd(a),
        Command::Lattice(LatticeCommand::Gen(a)) => gen_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::sig;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(0.596_321, 5), "0.59632");
        assert_eq!(sig(1.005_14, 5), "1.0051");
        assert_eq!(sig(0.5, 5), "0.50000");
        assert_eq!(sig(0.999_996, 5), "1.0000");
        assert_eq!(sig(12.345_67, 3), "12.3");
        assert_eq!(sig(1234.5, 2), "1200");
    }
}
