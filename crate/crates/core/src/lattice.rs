//! Rank-1 lattices and base-vector searches that maximize the packing radius.
//!
//! Point `i` of the lattice with base `b` and `N` points is
//! `mod(i * b, N) / N`. Since point differences are again lattice points, the
//! separation (packing radius) is half the smallest toroidal norm over the
//! `N - 1` nonzero points. All norms are computed on the integer residues
//! `min(r, N - r)`, so the squared norms are exact integers and every
//! comparison in the searches is exact.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Lattice {
    base: Vec<u64>,
    n_points: usize,
    points: Vec<Vec<f64>>,
    /// Smallest squared toroidal norm of a nonzero point, scaled by `N^2`.
    min_sq_norm: u64,
}

impl Rank1Lattice {
    pub fn generate(base: &[u64], n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::input(format!("lattice needs N >= 2, got {n_points}")));
        }
        if base.is_empty() {
            return Err(Error::input("base vector must not be empty"));
        }
        let n = n_points as u64;
        let points = (0..n)
            .map(|i| base.iter().map(|b| mulmod(i, *b, n) as f64 / n as f64).collect())
            .collect();
        let min_sq_norm = min_sq_norm(base, n, None).unwrap_or(0);
        Ok(Self {
            base: base.to_vec(),
            n_points,
            points,
            min_sq_norm,
        })
    }

    pub fn base(&self) -> &[u64] {
        &self.base
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dimension(&self) -> usize {
        self.base.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    /// Packing radius `rho`.
    pub fn separation(&self) -> f64 {
        sq_norm_to_separation(self.min_sq_norm, self.n_points as u64)
    }

    /// Minimum pairwise toroidal distance, `2 rho`.
    pub fn min_distance(&self) -> f64 {
        2.0 * self.separation()
    }
}

fn mulmod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

#[inline]
fn wrap_sq(r: u64, n: u64) -> u64 {
    let t = r.min(n - r);
    t * t
}

fn sq_norm_to_separation(sq: u64, n: u64) -> f64 {
    0.5 * (sq as f64).sqrt() / n as f64
}

/// Smallest `sum_j min(r_j, N - r_j)^2` over nonzero lattice points, where
/// `r = mod(i * b, N)`. With `bar = Some(s)`, returns `None` as soon as the
/// minimum is known to be `<= s`.
fn min_sq_norm(base: &[u64], n: u64, bar: Option<u64>) -> Option<u64> {
    let residues: Vec<u64> = base.iter().map(|b| b % n).collect();
    let mut best = u64::MAX;
    // points i and N - i have the same norm
    for i in 1..=n / 2 {
        let mut s = 0u64;
        for &b in &residues {
            s += wrap_sq(mulmod(i, b, n), n);
            if s >= best {
                break;
            }
        }
        if s < best {
            best = s;
            if let Some(bar) = bar {
                if best <= bar {
                    return None;
                }
            }
        }
    }
    match bar {
        Some(bar) if best <= bar => None,
        _ => Some(best),
    }
}

/// Packing radius of the lattice generated by `base` without materializing points.
pub fn separation_of_base(base: &[u64], n_points: usize) -> Result<f64> {
    if n_points < 2 {
        return Err(Error::input(format!("lattice needs N >= 2, got {n_points}")));
    }
    let n = n_points as u64;
    Ok(sq_norm_to_separation(min_sq_norm(base, n, None).unwrap_or(0), n))
}

/// Toroidal norm of `x` viewed as a difference to the origin.
pub fn toroidal_norm(x: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &v in x {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::input(format!("coordinate {v} outside [0, 1)")));
        }
        let t = v.min(1.0 - v);
        s += t * t;
    }
    Ok(s.sqrt())
}

fn toroidal_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            let t = d.min(1.0 - d);
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

pub fn separation_distance(lat: &Rank1Lattice) -> f64 {
    lat.separation()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSearchConfig {
    pub n_primes: usize,
    pub dimension: usize,
    pub n_points: usize,
    pub scs_iterations: usize,
}

impl LatticeSearchConfig {
    pub fn new(dimension: usize, n_points: usize) -> Self {
        Self {
            n_primes: 50,
            dimension,
            n_points,
            scs_iterations: 3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_primes == 0 {
            return Err(Error::input("need at least one prime"));
        }
        if self.dimension == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if self.n_points < 2 {
            return Err(Error::input(format!("lattice needs N >= 2, got {}", self.n_points)));
        }
        Ok(())
    }

    /// Smallest candidate prime, `2d + 1`.
    pub fn first_prime_bound(&self) -> u64 {
        2 * self.dimension as u64 + 1
    }
}

/// The `count` smallest primes `>= from`, ascending.
pub fn primes_from(from: u64, count: usize) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    let mut limit = (from.max(16) * 2).max(64);
    loop {
        let mut sieve = vec![true; limit as usize + 1];
        sieve[0] = false;
        sieve[1] = false;
        let mut p = 2usize;
        while p * p <= limit as usize {
            if sieve[p] {
                for m in (p * p..=limit as usize).step_by(p) {
                    sieve[m] = false;
                }
            }
            p += 1;
        }
        let found: Vec<u64> = (from..=limit).filter(|&k| sieve[k as usize]).take(count).collect();
        if found.len() == count {
            return found;
        }
        limit *= 2;
    }
}

/// Candidate bases in the order the prime/offset search visits them:
/// for each prime `p` and offset `i < p`, `g_j = mod(j + i, p)` for
/// `j = 1..d-1`, mapped through `round(N * frac(|2 cos(2 pi g / p)|))`.
fn cosine_candidates(cfg: &LatticeSearchConfig) -> impl Iterator<Item = Vec<u64>> + '_ {
    let n = cfg.n_points as f64;
    let d = cfg.dimension;
    primes_from(cfg.first_prime_bound(), cfg.n_primes)
        .into_iter()
        .flat_map(move |p| {
            (0..p).map(move |offset| {
                let mut b = Vec::with_capacity(d);
                b.push(1u64);
                for j in 1..d as u64 {
                    let g = (j + offset) % p;
                    let c = (2.0 * (2.0 * PI * g as f64 / p as f64).cos()).abs();
                    let frac = c - c.floor();
                    b.push((n * frac).round() as u64);
                }
                b
            })
        })
}

/// Prime/offset search with the cosine construction; keeps the first
/// strictly best candidate.
pub fn search_alg6(cfg: &LatticeSearchConfig) -> Result<Rank1Lattice> {
    cfg.validate()?;
    let n = cfg.n_points as u64;
    let mut best: Option<(Vec<u64>, u64)> = None;
    for b in cosine_candidates(cfg) {
        let bar = best.as_ref().map(|(_, s)| *s);
        if let Some(s) = min_sq_norm(&b, n, bar) {
            best = Some((b, s));
        }
    }
    let (base, _) = best.expect("at least one prime gives candidates");
    Rank1Lattice::generate(&base, cfg.n_points)
}

/// Base `(1, a, a^2, ..., a^{d-1}) mod N`.
pub fn korobov_base(a: u64, dimension: usize, n_points: usize) -> Vec<u64> {
    let n = n_points as u64;
    let mut b = Vec::with_capacity(dimension);
    let mut v = 1 % n;
    for _ in 0..dimension {
        b.push(v);
        v = mulmod(v, a, n);
    }
    b
}

/// Exhaustive Korobov search over the given generators, first best wins.
pub fn search_korobov(
    dimension: usize,
    n_points: usize,
    generators: RangeInclusive<u64>,
) -> Result<Rank1Lattice> {
    if n_points < 2 {
        return Err(Error::input(format!("lattice needs N >= 2, got {n_points}")));
    }
    if dimension == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    let n = n_points as u64;
    let mut best: Option<(Vec<u64>, u64)> = None;
    for a in generators {
        let b = korobov_base(a, dimension, n_points);
        let bar = best.as_ref().map(|(_, s)| *s);
        if let Some(s) = min_sq_norm(&b, n, bar) {
            best = Some((b, s));
        }
    }
    let (base, _) = best.ok_or_else(|| Error::input("empty generator range"))?;
    Rank1Lattice::generate(&base, n_points)
}

/// Korobov search over every generator `1..N-1`.
pub fn search_korobov_full(dimension: usize, n_points: usize) -> Result<Rank1Lattice> {
    search_korobov(dimension, n_points, 1..=(n_points as u64).saturating_sub(1).max(1))
}

/// One coordinate of a successive coordinate search: returns the best value
/// for coordinate `j` and its squared norm, keeping the current value on ties.
fn best_coordinate(base: &[u64], j: usize, n: u64) -> (u64, u64) {
    let half = n / 2;
    // partial sums without coordinate j; i and N - i agree, so i <= N/2 suffices
    let mut partial: Vec<(u64, u64)> = (1..=half)
        .map(|i| {
            let s = base
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, b)| wrap_sq(mulmod(i, *b, n), n))
                .sum();
            (s, i)
        })
        .collect();
    partial.sort_by_key(|&(s, _)| s);

    let eval = |c: u64, bar: Option<u64>| -> Option<u64> {
        let mut best = u64::MAX;
        for &(s, i) in &partial {
            if s >= best {
                break;
            }
            let v = s + wrap_sq(mulmod(i, c, n), n);
            if v < best {
                best = v;
                if let Some(bar) = bar {
                    if best <= bar {
                        return None;
                    }
                }
            }
        }
        Some(best)
    };

    let current = base[j];
    let mut best_c = current;
    let mut best_s = eval(current % n, None).expect("unbounded evaluation");
    // c and N - c give the same norms; the smallest maximizer is <= N/2
    for c in 1..=half {
        if c == current {
            continue;
        }
        if let Some(s) = eval(c, Some(best_s)) {
            best_c = c;
            best_s = s;
        }
    }
    (best_c, best_s)
}

/// Successive coordinate search: `iterations` sweeps over coordinates
/// `2..d`, each replaced by its best value in `1..N-1` with the others fixed.
/// Separation never decreases. Stops early once a sweep changes nothing.
pub fn scs_refine(base: &[u64], n_points: usize, iterations: usize) -> Result<(Vec<u64>, f64)> {
    if n_points < 2 {
        return Err(Error::input(format!("lattice needs N >= 2, got {n_points}")));
    }
    if base.is_empty() {
        return Err(Error::input("base vector must not be empty"));
    }
    let n = n_points as u64;
    let mut b = base.to_vec();
    let mut sq = min_sq_norm(&b, n, None).unwrap_or(0);
    for _ in 0..iterations {
        let mut changed = false;
        for j in 1..b.len() {
            let (c, s) = best_coordinate(&b, j, n);
            if c != b[j] {
                debug_assert!(s > sq);
                b[j] = c;
                sq = s;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok((b, sq_norm_to_separation(sq, n)))
}

/// The prime/offset search with every candidate refined by [`scs_refine`]
/// before comparison.
pub fn search_alg7(cfg: &LatticeSearchConfig) -> Result<Rank1Lattice> {
    cfg.validate()?;
    let n = cfg.n_points as u64;
    let mut best: Option<(Vec<u64>, f64)> = None;
    for b in cosine_candidates(cfg) {
        let (refined, rho) = scs_refine(&b, cfg.n_points, cfg.scs_iterations)?;
        if best.as_ref().is_none_or(|(_, r)| rho > *r) {
            best = Some((refined, rho));
        }
    }
    let (base, _) = best.expect("at least one prime gives candidates");
    debug_assert!(min_sq_norm(&base, n, None).is_some());
    Rank1Lattice::generate(&base, cfg.n_points)
}

/// Plain successive coordinate search from the all-ones base.
pub fn search_scs(dimension: usize, n_points: usize, iterations: usize) -> Result<Rank1Lattice> {
    if dimension == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    let (base, _) = scs_refine(&vec![1; dimension], n_points, iterations)?;
    Rank1Lattice::generate(&base, n_points)
}

/// Monte Carlo lower estimate of the covering radius: the largest toroidal
/// distance from a seeded uniform probe to its nearest set point. Nested in
/// the probe count (more probes never lowers the estimate).
pub fn covering_radius_estimate(points: &[Vec<f64>], probes: usize, seed: u64) -> Result<f64> {
    if probes == 0 {
        return Err(Error::input("need at least one probe"));
    }
    let Some(first) = points.first() else {
        return Err(Error::input("point set is empty"));
    };
    let d = first.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = vec![0.0; d];
    let mut worst = 0.0f64;
    for _ in 0..probes {
        probe.iter_mut().for_each(|v| *v = rng.random());
        let nearest = points
            .iter()
            .map(|p| toroidal_distance(p, &probe))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst)
}

/// Affine image of unit-cube points in `domain`.
pub fn resize_to_box(points: &[Vec<f64>], domain: &BoxDomain) -> Result<Vec<Vec<f64>>> {
    points
        .iter()
        .map(|p| {
            if p.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: p.len(),
                });
            }
            Ok(domain.from_unit(p))
        })
        .collect()
}

/// Writes one point per line, coordinates space-separated at 17 significant digits.
pub fn write_point_file(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    for p in points {
        let line: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a whitespace-separated point file; blank lines and `#` comments are skipped.
pub fn read_point_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Config {
                    line: lineno + 1,
                    message: format!("bad coordinate `{t}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = points.first() {
            let first: &Vec<f64> = first;
            if first.len() != p.len() {
                return Err(Error::Config {
                    line: lineno + 1,
                    message: format!("expected {} coordinates, got {}", first.len(), p.len()),
                });
            }
        }
        points.push(p);
    }
    Ok(points)
}
