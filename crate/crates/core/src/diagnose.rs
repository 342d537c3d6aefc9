//! Lehmann-alternative diagnostics for the calibrator exponent.
//!
//! Under a PC null, suppose `pr(S ≤ x) ≤ x^{d₁}` and `pr(F ≤ x) ≥ x^{d₂}`.
//! Then `pr{φ(S) ≥ 1/γ} ≤ γ·pr{φ(F) ≥ 1/γ}` for every `κ ≥ κ* =
//! max(0, d₂ - d₁ + 1)`. The exponents are estimated here by Monte Carlo
//! for `n` equicorrelated normal statistics and two-sided p-values, on a
//! 50-point equispaced grid, as in the κ* curves of the simulation study.
//!
//! Only the grid is checked; nothing is claimed for `x` between grid
//! points.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibrate::Calibrator;
use crate::error::{Error, Result};
use crate::simulate::{cholesky, equicorrelation, two_sided_p};

pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
pub const DEFAULT_GRID_SIZE: usize = 50;

const BRACKET: (f64, f64) = (1e-6, 50.0);
const ROOT_TOL: f64 = 1e-8;

/// Which order statistic plays the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticFilter {
    /// `F = P_(1)`, so `pr(F < x) = 1 - pr(all |X_i| ≤ z)`.
    #[default]
    Minimum,
    /// The Bonferroni filter `(n-r+1)·P_(r-1)`; needs `r ≥ 2`.
    Bonferroni,
}

/// `i/(k+1)` for `i = 1..=k`.
pub fn equispaced_grid(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
}

/// Monte-Carlo estimates of `pr(S < x)` and `pr(F < x)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimates {
    pub mu: Vec<f64>,
    pub rho: f64,
    pub r: usize,
    pub filter: DiagnosticFilter,
    pub grid: Vec<f64>,
    pub pr_s: Vec<f64>,
    pub pr_f: Vec<f64>,
    pub se_s: Vec<f64>,
    pub se_f: Vec<f64>,
    pub mc_samples: usize,
}

/// Draws `(S, F)` pairs for one null configuration.
#[derive(Debug, Clone)]
pub struct PairSampler {
    mu: Vec<f64>,
    chol: Vec<f64>,
    r: usize,
    filter: DiagnosticFilter,
}

impl PairSampler {
    pub fn new(mu: &[f64], rho: f64, r: usize, filter: DiagnosticFilter) -> Result<Self> {
        let n = mu.len();
        if n == 0 || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("mu must be a non-empty vector of finite values"));
        }
        if r < 1 || r > n {
            return Err(Error::domain(format!("r must satisfy 1 <= r <= n = {n}, got {r}")));
        }
        if filter == DiagnosticFilter::Bonferroni && r < 2 {
            return Err(Error::domain("the Bonferroni filter needs r >= 2"));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::domain(format!("rho must lie in (-1, 1), got {rho}")));
        }
        Ok(PairSampler {
            mu: mu.to_vec(),
            chol: cholesky(&equicorrelation(n, rho), n)?,
            r,
            filter,
        })
    }

    /// One `(S, F)` draw; `buf` must have length `n`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut [f64]) -> (f64, f64) {
        let n = self.mu.len();
        for z in buf.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for i in (0..n).rev() {
            let x: f64 = (0..=i).map(|k| self.chol[i * n + k] * buf[k]).sum();
            buf[i] = x;
        }
        for (b, &m) in buf.iter_mut().zip(&self.mu) {
            *b = two_sided_p(*b + m);
        }
        buf.sort_by(f64::total_cmp);
        let k = (n - self.r + 1) as f64;
        let s = (k * buf[self.r - 1]).min(1.0);
        let f = match self.filter {
            DiagnosticFilter::Minimum => buf[0],
            DiagnosticFilter::Bonferroni => (k * buf[self.r - 2]).min(1.0),
        };
        (s, f)
    }

    fn sorted_draws<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut buf = vec![0.0; self.mu.len()];
        let mut s = Vec::with_capacity(samples);
        let mut f = Vec::with_capacity(samples);
        for _ in 0..samples {
            let (a, b) = self.draw(rng, &mut buf);
            s.push(a);
            f.push(b);
        }
        s.sort_by(f64::total_cmp);
        f.sort_by(f64::total_cmp);
        (s, f)
    }
}

fn proportion_below(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v < x) as f64 / sorted.len() as f64
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Estimate `pr(S < x)` and `pr(F < x)` for `X ~ N(μ, (1-ρ)I + ρ11ᵀ)`.
/// `S` is the Bonferroni PC p-value `(n-r+1)·P_(r)`.
pub fn estimate_cdfs<R: Rng + ?Sized>(
    mu: &[f64],
    rho: f64,
    r: usize,
    filter: DiagnosticFilter,
    grid: &[f64],
    mc_samples: usize,
    rng: &mut R,
) -> Result<CdfEstimates> {
    if mc_samples == 0 {
        return Err(Error::domain("mc_samples must be positive"));
    }
    if grid.is_empty() || grid.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::domain("grid points must lie in (0, 1)"));
    }
    let sampler = PairSampler::new(mu, rho, r, filter)?;
    let (s, f) = sampler.sorted_draws(mc_samples, rng);
    let pr_s: Vec<f64> = grid.iter().map(|&x| proportion_below(&s, x)).collect();
    let pr_f: Vec<f64> = grid.iter().map(|&x| proportion_below(&f, x)).collect();
    Ok(CdfEstimates {
        mu: mu.to_vec(),
        rho,
        r,
        filter,
        grid: grid.to_vec(),
        se_s: pr_s.iter().map(|&p| binomial_se(p, mc_samples)).collect(),
        se_f: pr_f.iter().map(|&p| binomial_se(p, mc_samples)).collect(),
        pr_s,
        pr_f,
        mc_samples,
    })
}

/// Fitted exponents for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LehmannDiagnostic {
    pub d1: f64,
    pub d2: f64,
    pub kappa_star: f64,
    pub grid: Vec<f64>,
    pub mc_samples: usize,
    pub rho: f64,
    pub mu: Vec<f64>,
    pub r: usize,
    pub filter: DiagnosticFilter,
    /// Grid points where the `d₁` and `d₂` constraints bind.
    pub binding_s: f64,
    pub binding_f: f64,
}

impl LehmannDiagnostic {
    /// `d₁ < 1` contradicts validity of `S` as a p-value; it is reported
    /// rather than clamped.
    pub fn d1_below_one(&self) -> bool {
        self.d1 < 1.0
    }
}

/// Root of a monotone function on the standard bracket by bisection.
fn bisect(f: impl Fn(f64) -> f64, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = BRACKET;
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoRoot {
            lo,
            hi,
            detail: format!("{what}: g({lo}) = {flo:.3e}, g({hi}) = {fhi:.3e}"),
        });
    }
    let rising = fhi > flo;
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn argmin(v: impl Iterator<Item = f64>) -> usize {
    v.enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}

/// Solve `min_x {x^{d₁} - pr(S<x)} = 0` and `min_x {pr(F<x) - x^{d₂}} = 0`
/// over the grid. Both minima are monotone in the exponent.
pub fn fit_lehmann(est: &CdfEstimates) -> Result<LehmannDiagnostic> {
    let g = &est.grid;
    let g1 = |d: f64| {
        g.iter()
            .zip(&est.pr_s)
            .map(|(&x, &p)| x.powf(d) - p)
            .fold(f64::INFINITY, f64::min)
    };
    let g2 = |d: f64| {
        g.iter()
            .zip(&est.pr_f)
            .map(|(&x, &p)| p - x.powf(d))
            .fold(f64::INFINITY, f64::min)
    };
    let d1 = bisect(g1, "d1")?;
    let d2 = bisect(g2, "d2")?;
    let bs = argmin(g.iter().zip(&est.pr_s).map(|(&x, &p)| x.powf(d1) - p));
    let bf = argmin(g.iter().zip(&est.pr_f).map(|(&x, &p)| p - x.powf(d2)));
    Ok(LehmannDiagnostic {
        d1,
        d2,
        kappa_star: (d2 - d1 + 1.0).max(0.0),
        grid: g.clone(),
        mc_samples: est.mc_samples,
        rho: est.rho,
        mu: est.mu.clone(),
        r: est.r,
        filter: est.filter,
        binding_s: g[bs],
        binding_f: g[bf],
    })
}

/// [`estimate_cdfs`] followed by [`fit_lehmann`] on the default grid.
pub fn diagnose<R: Rng + ?Sized>(
    mu: &[f64],
    rho: f64,
    filter: DiagnosticFilter,
    mc_samples: usize,
    rng: &mut R,
) -> Result<LehmannDiagnostic> {
    let grid = equispaced_grid(DEFAULT_GRID_SIZE);
    let est = estimate_cdfs(mu, rho, mu.len(), filter, &grid, mc_samples, rng)?;
    fit_lehmann(&est)
}

/// [`diagnose`] at every `rho`, in parallel. Each ρ draws from its own
/// stream of a generator seeded with `seed`, so results do not depend on
/// the thread count.
pub fn diagnose_grid(
    mu: &[f64],
    rhos: &[f64],
    filter: DiagnosticFilter,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<LehmannDiagnostic>> {
    rhos.par_iter()
        .enumerate()
        .map(|(i, &rho)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            diagnose(mu, rho, filter, mc_samples, &mut rng)
        })
        .collect()
}

/// One γ of a Proposition-style check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop1Check {
    pub gamma: f64,
    /// `φ⁻¹(1/γ)`: `φ(S) ≥ 1/γ` iff `S ≤ threshold`.
    pub threshold: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of `lhs - rhs`.
    pub se: f64,
    /// `rhs + 3·se - lhs`; non-negative on a pass.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop1Report {
    pub kappa: f64,
    /// Whether `κ ≥ κ*`, the range where the bound is guaranteed.
    pub admissible: bool,
    pub checks: Vec<Prop1Check>,
}

impl Prop1Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Monte-Carlo check of `pr{φ(S) ≥ 1/γ} ≤ γ·pr{φ(F) ≥ 1/γ}` with
/// three standard errors of slack, using fresh draws for the
/// configuration of `diag`.
pub fn verify_prop1<R: Rng + ?Sized>(
    diag: &LehmannDiagnostic,
    kappa: f64,
    gammas: &[f64],
    mc_samples: usize,
    rng: &mut R,
) -> Result<Prop1Report> {
    let cal = Calibrator::new(kappa)?;
    if mc_samples == 0 {
        return Err(Error::domain("mc_samples must be positive"));
    }
    if let Some(g) = gammas.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {g}")));
    }
    let sampler = PairSampler::new(&diag.mu, diag.rho, diag.r, diag.filter)?;
    let thresholds: Vec<f64> = gammas
        .iter()
        .map(|&g| cal.inverse(1.0 / g))
        .collect::<Result<_>>()?;
    // paired differences D = 1{S ≤ t} - γ·1{F ≤ t}, accumulated per γ
    let mut sum = vec![0.0f64; gammas.len()];
    let mut sum_sq = vec![0.0f64; gammas.len()];
    let mut hits_s = vec![0usize; gammas.len()];
    let mut hits_f = vec![0usize; gammas.len()];
    let mut buf = vec![0.0; diag.mu.len()];
    for _ in 0..mc_samples {
        let (s, f) = sampler.draw(rng, &mut buf);
        for (k, (&t, &g)) in thresholds.iter().zip(gammas).enumerate() {
            let a = f64::from(u8::from(s <= t));
            let b = f64::from(u8::from(f <= t));
            let d = a - g * b;
            sum[k] += d;
            sum_sq[k] += d * d;
            hits_s[k] += usize::from(s <= t);
            hits_f[k] += usize::from(f <= t);
        }
    }
    let nf = mc_samples as f64;
    let checks = gammas
        .iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let mean = sum[k] / nf;
            let var = (sum_sq[k] / nf - mean * mean).max(0.0);
            let se = (var / nf).sqrt();
            let lhs = hits_s[k] as f64 / nf;
            let rhs = gamma * hits_f[k] as f64 / nf;
            let margin = rhs + 3.0 * se - lhs;
            Prop1Check {
                gamma,
                threshold: thresholds[k],
                lhs,
                rhs,
                se,
                margin,
                pass: margin >= 0.0,
            }
        })
        .collect();
    Ok(Prop1Report {
        kappa,
        admissible: kappa >= diag.kappa_star,
        checks,
    })
}

/// CSV with columns `rho,mu,d1,d2,kappa_star,mc_samples`; `mu` entries
/// are `;`-separated.
pub fn write_diagnostics_csv<W: Write>(out: W, rows: &[LehmannDiagnostic]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "mu", "d1", "d2", "kappa_star", "mc_samples"])?;
    for d in rows {
        let mu: Vec<String> = d.mu.iter().map(|m| m.to_string()).collect();
        w.write_record([
            d.rho.to_string(),
            mu.join(";"),
            d.d1.to_string(),
            d.d2.to_string(),
            d.kappa_star.to_string(),
            d.mc_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
