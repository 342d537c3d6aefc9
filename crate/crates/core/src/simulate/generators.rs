//! Data generators for Scenarios 1–5.
//!
//! Statistics are laid out column-major like [`BasePValueMatrix`]: the `n`
//! studies of hypothesis `j` are contiguous. The AR(1) row factor over
//! hypotheses is never materialized; each study's row is produced by the
//! recurrence `x_k = 0.5·x_{k-1} + √0.75·z_k`, which is exactly the
//! Cholesky factor of `Σ₁ = (0.5^{|i-j|})` applied to `z`.

use rand::Rng;
use rand_distr::StandardNormal;
use libm::erfc;

use super::{sample_configurations, ScenarioConfig, TruthAssignment};
use crate::combine::BasePValueMatrix;
use crate::error::{Error, Result};

const ROW_AR: f64 = 0.5;

/// `2Φ(-|x|)`.
pub fn two_sided_p(x: f64) -> f64 {
    erfc(x.abs() / std::f64::consts::SQRT_2)
}

/// `1 - Φ(x)`.
pub fn one_sided_p(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `ρ11ᵀ + (1-ρ)I`, row-major.
pub fn equicorrelation(n: usize, rho: f64) -> Vec<f64> {
    let mut a = vec![rho; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    a
}

/// `ρ^{|i-j|}`, row-major.
pub fn ar1_correlation(n: usize, rho: f64) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = rho.powi(i.abs_diff(j) as i32);
        }
    }
    a
}

/// Lower Cholesky factor of a symmetric `n × n` row-major matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 1e-12) {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {i} is {sum:.3e}"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// In-place `x ← Lx` for lower-triangular `l`.
fn apply_lower(l: &[f64], x: &mut [f64]) {
    let n = x.len();
    for i in (0..n).rev() {
        let mut acc = 0.0;
        for k in 0..=i {
            acc += l[i * n + k] * x[k];
        }
        x[i] = acc;
    }
}

fn draw_means<R: Rng + ?Sized>(cfg: &ScenarioConfig, truth: &TruthAssignment, rng: &mut R) -> Vec<f64> {
    let n = truth.n();
    let mut mu = vec![0.0; n * truth.m()];
    for j in 0..truth.m() {
        for (i, &signal) in truth.column(j).iter().enumerate() {
            if signal {
                mu[j * n + i] = cfg.mu_set[rng.random_range(0..cfg.mu_set.len())];
            }
        }
    }
    mu
}

/// Entries of `Y`: standard normal, or the scale mixture
/// `0.5·N(0,1) + 0.25·N(0,2) + 0.25·N(0,4)`.
#[derive(Clone, Copy)]
enum Innovation {
    Normal,
    ScaleMixture,
}

impl Innovation {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self {
            Innovation::Normal => z,
            Innovation::ScaleMixture => {
                let u: f64 = rng.random();
                let sd = if u < 0.5 {
                    1.0
                } else if u < 0.75 {
                    std::f64::consts::SQRT_2
                } else {
                    2.0
                };
                sd * z
            }
        }
    }
}

/// `X = μ + V·Y·Uᵀ` with `VVᵀ = sigma2` and the AR(1) row factor `U`.
fn matrix_normal<R: Rng + ?Sized>(
    sigma2: &[f64],
    mu: &[f64],
    n: usize,
    innovation: Innovation,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let v = cholesky(sigma2, n)?;
    let m = mu.len() / n;
    let mut x = vec![0.0; n * m];
    let innov_sd = (1.0 - ROW_AR * ROW_AR).sqrt();
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..m {
            let z = innovation.draw(rng);
            let cur = if j == 0 { z } else { ROW_AR * prev + innov_sd * z };
            x[j * n + i] = cur;
            prev = cur;
        }
    }
    for (col, mean) in x.chunks_mut(n).zip(mu.chunks(n)) {
        apply_lower(&v, col);
        for (c, &m) in col.iter_mut().zip(mean) {
            *c += m;
        }
    }
    Ok(x)
}

/// Test statistics for `cfg` given the sampled truth.
pub(crate) fn draw_statistics<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    truth: &TruthAssignment,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = cfg.n;
    let mu = draw_means(cfg, truth, rng);
    match cfg.scenario {
        1 => matrix_normal(&equicorrelation(n, cfg.rho), &mu, n, Innovation::Normal, rng),
        3 => matrix_normal(&ar1_correlation(n, cfg.rho), &mu, n, Innovation::Normal, rng),
        5 => matrix_normal(&equicorrelation(n, cfg.rho), &mu, n, Innovation::ScaleMixture, rng),
        4 => {
            let mut x = vec![0.0; mu.len()];
            for (col, mean) in x.chunks_mut(n).zip(mu.chunks(n)) {
                let control: f64 = rng.sample(StandardNormal);
                for (c, &m) in col.iter_mut().zip(mean) {
                    let z: f64 = rng.sample(StandardNormal);
                    *c = (m + z - control) / std::f64::consts::SQRT_2;
                }
            }
            Ok(x)
        }
        2 => Ok(common_subjects(cfg, &mu, rng)),
        s => Err(Error::config(format!("unknown scenario {s}"))),
    }
}

/// Scenario 2. Subject noise in study 1 has variance `s`; studies 2–4
/// each reuse a disjoint block of 1000 study-1 subjects rescaled to
/// variance 1000, and study 5 combines `1000 - q` fresh subjects with `q`
/// subjects of study 2 (rescaled the same way). Only block sums enter the
/// study means, so each block is drawn as a single normal.
fn common_subjects<R: Rng + ?Sized>(cfg: &ScenarioConfig, mu: &[f64], rng: &mut R) -> Vec<f64> {
    let s = cfg.s.unwrap_or(5000) as f64;
    let q = cfg.q.unwrap_or(0) as f64;
    let block = 1000.0;
    let scale = (block / s).sqrt();
    let mut sum = |subjects: f64, var: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        z * (subjects * var).sqrt()
    };
    let mut x = vec![0.0; mu.len()];
    for (col, mean) in x.chunks_mut(5).zip(mu.chunks(5)) {
        let shared = sum(q, s);
        let rest2 = sum(block - q, s);
        let c = sum(block, s);
        let d = sum(block, s);
        let e = sum(s - 3.0 * block, s);
        let fresh = sum(block - q, block);
        col[0] = mean[0] + (shared + rest2 + c + d + e) / s;
        col[1] = mean[1] + scale * (shared + rest2) / block;
        col[2] = mean[2] + scale * c / block;
        col[3] = mean[3] + scale * d / block;
        col[4] = mean[4] + (fresh + scale * shared) / block;
    }
    x
}

fn to_pmatrix(cfg: &ScenarioConfig, x: &[f64]) -> Result<BasePValueMatrix> {
    let p: Vec<f64> = if cfg.scenario == 3 {
        x.iter().map(|&v| one_sided_p(v)).collect()
    } else {
        x.iter().map(|&v| two_sided_p(v)).collect()
    };
    BasePValueMatrix::unlabeled(cfg.n, cfg.m, p)
}

/// Sample truth, means and noise for any scenario.
pub fn generate<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(BasePValueMatrix, TruthAssignment)> {
    cfg.validate()?;
    let truth = sample_configurations(cfg, rng)?;
    let x = draw_statistics(cfg, &truth, rng)?;
    Ok((to_pmatrix(cfg, &x)?, truth))
}

fn expect_scenario(cfg: &ScenarioConfig, s: u8) -> Result<()> {
    if cfg.scenario == s {
        Ok(())
    } else {
        Err(Error::config(format!(
            "expected a scenario {s} configuration, got scenario {}",
            cfg.scenario
        )))
    }
}

/// Equicorrelated studies, AR(1) hypotheses, two-sided p-values.
pub fn gen_scenario1<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(BasePValueMatrix, TruthAssignment)> {
    expect_scenario(cfg, 1)?;
    generate(cfg, rng)
}

/// Overlapping subjects between studies.
pub fn gen_scenario2<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(BasePValueMatrix, TruthAssignment)> {
    expect_scenario(cfg, 2)?;
    generate(cfg, rng)
}

/// AR(1) study correlation with negative ρ, one-sided p-values.
pub fn gen_scenario3<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(BasePValueMatrix, TruthAssignment)> {
    expect_scenario(cfg, 3)?;
    generate(cfg, rng)
}

/// Shared controls across studies.
pub fn gen_scenario4<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(BasePValueMatrix, TruthAssignment)> {
    expect_scenario(cfg, 4)?;
    generate(cfg, rng)
}

/// Scenario 1 with scale-mixture noise, analysed as if normal.
pub fn gen_scenario5<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(BasePValueMatrix, TruthAssignment)> {
    expect_scenario(cfg, 5)?;
    generate(cfg, rng)
}
