//! Monte-Carlo harness: scenario configurations, truth sampling, data
//! generators for Scenarios 1–5 and error/power bookkeeping.

mod config;
mod experiment;
mod generators;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combine::Metric;
use crate::error::{Error, Result};

pub use config::{NrGrid, OneOrMany, SimulationPlan, PAPER_GRID};
pub use experiment::{
    run_experiment, run_plan, summarize, write_reps_csv, write_summary_csv, ExperimentResult,
    ProcedureSpec, RepRecord, SummaryRow, SUMMARY_HEADER,
};
pub use generators::{
    ar1_correlation, cholesky, equicorrelation, gen_scenario1, gen_scenario2, gen_scenario3,
    gen_scenario4, gen_scenario5, generate, one_sided_p, two_sided_p,
};

/// Largest `n` for which the `2^n` configurations are enumerated.
pub const MAX_STUDIES: usize = 20;

/// One simulation setting: a single scenario at a single `(n, r, ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: u8,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    /// Cross-study dependence. Unused by Scenarios 2 and 4.
    pub rho: f64,
    pub pi00: f64,
    pub pi1: f64,
    pub mu_set: Vec<f64>,
    /// Subjects shared between studies 2 and 5 (Scenario 2 only).
    pub q: Option<usize>,
    /// Study-1 subject count (Scenario 2 only).
    pub s: Option<usize>,
    #[serde(rename = "reps")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub metric: Metric,
}

impl ScenarioConfig {
    /// Defaults for `scenario` as used in the simulation section: π₀₀ =
    /// 0.98, π₁ = 0.01, m = 10 000, α = 0.2 (FDR).
    pub fn defaults(scenario: u8) -> Result<Self> {
        let mut cfg = ScenarioConfig {
            scenario,
            m: 10_000,
            n: 4,
            r: 2,
            rho: 0.0,
            pi00: 0.98,
            pi1: 0.01,
            mu_set: vec![-6.0, -5.0, -4.0, 4.0, 5.0, 6.0],
            q: None,
            s: None,
            b: 100,
            seed: 1,
            alpha: 0.2,
            metric: Metric::Fdr,
        };
        match scenario {
            1 | 5 => cfg.rho = 0.2,
            2 => {
                cfg.n = 5;
                cfg.mu_set = vec![-4.0, -3.0, 3.0, 4.0];
                cfg.q = Some(0);
                cfg.s = Some(5000);
            }
            3 => cfg.rho = -0.2,
            4 => {}
            _ => return Err(Error::config(format!("unknown scenario {scenario}"))),
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.scenario) {
            return Err(Error::config(format!("unknown scenario {}", self.scenario)));
        }
        if self.m == 0 {
            return Err(Error::config("m must be positive"));
        }
        if self.n < 2 || self.n > MAX_STUDIES {
            return Err(Error::config(format!(
                "n must lie in 2..={MAX_STUDIES}, got {}",
                self.n
            )));
        }
        if self.r < 1 || self.r > self.n {
            return Err(Error::config(format!(
                "r must satisfy 1 <= r <= n = {}, got {}",
                self.n, self.r
            )));
        }
        let probs_ok = (0.0..=1.0).contains(&self.pi00)
            && (0.0..=1.0).contains(&self.pi1)
            && self.pi00 + self.pi1 <= 1.0 + 1e-12;
        if !probs_ok {
            return Err(Error::config(format!(
                "need pi00, pi1 >= 0 and pi00 + pi1 <= 1, got {} and {}",
                self.pi00, self.pi1
            )));
        }
        if self.mu_set.is_empty() || self.mu_set.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("mu_set must hold finite values"));
        }
        if self.b == 0 {
            return Err(Error::config("reps must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !self.rho.is_finite() || self.rho.abs() >= 1.0 {
            return Err(Error::config(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        match self.scenario {
            2 => {
                if self.n != 5 {
                    return Err(Error::config("scenario 2 has exactly 5 studies"));
                }
                let s = self.s.unwrap_or(5000);
                if s < 4000 {
                    return Err(Error::config("scenario 2 needs s >= 4000 subjects"));
                }
                if self.q.unwrap_or(0) > 1000 {
                    return Err(Error::config("scenario 2 needs q <= 1000"));
                }
            }
            _ => {
                if self.q.is_some() || self.s.is_some() {
                    return Err(Error::config("q and s only apply to scenario 2"));
                }
            }
        }
        Ok(())
    }
}

/// Which base nulls are false, and the PC truth that follows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthAssignment {
    n: usize,
    /// Column-major `n × m`; `true` marks a false base null.
    config: Vec<bool>,
    /// `θ_j = 1{column sum ≥ r}`.
    pub pc_truth: Vec<bool>,
}

impl TruthAssignment {
    pub fn new(n: usize, r: usize, config: Vec<bool>) -> Self {
        let pc_truth = config
            .chunks(n)
            .map(|c| c.iter().filter(|&&b| b).count() >= r)
            .collect();
        TruthAssignment {
            n,
            config,
            pc_truth,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.pc_truth.len()
    }

    pub fn is_signal(&self, study: usize, hypothesis: usize) -> bool {
        self.config[hypothesis * self.n + study]
    }

    pub fn column(&self, j: usize) -> &[bool] {
        &self.config[j * self.n..(j + 1) * self.n]
    }

    pub fn false_pc_count(&self) -> usize {
        self.pc_truth.iter().filter(|&&t| t).count()
    }
}

/// Configuration patterns as bitmasks, grouped for sampling.
#[derive(Debug, Clone)]
pub(crate) struct PatternSampler {
    n: usize,
    pi00: f64,
    pi1: f64,
    pc_false: Vec<u32>,
    others: Vec<u32>,
}

impl PatternSampler {
    pub(crate) fn new(n: usize, r: usize, pi00: f64, pi1: f64) -> Result<Self> {
        if n > MAX_STUDIES {
            return Err(Error::config(format!(
                "cannot enumerate 2^{n} configurations (n <= {MAX_STUDIES})"
            )));
        }
        let mut pc_false = Vec::new();
        let mut others = Vec::new();
        for mask in 1u32..(1u32 << n) {
            if mask.count_ones() as usize >= r {
                pc_false.push(mask);
            } else {
                others.push(mask);
            }
        }
        if others.is_empty() && 1.0 - pi00 - pi1 > 1e-12 {
            return Err(Error::config(format!(
                "with r = {r} every non-null configuration is a PC alternative, \
                 so pi00 + pi1 must equal 1"
            )));
        }
        Ok(PatternSampler {
            n,
            pi00,
            pi1,
            pc_false,
            others,
        })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        if u < self.pi00 {
            0
        } else if u < self.pi00 + self.pi1 || self.others.is_empty() {
            self.pc_false[rng.random_range(0..self.pc_false.len())]
        } else {
            self.others[rng.random_range(0..self.others.len())]
        }
    }

    /// Target probability of `mask`.
    #[cfg(test)]
    pub(crate) fn probability(&self, mask: u32) -> f64 {
        if mask == 0 {
            self.pi00
        } else if self.pc_false.contains(&mask) {
            self.pi1 / self.pc_false.len() as f64
        } else if self.others.is_empty() {
            0.0
        } else {
            (1.0 - self.pi00 - self.pi1).max(0.0) / self.others.len() as f64
        }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }
}

/// Draw one configuration per hypothesis.
pub fn sample_configurations<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<TruthAssignment> {
    let sampler = PatternSampler::new(cfg.n, cfg.r, cfg.pi00, cfg.pi1)?;
    Ok(sample_with(&sampler, cfg.m, cfg.r, rng))
}

pub(crate) fn sample_with<R: Rng + ?Sized>(
    sampler: &PatternSampler,
    m: usize,
    r: usize,
    rng: &mut R,
) -> TruthAssignment {
    let n = sampler.n();
    let mut config = Vec::with_capacity(n * m);
    for _ in 0..m {
        let mask = sampler.sample(rng);
        config.extend((0..n).map(|i| mask >> i & 1 == 1));
    }
    TruthAssignment::new(n, r, config)
}

/// Error and power of one rejection set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub fdp: f64,
    pub v: usize,
    pub fwer_indicator: bool,
    pub recall: f64,
    pub rejections: usize,
}

impl ErrorMetrics {
    /// Score `rejected` (hypothesis indices) against the PC truth.
    pub fn score(rejected: &[usize], truth: &TruthAssignment) -> Self {
        let v = rejected.iter().filter(|&&j| !truth.pc_truth[j]).count();
        let rejections = rejected.len();
        let tp = rejections - v;
        ErrorMetrics {
            fdp: v as f64 / rejections.max(1) as f64,
            v,
            fwer_indicator: v > 0,
            recall: tp as f64 / truth.false_pc_count().max(1) as f64,
            rejections,
        }
    }
}
