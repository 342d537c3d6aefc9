//! Simulation plans read from TOML.
//!
//! ```toml
//! scenario = 1
//! rho = [0.2, 0.8]          # scalar or list
//! nr = "paper-grid"         # or [[2, 2], [4, 2]]
//! reps = 100
//! seed = 42
//! alpha = 0.2
//! metric = "fdr"
//! procedures = ["adafilter", "bh-b", "efilter-b"]
//! kappa = "auto"            # or a number in (0, 1)
//! ```
//!
//! Scenario 2 takes `q` (scalar or list) and `s` instead of `rho`.
//! Omitted keys fall back to [`ScenarioConfig::defaults`].

use serde::{Deserialize, Serialize};

use super::{ProcedureSpec, ScenarioConfig};
use crate::calibrate::{KappaChoice, KappaGrid};
use crate::combine::Metric;
use crate::error::{Error, Result};

/// The six `(n, r)` combinations of the simulation tables.
pub const PAPER_GRID: [(usize, usize); 6] = [(2, 2), (4, 2), (8, 2), (4, 4), (8, 4), (8, 8)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NrGrid {
    Preset(String),
    Pairs(Vec<(usize, usize)>),
}

impl NrGrid {
    pub fn pairs(&self) -> Result<Vec<(usize, usize)>> {
        match self {
            NrGrid::Preset(name) if name == "paper-grid" => Ok(PAPER_GRID.to_vec()),
            NrGrid::Preset(name) => Err(Error::config(format!("unknown (n, r) preset `{name}`"))),
            NrGrid::Pairs(p) if p.is_empty() => Err(Error::config("empty (n, r) grid")),
            NrGrid::Pairs(p) => Ok(p.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    pub scenario: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<OneOrMany<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nr: Option<NrGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi00: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_set: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default = "ProcedureSpec::paper_set")]
    pub procedures: Vec<ProcedureSpec>,
    #[serde(default)]
    pub kappa: KappaChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_grid: Option<KappaGrid>,
}

impl SimulationPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: SimulationPlan =
            toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        plan.settings()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    /// The individual settings, dependence level outermost.
    pub fn settings(&self) -> Result<Vec<ScenarioConfig>> {
        let base = ScenarioConfig::defaults(self.scenario)?;
        if self.nr.is_some() && (self.n.is_some() || self.r.is_some()) {
            return Err(Error::config("give either `nr` or `n`/`r`, not both"));
        }
        let pairs = match (&self.nr, self.n, self.r) {
            (Some(g), _, _) => g.pairs()?,
            (None, Some(n), Some(r)) => vec![(n, r)],
            (None, None, None) if self.scenario == 2 => vec![(5, 2)],
            (None, None, None) => PAPER_GRID.to_vec(),
            _ => return Err(Error::config("`n` and `r` must be given together")),
        };
        if self.scenario != 2 && (self.q.is_some() || self.s.is_some()) {
            return Err(Error::config("q and s only apply to scenario 2"));
        }
        if self.scenario == 2 && self.rho.is_some() {
            return Err(Error::config("scenario 2 varies q, not rho"));
        }
        if self.procedures.is_empty() {
            return Err(Error::config("no procedures requested"));
        }
        let levels: Vec<(f64, Option<usize>)> = if self.scenario == 2 {
            self.q
                .as_ref()
                .map_or(vec![0], |q| q.to_vec())
                .into_iter()
                .map(|q| (0.0, Some(q)))
                .collect()
        } else {
            self.rho
                .as_ref()
                .map_or(vec![base.rho], |r| r.to_vec())
                .into_iter()
                .map(|rho| (rho, None))
                .collect()
        };
        if levels.is_empty() {
            return Err(Error::config("empty rho/q list"));
        }
        let mut out = Vec::with_capacity(levels.len() * pairs.len());
        for &(rho, q) in &levels {
            for &(n, r) in &pairs {
                let cfg = ScenarioConfig {
                    m: self.m.unwrap_or(base.m),
                    n,
                    r,
                    rho,
                    pi00: self.pi00.unwrap_or(base.pi00),
                    pi1: self.pi1.unwrap_or(base.pi1),
                    mu_set: self.mu_set.clone().unwrap_or_else(|| base.mu_set.clone()),
                    q,
                    s: if self.scenario == 2 {
                        Some(self.s.unwrap_or(5000))
                    } else {
                        None
                    },
                    b: self.reps.unwrap_or(base.b),
                    seed: self.seed.unwrap_or(base.seed),
                    alpha: self.alpha.unwrap_or(base.alpha),
                    metric: self.metric.unwrap_or(base.metric),
                    ..base.clone()
                };
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}
