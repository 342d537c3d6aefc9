//! Replicated experiments, aggregation and CSV output.
//!
//! Every replication owns a ChaCha8 stream: the generator is seeded with
//! the run seed and switched to stream `(setting_index << 32) | rep`, so
//! results do not depend on thread count or scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::generate;
use super::{ErrorMetrics, ScenarioConfig, SimulationPlan};
use crate::calibrate::{KappaChoice, KappaGrid};
use crate::combine::{CauchyFilter, Combiner, PchSpec};
use crate::error::{Error, Result};
use crate::select::{self, ProcedureKind};

pub const SUMMARY_HEADER: &str = "procedure,scenario,rho,n,r,metric_name,mean,sd,B";

/// A procedure as labelled in plans and output tables, e.g. `efilter-b`
/// (e-Filter with Bonferroni statistics) or `bh-c` (BH on Cauchy PC
/// p-values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProcedureSpec {
    pub label: String,
    pub kind: ProcedureKind,
    pub combiner: Combiner,
    pub cauchy_filter: CauchyFilter,
}

impl ProcedureSpec {
    /// The six procedures of the simulation tables.
    pub fn paper_set() -> Vec<ProcedureSpec> {
        ["adafilter", "bh-b", "bh-c", "epch", "efilter-c", "efilter-b"]
            .iter()
            .map(|s| s.parse().expect("valid label"))
            .collect()
    }
}

impl FromStr for ProcedureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let label = s.to_ascii_lowercase();
        let mut spec = ProcedureSpec {
            label: label.clone(),
            kind: ProcedureKind::EFilter,
            combiner: Combiner::Bonferroni,
            cauchy_filter: CauchyFilter::Probability,
        };
        let mut parts = label.splitn(3, '-');
        let head = parts.next().unwrap_or_default();
        let combiner = parts.next();
        let suffix = parts.next();
        match (head, combiner, suffix) {
            ("adafilter", None, None) => spec.kind = ProcedureKind::AdaFilter,
            ("epch", None, None) => spec.kind = ProcedureKind::EPch,
            ("bh", Some(c), None) => {
                spec.kind = ProcedureKind::BhPc;
                spec.combiner = c.parse()?;
            }
            ("efilter", Some(c), tan) => {
                spec.combiner = c.parse()?;
                if !matches!(spec.combiner, Combiner::Bonferroni | Combiner::Cauchy) {
                    return Err(Error::config(format!(
                        "`{s}`: e-Filter needs the bonferroni or cauchy combiner"
                    )));
                }
                match tan {
                    None => {}
                    Some("tan") if spec.combiner == Combiner::Cauchy => {
                        spec.cauchy_filter = CauchyFilter::LiteralTan
                    }
                    Some(_) => return Err(Error::config(format!("unknown procedure `{s}`"))),
                }
            }
            _ => return Err(Error::config(format!("unknown procedure `{s}`"))),
        }
        Ok(spec)
    }
}

impl TryFrom<String> for ProcedureSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProcedureSpec> for String {
    fn from(p: ProcedureSpec) -> String {
        p.label
    }
}

impl fmt::Display for ProcedureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// One procedure's outcome in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub procedure: String,
    pub rep: usize,
    pub metrics: ErrorMetrics,
    pub kappa: Option<f64>,
}

/// All replications of one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ScenarioConfig,
    pub procedures: Vec<String>,
    /// Rep-major: `records[rep * procedures.len() + p]`.
    pub records: Vec<RepRecord>,
}

impl ExperimentResult {
    pub fn for_procedure<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a RepRecord> + 'a {
        self.records.iter().filter(move |r| r.procedure == label)
    }

    /// Mean and sample standard deviation of `f` over reps of `label`.
    pub fn mean_sd(&self, label: &str, f: impl Fn(&RepRecord) -> f64) -> (f64, f64) {
        mean_sd(&self.for_procedure(label).map(f).collect::<Vec<_>>())
    }
}

pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (k - 1.0)).sqrt())
}

/// Run `cfg.b` replications of every procedure. `setting_index` selects
/// the RNG streams and must differ between settings of one run.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    procedures: &[ProcedureSpec],
    kappa: KappaChoice,
    grid: &KappaGrid,
    setting_index: u32,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if procedures.is_empty() {
        return Err(Error::config("no procedures requested"));
    }
    let per_rep = (0..cfg.b)
        .into_par_iter()
        .map(|rep| {
            run_rep(cfg, procedures, kappa, grid, setting_index, rep).map_err(|e| {
                Error::Replication {
                    rep,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        procedures: procedures.iter().map(|p| p.label.clone()).collect(),
        records: per_rep.into_iter().flatten().collect(),
    })
}

fn run_rep(
    cfg: &ScenarioConfig,
    procedures: &[ProcedureSpec],
    kappa: KappaChoice,
    grid: &KappaGrid,
    setting_index: u32,
    rep: usize,
) -> Result<Vec<RepRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((u64::from(setting_index) << 32) | rep as u64);
    let (pm, truth) = generate(cfg, &mut rng)?;
    procedures
        .iter()
        .map(|p| {
            let spec = PchSpec {
                n: cfg.n,
                r: cfg.r,
                alpha: cfg.alpha,
                metric: cfg.metric,
                combiner: p.combiner,
                cauchy_filter: p.cauchy_filter,
            };
            let res = select::run_tuned(&pm, &spec, p.kind, kappa, grid)?;
            Ok(RepRecord {
                procedure: p.label.clone(),
                rep,
                metrics: ErrorMetrics::score(&res.rejected, &truth),
                kappa: res.kappa_used,
            })
        })
        .collect()
}

/// Expand and run every setting of a plan, in plan order.
pub fn run_plan(plan: &SimulationPlan) -> Result<Vec<ExperimentResult>> {
    let grid = plan.kappa_grid.clone().unwrap_or_default();
    plan.settings()?
        .iter()
        .enumerate()
        .map(|(i, cfg)| run_experiment(cfg, &plan.procedures, plan.kappa, &grid, i as u32))
        .collect()
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub procedure: String,
    pub scenario: u8,
    /// ρ, or the overlap `q` for Scenario 2.
    pub rho: f64,
    /// `n` and `r`, or `avg` for rows averaged over several `(n, r)`.
    pub n: String,
    pub r: String,
    pub metric_name: &'static str,
    pub mean: f64,
    pub sd: f64,
    pub b: usize,
}

type Extractor = fn(&RepRecord) -> Option<f64>;

const METRICS: [(&str, Extractor); 6] = [
    ("fdr", |r| Some(r.metrics.fdp)),
    ("pfer", |r| Some(r.metrics.v as f64)),
    ("fwer", |r| Some(f64::from(u8::from(r.metrics.fwer_indicator)))),
    ("recall", |r| Some(r.metrics.recall)),
    ("rejections", |r| Some(r.metrics.rejections as f64)),
    ("kappa", |r| r.kappa),
];

fn dependence(cfg: &ScenarioConfig) -> f64 {
    if cfg.scenario == 2 {
        cfg.q.unwrap_or(0) as f64
    } else {
        cfg.rho
    }
}

/// Per-setting rows, followed by rows averaged over `(n, r)` for every
/// `(scenario, ρ)` with more than one setting. Averaged rows report the
/// mean of the per-setting means and the standard deviation of the pooled
/// replications.
pub fn summarize(results: &[ExperimentResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for res in results {
        for label in &res.procedures {
            for (name, f) in METRICS {
                let v: Vec<f64> = res.for_procedure(label).filter_map(f).collect();
                if v.is_empty() {
                    continue;
                }
                let (mean, sd) = mean_sd(&v);
                rows.push(SummaryRow {
                    procedure: label.clone(),
                    scenario: res.config.scenario,
                    rho: dependence(&res.config),
                    n: res.config.n.to_string(),
                    r: res.config.r.to_string(),
                    metric_name: name,
                    mean,
                    sd,
                    b: res.config.b,
                });
            }
        }
    }
    let mut groups: Vec<(u8, f64, Vec<&ExperimentResult>)> = Vec::new();
    for res in results {
        let key = (res.config.scenario, dependence(&res.config));
        match groups.iter_mut().find(|g| g.0 == key.0 && g.1 == key.1) {
            Some(g) => g.2.push(res),
            None => groups.push((key.0, key.1, vec![res])),
        }
    }
    for (scenario, rho, members) in groups.into_iter().filter(|g| g.2.len() > 1) {
        for label in &members[0].procedures {
            for (name, f) in METRICS {
                let per: Vec<Vec<f64>> = members
                    .iter()
                    .map(|m| m.for_procedure(label).filter_map(f).collect())
                    .collect();
                if per.iter().any(|v| v.is_empty()) {
                    continue;
                }
                let means: Vec<f64> = per.iter().map(|v| mean_sd(v).0).collect();
                let pooled: Vec<f64> = per.concat();
                rows.push(SummaryRow {
                    procedure: label.clone(),
                    scenario,
                    rho,
                    n: "avg".into(),
                    r: "avg".into(),
                    metric_name: name,
                    mean: means.iter().sum::<f64>() / means.len() as f64,
                    sd: mean_sd(&pooled).1,
                    b: members[0].config.b,
                });
            }
        }
    }
    rows
}

/// Write the metrics table with header [`SUMMARY_HEADER`].
pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER.split(','))?;
    for row in rows {
        w.write_record([
            row.procedure.clone(),
            row.scenario.to_string(),
            row.rho.to_string(),
            row.n.clone(),
            row.r.clone(),
            row.metric_name.to_string(),
            row.mean.to_string(),
            row.sd.to_string(),
            row.b.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line per (setting, rep, procedure).
pub fn write_reps_csv<W: Write>(out: W, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "procedure", "scenario", "rho", "n", "r", "rep", "rejections", "v", "fdp", "recall",
        "kappa",
    ])?;
    for res in results {
        for rec in &res.records {
            w.write_record([
                rec.procedure.clone(),
                res.config.scenario.to_string(),
                dependence(&res.config).to_string(),
                res.config.n.to_string(),
                res.config.r.to_string(),
                rec.rep.to_string(),
                rec.metrics.rejections.to_string(),
                rec.metrics.v.to_string(),
                rec.metrics.fdp.to_string(),
                rec.metrics.recall.to_string(),
                rec.kappa.map(|k| k.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: u8) -> ScenarioConfig {
        ScenarioConfig {
            m: 500,
            b: 4,
            seed: 7,
            ..ScenarioConfig::defaults(scenario).unwrap()
        }
    }

    #[test]
    fn procedure_labels() {
        let p: ProcedureSpec = "efilter-c".parse().unwrap();
        assert_eq!((p.kind, p.combiner), (ProcedureKind::EFilter, Combiner::Cauchy));
        let p: ProcedureSpec = "efilter-c-tan".parse().unwrap();
        assert_eq!(p.cauchy_filter, CauchyFilter::LiteralTan);
        let p: ProcedureSpec = "bh-fisher".parse().unwrap();
        assert_eq!((p.kind, p.combiner), (ProcedureKind::BhPc, Combiner::Fisher));
        assert!("efilter-s".parse::<ProcedureSpec>().is_err());
        assert!("efilter-b-tan".parse::<ProcedureSpec>().is_err());
        assert!("bh".parse::<ProcedureSpec>().is_err());
        assert_eq!(ProcedureSpec::paper_set().len(), 6);
    }

    #[test]
    fn deterministic_and_consistent() {
        let cfg = small(1);
        let procs = ProcedureSpec::paper_set();
        let grid = KappaGrid::default();
        let a = run_experiment(&cfg, &procs, KappaChoice::Auto, &grid, 0).unwrap();
        let b = run_experiment(&cfg, &procs, KappaChoice::Auto, &grid, 0).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&cfg, &procs, KappaChoice::Auto, &grid, 1).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.records.len(), cfg.b * procs.len());
        for rec in &a.records {
            assert!(rec.metrics.v <= rec.metrics.rejections);
            assert!((0.0..=1.0).contains(&rec.metrics.fdp));
            assert!((0.0..=1.0).contains(&rec.metrics.recall));
        }
    }

    #[test]
    fn tiny_alpha_global_null() {
        let cfg = ScenarioConfig {
            pi00: 1.0,
            pi1: 0.0,
            b: 1,
            alpha: 1e-12,
            ..small(1)
        };
        let res = run_experiment(
            &cfg,
            &ProcedureSpec::paper_set(),
            KappaChoice::Fixed(0.5),
            &KappaGrid::default(),
            0,
        )
        .unwrap();
        for rec in &res.records {
            assert_eq!((rec.metrics.fdp, rec.metrics.recall), (0.0, 0.0));
        }
    }

    #[test]
    fn summary_csv_layout() {
        let grid = KappaGrid::default();
        let procs: Vec<ProcedureSpec> = vec!["efilter-b".parse().unwrap()];
        let results: Vec<_> = [(2, 2), (4, 2)]
            .iter()
            .enumerate()
            .map(|(i, &(n, r))| {
                let cfg = ScenarioConfig { n, r, ..small(1) };
                run_experiment(&cfg, &procs, KappaChoice::Auto, &grid, i as u32).unwrap()
            })
            .collect();
        let rows = summarize(&results);
        assert_eq!(rows.len(), 3 * METRICS.len());
        assert!(rows.iter().any(|r| r.n == "avg" && r.metric_name == "kappa"));
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SUMMARY_HEADER);
    }

    #[test]
    fn failed_rep_is_reported() {
        let cfg = ScenarioConfig {
            rho: -0.9,
            n: 4,
            ..small(1)
        };
        let err = run_experiment(
            &cfg,
            &ProcedureSpec::paper_set(),
            KappaChoice::Auto,
            &KappaGrid::default(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Replication { .. }));
        assert!(err.is_validation());
    }
}
