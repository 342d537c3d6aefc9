//! Selection procedures: BH, e-BH, e-PCH, e-Filter and the AdaFilter and
//! BH-on-PC-p-value baselines.
//!
//! The filter-based procedures all reduce to one problem. Given filter
//! points `x` and selection points `y`, find the largest γ in (0, α] with
//!
//! ```text
//! PFER:  γ·#{x_j < γ}                   ≤ α
//! FDR:   γ·#{x_j < γ} / max(#{y_j < γ}, 1) ≤ α
//! ```
//!
//! and reject every `y_j < γ`. AdaFilter uses `x = F`, `y = S`. e-Filter
//! uses `x = 1/φ(F)`, `y = 1/φ(S)`, which turns `φ(F_j) > 1/γ` into
//! `x_j < γ`. Both counts are constant on the intervals between
//! consecutive sorted points, so the supremum is found exactly in one merge
//! pass over the sorted points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::{self, Calibrator, KappaChoice, KappaGrid};
use crate::combine::{self, BasePValueMatrix, Combiner, FilterPair, Metric, PchSpec};
use crate::error::{Error, Result};

/// Procedure family. The combiner, where relevant, comes from [`PchSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcedureKind {
    /// Filter on `F`, reject Bonferroni PC p-values below γ₀. Assumes
    /// independent studies.
    AdaFilter,
    /// BH (or Bonferroni, for PFER/FWER) on the PC p-values.
    BhPc,
    /// Average of the `n-r+1` smallest calibrated e-values, then e-BH.
    EPch,
    /// e-value filter on the calibrated `(S, F)` pair.
    EFilter,
}

impl ProcedureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcedureKind::AdaFilter => "adafilter",
            ProcedureKind::BhPc => "bh-pc",
            ProcedureKind::EPch => "epch",
            ProcedureKind::EFilter => "efilter",
        }
    }

    pub fn uses_kappa(self) -> bool {
        matches!(self, ProcedureKind::EPch | ProcedureKind::EFilter)
    }
}

impl fmt::Display for ProcedureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcedureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adafilter" => Ok(ProcedureKind::AdaFilter),
            "bh-pc" | "bh" => Ok(ProcedureKind::BhPc),
            "epch" | "e-pch" => Ok(ProcedureKind::EPch),
            "efilter" | "e-filter" => Ok(ProcedureKind::EFilter),
            _ => Err(Error::config(format!("unknown procedure `{s}`"))),
        }
    }
}

/// Outcome of a selection procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    /// Rejection threshold on the γ scale, in [0, α].
    pub gamma_e: f64,
    /// Rejected hypothesis indices, ascending.
    pub rejected: Vec<usize>,
    /// Adjusted e-values (e-Filter, e-PCH) or adjusted p-values (BH,
    /// AdaFilter), in input order.
    pub adjusted: Vec<f64>,
    pub metric: Metric,
    pub procedure: ProcedureKind,
    pub kappa_used: Option<f64>,
}

impl RejectionResult {
    pub fn is_rejected(&self, j: usize) -> bool {
        self.rejected.binary_search(&j).is_ok()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// Largest γ in (0, α] satisfying the PFER (`ratio = false`) or FDR
/// (`ratio = true`) constraint. Both slices must be sorted ascending;
/// NaN is not allowed.
pub(crate) fn step_threshold(filter: &[f64], select: &[f64], alpha: f64, ratio: bool) -> f64 {
    let (mut i, mut s) = (0usize, 0usize);
    // points at or below zero count on every interval
    while i < filter.len() && filter[i] <= 0.0 {
        i += 1;
    }
    while s < select.len() && select[s] <= 0.0 {
        s += 1;
    }
    let mut lo = 0.0f64;
    let mut best = 0.0f64;
    loop {
        let next_f = filter.get(i).copied().unwrap_or(f64::INFINITY);
        let next_s = select.get(s).copied().unwrap_or(f64::INFINITY);
        let hi = next_f.min(next_s).min(alpha);
        // on (lo, hi] the counts #{x < γ} = i and #{y < γ} = s are fixed
        let cand = if i == 0 {
            hi
        } else {
            let denom = if ratio { s.max(1) as f64 } else { 1.0 };
            hi.min(alpha * denom / i as f64)
        };
        if cand > lo && cand > best {
            best = cand;
        }
        if hi >= alpha {
            break;
        }
        while i < filter.len() && filter[i] <= hi {
            i += 1;
        }
        while s < select.len() && select[s] <= hi {
            s += 1;
        }
        lo = hi;
    }
    best
}

/// Indices `j` with `y[j] < gamma`, ascending.
fn below(y: &[f64], gamma: f64) -> Vec<usize> {
    y.iter()
        .enumerate()
        .filter(|(_, &v)| v < gamma)
        .map(|(j, _)| j)
        .collect()
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn filter_metric(metric: Metric) -> bool {
    metric == Metric::Fdr
}

/// Benjamini–Hochberg step-up at level `alpha`.
pub fn bh(pvalues: &[f64], alpha: f64) -> Result<RejectionResult> {
    check_alpha(alpha)?;
    if let Some(p) = pvalues.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(Error::domain(format!("p-value {p} is outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mf = m as f64;
    let mut k = 0;
    for (rank, &j) in order.iter().enumerate() {
        if pvalues[j] <= (rank + 1) as f64 * alpha / mf {
            k = rank + 1;
        }
    }
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &j) in order.iter().enumerate().rev() {
        running = running.min(pvalues[j] * mf / (rank + 1) as f64);
        adjusted[j] = running;
    }
    let mut rejected: Vec<usize> = order[..k].to_vec();
    rejected.sort_unstable();
    Ok(RejectionResult {
        gamma_e: if m == 0 { 0.0 } else { k as f64 * alpha / mf },
        rejected,
        adjusted,
        metric: Metric::Fdr,
        procedure: ProcedureKind::BhPc,
        kappa_used: None,
    })
}

/// Bonferroni: reject `p ≤ α/m`. Adjusted values are `min(1, m·p)`.
fn bonferroni_reject(pvalues: &[f64], alpha: f64, metric: Metric) -> RejectionResult {
    let mf = pvalues.len() as f64;
    let cut = alpha / mf;
    RejectionResult {
        gamma_e: cut,
        rejected: pvalues
            .iter()
            .enumerate()
            .filter(|(_, &p)| p <= cut)
            .map(|(j, _)| j)
            .collect(),
        adjusted: pvalues.iter().map(|&p| (p * mf).min(1.0)).collect(),
        metric,
        procedure: ProcedureKind::BhPc,
        kappa_used: None,
    }
}

/// e-BH: with `e_[1] ≥ … ≥ e_[m]`, reject the `k*` largest where
/// `k* = max{k : k·e_[k]/m ≥ 1/α}`.
///
/// Adjusted values are `max_{k ≥ i} k·e_[k]/m` for the hypothesis of
/// rank `i`, so rejection is `adjusted ≥ 1/α`.
pub fn ebh(evalues: &[f64], alpha: f64) -> Result<RejectionResult> {
    check_alpha(alpha)?;
    if let Some(e) = evalues.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::domain(format!("e-value {e} is negative or NaN")));
    }
    let m = evalues.len();
    let mf = m as f64;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| evalues[b].total_cmp(&evalues[a]));
    let level = 1.0 / alpha;
    let mut k_star = 0;
    for (rank, &j) in order.iter().enumerate() {
        if (rank + 1) as f64 * evalues[j] / mf >= level {
            k_star = rank + 1;
        }
    }
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &j) in order.iter().enumerate().rev() {
        running = running.max((rank + 1) as f64 * evalues[j] / mf);
        adjusted[j] = running;
    }
    let mut rejected = order[..k_star].to_vec();
    rejected.sort_unstable();
    Ok(RejectionResult {
        gamma_e: if m == 0 { 0.0 } else { alpha * k_star as f64 / mf },
        rejected,
        adjusted,
        metric: Metric::Fdr,
        procedure: ProcedureKind::EPch,
        kappa_used: None,
    })
}

/// e-PCH e-values: calibrate every base p-value, then average the
/// `n-r+1` smallest e-values of each column.
pub fn epch_evalues(pmatrix: &BasePValueMatrix, r: usize, kappa: f64) -> Result<Vec<f64>> {
    let cal = Calibrator::new(kappa)?;
    let n = pmatrix.n();
    if r < 1 || r > n {
        return Err(Error::domain(format!("r must satisfy 1 <= r <= n = {n}, got {r}")));
    }
    let k = n - r + 1;
    let mut buf = vec![0.0; n];
    Ok(pmatrix
        .columns()
        .map(|col| {
            for (b, &p) in buf.iter_mut().zip(col) {
                *b = cal.phi_unchecked(combine::clamp_probability(p));
            }
            combine::sort_column(&mut buf);
            buf[..k].iter().sum::<f64>() / k as f64
        })
        .collect())
}

/// e-PCH. FDR runs e-BH; PFER and FWER reject `e_j ≥ m/α`.
pub fn epch(pmatrix: &BasePValueMatrix, spec: &PchSpec, kappa: f64) -> Result<RejectionResult> {
    spec.validate()?;
    let e = epch_evalues(pmatrix, spec.r, kappa)?;
    let mut res = match spec.metric {
        Metric::Fdr => ebh(&e, spec.alpha)?,
        Metric::Pfer | Metric::Fwer => {
            let cut = pmatrix.m() as f64 / spec.alpha;
            RejectionResult {
                gamma_e: spec.alpha / pmatrix.m() as f64,
                rejected: e
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v >= cut)
                    .map(|(j, _)| j)
                    .collect(),
                adjusted: e.iter().map(|&v| v / pmatrix.m() as f64).collect(),
                metric: spec.metric,
                procedure: ProcedureKind::EPch,
                kappa_used: None,
            }
        }
    };
    res.metric = spec.metric;
    res.kappa_used = Some(kappa);
    Ok(res)
}

/// Sorted statistics of a [`FilterPair`], reusable across many κ.
///
/// Calibration is monotone, so the order of `S` and `F` never depends on
/// κ and each κ costs one linear pass.
#[derive(Debug, Clone)]
pub struct EFilterWorkspace<'a> {
    fp: &'a FilterPair,
    filter_sorted: Vec<f64>,
    select_sorted: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> EFilterWorkspace<'a> {
    pub fn new(fp: &'a FilterPair) -> Self {
        EFilterWorkspace {
            fp,
            filter_sorted: sorted_copy(&fp.filter),
            select_sorted: sorted_copy(&fp.selection),
            x: Vec::with_capacity(fp.len()),
            y: Vec::with_capacity(fp.len()),
        }
    }

    fn load(&mut self, cal: &Calibrator) {
        map_sorted(&self.filter_sorted, &mut self.x, cal);
        map_sorted(&self.select_sorted, &mut self.y, cal);
    }

    /// γ_e for the given κ. FWER uses the PFER threshold.
    pub fn threshold(&mut self, kappa: f64, alpha: f64, metric: Metric) -> Result<f64> {
        check_alpha(alpha)?;
        let cal = Calibrator::new(kappa)?;
        self.load(&cal);
        Ok(step_threshold(&self.x, &self.y, alpha, filter_metric(metric)))
    }

    /// Number of rejections at κ.
    pub fn rejection_count(&mut self, kappa: f64, alpha: f64, metric: Metric) -> Result<usize> {
        let gamma = self.threshold(kappa, alpha, metric)?;
        Ok(self.y.partition_point(|&v| v < gamma))
    }

    /// Full e-Filter result at κ.
    pub fn run(&mut self, kappa: f64, alpha: f64, metric: Metric) -> Result<RejectionResult> {
        let gamma = self.threshold(kappa, alpha, metric)?;
        let cal = Calibrator::new(kappa)?;
        let y: Vec<f64> = self
            .fp
            .selection
            .iter()
            .map(|&s| nan_to_inf(cal.reciprocal_phi(s)))
            .collect();
        let rejected = below(&y, gamma);
        let adjusted = efilter_adjusted(self.fp, kappa, metric)?;
        debug_assert!(
            {
                let level = 1.0 / alpha;
                let by_adjusted: Vec<usize> = adjusted
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > level)
                    .map(|(j, _)| j)
                    .collect();
                by_adjusted.len().abs_diff(rejected.len()) <= 1
            },
            "threshold and adjusted e-value rejection sets diverge"
        );
        Ok(RejectionResult {
            gamma_e: gamma,
            rejected,
            adjusted,
            metric,
            procedure: ProcedureKind::EFilter,
            kappa_used: Some(kappa),
        })
    }
}

/// Apply `1/φ` to an ascending slice, keeping the output ascending.
fn map_sorted(src: &[f64], dst: &mut Vec<f64>, cal: &Calibrator) {
    dst.clear();
    let mut prev = f64::NEG_INFINITY;
    for &v in src {
        let t = nan_to_inf(cal.reciprocal_phi(v)).max(prev);
        dst.push(t);
        prev = t;
    }
    // NaN inputs (negative literal-tan filters) became +inf above but may
    // sit anywhere in the source order.
    if dst.windows(2).any(|w| w[0] > w[1]) {
        dst.sort_by(f64::total_cmp);
    }
}

/// e-Filter threshold γ_e: the supremum of feasible γ in [0, α].
pub fn efilter_threshold(fp: &FilterPair, alpha: f64, kappa: f64, metric: Metric) -> Result<f64> {
    EFilterWorkspace::new(fp).threshold(kappa, alpha, metric)
}

/// Threshold from precomputed filter and selection e-values (any order).
/// Non-positive e-values never count.
pub fn threshold_from_evalues(
    filter_e: &[f64],
    select_e: &[f64],
    alpha: f64,
    metric: Metric,
) -> Result<f64> {
    check_alpha(alpha)?;
    let to_gamma = |e: &[f64]| {
        let mut v: Vec<f64> = e
            .iter()
            .map(|&x| if x > 0.0 { 1.0 / x } else { f64::INFINITY })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    };
    Ok(step_threshold(
        &to_gamma(filter_e),
        &to_gamma(select_e),
        alpha,
        filter_metric(metric),
    ))
}

/// e-Filter: reject `φ(S_j) > 1/γ_e`.
pub fn efilter(fp: &FilterPair, alpha: f64, kappa: f64, metric: Metric) -> Result<RejectionResult> {
    EFilterWorkspace::new(fp).run(kappa, alpha, metric)
}

/// e-Filter adjusted e-values in input order.
///
/// With `S^e = φ(S)` sorted descending and
/// `m_(j) = #{h : φ(F_h) ≥ S^e_(j)}`, the PFER value is
/// `S^e_(j)/m_(j)`. The FDR value is the suffix maximum over `h ≥ j` of
/// `h·S^e_(h)/m_(h)`. Rejecting `adjusted > 1/α` reproduces the threshold
/// form. FWER uses the PFER values.
pub fn efilter_adjusted(fp: &FilterPair, kappa: f64, metric: Metric) -> Result<Vec<f64>> {
    let cal = Calibrator::new(kappa)?;
    let m = fp.len();
    let se: Vec<f64> = fp.selection.iter().map(|&s| cal.phi_unchecked(s)).collect();
    let mut fe: Vec<f64> = fp
        .filter
        .iter()
        .map(|&f| {
            let v = cal.phi_unchecked(f);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        })
        .collect();
    fe.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| se[b].total_cmp(&se[a]));
    let ratios: Vec<f64> = order
        .iter()
        .map(|&j| {
            let count = m - fe.partition_point(|&v| v < se[j]);
            se[j] / count as f64
        })
        .collect();
    let mut adjusted = vec![0.0; m];
    match metric {
        Metric::Pfer | Metric::Fwer => {
            for (rank, &j) in order.iter().enumerate() {
                adjusted[j] = ratios[rank];
            }
        }
        Metric::Fdr => {
            let mut running = f64::NEG_INFINITY;
            for (rank, &j) in order.iter().enumerate().rev() {
                running = running.max((rank + 1) as f64 * ratios[rank]);
                adjusted[j] = running;
            }
        }
    }
    Ok(adjusted)
}

/// AdaFilter threshold γ₀ with `x = F`, `y = S`.
pub fn adafilter_threshold(fp: &FilterPair, alpha: f64, metric: Metric) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(step_threshold(
        &sorted_copy(&fp.filter),
        &sorted_copy(&fp.selection),
        alpha,
        filter_metric(metric),
    ))
}

/// AdaFilter: reject `S_j < γ₀`.
///
/// Adjusted p-values: with `S` ascending and `c_(j) = #{h : F_h ≤ S_(j)}`,
/// PFER uses `S_(j)·c_(j)` and FDR the suffix minimum of `S_(h)·c_(h)/h`,
/// both capped at 1.
pub fn adafilter(fp: &FilterPair, alpha: f64, metric: Metric) -> Result<RejectionResult> {
    let gamma = adafilter_threshold(fp, alpha, metric)?;
    let m = fp.len();
    let f_sorted = sorted_copy(&fp.filter);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| fp.selection[a].total_cmp(&fp.selection[b]));
    let mut adjusted = vec![0.0; m];
    let products: Vec<f64> = order
        .iter()
        .map(|&j| {
            let s = fp.selection[j];
            s * f_sorted.partition_point(|&f| f <= s) as f64
        })
        .collect();
    match metric {
        Metric::Pfer | Metric::Fwer => {
            for (rank, &j) in order.iter().enumerate() {
                adjusted[j] = products[rank].min(1.0);
            }
        }
        Metric::Fdr => {
            let mut running = f64::INFINITY;
            for (rank, &j) in order.iter().enumerate().rev() {
                running = running.min(products[rank] / (rank + 1) as f64);
                adjusted[j] = running.min(1.0);
            }
        }
    }
    Ok(RejectionResult {
        gamma_e: gamma,
        rejected: below(&fp.selection, gamma),
        adjusted,
        metric,
        procedure: ProcedureKind::AdaFilter,
        kappa_used: None,
    })
}

/// BH on the PC p-values of `combiner` (any `r ≥ 1`). PFER and FWER
/// requests use Bonferroni instead.
pub fn bh_on_pc(pmatrix: &BasePValueMatrix, spec: &PchSpec) -> Result<RejectionResult> {
    spec.validate()?;
    let s = combine::selection_stats(pmatrix, spec.r, spec.combiner)?;
    bh_on_selection(&s, spec.alpha, spec.metric)
}

pub(crate) fn bh_on_selection(s: &[f64], alpha: f64, metric: Metric) -> Result<RejectionResult> {
    let mut res = match metric {
        Metric::Fdr => bh(s, alpha)?,
        Metric::Pfer | Metric::Fwer => {
            check_alpha(alpha)?;
            bonferroni_reject(s, alpha, metric)
        }
    };
    res.metric = metric;
    Ok(res)
}

/// Run `kind` on `pmatrix`. `kappa` is required for the calibrated
/// procedures and ignored otherwise.
pub fn run_procedure(
    pmatrix: &BasePValueMatrix,
    spec: &PchSpec,
    kind: ProcedureKind,
    kappa: Option<f64>,
) -> Result<RejectionResult> {
    let need_kappa = || {
        kappa.ok_or_else(|| Error::domain(format!("procedure {kind} needs a kappa value")))
    };
    match kind {
        ProcedureKind::BhPc => bh_on_pc(pmatrix, spec),
        ProcedureKind::EPch => epch(pmatrix, spec, need_kappa()?),
        ProcedureKind::AdaFilter => {
            let bonf = PchSpec {
                combiner: Combiner::Bonferroni,
                ..*spec
            };
            let fp = combine::build_filter_pair(pmatrix, &bonf)?;
            adafilter(&fp, spec.alpha, spec.metric)
        }
        ProcedureKind::EFilter => {
            let fp = combine::build_filter_pair(pmatrix, spec)?;
            efilter(&fp, spec.alpha, need_kappa()?, spec.metric)
        }
    }
}

/// [`run_procedure`] with κ either fixed or tuned over `grid`.
pub fn run_tuned(
    pmatrix: &BasePValueMatrix,
    spec: &PchSpec,
    kind: ProcedureKind,
    kappa: KappaChoice,
    grid: &KappaGrid,
) -> Result<RejectionResult> {
    match (kind, kappa) {
        (k, _) if !k.uses_kappa() => run_procedure(pmatrix, spec, k, None),
        (_, KappaChoice::Fixed(k)) => run_procedure(pmatrix, spec, kind, Some(k)),
        (ProcedureKind::EFilter, KappaChoice::Auto) => {
            // one sort shared by all grid points
            let fp = combine::build_filter_pair(pmatrix, spec)?;
            let mut ws = EFilterWorkspace::new(&fp);
            let scan = calibrate::scan_kappa(grid, |k| {
                ws.rejection_count(k, spec.alpha, spec.metric)
            })?;
            ws.run(scan.selected, spec.alpha, spec.metric)
        }
        (_, KappaChoice::Auto) => {
            let k = calibrate::tune_kappa(pmatrix, spec, grid, kind)?;
            run_procedure(pmatrix, spec, kind, Some(k))
        }
    }
}
