//! Order statistics, partial conjunction p-value combiners and the
//! selection/filter statistic pairs fed to the filtering procedures.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest p-value kept after clamping; zeros are raised to this.
pub const MIN_P: f64 = 1e-300;

/// Clamp margin used only for the Cauchy transform, where `tan` diverges
/// at both ends of the unit interval.
pub const CAUCHY_EPS: f64 = 1e-15;

/// Raise zero (and subnormal) p-values to [`MIN_P`] and cap at 1.
#[inline]
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(MIN_P, 1.0)
}

/// Error metric targeted by a procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fwer,
    Pfer,
    Fdr,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Fwer => "fwer",
            Metric::Pfer => "pfer",
            Metric::Fdr => "fdr",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fwer" => Ok(Metric::Fwer),
            "pfer" => Ok(Metric::Pfer),
            "fdr" => Ok(Metric::Fdr),
            _ => Err(Error::config(format!("unknown metric `{s}`"))),
        }
    }
}

/// Partial conjunction p-value combiner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    Bonferroni,
    Simes,
    Fisher,
    Cauchy,
}

impl Combiner {
    pub fn as_str(self) -> &'static str {
        match self {
            Combiner::Bonferroni => "bonferroni",
            Combiner::Simes => "simes",
            Combiner::Fisher => "fisher",
            Combiner::Cauchy => "cauchy",
        }
    }

    /// PC p-value of an already sorted column.
    pub(crate) fn combine_sorted(self, sorted: &[f64], r: usize) -> f64 {
        match self {
            Combiner::Bonferroni => bonferroni_sorted(sorted, r),
            Combiner::Simes => simes_sorted(sorted, r),
            Combiner::Fisher => fisher_sorted(sorted, r),
            Combiner::Cauchy => cauchy_sorted(sorted, r),
        }
    }
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Combiner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bonferroni" | "b" => Ok(Combiner::Bonferroni),
            "simes" | "s" => Ok(Combiner::Simes),
            "fisher" | "f" => Ok(Combiner::Fisher),
            "cauchy" | "c" => Ok(Combiner::Cauchy),
            _ => Err(Error::config(format!("unknown combiner `{s}`"))),
        }
    }
}

/// How the Cauchy filter statistic is formed from `P_(r-1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CauchyFilter {
    /// `F = P_(r-1)`, the Cauchy tail probability of `tan((0.5 - P_(r-1))π)`.
    #[default]
    Probability,
    /// `F = tan((0.5 - P_(r-1))π)` taken literally. Not confined to
    /// [0, 1]; calibrating it skips the domain checks.
    LiteralTan,
}

/// n×m matrix of base p-values, stored column by column so that the n
/// values of one hypothesis are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePValueMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
    study_ids: Vec<String>,
    hypothesis_ids: Vec<String>,
    clamped: usize,
}

impl BasePValueMatrix {
    /// Build from one row of p-values per study.
    ///
    /// Entries must be finite and in [0, 1]; zeros are raised to [`MIN_P`]
    /// and counted in [`clamped_count`](Self::clamped_count).
    pub fn from_rows(
        rows: &[Vec<f64>],
        study_ids: Vec<String>,
        hypothesis_ids: Vec<String>,
    ) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::domain("study rows have different lengths"));
        }
        let mut values = vec![0.0; n * m];
        for (i, row) in rows.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                values[j * n + i] = p;
            }
        }
        Self::from_column_major(n, m, values, study_ids, hypothesis_ids)
    }

    /// Build from a column-major buffer (`values[j*n + i]` is study `i`,
    /// hypothesis `j`).
    pub fn from_column_major(
        n: usize,
        m: usize,
        mut values: Vec<f64>,
        study_ids: Vec<String>,
        hypothesis_ids: Vec<String>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("need at least 2 studies, got {n}")));
        }
        if m == 0 {
            return Err(Error::domain("need at least one hypothesis"));
        }
        if values.len() != n * m {
            return Err(Error::domain(format!(
                "expected {} p-values for a {n}x{m} matrix, got {}",
                n * m,
                values.len()
            )));
        }
        if study_ids.len() != n || hypothesis_ids.len() != m {
            return Err(Error::domain("identifier counts do not match the matrix shape"));
        }
        {
            let mut seen = std::collections::HashSet::with_capacity(m);
            if let Some(dup) = hypothesis_ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(Error::domain(format!("duplicate hypothesis id `{dup}`")));
            }
        }
        let mut clamped = 0;
        for (k, p) in values.iter_mut().enumerate() {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                return Err(Error::domain(format!(
                    "p-value {} for study {} hypothesis {} is outside [0, 1]",
                    p,
                    k % n,
                    k / n
                )));
            }
            if *p < MIN_P {
                *p = MIN_P;
                clamped += 1;
            }
        }
        Ok(BasePValueMatrix {
            n,
            m,
            values,
            study_ids,
            hypothesis_ids,
            clamped,
        })
    }

    /// Unlabelled matrix with ids `study1..` and `H1..`.
    pub fn unlabeled(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        let studies = (1..=n).map(|i| format!("study{i}")).collect();
        let hyps = (1..=m).map(|j| format!("H{j}")).collect();
        Self::from_column_major(n, m, values, studies, hyps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// The n base p-values of hypothesis `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n)
    }

    pub fn get(&self, study: usize, hypothesis: usize) -> f64 {
        self.values[hypothesis * self.n + study]
    }

    pub fn study_ids(&self) -> &[String] {
        &self.study_ids
    }

    pub fn hypothesis_ids(&self) -> &[String] {
        &self.hypothesis_ids
    }

    /// Number of zero entries raised to [`MIN_P`].
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }
}

/// Parameters of a partial conjunction analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PchSpec {
    pub n: usize,
    pub r: usize,
    pub alpha: f64,
    pub metric: Metric,
    pub combiner: Combiner,
    #[serde(default)]
    pub cauchy_filter: CauchyFilter,
}

impl PchSpec {
    pub fn new(n: usize, r: usize, alpha: f64, metric: Metric, combiner: Combiner) -> Result<Self> {
        let spec = PchSpec {
            n,
            r,
            alpha,
            metric,
            combiner,
            cauchy_filter: CauchyFilter::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks `1 ≤ r ≤ n` and `α ∈ (0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        check_r(self.n, self.r)
    }

    /// Additionally requires `r ≥ 2`, which filtering procedures need.
    pub fn validate_for_filter(&self) -> Result<()> {
        self.validate()?;
        if self.r < 2 {
            return Err(Error::domain(format!(
                "filtering procedures need r >= 2, got r = {}",
                self.r
            )));
        }
        Ok(())
    }
}

fn check_r(n: usize, r: usize) -> Result<()> {
    if r >= 1 && r <= n {
        Ok(())
    } else {
        Err(Error::domain(format!("r must satisfy 1 <= r <= n = {n}, got {r}")))
    }
}

fn check_column(col: &[f64], r: usize) -> Result<()> {
    check_r(col.len(), r)?;
    if let Some(p) = col.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(Error::domain(format!("p-value {p} is outside [0, 1]")));
    }
    Ok(())
}

/// Sort a column ascending. Ties keep their input order.
pub fn order_stats(col: &[f64]) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sort_column(&mut sorted);
    sorted
}

#[inline]
pub(crate) fn sort_column(col: &mut [f64]) {
    if col.len() <= 16 {
        // insertion sort, stable
        for i in 1..col.len() {
            let v = col[i];
            let mut k = i;
            while k > 0 && col[k - 1].total_cmp(&v).is_gt() {
                col[k] = col[k - 1];
                k -= 1;
            }
            col[k] = v;
        }
    } else {
        col.sort_by(f64::total_cmp);
    }
}

fn sorted_clamped(col: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = col.iter().map(|&p| clamp_probability(p)).collect();
    sort_column(&mut s);
    s
}

/// `min(1, (n-r+1)·P_(r))`.
pub fn pc_bonferroni(col: &[f64], r: usize) -> Result<f64> {
    check_column(col, r)?;
    Ok(bonferroni_sorted(&sorted_clamped(col), r))
}

/// `min over i = r..n of (n-r+1)/(i-r+1)·P_(i)`, capped at 1.
pub fn pc_simes(col: &[f64], r: usize) -> Result<f64> {
    check_column(col, r)?;
    Ok(simes_sorted(&sorted_clamped(col), r))
}

/// Upper tail of χ² with 2(n-r+1) degrees of freedom at `-2·Σ_{i≥r} ln P_(i)`.
pub fn pc_fisher(col: &[f64], r: usize) -> Result<f64> {
    check_column(col, r)?;
    Ok(fisher_sorted(&sorted_clamped(col), r))
}

/// Cauchy combination of `P_(r), …, P_(n)`.
pub fn pc_cauchy(col: &[f64], r: usize) -> Result<f64> {
    check_column(col, r)?;
    Ok(cauchy_sorted(&sorted_clamped(col), r))
}

/// PC p-value of `col` under `combiner`.
pub fn pc_pvalue(col: &[f64], r: usize, combiner: Combiner) -> Result<f64> {
    check_column(col, r)?;
    Ok(combiner.combine_sorted(&sorted_clamped(col), r))
}

#[inline]
pub(crate) fn bonferroni_sorted(sorted: &[f64], r: usize) -> f64 {
    let k = (sorted.len() - r + 1) as f64;
    (k * sorted[r - 1]).min(1.0)
}

#[inline]
pub(crate) fn simes_sorted(sorted: &[f64], r: usize) -> f64 {
    let k = (sorted.len() - r + 1) as f64;
    sorted[r - 1..]
        .iter()
        .enumerate()
        .map(|(t, &p)| k / (t + 1) as f64 * p)
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

pub(crate) fn fisher_sorted(sorted: &[f64], r: usize) -> f64 {
    let tail = &sorted[r - 1..];
    // Half the chi-square statistic.
    let y: f64 = -tail.iter().map(|p| p.ln()).sum::<f64>();
    chi_square_even_sf(y, tail.len())
}

/// Upper tail of χ² with `2k` degrees of freedom at `2y`:
/// `e^(-y)·Σ_{i<k} y^i/i!`, accumulated in log space.
pub(crate) fn chi_square_even_sf(y: f64, k: usize) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let ln_y = y.ln();
    let mut log_terms = Vec::with_capacity(k);
    let mut log_fact = 0.0;
    for i in 0..k {
        if i > 0 {
            log_fact += (i as f64).ln();
        }
        log_terms.push(i as f64 * ln_y - log_fact);
    }
    let top = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|t| (t - top).exp()).sum();
    (top + sum.ln() - y).exp().min(1.0)
}

/// `tan((0.5 - p)π)`, evaluated as `cot(πp)` so small `p` keep full
/// relative precision.
#[inline]
pub(crate) fn cauchy_transform(p: f64) -> f64 {
    if p <= 0.5 {
        1.0 / (PI * p).tan()
    } else {
        // 1 - p is exact for p in [0.5, 1]
        -1.0 / (PI * (1.0 - p)).tan()
    }
}

/// Standard Cauchy upper tail `pr(W ≥ t)`.
#[inline]
pub(crate) fn cauchy_sf(t: f64) -> f64 {
    if t > 0.0 {
        (1.0 / t).atan() / PI
    } else {
        0.5 + (-t).atan() / PI
    }
}

pub(crate) fn cauchy_sorted(sorted: &[f64], r: usize) -> f64 {
    let tail = &sorted[r - 1..];
    let t = tail
        .iter()
        .map(|&p| cauchy_transform(p.clamp(CAUCHY_EPS, 1.0 - CAUCHY_EPS)))
        .sum::<f64>()
        / tail.len() as f64;
    cauchy_sf(t).clamp(0.0, 1.0)
}

/// Filter statistic built from `P_(r-1)`; never exceeds the matching
/// selection statistic.
pub fn filter_stat(col: &[f64], r: usize, combiner: Combiner) -> Result<f64> {
    filter_stat_with(col, r, combiner, CauchyFilter::default())
}

pub fn filter_stat_with(
    col: &[f64],
    r: usize,
    combiner: Combiner,
    cauchy_filter: CauchyFilter,
) -> Result<f64> {
    check_column(col, r)?;
    if r < 2 {
        return Err(Error::domain("filter statistic needs r >= 2"));
    }
    filter_sorted(&sorted_clamped(col), r, combiner, cauchy_filter)
}

pub(crate) fn filter_sorted(
    sorted: &[f64],
    r: usize,
    combiner: Combiner,
    cauchy_filter: CauchyFilter,
) -> Result<f64> {
    let below = sorted[r - 2];
    match (combiner, cauchy_filter) {
        (Combiner::Bonferroni, _) => Ok(((sorted.len() - r + 1) as f64 * below).min(1.0)),
        (Combiner::Cauchy, CauchyFilter::Probability) => Ok(below),
        (Combiner::Cauchy, CauchyFilter::LiteralTan) => {
            Ok(cauchy_transform(below.clamp(CAUCHY_EPS, 1.0 - CAUCHY_EPS)))
        }
        (c, _) => Err(Error::domain(format!(
            "no filter statistic is defined for the {c} combiner"
        ))),
    }
}

/// Per-hypothesis selection statistics `S` and filter statistics `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    pub selection: Vec<f64>,
    pub filter: Vec<f64>,
    /// Set when `filter` holds literal Cauchy `tan` values that may leave
    /// the unit interval.
    pub literal_filter: bool,
}

impl FilterPair {
    /// Validates `0 ≤ F_j ≤ S_j ≤ 1` componentwise.
    pub fn new(selection: Vec<f64>, filter: Vec<f64>) -> Result<Self> {
        if selection.len() != filter.len() {
            return Err(Error::domain("selection and filter lengths differ"));
        }
        if selection.is_empty() {
            return Err(Error::domain("filter pair is empty"));
        }
        for (j, (&s, &f)) in selection.iter().zip(&filter).enumerate() {
            if !(s > 0.0 && s <= 1.0) || !(f > 0.0 && f <= s) {
                return Err(Error::domain(format!(
                    "hypothesis {j}: need 0 < F <= S <= 1, got S = {s}, F = {f}"
                )));
            }
        }
        Ok(FilterPair {
            selection,
            filter,
            literal_filter: false,
        })
    }

    pub fn len(&self) -> usize {
        self.selection.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selection.is_empty()
    }
}

/// Selection and filter statistics for every hypothesis.
pub fn build_filter_pair(pmatrix: &BasePValueMatrix, spec: &PchSpec) -> Result<FilterPair> {
    spec.validate_for_filter()?;
    if spec.n != pmatrix.n() {
        return Err(Error::domain(format!(
            "spec expects {} studies but the matrix has {}",
            spec.n,
            pmatrix.n()
        )));
    }
    let m = pmatrix.m();
    let mut selection = Vec::with_capacity(m);
    let mut filter = Vec::with_capacity(m);
    let mut buf = vec![0.0; pmatrix.n()];
    for col in pmatrix.columns() {
        buf.copy_from_slice(col);
        sort_column(&mut buf);
        selection.push(spec.combiner.combine_sorted(&buf, spec.r));
        filter.push(filter_sorted(&buf, spec.r, spec.combiner, spec.cauchy_filter)?);
    }
    Ok(FilterPair {
        selection,
        filter,
        literal_filter: spec.combiner == Combiner::Cauchy
            && spec.cauchy_filter == CauchyFilter::LiteralTan,
    })
}

/// Selection statistics only; allows `r = 1`.
pub fn selection_stats(pmatrix: &BasePValueMatrix, r: usize, combiner: Combiner) -> Result<Vec<f64>> {
    check_r(pmatrix.n(), r)?;
    let mut buf = vec![0.0; pmatrix.n()];
    Ok(pmatrix
        .columns()
        .map(|col| {
            buf.copy_from_slice(col);
            sort_column(&mut buf);
            combiner.combine_sorted(&buf, r)
        })
        .collect())
}
