//! Pathway over-representation: odds ratio, Fisher exact p and the
//! combined score `z·ln(p)`.
//!
//! The gene universe is every gene named in the membership table or the
//! input list, optionally padded to a larger background size with genes
//! that belong to no pathway.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

pub const DEFAULT_PERMUTATIONS: usize = 1000;

/// 2×2 table for one pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnrichmentTable {
    /// Universe size.
    pub n1: u64,
    /// Input list size.
    pub n2: u64,
    /// Pathway size.
    pub big_k: u64,
    /// Overlap.
    pub k: u64,
}

impl EnrichmentTable {
    pub fn new(n1: u64, n2: u64, big_k: u64, k: u64) -> Result<Self> {
        if n2 > n1 || big_k > n1 || k > n2.min(big_k) || n2 + big_k > n1 + k {
            return Err(Error::domain(format!(
                "invalid table N1={n1} N2={n2} K={big_k} k={k}"
            )));
        }
        Ok(EnrichmentTable { n1, n2, big_k, k })
    }

    /// The cell `N1 - K - N2 + k`.
    fn outside(&self) -> u64 {
        self.n1 + self.k - self.big_k - self.n2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OddsRatio {
    Finite(f64),
    Infinite,
    /// 0/0: both a numerator and a denominator factor vanish.
    Degenerate,
}

impl OddsRatio {
    pub fn value(&self) -> Option<f64> {
        match *self {
            OddsRatio::Finite(v) => Some(v),
            OddsRatio::Infinite => Some(f64::INFINITY),
            OddsRatio::Degenerate => None,
        }
    }

    /// `self / other`, when both are finite and `other > 0`.
    pub fn ratio(&self, other: &OddsRatio) -> Option<f64> {
        match (*self, *other) {
            (OddsRatio::Finite(a), OddsRatio::Finite(b)) if b > 0.0 => Some(a / b),
            _ => None,
        }
    }
}

impl fmt::Display for OddsRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OddsRatio::Finite(v) => write!(f, "{v}"),
            OddsRatio::Infinite => f.write_str("inf"),
            OddsRatio::Degenerate => f.write_str("degenerate"),
        }
    }
}

pub fn odds_ratio(t: &EnrichmentTable) -> OddsRatio {
    let num = t.k as f64 * t.outside() as f64;
    let den = (t.n2 - t.k) as f64 * (t.big_k - t.k) as f64;
    match (num == 0.0, den == 0.0) {
        (true, true) => OddsRatio::Degenerate,
        (false, true) => OddsRatio::Infinite,
        _ => OddsRatio::Finite(num / den),
    }
}

/// Hypergeometric upper tail `pr(X ≥ k)`.
///
/// The first term comes from log binomials; later terms follow from the
/// term ratio, so no large factorials are ever formed.
pub fn fisher_exact_p(t: &EnrichmentTable) -> f64 {
    let hi = t.n2.min(t.big_k);
    let lo = (t.n2 + t.big_k).saturating_sub(t.n1);
    if t.k <= lo {
        return 1.0;
    }
    let log_first = ln_binomial(t.big_k, t.k) + ln_binomial(t.n1 - t.big_k, t.n2 - t.k)
        - ln_binomial(t.n1, t.n2);
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in t.k..hi {
        term *= ((t.big_k - i) * (t.n2 - i)) as f64
            / ((i + 1) * (t.n1 + i + 1 - t.big_k - t.n2)) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    (log_first + sum.ln()).exp().min(1.0)
}

/// `z·ln(p)`, or its absolute value in magnitude mode.
pub fn combined_score(z: f64, p: f64, magnitude: bool) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("combined score needs p in (0, 1], got {p}")));
    }
    let s = z * p.ln();
    // p = 1 gives -0.0 for positive z
    let s = if s == 0.0 { 0.0 } else { s };
    Ok(if magnitude { s.abs() } else { s })
}

/// Gene-to-pathway membership with genes interned in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Membership {
    genes: Vec<String>,
    pathways: BTreeMap<String, Vec<u32>>,
}

impl Membership {
    pub fn from_pairs<I, G, P>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (G, P)>,
        G: Into<String>,
        P: Into<String>,
    {
        let mut raw: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (g, p) in pairs {
            raw.entry(p.into()).or_default().insert(g.into());
        }
        let genes: BTreeSet<&String> = raw.values().flatten().collect();
        let genes: Vec<String> = genes.into_iter().cloned().collect();
        let idx: HashMap<&str, u32> =
            genes.iter().enumerate().map(|(i, g)| (g.as_str(), i as u32)).collect();
        let pathways = raw
            .iter()
            .map(|(p, gs)| (p.clone(), gs.iter().map(|g| idx[g.as_str()]).collect()))
            .collect();
        Membership { genes, pathways }
    }

    pub fn gene_count(&self) -> usize {
        self.genes.len()
    }

    pub fn pathway_count(&self) -> usize {
        self.pathways.len()
    }

    pub fn pathways(&self) -> impl Iterator<Item = &str> {
        self.pathways.keys().map(String::as_str)
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    let sep = if line.contains('\t') { '\t' } else { ',' };
    line.split(sep).map(str::trim).collect()
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Two columns `gene_id, pathway_id`, tab- or comma-separated. A header
/// line naming those columns is optional; `#` lines are comments.
pub fn parse_membership(text: &str, path: &Path) -> Result<Membership> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let f = split_fields(line);
        if f.len() != 2 || f[0].is_empty() || f[1].is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected `gene_id, pathway_id`, got {} field(s)", f.len()),
            });
        }
        if pairs.is_empty() && f[0] == "gene_id" && f[1] == "pathway_id" {
            continue;
        }
        pairs.push((f[0].to_string(), f[1].to_string()));
    }
    if pairs.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "no membership rows".into(),
        });
    }
    Ok(Membership::from_pairs(pairs))
}

/// One gene per line (first field if the line has several); duplicates
/// collapse. Blank and `#` lines are skipped.
pub fn parse_gene_list(text: &str, path: &Path) -> Result<Vec<String>> {
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let g = split_fields(line)[0];
        if g.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "empty gene id".into(),
            });
        }
        if !(seen.is_empty() && g == "gene_id") {
            seen.insert(g.to_string());
        }
    }
    Ok(seen.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrichOptions {
    /// Random lists used for the rank z-score; 0 sets `z = 0`.
    pub permutations: usize,
    /// Universe size; at least the number of named genes.
    pub background: Option<usize>,
    pub magnitude: bool,
    pub seed: u64,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        EnrichOptions {
            permutations: DEFAULT_PERMUTATIONS,
            background: None,
            magnitude: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentRow {
    pub pathway: String,
    pub table: EnrichmentTable,
    pub odds_ratio: OddsRatio,
    pub p: f64,
    pub z: f64,
    pub combined_score: f64,
}

/// Average ranks (1 = smallest) with ties sharing the mean rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

struct Universe<'a> {
    membership: &'a Membership,
    gene_pathways: Vec<Vec<u32>>,
    sizes: Vec<u64>,
    n1: u64,
}

impl<'a> Universe<'a> {
    fn p_values(&self, list: impl Iterator<Item = usize>, n2: u64) -> Vec<(u64, f64)> {
        let mut k = vec![0u64; self.sizes.len()];
        for g in list {
            if let Some(ps) = self.gene_pathways.get(g) {
                for &p in ps {
                    k[p as usize] += 1;
                }
            }
        }
        k.iter()
            .zip(&self.sizes)
            .map(|(&k, &big_k)| {
                let t = EnrichmentTable { n1: self.n1, n2, big_k, k };
                (k, fisher_exact_p(&t))
            })
            .collect()
    }
}

/// Score every pathway against `genes`. Rows follow pathway id order.
pub fn enrich(membership: &Membership, genes: &[String], opts: &EnrichOptions) -> Result<Vec<EnrichmentRow>> {
    let named: BTreeSet<&str> = membership
        .genes
        .iter()
        .map(String::as_str)
        .chain(genes.iter().map(String::as_str))
        .collect();
    let n1 = match opts.background {
        Some(b) if b < named.len() => {
            return Err(Error::domain(format!(
                "background size {b} is smaller than the {} named genes",
                named.len()
            )))
        }
        Some(b) => b,
        None => named.len(),
    };
    let idx: HashMap<&str, usize> =
        membership.genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut gene_pathways = vec![Vec::new(); membership.genes.len()];
    for (pi, gs) in membership.pathways.values().enumerate() {
        for &g in gs {
            gene_pathways[g as usize].push(pi as u32);
        }
    }
    let uni = Universe {
        membership,
        gene_pathways,
        sizes: membership.pathways.values().map(|g| g.len() as u64).collect(),
        n1: n1 as u64,
    };
    let list: BTreeSet<&str> = genes.iter().map(String::as_str).collect();
    let n2 = list.len() as u64;
    // genes outside every pathway only count towards N2
    let observed = uni.p_values(list.iter().filter_map(|g| idx.get(g).copied()), n2);
    let obs_p: Vec<f64> = observed.iter().map(|o| o.1).collect();
    let obs_rank = average_ranks(&obs_p);

    let np = uni.sizes.len();
    let z = if opts.permutations == 0 || n2 == 0 {
        vec![0.0; np]
    } else {
        let perm_ranks: Vec<Vec<f64>> = (0..opts.permutations)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(b as u64);
                let draw = index::sample(&mut rng, n1, n2 as usize);
                let p: Vec<f64> = uni.p_values(draw.into_iter(), n2).iter().map(|o| o.1).collect();
                average_ranks(&p)
            })
            .collect();
        let nb = opts.permutations as f64;
        (0..np)
            .map(|j| {
                let mean = perm_ranks.iter().map(|r| r[j]).sum::<f64>() / nb;
                let var = perm_ranks.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / nb;
                if var > 0.0 {
                    (obs_rank[j] - mean) / var.sqrt()
                } else {
                    0.0
                }
            })
            .collect()
    };

    uni.membership
        .pathways
        .keys()
        .enumerate()
        .map(|(j, name)| {
            let (k, p) = observed[j];
            let table = EnrichmentTable { n1: uni.n1, n2, big_k: uni.sizes[j], k };
            Ok(EnrichmentRow {
                pathway: name.clone(),
                table,
                odds_ratio: odds_ratio(&table),
                p,
                z: z[j],
                combined_score: combined_score(z[j], p, opts.magnitude)?,
            })
        })
        .collect()
}

pub const ENRICH_HEADER: [&str; 6] = ["pathway", "k", "K", "OR", "p", "combined_score"];

pub fn write_enrichment_csv<W: Write>(out: W, rows: &[EnrichmentRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ENRICH_HEADER)?;
    for r in rows {
        w.write_record([
            r.pathway.clone(),
            r.table.k.to_string(),
            r.table.big_k.to_string(),
            r.odds_ratio.to_string(),
            r.p.to_string(),
            r.combined_score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
