//! Study tables in, analysis reports out.
//!
//! A study file is a delimited table with at least the columns `id` and
//! `pvalue`; `chromosome` and `bp` are carried through when present. The
//! study id is the file stem. [`ingest`] keeps only hypotheses present in
//! every study, in sorted id order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::calibrate::{KappaChoice, KappaGrid};
use crate::combine::{self, BasePValueMatrix, CauchyFilter, Combiner, Metric, PchSpec};
use crate::error::{Error, Result};
use crate::select::{self, ProcedureKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Csv,
}

impl Format {
    /// `.csv` is comma-separated; anything else is tab-separated.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Tsv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            Format::Tsv => b'\t',
            Format::Csv => b',',
        }
    }
}

/// Genome position passed through untouched.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Locus {
    pub chromosome: String,
    pub bp: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub study_id: String,
    pub ids: Vec<String>,
    pub pvalues: Vec<f64>,
    pub loci: Option<Vec<Locus>>,
    /// Rows whose p-value was exactly 0.
    pub zero_count: usize,
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        msg: msg.into(),
    }
}

/// Parse one study table from `text`; `path` names it in errors and
/// supplies the study id.
pub fn parse_study(text: &str, path: &Path, format: Format) -> Result<StudyTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (id_col, p_col) = match (col("id"), col("pvalue")) {
        (Some(i), Some(p)) => (i, p),
        _ => return Err(parse_err(path, 1, "header must contain `id` and `pvalue` columns")),
    };
    let locus_cols = col("chromosome").zip(col("bp"));
    let mut ids = Vec::new();
    let mut pvalues = Vec::new();
    let mut loci = locus_cols.map(|_| Vec::new());
    let mut seen = HashSet::new();
    let mut zero_count = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| parse_err(path, line, format!("row has {} field(s)", rec.len())))
        };
        let id = field(id_col)?;
        if id.is_empty() {
            return Err(parse_err(path, line, "empty id"));
        }
        let raw = field(p_col)?;
        let p: f64 = raw
            .parse()
            .map_err(|_| parse_err(path, line, format!("cannot parse p-value `{raw}`")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_err(path, line, format!("p-value {raw} is outside [0, 1]")));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: id.to_string(),
            });
        }
        if p == 0.0 {
            zero_count += 1;
        }
        if let (Some(l), Some((c, b))) = (loci.as_mut(), locus_cols) {
            l.push(Locus {
                chromosome: field(c)?.to_string(),
                bp: field(b)?.to_string(),
            });
        }
        ids.push(id.to_string());
        pvalues.push(p);
    }
    let study_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("study")
        .to_string();
    Ok(StudyTable {
        study_id,
        ids,
        pvalues,
        loci,
        zero_count,
    })
}

pub fn read_study(path: &Path) -> Result<StudyTable> {
    let text = std::fs::read_to_string(path)?;
    parse_study(&text, path, Format::from_path(path))
}

/// Aligned studies.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub matrix: BasePValueMatrix,
    /// Distinct ids missing from at least one study.
    pub dropped: usize,
    /// Zero p-values raised to the clamping floor.
    pub clamped: usize,
    /// Loci from the first study that carries them.
    pub loci: Option<Vec<Locus>>,
}

/// Inner-join already parsed studies.
pub fn align(studies: &[StudyTable]) -> Result<Ingested> {
    if studies.len() < 2 {
        return Err(Error::domain(format!("need at least 2 study files, got {}", studies.len())));
    }
    let lookups: Vec<BTreeMap<&str, usize>> = studies
        .iter()
        .map(|s| s.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect())
        .collect();
    let union: BTreeSet<&str> = lookups.iter().flat_map(|l| l.keys().copied()).collect();
    let shared: Vec<&str> = lookups[0]
        .keys()
        .copied()
        .filter(|id| lookups[1..].iter().all(|l| l.contains_key(id)))
        .collect();
    if shared.is_empty() {
        return Err(Error::EmptyIntersection(studies.len()));
    }
    let n = studies.len();
    let mut values = Vec::with_capacity(n * shared.len());
    for id in &shared {
        for (s, l) in studies.iter().zip(&lookups) {
            values.push(s.pvalues[l[id]]);
        }
    }
    let loci = studies
        .iter()
        .zip(&lookups)
        .find_map(|(s, l)| {
            s.loci
                .as_ref()
                .map(|loci| shared.iter().map(|id| loci[l[id]].clone()).collect())
        });
    let matrix = BasePValueMatrix::from_column_major(
        n,
        shared.len(),
        values,
        studies.iter().map(|s| s.study_id.clone()).collect(),
        shared.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok(Ingested {
        dropped: union.len() - shared.len(),
        clamped: matrix.clamped_count(),
        matrix,
        loci,
    })
}

/// Read and align study files; files are parsed in parallel.
pub fn ingest<P: AsRef<Path> + Sync>(paths: &[P]) -> Result<Ingested> {
    let studies = paths
        .par_iter()
        .map(|p| read_study(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    align(&studies)
}

/// Write one study as `id\tpvalue`. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_study<W: Write>(out: W, ids: &[String], pvalues: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(["id", "pvalue"])?;
    for (id, p) in ids.iter().zip(pvalues) {
        w.write_record([id.as_str(), &p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Write every study of `pm` to `dir/<study_id>.tsv`, returning the paths.
pub fn write_matrix(dir: &Path, pm: &BasePValueMatrix) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    (0..pm.n())
        .map(|i| {
            let path = dir.join(format!("{}.tsv", pm.study_ids()[i]));
            let p: Vec<f64> = (0..pm.m()).map(|j| pm.get(i, j)).collect();
            write_study(std::fs::File::create(&path)?, pm.hypothesis_ids(), &p)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportHeader {
    pub procedure: ProcedureKind,
    pub r: usize,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub metric: Metric,
    pub combiner: Combiner,
    pub cauchy_filter: CauchyFilter,
    pub kappa_requested: KappaChoice,
    /// κ actually applied, if the procedure is calibrated.
    pub kappa: Option<f64>,
    pub gamma_e: f64,
    pub dropped_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRecord {
    pub hypothesis_id: String,
    /// Selection statistic: the PC p-value, or the PC e-value for e-PCH.
    pub s: f64,
    /// Filter statistic, for the filtering procedures.
    pub f: Option<f64>,
    /// Adjusted e-value (e-Filter, e-PCH) or adjusted p-value.
    pub adjusted: f64,
    pub rejected: bool,
    pub locus: Option<Locus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub header: ReportHeader,
    pub records: Vec<ReportRecord>,
}

impl AnalysisReport {
    pub fn rejected_ids(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.rejected)
            .map(|r| r.hypothesis_id.as_str())
            .collect()
    }

    pub fn rejection_count(&self) -> usize {
        self.records.iter().filter(|r| r.rejected).count()
    }

    /// Attach loci from ingestion; lengths must match.
    pub fn with_loci(mut self, loci: Option<Vec<Locus>>) -> Result<Self> {
        if let Some(loci) = loci {
            if loci.len() != self.records.len() {
                return Err(Error::domain("locus count does not match the report"));
            }
            for (r, l) in self.records.iter_mut().zip(loci) {
                r.locus = Some(l);
            }
        }
        Ok(self)
    }
}

/// Run one procedure and collect a per-hypothesis report.
pub fn analyze(
    pm: &BasePValueMatrix,
    spec: &PchSpec,
    procedure: ProcedureKind,
    kappa: KappaChoice,
    grid: &KappaGrid,
) -> Result<AnalysisReport> {
    spec.validate()?;
    if spec.n != pm.n() {
        return Err(Error::domain(format!(
            "spec expects {} studies but the matrix has {}",
            spec.n,
            pm.n()
        )));
    }
    let res = select::run_tuned(pm, spec, procedure, kappa, grid)?;
    let (s, f): (Vec<f64>, Option<Vec<f64>>) = match procedure {
        ProcedureKind::BhPc => (combine::selection_stats(pm, spec.r, spec.combiner)?, None),
        ProcedureKind::EPch => {
            let k = res.kappa_used.expect("e-PCH reports its kappa");
            (select::epch_evalues(pm, spec.r, k)?, None)
        }
        ProcedureKind::AdaFilter => {
            let bonf = PchSpec { combiner: Combiner::Bonferroni, ..*spec };
            let fp = combine::build_filter_pair(pm, &bonf)?;
            (fp.selection, Some(fp.filter))
        }
        ProcedureKind::EFilter => {
            let fp = combine::build_filter_pair(pm, spec)?;
            (fp.selection, Some(fp.filter))
        }
    };
    let records = pm
        .hypothesis_ids()
        .iter()
        .enumerate()
        .map(|(j, id)| ReportRecord {
            hypothesis_id: id.clone(),
            s: s[j],
            f: f.as_ref().map(|f| f[j]),
            adjusted: res.adjusted[j],
            rejected: res.is_rejected(j),
            locus: None,
        })
        .collect();
    Ok(AnalysisReport {
        header: ReportHeader {
            procedure,
            r: spec.r,
            n: pm.n(),
            m: pm.m(),
            alpha: spec.alpha,
            metric: spec.metric,
            combiner: if procedure == ProcedureKind::AdaFilter {
                Combiner::Bonferroni
            } else {
                spec.combiner
            },
            cauchy_filter: spec.cauchy_filter,
            kappa_requested: kappa,
            kappa: res.kappa_used,
            gamma_e: res.gamma_e,
            dropped_count: 0,
        },
        records,
    })
}

const RECORD_HEADER: [&str; 5] = ["hypothesis_id", "S", "F", "adjusted", "rejected"];

fn cauchy_filter_str(c: CauchyFilter) -> &'static str {
    match c {
        CauchyFilter::Probability => "probability",
        CauchyFilter::LiteralTan => "literal-tan",
    }
}

impl fmt::Display for ReportHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# procedure={}", self.procedure)?;
        writeln!(f, "# r={}", self.r)?;
        writeln!(f, "# n={}", self.n)?;
        writeln!(f, "# m={}", self.m)?;
        writeln!(f, "# alpha={}", self.alpha)?;
        writeln!(f, "# metric={}", self.metric)?;
        writeln!(f, "# combiner={}", self.combiner)?;
        writeln!(f, "# cauchy_filter={}", cauchy_filter_str(self.cauchy_filter))?;
        writeln!(f, "# kappa_requested={}", self.kappa_requested)?;
        match self.kappa {
            Some(k) => writeln!(f, "# kappa={k}")?,
            None => writeln!(f, "# kappa=")?,
        }
        writeln!(f, "# gamma_e={}", self.gamma_e)?;
        writeln!(f, "# dropped_count={}", self.dropped_count)
    }
}

/// CSV preceded by `# key=value` header lines. Floats are written in
/// shortest round-trip form, so reading the file back is exact.
pub fn write_report<W: Write>(mut out: W, report: &AnalysisReport) -> Result<()> {
    write!(out, "{}", report.header)?;
    let with_loci = report.records.iter().any(|r| r.locus.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<&str> = RECORD_HEADER.to_vec();
    if with_loci {
        head.extend(["chromosome", "bp"]);
    }
    w.write_record(&head)?;
    for r in &report.records {
        let mut row = vec![
            r.hypothesis_id.clone(),
            r.s.to_string(),
            r.f.map_or(String::new(), |f| f.to_string()),
            r.adjusted.to_string(),
            u8::from(r.rejected).to_string(),
        ];
        if with_loci {
            let l = r.locus.clone().unwrap_or_default();
            row.extend([l.chromosome, l.bp]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: FromStr>(path: &Path, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| parse_err(path, line as u64, format!("bad value `{v}` for `{key}`")))
}

fn parse_header(lines: &[(usize, &str)], path: &Path) -> Result<ReportHeader> {
    let mut kv = BTreeMap::new();
    for &(line, text) in lines {
        let body = text.trim_start_matches('#').trim();
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| parse_err(path, line as u64, "expected `# key=value`"))?;
        kv.insert(k.trim(), (line, v.trim()));
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| parse_err(path, 0, format!("missing header key `{k}`")))
    };
    macro_rules! field {
        ($k:literal) => {{
            let (line, v) = get($k)?;
            parse_field(path, line, $k, v)?
        }};
    }
    let (cl, cf) = get("cauchy_filter")?;
    let cauchy_filter = match cf {
        "probability" => CauchyFilter::Probability,
        "literal-tan" => CauchyFilter::LiteralTan,
        _ => return Err(parse_err(path, cl as u64, format!("bad cauchy_filter `{cf}`"))),
    };
    let (kl, kv_) = get("kappa")?;
    let kappa = if kv_.is_empty() {
        None
    } else {
        Some(parse_field(path, kl, "kappa", kv_)?)
    };
    Ok(ReportHeader {
        procedure: field!("procedure"),
        r: field!("r"),
        n: field!("n"),
        m: field!("m"),
        alpha: field!("alpha"),
        metric: field!("metric"),
        combiner: field!("combiner"),
        cauchy_filter,
        kappa_requested: field!("kappa_requested"),
        kappa,
        gamma_e: field!("gamma_e"),
        dropped_count: field!("dropped_count"),
    })
}

/// Inverse of [`write_report`].
pub fn parse_report(text: &str, path: &Path) -> Result<AnalysisReport> {
    let mut header_lines = Vec::new();
    let mut body_start = text.len();
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if line.starts_with('#') {
            header_lines.push((i + 1, line.trim_end()));
            offset += line.len();
        } else {
            body_start = offset;
            break;
        }
    }
    let header = parse_header(&header_lines, path)?;
    let first_line = header_lines.len() as u64;
    let mut rdr = csv::ReaderBuilder::new().from_reader(&text.as_bytes()[body_start..]);
    let cols = rdr
        .headers()
        .map_err(|e| parse_err(path, first_line + 1, e.to_string()))?
        .clone();
    let with_loci = match cols.len() {
        5 => false,
        7 => true,
        k => return Err(parse_err(path, first_line + 1, format!("expected 5 or 7 columns, got {k}"))),
    };
    if cols.iter().take(5).ne(RECORD_HEADER) {
        return Err(parse_err(path, first_line + 1, "unexpected column names"));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line()) + first_line;
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize) + first_line as usize;
        let f = if rec[2].is_empty() {
            None
        } else {
            Some(parse_field(path, line, "F", &rec[2])?)
        };
        let rejected = match &rec[4] {
            "0" => false,
            "1" => true,
            v => return Err(parse_err(path, line as u64, format!("bad rejected flag `{v}`"))),
        };
        records.push(ReportRecord {
            hypothesis_id: rec[0].to_string(),
            s: parse_field(path, line, "S", &rec[1])?,
            f,
            adjusted: parse_field(path, line, "adjusted", &rec[3])?,
            rejected,
            locus: with_loci.then(|| Locus {
                chromosome: rec[5].to_string(),
                bp: rec[6].to_string(),
            }),
        });
    }
    if records.len() != header.m {
        return Err(parse_err(
            path,
            0,
            format!("header says m = {} but found {} records", header.m, records.len()),
        ));
    }
    Ok(AnalysisReport { header, records })
}

pub fn read_report(path: &Path) -> Result<AnalysisReport> {
    parse_report(&std::fs::read_to_string(path)?, path)
}
