//! `efilter` command-line tool.
//!
//! Every subcommand writes its outputs into the `--out` directory together
//! with `manifest.json`, which records the inputs, seed, version and all
//! parameters needed to repeat the run. Exit status: 0 on success, 1 for
//! invalid arguments or inputs, 2 for runtime failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use efilter::calibrate::{scan_kappa_for, KappaGrid};
use efilter::combine::{CauchyFilter, Combiner, Metric, PchSpec};
use efilter::diagnose::{self, DiagnosticFilter, DEFAULT_MC_SAMPLES};
use efilter::enrich::{self, EnrichOptions, DEFAULT_PERMUTATIONS};
use efilter::simulate::{self, SimulationPlan};
use efilter::{io, Error, KappaChoice, ProcedureKind};
use serde_json::{json, Value};

const THREADS_ENV: &str = "EFILTER_THREADS";

#[derive(Parser, Debug)]
#[command(name = "efilter", version, about = "Partial-conjunction testing with e-Filter and e-PCH")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test replicability across study files.
    Analyze(AnalyzeArgs),
    /// Run a simulation plan.
    Simulate(SimulateArgs),
    /// Report rejection counts over the κ grid.
    TuneKappa(TuneArgs),
    /// Estimate κ* under equicorrelated normal nulls.
    DiagnoseKappaStar(DiagnoseArgs),
    /// Score pathway over-representation of a gene list.
    Enrich(EnrichArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Random seed; defaults to 1, or to the plan's seed for `simulate`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }
}

/// Missing inputs are the caller's mistake, not a runtime failure.
fn check_inputs(paths: &[&Path]) -> CliResult<()> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(Failure::Usage(format!("cannot read input file {}", p.display()))),
        None => Ok(()),
    }
}

fn check_studies(paths: &[PathBuf]) -> CliResult<()> {
    check_inputs(&paths.iter().map(PathBuf::as_path).collect::<Vec<_>>())
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Study files with `id` and `pvalue` columns (two or more).
    #[arg(required = true, num_args = 2..)]
    studies: Vec<PathBuf>,
    /// Replicability level: a hit must be non-null in at least `r` studies.
    #[arg(long)]
    r: usize,
    /// Target level for the chosen metric.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// fdr, pfer or fwer.
    #[arg(long, default_value = "fdr")]
    metric: Metric,
    /// bonferroni, simes, fisher or cauchy. e-Filter and AdaFilter need
    /// bonferroni or cauchy.
    #[arg(long, default_value = "bonferroni")]
    combiner: Combiner,
    #[arg(long, value_enum, default_value_t = CauchyFilterArg::Probability)]
    cauchy_filter: CauchyFilterArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CauchyFilterArg {
    Probability,
    LiteralTan,
}

impl From<CauchyFilterArg> for CauchyFilter {
    fn from(c: CauchyFilterArg) -> Self {
        match c {
            CauchyFilterArg::Probability => CauchyFilter::Probability,
            CauchyFilterArg::LiteralTan => CauchyFilter::LiteralTan,
        }
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// efilter, adafilter, bh-pc or epch.
    #[arg(long, default_value = "efilter")]
    procedure: ProcedureKind,
    /// A value in (0, 1) or `auto`.
    #[arg(long, default_value = "auto")]
    kappa: KappaChoice,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML simulation plan.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the number of repetitions in the plan.
    #[arg(long)]
    reps: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// efilter, adafilter, bh-pc or epch.
    #[arg(long, default_value = "efilter")]
    procedure: ProcedureKind,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FilterArg {
    Min,
    Bonferroni,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Signal means, one per study.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,0,0,0")]
    mu: Vec<f64>,
    /// Correlations to evaluate; defaults to -0.3, -0.2, …, 0.9.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho_grid: Vec<f64>,
    /// Monte-Carlo samples per correlation.
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc: usize,
    #[arg(long, value_enum, default_value_t = FilterArg::Min)]
    filter: FilterArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EnrichArgs {
    /// Two-column file of `gene_id, pathway_id` pairs.
    #[arg(long)]
    membership: PathBuf,
    /// One gene id per line.
    #[arg(long)]
    genes: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Universe size, if larger than the set of named genes.
    #[arg(long)]
    background: Option<usize>,
    /// Report |z·ln p| instead of z·ln p.
    #[arg(long)]
    magnitude: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_manifest(dir: &Path, command: &str, inputs: Value, seed: u64, params: Value, outputs: &[&str]) -> CliResult<()> {
    let manifest = json!({
        "tool": "efilter",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "inputs": inputs,
        "seed": seed,
        "parameters": params,
        "outputs": outputs,
    });
    let mut w = create(dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Failure::Lib(std::io::Error::from(e).into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn paths_json(paths: &[PathBuf]) -> Value {
    Value::from(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())
}

fn build_spec(s: &StudyArgs, n: usize) -> CliResult<PchSpec> {
    let mut spec = PchSpec::new(n, s.r, s.alpha, s.metric, s.combiner)?;
    spec.cauchy_filter = s.cauchy_filter.into();
    Ok(spec)
}

fn study_params(s: &StudyArgs) -> Value {
    json!({
        "r": s.r,
        "alpha": s.alpha,
        "metric": s.metric.as_str(),
        "combiner": s.combiner.as_str(),
        "cauchy_filter": s.cauchy_filter.to_possible_value().map(|v| v.get_name().to_string()),
    })
}

fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    check_studies(&a.study.studies)?;
    let ing = io::ingest(&a.study.studies)?;
    let spec = build_spec(&a.study, ing.matrix.n())?;
    let mut report = io::analyze(&ing.matrix, &spec, a.procedure, a.kappa, &KappaGrid::default())?
        .with_loci(ing.loci)?;
    report.header.dropped_count = ing.dropped;
    std::fs::create_dir_all(&a.common.out)?;
    let mut w = create(&a.common.out, "report.csv")?;
    io::write_report(&mut w, &report)?;
    w.flush()?;
    let mut params = study_params(&a.study);
    params["procedure"] = a.procedure.as_str().into();
    params["kappa"] = a.kappa.to_string().into();
    write_manifest(&a.common.out, "analyze", paths_json(&a.study.studies), a.common.seed(), params, &["report.csv"])?;
    eprintln!(
        "m = {} (dropped {}, clamped {}), rejected {}",
        report.header.m,
        ing.dropped,
        ing.clamped,
        report.rejection_count()
    );
    Ok(())
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    check_inputs(&[&a.config])?;
    let text = std::fs::read_to_string(&a.config)?;
    let mut plan = SimulationPlan::from_toml(&text)?;
    if let Some(seed) = a.common.seed {
        plan.seed = Some(seed);
    }
    let seed = plan.settings()?[0].seed;
    if let Some(r) = a.reps {
        plan.reps = Some(r);
    }
    plan.settings()?;
    let results = simulate::run_plan(&plan)?;
    std::fs::create_dir_all(&a.common.out)?;
    let mut w = create(&a.common.out, "summary.csv")?;
    simulate::write_summary_csv(&mut w, &simulate::summarize(&results))?;
    w.flush()?;
    let mut w = create(&a.common.out, "reps.csv")?;
    simulate::write_reps_csv(&mut w, &results)?;
    w.flush()?;
    let params = json!({ "plan": plan.to_toml() });
    write_manifest(&a.common.out, "simulate", paths_json(std::slice::from_ref(&a.config)), seed, params, &["summary.csv", "reps.csv"])
}

fn tune_kappa(a: &TuneArgs) -> CliResult<()> {
    check_studies(&a.study.studies)?;
    let ing = io::ingest(&a.study.studies)?;
    let spec = build_spec(&a.study, ing.matrix.n())?;
    let grid = KappaGrid::default();
    let scan = scan_kappa_for(&ing.matrix, &spec, &grid, a.procedure)?;
    std::fs::create_dir_all(&a.common.out)?;
    let mut w = create(&a.common.out, "kappa_scan.csv")?;
    writeln!(w, "kappa,rejections,selected")?;
    for (k, c) in scan.grid.iter().zip(&scan.rejections) {
        writeln!(w, "{k},{c},{}", u8::from(*k == scan.selected))?;
    }
    w.flush()?;
    let mut params = study_params(&a.study);
    params["procedure"] = a.procedure.as_str().into();
    write_manifest(&a.common.out, "tune-kappa", paths_json(&a.study.studies), a.common.seed(), params, &["kappa_scan.csv"])?;
    eprintln!("selected kappa = {}", scan.selected);
    Ok(())
}

fn diagnose_kappa_star(a: &DiagnoseArgs) -> CliResult<()> {
    let rhos = if a.rho_grid.is_empty() {
        (-3..=9).map(|i| i as f64 / 10.0).collect()
    } else {
        a.rho_grid.clone()
    };
    let filter = match a.filter {
        FilterArg::Min => DiagnosticFilter::Minimum,
        FilterArg::Bonferroni => DiagnosticFilter::Bonferroni,
    };
    let rows = diagnose::diagnose_grid(&a.mu, &rhos, filter, a.mc, a.common.seed())?;
    std::fs::create_dir_all(&a.common.out)?;
    let mut w = create(&a.common.out, "kappa_star.csv")?;
    diagnose::write_diagnostics_csv(&mut w, &rows)?;
    w.flush()?;
    for d in rows.iter().filter(|d| d.d1_below_one()) {
        eprintln!("warning: d1 = {} < 1 at rho = {}", d.d1, d.rho);
    }
    let params = json!({
        "mu": a.mu,
        "rho_grid": rhos,
        "mc": a.mc,
        "filter": a.filter.to_possible_value().map(|v| v.get_name().to_string()),
    });
    write_manifest(&a.common.out, "diagnose-kappa-star", Value::Array(vec![]), a.common.seed(), params, &["kappa_star.csv"])
}

fn enrich_cmd(a: &EnrichArgs) -> CliResult<()> {
    check_inputs(&[&a.membership, &a.genes])?;
    let membership = enrich::parse_membership(&std::fs::read_to_string(&a.membership)?, &a.membership)?;
    let genes = enrich::parse_gene_list(&std::fs::read_to_string(&a.genes)?, &a.genes)?;
    let opts = EnrichOptions {
        permutations: a.permutations,
        background: a.background,
        magnitude: a.magnitude,
        seed: a.common.seed(),
    };
    let rows = enrich::enrich(&membership, &genes, &opts)?;
    std::fs::create_dir_all(&a.common.out)?;
    let mut w = create(&a.common.out, "enrichment.csv")?;
    enrich::write_enrichment_csv(&mut w, &rows)?;
    w.flush()?;
    let params = json!({
        "permutations": a.permutations,
        "background": a.background,
        "magnitude": a.magnitude,
    });
    let inputs = paths_json(&[a.membership.clone(), a.genes.clone()]);
    write_manifest(&a.common.out, "enrich", inputs, a.common.seed(), params, &["enrichment.csv"])
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("{THREADS_ENV}: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::TuneKappa(a) => tune_kappa(a),
        Command::DiagnoseKappaStar(a) => diagnose_kappa_star(a),
        Command::Enrich(a) => enrich_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
