//! Partial-conjunction testing across replicated studies with the e-Filter
//! and e-PCH procedures, plus the AdaFilter and BH baselines.
//!
//! A [`BasePValueMatrix`] holds one p-value per (study, hypothesis).
//! [`select::run_procedure`] turns it into a [`RejectionResult`];
//! [`io::analyze`] wraps that into a per-hypothesis report.
//!
//! ```
//! use efilter::{analyze, BasePValueMatrix, Combiner, KappaChoice, KappaGrid, Metric, PchSpec, ProcedureKind};
//!
//! // three studies (rows), four SNPs (columns)
//! let rows = vec![
//!     vec![1e-8, 0.40, 0.003, 0.9],
//!     vec![2e-7, 0.01, 0.500, 0.7],
//!     vec![5e-9, 0.60, 0.002, 0.2],
//! ];
//! let studies = vec!["a".into(), "b".into(), "c".into()];
//! let snps = vec!["rs1".into(), "rs2".into(), "rs3".into(), "rs4".into()];
//! let pm = BasePValueMatrix::from_rows(&rows, studies, snps)?;
//!
//! let spec = PchSpec::new(3, 2, 0.05, Metric::Fdr, Combiner::Bonferroni)?;
//! let report = analyze(&pm, &spec, ProcedureKind::EFilter, KappaChoice::Auto, &KappaGrid::default())?;
//! assert_eq!(report.rejected_ids(), ["rs1"]);
//! # Ok::<(), efilter::Error>(())
//! ```

// `!(x >= lo)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod combine;
pub mod diagnose;
pub mod enrich;
pub mod error;
pub mod io;
pub mod select;
pub mod simulate;

pub use calibrate::{phi, phi_inverse, tune_kappa, Calibrator, KappaChoice, KappaGrid};
pub use combine::{BasePValueMatrix, CauchyFilter, Combiner, FilterPair, Metric, PchSpec};
pub use error::{Error, Result};
pub use select::{ProcedureKind, RejectionResult};
pub use diagnose::{diagnose, diagnose_grid, estimate_cdfs, fit_lehmann, verify_prop1, DiagnosticFilter, LehmannDiagnostic};
pub use enrich::{combined_score, enrich, fisher_exact_p, odds_ratio, EnrichmentTable, OddsRatio};
pub use io::{analyze, ingest, AnalysisReport, Ingested};
