//! The planted-signal fixture: five studies sharing 10,000 SNP ids, each
//! with 40 private ids. Regenerate with the `make_fixture` example.

use std::collections::BTreeSet;
use std::path::PathBuf;

use efilter::io::{self, Ingested};
use efilter::{Combiner, KappaChoice, KappaGrid, Metric, PchSpec, ProcedureKind};

fn fixture() -> Ingested {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let paths: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("study{i}.tsv"))).collect();
    io::ingest(&paths).unwrap()
}

fn rejected(ing: &Ingested, r: usize, kind: ProcedureKind) -> BTreeSet<String> {
    let spec = PchSpec::new(5, r, 0.01, Metric::Fdr, Combiner::Bonferroni).unwrap();
    io::analyze(&ing.matrix, &spec, kind, KappaChoice::Auto, &KappaGrid::default())
        .unwrap()
        .rejected_ids()
        .into_iter()
        .map(String::from)
        .collect()
}

#[test]
fn alignment_matches_construction() {
    let ing = fixture();
    assert_eq!(ing.matrix.n(), 5);
    assert_eq!(ing.matrix.m(), 10_000);
    assert_eq!(ing.dropped, 200);
    assert_eq!(ing.matrix.study_ids(), ["study1", "study2", "study3", "study4", "study5"]);
    let ids = ing.matrix.hypothesis_ids();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    assert!(ing.loci.as_ref().is_some_and(|l| l.len() == 10_000));
}

#[test]
fn procedure_ordering_at_r2() {
    let ing = fixture();
    let bh = rejected(&ing, 2, ProcedureKind::BhPc).len();
    let ef = rejected(&ing, 2, ProcedureKind::EFilter).len();
    let ada = rejected(&ing, 2, ProcedureKind::AdaFilter).len();
    assert!(bh < ef && ef < ada, "bh {bh}, e-filter {ef}, adafilter {ada}");
}

#[test]
fn stricter_replicability_is_nested() {
    let ing = fixture();
    for kind in [ProcedureKind::BhPc, ProcedureKind::EFilter, ProcedureKind::AdaFilter] {
        let r2 = rejected(&ing, 2, kind);
        let r5 = rejected(&ing, 5, kind);
        assert!(r5.is_subset(&r2), "{kind}: {:?}", r5.difference(&r2).collect::<Vec<_>>());
    }
}
