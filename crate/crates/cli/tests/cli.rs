use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use efilter::io::read_report;

fn efilter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efilter"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixtures() -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    (1..=5)
        .map(|i| dir.join(format!("study{i}.tsv")).display().to_string())
        .collect()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn analyze(out: &Path, extra: &[&str]) -> Output {
    let fx = fixtures();
    let mut args = vec!["analyze"];
    args.extend(fx.iter().map(String::as_str));
    args.extend(extra);
    args.extend(["--out", out.to_str().unwrap()]);
    efilter(&args)
}

const PLAN: &str = r#"
scenario = 1
m = 400
rho = [0.2, 0.6]
nr = [[4, 2]]
reps = 3
procedures = ["adafilter", "bh-b", "epch", "efilter-b"]
"#;

#[test]
fn simulate_summary_header_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.toml");
    std::fs::write(&cfg, PLAN).unwrap();
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|d| dir.path().join(d)).collect();
    for out in &runs {
        let o = efilter(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = String::from_utf8(read(&runs[0].join("summary.csv"))).unwrap();
    assert_eq!(summary.lines().next(), Some("procedure,scenario,rho,n,r,metric_name,mean,sd,B"));
    for f in ["summary.csv", "reps.csv", "manifest.json"] {
        assert_eq!(read(&runs[0].join(f)), read(&runs[1].join(f)), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(&runs[0].join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "simulate");
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.toml");
    std::fs::write(&cfg, PLAN).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let o = Command::new(env!("CARGO_BIN_EXE_efilter"))
            .env("EFILTER_THREADS", threads)
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
        outputs.push(read(&out.join("reps.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn analyze_fixture_is_deterministic_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = analyze(out, &["--r", "2", "--alpha", "0.01", "--procedure", "efilter", "--combiner", "bonferroni"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a.join("report.csv")), read(&b.join("report.csv")));
    assert_eq!(read(&a.join("manifest.json")), read(&b.join("manifest.json")));
    let rep = read_report(&a.join("report.csv")).unwrap();
    assert_eq!(rep.header.m, 10_000);
    assert_eq!(rep.header.dropped_count, 200);
    assert!(rep.records.iter().all(|r| r.locus.is_some()));
    assert!(rep.rejection_count() > 0);
}

#[test]
fn analyze_orderings_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let mut counts = Vec::new();
    for proc in ["bh-pc", "efilter", "adafilter"] {
        let out = dir.path().join(proc);
        let o = analyze(&out, &["--r", "2", "--alpha", "0.01", "--procedure", proc]);
        assert!(o.status.success());
        counts.push(read_report(&out.join("report.csv")).unwrap().rejection_count());
    }
    assert!(counts[0] < counts[1] && counts[1] < counts[2], "{counts:?}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    // missing --r
    let o = analyze(&out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--r"));
    // alpha outside (0, 1]
    let o = analyze(&out, &["--r", "2", "--alpha", "0"]);
    assert_eq!(o.status.code(), Some(1));
    // unknown procedure
    let o = analyze(&out, &["--r", "2", "--procedure", "magic"]);
    assert_eq!(o.status.code(), Some(1));
    // missing input file
    let o = efilter(&["analyze", "nope1.tsv", "nope2.tsv", "--r", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    // malformed plan
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = 9\n").unwrap();
    let o = efilter(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(efilter(&["--help"]).status.code(), Some(0));
    assert_eq!(efilter(&[]).status.code(), Some(1));
}

#[test]
fn tune_kappa_scan() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let out = dir.path().join("t");
    let mut args = vec!["tune-kappa"];
    args.extend(fx.iter().map(String::as_str));
    args.extend(["--r", "2", "--alpha", "0.01", "--out", out.to_str().unwrap()]);
    let o = efilter(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(&out.join("kappa_scan.csv"))).unwrap();
    assert_eq!(text.lines().count(), 19);
    assert_eq!(text.lines().filter(|l| l.ends_with(",1")).count(), 1);
}

#[test]
fn diagnose_kappa_star_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let args = ["diagnose-kappa-star", "--mu", "0,0,0,3", "--rho-grid", "-0.3,0.6", "--mc", "20000", "--out", out.to_str().unwrap()];
    let o = efilter(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(&out.join("kappa_star.csv"))).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,mu,d1,d2,kappa_star,mc_samples");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("-0.3,0;0;0;3,"));
    let again = dir.path().join("e");
    let mut args2 = args;
    args2[8] = again.to_str().unwrap();
    assert!(efilter(&args2).status.success());
    assert_eq!(read(&out.join("kappa_star.csv")), read(&again.join("kappa_star.csv")));
}

#[test]
fn enrich_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let membership = dir.path().join("membership.tsv");
    let genes = dir.path().join("genes.txt");
    let mut m = String::from("gene_id\tpathway_id\n");
    for g in 0..60 {
        m.push_str(&format!("G{g}\tP{}\n", g % 3));
    }
    for g in 0..6 {
        m.push_str(&format!("G{g}\tLipid\n"));
    }
    std::fs::write(&membership, m).unwrap();
    std::fs::write(&genes, "G0\nG1\nG2\nG3\nG4\nG5\nG7\n").unwrap();
    let out = dir.path().join("o");
    let o = efilter(&[
        "enrich", "--membership", membership.to_str().unwrap(), "--genes", genes.to_str().unwrap(),
        "--permutations", "100", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(&out.join("enrichment.csv"))).unwrap();
    assert_eq!(text.lines().next(), Some("pathway,k,K,OR,p,combined_score"));
    assert!(text.contains("\nLipid,6,6,"));
}
