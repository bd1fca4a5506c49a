use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::Command;

use assemblab::bench::{run_benchmark, BenchOptions};
use assemblab::config::BenchConfig;
use assemblab::io::{check_equivalence, Report};

const SMALL: &str = "nx = 5\nny = 4\nnz = 4\nlayers = 1\n";

fn config(extra: &str) -> BenchConfig {
    BenchConfig::parse(&format!("{SMALL}{extra}")).unwrap()
}

fn report(dir: &Path) -> Report {
    Report::read_csv(BufReader::new(fs::File::open(dir.join("report.csv")).unwrap())).unwrap()
}

#[test]
fn sequential_only_gives_one_row_per_phase() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_benchmark(&config("strategy = sequential\nchunk = 10\nchunk = 50\n"), dir.path(), &BenchOptions::default()).unwrap();
    assert!(s.all_pass());
    let r = report(dir.path());
    let phases: Vec<&str> = r.rows.iter().map(|r| r.phase.as_str()).collect();
    assert_eq!(phases, vec!["assembly", "subgrid"]);
    assert!(r.rows.iter().all(|row| row.strategy == "sequential" && row.median_s > 0.0));
    assert_eq!(s.solver.len(), 1);
    for f in ["report.json", "equivalence.csv", "solver.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn verify_only_writes_checks_without_timing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("strategy = coloring\nstrategy = multidep\nchunk = 7\nnode = 2x2\ndlb = off\ndlb = on\n");
    let opts = BenchOptions { verify_only: true, ..BenchOptions::default() };
    let s = run_benchmark(&cfg, dir.path(), &opts).unwrap();
    assert!(s.all_pass(), "{:?}", s.checks);
    assert_eq!(s.checks.len(), 4);
    assert!(report(dir.path()).rows.is_empty());
}

#[test]
fn dumps_compare_equal_and_a_perturbation_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("strategy = atomic\nchunk = 9\nnode = 2x2\n");
    let opts = BenchOptions { verify_only: true, dump_matrices: true, ..BenchOptions::default() };
    run_benchmark(&cfg, dir.path(), &opts).unwrap();
    let m = dir.path().join("matrices");
    let reference = m.join("reference_n1_2x2_rank1.coo");
    let candidate = m.join("atomic_c9_n1_2x2_dlboff_rank1.coo");
    let eq = check_equivalence(&reference, &candidate, 1e-12).unwrap();
    assert!(eq.pass, "{eq:?}");

    let text = fs::read_to_string(&candidate).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let k = lines.len() / 2;
    let mut fields: Vec<String> = lines[k].split_whitespace().map(String::from).collect();
    let v: f64 = fields[2].parse().unwrap();
    fields[2] = format!("{:e}", v * (1.0 + 1e-9) + 1e-9);
    lines[k] = fields.join(" ");
    let perturbed = m.join("perturbed.coo");
    fs::write(&perturbed, lines.join("\n") + "\n").unwrap();
    let eq = check_equivalence(&reference, &perturbed, 1e-12).unwrap();
    assert!(!eq.pass);
    assert!(eq.max_rel > 1e-12);
}

#[test]
fn same_seed_gives_the_same_non_timing_columns() {
    let cfg = config("strategy = multidep\nstrategy = atomic\nchunk = 6\nnode = 2x2\ndlb = on\nseed = 9\n");
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        run_benchmark(&cfg, dir.path(), &BenchOptions::default()).unwrap();
        let text = fs::read_to_string(dir.path().join("partitions").join("multidep_c6_n1_2x2_dlbon.csv")).unwrap();
        (report(dir.path()), text)
    };
    let ((a, pa), (b, pb)) = (run(), run());
    assert_eq!(a.seed, 9);
    assert_eq!(a.seed, b.seed);
    assert_eq!(a.rows.len(), b.rows.len());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(
            (&x.mesh, x.nelem, &x.strategy, &x.dlb, x.nodes, x.ranks_per_node, x.lanes_per_rank, x.chunk, &x.phase),
            (&y.mesh, y.nelem, &y.strategy, &y.dlb, y.nodes, y.ranks_per_node, y.lanes_per_rank, y.chunk, &y.phase)
        );
        assert_eq!((x.lb_w, x.lb_nw), (y.lb_w, y.lb_nw));
    }
    assert_eq!(pa, pb);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_assemblab"))
}

#[test]
fn binary_runs_a_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("{SMALL}strategy = localpartition\nchunk = 8\nnode = 1x2\n")).unwrap();
    let out = cli().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("out")).arg("--seed").arg("4").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"), "{stdout}");
    assert_eq!(report(&dir.path().join("out")).seed, 4);
}

#[test]
fn malformed_config_exits_nonzero_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, format!("{SMALL}strategy = atomic\nchunk = lots\n")).unwrap();
    let out = cli().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 6"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = cli().arg("--config").arg(dir.path().join("missing.cfg")).output().unwrap();
    assert!(!out.status.success());
    let out = cli().arg("--bogus").output().unwrap();
    assert!(!out.status.success());
}
