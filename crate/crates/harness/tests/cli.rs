use std::path::Path;
use std::process::Command;

use bbob_core::matching::{matching_weight, max_weight_matching};
use bbob_core::welfare::social_optimum;
use bbob_core::MarketInstance;
use bbob_harness::dataset::{ingest_csv, ColumnMap, DatasetError};
use bbob_harness::experiment::{run_poa_witness, run_random_counts, run_blocksize_limit};
use bbob_harness::config::{Config, Setting};
use bbob_harness::report::{Report, ResultRow};

fn bbob(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bbob")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const ORDERS: &str = "bid_price,ask_price,bid_qty,ask_qty\n1.05,0.21,1,1\n0.84,0.42,2,1\n0.63,0.525,1,3\n";

fn small_config(dir: &Path) -> std::path::PathBuf {
    write(dir, "small.toml", "N = 12\nreplications = 8\ngrid = [8, 12]\nd = 0.002\n")
}

#[test]
fn ingest_well_formed_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "orders.csv", ORDERS);
    let ds = ingest_csv(&p, &ColumnMap::default(), None).unwrap();
    assert_eq!(ds.len(), 3);
    // values 1.0, 0.8, 0.6 and 0.2, 0.4, 0.5 after dividing by 1.05
    let n = ds.normalization;
    assert!((n.offset - 0.2).abs() < 1e-12 && (n.scale - 0.8).abs() < 1e-12);
    let u = ds.utilities();
    assert!((u[0] - 1.0).abs() < 1e-12 && (ds.costs()[0]).abs() < 1e-12);
}

#[test]
fn ingest_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "bid_price,ask_price,bid_qty,ask_qty\n1,0.5,1,1\n1,abc,1,1\n");
    match ingest_csv(&bad, &ColumnMap::default(), None) {
        Err(e @ DatasetError::NotNumeric { row: 2, .. }) => assert!(e.to_string().contains("row 2")),
        other => panic!("{other:?}"),
    }
    let missing = write(dir.path(), "missing.csv", "bid_price,ask_price,bid_qty\n1,0.5,1\n");
    assert!(matches!(
        ingest_csv(&missing, &ColumnMap::default(), None),
        Err(DatasetError::MissingColumn { column, .. }) if column == "ask_qty"
    ));
    let empty = write(dir.path(), "empty.csv", "bid_price,ask_price,bid_qty,ask_qty\n");
    assert!(matches!(ingest_csv(&empty, &ColumnMap::default(), None), Err(DatasetError::Empty { .. })));
    let negative = write(dir.path(), "neg.csv", "bid_price,ask_price,bid_qty,ask_qty\n1,0.5,-1,1\n");
    assert!(matches!(
        ingest_csv(&negative, &ColumnMap::default(), None),
        Err(DatasetError::NotPositive { row: 1, .. })
    ));
    assert!(matches!(
        ingest_csv(&dir.path().join("nope.csv"), &ColumnMap::default(), None),
        Err(DatasetError::Io { .. })
    ));
}

#[test]
fn remapped_columns() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "o.csv", "Bid,Ask,BQ,AQ,time\n1.05,0.21,1,1,t0\n0.84,0.42,1,1,t1\n");
    let map: ColumnMap = "bid_price=Bid,ask_price=Ask,bid_qty=BQ,ask_qty=AQ,timestamp=time".parse().unwrap();
    let ds = ingest_csv(&p, &map, None).unwrap();
    assert_eq!(ds.rows[1].timestamp.as_deref(), Some("t1"));
    let out = bbob(&["--columns", "bid_price=Bid,ask_price=Ask,bid_qty=BQ,ask_qty=AQ", "--format", "csv", "ingest", p.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}

#[test]
fn normalized_welfare_denormalizes_to_raw_scale() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "orders.csv", ORDERS);
    let ds = ingest_csv(&p, &ColumnMap::default(), None).unwrap();
    let (u, c) = (ds.utilities(), ds.costs());
    let bq: Vec<f64> = ds.rows.iter().map(|r| r.bid_qty).collect();
    let sq: Vec<f64> = ds.rows.iter().map(|r| r.ask_qty).collect();
    let inst = MarketInstance::with_quantities(&u, &bq, &c, &sq, 1, 0.0).unwrap();
    let raw_u: Vec<f64> = ds.rows.iter().map(|r| r.bid_price / 1.05).collect();
    let raw_c: Vec<f64> = ds.rows.iter().map(|r| r.ask_price / 1.05).collect();
    let gains: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| bq[i].min(sq[j]) * (raw_u[i] - raw_c[j])).collect())
        .collect();
    let raw = matching_weight(&gains, &max_weight_matching(&gains));
    let back = ds.normalization.denormalize_welfare(social_optimum(&inst));
    assert!((back - raw).abs() <= 1e-9 * raw, "{back} vs {raw}");
}

#[test]
fn json_report_roundtrips() {
    let setting = Setting::synthetic();
    let rows = run_poa_witness(100.0, 5, 1);
    let report = Report::new(&setting, 1, rows).unwrap();
    let text = report.to_json().unwrap();
    let back: Report<ResultRow> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["config", "seed", "version", "results"]);
    let row_keys: Vec<&str> = v["results"][0].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(row_keys, ["scenario", "N", "K", "A", "sw_mean", "sw_stderr", "sw_opt", "ratio"]);
}

#[test]
fn csv_has_header_plus_one_line_per_result() {
    let report = Report::new(&Setting::synthetic(), 1, run_poa_witness(10.0, 3, 1)).unwrap();
    let csv = report.to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), report.results.len() + 1);
    assert_eq!(lines[0], "scenario,N,K,A,sw_mean,sw_stderr,sw_opt,ratio");
}

#[test]
fn same_seed_gives_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let run = |threads: &str, out: &str| {
        let out_path = dir.path().join(out);
        let o = bbob(&["--seed", "9", "--config", cfg, "--threads", threads, "--out", out_path.to_str().unwrap(),
                       "experiment", "mechanism-comparison"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out_path).unwrap()
    };
    let a = run("1", "a.json");
    assert_eq!(a, run("1", "b.json"));
    assert_eq!(a, run("3", "c.json"));
    let report: Report<ResultRow> = serde_json::from_slice(&a).unwrap();
    // four mechanism rows plus the optimum per grid point
    assert_eq!(report.results.len(), 10);
    for r in &report.results {
        assert!(r.sw_mean <= r.sw_opt + 1e-9, "{r:?}");
    }
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let orders = write(dir.path(), "orders.csv", ORDERS);
    let cases: Vec<Vec<&str>> = vec![
        vec!["ingest", orders.to_str().unwrap()],
        vec!["--config", cfg, "equilibrium"],
        vec!["--config", cfg, "--format", "csv", "equilibrium", "--block-size", "2"],
        vec!["--config", cfg, "simulate", "--mechanism", "benchmark-max-block"],
        vec!["--config", cfg, "mechanism"],
        vec!["poa", "--target", "50"],
        vec!["--config", cfg, "--format", "csv", "experiment", "random-counts", "--replications", "2"],
        vec!["--config", cfg, "experiment", "block-size-limit", "--a-max", "3", "--replications", "2"],
        vec!["experiment", "poa-witness", "--replications", "2"],
    ];
    for args in cases {
        let o = bbob(&args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stdout.is_empty(), "{args:?}");
    }
    let o = bbob(&["ingest", dir.path().join("missing.csv").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn dataset_config_sets_distributions_and_delay() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "orders.csv", ORDERS);
    let cfg = Config::parse("dataset = \"orders.csv\"\nN = 10").unwrap();
    let s = cfg.resolve(dir.path(), &ColumnMap::default()).unwrap();
    // $0.3 per block over a value range of 0.8
    assert!((s.base.delay_cost - 0.3 / 0.8).abs() < 1e-12);
    assert_eq!(s.dataset.as_ref().unwrap().rows, 3);
    assert!(matches!(s.base.utility, bbob_core::mechanism::ValueDistribution::Empirical { .. }));
}

#[test]
fn random_counts_and_caps() {
    let mut setting = Setting::synthetic();
    setting.replications = 4;
    assert!(run_random_counts(&setting, &[], 1).is_err());
    let rows = run_random_counts(&setting, &[50, 150, 50, 150], 1).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.a == rows[0].a));
    // the block size follows the mean count
    assert_eq!(rows[0].a, bbob_core::mechanism::optimal_block_size_distributional(&setting.at(100)).unwrap());

    setting.grid = vec![20];
    let rows = run_blocksize_limit(&setting, 1, 2).unwrap();
    assert!(rows.iter().all(|r| r.a == 1));
    let rows = run_blocksize_limit(&setting, 4, 2).unwrap();
    assert!(rows.iter().all(|r| r.a <= 4));
    assert!(run_blocksize_limit(&setting, 0, 2).is_err());
}
