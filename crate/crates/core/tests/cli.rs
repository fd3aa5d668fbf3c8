use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subspace_audit::histogram::{read_histogram, Table};
use subspace_audit::synthetic::{synthetic_csv, synthetic_scheme};

const BIN: &str = env!("CARGO_BIN_EXE_subspace-audit");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SUBSPACE_AUDIT_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(rows: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.csv"), synthetic_csv(rows, 11)).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.dir.path().join(name), text).unwrap();
        self.path(name)
    }

    fn bin(&self, out: &str, filter: Option<&str>) -> Output {
        let scheme = configs().join("synthetic.scheme").display().to_string();
        let (data, out) = (self.path("data.csv"), self.path(out));
        let mut args = vec!["bin", "--data", &data, "--config", &scheme, "--out", &out];
        if let Some(f) = filter {
            args.extend(["--filter", f]);
        }
        run(&args)
    }
}

#[test]
fn bin_writes_histogram_and_manifest() {
    let fx = Fixture::new(3000);
    let o = fx.bin("f.hist", Some("sex=F"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read(fx.path("f.hist")).unwrap();
    let parsed = read_histogram(text.as_slice()).unwrap();

    let table = Table::from_reader(synthetic_csv(3000, 11).as_bytes()).unwrap();
    let sex = table.column_index("sex").unwrap();
    let bins = table.bin_rows(&synthetic_scheme()).unwrap();
    let mut expected = std::collections::BTreeMap::new();
    for (r, bin) in bins.iter().enumerate() {
        if let (true, Some(b)) = (table.field(r, sex) == "F", bin) {
            *expected.entry(*b).or_insert(0u64) += 1;
        }
    }
    match parsed {
        subspace_audit::histogram::HistogramFile::Counts(h) => assert_eq!(h.counts(), &expected),
        other => panic!("expected counts, got {other:?}"),
    }

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fx.path("f.hist.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "bin");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    assert!(
        manifest["inputs"][fx.path("data.csv")]
            .as_str()
            .unwrap()
            .len()
            == 64
    );

    fx.bin("f2.hist", Some("sex=F"));
    assert_eq!(text, std::fs::read(fx.path("f2.hist")).unwrap());
}

#[test]
fn bin_missing_column_names_it() {
    let fx = Fixture::new(50);
    let scheme = fx.write("bad.scheme", "feature = wage:continuous:0:10:5\n");
    let o = run(&[
        "bin",
        "--data",
        &fx.path("data.csv"),
        "--config",
        &scheme,
        "--out",
        &fx.path("x.hist"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wage"), "{}", stderr(&o));
    assert!(!Path::new(&fx.path("x.hist")).exists());

    let o = fx.bin("y.hist", Some("gender=F"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gender"));
}

#[test]
fn query_exit_codes_and_determinism() {
    let fx = Fixture::new(5000);
    fx.bin("f.hist", Some("sex=F"));
    fx.bin("all.hist", None);
    let (f, all) = (fx.path("f.hist"), fx.path("all.hist"));

    let o = run(&["query", &f, &f, "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"verdict\":\"TRUE\""));
    assert!(stderr(&o).contains("manifest: "));

    let o = run(&["query", &f, &all, "--delta", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("degenerate"));

    let a = run(&[
        "query",
        &f,
        &all,
        "--delta",
        "0.004",
        "--samples",
        "7",
        "--seed",
        "5",
    ]);
    let b = run(&[
        "query",
        &f,
        &all,
        "--delta",
        "0.004",
        "--samples",
        "7",
        "--seed",
        "5",
    ]);
    assert_eq!(stdout(&a), stdout(&b));

    let exact = run(&["query", &f, &all, "--delta", "0.004"]);
    for seed in 0..20 {
        let seed = seed.to_string();
        let o = run(&[
            "query",
            &f,
            &all,
            "--delta",
            "0.004",
            "--samples",
            "3",
            "--seed",
            &seed,
        ]);
        if o.status.code() == Some(1) {
            assert_eq!(exact.status.code(), Some(1));
        }
    }

    let o = run(&["query", &f, &all, "--delta", "0.004", "--samples", "3"]);
    assert!(stderr(&o).contains("seed: "));

    let other = fx.write("other.scheme", "feature = income:continuous:0:100:5\n");
    run(&[
        "bin",
        "--data",
        &fx.path("data.csv"),
        "--config",
        &other,
        "--out",
        &fx.path("o.hist"),
    ]);
    let o = run(&["query", &f, &fx.path("o.hist"), "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn sample_size_rows() {
    let o = run(&[
        "sample-size",
        "--eps",
        "0.5",
        "--delta",
        "0.5",
        "--n-features",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    // d = 7 for one feature; s = ceil(112 ln 112)
    assert!(row.starts_with("7,529,529,,NA"), "{row}");

    let s_of = |delta: &str| -> u64 {
        let o = run(&[
            "sample-size",
            "--eps",
            "0.1",
            "--delta",
            delta,
            "--n-features",
            "2",
        ]);
        stdout(&o)
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(s_of("0.01") >= s_of("0.1"));
    assert!(s_of("0.001") >= s_of("0.01"));

    let o = run(&[
        "sample-size",
        "--eps",
        "0.5",
        "--delta",
        "0.5",
        "--n-features",
        "1",
        "--bins-total",
        "50",
    ]);
    let out = stdout(&o);
    let fields: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&fields[..4], &["7", "529", "50", "capped"]);
    assert_eq!(fields[4], "0");

    let o = run(&[
        "sample-size",
        "--eps",
        "1.5",
        "--delta",
        "0.5",
        "--n-features",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn transport_identity_is_zero() {
    let fx = Fixture::new(2000);
    fx.bin("f.hist", Some("sex=F"));
    fx.bin("m.hist", Some("sex=M"));
    let f = fx.path("f.hist");
    let o = run(&["transport", &f, &f]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("0,"));

    let exact = run(&["transport", &f, &fx.path("m.hist"), "--p", "1"]);
    let entropic = run(&[
        "transport",
        &f,
        &fx.path("m.hist"),
        "--p",
        "1",
        "--reg",
        "0.5",
    ]);
    let d = |o: &Output| -> f64 {
        stdout(o)
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(d(&exact) > 0.0);
    assert!(d(&entropic) >= d(&exact) - 1e-9);
}

fn small_sweep(fx: &Fixture) -> String {
    fx.write(
        "sweep.cfg",
        "feature = income:continuous:0:100:10\n\
         feature = education:categorical:1,2,3,4,5,6,7,8,9,10\n\
         protected_column = sex\nsubgroup_value = F\n\
         eps_grid = 0.25\nsample_sizes = 10\ntrials = 10000\nseed = 3\n",
    )
}

#[test]
fn sweep_config_errors_name_the_key() {
    let fx = Fixture::new(200);
    let cfg = fx.write(
        "bad.cfg",
        &std::fs::read_to_string(small_sweep(&fx))
            .unwrap()
            .replace("trials = 10000", "trials = 0"),
    );
    let out = fx.path("out.csv");
    let o = run(&[
        "sweep",
        "--data",
        &fx.path("data.csv"),
        "--config",
        &cfg,
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`trials`"), "{}", stderr(&o));
    assert!(!Path::new(&out).exists());

    let cfg = small_sweep(&fx);
    let o = run(&[
        "sweep",
        "--data",
        &fx.path("data.csv"),
        "--config",
        &cfg,
        "--out",
        &out,
        "--samples",
        "5,500",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`sample_sizes`"));
}

#[test]
fn sweep_rows_match_standalone_queries() {
    let fx = Fixture::new(20_000);
    let cfg = small_sweep(&fx);
    let out = fx.path("sweep.csv");
    let o = run(&[
        "sweep",
        "--data",
        &fx.path("data.csv"),
        "--config",
        &cfg,
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let (delta, rate): (&str, f64) = (row[1], row[3].parse().unwrap());
    assert!(Path::new(&fx.path("sweep.csv.meta.json")).exists());
    assert!(Path::new(&fx.path("sweep.csv.manifest.json")).exists());

    fx.bin("f.hist", Some("sex=F"));
    fx.bin("all.hist", None);
    let (f, all) = (fx.path("f.hist"), fx.path("all.hist"));
    let trials = 400;
    let inside = (0..trials)
        .filter(|k| {
            let seed = (1000 + k).to_string();
            run(&[
                "query",
                &f,
                &all,
                "--delta",
                delta,
                "--samples",
                "10",
                "--seed",
                &seed,
            ])
            .status
            .code()
                == Some(0)
        })
        .count();
    let q = inside as f64 / trials as f64;
    let p = (q + rate) / 2.0;
    let se = (p * (1.0 - p) * (1.0 / trials as f64 + 1e-4)).sqrt();
    assert!((q - rate).abs() <= 3.0 * se, "query {q} vs sweep {rate}");
}

#[test]
fn example_sweep_config_runs_and_repeats() {
    let fx = Fixture::new(0);
    let data = fx.path("synth.csv");
    let o = run(&["synth", "--out", &data]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = configs().join("synthetic.sweep").display().to_string();

    let start = std::time::Instant::now();
    let (a, b) = (fx.path("a.csv"), fx.path("b.csv"));
    let o = Command::new(BIN)
        .args(["sweep", "--data", &data, "--config", &cfg, "--out", &a])
        .env("SUBSPACE_AUDIT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(start.elapsed().as_secs() < 60);

    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
    assert!(csv.lines().skip(1).all(|l| !l.contains("NA")));
    let w = std::fs::read_to_string(fx.path("a.csv.wasserstein.csv")).unwrap();
    assert_eq!(w.lines().count(), 1 + 5);

    let o = run(&[
        "--threads",
        "5",
        "sweep",
        "--data",
        &data,
        "--config",
        &cfg,
        "--out",
        &b,
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    assert_eq!(
        w,
        std::fs::read_to_string(fx.path("b.csv.wasserstein.csv")).unwrap()
    );
}
