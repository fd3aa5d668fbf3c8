//! Command-line front end.
//!
//! Exit codes: `0` success (for `query`, verdict inside), `1` verdict
//! outside, `2` usage, input, or config errors, `3` incompatible binning
//! schemes. Output files are written to a temporary sibling and renamed into
//! place, and only after the whole computation has succeeded. Every run emits
//! one manifest, next to `--out` as `<out>.manifest.json` or as a single
//! `manifest: {...}` line on stderr when there is no output file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{KvConfig, SCHEME_KEYS};
use crate::error::{AuditError, Result};
use crate::harness::{eps_to_delta, run_sweep};
use crate::histogram::{normalize, read_histogram, ProbabilityHistogram, RecordFilter, Table};
use crate::pac::{analytic_false_positive, EpsNetConstants, SampleBudget};
use crate::query::{
    exact_query, subsampled_query, violation_report, ReferenceBand, TestMeasure, VerdictRecord,
};
use crate::synthetic;
use crate::transport::{wasserstein_nd, SinkhornOptions, TransportMethod, WassersteinOptions};

pub const EXIT_INSIDE: i32 = 0;
pub const EXIT_OUTSIDE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_INCOMPATIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "subspace-audit",
    version,
    about = "Sup-norm bias audits on joint histograms"
)]
pub struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, env = "SUBSPACE_AUDIT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bin CSV records into a joint histogram file.
    Bin(BinArgs),
    /// Test whether a histogram lies within a band around a reference.
    Query(QueryArgs),
    /// Sample budget for a target violation fraction and confidence.
    SampleSize(SampleSizeArgs),
    /// Wasserstein distance between two histogram files.
    Transport(TransportArgs),
    /// Error-versus-sample-size sweep on a CSV dataset.
    Sweep(SweepArgs),
    /// Write the seeded two-group synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BinArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Scheme file with `feature = ...` lines.
    #[arg(long)]
    pub config: PathBuf,
    /// Keep only records with COL=VAL.
    #[arg(long)]
    pub filter: Option<RecordFilter>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write normalized masses instead of counts.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Histogram file of the audited group.
    pub test: PathBuf,
    /// Histogram file of the reference.
    pub reference: PathBuf,
    /// Band half-width.
    #[arg(long, required_unless_present = "eps", conflicts_with = "eps")]
    pub delta: Option<f64>,
    /// Pick the band half-width for this target violation fraction instead.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Number of bins to sample; full scan when absent.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long, requires = "samples")]
    pub seed: Option<u64>,
    /// Also write the verdict line here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleSizeArgs {
    /// Violation fraction to detect.
    #[arg(long)]
    pub eps: f64,
    /// Failure probability.
    #[arg(long, alias = "delta-prob")]
    pub delta: f64,
    /// Number of encoded features.
    #[arg(long)]
    pub n_features: u32,
    /// Joint bin count; caps the budget and adds the exact miss probability.
    #[arg(long)]
    pub bins_total: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Exact,
    Entropic,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, value_enum)]
    pub method: Option<TransportKind>,
    /// Entropic regularization; implies `--method entropic`.
    #[arg(long)]
    pub reg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    None,
    Wasserstein,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Sweep config file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated target violation fractions (overrides `eps_grid`).
    #[arg(long)]
    pub eps: Option<String>,
    /// Comma-separated band half-widths (overrides `delta_grid`).
    #[arg(long)]
    pub delta: Option<String>,
    /// Comma-separated sample sizes (overrides `sample_sizes`).
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineKind>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = synthetic::DEFAULT_ROWS)]
    pub rows: usize,
    #[arg(long, default_value_t = synthetic::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Unix seconds; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs())
            });
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config: Vec::new(),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timestamp,
        }
    }

    fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(
            path.display().to_string(),
            hex::encode(Sha256::digest(bytes)),
        );
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Stores beside `out`, or prints to stderr when there is none.
    fn emit(mut self, out: Option<&Path>, files: &mut Vec<(PathBuf, Vec<u8>)>) {
        self.outputs = files.iter().map(|(p, _)| p.display().to_string()).collect();
        match out {
            Some(out) => files.push((sidecar(out, "manifest.json"), self.to_json().into_bytes())),
            None => eprintln!(
                "manifest: {}",
                serde_json::to_string(&self).expect("manifest serializes")
            ),
        }
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes via a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| AuditError::Io(e.error))?;
    Ok(())
}

fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    files.iter().try_for_each(|(p, b)| write_atomic(p, b))
}

fn read_input(path: &Path, manifest: &mut RunManifest) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| {
        AuditError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    manifest.input(path, &bytes);
    Ok(bytes)
}

fn read_config(path: &Path, manifest: &mut RunManifest) -> Result<KvConfig> {
    let bytes = read_input(path, manifest)?;
    let text = String::from_utf8(bytes).map_err(|_| AuditError::Format {
        line: 0,
        message: "config is not UTF-8".into(),
    })?;
    KvConfig::parse(&text)
}

fn load_measure(path: &Path, manifest: &mut RunManifest) -> Result<ProbabilityHistogram> {
    let bytes = read_input(path, manifest)?;
    read_histogram(bytes.as_slice())?.into_probability()
}

fn fresh_seed() -> u64 {
    let seed = rand::random();
    eprintln!("seed: {seed}");
    seed
}

pub fn exit_code(err: &AuditError) -> i32 {
    match err {
        AuditError::Alignment(_) => EXIT_INCOMPATIBLE,
        _ => EXIT_ERROR,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.threads {
        Some(0) => Err(AuditError::param("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AuditError::param(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Bin(a) => cmd_bin(a),
        Command::Query(a) => cmd_query(a),
        Command::SampleSize(a) => cmd_sample_size(a),
        Command::Transport(a) => cmd_transport(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

pub fn cmd_bin(args: BinArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("bin");
    let cfg = read_config(&args.config, &mut manifest)?;
    cfg.check_keys(SCHEME_KEYS)?;
    let scheme = cfg.scheme()?;
    manifest.config = cfg.entries().to_vec();
    let data = read_input(&args.data, &mut manifest)?;
    let table = Table::from_reader(data.as_slice())?;
    let hist = table.histogram(&scheme, args.filter.as_ref())?;
    eprintln!(
        "binned {} records into {} of {} bins ({} excluded for missing values)",
        hist.total(),
        hist.counts().len(),
        scheme.total_bins(),
        hist.excluded()
    );
    let mut buf = Vec::new();
    if args.normalize {
        normalize(&hist)?.write_text(&mut buf)?;
    } else {
        hist.write_text(&mut buf)?;
    }
    let mut files = vec![(args.out.clone(), buf)];
    manifest.emit(Some(&args.out), &mut files);
    write_all(&files)?;
    Ok(0)
}

pub fn cmd_query(args: QueryArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("query");
    let test = TestMeasure::new(load_measure(&args.test, &mut manifest)?);
    let reference = load_measure(&args.reference, &mut manifest)?;
    test.scheme().ensure_compatible(reference.scheme())?;

    let delta = match (args.delta, args.eps) {
        (Some(d), _) => d,
        (None, Some(e)) => {
            let ed = eps_to_delta(&test, &reference, e)?;
            eprintln!(
                "eps target {e}: delta {} gives eps_hat {}",
                ed.delta, ed.eps_hat
            );
            ed.delta
        }
        (None, None) => return Err(AuditError::param("give --delta or --eps")),
    };
    let band = ReferenceBand::new(reference, delta)?;
    if band.is_degenerate() {
        eprintln!(
            "warning: delta = 0 is degenerate; every bin violates unless the measures are equal"
        );
    }
    let outcome = match args.samples {
        Some(s) => {
            let seed = args.seed.unwrap_or_else(fresh_seed);
            manifest.seed = Some(seed);
            subsampled_query(&test, &band, s, seed)?
        }
        None => exact_query(&test, &band)?,
    };
    let report = violation_report(&test, &band)?;
    let line = VerdictRecord::new(&outcome, &band, &report).to_line() + "\n";
    let mut files = Vec::new();
    if let Some(out) = &args.out {
        files.push((out.clone(), line.clone().into_bytes()));
    }
    manifest.emit(args.out.as_deref(), &mut files);
    write_all(&files)?;
    print!("{line}");
    Ok(if outcome.inside {
        EXIT_INSIDE
    } else {
        EXIT_OUTSIDE
    })
}

pub const SAMPLE_SIZE_HEADER: &str = "vc_dim,s,s_used,capped,analytic_error";

pub fn cmd_sample_size(args: SampleSizeArgs) -> Result<i32> {
    let budget = SampleBudget::with_constants(
        args.eps,
        args.delta,
        args.n_features,
        &EpsNetConstants::default(),
    )?;
    let row = match args.bins_total {
        Some(n) => {
            let used = budget.capped(n);
            let k = ((args.eps * n as f64).ceil() as u64).min(n);
            let analytic = analytic_false_positive(n, k, used)?;
            let marker = if used < budget.s { "capped" } else { "" };
            format!("{},{},{used},{marker},{analytic}", budget.vc_dim, budget.s)
        }
        None => format!("{},{},{},,NA", budget.vc_dim, budget.s, budget.s),
    };
    let mut manifest = RunManifest::new("sample-size");
    manifest.config = vec![
        ("eps".into(), args.eps.to_string()),
        ("delta".into(), args.delta.to_string()),
        ("n_features".into(), args.n_features.to_string()),
    ];
    manifest.emit(None, &mut Vec::new());
    println!("{SAMPLE_SIZE_HEADER}\n{row}");
    Ok(0)
}

pub fn cmd_transport(args: TransportArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("transport");
    let a = load_measure(&args.a, &mut manifest)?;
    let b = load_measure(&args.b, &mut manifest)?;
    let kind = args.method.unwrap_or(if args.reg.is_some() {
        TransportKind::Entropic
    } else {
        TransportKind::Exact
    });
    let method = match kind {
        TransportKind::Exact => TransportMethod::Exact,
        TransportKind::Entropic => {
            let mut opts = SinkhornOptions::default();
            if let Some(r) = args.reg {
                opts.reg = r;
            }
            TransportMethod::Entropic(opts)
        }
    };
    let w = wasserstein_nd(
        &a,
        &b,
        args.p,
        &WassersteinOptions {
            method,
            ..WassersteinOptions::default()
        },
    )?;
    manifest.emit(None, &mut Vec::new());
    println!("distance,marginal_residual,support_a,support_b");
    println!(
        "{},{},{},{}",
        w.distance, w.marginal_residual, w.support.0, w.support.1
    );
    Ok(0)
}

pub fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("sweep");
    let mut cfg = read_config(&args.config, &mut manifest)?;
    if let Some(e) = &args.eps {
        cfg.remove("delta_grid");
        cfg.set("eps_grid", e.as_str());
    }
    if let Some(d) = &args.delta {
        cfg.remove("eps_grid");
        cfg.set("delta_grid", d.as_str());
    }
    if let Some(s) = &args.samples {
        cfg.set("sample_sizes", s.as_str());
    }
    if let Some(b) = args.baseline {
        cfg.set(
            "baseline",
            if b == BaselineKind::Wasserstein {
                "wasserstein"
            } else {
                "none"
            },
        );
    }
    if let Some(p) = args.p {
        cfg.set("p", p.to_string());
    }
    let seed = match args.seed {
        Some(s) => s,
        None => match cfg.seed()? {
            Some(s) => s,
            None => fresh_seed(),
        },
    };
    cfg.set("seed", seed.to_string());
    let sweep = cfg.sweep_config(seed)?;
    manifest.config = cfg.entries().to_vec();
    manifest.seed = Some(seed);

    let data = read_input(&args.data, &mut manifest)?;
    let fingerprint = hex::encode(Sha256::digest(&data));
    let table = Table::from_reader(data.as_slice())?;
    let output = run_sweep(&sweep, &table, Some(fingerprint))?;
    eprintln!(
        "{} test records, {} reference records, {} rows",
        output.test_records,
        output.reference_records,
        output.supnorm.rows.len()
    );

    let mut files = vec![
        (args.out.clone(), output.supnorm.to_csv().into_bytes()),
        (
            sidecar(&args.out, "meta.json"),
            json_bytes(&output.supnorm.metadata),
        ),
    ];
    if let Some(w) = &output.wasserstein {
        let path = sidecar(&args.out, "wasserstein.csv");
        files.push((sidecar(&path, "meta.json"), json_bytes(&w.metadata)));
        files.push((path, w.to_csv().into_bytes()));
    }
    manifest.emit(Some(&args.out), &mut files);
    write_all(&files)?;
    Ok(0)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    (serde_json::to_string_pretty(value).expect("serializes") + "\n").into_bytes()
}

pub fn cmd_synth(args: SynthArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("synth");
    manifest.seed = Some(args.seed);
    manifest.config = vec![("rows".into(), args.rows.to_string())];
    let mut buf = Vec::new();
    synthetic::write_synthetic_csv(&mut buf, args.rows, args.seed)?;
    let mut files = vec![(args.out.clone(), buf)];
    manifest.emit(Some(&args.out), &mut files);
    write_all(&files)?;
    Ok(0)
}
