//! Monte-Carlo sweeps of one-sided error against sample size.
//!
//! [`run_supnorm_sweep`] estimates, per `(eps, s)` cell, how often the
//! subsampled query reports "inside" for a test measure that the full scan
//! rejects, next to the exact hypergeometric rate. [`run_wasserstein_sweep`]
//! runs the record-subsampled `W_2` decision protocol on the same split:
//!
//! 1. `threshold = threshold_factor * W_2(full test group, reference)`;
//! 2. a group is "biased" iff its `W_2` to the reference is `>= threshold`;
//! 3. each trial draws `s` test records without replacement, bins them, and
//!    counts an error when its decision differs from the full-data decision.
//!
//! Trial seeds come from the master seed by counter-based splitting, so the
//! result does not depend on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AuditError, Result};
use crate::histogram::{
    normalize, BinIndex, BinningScheme, JointHistogram, ProbabilityHistogram, Table,
};
use crate::pac::analytic_false_positive;
use crate::query::{sorted_diffs, subsampled_query, violation_report, ReferenceBand, TestMeasure};
use crate::transport::{wasserstein_1d, wasserstein_nd, WassersteinOptions};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `index` of stream `stream`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream ^ splitmix64(index)))
}

/// Which records form the reference population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    /// All records, the subgroup included.
    #[default]
    Population,
    /// Records outside the subgroup.
    Complement,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepGrid {
    Delta(Vec<f64>),
    Eps(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Baseline {
    None,
    Wasserstein {
        p: f64,
        threshold_factor: f64,
        trials: u64,
        sample_sizes: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub scheme: BinningScheme,
    pub protected_column: String,
    pub subgroup_value: String,
    pub reference: ReferenceMode,
    pub grid: SweepGrid,
    pub sample_sizes: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    pub baseline: Baseline,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(AuditError::config("trials", "must be >= 1"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(AuditError::config(
                "sample_sizes",
                "need at least one size, all >= 1",
            ));
        }
        if self
            .sample_sizes
            .iter()
            .any(|&s| s > self.scheme.total_bins())
        {
            return Err(AuditError::config(
                "sample_sizes",
                format!("sizes must not exceed N = {}", self.scheme.total_bins()),
            ));
        }
        match &self.grid {
            SweepGrid::Eps(g) if g.is_empty() || g.iter().any(|&e| !(e > 0.0 && e < 1.0)) => {
                return Err(AuditError::config("eps_grid", "values must lie in (0, 1)"));
            }
            SweepGrid::Delta(g)
                if g.is_empty() || g.iter().any(|&d| !(d >= 0.0 && d.is_finite())) =>
            {
                return Err(AuditError::config(
                    "delta_grid",
                    "values must be finite and >= 0",
                ));
            }
            _ => {}
        }
        if let Baseline::Wasserstein {
            p,
            threshold_factor,
            trials,
            sample_sizes,
        } = &self.baseline
        {
            if !(*p >= 1.0 && p.is_finite()) {
                return Err(AuditError::config("p", "must be >= 1"));
            }
            if !(*threshold_factor > 0.0 && threshold_factor.is_finite()) {
                return Err(AuditError::config("threshold_factor", "must be > 0"));
            }
            if *trials < 1 {
                return Err(AuditError::config("baseline_trials", "must be >= 1"));
            }
            if sample_sizes.is_empty() || sample_sizes.contains(&0) {
                return Err(AuditError::config(
                    "baseline_sample_sizes",
                    "need sizes >= 1",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Realized violation fraction `K / N`.
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub s: u64,
    /// `None` when no one-sided error is possible (the full scan accepts).
    pub empirical_error: Option<f64>,
    pub analytic_error: Option<f64>,
    pub stderr: Option<f64>,
    pub trials: u64,
}

/// Per-row distance statistics of the `W_2` protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSpread {
    pub s: u64,
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub master_seed: u64,
    pub dataset_fingerprint: Option<String>,
    pub total_bins: u64,
    pub config: Option<SweepConfig>,
    /// Target eps per row, when the grid was given in eps.
    pub eps_targets: Vec<Option<f64>>,
    pub violating_bins: Vec<Option<u64>>,
    pub full_distance: Option<f64>,
    pub threshold: Option<f64>,
    pub distance_spread: Vec<DistanceSpread>,
}

impl SweepMetadata {
    fn new(master_seed: u64, total_bins: u64) -> Self {
        SweepMetadata {
            master_seed,
            dataset_fingerprint: None,
            total_bins,
            config: None,
            eps_targets: Vec::new(),
            violating_bins: Vec::new(),
            full_distance: None,
            threshold: None,
            distance_spread: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

pub const CSV_HEADER: &str = "eps,delta,s,empirical_error,analytic_error,stderr,trials";

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

impl SweepResult {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                opt(r.eps),
                opt(r.delta),
                r.s,
                opt(r.empirical_error),
                opt(r.analytic_error),
                opt(r.stderr),
                r.trials
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// A band half-width chosen for a target violation fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsDelta {
    pub delta: f64,
    pub violating: u64,
    pub eps_hat: f64,
}

/// Smallest `delta` whose violation fraction is at most `eps_target`, from the
/// per-bin differences sorted in decreasing order (plus `zeros` implicit zeros).
///
/// With `k = floor(eps_target * N)`, every `delta` above the `(k+1)`-th largest
/// difference leaves at most `k` bins with `|diff| >= delta`. Under the `>=`
/// rule no smallest such value exists, so the next representable real above
/// that order statistic is returned.
pub fn eps_to_delta_from_diffs(desc: &[f64], zeros: u64, eps_target: f64) -> Result<EpsDelta> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(AuditError::param(format!(
            "eps target must lie in (0, 1), got {eps_target}"
        )));
    }
    let n = desc.len() as u64 + zeros;
    if n == 0 {
        return Err(AuditError::DegenerateInput("no bins".into()));
    }
    let k = ((eps_target * n as f64) + 1e-9).floor() as usize;
    let order_stat = desc.get(k).copied().unwrap_or(0.0);
    let delta = order_stat.next_up();
    let violating = desc.iter().take_while(|&&d| d >= delta).count() as u64;
    Ok(EpsDelta {
        delta,
        violating,
        eps_hat: violating as f64 / n as f64,
    })
}

pub fn eps_to_delta(
    t: &TestMeasure,
    base: &ProbabilityHistogram,
    eps_target: f64,
) -> Result<EpsDelta> {
    let (desc, zeros) = sorted_diffs(t, base)?;
    eps_to_delta_from_diffs(&desc, zeros, eps_target)
}

/// Row indices of the audited subgroup and of the reference population.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplit {
    pub test: Vec<usize>,
    pub reference: Vec<usize>,
}

pub fn subgroup_split(
    table: &Table,
    protected_column: &str,
    subgroup_value: &str,
    mode: ReferenceMode,
) -> Result<GroupSplit> {
    let col = table.column_index(protected_column)?;
    let (test, rest): (Vec<usize>, Vec<usize>) =
        (0..table.len()).partition(|&r| table.field(r, col).trim() == subgroup_value);
    if test.is_empty() {
        return Err(AuditError::DegenerateInput(format!(
            "no records with {protected_column}={subgroup_value}"
        )));
    }
    let reference = match mode {
        ReferenceMode::Population => (0..table.len()).collect(),
        ReferenceMode::Complement => rest,
    };
    if reference.is_empty() {
        return Err(AuditError::DegenerateInput(
            "reference group is empty".into(),
        ));
    }
    Ok(GroupSplit { test, reference })
}

/// Histogram of a list of record bins.
pub fn histogram_of(scheme: &BinningScheme, bins: &[BinIndex]) -> Result<JointHistogram> {
    let mut counts = std::collections::BTreeMap::new();
    for &b in bins {
        *counts.entry(b).or_insert(0u64) += 1;
    }
    JointHistogram::from_counts(scheme.clone(), counts)
}

fn rate_and_stderr(errors: u64, trials: u64) -> (f64, f64) {
    let p = errors as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Sup-norm error sweep over the `(grid, sample_sizes)` product.
pub fn run_supnorm_sweep(
    cfg: &SweepConfig,
    test: &TestMeasure,
    reference: &ProbabilityHistogram,
) -> Result<SweepResult> {
    cfg.validate()?;
    test.scheme().ensure_compatible(reference.scheme())?;
    let n = reference.scheme().total_bins();

    let bands: Vec<(Option<f64>, f64)> = match &cfg.grid {
        SweepGrid::Delta(ds) => ds.iter().map(|&d| (None, d)).collect(),
        SweepGrid::Eps(es) => {
            let (desc, zeros) = sorted_diffs(test, reference)?;
            es.iter()
                .map(|&e| eps_to_delta_from_diffs(&desc, zeros, e).map(|ed| (Some(e), ed.delta)))
                .collect::<Result<_>>()?
        }
    };

    let mut meta = SweepMetadata::new(cfg.seed, n);
    let mut rows = Vec::new();
    let mut stream = 0u64;
    for (target, delta) in bands {
        let band = ReferenceBand::new(reference.clone(), delta)?;
        let report = violation_report(test, &band)?;
        for &s in &cfg.sample_sizes {
            let cell = stream;
            stream += 1;
            meta.eps_targets.push(target);
            meta.violating_bins.push(Some(report.count));
            if report.inside() {
                rows.push(SweepRow {
                    eps: Some(report.fraction),
                    delta: Some(delta),
                    s,
                    empirical_error: None,
                    analytic_error: None,
                    stderr: None,
                    trials: cfg.trials,
                });
                continue;
            }
            let errors = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    subsampled_query(test, &band, s, derive_seed(cfg.seed, cell, t))
                        .map(|o| o.inside as u64)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            let (rate, se) = rate_and_stderr(errors, cfg.trials);
            rows.push(SweepRow {
                eps: Some(report.fraction),
                delta: Some(delta),
                s,
                empirical_error: Some(rate),
                analytic_error: Some(analytic_false_positive(n, report.count, s)?),
                stderr: Some(se),
                trials: cfg.trials,
            });
        }
    }
    Ok(SweepResult {
        rows,
        metadata: meta,
    })
}

fn distance(a: &ProbabilityHistogram, b: &ProbabilityHistogram, p: f64) -> Result<f64> {
    if a.scheme().n_features() == 1 {
        wasserstein_1d(a, b, p)
    } else {
        Ok(wasserstein_nd(a, b, p, &WassersteinOptions::default())?.distance)
    }
}

/// Record-subsampled `W_p` decision-error sweep.
///
/// `test_bins` holds one joint bin per test-group record.
pub fn run_wasserstein_sweep(
    cfg: &SweepConfig,
    test_bins: &[BinIndex],
    reference: &ProbabilityHistogram,
) -> Result<SweepResult> {
    cfg.validate()?;
    let Baseline::Wasserstein {
        p,
        threshold_factor,
        trials,
        sample_sizes,
    } = &cfg.baseline
    else {
        return Err(AuditError::config(
            "baseline",
            "Wasserstein sweep needs baseline = wasserstein",
        ));
    };
    let scheme = reference.scheme();
    let group = test_bins.len();
    if let Some(&s) = sample_sizes.iter().find(|&&s| s as usize > group) {
        return Err(AuditError::Budget(format!(
            "sample size {s} exceeds test group size {group}"
        )));
    }

    let full = normalize(&histogram_of(scheme, test_bins)?)?;
    let full_distance = distance(&full, reference, *p)?;
    let threshold = threshold_factor * full_distance;
    let full_biased = full_distance >= threshold;

    let mut meta = SweepMetadata::new(cfg.seed, scheme.total_bins());
    meta.full_distance = Some(full_distance);
    meta.threshold = Some(threshold);
    let mut rows = Vec::new();
    for (k, &s) in sample_sizes.iter().enumerate() {
        let stream = (1u64 << 32) + k as u64;
        let distances: Vec<f64> = (0..*trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream, t));
                let picked: Vec<BinIndex> = rand::seq::index::sample(&mut rng, group, s as usize)
                    .into_iter()
                    .map(|i| test_bins[i])
                    .collect();
                let sub = normalize(&histogram_of(scheme, &picked)?)?;
                distance(&sub, reference, *p)
            })
            .collect::<Result<_>>()?;
        let errors = distances
            .iter()
            .filter(|&&d| (d >= threshold) != full_biased)
            .count() as u64;
        let (rate, se) = rate_and_stderr(errors, *trials);
        let mean = distances.iter().sum::<f64>() / distances.len() as f64;
        let var =
            distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / distances.len() as f64;
        meta.distance_spread.push(DistanceSpread {
            s,
            mean,
            std_dev: var.sqrt(),
        });
        meta.eps_targets.push(None);
        meta.violating_bins.push(None);
        rows.push(SweepRow {
            eps: None,
            delta: None,
            s,
            empirical_error: Some(rate),
            analytic_error: None,
            stderr: Some(se),
            trials: *trials,
        });
    }
    Ok(SweepResult {
        rows,
        metadata: meta,
    })
}

/// Both sweeps on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub supnorm: SweepResult,
    pub wasserstein: Option<SweepResult>,
    pub test_records: usize,
    pub reference_records: usize,
}

/// Splits the table by the protected attribute, bins both groups, and runs
/// the configured sweeps. Records with missing scheme features are dropped.
pub fn run_sweep(
    cfg: &SweepConfig,
    table: &Table,
    fingerprint: Option<String>,
) -> Result<SweepOutput> {
    cfg.validate()?;
    let split = subgroup_split(
        table,
        &cfg.protected_column,
        &cfg.subgroup_value,
        cfg.reference,
    )?;
    let bins = table.bin_rows(&cfg.scheme)?;
    let pick = |rows: &[usize]| -> Vec<BinIndex> { rows.iter().filter_map(|&r| bins[r]).collect() };
    let test_bins = pick(&split.test);
    let ref_bins = pick(&split.reference);
    let test = normalize(&histogram_of(&cfg.scheme, &test_bins)?)?;
    let reference = normalize(&histogram_of(&cfg.scheme, &ref_bins)?)?;

    let mut supnorm = run_supnorm_sweep(cfg, &TestMeasure::new(test), &reference)?;
    supnorm.metadata.dataset_fingerprint = fingerprint.clone();
    supnorm.metadata.config = Some(cfg.clone());
    let wasserstein = match cfg.baseline {
        Baseline::None => None,
        Baseline::Wasserstein { .. } => {
            let mut w = run_wasserstein_sweep(cfg, &test_bins, &reference)?;
            w.metadata.dataset_fingerprint = fingerprint;
            w.metadata.config = Some(cfg.clone());
            Some(w)
        }
    };
    Ok(SweepOutput {
        supnorm,
        wasserstein,
        test_records: test_bins.len(),
        reference_records: ref_bins.len(),
    })
}
