//! Point-to-subspace membership in the supremum norm.
//!
//! The reference band is the set of probability measures whose mass in every
//! joint bin lies within `delta` of the reference masses. A test measure is
//! inside iff `|test(i) - ref(i)| < delta` for all `N` bins; a bin with
//! `|test(i) - ref(i)| >= delta` is a violation. Bins empty in both measures
//! take part in the scan like any other bin (they violate only when
//! `delta == 0`).
//!
//! [`subsampled_query`] checks `s` bins drawn uniformly without replacement
//! from all `N`. It can report "inside" for a measure that is outside (a
//! false positive) but never the reverse.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{AuditError, Result};
use crate::histogram::{BinIndex, BinningScheme, ProbabilityHistogram};

/// Reference masses plus the per-bin half-width `delta`.
#[derive(Debug, Clone)]
pub struct ReferenceBand {
    base: ProbabilityHistogram,
    delta: f64,
}

impl ReferenceBand {
    pub fn new(base: ProbabilityHistogram, delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(AuditError::param(format!(
                "band half-width must be finite and >= 0, got {delta}"
            )));
        }
        Ok(ReferenceBand { base, delta })
    }

    pub fn base(&self) -> &ProbabilityHistogram {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn scheme(&self) -> &BinningScheme {
        self.base.scheme()
    }

    /// The band is degenerate at `delta == 0`: every bin violates under the `>=` rule.
    pub fn is_degenerate(&self) -> bool {
        self.delta == 0.0
    }
}

/// The audited measure.
#[derive(Debug, Clone)]
pub struct TestMeasure {
    measure: ProbabilityHistogram,
}

impl TestMeasure {
    pub fn new(measure: ProbabilityHistogram) -> Self {
        TestMeasure { measure }
    }

    pub fn measure(&self) -> &ProbabilityHistogram {
        &self.measure
    }

    pub fn scheme(&self) -> &BinningScheme {
        self.measure.scheme()
    }
}

impl From<ProbabilityHistogram> for TestMeasure {
    fn from(measure: ProbabilityHistogram) -> Self {
        TestMeasure::new(measure)
    }
}

/// Violation rule shared by every query path.
#[inline]
pub fn violates(abs_diff: f64, delta: f64) -> bool {
    abs_diff >= delta
}

/// Per-bin violations `max(|test - ref| - delta, 0)` over the full grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    /// Strictly positive violation magnitudes; every other bin is zero.
    pub violations: BTreeMap<BinIndex, f64>,
    /// Bins with `|test - ref| >= delta`.
    pub count: u64,
    pub total_bins: u64,
    /// `count / total_bins`.
    pub fraction: f64,
    pub sup_norm: f64,
}

impl ViolationReport {
    pub fn violation(&self, idx: BinIndex) -> f64 {
        self.violations.get(&idx).copied().unwrap_or(0.0)
    }

    pub fn inside(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub inside: bool,
    /// A bin with `|test - ref| >= delta`; present iff `inside` is false.
    pub witness: Option<BinIndex>,
    /// The sampled bins in draw order (subsampled queries only).
    pub sampled_bins: Option<Vec<BinIndex>>,
    pub seed: Option<u64>,
}

fn check_aligned(t: &TestMeasure, scheme: &BinningScheme) -> Result<()> {
    t.scheme().ensure_compatible(scheme)
}

/// Merge-join over the union of both supports, yielding `(bin, |test - ref|)`
/// in increasing bin order. Bins outside the union have difference zero.
fn support_diffs<'a>(
    test: &'a ProbabilityHistogram,
    reference: &'a ProbabilityHistogram,
) -> impl Iterator<Item = (BinIndex, f64)> + 'a {
    let mut left = test.masses().iter().peekable();
    let mut right = reference.masses().iter().peekable();
    std::iter::from_fn(move || {
        let (idx, x, y) = match (left.peek(), right.peek()) {
            (None, None) => return None,
            (Some(&(&i, &x)), None) => {
                left.next();
                (i, x, 0.0)
            }
            (None, Some(&(&j, &y))) => {
                right.next();
                (j, 0.0, y)
            }
            (Some(&(&i, &x)), Some(&(&j, &y))) => match i.cmp(&j) {
                Ordering::Less => {
                    left.next();
                    (i, x, 0.0)
                }
                Ordering::Greater => {
                    right.next();
                    (j, 0.0, y)
                }
                Ordering::Equal => {
                    left.next();
                    right.next();
                    (i, x, y)
                }
            },
        };
        Some((idx, (x - y).abs()))
    })
}

/// Smallest bin index not present in either support, if any.
fn first_empty_bin(t: &ProbabilityHistogram, r: &ProbabilityHistogram) -> Option<BinIndex> {
    let n = t.scheme().total_bins();
    let mut expected = 0;
    for (idx, _) in support_diffs(t, r) {
        if idx != expected {
            return Some(expected);
        }
        expected += 1;
    }
    (expected < n).then_some(expected)
}

/// Full scan over all `N` bins.
pub fn exact_query(t: &TestMeasure, band: &ReferenceBand) -> Result<QueryOutcome> {
    check_aligned(t, band.scheme())?;
    let delta = band.delta;
    let mut witness = support_diffs(&t.measure, &band.base)
        .find(|&(_, d)| violates(d, delta))
        .map(|(i, _)| i);
    if witness.is_none() && violates(0.0, delta) {
        witness = first_empty_bin(&t.measure, &band.base);
    }
    Ok(QueryOutcome {
        inside: witness.is_none(),
        witness,
        sampled_bins: None,
        seed: None,
    })
}

pub fn violation_report(t: &TestMeasure, band: &ReferenceBand) -> Result<ViolationReport> {
    check_aligned(t, band.scheme())?;
    let delta = band.delta;
    let n = band.scheme().total_bins();
    let mut violations = BTreeMap::new();
    let mut count = 0u64;
    let mut visited = 0u64;
    let mut sup_norm = 0.0f64;
    for (idx, d) in support_diffs(&t.measure, &band.base) {
        visited += 1;
        sup_norm = sup_norm.max(d);
        if violates(d, delta) {
            count += 1;
        }
        let v = d - delta;
        if v > 0.0 {
            violations.insert(idx, v);
        }
    }
    if violates(0.0, delta) {
        count += n - visited;
    }
    Ok(ViolationReport {
        violations,
        count,
        total_bins: n,
        fraction: count as f64 / n as f64,
        sup_norm,
    })
}

/// `(min_i |test - ref|, max_i |test - ref|)` over all `N` bins.
pub fn delta_range(t: &TestMeasure, base: &ProbabilityHistogram) -> Result<(f64, f64)> {
    check_aligned(t, base.scheme())?;
    let n = base.scheme().total_bins();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut visited = 0u64;
    for (_, d) in support_diffs(&t.measure, base) {
        visited += 1;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if visited < n {
        lo = 0.0;
    }
    Ok((lo, hi))
}

/// All `N` per-bin differences `|test - ref|` sorted in decreasing order,
/// with the zero differences of bins outside both supports appended implicitly.
///
/// Returns the sorted support differences and the number of implicit zeros.
pub fn sorted_diffs(t: &TestMeasure, base: &ProbabilityHistogram) -> Result<(Vec<f64>, u64)> {
    check_aligned(t, base.scheme())?;
    let mut diffs: Vec<f64> = support_diffs(&t.measure, base).map(|(_, d)| d).collect();
    diffs.sort_by(|a, b| b.total_cmp(a));
    let zeros = base.scheme().total_bins() - diffs.len() as u64;
    Ok((diffs, zeros))
}

/// Subsampled membership test on `s` bins drawn without replacement.
///
/// Indices are drawn uniformly from `[0, N)` and decoded by mixed radix, so
/// empty bins are as likely to be sampled as occupied ones.
pub fn subsampled_query(
    t: &TestMeasure,
    band: &ReferenceBand,
    s: u64,
    seed: u64,
) -> Result<QueryOutcome> {
    check_aligned(t, band.scheme())?;
    let n = band.scheme().total_bins();
    if s < 1 || s > n {
        return Err(AuditError::Budget(format!(
            "sample size {s} outside [1, {n}]"
        )));
    }
    let (n_usize, s_usize) = match (usize::try_from(n), usize::try_from(s)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            return Err(AuditError::Budget(format!(
                "N = {n} exceeds the platform index range"
            )))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled: Vec<BinIndex> = rand::seq::index::sample(&mut rng, n_usize, s_usize)
        .into_iter()
        .map(|i| i as BinIndex)
        .collect();

    let delta = band.delta;
    let witness = sampled.iter().copied().find(|&idx| {
        let d = (t.measure.mass(idx) - band.base.mass(idx)).abs();
        violates(d, delta)
    });
    Ok(QueryOutcome {
        inside: witness.is_none(),
        witness,
        sampled_bins: Some(sampled),
        seed: Some(seed),
    })
}

/// Single-line machine-readable verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRecord {
    pub verdict: &'static str,
    pub delta: f64,
    pub s: Option<u64>,
    pub seed: Option<u64>,
    pub witness: Option<Vec<usize>>,
    pub eps_hat: f64,
    pub sup_norm: f64,
}

impl VerdictRecord {
    pub fn new(outcome: &QueryOutcome, band: &ReferenceBand, report: &ViolationReport) -> Self {
        VerdictRecord {
            verdict: if outcome.inside { "TRUE" } else { "FALSE" },
            delta: band.delta(),
            s: outcome.sampled_bins.as_ref().map(|b| b.len() as u64),
            seed: outcome.seed,
            witness: outcome.witness.map(|w| band.scheme().unflatten(w)),
            eps_hat: report.fraction,
            sup_norm: report.sup_norm,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("verdict record serializes")
    }
}
