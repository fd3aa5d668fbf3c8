//! Joint histograms over the Cartesian product of per-feature bins.
//!
//! A [`BinningScheme`] fixes an ordered list of encoded features, each with
//! `b_i` bins, for a total of `N = b_1 * ... * b_n` joint bins. Joint bins are
//! addressed either by their multi-index `(j, ..., z)` or by the row-major flat
//! index in `[0, N)` (last feature varies fastest). Counts and masses are stored
//! sparsely, keyed by flat index; absent bins hold zero.
//!
//! # Text format
//!
//! Histograms serialize to a line-oriented UTF-8 format:
//!
//! ```text
//! #subspace-audit histogram v1
//! values<TAB>counts                      (or `masses`)
//! excluded<TAB>3                          (counts only: records with missing values)
//! feature<TAB>score<TAB>continuous<TAB>1<TAB>11<TAB>10
//! feature<TAB>sex<TAB>categorical<TAB>F<TAB>M
//! bins
//! 0,1<TAB>12
//! 4,0<TAB>7
//! ```
//!
//! Each line after `bins` holds one non-empty joint bin: the comma-separated
//! multi-index, a tab, then the count (or mass). Bins are written in increasing
//! flat-index order, and reals use the shortest representation that round-trips.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::Serialize;

use crate::error::{AuditError, Result};

const HEADER_MAGIC: &str = "#subspace-audit histogram v1";

/// Flat row-major index of a joint bin in `[0, N)`.
pub type BinIndex = u64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FeatureKind {
    Continuous { lower: f64, upper: f64, bins: usize },
    Categorical { categories: Vec<String> },
}

/// One encoded feature and its discretization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSpec {
    name: String,
    kind: FeatureKind,
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() {
        return Err(AuditError::Schema(format!("{what} must not be empty")));
    }
    if s.contains(['\t', '\n', '\r']) {
        return Err(AuditError::Schema(format!(
            "{what} {s:?} contains a tab or line break"
        )));
    }
    Ok(())
}

impl FeatureSpec {
    pub fn continuous(
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        bins: usize,
    ) -> Result<Self> {
        let name = name.into();
        check_token("feature name", &name)?;
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(AuditError::Schema(format!(
                "feature {name}: need finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        if bins == 0 {
            return Err(AuditError::Schema(format!(
                "feature {name}: bins must be >= 1"
            )));
        }
        Ok(FeatureSpec {
            name,
            kind: FeatureKind::Continuous { lower, upper, bins },
        })
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let name = name.into();
        check_token("feature name", &name)?;
        let categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        if categories.is_empty() {
            return Err(AuditError::Schema(format!("feature {name}: no categories")));
        }
        for (i, c) in categories.iter().enumerate() {
            check_token("category", c)?;
            if categories[..i].contains(c) {
                return Err(AuditError::Schema(format!(
                    "feature {name}: duplicate category {c:?}"
                )));
            }
        }
        Ok(FeatureSpec {
            name,
            kind: FeatureKind::Categorical { categories },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    /// Number of bins `b_i`.
    pub fn bins(&self) -> usize {
        match &self.kind {
            FeatureKind::Continuous { bins, .. } => *bins,
            FeatureKind::Categorical { categories } => categories.len(),
        }
    }

    /// Bin of a raw field value, or `None` when the value is missing or unparsable.
    ///
    /// Continuous bins are half-open `[lo, hi)` except the last, which also
    /// holds `upper`. Values outside `[lower, upper]` clamp to the boundary bins.
    pub fn bin_of(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        if raw.is_empty() {
            return None;
        }
        match &self.kind {
            FeatureKind::Continuous { lower, upper, bins } => {
                let v: f64 = raw.parse().ok()?;
                if !v.is_finite() {
                    return None;
                }
                let pos = (*bins as f64 * (v - lower) / (upper - lower)).floor();
                Some(pos.clamp(0.0, (*bins - 1) as f64) as usize)
            }
            FeatureKind::Categorical { categories } => categories.iter().position(|c| c == raw),
        }
    }

    /// Ground-metric coordinate of bin `j`: the bin midpoint for continuous
    /// features, the integer code `j` for categorical ones.
    pub fn center(&self, j: usize) -> f64 {
        match &self.kind {
            FeatureKind::Continuous { lower, upper, bins } => {
                lower + (j as f64 + 0.5) * (upper - lower) / *bins as f64
            }
            FeatureKind::Categorical { .. } => j as f64,
        }
    }
}

/// Ordered features plus the derived joint bin count `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinningScheme {
    features: Vec<FeatureSpec>,
    total_bins: u64,
}

impl BinningScheme {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(AuditError::Schema("binning scheme has no features".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(AuditError::Schema(format!("duplicate feature {}", f.name)));
            }
        }
        let mut total: u64 = 1;
        for f in &features {
            total = total
                .checked_mul(f.bins() as u64)
                .ok_or_else(|| AuditError::Schema("total bin count overflows 64 bits".into()))?;
        }
        Ok(BinningScheme {
            features,
            total_bins: total,
        })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// `N`, the product of per-feature bin counts.
    pub fn total_bins(&self) -> u64 {
        self.total_bins
    }

    pub fn flatten(&self, coords: &[usize]) -> Result<BinIndex> {
        if coords.len() != self.features.len() {
            return Err(AuditError::Index(format!(
                "multi-index has {} coordinates, scheme has {} features",
                coords.len(),
                self.features.len()
            )));
        }
        let mut flat = 0u64;
        for (&c, f) in coords.iter().zip(&self.features) {
            if c >= f.bins() {
                return Err(AuditError::Index(format!(
                    "coordinate {c} out of range for feature {} with {} bins",
                    f.name,
                    f.bins()
                )));
            }
            flat = flat * f.bins() as u64 + c as u64;
        }
        Ok(flat)
    }

    /// Mixed-radix decoding of a flat index. Panics if `flat >= N`.
    pub fn unflatten(&self, flat: BinIndex) -> Vec<usize> {
        assert!(
            flat < self.total_bins,
            "flat index {flat} >= N = {}",
            self.total_bins
        );
        let mut coords = vec![0; self.features.len()];
        let mut rest = flat;
        for (slot, f) in coords.iter_mut().zip(&self.features).rev() {
            let b = f.bins() as u64;
            *slot = (rest % b) as usize;
            rest /= b;
        }
        coords
    }

    /// Bin-center coordinate vector of a joint bin.
    pub fn center(&self, flat: BinIndex) -> Vec<f64> {
        self.unflatten(flat)
            .into_iter()
            .zip(&self.features)
            .map(|(j, f)| f.center(j))
            .collect()
    }

    pub fn check_index(&self, flat: BinIndex) -> Result<()> {
        if flat >= self.total_bins {
            return Err(AuditError::Index(format!(
                "flat index {flat} >= N = {}",
                self.total_bins
            )));
        }
        Ok(())
    }

    pub(crate) fn ensure_compatible(&self, other: &BinningScheme) -> Result<()> {
        if self != other {
            return Err(AuditError::Alignment(
                "histograms use different binning schemes".into(),
            ));
        }
        Ok(())
    }

    fn format_coords(&self, flat: BinIndex) -> String {
        let coords = self.unflatten(flat);
        let parts: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
        parts.join(",")
    }
}

/// Raw counts per joint bin.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    scheme: BinningScheme,
    counts: BTreeMap<BinIndex, u64>,
    total: u64,
    excluded: u64,
}

impl JointHistogram {
    pub fn empty(scheme: BinningScheme) -> Self {
        JointHistogram {
            scheme,
            counts: BTreeMap::new(),
            total: 0,
            excluded: 0,
        }
    }

    /// Builds a histogram from `(flat index, count)` pairs; repeated indices accumulate.
    pub fn from_counts(
        scheme: BinningScheme,
        counts: impl IntoIterator<Item = (BinIndex, u64)>,
    ) -> Result<Self> {
        let mut h = JointHistogram::empty(scheme);
        for (idx, c) in counts {
            h.add(idx, c)?;
        }
        Ok(h)
    }

    pub fn add(&mut self, idx: BinIndex, count: u64) -> Result<()> {
        self.scheme.check_index(idx)?;
        if count > 0 {
            *self.counts.entry(idx).or_insert(0) += count;
            self.total += count;
        }
        Ok(())
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    pub fn counts(&self) -> &BTreeMap<BinIndex, u64> {
        &self.counts
    }

    pub fn count(&self, idx: BinIndex) -> u64 {
        self.counts.get(&idx).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Records dropped during ingestion because a scheme feature was missing or unparsable.
    pub fn excluded(&self) -> u64 {
        self.excluded
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, "counts")?;
        writeln!(w, "excluded\t{}", self.excluded)?;
        write_features(&mut w, &self.scheme)?;
        for (&idx, &c) in &self.counts {
            writeln!(w, "{}\t{}", self.scheme.format_coords(idx), c)?;
        }
        Ok(())
    }
}

/// Normalized masses `a` in the simplex over `N` joint bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityHistogram {
    scheme: BinningScheme,
    masses: BTreeMap<BinIndex, f64>,
}

impl ProbabilityHistogram {
    /// Validates masses: finite, non-negative, and summing to one within `1e-12 * N`.
    /// Zero masses are dropped from storage.
    pub fn from_masses(
        scheme: BinningScheme,
        masses: impl IntoIterator<Item = (BinIndex, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, m) in masses {
            scheme.check_index(idx)?;
            if !(0.0..=1.0).contains(&m) {
                return Err(AuditError::param(format!(
                    "mass {m} at bin {idx} not in [0, 1]"
                )));
            }
            if m > 0.0 && map.insert(idx, m).is_some() {
                return Err(AuditError::param(format!("bin {idx} given twice")));
            }
        }
        let sum: f64 = map.values().sum();
        let tol = 1e-12 * scheme.total_bins() as f64;
        if (sum - 1.0).abs() > tol.max(1e-12) {
            return Err(AuditError::param(format!(
                "masses sum to {sum}, expected 1"
            )));
        }
        Ok(ProbabilityHistogram {
            scheme,
            masses: map,
        })
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    /// Non-zero masses keyed by flat index.
    pub fn masses(&self) -> &BTreeMap<BinIndex, f64> {
        &self.masses
    }

    pub fn mass(&self, idx: BinIndex) -> f64 {
        self.masses.get(&idx).copied().unwrap_or(0.0)
    }

    /// Dense mass vector of length `N`. Only sensible for small schemes.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.scheme.total_bins() as usize];
        for (&i, &m) in &self.masses {
            v[i as usize] = m;
        }
        v
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, "masses")?;
        write_features(&mut w, &self.scheme)?;
        for (&idx, &m) in &self.masses {
            writeln!(w, "{}\t{}", self.scheme.format_coords(idx), m)?;
        }
        Ok(())
    }
}

/// A positive (not necessarily unit-mass) measure restricted to a subset of bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedMeasure {
    scheme: BinningScheme,
    masses: BTreeMap<BinIndex, f64>,
}

impl RestrictedMeasure {
    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    /// Masses on the retained bins, including explicit zeros.
    pub fn masses(&self) -> &BTreeMap<BinIndex, f64> {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.values().sum()
    }
}

/// `a <- normalise h`.
pub fn normalize(h: &JointHistogram) -> Result<ProbabilityHistogram> {
    if h.total == 0 {
        return Err(AuditError::DegenerateInput(
            "cannot normalize a histogram with zero total".into(),
        ));
    }
    let total = h.total as f64;
    let masses = h
        .counts
        .iter()
        .map(|(&i, &c)| (i, c as f64 / total))
        .collect();
    Ok(ProbabilityHistogram {
        scheme: h.scheme.clone(),
        masses,
    })
}

/// Restriction of `m` to the bins in `subset`, without renormalization.
pub fn project(
    m: &ProbabilityHistogram,
    subset: impl IntoIterator<Item = BinIndex>,
) -> Result<RestrictedMeasure> {
    let mut masses = BTreeMap::new();
    for idx in subset {
        m.scheme.check_index(idx)?;
        masses.insert(idx, m.mass(idx));
    }
    if masses.is_empty() {
        return Err(AuditError::param("projection onto an empty bin set"));
    }
    Ok(RestrictedMeasure {
        scheme: m.scheme.clone(),
        masses,
    })
}

/// Equality filter on one column, e.g. `SEX=Female`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordFilter {
    pub column: String,
    pub value: String,
}

impl RecordFilter {
    pub fn new(column: impl Into<String>, value: impl Into<String>) -> Self {
        RecordFilter {
            column: column.into(),
            value: value.into(),
        }
    }
}

impl std::str::FromStr for RecordFilter {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((c, v)) if !c.is_empty() => Ok(RecordFilter::new(c, v)),
            _ => Err(AuditError::param(format!(
                "filter {s:?} is not of the form COL=VAL"
            ))),
        }
    }
}

/// An ingested CSV table: header plus string records.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn from_reader<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(source);
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(AuditError::EmptyInput(
                "CSV source has no header row".into(),
            ));
        }
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err(AuditError::EmptyInput("CSV source has no data rows".into()));
        }
        Ok(Table { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AuditError::Schema(format!("missing column {name}")))
    }

    pub fn field(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }

    /// Row numbers whose `filter.column` equals `filter.value` (after trimming).
    pub fn matching_rows(&self, filter: &RecordFilter) -> Result<Vec<usize>> {
        let col = self.column_index(&filter.column)?;
        Ok((0..self.rows.len())
            .filter(|&r| self.field(r, col).trim() == filter.value)
            .collect())
    }

    /// Flat bin index of every row, `None` where a scheme feature is missing or unparsable.
    pub fn bin_rows(&self, scheme: &BinningScheme) -> Result<Vec<Option<BinIndex>>> {
        let cols = scheme
            .features()
            .iter()
            .map(|f| self.column_index(f.name()))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.rows.len())
            .map(|r| self.bin_row(scheme, &cols, r))
            .collect())
    }

    fn bin_row(&self, scheme: &BinningScheme, cols: &[usize], row: usize) -> Option<BinIndex> {
        let mut flat = 0u64;
        for (f, &c) in scheme.features().iter().zip(cols) {
            let j = f.bin_of(self.field(row, c))?;
            flat = flat * f.bins() as u64 + j as u64;
        }
        Some(flat)
    }

    /// Histogram over the rows passing `filter` (all rows when `None`).
    pub fn histogram(
        &self,
        scheme: &BinningScheme,
        filter: Option<&RecordFilter>,
    ) -> Result<JointHistogram> {
        let bins = self.bin_rows(scheme)?;
        let selected: Vec<usize> = match filter {
            Some(f) => self.matching_rows(f)?,
            None => (0..self.rows.len()).collect(),
        };
        if selected.is_empty() {
            let f = filter.expect("unfiltered table is non-empty");
            return Err(AuditError::NoRecordsMatched {
                column: f.column.clone(),
                value: f.value.clone(),
            });
        }
        let mut h = JointHistogram::empty(scheme.clone());
        for r in selected {
            match bins[r] {
                Some(idx) => {
                    *h.counts.entry(idx).or_insert(0) += 1;
                    h.total += 1;
                }
                None => h.excluded += 1,
            }
        }
        Ok(h)
    }
}

/// Reads CSV records and bins every surviving record into one joint bin.
pub fn ingest_csv<R: Read>(
    source: R,
    scheme: &BinningScheme,
    filter: Option<&RecordFilter>,
) -> Result<JointHistogram> {
    let table = Table::from_reader(source)?;
    table.histogram(scheme, filter)
}

fn write_header<W: Write>(w: &mut W, values: &str) -> Result<()> {
    writeln!(w, "{HEADER_MAGIC}")?;
    writeln!(w, "values\t{values}")?;
    Ok(())
}

fn write_features<W: Write>(w: &mut W, scheme: &BinningScheme) -> Result<()> {
    for f in scheme.features() {
        match f.kind() {
            FeatureKind::Continuous { lower, upper, bins } => writeln!(
                w,
                "feature\t{}\tcontinuous\t{lower}\t{upper}\t{bins}",
                f.name()
            )?,
            FeatureKind::Categorical { categories } => writeln!(
                w,
                "feature\t{}\tcategorical\t{}",
                f.name(),
                categories.join("\t")
            )?,
        }
    }
    writeln!(w, "bins")?;
    Ok(())
}

/// Either kind of histogram file.
#[derive(Debug, Clone, PartialEq)]
pub enum HistogramFile {
    Counts(JointHistogram),
    Masses(ProbabilityHistogram),
}

impl HistogramFile {
    pub fn scheme(&self) -> &BinningScheme {
        match self {
            HistogramFile::Counts(h) => h.scheme(),
            HistogramFile::Masses(m) => m.scheme(),
        }
    }

    /// Normalizes counts; passes masses through.
    pub fn into_probability(self) -> Result<ProbabilityHistogram> {
        match self {
            HistogramFile::Counts(h) => normalize(&h),
            HistogramFile::Masses(m) => Ok(m),
        }
    }
}

fn format_err(line: usize, message: impl Into<String>) -> AuditError {
    AuditError::Format {
        line,
        message: message.into(),
    }
}

/// Parses the text format written by `write_text`.
pub fn read_histogram<R: Read>(source: R) -> Result<HistogramFile> {
    let reader = BufReader::new(source);
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(format_err(
                0,
                format!("unexpected end of file, expected {expect}"),
            )),
        }
    };

    let (n, magic) = next("header")?;
    if magic.trim_end() != HEADER_MAGIC {
        return Err(format_err(n, "not a histogram file"));
    }
    let (n, values) = next("values line")?;
    let is_counts = match values.trim_end() {
        "values\tcounts" => true,
        "values\tmasses" => false,
        _ => return Err(format_err(n, "expected `values<TAB>counts|masses`")),
    };

    let mut excluded = 0;
    let mut features = Vec::new();
    loop {
        let (n, line) = next("`bins`")?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line == "bins" {
            break;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["excluded", v] if is_counts => {
                excluded = v.parse().map_err(|_| format_err(n, "bad excluded count"))?;
            }
            ["feature", name, "continuous", lo, hi, b] => {
                let parse = |s: &str| s.parse::<f64>().map_err(|_| format_err(n, "bad bound"));
                let bins = b.parse().map_err(|_| format_err(n, "bad bin count"))?;
                features.push(FeatureSpec::continuous(
                    *name,
                    parse(lo)?,
                    parse(hi)?,
                    bins,
                )?);
            }
            ["feature", name, "categorical", cats @ ..] => {
                features.push(FeatureSpec::categorical(*name, cats.iter().copied())?);
            }
            _ => return Err(format_err(n, format!("unrecognized line {line:?}"))),
        }
    }
    let scheme = BinningScheme::new(features)?;

    let mut entries = Vec::new();
    for (n, line) in lines {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let (coords, value) = line
            .split_once('\t')
            .ok_or_else(|| format_err(n, "expected `coords<TAB>value`"))?;
        let coords = coords
            .split(',')
            .map(|c| c.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| format_err(n, "bad multi-index"))?;
        let idx = scheme.flatten(&coords)?;
        entries.push((n, idx, value.to_string()));
    }

    if is_counts {
        let mut h = JointHistogram::empty(scheme);
        h.excluded = excluded;
        for (n, idx, v) in entries {
            let c: u64 = v.parse().map_err(|_| format_err(n, "bad count"))?;
            h.add(idx, c)?;
        }
        Ok(HistogramFile::Counts(h))
    } else {
        let masses = entries
            .into_iter()
            .map(|(n, idx, v)| {
                v.parse::<f64>()
                    .map(|m| (idx, m))
                    .map_err(|_| format_err(n, "bad mass"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HistogramFile::Masses(ProbabilityHistogram::from_masses(
            scheme, masses,
        )?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn score_scheme() -> BinningScheme {
        BinningScheme::new(vec![
            FeatureSpec::continuous("score", 1.0, 11.0, 10).unwrap()
        ])
        .unwrap()
    }

    fn one_dim(n: usize) -> BinningScheme {
        BinningScheme::new(vec![FeatureSpec::continuous("x", 0.0, n as f64, n).unwrap()]).unwrap()
    }

    #[test]
    fn ingest_applies_equal_width_rule() {
        let csv = "id,score\na,1\nb,5\nc,10\n";
        let h = ingest_csv(csv.as_bytes(), &score_scheme(), None).unwrap();
        let expected: BTreeMap<u64, u64> = [(0, 1), (4, 1), (9, 1)].into_iter().collect();
        assert_eq!(h.counts(), &expected);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn upper_bound_and_out_of_range_values_clamp() {
        let f = FeatureSpec::continuous("x", 0.0, 10.0, 5).unwrap();
        assert_eq!(f.bin_of("10"), Some(4));
        assert_eq!(f.bin_of("9.999"), Some(4));
        assert_eq!(f.bin_of("2"), Some(1));
        assert_eq!(f.bin_of("-3"), Some(0));
        assert_eq!(f.bin_of("1e9"), Some(4));
        assert_eq!(f.bin_of(""), None);
        assert_eq!(f.bin_of("?"), None);
        assert_eq!(f.bin_of("NaN"), None);
    }

    #[test]
    fn missing_values_are_excluded_and_counted() {
        let csv = "score,g\n1,F\n,F\n?,M\n3,M\n";
        let h = ingest_csv(csv.as_bytes(), &score_scheme(), None).unwrap();
        assert_eq!(h.total(), 2);
        assert_eq!(h.excluded(), 2);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = ingest_csv("a,b\n1,2\n".as_bytes(), &score_scheme(), None).unwrap_err();
        assert!(matches!(err, AuditError::Schema(ref m) if m.contains("score")));
        let f = RecordFilter::new("SEX", "F");
        let err = ingest_csv("score\n1\n".as_bytes(), &score_scheme(), Some(&f)).unwrap_err();
        assert!(matches!(err, AuditError::Schema(ref m) if m.contains("SEX")));
    }

    #[test]
    fn empty_source_and_empty_filter() {
        let err = ingest_csv("".as_bytes(), &score_scheme(), None).unwrap_err();
        assert!(matches!(err, AuditError::EmptyInput(_)));
        let err = ingest_csv("score\n".as_bytes(), &score_scheme(), None).unwrap_err();
        assert!(matches!(err, AuditError::EmptyInput(_)));
        let f = RecordFilter::new("g", "X");
        let err = ingest_csv("score,g\n1,F\n".as_bytes(), &score_scheme(), Some(&f)).unwrap_err();
        assert!(matches!(err, AuditError::NoRecordsMatched { .. }));
    }

    #[test]
    fn quoted_fields_follow_rfc4180() {
        let scheme = BinningScheme::new(vec![FeatureSpec::categorical(
            "city",
            ["New York, NY", "Boston"],
        )
        .unwrap()])
        .unwrap();
        let csv = "city,n\n\"New York, NY\",1\nBoston,2\n\"Boston\",3\n";
        let h = ingest_csv(csv.as_bytes(), &scheme, None).unwrap();
        assert_eq!(h.count(0), 1);
        assert_eq!(h.count(1), 2);
    }

    #[test]
    fn normalize_examples() {
        let s = one_dim(2);
        let m = normalize(&JointHistogram::from_counts(s, [(0, 2), (1, 2)]).unwrap()).unwrap();
        assert_eq!(m.to_dense(), vec![0.5, 0.5]);

        let s = one_dim(3);
        let m = normalize(&JointHistogram::from_counts(s, [(2, 4)]).unwrap()).unwrap();
        assert_eq!(m.to_dense(), vec![0.0, 0.0, 1.0]);

        let err = normalize(&JointHistogram::empty(one_dim(3))).unwrap_err();
        assert!(matches!(err, AuditError::DegenerateInput(_)));
    }

    #[test]
    fn normalize_decile_score_counts() {
        let counts = [1440u64, 941, 747, 769, 681, 641, 592, 512, 508, 383];
        let s = one_dim(10);
        let h =
            JointHistogram::from_counts(s, counts.iter().enumerate().map(|(i, &c)| (i as u64, c)))
                .unwrap();
        let m = normalize(&h).unwrap();
        let total: u64 = counts.iter().sum();
        let sum: f64 = m.masses().values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (i, &c) in counts.iter().enumerate() {
            assert_eq!(m.mass(i as u64), c as f64 / total as f64);
        }
    }

    #[test]
    fn project_examples() {
        let s = one_dim(3);
        let m = ProbabilityHistogram::from_masses(s, [(0, 0.5), (1, 0.3), (2, 0.2)]).unwrap();
        let r = project(&m, [0, 2]).unwrap();
        assert_eq!(r.masses().len(), 2);
        assert_eq!(r.masses()[&0], 0.5);
        assert_eq!(r.masses()[&2], 0.2);
        assert!((r.total_mass() - 0.7).abs() < 1e-15);

        let full = project(&m, 0..3).unwrap();
        assert_eq!(full.masses(), m.masses());

        let u = ProbabilityHistogram::from_masses(one_dim(10), (0..10).map(|i| (i, 0.1))).unwrap();
        assert_eq!(project(&u, [1]).unwrap().total_mass(), 0.1);

        assert!(matches!(
            project(&m, [3]).unwrap_err(),
            AuditError::Index(_)
        ));
        assert!(project(&m, []).is_err());
    }

    #[test]
    fn flatten_round_trip_is_row_major() {
        let s = BinningScheme::new(vec![
            FeatureSpec::continuous("a", 0.0, 1.0, 3).unwrap(),
            FeatureSpec::categorical("b", ["x", "y", "z", "w"]).unwrap(),
        ])
        .unwrap();
        assert_eq!(s.total_bins(), 12);
        assert_eq!(s.flatten(&[1, 2]).unwrap(), 6);
        for flat in 0..12 {
            assert_eq!(s.flatten(&s.unflatten(flat)).unwrap(), flat);
        }
        assert!(s.flatten(&[3, 0]).is_err());
        assert_eq!(s.center(6), vec![0.5, 2.0]);
    }

    #[test]
    fn invalid_features_rejected() {
        assert!(FeatureSpec::continuous("x", 1.0, 1.0, 3).is_err());
        assert!(FeatureSpec::continuous("x", 0.0, 1.0, 0).is_err());
        assert!(FeatureSpec::categorical("c", Vec::<String>::new()).is_err());
        assert!(FeatureSpec::categorical("c", ["a", "a"]).is_err());
        assert!(BinningScheme::new(vec![]).is_err());
    }

    #[test]
    fn text_format_round_trips() {
        let s = BinningScheme::new(vec![
            FeatureSpec::continuous("score", 1.0, 11.0, 10).unwrap(),
            FeatureSpec::categorical("sex", ["F", "M"]).unwrap(),
        ])
        .unwrap();
        let h = JointHistogram::from_counts(s, [(0, 3), (7, 1), (19, 12)]).unwrap();
        let mut buf = Vec::new();
        h.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\n9,1\t12\n"), "{text}");
        assert_eq!(
            read_histogram(buf.as_slice()).unwrap(),
            HistogramFile::Counts(h.clone())
        );

        let m = normalize(&h).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        assert_eq!(
            read_histogram(buf.as_slice()).unwrap(),
            HistogramFile::Masses(m)
        );
    }

    #[test]
    fn reading_rejects_garbage() {
        assert!(read_histogram("hello\n".as_bytes()).is_err());
        let bad = format!(
            "{HEADER_MAGIC}\nvalues\tcounts\nfeature\tx\tcontinuous\t0\t1\t2\nbins\n5\t1\n"
        );
        assert!(matches!(
            read_histogram(bad.as_bytes()).unwrap_err(),
            AuditError::Index(_)
        ));
    }

    #[test]
    fn filter_and_complement_partition_counts() {
        let csv = "score,g\n1,F\n2,M\n3,F\n9,M\n10,F\n";
        let s = score_scheme();
        let all = ingest_csv(csv.as_bytes(), &s, None).unwrap();
        let f = ingest_csv(csv.as_bytes(), &s, Some(&RecordFilter::new("g", "F"))).unwrap();
        let m = ingest_csv(csv.as_bytes(), &s, Some(&RecordFilter::new("g", "M"))).unwrap();
        for idx in 0..s.total_bins() {
            assert_eq!(f.count(idx) + m.count(idx), all.count(idx));
        }
    }

    proptest! {
        #[test]
        fn normalize_yields_probability(counts in proptest::collection::vec(0u64..1000, 1..60)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let s = one_dim(counts.len());
            let h = JointHistogram::from_counts(s, counts.iter().enumerate().map(|(i, &c)| (i as u64, c))).unwrap();
            let m = normalize(&h).unwrap();
            let sum: f64 = m.masses().values().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12 * counts.len() as f64);
            prop_assert!(m.masses().values().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn projection_sums_exactly(
            counts in proptest::collection::vec(1u64..50, 2..40),
            picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..10),
        ) {
            let s = one_dim(counts.len());
            let h = JointHistogram::from_counts(s, counts.iter().enumerate().map(|(i, &c)| (i as u64, c))).unwrap();
            let m = normalize(&h).unwrap();
            let subset: std::collections::BTreeSet<u64> =
                picks.iter().map(|p| p.index(counts.len()) as u64).collect();
            let r = project(&m, subset.iter().copied()).unwrap();
            let direct: f64 = subset.iter().map(|&i| m.mass(i)).sum();
            prop_assert_eq!(r.total_mass(), direct);
        }

        #[test]
        fn binning_is_deterministic(values in proptest::collection::vec(-5.0f64..20.0, 1..100)) {
            let mut csv = String::from("score\n");
            for v in &values {
                csv.push_str(&format!("{v}\n"));
            }
            let a = ingest_csv(csv.as_bytes(), &score_scheme(), None).unwrap();
            let b = ingest_csv(csv.as_bytes(), &score_scheme(), None).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.total(), values.len() as u64);
        }
    }
}
