//! Flat `key = value` configuration files.
//!
//! ```text
//! # binning
//! feature = income:continuous:0:100:10
//! feature = education:categorical:1,2,3,4,5,6,7,8,9,10
//! protected_column = sex
//! subgroup_value = F
//! eps_grid = 0.5,0.25,0.1
//! sample_sizes = 5,10,20,40,80
//! ```
//!
//! `feature` may repeat and keeps its order; any other key may appear once.
//! Blank lines and lines starting with `#` are ignored.

use std::path::Path;
use std::str::FromStr;

use crate::error::{AuditError, Result};
use crate::harness::{Baseline, ReferenceMode, SweepConfig, SweepGrid};
use crate::histogram::{BinningScheme, FeatureSpec};

pub const SCHEME_KEYS: &[&str] = &["feature"];

pub const SWEEP_KEYS: &[&str] = &[
    "feature",
    "protected_column",
    "subgroup_value",
    "reference",
    "eps_grid",
    "delta_grid",
    "sample_sizes",
    "trials",
    "seed",
    "baseline",
    "p",
    "threshold_factor",
    "baseline_trials",
    "baseline_sample_sizes",
];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KvConfig {
    entries: Vec<(String, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| AuditError::Format {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(AuditError::Format {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if k != "feature" && entries.iter().any(|(e, _)| e == k) {
                return Err(AuditError::config(
                    k,
                    format!("given twice (line {})", i + 1),
                ));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(KvConfig { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Replaces `key` (a flag override).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.retain(|(k, _)| k != key);
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|(k, _)| !allowed.contains(&k.as_str()))
        {
            Some((k, _)) => Err(AuditError::config(k, "unknown key")),
            None => Ok(()),
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| AuditError::config(key, format!("`{v}`: {e}")))
            })
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| AuditError::config(key, "missing"))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<T>()
                            .map_err(|e| AuditError::config(key, format!("`{x}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn scheme(&self) -> Result<BinningScheme> {
        let features = self
            .entries
            .iter()
            .filter(|(k, _)| k == "feature")
            .map(|(_, v)| parse_feature(v))
            .collect::<Result<Vec<_>>>()?;
        if features.is_empty() {
            return Err(AuditError::config("feature", "no features defined"));
        }
        BinningScheme::new(features).map_err(|e| AuditError::config("feature", e.to_string()))
    }

    pub fn seed(&self) -> Result<Option<u64>> {
        self.parsed("seed")
    }

    /// Builds and validates a sweep; `seed` is used when the file has none.
    pub fn sweep_config(&self, seed: u64) -> Result<SweepConfig> {
        self.check_keys(SWEEP_KEYS)?;
        let scheme = self.scheme()?;
        let reference = match self.get("reference").unwrap_or("population") {
            "population" => ReferenceMode::Population,
            "complement" => ReferenceMode::Complement,
            other => {
                return Err(AuditError::config(
                    "reference",
                    format!("`{other}`: expected population or complement"),
                ))
            }
        };
        let grid = match (
            self.list::<f64>("eps_grid")?,
            self.list::<f64>("delta_grid")?,
        ) {
            (Some(e), None) => SweepGrid::Eps(e),
            (None, Some(d)) => SweepGrid::Delta(d),
            (Some(_), Some(_)) => {
                return Err(AuditError::config(
                    "delta_grid",
                    "give eps_grid or delta_grid, not both",
                ))
            }
            (None, None) => {
                return Err(AuditError::config(
                    "eps_grid",
                    "missing (or give delta_grid)",
                ))
            }
        };
        let sample_sizes: Vec<u64> = self
            .list("sample_sizes")?
            .ok_or_else(|| AuditError::config("sample_sizes", "missing"))?;
        let trials: u64 = self.required("trials")?;
        let baseline = match self.get("baseline").unwrap_or("none") {
            "none" => Baseline::None,
            "wasserstein" => Baseline::Wasserstein {
                p: self.parsed("p")?.unwrap_or(2.0),
                threshold_factor: self.parsed("threshold_factor")?.unwrap_or(1.0),
                trials: self.parsed("baseline_trials")?.unwrap_or(trials),
                sample_sizes: self
                    .list("baseline_sample_sizes")?
                    .unwrap_or_else(|| sample_sizes.clone()),
            },
            other => {
                return Err(AuditError::config(
                    "baseline",
                    format!("`{other}`: expected none or wasserstein"),
                ))
            }
        };
        let cfg = SweepConfig {
            scheme,
            protected_column: self.required("protected_column")?,
            subgroup_value: self.required("subgroup_value")?,
            reference,
            grid,
            sample_sizes,
            trials,
            seed: self.seed()?.unwrap_or(seed),
            baseline,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `name:continuous:lo:hi:bins` or `name:categorical:a,b,c`.
pub fn parse_feature(value: &str) -> Result<FeatureSpec> {
    let bad = |msg: String| AuditError::config("feature", format!("`{value}`: {msg}"));
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [name, "continuous", lo, hi, bins] => {
            let lo: f64 = lo
                .parse()
                .map_err(|_| bad(format!("bad lower bound `{lo}`")))?;
            let hi: f64 = hi
                .parse()
                .map_err(|_| bad(format!("bad upper bound `{hi}`")))?;
            let bins: usize = bins
                .parse()
                .map_err(|_| bad(format!("bad bin count `{bins}`")))?;
            FeatureSpec::continuous(*name, lo, hi, bins).map_err(|e| bad(e.to_string()))
        }
        [name, "categorical", cats] => {
            FeatureSpec::categorical(*name, cats.split(',').map(str::trim))
                .map_err(|e| bad(e.to_string()))
        }
        _ => Err(bad(
            "expected name:continuous:lo:hi:bins or name:categorical:a,b,...".into(),
        )),
    }
}
