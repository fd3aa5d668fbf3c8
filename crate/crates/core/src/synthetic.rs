//! Seeded two-group census-like dataset for sweeps and demos.
//!
//! Columns: `sex` (F/M), `income` in [0, 100], `education` level 1..=10 and
//! `hours` in [0, 80]. Group F has lower income and hours and a slightly
//! lower education distribution than group M. About 0.3% of rows have a blank
//! income.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::histogram::{BinningScheme, FeatureSpec};

pub const DEFAULT_ROWS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const FEMALE_SHARE: f64 = 0.45;

struct Group {
    income: Normal<f64>,
    education: Normal<f64>,
    hours: Normal<f64>,
}

impl Group {
    fn new(income: f64, education: f64, hours: f64) -> Self {
        Group {
            income: Normal::new(income, 18.0).expect("valid sd"),
            education: Normal::new(education, 2.0).expect("valid sd"),
            hours: Normal::new(hours, 8.0).expect("valid sd"),
        }
    }
}

pub fn write_synthetic_csv<W: Write>(mut w: W, rows: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let female = Group::new(46.0, 5.0, 36.0);
    let male = Group::new(55.0, 5.6, 41.0);
    writeln!(w, "sex,income,education,hours")?;
    for _ in 0..rows {
        let is_f = rng.random_bool(FEMALE_SHARE);
        let g = if is_f { &female } else { &male };
        let edu = g.education.sample(&mut rng).round().clamp(1.0, 10.0) as u32;
        let income = (g.income.sample(&mut rng) + 2.0 * (edu as f64 - 5.5)).clamp(0.0, 100.0);
        let hours = g.hours.sample(&mut rng).clamp(0.0, 80.0);
        let income = if rng.random_bool(0.003) {
            String::new()
        } else {
            format!("{income:.2}")
        };
        writeln!(
            w,
            "{},{income},{edu},{hours:.1}",
            if is_f { "F" } else { "M" }
        )?;
    }
    Ok(())
}

pub fn synthetic_csv(rows: usize, seed: u64) -> String {
    let mut buf = Vec::new();
    write_synthetic_csv(&mut buf, rows, seed).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// `income` (10 equal-width bins) by `education` (10 levels): `N = 100`.
pub fn synthetic_scheme() -> BinningScheme {
    let levels: Vec<String> = (1..=10).map(|l| l.to_string()).collect();
    BinningScheme::new(vec![
        FeatureSpec::continuous("income", 0.0, 100.0, 10).expect("valid feature"),
        FeatureSpec::categorical("education", levels).expect("valid feature"),
    ])
    .expect("valid scheme")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::Table;

    #[test]
    fn deterministic_and_well_formed() {
        let a = synthetic_csv(2000, 1);
        assert_eq!(a, synthetic_csv(2000, 1));
        assert_ne!(a, synthetic_csv(2000, 2));
        let t = Table::from_reader(a.as_bytes()).unwrap();
        assert_eq!(t.len(), 2000);
        let bins = t.bin_rows(&synthetic_scheme()).unwrap();
        let missing = bins.iter().filter(|b| b.is_none()).count();
        assert!(missing < 30);
        let sex = t.column_index("sex").unwrap();
        let f = (0..t.len()).filter(|&r| t.field(r, sex) == "F").count() as f64 / 2000.0;
        assert!((f - FEMALE_SHARE).abs() < 0.05);
    }
}
