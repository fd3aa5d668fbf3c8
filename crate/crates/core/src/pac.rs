//! Sample budgets for the subsampled query and the exact miss probability.
//!
//! The budget follows the epsilon-net theorem,
//! `s = ceil(max((c_net d / eps) ln(c_net d / eps), (c_conf / eps) ln(c_num / delta)))`,
//! with `d` a bound on the VC dimension of the union of the two halfspace
//! range spaces, `d = ceil(c_u (n + 1) log2(n + 2))`. The constants default to
//! `c_net = 8`, `c_conf = 4`, `c_num = 2`, `c_u = 2` and can be overridden.
//!
//! The exact false-positive probability of a without-replacement sample of `s`
//! bins, `K` of `N` of which violate, is hypergeometric:
//! `C(N - K, s) / C(N, s)`.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsNetConstants {
    /// Multiplier on `(n + 1) log2(n + 2)` in the VC-dimension bound.
    pub vc_union: f64,
    pub net: f64,
    pub confidence: f64,
    pub confidence_numerator: f64,
}

impl Default for EpsNetConstants {
    fn default() -> Self {
        EpsNetConstants {
            vc_union: 2.0,
            net: 8.0,
            confidence: 4.0,
            confidence_numerator: 2.0,
        }
    }
}

/// `d = ceil(2 (n + 1) log2(n + 2))`, never less than `n + 1`.
pub fn vc_dimension_bound(n_features: u32) -> u64 {
    vc_dimension_bound_with(n_features, &EpsNetConstants::default())
}

pub fn vc_dimension_bound_with(n_features: u32, constants: &EpsNetConstants) -> u64 {
    let n = n_features as f64;
    let d = (constants.vc_union * (n + 1.0) * (n + 2.0).log2()).ceil();
    (d as u64).max(n_features as u64 + 1)
}

fn check_open_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(AuditError::param(format!(
            "{name} must lie in (0, 1), got {x}"
        )));
    }
    Ok(())
}

pub fn sample_size(eps: f64, delta_prob: f64, vc_dim: u64) -> Result<u64> {
    sample_size_with(eps, delta_prob, vc_dim, &EpsNetConstants::default())
}

pub fn sample_size_with(
    eps: f64,
    delta_prob: f64,
    vc_dim: u64,
    constants: &EpsNetConstants,
) -> Result<u64> {
    check_open_unit("eps", eps)?;
    check_open_unit("delta", delta_prob)?;
    if vc_dim == 0 {
        return Err(AuditError::param("VC dimension must be >= 1"));
    }
    let ratio = constants.net * vc_dim as f64 / eps;
    let net_term = ratio * ratio.ln();
    let conf_term = constants.confidence / eps * (constants.confidence_numerator / delta_prob).ln();
    let s = net_term.max(conf_term).ceil();
    if !s.is_finite() || s >= u64::MAX as f64 {
        return Err(AuditError::param("sample size overflows"));
    }
    Ok((s as u64).max(1))
}

/// Epsilon-net budget for `n` encoded features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleBudget {
    pub eps: f64,
    pub delta_prob: f64,
    pub n_features: u32,
    pub vc_dim: u64,
    pub s: u64,
}

impl SampleBudget {
    pub fn new(eps: f64, delta_prob: f64, n_features: u32) -> Result<Self> {
        Self::with_constants(eps, delta_prob, n_features, &EpsNetConstants::default())
    }

    pub fn with_constants(
        eps: f64,
        delta_prob: f64,
        n_features: u32,
        constants: &EpsNetConstants,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(AuditError::param("number of features must be >= 1"));
        }
        let vc_dim = vc_dimension_bound_with(n_features, constants);
        let s = sample_size_with(eps, delta_prob, vc_dim, constants)?;
        Ok(SampleBudget {
            eps,
            delta_prob,
            n_features,
            vc_dim,
            s,
        })
    }

    /// `min(s, N)`; beyond `N` the full scan is cheaper and exact.
    pub fn capped(&self, total_bins: u64) -> u64 {
        self.s.min(total_bins)
    }
}

/// `P[sample of s bins misses all K violating bins] = C(N - K, s) / C(N, s)`.
///
/// Evaluated as a product of `min(K, s)` ratios in log space, so it stays
/// finite for `N` far beyond what binomial coefficients in `f64` allow.
pub fn analytic_false_positive(n_bins: u64, violating: u64, s: u64) -> Result<f64> {
    if n_bins == 0 {
        return Err(AuditError::param("N must be >= 1"));
    }
    if violating > n_bins {
        return Err(AuditError::param(format!(
            "K = {violating} exceeds N = {n_bins}"
        )));
    }
    if s < 1 || s > n_bins {
        return Err(AuditError::param(format!("s = {s} outside [1, {n_bins}]")));
    }
    if violating == 0 {
        return Ok(1.0);
    }
    if s > n_bins - violating {
        return Ok(0.0);
    }
    // C(N-K, s)/C(N, s) = prod_{i<s} (1 - K/(N-i)) = prod_{i<K} (1 - s/(N-i))
    let (terms, numer) = if violating <= s {
        (violating, s)
    } else {
        (s, violating)
    };
    let n = n_bins as f64;
    let mut log_p = 0.0f64;
    for i in 0..terms {
        log_p += (-(numer as f64) / (n - i as f64)).ln_1p();
        if log_p < -800.0 {
            return Ok(0.0);
        }
    }
    Ok(log_p.exp())
}

/// With-replacement miss probability `(1 - eps)^s`; an upper bound on the
/// without-replacement value.
pub fn with_replacement_false_positive(eps: f64, s: u64) -> f64 {
    (1.0 - eps).powf(s as f64)
}
