//! Kernel-weighted conditional transport of a numeric mediator: estimates
//! `Q1(F0(x | z0) | z1)` from child/parent samples in each treatment group,
//! plus the bivariate Gaussian closed form used as an oracle.

use crate::error::{Error, Result};
use crate::univariate::{GaussianParams, WeightedDistribution};

/// Gaussian product kernel with one bandwidth per parent dimension.
///
/// `bandwidths: None` means Silverman's rule per dimension, computed from the
/// rows the weights are evaluated on (so each group gets its own scale).
#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub bandwidths: Option<Vec<f64>>,
    /// Relative floor in (0, 1]: weights below `floor * max` are zeroed
    /// before normalization, dropping atoms with no effective mass.
    pub min_effective_weight: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidths: None,
            min_effective_weight: 1e-7,
        }
    }
}

impl KernelConfig {
    pub fn with_bandwidths(bandwidths: Vec<f64>) -> Self {
        KernelConfig {
            bandwidths: Some(bandwidths),
            ..Default::default()
        }
    }
}

/// Silverman's rule-of-thumb bandwidth `1.06 sd n^{-1/5}` for one column.
pub fn silverman_bandwidth(column: &[f64]) -> f64 {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (1.06 * var.sqrt() * n.powf(-0.2)).max(1e-9)
}

fn bandwidths_for(rows: &[Vec<f64>], cfg: &KernelConfig) -> Result<Vec<f64>> {
    let p = rows[0].len();
    match &cfg.bandwidths {
        Some(h) => {
            if h.len() != p {
                return Err(Error::DimensionMismatch { left: h.len(), right: p });
            }
            if h.iter().any(|&x| x <= 0.0) {
                return Err(Error::Config("bandwidths must be positive".into()));
            }
            Ok(h.clone())
        }
        None => Ok((0..p)
            .map(|j| {
                let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                silverman_bandwidth(&col)
            })
            .collect()),
    }
}

/// Normalized Gaussian kernel weights of `parent_rows` around `query`.
///
/// Errors with `DegenerateWeights` when the effective sample size
/// `(Σw)²/Σw²` falls below 2, signalling no local data.
pub fn kernel_weights(parent_rows: &[Vec<f64>], query: &[f64], cfg: &KernelConfig) -> Result<Vec<f64>> {
    if parent_rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let p = query.len();
    if parent_rows[0].len() != p {
        return Err(Error::DimensionMismatch {
            left: parent_rows[0].len(),
            right: p,
        });
    }
    if cfg.min_effective_weight <= 0.0 || cfg.min_effective_weight > 1.0 {
        return Err(Error::Config(
            "min_effective_weight must lie in (0, 1]".into(),
        ));
    }
    let h = bandwidths_for(parent_rows, cfg)?;
    // log-kernel, shifted by the max for stable normalization
    let mut logw: Vec<f64> = parent_rows
        .iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..p {
                let d = (row[j] - query[j]) / h[j];
                s += d * d;
            }
            -0.5 * s
        })
        .collect();
    let m = logw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let floor = cfg.min_effective_weight.ln();
    for v in &mut logw {
        let shifted = *v - m;
        *v = if shifted < floor { 0.0 } else { shifted.exp() };
    }
    let total: f64 = logw.iter().sum();
    let w: Vec<f64> = logw.iter().map(|v| v / total).collect();
    let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
    // with exactly two rows an uneven but informative split (ess up to 2) is
    // fine; only complete domination by one row signals no local data there
    let floor = if parent_rows.len() == 2 { 1.0 + 1e-6 } else { 2.0 };
    if parent_rows.len() >= 2 && ess < floor {
        return Err(Error::DegenerateWeights { ess });
    }
    Ok(w)
}

/// Child values paired with parent rows for one treatment group.
#[derive(Debug, Clone, Copy)]
pub struct GroupSample<'a> {
    pub child: &'a [f64],
    pub parents: &'a [Vec<f64>],
}

/// Kernel-conditional transport `Q1(F0(x | z0) | z1)`.
///
/// `z0` conditions the source CDF on group-0 parent rows; `z1` (typically the
/// transported parents) conditions the target quantile on group-1 rows.
pub fn conditional_transport(
    x: f64,
    z0: &[f64],
    z1: &[f64],
    group0: GroupSample,
    group1: GroupSample,
    cfg: &KernelConfig,
) -> Result<f64> {
    Ok(conditional_transport_flagged(x, z0, z1, group0, group1, cfg)?.0)
}

/// Same map, also reporting whether the source CDF clamped.
pub fn conditional_transport_flagged(
    x: f64,
    z0: &[f64],
    z1: &[f64],
    group0: GroupSample,
    group1: GroupSample,
    cfg: &KernelConfig,
) -> Result<(f64, bool)> {
    if group0.child.len() != group0.parents.len() {
        return Err(Error::DimensionMismatch {
            left: group0.child.len(),
            right: group0.parents.len(),
        });
    }
    if group1.child.len() != group1.parents.len() {
        return Err(Error::DimensionMismatch {
            left: group1.child.len(),
            right: group1.parents.len(),
        });
    }
    let w0 = kernel_weights(group0.parents, z0, cfg)?;
    let w1 = kernel_weights(group1.parents, z1, cfg)?;
    let f0 = WeightedDistribution::fit(group0.child, &w0)?;
    let q1 = WeightedDistribution::fit(group1.child, &w1)?;
    let c = f0.cdf_flagged(x);
    Ok((q1.quantile(c.u), c.clamped))
}

/// Closed-form conditional Gaussian OT map for a bivariate chain `X1 -> X2`:
/// maps `x2` from the law of `X2 | (A=0, X1=x1)` to `X2 | (A=1, X1=x1_dagger)`.
pub fn gaussian_conditional_map(
    p0: &GaussianParams,
    p1: &GaussianParams,
    x2: f64,
    x1: f64,
    x1_dagger: f64,
) -> Result<f64> {
    let moments = |p: &GaussianParams| -> Result<(f64, f64, f64, f64, f64)> {
        if p.mean.len() != 2 {
            return Err(Error::DimensionMismatch { left: p.mean.len(), right: 2 });
        }
        let s1 = p.covariance[[0, 0]];
        let s2 = p.covariance[[1, 1]];
        let c = p.covariance[[0, 1]];
        if s1 <= 0.0 || s2 <= 0.0 || c * c >= s1 * s2 {
            return Err(Error::DegenerateCovariance);
        }
        let rho = c / (s1.sqrt() * s2.sqrt());
        Ok((p.mean[0], p.mean[1], s1.sqrt(), s2.sqrt(), rho))
    };
    let (m10, m20, s10, s20, r0) = moments(p0)?;
    let (m11, m21, s11, s21, r1) = moments(p1)?;
    let mu_cond0 = m20 + r0 * s20 / s10 * (x1 - m10);
    let mu_cond1 = m21 + r1 * s21 / s11 * (x1_dagger - m11);
    let sd_cond0 = s20 * (1.0 - r0 * r0).sqrt();
    let sd_cond1 = s21 * (1.0 - r1 * r1).sqrt();
    Ok(mu_cond1 + sd_cond1 / sd_cond0 * (x2 - mu_cond0))
}
