//! Smoothed weighted empirical CDF/quantile evaluators and the univariate
//! monotone transport map `T = Q1 ∘ F0`, with Gaussian closed forms.
//!
//! Smoothing scheme: duplicate values merge weights, then the CDF is linear
//! between consecutive distinct order statistics with knot heights at the
//! weight midpoints `F(v_k) = (w_1 + ... + w_{k-1}) + w_k / 2`. The quantile
//! is the exact piecewise-linear inverse, so `Q(F(x)) = x` on the sample
//! range. Outside the knot range, F clamps to `[u_min, 1 - u_min]` with
//! `u_min = 1/(2 n_eff)`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;

/// Weighted sample with piecewise-linear CDF and quantile evaluators.
#[derive(Debug, Clone)]
pub struct WeightedDistribution {
    /// Distinct values, strictly increasing.
    values: Vec<f64>,
    /// CDF knot heights at `values`, strictly increasing in (0, 1).
    knots: Vec<f64>,
    /// Kish effective sample size of the normalized weights.
    n_eff: f64,
}

/// Result of a CDF evaluation, with an out-of-range clamp flag.
#[derive(Debug, Clone, Copy)]
pub struct CdfValue {
    pub u: f64,
    pub clamped: bool,
}

impl WeightedDistribution {
    /// Fit from a sample and nonnegative weights (normalized internally).
    pub fn fit(sample: &[f64], weights: &[f64]) -> Result<Self> {
        let mut order: Vec<usize> = (0..sample.len()).collect();
        order.sort_by(|&a, &b| sample[a].partial_cmp(&sample[b]).unwrap());
        Self::fit_with_order(sample, weights, &order)
    }

    /// Fit using a precomputed ascending sort permutation of `sample`; lets a
    /// caller reweight the same sample many times without re-sorting.
    pub fn fit_with_order(sample: &[f64], weights: &[f64], order: &[usize]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if sample.len() != weights.len() || sample.len() != order.len() {
            return Err(Error::DimensionMismatch {
                left: sample.len(),
                right: weights.len(),
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::NegativeWeight { index: i, weight: w });
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::AllWeightsZero);
        }

        // merge duplicates so the knot sequence is strictly increasing
        let mut values: Vec<f64> = Vec::new();
        let mut merged: Vec<f64> = Vec::new();
        for &i in order {
            let w = weights[i] / total;
            if w == 0.0 {
                continue;
            }
            match values.last() {
                Some(&v) if v == sample[i] => *merged.last_mut().unwrap() += w,
                _ => {
                    values.push(sample[i]);
                    merged.push(w);
                }
            }
        }
        let sum_sq: f64 = merged.iter().map(|w| w * w).sum();
        let n_eff = 1.0 / sum_sq;

        let mut knots = Vec::with_capacity(values.len());
        let mut cum = 0.0;
        for &w in &merged {
            knots.push(cum + w / 2.0);
            cum += w;
        }
        Ok(WeightedDistribution { values, knots, n_eff })
    }

    /// Fit with uniform weights.
    pub fn fit_uniform(sample: &[f64]) -> Result<Self> {
        Self::fit(sample, &vec![1.0; sample.len()])
    }

    pub fn n_eff(&self) -> f64 {
        self.n_eff
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    fn u_min(&self) -> f64 {
        (0.5 / self.n_eff).min(0.5)
    }

    /// CDF with clamp flag; clamped to `[u_min, 1 - u_min]` outside the knots.
    pub fn cdf_flagged(&self, x: f64) -> CdfValue {
        if self.values.len() == 1 {
            // point mass: right-continuous step
            return CdfValue {
                u: if x >= self.values[0] { 1.0 } else { 0.0 },
                clamped: false,
            };
        }
        let lo = self.u_min();
        let hi = 1.0 - lo;
        if x < self.values[0] {
            return CdfValue { u: lo, clamped: true };
        }
        if x > self.max() {
            return CdfValue { u: hi, clamped: true };
        }
        let u = interp(&self.values, &self.knots, x).clamp(lo, hi);
        CdfValue { u, clamped: false }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_flagged(x).u
    }

    /// Piecewise-linear inverse of the CDF; beyond the knot range it clamps to
    /// the sample extremes.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        if u <= self.knots[0] {
            return self.values[0];
        }
        if u >= *self.knots.last().unwrap() {
            return self.max();
        }
        interp(&self.knots, &self.values, u)
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    // xs strictly increasing; x within [xs[0], xs[last]]
    let k = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => return ys[i],
        Err(i) => i,
    };
    if k == 0 {
        return ys[0];
    }
    if k >= xs.len() {
        return *ys.last().unwrap();
    }
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// Monotone rearrangement `Q_target(F_source(x))`.
pub fn monotone_transport(
    source: &WeightedDistribution,
    target: &WeightedDistribution,
    x: f64,
) -> f64 {
    target.quantile(source.cdf(x))
}

/// Same map, reporting whether the source CDF clamped out of range.
pub fn monotone_transport_flagged(
    source: &WeightedDistribution,
    target: &WeightedDistribution,
    x: f64,
) -> (f64, bool) {
    let c = source.cdf_flagged(x);
    (target.quantile(c.u), c.clamped)
}

/// Mean vector plus symmetric PSD covariance (eigenvalues clamped at zero).
#[derive(Debug, Clone)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub covariance: Array2<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, covariance: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                left: covariance.nrows(),
                right: d,
            });
        }
        for i in 0..d {
            for j in 0..d {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-9 {
                    return Err(Error::DegenerateCovariance);
                }
            }
        }
        let (w, _) = linalg::sym_eigen(&covariance);
        if w.iter().any(|&x| x < -1e-12) {
            return Err(Error::DegenerateCovariance);
        }
        // clamp tiny negative eigenvalue drift by symmetrizing in place
        Ok(GaussianParams { mean, covariance })
    }

    pub fn univariate(mean: f64, sd: f64) -> Self {
        GaussianParams {
            mean: vec![mean],
            covariance: Array2::from_elem((1, 1), sd * sd),
        }
    }

    pub fn sd(&self) -> f64 {
        self.covariance[[0, 0]].max(0.0).sqrt()
    }
}

/// Closed-form univariate Gaussian OT map `m1 + (s1/s0)(x - m0)`.
pub fn gaussian_affine_map(p0: &GaussianParams, p1: &GaussianParams, x: f64) -> Result<f64> {
    let s0 = p0.sd();
    if s0 == 0.0 {
        return Err(Error::DegenerateSource);
    }
    Ok(p1.mean[0] + p1.sd() / s0 * (x - p0.mean[0]))
}
