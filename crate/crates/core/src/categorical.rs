//! Categorical mediators as simplex points: multinomial-logit class
//! probabilities, entropic transport of probability vectors, and semi-discrete
//! allocation of transported points to vertices under marginal constraints.

use ndarray::{Array1, Array2, ArrayView2};

use crate::discrete::{self, TransportPlan};
use crate::error::{Error, Result};
use crate::linalg;

/// Coefficient norm beyond which the multinomial fit is declared separated.
const SEPARATION_CAP: f64 = 30.0;

/// Probability vector over K levels; sums to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    probs: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSimplexPoint("empty".into()));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidSimplexPoint(format!("{probs:?}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSimplexPoint(format!("sum = {s}")));
        }
        Ok(SimplexPoint { probs })
    }

    /// Clamp negatives to zero and rescale to an exact simplex point.
    pub fn renormalize(mut raw: Vec<f64>) -> Result<Self> {
        for p in &mut raw {
            if !p.is_finite() {
                return Err(Error::InvalidSimplexPoint("non-finite".into()));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let s: f64 = raw.iter().sum();
        if s <= 0.0 {
            return Err(Error::InvalidSimplexPoint("zero mass".into()));
        }
        for p in &mut raw {
            *p /= s;
        }
        Ok(SimplexPoint { probs: raw })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// One-hot vertex `e_k`.
    pub fn vertex(k: usize, levels: usize) -> Self {
        let mut probs = vec![0.0; levels];
        probs[k] = 1.0;
        SimplexPoint { probs }
    }
}

/// Smallest level index attaining the maximum probability.
pub fn argmax_label(p: &SimplexPoint) -> usize {
    let mut best = 0;
    for (k, &v) in p.probs.iter().enumerate() {
        if v > p.probs[best] {
            best = k;
        }
    }
    best
}

/// Multinomial logit with the last level as reference (logit fixed at 0).
/// Coefficients act on standardized predictors internally.
#[derive(Debug, Clone)]
pub struct ClassProbModel {
    levels: usize,
    /// (K-1) x (p+1): intercept then one slope per predictor, on the
    /// standardized scale.
    coef_std: Array2<f64>,
    centers: Vec<f64>,
    scales: Vec<f64>,
}

impl ClassProbModel {
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Coefficients on the original predictor scale, (K-1) x (p+1).
    pub fn coefficients(&self) -> Array2<f64> {
        let km1 = self.levels - 1;
        let p = self.centers.len();
        let mut out = Array2::zeros((km1, p + 1));
        for a in 0..km1 {
            let mut intercept = self.coef_std[[a, 0]];
            for j in 0..p {
                let slope = self.coef_std[[a, j + 1]] / self.scales[j];
                out[[a, j + 1]] = slope;
                intercept -= slope * self.centers[j];
            }
            out[[a, 0]] = intercept;
        }
        out
    }

    pub fn predict(&self, predictors: &[f64]) -> SimplexPoint {
        let km1 = self.levels - 1;
        let mut logits = vec![0.0f64; self.levels];
        for a in 0..km1 {
            let mut s = self.coef_std[[a, 0]];
            for (j, &x) in predictors.iter().enumerate() {
                s += self.coef_std[[a, j + 1]] * (x - self.centers[j]) / self.scales[j];
            }
            logits[a] = s;
        }
        let mx = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let mut probs: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        SimplexPoint { probs }
    }
}

/// Maximum-likelihood multinomial logit by Newton iterations from a zero
/// start. `labels` are level codes in `0..levels`.
pub fn fit_multinomial_logit(
    labels: &[usize],
    predictors: ArrayView2<f64>,
    levels: usize,
) -> Result<ClassProbModel> {
    let n = labels.len();
    if n == 0 || predictors.nrows() != n {
        return Err(Error::DimensionMismatch { left: predictors.nrows(), right: n });
    }
    let observed: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if observed.len() < 2 {
        return Err(Error::SchemaMismatch(
            "multinomial fit needs at least two observed levels".into(),
        ));
    }
    if labels.iter().any(|&l| l >= levels) {
        return Err(Error::IndexOutOfRange {
            index: *labels.iter().max().unwrap(),
            max: levels - 1,
        });
    }
    let p = predictors.ncols();
    let mut centers = vec![0.0f64; p];
    let mut scales = vec![1.0f64; p];
    for j in 0..p {
        let col = predictors.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        if var.sqrt() < 1e-12 {
            return Err(Error::RankDeficientPredictors(j));
        }
        centers[j] = mean;
        scales[j] = var.sqrt();
    }

    let km1 = levels - 1;
    let dim = km1 * (p + 1);
    let mut beta = Array2::<f64>::zeros((km1, p + 1));
    let xrow = |i: usize, j: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            (predictors[[i, j - 1]] - centers[j - 1]) / scales[j - 1]
        }
    };

    for _iter in 0..200 {
        // class probabilities at current coefficients
        let mut probs = Array2::<f64>::zeros((n, levels));
        for i in 0..n {
            let mut mx = 0.0f64; // reference logit is 0
            let mut logits = vec![0.0f64; levels];
            for a in 0..km1 {
                let mut s = 0.0;
                for j in 0..=p {
                    s += beta[[a, j]] * xrow(i, j);
                }
                logits[a] = s;
                mx = mx.max(s);
            }
            let mut total = 0.0;
            for a in 0..levels {
                let e = (logits[a] - mx).exp();
                probs[[i, a]] = e;
                total += e;
            }
            for a in 0..levels {
                probs[[i, a]] /= total;
            }
        }
        // gradient and (negative) Hessian of the log-likelihood
        let mut grad = Array1::<f64>::zeros(dim);
        let mut hess = Array2::<f64>::zeros((dim, dim));
        for i in 0..n {
            for a in 0..km1 {
                let ya = if labels[i] == a { 1.0 } else { 0.0 };
                let ra = ya - probs[[i, a]];
                for j in 0..=p {
                    grad[a * (p + 1) + j] += ra * xrow(i, j);
                }
                for b in 0..km1 {
                    let w = probs[[i, a]] * (if a == b { 1.0 } else { 0.0 } - probs[[i, b]]);
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..=p {
                        let xij = xrow(i, j);
                        for l in 0..=p {
                            hess[[a * (p + 1) + j, b * (p + 1) + l]] -= w * xij * xrow(i, l);
                        }
                    }
                }
            }
        }
        for d in 0..dim {
            hess[[d, d]] -= 1e-8 * n as f64;
        }
        let step = linalg::solve(&hess.mapv(|x| -x), &grad)?;
        let max_step = step.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        for a in 0..km1 {
            for j in 0..=p {
                beta[[a, j]] += step[a * (p + 1) + j];
            }
        }
        let norm = beta.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > SEPARATION_CAP {
            return Err(Error::SeparationDetected(SEPARATION_CAP));
        }
        if max_step < 1e-10 {
            break;
        }
    }
    Ok(ClassProbModel { levels, coef_std: beta, centers, scales })
}

fn points_matrix(points: &[SimplexPoint]) -> Result<Array2<f64>> {
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = points[0].len();
    if points.iter().any(|p| p.len() != k) {
        return Err(Error::DimensionMismatch { left: k, right: 0 });
    }
    Ok(Array2::from_shape_fn((points.len(), k), |(i, j)| {
        points[i].probs()[j]
    }))
}

/// Entropic transport of source simplex points onto a target cloud: solves
/// weighted Sinkhorn under squared Euclidean cost and returns the barycentric
/// projection of each source point, renormalized to exact simplex points.
pub fn transport_simplex_points(
    source: &[SimplexPoint],
    target: &[SimplexPoint],
    w0: &[f64],
    w1: &[f64],
    gamma: f64,
) -> Result<Vec<SimplexPoint>> {
    let s = points_matrix(source)?;
    let t = points_matrix(target)?;
    if s.ncols() != t.ncols() {
        return Err(Error::DimensionMismatch { left: s.ncols(), right: t.ncols() });
    }
    let cost = discrete::cost_matrix(s.view(), t.view())?;
    let sk = discrete::sinkhorn(&cost, w0, w1, gamma, 1e-8, 10_000)?;
    barycentric_simplex(&sk.plan, target)
}

/// Barycentric projection of a plan onto target simplex points.
pub fn barycentric_simplex(plan: &TransportPlan, target: &[SimplexPoint]) -> Result<Vec<SimplexPoint>> {
    let t = points_matrix(target)?;
    let mapped = discrete::barycentric_map(plan, t.view())?;
    (0..mapped.nrows())
        .map(|i| SimplexPoint::renormalize(mapped.row(i).to_vec()))
        .collect()
}

/// Largest-remainder rounding of `n * proportions` to integer counts summing
/// to `n`. Remainder ties break toward the smaller level index.
pub fn rounded_counts(proportions: &[f64], n: usize) -> Vec<usize> {
    let k = proportions.len();
    let total: f64 = proportions.iter().sum();
    let mut counts: Vec<usize> = Vec::with_capacity(k);
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(k);
    let mut assigned = 0usize;
    for (idx, &p) in proportions.iter().enumerate() {
        let exact = p / total * n as f64;
        let fl = exact.floor() as usize;
        counts.push(fl);
        assigned += fl;
        remainders.push((idx, exact - fl as f64));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(idx, _) in remainders.iter().take(n - assigned) {
        counts[idx] += 1;
    }
    counts
}

/// Assign each point to a simplex vertex so that label frequencies equal the
/// largest-remainder rounding of `target_proportions` and the total squared
/// distance is minimal. Solved as a finite transportation LP; split points in
/// the extreme-point solution go to the column holding their largest share.
pub fn allocate_to_vertices(points: &[SimplexPoint], target_proportions: &[f64]) -> Result<Vec<usize>> {
    let pts = points_matrix(points)?;
    let n = pts.nrows();
    let k = target_proportions.len();
    if pts.ncols() != k {
        return Err(Error::DimensionMismatch { left: pts.ncols(), right: k });
    }
    let counts = rounded_counts(target_proportions, n);
    let vertices = Array2::from_shape_fn((k, k), |(a, b)| if a == b { 1.0 } else { 0.0 });
    let cost = discrete::cost_matrix(pts.view(), vertices.view())?;
    let w0 = vec![1.0 / n as f64; n];
    let w1: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let plan = discrete::solve_exact(&cost, &w0, &w1)?;
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let row = plan.plan.row(i);
            let mut best = 0usize;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    use crate::rng::stream_rng;

    #[test]
    fn argmax_examples() {
        let p = SimplexPoint::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(argmax_label(&p), 1);
        let p = SimplexPoint::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(argmax_label(&p), 0); // tie-break to the lowest index
        let p = SimplexPoint::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(argmax_label(&p), 0);
    }

    #[test]
    fn argmax_stable_under_small_perturbation() {
        let base = SimplexPoint::new(vec![0.55, 0.35, 0.10]).unwrap();
        let margin = 0.55 - 0.35;
        let eps = margin / 2.0 - 1e-6;
        // any sup-norm perturbation below half the margin keeps the argmax
        let perturbed =
            SimplexPoint::renormalize(vec![0.55 - eps, 0.35 + eps, 0.10]).unwrap();
        assert_eq!(argmax_label(&base), argmax_label(&perturbed));
    }

    #[test]
    fn frequencies_recovered_when_labels_independent() {
        let n = 2000;
        let mut rng = stream_rng(11, 2);
        let freqs = [0.5, 0.3, 0.2];
        let labels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.5 {
                    0
                } else if u < 0.8 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let preds = Array2::from_shape_fn((n, 1), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let model = fit_multinomial_logit(&labels, preds.view(), 3).unwrap();
        let emp: Vec<f64> = (0..3)
            .map(|k| labels.iter().filter(|&&l| l == k).count() as f64 / n as f64)
            .collect();
        for x in [-1.0, 0.0, 1.0] {
            let p = model.predict(&[x]);
            for k in 0..3 {
                assert!((p.probs()[k] - emp[k]).abs() <= 0.02, "freq mismatch {emp:?} vs {p:?} (oracle {freqs:?})");
            }
        }
    }

    #[test]
    fn logit_coefficients_recovered() {
        // DGP: the three-level softmax with logits
        //   l_0 = 0.5 + 0.3 x1 - 0.4 x2 + 0.2 a
        //   l_1 = -0.3 - 0.2 x1 + 0.5 x2 - 0.1 a
        //   l_2 = 0
        let n = 5000;
        let mut rng = stream_rng(12, 2);
        let mut preds = Array2::zeros((n, 3));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let x1: f64 = StandardNormal.sample(&mut rng);
            let x2: f64 = StandardNormal.sample(&mut rng);
            let a = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
            preds[[i, 0]] = x1;
            preds[[i, 1]] = x2;
            preds[[i, 2]] = a;
            let l0 = 0.5 + 0.3 * x1 - 0.4 * x2 + 0.2 * a;
            let l1 = -0.3 - 0.2 * x1 + 0.5 * x2 - 0.1 * a;
            let m = l0.max(l1).max(0.0);
            let e = [(l0 - m).exp(), (l1 - m).exp(), (-m).exp()];
            let total = e[0] + e[1] + e[2];
            let u: f64 = rng.random::<f64>() * total;
            labels.push(if u < e[0] {
                0
            } else if u < e[0] + e[1] {
                1
            } else {
                2
            });
        }
        let model = fit_multinomial_logit(&labels, preds.view(), 3).unwrap();
        let coef = model.coefficients();
        let truth = [[0.5, 0.3, -0.4, 0.2], [-0.3, -0.2, 0.5, -0.1]];
        for a in 0..2 {
            for j in 0..4 {
                assert!(
                    (coef[[a, j]] - truth[a][j]).abs() <= 0.15,
                    "coef[{a},{j}] = {} vs {}",
                    coef[[a, j]],
                    truth[a][j]
                );
            }
        }
    }

    #[test]
    fn separation_detected() {
        let n = 60;
        let preds = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
        assert!(matches!(
            fit_multinomial_logit(&labels, preds.view(), 2),
            Err(Error::SeparationDetected(_))
        ));
    }

    #[test]
    fn constant_predictor_rejected() {
        let preds = Array2::from_elem((10, 1), 3.0);
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert!(matches!(
            fit_multinomial_logit(&labels, preds.view(), 2),
            Err(Error::RankDeficientPredictors(0))
        ));
    }

    fn spread_points() -> Vec<SimplexPoint> {
        vec![
            SimplexPoint::new(vec![0.8, 0.1, 0.1]).unwrap(),
            SimplexPoint::new(vec![0.1, 0.8, 0.1]).unwrap(),
            SimplexPoint::new(vec![0.1, 0.1, 0.8]).unwrap(),
            SimplexPoint::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(),
        ]
    }

    #[test]
    fn transport_identity_clouds() {
        let pts = spread_points();
        let w = vec![0.25; 4];
        let out = transport_simplex_points(&pts, &pts, &w, &w, 0.01).unwrap();
        for (a, b) in out.iter().zip(&pts) {
            for k in 0..3 {
                assert!((a.probs()[k] - b.probs()[k]).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn forced_coupling_hits_midpoint() {
        let src = vec![SimplexPoint::new(vec![1.0, 0.0]).unwrap()];
        let tgt = vec![
            SimplexPoint::new(vec![0.9, 0.1]).unwrap(),
            SimplexPoint::new(vec![0.3, 0.7]).unwrap(),
        ];
        let out = transport_simplex_points(&src, &tgt, &[1.0], &[0.5, 0.5], 0.1).unwrap();
        assert_abs_diff_eq!(out[0].probs()[0], 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(out[0].probs()[1], 0.4, epsilon = 1e-9);
    }

    #[test]
    fn k2_transport_is_monotone_rearrangement() {
        let mut rng = stream_rng(13, 0);
        let n = 12;
        let src: Vec<SimplexPoint> = (0..n)
            .map(|_| {
                let p: f64 = rng.random();
                SimplexPoint::new(vec![p, 1.0 - p]).unwrap()
            })
            .collect();
        let tgt: Vec<SimplexPoint> = (0..n)
            .map(|_| {
                let p: f64 = rng.random();
                SimplexPoint::new(vec![p, 1.0 - p]).unwrap()
            })
            .collect();
        let w = vec![1.0 / n as f64; n];
        let out = transport_simplex_points(&src, &tgt, &w, &w, 0.001).unwrap();
        // oracle: 1-D monotone OT on the first coordinate (sorted matching)
        let mut src_first: Vec<(usize, f64)> =
            src.iter().map(|p| p.probs()[0]).enumerate().collect();
        let mut tgt_first: Vec<f64> = tgt.iter().map(|p| p.probs()[0]).collect();
        src_first.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        tgt_first.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (rank, &(i, _)) in src_first.iter().enumerate() {
            assert!(
                (out[i].probs()[0] - tgt_first[rank]).abs() <= 0.05,
                "rank {rank}: {} vs {}",
                out[i].probs()[0],
                tgt_first[rank]
            );
        }
    }

    #[test]
    fn allocation_examples() {
        // already one-hot, proportions matching frequencies: identity
        let pts = vec![
            SimplexPoint::new(vec![1.0, 0.0]).unwrap(),
            SimplexPoint::new(vec![0.0, 1.0]).unwrap(),
            SimplexPoint::new(vec![0.0, 1.0]).unwrap(),
            SimplexPoint::new(vec![1.0, 0.0]).unwrap(),
        ];
        assert_eq!(allocate_to_vertices(&pts, &[0.5, 0.5]).unwrap(), vec![0, 1, 1, 0]);

        // brute force over the C(4,2) = 6 assignments picks (0,0,1,1)
        let pts = vec![
            SimplexPoint::new(vec![0.9, 0.1]).unwrap(),
            SimplexPoint::new(vec![0.8, 0.2]).unwrap(),
            SimplexPoint::new(vec![0.4, 0.6]).unwrap(),
            SimplexPoint::new(vec![0.2, 0.8]).unwrap(),
        ];
        assert_eq!(allocate_to_vertices(&pts, &[0.5, 0.5]).unwrap(), vec![0, 0, 1, 1]);

        // forced marginal
        let labels = allocate_to_vertices(&pts, &[1.0, 0.0]).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0]);
    }

    /// Exhaustive minimum allocation cost over assignments meeting `counts`.
    fn brute_force_cost(points: &[SimplexPoint], counts: &[usize]) -> f64 {
        fn rec(
            points: &[SimplexPoint],
            left: &mut Vec<usize>,
            i: usize,
            acc: f64,
            best: &mut f64,
        ) {
            if i == points.len() {
                *best = best.min(acc);
                return;
            }
            if acc >= *best {
                return;
            }
            for k in 0..left.len() {
                if left[k] == 0 {
                    continue;
                }
                left[k] -= 1;
                let d: f64 = points[i]
                    .probs()
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let e = if j == k { 1.0 } else { 0.0 };
                        (p - e) * (p - e)
                    })
                    .sum();
                rec(points, left, i + 1, acc + d, best);
                left[k] += 1;
            }
        }
        let mut best = f64::INFINITY;
        rec(points, &mut counts.to_vec(), 0, 0.0, &mut best);
        best
    }

    #[test]
    fn allocation_cost_is_optimal_on_small_instances() {
        let mut rng = stream_rng(14, 0);
        for _ in 0..40 {
            let n = rng.random_range(2..=8usize);
            let k = rng.random_range(2..=3usize);
            let points: Vec<SimplexPoint> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
                    SimplexPoint::renormalize(raw).unwrap()
                })
                .collect();
            let props: Vec<f64> = {
                let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            };
            let counts = rounded_counts(&props, n);
            let labels = allocate_to_vertices(&points, &props).unwrap();
            let mut got_counts = vec![0usize; k];
            let mut got_cost = 0.0;
            for (i, &lab) in labels.iter().enumerate() {
                got_counts[lab] += 1;
                got_cost += points[i]
                    .probs()
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let e = if j == lab { 1.0 } else { 0.0 };
                        (p - e) * (p - e)
                    })
                    .sum::<f64>();
            }
            assert_eq!(got_counts, counts);
            let best = brute_force_cost(&points, &counts);
            assert!(got_cost <= best + 1e-9, "cost {got_cost} vs brute {best}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn allocation_counts_match_rounding(
            n in 1usize..20,
            raw_props in proptest::collection::vec(0.01f64..1.0, 2..5),
            seed in 0u64..1000,
        ) {
            let k = raw_props.len();
            let s: f64 = raw_props.iter().sum();
            let props: Vec<f64> = raw_props.iter().map(|x| x / s).collect();
            let mut rng = stream_rng(seed, 0);
            let points: Vec<SimplexPoint> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
                    SimplexPoint::renormalize(raw).unwrap()
                })
                .collect();
            let labels = allocate_to_vertices(&points, &props).unwrap();
            let counts = rounded_counts(&props, n);
            let mut got = vec![0usize; k];
            for &l in &labels { got[l] += 1; }
            prop_assert_eq!(got, counts);
        }

        #[test]
        fn renormalize_is_idempotent(raw in proptest::collection::vec(0.0f64..10.0, 2..6)) {
            prop_assume!(raw.iter().sum::<f64>() > 0.0);
            let once = SimplexPoint::renormalize(raw).unwrap();
            let twice = SimplexPoint::renormalize(once.probs().to_vec()).unwrap();
            for (a, b) in once.probs().iter().zip(twice.probs()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((once.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}
