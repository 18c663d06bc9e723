//! Outcome regression per treatment group and unit-level effect
//! decomposition: indirect `delta_i = mu0(x*) - mu0(x)`, direct
//! `zeta_i = mu1(x*) - mu0(x*)`, total `tau_i = delta_i + zeta_i`, per-node
//! attribution from partial transports, and overlap diagnostics.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::dag::{DagSpec, NodeKind};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream_rng, STREAM_TREES_BASE};
use crate::sequential::{CounterfactualSet, MediatorSchema, MediatorValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorKind {
    /// Local-linear Gaussian-kernel regression with Silverman bandwidths and
    /// k-nearest-neighbor bandwidth widening away from the training cloud.
    KernelRegression,
    /// Bootstrap-aggregated regression trees with feature subsampling.
    BaggedTrees,
}

const TREES: usize = 100;
const MIN_LEAF: usize = 5;
const MAX_DEPTH: usize = 25;

/// Fitted outcome regression for one treatment group.
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    pub group: u8,
    pub kind: RegressorKind,
    schema: MediatorSchema,
    binary: bool,
    xtr: Array2<f64>,
    ytr: Vec<f64>,
    bandwidths: Vec<f64>,
    knn_k: usize,
    trees: Vec<Tree>,
    /// Per-coordinate (min, max) of the embedded training features.
    pub feature_ranges: Vec<(f64, f64)>,
}

/// Embed a mediator vector: numeric coordinates raw, categorical one-hot.
fn embed(schema: &MediatorSchema, values: &[MediatorValue]) -> Vec<f64> {
    let mut row = Vec::new();
    for (m, v) in values.iter().enumerate() {
        match (schema.kinds[m], v) {
            (NodeKind::MediatorNumeric, MediatorValue::Num(x)) => row.push(*x),
            (NodeKind::MediatorCategorical, MediatorValue::Cat(c)) => {
                let k = schema.levels[m].as_ref().unwrap().len();
                for lev in 0..k {
                    row.push(if lev == *c { 1.0 } else { 0.0 });
                }
            }
            _ => unreachable!("schema/value kind mismatch"),
        }
    }
    row
}

/// Mediator vectors for the given dataset rows, in schema order.
pub fn mediator_vectors(
    data: &Dataset,
    schema: &MediatorSchema,
    rows: &[usize],
) -> Result<Vec<Vec<MediatorValue>>> {
    let mut out = Vec::with_capacity(rows.len());
    for &r in rows {
        let mut v = Vec::with_capacity(schema.d());
        for (name, kind) in schema.names.iter().zip(&schema.kinds) {
            match kind {
                NodeKind::MediatorNumeric => v.push(MediatorValue::Num(data.numeric(name)?[r])),
                NodeKind::MediatorCategorical => {
                    v.push(MediatorValue::Cat(data.categorical(name)?.1[r]))
                }
                _ => unreachable!(),
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Fit the outcome regression `E[Y | A=group, X=x]` on that group's rows.
pub fn fit_outcome_model(
    data: &Dataset,
    dag: &DagSpec,
    group: u8,
    kind: RegressorKind,
    seed: u64,
) -> Result<OutcomeModel> {
    let schema = MediatorSchema::from_dag(dag, data)?;
    let outcome_name = dag
        .outcome_name()
        .ok_or_else(|| Error::MissingOutcome("<none declared>".into()))?;
    let y_all = data
        .numeric(outcome_name)
        .map_err(|_| Error::MissingOutcome(outcome_name.to_string()))?;
    let treatment_name = dag.treatment_name().ok_or(Error::MultipleTreatments(0))?;
    let treatment = data.treatment(treatment_name)?;
    let rows = data.group_rows(&treatment, group);
    if rows.is_empty() {
        return Err(Error::EmptyGroup(group));
    }
    let vectors = mediator_vectors(data, &schema, &rows)?;
    let ytr: Vec<f64> = rows.iter().map(|&r| y_all[r]).collect();
    let feats: Vec<Vec<f64>> = vectors.iter().map(|v| embed(&schema, v)).collect();
    let p = feats[0].len();
    let n = feats.len();
    let xtr = Array2::from_shape_fn((n, p), |(i, j)| feats[i][j]);
    let binary = ytr.iter().all(|&y| y == 0.0 || y == 1.0);

    let bandwidths: Vec<f64> = (0..p)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| xtr[[i, j]]).collect();
            crate::conditional::silverman_bandwidth(&col)
        })
        .collect();
    let knn_k = ((n as f64 * 0.05).ceil() as usize).max(p + 2).min(n - 1).max(1);
    let feature_ranges: Vec<(f64, f64)> = (0..p)
        .map(|j| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..n {
                lo = lo.min(xtr[[i, j]]);
                hi = hi.max(xtr[[i, j]]);
            }
            (lo, hi)
        })
        .collect();

    let trees = if kind == RegressorKind::BaggedTrees {
        (0..TREES)
            .map(|t| {
                let mut rng = stream_rng(seed, STREAM_TREES_BASE + t as u64);
                let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                Tree::grow(&xtr, &ytr, &indices, &mut rng)
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(OutcomeModel {
        group,
        kind,
        schema,
        binary,
        xtr,
        ytr,
        bandwidths,
        knn_k,
        trees,
        feature_ranges,
    })
}

impl OutcomeModel {
    pub fn schema(&self) -> &MediatorSchema {
        &self.schema
    }

    pub fn predict(&self, values: &[MediatorValue]) -> f64 {
        let q = embed(&self.schema, values);
        let raw = match self.kind {
            RegressorKind::KernelRegression => self.predict_kernel(&q),
            RegressorKind::BaggedTrees => {
                self.trees.iter().map(|t| t.predict(&q)).sum::<f64>() / self.trees.len() as f64
            }
        };
        if self.binary {
            raw.clamp(0.0, 1.0)
        } else {
            raw
        }
    }

    fn predict_kernel(&self, q: &[f64]) -> f64 {
        let (n, p) = self.xtr.dim();
        // standardized distances to pick the adaptive bandwidth factor
        let mut dists: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..p {
                    let d = (self.xtr[[i, j]] - q[j]) / self.bandwidths[j];
                    s += d * d;
                }
                s.sqrt()
            })
            .collect();
        let mut sorted = dists.clone();
        let k = self.knn_k.min(n - 1);
        sorted.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
        let widen = sorted[k].max(1.0);
        if widen > 1.0 {
            for d in &mut dists {
                *d /= widen;
            }
        }
        let mut weights: Vec<f64> = dists.iter().map(|d| (-0.5 * d * d).exp()).collect();
        let wsum: f64 = weights.iter().sum();
        if wsum <= 0.0 || !wsum.is_finite() {
            // no usable local mass anywhere: fall back to the global mean
            return self.ytr.iter().sum::<f64>() / n as f64;
        }
        for w in &mut weights {
            *w /= wsum;
        }
        // local-linear fit centered at the query, on outcome residuals around
        // the local weighted mean (keeps the intercept well conditioned)
        let ymean: f64 = weights.iter().zip(&self.ytr).map(|(w, y)| w * y).sum();
        let dim = p + 1;
        let mut xtwx = Array2::<f64>::zeros((dim, dim));
        let mut xtwy = Array1::<f64>::zeros(dim);
        for i in 0..n {
            let w = weights[i];
            if w < 1e-14 {
                continue;
            }
            let mut row = Vec::with_capacity(dim);
            row.push(1.0);
            for j in 0..p {
                row.push(self.xtr[[i, j]] - q[j]);
            }
            let resid = self.ytr[i] - ymean;
            for a in 0..dim {
                xtwy[a] += w * row[a] * resid;
                for b in a..dim {
                    xtwx[[a, b]] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                xtwx[[a, b]] = xtwx[[b, a]];
            }
        }
        for a in 0..dim {
            xtwx[[a, a]] += 1e-10 + 1e-9 * xtwx[[a, a]];
        }
        match linalg::solve(&xtwx, &xtwy) {
            Ok(beta) => ymean + beta[0],
            // singular local system: local-constant estimate
            Err(_) => ymean,
        }
    }
}

// ---------------------------------------------------------------------------
// bagged regression trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum TreeNode {
    Leaf(f64),
    Split { dim: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn grow<R: Rng>(x: &Array2<f64>, y: &[f64], indices: &[usize], rng: &mut R) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        tree.grow_node(x, y, indices.to_vec(), 0, rng);
        tree
    }

    fn grow_node<R: Rng>(
        &mut self,
        x: &Array2<f64>,
        y: &[f64],
        indices: Vec<usize>,
        depth: usize,
        rng: &mut R,
    ) -> usize {
        let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64;
        if indices.len() < 2 * MIN_LEAF || depth >= MAX_DEPTH {
            self.nodes.push(TreeNode::Leaf(mean));
            return self.nodes.len() - 1;
        }
        let sse: f64 = indices.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum();
        if sse <= 1e-12 {
            self.nodes.push(TreeNode::Leaf(mean));
            return self.nodes.len() - 1;
        }
        let p = x.ncols();
        let mtry = (p / 3).max(1);
        let mut dims: Vec<usize> = (0..p).collect();
        // partial Fisher-Yates for the feature subsample
        for i in 0..mtry.min(p) {
            let j = rng.random_range(i..p);
            dims.swap(i, j);
        }
        let mut best: Option<(usize, f64, f64)> = None; // (dim, threshold, score)
        for &dim in dims.iter().take(mtry) {
            let mut vals: Vec<(f64, f64)> =
                indices.iter().map(|&i| (x[[i, dim]], y[i])).collect();
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let total: f64 = vals.iter().map(|v| v.1).sum();
            let n = vals.len() as f64;
            let mut left_sum = 0.0;
            for (k, w) in vals.windows(2).enumerate() {
                left_sum += w[0].1;
                if w[0].0 == w[1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                if (nl as usize) < MIN_LEAF || (nr as usize) < MIN_LEAF {
                    continue;
                }
                let score = left_sum * left_sum / nl + (total - left_sum) * (total - left_sum) / nr;
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((dim, (w[0].0 + w[1].0) / 2.0, score));
                }
            }
        }
        let Some((dim, threshold, _)) = best else {
            self.nodes.push(TreeNode::Leaf(mean));
            return self.nodes.len() - 1;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| x[[i, dim]] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf(mean)); // placeholder
        let left = self.grow_node(x, y, left_idx, depth + 1, rng);
        let right = self.grow_node(x, y, right_idx, depth + 1, rng);
        self.nodes[slot] = TreeNode::Split { dim, threshold, left, right };
        slot
    }

    fn predict(&self, q: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split { dim, threshold, left, right } => {
                    node = if q[*dim] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// decomposition, attribution, overlap
// ---------------------------------------------------------------------------

/// Unit-level effects and their source-group means.
#[derive(Debug, Clone)]
pub struct EffectDecomposition {
    pub unit_ids: Vec<usize>,
    pub delta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub tau: Vec<f64>,
    pub delta_bar: f64,
    pub zeta_bar: f64,
    pub tau_bar: f64,
}

fn check_schema(model: &OutcomeModel, cf: &CounterfactualSet) -> Result<()> {
    if model.schema != cf.schema {
        return Err(Error::SchemaMismatch(
            "outcome model and counterfactual set disagree on the mediator layout".into(),
        ));
    }
    Ok(())
}

/// `delta_i = mu0(x*) - mu0(x)`, `zeta_i = mu1(x*) - mu0(x*)`,
/// `tau_i = delta_i + zeta_i` (exact by construction).
pub fn decompose(
    mu0: &OutcomeModel,
    mu1: &OutcomeModel,
    cf: &CounterfactualSet,
) -> Result<EffectDecomposition> {
    check_schema(mu0, cf)?;
    check_schema(mu1, cf)?;
    let n = cf.unit_ids.len();
    let mut delta = Vec::with_capacity(n);
    let mut zeta = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    for u in 0..n {
        let m0_fact = mu0.predict(&cf.factual[u]);
        let m0_star = mu0.predict(&cf.transported[u]);
        let m1_star = mu1.predict(&cf.transported[u]);
        let d = m0_star - m0_fact;
        let z = m1_star - m0_star;
        delta.push(d);
        zeta.push(z);
        tau.push(d + z);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let delta_bar = mean(&delta);
    let zeta_bar = mean(&zeta);
    Ok(EffectDecomposition {
        unit_ids: cf.unit_ids.clone(),
        delta_bar,
        zeta_bar,
        // the aggregate identity holds exactly
        tau_bar: delta_bar + zeta_bar,
        delta,
        zeta,
        tau,
    })
}

/// Variant replacing the factual term `mu0(x_i)` by the observed outcome
/// `y_i` (robustness diagnostic; experimental).
pub fn decompose_with_observed(
    mu0: &OutcomeModel,
    mu1: &OutcomeModel,
    cf: &CounterfactualSet,
    observed: &[f64],
) -> Result<EffectDecomposition> {
    check_schema(mu0, cf)?;
    check_schema(mu1, cf)?;
    if observed.len() != cf.unit_ids.len() {
        return Err(Error::DimensionMismatch {
            left: observed.len(),
            right: cf.unit_ids.len(),
        });
    }
    let n = cf.unit_ids.len();
    let mut delta = Vec::with_capacity(n);
    let mut zeta = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    for u in 0..n {
        let m0_star = mu0.predict(&cf.transported[u]);
        let m1_star = mu1.predict(&cf.transported[u]);
        let d = m0_star - observed[u];
        let z = m1_star - m0_star;
        delta.push(d);
        zeta.push(z);
        tau.push(d + z);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let delta_bar = mean(&delta);
    let zeta_bar = mean(&zeta);
    Ok(EffectDecomposition {
        unit_ids: cf.unit_ids.clone(),
        delta_bar,
        zeta_bar,
        tau_bar: delta_bar + zeta_bar,
        delta,
        zeta,
        tau,
    })
}

/// Per-node attribution: `partial_delta[u][j] = mu0(x^{(j)}) - mu0(x^{(0)})`
/// and the successive increments per transported node.
#[derive(Debug, Clone)]
pub struct Attribution {
    pub unit_ids: Vec<usize>,
    /// Nodes in the transport order, labelling `increments` columns.
    pub order: Vec<String>,
    /// `[unit][j]` for `j = 0..=d`.
    pub partial_delta: Vec<Vec<f64>>,
    /// `[unit][j]` for `j = 0..d`: `partial_delta[j + 1] - partial_delta[j]`.
    pub increments: Vec<Vec<f64>>,
}

pub fn attribute_mediators(mu0: &OutcomeModel, cf: &CounterfactualSet) -> Result<Attribution> {
    check_schema(mu0, cf)?;
    let Some(partials) = &cf.partials else {
        return Err(Error::SchemaMismatch(
            "attribution requires the per-node partial vectors of sequential transport".into(),
        ));
    };
    let d = cf.schema.d();
    let mut partial_delta = Vec::with_capacity(cf.unit_ids.len());
    let mut increments = Vec::with_capacity(cf.unit_ids.len());
    for stages in partials {
        let base = mu0.predict(&stages[0]);
        let deltas: Vec<f64> = stages.iter().map(|v| mu0.predict(v) - base).collect();
        let incs: Vec<f64> = (0..d).map(|j| deltas[j + 1] - deltas[j]).collect();
        partial_delta.push(deltas);
        increments.push(incs);
    }
    Ok(Attribution {
        unit_ids: cf.unit_ids.clone(),
        order: cf.order.clone(),
        partial_delta,
        increments,
    })
}

/// Out-of-support share of the transported profiles.
#[derive(Debug, Clone)]
pub struct OverlapReport {
    /// Flagged fraction.
    pub eta_hat: f64,
    /// 99th percentile of within-support nearest-neighbor distances.
    pub threshold: f64,
    pub flagged_units: Vec<usize>,
}

/// Flag transported points whose nearest-neighbor distance to the support
/// sample exceeds the 99th percentile of within-sample nearest-neighbor
/// distances. Numeric coordinates are standardized by the support sample.
pub fn overlap_check(cf: &CounterfactualSet, support: &[Vec<MediatorValue>]) -> OverlapReport {
    let schema = &cf.schema;
    let raw_support: Vec<Vec<f64>> = support.iter().map(|v| embed(schema, v)).collect();
    let p = raw_support[0].len();
    let n = raw_support.len();
    let mut scales = vec![1.0f64; p];
    for j in 0..p {
        let mean = raw_support.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = raw_support
            .iter()
            .map(|r| (r[j] - mean) * (r[j] - mean))
            .sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        scales[j] = var.sqrt().max(1e-9);
    }
    let std_rows: Vec<Vec<f64>> = raw_support
        .iter()
        .map(|r| r.iter().zip(&scales).map(|(x, s)| x / s).collect())
        .collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut within: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist(&std_rows[i], &std_rows[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    within.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((0.99 * (n as f64 - 1.0)).round() as usize).min(n - 1);
    let threshold = within[idx];

    let mut flagged_units = Vec::new();
    for (u, t) in cf.transported.iter().enumerate() {
        let q: Vec<f64> = embed(schema, t)
            .iter()
            .zip(&scales)
            .map(|(x, s)| x / s)
            .collect();
        let nn = std_rows
            .iter()
            .map(|r| dist(&q, r))
            .fold(f64::INFINITY, f64::min);
        if nn > threshold {
            flagged_units.push(cf.unit_ids[u]);
        }
    }
    OverlapReport {
        eta_hat: flagged_units.len() as f64 / cf.transported.len() as f64,
        threshold,
        flagged_units,
    }
}
