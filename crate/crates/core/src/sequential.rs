//! Sequential transport along the mediator DAG: root mediators move by
//! marginal monotone transport, parented numeric mediators by kernel
//! conditional transport at (factual source parents, already-transported
//! target parents), and categorical mediators by simplex transport plus
//! vertex allocation. Also hosts the global (non-sequential) OT and entropic
//! baselines over the embedded mediator vector.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::categorical::{self, SimplexPoint};
use crate::conditional::{kernel_weights, silverman_bandwidth, KernelConfig};
use crate::dag::{DagSpec, NodeKind, TopologicalOrder};
use crate::dataset::{ColumnData, Dataset};
use crate::discrete;
use crate::error::{Error, Result};
use crate::univariate::WeightedDistribution;

/// Relative kernel-weight floor below which atoms are dropped from the
/// per-unit weighted OT. Keeps the Sinkhorn scaling well conditioned.
const REL_WEIGHT_FLOOR: f64 = 1e-7;

/// Effective sample size under which a unit is counted as near-degenerate in
/// the diagnostics (hard failure is at 2, inside `kernel_weights`).
const NEAR_DEGENERATE_ESS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ZeroToOne,
    OneToZero,
}

impl Direction {
    pub fn source_group(self) -> u8 {
        match self {
            Direction::ZeroToOne => 0,
            Direction::OneToZero => 1,
        }
    }

    pub fn target_group(self) -> u8 {
        1 - self.source_group()
    }
}

/// Per-node overrides for bandwidth and entropic regularization.
#[derive(Debug, Clone, Default)]
pub struct NodeOverride {
    /// Absolute kernel bandwidth applied to every numeric parent dimension.
    pub bandwidth: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TransportConfig {
    /// Entropic regularization for simplex transport (and the SKH baseline).
    pub gamma: f64,
    pub node_overrides: HashMap<String, NodeOverride>,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            gamma: 0.1,
            node_overrides: HashMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MediatorValue {
    Num(f64),
    Cat(usize),
}

impl MediatorValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            MediatorValue::Num(x) => Some(*x),
            MediatorValue::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<usize> {
        match self {
            MediatorValue::Cat(c) => Some(*c),
            MediatorValue::Num(_) => None,
        }
    }
}

/// Mediator layout shared by counterfactual sets and outcome models:
/// names in DAG declaration order, kinds, and categorical level strings.
#[derive(Debug, Clone, PartialEq)]
pub struct MediatorSchema {
    pub names: Vec<String>,
    pub kinds: Vec<NodeKind>,
    pub levels: Vec<Option<Vec<String>>>,
}

impl MediatorSchema {
    pub fn from_dag(dag: &DagSpec, data: &Dataset) -> Result<Self> {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut levels = Vec::new();
        for name in dag.mediators() {
            let kind = dag.kind_of(name)?;
            let col = data.column(name)?;
            match (kind, &col.data) {
                (NodeKind::MediatorNumeric, ColumnData::Numeric(_)) => levels.push(None),
                (NodeKind::MediatorCategorical, ColumnData::Categorical { levels: l, .. }) => {
                    levels.push(Some(l.clone()))
                }
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "column `{name}` does not match its declared mediator kind"
                    )))
                }
            }
            names.push(name.to_string());
            kinds.push(kind);
        }
        Ok(MediatorSchema { names, kinds, levels })
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Source-CDF evaluations clamped out of range during transport.
    pub clamp_count: usize,
    /// Units whose kernel weights were near-degenerate (ess below 5).
    pub near_degenerate_count: usize,
    /// Dataset columns outside the DAG, passed through unchanged.
    pub passthrough_columns: Vec<String>,
}

/// Factual, transported and partially transported mediator vectors for the
/// source group.
#[derive(Debug, Clone)]
pub struct CounterfactualSet {
    pub schema: MediatorSchema,
    /// Row indices in the source dataset.
    pub unit_ids: Vec<usize>,
    pub factual: Vec<Vec<MediatorValue>>,
    pub transported: Vec<Vec<MediatorValue>>,
    /// Topological order the transport followed (indexes `partials` steps).
    pub order: Vec<String>,
    /// `partials[u][j]` is unit `u` after transporting the first `j` nodes of
    /// `order`; `j = 0` is factual and `j = d` the full transport. `None` for
    /// global methods, which have no per-node stages.
    pub partials: Option<Vec<Vec<Vec<MediatorValue>>>>,
    pub diagnostics: Diagnostics,
}

impl CounterfactualSet {
    /// Vector of unit `unit_id` with the first `j` order nodes transported.
    pub fn partial_vector(&self, unit_id: usize, j: usize) -> Result<Vec<MediatorValue>> {
        let pos = self
            .unit_ids
            .iter()
            .position(|&u| u == unit_id)
            .ok_or(Error::UnknownUnit(unit_id))?;
        let d = self.schema.d();
        if j > d {
            return Err(Error::IndexOutOfRange { index: j, max: d });
        }
        match &self.partials {
            Some(p) => Ok(p[pos][j].clone()),
            None if j == 0 => Ok(self.factual[pos].clone()),
            None if j == d => Ok(self.transported[pos].clone()),
            None => Err(Error::SchemaMismatch(
                "partial vectors are only recorded for sequential transport".into(),
            )),
        }
    }
}

/// One group's mediator data split out of the dataset.
struct GroupData {
    rows: Vec<usize>,
    /// [mediator][unit] in schema order.
    values: Vec<Vec<MediatorValue>>,
}

impl GroupData {
    fn extract(data: &Dataset, schema: &MediatorSchema, rows: Vec<usize>) -> Result<Self> {
        let mut values = Vec::with_capacity(schema.d());
        for (name, kind) in schema.names.iter().zip(&schema.kinds) {
            let col = match kind {
                NodeKind::MediatorNumeric => {
                    let v = data.numeric(name)?;
                    rows.iter().map(|&r| MediatorValue::Num(v[r])).collect()
                }
                NodeKind::MediatorCategorical => {
                    let (_, codes) = data.categorical(name)?;
                    rows.iter().map(|&r| MediatorValue::Cat(codes[r])).collect()
                }
                _ => unreachable!("schema holds mediators only"),
            };
            values.push(col);
        }
        Ok(GroupData { rows, values })
    }

    fn n(&self) -> usize {
        self.rows.len()
    }

    fn numeric_column(&self, idx: usize) -> Vec<f64> {
        self.values[idx]
            .iter()
            .map(|v| v.as_num().expect("numeric mediator"))
            .collect()
    }

    fn cat_column(&self, idx: usize) -> Vec<usize> {
        self.values[idx]
            .iter()
            .map(|v| v.as_cat().expect("categorical mediator"))
            .collect()
    }
}

/// Parent layout of one node: schema indices split by kind.
struct ParentLayout {
    numeric: Vec<usize>,
    categorical: Vec<usize>,
}

impl ParentLayout {
    fn new(schema: &MediatorSchema, parents: &[String]) -> Result<Self> {
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for p in parents {
            let idx = schema.index_of(p)?;
            match schema.kinds[idx] {
                NodeKind::MediatorNumeric => numeric.push(idx),
                NodeKind::MediatorCategorical => categorical.push(idx),
                _ => unreachable!(),
            }
        }
        Ok(ParentLayout { numeric, categorical })
    }

    fn is_empty(&self) -> bool {
        self.numeric.is_empty() && self.categorical.is_empty()
    }

    fn numeric_coords(&self, vector: &[MediatorValue]) -> Vec<f64> {
        self.numeric
            .iter()
            .map(|&i| vector[i].as_num().expect("numeric parent"))
            .collect()
    }

    fn cat_coords(&self, vector: &[MediatorValue]) -> Vec<usize> {
        self.categorical
            .iter()
            .map(|&i| vector[i].as_cat().expect("categorical parent"))
            .collect()
    }

    /// Predictor row for the class-probability model: numeric parents raw,
    /// categorical parents one-hot without the last level.
    fn predictor_row(&self, vector: &[MediatorValue], schema: &MediatorSchema) -> Vec<f64> {
        let mut row = self.numeric_coords(vector);
        for &i in &self.categorical {
            let levels = schema.levels[i].as_ref().expect("categorical levels").len();
            let code = vector[i].as_cat().expect("categorical parent");
            for k in 0..levels.saturating_sub(1) {
                row.push(if code == k { 1.0 } else { 0.0 });
            }
        }
        row
    }
}

/// Kernel weights over one group at a parent query: exact match on
/// categorical parents, Gaussian kernel on numeric parents.
fn group_weights(
    layout: &ParentLayout,
    group_vectors: &[(Vec<f64>, Vec<usize>)],
    z_num: &[f64],
    z_cat: &[usize],
    bandwidths: &[f64],
) -> Result<(Vec<usize>, Vec<f64>, f64)> {
    let matched: Vec<usize> = group_vectors
        .iter()
        .enumerate()
        .filter(|(_, (_, cats))| cats == z_cat)
        .map(|(i, _)| i)
        .collect();
    if matched.is_empty() {
        return Err(Error::DegenerateWeights { ess: 0.0 });
    }
    if layout.numeric.is_empty() {
        let w = vec![1.0 / matched.len() as f64; matched.len()];
        let ess = matched.len() as f64;
        return Ok((matched, w, ess));
    }
    let rows: Vec<Vec<f64>> = matched
        .iter()
        .map(|&i| group_vectors[i].0.clone())
        .collect();
    // queries in the support tail can leave one atom dominating; widen the
    // bandwidth deterministically until the weights carry local data
    let mut last = None;
    for doubling in 0..10 {
        let scale = f64::from(1u32 << doubling);
        let h: Vec<f64> = bandwidths.iter().map(|b| b * scale).collect();
        let cfg = KernelConfig::with_bandwidths(h);
        match kernel_weights(&rows, z_num, &cfg) {
            Ok(w) => {
                let mut ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
                if doubling > 0 {
                    ess = ess.min(NEAR_DEGENERATE_ESS - 1.0); // report the widening
                }
                return Ok((matched, w, ess));
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Silverman bandwidths for each numeric parent dimension in one group, with
/// an optional absolute per-node override.
fn node_bandwidths(
    layout: &ParentLayout,
    group: &GroupData,
    over: Option<&NodeOverride>,
) -> Vec<f64> {
    if let Some(b) = over.and_then(|o| o.bandwidth) {
        return vec![b; layout.numeric.len()];
    }
    layout
        .numeric
        .iter()
        .map(|&idx| silverman_bandwidth(&group.numeric_column(idx)))
        .collect()
}

/// Drop atoms whose relative weight is below the floor and renormalize,
/// always keeping `keep` (the unit's own row) when given.
fn filter_weights(w: &[f64], keep: Option<usize>) -> (Vec<usize>, Vec<f64>) {
    let max = w.iter().fold(0.0f64, |m, &x| m.max(x));
    let mut idx: Vec<usize> = Vec::new();
    let mut out: Vec<f64> = Vec::new();
    for (i, &x) in w.iter().enumerate() {
        if x >= REL_WEIGHT_FLOOR * max || keep == Some(i) {
            idx.push(i);
            out.push(x);
        }
    }
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x /= total;
    }
    (idx, out)
}

/// Run the sequential transport recursion for every source-group unit.
pub fn sequential_transport(
    data: &Dataset,
    dag: &DagSpec,
    order: &TopologicalOrder,
    cfg: &TransportConfig,
    direction: Direction,
) -> Result<CounterfactualSet> {
    let schema = MediatorSchema::from_dag(dag, data)?;
    let treatment_name = dag
        .treatment_name()
        .ok_or(Error::MultipleTreatments(0))?;
    let treatment = data.treatment(treatment_name)?;
    let src_rows = data.group_rows(&treatment, direction.source_group());
    let tgt_rows = data.group_rows(&treatment, direction.target_group());
    if src_rows.is_empty() {
        return Err(Error::EmptyGroup(direction.source_group()));
    }
    if tgt_rows.is_empty() {
        return Err(Error::EmptyGroup(direction.target_group()));
    }
    let source = GroupData::extract(data, &schema, src_rows)?;
    let target = GroupData::extract(data, &schema, tgt_rows)?;

    let n_src = source.n();
    let d = schema.d();
    let mut cur: Vec<Vec<MediatorValue>> = (0..n_src)
        .map(|u| (0..d).map(|m| source.values[m][u]).collect())
        .collect();
    let factual = cur.clone();
    let mut partials: Vec<Vec<Vec<MediatorValue>>> =
        (0..n_src).map(|u| vec![cur[u].clone()]).collect();
    let mut diagnostics = Diagnostics::default();

    for node in &order.order {
        let node_idx = schema.index_of(node)?;
        let parents = dag.parents_of(node)?;
        let layout = ParentLayout::new(&schema, &parents)?;
        let over = cfg.node_overrides.get(node);
        let gamma = over.and_then(|o| o.gamma).unwrap_or(cfg.gamma);

        let step: StepResult = match schema.kinds[node_idx] {
            NodeKind::MediatorNumeric => transport_numeric_node(
                node, node_idx, &layout, &source, &target, &cur, &factual, over,
            )?,
            NodeKind::MediatorCategorical => transport_categorical_node(
                node, node_idx, &layout, &schema, &source, &target, &cur, &factual, over, gamma,
            )?,
            _ => unreachable!(),
        };
        for (u, value) in step.values.into_iter().enumerate() {
            cur[u][node_idx] = value;
        }
        diagnostics.clamp_count += step.clamps;
        diagnostics.near_degenerate_count += step.near_degenerate;
        for (u, partial) in partials.iter_mut().enumerate() {
            partial.push(cur[u].clone());
        }
    }

    for col in data.columns() {
        let name = col.name.as_str();
        if name == treatment_name
            || dag.outcome_name() == Some(name)
            || schema.names.iter().any(|m| m == name)
        {
            continue;
        }
        diagnostics.passthrough_columns.push(name.to_string());
    }

    Ok(CounterfactualSet {
        schema,
        unit_ids: source.rows.clone(),
        factual,
        transported: cur,
        order: order.order.clone(),
        partials: Some(partials),
        diagnostics,
    })
}

struct StepResult {
    values: Vec<MediatorValue>,
    clamps: usize,
    near_degenerate: usize,
}

#[allow(clippy::too_many_arguments)]
fn transport_numeric_node(
    node: &str,
    node_idx: usize,
    layout: &ParentLayout,
    source: &GroupData,
    target: &GroupData,
    cur: &[Vec<MediatorValue>],
    factual: &[Vec<MediatorValue>],
    over: Option<&NodeOverride>,
) -> Result<StepResult> {
    let child0 = source.numeric_column(node_idx);
    let child1 = target.numeric_column(node_idx);

    if layout.is_empty() {
        let f0 = WeightedDistribution::fit_uniform(&child0).map_err(|e| e.at_node(node, 0))?;
        let q1 = WeightedDistribution::fit_uniform(&child1).map_err(|e| e.at_node(node, 0))?;
        let mut clamps = 0;
        let values = child0
            .iter()
            .map(|&x| {
                let c = f0.cdf_flagged(x);
                if c.clamped {
                    clamps += 1;
                }
                MediatorValue::Num(q1.quantile(c.u))
            })
            .collect();
        return Ok(StepResult { values, clamps, near_degenerate: 0 });
    }

    // parent coordinate vectors per group (factual on each side)
    let src_parents: Vec<(Vec<f64>, Vec<usize>)> = (0..source.n())
        .map(|u| (layout.numeric_coords(&factual[u]), layout.cat_coords(&factual[u])))
        .collect();
    let tgt_parents: Vec<(Vec<f64>, Vec<usize>)> = (0..target.n())
        .map(|j| {
            let row: Vec<MediatorValue> = (0..target.values.len())
                .map(|m| target.values[m][j])
                .collect();
            (layout.numeric_coords(&row), layout.cat_coords(&row))
        })
        .collect();
    let h0 = node_bandwidths(layout, source, over);
    let h1 = node_bandwidths(layout, target, over);

    // sort permutations of the child columns, shared across units; the
    // exact-match subset for categorical parents needs a per-unit sort
    let sort_order = |col: &[f64]| {
        let mut ord: Vec<usize> = (0..col.len()).collect();
        ord.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap());
        ord
    };
    let full0 = sort_order(&child0);
    let full1 = sort_order(&child1);
    let plain = layout.categorical.is_empty();

    let results: Vec<Result<(f64, bool, bool)>> = (0..source.n())
        .into_par_iter()
        .map(|u| {
            let z0_num = layout.numeric_coords(&factual[u]);
            let z0_cat = layout.cat_coords(&factual[u]);
            let z1_num = layout.numeric_coords(&cur[u]);
            let z1_cat = layout.cat_coords(&cur[u]);
            let (idx0, w0, ess0) = group_weights(layout, &src_parents, &z0_num, &z0_cat, &h0)
                .map_err(|e| e.at_node(node, u))?;
            let (idx1, w1, ess1) = group_weights(layout, &tgt_parents, &z1_num, &z1_cat, &h1)
                .map_err(|e| e.at_node(node, u))?;
            let (f0, q1) = if plain {
                let f0 = WeightedDistribution::fit_with_order(&child0, &w0, &full0)
                    .map_err(|e| e.at_node(node, u))?;
                let q1 = WeightedDistribution::fit_with_order(&child1, &w1, &full1)
                    .map_err(|e| e.at_node(node, u))?;
                (f0, q1)
            } else {
                let sub0: Vec<f64> = idx0.iter().map(|&i| child0[i]).collect();
                let sub1: Vec<f64> = idx1.iter().map(|&i| child1[i]).collect();
                let f0 = WeightedDistribution::fit(&sub0, &w0).map_err(|e| e.at_node(node, u))?;
                let q1 = WeightedDistribution::fit(&sub1, &w1).map_err(|e| e.at_node(node, u))?;
                (f0, q1)
            };
            let c = f0.cdf_flagged(child0[u]);
            let near = ess0 < NEAR_DEGENERATE_ESS || ess1 < NEAR_DEGENERATE_ESS;
            Ok((q1.quantile(c.u), c.clamped, near))
        })
        .collect();

    let mut values = Vec::with_capacity(source.n());
    let mut clamps = 0;
    let mut near_degenerate = 0;
    for r in results {
        let (y, clamped, near) = r?;
        values.push(MediatorValue::Num(y));
        clamps += usize::from(clamped);
        near_degenerate += usize::from(near);
    }
    Ok(StepResult { values, clamps, near_degenerate })
}

#[allow(clippy::too_many_arguments)]
fn transport_categorical_node(
    node: &str,
    node_idx: usize,
    layout: &ParentLayout,
    schema: &MediatorSchema,
    source: &GroupData,
    target: &GroupData,
    cur: &[Vec<MediatorValue>],
    factual: &[Vec<MediatorValue>],
    over: Option<&NodeOverride>,
    gamma: f64,
) -> Result<StepResult> {
    let levels = schema.levels[node_idx]
        .as_ref()
        .expect("categorical levels")
        .len();
    let child0 = source.cat_column(node_idx);
    let child1 = target.cat_column(node_idx);

    // fitted class probabilities per group, conditional on mediator parents
    let (points0, points1) = if layout.is_empty() {
        let freq = |codes: &[usize]| -> SimplexPoint {
            let mut counts = vec![0.0f64; levels];
            for &c in codes {
                counts[c] += 1.0;
            }
            SimplexPoint::renormalize(counts).expect("nonempty group")
        };
        let p0 = freq(&child0);
        let p1 = freq(&child1);
        (
            vec![p0; source.n()],
            vec![p1; target.n()],
        )
    } else {
        let src_pred: Vec<Vec<f64>> = (0..source.n())
            .map(|u| layout.predictor_row(&factual[u], schema))
            .collect();
        let tgt_pred: Vec<Vec<f64>> = (0..target.n())
            .map(|j| {
                let row: Vec<MediatorValue> = (0..target.values.len())
                    .map(|m| target.values[m][j])
                    .collect();
                layout.predictor_row(&row, schema)
            })
            .collect();
        let to_matrix = |rows: &[Vec<f64>]| {
            ndarray::Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
        };
        let m0 = categorical::fit_multinomial_logit(&child0, to_matrix(&src_pred).view(), levels)
            .map_err(|e| e.at_node(node, 0))?;
        let m1 = categorical::fit_multinomial_logit(&child1, to_matrix(&tgt_pred).view(), levels)
            .map_err(|e| e.at_node(node, 0))?;
        (
            src_pred.iter().map(|r| m0.predict(r)).collect::<Vec<_>>(),
            tgt_pred.iter().map(|r| m1.predict(r)).collect::<Vec<_>>(),
        )
    };

    let mut transported_points: Vec<SimplexPoint> = Vec::with_capacity(source.n());
    let mut cond_props: Vec<Vec<f64>> = Vec::with_capacity(source.n());
    let mut near_degenerate = 0usize;

    if layout.is_empty() {
        // one uniform-weight transport serves every unit
        let w0 = vec![1.0 / source.n() as f64; source.n()];
        let w1 = vec![1.0 / target.n() as f64; target.n()];
        transported_points =
            categorical::transport_simplex_points(&points0, &points1, &w0, &w1, gamma)
                .map_err(|e| e.at_node(node, 0))?;
        let mut pi = vec![0.0f64; levels];
        for &c in &child1 {
            pi[c] += 1.0 / target.n() as f64;
        }
        cond_props = vec![pi; source.n()];
    } else {
        let src_parents: Vec<(Vec<f64>, Vec<usize>)> = (0..source.n())
            .map(|u| (layout.numeric_coords(&factual[u]), layout.cat_coords(&factual[u])))
            .collect();
        let tgt_parents: Vec<(Vec<f64>, Vec<usize>)> = (0..target.n())
            .map(|j| {
                let row: Vec<MediatorValue> = (0..target.values.len())
                    .map(|m| target.values[m][j])
                    .collect();
                (layout.numeric_coords(&row), layout.cat_coords(&row))
            })
            .collect();
        let h0 = node_bandwidths(layout, source, over);
        let h1 = node_bandwidths(layout, target, over);

        let per_unit: Vec<Result<(SimplexPoint, Vec<f64>, bool)>> = (0..source.n())
            .into_par_iter()
            .map(|u| {
                let z0_num = layout.numeric_coords(&factual[u]);
                let z0_cat = layout.cat_coords(&factual[u]);
                let z1_num = layout.numeric_coords(&cur[u]);
                let z1_cat = layout.cat_coords(&cur[u]);
                let (idx0, w0, ess0) =
                    group_weights(layout, &src_parents, &z0_num, &z0_cat, &h0)
                        .map_err(|e| e.at_node(node, u))?;
                let (idx1, w1, ess1) =
                    group_weights(layout, &tgt_parents, &z1_num, &z1_cat, &h1)
                        .map_err(|e| e.at_node(node, u))?;
                // conditional target level proportions at z1
                let mut pi = vec![0.0f64; levels];
                for (&j, &w) in idx1.iter().zip(&w1) {
                    pi[child1[j]] += w;
                }
                // drop negligible atoms, keeping the unit's own row
                let own = idx0.iter().position(|&i| i == u);
                let (keep0, w0f) = filter_weights(&w0, own);
                let (keep1, w1f) = filter_weights(&w1, None);
                let sub0: Vec<SimplexPoint> =
                    keep0.iter().map(|&k| points0[idx0[k]].clone()).collect();
                let sub1: Vec<SimplexPoint> =
                    keep1.iter().map(|&k| points1[idx1[k]].clone()).collect();
                let moved =
                    categorical::transport_simplex_points(&sub0, &sub1, &w0f, &w1f, gamma)
                        .map_err(|e| e.at_node(node, u))?;
                let own_pos = keep0
                    .iter()
                    .position(|&k| idx0[k] == u)
                    .expect("own row kept");
                let near = ess0 < NEAR_DEGENERATE_ESS || ess1 < NEAR_DEGENERATE_ESS;
                Ok((moved[own_pos].clone(), pi, near))
            })
            .collect();
        for r in per_unit {
            let (p, pi, near) = r?;
            transported_points.push(p);
            cond_props.push(pi);
            near_degenerate += usize::from(near);
        }
    }

    // aggregate conditional proportions and allocate all units at once
    let mut pi_bar = vec![0.0f64; levels];
    for pi in &cond_props {
        for (k, &p) in pi.iter().enumerate() {
            pi_bar[k] += p / source.n() as f64;
        }
    }
    let labels = categorical::allocate_to_vertices(&transported_points, &pi_bar)
        .map_err(|e| e.at_node(node, 0))?;
    Ok(StepResult {
        values: labels.into_iter().map(MediatorValue::Cat).collect(),
        clamps: 0,
        near_degenerate,
    })
}

// ---------------------------------------------------------------------------
// global (non-sequential) baselines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GlobalMethod {
    /// Exact OT over the embedded mediator vector.
    Exact,
    /// Entropic OT (Sinkhorn) with the given regularization.
    Entropic { gamma: f64 },
}

/// Transport the whole mediator vector at once: numeric coordinates enter the
/// cost standardized by pooled standard deviation, categorical ones one-hot.
/// Transported categorical blocks are re-discretized by vertex allocation
/// against the target marginal proportions.
pub fn global_transport(
    data: &Dataset,
    dag: &DagSpec,
    method: GlobalMethod,
    direction: Direction,
) -> Result<CounterfactualSet> {
    let schema = MediatorSchema::from_dag(dag, data)?;
    let treatment_name = dag
        .treatment_name()
        .ok_or(Error::MultipleTreatments(0))?;
    let treatment = data.treatment(treatment_name)?;
    let src_rows = data.group_rows(&treatment, direction.source_group());
    let tgt_rows = data.group_rows(&treatment, direction.target_group());
    if src_rows.is_empty() {
        return Err(Error::EmptyGroup(direction.source_group()));
    }
    if tgt_rows.is_empty() {
        return Err(Error::EmptyGroup(direction.target_group()));
    }
    let source = GroupData::extract(data, &schema, src_rows)?;
    let target = GroupData::extract(data, &schema, tgt_rows)?;

    // pooled standard deviation per numeric mediator
    let mut scales = vec![1.0f64; schema.d()];
    for m in 0..schema.d() {
        if schema.kinds[m] == NodeKind::MediatorNumeric {
            let mut all = source.numeric_column(m);
            all.extend(target.numeric_column(m));
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let var = all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            scales[m] = var.sqrt().max(1e-9);
        }
    }
    let embed = |values: &[MediatorValue]| -> Vec<f64> {
        let mut row = Vec::new();
        for (m, v) in values.iter().enumerate() {
            match (schema.kinds[m], v) {
                (NodeKind::MediatorNumeric, MediatorValue::Num(x)) => row.push(x / scales[m]),
                (NodeKind::MediatorCategorical, MediatorValue::Cat(c)) => {
                    let k = schema.levels[m].as_ref().unwrap().len();
                    for lev in 0..k {
                        row.push(if lev == *c { 1.0 } else { 0.0 });
                    }
                }
                _ => unreachable!(),
            }
        }
        row
    };
    let collect_rows = |g: &GroupData| -> ndarray::Array2<f64> {
        let rows: Vec<Vec<f64>> = (0..g.n())
            .map(|u| {
                let vector: Vec<MediatorValue> =
                    (0..schema.d()).map(|m| g.values[m][u]).collect();
                embed(&vector)
            })
            .collect();
        ndarray::Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
    };
    let e0 = collect_rows(&source);
    let e1 = collect_rows(&target);
    let cost = discrete::cost_matrix(e0.view(), e1.view())?;
    let w0 = vec![1.0 / source.n() as f64; source.n()];
    let w1 = vec![1.0 / target.n() as f64; target.n()];
    let plan = match method {
        GlobalMethod::Exact => discrete::solve_exact(&cost, &w0, &w1)?,
        GlobalMethod::Entropic { gamma } => {
            discrete::sinkhorn(&cost, &w0, &w1, gamma, 1e-8, 10_000)?.plan
        }
    };
    let mapped = discrete::barycentric_map(&plan, e1.view())?;

    // decode: numeric back to original scale, categorical via allocation
    let factual: Vec<Vec<MediatorValue>> = (0..source.n())
        .map(|u| (0..schema.d()).map(|m| source.values[m][u]).collect())
        .collect();
    let mut transported: Vec<Vec<MediatorValue>> = factual.clone();
    let mut col = 0usize;
    for m in 0..schema.d() {
        match schema.kinds[m] {
            NodeKind::MediatorNumeric => {
                for (u, t) in transported.iter_mut().enumerate() {
                    t[m] = MediatorValue::Num(mapped[[u, col]] * scales[m]);
                }
                col += 1;
            }
            NodeKind::MediatorCategorical => {
                let k = schema.levels[m].as_ref().unwrap().len();
                let points: Vec<SimplexPoint> = (0..source.n())
                    .map(|u| {
                        let raw: Vec<f64> = (0..k).map(|lev| mapped[[u, col + lev]]).collect();
                        SimplexPoint::renormalize(raw)
                    })
                    .collect::<Result<_>>()?;
                let mut pi = vec![0.0f64; k];
                for &c in &target.cat_column(m) {
                    pi[c] += 1.0 / target.n() as f64;
                }
                let labels = categorical::allocate_to_vertices(&points, &pi)?;
                for (u, t) in transported.iter_mut().enumerate() {
                    t[m] = MediatorValue::Cat(labels[u]);
                }
                col += k;
            }
            _ => unreachable!(),
        }
    }

    let order = dag.topological_order()?;
    Ok(CounterfactualSet {
        schema,
        unit_ids: source.rows.clone(),
        factual,
        transported,
        order: order.order,
        partials: None,
        diagnostics: Diagnostics::default(),
    })
}
