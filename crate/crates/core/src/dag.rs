//! Mediator DAG: validation, topological ordering and parent-set queries.
//!
//! The treatment is an implicit root parent of every mediator, so mediator
//! distributions are always fitted per treatment group. `parents_of` returns
//! mediator parents only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Treatment,
    MediatorNumeric,
    MediatorCategorical,
    Outcome,
}

impl NodeKind {
    pub fn is_mediator(self) -> bool {
        matches!(self, NodeKind::MediatorNumeric | NodeKind::MediatorCategorical)
    }

    fn label(self) -> &'static str {
        match self {
            NodeKind::Treatment => "treatment",
            NodeKind::MediatorNumeric => "mediator-numeric",
            NodeKind::MediatorCategorical => "mediator-categorical",
            NodeKind::Outcome => "outcome",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

/// Mediator graph with a treatment root and optional outcome sink.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(String, String)>,
}

/// Topological ordering of the mediators (parents before children).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologicalOrder {
    pub order: Vec<String>,
}

/// On-disk JSON form: nodes, edges, and named treatment/outcome columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagFile {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub treatment: Option<String>,
    #[serde(default)]
    pub outcome: Option<String>,
}

impl DagSpec {
    pub fn new(nodes: Vec<NodeSpec>, edges: Vec<(String, String)>) -> Self {
        DagSpec { nodes, edges }
    }

    /// Parse the JSON spec file, cross-checking the `treatment`/`outcome`
    /// fields against node kinds when present.
    pub fn from_json(text: &str) -> Result<DagSpec> {
        let file: DagFile = serde_json::from_str(text)?;
        let spec = DagSpec::new(file.nodes, file.edges);
        if let Some(t) = &file.treatment {
            let found = spec
                .nodes
                .iter()
                .any(|n| &n.name == t && n.kind == NodeKind::Treatment);
            if !found {
                return Err(Error::Config(format!(
                    "declared treatment `{t}` is not a treatment node"
                )));
            }
        }
        if let Some(y) = &file.outcome {
            let found = spec
                .nodes
                .iter()
                .any(|n| &n.name == y && n.kind == NodeKind::Outcome);
            if !found {
                return Err(Error::Config(format!(
                    "declared outcome `{y}` is not an outcome node"
                )));
            }
        }
        spec.validate()
    }

    fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn treatment_name(&self) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Treatment)
            .map(|n| n.name.as_str())
    }

    pub fn outcome_name(&self) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Outcome)
            .map(|n| n.name.as_str())
    }

    /// Mediator names in declaration order.
    pub fn mediators(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.kind.is_mediator())
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn kind_of(&self, name: &str) -> Result<NodeKind> {
        Ok(self.nodes[self.node_index(name)?].kind)
    }

    /// Check all structural invariants; returns the spec unchanged on success.
    /// Idempotent.
    pub fn validate(self) -> Result<DagSpec> {
        let n_treat = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Treatment)
            .count();
        if n_treat != 1 {
            return Err(Error::MultipleTreatments(n_treat));
        }
        let n_out = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Outcome)
            .count();
        if n_out > 1 {
            return Err(Error::MultipleOutcomes(n_out));
        }
        for (from, to) in &self.edges {
            let fi = self.node_index(from)?;
            let ti = self.node_index(to)?;
            if self.nodes[ti].kind == NodeKind::Treatment {
                return Err(Error::EdgeIntoTreatment(to.clone()));
            }
            if self.nodes[fi].kind == NodeKind::Outcome {
                return Err(Error::EdgeOutOfOutcome(from.clone()));
            }
        }
        // acyclicity on the mediator subgraph, via Kahn
        self.topological_order()?;
        Ok(self)
    }

    /// Kahn's algorithm over the mediator subgraph, ties broken by node
    /// declaration order so runs are reproducible.
    pub fn topological_order(&self) -> Result<TopologicalOrder> {
        let meds = self.mediators();
        let idx_of = |name: &str| meds.iter().position(|m| *m == name);
        let mut indeg = vec![0usize; meds.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); meds.len()];
        for (from, to) in &self.edges {
            self.node_index(from)?;
            self.node_index(to)?;
            if let (Some(f), Some(t)) = (idx_of(from), idx_of(to)) {
                indeg[t] += 1;
                children[f].push(t);
            }
        }
        let mut out = Vec::with_capacity(meds.len());
        let mut done = vec![false; meds.len()];
        for _ in 0..meds.len() {
            let next = (0..meds.len()).find(|&i| !done[i] && indeg[i] == 0);
            let Some(i) = next else {
                return Err(Error::CycleDetected(self.describe_cycle(&done, &children)));
            };
            done[i] = true;
            out.push(meds[i].to_string());
            for &c in &children[i] {
                indeg[c] -= 1;
            }
        }
        Ok(TopologicalOrder { order: out })
    }

    /// Walk child edges among the unfinished nodes until a repeat, producing a
    /// concrete cycle for the error message.
    fn describe_cycle(&self, done: &[bool], children: &[Vec<usize>]) -> String {
        let meds = self.mediators();
        let start = (0..meds.len()).find(|&i| !done[i]).unwrap_or(0);
        let mut path = vec![start];
        let mut cur = start;
        while let Some(&next) = children[cur].iter().find(|&&c| !done[c]) {
            if let Some(pos) = path.iter().position(|&p| p == next) {
                let names: Vec<&str> = path[pos..].iter().map(|&i| meds[i]).collect();
                return format!("{} -> {}", names.join(" -> "), meds[next]);
            }
            path.push(next);
            cur = next;
        }
        meds[start].to_string()
    }

    /// Mediator parents of `node` in declaration order. The treatment root is
    /// implicit and excluded.
    pub fn parents_of(&self, node: &str) -> Result<Vec<String>> {
        let ni = self.node_index(node)?;
        if !self.nodes[ni].kind.is_mediator() {
            return Err(Error::NotAMediator(
                node.to_string(),
                self.nodes[ni].kind.label().to_string(),
            ));
        }
        let mut parents: Vec<(usize, String)> = Vec::new();
        for (from, to) in &self.edges {
            if to == node {
                let fi = self.node_index(from)?;
                if self.nodes[fi].kind.is_mediator() {
                    parents.push((fi, from.clone()));
                }
            }
        }
        parents.sort_by_key(|(i, _)| *i);
        parents.dedup_by_key(|(i, _)| *i);
        Ok(parents.into_iter().map(|(_, n)| n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> DagSpec {
        DagSpec::new(
            vec![
                NodeSpec { name: "A".into(), kind: NodeKind::Treatment },
                NodeSpec { name: "X1".into(), kind: NodeKind::MediatorNumeric },
                NodeSpec { name: "X2".into(), kind: NodeKind::MediatorNumeric },
            ],
            vec![
                ("A".into(), "X1".into()),
                ("X1".into(), "X2".into()),
            ],
        )
    }

    fn compas() -> DagSpec {
        DagSpec::new(
            vec![
                NodeSpec { name: "race".into(), kind: NodeKind::Treatment },
                NodeSpec { name: "age".into(), kind: NodeKind::MediatorNumeric },
                NodeSpec { name: "priors_count".into(), kind: NodeKind::MediatorNumeric },
                NodeSpec { name: "charge_degree".into(), kind: NodeKind::MediatorCategorical },
                NodeSpec { name: "two_year_recid".into(), kind: NodeKind::Outcome },
            ],
            vec![
                ("race".into(), "age".into()),
                ("race".into(), "priors_count".into()),
                ("race".into(), "charge_degree".into()),
                ("age".into(), "priors_count".into()),
                ("age".into(), "charge_degree".into()),
                ("priors_count".into(), "two_year_recid".into()),
            ],
        )
    }

    #[test]
    fn chain_is_valid_and_ordered() {
        let spec = chain().validate().unwrap();
        let order = spec.topological_order().unwrap();
        assert_eq!(order.order, vec!["X1", "X2"]);
    }

    #[test]
    fn two_cycle_detected() {
        let mut spec = chain();
        spec.edges.push(("X2".into(), "X1".into()));
        match spec.validate() {
            Err(Error::CycleDetected(msg)) => assert!(msg.contains("X1") && msg.contains("X2")),
            other => panic!("expected CycleDetected, got {other:?}"),
        }
    }

    #[test]
    fn compas_dag_valid_with_expected_order() {
        let spec = compas().validate().unwrap();
        let order = spec.topological_order().unwrap();
        assert_eq!(order.order, vec!["age", "priors_count", "charge_degree"]);
        assert_eq!(spec.parents_of("priors_count").unwrap(), vec!["age"]);
    }

    #[test]
    fn incomparable_nodes_follow_declaration_order() {
        let spec = DagSpec::new(
            vec![
                NodeSpec { name: "A".into(), kind: NodeKind::Treatment },
                NodeSpec { name: "X1".into(), kind: NodeKind::MediatorNumeric },
                NodeSpec { name: "X2".into(), kind: NodeKind::MediatorNumeric },
            ],
            vec![("A".into(), "X1".into()), ("A".into(), "X2".into())],
        );
        let order = spec.topological_order().unwrap();
        assert_eq!(order.order, vec!["X1", "X2"]);

        // permuting declarations permutes only the incomparable pair
        let swapped = DagSpec::new(
            vec![
                NodeSpec { name: "A".into(), kind: NodeKind::Treatment },
                NodeSpec { name: "X2".into(), kind: NodeKind::MediatorNumeric },
                NodeSpec { name: "X1".into(), kind: NodeKind::MediatorNumeric },
            ],
            vec![("A".into(), "X1".into()), ("A".into(), "X2".into())],
        );
        assert_eq!(swapped.topological_order().unwrap().order, vec!["X2", "X1"]);
    }

    #[test]
    fn parents_of_chain() {
        let spec = chain();
        assert!(spec.parents_of("X1").unwrap().is_empty());
        assert_eq!(spec.parents_of("X2").unwrap(), vec!["X1"]);
        assert!(matches!(
            spec.parents_of("missing"),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn edge_into_treatment_rejected() {
        let mut spec = chain();
        spec.edges.push(("X1".into(), "A".into()));
        assert!(matches!(spec.validate(), Err(Error::EdgeIntoTreatment(_))));
    }

    #[test]
    fn unknown_edge_endpoint_rejected() {
        let mut spec = chain();
        spec.edges.push(("X1".into(), "ghost".into()));
        assert!(matches!(spec.validate(), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn validate_idempotent() {
        let once = chain().validate().unwrap();
        let twice = once.clone().validate().unwrap();
        assert_eq!(once.mediators(), twice.mediators());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{
            "nodes": [
                {"name": "A", "kind": "treatment"},
                {"name": "X1", "kind": "mediator-numeric"},
                {"name": "X3", "kind": "mediator-categorical"},
                {"name": "Y", "kind": "outcome"}
            ],
            "edges": [["A", "X1"], ["X1", "X3"], ["X3", "Y"]],
            "treatment": "A",
            "outcome": "Y"
        }"#;
        let spec = DagSpec::from_json(text).unwrap();
        assert_eq!(spec.treatment_name(), Some("A"));
        assert_eq!(spec.outcome_name(), Some("Y"));
        assert_eq!(spec.topological_order().unwrap().order, vec!["X1", "X3"]);
    }

    #[test]
    fn prefix_contains_ancestors() {
        // every prefix of the order contains all ancestors of its last element
        let spec = compas().validate().unwrap();
        let order = spec.topological_order().unwrap().order;
        for (j, name) in order.iter().enumerate() {
            let prefix: Vec<&String> = order[..j].iter().collect();
            let mut stack = spec.parents_of(name).unwrap();
            while let Some(p) = stack.pop() {
                assert!(prefix.iter().any(|q| **q == p), "ancestor {p} missing");
                stack.extend(spec.parents_of(&p).unwrap());
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn random_dags_order_soundly(
            n in 1usize..8,
            edge_bits in proptest::collection::vec(proptest::bool::ANY, 28),
        ) {
            // edges only point from lower to higher declaration index, so the
            // generated graph is acyclic by construction
            let mut nodes = vec![NodeSpec { name: "A".into(), kind: NodeKind::Treatment }];
            for i in 0..n {
                nodes.push(NodeSpec { name: format!("m{i}"), kind: NodeKind::MediatorNumeric });
            }
            let mut edges = Vec::new();
            let mut bit = 0;
            for i in 0..n {
                edges.push(("A".to_string(), format!("m{i}")));
                for j in (i + 1)..n {
                    if edge_bits[bit % edge_bits.len()] {
                        edges.push((format!("m{i}"), format!("m{j}")));
                    }
                    bit += 1;
                }
            }
            let spec = DagSpec::new(nodes, edges).validate().unwrap();
            let spec = spec.validate().unwrap(); // idempotent
            let order = spec.topological_order().unwrap().order;
            proptest::prop_assert_eq!(order.len(), n);
            for (j, name) in order.iter().enumerate() {
                for p in spec.parents_of(name).unwrap() {
                    proptest::prop_assert!(order[..j].contains(&p));
                }
            }
        }
    }
}
