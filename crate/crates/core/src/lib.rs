//! Distributional counterfactual mediator profiles via sequential optimal
//! transport along a mediator DAG, with unit-level direct/indirect/total
//! effect decomposition.
//!
//! The pipeline: validate the mediator DAG ([`dag`]), transport each mediator
//! in topological order ([`sequential`]) using marginal or kernel-conditional
//! monotone maps ([`univariate`], [`conditional`]) for numeric nodes and
//! simplex transport plus vertex allocation ([`categorical`], [`discrete`])
//! for categorical nodes, then fit per-group outcome regressions and
//! decompose outcome differences per unit ([`effects`]). Synthetic studies
//! and a Monte Carlo harness live in [`simgen`].

#![allow(clippy::needless_range_loop)]

pub mod categorical;
pub mod conditional;
pub mod dag;
pub mod dataset;
pub mod discrete;
pub mod effects;
pub mod error;
mod linalg;
pub mod rng;
pub mod sequential;
pub mod simgen;
pub mod univariate;

pub use dag::{DagSpec, NodeKind, NodeSpec, TopologicalOrder};
pub use dataset::{Column, ColumnData, ColumnType, Dataset};
pub use error::{Error, Result};
pub use sequential::{
    CounterfactualSet, Direction, GlobalMethod, MediatorSchema, MediatorValue, TransportConfig,
};
