//! Seeded data generators for the synthetic studies and a Monte Carlo
//! replication harness. Replication `r` draws its dataset from `seed + r`,
//! so runs are reproducible and replications are order-independent.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dag::{DagSpec, NodeKind, NodeSpec};
use crate::dataset::{Column, ColumnData, Dataset};
use crate::effects::{self, RegressorKind};
use crate::error::Result;
use crate::rng::{stream_rng, STREAM_CATEGORICAL, STREAM_NUMERIC, STREAM_OUTCOME, STREAM_TREATMENT};
use crate::sequential::{self, Direction, GlobalMethod, TransportConfig};

/// Bivariate Gaussian mediators with a linear outcome:
/// `X | A=a ~ N(alpha * (mu_a, mu_a), [[1, r_a], [r_a, 1]])` and
/// `Y = c1 X1 + c2 X2 + c3 A + noise`.
#[derive(Debug, Clone)]
pub struct GaussianToyConfig {
    pub n: usize,
    /// Untreated proportion `P(A = 0)`; treatment is Bernoulli per row.
    pub p0: f64,
    /// Scale applied to both group means.
    pub alpha: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub r0: f64,
    pub r1: f64,
    pub outcome_coefs: (f64, f64, f64),
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for GaussianToyConfig {
    fn default() -> Self {
        GaussianToyConfig {
            n: 500,
            p0: 0.5,
            alpha: 1.0,
            mu0: -1.0,
            mu1: 1.0,
            r0: 0.7,
            r1: -0.5,
            outcome_coefs: (2.0, -1.5, 3.0),
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl GaussianToyConfig {
    fn assert_valid(&self) {
        assert!(self.n >= 2, "n must be at least 2");
        assert!(self.p0 > 0.0 && self.p0 < 1.0, "p0 must lie in (0, 1)");
        assert!(self.r0.abs() < 1.0 && self.r1.abs() < 1.0, "|r| must be < 1");
    }
}

/// Columns A, X1, X2, Y. Deterministic per seed.
pub fn gen_gaussian_toy(cfg: &GaussianToyConfig) -> Dataset {
    cfg.assert_valid();
    let n = cfg.n;
    let mut rng_a = stream_rng(cfg.seed, STREAM_TREATMENT);
    let mut rng_x = stream_rng(cfg.seed, STREAM_NUMERIC);
    let mut rng_e = stream_rng(cfg.seed, STREAM_OUTCOME);

    let mut a = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let (c1, c2, c3) = cfg.outcome_coefs;
    for _ in 0..n {
        let treated = rng_a.random::<f64>() >= cfg.p0;
        let (mu, r) = if treated {
            (cfg.alpha * cfg.mu1, cfg.r1)
        } else {
            (cfg.alpha * cfg.mu0, cfg.r0)
        };
        let z1: f64 = StandardNormal.sample(&mut rng_x);
        let z2: f64 = StandardNormal.sample(&mut rng_x);
        let v1 = mu + z1;
        let v2 = mu + r * z1 + (1.0 - r * r).sqrt() * z2;
        let eps: f64 = StandardNormal.sample(&mut rng_e);
        a.push(f64::from(treated));
        x1.push(v1);
        x2.push(v2);
        y.push(c1 * v1 + c2 * v2 + c3 * f64::from(treated) + cfg.noise_sd * eps);
    }
    let mut ds = Dataset::new();
    for (name, vals) in [("A", a), ("X1", x1), ("X2", x2), ("Y", y)] {
        ds.push_column(Column { name: name.into(), data: ColumnData::Numeric(vals) })
            .expect("columns share length");
    }
    ds
}

/// Mediator DAG for the Gaussian toy: a chain through the given first node.
pub fn gaussian_toy_dag(chain_first: &str) -> DagSpec {
    let (first, second) = if chain_first == "X2" { ("X2", "X1") } else { ("X1", "X2") };
    DagSpec::new(
        vec![
            NodeSpec { name: "A".into(), kind: NodeKind::Treatment },
            NodeSpec { name: "X1".into(), kind: NodeKind::MediatorNumeric },
            NodeSpec { name: "X2".into(), kind: NodeKind::MediatorNumeric },
            NodeSpec { name: "Y".into(), kind: NodeKind::Outcome },
        ],
        vec![
            ("A".into(), first.into()),
            ("A".into(), second.into()),
            (first.into(), second.into()),
            ("X1".into(), "Y".into()),
            ("X2".into(), "Y".into()),
            ("A".into(), "Y".into()),
        ],
    )
    .validate()
    .expect("toy DAG is valid")
}

/// Two Gaussian mediators, one categorical mediator downstream of both, and a
/// binary outcome whose logit depends on the treatment arm.
#[derive(Debug, Clone)]
pub struct ThreeMediatorConfig {
    pub n0: usize,
    pub n1: usize,
    pub mu0: [f64; 2],
    pub sd0: f64,
    pub rho0: f64,
    pub mu1: [f64; 2],
    pub sd1: f64,
    pub rho1: f64,
    /// Logit coefficients (intercept, x1, x2, a) for levels A and B; level C
    /// is the softmax reference.
    pub logit_a: [f64; 4],
    pub logit_b: [f64; 4],
    /// Outcome logit (intercept, x1, x2) per arm.
    pub eta0: [f64; 3],
    pub eta1: [f64; 3],
    /// Categorical contribution (level B, level C) per arm.
    pub gamma0: [f64; 2],
    pub gamma1: [f64; 2],
    pub seed: u64,
}

impl Default for ThreeMediatorConfig {
    fn default() -> Self {
        ThreeMediatorConfig {
            n0: 400,
            n1: 200,
            mu0: [-1.0, -1.0],
            sd0: 1.2,
            rho0: 0.5,
            mu1: [1.5, 1.5],
            sd1: 0.9,
            rho1: -0.4,
            logit_a: [0.5, 0.3, -0.4, 0.2],
            logit_b: [-0.3, -0.2, 0.5, -0.1],
            eta0: [-0.2, 0.6, -0.6],
            eta1: [0.1, -0.2, 0.8],
            gamma0: [0.2, -0.3],
            gamma1: [-0.2, -0.1],
            seed: 0,
        }
    }
}

/// Softmax level probabilities for X3 given (x1, x2, a).
pub fn three_mediator_level_probs(cfg: &ThreeMediatorConfig, x1: f64, x2: f64, a: f64) -> [f64; 3] {
    let la = cfg.logit_a[0] + cfg.logit_a[1] * x1 + cfg.logit_a[2] * x2 + cfg.logit_a[3] * a;
    let lb = cfg.logit_b[0] + cfg.logit_b[1] * x1 + cfg.logit_b[2] * x2 + cfg.logit_b[3] * a;
    let m = la.max(lb).max(0.0);
    let e = [(la - m).exp(), (lb - m).exp(), (-m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

/// Columns A, X1, X2, X3 (levels A/B/C), Y (binary). First `n0` rows are
/// untreated. Deterministic per seed.
pub fn gen_three_mediator(cfg: &ThreeMediatorConfig) -> Dataset {
    assert!(cfg.n0 >= 2 && cfg.n1 >= 2, "both groups need at least 2 rows");
    assert!(cfg.rho0.abs() < 1.0 && cfg.rho1.abs() < 1.0, "|rho| must be < 1");
    let n = cfg.n0 + cfg.n1;
    let mut rng_x = stream_rng(cfg.seed, STREAM_NUMERIC);
    let mut rng_c = stream_rng(cfg.seed, STREAM_CATEGORICAL);
    let mut rng_y = stream_rng(cfg.seed, STREAM_OUTCOME);

    let mut a = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut x3 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for row in 0..n {
        let treated = row >= cfg.n0;
        let (mu, sd, rho) = if treated {
            (cfg.mu1, cfg.sd1, cfg.rho1)
        } else {
            (cfg.mu0, cfg.sd0, cfg.rho0)
        };
        let z1: f64 = StandardNormal.sample(&mut rng_x);
        let z2: f64 = StandardNormal.sample(&mut rng_x);
        let v1 = mu[0] + sd * z1;
        let v2 = mu[1] + sd * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        let av = f64::from(treated);
        let probs = three_mediator_level_probs(cfg, v1, v2, av);
        let u: f64 = rng_c.random();
        let level = if u < probs[0] {
            0
        } else if u < probs[0] + probs[1] {
            1
        } else {
            2
        };
        let gamma = if treated { cfg.gamma1 } else { cfg.gamma0 };
        let g = match level {
            1 => gamma[0],
            2 => gamma[1],
            _ => 0.0,
        };
        let eta_c = if treated { cfg.eta1 } else { cfg.eta0 };
        let eta = eta_c[0] + eta_c[1] * v1 + eta_c[2] * v2 + g;
        let p = 1.0 / (1.0 + (-eta).exp());
        let yv = f64::from(rng_y.random::<f64>() < p);
        a.push(av);
        x1.push(v1);
        x2.push(v2);
        x3.push(level);
        y.push(yv);
    }
    let mut ds = Dataset::new();
    ds.push_column(Column { name: "A".into(), data: ColumnData::Numeric(a) }).unwrap();
    ds.push_column(Column { name: "X1".into(), data: ColumnData::Numeric(x1) }).unwrap();
    ds.push_column(Column { name: "X2".into(), data: ColumnData::Numeric(x2) }).unwrap();
    ds.push_column(Column {
        name: "X3".into(),
        data: ColumnData::Categorical {
            levels: vec!["A".into(), "B".into(), "C".into()],
            codes: x3,
        },
    })
    .unwrap();
    ds.push_column(Column { name: "Y".into(), data: ColumnData::Numeric(y) }).unwrap();
    ds
}

/// Mediator DAG of the three-mediator study.
pub fn three_mediator_dag() -> DagSpec {
    DagSpec::new(
        vec![
            NodeSpec { name: "A".into(), kind: NodeKind::Treatment },
            NodeSpec { name: "X1".into(), kind: NodeKind::MediatorNumeric },
            NodeSpec { name: "X2".into(), kind: NodeKind::MediatorNumeric },
            NodeSpec { name: "X3".into(), kind: NodeKind::MediatorCategorical },
            NodeSpec { name: "Y".into(), kind: NodeKind::Outcome },
        ],
        vec![
            ("A".into(), "X1".into()),
            ("A".into(), "X2".into()),
            ("A".into(), "X3".into()),
            ("X1".into(), "X2".into()),
            ("X1".into(), "X3".into()),
            ("X2".into(), "X3".into()),
            ("X1".into(), "Y".into()),
            ("X2".into(), "Y".into()),
            ("X3".into(), "Y".into()),
            ("A".into(), "Y".into()),
        ],
    )
    .validate()
    .expect("three-mediator DAG is valid")
}

/// Counterfactual construction methods compared in the Monte Carlo studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Sequential transport along the declared chain order.
    St1,
    /// Sequential transport along the reversed chain (Gaussian toy only;
    /// identical to St1 when the DAG forces a unique order).
    St2,
    /// Global exact OT over the embedded mediator vector.
    Ot,
    /// Global entropic OT.
    Skh,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "st" | "st1" => Some(Method::St1),
            "st2" => Some(Method::St2),
            "ot" => Some(Method::Ot),
            "skh" => Some(Method::Skh),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Method::St1 => "st1",
            Method::St2 => "st2",
            Method::Ot => "ot",
            Method::Skh => "skh",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Dgp {
    GaussianToy(GaussianToyConfig),
    ThreeMediator(ThreeMediatorConfig),
}

impl Dgp {
    fn generate(&self, seed: u64) -> Dataset {
        match self {
            Dgp::GaussianToy(cfg) => {
                let mut c = cfg.clone();
                c.seed = seed;
                gen_gaussian_toy(&c)
            }
            Dgp::ThreeMediator(cfg) => {
                let mut c = cfg.clone();
                c.seed = seed;
                gen_three_mediator(&c)
            }
        }
    }

    fn dag_for(&self, method: Method) -> DagSpec {
        match self {
            Dgp::GaussianToy(_) => match method {
                Method::St2 => gaussian_toy_dag("X2"),
                _ => gaussian_toy_dag("X1"),
            },
            Dgp::ThreeMediator(_) => three_mediator_dag(),
        }
    }
}

/// One Monte Carlo result row. Failed replications carry NaNs and `ok = false`.
#[derive(Debug, Clone)]
pub struct McRow {
    pub method: &'static str,
    pub rep: usize,
    pub delta_bar: f64,
    pub zeta_bar: f64,
    pub tau_bar: f64,
    pub eta_hat: f64,
    pub ok: bool,
}

/// Run `b` replications of dataset generation, counterfactual construction,
/// outcome-model fitting and effect decomposition for each method.
pub fn run_monte_carlo(
    dgp: &Dgp,
    methods: &[Method],
    b: usize,
    seed: u64,
    tcfg: &TransportConfig,
    regressor: RegressorKind,
) -> Vec<McRow> {
    assert!(b >= 1, "B must be at least 1");
    let mut rows: Vec<McRow> = (0..b)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let rep_seed = seed + rep as u64;
            let data = dgp.generate(rep_seed);
            methods
                .iter()
                .map(|&method| match replicate(dgp, method, &data, rep_seed, tcfg, regressor) {
                    Ok((d, z, t, e)) => McRow {
                        method: method.label(),
                        rep,
                        delta_bar: d,
                        zeta_bar: z,
                        tau_bar: t,
                        eta_hat: e,
                        ok: true,
                    },
                    Err(_) => McRow {
                        method: method.label(),
                        rep,
                        delta_bar: f64::NAN,
                        zeta_bar: f64::NAN,
                        tau_bar: f64::NAN,
                        eta_hat: f64::NAN,
                        ok: false,
                    },
                })
                .collect::<Vec<_>>()
                .into_iter()
        })
        .collect();
    let method_rank = |m: &str| methods.iter().position(|x| x.label() == m).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| method_rank(a.method).cmp(&method_rank(b.method)).then(a.rep.cmp(&b.rep)));
    rows
}

#[allow(clippy::too_many_arguments)]
fn replicate(
    dgp: &Dgp,
    method: Method,
    data: &Dataset,
    rep_seed: u64,
    tcfg: &TransportConfig,
    regressor: RegressorKind,
) -> Result<(f64, f64, f64, f64)> {
    let dag = dgp.dag_for(method);
    let direction = Direction::ZeroToOne;
    let cf = match method {
        Method::St1 | Method::St2 => {
            let order = dag.topological_order()?;
            sequential::sequential_transport(data, &dag, &order, tcfg, direction)?
        }
        Method::Ot => sequential::global_transport(data, &dag, GlobalMethod::Exact, direction)?,
        Method::Skh => sequential::global_transport(
            data,
            &dag,
            GlobalMethod::Entropic { gamma: tcfg.gamma },
            direction,
        )?,
    };
    let mu0 = effects::fit_outcome_model(data, &dag, 0, regressor, rep_seed)?;
    let mu1 = effects::fit_outcome_model(data, &dag, 1, regressor, rep_seed)?;
    let dec = effects::decompose(&mu0, &mu1, &cf)?;
    let treatment = data.treatment(dag.treatment_name().unwrap())?;
    let tgt_rows = data.group_rows(&treatment, direction.target_group());
    let support = effects::mediator_vectors(data, &cf.schema, &tgt_rows)?;
    let overlap = effects::overlap_check(&cf, &support);
    Ok((dec.delta_bar, dec.zeta_bar, dec.tau_bar, overlap.eta_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    #[test]
    fn alpha_zero_means_coincide() {
        let cfg = GaussianToyConfig { n: 5000, alpha: 0.0, seed: 1, ..Default::default() };
        let ds = gen_gaussian_toy(&cfg);
        let a = ds.treatment("A").unwrap();
        let x1 = ds.numeric("X1").unwrap();
        let m0: f64 = x1.iter().zip(&a).filter(|(_, &g)| g == 0).map(|(x, _)| x).sum::<f64>()
            / a.iter().filter(|&&g| g == 0).count() as f64;
        let m1: f64 = x1.iter().zip(&a).filter(|(_, &g)| g == 1).map(|(x, _)| x).sum::<f64>()
            / a.iter().filter(|&&g| g == 1).count() as f64;
        assert!((m0 - m1).abs() <= 0.1, "means {m0} vs {m1}");
    }

    #[test]
    fn default_group0_mean_near_minus_one() {
        let cfg = GaussianToyConfig { n: 5000, seed: 2, ..Default::default() };
        let ds = gen_gaussian_toy(&cfg);
        let a = ds.treatment("A").unwrap();
        let x1 = ds.numeric("X1").unwrap();
        let n0 = a.iter().filter(|&&g| g == 0).count();
        let m0: f64 = x1.iter().zip(&a).filter(|(_, &g)| g == 0).map(|(x, _)| x).sum::<f64>() / n0 as f64;
        assert!((m0 + 1.0).abs() <= 0.05, "group-0 mean {m0}");
    }

    #[test]
    fn ols_recovers_outcome_coefficients() {
        let cfg = GaussianToyConfig { n: 5000, seed: 3, ..Default::default() };
        let ds = gen_gaussian_toy(&cfg);
        let a = ds.numeric("A").unwrap();
        let x1 = ds.numeric("X1").unwrap();
        let x2 = ds.numeric("X2").unwrap();
        let y = ds.numeric("Y").unwrap();
        // least-squares oracle via normal equations on (1, X1, X2, A)
        let n = y.len();
        let design = Array2::from_shape_fn((n, 4), |(i, j)| match j {
            0 => 1.0,
            1 => x1[i],
            2 => x2[i],
            _ => a[i],
        });
        let mut xtx = Array2::<f64>::zeros((4, 4));
        let mut xty = Array1::<f64>::zeros(4);
        for i in 0..n {
            for p in 0..4 {
                xty[p] += design[[i, p]] * y[i];
                for q in 0..4 {
                    xtx[[p, q]] += design[[i, p]] * design[[i, q]];
                }
            }
        }
        let beta = crate::linalg::solve(&xtx, &xty).unwrap();
        assert!((beta[1] - 2.0).abs() <= 0.1, "beta1 = {}", beta[1]);
        assert!((beta[2] + 1.5).abs() <= 0.1, "beta2 = {}", beta[2]);
        assert!((beta[3] - 3.0).abs() <= 0.1, "beta3 = {}", beta[3]);
    }

    #[test]
    fn three_mediator_row_counts_and_levels() {
        let cfg = ThreeMediatorConfig { seed: 4, ..Default::default() };
        let ds = gen_three_mediator(&cfg);
        assert_eq!(ds.n_rows(), 600);
        let a = ds.treatment("A").unwrap();
        assert_eq!(a.iter().filter(|&&g| g == 0).count(), 400);
        assert_eq!(a.iter().filter(|&&g| g == 1).count(), 200);
        let (levels, _) = ds.categorical("X3").unwrap();
        assert_eq!(levels, &["A".to_string(), "B".to_string(), "C".to_string()]);
    }

    #[test]
    fn categorical_frequencies_match_integrated_softmax() {
        // oracle: Monte Carlo integration of the softmax probabilities over
        // the group's Gaussian mediator law, with 10^6 draws
        let big = ThreeMediatorConfig { n0: 25_000, n1: 25_000, seed: 5, ..Default::default() };
        let ds = gen_three_mediator(&big);
        let a = ds.treatment("A").unwrap();
        let (_, codes) = ds.categorical("X3").unwrap();

        let cfg = ThreeMediatorConfig::default();
        let mut rng = stream_rng(999, STREAM_NUMERIC);
        let mut oracle = [[0.0f64; 3]; 2];
        let draws = 1_000_000usize;
        for _ in 0..draws {
            for (g, (mu, sd, rho)) in [
                (0usize, (cfg.mu0, cfg.sd0, cfg.rho0)),
                (1usize, (cfg.mu1, cfg.sd1, cfg.rho1)),
            ] {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let v1 = mu[0] + sd * z1;
                let v2 = mu[1] + sd * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
                let p = three_mediator_level_probs(&cfg, v1, v2, g as f64);
                for k in 0..3 {
                    oracle[g][k] += p[k] / draws as f64;
                }
            }
        }
        for g in 0..2u8 {
            let rows: Vec<usize> = ds.group_rows(&a, g);
            for k in 0..3 {
                let freq = rows.iter().filter(|&&r| codes[r] == k).count() as f64 / rows.len() as f64;
                assert!(
                    (freq - oracle[g as usize][k]).abs() <= 0.02,
                    "group {g} level {k}: {freq} vs {}",
                    oracle[g as usize][k]
                );
            }
        }
    }

    #[test]
    fn zero_outcome_coefficients_give_half_probability() {
        let cfg = ThreeMediatorConfig {
            n0: 4000,
            n1: 4000,
            eta0: [0.0; 3],
            eta1: [0.0; 3],
            gamma0: [0.0; 2],
            gamma1: [0.0; 2],
            seed: 6,
            ..Default::default()
        };
        let ds = gen_three_mediator(&cfg);
        let a = ds.treatment("A").unwrap();
        let y = ds.numeric("Y").unwrap();
        for g in 0..2u8 {
            let rows = ds.group_rows(&a, g);
            let rate: f64 = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
            assert!((rate - 0.5).abs() <= 0.03, "group {g} rate {rate}");
        }
    }

    #[test]
    fn same_seed_bitwise_identical() {
        let cfg = GaussianToyConfig { n: 200, seed: 77, ..Default::default() };
        let a = gen_gaussian_toy(&cfg);
        let b = gen_gaussian_toy(&cfg);
        for (ca, cb) in a.columns().iter().zip(b.columns()) {
            match (&ca.data, &cb.data) {
                (ColumnData::Numeric(va), ColumnData::Numeric(vb)) => {
                    for (x, y) in va.iter().zip(vb) {
                        assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
                _ => panic!("toy columns are numeric"),
            }
        }
    }

    #[test]
    fn monte_carlo_smoke_and_identities() {
        let dgp = Dgp::GaussianToy(GaussianToyConfig { n: 200, ..Default::default() });
        let rows = run_monte_carlo(
            &dgp,
            &[Method::St1],
            1,
            11,
            &TransportConfig::default(),
            RegressorKind::KernelRegression,
        );
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.ok && r.delta_bar.is_finite() && r.zeta_bar.is_finite() && r.tau_bar.is_finite());
        assert_eq!(r.tau_bar, r.delta_bar + r.zeta_bar);

        // same seed reproduces the table bitwise
        let again = run_monte_carlo(
            &dgp,
            &[Method::St1],
            1,
            11,
            &TransportConfig::default(),
            RegressorKind::KernelRegression,
        );
        assert_eq!(rows[0].delta_bar.to_bits(), again[0].delta_bar.to_bits());
        assert_eq!(rows[0].eta_hat.to_bits(), again[0].eta_hat.to_bits());
    }
}
