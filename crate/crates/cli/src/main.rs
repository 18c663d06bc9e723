//! Command-line front end: data simulation, sequential/global transport,
//! effect decomposition, mediator attribution and Monte Carlo replication.
//!
//! Every run is deterministic given its flags and seed. Floats are written
//! with 17 significant digits so outputs are byte-stable and lossless.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use seqtrans::dag::DagSpec;
use seqtrans::dataset::{format_float, ColumnData, ColumnType, Dataset};
use seqtrans::effects::{self, RegressorKind};
use seqtrans::sequential::{
    self, CounterfactualSet, Direction, GlobalMethod, MediatorValue, NodeOverride, TransportConfig,
};
use seqtrans::simgen::{
    self, Dgp, GaussianToyConfig, McRow, Method, ThreeMediatorConfig,
};

#[derive(Parser)]
#[command(name = "seqtrans", version, about = "Sequential-transport mediation analysis")]
struct Cli {
    /// Cap the rayon worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Simulate {
        #[command(subcommand)]
        dgp: SimulateDgp,
    },
    /// Build counterfactual mediator profiles and write counterfactuals.csv.
    Transport(PipelineArgs),
    /// Transport, fit outcome models and write the full effect decomposition.
    Decompose(PipelineArgs),
    /// Decompose with per-node attribution increments (sequential only).
    Attribute(PipelineArgs),
    /// Monte Carlo replications of the full pipeline.
    Mc(McArgs),
}

#[derive(Subcommand)]
enum SimulateDgp {
    /// Bivariate Gaussian mediators with a linear outcome.
    GaussianToy {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Untreated proportion P(A=0).
        #[arg(long, default_value_t = 0.5)]
        p0: f64,
        #[arg(long, default_value_t = 0.7)]
        r0: f64,
        #[arg(long, default_value_t = -0.5)]
        r1: f64,
        /// Output CSV path (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two Gaussian mediators, a categorical mediator and a binary outcome.
    ThreeMediator {
        #[arg(long, default_value_t = 400)]
        n0: usize,
        #[arg(long, default_value_t = 200)]
        n1: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    St,
    Ot,
    Skh,
}

impl MethodArg {
    fn label(self) -> &'static str {
        match self {
            MethodArg::St => "st",
            MethodArg::Ot => "ot",
            MethodArg::Skh => "skh",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    #[value(name = "0to1")]
    ZeroToOne,
    #[value(name = "1to0")]
    OneToZero,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegressorArg {
    Kernel,
    Trees,
}

#[derive(Args)]
struct PipelineArgs {
    /// Input dataset (CSV with a header row).
    #[arg(long)]
    data: PathBuf,
    /// Mediator DAG spec (JSON).
    #[arg(long)]
    dag: PathBuf,
    #[arg(long, value_enum, default_value = "st")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "0to1")]
    direction: DirectionArg,
    /// Entropic regularization for simplex transport and the skh method.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Per-node kernel bandwidth override, e.g. --bandwidth priors_count=0.8.
    #[arg(long, value_name = "NODE=H")]
    bandwidth: Vec<String>,
    /// Per-node gamma override, e.g. --node-gamma charge_degree=0.05.
    #[arg(long, value_name = "NODE=G")]
    node_gamma: Vec<String>,
    #[arg(long, value_enum, default_value = "kernel")]
    regressor: RegressorArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct McArgs {
    /// Data-generating process: gaussian-toy or three-mediator.
    #[arg(long)]
    dgp: String,
    /// Comma-separated subset of st1,st2,ot,skh.
    #[arg(long, default_value = "st1")]
    methods: String,
    /// Number of replications.
    #[arg(long, visible_alias = "B", default_value_t = 50)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample size (gaussian-toy).
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    p0: f64,
    /// Group sizes (three-mediator).
    #[arg(long, default_value_t = 400)]
    n0: usize,
    #[arg(long, default_value_t = 200)]
    n1: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "kernel")]
    regressor: RegressorArg,
    /// Output CSV path (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut artifacts = ArtifactTracker::default();
    if let Err(err) = run(cli.command, &mut artifacts) {
        artifacts.remove_all();
        let report = serde_json::json!({ "error": format!("{err:#}") });
        eprintln!("{report}");
        std::process::exit(1);
    }
}

/// Paths created during a run, removed again if the run fails.
#[derive(Default)]
struct ArtifactTracker {
    paths: Vec<PathBuf>,
}

impl ArtifactTracker {
    fn track(&mut self, path: &Path) {
        self.paths.push(path.to_path_buf());
    }

    fn remove_all(&self) {
        for p in &self.paths {
            let _ = fs::remove_file(p);
        }
    }
}

fn run(command: Command, artifacts: &mut ArtifactTracker) -> anyhow::Result<()> {
    match command {
        Command::Simulate { dgp } => simulate(dgp, artifacts),
        Command::Transport(args) => pipeline(args, PipelineMode::Transport, artifacts),
        Command::Decompose(args) => pipeline(args, PipelineMode::Decompose, artifacts),
        Command::Attribute(args) => pipeline(args, PipelineMode::Attribute, artifacts),
        Command::Mc(args) => monte_carlo(args, artifacts),
    }
}

fn simulate(dgp: SimulateDgp, artifacts: &mut ArtifactTracker) -> anyhow::Result<()> {
    let (dataset, out) = match dgp {
        SimulateDgp::GaussianToy { n, seed, alpha, p0, r0, r1, out } => {
            let cfg = GaussianToyConfig { n, seed, alpha, p0, r0, r1, ..Default::default() };
            (simgen::gen_gaussian_toy(&cfg), out)
        }
        SimulateDgp::ThreeMediator { n0, n1, seed, out } => {
            let cfg = ThreeMediatorConfig { n0, n1, seed, ..Default::default() };
            (simgen::gen_three_mediator(&cfg), out)
        }
    };
    match out {
        Some(path) => {
            artifacts.track(&path);
            dataset.write_csv_path(&path)?;
        }
        None => dataset.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

enum PipelineMode {
    Transport,
    Decompose,
    Attribute,
}

fn parse_overrides(args: &PipelineArgs) -> anyhow::Result<HashMap<String, NodeOverride>> {
    let mut overrides: HashMap<String, NodeOverride> = HashMap::new();
    for (list, is_bandwidth) in [(&args.bandwidth, true), (&args.node_gamma, false)] {
        for spec in list {
            let (node, value) = spec
                .split_once('=')
                .ok_or_else(|| anyhow!("expected NODE=VALUE, got `{spec}`"))?;
            let value: f64 = value.parse().context("override value must be a number")?;
            let entry = overrides.entry(node.to_string()).or_default();
            if is_bandwidth {
                entry.bandwidth = Some(value);
            } else {
                entry.gamma = Some(value);
            }
        }
    }
    Ok(overrides)
}

fn load_inputs(args: &PipelineArgs) -> anyhow::Result<(Dataset, DagSpec)> {
    let dag_text = fs::read_to_string(&args.dag)
        .with_context(|| format!("reading DAG spec {:?}", args.dag))?;
    let dag = DagSpec::from_json(&dag_text)?;
    // column type hints from the DAG node kinds
    let mut hints = HashMap::new();
    for name in dag.mediators() {
        let hint = match dag.kind_of(name)? {
            seqtrans::NodeKind::MediatorCategorical => ColumnType::Categorical,
            _ => ColumnType::Numeric,
        };
        hints.insert(name.to_string(), hint);
    }
    let data = Dataset::read_csv_path(&args.data, &hints)
        .with_context(|| format!("reading dataset {:?}", args.data))?;
    Ok((data, dag))
}

fn pipeline(
    args: PipelineArgs,
    mode: PipelineMode,
    artifacts: &mut ArtifactTracker,
) -> anyhow::Result<()> {
    if matches!(mode, PipelineMode::Attribute) && args.method != MethodArg::St {
        bail!("attribution needs the per-node stages of --method st");
    }
    let (data, dag) = load_inputs(&args)?;
    let direction = match args.direction {
        DirectionArg::ZeroToOne => Direction::ZeroToOne,
        DirectionArg::OneToZero => Direction::OneToZero,
    };
    let tcfg = TransportConfig {
        gamma: args.gamma,
        node_overrides: parse_overrides(&args)?,
    };
    let cf = match args.method {
        MethodArg::St => {
            let order = dag.topological_order()?;
            sequential::sequential_transport(&data, &dag, &order, &tcfg, direction)?
        }
        MethodArg::Ot => sequential::global_transport(&data, &dag, GlobalMethod::Exact, direction)?,
        MethodArg::Skh => sequential::global_transport(
            &data,
            &dag,
            GlobalMethod::Entropic { gamma: args.gamma },
            direction,
        )?,
    };

    fs::create_dir_all(&args.out_dir)?;
    let cf_path = args.out_dir.join("counterfactuals.csv");
    artifacts.track(&cf_path);
    write_counterfactuals(&cf_path, &data, &cf)?;
    if matches!(mode, PipelineMode::Transport) {
        return Ok(());
    }

    let regressor = match args.regressor {
        RegressorArg::Kernel => RegressorKind::KernelRegression,
        RegressorArg::Trees => RegressorKind::BaggedTrees,
    };
    let mu0 = effects::fit_outcome_model(&data, &dag, 0, regressor, args.seed)?;
    let mu1 = effects::fit_outcome_model(&data, &dag, 1, regressor, args.seed)?;
    // the source group's model plays the mu0 role; 1to0 swaps the group roles
    let (m_src, m_tgt) = match direction {
        Direction::ZeroToOne => (&mu0, &mu1),
        Direction::OneToZero => (&mu1, &mu0),
    };
    let dec = effects::decompose(m_src, m_tgt, &cf)?;
    let attribution = if matches!(args.method, MethodArg::St) {
        Some(effects::attribute_mediators(m_src, &cf)?)
    } else {
        None
    };

    let treatment = data.treatment(dag.treatment_name().expect("validated"))?;
    let tgt_rows = data.group_rows(&treatment, direction.target_group());
    let src_rows = data.group_rows(&treatment, direction.source_group());
    let support = effects::mediator_vectors(&data, &cf.schema, &tgt_rows)?;
    let overlap = effects::overlap_check(&cf, &support);

    let effects_path = args.out_dir.join("effects.csv");
    artifacts.track(&effects_path);
    write_effects(&effects_path, &dec, attribution.as_ref())?;

    let (n0, n1) = match direction {
        Direction::ZeroToOne => (src_rows.len(), tgt_rows.len()),
        Direction::OneToZero => (tgt_rows.len(), src_rows.len()),
    };
    let summary_path = args.out_dir.join("summary.json");
    artifacts.track(&summary_path);
    write_summary(
        &summary_path,
        &dec,
        overlap.eta_hat,
        args.method.label(),
        args.seed,
        n0,
        n1,
        &cf,
    )?;
    Ok(())
}

fn write_counterfactuals(path: &Path, data: &Dataset, cf: &CounterfactualSet) -> anyhow::Result<()> {
    let mut out = String::new();
    let med_names = &cf.schema.names;
    let mut header: Vec<String> = vec!["unit".into()];
    header.extend(med_names.iter().cloned());
    header.extend(med_names.iter().map(|m| format!("{m}_star")));
    for extra in &cf.diagnostics.passthrough_columns {
        header.push(extra.clone());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let fmt = |schema: &seqtrans::MediatorSchema, m: usize, v: &MediatorValue| match v {
        MediatorValue::Num(x) => format_float(*x),
        MediatorValue::Cat(c) => schema.levels[m].as_ref().unwrap()[*c].clone(),
    };
    for (pos, &unit) in cf.unit_ids.iter().enumerate() {
        let mut fields: Vec<String> = vec![unit.to_string()];
        for (m, v) in cf.factual[pos].iter().enumerate() {
            fields.push(fmt(&cf.schema, m, v));
        }
        for (m, v) in cf.transported[pos].iter().enumerate() {
            fields.push(fmt(&cf.schema, m, v));
        }
        for extra in &cf.diagnostics.passthrough_columns {
            let col = data.column(extra)?;
            fields.push(match &col.data {
                ColumnData::Numeric(v) => format_float(v[unit]),
                ColumnData::Categorical { levels, codes } => levels[codes[unit]].clone(),
            });
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_effects(
    path: &Path,
    dec: &effects::EffectDecomposition,
    attribution: Option<&effects::Attribution>,
) -> anyhow::Result<()> {
    let mut out = String::new();
    let mut header = vec!["unit".to_string(), "delta".into(), "zeta".into(), "tau".into()];
    if let Some(att) = attribution {
        header.extend(att.order.iter().map(|n| format!("incr_{n}")));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (pos, &unit) in dec.unit_ids.iter().enumerate() {
        let mut fields = vec![
            unit.to_string(),
            format_float(dec.delta[pos]),
            format_float(dec.zeta[pos]),
            format_float(dec.tau[pos]),
        ];
        if let Some(att) = attribution {
            fields.extend(att.increments[pos].iter().map(|&x| format_float(x)));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_summary(
    path: &Path,
    dec: &effects::EffectDecomposition,
    eta_hat: f64,
    method: &str,
    seed: u64,
    n0: usize,
    n1: usize,
    cf: &CounterfactualSet,
) -> anyhow::Result<()> {
    // hand-formatted for byte-stable output with 17-significant-digit floats
    let mut s = String::new();
    s.push_str("{\n");
    s.push_str(&format!("  \"delta_bar\": {},\n", format_float(dec.delta_bar)));
    s.push_str(&format!("  \"zeta_bar\": {},\n", format_float(dec.zeta_bar)));
    s.push_str(&format!("  \"tau_bar\": {},\n", format_float(dec.tau_bar)));
    s.push_str(&format!("  \"eta_hat\": {},\n", format_float(eta_hat)));
    s.push_str(&format!("  \"method\": \"{method}\",\n"));
    s.push_str(&format!("  \"seed\": {seed},\n"));
    s.push_str(&format!("  \"n0\": {n0},\n"));
    s.push_str(&format!("  \"n1\": {n1},\n"));
    s.push_str(&format!(
        "  \"diagnostics\": {{\"clamp_count\": {}, \"near_degenerate_count\": {}, \"passthrough_columns\": [{}]}}\n",
        cf.diagnostics.clamp_count,
        cf.diagnostics.near_degenerate_count,
        cf.diagnostics
            .passthrough_columns
            .iter()
            .map(|c| format!("\"{c}\""))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    s.push('}');
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn monte_carlo(args: McArgs, artifacts: &mut ArtifactTracker) -> anyhow::Result<()> {
    let dgp = match args.dgp.as_str() {
        "gaussian-toy" => Dgp::GaussianToy(GaussianToyConfig {
            n: args.n,
            alpha: args.alpha,
            p0: args.p0,
            ..Default::default()
        }),
        "three-mediator" => Dgp::ThreeMediator(ThreeMediatorConfig {
            n0: args.n0,
            n1: args.n1,
            ..Default::default()
        }),
        other => bail!("unknown DGP `{other}` (expected gaussian-toy or three-mediator)"),
    };
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|s| Method::parse(s.trim()).ok_or_else(|| anyhow!("unknown method `{s}`")))
        .collect::<anyhow::Result<_>>()?;
    if methods.is_empty() {
        bail!("at least one method required");
    }
    let regressor = match args.regressor {
        RegressorArg::Kernel => RegressorKind::KernelRegression,
        RegressorArg::Trees => RegressorKind::BaggedTrees,
    };
    let tcfg = TransportConfig { gamma: args.gamma, ..Default::default() };
    let rows = simgen::run_monte_carlo(&dgp, &methods, args.b, args.seed, &tcfg, regressor);
    match &args.out {
        Some(path) => {
            artifacts.track(path);
            let mut f = fs::File::create(path)?;
            write_mc_rows(&mut f, &rows)?;
        }
        None => write_mc_rows(&mut std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn write_mc_rows<W: Write>(w: &mut W, rows: &[McRow]) -> anyhow::Result<()> {
    writeln!(w, "method,rep,delta_bar,zeta_bar,tau_bar,eta_hat")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method,
            r.rep,
            format_float(r.delta_bar),
            format_float(r.zeta_bar),
            format_float(r.tau_bar),
            format_float(r.eta_hat)
        )?;
    }
    Ok(())
}
