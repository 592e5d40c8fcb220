//! `orthplus`: generate instances, run the solvers, check stationarity and
//! build benchmark tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orthplus::bench::{table_onmf, table_proj};
use orthplus::io::{companion_path, read_matrix, write_matrix, write_report, Format, Iterations, RunManifest, RunReport};
use orthplus::objective::Linear;
use orthplus::penalty::{check_stationarity_original, kkt_residual_subproblem, penalty_value, zeta};
use orthplus::problems::kindicators::{gen_kindicators, kindicators_solve, KindicatorsInstance};
use orthplus::problems::metrics::{clustering_metrics, ClusterMetrics};
use orthplus::problems::onmf::{gen_onmf, onmf_solve, OnmfInstance, OnmfModel};
use orthplus::problems::projection::{gap, gen_projection, projection_solve};
use orthplus::problems::Preset;
use orthplus::{Error, Mat, ObliqueMatrix, PenaltyContext, PenaltyParams, SolveReport};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "orthplus", version, about = "Optimization over nonnegative matrices with orthonormal columns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a projection target C with known projection (written next to it as `.xstar`).
    GenProjection(GenProjection),
    /// Generate a synthetic ONMF data matrix (factor and labels written as companions).
    GenOnmf(GenOnmf),
    /// Project a matrix onto the nonnegative Stiefel set.
    Project(Solve),
    /// Orthogonal NMF with the Gauss-Newton subproblem model.
    Onmf(Solve),
    /// Orthogonal NMF on the projective objective directly.
    Opnmf(Solve),
    /// K-indicators clustering of orthonormal features (or a generated instance).
    Kindicators(Kind),
    /// Stationarity check of a point for a linear objective.
    CheckKkt(CheckKkt),
    /// Benchmark tables.
    #[command(subcommand)]
    Bench(Bench),
}

#[derive(Args)]
struct Output {
    /// Output matrix file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Matrix format; defaults to the file extension.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct GenProjection {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    xi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenOnmf {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    xi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Clone)]
struct Tuning {
    /// Preset name (projection, onmf, hyperspectral, kindicators).
    #[arg(long)]
    preset: Option<String>,
    /// JSON file merged over the preset, e.g. `{"driver": {"eta": 0.9}}`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    /// Maximum number of outer iterations.
    #[arg(long)]
    tmax: Option<usize>,
}

#[derive(Args)]
struct Solve {
    /// Input matrix.
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of columns of the factor (ONMF only).
    #[arg(long)]
    k: Option<usize>,
    /// JSON report file; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Kind {
    /// Orthonormal feature matrix; a synthetic instance is generated when absent.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Noise level of the generated instance.
    #[arg(long, default_value_t = 0.1)]
    xi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CheckKkt {
    /// Point to check.
    #[arg(long = "in")]
    input: PathBuf,
    /// Objective family; only `linear` (f(X) = <C, X>) is available.
    #[arg(long, default_value = "linear")]
    objective: String,
    /// Coefficient matrix of the linear objective.
    #[arg(long)]
    c: PathBuf,
    /// Penalty parameter for the subproblem residual.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Bench {
    /// Projection recovery over sizes, noise levels and seeds.
    TableProj(TableProj),
    /// Synthetic ONMF over noise levels and seeds.
    TableOnmf(TableOnmf),
}

#[derive(Args)]
struct TableProj {
    #[arg(long, value_delimiter = ',', default_values_t = [200usize, 500])]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10])]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9, 0.95, 0.98, 1.0])]
    xi: Vec<f64>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds per configuration.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Directory for per-run JSON reports.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Table file (JSON); printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct TableOnmf {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 600)]
    r: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.1])]
    xi: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

/// Failures and the exit code they map to.
enum Failure {
    Validation(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteObjective
            | Error::SingularCurvature
            | Error::SingularGram
            | Error::NotFeasible { .. }
            | Error::EmptyColumnSupport { .. }
            | Error::InfeasibleSupport { .. } => Failure::Solver(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::GenProjection(a) => gen_projection_cmd(a),
        Command::GenOnmf(a) => gen_onmf_cmd(a),
        Command::Project(a) => project_cmd(a),
        Command::Onmf(a) => onmf_cmd(a, OnmfModel::GaussNewton, "onmf"),
        Command::Opnmf(a) => onmf_cmd(a, OnmfModel::Projective, "opnmf"),
        Command::Kindicators(a) => kindicators_cmd(a),
        Command::CheckKkt(a) => check_kkt_cmd(a),
        Command::Bench(Bench::TableProj(a)) => table_proj_cmd(a),
        Command::Bench(Bench::TableOnmf(a)) => table_onmf_cmd(a),
    }
}

fn require_out(output: &Output) -> CliResult<&Path> {
    output.out.as_deref().ok_or_else(|| Failure::Validation("--out is required".into()))
}

fn write_with_companions(output: &Output, main: &Mat, companions: &[(&str, &Mat)]) -> CliResult<()> {
    let out = require_out(output)?;
    write_matrix(out, main, output.format)?;
    for (tag, m) in companions {
        write_matrix(&companion_path(out, tag), m, output.format)?;
    }
    Ok(())
}

fn labels_matrix(labels: &[usize]) -> Mat {
    Mat::from_iterator(labels.len(), 1, labels.iter().map(|&l| l as f64))
}

/// Reads a label column written by the generators, if present.
fn read_labels(path: &Path, format: Option<Format>) -> CliResult<Option<Vec<usize>>> {
    if !path.exists() {
        return Ok(None);
    }
    let m = read_matrix(path, format)?;
    if m.ncols() != 1 {
        return Err(Failure::Validation(format!("{}: labels must be a single column", path.display())));
    }
    m.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Failure::Validation(format!("{}: label {v} is not a nonnegative integer", path.display())))
            }
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

fn gen_projection_cmd(a: GenProjection) -> CliResult<()> {
    let inst = gen_projection(a.n, a.k, a.xi, a.seed)?;
    let xs = inst.x_star.expect("generated instances carry their solution");
    write_with_companions(&a.output, &inst.c, &[("xstar", &xs)])
}

fn gen_onmf_cmd(a: GenOnmf) -> CliResult<()> {
    let inst = gen_onmf(a.n, a.r, a.k, a.xi, a.seed)?;
    let b = inst.b.expect("generated instances carry their factor");
    let labels = labels_matrix(inst.labels.as_deref().unwrap_or_default());
    write_with_companions(&a.output, &inst.a, &[("b", &b), ("labels", &labels)])
}

/// Preset, then the config file, then individual flags. Returns the preset
/// and the overrides that were applied.
fn resolve_preset(t: &Tuning, default: &str) -> CliResult<(Preset, Value)> {
    let name = t.preset.as_deref().unwrap_or(default);
    let mut preset = Preset::by_name(name)?;
    let mut overrides = json!({});
    if let Some(path) = &t.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let patch: Value =
            serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&preset).expect("presets serialize");
        merge(&mut base, &patch);
        preset = serde_json::from_value(base).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        overrides["config"] = patch;
    }
    if let Some(v) = t.tol_feas {
        preset.driver.tol_feas = v;
        overrides["tol_feas"] = json!(v);
    }
    if let Some(v) = t.sigma0 {
        preset.driver.sigma0 = v;
        overrides["sigma0"] = json!(v);
    }
    if let Some(v) = t.tmax {
        preset.driver.t_max = v;
        overrides["tmax"] = json!(v);
    }
    preset.driver.validate()?;
    Ok((preset, overrides))
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (key, value) in p {
                merge(b.entry(key.clone()).or_insert(Value::Null), value);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn report_of(rep: &SolveReport, manifest: RunManifest) -> RunReport {
    RunReport {
        objective: rep.objective,
        zeta: rep.zeta,
        feasi: rep.feasi,
        resi: None,
        gap: None,
        metrics: None,
        iterations: Iterations { outer: rep.outer_iterations, inner: rep.total_inner_iterations() },
        seconds: rep.seconds,
        termination: rep.termination,
        contracts: rep.contracts.clone(),
        manifest,
    }
}

fn emit(path: Option<&Path>, value: Value) -> CliResult<()> {
    match path {
        Some(p) => write_report(p, &value)?,
        None => println!("{}", serde_json::to_string_pretty(&value).expect("reports serialize")),
    }
    Ok(())
}

fn manifest(command: &str, instance: Value, preset: &Preset, overrides: Value, seeds: Vec<u64>, output: &Output) -> RunManifest {
    RunManifest {
        command: command.into(),
        instance,
        preset: Some(preset.name.clone()),
        overrides,
        seeds,
        output: output.out.as_ref().map(|p| p.display().to_string()),
    }
}

fn metrics_for(labels: Option<Vec<usize>>, predicted: &[usize], k: usize) -> CliResult<Option<ClusterMetrics>> {
    labels.map(|truth| clustering_metrics(predicted, &truth, k).map_err(Failure::from)).transpose()
}

fn project_cmd(a: Solve) -> CliResult<()> {
    let c = read_matrix(&a.input, a.output.format)?;
    let (preset, overrides) = resolve_preset(&a.tuning, "projection")?;
    let rep = projection_solve(&c, &preset).map_err(Failure::from)?;
    let xstar_path = companion_path(&a.input, "xstar");
    let gap_value = if xstar_path.exists() {
        let xs = read_matrix(&xstar_path, a.output.format)?;
        if xs.shape() != c.shape() {
            return Err(Failure::Validation(format!("{} does not match the shape of C", xstar_path.display())));
        }
        Some(gap(&rep.x, &xs, &c))
    } else {
        None
    };
    if let Some(out) = &a.output.out {
        write_matrix(out, &rep.x, a.output.format)?;
    }
    let instance = json!({ "input": a.input.display().to_string(), "n": c.nrows(), "k": c.ncols() });
    let mut report = report_of(&rep, manifest("project", instance, &preset, overrides, vec![], &a.output));
    report.gap = gap_value;
    emit(a.report.as_deref(), serde_json::to_value(&report).expect("reports serialize"))
}

fn onmf_cmd(a: Solve, model: OnmfModel, command: &str) -> CliResult<()> {
    let k = a.k.ok_or_else(|| Failure::Validation("--k is required".into()))?;
    let data = read_matrix(&a.input, a.output.format)?;
    let (preset, overrides) = resolve_preset(&a.tuning, "onmf")?;
    let (inst, kept) = OnmfInstance::from_data(data, k)?;
    let truth = read_labels(&companion_path(&a.input, "labels"), a.output.format)?
        .map(|l| {
            if l.len() <= kept.last().copied().unwrap_or(0) {
                Err(Failure::Validation("label file is shorter than the data".into()))
            } else {
                Ok(kept.iter().map(|&i| l[i]).collect::<Vec<_>>())
            }
        })
        .transpose()?;
    let res = onmf_solve(&inst, &preset, model)?;
    if let Some(out) = &a.output.out {
        write_matrix(out, &res.report.x, a.output.format)?;
    }
    let instance = json!({
        "input": a.input.display().to_string(),
        "k": k,
        "rows_kept": inst.a.nrows(),
        "cols_kept": inst.a.ncols(),
    });
    let mut report = report_of(&res.report, manifest(command, instance, &preset, overrides, vec![], &a.output));
    report.resi = Some(res.resi);
    report.metrics = metrics_for(truth, &res.labels, k)?;
    emit(a.report.as_deref(), serde_json::to_value(&report).expect("reports serialize"))
}

fn kindicators_cmd(a: Kind) -> CliResult<()> {
    let (preset, overrides) = resolve_preset(&a.tuning, "kindicators")?;
    let (inst, instance, seeds) = match &a.input {
        Some(path) => {
            let u = read_matrix(path, a.output.format)?;
            let labels = read_labels(&companion_path(path, "labels"), a.output.format)?;
            (KindicatorsInstance::new(u, labels)?, json!({ "input": path.display().to_string() }), vec![])
        }
        None => {
            let (Some(n), Some(k)) = (a.n, a.k) else {
                return Err(Failure::Validation("either --in or both --n and --k are required".into()));
            };
            (gen_kindicators(n, k, a.xi, a.seed)?, json!({ "n": n, "k": k, "noise": a.xi }), vec![a.seed])
        }
    };
    let k = inst.u.ncols();
    let res = kindicators_solve(&inst, &preset)?;
    if let Some(out) = &a.output.out {
        write_matrix(out, &res.report.x, a.output.format)?;
        write_matrix(&companion_path(out, "labels"), &labels_matrix(&res.labels), a.output.format)?;
    }
    let mut report = report_of(&res.report, manifest("kindicators", instance, &preset, overrides, seeds, &a.output));
    report.metrics = metrics_for(inst.labels.clone(), &res.labels, k)?;
    emit(a.report.as_deref(), serde_json::to_value(&report).expect("reports serialize"))
}

fn check_kkt_cmd(a: CheckKkt) -> CliResult<()> {
    if a.objective != "linear" {
        return Err(Failure::Validation(format!("--objective '{}' is not supported, expected linear", a.objective)));
    }
    let x = ObliqueMatrix::new(read_matrix(&a.input, a.format)?)?;
    let c = read_matrix(&a.c, a.format)?;
    if c.shape() != x.as_mat().shape() {
        return Err(Failure::Validation(format!("C is {:?} but X is {:?}", c.shape(), x.as_mat().shape())));
    }
    let ctx = PenaltyContext::uniform(c.ncols());
    let f = Linear::new(c);
    let params = PenaltyParams::new(a.sigma, 1.0, 2.0, 0.0)?;
    let e = penalty_value(&x, &ctx, &params, &f)?;
    let kkt = kkt_residual_subproblem(&x, &ctx, &params, &e, &f.coef);
    let zeta2 = zeta(&x, &ctx, 2.0);
    let stationarity = match check_stationarity_original(&x, &ctx, &f, a.tol) {
        Ok(r) => serde_json::to_value(r).expect("reports serialize"),
        Err(Error::NotFeasible { .. }) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    emit(None, json!({ "zeta": zeta2, "sigma": a.sigma, "kkt_subproblem": kkt, "stationarity": stationarity }))
}

fn seed_range(first: u64, count: u64) -> Vec<u64> {
    (first..first + count).collect()
}

fn table_proj_cmd(a: TableProj) -> CliResult<()> {
    let (preset, _) = resolve_preset(&a.tuning, "projection")?;
    let rows = table_proj(&a.n, &a.k, &a.xi, &seed_range(a.seed, a.seeds), &preset, a.out_dir.as_deref())?;
    emit(a.out.as_deref(), serde_json::to_value(&rows).expect("reports serialize"))
}

fn table_onmf_cmd(a: TableOnmf) -> CliResult<()> {
    let (preset, _) = resolve_preset(&a.tuning, "onmf")?;
    let rows = table_onmf(a.n, a.r, a.k, &a.xi, &seed_range(a.seed, a.seeds), &preset, a.out_dir.as_deref())?;
    emit(a.out.as_deref(), serde_json::to_value(&rows).expect("reports serialize"))
}
