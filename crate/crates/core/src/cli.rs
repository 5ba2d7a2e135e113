//! Command-line front end. Every command produces a [`CommandResult`]: an
//! exit code and a payload printed on standard output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::certificates::{check_lambda_membership, duality_report, extract_dual, tangent_to_image};
use crate::costs::{Cost, CostKind, CostModel};
use crate::dictlearn::{learn, Dataset, LearnConfig, DEFAULT_DELTA};
use crate::error::{LipError, Result};
use crate::gauge::gauge;
use crate::json::{format_float, to_canonical_string};
use crate::minmax::{solve, SolverConfig};
use crate::oracle::{brute_force_solve, GridSpec};
use crate::problem::{CostSpec, ExtendedReal, LinearOperator, PrimalSolution, ProblemInstance, VectorN};
use crate::suite::oracle_suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REPORTED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Json(Value),
    Text(String),
    /// Help or version text already rendered by the argument parser.
    Usage(String),
}

impl Payload {
    pub fn render(&self) -> String {
        match self {
            Payload::Json(v) => to_canonical_string(v) + "\n",
            Payload::Text(s) | Payload::Usage(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub payload: Payload,
}

impl CommandResult {
    fn json(exit_code: i32, v: Value) -> Self {
        CommandResult {
            exit_code,
            payload: Payload::Json(v),
        }
    }

    fn from_error(e: &LipError) -> Self {
        let code = match e {
            LipError::Infeasible { .. } => EXIT_REPORTED,
            LipError::BudgetExceeded { .. } => EXIT_BUDGET,
            _ => EXIT_INPUT,
        };
        let mut body = json!({ "error": e.to_string() });
        match e {
            LipError::Infeasible { residual, epsilon } => {
                body["reason"] = json!("delta=0 and ball misses image");
                body["residual"] = json!(residual);
                body["epsilon"] = json!(epsilon);
            }
            LipError::BudgetExceeded {
                iterations,
                primal_upper,
                dual_lower,
            } => {
                body["iterations"] = json!(iterations);
                body["primal_upper"] = finite_or_infinite(*primal_upper);
                body["dual_lower"] = json!(dual_lower);
            }
            _ => {}
        }
        CommandResult::json(code, body)
    }
}

fn finite_or_infinite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("infinite")
    }
}

#[derive(Parser, Debug)]
#[command(name = "lipdual", version, about = "Duality toolkit for linear inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve an instance with the saddle-point solver.
    Solve(SolveArgs),
    /// Evaluate the gauge of a target.
    Gauge(GaugeArgs),
    /// Check a candidate solution against an instance.
    Certify(CertifyArgs),
    /// Brute-force grid search (at most three coefficients).
    Oracle(OracleArgs),
    /// Learn a dictionary from a CSV dataset.
    Dictlearn(DictlearnArgs),
    /// Compare solver and oracle on the seeded suite; prints CSV.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GaugeArgs {
    /// JSON with `phi`, `delta`, `cost` and optionally `z`.
    operator: PathBuf,
    /// Comma-separated target; overrides `z` from the file.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    instance: PathBuf,
    /// JSON with `f` and optionally `lambda` and `scale`.
    solution: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    instance: PathBuf,
    #[arg(long)]
    bound: f64,
    #[arg(long)]
    step: f64,
    /// Residual slack for `delta = 0`; defaults to `step ||phi||`.
    #[arg(long)]
    slack: Option<f64>,
}

#[derive(Args, Debug)]
struct DictlearnArgs {
    dataset: PathBuf,
    #[arg(long = "K", short = 'K')]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 30)]
    outer: usize,
    #[arg(long, default_value_t = 20)]
    inner: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "l1")]
    cost: String,
    /// Where to write the dictionary JSON; embedded in the report when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// `A..B` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "1..50")]
    seeds: String,
    #[arg(long, default_value = "1,2,3")]
    sizes: String,
    /// Fill the wall-time column (otherwise left empty for reproducible output).
    #[arg(long)]
    timing: bool,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandResult {
                    exit_code: EXIT_OK,
                    payload: Payload::Usage(e.to_string()),
                },
                _ => CommandResult::json(EXIT_INPUT, json!({ "error": e.to_string() })),
            };
        }
    };
    let out = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Gauge(a) => cmd_gauge(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Dictlearn(a) => cmd_dictlearn(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    out.unwrap_or_else(|e| CommandResult::from_error(&e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LipError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| LipError::Io(format!("{}: {e}", path.display())))
}

fn parse_kind(s: &str) -> Result<CostKind> {
    serde_json::from_value(json!(s)).map_err(|_| {
        LipError::Parse(format!(
            "unknown cost kind {s:?}; expected one of {}",
            CostKind::ALL.map(CostKind::name).join(", ")
        ))
    })
}

fn parse_vector(s: &str) -> Result<VectorN> {
    let coords = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| LipError::Parse(format!("bad number {t:?} in vector")))
        })
        .collect::<Result<Vec<f64>>>()?;
    VectorN::new(coords)
}

fn vec_json(v: &VectorN) -> Value {
    json!(v.to_vec())
}

fn cmd_solve(a: &SolveArgs) -> Result<CommandResult> {
    let inst = ProblemInstance::from_json_str(&read(&a.instance)?)?;
    let mut cfg = SolverConfig::for_order(inst.cost.order())?;
    cfg.seed = a.seed;
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    if let Some(m) = a.max_iter {
        cfg.max_iter = m;
    }
    if let Some(r) = a.r {
        cfg.r = r;
    }
    if let Some(q) = a.q {
        cfg.q = q;
    }
    let out = solve(&inst, &cfg)?;
    if let Some(path) = &a.trace {
        write(path, &out.trace.to_csv())?;
    }
    let report = duality_report(&inst, &out.solution, &out.certificate)?;
    let degenerate = out.certificate.degenerate;
    let payload = json!({
        "C": out.solution.cost_value,
        "scale": out.solution.scale,
        "f": vec_json(&out.solution.f),
        "h": vec_json(&out.solution.h),
        "residual_norm": out.solution.residual_norm,
        "lambda": vec_json(&out.certificate.lambda),
        "lambda_unscaled": vec_json(&out.state.lambda),
        "iterations": out.iterations,
        "primal_upper": out.primal_upper,
        "dual_lower": out.dual_lower,
        "certificate": report.to_json(),
        "status": if degenerate { "degenerate" } else { "solved" },
        "config": {"r": cfg.r, "q": cfg.q, "tol": cfg.tol, "max_iter": cfg.max_iter, "seed": cfg.seed},
    });
    Ok(CommandResult::json(
        if degenerate { EXIT_REPORTED } else { EXIT_OK },
        payload,
    ))
}

#[derive(Deserialize)]
struct OperatorFile {
    phi: Vec<Vec<f64>>,
    delta: f64,
    cost: CostSpec,
    #[serde(default)]
    z: Option<Vec<f64>>,
}

fn cmd_gauge(a: &GaugeArgs) -> Result<CommandResult> {
    let file: OperatorFile = serde_json::from_str(&read(&a.operator)?)?;
    if !(file.delta.is_finite() && file.delta >= 0.0) {
        return Err(LipError::InvalidInput(format!("delta must be >= 0, got {}", file.delta)));
    }
    let phi = LinearOperator::from_rows(&file.phi)?;
    let z = match (&a.z, file.z) {
        (Some(s), _) => parse_vector(s)?,
        (None, Some(z)) => VectorN::new(z)?,
        (None, None) => return Err(LipError::InvalidInput("no target: pass --z or a `z` field".into())),
    };
    let cost: Arc<dyn Cost> = Arc::new(CostModel::new(file.cost.kind, phi.input_dim())?);
    let g = gauge(&z, &phi, file.delta, cost, a.tol)?;
    Ok(CommandResult::json(
        EXIT_OK,
        json!({
            "value": g.value.to_json(),
            "attained_atom": g.attained_atom.as_ref().map(vec_json),
        }),
    ))
}

#[derive(Deserialize)]
struct SolutionFile {
    f: Vec<f64>,
    #[serde(default)]
    lambda: Option<Vec<f64>>,
    #[serde(default)]
    scale: Option<f64>,
}

/// The smallest `C^(1/p)` the representation `f` witnesses.
fn witnessed_scale(inst: &ProblemInstance, f: &VectorN) -> Result<f64> {
    let c = inst.cost.evaluate(f.as_dvector()).finite().ok_or_else(|| {
        LipError::InvalidInput("solution f has infinite cost".into())
    })?;
    let s = c.powf(1.0 / inst.cost.order());
    if inst.delta > 0.0 {
        let res = (inst.x.as_dvector() - inst.phi.apply_raw(f.as_dvector())).norm();
        Ok(s.max((res - inst.epsilon) / inst.delta))
    } else {
        Ok(s)
    }
}

fn cmd_certify(a: &CertifyArgs) -> Result<CommandResult> {
    let inst = ProblemInstance::from_json_str(&read(&a.instance)?)?;
    let file: SolutionFile = serde_json::from_str(&read(&a.solution)?)?;
    let f = VectorN::new(file.f)?;
    let scale = match file.scale {
        Some(s) => s,
        None => witnessed_scale(&inst, &f)?,
    };
    let sol = PrimalSolution::from_representation(&inst, scale, f)?;
    let cert = match file.lambda {
        Some(l) => {
            let mut c = check_lambda_membership(&VectorN::new(l)?, &inst, scale, 1e-6 * (1.0 + scale))?;
            c.degenerate = tangent_to_image(&inst);
            c
        }
        None => extract_dual(&inst, &sol.f)?,
    };
    let report = duality_report(&inst, &sol, &cert)?;
    Ok(CommandResult::json(
        if cert.degenerate { EXIT_REPORTED } else { EXIT_OK },
        report.to_json(),
    ))
}

fn cmd_oracle(a: &OracleArgs) -> Result<CommandResult> {
    let inst = ProblemInstance::from_json_str(&read(&a.instance)?)?;
    let mut grid = GridSpec::new(a.bound, a.step)?;
    if let Some(s) = a.slack {
        grid = grid.with_slack(s)?;
    }
    let r = brute_force_solve(&inst, &grid)?;
    let code = match r.cost {
        ExtendedReal::Finite(_) => EXIT_OK,
        ExtendedReal::Infinite => EXIT_REPORTED,
    };
    Ok(CommandResult::json(
        code,
        json!({
            "C": r.cost.to_json(),
            "f": r.f.as_ref().map(vec_json),
            "grid": {"bound": grid.bound, "step": grid.step},
        }),
    ))
}

fn cmd_dictlearn(a: &DictlearnArgs) -> Result<CommandResult> {
    let file = fs::File::open(&a.dataset).map_err(|e| LipError::Io(format!("{}: {e}", a.dataset.display())))?;
    let data = Dataset::from_csv(file)?;
    let kind = parse_kind(&a.cost)?;
    let cfg = LearnConfig {
        cost: kind,
        outer_iters: a.outer,
        inner_iters: a.inner,
        seed: a.seed,
        solver: SolverConfig {
            seed: a.seed,
            ..SolverConfig::for_order(1.0)?
        },
        ..LearnConfig::default()
    };
    let out = learn(&data, a.k, a.delta, &cfg)?;
    let dict = out.dictionary.to_json_value();
    let mut report = json!({
        "config": {
            "K": a.k, "delta": a.delta, "outer": a.outer, "inner": a.inner,
            "seed": a.seed, "cost": kind.name(), "samples": data.len(), "n": data.dim(),
        },
        "cost_trace": out.cost_trace,
        "flags": out.flags,
        "rounds": out.rounds,
        "unconverged_updates": out.unconverged_updates,
    });
    match &a.out {
        Some(path) => {
            write(path, &(to_canonical_string(&dict) + "\n"))?;
            report["dictionary_path"] = json!(path.display().to_string());
        }
        None => report["dictionary"] = dict,
    }
    Ok(CommandResult::json(EXIT_OK, report))
}

fn parse_list(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((lo, hi)) = s.split_once("..") {
        let hi = hi.trim_start_matches('=');
        let lo: u64 = lo.trim().parse().map_err(|_| LipError::Parse(format!("bad range {s:?}")))?;
        let hi: u64 = hi.trim().parse().map_err(|_| LipError::Parse(format!("bad range {s:?}")))?;
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| LipError::Parse(format!("bad list entry {t:?}"))))
        .collect()
}

pub const BENCH_HEADER: &str = "id,oracle_C,solver_C,gap,iterations,wall_time_s";

fn cmd_bench(a: &BenchArgs) -> Result<CommandResult> {
    let seeds = parse_list(&a.seeds)?;
    let sizes: Vec<usize> = parse_list(&a.sizes)?.into_iter().map(|s| s as usize).collect();
    if let Some(bad) = sizes.iter().find(|&&s| s == 0 || s > crate::oracle::MAX_GRID_DIM) {
        return Err(LipError::InvalidInput(format!("suite sizes must lie in 1..=3, got {bad}")));
    }
    let suite = oracle_suite(seeds, &sizes)?;
    let cfg = SolverConfig::default();
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    for s in &suite {
        let start = Instant::now();
        let oracle = brute_force_solve(&s.instance, &s.grid)?;
        let solved = solve(&s.instance, &cfg);
        let wall = start.elapsed().as_secs_f64();
        let oracle_c = oracle.cost.finite();
        let (solver_c, iters) = match &solved {
            Ok(o) => (Some(o.solution.cost_value), o.iterations.to_string()),
            Err(_) => (None, String::new()),
        };
        let cell = |v: Option<f64>| v.map(format_float).unwrap_or_else(|| "nan".into());
        let gap = match (oracle_c, solver_c) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        };
        let wall = if a.timing { format!("{wall:.6}") } else { String::new() };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.id,
            cell(oracle_c),
            cell(solver_c),
            cell(gap),
            iters,
            wall
        ));
    }
    Ok(CommandResult {
        exit_code: EXIT_OK,
        payload: Payload::Text(csv),
    })
}
