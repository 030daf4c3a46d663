//! `mindev`: solve scaled minimax problems on model specs, test strategies for
//! improperness, and reproduce the Gaussian risk-curve experiments.
//!
//! Exit codes: 0 success (converged / Bayesian), 1 error, 2 duality gap not
//! reached, 3 improper strategy.

mod plot;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mindev::document::{emit_model_spec, emit_strategy, load_model_spec, load_strategy};
use mindev::experiment::{
    build_instance, run_example, EvalMode, ExampleConfig, DEFAULT_MC_SAMPLES,
};
use mindev::strategies::{
    improperness_test, scaled_minimax_strategy, CheckConfig, Preset, VerdictKind,
    DEFAULT_IMPROPER_MARGIN,
};
use mindev::{RiskCurve, RiskEngine, ScalingProfile, SolverConfig};
use serde_json::Value;

#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scaled minimax problem on a model spec.
    Solve(SolveArgs),
    /// Compute the four risk curves of a Gaussian example.
    Example(ExampleArgs),
    /// Decide whether a strategy is Bayesian or improper.
    Check(CheckArgs),
}

#[derive(Args)]
struct SolverArgs {
    /// Maximum solver iterations.
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    /// Target duality gap.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Model spec file.
    #[arg(long)]
    spec: PathBuf,
    /// minimax, mindev or mindev-relative.
    #[arg(long, conflicts_with_all = ["alpha", "beta"])]
    preset: Option<String>,
    /// JSON array (model order) or object (by model label) of offsets α(θ).
    #[arg(long, requires = "beta")]
    alpha: Option<PathBuf>,
    /// JSON array or object of scales β(θ) > 0.
    #[arg(long, requires = "alpha")]
    beta: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for strategy.json, report.json and risk.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExampleArgs {
    /// 1 or 2.
    which: u8,
    /// Learning sample size.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Number of models on the parameter grid.
    #[arg(long)]
    theta_cells: Option<usize>,
    /// Parameter range LO:HI (example 1 only).
    #[arg(long, value_parser = parse_range)]
    theta_range: Option<(f64, f64)>,
    /// Cells per signal axis.
    #[arg(long)]
    signal_cells: Option<usize>,
    /// Range LO:HI of every signal axis.
    #[arg(long, value_parser = parse_range)]
    signal_range: Option<(f64, f64)>,
    /// Cells of the learning-sample grid.
    #[arg(long)]
    learn_cells: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Seed of the Monte-Carlo streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo samples per model in sampled mode.
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    samples: usize,
    /// exact, mc or auto.
    #[arg(long, default_value = "auto")]
    mode: String,
    /// Directory for the curve CSV, SVG and run metadata.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write the enumerated instance as a model spec.
    #[arg(long)]
    export_spec: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Model spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Strategy file to test.
    #[arg(long)]
    strategy: PathBuf,
    /// Required saddle-value margin for an improper verdict.
    #[arg(long, default_value_t = DEFAULT_IMPROPER_MARGIN)]
    margin: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for the dominating strategy; defaults to the strategy's.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got \"{s}\""))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound: {e}"))?;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

impl SolverArgs {
    fn config(&self, default_tol: f64) -> SolverConfig {
        SolverConfig {
            max_iters: self.iters,
            tol: self.tol.unwrap_or(default_tol),
            ..SolverConfig::default()
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Per-model numbers from a JSON array or a label-keyed object.
fn load_profile_vector(path: &Path, labels: &[String]) -> anyhow::Result<Vec<f64>> {
    let v: Value = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let num = |v: &Value| v.as_f64().context("profile entries must be numbers");
    let out = match &v {
        Value::Array(a) => a.iter().map(num).collect::<anyhow::Result<Vec<_>>>()?,
        Value::Object(o) => labels
            .iter()
            .map(|l| num(o.get(l).with_context(|| format!("missing model \"{l}\""))?))
            .collect::<anyhow::Result<Vec<_>>>()?,
        _ => bail!("{} must hold a JSON array or object", path.display()),
    };
    if out.len() != labels.len() {
        bail!(
            "{} has {} entries for {} models",
            path.display(),
            out.len(),
            labels.len()
        );
    }
    Ok(out)
}

fn cmd_solve(args: &SolveArgs) -> anyhow::Result<ExitCode> {
    let (obj, ld, loss) = load_model_spec(&read(&args.spec)?)
        .with_context(|| format!("loading {}", args.spec.display()))?;
    let labels: Vec<String> = obj.models().iter().map(|m| m.label.clone()).collect();
    let (name, preset) = match (&args.preset, &args.alpha, &args.beta) {
        (_, Some(a), Some(b)) => {
            let profile = ScalingProfile::new(
                load_profile_vector(a, &labels)?,
                load_profile_vector(b, &labels)?,
            )?;
            ("custom".to_string(), Preset::Custom(profile))
        }
        (Some(p), _, _) => (
            p.clone(),
            Preset::from_name(p).with_context(|| format!("unknown preset \"{p}\""))?,
        ),
        _ => ("mindev".to_string(), Preset::Mindev),
    };
    let profile = preset.profile(&obj, &loss)?;
    let (q, report) =
        scaled_minimax_strategy(&profile, &obj, &ld, &loss, &args.solver.config(1e-3))?;
    let curve = RiskCurve {
        strategy: name.clone(),
        values: RiskEngine::new(&obj, &ld, &loss)?.risks(&q)?,
    };
    write(
        &args.out.join("strategy.json"),
        &emit_strategy(&q, &obj, &ld)?,
    )?;
    write(&args.out.join("report.json"), &report.to_json())?;
    write(&args.out.join("risk.csv"), &curve.to_csv(&obj))?;
    emit(&format!(
        "{name}: phi = {:.6}, upper = {:.6}, gap = {:.3e}, iterations = {}, converged = {}",
        report.phi, report.upper, report.gap, report.iters, report.converged
    ))?;
    Ok(if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_example(args: &ExampleArgs) -> anyhow::Result<ExitCode> {
    let mode = EvalMode::from_name(&args.mode)
        .with_context(|| format!("unknown mode \"{}\"; expected exact, mc or auto", args.mode))?;
    let mut cfg = ExampleConfig::new(args.which, args.n);
    cfg.theta_cells = args.theta_cells;
    cfg.theta_range = args.theta_range;
    cfg.signal_cells = args.signal_cells;
    cfg.signal_range = args.signal_range;
    cfg.learn_cells = args.learn_cells;
    cfg.solver = args.solver.config(1e-3);
    cfg.seed = args.seed;
    cfg.samples = args.samples;
    cfg.mode = mode;

    let run = run_example(&cfg)?;
    for note in &run.meta.notes {
        eprintln!("note: {note}");
    }
    let stem = format!("example{}_n{}", args.which, args.n);
    let csv = run.curves.to_csv();
    let series: Vec<plot::Series> = run
        .curves
        .series()
        .into_iter()
        .map(|(name, values)| plot::Series { name, values })
        .collect();
    let svg = plot::line_chart(
        &format!("Example {}, n = {}", args.which, args.n),
        "theta",
        "risk",
        &run.curves.theta,
        &series,
    );
    let meta = serde_json::to_string_pretty(&run.meta)?;
    write(&args.out.join(format!("{stem}.csv")), &csv)?;
    write(&args.out.join(format!("{stem}.svg")), &svg)?;
    write(&args.out.join(format!("{stem}.json")), &meta)?;
    if let Some(path) = &args.export_spec {
        let inst = build_instance(&cfg)?;
        write(
            path,
            &emit_model_spec(&inst.object, inst.learning_data()?, &inst.loss),
        )?;
    }

    let c = &run.curves;
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    emit(&format!(
        "example {} n={} ({:?}): max risk ml={:.4} minimax={:.4} mindev={:.4}; \
         max deviation ml={:.4} minimax={:.4} mindev={:.4}",
        args.which,
        args.n,
        run.meta.mode,
        max(&c.ml),
        max(&c.minimax),
        max(&c.mindev),
        c.max_dev_ml(),
        c.max_dev_minimax(),
        c.max_dev_mindev()
    ))?;
    Ok(if run.converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_check(args: &CheckArgs) -> anyhow::Result<ExitCode> {
    let (obj, ld, loss) = load_model_spec(&read(&args.spec)?)
        .with_context(|| format!("loading {}", args.spec.display()))?;
    let q0 = load_strategy(&read(&args.strategy)?, &obj, &ld)
        .with_context(|| format!("loading {}", args.strategy.display()))?;
    let defaults = CheckConfig::default();
    let cfg = CheckConfig {
        solver: args.solver.config(defaults.solver.tol),
        margin: args.margin,
    };
    let verdict = improperness_test(&q0, &obj, &ld, &loss, &cfg)?;
    match &verdict.kind {
        VerdictKind::Bayesian { tau } => {
            if verdict.saddle_value < -cfg.margin {
                eprintln!(
                    "note: no strategy verified as dominating although the saddle value is \
                     below -{:e}; the verdict defaults to bayesian (gap {:.3e})",
                    cfg.margin, verdict.report.gap
                );
            }
            let mut text = format!("bayesian (saddle value {:.3e})", verdict.saddle_value);
            for (m, t) in obj.models().iter().zip(tau.as_slice()) {
                let _ = write!(text, "\n  tau[{}] = {t:.6}", m.label);
            }
            emit(&text)?;
            Ok(ExitCode::SUCCESS)
        }
        VerdictKind::Improper { dominating, margin } => {
            let dir = match &args.out {
                Some(d) => d.clone(),
                None => args
                    .strategy
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_default(),
            };
            let path = dir.join("dominating_strategy.json");
            write(&path, &emit_strategy(dominating, &obj, &ld)?)?;
            emit(&format!(
                "improper: dominated by {} with margin {margin:.6} (saddle value {:.6})",
                path.display(),
                verdict.saddle_value
            ))?;
            Ok(ExitCode::from(3))
        }
    }
}

/// Writes one line to stdout; a reader that closed the pipe early is not an
/// error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Example(a) => cmd_example(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
