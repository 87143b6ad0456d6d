use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use pace_core::dynamics::{run_with, RunOptions, RunTrace, VariantSpec};
use pace_core::eg::{solve_eg, DEFAULT_TOL};
use pace_core::harness::{parse_count, plot_trajectory, read_trajectory_csv, run_experiment, ExperimentConfig, Schedule};
use pace_core::inputs::{
    adv_constrained_failure, adv_cr_killer, adv_envy_worstcase, gen, FiniteDistribution, InputModel, InputModelSpec,
};
use pace_core::metrics::MetricsReport;
use pace_core::model::{load_csv, save_csv, AgentWeights, ValueSequence};

#[derive(Parser)]
#[command(name = "pace", version, about = "Pacing dynamics for online fair division")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance from an input model.
    Gen(GenArgs),
    /// Run an experiment config and write reports.
    Run(RunArgs),
    /// Compute the metrics of a run on an instance.
    Eval(EvalArgs),
    /// Solve the hindsight market equilibrium of an instance.
    Solve(SolveArgs),
    /// Build an adversarial instance.
    Attack(AttackArgs),
    /// Render a trajectory CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Iid,
    Periodic,
}

#[derive(clap::Args)]
struct GenArgs {
    /// TOML input model spec.
    #[arg(long, conflicts_with = "model")]
    spec: Option<PathBuf>,
    /// Inline model; needs --support (iid) or --pools (periodic).
    #[arg(long)]
    model: Option<ModelKind>,
    /// Support rows, `;`-separated, e.g. "1,0;0,1".
    #[arg(long)]
    support: Option<String>,
    /// Probabilities for --support; uniform if omitted.
    #[arg(long)]
    probs: Option<String>,
    /// Pools, `|`-separated, each in --support syntax.
    #[arg(long)]
    pools: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config's variants; repeatable.
    #[arg(long)]
    variant: Vec<String>,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    instance: PathBuf,
    /// RunTrace JSON; otherwise --variant is run on the instance.
    #[arg(long, conflicts_with = "variant")]
    trace: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    /// Comma-separated weights; 1/n each if omitted.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Warm-up rounds for the expenditure deviation.
    #[arg(long)]
    warmup: Option<usize>,
    /// Write the trace of --variant as JSON.
    #[arg(long)]
    save_trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Include the allocation.
    #[arg(long)]
    with_x: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Construction {
    Envy,
    CrKiller,
    ConstrainedFailure,
}

#[derive(clap::Args)]
struct AttackArgs {
    #[arg(long)]
    construction: Construction,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1.001)]
    a: f64,
    #[arg(long, default_value = "1e5")]
    r: String,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Cumulative phase ends, e.g. "1e2,1e4".
    #[arg(long)]
    phases: Option<String>,
    #[arg(long, default_value = "pace")]
    variant: String,
    #[arg(long, default_value_t = 2.0)]
    r2: f64,
    #[arg(long, default_value_t = 1.0)]
    cap: f64,
    #[arg(long, default_value = "1000")]
    t: String,
    /// Also compute the policy's competitive ratio against the exact optimum.
    #[arg(long)]
    measure: bool,
    /// Instance CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PlotArgs {
    trajectory: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "relative time-averaged regret")]
    title: String,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<pace_core::Error> for Failure {
    fn from(e: pace_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(r: pace_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Attack(a) => cmd_attack(a),
        Cmd::Plot(a) => cmd_plot(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_rows(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';')
        .map(|r| {
            r.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("malformed number {x:?}"))))
                .collect()
        })
        .collect()
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("malformed number {x:?}"))))
        .collect()
}

fn count(s: &str) -> CliResult<usize> {
    usage(parse_count(s))
}

fn weights(arg: &Option<String>, n: usize) -> CliResult<AgentWeights> {
    match arg {
        Some(s) => {
            let w = parse_list(s)?;
            if w.len() != n {
                return Err(Failure::Usage(format!("{} weights for {n} agents", w.len())));
            }
            usage(AgentWeights::new(w))
        }
        None => Ok(AgentWeights::uniform(n)),
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}

fn load_instance(p: &Path) -> CliResult<ValueSequence> {
    Ok(load_csv(p).with_context(|| format!("reading {}", p.display()))?.0)
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let mut spec = if let Some(p) = &a.spec {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        usage(InputModelSpec::from_toml(&text))?
    } else {
        let t = count(a.t.as_deref().ok_or_else(|| Failure::Usage("--t is required".into()))?)?;
        let model = match a.model {
            Some(ModelKind::Iid) => {
                let support = parse_rows(a.support.as_deref().ok_or_else(|| Failure::Usage("--support is required".into()))?)?;
                let dist = match &a.probs {
                    Some(p) => FiniteDistribution::new(support, parse_list(p)?),
                    None => FiniteDistribution::uniform(support),
                };
                InputModel::Iid { dist: usage(dist)? }
            }
            Some(ModelKind::Periodic) => {
                let pools = a
                    .pools
                    .as_deref()
                    .ok_or_else(|| Failure::Usage("--pools is required".into()))?
                    .split('|')
                    .map(parse_rows)
                    .collect::<CliResult<_>>()?;
                InputModel::Periodic { pools }
            }
            None => return Err(Failure::Usage("one of --spec and --model is required".into())),
        };
        InputModelSpec::new(model, t, 0)
    };
    if let Some(t) = &a.t {
        spec.t = count(t)?;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    usage(spec.validate())?;
    let v = gen(&spec)?;
    match &a.out {
        Some(p) => save_csv(p, &v, None)?,
        None => pace_core::model::write_csv(std::io::stdout().lock(), &v, None)?,
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(&a.config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.reps {
        cfg.repetitions = r;
    }
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    if let Some(c) = a.checkpoints {
        usage(c.parse::<Schedule>())?;
        cfg.checkpoints = pace_core::harness::ScheduleField::Text(c);
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    if !a.variant.is_empty() {
        cfg.variants = a.variant;
    }
    usage(cfg.validate())?;
    let report = run_experiment(&cfg)?;
    for v in &report.summary.variants {
        println!(
            "{}: final max relative regret {:.6}, mean {:.6}, CR {}",
            v.variant, v.final_max_relative_regret, v.final_mean_relative_regret, v.competitive_ratio
        );
    }
    println!("wrote {} files to {}", report.files.len(), cfg.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let v = load_instance(&a.instance)?;
    let trace: RunTrace = match (&a.trace, &a.variant) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        (None, Some(name)) => {
            let spec: VariantSpec = usage(name.parse())?;
            let b = weights(&a.weights, v.agents())?;
            let variant = usage(spec.build(&b))?;
            let t = run_with(&v, &b, &variant, &RunOptions::default())?;
            if let Some(p) = &a.save_trace {
                fs::write(p, serde_json::to_string(&t).map_err(anyhow::Error::from)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            t
        }
        (None, None) => return Err(Failure::Usage("one of --trace and --variant is required".into())),
    };
    if trace.horizon != v.horizon() || trace.agents() != v.agents() {
        return Err(Failure::Runtime(anyhow!("trace does not match the instance")));
    }
    let eq = solve_eg(&v, &trace.weights, a.tol)?;
    let report = MetricsReport::evaluate(&v, &trace, &eq.utilities, a.warmup)?;
    emit(&report.to_json()?, &a.out)
}

fn cmd_solve(a: SolveArgs) -> CliResult<()> {
    let v = load_instance(&a.instance)?;
    let b = weights(&a.weights, v.agents())?;
    let eq = solve_eg(&v, &b, a.tol)?;
    emit(&eq.to_json(a.with_x)?, &a.out)
}

fn cmd_attack(a: AttackArgs) -> CliResult<()> {
    let (instance, report) = match a.construction {
        Construction::Envy => {
            let c = adv_envy_worstcase(a.eps, a.a, count(&a.r)?).map_err(|e| Failure::Usage(e.to_string()))?;
            let text = serde_json::json!({
                "construction": "envy",
                "k": c.k,
                "a": c.a,
                "horizon": c.instance.horizon(),
                "predicted_envy": c.predicted_envy,
            });
            (c.instance, text)
        }
        Construction::CrKiller => {
            let phases = a
                .phases
                .as_deref()
                .ok_or_else(|| Failure::Usage("--phases is required".into()))?
                .split(',')
                .map(|x| count(x.trim()))
                .collect::<CliResult<Vec<_>>>()?;
            let spec: VariantSpec = usage(a.variant.parse())?;
            let variant = usage(spec.build(&AgentWeights::uniform(a.n)))?;
            let k = adv_cr_killer(a.n, &phases, &variant).map_err(|e| Failure::Usage(e.to_string()))?;
            let measured = if a.measure {
                Some(k.measured_cr(1e-9)?)
            } else {
                None
            };
            let text = serde_json::json!({
                "construction": "cr-killer",
                "variant": spec.label(),
                "bound": k.bound,
                "order": k.order.iter().map(|i| i + 1).collect::<Vec<_>>(),
                "policy_utilities": k.policy_utilities,
                "witness_utilities": k.witness_utilities,
                "witness_ratio": k.witness_ratio,
                "measured_cr": measured,
            });
            (k.instance, text)
        }
        Construction::ConstrainedFailure => {
            let v = adv_constrained_failure(a.r2, a.cap, count(&a.t)?).map_err(|e| Failure::Usage(e.to_string()))?;
            let text = serde_json::json!({
                "construction": "constrained-failure",
                "value": v.get(0, 0),
                "horizon": v.horizon(),
            });
            (v, text)
        }
    };
    if let Some(p) = &a.out {
        save_csv(p, &instance, None)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.trajectory).with_context(|| format!("reading {}", a.trajectory.display()))?;
    let rows = read_trajectory_csv(&text)?;
    plot_trajectory(&rows, &a.out, &a.title)?;
    Ok(())
}
