//! Experiment orchestration: configs, repetitions, reports and plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_with, RunOptions, VariantSpec};
use crate::eg::{hindsight_prefix, PREFIX_TOL};
use crate::error::{Error, Result};
use crate::inputs::{gen, repetition_seed, InputModelSpec};
use crate::metrics::{relative_regret_trajectory, MetricsReport, TrajectoryRow};
use crate::model::{load_csv, normalize_values, AgentWeights, ExtReal, ValueSequence};

/// When hindsight curves are sampled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// `{2^k ≤ t} ∪ {t}`.
    Geometric,
    Every(usize),
    List(Vec<usize>),
}

impl Schedule {
    pub fn points(&self, t: usize) -> Vec<usize> {
        let mut pts: Vec<usize> = match self {
            Schedule::Geometric => std::iter::successors(Some(1usize), |x| x.checked_mul(2))
                .take_while(|&x| x <= t)
                .collect(),
            Schedule::Every(k) => (1..=t / k).map(|j| j * k).collect(),
            Schedule::List(v) => v.iter().copied().filter(|&x| x >= 1 && x <= t).collect(),
        };
        pts.push(t);
        pts.sort_unstable();
        pts.dedup();
        pts
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "geometric" {
            return Ok(Schedule::Geometric);
        }
        if let Some(k) = s.strip_prefix("every:") {
            return match k.trim().parse::<usize>() {
                Ok(k) if k > 0 => Ok(Schedule::Every(k)),
                _ => Err(Error::InvalidParameter(format!("malformed schedule {s:?}"))),
            };
        }
        let pts: std::result::Result<Vec<usize>, _> = s.split(',').map(|x| parse_count(x.trim())).collect();
        match pts {
            Ok(p) if !p.is_empty() && p.iter().all(|&x| x > 0) => Ok(Schedule::List(p)),
            _ => Err(Error::InvalidParameter(format!("malformed schedule {s:?}"))),
        }
    }
}

/// Parses a positive count, accepting integral scientific notation (`1e4`).
pub fn parse_count(s: &str) -> std::result::Result<usize, Error> {
    if let Ok(x) = s.parse::<usize>() {
        return Ok(x);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) => Ok(x as usize),
        _ => Err(Error::InvalidParameter(format!("malformed count {s:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleField {
    Text(String),
    List(Vec<usize>),
}

impl ScheduleField {
    pub fn parse(&self) -> Result<Schedule> {
        match self {
            ScheduleField::Text(s) => s.parse(),
            ScheduleField::List(v) if !v.is_empty() => Ok(Schedule::List(v.clone())),
            ScheduleField::List(_) => Err(Error::InvalidParameter("empty checkpoint list".into())),
        }
    }
}

impl Default for ScheduleField {
    fn default() -> Self {
        ScheduleField::Text("geometric".into())
    }
}

fn default_variants() -> Vec<String> {
    vec!["pace".into()]
}

fn default_reps() -> usize {
    1
}

fn default_tol() -> f64 {
    PREFIX_TOL
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Experiment description, usually read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV instance; mutually exclusive with `model`.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Generator spec; each repetition replaces its seed.
    #[serde(default)]
    pub model: Option<InputModelSpec>,
    /// Defaults to `1/n` each.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Rescale every agent's values to mean one.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checkpoints: ScheduleField,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Warm-up rounds for the expenditure deviation.
    #[serde(default)]
    pub warmup: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; a relative `csv` path is taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(csv), Some(dir)) = (&cfg.csv, path.parent()) {
            if csv.is_relative() {
                cfg.csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.csv.is_some() == self.model.is_some() {
            return Err(Error::Config("exactly one of `csv` and `model` is required".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        for v in &self.variants {
            v.parse::<VariantSpec>()?;
        }
        self.checkpoints.parse()?;
        Ok(())
    }

    fn instance(&self, rep: usize) -> Result<ValueSequence> {
        let v = match (&self.csv, &self.model) {
            (Some(p), _) => load_csv(p).map_err(|e| e.context(p.display().to_string()))?.0,
            (None, Some(spec)) => gen(&spec.with_seed(repetition_seed(self.seed, rep)))?,
            (None, None) => return Err(Error::Config("no instance source".into())),
        };
        if self.normalize {
            normalize_values(&v)
        } else {
            Ok(v)
        }
    }

    fn weights(&self, n: usize) -> Result<AgentWeights> {
        match &self.weights {
            Some(w) if w.len() != n => Err(Error::DimensionMismatch { expected: n, got: w.len() }),
            Some(w) => AgentWeights::new(w.clone()),
            None => Ok(AgentWeights::uniform(n)),
        }
    }
}

/// One variant's result in one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub variant: String,
    pub trajectory: Vec<TrajectoryRow>,
    pub report: MetricsReport,
    #[serde(skip)]
    pub trace_csv: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub seed: u64,
    pub runs: Vec<VariantRun>,
}

/// Means over repetitions at one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub tau: usize,
    pub variant: String,
    /// Per-agent mean over the repetitions where the agent was not flagged.
    pub agents: Vec<Option<f64>>,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub final_max_relative_regret: f64,
    pub final_mean_relative_regret: f64,
    pub competitive_ratio: ExtReal,
    pub nash_welfare: f64,
    pub max_multiplicative_envy: ExtReal,
    pub max_additive_envy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub horizon: usize,
    pub agents: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub variants: Vec<VariantSummary>,
    pub runs: Vec<Repetition>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub summary: Summary,
    pub trajectory: Vec<AggregateRow>,
    pub files: Vec<PathBuf>,
}

fn run_repetition(cfg: &ExperimentConfig, specs: &[VariantSpec], rep: usize) -> Result<(Repetition, Vec<usize>)> {
    let ctx = |e: Error, what: &str| e.context(format!("repetition {rep}{what}"));
    let v = cfg.instance(rep).map_err(|e| ctx(e, ""))?;
    let b = cfg.weights(v.agents()).map_err(|e| ctx(e, ""))?;
    let checkpoints = cfg.checkpoints.parse()?.points(v.horizon());
    let prefix = hindsight_prefix(&v, &b, &checkpoints, cfg.tol).map_err(|e| ctx(e, ", hindsight"))?;
    let last = prefix.last().expect("schedule contains the horizon");
    let hindsight: Vec<f64> = last.utilities.iter().map(|u| u * v.horizon() as f64).collect();
    let mut runs = Vec::with_capacity(specs.len());
    for spec in specs {
        let label = spec.label();
        let what = format!(", variant {label}");
        let variant = spec.build(&b).map_err(|e| ctx(e, &what))?;
        let opts = RunOptions {
            checkpoints: checkpoints.clone(),
            ..Default::default()
        };
        let trace = run_with(&v, &b, &variant, &opts).map_err(|e| ctx(e, &what))?;
        let trajectory = relative_regret_trajectory(&trace, &prefix).map_err(|e| ctx(e, &what))?;
        let mut report = MetricsReport::evaluate(&v, &trace, &hindsight, cfg.warmup).map_err(|e| ctx(e, &what))?;
        report.trajectory = trajectory.clone();
        runs.push(VariantRun {
            variant: label,
            trajectory,
            report,
            trace_csv: trace.to_csv(),
        });
    }
    let seed = if cfg.model.is_some() {
        repetition_seed(cfg.seed, rep)
    } else {
        cfg.seed
    };
    Ok((Repetition { index: rep, seed, runs }, vec![v.horizon(), v.agents()]))
}

fn mean_ext(xs: impl Iterator<Item = ExtReal>) -> ExtReal {
    let mut sum = 0.0;
    let mut k = 0;
    for x in xs {
        match x {
            ExtReal::Finite(v) => sum += v,
            ExtReal::Infinite => return ExtReal::Infinite,
        }
        k += 1;
    }
    ExtReal::Finite(sum / k.max(1) as f64)
}

fn max_ext(xs: &[ExtReal]) -> ExtReal {
    xs.iter().fold(ExtReal::Finite(0.0), |a, &b| if b.gt(a) { b } else { a })
}

fn aggregate(reps: &[Repetition]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    let first = &reps[0];
    for (j, run) in first.runs.iter().enumerate() {
        for (c, row) in run.trajectory.iter().enumerate() {
            let n = row.agents.len();
            let k = reps.len() as f64;
            let agents = (0..n)
                .map(|i| {
                    let vals: Vec<f64> = reps.iter().filter_map(|r| r.runs[j].trajectory[c].agents[i]).collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect();
            out.push(AggregateRow {
                tau: row.tau,
                variant: run.variant.clone(),
                agents,
                max: reps.iter().map(|r| r.runs[j].trajectory[c].max).sum::<f64>() / k,
                mean: reps.iter().map(|r| r.runs[j].trajectory[c].mean).sum::<f64>() / k,
            });
        }
    }
    out
}

/// `tau,variant,agent,value` with agent rows followed by `max` and `mean`.
pub fn trajectory_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("tau,variant,agent,value\n");
    for r in rows {
        for (i, a) in r.agents.iter().enumerate() {
            if let Some(x) = a {
                let _ = writeln!(s, "{},{},{},{}", r.tau, r.variant, i + 1, x);
            }
        }
        let _ = writeln!(s, "{},{},max,{}", r.tau, r.variant, r.max);
        let _ = writeln!(s, "{},{},mean,{}", r.tau, r.variant, r.mean);
    }
    s
}

/// Parses the trajectory CSV back into `(tau, variant, agent, value)` rows.
pub fn read_trajectory_csv(text: &str) -> Result<Vec<(usize, String, String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Csv { line: 1, message: e.to_string() })?.clone();
    if headers.iter().collect::<Vec<_>>() != ["tau", "variant", "agent", "value"] {
        return Err(Error::Csv {
            line: 1,
            message: "expected header tau,variant,agent,value".into(),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| Error::Csv { line, message: e.to_string() })?;
        if rec.len() != 4 {
            return Err(Error::Csv { line, message: "ragged row".into() });
        }
        let tau = rec[0].trim().parse().map_err(|_| Error::Csv {
            line,
            message: "malformed number".into(),
        })?;
        let value = rec[3].trim().parse().map_err(|_| Error::Csv {
            line,
            message: "malformed number".into(),
        })?;
        out.push((tau, rec[1].to_string(), rec[2].to_string(), value));
    }
    Ok(out)
}

fn display_name(variant: &str) -> String {
    match variant {
        "pace" | "unconstrained" => "PACE".into(),
        other => other.into(),
    }
}

/// Log-τ SVG with `max` and `average` series for every variant.
pub fn plot_trajectory(rows: &[(usize, String, String, f64)], path: &Path, title: &str) -> Result<()> {
    use plotters::prelude::*;
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());

    let mut variants: Vec<String> = Vec::new();
    for (_, v, _, _) in rows {
        if !variants.contains(v) {
            variants.push(v.clone());
        }
    }
    let series = |v: &str, agent: &str| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.1 == v && r.2 == agent)
            .map(|r| (r.0 as f64, r.3))
            .collect()
    };
    let taus = rows.iter().map(|r| r.0 as f64);
    let xmax = taus.clone().fold(1.0, f64::max);
    let xmin = taus.fold(xmax, f64::min).max(1.0);
    let xmax = if xmax > xmin { xmax } else { xmin * 2.0 };
    let ymax = rows
        .iter()
        .filter(|r| r.2 == "max" || r.2 == "mean")
        .map(|r| r.3)
        .fold(0.0, f64::max);
    let ymax = if ymax > 0.0 { ymax * 1.05 } else { 1.0 };

    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(64)
        .build_cartesian_2d((xmin..xmax).log_scale(), 0f64..ymax)
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("t")
        .y_desc(title)
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (k, v) in variants.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let name = display_name(v);
        let is_baseline = v == "proportional";
        let mut kinds = vec![("mean", "average")];
        if !is_baseline {
            kinds.insert(0, ("max", "max"));
        }
        for (agent, word) in kinds {
            let pts = series(v, agent);
            if pts.is_empty() {
                continue;
            }
            let style = if agent == "max" {
                color.stroke_width(2)
            } else {
                color.stroke_width(1)
            };
            chart
                .draw_series(LineSeries::new(pts, style))
                .map_err(|e| plot_err(&e))?
                .label(format!("{name}, {word}"))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], style));
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Runs every repetition and writes `trajectory.csv`, `summary.json`,
/// `relative_regret.svg` and per-repetition files under `reps/` into
/// `cfg.out`. Nothing is left behind on failure.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let specs: Vec<VariantSpec> = cfg.variants.iter().map(|v| v.parse()).collect::<Result<_>>()?;
    let results: Vec<Result<(Repetition, Vec<usize>)>> =
        (0..cfg.repetitions).into_par_iter().map(|rep| run_repetition(cfg, &specs, rep)).collect();
    let mut reps = Vec::with_capacity(results.len());
    let mut shape = Vec::new();
    for r in results {
        let (rep, s) = r?;
        shape = s;
        reps.push(rep);
    }
    let rows = aggregate(&reps);
    let k = reps.len();
    let variants = (0..specs.len())
        .map(|j| {
            let runs: Vec<&VariantRun> = reps.iter().map(|r| &r.runs[j]).collect();
            let last = |f: fn(&TrajectoryRow) -> f64| {
                runs.iter().map(|r| r.trajectory.last().map_or(0.0, f)).sum::<f64>() / k as f64
            };
            VariantSummary {
                variant: runs[0].variant.clone(),
                final_max_relative_regret: last(|r| r.max),
                final_mean_relative_regret: last(|r| r.mean),
                competitive_ratio: mean_ext(runs.iter().map(|r| r.report.competitive_ratio)),
                nash_welfare: runs.iter().map(|r| r.report.nash_welfare).sum::<f64>() / k as f64,
                max_multiplicative_envy: mean_ext(runs.iter().map(|r| max_ext(&r.report.multiplicative_envy))),
                max_additive_envy: runs
                    .iter()
                    .map(|r| r.report.additive_envy.iter().copied().fold(0.0, f64::max))
                    .sum::<f64>()
                    / k as f64,
            }
        })
        .collect();
    let summary = Summary {
        horizon: shape[0],
        agents: shape[1],
        repetitions: cfg.repetitions,
        seed: cfg.seed,
        checkpoints: reps[0].runs[0].trajectory.iter().map(|r| r.tau).collect(),
        variants,
        runs: reps,
    };

    let out = &cfg.out;
    if out.exists() && !(out.is_dir() && out.join("summary.json").is_file()) {
        return Err(Error::InvalidParameter(format!(
            "{} exists and does not hold a previous run",
            out.display()
        )));
    }
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    let written = write_outputs(&staging, &summary, &rows);
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(&staging, out)?;
    let files = written?
        .into_iter()
        .map(|p| out.join(p.strip_prefix(&staging).unwrap_or(&p)))
        .collect();
    Ok(ExperimentReport {
        summary,
        trajectory: rows,
        files,
    })
}

fn staging_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_else(|| "out".into());
    name.push(".partial");
    out.with_file_name(name)
}

fn write_outputs(dir: &Path, summary: &Summary, rows: &[AggregateRow]) -> Result<Vec<PathBuf>> {
    let reps_dir = dir.join("reps");
    fs::create_dir_all(&reps_dir)?;
    let mut files = Vec::new();
    let traj = dir.join("trajectory.csv");
    let text = trajectory_csv(rows);
    fs::write(&traj, &text)?;
    files.push(traj);
    let json = dir.join("summary.json");
    fs::write(&json, serde_json::to_string_pretty(summary)?)?;
    files.push(json);
    let svg = dir.join("relative_regret.svg");
    plot_trajectory(&read_trajectory_csv(&text)?, &svg, "relative time-averaged regret")?;
    files.push(svg);
    for rep in &summary.runs {
        let per: Vec<AggregateRow> = rep
            .runs
            .iter()
            .flat_map(|r| {
                r.trajectory.iter().map(|row| AggregateRow {
                    tau: row.tau,
                    variant: r.variant.clone(),
                    agents: row.agents.clone(),
                    max: row.max,
                    mean: row.mean,
                })
            })
            .collect();
        let p = reps_dir.join(format!("rep{:03}_trajectory.csv", rep.index));
        fs::write(&p, trajectory_csv(&per))?;
        files.push(p);
        for r in &rep.runs {
            let p = reps_dir.join(format!("rep{:03}_{}.csv", rep.index, sanitize(&r.variant)));
            fs::write(&p, &r.trace_csv)?;
            files.push(p);
        }
    }
    Ok(files)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}
