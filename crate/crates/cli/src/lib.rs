//! Command-line driver: `solve`, `simulate`, `sweep` and `validate-walk`.
//!
//! Every CSV starts with a `# ehs-csv v1 <kind>` line, has a header row, and
//! carries a `config_hash` column. Output never depends on wall-clock time,
//! so a fixed config and seed reproduce identical bytes.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ehs_core::aging::{AgingBounds, CONSTRAINT_NAMES, N_CONSTRAINTS};
use ehs_core::cmdp::Policy;
use ehs_core::experiment::{sha256_hex, Experiment, ExperimentConfig, SolvedPolicy, SweepParam};
use ehs_core::model::SystemState;
use ehs_core::sim::{simulate, validate_walk, Estimate, SimOptions, TraceStats, WalkParams};
use ehs_core::Error;

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ehs", version, about = "Aging-aware scheduling for energy harvesting systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the constrained problem and write the policy and diagnostics.
    Solve(SolveArgs),
    /// Roll out a policy file and write traces and statistics.
    Simulate(SimulateArgs),
    /// Solve and simulate both policy variants over a parameter grid.
    Sweep(SweepArgs),
    /// Check the variance law of the persistent random walk.
    ValidateWalk(WalkArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory; falls back to EHS_OUT_DIR, then the config's
    /// `output_dir`, then `out`.
    #[arg(long, env = "EHS_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Drop every aging bound.
    #[arg(long)]
    pub unconstrained: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Skip the per-slot trace of the first run.
    #[arg(long)]
    pub no_trace: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `phi_l` or `b_l`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated grid values; may be empty.
    #[arg(long, default_value = "")]
    pub grid: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9")]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    pub delta_max: Vec<u32>,
    #[arg(long, default_value_t = 10_000)]
    pub tau: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) | Error::Unbounded => EXIT_INFEASIBLE,
            Error::Numerical(_) | Error::Reducible(_) => EXIT_NUMERICAL,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::ValidateWalk(a) => cmd_validate_walk(&a),
    }
}

fn out_dir(args: &OutputArgs, config: Option<&ExperimentConfig>) -> CmdResult<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output_dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Failure { code: EXIT_IO, message: format!("{}: {e}", dir.display()) })?;
    Ok(dir)
}

/// CSV writer preceded by the schema line.
fn csv_writer(path: &Path, kind: &str) -> CmdResult<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# ehs-csv v1 {kind}")?;
    Ok(csv::Writer::from_writer(f))
}

fn variant_name(unconstrained: bool) -> &'static str {
    if unconstrained {
        "unconstrained"
    } else {
        "constrained"
    }
}

fn fmt_bound(b: f64) -> String {
    if b.is_finite() {
        b.to_string()
    } else {
        "inf".into()
    }
}

fn solve_header() -> Vec<String> {
    let mut h = vec!["config_hash".to_string(), "variant".into(), "lp_objective".into(), "objective".into()];
    for name in CONSTRAINT_NAMES {
        h.extend([format!("achieved_{name}"), format!("bound_{name}"), format!("binding_{name}")]);
    }
    h.extend(["lp_iterations", "randomized_states", "recurrent_states", "start_state", "single_class"].map(String::from));
    h
}

fn solve_record(hash: &str, variant: &str, bounds: &AgingBounds, s: &SolvedPolicy) -> Vec<String> {
    let d = &s.solution.diagnostics;
    let b = bounds.as_array();
    let mut r = vec![hash.to_string(), variant.into(), s.solution.objective.to_string(), s.evaluation.objective.to_string()];
    for k in 0..N_CONSTRAINTS {
        r.extend([s.evaluation.constraints[k].to_string(), fmt_bound(b[k]), d.binding[k].to_string()]);
    }
    r.extend([d.lp_iterations, d.randomized_states, s.evaluation.recurrent_states, s.start].map(|v| v.to_string()));
    r.push(s.single_class.to_string());
    r
}

pub fn cmd_solve(args: &SolveArgs) -> CmdResult {
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = out_dir(&args.output, Some(&cfg))?;
    let hash = cfg.hash();
    let variant = variant_name(args.unconstrained);
    let bounds = if args.unconstrained { cfg.unconstrained().bounds } else { cfg.bounds };
    let ex = Experiment::new(cfg.clone())?;
    let solved = ex.solve_with_bounds(&bounds)?;

    if !solved.single_class {
        eprintln!(
            "warning: the LP optimum spreads over several closed classes; evaluated from state {} the policy gives objective {} instead of {}",
            solved.start, solved.evaluation.objective, solved.solution.objective
        );
    }
    let policy_path = dir.join(format!("policy-{variant}.csv"));
    let mut f = BufWriter::new(File::create(&policy_path)?);
    let header = [
        ("config_hash", hash.clone()),
        ("variant", variant.to_string()),
        ("start_state", solved.start.to_string()),
        ("state_order", ex.model.space().describe()),
    ];
    solved.solution.policy.write_table(&mut f, &header)?;
    f.flush()?;

    let mut w = csv_writer(&dir.join(format!("solve-{variant}.csv")), "solve")?;
    w.write_record(solve_header())?;
    w.write_record(solve_record(&hash, variant, &bounds, &solved))?;
    w.flush()?;
    eprintln!(
        "{variant}: objective {:.6}, achieved {:?}, wrote {}",
        solved.evaluation.objective,
        solved.evaluation.constraints,
        policy_path.display()
    );
    Ok(())
}

fn meta<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Reads a policy file and checks that it was produced for `cfg`.
pub fn load_policy(path: &Path, cfg: &ExperimentConfig) -> CmdResult<(Policy<f64>, Vec<(String, String)>)> {
    let (policy, header) = Policy::<f64>::read_table(BufReader::new(File::open(path)?))?;
    let expected = cfg.hash();
    match meta(&header, "config_hash") {
        Some(h) if h == expected => Ok((policy, header)),
        Some(h) => Err(Failure::config(format!(
            "policy {} was solved for config hash {h}, but the config hashes to {expected}",
            path.display()
        ))),
        None => Err(Failure::config(format!("policy {} has no config_hash header", path.display()))),
    }
}

const STATS_COLUMNS: [&str; 22] = [
    "config_hash",
    "variant",
    "seed",
    "stream",
    "horizon",
    "warmup",
    "charge_mean",
    "charge_se",
    "charge_sd",
    "backlog_mean",
    "backlog_sd",
    "saturation",
    "saturation_se",
    "objective",
    "cycle_rate",
    "amplitude",
    "persistence",
    "soc_avg",
    "soc_dev",
    "n_cyc",
    "degradation",
    "v_bar",
];

fn stats_record(hash: &str, variant: &str, s: &TraceStats) -> Vec<String> {
    let mut r = vec![hash.to_string(), variant.to_string()];
    r.extend([s.seed, s.stream].map(|v| v.to_string()));
    r.extend([s.horizon, s.warmup].map(|v| v.to_string()));
    r.extend(
        [
            s.charge.mean,
            s.charge.std_error,
            s.charge_sd,
            s.backlog.mean,
            s.backlog_sd,
            s.saturation.mean,
            s.saturation.std_error,
            s.objective.mean,
            s.cycle_rate.mean,
            s.amplitude.mean,
            s.persistence.mean,
            s.degradation.soc_avg,
            s.degradation.soc_dev,
            s.degradation.n_cyc,
            s.degradation.degradation,
            s.metrics.v_bar,
        ]
        .map(|v| v.to_string()),
    );
    r
}

/// Mean and standard error across runs of the quantities compared between
/// policy variants.
pub struct RunSummary {
    pub runs: usize,
    pub charge: Estimate,
    pub charge_sd: Estimate,
    pub saturation: Estimate,
    pub objective: Estimate,
    pub degradation: Estimate,
}

impl RunSummary {
    pub fn of(stats: &[TraceStats]) -> Self {
        let over = |f: &dyn Fn(&TraceStats) -> f64| {
            let v: Vec<f64> = stats.iter().map(f).collect();
            if v.len() >= 2 {
                Estimate::of_independent(&v)
            } else {
                Estimate { mean: v.first().copied().unwrap_or(f64::NAN), std_error: f64::NAN }
            }
        };
        Self {
            runs: stats.len(),
            charge: over(&|s| s.charge.mean),
            charge_sd: over(&|s| s.charge_sd),
            saturation: over(&|s| s.saturation.mean),
            objective: over(&|s| s.objective.mean),
            degradation: over(&|s| s.degradation.degradation),
        }
    }

    const COLUMNS: [&'static str; 11] = [
        "runs",
        "charge_mean",
        "charge_se",
        "charge_sd_mean",
        "charge_sd_se",
        "saturation_mean",
        "saturation_se",
        "objective_mean",
        "objective_se",
        "degradation_mean",
        "degradation_se",
    ];

    fn record(&self) -> Vec<String> {
        let mut r = vec![self.runs.to_string()];
        for e in [self.charge, self.charge_sd, self.saturation, self.objective, self.degradation] {
            r.extend([e.mean.to_string(), e.std_error.to_string()]);
        }
        r
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = out_dir(&args.output, Some(&cfg))?;
    let (policy, header) = load_policy(&args.policy, &cfg)?;
    let ex = Experiment::new(cfg.clone())?;
    let hash = cfg.hash();
    let variant = meta(&header, "variant").unwrap_or("policy").to_string();
    let start = match meta(&header, "start_state") {
        Some(v) => v.parse::<usize>().map_err(|_| Failure::config("policy header start_state is not an index"))?,
        None => ex.model.space().index(&SystemState::default()),
    };
    if start >= ex.model.space().len() {
        return Err(Failure::config(format!("policy start_state {start} outside the state space")));
    }
    let seed = args.seed.unwrap_or(cfg.simulation.seed);
    let horizon = args.horizon.unwrap_or(cfg.simulation.horizon);
    let runs = args.runs.unwrap_or(cfg.simulation.runs);
    let mut opts = SimOptions::new(horizon, seed);
    opts.initial = ex.model.space().state_of(start);

    let mut stats_w = csv_writer(&dir.join(format!("stats-{variant}.csv")), "stats")?;
    stats_w.write_record(STATS_COLUMNS)?;
    let mut all = Vec::with_capacity(runs);
    for stream in 0..runs as u64 {
        let o = SimOptions { stream, record_trace: stream == 0 && !args.no_trace, ..opts.clone() };
        let sim = simulate(&ex.model, &policy, &cfg.battery, &cfg.objective, &o)?;
        if let Some(trace) = &sim.trace {
            let mut w = csv_writer(&dir.join(format!("trace-{variant}.csv")), "trace")?;
            w.write_record(["config_hash", "seed", "slot", "h", "q", "w", "y", "l", "lambda", "action", "e", "u"])?;
            for r in trace {
                let s = r.state;
                w.write_record([
                    hash.clone(),
                    seed.to_string(),
                    r.slot.to_string(),
                    s.h.to_string(),
                    s.q.to_string(),
                    s.w.to_string(),
                    ex.model.grid().value(s.y_idx).to_string(),
                    s.l.to_string(),
                    s.lam.to_string(),
                    r.action.to_string(),
                    r.e.to_string(),
                    r.u.to_string(),
                ])?;
            }
            w.flush()?;
        }
        stats_w.write_record(stats_record(&hash, &variant, &sim.stats))?;
        all.push(sim.stats);
    }
    stats_w.flush()?;

    let summary = RunSummary::of(&all);
    let mut w = csv_writer(&dir.join(format!("summary-{variant}.csv")), "summary")?;
    let mut cols = vec!["config_hash", "variant", "seed", "horizon"];
    cols.extend(RunSummary::COLUMNS);
    w.write_record(cols)?;
    let mut rec = vec![hash.clone(), variant.clone(), seed.to_string(), horizon.to_string()];
    rec.extend(summary.record());
    w.write_record(rec)?;
    w.flush()?;
    eprintln!(
        "{variant}: {runs} runs, SoC sd {:.4}, saturation {:.4}, degradation {:.6}",
        summary.charge_sd.mean, summary.saturation.mean, summary.degradation.mean
    );
    Ok(())
}

/// Comma-separated numbers; blank entries are skipped so `""` is an empty grid.
pub fn parse_grid(text: &str) -> CmdResult<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|_| Failure::config(format!("grid value `{v}` is not a number"))))
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    let param: SweepParam = args.param.parse()?;
    let grid = parse_grid(&args.grid)?;
    let base = ExperimentConfig::load(&args.config)?;
    let dir = out_dir(&args.output, Some(&base))?;
    let seed = args.seed.unwrap_or(base.simulation.seed);
    let horizon = args.horizon.unwrap_or(base.simulation.horizon);
    let runs = args.runs.unwrap_or(base.simulation.runs);

    let mut w = csv_writer(&dir.join(format!("sweep-{}.csv", param.name())), "sweep")?;
    let mut cols = vec!["config_hash", "param", "value", "variant", "status", "objective"];
    let achieved: Vec<String> = CONSTRAINT_NAMES.iter().map(|n| format!("achieved_{n}")).collect();
    cols.extend(achieved.iter().map(String::as_str));
    cols.extend(["seed", "horizon"]);
    cols.extend(RunSummary::COLUMNS);
    w.write_record(&cols)?;
    w.flush()?;

    let mut first_failure: Option<Failure> = None;
    for &value in &grid {
        let cfg = base.with_param(param, value);
        let ex = match Experiment::new(cfg.clone()) {
            Ok(ex) => ex,
            Err(e) => return Err(Failure::config(format!("{}={value}: {e}", param.name()))),
        };
        let hash = cfg.hash();
        for unconstrained in [false, true] {
            let variant = variant_name(unconstrained);
            let bounds = if unconstrained { cfg.unconstrained().bounds } else { cfg.bounds };
            let mut rec = vec![hash.clone(), param.name().to_string(), value.to_string(), variant.to_string()];
            match ex.solve_with_bounds(&bounds) {
                Ok(s) => {
                    let mut opts = SimOptions::new(horizon, seed);
                    opts.initial = ex.model.space().state_of(s.start);
                    let stats = ehs_core::sim::simulate_runs(
                        &ex.model,
                        &s.solution.policy,
                        &cfg.battery,
                        &cfg.objective,
                        &opts,
                        runs,
                    )?;
                    rec.extend(["ok".to_string(), s.evaluation.objective.to_string()]);
                    rec.extend(s.evaluation.constraints.iter().map(|v| v.to_string()));
                    rec.extend([seed.to_string(), horizon.to_string()]);
                    rec.extend(RunSummary::of(&stats).record());
                }
                Err(e) => {
                    let f = Failure::from(e);
                    eprintln!("{}={value} {variant}: {}", param.name(), f.message);
                    let status = if f.code == EXIT_INFEASIBLE { "infeasible" } else { "failed" };
                    rec.push(status.to_string());
                    rec.resize(cols.len(), String::new());
                    first_failure.get_or_insert(f);
                }
            }
            w.write_record(&rec)?;
            w.flush()?;
        }
    }
    match first_failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

pub fn cmd_validate_walk(args: &WalkArgs) -> CmdResult {
    let dir = out_dir(&args.output, None)?;
    let grid: Vec<WalkParams> = args
        .p
        .iter()
        .flat_map(|&p| args.delta_max.iter().map(move |&d| WalkParams { p, delta_max: d, tau: args.tau, samples: args.samples }))
        .collect();
    for g in &grid {
        g.validate()?;
    }
    // Walk runs have no experiment config; hash the parameter grid instead.
    let key = format!("{:?}|{}|{}|{}|{}", args.p, args.delta_max.iter().map(u32::to_string).collect::<Vec<_>>().join(","), args.tau, args.samples, args.seed);
    let hash = sha256_hex(key.as_bytes());

    let mut w = csv_writer(&dir.join("walk.csv"), "walk")?;
    w.write_record([
        "config_hash",
        "p",
        "delta_max",
        "tau",
        "samples",
        "seed",
        "empirical_mean",
        "empirical_variance",
        "predicted_variance",
        "exact_variance",
        "relative_error",
        "ks_distance",
    ])?;
    for g in &grid {
        let r = validate_walk(g, args.seed)?;
        w.write_record([
            hash.clone(),
            g.p.to_string(),
            g.delta_max.to_string(),
            g.tau.to_string(),
            g.samples.to_string(),
            args.seed.to_string(),
            r.empirical_mean.to_string(),
            r.empirical_variance.to_string(),
            r.predicted_variance.to_string(),
            r.exact_variance.to_string(),
            r.relative_error().to_string(),
            r.ks_distance.to_string(),
        ])?;
        w.flush()?;
    }
    Ok(())
}

/// Reads a CSV written by this crate, skipping the schema line.
pub fn read_csv(path: &Path) -> CmdResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if !first.starts_with("# ehs-csv v1") {
        return Err(Failure::config(format!("{} is not an ehs CSV", path.display())));
    }
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}
