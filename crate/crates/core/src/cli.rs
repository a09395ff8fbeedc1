//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::first_level::complexity::{policy_op_count, vi_op_count};
use crate::first_level::frame_value_iteration;
use crate::first_level::policy::{extract_policy, PolicySet, PolicySource};
use crate::problem::SchedulingProblem;
use crate::simulator::{
    generate_synthetic_trace, run_simulation, trace_gops_needed, SchedulerKind, SimMetrics,
    SimOutcome, Trace,
};

/// Measured GOPs when neither the config nor the command line says.
pub const DEFAULT_RUN_GOPS: u64 = 20;

pub const SWEEP_HEADER: &str =
    "lambda,M,scheduler,frame_rate_fps,power_per_core_w,total_power_w,miss_I,miss_P,miss_B";

#[derive(Debug, Parser)]
#[command(
    name = "slicesched",
    version,
    about = "Power-aware slice scheduling for parallel video decoding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the frame-level MDP and write the per-frame policies.
    Solve(SolveArgs),
    /// Run one trace-driven simulation.
    Simulate(SimulateArgs),
    /// Simulate a grid of multipliers and core counts.
    Sweep(SweepArgs),
    /// Check a config and, optionally, a trace and a policy against it.
    Validate(ValidateArgs),
    /// Write a synthetic trace sampled from the config's complexity model.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub cores: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Policy file; solved on the fly when omitted.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Trace CSV; a synthetic trace is generated when omitted.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub scheduler: Option<SchedulerKind>,
    #[arg(long)]
    pub gops: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub cores: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub scheduler: Vec<SchedulerKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gops: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gops: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Written to every output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config_path: PathBuf,
    /// Hash of the effective configuration below, after command-line overrides.
    pub config_sha256: String,
    pub config: String,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub processors: usize,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub evaluated_candidates: u64,
    pub vi_op_count: u128,
    pub policy_op_count: u128,
    pub clamped_departures: u64,
    pub schedules_any_slice: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub processors: usize,
    pub scheduler: SchedulerKind,
    pub frame_rate_fps: f64,
    pub power_per_core_w: f64,
    pub total_power_w: f64,
    pub miss: [f64; 3],
}

impl SweepRow {
    fn new(lambda: f64, processors: usize, scheduler: SchedulerKind, m: &SimMetrics) -> Self {
        SweepRow {
            lambda,
            processors,
            scheduler,
            frame_rate_fps: m.decoded_frame_rate_fps,
            power_per_core_w: m.avg_power_per_core_w,
            total_power_w: m.avg_total_power_w,
            miss: [m.miss_fraction.i, m.miss_fraction.p, m.miss_fraction.b],
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.lambda,
            self.processors,
            self.scheduler,
            self.frame_rate_fps,
            self.power_per_core_w,
            self.total_power_w,
            self.miss[0],
            self.miss[1],
            self.miss[2]
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn input(path: &Path) -> Result<InputFile> {
    Ok(InputFile {
        path: path.to_path_buf(),
        sha256: sha256_hex(&read(path)?),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    write(&out.join("manifest.json"), &json(manifest))
}

fn manifest(
    subcommand: &'static str,
    config_path: &Path,
    config: &Config,
    inputs: Vec<InputFile>,
    outputs: &[&str],
) -> RunManifest {
    let text = config.to_toml();
    RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config_path: config_path.to_path_buf(),
        config_sha256: sha256_hex(text.as_bytes()),
        config: text,
        seed: config.sim.seed,
        inputs,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

fn load_config(o: &Overrides) -> Result<Config> {
    let mut c = Config::load(&o.config)?;
    if let Some(l) = o.lambda {
        c.solver.lambda = l;
    }
    if let Some(m) = o.cores {
        c.sim.cores = m;
    }
    if let Some(s) = o.seed {
        c.sim.seed = s;
    }
    Ok(c)
}

pub fn solve(problem: &SchedulingProblem, config: &Config) -> Result<(PolicySet, SolveReport)> {
    let values = frame_value_iteration(problem, &config.solver_options())?;
    let policy = extract_policy(&values, problem);
    let gop = &problem.gop;
    let l_max = gop.frames().iter().map(|f| f.num_slices).max().unwrap_or(0) as u64;
    let children = gop
        .frames()
        .iter()
        .map(|f| gop.children(f.position).len())
        .max()
        .unwrap_or(0) as u64;
    let (k, c, f, m) = (
        gop.num_frames() as u64,
        gop.period_slots() as u64,
        problem.num_frequencies() as u64,
        problem.num_processors as u64,
    );
    let schedules = gop.frames().iter().any(|fr| {
        (0..gop.period_slots()).any(|phase| {
            (1..=fr.num_slices).any(|x| {
                policy
                    .actions(fr.position, phase, x, true)
                    .is_some_and(|a| a.iter().any(|a| a.scheduled))
            })
        })
    });
    let report = SolveReport {
        lambda: problem.params.lambda,
        processors: problem.num_processors,
        iterations: values.iterations,
        residual: values.residual,
        residual_history: values.residual_history.clone(),
        evaluated_candidates: values.evaluated_candidates,
        vi_op_count: vi_op_count(values.iterations as u64, k, c, l_max, f, m, children),
        policy_op_count: policy_op_count(k, c, l_max, m, f, children),
        clamped_departures: policy.clamped,
        schedules_any_slice: schedules,
    };
    Ok((policy, report))
}

/// Checks that a policy file was solved for this problem's shape.
pub fn check_policy(policy: &PolicySet, problem: &SchedulingProblem) -> Result<()> {
    if policy.processors != problem.num_processors {
        return Err(Error::InvalidPolicy(format!(
            "policy is for {} processors, config has {}",
            policy.processors, problem.num_processors
        )));
    }
    if policy.frequencies_mhz != problem.power.frequencies_mhz() {
        return Err(Error::InvalidPolicy(
            "policy frequency set differs from the config".into(),
        ));
    }
    if policy.period != problem.gop.period_slots() {
        return Err(Error::InvalidPolicy(format!(
            "policy period is {} slots, config has {}",
            policy.period,
            problem.gop.period_slots()
        )));
    }
    for f in problem.gop.frames() {
        if policy
            .frame(f.position)
            .is_none_or(|p| p.num_slices != f.num_slices)
        {
            return Err(Error::InvalidPolicy(format!(
                "frame {} missing or sized differently",
                f.position
            )));
        }
    }
    Ok(())
}

fn load_policy(path: &Path, problem: &SchedulingProblem) -> Result<PolicySet> {
    let text = String::from_utf8(read(path)?).map_err(|e| Error::InvalidPolicy(e.to_string()))?;
    let p = PolicySet::parse(&text)?;
    check_policy(&p, problem)?;
    Ok(p)
}

/// Measured GOPs: the flag, else the config, else [`DEFAULT_RUN_GOPS`].
pub fn run_gops(config: &Config, flag: Option<u64>) -> u64 {
    flag.or(config.sim.gops).unwrap_or(DEFAULT_RUN_GOPS)
}

/// Synthetic trace long enough for `gops` measured GOPs, drawn with the
/// config's seed.
pub fn synthetic_trace(config: &Config, gops: u64) -> Result<Trace> {
    let gop = config.gop_structure()?;
    let model = config.complexity_model(None)?;
    let n = trace_gops_needed(&gop, gops);
    Trace::new(generate_synthetic_trace(&gop, &model, n, config.sim.seed))
}

fn load_trace(path: Option<&Path>, config: &Config, gops: u64) -> Result<(Trace, Vec<InputFile>)> {
    match path {
        Some(p) => Ok((Trace::read_csv(p)?, vec![input(p)?])),
        None => Ok((synthetic_trace(config, gops)?, vec![])),
    }
}

/// Simulates the config's scheduler on `trace`. Policy-driven schedulers
/// use `policy`, or solve one when none is given.
pub fn simulate(config: &Config, trace: &Trace, policy: Option<&PolicySet>) -> Result<SimOutcome> {
    let problem = config.problem(Some(trace))?;
    let solved;
    let policy = match (policy, config.sim.scheduler.needs_policy()) {
        (_, false) => None,
        (Some(p), true) => {
            check_policy(p, &problem)?;
            Some(p)
        }
        (None, true) => {
            solved = solve(&problem, config)?.0;
            Some(&solved)
        }
    };
    run_simulation(
        &problem,
        &config.sim_config(),
        trace,
        policy.map(|p| p as &dyn PolicySource),
    )
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let config = load_config(&a.common)?;
    let problem = config.problem(None)?;
    let (policy, report) = solve(&problem, &config)?;
    create_dir(&a.out)?;
    write(&a.out.join("policy.txt"), policy.to_text().as_bytes())?;
    write(&a.out.join("solve_report.json"), &json(&report))?;
    write_manifest(
        &a.out,
        &manifest(
            "solve",
            &a.common.config,
            &config,
            vec![],
            &["policy.txt", "solve_report.json"],
        ),
    )?;
    println!(
        "solved in {} iterations (residual {:e}); policy {} any slice",
        report.iterations,
        report.residual,
        if report.schedules_any_slice {
            "schedules"
        } else {
            "never schedules"
        }
    );
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut config = load_config(&a.common)?;
    if let Some(s) = a.scheduler {
        config.sim.scheduler = s;
    }
    config.sim.gops = Some(run_gops(&config, a.gops));
    let (trace, mut inputs) = load_trace(a.trace.as_deref(), &config, config.sim.gops.unwrap())?;
    let policy = match &a.policy {
        Some(p) if config.sim.scheduler.needs_policy() => {
            inputs.push(input(p)?);
            Some(load_policy(p, &config.problem(Some(&trace))?)?)
        }
        _ => None,
    };
    let out = simulate(&config, &trace, policy.as_ref())?;
    create_dir(&a.out)?;
    write(&a.out.join("metrics.json"), &json(&out.metrics))?;
    let mut slots = Vec::new();
    out.log.write_slot_csv(&mut slots).expect("in-memory write");
    write(&a.out.join("slots.csv"), &slots)?;
    write_manifest(
        &a.out,
        &manifest(
            "simulate",
            &a.common.config,
            &config,
            inputs,
            &["metrics.json", "slots.csv"],
        ),
    )?;
    let m = &out.metrics;
    println!(
        "{}: {:.3} fps, {:.6} W per core, misses I {:.4} P {:.4} B {:.4}",
        config.sim.scheduler,
        m.decoded_frame_rate_fps,
        m.avg_power_per_core_w,
        m.miss_fraction.i,
        m.miss_fraction.p,
        m.miss_fraction.b
    );
    Ok(())
}

/// Runs every (λ, M, scheduler) combination; rows come back sorted.
pub fn run_sweep(
    config: &Config,
    trace: &Trace,
    lambdas: &[f64],
    cores: &[usize],
    schedulers: &[SchedulerKind],
) -> Result<Vec<SweepRow>> {
    let mut jobs = Vec::new();
    for &l in lambdas {
        for &m in cores {
            jobs.push((l, m));
        }
    }
    let sim = config.sim_config();
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(lambda, m)| -> Result<Vec<SweepRow>> {
            let mut c = config.clone();
            c.solver.lambda = lambda;
            c.sim.cores = m;
            let problem = c.problem(Some(trace))?;
            let policy = if schedulers.iter().any(|s| s.needs_policy()) {
                Some(solve(&problem, &c)?.0)
            } else {
                None
            };
            schedulers
                .iter()
                .map(|&s| {
                    let mut sc = sim.clone();
                    sc.scheduler = s;
                    let out = run_simulation(
                        &problem,
                        &sc,
                        trace,
                        policy.as_ref().map(|p| p as &dyn PolicySource),
                    )?;
                    Ok(SweepRow::new(lambda, m, s, &out.metrics))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.processors.cmp(&b.processors))
            .then(a.scheduler.cmp(&b.scheduler))
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut config = Config::load(&a.config)?;
    if let Some(s) = a.seed {
        config.sim.seed = s;
    }
    config.sim.gops = Some(run_gops(&config, a.gops));
    let lambdas = pick(&a.lambda, &config.sweep.lambdas, config.solver.lambda);
    let cores = pick(&a.cores, &config.sweep.cores, config.sim.cores);
    let schedulers = pick(&a.scheduler, &[], config.sim.scheduler);
    config.sweep.lambdas = lambdas.clone();
    config.sweep.cores = cores.clone();
    let (trace, inputs) = load_trace(a.trace.as_deref(), &config, config.sim.gops.unwrap())?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rows = pool.install(|| run_sweep(&config, &trace, &lambdas, &cores, &schedulers))?;
    create_dir(&a.out)?;
    write(&a.out.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    write_manifest(
        &a.out,
        &manifest("sweep", &a.config, &config, inputs, &["sweep.csv"]),
    )?;
    println!("{} runs written", rows.len());
    Ok(())
}

fn pick<T: Clone>(flag: &[T], config: &[T], fallback: T) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else if !config.is_empty() {
        config.to_vec()
    } else {
        vec![fallback]
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let config = Config::load(&a.config)?;
    let trace = a.trace.as_deref().map(Trace::read_csv).transpose()?;
    let problem = config.problem(trace.as_ref())?;
    if let Some(t) = &trace {
        for r in t.records() {
            if r.frame_pos == 0 || r.frame_pos as usize > problem.gop.num_frames() {
                return Err(Error::InvalidTrace(format!(
                    "frame position {} not in the GOP",
                    r.frame_pos
                )));
            }
            let f = problem.gop.frame(r.frame_pos);
            if f.frame_type != r.frame_type || r.slice >= f.num_slices {
                return Err(Error::InvalidTrace(format!(
                    "record for GOP {} frame {} slice {} does not match the GOP",
                    r.gop, r.frame_pos, r.slice
                )));
            }
        }
        println!(
            "trace: {} slices over {} GOPs",
            t.records().len(),
            t.num_gops()
        );
    }
    if let Some(p) = &a.policy {
        load_policy(p, &problem)?;
        println!("policy: matches the config");
    }
    println!("config: ok");
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mut config = Config::load(&a.config)?;
    if let Some(s) = a.seed {
        config.sim.seed = s;
    }
    let trace = synthetic_trace(&config, run_gops(&config, a.gops))?;
    create_dir(&a.out)?;
    trace.write_csv_file(&a.out.join("trace.csv"))?;
    write_manifest(
        &a.out,
        &manifest("generate", &a.config, &config, vec![], &["trace.csv"]),
    )?;
    println!(
        "{} slices over {} GOPs",
        trace.records().len(),
        trace.num_gops()
    );
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

/// Exit status: 0 on success, 2 for file-system errors, 1 otherwise.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_io() => 2,
        Err(_) => 1,
    }
}

/// Parses `args`, runs the command and reports errors on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = execute(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}
