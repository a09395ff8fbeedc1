//! TOML run configuration.
//!
//! ```toml
//! [gop]
//! preset = "ibpb"          # or an explicit [[gop.frames]] list
//! slices = 8
//! slots_per_frame = 3
//! slot_duration = "1/90"   # seconds, number or fraction
//!
//! [complexity]
//! mean_cycles = [6e6, 5e6, 4e6]   # I, P, B
//! kind = "exponential"
//!
//! [solver]
//! lambda = 400
//!
//! [sim]
//! cores = 4
//! scheduler = "proposed"
//! seed = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{LagrangianParams, PowerModel};
use crate::error::{Error, Result};
use crate::first_level::{SolverOptions, UpdateMode};
use crate::problem::{LeakageAccounting, SchedulingProblem};
use crate::simulator::{SchedulerKind, SimConfig, Trace};
use crate::stochastic::{ComplexityKind, ComplexityModel};
use crate::workload::{build_gop_schedule, ibpb_gop, FrameRef, FrameSpec, FrameType, GopStructure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seconds {
    Value(f64),
    Text(String),
}

impl Seconds {
    pub fn value(&self) -> Result<f64> {
        match self {
            Seconds::Value(v) => Ok(*v),
            Seconds::Text(s) => {
                let bad = || Error::InvalidConfig(format!("cannot read {s:?} as seconds"));
                match s.split_once('/') {
                    Some((n, d)) => {
                        let n: f64 = n.trim().parse().map_err(|_| bad())?;
                        let d: f64 = d.trim().parse().map_err(|_| bad())?;
                        Ok(n / d)
                    }
                    None => s.trim().parse().map_err(|_| bad()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub position: u32,
    #[serde(rename = "type")]
    pub frame_type: FrameType,
    pub slices: u32,
    #[serde(default)]
    pub parents: Vec<FrameRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GopSection {
    pub slot_duration: Seconds,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub slices: Option<u32>,
    #[serde(default)]
    pub slots_per_frame: Option<usize>,
    #[serde(default)]
    pub period_slots: Option<usize>,
    #[serde(default)]
    pub window_lengths: Option<Vec<u32>>,
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub frequencies_mhz: Vec<f64>,
    /// Watts at each frequency.
    pub rho: Vec<f64>,
    /// Watts per frequency, as `[I, P, B]`.
    pub sigma: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySection {
    pub mean_cycles: [f64; 3],
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

fn default_kind() -> String {
    "exponential".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub rate_target: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub mode: UpdateMode,
    #[serde(default)]
    pub leakage: LeakageAccounting,
    #[serde(default = "default_power_scale")]
    pub power_scale: f64,
}

fn default_discount() -> f64 {
    LagrangianParams::DEFAULT_DISCOUNT
}
fn default_tolerance() -> f64 {
    SolverOptions::default().tolerance
}
fn default_max_iterations() -> usize {
    SolverOptions::default().max_iterations
}
fn default_power_scale() -> f64 {
    LagrangianParams::DEFAULT_POWER_SCALE
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            lambda: 0.0,
            rate_target: 0.0,
            discount: default_discount(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            mode: UpdateMode::default(),
            leakage: LeakageAccounting::default(),
            power_scale: default_power_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_cores")]
    pub cores: usize,
    #[serde(default = "default_scheduler")]
    pub scheduler: SchedulerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gops: Option<u64>,
    #[serde(default)]
    pub worst_case_cycles: Option<[f64; 3]>,
}

fn default_cores() -> usize {
    1
}
fn default_scheduler() -> SchedulerKind {
    SchedulerKind::Proposed
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            cores: default_cores(),
            scheduler: default_scheduler(),
            seed: 0,
            gops: None,
            worst_case_cycles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub cores: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub gop: GopSection,
    #[serde(default)]
    pub power: Option<PowerSection>,
    pub complexity: ComplexitySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text)
    }

    pub fn gop_structure(&self) -> Result<GopStructure> {
        let g = &self.gop;
        let dt = g.slot_duration.value()?;
        match g.preset.as_deref() {
            Some("ibpb") => {
                if !g.frames.is_empty() {
                    return Err(Error::InvalidConfig(
                        "a GOP preset cannot also list frames".into(),
                    ));
                }
                ibpb_gop(g.slices.unwrap_or(1), g.slots_per_frame.unwrap_or(1), dt)
            }
            Some(other) => Err(Error::InvalidConfig(format!(
                "unknown GOP preset {other:?}"
            ))),
            None => {
                let frames: Vec<FrameSpec> = g
                    .frames
                    .iter()
                    .map(|f| {
                        FrameSpec::new(
                            f.position,
                            f.frame_type,
                            g.slices.unwrap_or(f.slices),
                            f.parents.clone(),
                        )
                    })
                    .collect();
                let period = match (g.period_slots, g.slots_per_frame) {
                    (Some(p), _) => p,
                    (None, Some(s)) => s * frames.len(),
                    (None, None) => frames.len(),
                };
                let windows = g.window_lengths.clone().ok_or_else(|| {
                    Error::InvalidConfig("explicit GOPs need window_lengths".into())
                })?;
                build_gop_schedule(frames, windows, period, dt)
            }
        }
    }

    pub fn power_model(&self) -> Result<PowerModel> {
        match &self.power {
            Some(p) => PowerModel::new(p.frequencies_mhz.clone(), p.rho.clone(), p.sigma.clone()),
            None => Ok(PowerModel::default_table()),
        }
    }

    /// The empirical kind takes its samples from `trace`.
    pub fn complexity_model(&self, trace: Option<&Trace>) -> Result<ComplexityModel> {
        let c = &self.complexity;
        match c.kind.as_str() {
            "exponential" => ComplexityModel::new(c.mean_cycles, ComplexityKind::Exponential),
            "truncated" => {
                let ComplexityKind::Truncated { lower, upper } = ComplexityKind::DEFAULT_TRUNCATED
                else {
                    unreachable!()
                };
                ComplexityModel::new(
                    c.mean_cycles,
                    ComplexityKind::Truncated {
                        lower: c.lower.unwrap_or(lower),
                        upper: c.upper.unwrap_or(upper),
                    },
                )
            }
            "empirical" => {
                let trace = trace.ok_or_else(|| {
                    Error::InvalidConfig("the empirical complexity kind needs a trace".into())
                })?;
                ComplexityModel::empirical(trace.empirical()?, c.mean_cycles)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown complexity kind {other:?}"
            ))),
        }
    }

    pub fn params(&self) -> Result<LagrangianParams> {
        let s = &self.solver;
        LagrangianParams::new(s.lambda, s.rate_target, s.discount)?.with_power_scale(s.power_scale)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            mode: self.solver.mode,
        }
    }

    pub fn problem(&self, trace: Option<&Trace>) -> Result<SchedulingProblem> {
        Ok(SchedulingProblem::new(
            self.gop_structure()?,
            self.power_model()?,
            self.complexity_model(trace)?,
            self.params()?,
            self.sim.cores,
        )?
        .with_leakage(self.solver.leakage))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            scheduler: self.sim.scheduler,
            seed: self.sim.seed,
            run_gops: self.sim.gops,
            worst_case_cycles: self.sim.worst_case_cycles,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
