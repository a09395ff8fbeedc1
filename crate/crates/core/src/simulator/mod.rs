//! Time-slotted, trace-driven simulation of the two-level scheduler and the
//! baselines it is compared against.

pub mod metrics;
pub mod opt_mems;
mod proposed;
pub mod synth;
pub mod trace;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::first_level::policy::PolicySource;
use crate::problem::SchedulingProblem;
use crate::second_level::SliceWork;
use crate::workload::{frame_timing, FrameId, FrameRef, FrameType, GopStructure};

pub use metrics::{compute_metrics, FrameRecord, SimLog, SimMetrics, SlotRecord};
pub use synth::generate_synthetic_trace;
pub use trace::{SliceTraceRecord, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Proposed,
    ProposedCoordinated,
    OptMems,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [
        SchedulerKind::Proposed,
        SchedulerKind::ProposedCoordinated,
        SchedulerKind::OptMems,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Proposed => "proposed",
            SchedulerKind::ProposedCoordinated => "proposed_coordinated",
            SchedulerKind::OptMems => "opt_mems",
        }
    }

    pub fn needs_policy(self) -> bool {
        self != SchedulerKind::OptMems
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheduler {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    /// GOPs whose frames are measured. `None` runs as many as the trace
    /// covers, keeping the look-ahead frames the last GOP needs.
    pub run_gops: Option<u64>,
    /// Per-type worst-case slice cycles for the OPT-MEMS baseline; defaults
    /// to the trace maxima.
    pub worst_case_cycles: Option<[f64; 3]>,
}

impl SimConfig {
    pub fn new(scheduler: SchedulerKind, seed: u64) -> Self {
        SimConfig {
            scheduler,
            seed,
            run_gops: None,
            worst_case_cycles: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: SimMetrics,
    pub log: SimLog,
}

/// Runs one simulation. `policy` is ignored by OPT-MEMS and may be `None`
/// for it.
pub fn run_simulation(
    problem: &SchedulingProblem,
    config: &SimConfig,
    trace: &Trace,
    policy: Option<&dyn PolicySource>,
) -> Result<SimOutcome> {
    let horizon = Horizon::new(&problem.gop, trace, config.run_gops)?;
    let log = match config.scheduler {
        SchedulerKind::Proposed | SchedulerKind::ProposedCoordinated => {
            let policy = policy.ok_or_else(|| {
                Error::InvalidPolicy(format!("scheduler {} needs a policy", config.scheduler))
            })?;
            if policy.num_processors() != problem.num_processors {
                return Err(Error::InvalidPolicy(format!(
                    "policy is for {} processors, problem has {}",
                    policy.num_processors(),
                    problem.num_processors
                )));
            }
            let coordinated = config.scheduler == SchedulerKind::ProposedCoordinated;
            proposed::run(problem, trace, policy, &horizon, config.seed, coordinated)?
        }
        SchedulerKind::OptMems => {
            let wc = match config.worst_case_cycles {
                Some(w) => w,
                None => {
                    let m = trace.worst_case_cycles();
                    let mut w = [0.0; 3];
                    for t in FrameType::ALL {
                        w[t.index()] =
                            m[t.index()].map_or(problem.complexity.mean(t), |c| c as f64);
                    }
                    w
                }
            };
            opt_mems::run(problem, trace, &horizon, wc)?
        }
    };
    Ok(SimOutcome {
        metrics: compute_metrics(&log),
        log,
    })
}

/// GOPs a trace must cover to measure `run_gops` GOPs, including the
/// look-ahead frames that become current before the last one is displayed.
pub fn trace_gops_needed(gop: &GopStructure, run_gops: u64) -> u64 {
    Horizon::span(gop, run_gops).1
}

/// Slot range of a run and the GOPs it touches.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Horizon {
    pub run_gops: u64,
    /// Earliest arrival slot of a GOP 0 frame; may be negative.
    pub start_slot: i64,
    pub measured_slots: i64,
    pub end_slot: i64,
}

impl Horizon {
    fn new(gop: &GopStructure, trace: &Trace, run_gops: Option<u64>) -> Result<Self> {
        let available = trace.num_gops();
        let run_gops = match run_gops {
            Some(r) => r,
            None => {
                let mut r = 0;
                while Horizon::span(gop, r + 1).1 <= available {
                    r += 1;
                }
                r
            }
        };
        let (end_slot, needed) = Horizon::span(gop, run_gops);
        if needed > available {
            return Err(Error::TraceUnderrun {
                gop: available,
                position: 1,
            });
        }
        let start_slot = gop
            .frames()
            .iter()
            .map(|f| frame_timing(gop, FrameRef::new(0, f.position)).arrival_slot)
            .min()
            .unwrap_or(0)
            .min(0);
        Ok(Horizon {
            run_gops,
            start_slot,
            measured_slots: run_gops as i64 * gop.period_slots() as i64,
            end_slot,
        })
    }

    /// Slot after the last measured display deadline, and the number of GOPs
    /// whose frames are current before it.
    fn span(gop: &GopStructure, run_gops: u64) -> (i64, u64) {
        let period = gop.period_slots() as i64;
        let mut end = run_gops as i64 * period;
        if run_gops > 0 {
            for f in gop.frames() {
                let t = frame_timing(gop, FrameRef::new(0, f.position));
                end = end.max((run_gops as i64 - 1) * period + t.display_deadline + 1);
            }
        }
        let mut needed = 0u64;
        for t in 0..end {
            let (g, _, set) = gop.current_frame_set_at(t);
            for f in set {
                needed = needed.max((g + f.gop_offset as i64 + 1).max(0) as u64);
            }
        }
        (end, needed)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LiveFrame {
    pub id: FrameId,
    pub frame_type: FrameType,
    pub num_slices: u32,
    pub decode_deadline: i64,
    pub display_deadline: i64,
    pub pending: VecDeque<SliceWork>,
    pub in_flight: u32,
    pub decoded: u32,
    pub completed_slot: Option<i64>,
    pub expired: bool,
    pub measured: bool,
}

impl LiveFrame {
    pub fn undecoded(&self) -> u32 {
        self.num_slices - self.decoded
    }

    pub fn done(&self) -> bool {
        self.decoded == self.num_slices
    }

    pub fn active(&self) -> bool {
        !self.expired && !self.done()
    }
}

/// Frames seen so far, their slice queues and the slice counters.
#[derive(Debug, Default)]
pub(crate) struct FrameBook {
    pub frames: BTreeMap<FrameId, LiveFrame>,
    pub arrived: u64,
    pub decoded: u64,
    pub dropped: u64,
}

impl FrameBook {
    /// Admits every frame current at slot `t` that has not been seen yet;
    /// returns the current set as absolute ids.
    pub fn arrive(
        &mut self,
        gop: &GopStructure,
        trace: &Trace,
        t: i64,
        run_gops: u64,
    ) -> Result<Vec<FrameId>> {
        let (g, _, set) = gop.current_frame_set_at(t);
        let period = gop.period_slots() as i64;
        let mut current = Vec::with_capacity(set.len());
        for f in set {
            let abs = g + f.gop_offset as i64;
            if abs < 0 {
                continue;
            }
            let id = FrameId {
                gop: abs as u64,
                position: f.position,
            };
            current.push(id);
            if self.frames.contains_key(&id) {
                continue;
            }
            let spec = gop.frame(f.position);
            let tf = trace
                .frame(id.gop, id.position)
                .ok_or(Error::TraceUnderrun {
                    gop: id.gop,
                    position: id.position,
                })?;
            if tf.frame_type != spec.frame_type || tf.cycles.len() != spec.num_slices as usize {
                return Err(Error::InvalidTrace(format!(
                    "frame {id} is {} with {} slices in the trace, expected {} with {}",
                    tf.frame_type,
                    tf.cycles.len(),
                    spec.frame_type,
                    spec.num_slices
                )));
            }
            let timing = frame_timing(gop, FrameRef::new(0, f.position));
            let shift = id.gop as i64 * period;
            self.frames.insert(
                id,
                LiveFrame {
                    id,
                    frame_type: spec.frame_type,
                    num_slices: spec.num_slices,
                    decode_deadline: timing.decode_deadline + shift,
                    display_deadline: timing.display_deadline + shift,
                    pending: tf
                        .cycles
                        .iter()
                        .enumerate()
                        .map(|(s, &c)| SliceWork::fresh(s as u32, c as f64))
                        .collect(),
                    in_flight: 0,
                    decoded: 0,
                    completed_slot: None,
                    expired: false,
                    measured: id.gop < run_gops,
                },
            );
            self.arrived += spec.num_slices as u64;
        }
        Ok(current)
    }

    /// Whether every parent of `id` has been fully decoded.
    pub fn deps_met(&self, gop: &GopStructure, id: FrameId) -> bool {
        gop.frame(id.position).parents.iter().all(|p| {
            let parent = FrameId {
                gop: id.gop + p.gop_offset as u64,
                position: p.position,
            };
            self.frames.get(&parent).is_some_and(LiveFrame::done)
        })
    }

    pub fn complete_slice(&mut self, id: FrameId, t: i64) {
        let f = self.frames.get_mut(&id).expect("decoding a known frame");
        f.decoded += 1;
        self.decoded += 1;
        if f.done() {
            f.completed_slot = Some(t);
        }
    }

    /// Drops the undecoded slices of frames whose display deadline is `t`;
    /// returns the ids dropped so in-flight work can be discarded.
    pub fn expire(&mut self, t: i64) -> Vec<FrameId> {
        let mut out = Vec::new();
        for f in self.frames.values_mut() {
            if !f.expired && f.display_deadline <= t {
                f.expired = true;
                if !f.done() {
                    self.dropped += f.undecoded() as u64;
                    f.pending.clear();
                    f.in_flight = 0;
                    out.push(f.id);
                }
            }
        }
        out
    }

    pub fn pending(&self) -> u64 {
        self.frames
            .values()
            .filter(|f| f.active())
            .map(|f| f.undecoded() as u64)
            .sum()
    }

    pub fn slot_record(
        &self,
        slot: i64,
        processors: Vec<metrics::ProcessorSlotRecord>,
        energy_j: f64,
    ) -> SlotRecord {
        let pending = self.pending();
        assert_eq!(
            self.arrived,
            self.decoded + self.dropped + pending,
            "slice conservation violated at slot {slot}"
        );
        SlotRecord {
            slot,
            processors,
            energy_j,
            arrived_slices: self.arrived,
            decoded_slices: self.decoded,
            dropped_slices: self.dropped,
            pending_slices: pending,
        }
    }

    pub fn frame_records(&self) -> Vec<FrameRecord> {
        self.frames
            .values()
            .map(|f| FrameRecord {
                id: f.id,
                frame_type: f.frame_type,
                measured: f.measured,
                num_slices: f.num_slices,
                decoded_slices: f.decoded,
                display_deadline: f.display_deadline,
                completed_slot: f.completed_slot,
            })
            .collect()
    }
}
