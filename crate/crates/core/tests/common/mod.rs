#![allow(dead_code)]

use proptest::prelude::*;
use slicesched::cost::{LagrangianParams, PowerModel};
use slicesched::problem::SchedulingProblem;
use slicesched::stochastic::{ComplexityKind, ComplexityModel};
use slicesched::workload::{build_gop_schedule, FrameRef, FrameSpec, FrameType, GopStructure};

/// Raw material for a GOP; not every draw builds.
#[derive(Debug, Clone)]
pub struct GopDraw {
    pub types: Vec<FrameType>,
    pub parents: Vec<Vec<FrameRef>>,
    pub slices: Vec<u32>,
    pub window: u32,
    pub slots_per_frame: usize,
}

impl GopDraw {
    pub fn build(&self) -> Option<GopStructure> {
        let frames = self
            .types
            .iter()
            .enumerate()
            .map(|(i, &t)| FrameSpec::new(i as u32 + 1, t, self.slices[i], self.parents[i].clone()))
            .collect();
        let period = self.types.len() * self.slots_per_frame;
        build_gop_schedule(frames, vec![self.window; period], period, 0.01).ok()
    }
}

/// GOPs of up to `max_frames` frames and `max_slices` slices per frame. The
/// first frame is intra; every other non-intra frame references at least one
/// earlier frame, and B frames may reference the next GOP's first frame.
pub fn gop_strategy(max_frames: usize, max_slices: u32) -> impl Strategy<Value = GopStructure> {
    (1..=max_frames)
        .prop_flat_map(move |k| {
            (
                proptest::collection::vec(0..3usize, k),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), k), k),
                proptest::collection::vec(any::<bool>(), k),
                proptest::collection::vec(1..=max_slices, k),
                0..k as u32,
                1..=2usize,
            )
        })
        .prop_filter_map(
            "GOP does not build",
            |(kinds, edges, forward, slices, window, spf)| {
                let k = kinds.len();
                let mut types = Vec::with_capacity(k);
                let mut parents = Vec::with_capacity(k);
                for i in 0..k {
                    let t = if i == 0 {
                        FrameType::I
                    } else {
                        FrameType::ALL[kinds[i]]
                    };
                    let mut ps: Vec<FrameRef> = if t == FrameType::I {
                        vec![]
                    } else {
                        (0..i)
                            .filter(|&j| edges[i][j])
                            .map(|j| FrameRef::new(0, j as u32 + 1))
                            .collect()
                    };
                    if t != FrameType::I && ps.is_empty() {
                        ps.push(FrameRef::new(0, 1));
                    }
                    if t == FrameType::B && forward[i] {
                        ps.push(FrameRef::new(1, 1));
                    }
                    types.push(t);
                    parents.push(ps);
                }
                GopDraw {
                    types,
                    parents,
                    slices,
                    window,
                    slots_per_frame: spf,
                }
                .build()
            },
        )
}

pub fn problem(gop: GopStructure, lambda: f64, processors: usize) -> SchedulingProblem {
    SchedulingProblem::new(
        gop,
        PowerModel::default_table(),
        ComplexityModel::new([6e6, 5e6, 4e6], ComplexityKind::Exponential).unwrap(),
        LagrangianParams::new(lambda, 0.0, 0.9).unwrap(),
        processors,
    )
    .unwrap()
}

/// Runs a short simulation of `problem` under `policy` and checks slice
/// conservation, deadline and dependency order, and seed determinism.
pub fn check_simulation(
    problem: &SchedulingProblem,
    policy: &dyn slicesched::first_level::policy::PolicySource,
    kind: slicesched::simulator::SchedulerKind,
    seed: u64,
) -> Result<(), String> {
    use slicesched::simulator::{
        generate_synthetic_trace, run_simulation, trace_gops_needed, SimConfig, Trace,
    };
    use std::collections::HashMap;

    let gops = 3;
    let records = generate_synthetic_trace(
        &problem.gop,
        &problem.complexity,
        trace_gops_needed(&problem.gop, gops),
        seed,
    );
    let trace = Trace::new(records).map_err(|e| e.to_string())?;
    let mut config = SimConfig::new(kind, seed);
    config.run_gops = Some(gops);
    let run = || run_simulation(problem, &config, &trace, Some(policy)).map_err(|e| e.to_string());
    let a = run()?;
    let b = run()?;
    if a.log != b.log {
        return Err("same seed gave different logs".into());
    }

    let mut prev = None;
    for s in &a.log.slots {
        if s.arrived_slices != s.decoded_slices + s.dropped_slices + s.pending_slices {
            return Err(format!("slot {}: slices not conserved", s.slot));
        }
        if s.processors.len() != problem.num_processors {
            return Err(format!("slot {}: wrong processor count", s.slot));
        }
        if !(s.energy_j.is_finite() && s.energy_j > 0.0) {
            return Err(format!("slot {}: energy {}", s.slot, s.energy_j));
        }
        if let Some((d, x)) = prev {
            if s.decoded_slices < d || s.dropped_slices < x {
                return Err(format!("slot {}: cumulative counters went down", s.slot));
            }
        }
        prev = Some((s.decoded_slices, s.dropped_slices));
    }

    let frames: HashMap<_, _> = a.log.frames.iter().map(|f| (f.id, f)).collect();
    for f in &a.log.frames {
        if f.decoded_slices > f.num_slices {
            return Err(format!("frame {} over-decoded", f.id));
        }
        if let Some(done) = f.completed_slot {
            if !f.fully_decoded() || done > f.display_deadline {
                return Err(format!(
                    "frame {} completed at {done} past {}",
                    f.id, f.display_deadline
                ));
            }
            for p in &problem.gop.frame(f.id.position).parents {
                let pid = slicesched::workload::FrameId {
                    gop: f.id.gop + p.gop_offset as u64,
                    position: p.position,
                };
                if let Some(parent) = frames.get(&pid) {
                    match parent.completed_slot {
                        Some(pd) if pd < done => {}
                        _ => return Err(format!("frame {} decoded before parent {pid}", f.id)),
                    }
                }
            }
        }
    }
    Ok(())
}

/// Every stored action vector has one entry per processor, valid frequency
/// indices, and schedules no more slices than are buffered and unblocked.
pub fn check_policy_feasible(
    problem: &SchedulingProblem,
    policy: &slicesched::first_level::policy::PolicySet,
) -> Result<(), String> {
    use slicesched::first_level::policy::PolicySource;

    let nf = problem.num_frequencies();
    for f in problem.gop.frames() {
        for phase in 0..problem.gop.period_slots() {
            for x in 0..=f.num_slices {
                for r in [false, true] {
                    let Some(a) = policy.actions(f.position, phase, x, r) else {
                        continue;
                    };
                    let scheduled = a.iter().filter(|a| a.scheduled).count() as u32;
                    let limit = if r { x } else { 0 };
                    if a.len() != problem.num_processors
                        || a.iter().any(|a| a.freq >= nf)
                        || scheduled > limit
                    {
                        return Err(format!(
                            "frame {} phase {phase} x {x} r {r}: {a:?}",
                            f.position
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}
