//! Frame-level scheduler: one value function per GOP frame, coupled through
//! the value a parent unlocks for its children when it drains, solved by
//! synchronous value iteration.

pub mod complexity;
pub mod decomposition;
pub mod policy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::SchedulingProblem;
use crate::workload::FrameRef;

use decomposition::{
    decomposed_update, monolithic_update, FrameStageProblem, DEFAULT_MONOLITHIC_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    #[default]
    Decomposed,
    Monolithic,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mode: UpdateMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-6,
            max_iterations: 500,
            mode: UpdateMode::Decomposed,
        }
    }
}

/// Value of one frame over (phase, x, r); zero wherever the frame is not
/// current, its buffer is empty, or it is blocked.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameValueFunction {
    pub position: u32,
    pub num_slices: u32,
    period: usize,
    values: Vec<f64>,
}

impl FrameValueFunction {
    fn zeros(position: u32, num_slices: u32, period: usize) -> Self {
        FrameValueFunction {
            position,
            num_slices,
            period,
            values: vec![0.0; period * (num_slices as usize + 1)],
        }
    }

    fn idx(&self, phase: usize, x: u32) -> usize {
        phase * (self.num_slices as usize + 1) + x as usize
    }

    pub fn value(&self, phase: usize, x: u32, deps_met: bool) -> f64 {
        if !deps_met {
            return 0.0;
        }
        self.values[self.idx(phase, x)]
    }

    pub fn period(&self) -> usize {
        self.period
    }
}

#[derive(Debug, Clone)]
pub struct FrameValues {
    pub frames: Vec<FrameValueFunction>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Candidate (f, y) evaluations performed across all iterations.
    pub evaluated_candidates: u64,
}

impl FrameValues {
    pub fn frame(&self, position: u32) -> &FrameValueFunction {
        &self.frames[position as usize - 1]
    }
}

/// Where a frame's value flows after one slot from a given phase.
#[derive(Debug, Clone)]
struct Continuation {
    next_phase: usize,
    persists: bool,
    /// Children whose copy is current in the next phase.
    children: Vec<u32>,
}

fn continuation(problem: &SchedulingProblem, position: u32, phase: usize) -> Option<Continuation> {
    let gop = &problem.gop;
    let offset = gop.member_offset(phase, position)?;
    let next_phase = gop.next_phase(phase);
    let persists = gop.persists(phase, FrameRef::new(offset, position));
    let children = gop
        .children(position)
        .iter()
        .filter(|c| {
            let child_offset = offset.checked_sub(c.gop_back);
            let carried = child_offset.and_then(|o| gop.carry_offset(phase, o));
            carried.is_some() && gop.member_offset(next_phase, c.position) == carried
        })
        .map(|c| c.position)
        .collect();
    Some(Continuation {
        next_phase,
        persists,
        children,
    })
}

/// The stage problem of frame `position` in state (phase, x, r = 1) given the
/// current value estimates.
pub fn stage_problem(
    problem: &SchedulingProblem,
    values: &[FrameValueFunction],
    position: u32,
    phase: usize,
    x: u32,
) -> Option<FrameStageProblem> {
    let cont = continuation(problem, position, phase)?;
    let gamma = problem.params.discount;
    let unlocked: f64 = cont
        .children
        .iter()
        .map(|&c| {
            let v = &values[c as usize - 1];
            v.value(cont.next_phase, v.num_slices, true)
        })
        .sum();
    let me = &values[position as usize - 1];
    let future = (0..=x)
        .map(|left| {
            let own = if cont.persists {
                me.value(cont.next_phase, left, true)
            } else {
                0.0
            };
            gamma * (own + if left == 0 { unlocked } else { 0.0 })
        })
        .collect();
    Some(FrameStageProblem::new(
        problem,
        problem.gop.frame(position).frame_type,
        x,
        future,
    ))
}

fn sweep(
    problem: &SchedulingProblem,
    current: &[FrameValueFunction],
    mode: UpdateMode,
) -> Result<(Vec<FrameValueFunction>, u64)> {
    let period = problem.gop.period_slots();
    let jobs: Vec<(u32, usize)> = problem
        .gop
        .frames()
        .iter()
        .flat_map(|f| (0..period).map(move |p| (f.position, p)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(pos, phase)| -> Result<(Vec<f64>, u64)> {
            let l = problem.gop.frame(pos).num_slices;
            let mut row = vec![0.0; l as usize + 1];
            let mut ops = 0;
            if problem.gop.member_offset(phase, pos).is_some() {
                for x in 1..=l {
                    let sp = stage_problem(problem, current, pos, phase, x).expect("member");
                    row[x as usize] = match mode {
                        UpdateMode::Decomposed => decomposed_update(&sp, &mut ops),
                        UpdateMode::Monolithic => monolithic_update(&sp, DEFAULT_MONOLITHIC_CAP)?,
                    };
                }
            }
            Ok((row, ops))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut next: Vec<FrameValueFunction> = problem
        .gop
        .frames()
        .iter()
        .map(|f| FrameValueFunction::zeros(f.position, f.num_slices, period))
        .collect();
    let mut ops = 0;
    for (&(pos, phase), (row, o)) in jobs.iter().zip(rows) {
        let v = &mut next[pos as usize - 1];
        let start = v.idx(phase, 0);
        v.values[start..start + row.len()].copy_from_slice(&row);
        ops += o;
    }
    Ok((next, ops))
}

pub fn frame_value_iteration(
    problem: &SchedulingProblem,
    options: &SolverOptions,
) -> Result<FrameValues> {
    let period = problem.gop.period_slots();
    let mut current: Vec<FrameValueFunction> = problem
        .gop
        .frames()
        .iter()
        .map(|f| FrameValueFunction::zeros(f.position, f.num_slices, period))
        .collect();
    let mut history = Vec::new();
    let mut total_ops = 0;
    for n in 1..=options.max_iterations {
        let (next, ops) = sweep(problem, &current, options.mode)?;
        total_ops += ops;
        let residual = next
            .iter()
            .zip(&current)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        history.push(residual);
        current = next;
        if residual < options.tolerance {
            return Ok(FrameValues {
                frames: current,
                iterations: n,
                residual,
                residual_history: history,
                evaluated_candidates: total_ops,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iterations,
        residual: history.last().copied().unwrap_or(f64::INFINITY),
    })
}
