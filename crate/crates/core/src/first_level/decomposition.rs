//! One Bellman update for one frame state, either by exhaustive joint
//! minimisation over all processors or processor by processor.
//!
//! The per-processor chain conditions processor `j`'s choice on the number of
//! upstream processors that scheduled this frame (`s`) and how many of those
//! finished a slice (`k`). Tracking `s` keeps the buffer constraint exact.

use crate::error::{Error, Result};
use crate::problem::SchedulingProblem;
use crate::workload::FrameType;

/// Inputs of one frame-state update.
#[derive(Debug, Clone)]
pub struct FrameStageProblem {
    pub frame_type: FrameType,
    /// Undecoded slices at the start of the slot.
    pub x: u32,
    pub processors: usize,
    /// Per frequency: processor cost when idle for this frame, and when
    /// decoding one of its slices.
    pub costs: Vec<[f64; 2]>,
    pub theta: Vec<f64>,
    /// Discounted continuation value indexed by the remaining buffer x'.
    pub future: Vec<f64>,
}

impl FrameStageProblem {
    pub fn new(
        problem: &SchedulingProblem,
        frame_type: FrameType,
        x: u32,
        future: Vec<f64>,
    ) -> Self {
        assert_eq!(future.len(), x as usize + 1);
        let nf = problem.num_frequencies();
        FrameStageProblem {
            frame_type,
            x,
            processors: problem.num_processors,
            costs: (0..nf)
                .map(|f| {
                    [
                        problem.frame_processor_cost(f, frame_type, false),
                        problem.frame_processor_cost(f, frame_type, true),
                    ]
                })
                .collect(),
            theta: (0..nf).map(|f| problem.theta(f, frame_type)).collect(),
            future,
        }
    }

    pub fn num_frequencies(&self) -> usize {
        self.costs.len()
    }
}

/// Values of the processor-`j` stage, `W_j(s, k)`, for `0 <= k <= s <= s_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    /// 1-based processor index; `processors + 1` is the terminal table.
    pub processor: usize,
    pub max_scheduled: u32,
    values: Vec<f64>,
}

fn tri(s: u32, k: u32) -> usize {
    (s * (s + 1) / 2 + k) as usize
}

impl ConditionalTable {
    pub fn get(&self, scheduled: u32, decoded: u32) -> f64 {
        debug_assert!(decoded <= scheduled && scheduled <= self.max_scheduled);
        self.values[tri(scheduled, decoded)]
    }

    /// The table after the last processor: only the continuation value.
    pub fn terminal(problem: &FrameStageProblem) -> Self {
        let max_s = (problem.processors as u32).min(problem.x);
        let mut values = vec![0.0; tri(max_s, max_s) + 1];
        for s in 0..=max_s {
            for k in 0..=s {
                values[tri(s, k)] = problem.future[(problem.x - k) as usize];
            }
        }
        ConditionalTable {
            processor: problem.processors + 1,
            max_scheduled: max_s,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageChoice {
    pub value: f64,
    pub freq: usize,
    pub scheduled: bool,
}

fn better(candidate: f64, best: f64) -> bool {
    candidate < best - 1e-12 * best.abs().max(1.0)
}

/// Minimises over this processor's (frequency, schedule bit), lowest
/// frequency and idle first on ties. `ops` counts evaluated candidates.
pub fn stage_argmin(
    problem: &FrameStageProblem,
    downstream: &ConditionalTable,
    scheduled: u32,
    decoded: u32,
    ops: &mut u64,
) -> StageChoice {
    let can_schedule = scheduled < problem.x;
    let mut best: Option<StageChoice> = None;
    for f in 0..problem.num_frequencies() {
        for y in [false, true] {
            if y && !can_schedule {
                continue;
            }
            *ops += 1;
            let cont = if y {
                let th = problem.theta[f];
                (1.0 - th) * downstream.get(scheduled + 1, decoded)
                    + th * downstream.get(scheduled + 1, decoded + 1)
            } else {
                downstream.get(scheduled, decoded)
            };
            let v = problem.costs[f][usize::from(y)] + cont;
            if best.is_none_or(|b| better(v, b.value)) {
                best = Some(StageChoice {
                    value: v,
                    freq: f,
                    scheduled: y,
                });
            }
        }
    }
    best.expect("at least one frequency")
}

fn build_table(
    problem: &FrameStageProblem,
    j: usize,
    downstream: &ConditionalTable,
    ops: &mut u64,
) -> ConditionalTable {
    let max_s = (j as u32 - 1).min(problem.x);
    let mut values = vec![0.0; tri(max_s, max_s) + 1];
    for s in 0..=max_s {
        for k in 0..=s {
            values[tri(s, k)] = stage_argmin(problem, downstream, s, k, ops).value;
        }
    }
    ConditionalTable {
        processor: j,
        max_scheduled: max_s,
        values,
    }
}

/// Processor `M`'s stage at one conditioning point.
pub fn sub_value_update_last(
    problem: &FrameStageProblem,
    scheduled: u32,
    decoded: u32,
) -> StageChoice {
    stage_argmin(
        problem,
        &ConditionalTable::terminal(problem),
        scheduled,
        decoded,
        &mut 0,
    )
}

/// Table of processor `j`'s stage (`2 <= j < M`) from processor `j+1`'s.
pub fn sub_value_update_mid(
    problem: &FrameStageProblem,
    j: usize,
    downstream: &ConditionalTable,
) -> ConditionalTable {
    assert!(j >= 2 && j < problem.processors && downstream.processor == j + 1);
    build_table(problem, j, downstream, &mut 0)
}

/// Processor 1's stage: the updated value of the frame state.
pub fn sub_value_update_first(
    problem: &FrameStageProblem,
    downstream: &ConditionalTable,
) -> StageChoice {
    assert_eq!(downstream.processor, 2);
    stage_argmin(problem, downstream, 0, 0, &mut 0)
}

/// Tables for processors `2..=M` and the terminal one, indexed by processor
/// (entries 0 and 1 unused).
pub fn conditional_tables(
    problem: &FrameStageProblem,
    ops: &mut u64,
) -> Vec<Option<ConditionalTable>> {
    let m = problem.processors;
    let mut tables = vec![None; m + 2];
    tables[m + 1] = Some(ConditionalTable::terminal(problem));
    for j in (2..=m).rev() {
        let t = build_table(problem, j, tables[j + 1].as_ref().unwrap(), ops);
        tables[j] = Some(t);
    }
    tables
}

/// Updated value via the processor chain.
pub fn decomposed_update(problem: &FrameStageProblem, ops: &mut u64) -> f64 {
    let tables = conditional_tables(problem, ops);
    stage_argmin(problem, tables[2].as_ref().unwrap(), 0, 0, ops).value
}

pub const DEFAULT_MONOLITHIC_CAP: u128 = 1 << 24;

/// Updated value by minimising jointly over every processor's (f, y) and
/// taking the expectation over every departure pattern.
pub fn monolithic_update(problem: &FrameStageProblem, cap: u128) -> Result<f64> {
    let m = problem.processors;
    let nf = problem.num_frequencies();
    let work = (2 * nf as u128).pow(m as u32) * (1u128 << m);
    if work > cap {
        return Err(Error::StateSpaceTooLarge { states: work, cap });
    }
    let mut best = f64::INFINITY;
    let mut choice = vec![(0usize, false); m];
    loop {
        let scheduled: Vec<f64> = choice
            .iter()
            .filter(|c| c.1)
            .map(|c| problem.theta[c.0])
            .collect();
        if scheduled.len() as u32 <= problem.x {
            let cost: f64 = choice
                .iter()
                .map(|&(f, y)| problem.costs[f][usize::from(y)])
                .sum();
            let mut expect = 0.0;
            for mask in 0u32..(1 << scheduled.len()) {
                let mut p = 1.0;
                for (i, th) in scheduled.iter().enumerate() {
                    p *= if mask >> i & 1 == 1 { *th } else { 1.0 - th };
                }
                expect += p * problem.future[(problem.x - mask.count_ones()) as usize];
            }
            best = best.min(cost + expect);
        }
        // Next joint choice; (f, y) pairs ordered f-major.
        let mut d = m;
        loop {
            if d == 0 {
                return Ok(best);
            }
            d -= 1;
            let (f, y) = choice[d];
            if !y {
                choice[d] = (f, true);
                break;
            }
            if f + 1 < nf {
                choice[d] = (f + 1, false);
                break;
            }
            choice[d] = (0, false);
        }
    }
}

/// `(monolithic, decomposed)` one-step updates from the same inputs.
pub fn decomposition_gap(problem: &FrameStageProblem) -> Result<(f64, f64)> {
    if problem.x == 0 {
        return Ok((0.0, 0.0));
    }
    let mono = monolithic_update(problem, DEFAULT_MONOLITHIC_CAP)?;
    let dec = decomposed_update(problem, &mut 0);
    assert!(
        dec <= mono + 1e-12 * mono.abs().max(1.0),
        "processor chain value {dec} exceeds joint minimum {mono}"
    );
    Ok((mono, dec))
}

/// Expected upstream departures, rounded down.
pub fn expected_upstream_departures(scheduled_thetas: &[f64]) -> u32 {
    (scheduled_thetas.iter().sum::<f64>() + 1e-9).floor() as u32
}
