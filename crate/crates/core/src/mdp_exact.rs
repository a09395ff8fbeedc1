//! Exact joint MDP over full traffic states and joint actions. Only tractable
//! for tiny instances; used to check the frame-level solver.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::cost::{lagrangian_stage_cost, ProcessorChoice, ScheduledSlice};
use crate::error::{Error, Result};
use crate::problem::SchedulingProblem;
use crate::workload::{advance_traffic, DecodeOutcome, FrameRef, FrameStatus, TrafficState};

pub const DEFAULT_STATE_CAP: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction {
    pub frequencies: Vec<usize>,
    pub assignment: Vec<Option<FrameRef>>,
}

#[derive(Debug, Clone)]
struct ActionEntry {
    action: JointAction,
    cost: f64,
    transitions: Vec<(usize, f64)>,
}

/// Every traffic state of the instance: all buffer levels, with the
/// dependency bit fixed to 1 for frames that have no parents.
pub fn enumerate_states(problem: &SchedulingProblem, cap: u128) -> Result<Vec<TrafficState>> {
    let gop = &problem.gop;
    let options = |f: &FrameRef| -> Vec<FrameStatus> {
        let spec = gop.frame(f.position);
        let deps: &[bool] = if spec.parents.is_empty() {
            &[true]
        } else {
            &[false, true]
        };
        (0..=spec.num_slices)
            .flat_map(|x| {
                deps.iter().map(move |&r| FrameStatus {
                    frame: *f,
                    buffer: x,
                    deps_met: r,
                })
            })
            .collect()
    };
    let total: u128 = gop
        .current_frame_sets()
        .iter()
        .map(|set| {
            set.iter()
                .map(|f| options(f).len() as u128)
                .product::<u128>()
        })
        .sum();
    if total > cap {
        return Err(Error::StateSpaceTooLarge { states: total, cap });
    }
    let mut out = Vec::with_capacity(total as usize);
    for (phase, set) in gop.current_frame_sets().iter().enumerate() {
        let per: Vec<Vec<FrameStatus>> = set.iter().map(options).collect();
        let mut idx = vec![0usize; per.len()];
        loop {
            out.push(TrafficState {
                phase,
                frames: idx.iter().zip(&per).map(|(&i, o)| o[i]).collect(),
            });
            if !odometer(&mut idx, |d| per[d].len()) {
                break;
            }
        }
    }
    Ok(out)
}

/// Advances a mixed-radix counter (last digit fastest); false once it wraps.
fn odometer(idx: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < radix(d) {
            return true;
        }
        idx[d] = 0;
    }
    false
}

/// Feasible assignments in lexicographic order (processor 1 most
/// significant, idle before frames in set order).
fn feasible_assignments(state: &TrafficState, m: usize) -> Vec<Vec<Option<FrameRef>>> {
    let eligible: Vec<&FrameStatus> = state
        .frames
        .iter()
        .filter(|s| s.deps_met && s.buffer > 0)
        .collect();
    let mut out = Vec::new();
    let mut cur: Vec<Option<FrameRef>> = Vec::with_capacity(m);
    fn rec(
        eligible: &[&FrameStatus],
        m: usize,
        cur: &mut Vec<Option<FrameRef>>,
        out: &mut Vec<Vec<Option<FrameRef>>>,
    ) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(eligible, m, cur, out);
        cur.pop();
        for s in eligible {
            let used = cur.iter().filter(|c| **c == Some(s.frame)).count() as u32;
            if used < s.buffer {
                cur.push(Some(s.frame));
                rec(eligible, m, cur, out);
                cur.pop();
            }
        }
    }
    rec(&eligible, m, &mut cur, &mut out);
    out
}

fn frequency_vectors(num_freqs: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..num_freqs).map(move |f| {
                    let mut w = v.clone();
                    w.push(f);
                    w
                })
            })
            .collect();
    }
    out
}

fn check_constraints(state: &TrafficState, a: &JointAction) {
    for s in &state.frames {
        let n = a.assignment.iter().filter(|c| **c == Some(s.frame)).count() as u32;
        assert!(n <= s.buffer, "buffer constraint violated for {}", s.frame);
        assert!(
            n == 0 || s.deps_met,
            "dependency constraint violated for {}",
            s.frame
        );
    }
    assert_eq!(
        a.assignment.len(),
        a.frequencies.len(),
        "processor constraint violated"
    );
}

fn stage_cost(problem: &SchedulingProblem, state: &TrafficState, a: &JointAction) -> Result<f64> {
    let choices: Vec<ProcessorChoice> = a
        .frequencies
        .iter()
        .zip(&a.assignment)
        .map(|(&f, v)| ProcessorChoice {
            freq: f,
            slice: v.map(|v| {
                let t = problem.gop.frame(v.position).frame_type;
                debug_assert!(state.status(v).is_some());
                ScheduledSlice {
                    frame_type: t,
                    mean_cycles: problem.complexity.mean(t),
                }
            }),
        })
        .collect();
    lagrangian_stage_cost(
        &problem.power,
        &problem.params,
        problem.gop.slot_duration(),
        &choices,
    )
}

/// All decode outcomes of an action with their probabilities.
fn outcomes(problem: &SchedulingProblem, a: &JointAction) -> Vec<(DecodeOutcome, f64)> {
    let mut out = vec![(DecodeOutcome::none(a.assignment.len()), 1.0)];
    for (j, (&f, v)) in a.frequencies.iter().zip(&a.assignment).enumerate() {
        let Some(v) = v else { continue };
        let theta = problem.theta(f, problem.gop.frame(v.position).frame_type);
        let mut next = Vec::with_capacity(out.len() * 2);
        for (o, p) in out {
            let mut hit = o.clone();
            hit.per_processor[j] = Some(*v);
            next.push((o, p * (1.0 - theta)));
            next.push((hit, p * theta));
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone)]
pub struct JointMdp {
    states: Vec<TrafficState>,
    index: HashMap<TrafficState, usize>,
    actions: Vec<Vec<ActionEntry>>,
    discount: f64,
}

#[derive(Debug, Clone)]
pub struct JointValueFunction {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

impl JointMdp {
    pub fn build(problem: &SchedulingProblem, cap: u128) -> Result<Self> {
        let states = enumerate_states(problem, cap)?;
        let index: HashMap<TrafficState, usize> = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        let freqs = frequency_vectors(problem.num_frequencies(), problem.num_processors);
        let actions = states
            .par_iter()
            .map(|s| -> Result<Vec<ActionEntry>> {
                let mut entries = Vec::new();
                for fv in &freqs {
                    for asg in feasible_assignments(s, problem.num_processors) {
                        let action = JointAction {
                            frequencies: fv.clone(),
                            assignment: asg,
                        };
                        check_constraints(s, &action);
                        let cost = stage_cost(problem, s, &action)?;
                        let mut merged: Vec<(usize, f64)> = Vec::new();
                        for (o, p) in outcomes(problem, &action) {
                            if p == 0.0 {
                                continue;
                            }
                            let next = advance_traffic(s, &o, &problem.gop)?;
                            let ni = *index
                                .get(&next)
                                .expect("transition leaves the enumerated state space");
                            match merged.iter_mut().find(|(i, _)| *i == ni) {
                                Some(e) => e.1 += p,
                                None => merged.push((ni, p)),
                            }
                        }
                        entries.push(ActionEntry {
                            action,
                            cost,
                            transitions: merged,
                        });
                    }
                }
                Ok(entries)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(JointMdp {
            states,
            index,
            actions,
            discount: problem.params.discount,
        })
    }

    pub fn states(&self) -> &[TrafficState] {
        &self.states
    }

    pub fn state_index(&self, s: &TrafficState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn num_actions(&self, state: usize) -> usize {
        self.actions[state].len()
    }

    fn q_value(&self, e: &ActionEntry, v: &[f64]) -> f64 {
        e.cost + self.discount * e.transitions.iter().map(|&(n, p)| p * v[n]).sum::<f64>()
    }

    /// Index of the first action within tolerance of the minimum.
    fn argmin(&self, state: usize, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.actions[state].iter().enumerate() {
            let q = self.q_value(e, v);
            if i == 0 || q < best.1 - 1e-12 * best.1.abs().max(1.0) {
                best = (i, q);
            }
        }
        best
    }

    pub fn bellman(&self, v: &[f64]) -> Vec<f64> {
        (0..self.states.len())
            .into_par_iter()
            .map(|s| {
                self.actions[s]
                    .iter()
                    .map(|e| self.q_value(e, v))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    pub fn value_iteration(
        &self,
        tolerance: f64,
        max_iterations: usize,
    ) -> Result<JointValueFunction> {
        let mut v = vec![0.0; self.states.len()];
        let mut history = Vec::new();
        for n in 1..=max_iterations {
            let next = self.bellman(&v);
            let residual = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            history.push(residual);
            v = next;
            if residual < tolerance {
                return Ok(JointValueFunction {
                    values: v,
                    iterations: n,
                    residual,
                    residual_history: history,
                });
            }
        }
        Err(Error::NotConverged {
            iterations: max_iterations,
            residual: history.last().copied().unwrap_or(f64::INFINITY),
        })
    }

    pub fn value(&self, values: &JointValueFunction, s: &TrafficState) -> Option<f64> {
        self.state_index(s).map(|i| values.values[i])
    }

    pub fn greedy_action(&self, values: &JointValueFunction, state: usize) -> JointAction {
        let (i, _) = self.argmin(state, &values.values);
        self.actions[state][i].action.clone()
    }

    pub fn write_values_csv<W: Write>(
        &self,
        values: &JointValueFunction,
        mut w: W,
    ) -> std::io::Result<()> {
        writeln!(w, "phase,state,value")?;
        for (s, v) in self.states.iter().zip(&values.values) {
            let desc: Vec<String> = s
                .frames
                .iter()
                .map(|f| format!("{}:{}:{}", f.frame, f.buffer, u8::from(f.deps_met)))
                .collect();
            writeln!(w, "{},{},{v}", s.phase, desc.join(" "))?;
        }
        Ok(())
    }
}

pub fn joint_value_iteration(
    problem: &SchedulingProblem,
    tolerance: f64,
) -> Result<(JointMdp, JointValueFunction)> {
    let mdp = JointMdp::build(problem, DEFAULT_STATE_CAP)?;
    let v = mdp.value_iteration(tolerance, 100_000)?;
    Ok((mdp, v))
}

/// Exact `horizon`-step discounted cost-to-go from every state, by direct
/// recursion over actions and outcomes. Shares only the state enumeration,
/// the transition function and the stage cost with [`JointMdp`].
pub fn finite_horizon_oracle(
    problem: &SchedulingProblem,
    horizon: usize,
    cap: u128,
) -> Result<HashMap<TrafficState, f64>> {
    struct Oracle<'a> {
        problem: &'a SchedulingProblem,
        memo: HashMap<(TrafficState, usize), f64>,
    }

    impl Oracle<'_> {
        fn value(&mut self, s: &TrafficState, h: usize) -> Result<f64> {
            if h == 0 {
                return Ok(0.0);
            }
            if let Some(&v) = self.memo.get(&(s.clone(), h)) {
                return Ok(v);
            }
            let m = self.problem.num_processors;
            let nf = self.problem.num_frequencies();
            let mut best = f64::INFINITY;
            let mut freqs = vec![0usize; m];
            loop {
                let mut assign = vec![None; m];
                best = best.min(self.assign_rec(s, h, &freqs, &mut assign, 0)?);
                if !odometer(&mut freqs, |_| nf) {
                    break;
                }
            }
            self.memo.insert((s.clone(), h), best);
            Ok(best)
        }

        fn assign_rec(
            &mut self,
            s: &TrafficState,
            h: usize,
            freqs: &[usize],
            assign: &mut Vec<Option<FrameRef>>,
            j: usize,
        ) -> Result<f64> {
            if j == assign.len() {
                let a = JointAction {
                    frequencies: freqs.to_vec(),
                    assignment: assign.clone(),
                };
                let cost = stage_cost(self.problem, s, &a)?;
                let mut future = 0.0;
                self.outcome_rec(
                    s,
                    h,
                    &a,
                    &mut DecodeOutcome::none(assign.len()),
                    0,
                    1.0,
                    &mut future,
                )?;
                return Ok(cost + self.problem.params.discount * future);
            }
            assign[j] = None;
            let mut best = self.assign_rec(s, h, freqs, assign, j + 1)?;
            for st in &s.frames {
                let used = assign[..j].iter().filter(|a| **a == Some(st.frame)).count() as u32;
                if st.deps_met && used < st.buffer {
                    assign[j] = Some(st.frame);
                    best = best.min(self.assign_rec(s, h, freqs, assign, j + 1)?);
                }
            }
            assign[j] = None;
            Ok(best)
        }

        #[allow(clippy::too_many_arguments)]
        fn outcome_rec(
            &mut self,
            s: &TrafficState,
            h: usize,
            a: &JointAction,
            o: &mut DecodeOutcome,
            j: usize,
            p: f64,
            acc: &mut f64,
        ) -> Result<()> {
            if j == a.assignment.len() {
                let next = advance_traffic(s, o, &self.problem.gop)?;
                *acc += p * self.value(&next, h - 1)?;
                return Ok(());
            }
            match a.assignment[j] {
                None => self.outcome_rec(s, h, a, o, j + 1, p, acc),
                Some(v) => {
                    let t = self.problem.gop.frame(v.position).frame_type;
                    let theta = self.problem.theta(a.frequencies[j], t);
                    self.outcome_rec(s, h, a, o, j + 1, p * (1.0 - theta), acc)?;
                    o.per_processor[j] = Some(v);
                    self.outcome_rec(s, h, a, o, j + 1, p * theta, acc)?;
                    o.per_processor[j] = None;
                    Ok(())
                }
            }
        }
    }

    let states = enumerate_states(problem, cap)?;
    let mut oracle = Oracle {
        problem,
        memo: HashMap::new(),
    };
    states
        .into_iter()
        .map(|s| {
            let v = oracle.value(&s, horizon)?;
            Ok((s, v))
        })
        .collect()
}
