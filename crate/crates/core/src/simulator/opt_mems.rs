//! OPT-MEMS baseline: all cores share a clock that time-multiplexes two
//! adjacent frequencies so the worst-case remaining cycles finish exactly by
//! the deadline, under a fluid load-balancing model.

use crate::cost::PowerModel;
use crate::error::Result;
use crate::problem::SchedulingProblem;
use crate::workload::FrameId;

use super::metrics::{ProcessorSlotRecord, SimLog};
use super::trace::Trace;
use super::{FrameBook, Horizon};

/// Two adjacent frequencies and the fraction of time spent at the upper one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySplit {
    pub lower: usize,
    pub upper: usize,
    pub upper_fraction: f64,
}

impl FrequencySplit {
    pub fn effective_mhz(&self, frequencies_mhz: &[f64]) -> f64 {
        let a = self.upper_fraction;
        a * frequencies_mhz[self.upper] + (1.0 - a) * frequencies_mhz[self.lower]
    }
}

/// Splits a required frequency between its neighbours in the ascending
/// table, clamped to the table's range.
pub fn opt_mems_frequency_split(required_mhz: f64, frequencies_mhz: &[f64]) -> FrequencySplit {
    let n = frequencies_mhz.len();
    let single = |i| FrequencySplit {
        lower: i,
        upper: i,
        upper_fraction: 0.0,
    };
    if required_mhz <= frequencies_mhz[0] {
        return single(0);
    }
    if required_mhz >= frequencies_mhz[n - 1] {
        return single(n - 1);
    }
    let upper = frequencies_mhz
        .iter()
        .position(|&f| f >= required_mhz)
        .expect("below max");
    if frequencies_mhz[upper] == required_mhz {
        return single(upper);
    }
    let lower = upper - 1;
    let (lo, hi) = (frequencies_mhz[lower], frequencies_mhz[upper]);
    FrequencySplit {
        lower,
        upper,
        upper_fraction: (required_mhz - lo) / (hi - lo),
    }
}

fn split_power(
    power: &PowerModel,
    split: FrequencySplit,
    t: Option<crate::workload::FrameType>,
) -> f64 {
    let p = |i| power.rho(i) + t.map_or(0.0, |t| power.sigma(i, t));
    split.upper_fraction * p(split.upper) + (1.0 - split.upper_fraction) * p(split.lower)
}

pub(super) fn run(
    problem: &SchedulingProblem,
    trace: &Trace,
    horizon: &Horizon,
    worst_case_cycles: [f64; 3],
) -> Result<SimLog> {
    let gop = &problem.gop;
    let power = &problem.power;
    let freqs = power.frequencies_mhz();
    let m = problem.num_processors;
    let dt = gop.slot_duration();
    let mut book = FrameBook::default();
    // Cycles executed so far per frame, for the worst-case remainder.
    let mut executed: std::collections::HashMap<FrameId, f64> = std::collections::HashMap::new();
    let mut slots = Vec::new();

    for t in horizon.start_slot..horizon.end_slot {
        let current = book.arrive(gop, trace, t, horizon.run_gops)?;
        let mut ready: Vec<(i64, FrameId)> = current
            .iter()
            .filter(|id| book.frames[id].active() && book.deps_met(gop, **id))
            .map(|&id| {
                let f = &book.frames[&id];
                let deadline = if f.decode_deadline >= t {
                    f.decode_deadline
                } else {
                    f.display_deadline
                };
                (deadline, id)
            })
            .collect();
        ready.sort();

        // Demand bound over EDF prefixes.
        let mut required_hz: f64 = 0.0;
        let mut demand = 0.0;
        for &(deadline, id) in &ready {
            let f = &book.frames[&id];
            let actual: f64 = f.pending.iter().map(|w| w.remaining()).sum();
            let worst = worst_case_cycles[f.frame_type.index()] * f.num_slices as f64
                - executed.get(&id).copied().unwrap_or(0.0);
            demand += worst.max(actual);
            let seconds = (deadline - t + 1) as f64 * dt;
            required_hz = required_hz.max(demand / (m as f64 * seconds));
        }
        let split = opt_mems_frequency_split(required_hz / 1e6, freqs);
        let rate_hz = split.effective_mhz(freqs) * 1e6;

        // Fluid execution in EDF order with the actual slice cycles.
        let mut budget = m as f64 * rate_hz * dt;
        let mut energy = 0.0;
        let mut busy_core_time = 0.0;
        let mut first = None;
        let mut completed = 0u32;
        if !ready.is_empty() {
            for &(_, id) in &ready {
                if budget <= 0.0 {
                    break;
                }
                let mut used = 0.0;
                while budget > 0.0 {
                    let f = book.frames.get_mut(&id).expect("ready frame");
                    let Some(w) = f.pending.front_mut() else {
                        break;
                    };
                    let step = w.remaining().min(budget);
                    w.cycles_done += step;
                    budget -= step;
                    used += step;
                    if w.remaining() <= 1e-9 * w.cycles_total {
                        f.pending.pop_front();
                        book.complete_slice(id, t);
                        completed += 1;
                    } else {
                        break;
                    }
                }
                if used > 0.0 {
                    first.get_or_insert(id);
                    *executed.entry(id).or_insert(0.0) += used;
                    let core_time = used / rate_hz;
                    busy_core_time += core_time;
                    energy +=
                        core_time * split_power(power, split, Some(book.frames[&id].frame_type));
                }
            }
        }
        let idle_core_time = (m as f64 * dt - busy_core_time).max(0.0);
        energy += idle_core_time * power.rho(0);

        let records = (0..m)
            .map(|_| ProcessorSlotRecord {
                frequency_mhz: if first.is_some() {
                    split.effective_mhz(freqs)
                } else {
                    freqs[0]
                },
                frame: first,
                slices_completed: 0,
                busy_s: busy_core_time / m as f64,
            })
            .enumerate()
            .map(|(j, mut r)| {
                // Completions are pooled; attribute them to the first core.
                if j == 0 {
                    r.slices_completed = completed;
                }
                r
            })
            .collect();

        for id in book.expire(t) {
            executed.remove(&id);
        }
        slots.push(book.slot_record(t, records, energy));
    }

    Ok(SimLog {
        processors: m,
        slot_duration: dt,
        frames: book.frame_records(),
        measured_slots: horizon.measured_slots as usize,
        slots,
    })
}
