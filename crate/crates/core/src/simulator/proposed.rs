//! Slot loop for the policy-driven scheduler, with per-core or shared clocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::first_level::policy::{PolicySource, ProcAction};
use crate::problem::SchedulingProblem;
use crate::second_level::{
    apply_stickiness, coordinate_frequencies, edf_assign, FrameClaim, InFlight, ProcessorRun,
    ProcessorState,
};
use crate::workload::FrameId;

use super::metrics::{ProcessorSlotRecord, SimLog};
use super::trace::Trace;
use super::{FrameBook, Horizon};

pub(super) fn run(
    problem: &SchedulingProblem,
    trace: &Trace,
    policy: &dyn PolicySource,
    horizon: &Horizon,
    seed: u64,
    coordinated: bool,
) -> Result<SimLog> {
    let gop = &problem.gop;
    let power = &problem.power;
    let m = problem.num_processors;
    let dt = gop.slot_duration();
    let num_freq = power.num_frequencies();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut book = FrameBook::default();
    let mut procs = vec![ProcessorState::default(); m];
    let mut slots = Vec::new();

    for t in horizon.start_slot..horizon.end_slot {
        let current = book.arrive(gop, trace, t, horizon.run_gops)?;
        let phase = gop.current_frame_set_at(t).1;

        let mut claims = Vec::new();
        for &id in &current {
            let f = &book.frames[&id];
            if !f.active() {
                continue;
            }
            let deps_met = book.deps_met(gop, id);
            let actions = policy
                .actions(id.position, phase, f.undecoded(), deps_met)
                .unwrap_or_else(|| vec![ProcAction::IDLE_MIN; m]);
            if actions.len() != m {
                return Err(Error::InvalidPolicy(format!(
                    "frame {} has {} actions for {m} processors",
                    id.position,
                    actions.len()
                )));
            }
            if let Some(a) = actions.iter().find(|a| a.freq >= num_freq) {
                return Err(Error::InvalidPolicy(format!(
                    "frequency index {} out of range for {num_freq} frequencies",
                    a.freq
                )));
            }
            claims.push(FrameClaim {
                frame: id,
                decode_deadline: f.decode_deadline,
                buffer: f.undecoded(),
                deps_met,
                actions,
            });
        }

        let proposed = edf_assign(&claims, m, &mut rng);
        let mut assignment = apply_stickiness(&procs, &proposed, &claims);
        if coordinated {
            assignment = coordinate_frequencies(&assignment);
        }

        // Start each busy processor on its carried slice or the frame's next.
        let mut runs = Vec::with_capacity(m);
        for (j, a) in assignment.processors.iter().enumerate() {
            let carried = procs[j].in_flight.filter(|inf| Some(inf.frame) == a.frame);
            let work = match (a.frame, carried) {
                (_, Some(inf)) => Some(inf.work),
                (Some(id), None) => {
                    let f = book.frames.get_mut(&id).expect("claimed frame is live");
                    let w = f
                        .pending
                        .pop_front()
                        .expect("assignment respects the buffer");
                    f.in_flight += 1;
                    Some(w)
                }
                (None, None) => None,
            };
            runs.push(ProcessorRun::new(power.frequency_hz(a.freq), dt, work));
        }

        // Completions in time order; a processor that finishes early takes
        // the next pending slice of the same frame.
        loop {
            let next = runs
                .iter()
                .enumerate()
                .filter_map(|(j, r)| r.next_completion().map(|c| (c, j)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((_, j)) = next else { break };
            let id = assignment.processors[j]
                .frame
                .expect("busy processor has a frame");
            runs[j].complete();
            let f = book.frames.get_mut(&id).expect("live frame");
            f.in_flight -= 1;
            book.complete_slice(id, t);
            if runs[j].has_slack() {
                let f = book.frames.get_mut(&id).expect("live frame");
                if let Some(w) = f.pending.pop_front() {
                    f.in_flight += 1;
                    runs[j].start(w);
                }
            }
        }

        let fmin_rho = power.rho(0);
        let mut energy = 0.0;
        let mut records = Vec::with_capacity(m);
        for (j, run) in runs.iter_mut().enumerate() {
            let a = assignment.processors[j];
            let carry = run.finish_slot();
            procs[j] = ProcessorState {
                freq: a.freq,
                in_flight: carry.map(|work| InFlight {
                    frame: a.frame.expect("busy processor has a frame"),
                    work,
                }),
            };
            let rho = power.rho(a.freq);
            energy += match a.frame {
                Some(id) => {
                    let sigma = power.sigma(a.freq, book.frames[&id].frame_type);
                    // A shared clock cannot drop one idle core to the minimum.
                    let idle_rho = if coordinated { rho } else { fmin_rho };
                    run.busy_time * (rho + sigma) + run.idle_time() * idle_rho
                }
                None => dt * rho,
            };
            records.push(ProcessorSlotRecord {
                frequency_mhz: power.frequency_mhz(a.freq),
                frame: a.frame,
                slices_completed: run.completed.len() as u32,
                busy_s: run.busy_time,
            });
        }

        let dropped: Vec<FrameId> = book.expire(t);
        for p in &mut procs {
            if p.in_flight.is_some_and(|inf| dropped.contains(&inf.frame)) {
                p.in_flight = None;
            }
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
