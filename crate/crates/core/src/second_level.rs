//! Run-time arbitration between per-frame policies: earliest-decode-deadline
//! winner per processor, slice stickiness, slack reclamation within a slot,
//! and the optional shared-clock mode.

use std::collections::VecDeque;

use rand::Rng;

use crate::first_level::policy::ProcAction;
use crate::workload::FrameId;

/// What a live frame asks of each processor this slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameClaim {
    pub frame: FrameId,
    pub decode_deadline: i64,
    /// Undecoded slices, including any in flight.
    pub buffer: u32,
    pub deps_met: bool,
    pub actions: Vec<ProcAction>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceWork {
    pub slice: u32,
    pub cycles_total: f64,
    pub cycles_done: f64,
}

impl SliceWork {
    pub fn fresh(slice: u32, cycles_total: f64) -> Self {
        SliceWork {
            slice,
            cycles_total,
            cycles_done: 0.0,
        }
    }

    pub fn remaining(&self) -> f64 {
        (self.cycles_total - self.cycles_done).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InFlight {
    pub frame: FrameId,
    pub work: SliceWork,
}

/// A processor carrying a partly decoded slice across a slot boundary is
/// sticky to that slice's frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessorState {
    pub freq: usize,
    pub in_flight: Option<InFlight>,
}

impl ProcessorState {
    pub fn is_sticky(&self) -> bool {
        self.in_flight.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcessorAssignment {
    pub freq: usize,
    pub frame: Option<FrameId>,
}

impl ProcessorAssignment {
    pub const IDLE: ProcessorAssignment = ProcessorAssignment {
        freq: 0,
        frame: None,
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotAssignment {
    pub processors: Vec<ProcessorAssignment>,
}

impl SlotAssignment {
    pub fn count(&self, frame: FrameId) -> u32 {
        self.processors
            .iter()
            .filter(|p| p.frame == Some(frame))
            .count() as u32
    }

    /// Frees the highest-index processors holding a frame beyond its buffer,
    /// skipping those marked as pinned.
    fn trim_to_buffers(&mut self, claims: &[FrameClaim], pinned: &[bool]) {
        for c in claims {
            let mut excess = self.count(c.frame).saturating_sub(c.buffer);
            for j in (0..self.processors.len()).rev() {
                if excess == 0 {
                    break;
                }
                if self.processors[j].frame == Some(c.frame) && !pinned[j] {
                    self.processors[j] = ProcessorAssignment::IDLE;
                    excess -= 1;
                }
            }
        }
    }
}

/// Per processor, the schedulable frame with the earliest decode deadline
/// among those whose policy schedules on it wins, at the frequency that frame
/// asks for. Equal deadlines are broken uniformly at random.
pub fn edf_assign<R: Rng + ?Sized>(
    claims: &[FrameClaim],
    num_processors: usize,
    rng: &mut R,
) -> SlotAssignment {
    let mut processors = Vec::with_capacity(num_processors);
    for j in 0..num_processors {
        let candidates: Vec<&FrameClaim> = claims
            .iter()
            .filter(|c| c.deps_met && c.buffer > 0 && c.actions.get(j).is_some_and(|a| a.scheduled))
            .collect();
        let Some(best) = candidates.iter().map(|c| c.decode_deadline).min() else {
            processors.push(ProcessorAssignment::IDLE);
            continue;
        };
        let tied: Vec<&&FrameClaim> = candidates
            .iter()
            .filter(|c| c.decode_deadline == best)
            .collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.random_range(0..tied.len())]
        };
        processors.push(ProcessorAssignment {
            freq: winner.actions[j].freq,
            frame: Some(winner.frame),
        });
    }
    let mut out = SlotAssignment { processors };
    out.trim_to_buffers(claims, &vec![false; num_processors]);
    out
}

/// Frequency a sticky slice runs at: the frame's own choice for that
/// processor if it schedules there, else the fastest frequency the frame
/// schedules at anywhere, else the processor's proposed frequency.
fn sticky_frequency(actions: &[ProcAction], j: usize) -> usize {
    match actions.get(j) {
        Some(a) if a.scheduled => a.freq,
        other => actions
            .iter()
            .filter(|a| a.scheduled)
            .map(|a| a.freq)
            .max()
            .unwrap_or_else(|| other.map_or(0, |a| a.freq)),
    }
}

/// Keeps every in-flight slice on its processor. Slices whose frame is no
/// longer live (not in `claims`) are dropped and their processor takes the
/// proposal.
pub fn apply_stickiness(
    previous: &[ProcessorState],
    proposed: &SlotAssignment,
    claims: &[FrameClaim],
) -> SlotAssignment {
    let mut out = proposed.clone();
    let mut pinned = vec![false; out.processors.len()];
    for (j, st) in previous.iter().enumerate() {
        let Some(inf) = st.in_flight else { continue };
        let Some(claim) = claims.iter().find(|c| c.frame == inf.frame) else {
            continue;
        };
        out.processors[j] = ProcessorAssignment {
            freq: sticky_frequency(&claim.actions, j),
            frame: Some(inf.frame),
        };
        pinned[j] = true;
    }
    out.trim_to_buffers(claims, &pinned);
    out
}

/// All processors share the fastest frequency any busy processor wants; with
/// nothing to run they all drop to the lowest.
pub fn coordinate_frequencies(assignment: &SlotAssignment) -> SlotAssignment {
    let shared = assignment
        .processors
        .iter()
        .filter(|p| p.frame.is_some())
        .map(|p| p.freq)
        .max()
        .unwrap_or(0);
    SlotAssignment {
        processors: assignment
            .processors
            .iter()
            .map(|p| ProcessorAssignment {
                freq: shared,
                frame: p.frame,
            })
            .collect(),
    }
}

/// One processor's progress through a slot.
#[derive(Debug, Clone)]
pub struct ProcessorRun {
    pub freq_hz: f64,
    pub slot_duration: f64,
    /// Seconds into the slot.
    pub clock: f64,
    pub busy_time: f64,
    pub current: Option<SliceWork>,
    pub completed: Vec<u32>,
}

impl ProcessorRun {
    pub fn new(freq_hz: f64, slot_duration: f64, current: Option<SliceWork>) -> Self {
        ProcessorRun {
            freq_hz,
            slot_duration,
            clock: 0.0,
            busy_time: 0.0,
            current,
            completed: Vec::new(),
        }
    }

    fn eps(&self) -> f64 {
        1e-12 * self.slot_duration
    }

    /// When the current slice finishes, if within this slot.
    pub fn next_completion(&self) -> Option<f64> {
        let w = self.current?;
        let t = self.clock + w.remaining() / self.freq_hz;
        (t <= self.slot_duration + self.eps()).then_some(t.min(self.slot_duration))
    }

    /// Runs the current slice to completion; returns its index.
    pub fn complete(&mut self) -> u32 {
        let t = self
            .next_completion()
            .expect("slice completes within the slot");
        let w = self.current.take().unwrap();
        self.busy_time += t - self.clock;
        self.clock = t;
        self.completed.push(w.slice);
        w.slice
    }

    /// Whether there is time left to start another slice.
    pub fn has_slack(&self) -> bool {
        self.current.is_none() && self.clock < self.slot_duration - self.eps()
    }

    pub fn start(&mut self, work: SliceWork) {
        debug_assert!(self.current.is_none());
        self.current = Some(work);
    }

    /// Advances to the slot boundary; returns the unfinished slice, if any.
    pub fn finish_slot(&mut self) -> Option<SliceWork> {
        let mut w = self.current.take()?;
        let dt = (self.slot_duration - self.clock).max(0.0);
        w.cycles_done += dt * self.freq_hz;
        self.busy_time += dt;
        self.clock = self.slot_duration;
        Some(w)
    }

    pub fn idle_time(&self) -> f64 {
        (self.slot_duration - self.busy_time).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlackOutcome {
    pub completed: Vec<u32>,
    pub carry: Option<SliceWork>,
    pub busy_time: f64,
    pub idle_time: f64,
}

/// After a slice finishes `finished_at` seconds into the slot, keeps starting
/// the frame's next pending slices at the same frequency until the slot ends
/// or the frame has nothing left; the processor idles for any remainder.
pub fn reclaim_slack(
    freq_hz: f64,
    slot_duration: f64,
    finished_at: f64,
    pending: &mut VecDeque<SliceWork>,
) -> SlackOutcome {
    let mut run = ProcessorRun::new(freq_hz, slot_duration, None);
    run.clock = finished_at;
    let busy_before = finished_at;
    run.busy_time = busy_before;
    while run.has_slack() {
        let Some(next) = pending.pop_front() else {
            break;
        };
        run.start(next);
        if run.next_completion().is_some() {
            run.complete();
        }
    }
    let carry = run.finish_slot();
    SlackOutcome {
        completed: run.completed.clone(),
        carry,
        busy_time: run.busy_time - busy_before,
        idle_time: run.idle_time(),
    }
}
