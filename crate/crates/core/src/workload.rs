//! Periodic GOP workload: the frame dependency DAG, the current frame sets
//! induced by the scheduling windows, frame deadlines, and the controlled
//! traffic-state transition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
    B,
}

impl FrameType {
    pub const ALL: [FrameType; 3] = [FrameType::I, FrameType::P, FrameType::B];

    pub fn index(self) -> usize {
        match self {
            FrameType::I => 0,
            FrameType::P => 1,
            FrameType::B => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::P => "P",
            FrameType::B => "B",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" => Ok(FrameType::I),
            "P" | "p" => Ok(FrameType::P),
            "B" | "b" => Ok(FrameType::B),
            other => Err(Error::InvalidArgument(format!(
                "unknown frame type {other:?}"
            ))),
        }
    }
}

/// A frame relative to the GOP that owns the current phase: `gop_offset` GOPs
/// ahead, at 1-based `position` within the GOP.
///
/// Also used for parent edges, where `gop_offset` is the GOP delta from the
/// child to the parent (0 = same GOP, 1 = next GOP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRef {
    pub gop_offset: u32,
    pub position: u32,
}

impl FrameRef {
    pub const fn new(gop_offset: u32, position: u32) -> Self {
        FrameRef {
            gop_offset,
            position,
        }
    }
}

impl fmt::Display for FrameRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.position)?;
        for _ in 0..self.gop_offset {
            f.write_str("'")?;
        }
        Ok(())
    }
}

/// Absolute frame identity in a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameId {
    pub gop: u64,
    pub position: u32,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.gop, self.position)
    }
}

/// Template for one frame of the GOP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub position: u32,
    pub frame_type: FrameType,
    pub num_slices: u32,
    /// Immediate parents; `gop_offset` is 0 (same GOP) or 1 (next GOP).
    pub parents: Vec<FrameRef>,
}

impl FrameSpec {
    pub fn new(
        position: u32,
        frame_type: FrameType,
        num_slices: u32,
        parents: Vec<FrameRef>,
    ) -> Self {
        FrameSpec {
            position,
            frame_type,
            num_slices,
            parents,
        }
    }
}

/// Slots are counted from the first slot of GOP 0's period, for the copy of
/// the frame in GOP 0. Slots may be negative for frames that become current
/// before their own GOP's period starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub arrival_slot: i64,
    pub decode_deadline: i64,
    pub display_deadline: i64,
}

impl FrameTiming {
    fn shifted(self, slots: i64) -> Self {
        FrameTiming {
            arrival_slot: self.arrival_slot + slots,
            decode_deadline: self.decode_deadline + slots,
            display_deadline: self.display_deadline + slots,
        }
    }

    pub fn lifetime(&self) -> usize {
        (self.display_deadline - self.arrival_slot + 1) as usize
    }
}

/// A child edge as seen from the parent in GOP 0: the child lives in GOP
/// `-gop_back`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChildRef {
    pub gop_back: u32,
    pub position: u32,
}

#[derive(Debug, Clone)]
pub struct GopStructure {
    frames: Vec<FrameSpec>,
    period_slots: usize,
    slot_duration: f64,
    window_lengths: Vec<u32>,
    current_frame_sets: Vec<Vec<FrameRef>>,
    /// `[frame index][phase]` -> offset of that frame's copy in the phase's set.
    membership: Vec<Vec<Option<u32>>>,
    children: Vec<Vec<ChildRef>>,
    timings: Vec<FrameTiming>,
}

impl GopStructure {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[FrameSpec] {
        &self.frames
    }

    pub fn frame(&self, position: u32) -> &FrameSpec {
        &self.frames[position as usize - 1]
    }

    pub fn period_slots(&self) -> usize {
        self.period_slots
    }

    pub fn slot_duration(&self) -> f64 {
        self.slot_duration
    }

    pub fn window_lengths(&self) -> &[u32] {
        &self.window_lengths
    }

    pub fn slots_per_frame(&self) -> usize {
        self.period_slots / self.frames.len()
    }

    pub fn current_frame_sets(&self) -> &[Vec<FrameRef>] {
        &self.current_frame_sets
    }

    pub fn current_frame_set(&self, phase: usize) -> &[FrameRef] {
        &self.current_frame_sets[phase]
    }

    /// GOP index and frame set that are current at absolute slot `t`.
    pub fn current_frame_set_at(&self, t: i64) -> (i64, usize, &[FrameRef]) {
        let period = self.period_slots as i64;
        let gop = t.div_euclid(period);
        let phase = t.rem_euclid(period) as usize;
        (gop, phase, &self.current_frame_sets[phase])
    }

    /// Offset of frame `position`'s copy in the set of `phase`, if any.
    pub fn member_offset(&self, phase: usize, position: u32) -> Option<u32> {
        self.membership[position as usize - 1][phase]
    }

    pub fn children(&self, position: u32) -> &[ChildRef] {
        &self.children[position as usize - 1]
    }

    /// Number of phases during which a frame is current.
    pub fn lifetime_phases(&self, position: u32) -> usize {
        self.membership[position as usize - 1]
            .iter()
            .filter(|m| m.is_some())
            .count()
    }

    pub fn next_phase(&self, phase: usize) -> usize {
        (phase + 1) % self.period_slots
    }

    /// The offset a frame at `offset` in `phase` has in the following phase.
    pub fn carry_offset(&self, phase: usize, offset: u32) -> Option<u32> {
        if phase + 1 == self.period_slots {
            offset.checked_sub(1)
        } else {
            Some(offset)
        }
    }

    /// Whether the copy at `frame` (relative to `phase`) is still current one
    /// slot later.
    pub fn persists(&self, phase: usize, frame: FrameRef) -> bool {
        let next = self.next_phase(phase);
        match self.carry_offset(phase, frame.gop_offset) {
            Some(o) => self.member_offset(next, frame.position) == Some(o),
            None => false,
        }
    }

    /// Frame positions in an order where every same-GOP parent precedes its
    /// children.
    pub fn topological_order(&self) -> Vec<u32> {
        topo_order(&self.frames).expect("validated at construction")
    }
}

/// Builds the periodic schedule. Window lengths are counted in frame periods
/// (`period_slots / K` slots each): the set at slot `t` holds every frame whose
/// display slot falls in the window of frame periods starting at `t`'s own.
pub fn build_gop_schedule(
    frames: Vec<FrameSpec>,
    window_lengths: Vec<u32>,
    period_slots: usize,
    slot_duration: f64,
) -> Result<GopStructure> {
    let k = frames.len();
    if k == 0 {
        return Err(Error::InvalidGop("GOP has no frames".into()));
    }
    if period_slots == 0 {
        return Err(Error::InvalidGop("period must be at least one slot".into()));
    }
    if window_lengths.len() != period_slots {
        return Err(Error::InvalidGop(format!(
            "{} window lengths for a period of {period_slots} slots",
            window_lengths.len()
        )));
    }
    if !period_slots.is_multiple_of(k) {
        return Err(Error::InvalidGop(format!(
            "period of {period_slots} slots is not a multiple of the {k} frames per GOP"
        )));
    }
    if !(slot_duration.is_finite() && slot_duration > 0.0) {
        return Err(Error::InvalidGop(format!(
            "slot duration {slot_duration} must be positive"
        )));
    }
    let mut frames = frames;
    frames.sort_by_key(|f| f.position);
    for (i, f) in frames.iter().enumerate() {
        if f.position as usize != i + 1 {
            return Err(Error::InvalidGop(format!(
                "frame positions must be 1..={k} without gaps or repeats"
            )));
        }
        if f.num_slices == 0 {
            return Err(Error::InvalidGop(format!(
                "frame {} has no slices",
                f.position
            )));
        }
        for p in &f.parents {
            if p.gop_offset > 1 {
                return Err(Error::InvalidGop(format!(
                    "frame {} references a parent {} GOPs ahead",
                    f.position, p.gop_offset
                )));
            }
            if p.position == 0 || p.position as usize > k {
                return Err(Error::InvalidGop(format!(
                    "frame {} references unknown parent position {}",
                    f.position, p.position
                )));
            }
        }
    }
    topo_order(&frames)?;

    let per_frame = period_slots / k;
    let mut sets = Vec::with_capacity(period_slots);
    let mut membership = vec![vec![None; period_slots]; k];
    for (phase, &w) in window_lengths.iter().enumerate() {
        let first = phase / per_frame;
        let mut set = Vec::new();
        for display in first..=first + w as usize {
            let offset = (display / k) as u32;
            let position = (display % k) as u32 + 1;
            let slot = &mut membership[position as usize - 1][phase];
            if slot.is_some() {
                return Err(Error::InvalidGop(format!(
                    "window at phase {phase} covers frame {position} twice; windows must be shorter than a GOP"
                )));
            }
            *slot = Some(offset);
            set.push(FrameRef::new(offset, position));
        }
        set.sort();
        sets.push(set);
    }

    let period = period_slots as i64;
    let mut timings = Vec::with_capacity(k);
    for (i, m) in membership.iter().enumerate() {
        let mut slots: Vec<i64> = m
            .iter()
            .enumerate()
            .filter_map(|(p, o)| o.map(|o| p as i64 - o as i64 * period))
            .collect();
        if slots.is_empty() {
            return Err(Error::FrameNeverCurrent(i as u32 + 1));
        }
        slots.sort_unstable();
        if slots.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidGop(format!(
                "frame {} is current in non-contiguous slots",
                i + 1
            )));
        }
        let arrival = slots[0];
        let display = *slots.last().unwrap();
        timings.push(FrameTiming {
            arrival_slot: arrival,
            decode_deadline: display,
            display_deadline: display,
        });
    }

    let mut children = vec![Vec::new(); k];
    for f in &frames {
        for p in &f.parents {
            children[p.position as usize - 1].push(ChildRef {
                gop_back: p.gop_offset,
                position: f.position,
            });
        }
    }
    for (i, ch) in children.iter().enumerate() {
        // Clamped to the frame's own display slot: a frame must be decoded by
        // then regardless of when its children are shown.
        let mut decode = timings[i].display_deadline;
        for c in ch {
            let d = timings[c.position as usize - 1].display_deadline - c.gop_back as i64 * period;
            decode = decode.min(d);
        }
        if decode < timings[i].arrival_slot {
            return Err(Error::InvalidGop(format!(
                "frame {} arrives after a child's display deadline",
                i + 1
            )));
        }
        timings[i].decode_deadline = decode;
    }

    Ok(GopStructure {
        frames,
        period_slots,
        slot_duration,
        window_lengths,
        current_frame_sets: sets,
        membership,
        children,
        timings,
    })
}

fn topo_order(frames: &[FrameSpec]) -> Result<Vec<u32>> {
    // Same-GOP edges only; cross-GOP edges always point forward in time.
    let k = frames.len();
    let mut indeg = vec![0usize; k];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); k];
    for f in frames {
        for p in f.parents.iter().filter(|p| p.gop_offset == 0) {
            if p.position == f.position {
                return Err(Error::CyclicDependency(vec![f.position]));
            }
            out[p.position as usize - 1].push(f.position as usize - 1);
            indeg[f.position as usize - 1] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..k).filter(|&i| indeg[i] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(k);
    while let Some(i) = ready.pop() {
        order.push(i as u32 + 1);
        for &c in &out[i] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() < k {
        let stuck = (0..k)
            .filter(|&i| indeg[i] > 0)
            .map(|i| i as u32 + 1)
            .collect();
        return Err(Error::CyclicDependency(stuck));
    }
    Ok(order)
}

/// Timing of `frame`, with slots relative to the GOP owning phase 0.
pub fn frame_timing(gop: &GopStructure, frame: FrameRef) -> FrameTiming {
    gop.timings[frame.position as usize - 1]
        .shifted(frame.gop_offset as i64 * gop.period_slots as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameStatus {
    pub frame: FrameRef,
    /// Undecoded slices (x).
    pub buffer: u32,
    /// All parents fully decoded (r).
    pub deps_met: bool,
}

/// `frames` lists the phase's current frame set in its stored order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrafficState {
    pub phase: usize,
    pub frames: Vec<FrameStatus>,
}

impl TrafficState {
    pub fn status(&self, frame: FrameRef) -> Option<&FrameStatus> {
        self.frames.iter().find(|s| s.frame == frame)
    }

    pub fn index_of(&self, frame: FrameRef) -> Option<usize> {
        self.frames.iter().position(|s| s.frame == frame)
    }
}

/// Per processor, the frame that had a slice finish (z = 1), if any.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodeOutcome {
    pub per_processor: Vec<Option<FrameRef>>,
}

impl DecodeOutcome {
    pub fn none(num_processors: usize) -> Self {
        DecodeOutcome {
            per_processor: vec![None; num_processors],
        }
    }

    pub fn decoded(&self, frame: FrameRef) -> u32 {
        self.per_processor
            .iter()
            .filter(|z| **z == Some(frame))
            .count() as u32
    }
}

/// One-slot transition of the traffic state.
///
/// A parent counts as drained only when it is in the current set and its
/// buffer empties; a parent that has not arrived yet or has already left the
/// set leaves the child blocked (unless the child was already unblocked).
pub fn advance_traffic(
    state: &TrafficState,
    outcome: &DecodeOutcome,
    gop: &GopStructure,
) -> Result<TrafficState> {
    let phase = state.phase;
    let mut left = Vec::with_capacity(state.frames.len());
    for s in &state.frames {
        let z = outcome.decoded(s.frame);
        let x = s.buffer.checked_sub(z).ok_or(Error::NegativeBuffer {
            gop_offset: s.frame.gop_offset,
            position: s.frame.position,
        })?;
        left.push(x);
    }
    for f in outcome.per_processor.iter().flatten() {
        if state.index_of(*f).is_none() {
            return Err(Error::InvalidArgument(format!(
                "decoded frame {f} is not current"
            )));
        }
    }
    let wrap = u32::from(phase + 1 == gop.period_slots);
    let drained =
        |parent: FrameRef| -> bool { state.index_of(parent).is_some_and(|i| left[i] == 0) };

    let next_phase = gop.next_phase(phase);
    let frames = gop.current_frame_sets[next_phase]
        .iter()
        .map(|&f| {
            let parents_done = gop.frame(f.position).parents.iter().all(|p| {
                drained(FrameRef::new(
                    f.gop_offset + p.gop_offset + wrap,
                    p.position,
                ))
            });
            let before = FrameRef::new(f.gop_offset + wrap, f.position);
            match state.index_of(before) {
                Some(i) => FrameStatus {
                    frame: f,
                    buffer: left[i],
                    deps_met: state.frames[i].deps_met || parents_done,
                },
                None => FrameStatus {
                    frame: f,
                    buffer: gop.frame(f.position).num_slices,
                    deps_met: parents_done,
                },
            }
        })
        .collect();
    Ok(TrafficState {
        phase: next_phase,
        frames,
    })
}

/// Number of buffer configurations summed over phases: `Σ_p Π_{v∈C_p} l^v`.
/// `slices_per_frame` overrides every frame's slice count when given.
pub fn enumerate_traffic_states(gop: &GopStructure, slices_per_frame: Option<u32>) -> u128 {
    gop.current_frame_sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|f| slices_per_frame.unwrap_or(gop.frame(f.position).num_slices) as u128)
                .product::<u128>()
        })
        .sum()
}

/// Per-frame (phase, x, r) state count: lifetime phases × l × 2.
pub fn frame_state_count(gop: &GopStructure, position: u32, slices_per_frame: Option<u32>) -> u128 {
    let l = slices_per_frame.unwrap_or(gop.frame(position).num_slices) as u128;
    gop.lifetime_phases(position) as u128 * l * 2
}

/// `F^M · 2^M`.
pub fn joint_action_space_size(num_processors: u32, num_frequencies: u32) -> u128 {
    (num_frequencies as u128).pow(num_processors) * 2u128.pow(num_processors)
}

/// The four-frame I B P B GOP: B2 and B4 reference their neighbours, P3
/// references I1, and B4 also references the next GOP's I frame.
pub fn ibpb_frames(num_slices: u32) -> Vec<FrameSpec> {
    use FrameType::*;
    vec![
        FrameSpec::new(1, I, num_slices, vec![]),
        FrameSpec::new(
            2,
            B,
            num_slices,
            vec![FrameRef::new(0, 1), FrameRef::new(0, 3)],
        ),
        FrameSpec::new(3, P, num_slices, vec![FrameRef::new(0, 1)]),
        FrameSpec::new(
            4,
            B,
            num_slices,
            vec![FrameRef::new(0, 3), FrameRef::new(1, 1)],
        ),
    ]
}

/// IBPB schedule with window lengths (2,3,2,3) frame periods, each phase
/// repeated `slots_per_frame` times.
pub fn ibpb_gop(
    num_slices: u32,
    slots_per_frame: usize,
    slot_duration: f64,
) -> Result<GopStructure> {
    let windows: Vec<u32> = [2, 3, 2, 3]
        .iter()
        .flat_map(|&w| std::iter::repeat_n(w, slots_per_frame))
        .collect();
    build_gop_schedule(
        ibpb_frames(num_slices),
        windows,
        4 * slots_per_frame,
        slot_duration,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(o: u32, p: u32) -> FrameRef {
        FrameRef::new(o, p)
    }

    fn one_slot_ibpb(l: u32) -> GopStructure {
        ibpb_gop(l, 1, 1.0 / 30.0).unwrap()
    }

    #[test]
    fn ibpb_current_sets() {
        let g = one_slot_ibpb(4);
        assert_eq!(g.current_frame_set(0), &[r(0, 1), r(0, 2), r(0, 3)]);
        assert_eq!(
            g.current_frame_set(1),
            &[r(0, 2), r(0, 3), r(0, 4), r(1, 1)]
        );
        assert_eq!(g.current_frame_set(2), &[r(0, 3), r(0, 4), r(1, 1)]);
        assert_eq!(
            g.current_frame_set(3),
            &[r(0, 4), r(1, 1), r(1, 2), r(1, 3)]
        );
    }

    #[test]
    fn repeated_windows_triple_each_set() {
        let g = ibpb_gop(8, 3, 1.0 / 90.0).unwrap();
        let base = one_slot_ibpb(8);
        assert_eq!(g.period_slots(), 12);
        for p in 0..12 {
            assert_eq!(g.current_frame_set(p), base.current_frame_set(p / 3));
        }
    }

    #[test]
    fn single_frame_gop() {
        let g = build_gop_schedule(
            vec![FrameSpec::new(1, FrameType::I, 1, vec![])],
            vec![0],
            1,
            0.1,
        )
        .unwrap();
        assert_eq!(g.current_frame_set(0), &[r(0, 1)]);
        let t = frame_timing(&g, r(0, 1));
        assert_eq!(
            (t.arrival_slot, t.decode_deadline, t.display_deadline),
            (0, 0, 0)
        );
    }

    #[test]
    fn ibpb_deadlines() {
        let g = one_slot_ibpb(4);
        let next_i = frame_timing(&g, r(1, 1));
        assert_eq!((next_i.decode_deadline, next_i.display_deadline), (3, 4));
        assert_eq!(next_i.arrival_slot, 1);
        let b = frame_timing(&g, r(0, 2));
        assert_eq!((b.decode_deadline, b.display_deadline), (1, 1));
        let p = frame_timing(&g, r(0, 3));
        assert_eq!((p.decode_deadline, p.display_deadline), (1, 2));
        let b4 = frame_timing(&g, r(0, 4));
        assert_eq!(
            (b4.arrival_slot, b4.decode_deadline, b4.display_deadline),
            (1, 3, 3)
        );
        // The current GOP's I frame is also the previous GOP's B4 reference.
        let i = frame_timing(&g, r(0, 1));
        assert_eq!(
            (i.arrival_slot, i.decode_deadline, i.display_deadline),
            (-3, -1, 0)
        );
    }

    #[test]
    fn deadlines_ordered() {
        let g = ibpb_gop(8, 3, 1.0 / 90.0).unwrap();
        for f in g.frames() {
            let t = frame_timing(&g, r(0, f.position));
            assert!(t.arrival_slot <= t.decode_deadline && t.decode_deadline <= t.display_deadline);
        }
    }

    #[test]
    fn cycle_rejected() {
        let frames = vec![
            FrameSpec::new(1, FrameType::P, 1, vec![r(0, 2)]),
            FrameSpec::new(2, FrameType::P, 1, vec![r(0, 1)]),
        ];
        assert!(matches!(
            build_gop_schedule(frames, vec![1, 1], 2, 1.0),
            Err(Error::CyclicDependency(_))
        ));
    }

    #[test]
    fn window_must_fit_in_gop() {
        let frames = ibpb_frames(1);
        assert!(build_gop_schedule(frames, vec![4, 1, 1, 1], 4, 1.0).is_err());
    }

    fn state(g: &GopStructure, phase: usize, xs: &[(FrameRef, u32, bool)]) -> TrafficState {
        let frames = g
            .current_frame_set(phase)
            .iter()
            .map(|&f| {
                let &(_, x, dep) = xs.iter().find(|(ff, _, _)| *ff == f).unwrap();
                FrameStatus {
                    frame: f,
                    buffer: x,
                    deps_met: dep,
                }
            })
            .collect();
        TrafficState { phase, frames }
    }

    #[test]
    fn advance_example() {
        let g = one_slot_ibpb(4);
        let s = state(
            &g,
            0,
            &[(r(0, 1), 0, true), (r(0, 2), 2, true), (r(0, 3), 4, true)],
        );
        let out = DecodeOutcome {
            per_processor: vec![Some(r(0, 2)), None],
        };
        let n = advance_traffic(&s, &out, &g).unwrap();
        assert_eq!(n.phase, 1);
        let xs: Vec<u32> = n.frames.iter().map(|f| f.buffer).collect();
        assert_eq!(xs, vec![1, 4, 4, 4]);
        // v4 waits on the next I frame, which has not been decoded.
        assert!(!n.status(r(0, 4)).unwrap().deps_met);
        assert!(n.status(r(1, 1)).unwrap().deps_met);
    }

    #[test]
    fn parent_drain_unblocks_child() {
        let g = one_slot_ibpb(4);
        let s = state(
            &g,
            0,
            &[(r(0, 1), 1, true), (r(0, 2), 4, false), (r(0, 3), 4, false)],
        );
        let out = DecodeOutcome {
            per_processor: vec![Some(r(0, 1))],
        };
        let n = advance_traffic(&s, &out, &g).unwrap();
        assert!(n.status(r(0, 3)).unwrap().deps_met);
        // B2 still needs P3.
        assert!(!n.status(r(0, 2)).unwrap().deps_met);
    }

    #[test]
    fn negative_buffer_rejected() {
        let g = one_slot_ibpb(4);
        let s = state(
            &g,
            0,
            &[(r(0, 1), 0, true), (r(0, 2), 2, true), (r(0, 3), 4, true)],
        );
        let out = DecodeOutcome {
            per_processor: vec![Some(r(0, 1))],
        };
        assert!(matches!(
            advance_traffic(&s, &out, &g),
            Err(Error::NegativeBuffer { .. })
        ));
    }

    #[test]
    fn identity_transition_within_repeated_phase() {
        let g = ibpb_gop(2, 3, 1.0 / 90.0).unwrap();
        let s = state(
            &g,
            0,
            &[(r(0, 1), 2, true), (r(0, 2), 1, false), (r(0, 3), 2, true)],
        );
        let n = advance_traffic(&s, &DecodeOutcome::none(2), &g).unwrap();
        assert_eq!(n.phase, 1);
        assert_eq!(n.frames, s.frames);
    }

    #[test]
    fn wraparound_reindexes_offsets() {
        let g = one_slot_ibpb(4);
        let s = state(
            &g,
            3,
            &[
                (r(0, 4), 1, true),
                (r(1, 1), 3, true),
                (r(1, 2), 4, false),
                (r(1, 3), 4, true),
            ],
        );
        let n = advance_traffic(&s, &DecodeOutcome::none(1), &g).unwrap();
        assert_eq!(n.phase, 0);
        let xs: Vec<(FrameRef, u32, bool)> = n
            .frames
            .iter()
            .map(|f| (f.frame, f.buffer, f.deps_met))
            .collect();
        assert_eq!(
            xs,
            vec![(r(0, 1), 3, true), (r(0, 2), 4, false), (r(0, 3), 4, true)]
        );
    }

    #[test]
    fn state_counts() {
        let g = one_slot_ibpb(4);
        assert_eq!(enumerate_traffic_states(&g, None), 640);
        assert_eq!(enumerate_traffic_states(&g, Some(8)), 9216);
        let one = build_gop_schedule(
            vec![FrameSpec::new(1, FrameType::I, 1, vec![])],
            vec![0],
            1,
            1.0,
        )
        .unwrap();
        assert_eq!(enumerate_traffic_states(&one, None), 1);
        assert_eq!(frame_state_count(&g, 1, None), 32);
        assert_eq!(frame_state_count(&g, 3, None), 32);
        assert_eq!(frame_state_count(&g, 2, None), 24);
        assert_eq!(frame_state_count(&g, 4, None), 24);
        assert_eq!(frame_state_count(&g, 1, Some(8)), 64);
        assert_eq!(frame_state_count(&g, 2, Some(8)), 48);
    }

    #[test]
    fn action_counts() {
        assert_eq!(joint_action_space_size(4, 4), 1 << 12);
        assert_eq!(joint_action_space_size(8, 4), 1 << 24);
        assert_eq!(joint_action_space_size(1, 1), 2);
    }

    #[test]
    fn persistence() {
        let g = one_slot_ibpb(4);
        assert!(g.persists(0, r(0, 3)));
        assert!(!g.persists(0, r(0, 1)));
        assert!(g.persists(3, r(1, 1)));
        assert!(!g.persists(3, r(0, 4)));
    }
}
