//! Run logs and the metrics derived from them.

use std::io::Write;

use serde::Serialize;

use crate::workload::{FrameId, FrameType};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub id: FrameId,
    pub frame_type: FrameType,
    /// Frames of GOPs past the run length are simulated for look-ahead but
    /// excluded from the metrics.
    pub measured: bool,
    pub num_slices: u32,
    pub decoded_slices: u32,
    pub display_deadline: i64,
    pub completed_slot: Option<i64>,
}

impl FrameRecord {
    pub fn fully_decoded(&self) -> bool {
        self.decoded_slices == self.num_slices
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessorSlotRecord {
    pub frequency_mhz: f64,
    pub frame: Option<FrameId>,
    pub slices_completed: u32,
    pub busy_s: f64,
}

/// Slice counters are cumulative up to the end of the slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: i64,
    pub processors: Vec<ProcessorSlotRecord>,
    pub energy_j: f64,
    pub arrived_slices: u64,
    pub decoded_slices: u64,
    pub dropped_slices: u64,
    pub pending_slices: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimLog {
    pub processors: usize,
    pub slot_duration: f64,
    pub frames: Vec<FrameRecord>,
    /// Slots counted towards time and energy; later slots only resolve the
    /// last measured frames.
    pub measured_slots: usize,
    pub slots: Vec<SlotRecord>,
}

impl SimLog {
    /// CSV with one row per processor per slot.
    pub fn write_slot_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "slot,processor,frequency_mhz,frame,slices_completed")?;
        for s in &self.slots {
            for (j, p) in s.processors.iter().enumerate() {
                let frame = p
                    .frame
                    .map_or_else(|| "IDLE".to_string(), |f| f.to_string());
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    s.slot, j, p.frequency_mhz, frame, p.slices_completed
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerType<T> {
    #[serde(rename = "I")]
    pub i: T,
    #[serde(rename = "P")]
    pub p: T,
    #[serde(rename = "B")]
    pub b: T,
}

impl<T: Copy> PerType<T> {
    pub fn get(&self, t: FrameType) -> T {
        match t {
            FrameType::I => self.i,
            FrameType::P => self.p,
            FrameType::B => self.b,
        }
    }

    fn from_fn(f: impl Fn(FrameType) -> T) -> Self {
        PerType {
            i: f(FrameType::I),
            p: f(FrameType::P),
            b: f(FrameType::B),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotSummary {
    pub slot: i64,
    pub power_w: f64,
    pub decoded_slices: u64,
    pub dropped_slices: u64,
    pub pending_slices: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub processors: usize,
    pub duration_s: f64,
    pub energy_j: f64,
    pub avg_power_per_core_w: f64,
    pub avg_total_power_w: f64,
    pub decoded_frame_rate_fps: f64,
    pub measured_frames: PerType<u64>,
    pub missed_frames: PerType<u64>,
    pub miss_fraction: PerType<f64>,
    pub arrived_slices: u64,
    pub decoded_slices: u64,
    pub dropped_slices: u64,
    pub pending_slices: u64,
    pub per_slot: Vec<SlotSummary>,
}

pub fn compute_metrics(log: &SimLog) -> SimMetrics {
    let measured_slots = log.measured_slots.min(log.slots.len());
    let duration = measured_slots as f64 * log.slot_duration;
    let energy: f64 = log.slots[..measured_slots].iter().map(|s| s.energy_j).sum();
    let measured = PerType::from_fn(|t| {
        log.frames
            .iter()
            .filter(|f| f.measured && f.frame_type == t)
            .count() as u64
    });
    let missed = PerType::from_fn(|t| {
        log.frames
            .iter()
            .filter(|f| f.measured && f.frame_type == t && !f.fully_decoded())
            .count() as u64
    });
    let decoded_frames = log
        .frames
        .iter()
        .filter(|f| f.measured && f.fully_decoded())
        .count();
    let last = log.slots.last();
    let safe_div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    SimMetrics {
        processors: log.processors,
        duration_s: duration,
        energy_j: energy,
        avg_power_per_core_w: safe_div(energy, duration * log.processors as f64),
        avg_total_power_w: safe_div(energy, duration),
        decoded_frame_rate_fps: safe_div(decoded_frames as f64, duration),
        measured_frames: measured,
        missed_frames: missed,
        miss_fraction: PerType::from_fn(|t| safe_div(missed.get(t) as f64, measured.get(t) as f64)),
        arrived_slices: last.map_or(0, |s| s.arrived_slices),
        decoded_slices: last.map_or(0, |s| s.decoded_slices),
        dropped_slices: last.map_or(0, |s| s.dropped_slices),
        pending_slices: last.map_or(0, |s| s.pending_slices),
        per_slot: log
            .slots
            .iter()
            .map(|s| SlotSummary {
                slot: s.slot,
                power_w: s.energy_j / log.slot_duration,
                decoded_slices: s.decoded_slices,
                dropped_slices: s.dropped_slices,
                pending_slices: s.pending_slices,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(gop: u64, position: u32, t: FrameType, decoded: bool) -> FrameRecord {
        FrameRecord {
            id: FrameId { gop, position },
            frame_type: t,
            measured: true,
            num_slices: 2,
            decoded_slices: if decoded { 2 } else { 1 },
            display_deadline: 0,
            completed_slot: None,
        }
    }

    fn log(frames: Vec<FrameRecord>, slots: usize) -> SimLog {
        SimLog {
            processors: 2,
            slot_duration: 0.25,
            frames,
            measured_slots: slots,
            slots: (0..slots)
                .map(|i| SlotRecord {
                    slot: i as i64,
                    processors: vec![],
                    energy_j: 0.1,
                    arrived_slices: 0,
                    decoded_slices: 0,
                    dropped_slices: 0,
                    pending_slices: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn four_gops_one_dropped_b() {
        let types = [FrameType::I, FrameType::B, FrameType::P, FrameType::B];
        let mut frames = Vec::new();
        for g in 0..4 {
            for (k, &t) in types.iter().enumerate() {
                frames.push(frame(g, k as u32 + 1, t, !(g == 2 && k == 1)));
            }
        }
        let m = compute_metrics(&log(frames, 16));
        assert_eq!(m.miss_fraction.b, 1.0 / 8.0);
        // Per GOP the dropped frame is one of two B frames.
        assert_eq!(m.missed_frames.b, 1);
        assert_eq!(m.miss_fraction.i, 0.0);
        assert_eq!(m.miss_fraction.p, 0.0);
        assert_eq!(m.decoded_frame_rate_fps, 15.0 / 4.0);
        assert!((m.avg_power_per_core_w - 1.6 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn single_b_per_gop_quarter() {
        // IPB-style GOP with one B frame per GOP: one dropped B in four GOPs.
        let types = [FrameType::I, FrameType::P, FrameType::B];
        let mut frames = Vec::new();
        for g in 0..4 {
            for (k, &t) in types.iter().enumerate() {
                frames.push(frame(g, k as u32 + 1, t, !(g == 3 && t == FrameType::B)));
            }
        }
        let m = compute_metrics(&log(frames, 12));
        assert_eq!(m.miss_fraction.b, 0.25);
        assert_eq!(m.miss_fraction.i, 0.0);
    }

    #[test]
    fn nothing_decoded() {
        let frames = vec![
            frame(0, 1, FrameType::I, false),
            frame(0, 2, FrameType::P, false),
            frame(0, 3, FrameType::B, false),
        ];
        let m = compute_metrics(&log(frames, 4));
        assert_eq!(m.decoded_frame_rate_fps, 0.0);
        assert_eq!(
            (m.miss_fraction.i, m.miss_fraction.p, m.miss_fraction.b),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn slot_csv() {
        let mut l = log(vec![], 1);
        l.slots[0].processors = vec![
            ProcessorSlotRecord {
                frequency_mhz: 125.0,
                frame: None,
                slices_completed: 0,
                busy_s: 0.0,
            },
            ProcessorSlotRecord {
                frequency_mhz: 500.0,
                frame: Some(FrameId {
                    gop: 1,
                    position: 3,
                }),
                slices_completed: 2,
                busy_s: 0.2,
            },
        ];
        let mut b = Vec::new();
        l.write_slot_csv(&mut b).unwrap();
        assert_eq!(
            String::from_utf8(b).unwrap(),
            "slot,processor,frequency_mhz,frame,slices_completed\n0,0,125,IDLE,0\n0,1,500,1:3,2\n"
        );
    }
}
