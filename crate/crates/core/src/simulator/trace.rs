//! Per-slice complexity traces: CSV schema, validation and look-ups.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::EmpiricalComplexity;
use crate::workload::FrameType;

pub const TRACE_HEADER: [&str; 5] = ["gop", "frame_pos", "frame_type", "slice", "decode_cycles"];
pub const ENERGY_HEADER: [&str; 4] = ["core_mj", "icache_mj", "dcache_mj", "l2_mj"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceTraceRecord {
    pub gop: u64,
    pub frame_pos: u32,
    pub frame_type: FrameType,
    pub slice: u32,
    pub decode_cycles: u64,
    #[serde(default)]
    pub core_mj: Option<f64>,
    #[serde(default)]
    pub icache_mj: Option<f64>,
    #[serde(default)]
    pub dcache_mj: Option<f64>,
    #[serde(default)]
    pub l2_mj: Option<f64>,
}

impl SliceTraceRecord {
    pub fn new(
        gop: u64,
        frame_pos: u32,
        frame_type: FrameType,
        slice: u32,
        decode_cycles: u64,
    ) -> Self {
        SliceTraceRecord {
            gop,
            frame_pos,
            frame_type,
            slice,
            decode_cycles,
            core_mj: None,
            icache_mj: None,
            dcache_mj: None,
            l2_mj: None,
        }
    }

    fn has_energy(&self) -> bool {
        self.core_mj.is_some()
            || self.icache_mj.is_some()
            || self.dcache_mj.is_some()
            || self.l2_mj.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct TraceFrame {
    pub frame_type: FrameType,
    /// Cycle counts indexed by slice.
    pub cycles: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    records: Vec<SliceTraceRecord>,
    frames: BTreeMap<(u64, u32), TraceFrame>,
}

impl Trace {
    pub fn new(records: Vec<SliceTraceRecord>) -> Result<Self> {
        let mut slices: BTreeMap<(u64, u32), (FrameType, BTreeMap<u32, u64>)> = BTreeMap::new();
        for r in &records {
            if r.decode_cycles == 0 {
                return Err(Error::InvalidTrace(format!(
                    "slice {} of frame {} in GOP {} has zero cycles",
                    r.slice, r.frame_pos, r.gop
                )));
            }
            let e = slices
                .entry((r.gop, r.frame_pos))
                .or_insert_with(|| (r.frame_type, BTreeMap::new()));
            if e.0 != r.frame_type {
                return Err(Error::InvalidTrace(format!(
                    "frame {} in GOP {} has slices of different types",
                    r.frame_pos, r.gop
                )));
            }
            if e.1.insert(r.slice, r.decode_cycles).is_some() {
                return Err(Error::InvalidTrace(format!(
                    "duplicate slice {} of frame {} in GOP {}",
                    r.slice, r.frame_pos, r.gop
                )));
            }
        }
        let mut frames = BTreeMap::new();
        for (key, (t, s)) in slices {
            if s.keys().copied().ne(0..s.len() as u32) {
                return Err(Error::InvalidTrace(format!(
                    "slices of frame {} in GOP {} are not numbered 0..{}",
                    key.1,
                    key.0,
                    s.len()
                )));
            }
            frames.insert(
                key,
                TraceFrame {
                    frame_type: t,
                    cycles: s.into_values().collect(),
                },
            );
        }
        Ok(Trace { records, frames })
    }

    pub fn records(&self) -> &[SliceTraceRecord] {
        &self.records
    }

    pub fn frame(&self, gop: u64, position: u32) -> Option<&TraceFrame> {
        self.frames.get(&(gop, position))
    }

    pub fn num_gops(&self) -> u64 {
        self.frames.keys().map(|k| k.0 + 1).max().unwrap_or(0)
    }

    /// Largest slice cycle count seen per frame type.
    pub fn worst_case_cycles(&self) -> [Option<u64>; 3] {
        let mut out = [None; 3];
        for r in &self.records {
            let e = &mut out[r.frame_type.index()];
            *e = Some(e.map_or(r.decode_cycles, |v: u64| v.max(r.decode_cycles)));
        }
        out
    }

    pub fn empirical(&self) -> Result<EmpiricalComplexity> {
        EmpiricalComplexity::from_samples(
            self.records
                .iter()
                .map(|r| (r.frame_type, r.decode_cycles as f64)),
        )
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidTrace(e.to_string()))?
            .clone();
        for h in TRACE_HEADER {
            if !headers.iter().any(|x| x == h) {
                return Err(Error::InvalidTrace(format!("missing column {h}")));
            }
        }
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<SliceTraceRecord>, _>>()
            .map_err(|e| Error::InvalidTrace(e.to_string()))?;
        Trace::new(records)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Trace::from_reader(std::io::BufReader::new(f))
    }

    /// Writes the CSV form; energy columns appear only if any record has them.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let energy = self.records.iter().any(SliceTraceRecord::has_energy);
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let to_err = |e: csv::Error| Error::InvalidTrace(e.to_string());
        let mut header: Vec<&str> = TRACE_HEADER.to_vec();
        if energy {
            header.extend(ENERGY_HEADER);
        }
        wtr.write_record(&header).map_err(to_err)?;
        for r in &self.records {
            let mut row = vec![
                r.gop.to_string(),
                r.frame_pos.to_string(),
                r.frame_type.to_string(),
                r.slice.to_string(),
                r.decode_cycles.to_string(),
            ];
            if energy {
                for v in [r.core_mj, r.icache_mj, r.dcache_mj, r.l2_mj] {
                    row.push(v.map(|v| v.to_string()).unwrap_or_default());
                }
            }
            wtr.write_record(&row).map_err(to_err)?;
        }
        wtr.flush()
            .map_err(|e| Error::InvalidTrace(e.to_string()))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}
