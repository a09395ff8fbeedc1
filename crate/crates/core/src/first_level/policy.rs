//! Per-frame policies extracted from converged frame values, plus their
//! line-oriented text form.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::SchedulingProblem;

use super::decomposition::{conditional_tables, expected_upstream_departures, stage_argmin};
use super::{stage_problem, FrameValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ProcAction {
    pub freq: usize,
    pub scheduled: bool,
}

impl ProcAction {
    pub const IDLE_MIN: ProcAction = ProcAction {
        freq: 0,
        scheduled: false,
    };
}

/// Actions of one frame for each (phase, x, r) where it is current.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePolicy {
    pub position: u32,
    pub num_slices: u32,
    period: usize,
    entries: Vec<Option<Vec<ProcAction>>>,
}

impl FramePolicy {
    fn empty(position: u32, num_slices: u32, period: usize) -> Self {
        FramePolicy {
            position,
            num_slices,
            period,
            entries: vec![None; period * (num_slices as usize + 1) * 2],
        }
    }

    fn idx(&self, phase: usize, x: u32, r: bool) -> Option<usize> {
        (phase < self.period && x <= self.num_slices)
            .then(|| (phase * (self.num_slices as usize + 1) + x as usize) * 2 + usize::from(r))
    }

    pub fn get(&self, phase: usize, x: u32, r: bool) -> Option<&[ProcAction]> {
        self.idx(phase, x, r)
            .and_then(|i| self.entries[i].as_deref())
    }

    fn set(&mut self, phase: usize, x: u32, r: bool, a: Vec<ProcAction>) {
        let i = self.idx(phase, x, r).expect("in range");
        self.entries[i] = Some(a);
    }
}

/// Source of per-frame desired actions for the run-time arbiter.
pub trait PolicySource: Sync {
    fn num_processors(&self) -> usize;
    fn actions(&self, position: u32, phase: usize, x: u32, r: bool) -> Option<Vec<ProcAction>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySet {
    pub processors: usize,
    pub frequencies_mhz: Vec<f64>,
    pub lambda: f64,
    pub period: usize,
    pub frames: Vec<FramePolicy>,
    /// Times the expected upstream departures exceeded the upstream schedule
    /// count and were clamped.
    pub clamped: u64,
}

impl PolicySource for PolicySet {
    fn num_processors(&self) -> usize {
        self.processors
    }

    fn actions(&self, position: u32, phase: usize, x: u32, r: bool) -> Option<Vec<ProcAction>> {
        self.frame(position)?
            .get(phase, x, r)
            .map(<[ProcAction]>::to_vec)
    }
}

/// Same action vector for every schedulable state; idle at the lowest
/// frequency otherwise.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    pub actions: Vec<ProcAction>,
}

impl FixedPolicy {
    pub fn all_at(num_processors: usize, freq: usize, scheduled: bool) -> Self {
        FixedPolicy {
            actions: vec![ProcAction { freq, scheduled }; num_processors],
        }
    }
}

impl PolicySource for FixedPolicy {
    fn num_processors(&self) -> usize {
        self.actions.len()
    }

    fn actions(&self, _position: u32, _phase: usize, x: u32, r: bool) -> Option<Vec<ProcAction>> {
        Some(if x > 0 && r {
            self.actions.clone()
        } else {
            vec![ProcAction::IDLE_MIN; self.actions.len()]
        })
    }
}

impl PolicySet {
    pub fn frame(&self, position: u32) -> Option<&FramePolicy> {
        self.frames.iter().find(|f| f.position == position)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let freqs: Vec<String> = self.frequencies_mhz.iter().map(|f| f.to_string()).collect();
        writeln!(s, "# slicesched policy").unwrap();
        writeln!(s, "# processors {}", self.processors).unwrap();
        writeln!(s, "# frequencies_mhz {}", freqs.join(" ")).unwrap();
        writeln!(s, "# lambda {}", self.lambda).unwrap();
        writeln!(s, "# period {}", self.period).unwrap();
        writeln!(s, "# frame phase x r freq_index:scheduled ...").unwrap();
        for f in &self.frames {
            for phase in 0..f.period {
                for x in 0..=f.num_slices {
                    for r in [false, true] {
                        if let Some(a) = f.get(phase, x, r) {
                            let acts: Vec<String> = a
                                .iter()
                                .map(|p| format!("{}:{}", p.freq, u8::from(p.scheduled)))
                                .collect();
                            writeln!(
                                s,
                                "{} {} {} {} {}",
                                f.position,
                                phase,
                                x,
                                u8::from(r),
                                acts.join(" ")
                            )
                            .unwrap();
                        }
                    }
                }
            }
        }
        s
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad =
            |line: usize, msg: &str| Error::InvalidPolicy(format!("line {}: {msg}", line + 1));
        let mut processors = None;
        let mut freqs = None;
        let mut lambda = 0.0;
        let mut period = None;
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let mut it = h.split_whitespace();
                match it.next() {
                    Some("processors") => {
                        processors = it.next().and_then(|v| v.parse::<usize>().ok())
                    }
                    Some("frequencies_mhz") => {
                        freqs = Some(
                            it.map(str::parse::<f64>)
                                .collect::<std::result::Result<Vec<_>, _>>()
                                .map_err(|_| bad(ln, "bad frequency list"))?,
                        )
                    }
                    Some("lambda") => {
                        lambda = it
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| bad(ln, "bad lambda"))?
                    }
                    Some("period") => period = it.next().and_then(|v| v.parse::<usize>().ok()),
                    _ => {}
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let mut num = |what: &str| -> Result<u64> {
                it.next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(ln, &format!("missing or invalid {what}")))
            };
            let position = num("frame")? as u32;
            let phase = num("phase")? as usize;
            let x = num("x")? as u32;
            let r = match num("r")? {
                0 => false,
                1 => true,
                _ => return Err(bad(ln, "r must be 0 or 1")),
            };
            let actions = it
                .map(|tok| {
                    let (f, y) = tok
                        .split_once(':')
                        .ok_or_else(|| bad(ln, "action must be f:y"))?;
                    Ok(ProcAction {
                        freq: f.parse().map_err(|_| bad(ln, "bad frequency index"))?,
                        scheduled: match y {
                            "0" => false,
                            "1" => true,
                            _ => return Err(bad(ln, "schedule bit must be 0 or 1")),
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((ln, position, phase, x, r, actions));
        }
        let processors =
            processors.ok_or_else(|| Error::InvalidPolicy("missing processors header".into()))?;
        let freqs =
            freqs.ok_or_else(|| Error::InvalidPolicy("missing frequencies_mhz header".into()))?;
        let period = period.ok_or_else(|| Error::InvalidPolicy("missing period header".into()))?;
        let mut max_x: Vec<(u32, u32)> = Vec::new();
        for &(_, pos, _, x, _, _) in &rows {
            match max_x.iter_mut().find(|(p, _)| *p == pos) {
                Some(e) => e.1 = e.1.max(x),
                None => max_x.push((pos, x)),
            }
        }
        max_x.sort();
        let mut frames: Vec<FramePolicy> = max_x
            .iter()
            .map(|&(p, l)| FramePolicy::empty(p, l, period))
            .collect();
        for (ln, pos, phase, x, r, actions) in rows {
            if actions.len() != processors {
                return Err(bad(ln, "action count differs from processor count"));
            }
            if actions.iter().any(|a| a.freq >= freqs.len()) {
                return Err(bad(ln, "frequency index out of range"));
            }
            if phase >= period {
                return Err(bad(ln, "phase out of range"));
            }
            let f = frames
                .iter_mut()
                .find(|f| f.position == pos)
                .expect("collected");
            f.set(phase, x, r, actions);
        }
        Ok(PolicySet {
            processors,
            frequencies_mhz: freqs,
            lambda,
            period,
            frames,
            clamped: 0,
        })
    }
}

/// Per-processor actions for every (phase, x, r) a frame can be in. Processor
/// 1 minimises its own stage; each later processor conditions on how many
/// upstream processors scheduled the frame and on the rounded-down expected
/// number of those that finish.
pub fn extract_policy(values: &FrameValues, problem: &SchedulingProblem) -> PolicySet {
    let m = problem.num_processors;
    let period = problem.gop.period_slots();
    let mut clamped = 0;
    let mut frames = Vec::new();
    for spec in problem.gop.frames() {
        let mut fp = FramePolicy::empty(spec.position, spec.num_slices, period);
        for phase in 0..period {
            if problem.gop.member_offset(phase, spec.position).is_none() {
                continue;
            }
            for x in 0..=spec.num_slices {
                fp.set(phase, x, false, vec![ProcAction::IDLE_MIN; m]);
                if x == 0 {
                    fp.set(phase, x, true, vec![ProcAction::IDLE_MIN; m]);
                    continue;
                }
                let sp = stage_problem(problem, &values.frames, spec.position, phase, x)
                    .expect("member");
                let tables = conditional_tables(&sp, &mut 0);
                let mut actions = Vec::with_capacity(m);
                let mut scheduled = 0u32;
                let mut thetas = Vec::new();
                for j in 1..=m {
                    let mut k = expected_upstream_departures(&thetas);
                    if k > scheduled {
                        clamped += 1;
                        k = scheduled;
                    }
                    let c =
                        stage_argmin(&sp, tables[j + 1].as_ref().unwrap(), scheduled, k, &mut 0);
                    if c.scheduled {
                        scheduled += 1;
                        thetas.push(sp.theta[c.freq]);
                    }
                    actions.push(ProcAction {
                        freq: c.freq,
                        scheduled: c.scheduled,
                    });
                }
                fp.set(phase, x, true, actions);
            }
        }
        frames.push(fp);
    }
    PolicySet {
        processors: m,
        frequencies_mhz: problem.power.frequencies_mhz().to_vec(),
        lambda: problem.params.lambda,
        period,
        frames,
        clamped,
    }
}
