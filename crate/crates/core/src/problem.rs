//! A fully specified scheduling instance shared by the solvers and the
//! simulator.

use serde::{Deserialize, Serialize};

use crate::cost::{ensure_valid, LagrangianParams, PowerModel};
use crate::error::{Error, Result};
use crate::stochastic::{decode_prob, ComplexityModel};
use crate::workload::{FrameType, GopStructure};

/// How per-frame value functions account for processor base power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageAccounting {
    /// Charge `rho(f) − rho(f_min)`: only the power a frame's decision adds
    /// above an idle processor.
    #[default]
    Incremental,
    /// Charge the full `rho(f)` to every frame on every processor.
    PerFrame,
}

#[derive(Debug, Clone)]
pub struct SchedulingProblem {
    pub gop: GopStructure,
    pub power: PowerModel,
    pub complexity: ComplexityModel,
    pub params: LagrangianParams,
    pub num_processors: usize,
    pub leakage: LeakageAccounting,
    theta: Vec<[f64; 3]>,
}

impl SchedulingProblem {
    pub fn new(
        gop: GopStructure,
        power: PowerModel,
        complexity: ComplexityModel,
        params: LagrangianParams,
        num_processors: usize,
    ) -> Result<Self> {
        ensure_valid(&power)?;
        let params = params.validated()?;
        if num_processors == 0 {
            return Err(Error::InvalidArgument(
                "at least one processor is required".into(),
            ));
        }
        let dt = gop.slot_duration();
        let theta = (0..power.num_frequencies())
            .map(|f| -> Result<[f64; 3]> {
                let mut row = [0.0; 3];
                for t in FrameType::ALL {
                    row[t.index()] = decode_prob(power.frequency_hz(f), dt, complexity.mean(t))?;
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(SchedulingProblem {
            gop,
            power,
            complexity,
            params,
            num_processors,
            leakage: LeakageAccounting::default(),
            theta,
        })
    }

    pub fn with_leakage(mut self, leakage: LeakageAccounting) -> Self {
        self.leakage = leakage;
        self
    }

    pub fn with_params(&self, params: LagrangianParams) -> Result<Self> {
        let mut p = self.clone();
        p.params = params.validated()?;
        Ok(p)
    }

    pub fn with_processors(&self, num_processors: usize) -> Result<Self> {
        if num_processors == 0 {
            return Err(Error::InvalidArgument(
                "at least one processor is required".into(),
            ));
        }
        let mut p = self.clone();
        p.num_processors = num_processors;
        Ok(p)
    }

    pub fn num_frequencies(&self) -> usize {
        self.power.num_frequencies()
    }

    pub fn theta(&self, freq: usize, t: FrameType) -> f64 {
        self.theta[freq][t.index()]
    }

    /// Cost one processor contributes to a single frame's value function.
    pub fn frame_processor_cost(&self, freq: usize, t: FrameType, scheduled: bool) -> f64 {
        let base = match self.leakage {
            LeakageAccounting::Incremental => self.power.rho(0),
            LeakageAccounting::PerFrame => 0.0,
        };
        let mut c = self.params.power_scale * (self.power.rho(freq) - base);
        if scheduled {
            c += self.params.power_scale * self.power.sigma(freq, t)
                - self.params.lambda * self.theta(freq, t);
        }
        c
    }
}
