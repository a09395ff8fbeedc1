//! Processor power model and the Lagrangian per-slot cost.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stochastic::decode_prob;
use crate::workload::FrameType;

/// Power drawn by one processor as a function of its frequency: `rho` always,
/// plus `sigma` for the frame type of a slice it is decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    frequencies_mhz: Vec<f64>,
    rho: Vec<f64>,
    sigma: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerModelViolation {
    Negative {
        table: &'static str,
        frequency_mhz: f64,
    },
    NotIncreasing {
        lower_mhz: f64,
        upper_mhz: f64,
    },
    NotConvex {
        lower_mhz: f64,
        middle_mhz: f64,
        upper_mhz: f64,
    },
}

impl fmt::Display for PowerModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerModelViolation::Negative { table, frequency_mhz } => {
                write!(f, "{table} is negative at {frequency_mhz} MHz")
            }
            PowerModelViolation::NotIncreasing { lower_mhz, upper_mhz } => {
                write!(f, "rho does not increase from {lower_mhz} MHz to {upper_mhz} MHz")
            }
            PowerModelViolation::NotConvex {
                lower_mhz,
                middle_mhz,
                upper_mhz,
            } => write!(
                f,
                "rho increments are not strictly increasing across {lower_mhz}/{middle_mhz}/{upper_mhz} MHz"
            ),
        }
    }
}

impl PowerModel {
    /// Checks only the table shapes; power-curve constraints are reported by
    /// [`validate_power_model`].
    pub fn new(frequencies_mhz: Vec<f64>, rho: Vec<f64>, sigma: Vec<[f64; 3]>) -> Result<Self> {
        let n = frequencies_mhz.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "power model needs at least one frequency".into(),
            ));
        }
        if rho.len() != n || sigma.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} frequencies but {} rho and {} sigma entries",
                rho.len(),
                sigma.len()
            )));
        }
        if frequencies_mhz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidArgument(
                "frequencies must be positive".into(),
            ));
        }
        if frequencies_mhz.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "frequencies must be strictly ascending".into(),
            ));
        }
        if rho
            .iter()
            .chain(sigma.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "power entries must be finite".into(),
            ));
        }
        Ok(PowerModel {
            frequencies_mhz,
            rho,
            sigma,
        })
    }

    /// Tables for 125/166/250/500 MHz from `rho = κ·f·V² + 20 mW` with
    /// 1.07 V below 500 MHz and 1.6 V at 500 MHz; cache power scales the same
    /// way from its 500 MHz values (I 0.11 W, P 0.095 W, B 0.085 W).
    pub fn default_table() -> Self {
        const LEAKAGE_W: f64 = 0.020;
        const KAPPA: f64 = 0.40 / (500.0 * 1.6 * 1.6);
        const SIGMA_AT_MAX: [f64; 3] = [0.11, 0.095, 0.085];
        let freqs = vec![125.0, 166.0, 250.0, 500.0];
        let volts = |f: f64| -> f64 {
            if f < 500.0 {
                1.07
            } else {
                1.6
            }
        };
        let rho = freqs
            .iter()
            .map(|&f| KAPPA * f * volts(f).powi(2) + LEAKAGE_W)
            .collect();
        let sigma = freqs
            .iter()
            .map(|&f| {
                let scale = f * volts(f).powi(2) / (500.0 * 1.6 * 1.6);
                SIGMA_AT_MAX.map(|s| s * scale)
            })
            .collect();
        PowerModel::new(freqs, rho, sigma).expect("static table")
    }

    pub fn num_frequencies(&self) -> usize {
        self.frequencies_mhz.len()
    }

    pub fn frequencies_mhz(&self) -> &[f64] {
        &self.frequencies_mhz
    }

    pub fn frequency_mhz(&self, idx: usize) -> f64 {
        self.frequencies_mhz[idx]
    }

    pub fn frequency_hz(&self, idx: usize) -> f64 {
        self.frequencies_mhz[idx] * 1e6
    }

    pub fn rho(&self, idx: usize) -> f64 {
        self.rho[idx]
    }

    pub fn rho_table(&self) -> &[f64] {
        &self.rho
    }

    pub fn sigma(&self, idx: usize, t: FrameType) -> f64 {
        self.sigma[idx][t.index()]
    }

    pub fn sigma_table(&self) -> &[[f64; 3]] {
        &self.sigma
    }

    pub fn max_index(&self) -> usize {
        self.frequencies_mhz.len() - 1
    }

    pub fn index_of_mhz(&self, mhz: f64) -> Result<usize> {
        self.frequencies_mhz
            .iter()
            .position(|&f| (f - mhz).abs() <= 1e-9 * f.max(1.0))
            .ok_or(Error::UnknownFrequency(mhz))
    }
}

/// Nonnegative entries, strictly increasing `rho`, and strictly increasing
/// consecutive `rho` increments.
pub fn validate_power_model(model: &PowerModel) -> Vec<PowerModelViolation> {
    let f = &model.frequencies_mhz;
    let mut out = Vec::new();
    for (i, &mhz) in f.iter().enumerate() {
        if model.rho[i] < 0.0 {
            out.push(PowerModelViolation::Negative {
                table: "rho",
                frequency_mhz: mhz,
            });
        }
        if model.sigma[i].iter().any(|&s| s < 0.0) {
            out.push(PowerModelViolation::Negative {
                table: "sigma",
                frequency_mhz: mhz,
            });
        }
    }
    for i in 1..f.len() {
        if model.rho[i] <= model.rho[i - 1] {
            out.push(PowerModelViolation::NotIncreasing {
                lower_mhz: f[i - 1],
                upper_mhz: f[i],
            });
        }
    }
    for i in 2..f.len() {
        if model.rho[i] - model.rho[i - 1] <= model.rho[i - 1] - model.rho[i - 2] {
            out.push(PowerModelViolation::NotConvex {
                lower_mhz: f[i - 2],
                middle_mhz: f[i - 1],
                upper_mhz: f[i],
            });
        }
    }
    out
}

pub fn ensure_valid(model: &PowerModel) -> Result<()> {
    let v = validate_power_model(model);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidPowerModel(v))
    }
}

pub fn processor_power(model: &PowerModel, freq: usize, scheduled: Option<FrameType>) -> f64 {
    model.rho(freq) + scheduled.map_or(0.0, |t| model.sigma(freq, t))
}

/// Expected slices finished per slot by one processor.
pub fn expected_slice_rate(theta: f64, scheduled: bool) -> f64 {
    if scheduled {
        theta
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagrangianParams {
    pub lambda: f64,
    pub rate_target: f64,
    pub discount: f64,
    /// Cost units per watt. The multiplier grid is expressed against power in
    /// milliwatts, hence the default of 1000.
    pub power_scale: f64,
}

impl LagrangianParams {
    pub const DEFAULT_DISCOUNT: f64 = 0.9;
    pub const DEFAULT_POWER_SCALE: f64 = 1000.0;

    pub fn new(lambda: f64, rate_target: f64, discount: f64) -> Result<Self> {
        LagrangianParams {
            lambda,
            rate_target,
            discount,
            power_scale: Self::DEFAULT_POWER_SCALE,
        }
        .validated()
    }

    pub fn with_power_scale(self, power_scale: f64) -> Result<Self> {
        LagrangianParams {
            power_scale,
            ..self
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must be nonnegative",
                self.lambda
            )));
        }
        if !(self.rate_target >= 0.0 && self.rate_target.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rate target {} must be nonnegative",
                self.rate_target
            )));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::InvalidArgument(format!(
                "discount {} must lie in [0, 1)",
                self.discount
            )));
        }
        if !(self.power_scale > 0.0 && self.power_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power scale {} must be positive",
                self.power_scale
            )));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledSlice {
    pub frame_type: FrameType,
    pub mean_cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessorChoice {
    pub freq: usize,
    pub slice: Option<ScheduledSlice>,
}

/// `scale·Σ_j P_j − λ·(Σ_j Q_j − η̄)`, undiscounted.
pub fn lagrangian_stage_cost(
    model: &PowerModel,
    params: &LagrangianParams,
    slot_duration: f64,
    choices: &[ProcessorChoice],
) -> Result<f64> {
    let mut power = 0.0;
    let mut rate = 0.0;
    for c in choices {
        if c.freq >= model.num_frequencies() {
            return Err(Error::InvalidArgument(format!(
                "frequency index {} out of range",
                c.freq
            )));
        }
        power += processor_power(model, c.freq, c.slice.map(|s| s.frame_type));
        if let Some(s) = c.slice {
            let theta = decode_prob(model.frequency_hz(c.freq), slot_duration, s.mean_cycles)?;
            rate += expected_slice_rate(theta, true);
        }
    }
    Ok(params.power_scale * power - params.lambda * (rate - params.rate_target))
}
