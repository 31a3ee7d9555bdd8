//! Frequency-histogram distributions for the stochastic harvesting
//! parameters, sampled once per tray.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One histogram bin: uniform over `[lo, hi)` with the given weight.
/// A degenerate bin (`lo == hi`) always yields `lo`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

/// A frequency histogram: bins with weights summing to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<Bin>,
}

impl Histogram {
    pub fn new(bins: Vec<Bin>) -> Result<Self> {
        let h = Self { bins };
        h.validate()?;
        Ok(h)
    }

    /// A single degenerate bin: every draw returns `value`.
    pub fn constant(value: f64) -> Self {
        Self {
            bins: vec![Bin {
                lo: value,
                hi: value,
                weight: 1.0,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.is_empty() {
            return Err(Error::Distribution("histogram has no bins".into()));
        }
        let mut total = 0.0;
        for (i, b) in self.bins.iter().enumerate() {
            if !(b.lo <= b.hi) {
                return Err(Error::Distribution(format!(
                    "bin {i} has lo {} > hi {}",
                    b.lo, b.hi
                )));
            }
            if b.weight < 0.0 {
                return Err(Error::Distribution(format!("bin {i} has negative weight")));
            }
            total += b.weight;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Distribution(format!(
                "bin weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Samples a bin by weight, then uniformly within the bin.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>();
        let mut acc = 0.0;
        let mut chosen = self.bins.len() - 1;
        for (i, b) in self.bins.iter().enumerate() {
            acc += b.weight;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let b = self.bins[chosen];
        if b.hi > b.lo {
            rng.random_range(b.lo..b.hi)
        } else {
            b.lo
        }
    }

    /// Mean of the histogram (bins treated as uniform).
    pub fn mean(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| b.weight * (b.lo + b.hi) / 2.0)
            .sum()
    }
}

/// The three experimentally derived parameter distributions sampled before
/// each tray: picking speed, relocation walking speed, and tray fill time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamDistributions {
    /// Picker speed while picking (m/s).
    pub pick_speed: Histogram,
    /// Picker speed while relocating with cart and tray (m/s).
    pub walk_speed: Histogram,
    /// Time to fill one tray while picking (s).
    pub pick_time: Histogram,
}

impl ParamDistributions {
    pub fn validate(&self) -> Result<()> {
        self.pick_speed.validate()?;
        self.walk_speed.validate()?;
        self.pick_time.validate()
    }
}

/// Per-tray parameter draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrayDraw {
    /// Picking speed v_p (m/s).
    pub pick_speed: f64,
    /// Relocation walking speed v_w (m/s).
    pub walk_speed: f64,
    /// Time to fill the tray in the picking state (s).
    pub pick_time: f64,
}

impl TrayDraw {
    /// Implied picking rate (g/s) for the given tray capacity.
    pub fn picking_rate(&self, tray_capacity_g: f64) -> f64 {
        tray_capacity_g / self.pick_time
    }
}

/// Samples one tray's harvesting parameters.
pub fn sample_tray_params<R: Rng + ?Sized>(
    dists: &ParamDistributions,
    rng: &mut R,
) -> TrayDraw {
    TrayDraw {
        pick_speed: dists.pick_speed.sample(rng),
        walk_speed: dists.walk_speed.sample(rng),
        pick_time: dists.pick_time.sample(rng),
    }
}
