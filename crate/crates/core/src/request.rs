//! Transport-request generation: exact requests gated by fill-ratio
//! timeliness, stochastic requests with injected prediction uncertainty, and
//! the closed-form fill-ratio threshold below which earlier predictions
//! cannot change the dispatch decisions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{one_way_travel_time, FieldMap, Point};

/// An exact (ground-truth) tray-transport request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicRequest {
    pub id: u64,
    pub picker_id: usize,
    /// Simulation time at which the request was created (s).
    pub created_at: f64,
    /// Remaining time until the tray is full, relative to `created_at` (s).
    pub remaining_fill_s: f64,
    /// Exact location where the tray becomes full.
    pub full_location: Point,
}

impl DeterministicRequest {
    /// Absolute full-tray instant.
    pub fn full_at(&self) -> f64 {
        self.created_at + self.remaining_fill_s
    }
}

/// A univariate Gaussian parameterization; `sd = 0` is permitted and
/// degenerates to the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn degenerate(mean: f64) -> Self {
        Self { mean, sd: 0.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sd == 0.0 {
            self.mean
        } else {
            let normal = rand_distr::Normal::new(self.mean, self.sd)
                .expect("validated sd >= 0");
            rng.sample(normal)
        }
    }
}

/// A stochastic tray-transport request: distributions over the remaining
/// fill time and the picker's along-row speed, plus the current location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticRequest {
    pub id: u64,
    pub picker_id: usize,
    pub created_at: f64,
    /// Remaining fill-time distribution, relative to `created_at` (s).
    pub fill_time: Gaussian,
    /// Signed along-row speed distribution (m/s); negative points toward the
    /// headland, the direction of picking.
    pub speed_along_row: Gaussian,
    /// Picker location at request creation.
    pub current_location: Point,
}

/// Parameters of the synthetic uncertainty injected into predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyParams {
    /// Fraction of the mean pick time bounding the per-tray uniform bias.
    pub bias_fraction: f64,
    /// Standard deviation of the fill-time prediction (s).
    pub pred_sd_s: f64,
    /// Half-width of the uniform noise on location measurements (m).
    pub loc_noise_halfwidth_m: f64,
}

impl UncertaintyParams {
    pub fn none() -> Self {
        Self {
            bias_fraction: 0.0,
            pred_sd_s: 0.0,
            loc_noise_halfwidth_m: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias_fraction < 0.0 || self.pred_sd_s < 0.0 || self.loc_noise_halfwidth_m < 0.0 {
            return Err(Error::Config {
                field: "uncertainty".into(),
                reason: "bias_fraction, pred_sd_s and loc_noise_halfwidth_m must be >= 0".into(),
            });
        }
        Ok(())
    }
}

/// What the simulator knows about a picker mid-tray, as needed to decide
/// whether a request fires.
#[derive(Debug, Clone, Copy)]
pub struct FillSnapshot {
    pub picker_id: usize,
    /// Current position (inside the furrow being picked).
    pub position: Point,
    pub tray_mass_g: f64,
    pub tray_capacity_g: f64,
    /// Picking speed toward the headland (m/s, positive).
    pub pick_speed: f64,
    /// Mass accumulation rate while picking (g/s).
    pub picking_rate: f64,
}

impl FillSnapshot {
    pub fn fill_ratio(&self) -> f64 {
        self.tray_mass_g / self.tray_capacity_g
    }

    /// Exact remaining fill time (s).
    pub fn remaining_fill_s(&self) -> f64 {
        (self.tray_capacity_g - self.tray_mass_g).max(0.0) / self.picking_rate
    }

    /// Exact full-tray location: the picker keeps moving toward the headland
    /// while picking.
    pub fn predicted_full_location(&self) -> Point {
        Point::new(
            self.position.x,
            self.position.y - self.pick_speed * self.remaining_fill_s(),
        )
    }
}

/// Emits an exact request the first time the fill ratio crosses
/// `fr_request`, provided the tray will become full inside the current
/// furrow; otherwise the prediction is withheld (it fires later, at the
/// latest when the tray is actually full).
pub fn make_perfect_request(
    snapshot: &FillSnapshot,
    fr_request: f64,
    now: f64,
    id: u64,
) -> Option<DeterministicRequest> {
    if snapshot.fill_ratio() < fr_request {
        return None;
    }
    let full = snapshot.predicted_full_location();
    if full.y < 0.0 {
        return None; // tray will not fill in this furrow
    }
    Some(DeterministicRequest {
        id,
        picker_id: snapshot.picker_id,
        created_at: now,
        remaining_fill_s: snapshot.remaining_fill_s(),
        full_location: full,
    })
}

/// Ground truth used to synthesize a stochastic request.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth {
    pub remaining_fill_s: f64,
    /// Signed along-row speed (m/s); negative while picking toward the
    /// headland.
    pub speed_along_row: f64,
    pub current_location: Point,
}

/// Builds a stochastic request by perturbing ground truth: a per-tray bias
/// drawn uniformly from `±bias_fraction * mean_pick_time` shifts the
/// fill-time mean, the configured prediction sd widens it, and the along-row
/// speed comes from a regression over noisy location samples.
pub fn make_stochastic_request<R: Rng + ?Sized>(
    id: u64,
    picker_id: usize,
    now: f64,
    truth: &GroundTruth,
    uncertainty: &UncertaintyParams,
    mean_pick_time_s: f64,
    speed_samples: &[(f64, f64)],
    rng: &mut R,
) -> StochasticRequest {
    let half = uncertainty.bias_fraction * mean_pick_time_s;
    let bias = if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    };
    let speed_along_row = estimate_speed_regression(speed_samples)
        .unwrap_or(Gaussian::degenerate(truth.speed_along_row));
    StochasticRequest {
        id,
        picker_id,
        created_at: now,
        fill_time: Gaussian {
            mean: truth.remaining_fill_s + bias,
            sd: uncertainty.pred_sd_s,
        },
        speed_along_row,
        current_location: truth.current_location,
    }
}

/// Ordinary least squares over `(t, y)` samples: the slope estimates the
/// along-row speed and the slope's standard error its uncertainty.
pub fn estimate_speed_regression(samples: &[(f64, f64)]) -> Result<Gaussian> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Regression(format!(
            "need at least 3 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / nf;
    let y_mean = samples.iter().map(|s| s.1).sum::<f64>() / nf;
    let sxx: f64 = samples.iter().map(|s| (s.0 - t_mean).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Regression(
            "zero variance in sample times".into(),
        ));
    }
    let sxy: f64 = samples
        .iter()
        .map(|s| (s.0 - t_mean) * (s.1 - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let sse: f64 = samples
        .iter()
        .map(|s| (s.1 - (intercept + slope * s.0)).powi(2))
        .sum();
    let se = (sse / ((nf - 2.0) * sxx)).sqrt();
    Ok(Gaussian { mean: slope, sd: se })
}

/// The fill ratio above which a request prediction can change the dispatch
/// decisions: `1 - t_max / mean_pick_time`, where `t_max` is the largest
/// one-way travel time from the active station to any pickable field point.
/// Clamped to `[0, 1]`.
pub fn fr_threshold(
    headland_speed: f64,
    furrow_speed: f64,
    field: &FieldMap,
    mean_pick_time_s: f64,
) -> f64 {
    let station = field.active_station();
    let mut t_max: f64 = 0.0;
    for furrow in 0..field.furrow_count {
        let headland = (station.x - field.furrow_x(furrow)).abs();
        let t = one_way_travel_time(
            headland,
            field.split_line_y,
            crate::field::SpeedProfile {
                headland_speed,
                furrow_speed,
            },
        );
        t_max = t_max.max(t);
    }
    (1.0 - t_max / mean_pick_time_s).clamp(0.0, 1.0)
}
