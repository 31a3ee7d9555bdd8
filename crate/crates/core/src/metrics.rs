//! Per-tray and pooled performance metrics, Monte-Carlo aggregation and
//! precision, the reactive-plateau estimate, and cart-log tray extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::ParamDistributions;
use crate::error::{Error, Result};
use crate::field::FieldMap;
use crate::sim::trace::{CartLogRow, ServedBy};
use crate::sim::{run_harvest, HarvestTrace, SchedulerSpec, SimConfig};

/// Mass above which a tray is considered full for end-of-tray detection (g).
pub const FULL_ARM_THRESHOLD_G: f64 = 4000.0;
/// Minimum sample-to-sample mass decrease that counts as a tray swap (g).
pub const DROP_THRESHOLD_G: f64 = 3000.0;
/// Band around the empty-tray weight marking the start of a tray (g).
pub const START_BAND_G: (f64, f64) = (400.0, 600.0);

/// One tray's performance intervals.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrayRecord {
    pub tray_id: u64,
    /// Empty-to-full productive time (s).
    pub productive_s: f64,
    /// Full-to-resume non-productive time (s).
    pub nonproductive_s: f64,
    /// Waiting time, robot-served trays only (s).
    pub wait_s: Option<f64>,
    /// "robot:<id>" or "self".
    pub served_by_robot: Option<usize>,
}

impl TrayRecord {
    pub fn efficiency(&self) -> f64 {
        self.productive_s / (self.productive_s + self.nonproductive_s)
    }
}

/// Mean harvesting efficiency: the averaged per-tray ratio of productive
/// time over total time.
pub fn mean_efficiency(trays: &[TrayRecord]) -> Result<f64> {
    if trays.is_empty() {
        return Err(Error::Distribution("mean_efficiency over no trays".into()));
    }
    Ok(trays.iter().map(|t| t.efficiency()).sum::<f64>() / trays.len() as f64)
}

/// Crew harvesting rate: trays per hour of harvest duration.
pub fn trays_per_hour(tray_count: usize, harvest_duration_s: f64) -> Result<f64> {
    if harvest_duration_s <= 0.0 {
        return Err(Error::Distribution(
            "trays_per_hour needs a positive duration".into(),
        ));
    }
    Ok(tray_count as f64 / (harvest_duration_s / 3600.0))
}

/// Sample standard deviation (n - 1) of the run means divided by their mean.
pub fn relative_precision(run_means: &[f64]) -> Result<f64> {
    if run_means.len() < 2 {
        return Err(Error::Distribution(
            "relative_precision needs at least 2 runs".into(),
        ));
    }
    let mean = run_means.iter().sum::<f64>() / run_means.len() as f64;
    if mean == 0.0 {
        return Err(Error::Distribution(
            "relative_precision undefined for zero mean".into(),
        ));
    }
    Ok(sample_sd(run_means) / mean)
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Asymptotic mean non-productive time with abundant robots under reactive
/// dispatch: mean travel distance over robot speed plus the tray load time.
pub fn plateau_estimate(mean_distance_m: f64, robot_speed: f64, load_s: f64) -> f64 {
    debug_assert!(robot_speed > 0.0);
    mean_distance_m / robot_speed + load_s
}

// ---------------------------------------------------------------------------
// Cart-log extraction
// ---------------------------------------------------------------------------

/// A tray reconstructed from an instrumented-cart log.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExtractedTray {
    /// First instant the mass enters the empty-tray band.
    pub start_at: f64,
    /// Last high-mass instant before the swap drop.
    pub end_at: f64,
    /// Start of the successor tray, when the log contains one.
    pub resume_at: Option<f64>,
    pub productive_s: f64,
    pub nonproductive_s: Option<f64>,
    pub efficiency: Option<f64>,
    /// True when the log truncates before this tray's cycle completes.
    pub partial: bool,
}

/// Recovers per-tray intervals from a cart log: the end of a tray is a mass
/// drop of at least 3 kg after the reading exceeded 4 kg, and the start is
/// the first reading inside the 400-600 g empty-tray band after the previous
/// drop.
pub fn extract_tray_intervals(rows: &[CartLogRow]) -> Result<Vec<ExtractedTray>> {
    for (i, pair) in rows.windows(2).enumerate() {
        if pair[1].timestamp_s <= pair[0].timestamp_s {
            return Err(Error::Parse {
                line: i + 2,
                reason: format!(
                    "non-monotone timestamps: {} after {}",
                    pair[1].timestamp_s, pair[0].timestamp_s
                ),
            });
        }
    }

    let in_band =
        |mass: f64| -> bool { mass >= START_BAND_G.0 && mass <= START_BAND_G.1 };

    // (start, end): end known once the swap drop is seen.
    let mut spans: Vec<(f64, Option<f64>)> = Vec::new();
    let mut current: Option<(f64, bool)> = None; // (start, armed)
    for (i, row) in rows.iter().enumerate() {
        match current {
            None => {
                if in_band(row.mass_g) {
                    current = Some((row.timestamp_s, false));
                }
            }
            Some((start, armed)) => {
                let armed = armed || row.mass_g > FULL_ARM_THRESHOLD_G;
                if armed && i > 0 && rows[i - 1].mass_g - row.mass_g >= DROP_THRESHOLD_G {
                    spans.push((start, Some(rows[i - 1].timestamp_s)));
                    // The drop sample itself may already sit inside the band.
                    current = in_band(row.mass_g).then_some((row.timestamp_s, false));
                } else {
                    current = Some((start, armed));
                }
            }
        }
    }
    // The trailing open span marks the previous tray's resume; it becomes a
    // partial record below only if its own tray actually filled.
    if let Some((start, _)) = current {
        spans.push((start, None));
    }

    let mut trays = Vec::new();
    for (i, &(start, end)) in spans.iter().enumerate() {
        match end {
            Some(end) => {
                let resume = spans.get(i + 1).map(|s| s.0);
                let productive = end - start;
                let nonproductive = resume.map(|r| r - end);
                trays.push(ExtractedTray {
                    start_at: start,
                    end_at: end,
                    resume_at: resume,
                    productive_s: productive,
                    nonproductive_s: nonproductive,
                    efficiency: nonproductive.map(|n| productive / (productive + n)),
                    partial: resume.is_none(),
                });
            }
            None => {
                // Truncated ramp: only report it when the tray actually
                // filled (armed); a bare start is not a tray.
                let armed_tail = rows
                    .iter()
                    .any(|r| r.timestamp_s >= start && r.mass_g > FULL_ARM_THRESHOLD_G);
                if armed_tail {
                    trays.push(ExtractedTray {
                        start_at: start,
                        end_at: f64::NAN,
                        resume_at: None,
                        productive_s: f64::NAN,
                        nonproductive_s: None,
                        efficiency: None,
                        partial: true,
                    });
                }
            }
        }
    }
    Ok(trays)
}

// ---------------------------------------------------------------------------
// Monte-Carlo aggregation
// ---------------------------------------------------------------------------

/// Per-run summary metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub tray_count: usize,
    pub mean_wait_s: f64,
    pub mean_nonproductive_s: f64,
    pub efficiency: f64,
    pub trays_per_hour: f64,
    pub mean_request_distance_m: f64,
    pub duration_s: f64,
    pub reject_count: u64,
}

impl RunMetrics {
    pub fn from_trace(trace: &HarvestTrace) -> Result<Self> {
        let records = tray_records(trace);
        if records.is_empty() {
            return Err(Error::SimFault {
                seed: trace.seed,
                reason: "run produced no completed trays".into(),
            });
        }
        let waits: Vec<f64> = records.iter().filter_map(|r| r.wait_s).collect();
        let mean_wait = if waits.is_empty() {
            0.0
        } else {
            waits.iter().sum::<f64>() / waits.len() as f64
        };
        let mean_nonproductive = records.iter().map(|r| r.nonproductive_s).sum::<f64>()
            / records.len() as f64;
        let distances: Vec<f64> = trace
            .completed_trays()
            .map(|t| t.request_distance_m)
            .collect();
        Ok(Self {
            seed: trace.seed,
            tray_count: records.len(),
            mean_wait_s: mean_wait,
            mean_nonproductive_s: mean_nonproductive,
            efficiency: mean_efficiency(&records)?,
            trays_per_hour: trays_per_hour(records.len(), trace.duration_s)?,
            mean_request_distance_m: distances.iter().sum::<f64>() / distances.len() as f64,
            duration_s: trace.duration_s,
            reject_count: trace.reject_count,
        })
    }
}

/// Per-tray records of a run (completed trays only).
pub fn tray_records(trace: &HarvestTrace) -> Vec<TrayRecord> {
    trace
        .completed_trays()
        .map(|t| TrayRecord {
            tray_id: t.tray_id,
            productive_s: t.productive_s(),
            nonproductive_s: t.nonproductive_s(),
            wait_s: match t.served_by {
                ServedBy::Robot(_) => Some(t.wait_s),
                ServedBy::SelfTransport => None,
            },
            served_by_robot: match t.served_by {
                ServedBy::Robot(id) => Some(id),
                ServedBy::SelfTransport => None,
            },
        })
        .collect()
}

/// Pooled statistics of one metric over the Monte-Carlo run means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PooledMetric {
    /// Mean of the run means.
    pub mean: f64,
    /// Sample standard deviation of the run means; `None` for a single run.
    pub sd_run_means: Option<f64>,
    /// Standard error of the pooled mean (`sd / sqrt(runs)`).
    pub standard_error: Option<f64>,
    /// Relative precision of the pooled mean (`standard_error / mean`).
    pub relative_precision: Option<f64>,
    /// Half-width of the 95% confidence interval (`1.96 * standard_error`).
    pub ci95_halfwidth: Option<f64>,
}

impl PooledMetric {
    pub fn over(run_means: &[f64]) -> Self {
        let n = run_means.len() as f64;
        let mean = run_means.iter().sum::<f64>() / n;
        if run_means.len() < 2 {
            return Self {
                mean,
                sd_run_means: None,
                standard_error: None,
                relative_precision: None,
                ci95_halfwidth: None,
            };
        }
        let sd = sample_sd(run_means);
        let se = sd / n.sqrt();
        Self {
            mean,
            sd_run_means: Some(sd),
            standard_error: Some(se),
            relative_precision: if mean != 0.0 { Some(se / mean) } else { None },
            ci95_halfwidth: Some(1.96 * se),
        }
    }
}

/// Pooled statistics over all runs of one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PooledStats {
    pub runs: usize,
    pub wait: PooledMetric,
    pub nonproductive: PooledMetric,
    pub efficiency: PooledMetric,
    pub trays_per_hour: PooledMetric,
    pub request_distance: PooledMetric,
}

impl PooledStats {
    pub fn over(runs: &[RunMetrics]) -> Self {
        let collect = |f: fn(&RunMetrics) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
        Self {
            runs: runs.len(),
            wait: PooledMetric::over(&collect(|r| r.mean_wait_s)),
            nonproductive: PooledMetric::over(&collect(|r| r.mean_nonproductive_s)),
            efficiency: PooledMetric::over(&collect(|r| r.efficiency)),
            trays_per_hour: PooledMetric::over(&collect(|r| r.trays_per_hour)),
            request_distance: PooledMetric::over(&collect(|r| r.mean_request_distance_m)),
        }
    }
}

/// Runs `run_count` seeded harvests (seeds `base_seed..base_seed+run_count`)
/// and pools the metrics. Runs execute in parallel when `jobs > 1`; outputs
/// are keyed by seed, so the pooled result does not depend on the job count.
/// `keep_traces` retains each run's full trace (memory permitting).
pub fn monte_carlo(
    cfg: &SimConfig,
    field: &FieldMap,
    dists: &ParamDistributions,
    scheduler: &SchedulerSpec,
    run_count: usize,
    base_seed: u64,
    jobs: usize,
    keep_traces: bool,
) -> Result<(PooledStats, Vec<RunMetrics>, Vec<HarvestTrace>)> {
    if run_count == 0 {
        return Err(Error::Config {
            field: "experiment.run_count".into(),
            reason: "must be >= 1".into(),
        });
    }
    let seeds: Vec<u64> = (0..run_count as u64).map(|i| base_seed + i).collect();
    let run_one = |seed: &u64| -> Result<(RunMetrics, Option<HarvestTrace>)> {
        let mut run_cfg = cfg.clone();
        run_cfg.rng_seed = *seed;
        let trace = run_harvest(&run_cfg, field, dists, scheduler)?;
        let metrics = RunMetrics::from_trace(&trace)?;
        Ok((metrics, keep_traces.then_some(trace)))
    };

    let results: Vec<Result<(RunMetrics, Option<HarvestTrace>)>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::SimFault {
                seed: base_seed,
                reason: format!("thread pool: {e}"),
            })?;
        pool.install(|| seeds.par_iter().map(run_one).collect())
    } else {
        seeds.iter().map(run_one).collect()
    };

    let mut metrics = Vec::with_capacity(run_count);
    let mut traces = Vec::new();
    for r in results {
        let (m, t) = r?;
        metrics.push(m);
        if let Some(t) = t {
            traces.push(t);
        }
    }
    let pooled = PooledStats::over(&metrics);
    Ok((pooled, metrics, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(productive: f64, nonproductive: f64) -> TrayRecord {
        TrayRecord {
            tray_id: 0,
            productive_s: productive,
            nonproductive_s: nonproductive,
            wait_s: None,
            served_by_robot: None,
        }
    }

    #[test]
    fn efficiency_examples() {
        assert_relative_eq!(mean_efficiency(&[record(300.0, 100.0)]).unwrap(), 0.75);
        assert_relative_eq!(mean_efficiency(&[record(250.0, 0.0)]).unwrap(), 1.0);
        assert_relative_eq!(
            mean_efficiency(&[record(300.0, 100.0), record(200.0, 200.0)]).unwrap(),
            0.625
        );
        assert!(mean_efficiency(&[]).is_err());
    }

    #[test]
    fn efficiency_increases_as_nonproductive_shrinks() {
        let base = mean_efficiency(&[record(300.0, 100.0)]).unwrap();
        let better = mean_efficiency(&[record(300.0, 50.0)]).unwrap();
        assert!(better > base);
        assert!(base > 0.0 && better <= 1.0);
    }

    #[test]
    fn trays_per_hour_examples() {
        assert_relative_eq!(trays_per_hour(120, 4.0 * 3600.0).unwrap(), 30.0);
        assert_relative_eq!(trays_per_hour(0, 100.0).unwrap(), 0.0);
        assert_relative_eq!(
            trays_per_hour(41, 3.0 * 3600.0).unwrap(),
            13.666666666666666,
            epsilon = 1e-9
        );
        assert!(trays_per_hour(1, 0.0).is_err());
    }

    #[test]
    fn relative_precision_examples() {
        // sd of {9, 11} is sqrt(2); mean 10.
        let rp = relative_precision(&[9.0, 11.0]).unwrap();
        assert_relative_eq!(rp, std::f64::consts::SQRT_2 / 10.0, epsilon = 1e-12);
        assert_relative_eq!(relative_precision(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!(relative_precision(&[1.0]).is_err());
        assert!(relative_precision(&[-1.0, 1.0]).is_err());
    }

    #[test]
    fn pooled_precision_reproduces_published_point() {
        // 100 runs with run-mean sd 0.81 s around 8.1 s pools to 1%.
        let means: Vec<f64> = (0..100)
            .map(|i| 8.1 + 0.81 * if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let pooled = PooledMetric::over(&means);
        let rp = pooled.relative_precision.unwrap();
        assert!((rp - 0.01).abs() < 0.002, "pooled precision {rp}");
    }

    #[test]
    fn plateau_estimate_examples() {
        assert_relative_eq!(plateau_estimate(39.74, 1.5, 5.0), 31.493333333333332);
        assert_relative_eq!(plateau_estimate(0.0, 1.5, 5.0), 5.0);
        assert!(plateau_estimate(39.74, 1e9, 5.0) - 5.0 < 1e-6);
    }

    fn row(t: f64, mass: f64) -> CartLogRow {
        CartLogRow {
            timestamp_s: t,
            x_m: 0.0,
            y_m: 0.0,
            mass_g: mass,
            button: 1,
        }
    }

    #[test]
    fn extraction_synthetic_two_tray_log() {
        // Mass ramps 0 -> 4500 over [0, 300] (first in-band sample at t=30,
        // mass 450), drops to 0 at the sample after 300, and the next
        // ramp's first in-band sample is at 380 with mass 500.
        let mut rows = Vec::new();
        for k in 0..=30 {
            let t = k as f64 * 10.0;
            rows.push(row(t, 4500.0 * t / 300.0));
        }
        rows.push(row(310.0, 0.0));
        rows.push(row(370.0, 350.0));
        rows.push(row(380.0, 500.0));
        for k in 1..=5 {
            rows.push(row(380.0 + k as f64 * 10.0, 500.0 + k as f64 * 1000.0));
        }
        rows.push(row(440.0, 100.0));
        let trays = extract_tray_intervals(&rows).unwrap();
        assert_eq!(trays.len(), 2);
        assert_relative_eq!(trays[0].start_at, 30.0);
        assert_relative_eq!(trays[0].end_at, 300.0);
        assert_relative_eq!(trays[0].nonproductive_s.unwrap(), 80.0);
        assert!(!trays[0].partial);
        // Second tray has an end but no successor: partial.
        assert_relative_eq!(trays[1].start_at, 380.0);
        assert_relative_eq!(trays[1].end_at, 430.0);
        assert!(trays[1].partial);
    }

    #[test]
    fn extraction_requires_full_arm_threshold() {
        let rows: Vec<CartLogRow> = (0..100)
            .map(|k| row(k as f64, 500.0 + 30.0 * k as f64)) // peaks at 3470
            .chain(std::iter::once(row(100.0, 0.0)))
            .collect();
        let trays = extract_tray_intervals(&rows).unwrap();
        assert!(trays.is_empty());
    }

    #[test]
    fn extraction_rejects_non_monotone_timestamps() {
        let rows = vec![row(0.0, 500.0), row(1.0, 600.0), row(0.5, 700.0)];
        assert!(matches!(
            extract_tray_intervals(&rows),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn pooled_metric_degenerate_single_run() {
        let pooled = PooledMetric::over(&[4.2]);
        assert_relative_eq!(pooled.mean, 4.2);
        assert!(pooled.sd_run_means.is_none());
        assert!(pooled.relative_precision.is_none());
    }
}
