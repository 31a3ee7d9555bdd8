//! Harvest trace: the per-event log and per-tray records a run emits, with
//! writers for the JSON-lines event stream, the per-tray CSV, and the
//! synthetic cart-log form used by the log-analysis round trip.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::field::Point;

/// Who carried a full tray to the station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServedBy {
    Robot(usize),
    SelfTransport,
}

impl ServedBy {
    pub fn label(&self) -> String {
        match self {
            ServedBy::Robot(id) => format!("robot:{id}"),
            ServedBy::SelfTransport => "self".to_string(),
        }
    }
}

/// One completed (or truncated) tray.
#[derive(Debug, Clone)]
pub struct TrayRow {
    pub tray_id: u64,
    pub picker_id: usize,
    /// Instant this tray started filling (the previous resume).
    pub started_at: f64,
    /// Tray-full instant.
    pub full_at: f64,
    /// Instant the picker resumed picking the next tray.
    pub resumed_at: f64,
    pub full_location: Point,
    pub served_by: ServedBy,
    /// Robot-served trays: arrival minus full. Self-transported trays: 0.
    pub wait_s: f64,
    /// Station-to-full-location path length at the full instant (m).
    pub request_distance_m: f64,
    /// Instant the transport request was created, when one was.
    pub requested_at: Option<f64>,
    pub mass_g: f64,
    /// Truncated at field exhaustion; excluded from per-tray metrics.
    pub partial: bool,
}

impl TrayRow {
    /// Empty-to-full productive interval (s).
    pub fn productive_s(&self) -> f64 {
        self.full_at - self.started_at
    }

    /// Full-to-resume non-productive interval (s).
    pub fn nonproductive_s(&self) -> f64 {
        self.resumed_at - self.full_at
    }
}

/// One FSM transition or scheduler decision in the event stream.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub t: f64,
    pub agent_kind: String,
    pub agent_id: usize,
    pub transition: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

/// Full record of one harvest run.
#[derive(Debug, Clone)]
pub struct HarvestTrace {
    pub seed: u64,
    pub timestep_s: f64,
    pub tray_capacity_g: f64,
    pub trays: Vec<TrayRow>,
    pub events: Vec<TraceEvent>,
    /// Harvest duration: time of the final delivery/stop (s).
    pub duration_s: f64,
    /// Total mass picked, including any truncated final trays (g).
    pub total_picked_g: f64,
    /// Total mass delivered to the station (g).
    pub total_delivered_g: f64,
    pub request_count: u64,
    pub reject_count: u64,
}

impl HarvestTrace {
    /// Completed trays only (metrics exclude truncated ones).
    pub fn completed_trays(&self) -> impl Iterator<Item = &TrayRow> {
        self.trays.iter().filter(|t| !t.partial)
    }

    /// Writes one JSON object per event: t, agent_kind, agent_id,
    /// transition, x, y, w.
    pub fn write_events_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for event in &self.events {
            serde_json::to_writer(&mut w, event).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes the per-tray CSV with the fixed column order
    /// `tray_id,picker_id,t_start,t_end,t_resume,x_full,y_full,served_by`.
    /// Truncated trays are omitted.
    pub fn write_trays_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tray_id,picker_id,t_start,t_end,t_resume,x_full,y_full,served_by")?;
        for tray in self.completed_trays() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                tray.tray_id,
                tray.picker_id,
                tray.started_at,
                tray.full_at,
                tray.resumed_at,
                tray.full_location.x,
                tray.full_location.y,
                tray.served_by.label()
            )?;
        }
        Ok(())
    }

    /// Synthesizes one picker's instrumented-cart log: rows of
    /// (timestamp_s, x_m, y_m, mass_g, button) at the trace timestep.
    ///
    /// The mass channel encodes the tray lifecycle the way the cart scale
    /// sees it: the empty tray weighs `tare` (500 g), the reading ramps to
    /// tare + capacity while picking, the full tray leaves the scale at the
    /// full instant (reading drops to the bare-cart 100 g), and a fresh
    /// empty tray lands at the resume instant. The button column follows
    /// the cart protocol: 0 while pressed (at the request instant), 1
    /// otherwise.
    pub fn to_cart_log(&self, picker_id: usize) -> Vec<CartLogRow> {
        const TARE_G: f64 = 500.0;
        const BARE_CART_G: f64 = 100.0;
        let dt = self.timestep_s;
        let mut rows = Vec::new();
        let mut trays: Vec<&TrayRow> = self
            .trays
            .iter()
            .filter(|t| t.picker_id == picker_id && !t.partial)
            .collect();
        trays.sort_by(|a, b| a.started_at.partial_cmp(&b.started_at).unwrap());
        if trays.is_empty() {
            return rows;
        }
        let last_resume = trays.last().unwrap().resumed_at;
        let steps = ((last_resume + dt) / dt).round() as u64;
        for k in 0..=steps {
            let t = k as f64 * dt;
            let mut mass = BARE_CART_G;
            let mut x = 0.0;
            let mut y = 0.0;
            let mut button = 1u8;
            if t >= last_resume {
                // A fresh empty tray sits on the cart after the final
                // delivery, so the last resume instant stays recoverable.
                let last = trays.last().unwrap();
                mass = TARE_G;
                x = last.full_location.x;
                y = last.full_location.y;
            } else {
                for tray in &trays {
                    if t < tray.started_at {
                        break;
                    }
                    if t <= tray.full_at {
                        let frac = if tray.productive_s() > 0.0 {
                            (t - tray.started_at) / tray.productive_s()
                        } else {
                            1.0
                        };
                        mass = TARE_G + frac * tray.mass_g;
                        x = tray.full_location.x;
                        y = tray.full_location.y;
                    } else if t < tray.resumed_at {
                        // Full tray off the scale while waiting/transporting.
                        mass = BARE_CART_G;
                        x = tray.full_location.x;
                        y = tray.full_location.y;
                    } else {
                        continue;
                    }
                    if let Some(req_at) = tray.requested_at {
                        if (t - req_at).abs() < dt / 2.0 {
                            button = 0;
                        }
                    }
                    break;
                }
            }
            rows.push(CartLogRow {
                timestamp_s: t,
                x_m: x,
                y_m: y,
                mass_g: mass,
                button,
            });
        }
        rows
    }
}

/// One instrumented-cart log row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CartLogRow {
    pub timestamp_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub mass_g: f64,
    /// 0 = pressed (requesting), 1 = not pressed.
    pub button: u8,
}

/// Writes cart-log rows as CSV with the header
/// `timestamp_s,x_m,y_m,mass_g,button`.
pub fn write_cart_log_csv<W: Write>(rows: &[CartLogRow], mut w: W) -> Result<()> {
    writeln!(w, "timestamp_s,x_m,y_m,mass_g,button")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.timestamp_s, r.x_m, r.y_m, r.mass_g, r.button
        )?;
    }
    Ok(())
}
