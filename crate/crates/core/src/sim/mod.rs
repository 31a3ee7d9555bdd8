//! Discrete-time hybrid simulator of coupled picker and robot state
//! machines, advancing every agent by a fixed timestep until the block is
//! harvested.

pub mod engine;
pub mod picker;
pub mod robot;
pub mod trace;

pub use engine::{run_harvest, FsmVariant, SchedulerKind, SchedulerSpec, SimConfig};
pub use trace::HarvestTrace;

use crate::field::Point;

const ARRIVE_EPS: f64 = 1e-9;

/// Moves `pos` toward `target` at one speed, headland leg (x) before furrow
/// leg (y), consuming up to `dt` seconds. Returns true once the target is
/// reached; positions snap exactly onto the target coordinates.
pub(crate) fn move_toward(
    pos: &mut Point,
    target: Point,
    speed: f64,
    dt: f64,
    heading_rad: &mut f64,
) -> bool {
    move_legs(pos, target, speed, speed, dt, false, heading_rad)
}

/// Two-speed, two-leg movement used by robots: the headland leg runs at
/// `headland_speed`, the furrow leg at `furrow_speed`. Outbound trips take
/// the headland first; trips back to the station leave the furrow first.
pub(crate) fn move_two_speed(
    pos: &mut Point,
    target: Point,
    headland_speed: f64,
    furrow_speed: f64,
    dt: f64,
    furrow_first: bool,
    heading_rad: &mut f64,
) -> bool {
    move_legs(pos, target, headland_speed, furrow_speed, dt, furrow_first, heading_rad)
}

fn move_legs(
    pos: &mut Point,
    target: Point,
    headland_speed: f64,
    furrow_speed: f64,
    mut budget_s: f64,
    furrow_first: bool,
    heading_rad: &mut f64,
) -> bool {
    for leg in 0..2 {
        let along_furrow = (leg == 0) == furrow_first;
        if along_furrow {
            let dist = target.y - pos.y;
            if dist.abs() > ARRIVE_EPS {
                *heading_rad = if dist > 0.0 {
                    std::f64::consts::FRAC_PI_2
                } else {
                    -std::f64::consts::FRAC_PI_2
                };
                let need_s = dist.abs() / furrow_speed;
                if need_s > budget_s {
                    pos.y += dist.signum() * furrow_speed * budget_s;
                    return false;
                }
                pos.y = target.y;
                budget_s -= need_s;
            }
        } else {
            let dist = target.x - pos.x;
            if dist.abs() > ARRIVE_EPS {
                *heading_rad = if dist > 0.0 { 0.0 } else { std::f64::consts::PI };
                let need_s = dist.abs() / headland_speed;
                if need_s > budget_s {
                    pos.x += dist.signum() * headland_speed * budget_s;
                    return false;
                }
                pos.x = target.x;
                budget_s -= need_s;
            }
        }
    }
    pos.x = target.x;
    pos.y = target.y;
    true
}
