//! Crop-transport robot finite state machine and kinematics.

use crate::error::{Error, Result};
use crate::field::{Point, SpeedProfile};

use super::engine::FsmVariant;

/// Robot operating states across both FSM variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotMode {
    Start,
    /// Waiting at the station with an empty tray, ready to be dispatched.
    Available,
    /// Traveling toward the dispatched location with an empty tray.
    TravelToDispatch,
    /// Arrived at the dispatch point; waiting for the tray to fill.
    WaitAtDispatch,
    /// Extended only: closing the gap from the standoff point to the actual
    /// full-tray location.
    DriveToFullTray,
    Exchange,
    /// Returning to the station with a full tray.
    TransportFullBack,
    /// Queued at the station for unloading.
    IdleInQueue,
    /// Extended only: returning with the unused empty tray after the served
    /// picker left the furrow.
    EmptyTrayBack,
    Stop,
}

impl RobotMode {
    pub fn label(self, variant: FsmVariant) -> &'static str {
        use RobotMode::*;
        match (variant, self) {
            (_, Start) => "START",
            (_, Available) => "AVAILABLE",
            (FsmVariant::Simple, TravelToDispatch) => "TRAVEL_TO_PICKER",
            (FsmVariant::Extended, TravelToDispatch) => "TRANSP_EMPTY_TRAY_TO_DISPATCH_LOCATION",
            (FsmVariant::Simple, WaitAtDispatch) => "WAIT_UNTIL_TRAY_FILLS",
            (FsmVariant::Extended, WaitAtDispatch) => "WAIT_AT_DISPATCH_LOCATION",
            (_, DriveToFullTray) => "DRIVE_TO_FULL_TRAY_LOCATION",
            (_, Exchange) => "EXCHANGE_TRAYS",
            (FsmVariant::Simple, TransportFullBack) => "TRANSPORT_FULL_TRAY",
            (FsmVariant::Extended, TransportFullBack) => "TRANSP_FULL_TRAY_BACK",
            (_, IdleInQueue) => "IDLE_IN_QUEUE",
            (_, EmptyTrayBack) => "EMPTY_TRAY_BACK",
            (_, Stop) => "STOP",
        }
    }
}

/// Events driving robot transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotEvent {
    /// Loaded with an empty tray at the station; operation begins.
    Activated,
    Dispatch,
    /// Reached the dispatch point before the tray filled.
    ArrivedAtStandoff,
    /// Reached the picker's actual full-tray location.
    ArrivedAtTray,
    /// The served picker's tray became full (extended: leave the standoff).
    TrayFilled,
    ExchangeDone,
    ReachedStation,
    /// Station queue service finished; empty tray loaded.
    Unloaded,
    /// Extended only: the served picker left the furrow unfilled.
    PickerLeftFurrow,
    /// Harvest over; park at the station.
    HarvestEnded,
}

impl RobotEvent {
    pub fn label(self) -> &'static str {
        use RobotEvent::*;
        match self {
            Activated => "activated",
            Dispatch => "dispatch",
            ArrivedAtStandoff => "arrived_at_standoff",
            ArrivedAtTray => "arrived_at_tray",
            TrayFilled => "tray_filled",
            ExchangeDone => "exchange_done",
            ReachedStation => "reached_station",
            Unloaded => "unloaded",
            PickerLeftFurrow => "picker_left_furrow",
            HarvestEnded => "harvest_ended",
        }
    }
}

/// What the robot carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarriedTray {
    Empty,
    Full,
    None,
}

/// Continuous and discrete state of one robot.
#[derive(Debug, Clone)]
pub struct RobotState {
    pub id: usize,
    pub mode: RobotMode,
    pub position: Point,
    pub elapsed_s: f64,
    pub heading_rad: f64,
    pub assigned_request: Option<u64>,
    pub target: Option<Point>,
    pub carried_tray: CarriedTray,
    /// Scheduler-side availability model: predicted completion of the
    /// current assignment (absolute time).
    pub busy_until_estimate: f64,
}

impl RobotState {
    pub fn new(id: usize, position: Point) -> Self {
        Self {
            id,
            mode: RobotMode::Start,
            position,
            elapsed_s: 0.0,
            heading_rad: 0.0,
            assigned_request: None,
            target: None,
            carried_tray: CarriedTray::None,
            busy_until_estimate: 0.0,
        }
    }

    /// Availability delay as the scheduler models it: zero iff available.
    pub fn availability_delay(&self, now: f64) -> f64 {
        if self.mode == RobotMode::Available {
            0.0
        } else {
            (self.busy_until_estimate - now).max(0.0)
        }
    }

    pub fn transition(&self, event: RobotEvent, variant: FsmVariant) -> Result<RobotMode> {
        use FsmVariant::*;
        use RobotEvent as E;
        use RobotMode::*;
        let next = match (variant, self.mode, event) {
            (_, Start, E::Activated) => Some(Available),
            (_, Start, E::HarvestEnded) => Some(Stop),
            (_, Available, E::Dispatch) => Some(TravelToDispatch),
            (_, Available, E::HarvestEnded) => Some(Stop),

            (_, TravelToDispatch, E::ArrivedAtStandoff) => Some(WaitAtDispatch),
            (_, TravelToDispatch, E::ArrivedAtTray) => Some(Exchange),
            (Extended, TravelToDispatch, E::PickerLeftFurrow) => Some(EmptyTrayBack),

            // Simple variant: the robot waits exactly at the predicted
            // location, so the fill instant starts the exchange directly.
            (Simple, WaitAtDispatch, E::TrayFilled) => Some(Exchange),
            (Extended, WaitAtDispatch, E::TrayFilled) => Some(DriveToFullTray),
            (Extended, WaitAtDispatch, E::PickerLeftFurrow) => Some(EmptyTrayBack),

            (Extended, DriveToFullTray, E::ArrivedAtTray) => Some(Exchange),

            (_, Exchange, E::ExchangeDone) => Some(TransportFullBack),
            (_, TransportFullBack, E::ReachedStation) => Some(IdleInQueue),
            (_, IdleInQueue, E::Unloaded) => Some(Available),
            (Extended, EmptyTrayBack, E::ReachedStation) => Some(Available),

            _ => None,
        };
        next.ok_or_else(|| Error::IllegalTransition {
            agent: format!("robot {}", self.id),
            mode: self.mode.label(variant).to_string(),
            event: event.label().to_string(),
        })
    }
}

/// Advances the robot by one timestep. Travel follows the two-segment path
/// at the profile speed of each segment; everything else is stationary.
/// Returns true when a moving robot reaches its target this step.
pub fn step_robot(state: &mut RobotState, profile: SpeedProfile, dt: f64) -> bool {
    state.elapsed_s += dt;
    let Some(target) = state.target else {
        return false;
    };
    match state.mode {
        RobotMode::TravelToDispatch => super::move_two_speed(
            &mut state.position,
            target,
            profile.headland_speed,
            profile.furrow_speed,
            dt,
            false,
            &mut state.heading_rad,
        ),
        RobotMode::DriveToFullTray => super::move_two_speed(
            &mut state.position,
            target,
            profile.headland_speed,
            profile.furrow_speed,
            dt,
            false,
            &mut state.heading_rad,
        ),
        RobotMode::TransportFullBack | RobotMode::EmptyTrayBack => super::move_two_speed(
            &mut state.position,
            target,
            profile.headland_speed,
            profile.furrow_speed,
            dt,
            true,
            &mut state.heading_rad,
        ),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn robot_in(mode: RobotMode) -> RobotState {
        let mut r = RobotState::new(0, Point::new(0.0, 0.0));
        r.mode = mode;
        r
    }

    #[test]
    fn travel_advances_along_headland() {
        let mut r = robot_in(RobotMode::TravelToDispatch);
        r.target = Some(Point::new(10.0, 5.0));
        let arrived = step_robot(&mut r, SpeedProfile::uniform(1.5), 0.5);
        assert!(!arrived);
        assert_relative_eq!(r.position.x, 0.75);
        assert_relative_eq!(r.position.y, 0.0);
    }

    #[test]
    fn available_robot_only_ages() {
        let mut r = robot_in(RobotMode::Available);
        r.target = None;
        step_robot(&mut r, SpeedProfile::uniform(1.5), 0.5);
        assert_eq!(r.position, Point::new(0.0, 0.0));
        assert_relative_eq!(r.elapsed_s, 0.5);
    }

    #[test]
    fn return_trip_leaves_furrow_first() {
        let mut r = robot_in(RobotMode::TransportFullBack);
        r.position = Point::new(8.0, 0.6);
        r.target = Some(Point::new(0.0, 0.0));
        step_robot(&mut r, SpeedProfile { headland_speed: 0.4, furrow_speed: 1.2 }, 0.5);
        assert_relative_eq!(r.position.y, 0.0);
        // 0.5 s budget minus 0.5 s on the furrow leaves nothing for x.
        assert_relative_eq!(r.position.x, 8.0);
    }

    #[test]
    fn transitions_follow_published_edges() {
        let r = robot_in(RobotMode::Available);
        assert_eq!(
            r.transition(RobotEvent::Dispatch, FsmVariant::Simple).unwrap(),
            RobotMode::TravelToDispatch
        );
        assert_eq!(
            r.transition(RobotEvent::Dispatch, FsmVariant::Extended).unwrap(),
            RobotMode::TravelToDispatch
        );
        let r = robot_in(RobotMode::WaitAtDispatch);
        assert_eq!(
            r.transition(RobotEvent::PickerLeftFurrow, FsmVariant::Extended).unwrap(),
            RobotMode::EmptyTrayBack
        );
        assert_eq!(
            r.transition(RobotEvent::TrayFilled, FsmVariant::Extended).unwrap(),
            RobotMode::DriveToFullTray
        );
        assert_eq!(
            r.transition(RobotEvent::TrayFilled, FsmVariant::Simple).unwrap(),
            RobotMode::Exchange
        );
        let r = robot_in(RobotMode::TransportFullBack);
        assert_eq!(
            r.transition(RobotEvent::ReachedStation, FsmVariant::Simple).unwrap(),
            RobotMode::IdleInQueue
        );
    }

    #[test]
    fn simple_variant_rejects_extended_edges() {
        let r = robot_in(RobotMode::WaitAtDispatch);
        assert!(r
            .transition(RobotEvent::PickerLeftFurrow, FsmVariant::Simple)
            .is_err());
        let r = robot_in(RobotMode::EmptyTrayBack);
        assert!(r
            .transition(RobotEvent::ReachedStation, FsmVariant::Simple)
            .is_err());
    }

    #[test]
    fn availability_delay_tracks_estimate() {
        let mut r = robot_in(RobotMode::TransportFullBack);
        r.busy_until_estimate = 130.0;
        assert_relative_eq!(r.availability_delay(100.0), 30.0);
        assert_relative_eq!(r.availability_delay(200.0), 0.0);
        let a = robot_in(RobotMode::Available);
        assert_relative_eq!(a.availability_delay(100.0), 0.0);
    }
}
