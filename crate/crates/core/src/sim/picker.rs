//! Picker finite state machine and kinematics.
//!
//! The simple variant covers robot-served harvesting only; the extended
//! variant adds request rejection (the picker transports the full tray on
//! foot) and the partly-full-tray relocation states.

use crate::dist::TrayDraw;
use crate::error::{Error, Result};
use crate::field::Point;

use super::engine::FsmVariant;

/// Picker operating states across both FSM variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PickerMode {
    Start,
    /// Walking on the headland toward an unoccupied furrow (empty tray).
    WalkHeadland,
    /// Walking inside the furrow up to the split line (empty tray).
    WalkFurrowIn,
    /// Extended only: relocating on the headland with a partly full tray.
    WalkPartlyFullHeadland,
    /// Extended only: walking into the next furrow with a partly full tray.
    WalkPartlyFullFurrow,
    Pick,
    WaitForRobot,
    Exchange,
    /// Extended only: carrying the full tray down the furrow (rejected).
    TransportFullFurrow,
    /// Extended only: carrying the full tray along the headland.
    TransportFullHeadland,
    /// Extended only: queued at the collection station.
    IdleInQueue,
    /// Extended only: walking back along the headland with an empty tray.
    EmptyBackHeadland,
    /// Extended only: walking back up the furrow to resume picking.
    EmptyBackFurrow,
    Stop,
}

impl PickerMode {
    /// Trace label; the simple variant uses its own published state names.
    pub fn label(self, variant: FsmVariant) -> &'static str {
        use PickerMode::*;
        match (variant, self) {
            (FsmVariant::Simple, Start) => "START",
            (FsmVariant::Simple, WalkHeadland) => "WALK_TO_FURROW_ENTRANCE",
            (FsmVariant::Simple, WalkFurrowIn) => "WALK_TO_FURROW_SPLITLINE",
            (FsmVariant::Simple, Pick) => "PICK",
            (FsmVariant::Simple, WaitForRobot) => "WAIT_FOR_ROBOT_ARRIVAL",
            (FsmVariant::Simple, Exchange) => "EXCHANGE_TRAYS",
            (FsmVariant::Simple, Stop) => "STOP",
            (FsmVariant::Simple, _) => "ILLEGAL",
            (FsmVariant::Extended, Start) => "START",
            (FsmVariant::Extended, WalkHeadland) => "WALK_EMPTY_TRAY_HEADLAND",
            (FsmVariant::Extended, WalkFurrowIn) => "WALK_EMPTY_TRAY_FURROW",
            (FsmVariant::Extended, WalkPartlyFullHeadland) => "WALK_PARTLY_FULL_TRAY_HEADLAND",
            (FsmVariant::Extended, WalkPartlyFullFurrow) => "WALK_PARTLY_FULL_TRAY_FURROW",
            (FsmVariant::Extended, Pick) => "PICKING",
            (FsmVariant::Extended, WaitForRobot) => "WAITING_FOR_ROBOT",
            (FsmVariant::Extended, Exchange) => "EXCHANGE_TRAYS",
            (FsmVariant::Extended, TransportFullFurrow) => "TRANSPORT_FULL_TRAY_FURROW",
            (FsmVariant::Extended, TransportFullHeadland) => "TRANSPORT_FULL_TRAY_HEADLAND",
            (FsmVariant::Extended, IdleInQueue) => "IDLE_IN_QUEUE",
            (FsmVariant::Extended, EmptyBackHeadland) => "EMPTY_TRAY_BACK_HEADLAND",
            (FsmVariant::Extended, EmptyBackFurrow) => "EMPTY_TRAY_BACK_FURROW",
            (FsmVariant::Extended, Stop) => "STOP",
        }
    }
}

/// Events driving picker transitions; the engine derives them from the
/// continuous state and the scheduler's decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PickerEvent {
    /// Leave the station and head for the first furrow.
    BeginHarvest,
    /// Arrived at the target furrow entrance on the headland.
    ReachedFurrow,
    /// Arrived at the split line; picking starts.
    ReachedSplitline,
    /// Picked through to the headland end with the tray unfinished.
    FurrowExhausted,
    /// Tray full and a robot is (or will be) coming.
    TrayFull,
    /// Tray full with a rejection flag: self-transport.
    Rejected,
    /// The serving robot is at the full-tray location.
    RobotArrived,
    ExchangeDone,
    /// Self-transport: left the furrow onto the headland.
    ReachedHeadland,
    /// Self-transport: arrived at the collection station.
    ReachedStation,
    /// Station queue service finished; empty tray in hand.
    Delivered,
    /// Walking back: reached the furrow where picking stopped.
    ReachedReturnFurrow,
    /// Back at the full-tray location; picking resumes.
    Resumed,
    /// No unharvested furrow remains.
    FieldDone,
}

impl PickerEvent {
    pub fn label(self) -> &'static str {
        use PickerEvent::*;
        match self {
            BeginHarvest => "begin_harvest",
            ReachedFurrow => "reached_furrow",
            ReachedSplitline => "reached_splitline",
            FurrowExhausted => "furrow_exhausted",
            TrayFull => "tray_full",
            Rejected => "rejected",
            RobotArrived => "robot_arrived",
            ExchangeDone => "exchange_done",
            ReachedHeadland => "reached_headland",
            ReachedStation => "reached_station",
            Delivered => "delivered",
            ReachedReturnFurrow => "reached_return_furrow",
            Resumed => "resumed",
            FieldDone => "field_done",
        }
    }
}

/// Continuous and discrete state of one picker.
#[derive(Debug, Clone)]
pub struct PickerState {
    pub id: usize,
    pub mode: PickerMode,
    pub position: Point,
    /// Mass of the current tray (g); never exceeds the capacity.
    pub tray_mass_g: f64,
    /// Elapsed time in the current mode (s).
    pub elapsed_s: f64,
    /// Heading of the current motion (radians), for the trace.
    pub heading_rad: f64,
    pub draw: TrayDraw,
    /// Furrow currently assigned to this picker.
    pub furrow: usize,
    /// Movement target of the current mode, if any.
    pub target: Option<Point>,
    /// Where picking resumes after a self-transport round trip.
    pub resume_point: Option<Point>,
    /// A robot is assigned or en route for the current tray.
    pub served_flag: bool,
    /// The current tray's request was rejected.
    pub reject_flag: bool,
}

impl PickerState {
    pub fn new(id: usize, position: Point, draw: TrayDraw) -> Self {
        Self {
            id,
            mode: PickerMode::Start,
            position,
            tray_mass_g: 0.0,
            elapsed_s: 0.0,
            heading_rad: 0.0,
            draw,
            furrow: 0,
            target: None,
            resume_point: None,
            served_flag: false,
            reject_flag: false,
        }
    }

    /// Applies one FSM transition; illegal (mode, event) pairs are a
    /// simulation fault, not a silent skip.
    pub fn transition(&self, event: PickerEvent, variant: FsmVariant) -> Result<PickerMode> {
        use FsmVariant::*;
        use PickerEvent as E;
        use PickerMode::*;
        let partly_full = self.tray_mass_g > 0.0;
        let next = match (variant, self.mode, event) {
            (_, Start, E::BeginHarvest) => Some(WalkHeadland),
            (_, Start, E::FieldDone) => Some(Stop),

            (_, WalkHeadland, E::ReachedFurrow) => Some(WalkFurrowIn),
            (_, WalkFurrowIn, E::ReachedSplitline) => Some(Pick),
            (Extended, WalkPartlyFullHeadland, E::ReachedFurrow) => Some(WalkPartlyFullFurrow),
            (Extended, WalkPartlyFullFurrow, E::ReachedSplitline) => Some(Pick),

            (_, Pick, E::TrayFull) => Some(WaitForRobot),
            (Extended, Pick, E::Rejected) => Some(TransportFullFurrow),
            (Simple, Pick, E::FurrowExhausted) => Some(WalkHeadland),
            (Extended, Pick, E::FurrowExhausted) => Some(if partly_full {
                WalkPartlyFullHeadland
            } else {
                WalkHeadland
            }),
            (_, Pick, E::FieldDone) => Some(Stop),

            (_, WaitForRobot, E::RobotArrived) => Some(Exchange),
            (_, Exchange, E::ExchangeDone) => Some(Pick),

            (Extended, TransportFullFurrow, E::ReachedHeadland) => Some(TransportFullHeadland),
            (Extended, TransportFullHeadland, E::ReachedStation) => Some(IdleInQueue),
            (Extended, IdleInQueue, E::Delivered) => Some(EmptyBackHeadland),
            (Extended, EmptyBackHeadland, E::ReachedReturnFurrow) => Some(EmptyBackFurrow),
            (Extended, EmptyBackFurrow, E::Resumed) => Some(Pick),

            _ => None,
        };
        next.ok_or_else(|| Error::IllegalTransition {
            agent: format!("picker {}", self.id),
            mode: self.mode.label(variant).to_string(),
            event: event.label().to_string(),
        })
    }

    /// Speed of the current mode (m/s): picking speed in `Pick`, the tray's
    /// walking speed in every relocation or transport state, zero while
    /// waiting, exchanging, queued, or stopped.
    pub fn mode_speed(&self) -> f64 {
        use PickerMode::*;
        match self.mode {
            Pick => self.draw.pick_speed,
            WalkHeadland | WalkFurrowIn | WalkPartlyFullHeadland | WalkPartlyFullFurrow
            | TransportFullFurrow | TransportFullHeadland | EmptyBackHeadland
            | EmptyBackFurrow => self.draw.walk_speed,
            Start | WaitForRobot | Exchange | IdleInQueue | Stop => 0.0,
        }
    }

    /// True while the picker accumulates tray mass.
    pub fn is_picking(&self) -> bool {
        self.mode == PickerMode::Pick
    }
}

/// Advances the picker's continuous state by one timestep: position along
/// the current mode's axis, tray mass while picking, elapsed time always.
/// Returns `(reached_target, tray_filled)`.
pub fn step_picker(state: &mut PickerState, tray_capacity_g: f64, dt: f64) -> (bool, bool) {
    state.elapsed_s += dt;
    let speed = state.mode_speed();

    let mut tray_filled = false;
    if state.is_picking() {
        let rate = state.draw.picking_rate(tray_capacity_g);
        let new_mass = state.tray_mass_g + rate * dt;
        if new_mass >= tray_capacity_g {
            state.tray_mass_g = tray_capacity_g;
            tray_filled = true;
        } else {
            state.tray_mass_g = new_mass;
        }
    }

    let mut reached = false;
    if speed > 0.0 {
        if let Some(target) = state.target {
            reached =
                super::move_toward(&mut state.position, target, speed, dt, &mut state.heading_rad);
        }
    }
    (reached, tray_filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn draw() -> TrayDraw {
        TrayDraw {
            pick_speed: 0.04,
            walk_speed: 0.6,
            pick_time: 275.5,
        }
    }

    fn picker_in(mode: PickerMode) -> PickerState {
        let mut p = PickerState::new(0, Point::new(10.0, 30.0), draw());
        p.mode = mode;
        p
    }

    #[test]
    fn pick_step_moves_toward_headland_and_fills() {
        let mut p = picker_in(PickerMode::Pick);
        p.target = Some(Point::new(10.0, 0.0));
        let cap = 4500.0;
        let rate = p.draw.picking_rate(cap);
        let (reached, filled) = step_picker(&mut p, cap, 0.5);
        assert!(!reached && !filled);
        assert_relative_eq!(p.position.y, 30.0 - 0.02);
        assert_relative_eq!(p.tray_mass_g, rate * 0.5);
        assert_relative_eq!(p.elapsed_s, 0.5);
    }

    #[test]
    fn picking_rate_fills_in_pick_time() {
        // rate = capacity / pick_time, so mass grows by dt * rate per step.
        let mut p = picker_in(PickerMode::Pick);
        p.draw.pick_time = 450.0; // rate = 10 g/s at 4500 g capacity
        p.target = Some(Point::new(10.0, 0.0));
        step_picker(&mut p, 4500.0, 0.5);
        assert_relative_eq!(p.tray_mass_g, 5.0);
    }

    #[test]
    fn waiting_picker_is_stationary_but_ages() {
        let mut p = picker_in(PickerMode::WaitForRobot);
        p.tray_mass_g = 4500.0;
        let before = p.position;
        let (_, filled) = step_picker(&mut p, 4500.0, 0.5);
        assert!(!filled);
        assert_eq!(p.position, before);
        assert_relative_eq!(p.tray_mass_g, 4500.0);
        assert_relative_eq!(p.elapsed_s, 0.5);
    }

    #[test]
    fn mass_clamps_at_capacity_and_reports_fill() {
        let mut p = picker_in(PickerMode::Pick);
        p.target = Some(Point::new(10.0, 0.0));
        p.tray_mass_g = 4499.9;
        let (_, filled) = step_picker(&mut p, 4500.0, 0.5);
        assert!(filled);
        assert_relative_eq!(p.tray_mass_g, 4500.0);
    }

    #[test]
    fn simple_transitions_follow_published_edges() {
        let p = picker_in(PickerMode::Pick);
        assert_eq!(
            p.transition(PickerEvent::TrayFull, FsmVariant::Simple).unwrap(),
            PickerMode::WaitForRobot
        );
        let p = picker_in(PickerMode::WaitForRobot);
        assert_eq!(
            p.transition(PickerEvent::RobotArrived, FsmVariant::Simple).unwrap(),
            PickerMode::Exchange
        );
        let p = picker_in(PickerMode::Exchange);
        assert_eq!(
            p.transition(PickerEvent::ExchangeDone, FsmVariant::Simple).unwrap(),
            PickerMode::Pick
        );
    }

    #[test]
    fn extended_rejection_routes_to_self_transport_chain() {
        let mut p = picker_in(PickerMode::Pick);
        p.tray_mass_g = 4500.0;
        assert_eq!(
            p.transition(PickerEvent::Rejected, FsmVariant::Extended).unwrap(),
            PickerMode::TransportFullFurrow
        );
        let chain = [
            (
                PickerMode::TransportFullFurrow,
                PickerEvent::ReachedHeadland,
                PickerMode::TransportFullHeadland,
            ),
            (
                PickerMode::TransportFullHeadland,
                PickerEvent::ReachedStation,
                PickerMode::IdleInQueue,
            ),
            (
                PickerMode::IdleInQueue,
                PickerEvent::Delivered,
                PickerMode::EmptyBackHeadland,
            ),
            (
                PickerMode::EmptyBackHeadland,
                PickerEvent::ReachedReturnFurrow,
                PickerMode::EmptyBackFurrow,
            ),
            (
                PickerMode::EmptyBackFurrow,
                PickerEvent::Resumed,
                PickerMode::Pick,
            ),
        ];
        for (mode, event, want) in chain {
            let p = picker_in(mode);
            assert_eq!(p.transition(event, FsmVariant::Extended).unwrap(), want);
        }
    }

    #[test]
    fn relocation_keeps_partial_tray() {
        let mut p = picker_in(PickerMode::Pick);
        p.tray_mass_g = 2000.0;
        assert_eq!(
            p.transition(PickerEvent::FurrowExhausted, FsmVariant::Extended).unwrap(),
            PickerMode::WalkPartlyFullHeadland
        );
        assert_eq!(
            p.transition(PickerEvent::FurrowExhausted, FsmVariant::Simple).unwrap(),
            PickerMode::WalkHeadland
        );
        p.tray_mass_g = 0.0;
        assert_eq!(
            p.transition(PickerEvent::FurrowExhausted, FsmVariant::Extended).unwrap(),
            PickerMode::WalkHeadland
        );
    }

    #[test]
    fn illegal_pairs_are_faults() {
        let p = picker_in(PickerMode::WaitForRobot);
        assert!(matches!(
            p.transition(PickerEvent::TrayFull, FsmVariant::Simple),
            Err(Error::IllegalTransition { .. })
        ));
        // Rejection does not exist in the simple variant.
        let p = picker_in(PickerMode::Pick);
        assert!(p.transition(PickerEvent::Rejected, FsmVariant::Simple).is_err());
    }
}
