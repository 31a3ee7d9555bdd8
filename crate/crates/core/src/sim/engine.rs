//! The harvest simulation loop: advances pickers and robots by a fixed
//! timestep, generates transport requests, invokes the configured dispatch
//! scheduler, executes dispatch commands, and records the trace.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::det::{
    derive_timeline, schedule_bab, schedule_srpt_convert, Schedule, SolverInstance,
};
use crate::dist::{sample_tray_params, ParamDistributions};
use crate::error::{Error, Result};
use crate::field::{
    active_station, manhattan_distance, next_furrow, one_way_travel_time, path_legs, FieldMap,
    Point, SpeedProfile,
};
use crate::msa::{
    consensus, dispatch_decision, get_samples, solve_scenario_exact, solve_scenario_srlpt,
    ConsensusPlan, DispatchView, ScenarioContext,
};
use crate::request::{
    make_perfect_request, make_stochastic_request, DeterministicRequest, FillSnapshot,
    GroundTruth, StochasticRequest, UncertaintyParams,
};

use super::picker::{step_picker, PickerEvent, PickerMode, PickerState};
use super::robot::{step_robot, CarriedTray, RobotEvent, RobotMode, RobotState};
use super::trace::{HarvestTrace, ServedBy, TraceEvent, TrayRow};

/// Which finite-state-machine edge set the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmVariant {
    /// Robot-served harvesting only.
    Simple,
    /// Adds request rejection, self-transport, and standoff dispatching.
    Extended,
}

/// Dispatch policy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    /// No robots are dispatched; every tray is self-transported.
    Manual,
    /// Requests fire only at the tray-full instant.
    Reactive,
    DeterministicBab,
    DeterministicSrptConvert,
    MsaExact,
    MsaSrlpt,
}

impl SchedulerKind {
    pub fn is_deterministic(self) -> bool {
        matches!(
            self,
            SchedulerKind::Reactive
                | SchedulerKind::DeterministicBab
                | SchedulerKind::DeterministicSrptConvert
        )
    }

    pub fn is_msa(self) -> bool {
        matches!(self, SchedulerKind::MsaExact | SchedulerKind::MsaSrlpt)
    }
}

/// Simulation constants of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub timestep_s: f64,
    pub tray_capacity_g: f64,
    pub load_time_s: f64,
    pub unload_time_s: f64,
    /// Extended variant: robots park this far short of the predicted
    /// full-tray location.
    pub robot_standoff_m: f64,
    pub crew_size: usize,
    pub robot_count: usize,
    pub speed_profile: SpeedProfile,
    /// Fill ratio at which a tray's transport request becomes visible.
    pub fr_request: f64,
    pub fsm_variant: FsmVariant,
    pub rng_seed: u64,
    /// Guard against non-terminating runs.
    #[serde(default = "default_step_ceiling")]
    pub step_ceiling: u64,
}

fn default_step_ceiling() -> u64 {
    4_000_000
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let field_err = |field: &str, reason: &str| Error::Config {
            field: format!("sim.{field}"),
            reason: reason.to_string(),
        };
        if self.timestep_s <= 0.0 {
            return Err(field_err("timestep_s", "must be > 0"));
        }
        if self.tray_capacity_g <= 0.0 {
            return Err(field_err("tray_capacity_g", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.fr_request) {
            return Err(field_err("fr_request", "must lie in [0, 1]"));
        }
        if self.robot_standoff_m < 0.0 {
            return Err(field_err("robot_standoff_m", "must be >= 0"));
        }
        if self.crew_size == 0 {
            return Err(field_err("crew_size", "must be >= 1"));
        }
        if self.load_time_s < 0.0 || self.unload_time_s < 0.0 {
            return Err(field_err("load_time_s/unload_time_s", "must be >= 0"));
        }
        self.speed_profile.validate()
    }
}

/// Scheduler selection plus its tuning knobs.
#[derive(Debug, Clone)]
pub struct SchedulerSpec {
    pub kind: SchedulerKind,
    /// MSA: number of sampled scenarios per plan.
    pub scenario_count: usize,
    /// Deterministic exact solver cap; larger instances fall back to
    /// SRPT-CONVERT for that invocation.
    pub exact_cap: usize,
    /// MSA exact scenario solver cap; larger scenarios use the heuristic.
    pub scenario_exact_cap: usize,
    /// Time grid of the exact scenario solver (s).
    pub scenario_grid_s: f64,
    /// Prediction uncertainty injected into stochastic requests.
    pub uncertainty: UncertaintyParams,
}

impl SchedulerSpec {
    pub fn new(kind: SchedulerKind) -> Self {
        Self {
            kind,
            scenario_count: 50,
            exact_cap: crate::det::BAB_CAP,
            scenario_exact_cap: crate::msa::SCENARIO_EXACT_CAP,
            scenario_grid_s: 1.0,
            uncertainty: UncertaintyParams::none(),
        }
    }
}

// Per-picker bookkeeping of the tray currently being filled.
#[derive(Debug, Clone)]
struct TrayProgress {
    tray_id: u64,
    started_at: f64,
    request_id: Option<u64>,
    requested_at: Option<f64>,
    full_at: Option<f64>,
    full_location: Option<Point>,
    request_distance_m: Option<f64>,
    exchange_started_at: Option<f64>,
    speed_samples: VecDeque<(f64, f64)>,
    next_sample_at: f64,
}

impl TrayProgress {
    fn new(tray_id: u64, now: f64) -> Self {
        Self {
            tray_id,
            started_at: now,
            request_id: None,
            requested_at: None,
            full_at: None,
            full_location: None,
            request_distance_m: None,
            exchange_started_at: None,
            speed_samples: VecDeque::new(),
            next_sample_at: now,
        }
    }
}

#[derive(Debug, Clone)]
struct LiveRequest {
    id: u64,
    picker: usize,
    det: Option<DeterministicRequest>,
    stoch: Option<StochasticRequest>,
    dispatched: bool,
    closed: bool,
    assigned_robot: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct PlannedDispatch {
    robot: usize,
    request_id: u64,
    target: Point,
    dispatch_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QueueAgent {
    Robot(usize),
    Picker(usize),
}

#[derive(Debug, Default)]
struct StationQueue {
    waiting: VecDeque<QueueAgent>,
    serving: Option<(QueueAgent, f64)>,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    field: FieldMap,
    dists: &'a ParamDistributions,
    sched: &'a SchedulerSpec,
    rng: ChaCha8Rng,
    now: f64,
    step: u64,
    pickers: Vec<PickerState>,
    trays: Vec<TrayProgress>,
    robots: Vec<RobotState>,
    furrow_unharvested: Vec<bool>,
    requests: Vec<LiveRequest>,
    planned: Vec<PlannedDispatch>,
    plan: Option<ConsensusPlan>,
    queue: StationQueue,
    events: Vec<TraceEvent>,
    tray_rows: Vec<TrayRow>,
    next_request_id: u64,
    next_tray_id: u64,
    new_request_flag: bool,
    robot_freed_flag: bool,
    mean_pick_time_s: f64,
    total_picked_g: f64,
    total_delivered_g: f64,
    request_count: u64,
    reject_count: u64,
    mean_walk_speed: f64,
}

/// Runs one seeded harvest to completion and returns the full trace.
///
/// Every tray is either robot-served or, in the extended variant,
/// self-transported after a rejection; the run ends when the whole block is
/// harvested and all trays are delivered.
pub fn run_harvest(
    cfg: &SimConfig,
    field: &FieldMap,
    dists: &ParamDistributions,
    scheduler: &SchedulerSpec,
) -> Result<HarvestTrace> {
    cfg.validate()?;
    field.validate()?;
    dists.validate()?;
    scheduler.uncertainty.validate()?;
    if cfg.fsm_variant == FsmVariant::Simple
        && (scheduler.kind == SchedulerKind::Manual || scheduler.kind.is_msa())
    {
        return Err(Error::Config {
            field: "scheduler.kind".into(),
            reason: "manual and MSA scheduling need the extended FSM (rejections)".into(),
        });
    }
    if cfg.robot_count == 0 && scheduler.kind != SchedulerKind::Manual {
        return Err(Error::Config {
            field: "sim.robot_count".into(),
            reason: "robot-served scheduling needs at least one robot".into(),
        });
    }

    let mut engine = Engine::new(cfg, field.clone(), dists, scheduler);
    engine.initialize()?;
    loop {
        if engine.finished() {
            break;
        }
        engine.step()?;
        if engine.step > cfg.step_ceiling {
            return Err(Error::SimFault {
                seed: cfg.rng_seed,
                reason: format!(
                    "step ceiling {} exceeded at t = {:.0} s; {} trays so far",
                    cfg.step_ceiling,
                    engine.now,
                    engine.tray_rows.len()
                ),
            });
        }
    }
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(
        cfg: &'a SimConfig,
        field: FieldMap,
        dists: &'a ParamDistributions,
        sched: &'a SchedulerSpec,
    ) -> Self {
        Self {
            cfg,
            field,
            dists,
            sched,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            now: 0.0,
            step: 0,
            pickers: Vec::new(),
            trays: Vec::new(),
            robots: Vec::new(),
            furrow_unharvested: Vec::new(),
            requests: Vec::new(),
            planned: Vec::new(),
            plan: None,
            queue: StationQueue::default(),
            events: Vec::new(),
            tray_rows: Vec::new(),
            next_request_id: 1,
            next_tray_id: 1,
            new_request_flag: false,
            robot_freed_flag: false,
            mean_pick_time_s: dists.pick_time.mean(),
            total_picked_g: 0.0,
            total_delivered_g: 0.0,
            request_count: 0,
            reject_count: 0,
            mean_walk_speed: dists.walk_speed.mean(),
        }
    }

    fn station(&self) -> Point {
        self.field.active_station()
    }

    fn record(&mut self, kind: &str, id: usize, transition: String, pos: Point, w: f64) {
        self.events.push(TraceEvent {
            t: self.now,
            agent_kind: kind.to_string(),
            agent_id: id,
            transition,
            x: pos.x,
            y: pos.y,
            w,
        });
    }

    fn apply_picker_event(&mut self, p: usize, event: PickerEvent) -> Result<()> {
        let from = self.pickers[p].mode;
        let to = self.pickers[p].transition(event, self.cfg.fsm_variant)?;
        let variant = self.cfg.fsm_variant;
        let label = format!(
            "{}->{} ({})",
            from.label(variant),
            to.label(variant),
            event.label()
        );
        self.pickers[p].mode = to;
        self.pickers[p].elapsed_s = 0.0;
        let pos = self.pickers[p].position;
        let w = self.pickers[p].tray_mass_g;
        self.record("picker", p, label, pos, w);
        Ok(())
    }

    fn apply_robot_event(&mut self, r: usize, event: RobotEvent) -> Result<()> {
        let from = self.robots[r].mode;
        let to = self.robots[r].transition(event, self.cfg.fsm_variant)?;
        let variant = self.cfg.fsm_variant;
        let label = format!(
            "{}->{} ({})",
            from.label(variant),
            to.label(variant),
            event.label()
        );
        self.robots[r].mode = to;
        self.robots[r].elapsed_s = 0.0;
        let pos = self.robots[r].position;
        self.record("robot", r, label, pos, 0.0);
        Ok(())
    }

    fn initialize(&mut self) -> Result<()> {
        let station = self.station();
        self.furrow_unharvested = vec![true; self.field.furrow_count];
        for p in 0..self.cfg.crew_size {
            let draw = sample_tray_params(self.dists, &mut self.rng);
            self.pickers.push(PickerState::new(p, station, draw));
            let tray_id = self.alloc_tray_id();
            self.trays.push(TrayProgress::new(tray_id, 0.0));
        }
        for r in 0..self.cfg.robot_count {
            self.robots.push(RobotState::new(r, station));
        }
        // Pickers claim their first furrows nearest the station, then walk.
        for p in 0..self.pickers.len() {
            match self.claim_nearest_furrow(station.x) {
                Some(furrow) => {
                    self.pickers[p].furrow = furrow;
                    self.apply_picker_event(p, PickerEvent::BeginHarvest)?;
                    let fx = self.field.furrow_x(furrow);
                    self.pickers[p].target = Some(Point::new(fx, 0.0));
                }
                None => {
                    self.apply_picker_event(p, PickerEvent::FieldDone)?;
                }
            }
        }
        for r in 0..self.robots.len() {
            self.robots[r].carried_tray = CarriedTray::Empty;
            self.apply_robot_event(r, RobotEvent::Activated)?;
        }
        Ok(())
    }

    fn alloc_tray_id(&mut self) -> u64 {
        let id = self.next_tray_id;
        self.next_tray_id += 1;
        id
    }

    fn claim_nearest_furrow(&mut self, x: f64) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, free) in self.furrow_unharvested.iter().enumerate() {
            if !free {
                continue;
            }
            let d = (self.field.furrow_x(i) - x).abs();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let furrow = best.map(|(_, i)| i)?;
        self.furrow_unharvested[furrow] = false;
        Some(furrow)
    }

    fn finished(&self) -> bool {
        self.pickers.iter().all(|p| p.mode == PickerMode::Stop)
            && self
                .robots
                .iter()
                .all(|r| matches!(r.mode, RobotMode::Available | RobotMode::Stop))
            && self.queue.waiting.is_empty()
            && self.queue.serving.is_none()
    }

    fn finish(mut self) -> HarvestTrace {
        let duration = self.now;
        for r in 0..self.robots.len() {
            if self.robots[r].mode == RobotMode::Available {
                let _ = self.apply_robot_event(r, RobotEvent::HarvestEnded);
            }
        }
        HarvestTrace {
            seed: self.cfg.rng_seed,
            timestep_s: self.cfg.timestep_s,
            tray_capacity_g: self.cfg.tray_capacity_g,
            trays: self.tray_rows,
            events: self.events,
            duration_s: duration,
            total_picked_g: self.total_picked_g,
            total_delivered_g: self.total_delivered_g,
            request_count: self.request_count,
            reject_count: self.reject_count,
        }
    }

    fn step(&mut self) -> Result<()> {
        self.step += 1;
        self.now = self.step as f64 * self.cfg.timestep_s;
        let dt = self.cfg.timestep_s;

        self.update_active_station();
        self.service_station_queue()?;

        // Advance pickers; collect fills for resolution after scheduling.
        let mut filled: Vec<usize> = Vec::new();
        for p in 0..self.pickers.len() {
            if self.pickers[p].mode == PickerMode::Stop {
                continue;
            }
            let (reached, tray_filled) =
                step_picker(&mut self.pickers[p], self.cfg.tray_capacity_g, dt);
            if tray_filled {
                let pos = self.pickers[p].position;
                let distance = manhattan_distance(self.station(), pos, &self.field)
                    .unwrap_or(f64::NAN);
                let tray = &mut self.trays[p];
                tray.full_at = Some(self.now);
                tray.full_location = Some(pos);
                tray.request_distance_m = Some(distance);
                self.total_picked_g += self.cfg.tray_capacity_g;
                filled.push(p);
            } else if reached {
                self.on_picker_reached(p)?;
            }
        }

        // Advance robots.
        for r in 0..self.robots.len() {
            if self.robots[r].mode == RobotMode::Stop {
                continue;
            }
            let reached = step_robot(&mut self.robots[r], self.cfg.speed_profile, dt);
            if reached {
                self.on_robot_reached(r)?;
            }
        }

        self.complete_exchanges(&filled)?;
        self.generate_requests(&filled)?;
        self.invoke_scheduler()?;
        self.execute_dispatches()?;
        self.resolve_fills(&filled)?;
        Ok(())
    }

    fn update_active_station(&mut self) {
        if self.field.station_positions.len() < 2 {
            return;
        }
        let positions: Vec<Point> = self
            .pickers
            .iter()
            .filter(|p| p.mode != PickerMode::Stop)
            .map(|p| p.position)
            .collect();
        if !positions.is_empty() {
            self.field.active_station_index = active_station(&self.field, &positions);
        }
    }

    fn service_station_queue(&mut self) -> Result<()> {
        if let Some((agent, end)) = self.queue.serving {
            if end <= self.now + 1e-9 {
                self.queue.serving = None;
                match agent {
                    QueueAgent::Robot(r) => {
                        self.total_delivered_g += self.cfg.tray_capacity_g;
                        self.robots[r].carried_tray = CarriedTray::Empty;
                        self.robots[r].assigned_request = None;
                        self.robots[r].busy_until_estimate = self.now;
                        self.apply_robot_event(r, RobotEvent::Unloaded)?;
                        self.robot_freed_flag = true;
                    }
                    QueueAgent::Picker(p) => {
                        self.total_delivered_g += self.cfg.tray_capacity_g;
                        self.apply_picker_event(p, PickerEvent::Delivered)?;
                        let resume = self.pickers[p].resume_point.expect("resume point set");
                        self.pickers[p].target = Some(Point::new(resume.x, 0.0));
                    }
                }
            }
        }
        if self.queue.serving.is_none() {
            if let Some(agent) = self.queue.waiting.pop_front() {
                self.queue.serving = Some((agent, self.now + self.cfg.unload_time_s));
            }
        }
        Ok(())
    }

    fn on_picker_reached(&mut self, p: usize) -> Result<()> {
        match self.pickers[p].mode {
            PickerMode::WalkHeadland | PickerMode::WalkPartlyFullHeadland => {
                self.apply_picker_event(p, PickerEvent::ReachedFurrow)?;
                let fx = self.field.furrow_x(self.pickers[p].furrow);
                self.pickers[p].target = Some(Point::new(fx, self.field.split_line_y));
            }
            PickerMode::WalkFurrowIn | PickerMode::WalkPartlyFullFurrow => {
                self.apply_picker_event(p, PickerEvent::ReachedSplitline)?;
                let fx = self.field.furrow_x(self.pickers[p].furrow);
                self.pickers[p].target = Some(Point::new(fx, 0.0));
                // Relocation invalidates the regression window.
                self.trays[p].speed_samples.clear();
            }
            PickerMode::Pick => {
                // Picked through to the headland end: furrow done.
                self.relocate_or_stop(p)?;
            }
            PickerMode::TransportFullFurrow => {
                self.apply_picker_event(p, PickerEvent::ReachedHeadland)?;
                let station = self.station();
                self.pickers[p].target = Some(station);
            }
            PickerMode::TransportFullHeadland => {
                self.apply_picker_event(p, PickerEvent::ReachedStation)?;
                self.queue.waiting.push_back(QueueAgent::Picker(p));
            }
            PickerMode::EmptyBackHeadland => {
                self.apply_picker_event(p, PickerEvent::ReachedReturnFurrow)?;
                let resume = self.pickers[p].resume_point.expect("resume point set");
                self.pickers[p].target = Some(resume);
            }
            PickerMode::EmptyBackFurrow => {
                self.apply_picker_event(p, PickerEvent::Resumed)?;
                self.finish_tray(p, ServedBy::SelfTransport, 0.0)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Claims the next furrow or stops the picker at field exhaustion.
    fn relocate_or_stop(&mut self, p: usize) -> Result<()> {
        let current = self.pickers[p].furrow;
        match next_furrow(current, &self.furrow_unharvested, &self.field) {
            Ok(next) => {
                self.furrow_unharvested[next] = false;
                self.orphan_open_request(p)?;
                self.apply_picker_event(p, PickerEvent::FurrowExhausted)?;
                self.pickers[p].furrow = next;
                let fx = self.field.furrow_x(next);
                self.pickers[p].target = Some(Point::new(fx, 0.0));
                self.trays[p].speed_samples.clear();
            }
            Err(Error::FieldExhausted) => {
                self.orphan_open_request(p)?;
                // A partly filled final tray is recorded but never delivered.
                if self.pickers[p].tray_mass_g > 0.0 {
                    let tray = &self.trays[p];
                    self.total_picked_g += self.pickers[p].tray_mass_g;
                    self.tray_rows.push(TrayRow {
                        tray_id: tray.tray_id,
                        picker_id: p,
                        started_at: tray.started_at,
                        full_at: self.now,
                        resumed_at: self.now,
                        full_location: self.pickers[p].position,
                        served_by: ServedBy::SelfTransport,
                        wait_s: 0.0,
                        request_distance_m: 0.0,
                        requested_at: None,
                        mass_g: self.pickers[p].tray_mass_g,
                        partial: true,
                    });
                }
                self.apply_picker_event(p, PickerEvent::FieldDone)?;
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    /// Closes a still-open request when its picker leaves the furrow; an
    /// en-route or waiting robot returns to the station with its empty tray.
    fn orphan_open_request(&mut self, p: usize) -> Result<()> {
        let Some(req_id) = self.trays[p].request_id else {
            return Ok(());
        };
        let Some(idx) = self.requests.iter().position(|r| r.id == req_id) else {
            return Ok(());
        };
        if self.requests[idx].closed && self.requests[idx].assigned_robot.is_none() {
            return Ok(());
        }
        let robot = self.requests[idx].assigned_robot;
        self.requests[idx].closed = true;
        self.requests[idx].assigned_robot = None;
        if let Some(r) = robot {
            self.apply_robot_event(r, RobotEvent::PickerLeftFurrow)?;
            self.robots[r].assigned_request = None;
            self.robots[r].target = Some(self.station());
            self.record(
                "scheduler",
                r,
                format!("abandon request {req_id} (picker left furrow)"),
                self.robots[r].position,
                0.0,
            );
        }
        // The tray keeps filling; a fresh decision happens when it is full.
        self.trays[p].request_id = None;
        Ok(())
    }

    fn on_robot_reached(&mut self, r: usize) -> Result<()> {
        match self.robots[r].mode {
            RobotMode::TravelToDispatch | RobotMode::DriveToFullTray => {
                let req_id = self.robots[r].assigned_request.expect("assigned");
                let picker = self
                    .requests
                    .iter()
                    .find(|q| q.id == req_id)
                    .map(|q| q.picker)
                    .expect("request exists");
                let tray_full = self.trays[picker].full_at.is_some()
                    && self.trays[picker].request_id == Some(req_id);
                let full_loc = self.trays[picker].full_location;
                let picker_waiting = self.pickers[picker].mode == PickerMode::WaitForRobot;
                if tray_full && picker_waiting {
                    let at_tray = full_loc
                        .map(|loc| points_equal(self.robots[r].position, loc))
                        .unwrap_or(false);
                    if at_tray {
                        self.apply_robot_event(r, RobotEvent::ArrivedAtTray)?;
                        self.begin_exchange(picker, r)?;
                    } else {
                        // Arrived at a stale target (standoff) after the
                        // fill: close the remaining gap.
                        self.robots[r].target = full_loc;
                    }
                } else if self.robots[r].mode == RobotMode::TravelToDispatch {
                    self.apply_robot_event(r, RobotEvent::ArrivedAtStandoff)?;
                    self.robots[r].target = None;
                }
                // Otherwise the picker has not transitioned yet this step;
                // the fill resolution starts the exchange.
            }
            RobotMode::TransportFullBack => {
                self.apply_robot_event(r, RobotEvent::ReachedStation)?;
                self.queue.waiting.push_back(QueueAgent::Robot(r));
                self.robots[r].target = None;
            }
            RobotMode::EmptyTrayBack => {
                self.apply_robot_event(r, RobotEvent::ReachedStation)?;
                self.robots[r].busy_until_estimate = self.now;
                self.robots[r].target = None;
                self.robot_freed_flag = true;
            }
            _ => {}
        }
        Ok(())
    }

    /// Starts the tray exchange between a waiting picker and an arrived
    /// robot; the picker's wait ends here.
    fn begin_exchange(&mut self, p: usize, r: usize) -> Result<()> {
        self.apply_picker_event(p, PickerEvent::RobotArrived)?;
        self.trays[p].exchange_started_at = Some(self.now);
        self.robots[r].target = None;
        Ok(())
    }

    /// Finishes exchanges whose load time has elapsed, then resolves any
    /// exchange that must start because a robot was already in place when
    /// the tray filled.
    fn complete_exchanges(&mut self, _filled: &[usize]) -> Result<()> {
        for p in 0..self.pickers.len() {
            if self.pickers[p].mode != PickerMode::Exchange {
                continue;
            }
            let Some(start) = self.trays[p].exchange_started_at else {
                continue;
            };
            if self.now + 1e-9 < start + self.cfg.load_time_s {
                continue;
            }
            // Identify the serving robot.
            let req_id = self.trays[p].request_id.expect("request recorded");
            let robot = self
                .requests
                .iter()
                .find(|q| q.id == req_id)
                .and_then(|q| q.assigned_robot)
                .expect("exchange has a robot");
            let full_at = self.trays[p].full_at.expect("tray full");
            let wait = self.trays[p]
                .exchange_started_at
                .map(|s| s - full_at)
                .unwrap_or(0.0);
            self.apply_picker_event(p, PickerEvent::ExchangeDone)?;
            self.finish_tray(p, ServedBy::Robot(robot), wait)?;

            self.robots[robot].carried_tray = CarriedTray::Full;
            self.apply_robot_event(robot, RobotEvent::ExchangeDone)?;
            let station = self.station();
            self.robots[robot].target = Some(station);
            let req_idx = self.requests.iter().position(|q| q.id == req_id).unwrap();
            self.requests[req_idx].assigned_robot = None;
            self.requests[req_idx].closed = true;
        }
        Ok(())
    }

    /// Records the completed tray row and starts the next tray.
    fn finish_tray(&mut self, p: usize, served_by: ServedBy, wait_s: f64) -> Result<()> {
        let tray = &self.trays[p];
        let full_at = tray.full_at.expect("tray full");
        let full_location = tray.full_location.expect("full location");
        self.tray_rows.push(TrayRow {
            tray_id: tray.tray_id,
            picker_id: p,
            started_at: tray.started_at,
            full_at,
            resumed_at: self.now,
            full_location,
            served_by,
            wait_s,
            request_distance_m: tray.request_distance_m.unwrap_or(0.0),
            requested_at: tray.requested_at,
            mass_g: self.cfg.tray_capacity_g,
            partial: false,
        });
        // Fresh tray: new draw, mass zero, clean request state.
        let draw = sample_tray_params(self.dists, &mut self.rng);
        self.pickers[p].draw = draw;
        self.pickers[p].tray_mass_g = 0.0;
        self.pickers[p].served_flag = false;
        self.pickers[p].reject_flag = false;
        self.pickers[p].resume_point = None;
        let id = self.alloc_tray_id();
        self.trays[p] = TrayProgress::new(id, self.now);
        self.trays[p].next_sample_at = self.now;
        // Picking resumes toward the headland end of the furrow.
        let fx = self.field.furrow_x(self.pickers[p].furrow);
        self.pickers[p].target = Some(Point::new(fx, 0.0));
        // The furrow may have ended exactly at the exchange point.
        if self.pickers[p].position.y <= 1e-9 {
            self.relocate_or_stop(p)?;
        }
        Ok(())
    }

    /// Emits transport requests for pickers whose fill ratio crossed the
    /// request threshold, and collects regression samples for the
    /// stochastic predictor.
    fn generate_requests(&mut self, filled: &[usize]) -> Result<()> {
        if self.sched.kind == SchedulerKind::Manual {
            return Ok(());
        }
        for p in 0..self.pickers.len() {
            let picking = self.pickers[p].is_picking();
            let just_filled = filled.contains(&p);
            if !picking && !just_filled {
                continue;
            }
            if self.trays[p].request_id.is_some() {
                continue;
            }
            // 1 Hz noisy location samples while picking (stochastic mode).
            if self.sched.kind.is_msa() && picking && !just_filled {
                if self.now + 1e-9 >= self.trays[p].next_sample_at {
                    let l = self.sched.uncertainty.loc_noise_halfwidth_m;
                    let noise = if l > 0.0 {
                        self.rng.random_range(-l..=l)
                    } else {
                        0.0
                    };
                    let y = self.pickers[p].position.y + noise;
                    self.trays[p].speed_samples.push_back((self.now, y));
                    while self.trays[p].speed_samples.len() > 60 {
                        self.trays[p].speed_samples.pop_front();
                    }
                    self.trays[p].next_sample_at += 1.0;
                }
            }

            let snapshot = FillSnapshot {
                picker_id: p,
                position: self.pickers[p].position,
                tray_mass_g: self.pickers[p].tray_mass_g,
                tray_capacity_g: self.cfg.tray_capacity_g,
                pick_speed: self.pickers[p].draw.pick_speed,
                picking_rate: self.pickers[p].draw.picking_rate(self.cfg.tray_capacity_g),
            };
            let fr_gate = if self.sched.kind == SchedulerKind::Reactive {
                1.0
            } else {
                self.cfg.fr_request
            };
            if self.sched.kind.is_deterministic() {
                if let Some(req) = make_perfect_request(&snapshot, fr_gate, self.now, self.next_request_id)
                {
                    self.push_request(p, Some(req), None)?;
                }
            } else if self.sched.kind.is_msa() {
                if snapshot.fill_ratio() < fr_gate {
                    continue;
                }
                // Withhold the prediction while the estimated full location
                // falls beyond the current furrow, unless the tray is
                // already full.
                let truth = GroundTruth {
                    remaining_fill_s: snapshot.remaining_fill_s(),
                    speed_along_row: -self.pickers[p].draw.pick_speed,
                    current_location: snapshot.position,
                };
                let samples: Vec<(f64, f64)> =
                    self.trays[p].speed_samples.iter().copied().collect();
                let req = make_stochastic_request(
                    self.next_request_id,
                    p,
                    self.now,
                    &truth,
                    &self.sched.uncertainty,
                    self.mean_pick_time_s,
                    &samples,
                    &mut self.rng,
                );
                let est_y = snapshot.position.y
                    + req.speed_along_row.mean * req.fill_time.mean.max(0.0);
                if !just_filled && est_y < 0.0 {
                    continue;
                }
                self.push_request(p, None, Some(req))?;
            }
        }
        Ok(())
    }

    fn push_request(
        &mut self,
        p: usize,
        det: Option<DeterministicRequest>,
        stoch: Option<StochasticRequest>,
    ) -> Result<()> {
        let id = self.next_request_id;
        self.next_request_id += 1;
        self.request_count += 1;
        self.trays[p].request_id = Some(id);
        self.trays[p].requested_at = Some(self.now);
        let pos = self.pickers[p].position;
        self.record(
            "scheduler",
            p,
            format!("request {id} created"),
            pos,
            self.pickers[p].tray_mass_g,
        );
        self.requests.push(LiveRequest {
            id,
            picker: p,
            det,
            stoch,
            dispatched: false,
            closed: false,
            assigned_robot: None,
        });
        self.new_request_flag = true;
        Ok(())
    }

    fn open_requests(&self) -> impl Iterator<Item = &LiveRequest> {
        self.requests.iter().filter(|r| !r.dispatched && !r.closed)
    }

    fn invoke_scheduler(&mut self) -> Result<()> {
        if self.sched.kind == SchedulerKind::Manual {
            return Ok(());
        }
        let any_available = self.robots.iter().any(|r| r.mode == RobotMode::Available);
        let open_exists = self.open_requests().next().is_some();
        let trigger = (self.new_request_flag && any_available)
            || (self.robot_freed_flag && open_exists);
        self.new_request_flag = false;
        self.robot_freed_flag = false;
        if !trigger || !open_exists {
            return Ok(());
        }
        if self.sched.kind.is_deterministic() {
            self.plan_deterministic()?;
        } else {
            self.plan_msa()?;
        }
        Ok(())
    }

    /// Solves the parallel-machine model over the open requests and stores
    /// the dispatch tuples; already-sent commands are never revoked.
    fn plan_deterministic(&mut self) -> Result<()> {
        let station = self.station();
        let mut timelines = Vec::new();
        let mut targets: Vec<(u64, Point)> = Vec::new();
        for req in self.requests.iter().filter(|r| !r.dispatched && !r.closed) {
            let det = req.det.as_ref().expect("deterministic request");
            let timeline = derive_timeline(
                det,
                station,
                &self.field,
                self.cfg.speed_profile,
                self.cfg.load_time_s,
                self.cfg.unload_time_s,
                self.now,
            )?;
            targets.push((req.id, det.full_location));
            timelines.push(timeline);
        }
        let delays: Vec<f64> = self
            .robots
            .iter()
            .map(|r| r.availability_delay(self.now))
            .collect();
        let inst = SolverInstance::from_timelines(&timelines, &delays, self.now);
        let schedule: Schedule = match self.sched.kind {
            SchedulerKind::DeterministicBab => match schedule_bab(&inst, self.sched.exact_cap) {
                Ok(s) => s,
                Err(Error::SizeCap { .. }) => schedule_srpt_convert(&inst),
                Err(e) => return Err(e),
            },
            _ => schedule_srpt_convert(&inst),
        };
        self.planned.clear();
        for dispatch in schedule.dispatches() {
            let target = targets
                .iter()
                .find(|(id, _)| *id == dispatch.job_id)
                .map(|(_, t)| *t)
                .expect("target for scheduled job");
            self.planned.push(PlannedDispatch {
                robot: dispatch.robot,
                request_id: dispatch.job_id,
                target,
                dispatch_at: dispatch.dispatch_at,
            });
        }
        Ok(())
    }

    /// Samples scenarios from the live stochastic requests, solves each, and
    /// stores the consensus plan.
    fn plan_msa(&mut self) -> Result<()> {
        let station = self.station();
        let open: Vec<StochasticRequest> = self
            .open_requests()
            .map(|r| {
                let mut s = *r.stoch.as_ref().expect("stochastic request");
                // The scheduler sees the picker's current location.
                s.current_location = self.pickers[r.picker].position;
                s
            })
            .collect();
        if open.is_empty() {
            return Ok(());
        }
        let walk = self.mean_walk_speed;
        let walk_of = move |_picker: usize| walk;
        let ctx = ScenarioContext {
            field: &self.field,
            station,
            robot_profile: self.cfg.speed_profile,
            load_s: self.cfg.load_time_s,
            unload_s: self.cfg.unload_time_s,
            walk_speed_of: &walk_of,
            now: self.now,
        };
        let delays: Vec<f64> = self
            .robots
            .iter()
            .map(|r| self.now + r.availability_delay(self.now))
            .collect();
        let scenarios = get_samples(&open, self.sched.scenario_count, &ctx, &mut self.rng)?;
        let mut solutions = Vec::with_capacity(scenarios.len());
        for scn in &scenarios {
            let sol = if self.sched.kind == SchedulerKind::MsaExact
                && scn.requests.len() <= self.sched.scenario_exact_cap
            {
                solve_scenario_exact(
                    scn,
                    &delays,
                    self.now,
                    self.sched.scenario_exact_cap,
                    self.sched.scenario_grid_s,
                    true,
                )?
            } else {
                solve_scenario_srlpt(scn, &delays, self.now)
            };
            solutions.push(sol);
        }
        let expected_full: std::collections::HashMap<u64, f64> = open
            .iter()
            .map(|r| (r.id, r.created_at + r.fill_time.mean))
            .collect();
        self.plan = Some(consensus(&solutions, &expected_full));
        Ok(())
    }

    fn execute_dispatches(&mut self) -> Result<()> {
        if self.sched.kind.is_deterministic() {
            self.execute_planned()?;
        } else if self.sched.kind.is_msa() {
            self.execute_msa()?;
        }
        Ok(())
    }

    fn execute_planned(&mut self) -> Result<()> {
        let due: Vec<PlannedDispatch> = self
            .planned
            .iter()
            .copied()
            .filter(|d| d.dispatch_at <= self.now + 1e-9)
            .collect();
        for dispatch in due {
            let robot_available = self.robots[dispatch.robot].mode == RobotMode::Available;
            let req_idx = self
                .requests
                .iter()
                .position(|r| r.id == dispatch.request_id);
            let Some(req_idx) = req_idx else {
                self.planned.retain(|d| d.request_id != dispatch.request_id);
                continue;
            };
            if self.requests[req_idx].closed || self.requests[req_idx].dispatched {
                self.planned.retain(|d| d.request_id != dispatch.request_id);
                continue;
            }
            if !robot_available {
                continue; // sent as soon as the robot frees
            }
            let picker = self.requests[req_idx].picker;
            let target = match self.trays[picker].full_location {
                // Tray already full: drive straight to it.
                Some(loc) if self.trays[picker].request_id == Some(dispatch.request_id) => loc,
                _ if self.cfg.fsm_variant == FsmVariant::Extended => Point::new(
                    dispatch.target.x,
                    (dispatch.target.y - self.cfg.robot_standoff_m).max(0.0),
                ),
                _ => dispatch.target,
            };
            self.send_robot(dispatch.robot, req_idx, target)?;
            self.planned.retain(|d| d.request_id != dispatch.request_id);
        }
        Ok(())
    }

    fn execute_msa(&mut self) -> Result<()> {
        let Some(plan) = self.plan.clone() else {
            return Ok(());
        };
        let station = self.station();
        let walk = self.mean_walk_speed;
        let walk_of = move |_picker: usize| walk;
        let ctx = ScenarioContext {
            field: &self.field,
            station,
            robot_profile: self.cfg.speed_profile,
            load_s: self.cfg.load_time_s,
            unload_s: self.cfg.unload_time_s,
            walk_speed_of: &walk_of,
            now: self.now,
        };
        let mut views = Vec::new();
        for req in self.requests.iter().filter(|r| !r.dispatched && !r.closed) {
            let mut stoch = *req.stoch.as_ref().expect("stochastic request");
            stoch.current_location = self.pickers[req.picker].position;
            let expected = ctx.expected(&stoch)?;
            views.push(DispatchView {
                id: req.id,
                expected_full_at: expected.full_at,
                expected_release_at: (expected.full_at - expected.one_way_s).max(self.now),
                target: expected.full_location,
                reported_full: self.trays[req.picker].full_at.is_some(),
                assigned: req.assigned_robot.is_some(),
            });
        }
        let available: Vec<usize> = self
            .robots
            .iter()
            .filter(|r| r.mode == RobotMode::Available)
            .map(|r| r.id)
            .collect();
        let (commands, rejects) = dispatch_decision(&plan, &views, &available, self.now);
        for cmd in commands {
            let req_idx = self
                .requests
                .iter()
                .position(|r| r.id == cmd.request_id)
                .expect("command for live request");
            let picker = self.requests[req_idx].picker;
            let target = match self.trays[picker].full_location {
                // Tray already full: drive straight to it.
                Some(loc) if self.trays[picker].request_id == Some(cmd.request_id) => loc,
                _ => Point::new(
                    cmd.target.x,
                    (cmd.target.y - self.cfg.robot_standoff_m).max(0.0),
                ),
            };
            self.send_robot(cmd.robot, req_idx, target)?;
        }
        for id in rejects {
            let req_idx = self
                .requests
                .iter()
                .position(|r| r.id == id)
                .expect("reject for live request");
            self.requests[req_idx].closed = true;
            let picker = self.requests[req_idx].picker;
            self.pickers[picker].reject_flag = true;
            self.reject_count += 1;
            let pos = self.pickers[picker].position;
            self.record("scheduler", picker, format!("request {id} rejected"), pos, 0.0);
        }
        Ok(())
    }

    fn send_robot(&mut self, robot: usize, req_idx: usize, target: Point) -> Result<()> {
        let req_id = self.requests[req_idx].id;
        let picker = self.requests[req_idx].picker;
        self.requests[req_idx].dispatched = true;
        self.requests[req_idx].assigned_robot = Some(robot);
        self.pickers[picker].served_flag = true;
        self.apply_robot_event(robot, RobotEvent::Dispatch)?;
        self.robots[robot].assigned_request = Some(req_id);
        self.robots[robot].target = Some(target);
        // Availability model: two one-way trips plus load and unload.
        let legs = path_legs(self.station(), target, &self.field)?;
        let one_way = one_way_travel_time(legs.headland, legs.furrow, self.cfg.speed_profile);
        self.robots[robot].busy_until_estimate = self.now
            + 2.0 * one_way
            + self.cfg.load_time_s
            + self.cfg.unload_time_s;
        let pos = self.robots[robot].position;
        self.record(
            "scheduler",
            robot,
            format!("dispatch robot {robot} to request {req_id} at ({:.2}, {:.2})", target.x, target.y),
            pos,
            0.0,
        );
        Ok(())
    }

    /// Resolves trays that filled this step: the picker either waits for an
    /// assigned robot or self-transports after a rejection; a robot already
    /// in place starts the exchange immediately.
    fn resolve_fills(&mut self, filled: &[usize]) -> Result<()> {
        for &p in filled {
            let req = self.trays[p]
                .request_id
                .and_then(|id| self.requests.iter().position(|r| r.id == id));
            let assigned = req.and_then(|i| self.requests[i].assigned_robot);
            match self.sched.kind {
                SchedulerKind::Manual => {
                    self.start_self_transport(p)?;
                }
                _ => {
                    if let Some(robot) = assigned {
                        self.apply_picker_event(p, PickerEvent::TrayFull)?;
                        self.notify_robot_tray_full(robot, p)?;
                    } else if self.sched.kind.is_deterministic() {
                        // Simple-variant pickers wait for a future dispatch.
                        self.apply_picker_event(p, PickerEvent::TrayFull)?;
                    } else {
                        // MSA: tray full with no robot assigned or en route.
                        if let Some(i) = req {
                            if !self.requests[i].closed {
                                self.requests[i].closed = true;
                                self.reject_count += 1;
                                let pos = self.pickers[p].position;
                                let id = self.requests[i].id;
                                self.record(
                                    "scheduler",
                                    p,
                                    format!("request {id} rejected (full, unserved)"),
                                    pos,
                                    0.0,
                                );
                            }
                        }
                        self.start_self_transport(p)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn start_self_transport(&mut self, p: usize) -> Result<()> {
        self.pickers[p].resume_point = Some(self.pickers[p].position);
        self.apply_picker_event(p, PickerEvent::Rejected)?;
        let fx = self.pickers[p].position.x;
        self.pickers[p].target = Some(Point::new(fx, 0.0));
        Ok(())
    }

    /// Reacts a robot to its picker's tray filling: a waiting robot drives
    /// to the actual full location (extended) or exchanges in place
    /// (simple); an en-route robot retargets to the actual location.
    fn notify_robot_tray_full(&mut self, robot: usize, p: usize) -> Result<()> {
        let full_loc = self.trays[p].full_location.expect("full location");
        match self.robots[robot].mode {
            RobotMode::WaitAtDispatch => {
                if self.cfg.fsm_variant == FsmVariant::Simple {
                    self.apply_robot_event(robot, RobotEvent::TrayFilled)?;
                    self.begin_exchange(p, robot)?;
                } else {
                    self.apply_robot_event(robot, RobotEvent::TrayFilled)?;
                    self.robots[robot].target = Some(full_loc);
                    // Already in place: start the exchange without a drive.
                    if points_equal(self.robots[robot].position, full_loc) {
                        self.apply_robot_event(robot, RobotEvent::ArrivedAtTray)?;
                        self.begin_exchange(p, robot)?;
                    }
                }
            }
            RobotMode::TravelToDispatch => {
                self.robots[robot].target = Some(full_loc);
            }
            _ => {}
        }
        Ok(())
    }
}

fn points_equal(a: Point, b: Point) -> bool {
    (a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9
}
