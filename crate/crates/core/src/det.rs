//! Deterministic predictive dispatch scheduling.
//!
//! Serving one tray-transport request occupies one robot for a fixed process
//! time (travel out, load, travel back, unload), and a request only needs the
//! robot at its release time (full-tray time minus one-way travel). The robot
//! team therefore schedules as identical parallel machines with release
//! dates, minimizing the sum of completion times; minimizing total picker
//! waiting time picks the same schedule because the two objectives differ by
//! a schedule-independent constant.
//!
//! Solvers: an exact branch-and-bound with two relaxation lower bounds, the
//! SRPT-CONVERT approximation (preemptive relaxation order + non-preemptive
//! list scheduling), and an exhaustive enumeration used as a testing oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::{one_way_travel_time, path_legs, FieldMap, Point, SpeedProfile};
use crate::request::DeterministicRequest;

/// Default cap on the exact solver's instance size.
pub const BAB_CAP: usize = 12;
/// Cap on the brute-force oracle's instance size.
pub const BRUTE_CAP: usize = 8;

/// Derived timing of one request: geometry-dependent constants plus, once
/// scheduled, the dispatch/arrival/completion instants.
#[derive(Debug, Clone)]
pub struct RequestTimeline {
    pub request_id: u64,
    /// One-way robot travel time from the active station to the request (s).
    pub one_way_s: f64,
    /// Latest dispatch postponement that still reaches the picker at the
    /// full-tray instant: `max(remaining_fill - one_way, 0)`.
    pub release_delay_s: f64,
    /// Robot busy time per request: `2 * one_way + load + unload`.
    pub process_s: f64,
    /// Absolute release instant (`now + release_delay_s`).
    pub release_at: f64,
    pub dispatch_at: Option<f64>,
    pub arrival_at: Option<f64>,
    pub completes_at: Option<f64>,
    pub wait_s: Option<f64>,
}

/// Builds the timeline constants for a request as seen at time `now`.
pub fn derive_timeline(
    req: &DeterministicRequest,
    station: Point,
    field: &FieldMap,
    profile: SpeedProfile,
    load_s: f64,
    unload_s: f64,
    now: f64,
) -> Result<RequestTimeline> {
    let legs = path_legs(station, req.full_location, field)?;
    let one_way = one_way_travel_time(legs.headland, legs.furrow, profile);
    let remaining_fill = (req.created_at + req.remaining_fill_s - now).max(0.0);
    let release_delay = (remaining_fill - one_way).max(0.0);
    Ok(RequestTimeline {
        request_id: req.id,
        one_way_s: one_way,
        release_delay_s: release_delay,
        process_s: 2.0 * one_way + load_s + unload_s,
        release_at: now + release_delay,
        dispatch_at: None,
        arrival_at: None,
        completes_at: None,
        wait_s: None,
    })
}

/// One job as seen by the solvers: absolute release instant and process time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverJob {
    pub id: u64,
    pub release_at: f64,
    pub process_s: f64,
}

impl SolverJob {
    pub fn new(id: u64, release_at: f64, process_s: f64) -> Self {
        Self { id, release_at, process_s }
    }
}

/// A solver instance: the jobs plus each robot's absolute availability
/// instant (`now` for an idle robot, its predicted completion otherwise).
#[derive(Debug, Clone)]
pub struct SolverInstance {
    pub jobs: Vec<SolverJob>,
    pub robot_available_at: Vec<f64>,
    pub now: f64,
}

impl SolverInstance {
    pub fn new(jobs: Vec<SolverJob>, robot_available_at: Vec<f64>, now: f64) -> Self {
        Self { jobs, robot_available_at, now }
    }

    fn timelines_to_jobs(timelines: &[RequestTimeline]) -> Vec<SolverJob> {
        timelines
            .iter()
            .map(|t| SolverJob::new(t.request_id, t.release_at, t.process_s))
            .collect()
    }

    /// Instance built from request timelines and per-robot availability
    /// delays relative to `now`.
    pub fn from_timelines(
        timelines: &[RequestTimeline],
        availability_delays: &[f64],
        now: f64,
    ) -> Self {
        Self {
            jobs: Self::timelines_to_jobs(timelines),
            robot_available_at: availability_delays.iter().map(|d| now + d.max(0.0)).collect(),
            now,
        }
    }
}

/// One dispatch in a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledJob {
    pub job_id: u64,
    pub robot: usize,
    pub dispatch_at: f64,
    pub completes_at: f64,
}

/// A complete non-preemptive schedule: per-robot ordered dispatch sequences
/// and the sum of completion times.
#[derive(Debug, Clone)]
pub struct Schedule {
    /// Dispatches ordered per robot.
    pub per_robot: Vec<Vec<ScheduledJob>>,
    /// Sum of completion times, accumulated in job-id order.
    pub objective: f64,
}

impl Schedule {
    fn empty(robots: usize) -> Self {
        Self {
            per_robot: vec![Vec::new(); robots],
            objective: 0.0,
        }
    }

    /// Robot assigned to each job id.
    pub fn assignment(&self) -> HashMap<u64, usize> {
        let mut map = HashMap::new();
        for (r, seq) in self.per_robot.iter().enumerate() {
            for s in seq {
                map.insert(s.job_id, r);
            }
        }
        map
    }

    /// All dispatches in dispatch-time order (ties by job id).
    pub fn dispatches(&self) -> Vec<ScheduledJob> {
        let mut all: Vec<ScheduledJob> = self.per_robot.iter().flatten().copied().collect();
        all.sort_by(|a, b| {
            a.dispatch_at
                .partial_cmp(&b.dispatch_at)
                .unwrap_or(Ordering::Equal)
                .then(a.job_id.cmp(&b.job_id))
        });
        all
    }

    /// Sum of picker waiting times implied by this schedule
    /// (`completion - process - release` per job).
    pub fn total_wait(&self, inst: &SolverInstance) -> f64 {
        let release: HashMap<u64, f64> =
            inst.jobs.iter().map(|j| (j.id, j.release_at)).collect();
        let process: HashMap<u64, f64> =
            inst.jobs.iter().map(|j| (j.id, j.process_s)).collect();
        self.per_robot
            .iter()
            .flatten()
            .map(|s| s.completes_at - process[&s.job_id] - release[&s.job_id])
            .sum()
    }
}

/// Sums completions in job-id order so that equal schedules produce
/// bit-identical objectives regardless of the solver that found them.
fn objective_of(per_robot: &[Vec<ScheduledJob>], jobs: &[SolverJob]) -> f64 {
    let mut completion: HashMap<u64, f64> = HashMap::new();
    for seq in per_robot {
        for s in seq {
            completion.insert(s.job_id, s.completes_at);
        }
    }
    jobs.iter().map(|j| completion[&j.id]).sum()
}

/// Lower bound from relaxing all release dates: shortest-processing-time
/// list scheduling on the availability-constrained machines.
pub fn lb_no_release(jobs: &[SolverJob], robot_available_at: &[f64]) -> f64 {
    if jobs.is_empty() {
        return 0.0;
    }
    let mut order: Vec<&SolverJob> = jobs.iter().collect();
    order.sort_by(|a, b| {
        a.process_s
            .partial_cmp(&b.process_s)
            .unwrap_or(Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let mut free = robot_available_at.to_vec();
    let mut total = 0.0;
    for job in order {
        let (r, _) = free
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
            .expect("at least one robot");
        let done = free[r] + job.process_s;
        free[r] = done;
        total += done;
    }
    total
}

/// Lower bound from allowing preemption and job splitting: the released job
/// with the shortest remaining work runs on every available machine at once,
/// interrupted when a strictly shorter job releases. Equivalent to shortest
/// remaining processing time on one machine whose speed is the number of
/// available robots, so the resulting sum of completions bounds the
/// non-preemptive optimum from below.
pub fn lb_preemptive_srpt(jobs: &[SolverJob], robot_available_at: &[f64]) -> f64 {
    if jobs.is_empty() {
        return 0.0;
    }
    let mut remaining: Vec<f64> = jobs.iter().map(|j| j.process_s).collect();
    let mut done = vec![false; jobs.len()];
    let mut total = 0.0;
    let mut finished = 0usize;

    // Start at the earliest event of any kind.
    let min_avail = robot_available_at
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let min_release = jobs
        .iter()
        .map(|j| j.release_at)
        .fold(f64::INFINITY, f64::min);
    let mut t = f64::min(min_avail, min_release);

    while finished < jobs.len() {
        let rate = robot_available_at.iter().filter(|&&a| a <= t + 1e-12).count() as f64;
        // Shortest remaining released job.
        let current = (0..jobs.len())
            .filter(|&i| !done[i] && jobs[i].release_at <= t + 1e-12)
            .min_by(|&a, &b| {
                remaining[a]
                    .partial_cmp(&remaining[b])
                    .unwrap_or(Ordering::Equal)
                    .then(jobs[a].id.cmp(&jobs[b].id))
            });

        // Next instant the machine set or the released set changes.
        let next_event = robot_available_at
            .iter()
            .copied()
            .filter(|&a| a > t + 1e-12)
            .chain(
                (0..jobs.len())
                    .filter(|&i| !done[i] && jobs[i].release_at > t + 1e-12)
                    .map(|i| jobs[i].release_at),
            )
            .fold(f64::INFINITY, f64::min);

        match current {
            None => {
                debug_assert!(next_event.is_finite(), "idle with no future event");
                t = next_event;
            }
            Some(i) if rate == 0.0 => {
                let _ = i;
                debug_assert!(next_event.is_finite(), "work pending but no machine ever");
                t = next_event;
            }
            Some(i) => {
                let finish = t + remaining[i] / rate;
                if finish <= next_event + 1e-12 {
                    remaining[i] = 0.0;
                    done[i] = true;
                    finished += 1;
                    total += finish;
                    t = finish;
                } else {
                    remaining[i] -= (next_event - t) * rate;
                    t = next_event;
                }
            }
        }
    }
    total
}

/// SRPT-CONVERT approximation: order jobs by their completion in the
/// preemptive relaxation, then list-schedule them non-preemptively in that
/// order on the earliest-available robot.
pub fn schedule_srpt_convert(inst: &SolverInstance) -> Schedule {
    let order = preemptive_completion_order(&inst.jobs, &inst.robot_available_at);
    list_schedule_in_order(inst, &order)
}

/// Completion order of the preemptive splitting relaxation (same event
/// simulation as [`lb_preemptive_srpt`], keeping the order instead of the
/// bound).
fn preemptive_completion_order(jobs: &[SolverJob], robot_available_at: &[f64]) -> Vec<usize> {
    if jobs.is_empty() {
        return Vec::new();
    }
    let mut remaining: Vec<f64> = jobs.iter().map(|j| j.process_s).collect();
    let mut done = vec![false; jobs.len()];
    let mut order = Vec::with_capacity(jobs.len());

    let min_avail = robot_available_at
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let min_release = jobs
        .iter()
        .map(|j| j.release_at)
        .fold(f64::INFINITY, f64::min);
    let mut t = f64::min(min_avail, min_release);

    while order.len() < jobs.len() {
        let rate = robot_available_at.iter().filter(|&&a| a <= t + 1e-12).count() as f64;
        let current = (0..jobs.len())
            .filter(|&i| !done[i] && jobs[i].release_at <= t + 1e-12)
            .min_by(|&a, &b| {
                remaining[a]
                    .partial_cmp(&remaining[b])
                    .unwrap_or(Ordering::Equal)
                    .then(jobs[a].id.cmp(&jobs[b].id))
            });
        let next_event = robot_available_at
            .iter()
            .copied()
            .filter(|&a| a > t + 1e-12)
            .chain(
                (0..jobs.len())
                    .filter(|&i| !done[i] && jobs[i].release_at > t + 1e-12)
                    .map(|i| jobs[i].release_at),
            )
            .fold(f64::INFINITY, f64::min);

        match current {
            None => t = next_event,
            Some(i) if rate == 0.0 => {
                let _ = i;
                t = next_event;
            }
            Some(i) => {
                let finish = t + remaining[i] / rate;
                if finish <= next_event + 1e-12 {
                    remaining[i] = 0.0;
                    done[i] = true;
                    order.push(i);
                    t = finish;
                } else {
                    remaining[i] -= (next_event - t) * rate;
                    t = next_event;
                }
            }
        }
    }
    order
}

/// List-schedules jobs in the given index order, each on the robot that
/// frees earliest (ties toward the lower robot index), starting at
/// `max(release, robot free time)`.
fn list_schedule_in_order(inst: &SolverInstance, order: &[usize]) -> Schedule {
    let mut schedule = Schedule::empty(inst.robot_available_at.len());
    let mut free = inst.robot_available_at.clone();
    for &i in order {
        let job = inst.jobs[i];
        let (r, _) = free
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
            .expect("at least one robot");
        let dispatch = free[r].max(job.release_at);
        let completes = dispatch + job.process_s;
        free[r] = completes;
        schedule.per_robot[r].push(ScheduledJob {
            job_id: job.id,
            robot: r,
            dispatch_at: dispatch,
            completes_at: completes,
        });
    }
    schedule.objective = objective_of(&schedule.per_robot, &inst.jobs);
    schedule
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

struct Node {
    lower_bound: f64,
    scheduled_mask: u32,
    partial_objective: f64,
    robot_free: Vec<f64>,
    per_robot: Vec<Vec<ScheduledJob>>,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.lower_bound == other.lower_bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Min-heap on (lower bound, insertion order).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lower_bound
            .partial_cmp(&self.lower_bound)
            .unwrap_or(Ordering::Equal)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Exact solver: best-first branch and bound over partial per-robot
/// sequences, pruned by the two relaxation bounds and by dominance on
/// (scheduled set, sorted robot free times). Matches the brute-force
/// objective on every instance within the cap.
pub fn schedule_bab(inst: &SolverInstance, cap: usize) -> Result<Schedule> {
    let n = inst.jobs.len();
    if n > cap {
        return Err(Error::SizeCap { n, cap });
    }
    if n == 0 {
        return Ok(Schedule::empty(inst.robot_available_at.len()));
    }

    // Incumbent from the approximation: a valid upper bound.
    let mut best = schedule_srpt_convert(inst);

    let root_lb = remaining_bound(&inst.jobs, (0..n).collect::<Vec<_>>().as_slice(), &inst.robot_available_at);
    let mut heap = BinaryHeap::new();
    let mut seq_counter = 0u64;
    heap.push(Node {
        lower_bound: root_lb,
        scheduled_mask: 0,
        partial_objective: 0.0,
        robot_free: inst.robot_available_at.clone(),
        per_robot: vec![Vec::new(); inst.robot_available_at.len()],
        seq: seq_counter,
    });

    // Pareto sets of (sorted free times, objective) per scheduled mask.
    let mut dominance: HashMap<u32, Vec<(Vec<f64>, f64)>> = HashMap::new();

    while let Some(node) = heap.pop() {
        if node.lower_bound >= best.objective - 1e-9 {
            continue;
        }
        let unscheduled: Vec<usize> =
            (0..n).filter(|i| node.scheduled_mask & (1 << i) == 0).collect();
        if unscheduled.is_empty() {
            if node.partial_objective < best.objective - 1e-9 {
                let objective = objective_of(&node.per_robot, &inst.jobs);
                best = Schedule {
                    per_robot: node.per_robot,
                    objective,
                };
            }
            continue;
        }

        for &i in &unscheduled {
            let job = inst.jobs[i];
            // On identical machines any schedule can be rebuilt by always
            // appending to the robot that frees earliest, so branching only
            // on the job choice stays complete.
            let (r, _) = node
                .robot_free
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
                .expect("at least one robot");
            let dispatch = node.robot_free[r].max(job.release_at);
            let completes = dispatch + job.process_s;

            let mut free = node.robot_free.clone();
            free[r] = completes;
            let partial = node.partial_objective + completes;
            let mask = node.scheduled_mask | (1 << i);

            let rest: Vec<usize> = unscheduled.iter().copied().filter(|&j| j != i).collect();
            let lb = partial + remaining_bound(&inst.jobs, &rest, &free);
            if lb >= best.objective - 1e-9 {
                continue;
            }

            let mut key = free.clone();
            key.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            if is_dominated(&mut dominance, mask, &key, partial) {
                continue;
            }

            let mut per_robot = node.per_robot.clone();
            per_robot[r].push(ScheduledJob {
                job_id: job.id,
                robot: r,
                dispatch_at: dispatch,
                completes_at: completes,
            });
            seq_counter += 1;
            heap.push(Node {
                lower_bound: lb,
                scheduled_mask: mask,
                partial_objective: partial,
                robot_free: free,
                per_robot,
                seq: seq_counter,
            });
        }
    }
    Ok(best)
}

fn remaining_bound(jobs: &[SolverJob], rest: &[usize], robot_free: &[f64]) -> f64 {
    if rest.is_empty() {
        return 0.0;
    }
    let sub: Vec<SolverJob> = rest.iter().map(|&i| jobs[i]).collect();
    let spt = lb_no_release(&sub, robot_free);
    let srpt = lb_preemptive_srpt(&sub, robot_free);
    spt.max(srpt)
}

/// `true` if an existing entry with the same scheduled set has componentwise
/// `<=` free times and `<=` objective; otherwise records the new entry and
/// drops any it dominates.
fn is_dominated(
    table: &mut HashMap<u32, Vec<(Vec<f64>, f64)>>,
    mask: u32,
    sorted_free: &[f64],
    objective: f64,
) -> bool {
    let entries = table.entry(mask).or_default();
    for (free, obj) in entries.iter() {
        if *obj <= objective + 1e-12
            && free
                .iter()
                .zip(sorted_free)
                .all(|(a, b)| *a <= *b + 1e-12)
        {
            return true;
        }
    }
    entries.retain(|(free, obj)| {
        !(objective <= *obj + 1e-12
            && sorted_free
                .iter()
                .zip(free.iter())
                .all(|(a, b)| *a <= *b + 1e-12))
    });
    entries.push((sorted_free.to_vec(), objective));
    false
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// Exhaustive enumeration over all request-to-robot assignments and
/// per-robot orders. Exact optimum; testing oracle for the other solvers.
pub fn brute_force_schedule(inst: &SolverInstance) -> Result<Schedule> {
    let n = inst.jobs.len();
    if n > BRUTE_CAP {
        return Err(Error::SizeCap { n, cap: BRUTE_CAP });
    }
    if n == 0 {
        return Ok(Schedule::empty(inst.robot_available_at.len()));
    }

    struct Search<'a> {
        inst: &'a SolverInstance,
        used: Vec<bool>,
        free: Vec<f64>,
        picks: Vec<(usize, usize, f64, f64)>, // (job, robot, dispatch, completes)
        partial: f64,
        best_objective: f64,
        best_picks: Vec<(usize, usize, f64, f64)>,
    }

    impl Search<'_> {
        fn recurse(&mut self, depth: usize) {
            let n = self.inst.jobs.len();
            if depth == n {
                if self.partial < self.best_objective {
                    self.best_objective = self.partial;
                    self.best_picks = self.picks.clone();
                }
                return;
            }
            // Completion times only add up, so a partial sum already at the
            // incumbent cannot improve.
            if self.partial >= self.best_objective {
                return;
            }
            for i in 0..n {
                if self.used[i] {
                    continue;
                }
                for r in 0..self.free.len() {
                    let job = self.inst.jobs[i];
                    let dispatch = self.free[r].max(job.release_at);
                    let completes = dispatch + job.process_s;
                    let saved = self.free[r];
                    self.used[i] = true;
                    self.free[r] = completes;
                    self.picks.push((i, r, dispatch, completes));
                    self.partial += completes;
                    self.recurse(depth + 1);
                    self.partial -= completes;
                    self.picks.pop();
                    self.free[r] = saved;
                    self.used[i] = false;
                }
            }
        }
    }

    let mut search = Search {
        inst,
        used: vec![false; n],
        free: inst.robot_available_at.clone(),
        picks: Vec::with_capacity(n),
        partial: 0.0,
        best_objective: f64::INFINITY,
        best_picks: Vec::new(),
    };
    search.recurse(0);

    let mut schedule = Schedule::empty(inst.robot_available_at.len());
    for (i, r, dispatch, completes) in search.best_picks {
        schedule.per_robot[r].push(ScheduledJob {
            job_id: inst.jobs[i].id,
            robot: r,
            dispatch_at: dispatch,
            completes_at: completes,
        });
    }
    schedule.objective = objective_of(&schedule.per_robot, &inst.jobs);
    Ok(schedule)
}
