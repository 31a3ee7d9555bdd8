//! Online stochastic scheduling by the multiple scenario approach (MSA).
//!
//! Live requests carry distributions instead of exact values, so the
//! scheduler samples a set of deterministic scenarios, solves each one with
//! rejection allowed (a rejected picker transports the tray on foot), and
//! combines the per-scenario solutions through a consensus score: a request
//! served in position `O` among `N` scores `N - O`, a rejected request
//! scores `-1`. Robots are dispatched down the consensus order as expected
//! release times arrive; pickers whose trays fill with no robot assigned or
//! en route receive a rejection flag.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{manhattan_distance, one_way_travel_time, path_legs, FieldMap, Point, SpeedProfile};
use crate::request::StochasticRequest;

/// Default cap on the exact scenario solver's instance size.
pub const SCENARIO_EXACT_CAP: usize = 6;
/// Requests whose full-tray location is closer than this to the headland end
/// of the row are rejected outright by the heuristic.
pub const NEAR_ROW_END_M: f64 = 5.0;

/// One sampled (deterministic) request inside a scenario.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioRequest {
    pub id: u64,
    /// Sampled absolute full-tray instant.
    pub full_at: f64,
    /// Robot one-way travel time to the sampled full location (s).
    pub one_way_s: f64,
    /// Round-trip self-transport time for the picker (s).
    pub self_transport_s: f64,
    /// Sampled full-tray location.
    pub full_location: Point,
}

/// A deterministic scenario: one sample per live stochastic request.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub requests: Vec<ScenarioRequest>,
    pub load_s: f64,
    pub unload_s: f64,
}

impl Scenario {
    /// Robot busy time for serving a request.
    pub fn process_s(&self, r: &ScenarioRequest) -> f64 {
        2.0 * r.one_way_s + self.load_s + self.unload_s
    }

    /// Earliest useful dispatch instant.
    pub fn release_at(&self, r: &ScenarioRequest, now: f64) -> f64 {
        (r.full_at - r.one_way_s).max(now)
    }
}

/// Outcome of one request in one scenario solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Served {
        /// 1-based position in the scenario's serving order.
        order: usize,
        robot: usize,
        dispatch_at: f64,
        /// Instant the picker resumes picking.
        resume_at: f64,
    },
    Rejected,
}

/// Solution of one scenario: per-request outcomes and the total
/// non-productive time.
#[derive(Debug, Clone)]
pub struct ScenarioSolution {
    /// Outcomes keyed by request id, in request order of the scenario.
    pub outcomes: Vec<(u64, Outcome)>,
    pub objective: f64,
}

impl ScenarioSolution {
    pub fn outcome(&self, id: u64) -> Option<&Outcome> {
        self.outcomes.iter().find(|(i, _)| *i == id).map(|(_, o)| o)
    }

    /// Served request ids in serving order.
    pub fn serving_order(&self) -> Vec<u64> {
        let mut served: Vec<(usize, u64)> = self
            .outcomes
            .iter()
            .filter_map(|(id, o)| match o {
                Outcome::Served { order, .. } => Some((*order, *id)),
                Outcome::Rejected => None,
            })
            .collect();
        served.sort();
        served.into_iter().map(|(_, id)| id).collect()
    }

    pub fn rejected_ids(&self) -> Vec<u64> {
        self.outcomes
            .iter()
            .filter(|(_, o)| matches!(o, Outcome::Rejected))
            .map(|(id, _)| *id)
            .collect()
    }
}

/// Round-trip self-transport time and completion instant for a full tray the
/// picker walks to the station and back.
pub fn self_transport_time(
    full_location: Point,
    full_at: f64,
    walk_speed: f64,
    station: Point,
    field: &FieldMap,
    unload_s: f64,
) -> Result<(f64, f64)> {
    let distance = manhattan_distance(station, full_location, field)?;
    let transport = 2.0 * distance / walk_speed + unload_s;
    Ok((transport, full_at + transport))
}

/// Everything needed to turn stochastic requests into solvable scenarios.
pub struct ScenarioContext<'a> {
    pub field: &'a FieldMap,
    pub station: Point,
    pub robot_profile: SpeedProfile,
    pub load_s: f64,
    pub unload_s: f64,
    /// Self-transport walking speed per picker id.
    pub walk_speed_of: &'a dyn Fn(usize) -> f64,
    pub now: f64,
}

impl ScenarioContext<'_> {
    fn realize(&self, req: &StochasticRequest, full_at: f64, location: Point) -> Result<ScenarioRequest> {
        let legs = path_legs(self.station, location, self.field)?;
        let one_way = one_way_travel_time(legs.headland, legs.furrow, self.robot_profile);
        let walk = (self.walk_speed_of)(req.picker_id);
        let (self_transport, _) = self_transport_time(
            location,
            full_at,
            walk,
            self.station,
            self.field,
            self.unload_s,
        )?;
        Ok(ScenarioRequest {
            id: req.id,
            full_at,
            one_way_s: one_way,
            self_transport_s: self_transport,
            full_location: location,
        })
    }

    /// Expected (mean) realization of a request, used for release gating and
    /// dispatch targets.
    pub fn expected(&self, req: &StochasticRequest) -> Result<ScenarioRequest> {
        let remaining = (req.created_at + req.fill_time.mean - self.now).max(0.0);
        let location = predicted_location(req, remaining, req.speed_along_row.mean, self.field);
        self.realize(req, self.now + remaining, location)
    }
}

/// Advances the picker's current location by the sampled speed over the
/// sampled remaining time, clamped to the pickable stretch of the furrow.
fn predicted_location(
    req: &StochasticRequest,
    remaining_s: f64,
    speed_along_row: f64,
    field: &FieldMap,
) -> Point {
    let y = (req.current_location.y + speed_along_row * remaining_s)
        .clamp(0.0, field.split_line_y);
    Point::new(req.current_location.x, y)
}

/// Draws `count` deterministic scenarios from the live request
/// distributions. Negative fill-time samples clamp to zero (the tray is
/// treated as already full).
pub fn get_samples<R: Rng + ?Sized>(
    requests: &[StochasticRequest],
    count: usize,
    ctx: &ScenarioContext<'_>,
    rng: &mut R,
) -> Result<Vec<Scenario>> {
    let mut scenarios = Vec::with_capacity(count);
    for _ in 0..count {
        let mut sampled = Vec::with_capacity(requests.len());
        for req in requests {
            let elapsed = ctx.now - req.created_at;
            let remaining = (req.fill_time.sample(rng) - elapsed).max(0.0);
            let speed = req.speed_along_row.sample(rng);
            let location = predicted_location(req, remaining, speed, ctx.field);
            sampled.push(ctx.realize(req, ctx.now + remaining, location)?);
        }
        scenarios.push(Scenario {
            requests: sampled,
            load_s: ctx.load_s,
            unload_s: ctx.unload_s,
        });
    }
    Ok(scenarios)
}

// ---------------------------------------------------------------------------
// Exact scenario solver
// ---------------------------------------------------------------------------

/// Exact scenario solver: minimizes total non-productive time over all
/// serve/reject choices, robot assignments, and grid-aligned dispatch
/// instants. Search horizon is bounded by the worst-case makespan
/// `max(full) + max(self_transport)`; any robot service starting beyond it
/// is dominated by rejection.
pub fn solve_scenario_exact(
    scn: &Scenario,
    robot_available_at: &[f64],
    now: f64,
    cap: usize,
    grid_s: f64,
    allow_rejection: bool,
) -> Result<ScenarioSolution> {
    let n = scn.requests.len();
    if n > cap {
        return Err(Error::SizeCap { n, cap });
    }
    if n == 0 {
        return Ok(ScenarioSolution {
            outcomes: Vec::new(),
            objective: 0.0,
        });
    }
    if robot_available_at.is_empty() {
        if !allow_rejection {
            return Err(Error::SimFault {
                seed: 0,
                reason: "scenario unsolvable: rejection forbidden and no robots".into(),
            });
        }
        // Without robots every tray is self-transported.
        let outcomes: Vec<(u64, Outcome)> = scn
            .requests
            .iter()
            .map(|r| (r.id, Outcome::Rejected))
            .collect();
        let objective = scn.requests.iter().map(|r| r.self_transport_s).sum();
        return Ok(ScenarioSolution { outcomes, objective });
    }

    let horizon = scn
        .requests
        .iter()
        .map(|r| r.full_at)
        .fold(f64::NEG_INFINITY, f64::max)
        + scn
            .requests
            .iter()
            .map(|r| r.self_transport_s)
            .fold(f64::NEG_INFINITY, f64::max);

    let quantize = |t: f64| -> f64 {
        if grid_s > 0.0 {
            now + ((t - now) / grid_s - 1e-9).ceil().max(0.0) * grid_s
        } else {
            t
        }
    };

    #[derive(Clone)]
    struct Pick {
        request: usize,
        robot: usize,
        dispatch_at: f64,
        resume_at: f64,
    }

    struct Search<'a> {
        scn: &'a Scenario,
        now: f64,
        horizon: f64,
        allow_rejection: bool,
        quantize: &'a dyn Fn(f64) -> f64,
        best_objective: f64,
        best_served: Vec<Pick>,
        best_rejected: HashSet<usize>,
    }

    impl Search<'_> {
        /// Enumerates assignments and orders of the serve set over robots.
        fn sequence(
            &mut self,
            serve: &[usize],
            chosen: &mut Vec<Pick>,
            used: u32,
            free: &mut Vec<f64>,
            partial: f64,
            reject_cost: f64,
            rejected: &HashSet<usize>,
        ) {
            if partial + reject_cost >= self.best_objective {
                return;
            }
            if chosen.len() == serve.len() {
                let total = partial + reject_cost;
                if total < self.best_objective {
                    self.best_objective = total;
                    self.best_served = chosen.clone();
                    self.best_rejected = rejected.clone();
                }
                return;
            }
            for (slot, &ri) in serve.iter().enumerate() {
                if used & (1 << slot) != 0 {
                    continue;
                }
                let req = self.scn.requests[ri];
                let release = self.scn.release_at(&req, self.now);
                for robot in 0..free.len() {
                    let dispatch = (self.quantize)(free[robot].max(release));
                    if dispatch > self.horizon {
                        continue; // dominated by rejection
                    }
                    let resume = dispatch + req.one_way_s + self.scn.load_s;
                    let nonproductive = resume - req.full_at;
                    let saved = free[robot];
                    free[robot] = dispatch + self.scn.process_s(&req);
                    chosen.push(Pick {
                        request: ri,
                        robot,
                        dispatch_at: dispatch,
                        resume_at: resume,
                    });
                    self.sequence(
                        serve,
                        chosen,
                        used | (1 << slot),
                        free,
                        partial + nonproductive,
                        reject_cost,
                        rejected,
                    );
                    chosen.pop();
                    free[robot] = saved;
                }
            }
        }
    }

    let mut search = Search {
        scn,
        now,
        horizon,
        allow_rejection,
        quantize: &quantize,
        best_objective: f64::INFINITY,
        best_served: Vec::new(),
        best_rejected: HashSet::new(),
    };

    // Enumerate serve subsets; bit i set means request i is served.
    for subset in 0..(1u32 << n) {
        let rejected: HashSet<usize> =
            (0..n).filter(|i| subset & (1 << i) == 0).collect();
        if !search.allow_rejection && !rejected.is_empty() {
            continue;
        }
        let serve: Vec<usize> = (0..n).filter(|i| subset & (1 << i) != 0).collect();
        let reject_cost: f64 = rejected
            .iter()
            .map(|&i| scn.requests[i].self_transport_s)
            .sum();
        let mut free = robot_available_at.to_vec();
        search.sequence(&serve, &mut Vec::new(), 0, &mut free, 0.0, reject_cost, &rejected);
    }

    if search.best_objective.is_infinite() {
        // Rejection forbidden with zero robots cannot serve anything.
        return Err(Error::SimFault {
            seed: 0,
            reason: "scenario unsolvable: rejection forbidden and no robots".into(),
        });
    }

    let mut picks = search.best_served.clone();
    picks.sort_by(|a, b| {
        a.dispatch_at
            .partial_cmp(&b.dispatch_at)
            .unwrap_or(Ordering::Equal)
            .then(scn.requests[a.request].id.cmp(&scn.requests[b.request].id))
    });
    let mut outcomes: Vec<(u64, Outcome)> = Vec::with_capacity(n);
    for req in &scn.requests {
        let idx = scn.requests.iter().position(|r| r.id == req.id).unwrap();
        if search.best_rejected.contains(&idx) {
            outcomes.push((req.id, Outcome::Rejected));
        } else {
            let (order, pick) = picks
                .iter()
                .enumerate()
                .find(|(_, p)| p.request == idx)
                .map(|(k, p)| (k + 1, p))
                .expect("served request present in picks");
            outcomes.push((
                req.id,
                Outcome::Served {
                    order,
                    robot: pick.robot,
                    dispatch_at: pick.dispatch_at,
                    resume_at: pick.resume_at,
                },
            ));
        }
    }
    Ok(ScenarioSolution {
        outcomes,
        objective: search.best_objective,
    })
}

// ---------------------------------------------------------------------------
// SRLPT heuristic
// ---------------------------------------------------------------------------

/// Shortest-release-time, longest-process-time-first heuristic. Released
/// requests pool up; each freed robot takes the pooled request with the
/// longest process time. Requests whose full location lies within 5 m of
/// the row's headland end are rejected outright, and a request still
/// undispatched when its tray fills is rejected (self-transport).
pub fn solve_scenario_srlpt(
    scn: &Scenario,
    robot_available_at: &[f64],
    now: f64,
) -> ScenarioSolution {
    let n = scn.requests.len();
    let mut outcomes: Vec<(u64, Option<Outcome>)> =
        scn.requests.iter().map(|r| (r.id, None)).collect();
    let mut objective = 0.0;

    // Outright rejections near the row end.
    let mut live: Vec<usize> = Vec::new();
    for (i, r) in scn.requests.iter().enumerate() {
        if r.full_location.y < NEAR_ROW_END_M {
            outcomes[i].1 = Some(Outcome::Rejected);
            objective += r.self_transport_s;
        } else {
            live.push(i);
        }
    }

    let mut free = robot_available_at.to_vec();
    let mut dispatched = vec![false; n];
    let mut order = 0usize;
    let mut t = now;

    loop {
        // Dispatch while a robot is free and the pool is non-empty.
        loop {
            let Some(robot) = free
                .iter()
                .enumerate()
                .filter(|(_, &f)| f <= t + 1e-9)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
                .map(|(r, _)| r)
            else {
                break;
            };
            let pick = live
                .iter()
                .copied()
                .filter(|&i| {
                    !dispatched[i]
                        && outcomes[i].1.is_none()
                        && scn.release_at(&scn.requests[i], now) <= t + 1e-9
                })
                .max_by(|&a, &b| {
                    scn.process_s(&scn.requests[a])
                        .partial_cmp(&scn.process_s(&scn.requests[b]))
                        .unwrap_or(Ordering::Equal)
                        .then(scn.requests[b].id.cmp(&scn.requests[a].id))
                });
            let Some(i) = pick else { break };
            let req = scn.requests[i];
            let dispatch = t;
            let resume = dispatch + req.one_way_s + scn.load_s;
            order += 1;
            outcomes[i].1 = Some(Outcome::Served {
                order,
                robot,
                dispatch_at: dispatch,
                resume_at: resume,
            });
            objective += resume - req.full_at;
            dispatched[i] = true;
            free[robot] = dispatch + scn.process_s(&req);
        }

        // Expire requests whose trays filled with no robot dispatched.
        for &i in &live {
            if outcomes[i].1.is_none() && scn.requests[i].full_at <= t + 1e-9 {
                outcomes[i].1 = Some(Outcome::Rejected);
                objective += scn.requests[i].self_transport_s;
            }
        }

        if outcomes.iter().all(|(_, o)| o.is_some()) {
            break;
        }

        // Advance to the next event: a release, a full instant, or a robot
        // freeing, whichever is soonest after t.
        let next = live
            .iter()
            .filter(|&&i| outcomes[i].1.is_none())
            .flat_map(|&i| {
                let r = &scn.requests[i];
                [scn.release_at(r, now), r.full_at]
            })
            .chain(free.iter().copied())
            .filter(|&e| e > t + 1e-9)
            .fold(f64::INFINITY, f64::min);
        if !next.is_finite() {
            break;
        }
        t = next;
    }

    ScenarioSolution {
        outcomes: outcomes
            .into_iter()
            .map(|(id, o)| (id, o.expect("all requests resolved")))
            .collect(),
        objective,
    }
}

// ---------------------------------------------------------------------------
// Consensus and dispatch
// ---------------------------------------------------------------------------

/// The consensus plan distilled from the scenario solutions.
#[derive(Debug, Clone)]
pub struct ConsensusPlan {
    /// Summed score per request id.
    pub scores: HashMap<u64, i64>,
    /// Request ids in descending score order (ties: earlier expected full
    /// time, then lower id).
    pub order: Vec<u64>,
    /// Requests rejected in every scenario; never dispatched.
    pub rejection_set: HashSet<u64>,
}

/// Folds scenario solutions into a consensus plan. `expected_full_at` breaks
/// score ties toward the sooner tray.
pub fn consensus(
    solutions: &[ScenarioSolution],
    expected_full_at: &HashMap<u64, f64>,
) -> ConsensusPlan {
    let mut scores: HashMap<u64, i64> = HashMap::new();
    let mut reject_counts: HashMap<u64, usize> = HashMap::new();
    let mut ids: Vec<u64> = Vec::new();
    for sol in solutions {
        let n = sol.outcomes.len() as i64;
        for (id, outcome) in &sol.outcomes {
            if !scores.contains_key(id) {
                ids.push(*id);
            }
            let delta = match outcome {
                Outcome::Served { order, .. } => n - *order as i64,
                Outcome::Rejected => {
                    *reject_counts.entry(*id).or_insert(0) += 1;
                    -1
                }
            };
            *scores.entry(*id).or_insert(0) += delta;
        }
    }
    let mut order = ids.clone();
    order.sort_by(|a, b| {
        scores[b]
            .cmp(&scores[a])
            .then_with(|| {
                let fa = expected_full_at.get(a).copied().unwrap_or(f64::INFINITY);
                let fb = expected_full_at.get(b).copied().unwrap_or(f64::INFINITY);
                fa.partial_cmp(&fb).unwrap_or(Ordering::Equal)
            })
            .then(a.cmp(b))
    });
    let rejection_set = ids
        .iter()
        .copied()
        .filter(|id| reject_counts.get(id).copied().unwrap_or(0) == solutions.len())
        .collect();
    ConsensusPlan {
        scores,
        order,
        rejection_set,
    }
}

/// A live request as the dispatcher sees it.
#[derive(Debug, Clone, Copy)]
pub struct DispatchView {
    pub id: u64,
    /// Expected full-tray instant (mean estimate).
    pub expected_full_at: f64,
    /// Expected release instant: `max(expected_full - one_way, now_floor)`.
    pub expected_release_at: f64,
    /// Dispatch target: expected full location (standoff applied by caller).
    pub target: Point,
    /// The picker has reported the tray actually full.
    pub reported_full: bool,
    /// A robot is already assigned or en route.
    pub assigned: bool,
}

/// A robot dispatch order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchCommand {
    pub robot: usize,
    pub request_id: u64,
    pub target: Point,
    pub dispatch_at: f64,
}

/// Walks the consensus order assigning available robots to released
/// requests, and flags for rejection any request whose tray is full with no
/// robot assigned or en route. Earlier commands in the same call count as
/// assignments.
pub fn dispatch_decision(
    plan: &ConsensusPlan,
    views: &[DispatchView],
    available_robots: &[usize],
    now: f64,
) -> (Vec<DispatchCommand>, Vec<u64>) {
    let view_of: HashMap<u64, &DispatchView> = views.iter().map(|v| (v.id, v)).collect();
    let mut commands = Vec::new();
    let mut taken: HashSet<u64> = HashSet::new();
    let mut robots = available_robots.iter().copied();
    let mut robot = robots.next();

    for id in &plan.order {
        let Some(r) = robot else { break };
        let Some(view) = view_of.get(id) else { continue };
        if view.assigned || taken.contains(id) || plan.rejection_set.contains(id) {
            continue;
        }
        if view.expected_release_at <= now + 1e-9 {
            commands.push(DispatchCommand {
                robot: r,
                request_id: *id,
                target: view.target,
                dispatch_at: now,
            });
            taken.insert(*id);
            robot = robots.next();
        }
    }

    let rejects = views
        .iter()
        .filter(|v| v.reported_full && !v.assigned && !taken.contains(&v.id))
        .map(|v| v.id)
        .collect();
    (commands, rejects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// One robot idle; load = unload = 5;
    /// R1: full at 0, one-way 30, self-transport 185;
    /// R2: full at 10, one-way 35, self-transport 145.
    fn instance_b() -> Scenario {
        Scenario {
            requests: vec![
                ScenarioRequest {
                    id: 1,
                    full_at: 0.0,
                    one_way_s: 30.0,
                    self_transport_s: 185.0,
                    full_location: Point::new(10.0, 40.0),
                },
                ScenarioRequest {
                    id: 2,
                    full_at: 10.0,
                    one_way_s: 35.0,
                    self_transport_s: 145.0,
                    full_location: Point::new(12.0, 45.0),
                },
            ],
            load_s: 5.0,
            unload_s: 5.0,
        }
    }

    #[test]
    fn exact_instance_b_serves_both_in_order() {
        let sol = solve_scenario_exact(&instance_b(), &[0.0], 0.0, SCENARIO_EXACT_CAP, 1.0, true)
            .unwrap();
        assert_relative_eq!(sol.objective, 135.0);
        assert_eq!(sol.serving_order(), vec![1, 2]);
        assert!(sol.rejected_ids().is_empty());
    }

    #[test]
    fn exact_instance_b_alternatives_cost_more() {
        let scn = instance_b();
        // Reject R2: 35 + 145 = 180. Reject R1: 30 + 185 = 215.
        let forbidden =
            solve_scenario_exact(&scn, &[0.0], 0.0, SCENARIO_EXACT_CAP, 1.0, false).unwrap();
        assert_relative_eq!(forbidden.objective, 135.0); // serving both is optimal here
        let sol = solve_scenario_exact(&scn, &[0.0], 0.0, SCENARIO_EXACT_CAP, 1.0, true).unwrap();
        assert!(sol.objective <= forbidden.objective);
    }

    #[test]
    fn exact_no_robots_rejects_everything() {
        let sol =
            solve_scenario_exact(&instance_b(), &[], 0.0, SCENARIO_EXACT_CAP, 1.0, true).unwrap();
        assert_eq!(sol.rejected_ids(), vec![1, 2]);
        assert_relative_eq!(sol.objective, 185.0 + 145.0);
    }

    #[test]
    fn exact_rejects_when_self_transport_wins() {
        // Busy robot makes service slower than walking for the second tray.
        let mut scn = instance_b();
        scn.requests[1].self_transport_s = 60.0;
        let sol = solve_scenario_exact(&scn, &[0.0], 0.0, SCENARIO_EXACT_CAP, 1.0, true).unwrap();
        // Serve both (min 135 with R2 cost 100 -> total 35 + 100) vs
        // serve R1 + reject R2 (35 + 60 = 95).
        assert_relative_eq!(sol.objective, 95.0);
        assert_eq!(sol.rejected_ids(), vec![2]);
    }

    #[test]
    fn exact_cap_enforced() {
        let mut scn = instance_b();
        while scn.requests.len() <= SCENARIO_EXACT_CAP {
            let mut r = scn.requests[0];
            r.id = 100 + scn.requests.len() as u64;
            scn.requests.push(r);
        }
        assert!(matches!(
            solve_scenario_exact(&scn, &[0.0], 0.0, SCENARIO_EXACT_CAP, 1.0, true),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn srlpt_serves_longest_process_first() {
        // Two released requests, one free robot: the longer process goes out
        // first.
        let scn = Scenario {
            requests: vec![
                ScenarioRequest {
                    id: 1,
                    full_at: 100.0,
                    one_way_s: 20.0, // process 50
                    self_transport_s: 150.0,
                    full_location: Point::new(5.0, 30.0),
                },
                ScenarioRequest {
                    id: 2,
                    full_at: 100.0,
                    one_way_s: 40.0, // process 90
                    self_transport_s: 250.0,
                    full_location: Point::new(8.0, 50.0),
                },
            ],
            load_s: 5.0,
            unload_s: 5.0,
        };
        let sol = solve_scenario_srlpt(&scn, &[60.0, 1e9], 0.0);
        let first = sol.serving_order()[0];
        assert_eq!(first, 2);
    }

    #[test]
    fn srlpt_rejects_near_row_end() {
        let scn = Scenario {
            requests: vec![ScenarioRequest {
                id: 7,
                full_at: 50.0,
                one_way_s: 10.0,
                self_transport_s: 20.0,
                full_location: Point::new(5.0, 4.0),
            }],
            load_s: 5.0,
            unload_s: 5.0,
        };
        let sol = solve_scenario_srlpt(&scn, &[0.0], 0.0);
        assert_eq!(sol.rejected_ids(), vec![7]);
        assert_relative_eq!(sol.objective, 20.0);
    }

    #[test]
    fn srlpt_rejects_expired_requests() {
        // Robot begins too late; the tray fills before any dispatch.
        let scn = Scenario {
            requests: vec![ScenarioRequest {
                id: 3,
                full_at: 30.0,
                one_way_s: 10.0,
                self_transport_s: 80.0,
                full_location: Point::new(5.0, 30.0),
            }],
            load_s: 5.0,
            unload_s: 5.0,
        };
        let sol = solve_scenario_srlpt(&scn, &[40.0], 0.0);
        assert_eq!(sol.rejected_ids(), vec![3]);
    }

    #[test]
    fn srlpt_empty_pool_keeps_robot_idle() {
        let scn = Scenario {
            requests: vec![],
            load_s: 5.0,
            unload_s: 5.0,
        };
        let sol = solve_scenario_srlpt(&scn, &[0.0], 0.0);
        assert!(sol.outcomes.is_empty());
        assert_relative_eq!(sol.objective, 0.0);
    }

    #[test]
    fn self_transport_round_trip_time() {
        let field = FieldMap {
            furrow_count: 30,
            furrow_length: 60.0,
            bed_spacing: 1.65,
            split_line_y: 60.0,
            station_positions: vec![Point::new(0.0, 0.0)],
            active_station_index: 0,
        };
        // D = 10 + 30 = 40 m at 0.8 m/s -> 2*50 + 5 = 105 s.
        let (transport, resume) = self_transport_time(
            Point::new(10.0, 30.0),
            100.0,
            0.8,
            Point::new(0.0, 0.0),
            &field,
            5.0,
        )
        .unwrap();
        assert_relative_eq!(transport, 105.0);
        assert_relative_eq!(resume, 205.0);
        // Zero distance costs only the unload time.
        let (t0, _) = self_transport_time(
            Point::new(0.0, 0.0),
            0.0,
            0.8,
            Point::new(0.0, 0.0),
            &field,
            5.0,
        )
        .unwrap();
        assert_relative_eq!(t0, 5.0);
    }

    fn served(order: usize) -> Outcome {
        Outcome::Served {
            order,
            robot: 0,
            dispatch_at: 0.0,
            resume_at: 0.0,
        }
    }

    #[test]
    fn consensus_hand_example() {
        // N = 3. Scenario 1: order (R2, R1), R3 rejected.
        // Scenario 2: order (R2, R3, R1).
        let s1 = ScenarioSolution {
            outcomes: vec![(1, served(2)), (2, served(1)), (3, Outcome::Rejected)],
            objective: 0.0,
        };
        let s2 = ScenarioSolution {
            outcomes: vec![(1, served(3)), (2, served(1)), (3, served(2))],
            objective: 0.0,
        };
        let expected_full: HashMap<u64, f64> =
            [(1, 10.0), (2, 20.0), (3, 30.0)].into_iter().collect();
        let plan = consensus(&[s1, s2], &expected_full);
        assert_eq!(plan.scores[&2], 4);
        assert_eq!(plan.scores[&1], 1);
        assert_eq!(plan.scores[&3], 0);
        assert_eq!(plan.order, vec![2, 1, 3]);
        assert!(plan.rejection_set.is_empty());
    }

    #[test]
    fn consensus_of_one_scenario_is_its_order() {
        let s = ScenarioSolution {
            outcomes: vec![(5, served(1)), (9, served(2))],
            objective: 0.0,
        };
        let plan = consensus(&[s], &HashMap::new());
        assert_eq!(plan.order, vec![5, 9]);
    }

    #[test]
    fn consensus_unanimous_rejection_scores_minus_count() {
        let make = || ScenarioSolution {
            outcomes: vec![(1, served(1)), (2, Outcome::Rejected)],
            objective: 0.0,
        };
        let plan = consensus(&[make(), make(), make()], &HashMap::new());
        assert_eq!(plan.scores[&2], -3);
        assert_eq!(plan.order.last(), Some(&2));
        assert!(plan.rejection_set.contains(&2));
    }

    #[test]
    fn consensus_is_permutation_invariant() {
        let s1 = ScenarioSolution {
            outcomes: vec![(1, served(2)), (2, served(1)), (3, Outcome::Rejected)],
            objective: 0.0,
        };
        let s2 = ScenarioSolution {
            outcomes: vec![(1, served(3)), (2, served(1)), (3, served(2))],
            objective: 0.0,
        };
        let s3 = ScenarioSolution {
            outcomes: vec![(1, served(1)), (2, served(2)), (3, Outcome::Rejected)],
            objective: 0.0,
        };
        let full: HashMap<u64, f64> = HashMap::new();
        let a = consensus(&[s1.clone(), s2.clone(), s3.clone()], &full);
        let b = consensus(&[s3, s1, s2], &full);
        assert_eq!(a.order, b.order);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn dispatch_gates_on_expected_release() {
        let plan = ConsensusPlan {
            scores: [(1, 5)].into_iter().collect(),
            order: vec![1],
            rejection_set: HashSet::new(),
        };
        let view = DispatchView {
            id: 1,
            expected_full_at: 100.0,
            expected_release_at: 60.0,
            target: Point::new(3.0, 20.0),
            reported_full: false,
            assigned: false,
        };
        let (cmds, rejects) = dispatch_decision(&plan, &[view], &[0], 30.0);
        assert!(cmds.is_empty() && rejects.is_empty());
        let (cmds, _) = dispatch_decision(&plan, &[view], &[0], 60.0);
        assert_eq!(cmds.len(), 1);
        assert_eq!(cmds[0].request_id, 1);
    }

    #[test]
    fn dispatch_flags_full_unassigned_requests() {
        let plan = ConsensusPlan {
            scores: HashMap::new(),
            order: vec![],
            rejection_set: HashSet::new(),
        };
        let view = DispatchView {
            id: 4,
            expected_full_at: 10.0,
            expected_release_at: 0.0,
            target: Point::new(0.0, 10.0),
            reported_full: true,
            assigned: false,
        };
        let (_, rejects) = dispatch_decision(&plan, &[view], &[], 10.0);
        assert_eq!(rejects, vec![4]);
    }

    #[test]
    fn dispatch_two_robots_two_released() {
        let plan = ConsensusPlan {
            scores: [(1, 3), (2, 1)].into_iter().collect(),
            order: vec![1, 2],
            rejection_set: HashSet::new(),
        };
        let mk = |id| DispatchView {
            id,
            expected_full_at: 50.0,
            expected_release_at: 0.0,
            target: Point::new(1.0, 10.0),
            reported_full: false,
            assigned: false,
        };
        let (cmds, _) = dispatch_decision(&plan, &[mk(1), mk(2)], &[0, 1], 5.0);
        assert_eq!(cmds.len(), 2);
        assert_eq!(cmds[0].request_id, 1);
        assert_eq!(cmds[1].request_id, 2);
        assert_eq!(cmds[0].robot, 0);
        assert_eq!(cmds[1].robot, 1);
    }
}
