//! Fixed-step mission simulation: sense, decide, move, track, monitor,
//! inject events. Also the paired multi-planner benchmark.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ekf::{check_collision, CollisionAlert, EkfConfig, EkfTrack, Threat, ThreatId};
use crate::error::{Error, Result};
use crate::ga::{mission_rng, InstanceSampler};
use crate::inference::{AbnormalityRecord, ActiveInferencePlanner, Goal, Observation, PlannerConfig, TargetId};
use crate::model::{distance, Disk, MissionInstance, Point, RouteOrder, Sample, SeparationConfig, Trace};
use crate::motion::{DynamicObstacle, ObstacleSet, Phase, PotentialConfig, Swarm};
use crate::qlearning::{act, QTable};
use crate::world_model::WorldModel;

pub const SCENARIO_VERSION: u32 = 1;
pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    AddTarget { position: Point },
    SpawnObstacle { obstacle: DynamicObstacle },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    /// Targets, depot, fleet and the static obstacles known up front.
    pub instance: MissionInstance,
    /// Extra obstacles; dynamic ones are only seen through noisy sensing.
    #[serde(default)]
    pub obstacles: ObstacleSet,
    #[serde(default)]
    pub events: Vec<ScriptedEvent>,
    /// Standard deviation of obstacle position measurements, meters.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(instance: MissionInstance, seed: u64) -> Self {
        Self {
            version: SCENARIO_VERSION,
            instance,
            obstacles: ObstacleSet::default(),
            events: Vec::new(),
            noise_sigma: 2.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::SchemaVersion {
                found: self.version,
                expected: SCENARIO_VERSION,
            });
        }
        self.instance.validate_geometry()?;
        self.obstacles.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInstance("noise_sigma must be finite and non-negative".into()));
        }
        if self.events.windows(2).any(|w| w[0].t > w[1].t) || self.events.iter().any(|e| !(e.t >= 0.0)) {
            return Err(Error::InvalidInstance("event times must be non-negative and sorted".into()));
        }
        let area = &self.instance.area;
        for e in &self.events {
            let inside = match e.kind {
                EventKind::AddTarget { position } => area.contains(position),
                EventKind::SpawnObstacle { obstacle } => area.contains(obstacle.start) && area.contains(obstacle.end) && obstacle.radius > 0.0,
            };
            if !inside {
                return Err(Error::InvalidInstance(format!("event at t={} lies outside the area", e.t)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }
}

/// Random benchmark scenarios: a sampled instance (with its static
/// obstacles) plus dynamic obstacles patrolling segments clear of the depot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSampler {
    pub instance: InstanceSampler,
    pub num_dynamic_obstacles: usize,
    pub dynamic_radius: f64,
    pub dynamic_speed: f64,
    /// Dynamic obstacle paths stay at least this far from the depot.
    pub depot_clearance: f64,
    pub noise_sigma: f64,
}

impl Default for ScenarioSampler {
    fn default() -> Self {
        Self {
            instance: InstanceSampler {
                num_targets: 20,
                fleet_size: 3,
                num_static_obstacles: 2,
                ..InstanceSampler::default()
            },
            num_dynamic_obstacles: 1,
            dynamic_radius: 20.0,
            dynamic_speed: 5.0,
            depot_clearance: 150.0,
            noise_sigma: 2.0,
        }
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let s = if len_sq > 0.0 { ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    distance(p, a + ab * s)
}

impl ScenarioSampler {
    /// Scenario `index` of a suite drawn from `master_seed`.
    pub fn sample(&self, master_seed: u64, index: u64) -> Result<Scenario> {
        let mut rng = mission_rng(master_seed, index);
        let instance = self.instance.sample(&mut rng)?;
        let area = instance.area;
        let r = self.dynamic_radius;
        let mut dynamics = Vec::new();
        let mut attempts = 0;
        while dynamics.len() < self.num_dynamic_obstacles {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::InvalidInstance("cannot place dynamic obstacles".into()));
            }
            let pick = |rng: &mut ChaCha8Rng| Point::new(rng.random_range(area.min.x + r..area.max.x - r), rng.random_range(area.min.y + r..area.max.y - r));
            let (start, end) = (pick(&mut rng), pick(&mut rng));
            if segment_distance(instance.depot, start, end) > self.depot_clearance + r && distance(start, end) > 4.0 * r {
                dynamics.push(DynamicObstacle {
                    start,
                    end,
                    speed: self.dynamic_speed,
                    radius: r,
                });
            }
        }
        Ok(Scenario {
            version: SCENARIO_VERSION,
            instance,
            obstacles: ObstacleSet {
                statics: Vec::new(),
                dynamics,
            },
            events: Vec::new(),
            noise_sigma: self.noise_sigma,
            seed: master_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub potential: PotentialConfig,
    pub separation: SeparationConfig,
    pub ekf: EkfConfig,
    /// Collision-alert look-ahead, seconds.
    pub alert_horizon: f64,
    pub step_cap: usize,
    /// UAV pairs with a member this close to the depot are exempt from the
    /// separation count (shared launch and landing pad).
    pub depot_zone_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let potential = PotentialConfig::default();
        Self {
            potential,
            separation: SeparationConfig::default(),
            ekf: EkfConfig::default(),
            alert_horizon: 5.0,
            step_cap: 100_000,
            depot_zone_radius: potential.d0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Planner<'a> {
    ActiveInference { model: &'a WorldModel, config: PlannerConfig },
    QLearning(&'a QTable),
    /// Flies fixed routes over the instance's target indices.
    Replay(&'a RouteOrder),
}

impl Planner<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Planner::ActiveInference { .. } => "ai",
            Planner::QLearning(_) => "ql",
            Planner::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub version: u32,
    pub planner: String,
    pub seed: u64,
    pub complete: bool,
    pub steps: usize,
    pub completion_time: f64,
    pub per_uav_distance: Vec<f64>,
    pub total_distance: f64,
    /// Over airborne pairs outside the depot zone; `None` if never two.
    pub min_separation: Option<f64>,
    /// Surface distance from airborne UAVs to the true obstacle disks.
    pub min_obstacle_clearance: Option<f64>,
    pub separation_violation_steps: usize,
    pub penetration_steps: usize,
    pub replans: usize,
    pub leg_timeouts: usize,
    pub targets_total: usize,
    pub visited: Vec<TargetId>,
    /// Visits in the order they happened.
    pub visits: Vec<Visit>,
    pub abnormality: Vec<AbnormalityRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub target: TargetId,
    pub uav: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub traces: Vec<Trace>,
}

impl RunOutput {
    /// Errors with `StepCapExceeded` when the run did not finish.
    pub fn into_result(self) -> Result<RunOutput> {
        if self.metrics.complete {
            Ok(self)
        } else {
            Err(Error::StepCapExceeded(self.metrics.steps))
        }
    }
}

/// Tidy trace CSV: `t,uav,x,y,vx,vy`.
pub fn traces_to_csv(traces: &[Trace]) -> String {
    let mut out = String::from("t,uav,x,y,vx,vy\n");
    let steps = traces.first().map_or(0, |t| t.samples.len());
    for k in 0..steps {
        for tr in traces {
            let s = tr.samples[k];
            out.push_str(&format!("{},{},{},{},{},{}\n", s.t, tr.uav, s.pos.x, s.pos.y, s.vel.x, s.vel.y));
        }
    }
    out
}

enum Driver<'a> {
    Ai(Box<ActiveInferencePlanner<'a>>),
    Ql { table: &'a QTable, claims: Vec<Option<Goal>> },
    Replay { routes: &'a RouteOrder, progress: Vec<usize>, done: Vec<bool> },
}

/// Runs one scenario to completion or the step cap. Identical inputs give
/// bit-identical outputs.
pub fn run(scenario: &Scenario, planner: Planner<'_>, config: &SimConfig) -> Result<RunOutput> {
    scenario.validate()?;
    let inst = &scenario.instance;
    let fleet = inst.fleet_size;
    let depot = inst.depot;
    let pot = config.potential;
    let mut swarm = Swarm::new(depot, fleet, pot);

    let mut targets: Vec<Point> = inst.targets.clone();
    let mut visited: BTreeSet<TargetId> = BTreeSet::new();
    let mut visits: Vec<Visit> = Vec::new();
    let statics: Vec<Disk> = inst.obstacles.iter().chain(&scenario.obstacles.statics).copied().collect();
    let mut dynamics: Vec<DynamicObstacle> = scenario.obstacles.dynamics.clone();
    let mut tracks: Vec<EkfTrack> = Vec::new();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    noise_rng.set_stream(1);
    let noise = Normal::new(0.0, scenario.noise_sigma.max(0.0)).map_err(|e| Error::InvalidInstance(e.to_string()))?;
    let measure = |p: Point, rng: &mut ChaCha8Rng| {
        if scenario.noise_sigma > 0.0 {
            p + Point::new(noise.sample(rng), noise.sample(rng))
        } else {
            p
        }
    };
    for d in &dynamics {
        tracks.push(EkfTrack::new(measure(d.position_at(0.0), &mut noise_rng), Point::ZERO, 0.0, &config.ekf));
    }
    let mut next_event = 0;
    let inject = |t: f64, next_event: &mut usize, targets: &mut Vec<Point>, dynamics: &mut Vec<DynamicObstacle>, tracks: &mut Vec<EkfTrack>, rng: &mut ChaCha8Rng| {
        while *next_event < scenario.events.len() && scenario.events[*next_event].t <= t + 1e-9 {
            match scenario.events[*next_event].kind {
                EventKind::AddTarget { position } => targets.push(position),
                EventKind::SpawnObstacle { obstacle } => {
                    dynamics.push(obstacle);
                    tracks.push(EkfTrack::new(measure(obstacle.position_at(t), rng), Point::ZERO, t, &config.ekf));
                }
            }
            *next_event += 1;
        }
    };
    inject(0.0, &mut next_event, &mut targets, &mut dynamics, &mut tracks, &mut noise_rng);

    let mut driver = match planner {
        Planner::ActiveInference { model, config: pc } => Driver::Ai(Box::new(ActiveInferencePlanner::new(model, depot, fleet, pc))),
        Planner::QLearning(table) => Driver::Ql {
            table,
            claims: vec![None; fleet],
        },
        Planner::Replay(routes) => {
            if routes.routes.len() != fleet {
                return Err(Error::InvalidAllocation(format!("{} routes for {fleet} UAVs", routes.routes.len())));
            }
            if routes.routes.iter().flatten().any(|&i| i >= inst.targets.len()) {
                return Err(Error::InvalidAllocation("route references an unknown target".into()));
            }
            Driver::Replay {
                routes,
                progress: vec![0; fleet],
                done: routes.routes.iter().map(Vec::is_empty).collect(),
            }
        }
    };

    let mut traces: Vec<Trace> = (0..fleet)
        .map(|q| Trace {
            uav: q,
            samples: vec![Sample {
                t: 0.0,
                pos: depot,
                vel: Point::ZERO,
            }],
        })
        .collect();
    let mut per_uav = vec![0.0; fleet];
    let mut velocities = vec![Point::ZERO; fleet];
    let mut prev_goals: Vec<Option<Point>> = vec![None; fleet];
    let mut min_sep: Option<f64> = None;
    let mut min_clear: Option<f64> = None;
    let (mut sep_steps, mut pen_steps, mut timeouts) = (0, 0, 0);
    let mut abnormality = Vec::new();
    let mut replans = 0;
    let mut complete = false;
    let mut steps = 0;
    let in_zone = |p: Point| distance(p, depot) <= config.depot_zone_radius;

    for _ in 0..config.step_cap {
        let visible: Vec<(TargetId, Point)> = targets.iter().copied().enumerate().filter(|(i, _)| !visited.contains(i)).collect();
        let all_parked = swarm.uavs.iter().all(|u| u.phase == Phase::Parked);
        let pending_targets = scenario.events[next_event..].iter().any(|e| matches!(e.kind, EventKind::AddTarget { .. }));
        let finished = match &driver {
            Driver::Replay { done, .. } => done.iter().all(|d| *d),
            _ => visible.is_empty() && all_parked && !pending_targets,
        };
        if finished {
            complete = true;
            break;
        }

        let t = swarm.t;
        let positions = swarm.positions();
        let airborne: Vec<bool> = swarm.uavs.iter().map(|u| u.phase == Phase::Airborne).collect();
        let (goals, scales): (Vec<Option<Point>>, Vec<f64>) = match &mut driver {
            Driver::Ai(planner) => {
                let alerts = collision_alerts(&positions, &velocities, &airborne, &statics, &tracks, &dynamics, config, &in_zone);
                let obs = Observation {
                    t,
                    targets: &visible,
                    positions: &positions,
                    airborne: &airborne,
                    alerts: &alerts,
                };
                let (decision, record) = planner.decide(&obs);
                if record.replanned.is_some() && !abnormality.is_empty() {
                    replans += 1;
                }
                abnormality.push(record);
                check_tasking(planner.belief.assigned().chain(planner.belief.unassigned.iter().copied()), &visible)?;
                let goals = decision
                    .goals
                    .iter()
                    .map(|g| Some(match g {
                        Goal::Target(id) => targets[*id],
                        Goal::Depot => depot,
                    }))
                    .collect();
                (goals, decision.rep_scales)
            }
            Driver::Ql { table, claims } => {
                let claimed: BTreeSet<TargetId> = claims.iter().filter_map(|c| match c {
                    Some(Goal::Target(id)) => Some(*id),
                    _ => None,
                }).collect();
                let mut pool: Vec<(TargetId, Point)> = visible.iter().copied().filter(|(id, _)| !claimed.contains(id)).collect();
                let choosing: Vec<usize> = (0..fleet).filter(|&q| !matches!(claims[q], Some(Goal::Target(_)))).collect();
                for (q, pick) in act(table, depot, &positions, &choosing, &mut pool) {
                    claims[q] = Some(pick.map_or(Goal::Depot, Goal::Target));
                }
                check_tasking(claims.iter().filter_map(|c| match c {
                    Some(Goal::Target(id)) => Some(*id),
                    _ => None,
                }).chain(pool.iter().map(|p| p.0)), &visible)?;
                let goals = claims
                    .iter()
                    .map(|c| c.map(|g| match g {
                        Goal::Target(id) => targets[id],
                        Goal::Depot => depot,
                    }))
                    .collect();
                (goals, vec![1.0; fleet])
            }
            Driver::Replay { routes, progress, done } => {
                let goals = (0..fleet)
                    .map(|q| {
                        if done[q] {
                            None
                        } else if progress[q] < routes.routes[q].len() {
                            Some(targets[routes.routes[q][progress[q]]])
                        } else {
                            Some(depot)
                        }
                    })
                    .collect();
                (goals, vec![1.0; fleet])
            }
        };

        for q in 0..fleet {
            if goals[q] != prev_goals[q] && swarm.uavs[q].phase == Phase::Airborne {
                swarm.start_leg(q);
            }
        }
        prev_goals.clone_from(&goals);

        let mut field: Vec<Disk> = statics.clone();
        field.extend(tracks.iter().zip(&dynamics).map(|(tr, d)| Disk::new(tr.position(), d.radius)));
        velocities = swarm.step(&goals, &scales, &field);
        steps += 1;
        let now = swarm.t;
        for q in 0..fleet {
            let pos = swarm.uavs[q].state.position;
            per_uav[q] += distance(traces[q].samples.last().expect("trace starts with a sample").pos, pos);
            traces[q].samples.push(Sample { t: now, pos, vel: velocities[q] });
        }

        for (tr, d) in tracks.iter_mut().zip(&dynamics) {
            let z = measure(d.position_at(now), &mut noise_rng);
            *tr = tr.predict(pot.dt).update(z)?;
        }

        // arrivals and timeouts
        for q in 0..fleet {
            if swarm.uavs[q].phase != Phase::Airborne {
                continue;
            }
            let Some(goal) = goals[q] else { continue };
            let arrived = distance(swarm.uavs[q].state.position, goal) <= pot.arrival_radius;
            let timed_out = swarm.uavs[q].leg_steps >= pot.leg_step_cap;
            if timed_out && !arrived {
                timeouts += 1;
            }
            match &mut driver {
                Driver::Replay { routes, progress, done } => {
                    if arrived || timed_out {
                        if progress[q] < routes.routes[q].len() {
                            if arrived {
                                let target = routes.routes[q][progress[q]];
                                if visited.insert(target) {
                                    visits.push(Visit { target, uav: q, t: now });
                                }
                            }
                            progress[q] += 1;
                            swarm.start_leg(q);
                        } else {
                            swarm.land(q);
                            done[q] = true;
                        }
                    }
                }
                Driver::Ai(planner) => {
                    let g = planner.belief.uavs[q].route.first().copied();
                    if arrived {
                        match g {
                            Some(id) => {
                                visited.insert(id);
                                visits.push(Visit { target: id, uav: q, t: now });
                                swarm.start_leg(q);
                            }
                            None => swarm.land(q),
                        }
                    } else if timed_out {
                        swarm.start_leg(q);
                    }
                }
                Driver::Ql { claims, .. } => {
                    if arrived {
                        match claims[q] {
                            Some(Goal::Target(id)) => {
                                visited.insert(id);
                                visits.push(Visit { target: id, uav: q, t: now });
                                claims[q] = None;
                                swarm.start_leg(q);
                            }
                            _ => swarm.land(q),
                        }
                    } else if timed_out {
                        swarm.start_leg(q);
                    }
                }
            }
        }

        // safety accounting on the true state
        let positions = swarm.positions();
        let mut violated = false;
        for a in 0..fleet {
            if swarm.uavs[a].phase != Phase::Airborne || in_zone(positions[a]) {
                continue;
            }
            for b in a + 1..fleet {
                if swarm.uavs[b].phase != Phase::Airborne || in_zone(positions[b]) {
                    continue;
                }
                let d = distance(positions[a], positions[b]);
                min_sep = Some(min_sep.map_or(d, |m: f64| m.min(d)));
                violated |= d < config.separation.d_min;
            }
        }
        sep_steps += usize::from(violated);
        let truth: Vec<Disk> = statics.iter().copied().chain(dynamics.iter().map(|d| d.disk_at(now))).collect();
        let mut penetrated = false;
        for (q, u) in swarm.uavs.iter().enumerate() {
            if u.phase != Phase::Airborne {
                continue;
            }
            for d in &truth {
                let c = d.surface_distance(positions[q]);
                min_clear = Some(min_clear.map_or(c, |m: f64| m.min(c)));
                penetrated |= c < 0.0;
            }
        }
        pen_steps += usize::from(penetrated);

        inject(now, &mut next_event, &mut targets, &mut dynamics, &mut tracks, &mut noise_rng);
    }

    let metrics = MetricsRecord {
        version: METRICS_VERSION,
        planner: planner.name().to_string(),
        seed: scenario.seed,
        complete,
        steps,
        completion_time: swarm.t,
        total_distance: per_uav.iter().sum(),
        per_uav_distance: per_uav,
        min_separation: min_sep,
        min_obstacle_clearance: min_clear,
        separation_violation_steps: sep_steps,
        penetration_steps: pen_steps,
        replans,
        leg_timeouts: timeouts,
        targets_total: targets.len(),
        visited: visited.into_iter().collect(),
        visits,
        abnormality,
    };
    Ok(RunOutput { metrics, traces })
}

/// Every visible target is tasked or pooled exactly once.
fn check_tasking(tasked: impl Iterator<Item = TargetId>, visible: &[(TargetId, Point)]) -> Result<()> {
    let mut ids: Vec<TargetId> = tasked.collect();
    let n = ids.len();
    ids.sort_unstable();
    ids.dedup();
    let expected: Vec<TargetId> = visible.iter().map(|v| v.0).collect();
    if ids.len() != n || ids != expected {
        return Err(Error::InvariantBreach(format!("tasking not conserved: tasked {ids:?}, visible {expected:?}")));
    }
    Ok(())
}

/// Soonest predicted conflict per airborne UAV against static disks,
/// tracked obstacles and the other airborne UAVs.
#[allow(clippy::too_many_arguments)]
fn collision_alerts(
    positions: &[Point],
    velocities: &[Point],
    airborne: &[bool],
    statics: &[Disk],
    tracks: &[EkfTrack],
    dynamics: &[DynamicObstacle],
    config: &SimConfig,
    in_zone: &impl Fn(Point) -> bool,
) -> Vec<Option<CollisionAlert>> {
    let mut threats: Vec<Threat> = statics.iter().enumerate().map(|(i, d)| Threat::from_disk(ThreatId::Obstacle(i), d)).collect();
    threats.extend(tracks.iter().zip(dynamics).enumerate().map(|(j, (tr, d))| Threat::from_track(ThreatId::Obstacle(statics.len() + j), tr, d.radius)));
    (0..positions.len())
        .map(|q| {
            if !airborne[q] {
                return None;
            }
            let others = (0..positions.len()).filter(|&k| k != q && airborne[k] && !in_zone(positions[k]) && !in_zone(positions[q])).map(|k| Threat {
                id: ThreatId::Uav(k),
                position: positions[k],
                velocity: velocities[k],
                radius: 0.0,
            });
            threats
                .iter()
                .copied()
                .chain(others)
                .filter_map(|th| check_collision(q, positions[q], velocities[q], &th, config.separation.d_min, config.alert_horizon))
                .min_by(|a, b| a.time_to_closest.total_cmp(&b.time_to_closest).then(a.min_distance.total_cmp(&b.min_distance)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// benchmark

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    /// Normal-approximation 95% interval of the mean.
    pub ci95: (f64, f64),
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
        let var = if m > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let half = 1.96 * (var / n).sqrt();
        Some(Self {
            mean,
            median,
            ci95: (mean - half, mean + half),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub planner: String,
    pub scenario: usize,
    pub seed: u64,
    /// "ok", "incomplete" or "failed".
    pub status: String,
    pub error: Option<String>,
    pub metrics: Option<MetricsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSummary {
    pub planner: String,
    pub runs: usize,
    pub completed: usize,
    pub completion_time: Option<Summary>,
    pub total_distance: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: u32,
    pub cells: Vec<BenchmarkCell>,
    pub summary: Vec<PlannerSummary>,
}

impl BenchmarkReport {
    pub fn succeeded(&self) -> usize {
        self.cells.iter().filter(|c| c.status == "ok").count()
    }

    /// One row per (planner, scenario).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("planner,scenario,seed,status,completion_time,total_distance,min_separation,min_obstacle_clearance,separation_violation_steps,penetration_steps,replans,leg_timeouts\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for c in &self.cells {
            match &c.metrics {
                Some(m) => out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    c.planner,
                    c.scenario,
                    c.seed,
                    c.status,
                    m.completion_time,
                    m.total_distance,
                    opt(m.min_separation),
                    opt(m.min_obstacle_clearance),
                    m.separation_violation_steps,
                    m.penetration_steps,
                    m.replans,
                    m.leg_timeouts
                )),
                None => out.push_str(&format!("{},{},{},{},,,,,,,,\n", c.planner, c.scenario, c.seed, c.status)),
            }
        }
        out
    }

    pub fn summary_for(&self, planner: &str) -> Option<&PlannerSummary> {
        self.summary.iter().find(|s| s.planner == planner)
    }
}

/// Runs every (scenario, planner) pair, scenarios in parallel. Per-cell
/// errors are recorded rather than propagated; summaries cover completed
/// runs only. `planners` pairs a label with each planner, and a planner
/// returning `None` for a scenario marks that cell failed.
pub fn benchmark<'a, F>(scenarios: &[Scenario], labels: &[&str], planner_for: F, config: &SimConfig) -> BenchmarkReport
where
    F: Fn(usize, &str) -> Result<Planner<'a>> + Sync,
{
    let cells: Vec<BenchmarkCell> = scenarios
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, sc)| {
            labels
                .iter()
                .map(|&label| {
                    let result = planner_for(i, label).and_then(|p| run(sc, p, config));
                    let (status, error, metrics) = match result {
                        Ok(out) if out.metrics.complete => ("ok", None, Some(out.metrics)),
                        Ok(out) => ("incomplete", Some(Error::StepCapExceeded(out.metrics.steps).to_string()), Some(out.metrics)),
                        Err(e) => ("failed", Some(e.to_string()), None),
                    };
                    BenchmarkCell {
                        planner: label.to_string(),
                        scenario: i,
                        seed: sc.seed,
                        status: status.to_string(),
                        error,
                        metrics,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let summary = labels
        .iter()
        .map(|&label| {
            let done: Vec<&MetricsRecord> = cells
                .iter()
                .filter(|c| c.planner == label && c.status == "ok")
                .filter_map(|c| c.metrics.as_ref())
                .collect();
            PlannerSummary {
                planner: label.to_string(),
                runs: cells.iter().filter(|c| c.planner == label).count(),
                completed: done.len(),
                completion_time: Summary::of(&done.iter().map(|m| m.completion_time).collect::<Vec<_>>()),
                total_distance: Summary::of(&done.iter().map(|m| m.total_distance).collect::<Vec<_>>()),
            }
        })
        .collect();
    BenchmarkReport {
        version: METRICS_VERSION,
        cells,
        summary,
    }
}
