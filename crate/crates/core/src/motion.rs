//! Potential-field motion: quadratic attraction to the active target,
//! hinge inverse-distance repulsion from obstacles and neighbouring UAVs,
//! and a clipped explicit-Euler integrator for the gradient flow
//! `ẋ = −K ∇(U_att + U_rep)`.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{distance, normalize_angle, Disk, MissionInstance, Point, Sample, Trace, UavKinematicState};

/// Gains and integration settings for the potential field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    /// Attractive gain, 1/s².
    pub k_att: f64,
    pub k_rep_obstacle: f64,
    pub k_rep_uav: f64,
    /// Repulsion cutoff distance, meters.
    pub d0: f64,
    /// Scalar multiple of identity used as the gain matrix `K`.
    pub gain: f64,
    pub dt: f64,
    pub arrival_radius: f64,
    pub speed_limit: f64,
    /// Maximum heading change per step while moving, radians.
    pub heading_rate_limit: f64,
    /// Multiplier applied to both repulsive gains while a Repulsive motion
    /// letter is active.
    pub repulsive_gain_factor: f64,
    pub leg_step_cap: usize,
    pub stall_steps: usize,
    pub stall_displacement: f64,
    /// Number of steps the tangential escape manoeuvre lasts once triggered.
    pub escape_steps: usize,
    pub distance_floor: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            k_att: 1.0,
            k_rep_obstacle: 1e7,
            k_rep_uav: 1e7,
            d0: 30.0,
            gain: 1.0,
            dt: 0.1,
            arrival_radius: 5.0,
            speed_limit: 15.0,
            heading_rate_limit: FRAC_PI_4,
            repulsive_gain_factor: 3.0,
            leg_step_cap: 20_000,
            stall_steps: 50,
            stall_displacement: 1e-3,
            escape_steps: 20,
            distance_floor: 1e-6,
        }
    }
}

impl PotentialConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.k_att,
            self.k_rep_obstacle,
            self.k_rep_uav,
            self.d0,
            self.gain,
            self.dt,
            self.arrival_radius,
            self.speed_limit,
            self.heading_rate_limit,
        ];
        if positive.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInstance("potential gains, dt and radii must be positive".into()))
        }
    }

    pub fn max_step(&self) -> f64 {
        self.speed_limit * self.dt
    }
}

/// Attractive or repulsive motion category of a motion letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionCategory {
    Attractive,
    Repulsive,
}

/// Factor applied to the repulsive gains for a motion word: raised when the
/// word contains any Repulsive letter.
pub fn repulsion_scale(word: &[MotionCategory], config: &PotentialConfig) -> f64 {
    if word.contains(&MotionCategory::Repulsive) {
        config.repulsive_gain_factor
    } else {
        1.0
    }
}

/// Disk moving back and forth along a segment at constant speed. Its true
/// position is only known to the simulator; planners see EKF estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub start: Point,
    pub end: Point,
    pub speed: f64,
    pub radius: f64,
}

impl DynamicObstacle {
    pub fn position_at(&self, t: f64) -> Point {
        let span = distance(self.start, self.end);
        if span <= 0.0 || self.speed <= 0.0 {
            return self.start;
        }
        let travelled = (self.speed * t).rem_euclid(2.0 * span);
        let s = if travelled <= span { travelled } else { 2.0 * span - travelled };
        self.start + (self.end - self.start) * (s / span)
    }

    pub fn velocity_at(&self, t: f64) -> Point {
        let span = distance(self.start, self.end);
        if span <= 0.0 || self.speed <= 0.0 {
            return Point::ZERO;
        }
        let dir = (self.end - self.start) * (1.0 / span);
        let travelled = (self.speed * t).rem_euclid(2.0 * span);
        if travelled <= span {
            dir * self.speed
        } else {
            dir * -self.speed
        }
    }

    pub fn disk_at(&self, t: f64) -> Disk {
        Disk::new(self.position_at(t), self.radius)
    }
}

/// The obstacle set: static disks plus dynamic disks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    #[serde(default)]
    pub statics: Vec<Disk>,
    #[serde(default)]
    pub dynamics: Vec<DynamicObstacle>,
}

impl ObstacleSet {
    pub fn validate(&self) -> Result<()> {
        let ok = self.statics.iter().all(|d| d.radius > 0.0)
            && self.dynamics.iter().all(|d| d.radius > 0.0 && d.speed >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInstance("obstacle radii must be positive".into()))
        }
    }

    /// True positions of every obstacle at time `t`.
    pub fn disks_at(&self, t: f64) -> Vec<Disk> {
        self.statics
            .iter()
            .copied()
            .chain(self.dynamics.iter().map(|d| d.disk_at(t)))
            .collect()
    }
}

/// Everything that repels a UAV at one instant.
#[derive(Debug, Clone, Copy)]
pub struct FieldSources<'a> {
    pub obstacles: &'a [Disk],
    pub neighbors: &'a [Point],
}

impl<'a> FieldSources<'a> {
    pub const EMPTY: FieldSources<'static> = FieldSources {
        obstacles: &[],
        neighbors: &[],
    };

    pub fn new(obstacles: &'a [Disk], neighbors: &'a [Point]) -> Self {
        Self { obstacles, neighbors }
    }
}

fn hinge(d: f64, d0: f64) -> f64 {
    (1.0 / d - 1.0 / d0).max(0.0)
}

/// Attractive and repulsive potential at `x`. Obstacle distances are taken
/// to the disk surface; all distances are floored at `distance_floor`.
/// `rep_scale` multiplies both repulsive gains.
pub fn potential(x: Point, target: Point, sources: FieldSources<'_>, config: &PotentialConfig, rep_scale: f64) -> (f64, f64) {
    let u_att = 0.5 * config.k_att * (x - target).norm_sq();
    let eps = config.distance_floor;
    let mut u_rep = 0.0;
    for o in sources.obstacles {
        let h = hinge(o.surface_distance(x).max(eps), config.d0);
        u_rep += 0.5 * config.k_rep_obstacle * rep_scale * h * h;
    }
    for &r in sources.neighbors {
        let h = hinge(distance(x, r).max(eps), config.d0);
        u_rep += 0.5 * config.k_rep_uav * rep_scale * h * h;
    }
    (u_att, u_rep)
}

fn total_potential(x: Point, target: Point, sources: FieldSources<'_>, config: &PotentialConfig, rep_scale: f64) -> f64 {
    let (a, r) = potential(x, target, sources, config, rep_scale);
    a + r
}

fn unit_from(center: Point, x: Point) -> Point {
    let v = x - center;
    let n = v.norm();
    if n > 0.0 {
        v * (1.0 / n)
    } else {
        Point::new(1.0, 0.0)
    }
}

/// Analytic gradients `(∇U_att, ∇U_rep)` at `x`.
pub fn gradient(x: Point, target: Point, sources: FieldSources<'_>, config: &PotentialConfig, rep_scale: f64) -> (Point, Point) {
    let g_att = (x - target) * config.k_att;
    let eps = config.distance_floor;
    let mut g_rep = Point::ZERO;
    let mut add = |d: f64, dir: Point, k: f64| {
        let d = d.max(eps);
        let h = hinge(d, config.d0);
        if h > 0.0 {
            // d/dx ½k(1/d − 1/d0)² = −k (1/d − 1/d0) / d² · ∇d
            g_rep += dir * (-k * rep_scale * h / (d * d));
        }
    };
    for o in sources.obstacles {
        add(o.surface_distance(x), unit_from(o.center, x), config.k_rep_obstacle);
    }
    for &r in sources.neighbors {
        add(distance(x, r), unit_from(r, x), config.k_rep_uav);
    }
    (g_att, g_rep)
}

/// Result of one integrator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: UavKinematicState,
    pub velocity: Point,
    pub displacement: f64,
}

fn apply_heading_limit(state: &UavKinematicState, desired: Point) -> (f64, f64) {
    let mag = desired.norm();
    if mag <= 0.0 {
        return (state.heading, 0.0);
    }
    let want = desired.angle();
    if state.speed <= 1e-9 {
        return (want, mag);
    }
    let diff = normalize_angle(want - state.heading);
    let limit = state.heading_rate_limit;
    if diff.abs() <= limit {
        (want, mag)
    } else {
        // turn as far as allowed and keep only the component of the
        // desired step along the new heading
        let heading = normalize_angle(state.heading + limit * diff.signum());
        let along = mag * (diff - limit * diff.signum()).cos();
        (heading, along.max(0.0))
    }
}

fn finish_step(state: &UavKinematicState, heading: f64, mag: f64, dt: f64) -> StepOutcome {
    let dir = Point::from_polar(1.0, heading);
    let move_vec = dir * mag;
    let mut next = *state;
    next.position = state.position + move_vec;
    if mag > 0.0 {
        next.heading = heading;
    }
    next.speed = (mag / dt).min(state.speed_limit);
    StepOutcome {
        state: next,
        velocity: move_vec * (1.0 / dt),
        displacement: mag,
    }
}

/// One explicit-Euler step of the gradient flow. The commanded step is
/// clipped to `v_max·dt` and, while moving, to the per-step heading limit.
/// If the stiff repulsive terms make the full step increase the total
/// potential, the step is halved until it does not.
pub fn gradient_step(
    state: &UavKinematicState,
    target: Point,
    sources: FieldSources<'_>,
    config: &PotentialConfig,
    rep_scale: f64,
) -> StepOutcome {
    let x = state.position;
    let (ga, gr) = gradient(x, target, sources, config, rep_scale);
    let mut desired = (ga + gr) * (-config.gain * config.dt);
    let cap = state.speed_limit * config.dt;
    let n = desired.norm();
    if !n.is_finite() {
        desired = Point::ZERO;
    } else if n > cap {
        desired = desired * (cap / n);
    }
    let (heading, mut mag) = apply_heading_limit(state, desired);
    if mag > 0.0 {
        let u0 = total_potential(x, target, sources, config, rep_scale);
        let dir = Point::from_polar(1.0, heading);
        let mut halvings = 0;
        while total_potential(x + dir * mag, target, sources, config, rep_scale) > u0 {
            mag *= 0.5;
            halvings += 1;
            if halvings > 40 {
                mag = 0.0;
                break;
            }
        }
    }
    finish_step(state, heading, mag, config.dt)
}

/// Sideways step used to leave a stall: the goal direction rotated a
/// quarter turn, at half the maximum step. Falls back to the opposite side,
/// then to standing still, if the move would cut into the safety shell.
fn escape_step(state: &UavKinematicState, target: Point, sources: FieldSources<'_>, config: &PotentialConfig) -> StepOutcome {
    let to_goal = target - state.position;
    let base = if to_goal.norm() > 0.0 {
        to_goal * (1.0 / to_goal.norm())
    } else {
        Point::new(1.0, 0.0)
    };
    let mag = 0.5 * config.max_step();
    let clearance = |p: Point| {
        let o = sources
            .obstacles
            .iter()
            .map(|d| d.surface_distance(p))
            .fold(f64::INFINITY, f64::min);
        let n = sources
            .neighbors
            .iter()
            .map(|&r| distance(p, r))
            .fold(f64::INFINITY, f64::min);
        o.min(n)
    };
    let floor = 0.5 * config.d0;
    for side in [base.perp(), -base.perp()] {
        let (heading, m) = apply_heading_limit(state, side * mag);
        let dir = Point::from_polar(1.0, heading);
        let candidate = state.position + dir * m;
        if m > 0.0 && clearance(candidate) >= floor.min(clearance(state.position)) {
            return finish_step(state, heading, m, config.dt);
        }
    }
    finish_step(state, state.heading, 0.0, config.dt)
}

/// Tracks consecutive stalled steps and runs the escape manoeuvre.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StallMonitor {
    stalled: usize,
    escaping: usize,
}

impl StallMonitor {
    pub fn step(
        &mut self,
        state: &UavKinematicState,
        target: Point,
        sources: FieldSources<'_>,
        config: &PotentialConfig,
        rep_scale: f64,
    ) -> StepOutcome {
        let out = if self.escaping > 0 {
            self.escaping -= 1;
            escape_step(state, target, sources, config)
        } else {
            gradient_step(state, target, sources, config, rep_scale)
        };
        if out.displacement < config.stall_displacement && distance(state.position, target) > config.arrival_radius {
            self.stalled += 1;
            if self.stalled >= config.stall_steps {
                self.stalled = 0;
                self.escaping = config.escape_steps;
            }
        } else {
            self.stalled = 0;
        }
        out
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Static and dynamic obstacles seen during a leg, plus the leg's start time.
#[derive(Debug, Clone, Copy)]
pub struct LegEnvironment<'a> {
    pub obstacles: &'a ObstacleSet,
    pub t0: f64,
}

/// Integrates one leg until the UAV is within the arrival radius or the
/// step cap is hit. Returns the samples and whether the target was reached.
pub fn fly_leg_partial(
    start: UavKinematicState,
    target: Point,
    env: LegEnvironment<'_>,
    config: &PotentialConfig,
    motion_word: &[MotionCategory],
) -> (Vec<Sample>, bool) {
    let rep_scale = repulsion_scale(motion_word, config);
    let mut state = start;
    let mut t = env.t0;
    let mut samples = vec![Sample {
        t,
        pos: state.position,
        vel: state.velocity(),
    }];
    let mut monitor = StallMonitor::default();
    for _ in 0..config.leg_step_cap {
        if distance(state.position, target) <= config.arrival_radius {
            return (samples, true);
        }
        let disks = env.obstacles.disks_at(t);
        let out = monitor.step(&state, target, FieldSources::new(&disks, &[]), config, rep_scale);
        state = out.state;
        t += config.dt;
        samples.push(Sample {
            t,
            pos: state.position,
            vel: out.velocity,
        });
    }
    let arrived = distance(state.position, target) <= config.arrival_radius;
    (samples, arrived)
}

/// Like [`fly_leg_partial`] but reports a cap hit as [`Error::LegTimeout`].
pub fn fly_leg(
    start: UavKinematicState,
    target: Point,
    env: LegEnvironment<'_>,
    config: &PotentialConfig,
    motion_word: &[MotionCategory],
) -> Result<Vec<Sample>> {
    let (samples, arrived) = fly_leg_partial(start, target, env, config, motion_word);
    if arrived {
        Ok(samples)
    } else {
        Err(Error::LegTimeout {
            steps: config.leg_step_cap,
        })
    }
}

/// Flight phase of a UAV in a swarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// On the ground at the depot, before launch or after landing.
    Parked,
    Airborne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmUav {
    pub state: UavKinematicState,
    pub phase: Phase,
    pub monitor: StallMonitor,
    pub leg_steps: usize,
}

/// Synchronous multi-UAV integrator. Every airborne UAV steps from the same
/// snapshot of positions, so the update is order independent.
///
/// Parked UAVs neither move nor repel, and UAVs within `d0` of the depot
/// neither repel nor feel each other. A parked UAV with a goal launches
/// once every airborne UAV is at least `d0` from the depot, at most one
/// launch per step, lowest index first.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub uavs: Vec<SwarmUav>,
    pub depot: Point,
    pub config: PotentialConfig,
    pub t: f64,
}

impl Swarm {
    pub fn new(depot: Point, fleet: usize, config: PotentialConfig) -> Self {
        let uav = SwarmUav {
            state: UavKinematicState::at_rest(depot, 0.0, config.speed_limit, config.heading_rate_limit),
            phase: Phase::Parked,
            monitor: StallMonitor::default(),
            leg_steps: 0,
        };
        Self {
            uavs: vec![uav; fleet],
            depot,
            config,
            t: 0.0,
        }
    }

    pub fn positions(&self) -> Vec<Point> {
        self.uavs.iter().map(|u| u.state.position).collect()
    }

    pub fn airborne_positions(&self) -> Vec<(usize, Point)> {
        self.uavs
            .iter()
            .enumerate()
            .filter(|(_, u)| u.phase == Phase::Airborne)
            .map(|(i, u)| (i, u.state.position))
            .collect()
    }

    fn launch_clear(&self) -> bool {
        self.uavs
            .iter()
            .filter(|u| u.phase == Phase::Airborne)
            .all(|u| distance(u.state.position, self.depot) >= self.config.d0)
    }

    /// Marks a UAV as landed at its current position.
    pub fn land(&mut self, q: usize) {
        let u = &mut self.uavs[q];
        u.phase = Phase::Parked;
        u.state.speed = 0.0;
        u.monitor.reset();
        u.leg_steps = 0;
    }

    /// Resets the per-leg stall monitor and step counter, e.g. on retarget.
    pub fn start_leg(&mut self, q: usize) {
        self.uavs[q].monitor.reset();
        self.uavs[q].leg_steps = 0;
    }

    /// Advances every UAV one step. `goals[q]` is the point UAV `q` flies
    /// to (`None` holds position); `rep_scales[q]` scales its repulsion.
    /// Returns each UAV's velocity over the step.
    pub fn step(&mut self, goals: &[Option<Point>], rep_scales: &[f64], obstacles: &[Disk]) -> Vec<Point> {
        let snapshot = self.airborne_positions();
        let launch = if self.launch_clear() {
            self.uavs
                .iter()
                .enumerate()
                .position(|(q, u)| {
                    u.phase == Phase::Parked
                        && goals[q].is_some_and(|g| distance(g, u.state.position) > self.config.arrival_radius)
                })
        } else {
            None
        };
        let mut velocities = vec![Point::ZERO; self.uavs.len()];
        let config = self.config;
        for (q, uav) in self.uavs.iter_mut().enumerate() {
            if uav.phase == Phase::Parked {
                if launch != Some(q) {
                    continue;
                }
                uav.phase = Phase::Airborne;
                if let Some(g) = goals[q] {
                    uav.state.heading = normalize_angle((g - uav.state.position).angle());
                }
            }
            let Some(goal) = goals[q] else {
                uav.state.speed = 0.0;
                continue;
            };
            // the depot pad is shared: no UAV-UAV repulsion inside its zone
            let in_zone = |p: Point| distance(p, self.depot) < config.d0;
            let neighbors: Vec<Point> = if in_zone(uav.state.position) {
                Vec::new()
            } else {
                snapshot.iter().filter(|(i, p)| *i != q && !in_zone(*p)).map(|(_, p)| *p).collect()
            };
            let sources = FieldSources::new(obstacles, &neighbors);
            let out = uav.monitor.step(&uav.state, goal, sources, &config, rep_scales[q]);
            uav.state = out.state;
            uav.leg_steps += 1;
            velocities[q] = out.velocity;
        }
        self.t += config.dt;
        velocities
    }
}

/// Flies fixed routes for the whole fleet on an obstacle field given by the
/// instance's static disks. Each UAV visits its route in order and returns
/// to the depot. Returns one trace per UAV on a common time grid.
pub fn fly_routes(instance: &MissionInstance, routes: &[Vec<usize>], config: &PotentialConfig, step_cap: usize) -> Vec<Trace> {
    let fleet = routes.len();
    let mut swarm = Swarm::new(instance.depot, fleet, *config);
    let mut progress = vec![0usize; fleet];
    let mut done: Vec<bool> = routes.iter().map(Vec::is_empty).collect();
    let mut traces: Vec<Trace> = (0..fleet)
        .map(|q| Trace {
            uav: q,
            samples: vec![Sample {
                t: 0.0,
                pos: instance.depot,
                vel: Point::ZERO,
            }],
        })
        .collect();
    let scales = vec![1.0; fleet];
    for _ in 0..step_cap {
        if done.iter().all(|d| *d) {
            break;
        }
        let goals: Vec<Option<Point>> = (0..fleet)
            .map(|q| {
                if done[q] {
                    None
                } else if progress[q] < routes[q].len() {
                    Some(instance.targets[routes[q][progress[q]]])
                } else {
                    Some(instance.depot)
                }
            })
            .collect();
        let vel = swarm.step(&goals, &scales, &instance.obstacles);
        for q in 0..fleet {
            traces[q].samples.push(Sample {
                t: swarm.t,
                pos: swarm.uavs[q].state.position,
                vel: vel[q],
            });
            if done[q] || swarm.uavs[q].phase != Phase::Airborne {
                continue;
            }
            let goal = goals[q].expect("active UAV has a goal");
            let arrived = distance(swarm.uavs[q].state.position, goal) <= config.arrival_radius;
            let timed_out = swarm.uavs[q].leg_steps >= config.leg_step_cap;
            if arrived || timed_out {
                if progress[q] < routes[q].len() {
                    progress[q] += 1;
                    swarm.start_leg(q);
                } else {
                    swarm.land(q);
                    done[q] = true;
                }
            }
        }
    }
    traces
}
