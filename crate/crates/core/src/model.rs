//! Problem definition shared by every other module: planar geometry, mission
//! instances, allocations, route orders, the MTSP objective and the
//! kinematic/separation constraint checker.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALTITUDE: f64 = 200.0;

/// A point (or vector) in the fixed-altitude plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Counter-clockwise rotation by a quarter turn.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn from_polar(r: f64, theta: f64) -> Point {
        Point::new(r * theta.cos(), r * theta.sin())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Euclidean distance between two planar points.
pub fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Axis-aligned bounding box, serialized as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Area {
    pub min: Point,
    pub max: Point,
}

impl Area {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            min: Point::new(xmin, ymin),
            max: Point::new(xmax, ymax),
        }
    }

    pub fn square(side: f64) -> Self {
        Self::new(0.0, 0.0, side, side)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }
}

impl From<[f64; 4]> for Area {
    fn from(v: [f64; 4]) -> Self {
        Area::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Area> for [f64; 4] {
    fn from(a: Area) -> Self {
        [a.min.x, a.min.y, a.max.x, a.max.y]
    }
}

/// Static disk obstacle, serialized as `[x, y, r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Distance from `p` to the disk surface (negative inside).
    pub fn surface_distance(&self, p: Point) -> f64 {
        distance(p, self.center) - self.radius
    }
}

impl From<[f64; 3]> for Disk {
    fn from(v: [f64; 3]) -> Self {
        Disk::new(Point::new(v[0], v[1]), v[2])
    }
}

impl From<Disk> for [f64; 3] {
    fn from(d: Disk) -> Self {
        [d.center.x, d.center.y, d.radius]
    }
}

/// One mission: depot, targets (identified by index), fleet size and area.
///
/// Static obstacles are optional and omitted from JSON when absent, so an
/// obstacle-free instance serializes to exactly
/// `{depot, altitude, area, targets, fleet_size}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionInstance {
    pub depot: Point,
    #[serde(default = "default_altitude")]
    pub altitude: f64,
    pub area: Area,
    pub targets: Vec<Point>,
    pub fleet_size: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<Disk>,
}

fn default_altitude() -> f64 {
    DEFAULT_ALTITUDE
}

impl MissionInstance {
    pub fn new(depot: Point, area: Area, targets: Vec<Point>, fleet_size: usize) -> Result<Self> {
        let inst = Self {
            depot,
            altitude: DEFAULT_ALTITUDE,
            area,
            targets,
            fleet_size,
            obstacles: Vec::new(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    /// Full invariant check: at least one target and one UAV, everything
    /// inside the area.
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidInstance("no targets".into()));
        }
        self.validate_geometry()
    }

    /// Geometry-only check. Scenarios may start with an empty target list
    /// and receive targets through events.
    pub fn validate_geometry(&self) -> Result<()> {
        if self.fleet_size == 0 {
            return Err(Error::InvalidInstance("fleet size must be positive".into()));
        }
        if !(self.area.width() > 0.0 && self.area.height() > 0.0) {
            return Err(Error::InvalidInstance("area must have positive extent".into()));
        }
        if !self.depot.is_finite() || !self.area.contains(self.depot) {
            return Err(Error::InvalidInstance("depot outside area".into()));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !t.is_finite() || !self.area.contains(*t) {
                return Err(Error::InvalidInstance(format!("target {i} outside area")));
            }
        }
        for d in &self.obstacles {
            if !(d.radius > 0.0) {
                return Err(Error::InvalidInstance("obstacle radius must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Kinematic state of one UAV in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavKinematicState {
    pub position: Point,
    pub speed: f64,
    pub heading: f64,
    /// Maximum heading change per simulation step, radians.
    pub heading_rate_limit: f64,
    pub speed_limit: f64,
}

impl UavKinematicState {
    pub fn at_rest(position: Point, heading: f64, speed_limit: f64, heading_rate_limit: f64) -> Self {
        Self {
            position,
            speed: 0.0,
            heading: normalize_angle(heading),
            heading_rate_limit,
            speed_limit,
        }
    }

    pub fn velocity(&self) -> Point {
        Point::from_polar(self.speed, self.heading)
    }

    pub fn is_valid(&self) -> bool {
        self.speed >= 0.0
            && self.speed <= self.speed_limit * (1.0 + 1e-12)
            && self.heading > -PI
            && self.heading <= PI
    }
}

/// Partition of target indices among the fleet: `subsets[q]` is `C_q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub subsets: Vec<Vec<usize>>,
}

impl Allocation {
    pub fn new(subsets: Vec<Vec<usize>>) -> Self {
        let subsets = subsets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s
            })
            .collect();
        Self { subsets }
    }

    /// Builds the allocation from a per-target UAV assignment.
    pub fn from_assignment(assignment: &[usize], fleet_size: usize) -> Self {
        let mut subsets = vec![Vec::new(); fleet_size];
        for (target, &q) in assignment.iter().enumerate() {
            subsets[q].push(target);
        }
        Self { subsets }
    }

    pub fn fleet_size(&self) -> usize {
        self.subsets.len()
    }

    /// Checks visit-once over `num_targets` targets; empty subsets are only
    /// allowed when there are fewer targets than UAVs.
    pub fn validate(&self, num_targets: usize) -> Result<()> {
        let mut seen = vec![false; num_targets];
        for (q, subset) in self.subsets.iter().enumerate() {
            if subset.is_empty() && num_targets >= self.subsets.len() {
                return Err(Error::InvalidAllocation(format!("UAV {q} has no targets")));
            }
            for &c in subset {
                if c >= num_targets {
                    return Err(Error::InvalidAllocation(format!("unknown target {c}")));
                }
                if seen[c] {
                    return Err(Error::InvalidAllocation(format!("target {c} assigned twice")));
                }
                seen[c] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidAllocation(format!("target {missing} unassigned")));
        }
        Ok(())
    }
}

/// Per-UAV visiting order: `routes[q]` is a permutation of `C_q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteOrder {
    pub routes: Vec<Vec<usize>>,
}

impl RouteOrder {
    pub fn new(routes: Vec<Vec<usize>>) -> Self {
        Self { routes }
    }

    pub fn validate(&self, allocation: &Allocation) -> Result<()> {
        if self.routes.len() != allocation.subsets.len() {
            return Err(Error::InvalidAllocation(
                "route count differs from fleet size".into(),
            ));
        }
        for (q, (route, subset)) in self.routes.iter().zip(&allocation.subsets).enumerate() {
            let as_set: BTreeSet<usize> = route.iter().copied().collect();
            if as_set.len() != route.len() || route.len() != subset.len() {
                return Err(Error::InvalidAllocation(format!(
                    "route {q} is not a permutation of its subset"
                )));
            }
            if !subset.iter().all(|c| as_set.contains(c)) {
                return Err(Error::InvalidAllocation(format!(
                    "route {q} is not a permutation of its subset"
                )));
            }
        }
        Ok(())
    }

    /// The allocation implied by these routes.
    pub fn allocation(&self) -> Allocation {
        Allocation::new(self.routes.clone())
    }
}

/// Hard separation and repulsion cutoff distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub d_min: f64,
    pub d0: f64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            d_min: 10.0,
            d0: 30.0,
        }
    }
}

impl SeparationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_min > 0.0 && self.d_min <= self.d0 {
            Ok(())
        } else {
            Err(Error::InvalidInstance(format!(
                "separation requires 0 < d_min <= d0, got d_min={} d0={}",
                self.d_min, self.d0
            )))
        }
    }
}

/// Length of depot → route… → depot through the given positions.
pub fn route_length(depot: Point, route: &[usize], positions: &[Point]) -> f64 {
    open_route_length(depot, route, positions)
        + route.last().map_or(0.0, |&c| distance(positions[c], depot))
}

/// Length of start → route… without the return leg.
pub fn open_route_length(start: Point, route: &[usize], positions: &[Point]) -> f64 {
    let mut total = 0.0;
    let mut prev = start;
    for &c in route {
        total += distance(prev, positions[c]);
        prev = positions[c];
    }
    total
}

/// MTSP objective: sum over UAVs of their closed depot tours. UAVs with an
/// empty subset contribute nothing.
pub fn tour_cost(instance: &MissionInstance, allocation: &Allocation, orders: &RouteOrder) -> Result<f64> {
    allocation.validate(instance.num_targets())?;
    orders.validate(allocation)?;
    Ok(orders
        .routes
        .iter()
        .map(|r| route_length(instance.depot, r, &instance.targets))
        .sum())
}

/// One trajectory sample, serialized as `[t, x, y, vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct Sample {
    pub t: f64,
    pub pos: Point,
    pub vel: Point,
}

impl From<[f64; 5]> for Sample {
    fn from(v: [f64; 5]) -> Self {
        Sample {
            t: v[0],
            pos: Point::new(v[1], v[2]),
            vel: Point::new(v[3], v[4]),
        }
    }
}

impl From<Sample> for [f64; 5] {
    fn from(s: Sample) -> Self {
        [s.t, s.pos.x, s.pos.y, s.vel.x, s.vel.y]
    }
}

/// Time-stamped trajectory of one UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub uav: usize,
    pub samples: Vec<Sample>,
}

impl Trace {
    /// Polyline length of the trajectory.
    pub fn length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| distance(w[0].pos, w[1].pos))
            .sum()
    }
}

/// Limits checked by [`check_constraints`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLimits {
    pub speed_limit: f64,
    pub heading_rate_limit: f64,
    pub separation: SeparationConfig,
    /// Samples within this radius of the depot count as parked or landing
    /// and are exempt from the separation check.
    pub depot_zone: Option<(Point, f64)>,
    pub tolerance: f64,
}

impl ConstraintLimits {
    pub fn new(speed_limit: f64, heading_rate_limit: f64, separation: SeparationConfig) -> Self {
        Self {
            speed_limit,
            heading_rate_limit,
            separation,
            depot_zone: None,
            tolerance: 1e-9,
        }
    }

    pub fn with_depot_zone(mut self, depot: Point, radius: f64) -> Self {
        self.depot_zone = Some((depot, radius));
        self
    }

    pub fn in_depot_zone(&self, p: Point) -> bool {
        self.depot_zone
            .is_some_and(|(depot, r)| distance(p, depot) <= r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    Speed { uav: usize, speed: f64 },
    HeadingRate { uav: usize, delta: f64 },
    Separation { a: usize, b: usize, distance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub t: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn separation_violations(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| matches!(v.kind, ViolationKind::Separation { .. }))
            .count()
    }
}

const MOVING_EPS: f64 = 1e-6;

/// Reports every timestep violating the speed limit, the per-step heading
/// change limit or the inter-UAV separation.
///
/// Heading changes are only measured between consecutive samples that are
/// both moving; a stopped UAV has no heading.
pub fn check_constraints(trajectories: &[Trace], limits: &ConstraintLimits) -> Result<ViolationReport> {
    let mut report = ViolationReport::default();
    let Some(first) = trajectories.first() else {
        return Ok(report);
    };
    let steps = first.samples.len();
    for tr in trajectories {
        if tr.samples.len() != steps {
            return Err(Error::MismatchedTimeGrids(format!(
                "UAV {} has {} samples, expected {steps}",
                tr.uav,
                tr.samples.len()
            )));
        }
        for (a, b) in tr.samples.iter().zip(&first.samples) {
            if (a.t - b.t).abs() > 1e-9 {
                return Err(Error::MismatchedTimeGrids(format!(
                    "UAV {} sampled at t={} where UAV {} has t={}",
                    tr.uav, a.t, first.uav, b.t
                )));
            }
        }
    }

    let tol = limits.tolerance;
    for step in 0..steps {
        let t = first.samples[step].t;
        for tr in trajectories {
            let s = tr.samples[step];
            let speed = s.vel.norm();
            if speed > limits.speed_limit + tol {
                report.violations.push(Violation {
                    step,
                    t,
                    kind: ViolationKind::Speed { uav: tr.uav, speed },
                });
            }
            if step > 0 {
                let prev = tr.samples[step - 1].vel;
                if prev.norm() > MOVING_EPS && speed > MOVING_EPS {
                    let delta = normalize_angle(s.vel.angle() - prev.angle()).abs();
                    if delta > limits.heading_rate_limit + tol {
                        report.violations.push(Violation {
                            step,
                            t,
                            kind: ViolationKind::HeadingRate { uav: tr.uav, delta },
                        });
                    }
                }
            }
        }
        for (i, a) in trajectories.iter().enumerate() {
            let pa = a.samples[step].pos;
            if limits.in_depot_zone(pa) {
                continue;
            }
            for b in &trajectories[i + 1..] {
                let pb = b.samples[step].pos;
                if limits.in_depot_zone(pb) {
                    continue;
                }
                let d = distance(pa, pb);
                if d < limits.separation.d_min {
                    report.violations.push(Violation {
                        step,
                        t,
                        kind: ViolationKind::Separation {
                            a: a.uav,
                            b: b.uav,
                            distance: d,
                        },
                    });
                }
            }
        }
    }
    Ok(report)
}
