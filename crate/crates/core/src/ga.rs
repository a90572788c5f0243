//! Genetic algorithm with repulsion forces (GA–RF) for the min-sum MTSP,
//! and generation of expert demonstrations from its solutions.
//!
//! A chromosome is a giant tour over all targets plus `Q − 1` cut points.
//! Fitness is the tour cost plus a quadratic hinge penalty on predicted
//! inter-UAV proximity. Proximity is previewed by flying the decoded routes
//! along straight lines at cruise speed with staggered launches, which is
//! cheap enough to run for every individual; the potential-field integrator
//! is only run for the final elite to produce the motion traces.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{distance, route_length, Allocation, Area, Disk, MissionInstance, Point, RouteOrder, SeparationConfig, Trace};
use crate::motion::{fly_routes, PotentialConfig};

/// Step cap for flying the final elite, matching the simulator's cap.
pub const TRACE_STEP_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub repulsion_weight: f64,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            tournament_size: 3,
            repulsion_weight: 10.0,
            rng_seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = (0.0..=1.0).contains(&self.crossover_rate) && (0.0..=1.0).contains(&self.mutation_rate);
        if !rates_ok {
            return Err(Error::InvalidInstance("GA rates must lie in [0, 1]".into()));
        }
        if self.population_size == 0 || self.tournament_size == 0 {
            return Err(Error::InvalidInstance("GA sizes must be positive".into()));
        }
        if !(self.repulsion_weight >= 0.0) {
            return Err(Error::InvalidInstance("repulsion_weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Giant tour plus cut points; route `q` is `giant_tour[b[q-1]..b[q]]`
/// with `b[-1] = 0` and `b[Q-1] = N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chromosome {
    pub giant_tour: Vec<usize>,
    pub breakpoints: Vec<usize>,
}

/// Cut points must be strictly increasing in `[1, N−1]` so every UAV gets
/// a target. With fewer targets than UAVs they only need to be sorted
/// within `[0, N]`.
pub fn breakpoints_valid(breakpoints: &[usize], n: usize, fleet: usize) -> bool {
    if breakpoints.len() + 1 != fleet {
        return false;
    }
    if n >= fleet {
        breakpoints.iter().all(|&b| (1..n).contains(&b)) && breakpoints.windows(2).all(|w| w[0] < w[1])
    } else {
        breakpoints.iter().all(|&b| b <= n) && breakpoints.windows(2).all(|w| w[0] <= w[1])
    }
}

fn random_breakpoints(n: usize, fleet: usize, rng: &mut impl Rng) -> Vec<usize> {
    let cuts = fleet - 1;
    let mut b: Vec<usize> = if n >= fleet {
        sample(rng, n - 1, cuts).into_iter().map(|i| i + 1).collect()
    } else {
        (0..cuts).map(|_| rng.random_range(0..=n)).collect()
    };
    b.sort_unstable();
    b
}

impl Chromosome {
    pub fn random(n: usize, fleet: usize, rng: &mut impl Rng) -> Self {
        let mut giant_tour: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            giant_tour.swap(i, j);
        }
        Self {
            giant_tour,
            breakpoints: random_breakpoints(n, fleet, rng),
        }
    }

    pub fn fleet_size(&self) -> usize {
        self.breakpoints.len() + 1
    }

    pub fn is_valid(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        let perm = self.giant_tour.len() == n
            && self.giant_tour.iter().all(|&c| c < n && !std::mem::replace(&mut seen[c], true));
        perm && breakpoints_valid(&self.breakpoints, n, self.fleet_size())
    }

    pub fn routes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.fleet_size());
        let mut start = 0;
        for &b in self.breakpoints.iter().chain(std::iter::once(&self.giant_tour.len())) {
            out.push(self.giant_tour[start..b].to_vec());
            start = b;
        }
        out
    }

    pub fn decode(&self) -> (Allocation, RouteOrder) {
        let orders = RouteOrder::new(self.routes());
        (orders.allocation(), orders)
    }
}

/// Straight-line motion preview used by the repulsion penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPreview {
    pub dt: f64,
    pub speed: f64,
    /// Delay between consecutive launches.
    pub launch_gap: f64,
    /// Positions this close to the depot are parked or landing and exempt.
    pub depot_radius: f64,
}

impl MotionPreview {
    pub fn from_potential(config: &PotentialConfig) -> Self {
        Self {
            dt: 0.5,
            speed: config.speed_limit,
            launch_gap: config.d0 / config.speed_limit,
            depot_radius: config.arrival_radius,
        }
    }
}

struct Segment {
    from: Point,
    dir: Point,
    len: f64,
}

/// Constant-speed walk along a closed route, queried at non-decreasing
/// arc lengths.
struct PolylineWalker {
    segments: Vec<Segment>,
    seg: usize,
    seg_start: f64,
}

impl PolylineWalker {
    fn new(points: impl Iterator<Item = Point>) -> Self {
        let pts: Vec<Point> = points.collect();
        let segments = pts
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let len = d.norm();
                let dir = if len > 0.0 { d * (1.0 / len) } else { Point::ZERO };
                Segment { from: w[0], dir, len }
            })
            .collect();
        Self {
            segments,
            seg: 0,
            seg_start: 0.0,
        }
    }

    fn at(&mut self, s: f64) -> Option<Point> {
        while let Some(g) = self.segments.get(self.seg) {
            if s <= self.seg_start + g.len {
                return Some(g.from + g.dir * (s - self.seg_start));
            }
            self.seg_start += g.len;
            self.seg += 1;
        }
        None
    }
}

/// `Σ_k max(0, d_min − min pairwise distance at step k)²` over the preview.
pub fn repulsion_penalty(instance: &MissionInstance, routes: &[Vec<usize>], separation: &SeparationConfig, preview: &MotionPreview) -> f64 {
    let depot = instance.depot;
    let mut walkers = Vec::new();
    let mut starts = Vec::new();
    let mut horizon: f64 = 0.0;
    for route in routes.iter().filter(|r| !r.is_empty()) {
        let points = std::iter::once(depot)
            .chain(route.iter().map(|&c| instance.targets[c]))
            .chain(std::iter::once(depot));
        let start = starts.len() as f64 * preview.launch_gap;
        horizon = horizon.max(start + route_length(depot, route, &instance.targets) / preview.speed);
        starts.push(start);
        walkers.push(PolylineWalker::new(points));
    }
    if walkers.len() < 2 {
        return 0.0;
    }
    let exempt_sq = preview.depot_radius * preview.depot_radius;
    let d_min_sq = separation.d_min * separation.d_min;
    let mut penalty = 0.0;
    let mut active: Vec<Point> = Vec::with_capacity(walkers.len());
    let steps = (horizon / preview.dt).ceil() as usize;
    for k in 0..=steps {
        let t = k as f64 * preview.dt;
        active.clear();
        for (w, &t0) in walkers.iter_mut().zip(&starts) {
            if t < t0 {
                continue;
            }
            if let Some(p) = w.at((t - t0) * preview.speed) {
                if (p - depot).norm_sq() > exempt_sq {
                    active.push(p);
                }
            }
        }
        let mut closest_sq = f64::INFINITY;
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                closest_sq = closest_sq.min((active[i] - active[j]).norm_sq());
            }
        }
        if closest_sq < d_min_sq {
            let gap = separation.d_min - closest_sq.sqrt();
            penalty += gap * gap;
        }
    }
    penalty
}

/// Tour cost plus the weighted repulsion penalty.
pub fn fitness(chromosome: &Chromosome, instance: &MissionInstance, separation: &SeparationConfig, preview: &MotionPreview, repulsion_weight: f64) -> f64 {
    let routes = chromosome.routes();
    let cost: f64 = routes.iter().map(|r| route_length(instance.depot, r, &instance.targets)).sum();
    if repulsion_weight == 0.0 || routes.len() < 2 {
        return cost;
    }
    cost + repulsion_weight * repulsion_penalty(instance, &routes, separation, preview)
}

/// One expert demonstration τ_m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertDemonstration {
    pub instance: MissionInstance,
    pub allocation: Allocation,
    pub orders: RouteOrder,
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone)]
pub struct EvolveResult {
    pub best: Chromosome,
    pub best_fitness: f64,
    /// Elite fitness after each generation (index 0 is the initial population).
    pub elite_history: Vec<f64>,
    pub demonstration: ExpertDemonstration,
}

fn order_crossover(p1: &[usize], p2: &[usize], rng: &mut impl Rng) -> Vec<usize> {
    let n = p1.len();
    if n < 2 {
        return p1.to_vec();
    }
    let mut i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n);
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    let mut child = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for k in i..=j {
        child[k] = p1[k];
        used[p1[k]] = true;
    }
    let mut pos = (j + 1) % n;
    for k in 0..n {
        let c = p2[(j + 1 + k) % n];
        if !used[c] {
            child[pos] = c;
            used[c] = true;
            pos = (pos + 1) % n;
        }
    }
    child
}

fn crossover(a: &Chromosome, b: &Chromosome, n: usize, rng: &mut impl Rng) -> Chromosome {
    let giant_tour = order_crossover(&a.giant_tour, &b.giant_tour, rng);
    let mut breakpoints: Vec<usize> = a
        .breakpoints
        .iter()
        .zip(&b.breakpoints)
        .map(|(&x, &y)| if rng.random::<bool>() { x } else { y })
        .collect();
    breakpoints.sort_unstable();
    if !breakpoints_valid(&breakpoints, n, a.fleet_size()) {
        breakpoints = random_breakpoints(n, a.fleet_size(), rng);
    }
    Chromosome { giant_tour, breakpoints }
}

fn mutate(c: &mut Chromosome, n: usize, rate: f64, rng: &mut impl Rng) {
    if n >= 2 && rng.random::<f64>() < rate {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if rng.random::<bool>() {
            c.giant_tour.swap(i, j);
        } else {
            let (lo, hi) = (i.min(j), i.max(j));
            c.giant_tour[lo..=hi].reverse();
        }
    }
    if !c.breakpoints.is_empty() && rng.random::<f64>() < rate {
        let i = rng.random_range(0..c.breakpoints.len());
        let old = c.breakpoints[i];
        let shifted = if rng.random::<bool>() { old.checked_add(1) } else { old.checked_sub(1) };
        if let Some(v) = shifted {
            c.breakpoints[i] = v;
            if !breakpoints_valid(&c.breakpoints, n, c.fleet_size()) {
                c.breakpoints[i] = old;
            }
        }
    }
}

fn tournament<'a>(pop: &'a [Chromosome], fit: &[f64], k: usize, rng: &mut impl Rng) -> &'a Chromosome {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..k {
        let i = rng.random_range(0..pop.len());
        if fit[i] < fit[best] || (fit[i] == fit[best] && i < best) {
            best = i;
        }
    }
    &pop[best]
}

fn elite_index(fit: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in fit.iter().enumerate() {
        if f < fit[best] {
            best = i;
        }
    }
    best
}

/// Runs the GA without flying the result.
pub fn evolve_chromosome(instance: &MissionInstance, config: &GaConfig, separation: &SeparationConfig, preview: &MotionPreview) -> Result<(Chromosome, f64, Vec<f64>)> {
    instance.validate()?;
    config.validate()?;
    separation.validate()?;
    let n = instance.num_targets();
    let fleet = instance.fleet_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let eval = |pop: &[Chromosome]| -> Vec<f64> {
        pop.par_iter()
            .map(|c| fitness(c, instance, separation, preview, config.repulsion_weight))
            .collect()
    };
    let mut pop: Vec<Chromosome> = (0..config.population_size)
        .map(|_| Chromosome::random(n, fleet, &mut rng))
        .collect();
    let mut fit = eval(&pop);
    let mut history = Vec::with_capacity(config.generations + 1);
    history.push(fit[elite_index(&fit)]);
    for _ in 0..config.generations {
        let elite = pop[elite_index(&fit)].clone();
        let mut next = Vec::with_capacity(pop.len());
        next.push(elite);
        while next.len() < pop.len() {
            let a = tournament(&pop, &fit, config.tournament_size, &mut rng);
            let mut child = if rng.random::<f64>() < config.crossover_rate {
                let b = tournament(&pop, &fit, config.tournament_size, &mut rng);
                crossover(a, b, n, &mut rng)
            } else {
                a.clone()
            };
            mutate(&mut child, n, config.mutation_rate, &mut rng);
            next.push(child);
        }
        pop = next;
        fit = eval(&pop);
        history.push(fit[elite_index(&fit)]);
    }
    let best = elite_index(&fit);
    Ok((pop[best].clone(), fit[best], history))
}

/// Evolves a solution and flies it with the potential field to produce the
/// demonstration's motion traces.
pub fn evolve(instance: &MissionInstance, config: &GaConfig, separation: &SeparationConfig, potential: &PotentialConfig) -> Result<EvolveResult> {
    let preview = MotionPreview::from_potential(potential);
    let (best, best_fitness, elite_history) = evolve_chromosome(instance, config, separation, &preview)?;
    let (allocation, orders) = best.decode();
    let traces = fly_routes(instance, &orders.routes, potential, TRACE_STEP_CAP);
    Ok(EvolveResult {
        best,
        best_fitness,
        elite_history,
        demonstration: ExpertDemonstration {
            instance: instance.clone(),
            allocation,
            orders,
            traces,
        },
    })
}

/// Random mission instances on a square area with the depot at its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSampler {
    pub area_side: f64,
    pub num_targets: usize,
    pub fleet_size: usize,
    pub num_static_obstacles: usize,
    pub obstacle_radius: (f64, f64),
    /// Minimum surface clearance kept between obstacles and targets/depot.
    pub clearance: f64,
    /// Keeps targets this far inside the area boundary.
    pub margin: f64,
}

impl Default for InstanceSampler {
    fn default() -> Self {
        Self {
            area_side: 1000.0,
            num_targets: 50,
            fleet_size: 4,
            num_static_obstacles: 0,
            obstacle_radius: (30.0, 60.0),
            clearance: 45.0,
            margin: 20.0,
        }
    }
}

impl InstanceSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> Result<MissionInstance> {
        let area = Area::new(0.0, 0.0, self.area_side, self.area_side);
        let depot = area.center();
        let lo = self.margin;
        let hi = self.area_side - self.margin;
        let mut obstacles: Vec<Disk> = Vec::new();
        let mut attempts = 0;
        while obstacles.len() < self.num_static_obstacles {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::InvalidInstance("cannot place obstacles".into()));
            }
            let r = rng.random_range(self.obstacle_radius.0..=self.obstacle_radius.1);
            let d = Disk::new(Point::new(rng.random_range(lo + r..hi - r), rng.random_range(lo + r..hi - r)), r);
            let clear_of_depot = d.surface_distance(depot) > 2.0 * self.clearance;
            let clear_of_others = obstacles
                .iter()
                .all(|o| distance(o.center, d.center) > o.radius + d.radius + 2.0 * self.clearance);
            if clear_of_depot && clear_of_others {
                obstacles.push(d);
            }
        }
        let mut targets = Vec::with_capacity(self.num_targets);
        attempts = 0;
        while targets.len() < self.num_targets {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::InvalidInstance("cannot place targets".into()));
            }
            let p = Point::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
            if obstacles.iter().all(|o| o.surface_distance(p) > self.clearance) {
                targets.push(p);
            }
        }
        let mut instance = MissionInstance::new(depot, area, targets, self.fleet_size)?;
        instance.obstacles = obstacles;
        Ok(instance)
    }
}

/// RNG for mission `index` of a dataset drawn from `master_seed`.
pub fn mission_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Samples `num_missions` instances and solves each with [`evolve`].
/// Missions are independent and solved in parallel; the result is ordered
/// by mission index and depends only on `master_seed`.
pub fn generate_dataset(
    num_missions: usize,
    sampler: &InstanceSampler,
    config: &GaConfig,
    separation: &SeparationConfig,
    potential: &PotentialConfig,
    master_seed: u64,
) -> Result<Vec<ExpertDemonstration>> {
    if num_missions == 0 {
        return Err(Error::EmptyDataset);
    }
    (0..num_missions as u64)
        .into_par_iter()
        .map(|m| {
            let mut rng = mission_rng(master_seed, m);
            let instance = sampler.sample(&mut rng)?;
            let ga = GaConfig {
                rng_seed: rng.random(),
                ..*config
            };
            Ok(evolve(&instance, &ga, separation, potential)?.demonstration)
        })
        .collect()
}

pub fn write_jsonl<W: Write>(mut out: W, demos: &[ExpertDemonstration]) -> Result<()> {
    for d in demos {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ExpertDemonstration>> {
    let mut demos = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        demos.push(serde_json::from_str(&line)?);
    }
    Ok(demos)
}
