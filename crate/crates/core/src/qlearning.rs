//! Tabular Q-learning baseline, seeded from the same demonstrations.
//!
//! A UAV sees its grid cell and, per quadrant around it, how many distinct
//! cells still hold unclaimed targets. It picks the nearest remaining target
//! in one quadrant, or flies home once nothing is left to claim. Training
//! first replays each demonstrated route as transitions and then refines
//! with ε-greedy single-UAV episodes on resampled target sets.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::ExpertDemonstration;
use crate::inference::TargetId;
use crate::model::{distance, Point};
use crate::symbolizer::{Letter, SpatialAlphabet};

pub const QTABLE_VERSION: u32 = 1;
pub const NUM_ACTIONS: usize = 5;
pub const DEPOT_ACTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QlConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    /// Multiplied into ε after every episode.
    pub epsilon_decay: f64,
    pub episodes: usize,
    /// Reward for the final return to the depot, on top of its distance.
    pub completion_bonus: f64,
    pub seed: u64,
}

impl Default for QlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.9,
            epsilon: 0.2,
            epsilon_decay: 0.995,
            episodes: 500,
            completion_bonus: 100.0,
            seed: 0,
        }
    }
}

impl QlConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate <= 1.0
            && (0.0..1.0).contains(&self.discount)
            && (0.0..=1.0).contains(&self.epsilon)
            && (0.0..=1.0).contains(&self.epsilon_decay)
            && self.completion_bonus.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInstance(format!("invalid Q-learning config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub cell: Letter,
    /// Distinct remaining-target cells per quadrant (+x+y, −x+y, −x−y, +x−y).
    pub quadrants: [u16; 4],
}

fn quadrant(from: Point, p: Point) -> usize {
    let d = p - from;
    match (d.x >= 0.0, d.y >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub version: u32,
    pub spatial: SpatialAlphabet,
    #[serde(with = "crate::world_model::entries")]
    pub values: BTreeMap<StateKey, [f64; NUM_ACTIONS]>,
}

impl QTable {
    pub fn new(spatial: SpatialAlphabet) -> Self {
        Self {
            version: QTABLE_VERSION,
            spatial,
            values: BTreeMap::new(),
        }
    }

    pub fn state(&self, at: Point, remaining: &[Point]) -> StateKey {
        let mut cells: [BTreeSet<Letter>; 4] = Default::default();
        for &p in remaining {
            cells[quadrant(at, p)].insert(self.spatial.letter(p));
        }
        StateKey {
            cell: self.spatial.letter(at),
            quadrants: cells.map(|c| c.len() as u16),
        }
    }

    /// Unseen states are all zeros.
    pub fn q(&self, s: &StateKey) -> [f64; NUM_ACTIONS] {
        self.values.get(s).copied().unwrap_or([0.0; NUM_ACTIONS])
    }

    fn max_q(&self, s: &StateKey, mask: &[bool; NUM_ACTIONS]) -> f64 {
        let q = self.q(s);
        (0..NUM_ACTIONS).filter(|&a| mask[a]).map(|a| q[a]).fold(f64::NEG_INFINITY, f64::max)
    }

    fn update(&mut self, s: StateKey, a: usize, target: f64, lr: f64) {
        let row = self.values.entry(s).or_insert([0.0; NUM_ACTIONS]);
        row[a] += lr * (target - row[a]);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: QTable = serde_json::from_str(s)?;
        if t.version != QTABLE_VERSION {
            return Err(Error::SchemaVersion {
                found: t.version,
                expected: QTABLE_VERSION,
            });
        }
        if t.values.values().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite action value".into()));
        }
        Ok(t)
    }
}

/// Which actions are available: a quadrant with something left in it, or
/// the depot once nothing is left.
pub fn action_mask(at: Point, remaining: &[Point]) -> [bool; NUM_ACTIONS] {
    let mut mask = [false; NUM_ACTIONS];
    for &p in remaining {
        mask[quadrant(at, p)] = true;
    }
    mask[DEPOT_ACTION] = remaining.is_empty();
    mask
}

/// Index into `remaining` of the nearest target in quadrant `action`
/// (lowest index on ties), or `None` for the depot action.
pub fn resolve_action(at: Point, remaining: &[Point], action: usize) -> Option<usize> {
    if action == DEPOT_ACTION {
        return None;
    }
    remaining
        .iter()
        .enumerate()
        .filter(|(_, p)| quadrant(at, **p) == action)
        .min_by(|a, b| distance(at, *a.1).total_cmp(&distance(at, *b.1)).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Greedy valid action; ties go to the nearer resolved destination, then
/// the lower action index.
pub fn greedy_action(table: &QTable, at: Point, depot: Point, remaining: &[Point]) -> usize {
    let s = table.state(at, remaining);
    let q = table.q(&s);
    let mask = action_mask(at, remaining);
    let best = (0..NUM_ACTIONS).filter(|&a| mask[a]).map(|a| q[a]).fold(f64::NEG_INFINITY, f64::max);
    let dest = |a: usize| resolve_action(at, remaining, a).map_or(depot, |i| remaining[i]);
    (0..NUM_ACTIONS)
        .filter(|&a| mask[a] && q[a] >= best - 1e-9)
        .min_by(|&a, &b| distance(at, dest(a)).total_cmp(&distance(at, dest(b))).then(a.cmp(&b)))
        .unwrap_or(DEPOT_ACTION)
}

struct Transition {
    s: StateKey,
    a: usize,
    reward: f64,
    next: Option<(StateKey, [bool; NUM_ACTIONS])>,
}

fn transition(table: &QTable, at: Point, remaining: &[Point], action: usize, chosen: Option<usize>, depot: Point, bonus: f64) -> (Transition, Point, Vec<Point>) {
    let s = table.state(at, remaining);
    match chosen {
        None => (
            Transition {
                s,
                a: action,
                reward: bonus - distance(at, depot),
                next: None,
            },
            depot,
            Vec::new(),
        ),
        Some(i) => {
            let to = remaining[i];
            let mut rest = remaining.to_vec();
            rest.remove(i);
            let t = Transition {
                s,
                a: action,
                reward: -distance(at, to),
                next: Some((table.state(to, &rest), action_mask(to, &rest))),
            };
            (t, to, rest)
        }
    }
}

fn apply(table: &mut QTable, t: &Transition, config: &QlConfig) {
    let future = t.next.as_ref().map_or(0.0, |(s, m)| table.max_q(s, m));
    table.update(t.s, t.a, t.reward + config.discount * future, config.learning_rate);
}

/// Offline pass over demonstrated routes, then ε-greedy refinement.
pub fn train(demos: &[ExpertDemonstration], spatial: SpatialAlphabet, config: &QlConfig) -> Result<QTable> {
    config.validate()?;
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut table = QTable::new(spatial);
    for demo in demos {
        let depot = demo.instance.depot;
        for route in &demo.orders.routes {
            let mut remaining: Vec<Point> = route.iter().map(|&i| demo.instance.targets[i]).collect();
            let mut at = depot;
            // demonstrated next target is always the head of what is left
            while !remaining.is_empty() {
                let action = quadrant(at, remaining[0]);
                let (t, to, rest) = transition(&table, at, &remaining, action, Some(0), depot, config.completion_bonus);
                apply(&mut table, &t, config);
                at = to;
                remaining = rest;
            }
            let (t, ..) = transition(&table, at, &remaining, DEPOT_ACTION, None, depot, config.completion_bonus);
            apply(&mut table, &t, config);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut epsilon = config.epsilon;
    for _ in 0..config.episodes {
        let demo = &demos[rng.random_range(0..demos.len())];
        let depot = demo.instance.depot;
        let routes: Vec<&Vec<usize>> = demo.orders.routes.iter().filter(|r| !r.is_empty()).collect();
        if routes.is_empty() {
            continue;
        }
        let route = routes[rng.random_range(0..routes.len())];
        let mut remaining: Vec<Point> = route.iter().map(|&i| demo.instance.targets[i]).collect();
        let mut at = depot;
        loop {
            let mask = action_mask(at, &remaining);
            let action = if rng.random::<f64>() < epsilon {
                let valid: Vec<usize> = (0..NUM_ACTIONS).filter(|&a| mask[a]).collect();
                valid[rng.random_range(0..valid.len())]
            } else {
                greedy_action(&table, at, depot, &remaining)
            };
            let chosen = resolve_action(at, &remaining, action);
            let (t, to, rest) = transition(&table, at, &remaining, action, chosen, depot, config.completion_bonus);
            apply(&mut table, &t, config);
            if chosen.is_none() {
                break;
            }
            at = to;
            remaining = rest;
        }
        epsilon *= config.epsilon_decay;
    }
    Ok(table)
}

/// Shared-pool greedy acting. UAVs listed in `choosing` pick in index order;
/// each pick leaves the pool, so no target is claimed twice. Returns the
/// claimed target per chooser, `None` meaning the depot.
pub fn act(table: &QTable, depot: Point, positions: &[Point], choosing: &[usize], pool: &mut Vec<(TargetId, Point)>) -> Vec<(usize, Option<TargetId>)> {
    let mut out = Vec::with_capacity(choosing.len());
    let mut order = choosing.to_vec();
    order.sort_unstable();
    for q in order {
        let pts: Vec<Point> = pool.iter().map(|t| t.1).collect();
        let a = greedy_action(table, positions[q], depot, &pts);
        let claim = resolve_action(positions[q], &pts, a).map(|i| pool.remove(i).0);
        out.push((q, claim));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Area, MissionInstance, RouteOrder};

    fn spatial() -> SpatialAlphabet {
        SpatialAlphabet::new(10, 10, Area::square(1000.0)).unwrap()
    }

    fn demo(targets: Vec<Point>, routes: Vec<Vec<usize>>) -> ExpertDemonstration {
        let fleet = routes.len();
        let instance = MissionInstance::new(Point::new(500.0, 500.0), Area::square(1000.0), targets, fleet).unwrap();
        let orders = RouteOrder::new(routes);
        ExpertDemonstration {
            instance,
            allocation: orders.allocation(),
            orders,
            traces: Vec::new(),
        }
    }

    fn rollout(table: &QTable, depot: Point, targets: &[Point]) -> (Vec<usize>, f64) {
        let mut pool: Vec<(TargetId, Point)> = targets.iter().copied().enumerate().collect();
        let mut at = depot;
        let mut visited = Vec::new();
        let mut length = 0.0;
        loop {
            let picks = act(table, depot, &[at], &[0], &mut pool);
            match picks[0].1 {
                Some(id) => {
                    length += distance(at, targets[id]);
                    at = targets[id];
                    visited.push(id);
                }
                None => {
                    length += distance(at, depot);
                    return (visited, length);
                }
            }
        }
    }

    #[test]
    fn one_target_demo_policy() {
        let d = demo(vec![Point::new(800.0, 700.0)], vec![vec![0]]);
        let table = train(&[d.clone()], spatial(), &QlConfig::default()).unwrap();
        let (visited, _) = rollout(&table, d.instance.depot, &d.instance.targets);
        assert_eq!(visited, vec![0]);
    }

    #[test]
    fn training_is_deterministic() {
        let d = demo(
            vec![Point::new(100.0, 100.0), Point::new(900.0, 200.0), Point::new(300.0, 800.0)],
            vec![vec![0, 2], vec![1]],
        );
        let cfg = QlConfig { episodes: 200, ..QlConfig::default() };
        let a = train(&[d.clone()], spatial(), &cfg).unwrap();
        let b = train(&[d], spatial(), &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(QTable::from_json(&a.to_json().unwrap()).unwrap(), a);
    }

    #[test]
    fn myopic_values_are_immediate_rewards() {
        let d = demo(vec![Point::new(800.0, 700.0)], vec![vec![0]]);
        let cfg = QlConfig {
            discount: 0.0,
            learning_rate: 1.0,
            episodes: 0,
            ..QlConfig::default()
        };
        let table = train(&[d.clone()], spatial(), &cfg).unwrap();
        let depot = d.instance.depot;
        let target = d.instance.targets[0];
        let s0 = table.state(depot, &[target]);
        assert_eq!(table.q(&s0)[0], -distance(depot, target));
        let s1 = table.state(target, &[]);
        assert_eq!(table.q(&s1)[DEPOT_ACTION], cfg.completion_bonus - distance(target, depot));
        // α < 1 averages towards the reward
        let half = QlConfig { learning_rate: 0.5, ..cfg };
        let t = train(&[d.clone(), d], spatial(), &half).unwrap();
        assert_eq!(t.q(&s0)[0], -0.75 * distance(depot, target));
    }

    #[test]
    fn nothing_left_sends_everyone_home() {
        let table = QTable::new(spatial());
        let mut pool = Vec::new();
        let picks = act(&table, Point::ZERO, &[Point::new(1.0, 1.0); 3], &[0, 1, 2], &mut pool);
        assert!(picks.iter().all(|p| p.1.is_none()));
    }

    #[test]
    fn single_target_claimed_once() {
        let table = QTable::new(spatial());
        let mut pool = vec![(7, Point::new(600.0, 600.0))];
        let picks = act(&table, Point::new(500.0, 500.0), &[Point::new(500.0, 500.0); 2], &[1, 0], &mut pool);
        assert_eq!(picks, vec![(0, Some(7)), (1, None)]);
        assert!(pool.is_empty());
    }

    #[test]
    fn empty_dataset_and_bad_config() {
        assert!(matches!(train(&[], spatial(), &QlConfig::default()), Err(Error::EmptyDataset)));
        let d = demo(vec![Point::new(1.0, 1.0)], vec![vec![0]]);
        let cfg = QlConfig { discount: 1.0, ..QlConfig::default() };
        assert!(train(&[d], spatial(), &cfg).is_err());
    }

    fn brute_force_tour(depot: Point, pts: &[Point]) -> f64 {
        fn rec(at: Point, depot: Point, left: &mut Vec<Point>, acc: f64, best: &mut f64) {
            if left.is_empty() {
                *best = best.min(acc + distance(at, depot));
                return;
            }
            for i in 0..left.len() {
                let p = left.remove(i);
                rec(p, depot, left, acc + distance(at, p), best);
                left.insert(i, p);
            }
        }
        let mut best = f64::INFINITY;
        rec(depot, depot, &mut pts.to_vec(), 0.0, &mut best);
        best
    }

    #[test]
    fn small_instances_complete_above_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let demos: Vec<ExpertDemonstration> = (0..5)
            .map(|_| {
                let pts: Vec<Point> = (0..6).map(|_| Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0))).collect();
                demo(pts, vec![vec![0, 1, 2], vec![3, 4, 5]])
            })
            .collect();
        let table = train(&demos, spatial(), &QlConfig { episodes: 100, ..QlConfig::default() }).unwrap();
        for _ in 0..20 {
            let n = rng.random_range(1..=6);
            let pts: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0))).collect();
            let depot = Point::new(500.0, 500.0);
            let (visited, length) = rollout(&table, depot, &pts);
            let mut sorted = visited.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            assert!(length >= brute_force_tour(depot, &pts) - 1e-9);
        }
    }
}
