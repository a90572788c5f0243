//! Online hierarchical decision making by abnormality minimization.
//!
//! The posterior over a level's words is taken as a point mass on the
//! candidate's word, so its KL divergence from the model's reference
//! distribution is `−ln p_ref(word | context)`. Every selector returns the
//! exact argmin of that abnormality over its candidate set, breaking ties
//! (within 1e−9) by tour cost and then lexicographically.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ekf::CollisionAlert;
use crate::error::{Error, Result};
use crate::model::{distance, Allocation, Point};
use crate::motion::MotionCategory;
use crate::symbolizer::{mission_word, Letter};
use crate::world_model::{canonical_roles, leg_contexts, LegEnd, Level, LevelScores, WordContext, WorldModel};

pub type TargetId = usize;

/// Tolerance under which two objective values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// `A_ℓ = −ln p_ref(word | context)`.
pub fn abnormality(model: &WorldModel, level: Level, word: &[Letter], context: &WordContext) -> Result<f64> {
    Ok(-model.log_prob(level, word, context)?)
}

/// Index of the argmin under (primary, secondary) with tolerance, then the
/// lowest index. Callers order candidates so that the lowest index is the
/// lexicographically smallest.
fn argmin_two_level(primary: &[f64], secondary: impl Fn(usize) -> f64) -> Option<usize> {
    if primary.is_empty() {
        return None;
    }
    let best = primary.iter().copied().fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = (0..primary.len()).filter(|&i| primary[i] <= best + TIE_TOLERANCE).collect();
    if tied.len() == 1 {
        return Some(tied[0]);
    }
    let costs: Vec<(usize, f64)> = tied.iter().map(|&i| (i, secondary(i))).collect();
    let min_cost = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    costs.into_iter().find(|c| c.1 <= min_cost + TIE_TOLERANCE).map(|c| c.0)
}

// ---------------------------------------------------------------------------
// tour costs

/// start → points… → end.
pub fn path_cost(start: Point, points: &[Point], end: Point) -> f64 {
    let mut total = 0.0;
    let mut prev = start;
    for &p in points {
        total += distance(prev, p);
        prev = p;
    }
    total + distance(prev, end)
}

/// Shortest start → (all points) → end path: exact up to 12 points,
/// nearest neighbour plus 2-opt beyond.
pub fn best_path_cost(start: Point, points: &[Point], end: Point) -> f64 {
    let n = points.len();
    if n == 0 {
        return distance(start, end);
    }
    if n <= 12 {
        let full = 1usize << n;
        let mut dp = vec![f64::INFINITY; full * n];
        for j in 0..n {
            dp[(1 << j) * n + j] = distance(start, points[j]);
        }
        for mask in 1..full {
            for j in 0..n {
                let cur = dp[mask * n + j];
                if mask >> j & 1 == 0 || !cur.is_finite() {
                    continue;
                }
                for k in 0..n {
                    if mask >> k & 1 == 1 {
                        continue;
                    }
                    let next = (mask | 1 << k) * n + k;
                    let c = cur + distance(points[j], points[k]);
                    if c < dp[next] {
                        dp[next] = c;
                    }
                }
            }
        }
        return (0..n)
            .map(|j| dp[(full - 1) * n + j] + distance(points[j], end))
            .fold(f64::INFINITY, f64::min);
    }
    let order = two_opt(start, points, end, nearest_neighbor_order(start, points));
    let seq: Vec<Point> = order.iter().map(|&i| points[i]).collect();
    path_cost(start, &seq, end)
}

pub fn nearest_neighbor_order(start: Point, points: &[Point]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut order = Vec::with_capacity(points.len());
    let mut cur = start;
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, distance(cur, points[i])))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let i = left.remove(k);
        cur = points[i];
        order.push(i);
    }
    order
}

/// First-improvement 2-opt on an open path with fixed end points.
pub fn two_opt(start: Point, points: &[Point], end: Point, mut order: Vec<usize>) -> Vec<usize> {
    let n = order.len();
    let at = |order: &[usize], k: isize| -> Point {
        if k < 0 {
            start
        } else if k as usize >= n {
            end
        } else {
            points[order[k as usize]]
        }
    };
    let mut improved = true;
    let mut rounds = 0;
    while improved && rounds < 1000 {
        improved = false;
        rounds += 1;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (at(&order, i as isize - 1), at(&order, i as isize));
                let (c, d) = (at(&order, j as isize), at(&order, j as isize + 1));
                let delta = distance(a, c) + distance(b, d) - distance(a, b) - distance(c, d);
                if delta < -1e-10 {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
    order
}

// ---------------------------------------------------------------------------
// Division

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionConfig {
    /// Enumerate every assignment when `Q^N` is at most this.
    pub exhaustive_limit: usize,
    pub random_candidates: usize,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for DivisionConfig {
    fn default() -> Self {
        Self {
            exhaustive_limit: 50_000,
            random_candidates: 64,
            kmeans_restarts: 8,
            seed: 0,
        }
    }
}

fn words_of(assignment: &[usize], cells: &[Letter], fleet: usize) -> Vec<Vec<Letter>> {
    let mut words = vec![Vec::new(); fleet];
    for (i, &q) in assignment.iter().enumerate() {
        words[q].push(cells[i]);
    }
    for w in &mut words {
        w.sort_unstable();
    }
    words
}

/// `Σ_q A_Msn(W_q)` of a partition, with canonical roles.
pub fn division_abnormality(model: &WorldModel, cells: &[Letter], assignment: &[usize], fleet: usize) -> f64 {
    -model.phrase_log_prob(&words_of(assignment, cells, fleet))
}

/// Relabels UAVs so that UAV `q` holds the word with canonical role `q`.
pub fn canonical_assignment(model: &WorldModel, cells: &[Letter], assignment: &[usize], fleet: usize) -> Vec<usize> {
    let roles = canonical_roles(&words_of(assignment, cells, fleet), &model.spatial);
    assignment.iter().map(|&q| roles[q]).collect()
}

fn has_empty(assignment: &[usize], fleet: usize) -> bool {
    let mut used = vec![false; fleet];
    for &q in assignment {
        used[q] = true;
    }
    used.iter().any(|u| !u)
}

/// Sum over subsets of their shortest depot tours.
pub fn division_tour_cost(targets: &[Point], depot: Point, assignment: &[usize], fleet: usize) -> f64 {
    (0..fleet)
        .map(|q| {
            let pts: Vec<Point> = assignment.iter().zip(targets).filter(|(a, _)| **a == q).map(|(_, p)| *p).collect();
            if pts.is_empty() {
                0.0
            } else {
                best_path_cost(depot, &pts, depot)
            }
        })
        .sum()
}

fn kmeans_assignment(targets: &[Point], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = targets.len();
    let mut centers = vec![targets[rng.random_range(0..n)]];
    while centers.len() < k {
        let d2: Vec<f64> = targets
            .iter()
            .map(|p| centers.iter().map(|c| (*p - *c).norm_sq()).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d2.iter()
                .position(|&w| {
                    if u < w {
                        true
                    } else {
                        u -= w;
                        false
                    }
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.push(targets[pick]);
    }
    let mut labels = vec![0; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in targets.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| (*p - centers[a]).norm_sq().total_cmp(&(*p - centers[b]).norm_sq()))
                .unwrap_or(0);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<Point> = targets.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| *p).collect();
            if !members.is_empty() {
                let s = members.iter().fold(Point::ZERO, |a, b| a + *b);
                *center = s * (1.0 / members.len() as f64);
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Candidate partitions (as per-target UAV assignments): every assignment
/// when `Q^N` is small, otherwise k-means clusters, contiguous angular
/// sectors around the depot, the per-cell most likely role, and random
/// balanced partitions. Partitions leaving a UAV idle are dropped when
/// `N ≥ Q`.
pub fn division_candidates(model: &WorldModel, targets: &[Point], depot: Point, fleet: usize, config: &DivisionConfig) -> Vec<Vec<usize>> {
    let n = targets.len();
    let allow_empty = n < fleet;
    let total = (fleet as f64).powi(n as i32);
    let mut out = Vec::new();
    if total <= config.exhaustive_limit as f64 {
        let mut a = vec![0usize; n];
        loop {
            if allow_empty || !has_empty(&a, fleet) {
                out.push(a.clone());
            }
            let mut i = n;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                a[i] += 1;
                if a[i] < fleet {
                    break;
                }
                a[i] = 0;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sizes: Vec<usize> = (0..fleet).map(|q| n / fleet + usize::from(q < n % fleet)).collect();
    for _ in 0..config.kmeans_restarts {
        out.push(kmeans_assignment(targets, fleet, &mut rng));
    }
    let mut by_bearing: Vec<usize> = (0..n).collect();
    by_bearing.sort_by(|&a, &b| (targets[a] - depot).angle().total_cmp(&(targets[b] - depot).angle()).then(a.cmp(&b)));
    for offset in 0..n {
        let mut a = vec![0; n];
        let mut k = 0;
        for (q, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                a[by_bearing[(offset + k) % n]] = q;
                k += 1;
            }
        }
        out.push(a);
    }
    let greedy: Vec<usize> = targets
        .iter()
        .map(|p| {
            let c = model.spatial.letter(*p);
            (0..fleet)
                .max_by(|&x, &y| {
                    model
                        .letter_role_log_prob(c, x, fleet)
                        .total_cmp(&model.letter_role_log_prob(c, y, fleet))
                        .then(y.cmp(&x))
                })
                .unwrap_or(0)
        })
        .collect();
    out.push(greedy);
    for _ in 0..config.random_candidates {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let mut a = vec![0; n];
        for (k, &i) in idx.iter().enumerate() {
            a[i] = k % fleet;
        }
        out.push(a);
    }
    out.retain(|a| allow_empty || !has_empty(a, fleet));
    out
}

/// The candidate partition of least total Mission abnormality.
/// Subsets come back ordered by canonical role.
pub fn select_division(targets: &[Point], depot: Point, model: &WorldModel, fleet: usize, config: &DivisionConfig) -> Allocation {
    if targets.is_empty() {
        return Allocation::new(vec![Vec::new(); fleet]);
    }
    let cells: Vec<Letter> = targets.iter().map(|p| model.spatial.letter(*p)).collect();
    let mut cands: Vec<Vec<usize>> = division_candidates(model, targets, depot, fleet, config)
        .into_iter()
        .map(|a| canonical_assignment(model, &cells, &a, fleet))
        .collect();
    cands.sort();
    cands.dedup();
    let abn: Vec<f64> = cands.iter().map(|a| division_abnormality(model, &cells, a, fleet)).collect();
    let best = argmin_two_level(&abn, |i| division_tour_cost(targets, depot, &cands[i], fleet)).expect("at least one candidate");
    Allocation::from_assignment(&cands[best], fleet)
}

// ---------------------------------------------------------------------------
// Ordering

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderConfig {
    /// Enumerate all permutations up to this many targets.
    pub exhaustive_max: usize,
    pub evaluation_budget: usize,
}

impl Default for OrderConfig {
    fn default() -> Self {
        Self {
            exhaustive_max: 8,
            evaluation_budget: 5000,
        }
    }
}

/// `A_Rte` of visiting `cells` in order, given their multiset.
pub fn route_abnormality(model: &WorldModel, cells: &[Letter]) -> f64 {
    let mission = mission_word(cells.iter().copied());
    -model.route_log_prob(cells, &mission)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Visiting order of `ids` (at `points`) flown from `start` and
/// closed at `depot`. Returns the ids in visit order.
pub fn select_order(start: Point, depot: Point, ids: &[TargetId], points: &[Point], model: &WorldModel, config: &OrderConfig) -> Vec<TargetId> {
    let n = ids.len();
    if n <= 1 {
        return ids.to_vec();
    }
    // work in the order of increasing id so index order is lexicographic
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by_key(|&i| ids[i]);
    let cells: Vec<Letter> = sorted.iter().map(|&i| model.spatial.letter(points[i])).collect();
    let pts: Vec<Point> = sorted.iter().map(|&i| points[i]).collect();
    let mission = mission_word(cells.iter().copied());
    let seen_context = model.route.contains_key(&mission);
    let abn_of = |perm: &[usize]| -> f64 {
        if !seen_context {
            return -model.route_log_prob(&cells, &mission);
        }
        let word: Vec<Letter> = perm.iter().map(|&k| cells[k]).collect();
        -model.route_log_prob(&word, &mission)
    };
    let cost_of = |perm: &[usize]| -> f64 {
        let seq: Vec<Point> = perm.iter().map(|&k| pts[k]).collect();
        path_cost(start, &seq, depot)
    };
    let mut cands: Vec<Vec<usize>> = Vec::new();
    if n <= config.exhaustive_max {
        let mut p: Vec<usize> = (0..n).collect();
        loop {
            cands.push(p.clone());
            if !next_permutation(&mut p) {
                break;
            }
        }
    } else {
        let better = |a: (f64, f64), b: (f64, f64)| a.0 < b.0 - TIE_TOLERANCE || (a.0 <= b.0 + TIE_TOLERANCE && a.1 < b.1 - TIE_TOLERANCE);
        let mut cur = nearest_neighbor_order(start, &pts);
        let mut cur_key = (abn_of(&cur), cost_of(&cur));
        cands.push(cur.clone());
        'search: loop {
            let mut best: Option<(Vec<usize>, (f64, f64))> = None;
            for i in 0..n {
                for j in i + 1..n {
                    if cands.len() >= config.evaluation_budget {
                        break 'search;
                    }
                    let mut next = cur.clone();
                    next[i..=j].reverse();
                    let key = (abn_of(&next), cost_of(&next));
                    cands.push(next.clone());
                    if better(key, best.as_ref().map_or(cur_key, |b| b.1)) {
                        best = Some((next, key));
                    }
                }
            }
            match best {
                Some((next, key)) => {
                    cur = next;
                    cur_key = key;
                }
                None => break,
            }
        }
        cands.sort();
        cands.dedup();
    }
    let abn: Vec<f64> = cands.iter().map(|p| abn_of(p)).collect();
    let best = argmin_two_level(&abn, |i| cost_of(&cands[i])).expect("nonempty candidate set");
    cands[best].iter().map(|&k| ids[sorted[k]]).collect()
}

// ---------------------------------------------------------------------------
// New targets

/// At phrase level, adding `cell` to UAV `q`'s word changes the
/// phrase abnormality by `−ln f(role_q | cell)`, so `q⋆` minimizes that.
/// Ties go to the shorter current route, then the lower index.
pub fn assign_new_city(cell: Letter, roles: &[usize], route_lengths: &[f64], model: &WorldModel) -> usize {
    let fleet = roles.len();
    let abn: Vec<f64> = roles.iter().map(|&r| -model.letter_role_log_prob(cell, r, fleet)).collect();
    argmin_two_level(&abn, |q| route_lengths[q]).unwrap_or(0)
}

/// Slot `j⋆` in `0..=route.len()` for a new target, minimizing the
/// augmented route word's abnormality, then the augmented path length from
/// `start` back to `depot`, then the earliest slot.
pub fn insert_new_city(new_point: Point, start: Point, depot: Point, route: &[Point], model: &WorldModel) -> usize {
    let cells: Vec<Letter> = route.iter().map(|p| model.spatial.letter(*p)).collect();
    let c = model.spatial.letter(new_point);
    let abn: Vec<f64> = (0..=route.len())
        .map(|j| {
            let mut w = cells.clone();
            w.insert(j, c);
            route_abnormality(model, &w)
        })
        .collect();
    argmin_two_level(&abn, |j| {
        let mut pts = route.to_vec();
        pts.insert(j, new_point);
        path_cost(start, &pts, depot)
    })
    .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Motion

/// For one leg, the least abnormal motion letter in the leg context.
/// Under a collision alert only Repulsive letters are candidates.
pub fn select_motion(ctx: (LegEnd, LegEnd), alert: bool, model: &WorldModel) -> Result<Letter> {
    let letters = &model.motion_alphabet.letters;
    let cands: Vec<Letter> = letters
        .iter()
        .filter(|l| !alert || l.category == MotionCategory::Repulsive)
        .map(|l| l.id)
        .collect();
    if cands.is_empty() {
        return Err(Error::EmptyMotionDictionary);
    }
    let abn: Vec<f64> = cands.iter().map(|&l| -model.motion_letter_log_prob(l, ctx)).collect();
    argmin_two_level(&abn, |_| 0.0)
        .map(|i| cands[i])
        .ok_or(Error::EmptyMotionDictionary)
}

// ---------------------------------------------------------------------------
// beliefs and the planner

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavBelief {
    pub role: usize,
    /// Remaining targets in visit order; the head is the active goal.
    pub route: Vec<TargetId>,
    /// One letter per remaining leg (towards each route target, then home).
    pub motion: Vec<Letter>,
    /// End of the previous leg: the last visited cell, or the depot.
    pub last: LegEnd,
    pub airborne: bool,
    pub alert: bool,
}

/// Current symbolic configuration `s_t` and its abnormalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub uavs: Vec<UavBelief>,
    /// Visible targets no UAV is tasked with.
    pub unassigned: Vec<TargetId>,
    pub scores: LevelScores,
    pub a_total: f64,
}

impl BeliefState {
    pub fn new(fleet: usize) -> Self {
        Self {
            uavs: (0..fleet)
                .map(|q| UavBelief {
                    role: q,
                    route: Vec::new(),
                    motion: Vec::new(),
                    last: None,
                    airborne: false,
                    alert: false,
                })
                .collect(),
            unassigned: Vec::new(),
            scores: LevelScores::default(),
            a_total: 0.0,
        }
    }

    pub fn assigned(&self) -> impl Iterator<Item = TargetId> + '_ {
        self.uavs.iter().flat_map(|u| u.route.iter().copied())
    }
}

fn remaining_leg_contexts(u: &UavBelief, cell: &impl Fn(TargetId) -> Letter) -> Vec<(LegEnd, LegEnd)> {
    if u.route.is_empty() {
        return if u.airborne { vec![(u.last, None)] } else { Vec::new() };
    }
    let cells: Vec<Letter> = u.route.iter().map(|&id| cell(id)).collect();
    let mut ctx = leg_contexts(&cells);
    ctx[0].0 = u.last;
    ctx
}

/// Recomputes `A_Msn`, `A_Rte`, `A_Mot` over the remaining words and sets
/// `A_total` to their sum.
pub fn score_belief(belief: &mut BeliefState, positions: &BTreeMap<TargetId, Point>, model: &WorldModel) {
    let fleet = belief.uavs.len();
    let cell = |id: TargetId| model.spatial.letter(positions[&id]);
    let mut s = LevelScores::default();
    for u in &belief.uavs {
        let cells: Vec<Letter> = u.route.iter().map(|&id| cell(id)).collect();
        s.mission -= model.mission_word_log_prob(&cells, u.role, fleet);
        if !cells.is_empty() {
            s.route += route_abnormality(model, &cells);
        }
        let ctx = remaining_leg_contexts(u, &cell);
        let legs: Vec<(Letter, (LegEnd, LegEnd))> = u.motion.iter().copied().zip(ctx).collect();
        s.motion -= model.motion_legs_log_prob(&legs);
    }
    for &id in &belief.unassigned {
        s.mission -= model.unassigned_log_prob(cell(id), fleet);
    }
    belief.scores = s;
    belief.a_total = s.mission + s.route + s.motion;
}

/// What the planner sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub t: f64,
    /// Visible, not yet visited targets.
    pub targets: &'a [(TargetId, Point)],
    pub positions: &'a [Point],
    pub airborne: &'a [bool],
    pub alerts: &'a [Option<CollisionAlert>],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Goal {
    Target(TargetId),
    Depot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub goals: Vec<Goal>,
    pub rep_scales: Vec<f64>,
}

/// One row of the abnormality trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbnormalityRecord {
    pub t: f64,
    pub a_msn: f64,
    pub a_rte: f64,
    pub a_mot: f64,
    pub a_total: f64,
    pub replanned: Option<Level>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub division: DivisionConfig,
    pub order: OrderConfig,
    /// Repulsive gain multiplier applied while a Repulsive letter (or the
    /// alert fallback) is active.
    pub repulsive_gain_factor: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            division: DivisionConfig::default(),
            order: OrderConfig::default(),
            repulsive_gain_factor: 3.0,
        }
    }
}

/// Active-inference planner: divides, orders and picks motion letters by
/// abnormality minimization, and replans on surprise.
#[derive(Debug, Clone)]
pub struct ActiveInferencePlanner<'m> {
    pub model: &'m WorldModel,
    pub config: PlannerConfig,
    pub depot: Point,
    pub belief: BeliefState,
    positions: BTreeMap<TargetId, Point>,
    initialized: bool,
    /// A level may fire a threshold replan only after its abnormality has
    /// been at or below the threshold since the last such replan.
    armed: [bool; 3],
    pub replans: usize,
}

impl<'m> ActiveInferencePlanner<'m> {
    pub fn new(model: &'m WorldModel, depot: Point, fleet: usize, config: PlannerConfig) -> Self {
        Self {
            model,
            config,
            depot,
            belief: BeliefState::new(fleet),
            positions: BTreeMap::new(),
            initialized: false,
            armed: [false; 3],
            replans: 0,
        }
    }

    fn fleet(&self) -> usize {
        self.belief.uavs.len()
    }

    fn cell(&self, id: TargetId) -> Letter {
        self.model.spatial.letter(self.positions[&id])
    }

    fn route_points(&self, q: usize) -> Vec<Point> {
        self.belief.uavs[q].route.iter().map(|id| self.positions[id]).collect()
    }

    fn order_uav(&mut self, q: usize, start: Point) {
        let ids = self.belief.uavs[q].route.clone();
        let pts: Vec<Point> = ids.iter().map(|id| self.positions[id]).collect();
        self.belief.uavs[q].route = select_order(start, self.depot, &ids, &pts, self.model, &self.config.order);
    }

    /// Divides the given targets, then orders each UAV's subset. UAV `q` keeps role
    /// `q` and receives the subset of that role.
    fn divide(&mut self, ids: &[TargetId], starts: &[Point]) {
        let fleet = self.fleet();
        let pts: Vec<Point> = ids.iter().map(|id| self.positions[id]).collect();
        let mut config = self.config.division;
        config.seed ^= self.replans as u64;
        let alloc = select_division(&pts, self.depot, self.model, fleet, &config);
        for (q, subset) in alloc.subsets.iter().enumerate() {
            let u = self.belief.uavs.iter_mut().find(|u| u.role == q).expect("roles are a permutation");
            u.route = subset.iter().map(|&k| ids[k]).collect();
        }
        for q in 0..fleet {
            self.order_uav(q, starts[q]);
        }
    }

    /// Re-derives planned motion letters for every remaining leg; the
    /// active leg honours a collision alert.
    fn plan_motion(&mut self) -> bool {
        let model = self.model;
        let positions = &self.positions;
        let cell = |id: TargetId| model.spatial.letter(positions[&id]);
        let mut switched = false;
        for u in &mut self.belief.uavs {
            let ctx = remaining_leg_contexts(u, &cell);
            let mut letters = Vec::with_capacity(ctx.len());
            for (i, &c) in ctx.iter().enumerate() {
                let alert = i == 0 && u.alert;
                let l = match select_motion(c, alert, model) {
                    Ok(l) => l,
                    Err(_) => select_motion(c, false, model).unwrap_or(0),
                };
                letters.push(l);
            }
            if u.alert && letters.first() != u.motion.first() {
                switched = true;
            }
            u.motion = letters;
        }
        switched
    }

    fn rep_scale(&self, q: usize) -> f64 {
        let u = &self.belief.uavs[q];
        let repulsive = u
            .motion
            .first()
            .is_some_and(|&l| self.model.motion_alphabet.category(l) == MotionCategory::Repulsive);
        // without Repulsive letters the alert still switches the gains
        let fallback = u.alert && self.model.motion_alphabet.repulsive_letters().is_empty();
        if repulsive || fallback {
            self.config.repulsive_gain_factor
        } else {
            1.0
        }
    }

    /// One sense–decide cycle. Returns per-UAV goals and gain scales plus
    /// the step's abnormality record (pre-replan values on a surprise).
    pub fn decide(&mut self, obs: &Observation<'_>) -> (Decision, AbnormalityRecord) {
        let fleet = self.fleet();
        for (q, u) in self.belief.uavs.iter_mut().enumerate() {
            u.airborne = obs.airborne[q];
            u.alert = obs.alerts[q].is_some();
        }
        let visible: BTreeMap<TargetId, Point> = obs.targets.iter().copied().collect();

        // visited targets leave the routes; a visited head completes a leg
        for q in 0..fleet {
            let route = std::mem::take(&mut self.belief.uavs[q].route);
            let mut kept = Vec::with_capacity(route.len());
            for (k, id) in route.into_iter().enumerate() {
                if visible.contains_key(&id) {
                    kept.push(id);
                } else if k == 0 && kept.is_empty() {
                    self.belief.uavs[q].last = Some(self.cell(id));
                }
            }
            self.belief.uavs[q].route = kept;
        }
        self.belief.unassigned.retain(|id| visible.contains_key(id));
        let known: std::collections::BTreeSet<TargetId> = self.belief.assigned().chain(self.belief.unassigned.iter().copied()).collect();
        let new: Vec<TargetId> = visible.keys().copied().filter(|id| !known.contains(id)).collect();
        for &id in &new {
            self.positions.insert(id, visible[&id]);
        }

        let mut replanned = None;
        let record_pre;
        if !self.initialized {
            self.initialized = true;
            self.divide(&new, &vec![self.depot; fleet]);
            self.plan_motion();
            score_belief(&mut self.belief, &self.positions, self.model);
            replanned = Some(Level::Mission);
            self.replans += 1;
            record_pre = None;
        } else {
            self.belief.unassigned.extend(&new);
            self.plan_motion();
            score_belief(&mut self.belief, &self.positions, self.model);
            let pre = self.belief.scores;
            let thr = self.model.thresholds;
            if !self.belief.unassigned.is_empty() {
                // assign and insert each newly visible target
                for id in std::mem::take(&mut self.belief.unassigned) {
                    let lengths: Vec<f64> = (0..fleet)
                        .map(|q| path_cost(obs.positions[q], &self.route_points(q), self.depot))
                        .collect();
                    let roles: Vec<usize> = self.belief.uavs.iter().map(|u| u.role).collect();
                    let q = assign_new_city(self.cell(id), &roles, &lengths, self.model);
                    let j = insert_new_city(self.positions[&id], obs.positions[q], self.depot, &self.route_points(q), self.model);
                    self.belief.uavs[q].route.insert(j, id);
                }
                replanned = Some(Level::Mission);
            } else if pre.mission > thr.mission && self.armed[0] {
                let ids: Vec<TargetId> = self.belief.assigned().collect();
                self.divide(&ids, obs.positions);
                self.armed[0] = false;
                replanned = Some(Level::Mission);
            } else if pre.route > thr.route && self.armed[1] {
                for q in 0..fleet {
                    self.order_uav(q, obs.positions[q]);
                }
                self.armed[1] = false;
                replanned = Some(Level::Route);
            } else if pre.motion > thr.motion && self.armed[2] {
                self.armed[2] = false;
                replanned = Some(Level::Motion);
            }
            if replanned.is_some() {
                self.replans += 1;
                self.plan_motion();
                score_belief(&mut self.belief, &self.positions, self.model);
            }
            record_pre = Some(pre);
        }
        let s = self.belief.scores;
        let thr = self.model.thresholds;
        for (armed, (a, t)) in self.armed.iter_mut().zip([(s.mission, thr.mission), (s.route, thr.route), (s.motion, thr.motion)]) {
            if a <= t {
                *armed = true;
            }
        }
        let shown = if replanned.is_some() { record_pre.unwrap_or(s) } else { s };
        let record = AbnormalityRecord {
            t: obs.t,
            a_msn: shown.mission,
            a_rte: shown.route,
            a_mot: shown.motion,
            a_total: shown.total(),
            replanned,
        };
        let goals = self
            .belief
            .uavs
            .iter()
            .map(|u| u.route.first().map_or(Goal::Depot, |&id| Goal::Target(id)))
            .collect();
        let rep_scales = (0..fleet).map(|q| self.rep_scale(q)).collect();
        (Decision { goals, rep_scales }, record)
    }
}
