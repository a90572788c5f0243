//! Symbolic encoding of demonstrations: grid-cell letters for targets,
//! kinematic features per route leg, and k-means motion letters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::ExpertDemonstration;
use crate::model::{distance, normalize_angle, Area, Disk, Point, Sample, Trace};
use crate::motion::{potential, FieldSources, MotionCategory, PotentialConfig};

pub type Letter = usize;

/// Row-major grid of cell letters over the mission area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialAlphabet {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub area: Area,
}

impl SpatialAlphabet {
    pub fn new(grid_rows: usize, grid_cols: usize, area: Area) -> Result<Self> {
        if grid_rows == 0 || grid_cols == 0 || !(area.width() > 0.0 && area.height() > 0.0) {
            return Err(Error::InvalidInstance("spatial alphabet needs a positive grid and area".into()));
        }
        Ok(Self { grid_rows, grid_cols, area })
    }

    pub fn size(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Cell containing `p`; points outside the area map to the nearest cell.
    pub fn letter(&self, p: Point) -> Letter {
        let fx = (p.x - self.area.min.x) / self.area.width() * self.grid_cols as f64;
        let fy = (p.y - self.area.min.y) / self.area.height() * self.grid_rows as f64;
        let col = (fx.floor().max(0.0) as usize).min(self.grid_cols - 1);
        let row = (fy.floor().max(0.0) as usize).min(self.grid_rows - 1);
        row * self.grid_cols + col
    }

    pub fn cell_center(&self, letter: Letter) -> Point {
        let row = letter / self.grid_cols;
        let col = letter % self.grid_cols;
        Point::new(
            self.area.min.x + (col as f64 + 0.5) * self.area.width() / self.grid_cols as f64,
            self.area.min.y + (row as f64 + 0.5) * self.area.height() / self.grid_rows as f64,
        )
    }
}

/// Kinematic summary of one route leg.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionFeature {
    pub mean_speed: f64,
    pub mean_curvature: f64,
    pub mean_heading_rate: f64,
    pub repulsion_energy_fraction: f64,
}

impl MotionFeature {
    pub const DIM: usize = 4;

    pub fn to_array(self) -> [f64; 4] {
        [self.mean_speed, self.mean_curvature, self.mean_heading_rate, self.repulsion_energy_fraction]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            mean_speed: a[0],
            mean_curvature: a[1],
            mean_heading_rate: a[2],
            repulsion_energy_fraction: a[3],
        }
    }
}

/// Sample range `[start, end]` (inclusive) of a leg flown towards `goal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub start: usize,
    pub end: usize,
    pub goal: Point,
}

/// Splits a trace into `route.len() + 1` legs: depot to first target, each
/// target to the next, and the last target back to the depot. A leg ends
/// at the first sample within `arrival_radius` of its goal (or the closest
/// approach if the goal was never reached).
pub fn leg_boundaries(trace: &Trace, depot: Point, goals: &[Point], arrival_radius: f64) -> Vec<Leg> {
    let s = &trace.samples;
    if s.is_empty() || goals.is_empty() {
        return Vec::new();
    }
    let launch = s.windows(2).position(|w| w[1].pos != w[0].pos).unwrap_or(0);
    let mut legs = Vec::with_capacity(goals.len() + 1);
    let mut start = launch;
    for (k, &goal) in goals.iter().chain(std::iter::once(&depot)).enumerate() {
        let is_return = k == goals.len();
        let from = if is_return { start + 1 } else { start };
        let hit = (from..s.len()).find(|&i| distance(s[i].pos, goal) <= arrival_radius);
        let end = hit.unwrap_or_else(|| {
            (start..s.len())
                .min_by(|&a, &b| distance(s[a].pos, goal).total_cmp(&distance(s[b].pos, goal)))
                .unwrap_or(start)
        });
        let end = end.max(start).min(s.len() - 1);
        legs.push(Leg { start, end, goal });
        start = end;
    }
    legs
}

fn circumradius_curvature(a: Point, b: Point, c: Point) -> f64 {
    let ab = distance(a, b);
    let bc = distance(b, c);
    let ca = distance(c, a);
    let denom = ab * bc * ca;
    if denom <= 1e-12 {
        return 0.0;
    }
    2.0 * (b - a).cross(c - a).abs() / denom
}

/// Features of one leg. `potentials(i, goal)` returns `(U_att, U_rep)` at
/// sample `i` of the trace.
pub fn featurize_leg(samples: &[Sample], leg: &Leg, potentials: &dyn Fn(usize, Point) -> (f64, f64)) -> Result<MotionFeature> {
    let n = leg.end + 1 - leg.start;
    if n < 2 {
        return Err(Error::DegenerateLeg {
            leg: leg.start,
            samples: n,
        });
    }
    let seg = &samples[leg.start..=leg.end];
    let mut speed_sum = 0.0;
    for w in seg.windows(2) {
        let dt = w[1].t - w[0].t;
        speed_sum += if dt > 0.0 { distance(w[0].pos, w[1].pos) / dt } else { 0.0 };
    }
    let mean_speed = speed_sum / (n - 1) as f64;

    let mean_curvature = if n >= 3 {
        seg.windows(3)
            .map(|w| circumradius_curvature(w[0].pos, w[1].pos, w[2].pos))
            .sum::<f64>()
            / (n - 2) as f64
    } else {
        0.0
    };

    // heading from consecutive displacements, skipping stationary steps
    let mut rates = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for w in seg.windows(2) {
        let d = w[1].pos - w[0].pos;
        if d.norm() <= 1e-9 {
            continue;
        }
        let heading = d.angle();
        if let Some((h0, t0)) = prev {
            let dt = w[0].t - t0;
            if dt > 0.0 {
                rates.push(normalize_angle(heading - h0).abs() / dt);
            }
        }
        prev = Some((heading, w[0].t));
    }
    let mean_heading_rate = if rates.is_empty() { 0.0 } else { rates.iter().sum::<f64>() / rates.len() as f64 };

    let (mut att, mut rep) = (0.0, 0.0);
    for i in leg.start..=leg.end {
        let (a, r) = potentials(i, leg.goal);
        att += a;
        rep += r;
    }
    let total = att + rep;
    let repulsion_energy_fraction = if total > 0.0 { (rep / total).clamp(0.0, 1.0) } else { 0.0 };

    Ok(MotionFeature {
        mean_speed,
        mean_curvature,
        mean_heading_rate,
        repulsion_energy_fraction,
    })
}

/// One feature per leg; fails with `DegenerateLeg` on a leg under two samples.
pub fn segment_and_featurize(trace: &Trace, legs: &[Leg], potentials: &dyn Fn(usize, Point) -> (f64, f64)) -> Result<Vec<MotionFeature>> {
    legs.iter().map(|leg| featurize_leg(&trace.samples, leg, potentials)).collect()
}

/// Per-UAV leg features of a demonstration, using the instance's static
/// obstacles and the other UAVs' airborne positions at the same sample.
/// Degenerate legs yield `None`.
pub fn demonstration_features(demo: &ExpertDemonstration, config: &PotentialConfig) -> Vec<Vec<Option<MotionFeature>>> {
    let depot = demo.instance.depot;
    let obstacles: &[Disk] = &demo.instance.obstacles;
    demo.orders
        .routes
        .iter()
        .enumerate()
        .map(|(q, route)| {
            let Some(trace) = demo.traces.get(q) else {
                return vec![None; if route.is_empty() { 0 } else { route.len() + 1 }];
            };
            let goals: Vec<Point> = route.iter().map(|&c| demo.instance.targets[c]).collect();
            let legs = leg_boundaries(trace, depot, &goals, config.arrival_radius);
            let potentials = |i: usize, goal: Point| {
                let x = trace.samples[i].pos;
                let neighbors: Vec<Point> = demo
                    .traces
                    .iter()
                    .filter(|o| o.uav != trace.uav)
                    .filter_map(|o| o.samples.get(i).map(|s| s.pos))
                    .filter(|p| distance(*p, depot) > config.arrival_radius)
                    .collect();
                potential(x, goal, FieldSources::new(obstacles, &neighbors), config, 1.0)
            };
            legs.iter()
                .map(|leg| featurize_leg(&trace.samples, leg, &potentials).ok())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLetter {
    pub id: Letter,
    pub centroid: MotionFeature,
    pub category: MotionCategory,
}

/// Category threshold: Repulsive strictly above one half.
pub fn categorize(fraction: f64) -> MotionCategory {
    if fraction > 0.5 {
        MotionCategory::Repulsive
    } else {
        MotionCategory::Attractive
    }
}

/// Motion letters with the standardization moments used to fit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionAlphabet {
    pub letters: Vec<MotionLetter>,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl MotionAlphabet {
    pub fn size(&self) -> usize {
        self.letters.len()
    }

    fn standardize(&self, f: &MotionFeature) -> [f64; 4] {
        let a = f.to_array();
        std::array::from_fn(|i| (a[i] - self.mean[i]) / self.std[i])
    }

    /// Nearest centroid in standardized space; ties go to the lower id.
    pub fn assign(&self, f: &MotionFeature) -> Letter {
        let z = self.standardize(f);
        let mut best = (f64::INFINITY, 0);
        for l in &self.letters {
            let d = sq_dist(&z, &self.standardize(&l.centroid));
            if d < best.0 {
                best = (d, l.id);
            }
        }
        best.1
    }

    pub fn category(&self, letter: Letter) -> MotionCategory {
        self.letters[letter].category
    }

    pub fn repulsive_letters(&self) -> Vec<Letter> {
        self.letters
            .iter()
            .filter(|l| l.category == MotionCategory::Repulsive)
            .map(|l| l.id)
            .collect()
    }
}

fn sq_dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(z: &[f64; 4], centroids: &[[f64; 4]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(z, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Seeded k-means++ and Lloyd iterations on standardized features.
pub fn cluster_letters(features: &[MotionFeature], k: usize, seed: u64) -> Result<MotionAlphabet> {
    if k == 0 || features.len() < k {
        return Err(Error::TooFewSamples {
            needed: k.max(1),
            got: features.len(),
        });
    }
    let n = features.len() as f64;
    let raw: Vec<[f64; 4]> = features.iter().map(|f| f.to_array()).collect();
    let mut mean = [0.0; 4];
    for r in &raw {
        for i in 0..4 {
            mean[i] += r[i] / n;
        }
    }
    let mut std = [0.0; 4];
    for r in &raw {
        for i in 0..4 {
            std[i] += (r[i] - mean[i]).powi(2) / n;
        }
    }
    for s in &mut std {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let z: Vec<[f64; 4]> = raw
        .iter()
        .map(|r| std::array::from_fn(|i| (r[i] - mean[i]) / std[i]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![z[rng.random_range(0..z.len())]];
    let mut d2: Vec<f64> = z.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..z.len())
        };
        centroids.push(z[next]);
        for (i, p) in z.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &z[next]));
        }
    }

    let mut labels = vec![usize::MAX; z.len()];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in z.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        // empty clusters take the point farthest from its centroid
        for c in 0..k {
            if labels.iter().all(|&l| l != c) {
                let far = (0..z.len())
                    .filter(|&i| labels.iter().filter(|&&l| l == labels[i]).count() > 1)
                    .max_by(|&a, &b| {
                        sq_dist(&z[a], &centroids[labels[a]]).total_cmp(&sq_dist(&z[b], &centroids[labels[b]])).then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    labels[i] = c;
                    centroids[c] = z[i];
                    changed = true;
                }
            }
        }
        let mut sums = vec![[0.0; 4]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in z.iter().zip(&labels) {
            counts[l] += 1;
            for i in 0..4 {
                sums[l][i] += p[i];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = std::array::from_fn(|i| sums[c][i] / counts[c] as f64);
            }
        }
        if !changed {
            break;
        }
    }

    let letters = centroids
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let centroid = MotionFeature::from_array(std::array::from_fn(|i| c[i] * std[i] + mean[i]));
            MotionLetter {
                id,
                centroid,
                category: categorize(centroid.repulsion_energy_fraction),
            }
        })
        .collect();
    Ok(MotionAlphabet { letters, mean, std })
}

/// Mission, route and motion words of one demonstration, indexed by UAV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicDemo {
    /// Sorted cell letters of each `C_q` (the Mission Phrase).
    pub mission: Vec<Vec<Letter>>,
    /// Cell letters in visit order.
    pub route: Vec<Vec<Letter>>,
    /// One motion letter per leg, `|route| + 1` legs for a nonempty route.
    pub motion: Vec<Vec<Letter>>,
}

pub fn mission_word(cells: impl IntoIterator<Item = Letter>) -> Vec<Letter> {
    let mut w: Vec<Letter> = cells.into_iter().collect();
    w.sort_unstable();
    w
}

/// Symbolizes a demonstration. A degenerate leg is encoded with the letter
/// of the all-zero feature.
pub fn symbolize(demo: &ExpertDemonstration, spatial: &SpatialAlphabet, motion: &MotionAlphabet, config: &PotentialConfig) -> SymbolicDemo {
    let cell = |c: usize| spatial.letter(demo.instance.targets[c]);
    let route: Vec<Vec<Letter>> = demo.orders.routes.iter().map(|r| r.iter().map(|&c| cell(c)).collect()).collect();
    let mission = route.iter().map(|w| mission_word(w.iter().copied())).collect();
    let motion_words = demonstration_features(demo, config)
        .into_iter()
        .map(|legs| {
            legs.into_iter()
                .map(|f| motion.assign(&f.unwrap_or_default()))
                .collect()
        })
        .collect();
    SymbolicDemo {
        mission,
        route,
        motion: motion_words,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ga::{evolve, GaConfig, InstanceSampler};
    use crate::model::SeparationConfig;
    use proptest::{prop_assert_eq, proptest};

    fn alphabet() -> SpatialAlphabet {
        SpatialAlphabet::new(10, 10, Area::square(1000.0)).unwrap()
    }

    fn line_samples(n: usize, v: Point, dt: f64) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                t: i as f64 * dt,
                pos: v * (i as f64 * dt),
                vel: v,
            })
            .collect()
    }

    #[test]
    fn corner_cells() {
        let a = alphabet();
        assert_eq!(a.letter(Point::new(50.0, 50.0)), 0);
        assert_eq!(a.letter(Point::new(999.9, 999.9)), 99);
        assert_eq!(a.letter(Point::new(-5.0, 2000.0)), 90);
    }

    proptest! {
        #[test]
        fn letter_matches_floor_division(x in 0.0f64..1000.0, y in 0.0f64..1000.0) {
            let oracle = (y / 100.0) as usize * 10 + (x / 100.0) as usize;
            prop_assert_eq!(alphabet().letter(Point::new(x, y)), oracle);
        }
    }

    #[test]
    fn straight_leg_features() {
        let s = line_samples(50, Point::new(10.0, 0.0), 0.1);
        let leg = Leg {
            start: 0,
            end: 49,
            goal: Point::new(60.0, 0.0),
        };
        let cfg = PotentialConfig::default();
        let f = featurize_leg(&s, &leg, &|i, g| potential(s[i].pos, g, FieldSources::EMPTY, &cfg, 1.0)).unwrap();
        assert!((f.mean_speed - 10.0).abs() < 1e-9);
        assert!(f.mean_curvature.abs() < 1e-9);
        assert_eq!(f.mean_heading_rate, 0.0);
        assert_eq!(f.repulsion_energy_fraction, 0.0);
    }

    #[test]
    fn leg_near_obstacle_has_repulsion() {
        let s = line_samples(50, Point::new(10.0, 0.0), 0.1);
        let leg = Leg {
            start: 0,
            end: 49,
            goal: Point::new(50.0, 0.0),
        };
        let cfg = PotentialConfig::default();
        let obstacles = [Disk::new(Point::new(25.0, 20.0), 5.0)];
        let f = featurize_leg(&s, &leg, &|i, g| potential(s[i].pos, g, FieldSources::new(&obstacles, &[]), &cfg, 1.0)).unwrap();
        assert!(f.repulsion_energy_fraction > 0.0);
    }

    #[test]
    fn circular_arc_curvature() {
        let r = 80.0;
        let s: Vec<Sample> = (0..200)
            .map(|i| {
                let th = i as f64 * 0.005;
                Sample {
                    t: i as f64 * 0.1,
                    pos: Point::from_polar(r, th),
                    vel: Point::ZERO,
                }
            })
            .collect();
        let leg = Leg {
            start: 0,
            end: 199,
            goal: Point::ZERO,
        };
        let f = featurize_leg(&s, &leg, &|_, _| (1.0, 0.0)).unwrap();
        assert!((f.mean_curvature * r - 1.0).abs() < 0.05);
        assert!((f.mean_heading_rate - 0.05).abs() < 1e-6);
    }

    #[test]
    fn single_sample_leg_is_degenerate() {
        let s = line_samples(3, Point::new(1.0, 0.0), 0.1);
        let leg = Leg {
            start: 1,
            end: 1,
            goal: Point::ZERO,
        };
        assert!(matches!(featurize_leg(&s, &leg, &|_, _| (0.0, 0.0)), Err(Error::DegenerateLeg { .. })));
    }

    #[test]
    fn one_cluster_is_the_mean() {
        let feats: Vec<MotionFeature> = (0..10)
            .map(|i| MotionFeature::from_array([i as f64, 0.1, 2.0 * i as f64, 0.0]))
            .collect();
        let a = cluster_letters(&feats, 1, 0).unwrap();
        let c = a.letters[0].centroid.to_array();
        assert!((c[0] - 4.5).abs() < 1e-12 && (c[2] - 9.0).abs() < 1e-12 && (c[1] - 0.1).abs() < 1e-12);
        assert!(matches!(cluster_letters(&feats, 11, 0), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn separated_blobs_cluster_cleanly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut feats = Vec::new();
        for i in 0..200 {
            let (base, frac) = if i % 2 == 0 { (5.0, 0.05) } else { (14.0, 0.9) };
            feats.push(MotionFeature::from_array([
                base + rng.random_range(-0.2..0.2),
                rng.random_range(0.0..0.001),
                rng.random_range(0.0..0.01),
                frac + rng.random_range(-0.02..0.02),
            ]));
        }
        let a = cluster_letters(&feats, 2, 3).unwrap();
        let even = a.assign(&feats[0]);
        for (i, f) in feats.iter().enumerate() {
            assert_eq!(a.assign(f) == even, i % 2 == 0);
        }
        assert_eq!(a.category(even), MotionCategory::Attractive);
        assert_eq!(a.category(1 - even), MotionCategory::Repulsive);
        assert_eq!(a.repulsive_letters(), vec![1 - even]);
    }

    #[test]
    fn boundary_fraction_is_attractive() {
        assert_eq!(categorize(0.5), MotionCategory::Attractive);
        assert_eq!(categorize(0.500001), MotionCategory::Repulsive);
    }

    fn demo(seed: u64, n: usize, q: usize) -> ExpertDemonstration {
        let sampler = InstanceSampler {
            num_targets: n,
            fleet_size: q,
            ..InstanceSampler::default()
        };
        let inst = sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let cfg = GaConfig {
            population_size: 40,
            generations: 40,
            ..GaConfig::default()
        };
        evolve(&inst, &cfg, &SeparationConfig::default(), &PotentialConfig::default())
            .unwrap()
            .demonstration
    }

    fn fitted_alphabet(demos: &[ExpertDemonstration]) -> MotionAlphabet {
        let cfg = PotentialConfig::default();
        let feats: Vec<MotionFeature> = demos
            .iter()
            .flat_map(|d| demonstration_features(d, &cfg))
            .flatten()
            .flatten()
            .collect();
        cluster_letters(&feats, 3, 0).unwrap()
    }

    #[test]
    fn single_target_words() {
        let d = demo(2, 1, 1);
        let m = fitted_alphabet(&[d.clone(), demo(3, 2, 1)]);
        let s = symbolize(&d, &alphabet(), &m, &PotentialConfig::default());
        assert_eq!(s.mission[0].len(), 1);
        assert_eq!(s.route[0].len(), 1);
        assert_eq!(s.motion[0].len(), 2);
    }

    #[test]
    fn words_are_consistent_and_deterministic() {
        let demos: Vec<_> = (0..3).map(|s| demo(s, 8, 2)).collect();
        let m = fitted_alphabet(&demos);
        let cfg = PotentialConfig::default();
        for d in &demos {
            let s = symbolize(d, &alphabet(), &m, &cfg);
            assert_eq!(s, symbolize(d, &alphabet(), &m, &cfg));
            let mut all: Vec<Letter> = s.mission.concat();
            all.sort_unstable();
            let mut cells: Vec<Letter> = d.instance.targets.iter().map(|p| alphabet().letter(*p)).collect();
            cells.sort_unstable();
            assert_eq!(all, cells);
            for q in 0..2 {
                assert_eq!(mission_word(s.route[q].iter().copied()), s.mission[q]);
                assert_eq!(s.motion[q].len(), s.route[q].len() + 1);
            }
            // leg boundaries reach every target in order
            let legs = leg_boundaries(&d.traces[0], d.instance.depot, &d.orders.routes[0].iter().map(|&c| d.instance.targets[c]).collect::<Vec<_>>(), cfg.arrival_radius);
            for (leg, &c) in legs.iter().zip(&d.orders.routes[0]) {
                assert!(distance(d.traces[0].samples[leg.end].pos, d.instance.targets[c]) <= cfg.arrival_radius);
            }
        }
    }

    #[test]
    fn relabeling_permutes_words() {
        let d = demo(4, 8, 2);
        let m = fitted_alphabet(std::slice::from_ref(&d));
        let cfg = PotentialConfig::default();
        let s = symbolize(&d, &alphabet(), &m, &cfg);
        let mut swapped = d.clone();
        swapped.orders.routes.swap(0, 1);
        swapped.allocation.subsets.swap(0, 1);
        swapped.traces.swap(0, 1);
        for (i, t) in swapped.traces.iter_mut().enumerate() {
            t.uav = i;
        }
        let s2 = symbolize(&swapped, &alphabet(), &m, &cfg);
        assert_eq!(s2.mission, vec![s.mission[1].clone(), s.mission[0].clone()]);
        assert_eq!(s2.route, vec![s.route[1].clone(), s.route[0].clone()]);
        assert_eq!(s2.motion, vec![s.motion[1].clone(), s.motion[0].clone()]);
    }
}
