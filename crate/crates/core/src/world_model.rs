//! The hierarchical world model: smoothed count tables for Mission, Route
//! and Motion words, factorized as
//! `p(mission | D) · p(route | mission) · p(motion | route)`.
//!
//! * Mission level: per-letter role model. Each word of a phrase gets a
//!   canonical role (its rank by mean bearing around the area centre), and
//!   each cell letter has a smoothed distribution over the `Q` roles plus an
//!   "unassigned" outcome. A phrase's probability is the product over its
//!   letters.
//! * Route level: whole-word Laplace counts conditioned on the mission word.
//!   The support of a context is the set of distinct arrangements of its
//!   letter multiset, so an unseen context is uniform over that set.
//! * Motion level: one letter per leg conditioned on the leg's end cells
//!   (depot is its own symbol), backing off to the unconditional letter
//!   counts for unseen legs.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::ExpertDemonstration;
use crate::motion::PotentialConfig;
use crate::symbolizer::{cluster_letters, demonstration_features, symbolize, Letter, MotionAlphabet, MotionFeature, SpatialAlphabet, SymbolicDemo};

pub const WM_VERSION: u32 = 1;

/// Settings for building a model from raw demonstrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub motion_letters: usize,
    pub cluster_seed: u64,
    pub alpha: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grid_rows: 10,
            grid_cols: 10,
            motion_letters: 8,
            cluster_seed: 0,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Mission,
    Route,
    Motion,
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mission" | "msn" => Ok(Level::Mission),
            "route" | "rte" => Ok(Level::Route),
            "motion" | "mot" => Ok(Level::Motion),
            other => Err(Error::UnknownLevel(other.to_string())),
        }
    }
}

/// End point of a leg: a cell letter, or `None` for the depot.
pub type LegEnd = Option<Letter>;

/// Leg contexts of a route word: depot → first cell → … → last cell → depot.
pub fn leg_contexts(route: &[Letter]) -> Vec<(LegEnd, LegEnd)> {
    if route.is_empty() {
        return Vec::new();
    }
    let ends: Vec<LegEnd> = std::iter::once(None)
        .chain(route.iter().map(|&c| Some(c)))
        .chain(std::iter::once(None))
        .collect();
    ends.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Conditioning information for [`WorldModel::log_prob`].
#[derive(Debug, Clone, PartialEq)]
pub enum WordContext {
    /// A mission word with its canonical role in a phrase of `fleet` words.
    Role { role: usize, fleet: usize },
    /// The parent word (mission word for Route, route word for Motion).
    Parent(Vec<Letter>),
}

/// Maps keyed by vectors cannot be JSON objects; store them as sorted
/// entry lists.
pub(crate) mod entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize + Ord, V: Serialize, S: Serializer>(map: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(&K, &V)> = map.iter().collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, K: Deserialize<'de> + Ord, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<K, V>, D::Error> {
        let v: Vec<(K, V)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRow {
    pub total: u64,
    #[serde(with = "entries")]
    pub words: BTreeMap<Vec<Letter>, u64>,
}

/// 95th-percentile leave-one-out training abnormality per level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub mission: f64,
    pub route: f64,
    pub motion: f64,
    pub total: f64,
}

impl Thresholds {
    pub fn level(&self, level: Level) -> f64 {
        match level {
            Level::Mission => self.mission,
            Level::Route => self.route,
            Level::Motion => self.motion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub wm_version: u32,
    pub alpha: f64,
    pub spatial: SpatialAlphabet,
    pub motion_alphabet: MotionAlphabet,
    pub num_demos: usize,
    /// `mission[Q][cell][role]`: how often a cell was served by a role in
    /// training phrases of `Q` words.
    #[serde(with = "entries")]
    pub mission: BTreeMap<usize, Vec<Vec<u64>>>,
    /// Route word counts per mission word.
    #[serde(with = "entries")]
    pub route: BTreeMap<Vec<Letter>, RouteRow>,
    /// Motion letter counts per leg context.
    #[serde(with = "entries")]
    pub motion: BTreeMap<(LegEnd, LegEnd), Vec<u64>>,
    pub motion_unconditional: Vec<u64>,
    pub thresholds: Thresholds,
}

/// Per-level abnormalities of one symbolic configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelScores {
    pub mission: f64,
    pub route: f64,
    pub motion: f64,
}

impl LevelScores {
    pub fn total(&self) -> f64 {
        self.mission + self.route + self.motion
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// ln of the number of distinct arrangements of a letter multiset.
pub fn ln_arrangements(word: &[Letter]) -> f64 {
    let mut sorted = word.to_vec();
    sorted.sort_unstable();
    let mut ln = ln_factorial(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&c| c == sorted[i]).count();
        ln -= ln_factorial(j);
        i += j;
    }
    ln
}

/// Circular mean bearing of a word's cell centres around the area centre.
fn word_bearing(word: &[Letter], spatial: &SpatialAlphabet) -> f64 {
    let center = spatial.area.center();
    let (mut sx, mut sy) = (0.0, 0.0);
    for &c in word {
        let d = spatial.cell_center(c) - center;
        let n = d.norm();
        if n > 0.0 {
            sx += d.x / n;
            sy += d.y / n;
        }
    }
    sy.atan2(sx)
}

/// Role of each word: rank by mean bearing, empty words last, ties broken
/// by the words themselves. Relabeling the words permutes the roles along.
pub fn canonical_roles(words: &[Vec<Letter>], spatial: &SpatialAlphabet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..words.len()).collect();
    let key = |i: usize| (words[i].is_empty(), if words[i].is_empty() { 0.0 } else { word_bearing(&words[i], spatial) });
    order.sort_by(|&a, &b| {
        let (ea, ba) = key(a);
        let (eb, bb) = key(b);
        ea.cmp(&eb).then(ba.total_cmp(&bb)).then(words[a].cmp(&words[b])).then(a.cmp(&b))
    });
    let mut roles = vec![0; words.len()];
    for (rank, i) in order.into_iter().enumerate() {
        roles[i] = rank;
    }
    roles
}

fn percentile95(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

impl WorldModel {
    /// Fits count tables and leave-one-out trigger thresholds.
    pub fn fit(demos: &[SymbolicDemo], spatial: SpatialAlphabet, motion_alphabet: MotionAlphabet, alpha: f64) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidInstance("smoothing alpha must be positive".into()));
        }
        let k = motion_alphabet.size();
        let mut model = WorldModel {
            wm_version: WM_VERSION,
            alpha,
            spatial,
            motion_alphabet,
            num_demos: 0,
            mission: BTreeMap::new(),
            route: BTreeMap::new(),
            motion: BTreeMap::new(),
            motion_unconditional: vec![0; k],
            thresholds: Thresholds {
                mission: 0.0,
                route: 0.0,
                motion: 0.0,
                total: 0.0,
            },
        };
        for d in demos {
            model.apply(d, true)?;
        }
        let mut scores = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for d in demos {
            model.apply(d, false)?;
            let s = model.demo_scores(d);
            model.apply(d, true)?;
            scores.0.push(s.mission);
            scores.1.push(s.route);
            scores.2.push(s.motion);
            scores.3.push(s.total());
        }
        model.thresholds = Thresholds {
            mission: percentile95(scores.0),
            route: percentile95(scores.1),
            motion: percentile95(scores.2),
            total: percentile95(scores.3),
        };
        Ok(model)
    }

    /// Clusters motion letters over every leg of the dataset, symbolizes
    /// each demonstration and fits the tables. The spatial grid covers the
    /// first demonstration's area.
    pub fn from_demonstrations(demos: &[ExpertDemonstration], config: &FitConfig, potential: &PotentialConfig) -> Result<(Self, Vec<SymbolicDemo>)> {
        let first = demos.first().ok_or(Error::EmptyDataset)?;
        let spatial = SpatialAlphabet::new(config.grid_rows, config.grid_cols, first.instance.area)?;
        let features: Vec<MotionFeature> = demos
            .par_iter()
            .map(|d| demonstration_features(d, potential))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .flatten()
            .flatten()
            .collect();
        let k = config.motion_letters.min(features.len()).max(1);
        let motion = cluster_letters(&features, k, config.cluster_seed)?;
        let symbolic: Vec<SymbolicDemo> = demos.par_iter().map(|d| symbolize(d, &spatial, &motion, potential)).collect();
        let model = Self::fit(&symbolic, spatial, motion, config.alpha)?;
        Ok((model, symbolic))
    }

    /// Adds (or removes) one demonstration's counts.
    fn apply(&mut self, d: &SymbolicDemo, add: bool) -> Result<()> {
        let bump = |c: &mut u64| {
            if add {
                *c += 1;
            } else {
                *c -= 1;
            }
        };
        let fleet = d.mission.len();
        let cells = self.spatial.size();
        let roles = canonical_roles(&d.mission, &self.spatial);
        let table = self.mission.entry(fleet).or_insert_with(|| vec![vec![0; fleet]; cells]);
        for (word, &role) in d.mission.iter().zip(&roles) {
            for &c in word {
                if c >= cells {
                    return Err(Error::InvalidInstance(format!("cell letter {c} outside the alphabet")));
                }
                bump(&mut table[c][role]);
            }
        }
        for (route, mission) in d.route.iter().zip(&d.mission) {
            if route.is_empty() {
                continue;
            }
            let row = self.route.entry(mission.clone()).or_insert_with(|| RouteRow {
                total: 0,
                words: BTreeMap::new(),
            });
            bump(&mut row.total);
            bump(row.words.entry(route.clone()).or_insert(0));
            if row.words[route] == 0 {
                row.words.remove(route);
            }
            if row.total == 0 {
                self.route.remove(mission);
            }
        }
        let k = self.motion_alphabet.size();
        for (motion, route) in d.motion.iter().zip(&d.route) {
            for (&letter, ctx) in motion.iter().zip(leg_contexts(route)) {
                if letter >= k {
                    return Err(Error::InvalidInstance(format!("motion letter {letter} outside the alphabet")));
                }
                let row = self.motion.entry(ctx).or_insert_with(|| vec![0; k]);
                bump(&mut row[letter]);
                if row.iter().all(|&c| c == 0) {
                    self.motion.remove(&ctx);
                }
                bump(&mut self.motion_unconditional[letter]);
            }
        }
        if add {
            self.num_demos += 1;
        } else {
            self.num_demos -= 1;
        }
        Ok(())
    }

    // ---- mission level ----

    fn mission_row(&self, cell: Letter, fleet: usize) -> Option<&Vec<u64>> {
        self.mission.get(&fleet).and_then(|t| t.get(cell))
    }

    /// `ln f(role | cell)` over `fleet` roles plus the unassigned outcome.
    pub fn letter_role_log_prob(&self, cell: Letter, role: usize, fleet: usize) -> f64 {
        let a = self.alpha;
        let outcomes = (fleet + 1) as f64;
        match self.mission_row(cell, fleet) {
            Some(row) => {
                let n: u64 = row.iter().sum();
                let count = row.get(role).copied().unwrap_or(0) as f64;
                ((count + a) / (n as f64 + a * outcomes)).ln()
            }
            None => (1.0 / outcomes).ln(),
        }
    }

    /// `ln f(unassigned | cell)`: the surprise of a visible target that no
    /// UAV is tasked with.
    pub fn unassigned_log_prob(&self, cell: Letter, fleet: usize) -> f64 {
        let a = self.alpha;
        let outcomes = (fleet + 1) as f64;
        match self.mission_row(cell, fleet) {
            Some(row) => {
                let n: u64 = row.iter().sum();
                (a / (n as f64 + a * outcomes)).ln()
            }
            None => (1.0 / outcomes).ln(),
        }
    }

    pub fn mission_word_log_prob(&self, word: &[Letter], role: usize, fleet: usize) -> f64 {
        word.iter().map(|&c| self.letter_role_log_prob(c, role, fleet)).sum()
    }

    /// Phrase log-probability with canonical roles.
    pub fn phrase_log_prob(&self, words: &[Vec<Letter>]) -> f64 {
        let roles = canonical_roles(words, &self.spatial);
        words
            .iter()
            .zip(&roles)
            .map(|(w, &r)| self.mission_word_log_prob(w, r, words.len()))
            .sum()
    }

    // ---- route level ----

    pub fn route_log_prob(&self, route: &[Letter], mission: &[Letter]) -> f64 {
        let mut sorted = route.to_vec();
        sorted.sort_unstable();
        if sorted != mission {
            // not an arrangement of the context: outside the support
            return f64::NEG_INFINITY;
        }
        let a = self.alpha;
        let ln_v = ln_arrangements(mission);
        match self.route.get(mission) {
            Some(row) => {
                let n = row.words.get(route).copied().unwrap_or(0) as f64;
                // ln((n + α) / (T + α V)) with V possibly huge
                let ln_denom = if row.total == 0 {
                    a.ln() + ln_v
                } else {
                    let t = row.total as f64;
                    let av = a.ln() + ln_v;
                    av.max(t.ln()) + (1.0 + (-(av - t.ln()).abs()).exp()).ln()
                };
                (n + a).ln() - ln_denom
            }
            None => -ln_v,
        }
    }

    /// Total probability mass of a route row (observed words plus the
    /// smoothed unseen arrangements).
    pub fn route_row_mass(&self, mission: &[Letter]) -> f64 {
        let Some(row) = self.route.get(mission) else {
            return 1.0;
        };
        let v = ln_arrangements(mission).exp();
        let denom = row.total as f64 + self.alpha * v;
        let seen: f64 = row.words.values().map(|&n| (n as f64 + self.alpha) / denom).sum();
        seen + (v - row.words.len() as f64) * self.alpha / denom
    }

    // ---- motion level ----

    pub fn motion_letter_log_prob(&self, letter: Letter, ctx: (LegEnd, LegEnd)) -> f64 {
        let a = self.alpha;
        let k = self.motion_alphabet.size() as f64;
        let row = self.motion.get(&ctx).unwrap_or(&self.motion_unconditional);
        let n: u64 = row.iter().sum();
        let count = row.get(letter).copied().unwrap_or(0) as f64;
        ((count + a) / (n as f64 + a * k)).ln()
    }

    /// Sum of per-leg letter log-probabilities along explicit leg contexts.
    pub fn motion_legs_log_prob(&self, legs: &[(Letter, (LegEnd, LegEnd))]) -> f64 {
        legs.iter().map(|&(l, ctx)| self.motion_letter_log_prob(l, ctx)).sum()
    }

    /// Motion word given its route word (one letter per leg).
    pub fn motion_log_prob(&self, motion: &[Letter], route: &[Letter]) -> f64 {
        let ctx = leg_contexts(route);
        if ctx.len() != motion.len() {
            return f64::NEG_INFINITY;
        }
        motion.iter().zip(ctx).map(|(&l, c)| self.motion_letter_log_prob(l, c)).sum()
    }

    // ---- generic queries ----

    pub fn log_prob(&self, level: Level, word: &[Letter], context: &WordContext) -> Result<f64> {
        match (level, context) {
            (Level::Mission, WordContext::Role { role, fleet }) => Ok(self.mission_word_log_prob(word, *role, *fleet)),
            (Level::Route, WordContext::Parent(mission)) => Ok(self.route_log_prob(word, mission)),
            (Level::Motion, WordContext::Parent(route)) => Ok(self.motion_log_prob(word, route)),
            (level, _) => Err(Error::UnknownLevel(format!("context does not match level {level:?}"))),
        }
    }

    /// `ln p(mission) + ln p(route | mission) + ln p(motion | route)` for one
    /// UAV's words, with the mission word in `role` of a `fleet`-word phrase.
    pub fn joint_log_prob(&self, mission: &[Letter], role: usize, fleet: usize, route: &[Letter], motion: &[Letter]) -> f64 {
        self.mission_word_log_prob(mission, role, fleet) + self.route_log_prob(route, mission) + self.motion_log_prob(motion, route)
    }

    /// Abnormalities of a whole symbolized demonstration.
    pub fn demo_scores(&self, d: &SymbolicDemo) -> LevelScores {
        let route = d
            .route
            .iter()
            .zip(&d.mission)
            .filter(|(r, _)| !r.is_empty())
            .map(|(r, m)| -self.route_log_prob(r, m))
            .sum();
        let motion = d
            .motion
            .iter()
            .zip(&d.route)
            .map(|(m, r)| -self.motion_log_prob(m, r))
            .sum();
        LevelScores {
            mission: -self.phrase_log_prob(&d.mission),
            route,
            motion,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let found = value.get("wm_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != WM_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: WM_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}
