//! Per-age propagation features and multi-level popularity prediction.
//!
//! Prediction is a sequential decision per video: at every age the
//! predictor either waits for more evidence or commits to a popularity
//! level. A commit is scored by [`prediction_reward`], which pays for being
//! right and for being early.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{clustering_coefficient, SocialGraph};
use crate::propagation::{EventKind, PropagationTree};
use crate::{Slot, UserId, VideoId};

pub const FEATURE_DIMS: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURE_DIMS] = [
    "views",
    "shares",
    "views_last_slot",
    "shares_last_slot",
    "initiator_degree",
    "spreader_clustering",
    "regions_reached",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub video: VideoId,
    pub age: u32,
    pub dims: [f64; FEATURE_DIMS],
}

impl FeatureVector {
    pub fn views(&self) -> f64 {
        self.dims[0]
    }
}

/// Features of a cascade as seen `age` slots after initiation, i.e. from the
/// events at slots `<= t_init + age`. The initiator counts as a share.
pub fn extract_features(tree: &PropagationTree, g: &SocialGraph, age: u32) -> Result<FeatureVector> {
    if age < 1 {
        return Err(Error::Range("feature age must be >= 1".into()));
    }
    let until = tree.t_init + Slot::from(age);
    if until > tree.observed_until {
        return Err(Error::Range(format!(
            "age {age} reaches slot {until}, cascade observed until {}",
            tree.observed_until
        )));
    }

    let mut views = 0usize;
    let mut shares = 1usize;
    let mut views_last = 0usize;
    let mut shares_last = 0usize;
    let mut spreaders: Vec<UserId> = vec![tree.root];
    let mut regions = std::collections::BTreeSet::new();
    regions.insert(g.user(tree.root)?.home_region);
    for ev in tree.events_until(until) {
        match ev.kind {
            EventKind::Watch => {
                views += 1;
                views_last += usize::from(ev.slot == until);
                regions.insert(g.user(ev.user)?.home_region);
            }
            EventKind::Share => {
                shares += 1;
                shares_last += usize::from(ev.slot == until);
                spreaders.push(ev.user);
            }
            _ => {}
        }
    }

    Ok(FeatureVector {
        video: tree.video,
        age,
        dims: [
            views as f64,
            shares as f64,
            views_last as f64,
            shares_last as f64,
            g.degree(tree.root) as f64,
            clustering_coefficient(g, &spreaders)?,
            regions.len() as f64,
        ],
    })
}

/// Ordinal popularity class, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PopularityLevel(pub u32);

/// `1 + #{thresholds strictly below popularity}`.
pub fn label_level(final_popularity: usize, thresholds: &[f64]) -> Result<PopularityLevel> {
    if thresholds.is_empty() {
        return Err(Error::config("level thresholds must not be empty"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("level thresholds must be strictly ascending"));
    }
    let p = final_popularity as f64;
    Ok(PopularityLevel(
        1 + thresholds.iter().filter(|&&t| t < p).count() as u32,
    ))
}

/// Nearest-rank quantile of an unsorted sample.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Level thresholds at the given corpus quantiles, deduplicated so they stay
/// strictly ascending.
pub fn quantile_thresholds(popularities: &[usize], quantiles: &[f64]) -> Result<Vec<f64>> {
    if popularities.is_empty() {
        return Err(Error::domain("no popularity values to take quantiles of"));
    }
    let values: Vec<f64> = popularities.iter().map(|&p| p as f64).collect();
    let mut out: Vec<f64> = quantiles.iter().map(|&q| nearest_rank(&values, q)).collect();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionDecision {
    Wait,
    Commit { level: PopularityLevel, age: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// Last age at which a decision is taken; committing is forced there.
    pub horizon: u32,
    /// Bins per feature dimension.
    pub bins: usize,
    /// Samples a cell needs before its estimate is trusted.
    pub exploration_threshold: u64,
    /// Minimum majority share for an early commit.
    pub confidence_floor: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            bins: 4,
            exploration_threshold: 3,
            confidence_floor: 0.8,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("prediction.horizon must be >= 1"));
        }
        if self.bins < 1 || self.bins > 256 {
            return Err(Error::config("prediction.bins must be in 1..=256"));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(Error::config("prediction.confidence_floor must be in [0,1]"));
        }
        Ok(())
    }
}

type CellKey = [u8; FEATURE_DIMS];

/// Online multi-level predictor over a per-age hypercube partition of the
/// feature space. Each cell keeps a count per level; its estimate is the
/// majority level.
#[derive(Debug, Clone)]
pub struct OnlineModel {
    cfg: PredictorConfig,
    levels: u32,
    /// Per age (index `age - 1`): per-dimension normalisation maxima.
    scale: Vec<[f64; FEATURE_DIMS]>,
    cells: Vec<HashMap<CellKey, Vec<u64>>>,
    age_totals: Vec<Vec<u64>>,
}

impl OnlineModel {
    /// `scale[age - 1][d]` is the corpus maximum of dimension `d` at that age.
    pub fn new(cfg: PredictorConfig, levels: u32, scale: Vec<[f64; FEATURE_DIMS]>) -> Result<Self> {
        cfg.validate()?;
        if levels < 1 {
            return Err(Error::config("need at least one popularity level"));
        }
        if scale.len() != cfg.horizon as usize {
            return Err(Error::config(format!(
                "feature scale covers {} ages, horizon is {}",
                scale.len(),
                cfg.horizon
            )));
        }
        let h = cfg.horizon as usize;
        Ok(Self {
            cfg,
            levels,
            scale,
            cells: vec![HashMap::new(); h],
            age_totals: vec![vec![0; levels as usize]; h],
        })
    }

    /// Per-age maxima over a corpus of feature trajectories.
    pub fn scale_from(trajectories: &[Vec<FeatureVector>], horizon: u32) -> Vec<[f64; FEATURE_DIMS]> {
        let mut scale = vec![[0.0; FEATURE_DIMS]; horizon as usize];
        for traj in trajectories {
            for x in traj {
                if x.age >= 1 && x.age <= horizon {
                    let row = &mut scale[x.age as usize - 1];
                    for (m, v) in row.iter_mut().zip(x.dims) {
                        *m = f64::max(*m, v);
                    }
                }
            }
        }
        scale
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    fn cell_of(&self, x: &FeatureVector, age: u32) -> CellKey {
        let bins = self.cfg.bins;
        let scale = &self.scale[age as usize - 1];
        let mut key = [0u8; FEATURE_DIMS];
        for (d, k) in key.iter_mut().enumerate() {
            let max = scale[d];
            if max > 0.0 {
                let b = ((x.dims[d] / max) * bins as f64).floor();
                *k = (b.max(0.0) as usize).min(bins - 1) as u8;
            }
        }
        key
    }

    fn check_age(&self, age: u32) -> Result<()> {
        if age < 1 || age > self.cfg.horizon {
            return Err(Error::Range(format!(
                "age {age} outside 1..={}",
                self.cfg.horizon
            )));
        }
        Ok(())
    }

    /// Level counts of the cell containing `x` at `age`.
    pub fn cell_counts(&self, x: &FeatureVector, age: u32) -> Vec<u64> {
        if self.check_age(age).is_err() {
            return vec![0; self.levels as usize];
        }
        self.cells[age as usize - 1]
            .get(&self.cell_of(x, age))
            .cloned()
            .unwrap_or_else(|| vec![0; self.levels as usize])
    }

    pub fn sample_count(&self, x: &FeatureVector, age: u32) -> u64 {
        self.cell_counts(x, age).iter().sum()
    }

    /// Majority level among the cells at `age`, ties to the lower level; level
    /// 1 when nothing has been observed.
    pub fn age_majority(&self, age: u32) -> PopularityLevel {
        majority(&self.age_totals[age as usize - 1]).0
    }

    pub fn decide(&self, x: &FeatureVector, age: u32) -> PredictionDecision {
        let age = age.clamp(1, self.cfg.horizon);
        let at_horizon = age == self.cfg.horizon;
        let counts = self.cell_counts(x, age);
        let samples: u64 = counts.iter().sum();
        if samples < self.cfg.exploration_threshold || samples == 0 {
            return if at_horizon {
                PredictionDecision::Commit { level: self.age_majority(age), age }
            } else {
                PredictionDecision::Wait
            };
        }
        let (level, top) = majority(&counts);
        let confidence = top as f64 / samples as f64;
        if at_horizon || confidence >= self.cfg.confidence_floor {
            PredictionDecision::Commit { level, age }
        } else {
            PredictionDecision::Wait
        }
    }

    /// Adds one labelled observation to the cell containing `x` at `age`.
    pub fn update(&mut self, x: &FeatureVector, age: u32, true_level: PopularityLevel) -> Result<()> {
        self.check_age(age)?;
        if true_level.0 < 1 || true_level.0 > self.levels {
            return Err(Error::Range(format!("level {} outside 1..={}", true_level.0, self.levels)));
        }
        let key = self.cell_of(x, age);
        let li = true_level.0 as usize - 1;
        let levels = self.levels as usize;
        self.cells[age as usize - 1]
            .entry(key)
            .or_insert_with(|| vec![0; levels])[li] += 1;
        self.age_totals[age as usize - 1][li] += 1;
        Ok(())
    }

    /// Snapshot of every non-empty cell, for order-independence checks.
    pub fn cell_table(&self) -> BTreeMap<(u32, CellKey), Vec<u64>> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, m)| m.iter().map(move |(k, v)| ((i as u32 + 1, *k), v.clone())))
            .collect()
    }
}

/// `(level, count)` of the largest count, ties to the lower level.
fn majority(counts: &[u64]) -> (PopularityLevel, u64) {
    let mut best = (0usize, 0u64);
    for (i, &c) in counts.iter().enumerate() {
        if c > best.1 {
            best = (i, c);
        }
    }
    (PopularityLevel(best.0 as u32 + 1), best.1)
}

/// Accuracy times linear timeliness: `1[level == true] * (H - age + 1) / H`.
pub fn prediction_reward(d: PredictionDecision, true_level: PopularityLevel, horizon: u32) -> Result<f64> {
    match d {
        PredictionDecision::Wait => Err(Error::Contract("reward of a WAIT decision".into())),
        PredictionDecision::Commit { level, age } => {
            if horizon < 1 || age < 1 || age > horizon {
                return Err(Error::Range(format!("commit age {age} outside 1..={horizon}")));
            }
            if level != true_level {
                return Ok(0.0);
            }
            Ok(f64::from(horizon - age + 1) / f64::from(horizon))
        }
    }
}

/// Per-age cumulative-view thresholds for the view-count baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewThresholdTable {
    pub commit_age: u32,
    pub rows: BTreeMap<u32, Vec<f64>>,
}

impl ViewThresholdTable {
    /// Fits thresholds for `commit_age` so each level gets the share of the
    /// sample it holds in the labelled data: threshold `j` is the view count
    /// at the cumulative fraction of levels `<= j`.
    pub fn fit(commit_age: u32, samples: &[(f64, PopularityLevel)], levels: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("no samples to fit view thresholds"));
        }
        let views: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let n = samples.len() as f64;
        let thresholds = (1..levels)
            .map(|j| {
                let below = samples.iter().filter(|s| s.1 .0 <= j).count() as f64;
                if below == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    nearest_rank(&views, below / n)
                }
            })
            .collect();
        Ok(Self {
            commit_age,
            rows: BTreeMap::from([(commit_age, thresholds)]),
        })
    }
}

/// Commits, at the age of `x`, to the level whose view band contains the
/// cumulative views: `1 + #{thresholds strictly below views}`.
pub fn baseline_view_predictor(x: &FeatureVector, table: &ViewThresholdTable) -> Result<PredictionDecision> {
    let row = table
        .rows
        .get(&x.age)
        .ok_or_else(|| Error::config(format!("no view thresholds for age {}", x.age)))?;
    let level = 1 + row.iter().filter(|&&t| t < x.views()).count() as u32;
    Ok(PredictionDecision::Commit {
        level: PopularityLevel(level),
        age: x.age,
    })
}

/// One scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub video: VideoId,
    pub commit_age: u32,
    pub predicted: PopularityLevel,
    pub true_level: PopularityLevel,
    pub reward: f64,
}

/// Feature trajectory (ages `1..=horizon`) and label of one video.
#[derive(Debug, Clone)]
pub struct LabelledTrajectory {
    pub video: VideoId,
    pub features: Vec<FeatureVector>,
    pub level: PopularityLevel,
}

pub fn trajectory(tree: &PropagationTree, g: &SocialGraph, horizon: u32) -> Result<Vec<FeatureVector>> {
    (1..=horizon).map(|age| extract_features(tree, g, age)).collect()
}

/// Online replay: videos are taken in the given (initiation) order; each is
/// scored by walking its ages until the model commits, then every age of it
/// is fed back as training data before the next video is scored.
pub fn replay_online(model: &mut OnlineModel, corpus: &[LabelledTrajectory]) -> Result<Vec<PredictionRecord>> {
    let horizon = model.config().horizon;
    let mut out = Vec::with_capacity(corpus.len());
    for item in corpus {
        if item.features.len() < horizon as usize {
            return Err(Error::Range(format!(
                "video {} has {} feature ages, horizon is {horizon}",
                item.video,
                item.features.len()
            )));
        }
        let mut decision = PredictionDecision::Wait;
        for x in &item.features[..horizon as usize] {
            decision = model.decide(x, x.age);
            if decision != PredictionDecision::Wait {
                break;
            }
        }
        let PredictionDecision::Commit { level, age } = decision else {
            unreachable!("decide always commits at the horizon");
        };
        out.push(PredictionRecord {
            video: item.video,
            commit_age: age,
            predicted: level,
            true_level: item.level,
            reward: prediction_reward(decision, item.level, horizon)?,
        });
        for x in &item.features[..horizon as usize] {
            model.update(x, x.age, item.level)?;
        }
    }
    Ok(out)
}

/// Scores the view-threshold baseline on every video of `corpus`.
pub fn replay_baseline(
    table: &ViewThresholdTable,
    corpus: &[LabelledTrajectory],
    horizon: u32,
) -> Result<Vec<PredictionRecord>> {
    corpus
        .iter()
        .map(|item| {
            let x = item
                .features
                .iter()
                .find(|x| x.age == table.commit_age)
                .ok_or_else(|| Error::Range(format!("video {} lacks age {}", item.video, table.commit_age)))?;
            let decision = baseline_view_predictor(x, table)?;
            let PredictionDecision::Commit { level, age } = decision else {
                unreachable!("baseline always commits");
            };
            Ok(PredictionRecord {
                video: item.video,
                commit_age: age,
                predicted: level,
                true_level: item.level,
                reward: prediction_reward(decision, item.level, horizon)?,
            })
        })
        .collect()
}

pub fn mean_reward(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64
    }
}

/// Synthetic corpora for evaluating predictors.
pub mod corpus {
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::*;
    use crate::graph::{Point, Region, User};
    use crate::propagation::{PropagationEvent, Video};
    use crate::seed::{self, SimRng};

    /// Corpus in which early view counts carry no information about the
    /// final level but the number of regions reached does.
    ///
    /// Every video gains 1 to 3 viewers per slot up to `horizon` whatever its
    /// class. Level-1 videos stay in the initiator's region; the first-slot
    /// viewers of level-2 videos all come from distinct foreign regions, and
    /// level-2 videos collect a burst of extra viewers right after `horizon`.
    pub struct RegionSignalCorpus {
        pub graph: SocialGraph,
        pub trees: Vec<PropagationTree>,
        pub items: Vec<LabelledTrajectory>,
        pub thresholds: Vec<f64>,
    }

    pub fn region_signal(n_videos: usize, horizon: u32, seed_value: u64) -> Result<RegionSignalCorpus> {
        const REGIONS: u32 = 8;
        const PER_REGION: u32 = 400;
        let burst = 40usize;
        let regions = (0..REGIONS)
            .map(|i| Region {
                id: i,
                center: Point::new(f64::from(i) * 10.0, 0.0),
                storage_slots: 1,
                bandwidth_units: 1,
            })
            .collect();
        let users = (0..REGIONS * PER_REGION)
            .map(|i| User { id: i, home_region: i / PER_REGION, login_prob: 1.0 })
            .collect();
        let graph = SocialGraph::new(regions, users, std::iter::empty())?;
        let mut rng: SimRng = seed::rng_for(seed_value, "region-signal", 0);

        let h = Slot::from(horizon);
        let mut trees = Vec::with_capacity(n_videos);
        let mut classes = Vec::with_capacity(n_videos);
        for k in 0..n_videos {
            let spread = rng.gen_bool(0.5);
            let home: u32 = rng.gen_range(0..REGIONS);
            let mut pool: Vec<UserId> = if spread {
                (0..REGIONS * PER_REGION).filter(|u| u / PER_REGION != home).collect()
            } else {
                (home * PER_REGION..(home + 1) * PER_REGION).collect()
            };
            let root = home * PER_REGION + rng.gen_range(0..PER_REGION);
            pool.retain(|&u| u != root);
            pool.shuffle(&mut rng);

            let video = Video { id: k as VideoId, t_init: k as Slot, initiator: root, size_units: 1 };
            let mut tree = PropagationTree::new(&video);
            let mut next = pool.into_iter();
            let watch = |tree: &mut PropagationTree, slot: Slot, user: UserId| {
                for kind in [EventKind::Watch, EventKind::Recover] {
                    tree.apply(PropagationEvent { slot, video: video.id, user, kind, parent: Some(root) });
                }
            };
            let first_slot = rng.gen_range(1..=3);
            if spread {
                // each first-slot viewer from a different foreign region
                let mut seen = std::collections::BTreeSet::new();
                let mut firsts = Vec::new();
                for u in next.by_ref() {
                    if seen.insert(u / PER_REGION) {
                        firsts.push(u);
                        if firsts.len() == first_slot {
                            break;
                        }
                    }
                }
                for u in firsts {
                    watch(&mut tree, video.t_init + 1, u);
                }
            } else {
                for _ in 0..first_slot {
                    let u = next.next().expect("pool large enough");
                    watch(&mut tree, video.t_init + 1, u);
                }
            }
            for dt in 2..=h {
                for _ in 0..rng.gen_range(1..=3) {
                    let u = next.next().expect("pool large enough");
                    watch(&mut tree, video.t_init + dt, u);
                }
            }
            if spread {
                for _ in 0..burst {
                    let u = next.next().expect("pool large enough");
                    watch(&mut tree, video.t_init + h + 1, u);
                }
            }
            tree.observed_until = video.t_init + h + 1;
            trees.push(tree);
            classes.push(spread);
        }

        // Non-spread videos end with at most 1 + 3h participants, spread ones
        // with at least 1 + h + burst.
        let thresholds = vec![(1 + 3 * h as usize) as f64 + 0.5];
        let items = trees
            .iter()
            .map(|t| {
                Ok(LabelledTrajectory {
                    video: t.video,
                    features: trajectory(t, &graph, horizon)?,
                    level: label_level(crate::propagation::popularity(t), &thresholds)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionSignalCorpus { graph, trees, items, thresholds })
    }
}
