//! Statistics over finished runs: lag-law fitting, distance CDFs by
//! popularity class, size versus clustering, and per-strategy delivery
//! reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::d2d::{D2dEvent, D2dEventKind};
use crate::delivery::ServeSource;
use crate::error::{Error, Result};
use crate::graph::{clustering_coefficient, SocialGraph};
use crate::logs::{DeliveryRecord, PredictionReport, ScenarioLog};
use crate::propagation::{popularity, PropagationTree};
use crate::seed;
use crate::{UserId, VideoId};

/// Re-share counts per lag (lag >= 1).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LagHistogram {
    counts: BTreeMap<u64, u64>,
}

impl LagHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_lags(lags: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut h = Self::new();
        for lag in lags {
            h.add(lag, 1)?;
        }
        Ok(h)
    }

    pub fn add(&mut self, lag: u64, count: u64) -> Result<()> {
        if lag == 0 {
            return Err(Error::Range("lag 0 in histogram".into()));
        }
        *self.counts.entry(lag).or_insert(0) += count;
        Ok(())
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Fitted `ln count = intercept - s ln lag`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfFit {
    pub s: f64,
    pub intercept: f64,
}

impl ZipfFit {
    pub fn fitted(&self, lag: u64) -> f64 {
        (self.intercept - self.s * (lag as f64).ln()).exp()
    }
}

/// Log-log least squares over the nonzero bins.
pub fn fit_zipf(h: &LagHistogram) -> Result<ZipfFit> {
    let pts: Vec<(f64, f64)> = h.counts.iter().map(|(&l, &c)| (l as f64, c as f64)).collect();
    fit_power_law(&pts)
}

/// [`fit_zipf`] over real-valued `(lag, count)` points; points with a zero
/// count are skipped.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ZipfFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(l, c)| l > 0.0 && c > 0.0)
        .map(|&(l, c)| (l.ln(), c.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::fit("zipf fit needs at least two nonzero bins"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::fit("zipf fit needs at least two distinct lags"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(ZipfFit { s: -slope, intercept: my - slope * mx })
}

/// Empirical CDF over weighted distance samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCDF {
    /// Distinct distances, ascending, with their sample counts.
    samples: Vec<(f64, u64)>,
    total: u64,
}

impl DistanceCDF {
    pub fn from_weighted(mut raw: Vec<(f64, u64)>) -> Result<Self> {
        raw.retain(|&(_, w)| w > 0);
        if raw.is_empty() {
            return Err(Error::domain("no distance samples"));
        }
        if raw.iter().any(|(d, _)| !d.is_finite()) {
            return Err(Error::domain("non-finite distance sample"));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut samples: Vec<(f64, u64)> = Vec::with_capacity(raw.len());
        for (d, w) in raw {
            match samples.last_mut() {
                Some(last) if last.0 == d => last.1 += w,
                _ => samples.push((d, w)),
            }
        }
        let total = samples.iter().map(|s| s.1).sum();
        Ok(Self { samples, total })
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `(km, fraction of samples <= km)` at each distinct distance.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut acc = 0;
        self.samples
            .iter()
            .map(|&(d, w)| {
                acc += w;
                (d, acc as f64 / self.total as f64)
            })
            .collect()
    }

    /// Fraction of samples at or below `km`.
    pub fn at(&self, km: f64) -> f64 {
        let below: u64 = self.samples.iter().take_while(|s| s.0 <= km).map(|s| s.1).sum();
        below as f64 / self.total as f64
    }

    /// Median; the mean of the two middle samples for an even count.
    pub fn median(&self) -> f64 {
        let nth = |k: u64| {
            let mut acc = 0;
            for &(d, w) in &self.samples {
                acc += w;
                if acc > k {
                    return d;
                }
            }
            unreachable!("rank within total")
        };
        if self.total % 2 == 1 {
            nth(self.total / 2)
        } else {
            (nth(self.total / 2 - 1) + nth(self.total / 2)) / 2.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PopularityClass {
    /// Bottom 30% by popularity.
    Unpopular,
    Middle,
    /// Top 2% by popularity.
    Popular,
}

impl PopularityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PopularityClass::Unpopular => "unpopular",
            PopularityClass::Middle => "middle",
            PopularityClass::Popular => "popular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [PopularityClass::Unpopular, PopularityClass::Middle, PopularityClass::Popular]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

pub const UNPOPULAR_FRACTION: f64 = 0.30;
pub const POPULAR_FRACTION: f64 = 0.02;

/// Classes by popularity rank (ties broken by position): the lowest
/// `floor(30%)` are unpopular, the highest `ceil(2%)` popular.
pub fn classify(popularities: &[usize]) -> Vec<PopularityClass> {
    let n = popularities.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (popularities[i], i));
    let n_low = ((n as f64 * UNPOPULAR_FRACTION).floor() as usize).min(n);
    let n_high = ((n as f64 * POPULAR_FRACTION).ceil() as usize).min(n - n_low);
    let mut out = vec![PopularityClass::Middle; n];
    for &i in &order[..n_low] {
        out[i] = PopularityClass::Unpopular;
    }
    for &i in &order[n - n_high..] {
        out[i] = PopularityClass::Popular;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMode {
    /// Every pair of participants in a cascade.
    #[default]
    Pairwise,
    /// Each viewer and the sharer it got the video from.
    ParentChild,
}

fn tree_distances(tree: &PropagationTree, g: &SocialGraph, mode: DistanceMode, out: &mut Vec<(f64, u64)>) {
    match mode {
        DistanceMode::Pairwise => {
            let mut per_region: BTreeMap<u32, u64> = BTreeMap::new();
            for u in tree.participants() {
                *per_region.entry(g.home_region(u)).or_insert(0) += 1;
            }
            let regions: Vec<(u32, u64)> = per_region.into_iter().collect();
            for (i, &(ra, na)) in regions.iter().enumerate() {
                out.push((0.0, na * (na - 1) / 2));
                for &(rb, nb) in &regions[i + 1..] {
                    let d = crate::graph::region_distance(&g.regions()[ra as usize], &g.regions()[rb as usize]);
                    out.push((d, na * nb));
                }
            }
        }
        DistanceMode::ParentChild => {
            for u in tree.participants() {
                if let Some(&p) = tree.parent.get(&u) {
                    out.push((g.user_distance(u, p), 1));
                }
            }
        }
    }
}

/// Distances between participants of the trees in `class`, pooled.
pub fn distance_cdf(
    trees: &[PropagationTree],
    g: &SocialGraph,
    class: Option<PopularityClass>,
    mode: DistanceMode,
) -> Result<DistanceCDF> {
    let pops: Vec<usize> = trees.iter().map(popularity).collect();
    let classes = classify(&pops);
    let mut samples = Vec::new();
    let mut any = false;
    for (tree, c) in trees.iter().zip(classes) {
        if class.is_none_or(|want| want == c) {
            any = true;
            tree_distances(tree, g, mode, &mut samples);
        }
    }
    if !any {
        return Err(Error::domain("no cascades in the requested popularity class"));
    }
    DistanceCDF::from_weighted(samples)
        .map_err(|_| Error::domain("cascades in the requested class have no participant pairs"))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation with average ranks for ties. Fails with a domain
/// error when either input has a single distinct value.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Contract("rank correlation needs at least 3 points".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::domain("rank correlation undefined for constant input"));
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

pub const FIG2_SAMPLE: usize = 50;
/// Smallest cascade with a defined triangle density.
/// Size strata of the clustering scatter sample.
pub const FIG2_STRATA: usize = 10;
pub const FIG2_MIN_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig2Row {
    pub video: VideoId,
    pub size: usize,
    pub clustering: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Result {
    pub rows: Vec<Fig2Row>,
    /// `None` when one of the columns is constant.
    pub rho: Option<f64>,
}

/// Samples up to 50 cascades spread over the size range and correlates size
/// with the clustering of the participants' friendship subgraph.
///
/// Cascades are grouped into `FIG2_STRATA` log-spaced size bins between the
/// smallest and largest eligible size; picks go round-robin over the bins in
/// ascending order, taking a seeded random member of each.
pub fn fig2_experiment(trees: &[PropagationTree], g: &SocialGraph, seed_value: u64) -> Result<Fig2Result> {
    let sized: Vec<(usize, usize)> = trees
        .iter()
        .enumerate()
        .map(|(i, t)| (i, popularity(t)))
        .filter(|&(_, s)| s >= FIG2_MIN_SIZE)
        .collect();
    let distinct: BTreeSet<usize> = sized.iter().map(|&(_, s)| s).collect();
    if distinct.len() < 3 {
        return Err(Error::domain(format!(
            "need cascades of at least 3 distinct sizes (>= {FIG2_MIN_SIZE}), found {}",
            distinct.len()
        )));
    }
    let lo = (*distinct.first().expect("nonempty") as f64).ln();
    let hi = (*distinct.last().expect("nonempty") as f64).ln();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in sized {
        let bin = (((s as f64).ln() - lo) / (hi - lo) * FIG2_STRATA as f64) as usize;
        groups.entry(bin.min(FIG2_STRATA - 1)).or_default().push(i);
    }
    let mut rng = seed::rng_for(seed_value, seed::tag::FIG2, 0);
    let mut queues: Vec<Vec<usize>> = groups
        .into_values()
        .map(|mut v| {
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let mut picked = Vec::new();
    while picked.len() < FIG2_SAMPLE && queues.iter().any(|q| !q.is_empty()) {
        for q in &mut queues {
            if picked.len() == FIG2_SAMPLE {
                break;
            }
            if let Some(i) = q.pop() {
                picked.push(i);
            }
        }
    }
    let rows = picked
        .into_iter()
        .map(|i| {
            let t = &trees[i];
            let members: Vec<UserId> = t.participant_vec();
            Ok(Fig2Row { video: t.video, size: members.len(), clustering: clustering_coefficient(g, &members)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.clustering).collect();
    let rho = match rank_correlation(&xs, &ys) {
        Ok(r) => Some(r),
        Err(Error::Domain(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Fig2Result { rows, rho })
}

pub const METRICS: [&str; 6] =
    ["local_hit_ratio", "peer_ratio", "origin_ratio", "mean_cost", "d2d_delivery_ratio", "mean_reward"];

/// Delivery and prediction metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub strategy: String,
    pub requests: usize,
    pub local_hit_ratio: f64,
    pub peer_ratio: f64,
    pub origin_ratio: f64,
    pub mean_cost: f64,
    pub d2d_delivery_ratio: f64,
    pub mean_reward: f64,
}

impl StrategyReport {
    /// Values in [`METRICS`] order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.local_hit_ratio,
            self.peer_ratio,
            self.origin_ratio,
            self.mean_cost,
            self.d2d_delivery_ratio,
            self.mean_reward,
        ]
    }
}

/// Exact ratio accounting over one scenario's logs. With no requests every
/// ratio is 0. The mean reward is the online predictor's summary if present,
/// else the mean over prediction rows.
pub fn strategy_report(
    strategy: &str,
    delivery: &ScenarioLog<Vec<DeliveryRecord>>,
    predictions: &ScenarioLog<PredictionReport>,
    d2d: &ScenarioLog<Vec<D2dEvent>>,
) -> Result<StrategyReport> {
    for other in [&predictions.scenario_id, &d2d.scenario_id] {
        if *other != delivery.scenario_id {
            return Err(Error::Contract(format!(
                "logs from different scenarios: {} vs {other}",
                delivery.scenario_id
            )));
        }
    }
    let n = delivery.records.len();
    let mut by_source = [0usize; 3];
    let mut cost = 0.0;
    for r in &delivery.records {
        by_source[match r.source {
            ServeSource::LocalEdge => 0,
            ServeSource::Peer => 1,
            ServeSource::Origin => 2,
        }] += 1;
        cost += r.cost;
    }
    let delivered = d2d.records.iter().filter(|e| e.kind == D2dEventKind::Deliver).count();
    let ratio = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let p = &predictions.records;
    let mean_reward = p.summary("online").unwrap_or_else(|| {
        if p.rows.is_empty() {
            0.0
        } else {
            p.rows.iter().map(|r| r.reward).sum::<f64>() / p.rows.len() as f64
        }
    });
    Ok(StrategyReport {
        strategy: strategy.to_owned(),
        requests: n,
        local_hit_ratio: ratio(by_source[0]),
        peer_ratio: ratio(by_source[1]),
        origin_ratio: ratio(by_source[2]),
        mean_cost: if n == 0 { 0.0 } else { cost / n as f64 },
        d2d_delivery_ratio: ratio(delivered),
        mean_reward,
    })
}

pub fn write_fig2(path: &Path, result: &Fig2Result) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["size", "cc"])?;
    for r in &result.rows {
        w.write_record([r.size.to_string(), r.clustering.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf(path: &Path, cdf: &DistanceCDF) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["km", "fraction"])?;
    for (km, f) in cdf.points() {
        w.write_record([km.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fig4(path: &Path, h: &LagHistogram, fit: &ZipfFit) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lag", "count", "fitted"])?;
    for (&lag, &count) in h.counts() {
        w.write_record([lag.to_string(), count.to_string(), fit.fitted(lag).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(path: &Path, rows: &[StrategyReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["strategy", "requests"];
    header.extend(METRICS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.strategy.clone(), r.requests.to_string()];
        rec.extend(r.values().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
