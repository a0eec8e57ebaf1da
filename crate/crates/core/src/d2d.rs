//! Mobility-aware crowdsourced device caching.
//!
//! Users move between regions following a per-user Markov chain with
//! geometric dwell times. To pre-position a video, the operator predicts
//! where and when the currently susceptible users will watch it, then picks
//! carriers whose predicted movements cover as much of that demand as
//! possible (greedy maximum coverage). A carrier that shares a region with a
//! viewer at the viewing slot hands the video over device to device. Random
//! flooding among co-located users is the baseline.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{region_distance, SocialGraph};
use crate::propagation::PropagationState;
use crate::seed::{self, SimRng};
use crate::{RegionId, Slot, UserId, VideoId};

const ROW_TOLERANCE: f64 = 1e-9;

/// Mobility of one user: a Markov chain over a small set of frequented
/// regions and the mean of the geometric dwell time.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMobility {
    /// Sorted regions the chain lives on.
    pub regions: Vec<RegionId>,
    /// Row-stochastic, `regions.len()` square.
    pub transitions: Vec<Vec<f64>>,
    pub dwell_mean: f64,
}

impl UserMobility {
    pub fn new(regions: Vec<RegionId>, transitions: Vec<Vec<f64>>, dwell_mean: f64) -> Result<Self> {
        let k = regions.len();
        if k == 0 {
            return Err(Error::config("mobility chain needs at least one region"));
        }
        if regions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("mobility regions must be sorted and distinct"));
        }
        if transitions.len() != k || transitions.iter().any(|row| row.len() != k) {
            return Err(Error::config("transition matrix shape does not match regions"));
        }
        for (i, row) in transitions.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::config(format!("transition row {i} sums to {sum}")));
            }
        }
        if !(dwell_mean >= 1.0) {
            return Err(Error::config("dwell mean must be >= 1"));
        }
        Ok(Self { regions, transitions, dwell_mean })
    }

    fn index_of(&self, region: RegionId) -> Option<usize> {
        self.regions.binary_search(&region).ok()
    }

    /// Expected dwell rounded to whole slots.
    pub fn expected_dwell(&self) -> Slot {
        (self.dwell_mean.round() as Slot).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityModel {
    users: Vec<UserMobility>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    /// Frequented regions besides home, drawn with weight
    /// `exp(-distance / roam_scale_km)`.
    pub extra_regions: usize,
    pub roam_scale_km: f64,
    /// Extra probability mass every row puts on the home region.
    pub home_pull: f64,
    pub dwell_mean_min: f64,
    pub dwell_mean_max: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            extra_regions: 2,
            roam_scale_km: 30.0,
            home_pull: 0.5,
            dwell_mean_min: 2.0,
            dwell_mean_max: 6.0,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.home_pull) {
            return Err(Error::config("d2d.mobility.home_pull must be in [0,1]"));
        }
        if !(self.roam_scale_km > 0.0) {
            return Err(Error::config("d2d.mobility.roam_scale_km must be > 0"));
        }
        if !(self.dwell_mean_min >= 1.0 && self.dwell_mean_max >= self.dwell_mean_min) {
            return Err(Error::config("d2d.mobility dwell means need 1 <= min <= max"));
        }
        Ok(())
    }
}

impl MobilityModel {
    pub fn new(users: Vec<UserMobility>) -> Self {
        Self { users }
    }

    pub fn user(&self, user: UserId) -> Result<&UserMobility> {
        self.users.get(user as usize).ok_or_else(|| Error::user(user))
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Home-anchored chains: each user frequents its home region plus up to
    /// `extra_regions` others, nearer regions being likelier. Every row puts
    /// `home_pull` on home and spreads the rest evenly over the frequented
    /// regions.
    pub fn generate(g: &SocialGraph, cfg: &MobilityConfig, seed_value: u64) -> Result<Self> {
        cfg.validate()?;
        let users = g
            .users()
            .iter()
            .map(|u| {
                let mut rng = seed::rng_for(seed_value, seed::tag::MOBILITY_MODEL, u64::from(u.id));
                let home = g.region(u.home_region)?;
                let mut pool: Vec<(RegionId, f64)> = g
                    .regions()
                    .iter()
                    .filter(|r| r.id != home.id)
                    .map(|r| (r.id, (-region_distance(home, r) / cfg.roam_scale_km).exp()))
                    .collect();
                let mut support = vec![home.id];
                for _ in 0..cfg.extra_regions.min(pool.len()) {
                    let total: f64 = pool.iter().map(|p| p.1).sum();
                    let mut x = rng.gen::<f64>() * total;
                    let mut pick = pool.len() - 1;
                    for (i, p) in pool.iter().enumerate() {
                        if x < p.1 {
                            pick = i;
                            break;
                        }
                        x -= p.1;
                    }
                    support.push(pool.remove(pick).0);
                }
                support.sort_unstable();
                let k = support.len();
                let home_idx = support.binary_search(&home.id).expect("home in support");
                let row: Vec<f64> = (0..k)
                    .map(|j| (1.0 - cfg.home_pull) / k as f64 + if j == home_idx { cfg.home_pull } else { 0.0 })
                    .collect();
                let dwell = cfg.dwell_mean_min + rng.gen::<f64>() * (cfg.dwell_mean_max - cfg.dwell_mean_min);
                UserMobility::new(support, vec![row; k], dwell)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { users })
    }
}

/// One predicted stay: arrival slot and expected dwell in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictedStay {
    pub region: RegionId,
    pub arrival: Slot,
    pub dwell: Slot,
}

impl PredictedStay {
    pub fn covers(&self, slot: Slot) -> bool {
        slot >= self.arrival && slot < self.arrival + self.dwell
    }
}

/// Most probable sequence of `jumps` transitions out of `start`, ties broken
/// toward the lexicographically smallest path. Returns chain indices
/// (excluding `start`) and the path probability.
fn most_probable_path(m: &UserMobility, start: usize, jumps: usize) -> (Vec<usize>, f64) {
    let k = m.regions.len();
    // best[s][i]: best probability of the remaining s jumps from i.
    let mut best = vec![vec![1.0f64; k]];
    for s in 1..=jumps {
        let prev = &best[s - 1];
        let row: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| m.transitions[i][j] * prev[j]).fold(0.0, f64::max))
            .collect();
        best.push(row);
    }
    let mut path = Vec::with_capacity(jumps);
    let mut at = start;
    let mut prob = 1.0;
    for remaining in (0..jumps).rev() {
        let cont = &best[remaining];
        let mut next = 0;
        let mut top = f64::NEG_INFINITY;
        for (j, (&t, &c)) in m.transitions[at].iter().zip(cont).enumerate() {
            let v = t * c;
            if v > top {
                top = v;
                next = j;
            }
        }
        prob *= m.transitions[at][next];
        path.push(next);
        at = next;
    }
    (path, prob)
}

/// Most probable itinerary of `user` over the next `lookahead` slots,
/// starting in `current` at `now`. Each stay lasts the user's expected dwell;
/// consecutive stays in one region are merged.
pub fn predict_mobility(
    model: &MobilityModel,
    user: UserId,
    current: RegionId,
    now: Slot,
    lookahead: Slot,
) -> Result<Vec<PredictedStay>> {
    if lookahead < 1 {
        return Err(Error::config("mobility lookahead must be >= 1"));
    }
    let m = model.user(user)?;
    let Some(start) = m.index_of(current) else {
        // outside the known chain: no basis for predicting a move
        return Ok(vec![PredictedStay { region: current, arrival: now, dwell: lookahead }]);
    };
    let dwell = m.expected_dwell();
    let stays = lookahead.div_ceil(dwell) as usize;
    let (path, _) = most_probable_path(m, start, stays - 1);

    let mut out: Vec<PredictedStay> = vec![PredictedStay { region: current, arrival: now, dwell }];
    for (step, idx) in path.into_iter().enumerate() {
        let region = m.regions[idx];
        let arrival = now + (step as Slot + 1) * dwell;
        match out.last_mut() {
            Some(last) if last.region == region => last.dwell += dwell,
            _ => out.push(PredictedStay { region, arrival, dwell }),
        }
    }
    Ok(out)
}

/// Region the itinerary places the user in at `slot`, if covered.
pub fn region_at(itinerary: &[PredictedStay], slot: Slot) -> Option<RegionId> {
    itinerary.iter().find(|s| s.covers(slot)).map(|s| s.region)
}

/// Realised movements: per user, contiguous `[enter, leave)` stays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobilityTrace {
    stays: Vec<Vec<TraceStay>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceStay {
    pub region: RegionId,
    pub enter: Slot,
    pub leave: Slot,
}

impl MobilityTrace {
    /// Validates contiguity: every user's first stay starts at 0 and each
    /// stay starts where the previous one left.
    pub fn new(stays: Vec<Vec<TraceStay>>) -> Result<Self> {
        for (u, list) in stays.iter().enumerate() {
            let mut at = 0;
            for s in list {
                if s.enter != at || s.leave <= s.enter {
                    return Err(Error::Integrity(format!("user {u} trace is not contiguous at slot {at}")));
                }
                at = s.leave;
            }
        }
        Ok(Self { stays })
    }

    /// Samples every user's movements over `[0, horizon)`, starting at home.
    pub fn simulate(model: &MobilityModel, g: &SocialGraph, horizon: Slot, seed_value: u64) -> Result<Self> {
        let mut stays = Vec::with_capacity(model.n_users());
        for user in g.users() {
            let m = model.user(user.id)?;
            let mut rng = seed::rng_for(seed_value, seed::tag::MOBILITY_TRACE, u64::from(user.id));
            let mut list = Vec::new();
            let mut region = user.home_region;
            let mut t = 0;
            while t < horizon {
                let d = geometric(&mut rng, m.dwell_mean);
                let leave = (t + d).min(horizon);
                list.push(TraceStay { region, enter: t, leave });
                t = leave;
                if let Some(i) = m.index_of(region) {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut next = m.regions.len() - 1;
                    for (j, p) in m.transitions[i].iter().enumerate() {
                        acc += p;
                        if u < acc {
                            next = j;
                            break;
                        }
                    }
                    region = m.regions[next];
                }
            }
            stays.push(list);
        }
        Self::new(stays)
    }

    pub fn stays(&self, user: UserId) -> &[TraceStay] {
        self.stays.get(user as usize).map_or(&[], Vec::as_slice)
    }

    pub fn n_users(&self) -> usize {
        self.stays.len()
    }

    pub fn region_of(&self, user: UserId, slot: Slot) -> Option<RegionId> {
        let list = self.stays.get(user as usize)?;
        let i = list.partition_point(|s| s.leave <= slot);
        list.get(i).filter(|s| s.enter <= slot).map(|s| s.region)
    }

    /// Every user's region at `slot`; users past the end of their trace are
    /// left at their last region.
    pub fn positions(&self, slot: Slot) -> Vec<RegionId> {
        self.stays
            .iter()
            .enumerate()
            .map(|(u, list)| {
                self.region_of(u as UserId, slot)
                    .or_else(|| list.last().map(|s| s.region))
                    .unwrap_or(0)
            })
            .collect()
    }
}

/// Geometric dwell on `{1, 2, ...}` with the given mean.
fn geometric(rng: &mut SimRng, mean: f64) -> Slot {
    let p = 1.0 / mean;
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = 1.0 - rng.gen::<f64>();
    1 + (u.ln() / (1.0 - p).ln()).floor() as Slot
}

/// A susceptible user expected to watch at `window` while in `region`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedRecipient {
    pub user: UserId,
    pub region: RegionId,
    pub window: Slot,
    pub weight: f64,
}

/// Expected recipient mass per `(region, window)`.
pub type RecipientMap = BTreeMap<(RegionId, Slot), f64>;

pub fn aggregate(recipients: &[PredictedRecipient]) -> RecipientMap {
    let mut map = RecipientMap::new();
    for r in recipients {
        *map.entry((r.region, r.window)).or_insert(0.0) += r.weight;
    }
    map
}

/// Per-slot cache of predicted itineraries, each starting at `now` from the
/// user's current region and covering `lookahead` slots.
#[derive(Debug)]
pub struct Itineraries<'a> {
    model: &'a MobilityModel,
    positions: &'a [RegionId],
    now: Slot,
    lookahead: Slot,
    cache: Vec<Option<Vec<PredictedStay>>>,
}

impl<'a> Itineraries<'a> {
    pub fn new(model: &'a MobilityModel, positions: &'a [RegionId], now: Slot, lookahead: Slot) -> Self {
        Self { model, positions, now, lookahead, cache: vec![None; positions.len()] }
    }

    pub fn now(&self) -> Slot {
        self.now
    }

    pub fn lookahead(&self) -> Slot {
        self.lookahead
    }

    pub fn get(&mut self, user: UserId) -> Result<&[PredictedStay]> {
        let i = user as usize;
        let current = *self.positions.get(i).ok_or_else(|| Error::user(user))?;
        if self.cache[i].is_none() {
            self.cache[i] = Some(predict_mobility(self.model, user, current, self.now, self.lookahead)?);
        }
        Ok(self.cache[i].as_deref().expect("filled above"))
    }
}

/// Where and when each currently susceptible user of a cascade will act.
///
/// The window is the user's scheduled activation slot (the operator sees who
/// has been exposed, not whether they will watch), the region comes from the
/// user's predicted itinerary, and each recipient weighs `p_watch`.
/// Activations outside the itinerary horizon are skipped.
pub fn predict_recipients(
    state: &PropagationState,
    itineraries: &mut Itineraries<'_>,
    p_watch: f64,
) -> Result<Vec<PredictedRecipient>> {
    let (now, end) = (itineraries.now(), itineraries.now() + itineraries.lookahead());
    let mut out = Vec::new();
    for (user, _, activation) in state.susceptible() {
        if activation < now || activation >= end {
            continue;
        }
        let it = itineraries.get(user)?;
        let region = region_at(it, activation).expect("itinerary covers the lookahead");
        out.push(PredictedRecipient { user, region, window: activation, weight: p_watch });
    }
    Ok(out)
}

/// A user that could carry a video, with the `(region, slot)` cells it is
/// predicted to occupy.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub user: UserId,
    pub presence: BTreeSet<(RegionId, Slot)>,
    pub has_capacity: bool,
    /// Relay operations the device can still commit to this video; caps the
    /// mass it is credited with. Unbounded by default.
    pub spare: f64,
}

impl Candidate {
    pub fn from_itinerary(user: UserId, itinerary: &[PredictedStay], has_capacity: bool) -> Self {
        let presence = itinerary
            .iter()
            .flat_map(|s| (s.arrival..s.arrival + s.dwell).map(move |t| (s.region, t)))
            .collect();
        Self { user, presence, has_capacity, spare: f64::INFINITY }
    }

    pub fn with_spare(mut self, spare: f64) -> Self {
        self.spare = spare;
        self
    }

    /// Uncovered cells this candidate would take, in cell order, until its
    /// spare relays are committed.
    fn take<'a>(&'a self, uncovered: &'a RecipientMap) -> impl Iterator<Item = (&'a (RegionId, Slot), f64)> + 'a {
        let mut left = self.spare;
        self.presence.iter().filter_map(move |k| {
            let mass = *uncovered.get(k)?;
            if left <= 0.0 {
                return None;
            }
            left -= mass;
            Some((k, mass))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRecord {
    pub carrier: UserId,
    pub region: RegionId,
    pub window: Slot,
    pub mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CarrierAssignment {
    pub video: VideoId,
    /// In selection order.
    pub carriers: Vec<UserId>,
    pub coverage: Vec<CoverageRecord>,
    /// Set when recipients existed but no candidate had room for the video.
    pub no_capacity: bool,
}

impl CarrierAssignment {
    pub fn covered_mass(&self) -> f64 {
        self.coverage.iter().map(|c| c.mass).sum()
    }
}

/// Greedy weighted maximum coverage: repeatedly take the candidate covering
/// the most still-uncovered recipient mass (ties to the lower user id) until
/// `budget` carriers are chosen or nothing more can be covered. A candidate's
/// credit is capped by its `spare` relays.
pub fn select_carriers(
    video: VideoId,
    recipients: &RecipientMap,
    candidates: &[Candidate],
    budget: usize,
) -> CarrierAssignment {
    let mut out = CarrierAssignment { video, ..Default::default() };
    if recipients.is_empty() || budget == 0 {
        return out;
    }
    let mut pool: Vec<&Candidate> = candidates.iter().filter(|c| c.has_capacity && c.spare > 0.0).collect();
    if pool.is_empty() {
        out.no_capacity = true;
        return out;
    }
    pool.sort_by_key(|c| c.user);
    let mut uncovered = recipients.clone();
    while out.carriers.len() < budget && !uncovered.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in pool.iter().enumerate() {
            let gain: f64 = c.take(&uncovered).map(|(_, m)| m).sum::<f64>().min(c.spare);
            if gain > 0.0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        let chosen = pool.remove(i);
        let taken: Vec<((RegionId, Slot), f64)> = chosen.take(&uncovered).map(|(k, m)| (*k, m)).collect();
        for (key, mass) in taken {
            uncovered.remove(&key);
            out.coverage.push(CoverageRecord { carrier: chosen.user, region: key.0, window: key.1, mass });
        }
        out.carriers.push(chosen.user);
    }
    out
}

/// Exhaustive optimum of the weighted maximum coverage instance; only for
/// small candidate sets.
pub fn optimal_coverage(recipients: &RecipientMap, candidates: &[Candidate], budget: usize) -> f64 {
    let pool: Vec<&Candidate> = candidates.iter().filter(|c| c.has_capacity).collect();
    assert!(pool.len() <= 20, "exhaustive search over {} candidates", pool.len());
    let mut best = 0.0f64;
    for mask in 0u32..(1 << pool.len()) {
        if mask.count_ones() as usize > budget {
            continue;
        }
        let covered: BTreeSet<&(RegionId, Slot)> = pool
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .flat_map(|(_, c)| c.presence.iter())
            .collect();
        let mass: f64 = covered.into_iter().filter_map(|k| recipients.get(k)).sum();
        best = best.max(mass);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum D2dStrategy {
    Off,
    Flood,
    Coverage,
}

impl D2dStrategy {
    pub const ALL: [D2dStrategy; 3] = [D2dStrategy::Off, D2dStrategy::Flood, D2dStrategy::Coverage];

    pub fn as_str(self) -> &'static str {
        match self {
            D2dStrategy::Off => "off",
            D2dStrategy::Flood => "flood",
            D2dStrategy::Coverage => "coverage",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

/// Storage and relay budget of one device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceCache {
    pub user: UserId,
    pub capacity: u64,
    pub energy_budget: u64,
    relays: u64,
    held: BTreeMap<VideoId, (u64, Slot)>,
    used: u64,
}

impl DeviceCache {
    pub fn new(user: UserId, capacity: u64, energy_budget: u64) -> Self {
        Self { user, capacity, energy_budget, relays: 0, held: BTreeMap::new(), used: 0 }
    }

    pub fn holds(&self, video: VideoId) -> bool {
        self.held.contains_key(&video)
    }

    pub fn can_hold(&self, size: u64) -> bool {
        self.used + size <= self.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn relays(&self) -> u64 {
        self.relays
    }

    pub fn energy_left(&self) -> u64 {
        self.energy_budget.saturating_sub(self.relays)
    }

    pub fn has_energy(&self) -> bool {
        self.relays < self.energy_budget
    }

    /// Stores a copy; false if already held or out of room.
    pub fn store(&mut self, video: VideoId, size: u64, slot: Slot) -> bool {
        if self.holds(video) || !self.can_hold(size) {
            return false;
        }
        self.held.insert(video, (size, slot));
        self.used += size;
        true
    }

    /// Spends one relay operation; false when the budget is exhausted.
    pub fn relay(&mut self) -> bool {
        if !self.has_energy() {
            return false;
        }
        self.relays += 1;
        true
    }

    /// Drops copies stored more than `retention` slots ago and returns
    /// their video ids.
    pub fn expire(&mut self, slot: Slot, retention: Slot) -> Vec<VideoId> {
        let mut dropped = Vec::new();
        self.held.retain(|&v, &mut (_, at)| {
            let keep = slot.saturating_sub(at) <= retention;
            if !keep {
                dropped.push(v);
            }
            keep
        });
        self.used = self.held.values().map(|h| h.0).sum();
        dropped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum D2dEventKind {
    /// The operator pushed a copy to a selected carrier.
    Carry,
    /// A holder relayed a copy to a co-located device.
    Flood,
    /// A viewer got the video from a device at viewing time.
    Deliver,
}

impl D2dEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            D2dEventKind::Carry => "CARRY",
            D2dEventKind::Flood => "FLOOD",
            D2dEventKind::Deliver => "DELIVER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "CARRY" => D2dEventKind::Carry,
            "FLOOD" => D2dEventKind::Flood,
            "DELIVER" => D2dEventKind::Deliver,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct D2dEvent {
    pub slot: Slot,
    pub video: VideoId,
    /// Relaying device; `None` for operator pushes.
    pub from: Option<UserId>,
    pub to: UserId,
    pub region: RegionId,
    pub kind: D2dEventKind,
}

/// Relays `video` from `holder` to `min(fanout, |eligible|)` random users
/// among `nearby` that do not hold it yet and have room. Each copy costs the
/// holder one relay; `max_copies` caps the total.
#[allow(clippy::too_many_arguments)]
pub fn flood_baseline(
    slot: Slot,
    video: VideoId,
    size: u64,
    holder: UserId,
    region: RegionId,
    nearby: &[UserId],
    fanout: usize,
    max_copies: usize,
    caches: &mut [DeviceCache],
    rng: &mut SimRng,
) -> Vec<D2dEvent> {
    let eligible: Vec<UserId> = nearby
        .iter()
        .copied()
        .filter(|&u| u != holder && !caches[u as usize].holds(video) && caches[u as usize].can_hold(size))
        .collect();
    let n = fanout.min(eligible.len()).min(max_copies);
    if n == 0 {
        return Vec::new();
    }
    let mut picks: Vec<usize> = sample(rng, eligible.len(), n).into_vec();
    picks.sort_unstable();
    let mut events = Vec::new();
    for i in picks {
        let to = eligible[i];
        if !caches[holder as usize].relay() {
            break;
        }
        caches[to as usize].store(video, size, slot);
        events.push(D2dEvent { slot, video, from: Some(holder), to, region, kind: D2dEventKind::Flood });
    }
    events
}

/// Device-to-device deliveries for this slot's viewing requests.
///
/// `requests` are `(viewer, video)` pairs in processing order. A viewer that
/// already holds the video serves itself; otherwise the lowest-id holder in
/// the same region with relay budget left hands it over. `holders` lists the
/// devices holding each video.
pub fn d2d_step(
    slot: Slot,
    positions: &[RegionId],
    requests: &[(UserId, VideoId)],
    holders: &BTreeMap<VideoId, BTreeSet<UserId>>,
    caches: &mut [DeviceCache],
) -> Vec<D2dEvent> {
    let mut out = Vec::new();
    for &(viewer, video) in requests {
        let region = positions[viewer as usize];
        if caches[viewer as usize].holds(video) {
            out.push(D2dEvent { slot, video, from: Some(viewer), to: viewer, region, kind: D2dEventKind::Deliver });
            continue;
        }
        let Some(set) = holders.get(&video) else { continue };
        let carrier = set.iter().copied().find(|&c| {
            c != viewer && positions[c as usize] == region && caches[c as usize].holds(video) && caches[c as usize].has_energy()
        });
        if let Some(c) = carrier {
            caches[c as usize].relay();
            out.push(D2dEvent { slot, video, from: Some(c), to: viewer, region, kind: D2dEventKind::Deliver });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct D2dConfig {
    pub strategy: D2dStrategy,
    /// Device copies per video (carriers for coverage, relayed copies for
    /// flooding).
    pub replica_budget: usize,
    pub fanout: usize,
    pub energy_budget: u64,
    pub device_capacity: u64,
    pub retention: Slot,
    pub lookahead: Slot,
    pub mobility: MobilityConfig,
}

impl Default for D2dConfig {
    fn default() -> Self {
        Self {
            strategy: D2dStrategy::Off,
            replica_budget: 3,
            fanout: 2,
            energy_budget: 30,
            device_capacity: 1,
            retention: 48,
            lookahead: 24,
            mobility: MobilityConfig::default(),
        }
    }
}

impl D2dConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead < 1 {
            return Err(Error::config("d2d.lookahead must be >= 1"));
        }
        self.mobility.validate()
    }
}
