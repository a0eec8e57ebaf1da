//! Hybrid edge-cloud and peer-assisted delivery overlay.
//!
//! Each region runs an edge server with a storage budget (in video size
//! units) and a per-slot request budget. Requests are served from the local
//! edge when possible, then from a peer in the same region, and otherwise
//! from the origin.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Region;
use crate::{RegionId, Slot, UserId, VideoId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ServeSource {
    LocalEdge,
    Peer,
    Origin,
}

impl ServeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ServeSource::LocalEdge => "LOCAL_EDGE",
            ServeSource::Peer => "PEER",
            ServeSource::Origin => "ORIGIN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "LOCAL_EDGE" => ServeSource::LocalEdge,
            "PEER" => ServeSource::Peer,
            "ORIGIN" => ServeSource::Origin,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostUnits {
    pub local_edge: f64,
    pub peer: f64,
    pub origin: f64,
}

impl Default for CostUnits {
    fn default() -> Self {
        Self {
            local_edge: 1.0,
            peer: 2.0,
            origin: 10.0,
        }
    }
}

impl CostUnits {
    pub fn of(&self, source: ServeSource) -> f64 {
        match source {
            ServeSource::LocalEdge => self.local_edge,
            ServeSource::Peer => self.peer,
            ServeSource::Origin => self.origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOutcome {
    pub source: ServeSource,
    pub cost_units: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestEvent {
    pub slot: Slot,
    pub user: UserId,
    pub video: VideoId,
    /// Region the request is served in (the user's home region).
    pub region: RegionId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CacheEntry {
    size: u64,
    last_served: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeServer {
    pub region: RegionId,
    pub storage_slots: u64,
    pub bandwidth_units: u64,
    cache: BTreeMap<VideoId, CacheEntry>,
    used: u64,
    served_slot: Slot,
    served: u64,
}

impl EdgeServer {
    pub fn new(region: RegionId, storage_slots: u64, bandwidth_units: u64) -> Self {
        Self {
            region,
            storage_slots,
            bandwidth_units,
            cache: BTreeMap::new(),
            used: 0,
            served_slot: 0,
            served: 0,
        }
    }

    pub fn for_region(r: &Region) -> Self {
        Self::new(r.id, r.storage_slots, r.bandwidth_units)
    }

    pub fn holds(&self, video: VideoId) -> bool {
        self.cache.contains_key(&video)
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn free(&self) -> u64 {
        self.storage_slots - self.used
    }

    pub fn cached(&self) -> impl Iterator<Item = VideoId> + '_ {
        self.cache.keys().copied()
    }

    /// Requests served during `slot` so far.
    pub fn served_in(&self, slot: Slot) -> u64 {
        if self.served_slot == slot {
            self.served
        } else {
            0
        }
    }

    pub fn has_bandwidth(&self, slot: Slot) -> bool {
        self.served_in(slot) < self.bandwidth_units
    }

    /// Serves one request for a cached video, consuming a bandwidth unit.
    /// Returns false when the video is absent or the slot budget is spent.
    pub fn try_serve(&mut self, video: VideoId, slot: Slot) -> bool {
        if !self.holds(video) || !self.has_bandwidth(slot) {
            return false;
        }
        if self.served_slot != slot {
            self.served_slot = slot;
            self.served = 0;
        }
        self.served += 1;
        if let Some(e) = self.cache.get_mut(&video) {
            e.last_served = slot;
        }
        true
    }

    /// Frees space until at least `needed` units are available, evicting the
    /// least recently served videos first (ties to the lower id) and never
    /// `protect`.
    pub fn evict(&mut self, needed: u64, _slot: Slot, protect: Option<VideoId>) -> Result<Vec<VideoId>> {
        if needed > self.storage_slots {
            return Err(Error::Capacity {
                needed,
                capacity: self.storage_slots,
            });
        }
        let mut evicted = Vec::new();
        while self.free() < needed {
            let victim = self
                .cache
                .iter()
                .filter(|(v, _)| Some(**v) != protect)
                .min_by_key(|(v, e)| (e.last_served, **v))
                .map(|(v, _)| *v);
            let Some(victim) = victim else {
                return Err(Error::Capacity {
                    needed,
                    capacity: self.storage_slots,
                });
            };
            let entry = self.cache.remove(&victim).expect("victim is cached");
            self.used -= entry.size;
            evicted.push(victim);
        }
        Ok(evicted)
    }

    /// Caches `video`, evicting as needed. The new entry counts as served at
    /// `slot`. Returns the evicted ids.
    pub fn insert(&mut self, video: VideoId, size: u64, slot: Slot) -> Result<Vec<VideoId>> {
        if self.holds(video) {
            return Ok(Vec::new());
        }
        let evicted = self.evict(size, slot, Some(video))?;
        self.cache.insert(video, CacheEntry { size, last_served: slot });
        self.used += size;
        Ok(evicted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementAction {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementChange {
    pub slot: Slot,
    pub video: VideoId,
    pub region: RegionId,
    pub action: PlacementAction,
}

/// Which regions hold which videos, with an append-only change history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicaMap {
    placements: BTreeMap<VideoId, BTreeSet<RegionId>>,
    history: Vec<PlacementChange>,
}

impl ReplicaMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ensure_entry(&mut self, video: VideoId) {
        self.placements.entry(video).or_default();
    }

    pub fn regions(&self, video: VideoId) -> impl Iterator<Item = RegionId> + '_ {
        self.placements.get(&video).into_iter().flatten().copied()
    }

    pub fn replica_count(&self, video: VideoId) -> usize {
        self.placements.get(&video).map_or(0, BTreeSet::len)
    }

    pub fn contains(&self, video: VideoId, region: RegionId) -> bool {
        self.placements.get(&video).is_some_and(|s| s.contains(&region))
    }

    pub fn history(&self) -> &[PlacementChange] {
        &self.history
    }

    fn record(&mut self, slot: Slot, video: VideoId, region: RegionId, action: PlacementAction) {
        self.history.push(PlacementChange { slot, video, region, action });
    }

    pub fn add(&mut self, slot: Slot, video: VideoId, region: RegionId) {
        if self.placements.entry(video).or_default().insert(region) {
            self.record(slot, video, region, PlacementAction::Add);
        }
    }

    pub fn remove(&mut self, slot: Slot, video: VideoId, region: RegionId) {
        if self.placements.get_mut(&video).is_some_and(|s| s.remove(&region)) {
            self.record(slot, video, region, PlacementAction::Remove);
        }
    }
}

/// Geographic influence index `c1 · ln(c2 · s_prev)`; 0 for a video that has
/// not propagated yet (`s_prev = 0`).
pub fn geo_influence_index(s_prev: usize, c1: f64, c2: f64) -> Result<f64> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::config("influence index coefficients c1, c2 must be > 0"));
    }
    if s_prev == 0 {
        return Ok(0.0);
    }
    Ok(c1 * (c2 * s_prev as f64).ln())
}

/// Regions to add for `video` given its influence index `g`.
///
/// With `Θ` the number of regions already holding the video, nothing is
/// added unless `ceil(g) > Θ`; then the `ceil(g) - Θ` uncached regions with
/// the most susceptible users (`demand[region]`) are chosen, ties to the
/// lower region id.
pub fn replication_decision(video: VideoId, g: f64, map: &ReplicaMap, demand: &[usize]) -> Vec<RegionId> {
    let theta = map.replica_count(video);
    let target = if g.is_finite() && g > 0.0 { g.ceil() as usize } else { 0 };
    if target <= theta {
        return Vec::new();
    }
    let mut candidates: Vec<(usize, RegionId)> = demand
        .iter()
        .enumerate()
        .map(|(r, &d)| (d, r as RegionId))
        .filter(|&(_, r)| !map.contains(video, r))
        .collect();
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    candidates.into_iter().take(target - theta).map(|(_, r)| r).collect()
}

/// Per-region edge servers plus the replica map kept consistent with them.
#[derive(Debug, Clone)]
pub struct EdgeNetwork {
    pub servers: Vec<EdgeServer>,
    pub map: ReplicaMap,
}

impl EdgeNetwork {
    pub fn new(regions: &[Region]) -> Self {
        Self {
            servers: regions.iter().map(EdgeServer::for_region).collect(),
            map: ReplicaMap::new(),
        }
    }

    /// Caches `video` in `region`, dropping evicted videos from the map.
    /// Returns false when the video cannot fit on that server at all.
    pub fn place(&mut self, slot: Slot, video: VideoId, size: u64, region: RegionId) -> Result<bool> {
        let server = self
            .servers
            .get_mut(region as usize)
            .ok_or_else(|| Error::region(region))?;
        if size > server.storage_slots {
            return Ok(false);
        }
        let evicted = server.insert(video, size, slot)?;
        for v in evicted {
            self.map.remove(slot, v, region);
        }
        self.map.add(slot, video, region);
        Ok(true)
    }

    /// Runs [`replication_decision`] and applies its additions.
    pub fn replicate(&mut self, slot: Slot, video: VideoId, size: u64, g: f64, demand: &[usize]) -> Result<Vec<RegionId>> {
        self.map.ensure_entry(video);
        let additions = replication_decision(video, g, &self.map, demand);
        let mut placed = Vec::with_capacity(additions.len());
        for r in additions {
            if self.place(slot, video, size, r)? {
                placed.push(r);
            }
        }
        Ok(placed)
    }
}

/// Device copies held by viewers for peer-assisted serving.
#[derive(Debug, Clone, Default)]
pub struct PeerIndex {
    enabled: bool,
    retention: Slot,
    /// (region, video) -> viewer -> slot watched.
    copies: BTreeMap<(RegionId, VideoId), BTreeMap<UserId, Slot>>,
    last_upload: BTreeMap<UserId, Slot>,
}

impl PeerIndex {
    pub fn new(enabled: bool, retention: Slot) -> Self {
        Self {
            enabled,
            retention,
            ..Default::default()
        }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn record_view(&mut self, user: UserId, region: RegionId, video: VideoId, slot: Slot) {
        if self.enabled {
            self.copies.entry((region, video)).or_default().insert(user, slot);
        }
    }

    /// Finds the lowest-id same-region holder with a fresh copy that has not
    /// uploaded this slot, and books the upload.
    pub fn try_serve(&mut self, req: &RequestEvent) -> Option<UserId> {
        if !self.enabled {
            return None;
        }
        let holders = self.copies.get_mut(&(req.region, req.video))?;
        let retention = self.retention;
        holders.retain(|_, &mut watched| req.slot.saturating_sub(watched) <= retention);
        let peer = holders
            .keys()
            .copied()
            .find(|&u| u != req.user && self.last_upload.get(&u) != Some(&req.slot))?;
        self.last_upload.insert(peer, req.slot);
        Some(peer)
    }
}

/// Serves a request: local edge, then a peer, then the origin.
pub fn serve(req: &RequestEvent, net: &mut EdgeNetwork, peers: &mut PeerIndex, cost: &CostUnits) -> ServeOutcome {
    let local = net
        .servers
        .get_mut(req.region as usize)
        .is_some_and(|server| server.try_serve(req.video, req.slot));
    let source = if local {
        debug_assert!(net.map.contains(req.video, req.region));
        ServeSource::LocalEdge
    } else if peers.try_serve(req).is_some() {
        ServeSource::Peer
    } else {
        ServeSource::Origin
    };
    peers.record_view(req.user, req.region, req.video, req.slot);
    ServeOutcome {
        source,
        cost_units: cost.of(source),
    }
}

/// Least-squares fit of `regions = c1·ln(s) + c1·ln(c2)` over
/// `(s_prev, observed regions)` samples.
pub fn fit_c1_c2(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::fit("need at least two samples"));
    }
    if samples.iter().any(|&(s, y)| !(s >= 1.0) || !(y >= 1.0)) {
        return Err(Error::fit("samples need s_prev >= 1 and region count >= 1"));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|&(s, _)| s.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::fit("all samples share the same s_prev"));
    }
    let sxy: f64 = xs.iter().zip(samples).map(|(x, &(_, y))| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::fit(format!("non-positive slope {slope}")));
    }
    let intercept = my - slope * mx;
    Ok((slope, (intercept / slope).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicationStrategy {
    /// Origin region only.
    Static,
    /// Origin region, then grown by the geographic influence index.
    InfluenceIndex,
    /// Every region the cascade will ever reach, placed at initiation.
    Oracle,
}

impl ReplicationStrategy {
    pub const ALL: [ReplicationStrategy; 3] = [
        ReplicationStrategy::Static,
        ReplicationStrategy::InfluenceIndex,
        ReplicationStrategy::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReplicationStrategy::Static => "static",
            ReplicationStrategy::InfluenceIndex => "influence-index",
            ReplicationStrategy::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}
