//! Extended SIR propagation of a single video over the social graph.
//!
//! A user moves through at most three states per video:
//!
//! ```text
//! SAFE -> SUSCEPTIBLE -> INFECTED -> INFECTIOUS
//!                    \-> IMMUNE   \-> RECOVERED
//! ```
//!
//! The initiator starts INFECTIOUS and its friends SUSCEPTIBLE. Each
//! susceptible user acts once, at an activation slot drawn from the re-share
//! lag law after the exposure; watching and sharing resolve within that slot.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::seed::SimRng;
use crate::{RegionId, Slot, UserId, VideoId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Video {
    pub id: VideoId,
    pub t_init: Slot,
    pub initiator: UserId,
    pub size_units: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserState {
    Safe,
    Susceptible,
    Infected,
    Immune,
    Recovered,
    Infectious,
}

impl UserState {
    pub const ALL: [UserState; 6] = [
        UserState::Safe,
        UserState::Susceptible,
        UserState::Infected,
        UserState::Immune,
        UserState::Recovered,
        UserState::Infectious,
    ];

    fn index(self) -> usize {
        self as usize
    }

    /// The only transitions the model allows.
    pub fn can_transition_to(self, next: UserState) -> bool {
        use UserState::*;
        matches!(
            (self, next),
            (Safe, Susceptible)
                | (Susceptible, Infected)
                | (Susceptible, Immune)
                | (Infected, Infectious)
                | (Infected, Recovered)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserVideoState {
    pub state: UserState,
    pub since: Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationParams {
    /// Probability that a susceptible user watches when it activates.
    pub p_watch: f64,
    /// Probability that a viewer re-shares.
    pub p_share: f64,
    /// Zipf shape of the re-share lag.
    pub lag_shape: f64,
    /// Largest lag, in slots.
    pub lag_max: u64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            p_watch: 0.9,
            p_share: 0.25,
            lag_shape: 1.5070,
            lag_max: 48,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_watch) {
            return Err(Error::config("propagation.p_watch must be in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.p_share) {
            return Err(Error::config("propagation.p_share must be in [0,1]"));
        }
        if !(self.lag_shape.is_finite() && self.lag_shape > 1.0) {
            return Err(Error::config("propagation.lag_shape must be > 1"));
        }
        if self.lag_max < 1 {
            return Err(Error::config("propagation.lag_max must be >= 1"));
        }
        Ok(())
    }
}

/// Truncated zipf sampler over lags `1..=lag_max` with
/// `P(L = l) ∝ l^-shape`, by inversion of a precomputed CDF table.
#[derive(Debug, Clone)]
pub struct LagSampler {
    cdf: Vec<f64>,
}

impl LagSampler {
    pub fn new(params: &PropagationParams) -> Result<Self> {
        params.validate()?;
        let weights: Vec<f64> = (1..=params.lag_max)
            .map(|l| (l as f64).powf(-params.lag_shape))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        *cdf.last_mut().expect("lag_max >= 1") = 1.0;
        Ok(Self { cdf })
    }

    pub fn lag_max(&self) -> u64 {
        self.cdf.len() as u64
    }

    /// `P(L <= lag)`.
    pub fn cdf(&self, lag: u64) -> f64 {
        match lag {
            0 => 0.0,
            l if l >= self.lag_max() => 1.0,
            l => self.cdf[l as usize - 1],
        }
    }

    pub fn pmf(&self, lag: u64) -> f64 {
        if lag == 0 {
            0.0
        } else {
            self.cdf(lag) - self.cdf(lag - 1)
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> u64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        (idx.min(self.cdf.len() - 1) + 1) as u64
    }
}

/// Lag mass observed within the first day for real re-share traces.
pub const DAY_MASS_TARGET: f64 = 0.95;
pub const DAY_SLOTS: u64 = 24;

/// Whether `(lag_shape, lag_max)` puts at least 95% of re-shares within the
/// first 24 slots. The simulator runs either way; analyses report the flag.
pub fn lag_config_consistent(params: &PropagationParams) -> Result<bool> {
    Ok(LagSampler::new(params)?.cdf(DAY_SLOTS) >= DAY_MASS_TARGET)
}

/// Draws one re-share lag. Builds the CDF table on every call; hold a
/// [`LagSampler`] when drawing repeatedly.
pub fn sample_reshare_lag(params: &PropagationParams, rng: &mut SimRng) -> Result<u64> {
    Ok(LagSampler::new(params)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    Init,
    Expose,
    Watch,
    Immune,
    Share,
    Recover,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Init => "INIT",
            EventKind::Expose => "EXPOSE",
            EventKind::Watch => "WATCH",
            EventKind::Immune => "IMMUNE",
            EventKind::Share => "SHARE",
            EventKind::Recover => "RECOVER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "INIT" => EventKind::Init,
            "EXPOSE" => EventKind::Expose,
            "WATCH" => EventKind::Watch,
            "IMMUNE" => EventKind::Immune,
            "SHARE" => EventKind::Share,
            "RECOVER" => EventKind::Recover,
            _ => return None,
        })
    }

    /// `(from, to)` state change recorded by this event.
    pub fn transition(self) -> (UserState, UserState) {
        use UserState::*;
        match self {
            EventKind::Init => (Safe, Infectious),
            EventKind::Expose => (Safe, Susceptible),
            EventKind::Watch => (Susceptible, Infected),
            EventKind::Immune => (Susceptible, Immune),
            EventKind::Share => (Infected, Infectious),
            EventKind::Recover => (Infected, Recovered),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PropagationEvent {
    pub slot: Slot,
    pub video: VideoId,
    pub user: UserId,
    pub kind: EventKind,
    /// Sharer whose post exposed `user`; `None` for the initiator.
    pub parent: Option<UserId>,
}

/// Who shared a video to whom, and when.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagationTree {
    pub video: VideoId,
    pub root: UserId,
    pub t_init: Slot,
    /// Last slot whose events are reflected in the tree.
    pub observed_until: Slot,
    pub parent: BTreeMap<UserId, UserId>,
    /// Slot at which each spreader shared (the root at `t_init`).
    pub share_time: BTreeMap<UserId, Slot>,
    /// Slot at which each non-root participant watched.
    pub view_time: BTreeMap<UserId, Slot>,
    pub spreaders: BTreeSet<UserId>,
    pub receivers: BTreeSet<UserId>,
    events: Vec<PropagationEvent>,
}

impl PropagationTree {
    pub fn new(video: &Video) -> Self {
        let mut tree = Self {
            video: video.id,
            root: video.initiator,
            t_init: video.t_init,
            observed_until: video.t_init,
            parent: BTreeMap::new(),
            share_time: BTreeMap::new(),
            view_time: BTreeMap::new(),
            spreaders: BTreeSet::new(),
            receivers: BTreeSet::new(),
            events: Vec::new(),
        };
        tree.apply(PropagationEvent {
            slot: video.t_init,
            video: video.id,
            user: video.initiator,
            kind: EventKind::Init,
            parent: None,
        });
        tree
    }

    /// Records one event. Events must arrive in slot order.
    pub fn apply(&mut self, ev: PropagationEvent) {
        debug_assert!(self.events.last().is_none_or(|last| last.slot <= ev.slot));
        match ev.kind {
            EventKind::Init => {
                self.spreaders.insert(ev.user);
                self.share_time.insert(ev.user, ev.slot);
            }
            EventKind::Watch => {
                self.view_time.insert(ev.user, ev.slot);
                if let Some(p) = ev.parent {
                    self.parent.insert(ev.user, p);
                }
            }
            EventKind::Share => {
                self.spreaders.insert(ev.user);
                self.share_time.insert(ev.user, ev.slot);
            }
            EventKind::Recover => {
                self.receivers.insert(ev.user);
            }
            EventKind::Expose | EventKind::Immune => {}
        }
        self.observed_until = self.observed_until.max(ev.slot);
        self.events.push(ev);
    }

    pub fn events(&self) -> &[PropagationEvent] {
        &self.events
    }

    /// Events with `slot <= until`.
    pub fn events_until(&self, until: Slot) -> &[PropagationEvent] {
        let end = self.events.partition_point(|e| e.slot <= until);
        &self.events[..end]
    }

    pub fn participants(&self) -> impl Iterator<Item = UserId> + '_ {
        self.spreaders.union(&self.receivers).copied()
    }

    pub fn participant_vec(&self) -> Vec<UserId> {
        self.participants().collect()
    }

    /// Participants whose join slot is `<= until`: the root, then every
    /// user that watched by then.
    pub fn popularity_at(&self, until: Slot) -> usize {
        if until < self.t_init {
            return 0;
        }
        1 + self.view_time.values().filter(|&&t| t <= until).count()
    }

    /// Distinct home regions of every participant.
    pub fn regions_reached(&self, g: &SocialGraph) -> BTreeSet<RegionId> {
        self.participants().map(|u| g.home_region(u)).collect()
    }

    /// Slots between each re-sharer's exposure (its parent's share) and its
    /// own share.
    pub fn share_lags(&self) -> impl Iterator<Item = u64> + '_ {
        self.share_time.iter().filter_map(|(u, &t)| {
            let p = self.parent.get(u)?;
            Some(t - self.share_time[p])
        })
    }
}

pub fn popularity(tree: &PropagationTree) -> usize {
    tree.spreaders.len() + tree.receivers.len()
}

/// Mutable SIR state of one video's cascade.
#[derive(Debug, Clone)]
pub struct PropagationState {
    video: Video,
    n_users: usize,
    /// Users not listed are SAFE.
    states: BTreeMap<UserId, UserVideoState>,
    /// Activation slot -> users scheduled to act then.
    pending: BTreeMap<Slot, Vec<UserId>>,
    /// Susceptible user -> (exposing sharer, activation slot).
    exposure: BTreeMap<UserId, (UserId, Slot)>,
    last_slot: Slot,
    tree: PropagationTree,
}

impl PropagationState {
    pub fn video(&self) -> &Video {
        &self.video
    }

    pub fn tree(&self) -> &PropagationTree {
        &self.tree
    }

    pub fn into_tree(self) -> PropagationTree {
        self.tree
    }

    pub fn last_slot(&self) -> Slot {
        self.last_slot
    }

    pub fn state_of(&self, user: UserId) -> UserVideoState {
        self.states.get(&user).copied().unwrap_or(UserVideoState {
            state: UserState::Safe,
            since: 0,
        })
    }

    /// Earliest slot with a scheduled activation.
    pub fn next_activation(&self) -> Option<Slot> {
        self.pending.keys().next().copied()
    }

    pub fn is_finished(&self) -> bool {
        self.pending.is_empty()
    }

    /// Currently susceptible users with their exposer and activation slot.
    pub fn susceptible(&self) -> impl Iterator<Item = (UserId, UserId, Slot)> + '_ {
        self.exposure.iter().map(|(&u, &(p, t))| (u, p, t))
    }

    /// Count of users per state, indexed like [`UserState::ALL`].
    pub fn census(&self) -> [usize; 6] {
        let mut counts = [0usize; 6];
        for s in self.states.values() {
            counts[s.state.index()] += 1;
        }
        counts[UserState::Safe.index()] = self.n_users - self.states.len();
        counts
    }

    fn set(&mut self, user: UserId, state: UserState, slot: Slot) {
        self.states.insert(user, UserVideoState { state, since: slot });
    }

    fn expose_friends(
        &mut self,
        g: &SocialGraph,
        sharer: UserId,
        slot: Slot,
        sampler: &LagSampler,
        rng: &mut SimRng,
        out: &mut Vec<PropagationEvent>,
    ) {
        for &friend in g.neighbors(sharer) {
            if self.states.contains_key(&friend) {
                continue;
            }
            let activation = slot + sampler.sample(rng);
            self.set(friend, UserState::Susceptible, slot);
            self.exposure.insert(friend, (sharer, activation));
            self.pending.entry(activation).or_default().push(friend);
            out.push(PropagationEvent {
                slot,
                video: self.video.id,
                user: friend,
                kind: EventKind::Expose,
                parent: Some(sharer),
            });
        }
    }
}

/// Starts a cascade: the initiator becomes INFECTIOUS and every friend
/// SUSCEPTIBLE with an activation lag drawn from `sampler`.
pub fn init_share(
    g: &SocialGraph,
    video: &Video,
    sampler: &LagSampler,
    rng: &mut SimRng,
) -> Result<(PropagationState, Vec<PropagationEvent>)> {
    g.user(video.initiator)?;
    let mut state = PropagationState {
        video: video.clone(),
        n_users: g.n_users(),
        states: BTreeMap::new(),
        pending: BTreeMap::new(),
        exposure: BTreeMap::new(),
        last_slot: video.t_init,
        tree: PropagationTree::new(video),
    };
    state.set(video.initiator, UserState::Infectious, video.t_init);
    let mut events = state.tree.events().to_vec();
    state.expose_friends(g, video.initiator, video.t_init, sampler, rng, &mut events);
    for ev in &events[1..] {
        state.tree.apply(*ev);
    }
    Ok((state, events))
}

/// Advances a cascade to `slot`, resolving every activation scheduled at or
/// before it.
///
/// Activated users are processed in ascending id order: the watch coin, then
/// for viewers the share coin. New sharers then expose their SAFE friends,
/// again in ascending order, so when several friends share in the same slot
/// the lowest id becomes the parent.
pub fn step(
    state: &mut PropagationState,
    g: &SocialGraph,
    params: &PropagationParams,
    sampler: &LagSampler,
    slot: Slot,
    rng: &mut SimRng,
) -> Result<Vec<PropagationEvent>> {
    if slot <= state.last_slot {
        return Err(Error::Ordering {
            previous: state.last_slot,
            requested: slot,
        });
    }
    state.last_slot = slot;

    let mut due: Vec<UserId> = Vec::new();
    while let Some(entry) = state.pending.first_entry() {
        if *entry.key() > slot {
            break;
        }
        due.extend(entry.remove());
    }
    due.sort_unstable();

    let vid = state.video.id;
    let mut events = Vec::new();
    let mut sharers = Vec::new();
    for user in due {
        let (parent, _) = state
            .exposure
            .remove(&user)
            .expect("pending user has an exposure record");
        if rng.gen::<f64>() < params.p_watch {
            state.set(user, UserState::Infected, slot);
            events.push(PropagationEvent { slot, video: vid, user, kind: EventKind::Watch, parent: Some(parent) });
            if rng.gen::<f64>() < params.p_share {
                state.set(user, UserState::Infectious, slot);
                events.push(PropagationEvent { slot, video: vid, user, kind: EventKind::Share, parent: Some(parent) });
                sharers.push(user);
            } else {
                state.set(user, UserState::Recovered, slot);
                events.push(PropagationEvent { slot, video: vid, user, kind: EventKind::Recover, parent: Some(parent) });
            }
        } else {
            state.set(user, UserState::Immune, slot);
            events.push(PropagationEvent { slot, video: vid, user, kind: EventKind::Immune, parent: Some(parent) });
        }
    }
    for sharer in sharers {
        state.expose_friends(g, sharer, slot, sampler, rng, &mut events);
    }
    for ev in &events {
        state.tree.apply(*ev);
    }
    state.tree.observed_until = slot;
    Ok(events)
}

/// Runs a cascade from initiation until nothing is pending or `horizon`
/// slots have elapsed. The returned tree is observed through
/// `t_init + horizon`.
pub fn run_cascade(
    g: &SocialGraph,
    video: &Video,
    params: &PropagationParams,
    horizon: Slot,
    rng: &mut SimRng,
) -> Result<PropagationTree> {
    if horizon < 1 {
        return Err(Error::config("cascade horizon must be >= 1"));
    }
    let sampler = LagSampler::new(params)?;
    let (mut state, _) = init_share(g, video, &sampler, rng)?;
    let end = video.t_init + horizon;
    while let Some(next) = state.next_activation() {
        if next > end {
            break;
        }
        step(&mut state, g, params, &sampler, next, rng)?;
    }
    let mut tree = state.into_tree();
    tree.observed_until = end;
    Ok(tree)
}
