//! Seeded end-to-end scenario runs and paired strategy comparisons.
//!
//! Within a slot the phases run in a fixed order:
//!
//! 1. video initiations (and initial placement at the origin),
//! 2. propagation steps, in video id order,
//! 3. replication decisions,
//! 4. mobility update and D2D carrier selection, flooding and deliveries,
//! 5. request serving, in (user, video) order,
//! 6. logging.
//!
//! Popularity prediction is an online replay over the finished cascades in
//! initiation order, run once the slot loop ends.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analysis::{strategy_report, StrategyReport, METRICS};
use crate::config::{CoefficientMode, ScenarioConfig};
use crate::d2d::{
    aggregate, d2d_step, flood_baseline, predict_recipients, select_carriers, Candidate, D2dEvent, D2dEventKind,
    D2dStrategy, DeviceCache, Itineraries, MobilityModel, MobilityTrace,
};
use crate::delivery::{
    fit_c1_c2, geo_influence_index, serve, EdgeNetwork, PeerIndex, PlacementChange, ReplicationStrategy,
    RequestEvent, ServeSource,
};
use crate::error::{Error, Result};
use crate::graph::{generate_graph, load_graph, write_graph, SocialGraph};
use crate::logs::{self, DeliveryRecord, PredictionReport, ScenarioLog};
use crate::popularity::{
    label_level, mean_reward, quantile_thresholds, replay_baseline, replay_online, trajectory, LabelledTrajectory,
    OnlineModel, ViewThresholdTable,
};
use crate::propagation::{
    init_share, popularity, run_cascade, step, EventKind, LagSampler, PropagationEvent, PropagationState,
    PropagationTree, UserState, Video,
};
use crate::seed::{self, SimRng};
use crate::{RegionId, Slot, UserId, VideoId};

/// Builds or loads the scenario's graph, with edge-server capacities applied.
pub fn build_graph(cfg: &ScenarioConfig) -> Result<SocialGraph> {
    let mut g = match &cfg.graph.files {
        Some(f) => load_graph(&f.edges, &f.users, &f.regions)?,
        None => generate_graph(
            cfg.graph.users,
            cfg.graph.regions,
            &cfg.graph.generator,
            cfg.graph.homophily_scale_km,
            seed::derive(cfg.seed, seed::tag::GRAPH, 0),
        )?,
    };
    g.set_region_capacities(cfg.delivery.storage_slots, cfg.delivery.bandwidth_units);
    Ok(g)
}

/// Draws a user with probability proportional to `degree + 1`.
fn degree_biased(g: &SocialGraph, cumulative: &[f64], rng: &mut SimRng) -> UserId {
    let total = *cumulative.last().expect("graph has users");
    let x = rng.gen::<f64>() * total;
    let i = cumulative.partition_point(|&c| c <= x).min(g.n_users() - 1);
    i as UserId
}

fn degree_cumulative(g: &SocialGraph) -> Vec<f64> {
    let mut acc = 0.0;
    (0..g.n_users() as UserId)
        .map(|u| {
            acc += g.degree(u) as f64 + 1.0;
            acc
        })
        .collect()
}

/// Poisson arrivals over the horizon with degree-biased initiators.
pub fn schedule_videos(cfg: &ScenarioConfig, g: &SocialGraph) -> Vec<Video> {
    let mut rng = seed::rng_for(cfg.seed, seed::tag::VIDEOS, 0);
    let cumulative = degree_cumulative(g);
    let mut t = 0.0f64;
    let mut out = Vec::new();
    for id in 0..cfg.videos.count {
        t += -(1.0 - rng.gen::<f64>()).ln() / cfg.videos.arrival_rate;
        let slot = t.floor() as Slot;
        if slot >= cfg.horizon {
            break;
        }
        let initiator = degree_biased(g, &cumulative, &mut rng);
        out.push(Video { id: id as VideoId, t_init: slot, initiator, size_units: cfg.videos.size_units });
    }
    out
}

/// `(popularity after the calibration window, regions finally reached)` for
/// cascades simulated on a separate seed stream.
pub fn calibration_samples(cfg: &ScenarioConfig, g: &SocialGraph) -> Result<Vec<(f64, f64)>> {
    let d = &cfg.delivery;
    let mut pick = seed::rng_for(cfg.seed, seed::tag::CALIBRATION, 0);
    let cumulative = degree_cumulative(g);
    let horizon = cfg.horizon.max(d.calibration_window + 1);
    (0..d.calibration_videos)
        .map(|i| {
            let video = Video {
                id: i as VideoId,
                t_init: 0,
                initiator: degree_biased(g, &cumulative, &mut pick),
                size_units: cfg.videos.size_units,
            };
            let mut rng = seed::rng_for(cfg.seed, seed::tag::CALIBRATION, i as u64 + 1);
            let tree = run_cascade(g, &video, &cfg.propagation, horizon, &mut rng)?;
            Ok((tree.popularity_at(d.calibration_window) as f64, tree.regions_reached(g).len() as f64))
        })
        .collect()
}

pub fn coefficients(cfg: &ScenarioConfig, g: &SocialGraph) -> Result<(f64, f64)> {
    match cfg.delivery.coefficients {
        CoefficientMode::Fixed => Ok((cfg.delivery.c1, cfg.delivery.c2)),
        CoefficientMode::Fit => fit_c1_c2(&calibration_samples(cfg, g)?),
    }
}

/// Everything one run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario_id: String,
    pub graph: SocialGraph,
    pub videos: Vec<Video>,
    pub events: Vec<PropagationEvent>,
    pub trees: Vec<PropagationTree>,
    pub delivery: Vec<DeliveryRecord>,
    pub placements: Vec<PlacementChange>,
    pub d2d: Vec<D2dEvent>,
    pub mobility: Option<MobilityTrace>,
    pub predictions: PredictionReport,
    pub c1: f64,
    pub c2: f64,
}

impl RunOutput {
    pub fn report(&self, strategy: &str) -> Result<StrategyReport> {
        let id = &self.scenario_id;
        strategy_report(
            strategy,
            &ScenarioLog { scenario_id: id.clone(), records: self.delivery.clone() },
            &ScenarioLog { scenario_id: id.clone(), records: self.predictions.clone() },
            &ScenarioLog { scenario_id: id.clone(), records: self.d2d.clone() },
        )
    }
}

struct D2dState {
    caches: Vec<DeviceCache>,
    holders: BTreeMap<VideoId, BTreeSet<UserId>>,
    copies: BTreeMap<VideoId, usize>,
    covered: BTreeMap<VideoId, BTreeSet<UserId>>,
    /// Expected relays each carrier still owes to the videos it carries.
    load: Vec<BTreeMap<VideoId, f64>>,
    flood_rngs: BTreeMap<VideoId, SimRng>,
}

/// Runs the scenario without touching the filesystem.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let g = build_graph(cfg)?;
    let videos = schedule_videos(cfg, &g);
    let (c1, c2) = coefficients(cfg, &g)?;
    let params = &cfg.propagation;
    let sampler = LagSampler::new(params)?;
    let dcfg = &cfg.d2d;
    let dl = &cfg.delivery;

    let oracle_regions: Vec<BTreeSet<RegionId>> = if dl.replication == ReplicationStrategy::Oracle {
        videos
            .iter()
            .map(|v| {
                let mut rng = seed::rng_for(cfg.seed, seed::tag::CASCADE, u64::from(v.id));
                let tree = run_cascade(&g, v, params, (cfg.horizon - 1 - v.t_init).max(1), &mut rng)?;
                Ok(tree.regions_reached(&g))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let (mobility_model, trace) = if dcfg.strategy == D2dStrategy::Off {
        (None, None)
    } else {
        let m = MobilityModel::generate(&g, &dcfg.mobility, cfg.seed)?;
        let t = MobilityTrace::simulate(&m, &g, cfg.horizon, cfg.seed)?;
        (Some(m), Some(t))
    };
    let homes: Vec<RegionId> = g.users().iter().map(|u| u.home_region).collect();

    let mut net = EdgeNetwork::new(g.regions());
    let mut peers = PeerIndex::new(dl.peer_assist, dl.peer_retention);
    let mut d2d = D2dState {
        caches: (0..g.n_users() as UserId)
            .map(|u| DeviceCache::new(u, dcfg.device_capacity, dcfg.energy_budget))
            .collect(),
        holders: BTreeMap::new(),
        copies: BTreeMap::new(),
        covered: BTreeMap::new(),
        load: vec![BTreeMap::new(); g.n_users()],
        flood_rngs: BTreeMap::new(),
    };

    let mut active: BTreeMap<VideoId, (PropagationState, SimRng)> = BTreeMap::new();
    let mut done: BTreeMap<VideoId, PropagationTree> = BTreeMap::new();
    let mut events = Vec::new();
    let mut delivery = Vec::new();
    let mut d2d_log = Vec::new();
    let mut next_video = 0;

    for slot in 0..cfg.horizon {
        // initiations
        let mut watches: Vec<(UserId, VideoId)> = Vec::new();
        while next_video < videos.len() && videos[next_video].t_init == slot {
            let v = &videos[next_video];
            next_video += 1;
            let mut rng = seed::rng_for(cfg.seed, seed::tag::CASCADE, u64::from(v.id));
            let (state, ev) = init_share(&g, v, &sampler, &mut rng)?;
            events.extend(ev);
            net.map.ensure_entry(v.id);
            match dl.replication {
                ReplicationStrategy::Static | ReplicationStrategy::InfluenceIndex => {
                    net.place(slot, v.id, v.size_units, g.home_region(v.initiator))?;
                }
                ReplicationStrategy::Oracle => {
                    for &r in &oracle_regions[v.id as usize] {
                        net.place(slot, v.id, v.size_units, r)?;
                    }
                }
            }
            active.insert(v.id, (state, rng));
        }

        // propagation
        for (state, rng) in active.values_mut() {
            if state.next_activation().is_some_and(|t| t <= slot) {
                let ev = step(state, &g, params, &sampler, slot, rng)?;
                watches.extend(ev.iter().filter(|e| e.kind == EventKind::Watch).map(|e| (e.user, e.video)));
                events.extend(ev);
            }
        }

        // replication
        if dl.replication == ReplicationStrategy::InfluenceIndex {
            for (&vid, (state, _)) in &active {
                let v = state.video();
                if slot <= v.t_init {
                    continue;
                }
                let gi = geo_influence_index(state.tree().popularity_at(slot - 1), c1, c2)?;
                let mut demand = vec![0usize; g.n_regions()];
                for (u, _, _) in state.susceptible() {
                    demand[g.home_region(u) as usize] += 1;
                }
                net.replicate(slot, vid, v.size_units, gi, &demand)?;
            }
        }

        // mobility and D2D
        let positions = trace.as_ref().map_or_else(|| homes.clone(), |t| t.positions(slot));
        watches.sort_unstable();
        let mut d2d_served: BTreeMap<(UserId, VideoId), RegionId> = BTreeMap::new();
        if let Some(model) = &mobility_model {
            for cache in &mut d2d.caches {
                for v in cache.expire(slot, dcfg.retention) {
                    if let Some(set) = d2d.holders.get_mut(&v) {
                        set.remove(&cache.user);
                    }
                    d2d.load[cache.user as usize].remove(&v);
                }
            }
            match dcfg.strategy {
                D2dStrategy::Coverage => coverage_phase(cfg, &active, model, &positions, slot, &mut d2d, &mut d2d_log)?,
                D2dStrategy::Flood => flood_phase(cfg, &active, &g, &positions, slot, &mut d2d, &mut d2d_log),
                D2dStrategy::Off => {}
            }
            for ev in d2d_step(slot, &positions, &watches, &d2d.holders, &mut d2d.caches) {
                if let Some(from) = ev.from.filter(|&f| f != ev.to) {
                    let owed = &mut d2d.load[from as usize];
                    if let Some(l) = owed.get_mut(&ev.video) {
                        *l -= 1.0;
                        if *l <= 0.0 {
                            owed.remove(&ev.video);
                        }
                    }
                }
                d2d_served.insert((ev.to, ev.video), ev.region);
                d2d_log.push(ev);
            }
        }

        // serving
        for &(user, video) in &watches {
            let home = g.home_region(user);
            let record = if let Some(&region) = d2d_served.get(&(user, video)) {
                peers.record_view(user, home, video, slot);
                DeliveryRecord { slot, video, user, region, source: ServeSource::Peer, cost: dl.costs.peer }
            } else {
                let req = RequestEvent { slot, user, video, region: home };
                let out = serve(&req, &mut net, &mut peers, &dl.costs);
                DeliveryRecord { slot, video, user, region: home, source: out.source, cost: out.cost_units }
            };
            delivery.push(record);
        }

        let finished: Vec<VideoId> = active.iter().filter(|(_, (s, _))| s.is_finished()).map(|(&v, _)| v).collect();
        for v in finished {
            let (state, _) = active.remove(&v).expect("listed as active");
            done.insert(v, state.into_tree());
        }
    }

    for (v, (state, _)) in active {
        done.insert(v, state.into_tree());
    }
    let end = cfg.horizon.saturating_sub(1);
    let trees: Vec<PropagationTree> = done
        .into_values()
        .map(|mut t| {
            t.observed_until = end;
            t
        })
        .collect();
    let predictions = predict(cfg, &g, &trees)?;

    Ok(RunOutput {
        scenario_id: cfg.scenario_id(),
        placements: net.map.history().to_vec(),
        graph: g,
        videos,
        events,
        trees,
        delivery,
        d2d: d2d_log,
        mobility: trace,
        predictions,
        c1,
        c2,
    })
}

fn coverage_phase(
    cfg: &ScenarioConfig,
    active: &BTreeMap<VideoId, (PropagationState, SimRng)>,
    model: &MobilityModel,
    positions: &[RegionId],
    slot: Slot,
    d2d: &mut D2dState,
    log: &mut Vec<D2dEvent>,
) -> Result<()> {
    let dcfg = &cfg.d2d;
    let mut itineraries = Itineraries::new(model, positions, slot, dcfg.lookahead);
    let mut presence: Option<BTreeMap<(RegionId, Slot), Vec<UserId>>> = None;
    for (&vid, (state, _)) in active {
        let used = d2d.copies.get(&vid).copied().unwrap_or(0);
        if used >= dcfg.replica_budget {
            continue;
        }
        let covered = d2d.covered.entry(vid).or_default();
        let all = predict_recipients(state, &mut itineraries, cfg.propagation.p_watch)?;
        let recipients: Vec<_> = all.iter().filter(|r| !covered.contains(&r.user)).cloned().collect();
        if recipients.is_empty() {
            continue;
        }
        let map = aggregate(&recipients);
        let full = aggregate(&all);
        if presence.is_none() {
            let mut index: BTreeMap<(RegionId, Slot), Vec<UserId>> = BTreeMap::new();
            for u in 0..positions.len() as UserId {
                for stay in itineraries.get(u)? {
                    for t in stay.arrival..stay.arrival + stay.dwell {
                        index.entry((stay.region, t)).or_default().push(u);
                    }
                }
            }
            presence = Some(index);
        }
        let index = presence.as_ref().expect("built above");
        let held = d2d.holders.get(&vid);
        let pool: BTreeSet<UserId> = map
            .keys()
            .filter_map(|k| index.get(k))
            .flatten()
            .copied()
            .filter(|&u| {
                state.state_of(u).state != UserState::Susceptible && !held.is_some_and(|h| h.contains(&u))
            })
            .collect();
        let size = state.video().size_units;
        let candidates = pool
            .into_iter()
            .map(|u| {
                let c = &d2d.caches[u as usize];
                let spare = c.energy_left() as f64 - d2d.load[u as usize].values().sum::<f64>();
                Ok(Candidate::from_itinerary(u, itineraries.get(u)?, c.can_hold(size) && c.has_energy()).with_spare(spare))
            })
            .collect::<Result<Vec<_>>>()?;
        let assignment = select_carriers(vid, &map, &candidates, dcfg.replica_budget - used);
        let hit: BTreeSet<(RegionId, Slot)> = assignment.coverage.iter().map(|c| (c.region, c.window)).collect();
        covered.extend(recipients.iter().filter(|r| hit.contains(&(r.region, r.window))).map(|r| r.user));
        for c in assignment.carriers {
            if d2d.caches[c as usize].store(vid, size, slot) {
                let owed: f64 = candidates
                    .iter()
                    .find(|k| k.user == c)
                    .map_or(0.0, |k| k.presence.iter().filter_map(|cell| full.get(cell)).sum());
                *d2d.load[c as usize].entry(vid).or_insert(0.0) += owed;
                d2d.holders.entry(vid).or_default().insert(c);
                *d2d.copies.entry(vid).or_insert(0) += 1;
                log.push(D2dEvent { slot, video: vid, from: None, to: c, region: positions[c as usize], kind: D2dEventKind::Carry });
            }
        }
    }
    Ok(())
}

fn flood_phase(
    cfg: &ScenarioConfig,
    active: &BTreeMap<VideoId, (PropagationState, SimRng)>,
    g: &SocialGraph,
    positions: &[RegionId],
    slot: Slot,
    d2d: &mut D2dState,
    log: &mut Vec<D2dEvent>,
) {
    let dcfg = &cfg.d2d;
    let mut by_region: Vec<Vec<UserId>> = vec![Vec::new(); g.n_regions()];
    for (u, &r) in positions.iter().enumerate() {
        by_region[r as usize].push(u as UserId);
    }
    for (&vid, (state, _)) in active {
        let mut remaining = dcfg.replica_budget - d2d.copies.get(&vid).copied().unwrap_or(0);
        if remaining == 0 {
            continue;
        }
        let mut sources: BTreeSet<UserId> = state.tree().spreaders.clone();
        if let Some(h) = d2d.holders.get(&vid) {
            sources.extend(h);
        }
        let rng = d2d
            .flood_rngs
            .entry(vid)
            .or_insert_with(|| seed::rng_for(cfg.seed, seed::tag::FLOOD, u64::from(vid)));
        for h in sources {
            if remaining == 0 {
                break;
            }
            if !d2d.caches[h as usize].has_energy() {
                continue;
            }
            let region = positions[h as usize];
            let size = state.video().size_units;
            let ev = flood_baseline(
                slot,
                vid,
                size,
                h,
                region,
                &by_region[region as usize],
                dcfg.fanout,
                remaining,
                &mut d2d.caches,
                rng,
            );
            for e in ev {
                d2d.holders.entry(vid).or_default().insert(e.to);
                *d2d.copies.entry(vid).or_insert(0) += 1;
                remaining -= 1;
                log.push(e);
            }
        }
    }
}

/// Online and baseline prediction over the cascades observed for at least
/// the prediction horizon. Empty when fewer than two qualify.
fn predict(cfg: &ScenarioConfig, g: &SocialGraph, trees: &[PropagationTree]) -> Result<PredictionReport> {
    let pc = &cfg.prediction;
    let h = pc.predictor.horizon;
    let complete: Vec<&PropagationTree> =
        trees.iter().filter(|t| t.t_init + Slot::from(h) <= t.observed_until && cfg.horizon > 0).collect();
    if complete.len() < 2 {
        return Ok(PredictionReport::default());
    }
    let pops: Vec<usize> = complete.iter().map(|t| popularity(t)).collect();
    let thresholds = quantile_thresholds(&pops, &pc.quantiles)?;
    let levels = thresholds.len() as u32 + 1;
    let items = complete
        .par_iter()
        .zip(&pops)
        .map(|(t, &p)| {
            Ok(LabelledTrajectory { video: t.video, features: trajectory(t, g, h)?, level: label_level(p, &thresholds)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let trajectories: Vec<_> = items.iter().map(|i| i.features.clone()).collect();
    let mut model = OnlineModel::new(pc.predictor.clone(), levels, OnlineModel::scale_from(&trajectories, h))?;
    let online = replay_online(&mut model, &items)?;
    let samples: Vec<_> = items
        .iter()
        .map(|i| (i.features[pc.baseline_commit_age as usize - 1].views(), i.level))
        .collect();
    let table = ViewThresholdTable::fit(pc.baseline_commit_age, &samples, levels)?;
    let baseline = replay_baseline(&table, &items, h)?;
    Ok(PredictionReport {
        summaries: vec![("online".into(), mean_reward(&online)), ("baseline".into(), mean_reward(&baseline))],
        rows: online,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub horizon: Slot,
    pub c1: f64,
    pub c2: f64,
    pub module_versions: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn module_versions() -> BTreeMap<String, String> {
    ["graph", "propagation", "popularity", "delivery", "d2d", "analysis", "runner"]
        .into_iter()
        .map(|m| (m.to_owned(), env!("CARGO_PKG_VERSION").to_owned()))
        .collect()
}

/// Writes every log of `out` into `dir` and returns the manifest (also
/// written as `manifest.json`).
pub fn write_run(cfg: &ScenarioConfig, out: &RunOutput, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<&str> = Vec::new();
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    files.push("config.toml");
    write_graph(&out.graph, &dir.join("edges.txt"), &dir.join("users.csv"), &dir.join("regions.csv"))?;
    files.extend(["edges.txt", "users.csv", "regions.csv"]);
    logs::write_videos(&dir.join("videos.csv"), &out.videos)?;
    logs::write_events(&dir.join("events.csv"), &out.events)?;
    logs::write_placements(&dir.join("placements.csv"), &out.placements)?;
    logs::write_delivery(&dir.join("delivery.csv"), &out.delivery)?;
    logs::write_d2d(&dir.join("d2d.csv"), &out.d2d)?;
    logs::write_predictions(&dir.join("predictions.csv"), &out.predictions)?;
    files.extend(["videos.csv", "events.csv", "placements.csv", "delivery.csv", "d2d.csv", "predictions.csv"]);
    if let Some(trace) = &out.mobility {
        logs::write_mobility(&dir.join("mobility.csv"), trace)?;
        files.push("mobility.csv");
    }
    let label = format!("{}+{}", cfg.delivery.replication.as_str(), cfg.d2d.strategy.as_str());
    crate::analysis::write_report(&dir.join("report.csv"), &[out.report(&label)?])?;
    files.push("report.csv");

    let mut outputs = BTreeMap::new();
    for f in files {
        let bytes = std::fs::read(dir.join(f))?;
        outputs.insert(f.to_owned(), hex::encode(Sha256::digest(bytes)));
    }
    let manifest = RunManifest {
        scenario_id: out.scenario_id.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        horizon: cfg.horizon,
        c1: out.c1,
        c2: out.c2,
        module_versions: module_versions(),
        outputs,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn run_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<RunManifest> {
    let out = simulate(cfg)?;
    write_run(cfg, &out, dir)
}

/// Logs of a finished run, read back from its output directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub graph: SocialGraph,
    pub videos: Vec<Video>,
    pub events: Vec<PropagationEvent>,
    pub trees: Vec<PropagationTree>,
    pub delivery: Vec<DeliveryRecord>,
    pub d2d: Vec<D2dEvent>,
    pub predictions: PredictionReport,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| Error::config(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let graph = load_graph(&dir.join("edges.txt"), &dir.join("users.csv"), &dir.join("regions.csv"))?;
    let videos = logs::read_videos(&dir.join("videos.csv"))?;
    let events = logs::read_events(&dir.join("events.csv"))?;
    let trees = logs::rebuild_trees(&videos, &events, manifest.horizon.saturating_sub(1))?;
    Ok(LoadedRun {
        delivery: logs::read_delivery(&dir.join("delivery.csv"))?,
        d2d: logs::read_d2d(&dir.join("d2d.csv"))?,
        predictions: logs::read_predictions(&dir.join("predictions.csv"))?,
        manifest,
        graph,
        videos,
        events,
        trees,
    })
}

/// A strategy under comparison: a replication policy or a D2D policy
/// applied on top of the base config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Replication(ReplicationStrategy),
    D2d(D2dStrategy),
}

impl Strategy {
    /// Replication names as-is (`static`, `influence-index`, `oracle`); D2D
    /// policies as `d2d-off`, `d2d-flood`, `d2d-coverage`.
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(r) = ReplicationStrategy::parse(s) {
            return Some(Strategy::Replication(r));
        }
        s.strip_prefix("d2d-").and_then(D2dStrategy::parse).map(Strategy::D2d)
    }

    pub fn label(&self) -> String {
        match self {
            Strategy::Replication(r) => r.as_str().to_owned(),
            Strategy::D2d(d) => format!("d2d-{}", d.as_str()),
        }
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        match *self {
            Strategy::Replication(r) => cfg.delivery.replication = r,
            Strategy::D2d(d) => cfg.d2d.strategy = d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: String,
    pub metric: &'static str,
    pub mean: f64,
    /// Mean paired difference against the first strategy.
    pub diff_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub strategies: Vec<String>,
    /// `reports[s][k]`: strategy `s` on seed `k`.
    pub reports: Vec<Vec<StrategyReport>>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn per_seed(&self, strategy: &str, metric: &str) -> Option<Vec<f64>> {
        let s = self.strategies.iter().position(|x| x == strategy)?;
        let m = METRICS.iter().position(|x| *x == metric)?;
        Some(self.reports[s].iter().map(|r| r.values()[m]).collect())
    }

    pub fn row(&self, strategy: &str, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.metric == metric)
    }
}

/// Mean and two-sided 95% t interval of paired differences.
pub fn paired_interval(diffs: &[f64]) -> Result<(f64, f64, f64)> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::config("paired interval needs at least two seeds"));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok((mean, mean, mean));
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::config(e.to_string()))?
        .inverse_cdf(0.975);
    let half = t * (var / n as f64).sqrt();
    Ok((mean, mean - half, mean + half))
}

/// Runs every strategy on the same `n_seeds` seeds (`cfg.seed`,
/// `cfg.seed + 1`, ...) and reports per-metric means with 95% intervals of
/// the paired differences against the first strategy.
pub fn compare_strategies(cfg: &ScenarioConfig, strategies: &[Strategy], n_seeds: usize) -> Result<Comparison> {
    if n_seeds < 2 {
        return Err(Error::config("compare needs at least 2 seeds"));
    }
    if strategies.is_empty() {
        return Err(Error::config("compare needs at least one strategy"));
    }
    cfg.validate()?;
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let jobs: Vec<(usize, u64)> = (0..strategies.len()).flat_map(|s| seeds.iter().map(move |&k| (s, k))).collect();
    let results = jobs
        .par_iter()
        .map(|&(s, k)| {
            let mut c = cfg.clone();
            c.seed = k;
            strategies[s].apply(&mut c);
            simulate(&c)?.report(&strategies[s].label())
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<Vec<StrategyReport>> = results.chunks(n_seeds).map(<[_]>::to_vec).collect();

    let mut rows = Vec::with_capacity(strategies.len() * METRICS.len());
    for (s, strat) in strategies.iter().enumerate() {
        for (m, &metric) in METRICS.iter().enumerate() {
            let vals: Vec<f64> = reports[s].iter().map(|r| r.values()[m]).collect();
            let base: Vec<f64> = reports[0].iter().map(|r| r.values()[m]).collect();
            let diffs: Vec<f64> = vals.iter().zip(&base).map(|(a, b)| a - b).collect();
            let (diff_mean, ci_low, ci_high) = paired_interval(&diffs)?;
            rows.push(ComparisonRow {
                strategy: strat.label(),
                metric,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                diff_mean,
                ci_low,
                ci_high,
            });
        }
    }
    Ok(Comparison { seeds, strategies: strategies.iter().map(Strategy::label).collect(), reports, rows })
}

/// Writes `comparison.csv` (one row per strategy and metric) and `runs.csv`
/// (one row per strategy and seed).
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("comparison.csv"))?;
    let base = &cmp.strategies[0];
    w.write_record(["strategy", "metric", "mean", &format!("diff_vs_{base}"), "ci95_low", "ci95_high"])?;
    for r in &cmp.rows {
        w.write_record([
            r.strategy.clone(),
            r.metric.to_owned(),
            r.mean.to_string(),
            r.diff_mean.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    let mut header = vec!["strategy", "seed", "requests"];
    header.extend(METRICS);
    w.write_record(&header)?;
    for (s, per_seed) in cmp.reports.iter().enumerate() {
        for (r, seed) in per_seed.iter().zip(&cmp.seeds) {
            let mut rec = vec![cmp.strategies[s].clone(), seed.to_string(), r.requests.to_string()];
            rec.extend(r.values().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.graph.users = 10;
        cfg.graph.regions = 2;
        cfg.graph.generator.edges_per_node = 2;
        cfg.videos.count = 2;
        cfg.videos.arrival_rate = 0.5;
        cfg.horizon = 10;
        cfg.prediction.predictor.horizon = 3;
        cfg.prediction.baseline_commit_age = 1;
        cfg
    }

    #[test]
    fn zero_horizon_gives_empty_logs() {
        let mut cfg = tiny();
        cfg.horizon = 0;
        let out = simulate(&cfg).unwrap();
        assert!(out.videos.is_empty() && out.events.is_empty() && out.delivery.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let m = run_scenario(&cfg, dir.path()).unwrap();
        assert!(m.outputs.contains_key("events.csv"));
    }

    #[test]
    fn every_watch_is_served_once() {
        for seed in 0..5 {
            let mut cfg = tiny();
            cfg.seed = seed;
            let out = simulate(&cfg).unwrap();
            let watches: Vec<(Slot, VideoId, UserId)> = out
                .events
                .iter()
                .filter(|e| e.kind == EventKind::Watch)
                .map(|e| (e.slot, e.video, e.user))
                .collect();
            let mut served: Vec<(Slot, VideoId, UserId)> =
                out.delivery.iter().map(|d| (d.slot, d.video, d.user)).collect();
            let mut w = watches.clone();
            w.sort_unstable();
            served.sort_unstable();
            assert_eq!(w, served, "seed {seed}");
        }
    }

    #[test]
    fn reruns_are_identical() {
        let cfg = tiny();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert_eq!(run_scenario(&cfg, a.path()).unwrap(), run_scenario(&cfg, b.path()).unwrap());
    }

    #[test]
    fn strategy_against_itself_has_zero_difference() {
        let cfg = tiny();
        let s = Strategy::Replication(ReplicationStrategy::Static);
        let cmp = compare_strategies(&cfg, &[s, s], 2).unwrap();
        assert_eq!(cmp.rows.len(), 2 * METRICS.len());
        assert!(cmp.rows.iter().all(|r| r.diff_mean == 0.0 && r.ci_low == 0.0 && r.ci_high == 0.0));
        assert!(compare_strategies(&cfg, &[s], 1).is_err());
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!(Strategy::parse("oracle"), Some(Strategy::Replication(ReplicationStrategy::Oracle)));
        assert_eq!(Strategy::parse("d2d-coverage"), Some(Strategy::D2d(D2dStrategy::Coverage)));
        assert_eq!(Strategy::parse("coverage"), None);
        assert_eq!(Strategy::D2d(D2dStrategy::Flood).label(), "d2d-flood");
    }

    #[test]
    fn t_interval_matches_table() {
        // n = 5, t(0.975, 4) = 2.776
        let (m, lo, hi) = paired_interval(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(m, 3.0);
        let half = 2.7764451051977987 * (2.5f64 / 5.0).sqrt();
        assert!((hi - m - half).abs() < 1e-9 && (m - lo - half).abs() < 1e-9);
    }
}
