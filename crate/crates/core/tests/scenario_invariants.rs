use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use socvid_core::config::ScenarioConfig;
use socvid_core::d2d::{D2dEventKind, D2dStrategy};
use socvid_core::delivery::{PlacementAction, ReplicationStrategy, ServeSource};
use socvid_core::propagation::{EventKind, UserState};
use socvid_core::runner::{load_run, run_scenario, simulate, RunOutput, MANIFEST_FILE};
use socvid_core::{RegionId, Slot, UserId, VideoId};

fn small(d2d: D2dStrategy, replication: ReplicationStrategy) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::from_toml(
        r#"
seed = 5
horizon = 96
[graph]
users = 300
regions = 5
[videos]
count = 60
arrival_rate = 1.0
[delivery]
storage_slots = 4
bandwidth_units = 6
[d2d]
energy_budget = 4
lookahead = 12
"#,
    )
    .unwrap();
    cfg.d2d.strategy = d2d;
    cfg.delivery.replication = replication;
    cfg
}

fn runs() -> Vec<(ScenarioConfig, RunOutput)> {
    [
        (D2dStrategy::Coverage, ReplicationStrategy::InfluenceIndex),
        (D2dStrategy::Flood, ReplicationStrategy::Static),
        (D2dStrategy::Off, ReplicationStrategy::Oracle),
    ]
    .into_iter()
    .map(|(d, r)| {
        let cfg = small(d, r);
        let out = simulate(&cfg).unwrap();
        (cfg, out)
    })
    .collect()
}

#[test]
fn every_watch_is_served_once_and_logs_agree() {
    for (_, run) in runs() {
        let watches: BTreeMap<(VideoId, UserId), Slot> = run
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Watch)
            .map(|e| ((e.video, e.user), e.slot))
            .collect();
        assert_eq!(watches.len(), run.delivery.len());
        for r in &run.delivery {
            assert_eq!(watches.get(&(r.video, r.user)), Some(&r.slot), "{r:?}");
        }
        let peer: BTreeSet<(Slot, VideoId, UserId)> =
            run.delivery.iter().filter(|r| r.source == ServeSource::Peer).map(|r| (r.slot, r.video, r.user)).collect();
        let delivered: BTreeSet<(Slot, VideoId, UserId)> = run
            .d2d
            .iter()
            .filter(|e| e.kind == D2dEventKind::Deliver)
            .map(|e| (e.slot, e.video, e.to))
            .collect();
        assert_eq!(peer, delivered);
    }
}

#[test]
fn event_log_transitions_are_legal_and_conserve_users() {
    for (_, run) in runs() {
        let n = run.graph.n_users();
        let mut states: BTreeMap<VideoId, BTreeMap<UserId, UserState>> = BTreeMap::new();
        for e in &run.events {
            let per = states.entry(e.video).or_default();
            let from = per.get(&e.user).copied().unwrap_or(UserState::Safe);
            let to = match (e.kind, from) {
                (EventKind::Init, UserState::Safe) => UserState::Infectious,
                (EventKind::Expose, UserState::Safe) => UserState::Susceptible,
                (EventKind::Watch, UserState::Susceptible) => UserState::Infected,
                (EventKind::Immune, UserState::Susceptible) => UserState::Immune,
                (EventKind::Share, UserState::Infected) => UserState::Infectious,
                (EventKind::Recover, UserState::Infected) => UserState::Recovered,
                other => panic!("illegal transition {other:?} for {e:?}"),
            };
            per.insert(e.user, to);
            assert!(per.len() <= n);
        }
        for tree in &run.trees {
            let final_states = &states[&tree.video];
            let watched = final_states
                .values()
                .filter(|s| matches!(s, UserState::Infectious | UserState::Recovered))
                .count();
            assert_eq!(watched, socvid_core::propagation::popularity(tree));
        }
    }
}

#[test]
fn edge_caches_respect_storage_and_bandwidth() {
    for (cfg, run) in runs() {
        let mut held: BTreeMap<RegionId, BTreeSet<VideoId>> = BTreeMap::new();
        let mut changes = run.placements.iter().peekable();
        let mut by_slot: BTreeMap<Slot, Vec<_>> = BTreeMap::new();
        for r in &run.delivery {
            by_slot.entry(r.slot).or_default().push(r);
        }
        for slot in 0..cfg.horizon {
            while let Some(c) = changes.next_if(|c| c.slot <= slot) {
                let set = held.entry(c.region).or_default();
                match c.action {
                    PlacementAction::Add => assert!(set.insert(c.video), "{c:?} added twice"),
                    PlacementAction::Remove => assert!(set.remove(&c.video), "{c:?} not held"),
                }
                assert!(set.len() as u64 <= cfg.delivery.storage_slots, "{c:?} overfills region");
            }
            let mut served: BTreeMap<RegionId, u64> = BTreeMap::new();
            for r in by_slot.get(&slot).into_iter().flatten() {
                if r.source == ServeSource::LocalEdge {
                    assert!(held.get(&r.region).is_some_and(|s| s.contains(&r.video)), "{r:?} served from empty cache");
                    *served.entry(r.region).or_insert(0) += 1;
                }
            }
            assert!(served.values().all(|&n| n <= cfg.delivery.bandwidth_units));
        }
    }
}

#[test]
fn devices_respect_energy_capacity_and_colocation() {
    for (cfg, run) in runs() {
        let Some(trace) = &run.mobility else {
            assert!(run.d2d.is_empty());
            continue;
        };
        let mut relays: BTreeMap<UserId, u64> = BTreeMap::new();
        let mut stored: BTreeMap<UserId, Vec<Slot>> = BTreeMap::new();
        for e in &run.d2d {
            let at = |u: UserId| trace.region_of(u, e.slot).unwrap();
            assert_eq!(at(e.to), e.region, "{e:?}");
            match e.kind {
                D2dEventKind::Carry => {
                    assert!(e.from.is_none());
                    stored.entry(e.to).or_default().push(e.slot);
                }
                D2dEventKind::Flood => {
                    let from = e.from.unwrap();
                    assert_eq!(at(from), e.region, "{e:?}");
                    *relays.entry(from).or_insert(0) += 1;
                    stored.entry(e.to).or_default().push(e.slot);
                }
                D2dEventKind::Deliver => {
                    let from = e.from.unwrap();
                    assert_eq!(at(from), e.region, "{e:?}");
                    if from != e.to {
                        *relays.entry(from).or_insert(0) += 1;
                    }
                }
            }
        }
        assert!(!relays.is_empty());
        assert!(relays.values().all(|&n| n <= cfg.d2d.energy_budget), "{relays:?}");
        for (user, slots) in stored {
            for t in 0..cfg.horizon {
                let live = slots.iter().filter(|&&s| s <= t && t - s <= cfg.d2d.retention).count();
                assert!(live as u64 <= cfg.d2d.device_capacity, "user {user} holds {live} copies at {t}");
            }
        }
    }
}

#[test]
fn written_run_round_trips_and_hashes_match() {
    let cfg = small(D2dStrategy::Coverage, ReplicationStrategy::InfluenceIndex);
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_scenario(&cfg, dir.path()).unwrap();
    assert!(dir.path().join(MANIFEST_FILE).exists());
    for (file, hash) in &manifest.outputs {
        let bytes = std::fs::read(dir.path().join(file)).unwrap();
        assert_eq!(&hex::encode(Sha256::digest(&bytes)), hash, "{file}");
    }
    let loaded = load_run(dir.path()).unwrap();
    let direct = simulate(&cfg).unwrap();
    assert_eq!(loaded.manifest.scenario_id, cfg.scenario_id());
    assert_eq!(loaded.events, direct.events);
    assert_eq!(loaded.delivery.len(), direct.delivery.len());
    assert_eq!(loaded.d2d, direct.d2d);
    assert_eq!(loaded.trees.len(), direct.trees.len());
    for (a, b) in loaded.trees.iter().zip(&direct.trees) {
        assert_eq!(a.participant_vec(), b.participant_vec());
    }

    let reloaded = ScenarioConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(reloaded.hash(), cfg.hash());
}
