//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The process fails when a
//! criterion fails that is not listed in `EXPECTED_FAILURES`; an expected
//! failure is still reported as FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use socvid_core::analysis::{distance_cdf, fig2_experiment, fit_zipf, DistanceMode, LagHistogram, PopularityClass};
use socvid_core::config::ScenarioConfig;
use socvid_core::d2d::{
    aggregate, d2d_step, predict_mobility, select_carriers, Candidate, D2dStrategy, DeviceCache, MobilityModel,
    MobilityTrace, PredictedRecipient, RecipientMap, TraceStay, UserMobility,
};
use socvid_core::delivery::{fit_c1_c2, geo_influence_index, ReplicationStrategy};
use socvid_core::graph::{clustering_coefficient, generate_graph, GraphGenConfig, Point, Region, SocialGraph, User};
use socvid_core::popularity::{self, corpus, replay_baseline, replay_online, OnlineModel, PredictorConfig, ViewThresholdTable};
use socvid_core::propagation::{
    init_share, popularity as tree_popularity, run_cascade, step, EventKind, LagSampler, PropagationParams, UserState,
    Video,
};
use socvid_core::runner::{compare_strategies, paired_interval, simulate, Strategy};
use socvid_core::seed::{rng_for, SimRng};
use socvid_core::{RegionId, Slot, UserId};

/// Criteria allowed to fail without failing the run.
///
/// 1: with s = 1.5070 the truncated zipf puts only about 87% of its mass on
/// lags <= 24 at lag_max = 720, so the analytic 95% check cannot hold.
const EXPECTED_FAILURES: &[u32] = &[1];

const ZIPF_TOL: f64 = 0.06;
const DAY_MASS: f64 = 0.95;
const FIT_NOISE: f64 = 0.05;
const C1_TOL: f64 = 0.10;
const HAND_TOL: f64 = 1e-12;
const RHO_MAX: f64 = -0.2;
const GREEDY_BOUND: f64 = 1.0 - 1.0 / std::f64::consts::E;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn c1_zipf() -> Outcome {
    let started = Instant::now();
    let params = PropagationParams { lag_shape: 1.5070, lag_max: 720, ..Default::default() };
    let sampler = LagSampler::new(&params).expect("valid lag params");
    let mut rng: SimRng = rng_for(1, "acceptance-zipf", 0);
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for _ in 0..1_000_000 {
        *counts.entry(sampler.sample(&mut rng)).or_insert(0) += 1;
    }
    let mut h = LagHistogram::new();
    for (lag, n) in counts {
        h.add(lag, n).expect("lags are >= 1");
    }
    let s = fit_zipf(&h).expect("fit").s;
    let day = sampler.cdf(24);
    let secs = started.elapsed().as_secs_f64();
    let fit_ok = (s - 1.5070).abs() <= ZIPF_TOL;
    let day_ok = day >= DAY_MASS;
    outcome(
        fit_ok && day_ok && secs < 30.0,
        format!(
            "fitted s = {s:.4} ({}); P(L<=24) = {day:.4} ({} {DAY_MASS}); {secs:.1}s",
            if fit_ok { "within 0.06" } else { "outside 0.06" },
            if day_ok { ">=" } else { "<" }
        ),
    )
}

fn legal(kind: EventKind, from: UserState) -> Option<UserState> {
    use UserState::*;
    match (kind, from) {
        (EventKind::Expose, Safe) => Some(Susceptible),
        (EventKind::Watch, Susceptible) => Some(Infected),
        (EventKind::Immune, Susceptible) => Some(Immune),
        (EventKind::Share, Infected) => Some(Infectious),
        (EventKind::Recover, Infected) => Some(Recovered),
        _ => None,
    }
}

fn c2_sir() -> Outcome {
    let started = Instant::now();
    let (mut steps, mut illegal, mut unconserved) = (0u64, 0u64, 0u64);
    for seed in 0..100u64 {
        let mut rng: SimRng = rng_for(seed, "acceptance-sir", 0);
        let g = generate_graph(150, 4, &GraphGenConfig::default(), 10.0, seed).expect("graph");
        let params = PropagationParams {
            p_watch: rng.gen_range(0.05..1.0),
            p_share: rng.gen_range(0.05..1.0),
            ..Default::default()
        };
        let sampler = LagSampler::new(&params).expect("lag params");
        for k in 0..10u32 {
            let video = Video { id: k, t_init: 0, initiator: rng.gen_range(0..150), size_units: 1 };
            let mut crng: SimRng = rng_for(seed, "acceptance-sir-cascade", u64::from(k));
            let (mut state, init) = init_share(&g, &video, &sampler, &mut crng).expect("init");
            let mut oracle: BTreeMap<UserId, UserState> = BTreeMap::new();
            for ev in &init {
                let from = oracle.get(&ev.user).copied().unwrap_or(UserState::Safe);
                match (ev.kind, from) {
                    (EventKind::Init, UserState::Safe) => {
                        oracle.insert(ev.user, UserState::Infectious);
                    }
                    (kind, from) => match legal(kind, from) {
                        Some(to) => {
                            oracle.insert(ev.user, to);
                        }
                        None => illegal += 1,
                    },
                }
            }
            for slot in 1..=200 as Slot {
                let Some(next) = state.next_activation() else { break };
                if next > slot {
                    continue;
                }
                let events = step(&mut state, &g, &params, &sampler, slot, &mut crng).expect("step");
                steps += 1;
                for ev in events {
                    let from = oracle.get(&ev.user).copied().unwrap_or(UserState::Safe);
                    match legal(ev.kind, from) {
                        Some(to) => {
                            oracle.insert(ev.user, to);
                        }
                        None => illegal += 1,
                    }
                }
                let census = state.census();
                let mut expected = [0usize; 6];
                for s in oracle.values() {
                    expected[UserState::ALL.iter().position(|x| x == s).expect("known state")] += 1;
                }
                expected[0] = g.n_users() - oracle.len();
                if census.iter().sum::<usize>() != g.n_users() || census != expected {
                    unconserved += 1;
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        steps >= 10_000 && illegal == 0 && unconserved == 0 && secs < 60.0,
        format!("{steps} steps over 100 seeds; {illegal} illegal transitions; {unconserved} census mismatches; {secs:.1}s"),
    )
}

fn graph_with(n: usize, edges: &[(UserId, UserId)]) -> SocialGraph {
    let regions = vec![Region { id: 0, center: Point::new(0.0, 0.0), storage_slots: 1, bandwidth_units: 1 }];
    let users = (0..n as UserId).map(|id| User { id, home_region: 0, login_prob: 1.0 }).collect();
    SocialGraph::new(regions, users, edges.iter().copied()).expect("graph")
}

/// Mean local clustering over `subset` on its induced subgraph, by
/// enumerating every (node, pair of members) triple.
fn brute_clustering(adj: &[Vec<bool>], subset: &[UserId]) -> f64 {
    let mut members: Vec<usize> = subset.iter().map(|&u| u as usize).collect();
    members.sort_unstable();
    let mut total = 0.0;
    for &v in &members {
        let k = members.iter().filter(|&&w| w != v && adj[v][w]).count();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        for &a in &members {
            for &b in &members {
                if a < b && a != v && b != v && adj[v][a] && adj[v][b] && adj[a][b] {
                    links += 1;
                }
            }
        }
        total += links as f64 / (k * (k - 1) / 2) as f64;
    }
    total / members.len() as f64
}

fn brute_optimum(recipients: &RecipientMap, candidates: &[Candidate], budget: usize) -> f64 {
    let mut best = 0.0f64;
    for mask in 0u32..(1 << candidates.len()) {
        if mask.count_ones() as usize > budget {
            continue;
        }
        let mut cells = BTreeSet::new();
        for (i, c) in candidates.iter().enumerate() {
            if mask >> i & 1 == 1 {
                cells.extend(c.presence.iter().copied());
            }
        }
        best = best.max(cells.iter().filter_map(|k| recipients.get(k)).sum());
    }
    best
}

fn c3_oracles() -> Outcome {
    let mut rng: SimRng = rng_for(3, "acceptance-oracles", 0);
    let mut cc_bad = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=50usize);
        let p = rng.gen_range(0.0..1.0);
        let mut adj = vec![vec![false; n]; n];
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(p) {
                    adj[a][b] = true;
                    adj[b][a] = true;
                    edges.push((a as UserId, b as UserId));
                }
            }
        }
        let g = graph_with(n, &edges);
        let all: Vec<UserId> = (0..n as UserId).collect();
        let mut part = all.clone();
        part.shuffle(&mut rng);
        part.truncate(rng.gen_range(1..=n));
        for subset in [&all, &part] {
            if clustering_coefficient(&g, subset).expect("cc") != brute_clustering(&adj, subset) {
                cc_bad += 1;
            }
        }
    }

    let mut pop_bad = 0;
    let mut cascades = 0;
    for seed in 0..10u64 {
        let g = generate_graph(300, 5, &GraphGenConfig::default(), 10.0, seed).expect("graph");
        for k in 0..100u32 {
            let mut crng: SimRng = rng_for(seed, "acceptance-popularity", u64::from(k));
            let video = Video { id: k, t_init: 0, initiator: crng.gen_range(0..300), size_units: 1 };
            let tree = run_cascade(&g, &video, &PropagationParams::default(), 200, &mut crng).expect("cascade");
            let recount: BTreeSet<UserId> = tree
                .events()
                .iter()
                .filter(|e| matches!(e.kind, EventKind::Init | EventKind::Watch | EventKind::Share))
                .map(|e| e.user)
                .collect();
            cascades += 1;
            if recount.len() != tree_popularity(&tree) {
                pop_bad += 1;
            }
        }
    }

    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let n_cells = rng.gen_range(1..=10usize);
        let recipients: RecipientMap =
            (0..n_cells).map(|i| ((i as RegionId % 3, (i / 3) as Slot), rng.gen_range(0.1..3.0))).collect();
        let keys: Vec<(RegionId, Slot)> = recipients.keys().copied().collect();
        let candidates: Vec<Candidate> = (0..rng.gen_range(1..=10u32))
            .map(|u| Candidate {
                user: u,
                presence: keys.iter().copied().filter(|_| rng.gen_bool(0.3)).collect(),
                has_capacity: true,
                spare: f64::INFINITY,
            })
            .collect();
        let budget = rng.gen_range(1..=4);
        let greedy = select_carriers(0, &recipients, &candidates, budget).covered_mass();
        let opt = brute_optimum(&recipients, &candidates, budget);
        if opt > 0.0 {
            worst = worst.min(greedy / opt);
        }
    }
    outcome(
        cc_bad == 0 && pop_bad == 0 && worst >= GREEDY_BOUND - 1e-12,
        format!(
            "clustering mismatches {cc_bad}/400; popularity mismatches {pop_bad}/{cascades}; worst greedy/optimum {worst:.4} (bound {GREEDY_BOUND:.4})"
        ),
    )
}

fn c4_c5_figures() -> (Outcome, Outcome) {
    let mut rhos = Vec::new();
    let mut medians = Vec::new();
    for seed in 1..=10u64 {
        let cfg = ScenarioConfig { seed, ..Default::default() };
        let run = simulate(&cfg).expect("scenario");
        let fig2 = fig2_experiment(&run.trees, &run.graph, seed).expect("fig2");
        rhos.push(fig2.rho.unwrap_or(f64::NAN));
        let median = |class| {
            distance_cdf(&run.trees, &run.graph, Some(class), DistanceMode::Pairwise).expect("cdf").median()
        };
        medians.push((median(PopularityClass::Unpopular), median(PopularityClass::Popular)));
    }
    let neg = rhos.iter().filter(|&&r| r <= RHO_MAX).count();
    let local = medians.iter().filter(|(u, p)| u < p).count();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
    (
        outcome(neg >= 9, format!("rho <= {RHO_MAX} on {neg}/10 seeds: {}", fmt(&rhos))),
        outcome(
            local >= 9,
            format!(
                "unpopular median < popular median on {local}/10 seeds; popular medians (km) {}",
                fmt(&medians.iter().map(|m| m.1).collect::<Vec<_>>())
            ),
        ),
    )
}

fn c6_influence() -> Outcome {
    let hand = [
        (1.6, 0.9, 10, 3.5155593237379517),
        (1.6, 0.9, 2, 0.9404586638433905),
        (1.6, 0.9, 100, 7.199695472528425),
        (2.5, 0.2, 50, 5.756462732485115),
        (0.7, 3.0, 7, 2.131165706406396),
    ];
    let hand_ok = hand.iter().all(|&(c1, c2, s, want)| (geo_influence_index(s, c1, c2).expect("index") - want).abs() <= HAND_TOL);

    let (c1, c2) = (1.6, 0.9);
    let xs: Vec<f64> = (0..50).map(|i| 5.0 * 1.1f64.powi(i)).collect();
    let clean: Vec<(f64, f64)> = xs.iter().map(|&s| (s, c1 * (c2 * s).ln())).collect();
    let (f1, f2) = fit_c1_c2(&clean).expect("fit");
    let exact = (f1 - c1).abs() < 1e-9 && (f2 - c2).abs() < 1e-9;

    let noise = Normal::new(0.0, FIT_NOISE).expect("normal");
    let mut rng: SimRng = rng_for(6, "acceptance-fit", 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let noisy: Vec<(f64, f64)> = clean.iter().map(|&(s, y)| (s, y * (1.0 + noise.sample(&mut rng)))).collect();
        let (n1, _) = fit_c1_c2(&noisy).expect("noisy fit");
        worst = worst.max((n1 - c1).abs() / c1);
    }
    outcome(
        hand_ok && exact && worst <= C1_TOL,
        format!(
            "hand values {}; noiseless fit ({f1:.12}, {f2:.12}); worst c1 error under 5% noise {:.2}%",
            if hand_ok { "match" } else { "differ" },
            100.0 * worst
        ),
    )
}

fn c7_ordering() -> Outcome {
    let strategies = [
        Strategy::Replication(ReplicationStrategy::Static),
        Strategy::Replication(ReplicationStrategy::InfluenceIndex),
        Strategy::Replication(ReplicationStrategy::Oracle),
    ];
    let cmp = compare_strategies(&ScenarioConfig::default(), &strategies, 20).expect("compare");
    let mean = |s: &str| cmp.row(s, "local_hit_ratio").expect("row").mean;
    let (st, ii, or) = (mean("static"), mean("influence-index"), mean("oracle"));
    let diff = cmp.row("influence-index", "local_hit_ratio").expect("row");
    outcome(
        or >= ii && ii >= st && diff.ci_low > 0.0,
        format!(
            "local hit ratio oracle {or:.4} / influence-index {ii:.4} / static {st:.4}; influence-index - static 95% CI [{:.4}, {:.4}]",
            diff.ci_low, diff.ci_high
        ),
    )
}

fn c8_prediction() -> Outcome {
    let horizon = 12;
    let mut diffs = Vec::new();
    for seed in 1..=20u64 {
        let c = corpus::region_signal(300, horizon, seed).expect("corpus");
        let scale =
            OnlineModel::scale_from(&c.items.iter().map(|i| i.features.clone()).collect::<Vec<_>>(), horizon);
        let mut model = OnlineModel::new(PredictorConfig { horizon, ..Default::default() }, 2, scale).expect("model");
        let online = replay_online(&mut model, &c.items).expect("online");
        let samples: Vec<_> = c.items.iter().map(|i| (i.features[0].views(), i.level)).collect();
        let table = ViewThresholdTable::fit(1, &samples, 2).expect("table");
        let baseline = replay_baseline(&table, &c.items, horizon).expect("baseline");
        diffs.push(popularity::mean_reward(&online) - popularity::mean_reward(&baseline));
    }
    let (mean, lo, hi) = paired_interval(&diffs).expect("interval");
    outcome(lo > 0.0, format!("online - baseline reward {mean:.4}, 95% CI [{lo:.4}, {hi:.4}] over 20 seeds"))
}

fn remote_friends_scenario() -> bool {
    // a=0 shares in region 0; friends c=2, d=3 in region 1 watch at slots 2
    // and 3; b=1 stays in region 0; e=4 moves to region 1 after slot 0.
    let stay = || UserMobility::new(vec![0, 1], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 50.0).expect("chain");
    let mover = UserMobility::new(vec![0, 1], vec![vec![0.0, 1.0], vec![0.0, 1.0]], 1.0).expect("chain");
    let model = MobilityModel::new(vec![stay(), stay(), stay(), stay(), mover]);
    let start = [0, 0, 1, 1, 0];
    let recipients = aggregate(&[
        PredictedRecipient { user: 2, region: 1, window: 2, weight: 1.0 },
        PredictedRecipient { user: 3, region: 1, window: 3, weight: 1.0 },
    ]);
    let candidates: Vec<Candidate> = [1u32, 4]
        .iter()
        .map(|&u| Candidate::from_itinerary(u, &predict_mobility(&model, u, start[u as usize], 0, 4).expect("path"), true))
        .collect();
    let assignment = select_carriers(7, &recipients, &candidates, 2);

    let trace = MobilityTrace::new(vec![
        vec![TraceStay { region: 0, enter: 0, leave: 5 }],
        vec![TraceStay { region: 0, enter: 0, leave: 5 }],
        vec![TraceStay { region: 1, enter: 0, leave: 5 }],
        vec![TraceStay { region: 1, enter: 0, leave: 5 }],
        vec![TraceStay { region: 0, enter: 0, leave: 1 }, TraceStay { region: 1, enter: 1, leave: 5 }],
    ])
    .expect("trace");
    let mut caches: Vec<DeviceCache> = (0..5).map(|u| DeviceCache::new(u, 1, 5)).collect();
    let mut holders = BTreeMap::new();
    for &c in &assignment.carriers {
        caches[c as usize].store(7, 1, 0);
        holders.entry(7).or_insert_with(BTreeSet::new).insert(c);
    }
    let mut deliveries = Vec::new();
    for (slot, viewer) in [(1, None), (2, Some(2)), (3, Some(3)), (4, None)] {
        let requests: Vec<(UserId, u32)> = viewer.map(|v| (v, 7)).into_iter().collect();
        for ev in d2d_step(slot, &trace.positions(slot), &requests, &holders, &mut caches) {
            deliveries.push((ev.from, ev.to, ev.slot));
        }
    }
    assignment.carriers == vec![4] && deliveries == vec![(Some(4), 2, 2), (Some(4), 3, 3)]
}

fn c9_d2d() -> Outcome {
    let strategies = [Strategy::D2d(D2dStrategy::Flood), Strategy::D2d(D2dStrategy::Coverage)];
    let cmp = compare_strategies(&ScenarioConfig::default(), &strategies, 20).expect("compare");
    let flood = cmp.per_seed("d2d-flood", "d2d_delivery_ratio").expect("flood");
    let cover = cmp.per_seed("d2d-coverage", "d2d_delivery_ratio").expect("coverage");
    let wins = cover.iter().zip(&flood).filter(|(c, f)| c >= f).count();
    let remote = remote_friends_scenario();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    outcome(
        wins >= 18 && remote,
        format!(
            "coverage >= flood on {wins}/20 seeds (means {:.4} vs {:.4}); hand-built carrier scenario {}",
            mean(&cover),
            mean(&flood),
            if remote { "exact" } else { "wrong" }
        ),
    )
}

fn run_cli(config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_socvid"))
        .args(["simulate", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .is_ok_and(|o| o.status.success())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("run dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("file"))
        })
        .collect()
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = tmp.path().join("scenario.toml");
    std::fs::write(&config, "seed = 11\nhorizon = 120\n[d2d]\nstrategy = \"coverage\"\n").expect("config");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if !(run_cli(&config, &a) && run_cli(&config, &b)) {
        return outcome(false, "simulate failed");
    }
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    outcome(
        fa.len() == fb.len() && differing.is_empty() && fa.contains_key("manifest.json"),
        format!("{} files compared; differing: {differing:?}", fa.len()),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &str, o: Outcome, secs: f64| {
        println!("criterion {id:>2} {name:<22} {} ({}) [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o));
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed().as_secs_f64())
    };
    let (o, t) = timed(&c1_zipf);
    report(1, "zipf law", o, t);
    let (o, t) = timed(&c2_sir);
    report(2, "sir legality", o, t);
    let (o, t) = timed(&c3_oracles);
    report(3, "oracle equivalence", o, t);
    let started = Instant::now();
    let (c4, c5) = c4_c5_figures();
    let shared = started.elapsed().as_secs_f64();
    report(4, "size vs clustering", c4, shared);
    report(5, "distance by class", c5, shared);
    let (o, t) = timed(&c6_influence);
    report(6, "influence index", o, t);
    let (o, t) = timed(&c7_ordering);
    report(7, "replication ordering", o, t);
    let (o, t) = timed(&c8_prediction);
    report(8, "prediction reward", o, t);
    let (o, t) = timed(&c9_d2d);
    report(9, "d2d ordering", o, t);
    let (o, t) = timed(&c10_determinism);
    report(10, "determinism", o, t);

    let unexpected: Vec<u32> =
        results.iter().filter(|(id, o)| !o.pass && !EXPECTED_FAILURES.contains(id)).map(|r| r.0).collect();
    let passed = results.iter().filter(|r| r.1.pass).count();
    println!("acceptance: {passed}/{} criteria pass; expected failures {EXPECTED_FAILURES:?}", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        ExitCode::FAILURE
    }
}
