//! CSV logs written by a run and read back by the analysis tools.

use std::path::Path;

use serde::Deserialize;

use crate::d2d::{D2dEvent, D2dEventKind, MobilityTrace, TraceStay};
use crate::delivery::{PlacementAction, PlacementChange, ServeSource};
use crate::error::{Error, Result};
use crate::graph::{csv_records, parse_err};
use crate::popularity::{PopularityLevel, PredictionRecord};
use crate::propagation::{EventKind, PropagationEvent, PropagationTree, Video};
use crate::{RegionId, Slot, UserId, VideoId};

pub const EVENTS_HEADER: [&str; 5] = ["slot", "video_id", "user_id", "event", "parent_id"];
pub const DELIVERY_HEADER: [&str; 6] = ["slot", "video_id", "user_id", "region_id", "source", "cost"];
pub const D2D_HEADER: [&str; 6] = ["slot", "video_id", "from_user", "to_user", "region_id", "event"];
pub const MOBILITY_HEADER: [&str; 4] = ["user_id", "region_id", "enter_slot", "leave_slot"];
pub const PREDICTIONS_HEADER: [&str; 5] = ["video_id", "commit_age", "predicted_level", "true_level", "reward"];
pub const PLACEMENTS_HEADER: [&str; 4] = ["slot", "video_id", "region_id", "action"];
pub const VIDEOS_HEADER: [&str; 4] = ["video_id", "t_init", "initiator", "size_units"];

/// A log tagged with the scenario that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLog<T> {
    pub scenario_id: String,
    pub records: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub slot: Slot,
    pub video: VideoId,
    pub user: UserId,
    pub region: RegionId,
    pub source: ServeSource,
    pub cost: f64,
}

/// Per-video prediction rows plus one mean-reward summary per predictor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionReport {
    pub rows: Vec<PredictionRecord>,
    pub summaries: Vec<(String, f64)>,
}

impl PredictionReport {
    pub fn summary(&self, name: &str) -> Option<f64> {
        self.summaries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

pub const SUMMARY_PREFIX: &str = "summary:";

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_events(path: &Path, events: &[PropagationEvent]) -> Result<()> {
    write_rows(
        path,
        EVENTS_HEADER,
        events.iter().map(|e| {
            [e.slot.to_string(), e.video.to_string(), e.user.to_string(), e.kind.as_str().to_owned(), opt(e.parent)]
        }),
    )
}

#[derive(Deserialize)]
struct EventRow {
    slot: Slot,
    video_id: VideoId,
    user_id: UserId,
    event: String,
    parent_id: Option<UserId>,
}

pub fn read_events(path: &Path) -> Result<Vec<PropagationEvent>> {
    let rows: Vec<EventRow> = csv_records(path, &EVENTS_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let kind = EventKind::parse(&r.event)
                .ok_or_else(|| parse_err(path, i + 2, format!("unknown event {:?}", r.event)))?;
            Ok(PropagationEvent { slot: r.slot, video: r.video_id, user: r.user_id, kind, parent: r.parent_id })
        })
        .collect()
}

pub fn write_delivery(path: &Path, records: &[DeliveryRecord]) -> Result<()> {
    write_rows(
        path,
        DELIVERY_HEADER,
        records.iter().map(|r| {
            [
                r.slot.to_string(),
                r.video.to_string(),
                r.user.to_string(),
                r.region.to_string(),
                r.source.as_str().to_owned(),
                r.cost.to_string(),
            ]
        }),
    )
}

#[derive(Deserialize)]
struct DeliveryRow {
    slot: Slot,
    video_id: VideoId,
    user_id: UserId,
    region_id: RegionId,
    source: String,
    cost: f64,
}

pub fn read_delivery(path: &Path) -> Result<Vec<DeliveryRecord>> {
    let rows: Vec<DeliveryRow> = csv_records(path, &DELIVERY_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let source = ServeSource::parse(&r.source)
                .ok_or_else(|| parse_err(path, i + 2, format!("unknown source {:?}", r.source)))?;
            Ok(DeliveryRecord { slot: r.slot, video: r.video_id, user: r.user_id, region: r.region_id, source, cost: r.cost })
        })
        .collect()
}

pub fn write_d2d(path: &Path, events: &[D2dEvent]) -> Result<()> {
    write_rows(
        path,
        D2D_HEADER,
        events.iter().map(|e| {
            [
                e.slot.to_string(),
                e.video.to_string(),
                opt(e.from),
                e.to.to_string(),
                e.region.to_string(),
                e.kind.as_str().to_owned(),
            ]
        }),
    )
}

#[derive(Deserialize)]
struct D2dRow {
    slot: Slot,
    video_id: VideoId,
    from_user: Option<UserId>,
    to_user: UserId,
    region_id: RegionId,
    event: String,
}

pub fn read_d2d(path: &Path) -> Result<Vec<D2dEvent>> {
    let rows: Vec<D2dRow> = csv_records(path, &D2D_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let kind = D2dEventKind::parse(&r.event)
                .ok_or_else(|| parse_err(path, i + 2, format!("unknown d2d event {:?}", r.event)))?;
            Ok(D2dEvent { slot: r.slot, video: r.video_id, from: r.from_user, to: r.to_user, region: r.region_id, kind })
        })
        .collect()
}

pub fn write_mobility(path: &Path, trace: &MobilityTrace) -> Result<()> {
    let rows = (0..trace.n_users() as UserId).flat_map(|u| {
        trace.stays(u).iter().map(move |s| {
            [u.to_string(), s.region.to_string(), s.enter.to_string(), s.leave.to_string()]
        })
    });
    write_rows(path, MOBILITY_HEADER, rows)
}

#[derive(Deserialize)]
struct MobilityRow {
    user_id: UserId,
    region_id: RegionId,
    enter_slot: Slot,
    leave_slot: Slot,
}

pub fn read_mobility(path: &Path) -> Result<MobilityTrace> {
    let rows: Vec<MobilityRow> = csv_records(path, &MOBILITY_HEADER)?;
    let mut stays: Vec<Vec<TraceStay>> = Vec::new();
    for r in rows {
        let u = r.user_id as usize;
        if stays.len() <= u {
            stays.resize(u + 1, Vec::new());
        }
        stays[u].push(TraceStay { region: r.region_id, enter: r.enter_slot, leave: r.leave_slot });
    }
    MobilityTrace::new(stays)
}

pub fn write_predictions(path: &Path, report: &PredictionReport) -> Result<()> {
    let rows = report.rows.iter().map(|r| {
        [
            r.video.to_string(),
            r.commit_age.to_string(),
            r.predicted.0.to_string(),
            r.true_level.0.to_string(),
            r.reward.to_string(),
        ]
    });
    let summaries = report.summaries.iter().map(|(name, mean)| {
        [format!("{SUMMARY_PREFIX}{name}"), String::new(), String::new(), String::new(), mean.to_string()]
    });
    write_rows(path, PREDICTIONS_HEADER, rows.chain(summaries))
}

#[derive(Deserialize)]
struct PredictionRow {
    video_id: String,
    commit_age: Option<u32>,
    predicted_level: Option<u32>,
    true_level: Option<u32>,
    reward: f64,
}

pub fn read_predictions(path: &Path) -> Result<PredictionReport> {
    let rows: Vec<PredictionRow> = csv_records(path, &PREDICTIONS_HEADER)?;
    let mut report = PredictionReport::default();
    for (i, r) in rows.into_iter().enumerate() {
        let line = i + 2;
        if let Some(name) = r.video_id.strip_prefix(SUMMARY_PREFIX) {
            report.summaries.push((name.to_owned(), r.reward));
            continue;
        }
        let video = r
            .video_id
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad video id {:?}: {e}", r.video_id)))?;
        let (Some(commit_age), Some(p), Some(t)) = (r.commit_age, r.predicted_level, r.true_level) else {
            return Err(parse_err(path, line, "prediction row with empty fields"));
        };
        report.rows.push(PredictionRecord {
            video,
            commit_age,
            predicted: PopularityLevel(p),
            true_level: PopularityLevel(t),
            reward: r.reward,
        });
    }
    Ok(report)
}

pub fn write_placements(path: &Path, history: &[PlacementChange]) -> Result<()> {
    write_rows(
        path,
        PLACEMENTS_HEADER,
        history.iter().map(|c| {
            let action = match c.action {
                PlacementAction::Add => "ADD",
                PlacementAction::Remove => "REMOVE",
            };
            [c.slot.to_string(), c.video.to_string(), c.region.to_string(), action.to_owned()]
        }),
    )
}

pub fn write_videos(path: &Path, videos: &[Video]) -> Result<()> {
    write_rows(
        path,
        VIDEOS_HEADER,
        videos.iter().map(|v| {
            [v.id.to_string(), v.t_init.to_string(), v.initiator.to_string(), v.size_units.to_string()]
        }),
    )
}

#[derive(Deserialize)]
struct VideoRow {
    video_id: VideoId,
    t_init: Slot,
    initiator: UserId,
    size_units: u64,
}

pub fn read_videos(path: &Path) -> Result<Vec<Video>> {
    let rows: Vec<VideoRow> = csv_records(path, &VIDEOS_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| Video { id: r.video_id, t_init: r.t_init, initiator: r.initiator, size_units: r.size_units })
        .collect())
}

/// Rebuilds every video's tree from an event log, observed through `end`.
pub fn rebuild_trees(videos: &[Video], events: &[PropagationEvent], end: Slot) -> Result<Vec<PropagationTree>> {
    let mut trees: Vec<PropagationTree> = videos.iter().map(PropagationTree::new).collect();
    let index: std::collections::HashMap<VideoId, usize> =
        videos.iter().enumerate().map(|(i, v)| (v.id, i)).collect();
    for ev in events {
        let &i = index
            .get(&ev.video)
            .ok_or_else(|| Error::Integrity(format!("event for unknown video {}", ev.video)))?;
        if ev.kind != EventKind::Init {
            trees[i].apply(*ev);
        }
    }
    for t in &mut trees {
        t.observed_until = end.max(t.observed_until);
    }
    Ok(trees)
}
