//! SORT-style multi-object tracker: one constant-velocity Kalman filter
//! per track, IoU-gated optimal association, and hit/age lifecycle
//! management. The controller consumes a single confirmed "primary"
//! track per frame.

pub mod assignment;
pub mod kalman;

use serde::{Deserialize, Serialize};

pub use assignment::{associate, Association};

use crate::detector::Detection;
use crate::geometry::BoundingBox;
use kalman::{StateCovariance, StateVector};

/// Rule picking the track handed to the controller when several are
/// confirmed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryRule {
    /// Largest box area wins (the pad dominates the frame on approach).
    #[default]
    LargestArea,
    /// Smallest distance from the frame center wins.
    NearestCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Association gate: pairs below this IoU are not matched.
    pub iou_threshold: f64,
    /// Frames a track may coast without a detection before retirement.
    pub max_age: u32,
    /// Matched updates required before a track counts as confirmed.
    pub min_hits: u32,
    pub primary_rule: PrimaryRule,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            max_age: 10,
            min_hits: 3,
            primary_rule: PrimaryRule::LargestArea,
        }
    }
}

/// One tracked object.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub id: u64,
    pub mean: StateVector,
    pub covariance: StateCovariance,
    /// Total matched updates received.
    pub hits: u32,
    /// Frames since the last matched detection (0 right after an update).
    pub age_since_update: u32,
}

impl TrackState {
    fn from_detection(id: u64, det: &Detection) -> Self {
        let (mean, covariance) = kalman::initiate(&det.bbox);
        Self {
            id,
            mean,
            covariance,
            hits: 1,
            age_since_update: 0,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        kalman::box_from_state(&self.mean)
    }

    /// Kalman time update; coasting age grows.
    pub fn predict(&self) -> Self {
        let (mean, covariance) = kalman::predict(&self.mean, &self.covariance);
        Self {
            mean,
            covariance,
            age_since_update: self.age_since_update + 1,
            ..*self
        }
    }

    /// Kalman measurement update from a matched detection.
    pub fn update(&self, det: &Detection) -> Self {
        let z = kalman::measurement_from_box(&det.bbox);
        let (mean, covariance) = kalman::update(&self.mean, &self.covariance, &z);
        Self {
            mean,
            covariance,
            hits: self.hits + 1,
            age_since_update: 0,
            ..*self
        }
    }
}

/// Snapshot of a confirmed track handed to the consumer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackView {
    pub id: u64,
    pub bbox: BoundingBox,
    pub hits: u32,
    pub age_since_update: u32,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    tracks: Vec<TrackState>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// One frame: predict all, associate, update matched, spawn tracks
    /// for unmatched detections, retire stale tracks. Returns the
    /// confirmed tracks (including coasting ones, whose box is the
    /// prediction).
    pub fn step(&mut self, detections: &[Detection]) -> Vec<TrackView> {
        self.tracks = self.tracks.iter().map(TrackState::predict).collect();

        let track_boxes: Vec<BoundingBox> = self.tracks.iter().map(TrackState::bbox).collect();
        let det_boxes: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
        let assoc = associate(&track_boxes, &det_boxes, self.config.iou_threshold);

        for &(t, d) in &assoc.matches {
            self.tracks[t] = self.tracks[t].update(&detections[d]);
        }
        for &d in &assoc.unmatched_detections {
            self.tracks
                .push(TrackState::from_detection(self.next_id, &detections[d]));
            self.next_id += 1;
        }
        let max_age = self.config.max_age;
        self.tracks.retain(|t| t.age_since_update <= max_age);

        self.confirmed()
    }

    fn confirmed(&self) -> Vec<TrackView> {
        self.tracks
            .iter()
            .filter(|t| t.hits >= self.config.min_hits)
            .map(|t| TrackView {
                id: t.id,
                bbox: t.bbox(),
                hits: t.hits,
                age_since_update: t.age_since_update,
            })
            .collect()
    }

    /// The track the controller should follow, per the configured rule.
    /// Ties break toward the oldest id so the choice is deterministic.
    pub fn primary<'a>(&self, confirmed: &'a [TrackView]) -> Option<&'a TrackView> {
        match self.config.primary_rule {
            PrimaryRule::LargestArea => confirmed.iter().min_by(|a, b| {
                b.bbox
                    .area()
                    .partial_cmp(&a.bbox.area())
                    .unwrap()
                    .then(a.id.cmp(&b.id))
            }),
            PrimaryRule::NearestCenter => confirmed.iter().min_by(|a, b| {
                let da = (a.bbox.cx - 0.5).hypot(a.bbox.cy - 0.5);
                let db = (b.bbox.cx - 0.5).hypot(b.bbox.cy - 0.5);
                da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
            }),
        }
    }
}
