//! Alignment and analysis stage of the data pipeline: keypoint subsetting,
//! pose/face-track-to-person assignment, speaking-score analysis and valid
//! clip extraction.

mod assign;
mod io;
mod skeleton;
mod speech;

pub use assign::{
    assign_poses_frame, keypoints_in_bbox, match_face_tracks, AssignConfig,
};
pub use io::{
    align_shots, read_jsonl, write_jsonl, AlignOutput, AlignParams, AlignedRecord, ClipSummary,
    FaceTrackRecord, PersonRecord, PoseRecord, ShotRecord,
};
pub use skeleton::{
    head_bbox, subset_keypoints, KeypointGroup, GROUP_LABELS, KP_ANKLE_L, KP_ANKLE_R, KP_EAR_L,
    KP_EAR_R, KP_ELBOW_L, KP_ELBOW_R, KP_HAND_L0, KP_HAND_R0, KP_HIP_L, KP_HIP_R, KP_KNEE_L,
    KP_KNEE_R, KP_NOSE, KP_SHOULDER_L, KP_SHOULDER_R, KP_TOE_L, KP_TOE_R, KP_WRIST_L, KP_WRIST_R,
    SUBSET_INDEX_MAP,
};
pub use speech::{
    classify_pattern, detect_transitions, extract_valid_clips, median_smooth, valid_clip_predicate,
    InteractionPattern, PatternStats, PatternThresholds,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A single 2D keypoint with detection confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint2D {
    pub x: f32,
    pub y: f32,
    pub confidence: f32,
}

impl Keypoint2D {
    pub fn new(x: f32, y: f32, confidence: f32) -> Self {
        Self { x, y, confidence }
    }
}

/// Full-body pose in COCO-WholeBody order (133 keypoints).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSkeleton133 {
    keypoints: Vec<Keypoint2D>,
}

impl PoseSkeleton133 {
    pub fn new(keypoints: Vec<Keypoint2D>) -> Result<Self> {
        if keypoints.len() != 133 {
            return Err(Error::Format(format!(
                "expected 133 keypoints, got {}",
                keypoints.len()
            )));
        }
        Ok(Self { keypoints })
    }

    pub fn keypoints(&self) -> &[Keypoint2D] {
        &self.keypoints
    }
}

/// Reduced 59-keypoint pose: 3 head, 12 torso/limb, 42 hand, 2 foot points.
///
/// The fixed ordering and the source indices are documented in
/// `docs/keypoints.md`; group labels are available via [`GROUP_LABELS`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSkeleton59 {
    keypoints: Vec<Keypoint2D>,
}

impl PoseSkeleton59 {
    pub fn new(keypoints: Vec<Keypoint2D>) -> Result<Self> {
        if keypoints.len() != 59 {
            return Err(Error::Format(format!(
                "expected 59 keypoints, got {}",
                keypoints.len()
            )));
        }
        Ok(Self { keypoints })
    }

    pub fn keypoints(&self) -> &[Keypoint2D] {
        &self.keypoints
    }

    pub fn group(&self, index: usize) -> KeypointGroup {
        GROUP_LABELS[index]
    }

    /// The three head keypoints, in order: nose, left ear, right ear.
    pub fn head(&self) -> [Keypoint2D; 3] {
        [self.keypoints[0], self.keypoints[1], self.keypoints[2]]
    }
}

/// Axis-aligned bounding box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
}

impl BBox {
    pub fn new(x0: f32, y0: f32, x1: f32, y1: f32) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            return Err(Error::Format(format!(
                "invalid bbox ({x0},{y0},{x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn area(&self) -> f32 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn center(&self) -> (f32, f32) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }

    /// Closed-box containment test.
    pub fn contains(&self, x: f32, y: f32) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Per-person bounding boxes across the frames of one shot.
#[derive(Debug, Clone)]
pub struct PersonTrack {
    pub person_id: u32,
    /// (frame_index, box), frame indices strictly increasing.
    pub boxes: Vec<(u32, BBox)>,
}

impl PersonTrack {
    pub fn new(person_id: u32, boxes: Vec<(u32, BBox)>) -> Result<Self> {
        if boxes.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Format(format!(
                "person {person_id}: frame indices not strictly increasing"
            )));
        }
        Ok(Self { person_id, boxes })
    }

    pub fn box_at(&self, frame: u32) -> Option<&BBox> {
        self.boxes
            .binary_search_by_key(&frame, |(f, _)| *f)
            .ok()
            .map(|i| &self.boxes[i].1)
    }
}

/// One face trajectory with a per-frame speaking score in [-1, 1].
#[derive(Debug, Clone)]
pub struct FaceTrack {
    pub track_id: u32,
    /// (frame_index, face box, speaking score), frame indices strictly increasing.
    pub entries: Vec<(u32, BBox, f32)>,
}

impl FaceTrack {
    pub fn new(track_id: u32, entries: Vec<(u32, BBox, f32)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Format(format!(
                "track {track_id}: frame indices not strictly increasing"
            )));
        }
        if let Some((f, _, s)) = entries.iter().find(|(_, _, s)| !(-1.0..=1.0).contains(s)) {
            return Err(Error::Format(format!(
                "track {track_id}: score {s} out of [-1,1] at frame {f}"
            )));
        }
        Ok(Self { track_id, entries })
    }

    pub fn score_at(&self, frame: u32) -> Option<f32> {
        self.entries
            .binary_search_by_key(&frame, |(f, _, _)| *f)
            .ok()
            .map(|i| self.entries[i].2)
    }
}

/// Per-frame speech activity for one person; near 1 speaking, near -1 silent.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakingScoreCurve {
    pub scores: Vec<f32>,
    pub frame_rate: f32,
}

impl SpeakingScoreCurve {
    pub fn new(scores: Vec<f32>, frame_rate: f32) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::Format(format!("score {s} out of [-1,1]")));
        }
        Ok(Self { scores, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// A continuous single-camera segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub shot_id: u32,
    pub start_frame: u32,
    pub end_frame: u32,
}

impl Shot {
    pub fn new(shot_id: u32, start_frame: u32, end_frame: u32) -> Result<Self> {
        if start_frame >= end_frame {
            return Err(Error::Format(format!(
                "shot {shot_id}: start {start_frame} >= end {end_frame}"
            )));
        }
        Ok(Self {
            shot_id,
            start_frame,
            end_frame,
        })
    }

    pub fn len(&self) -> u32 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One aligned annotation row: a person's pose and speaking score at a frame.
#[derive(Debug, Clone)]
pub struct AlignedAnnotation {
    pub frame_index: u32,
    pub person_id: u32,
    pub pose: PoseSkeleton59,
    pub speaking_score: f32,
}
