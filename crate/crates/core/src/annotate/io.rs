//! JSON-Lines records for the alignment pipeline and the per-shot driver.

use super::{
    assign_poses_frame, classify_pattern, extract_valid_clips, match_face_tracks, subset_keypoints,
    AssignConfig, BBox, FaceTrack, InteractionPattern, Keypoint2D, PatternThresholds, PersonTrack,
    PoseSkeleton133, Shot, SpeakingScoreCurve,
};
use crate::error::{Error, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_id: u32,
    pub start_frame: u32,
    pub end_frame: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonRecord {
    pub frame: u32,
    pub person_id: u32,
    pub bbox: [f32; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: u32,
    /// 133 x [x, y, confidence]
    pub keypoints: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceTrackRecord {
    pub track_id: u32,
    pub frame: u32,
    pub bbox: [f32; 4],
    pub speaking_score: f32,
}

/// One aligned output row of `aligned.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignedRecord {
    pub frame: u32,
    pub person_id: u32,
    /// 59 x [x, y, confidence]
    pub keypoints59: Vec<[f32; 3]>,
    pub speaking_score: f32,
}

/// One valid-clip row of `clips.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipSummary {
    pub shot_id: u32,
    pub start_frame: u32,
    pub end_frame: u32,
    pub pattern: InteractionPattern,
    pub overlap_fraction: f32,
    pub turn_count: usize,
}

/// Settings for the alignment driver.
#[derive(Debug, Clone)]
pub struct AlignParams {
    pub assign: AssignConfig,
    pub thresholds: PatternThresholds,
    pub min_speakers: usize,
    pub min_active_seconds: f32,
    pub fps: f32,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            assign: AssignConfig::default(),
            thresholds: PatternThresholds::default(),
            min_speakers: 2,
            min_active_seconds: 1.0,
            fps: 15.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignOutput {
    pub aligned: Vec<AlignedRecord>,
    pub clips: Vec<ClipSummary>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut file, r)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

fn bbox_from_arr(a: [f32; 4]) -> Result<BBox> {
    BBox::new(a[0], a[1], a[2], a[3])
}

/// Run pose-speech alignment over all shots.
///
/// Per shot: match face tracks to person tracks once, then assign poses to
/// persons frame by frame; finally extract valid multi-speaker clips and
/// classify their interaction pattern. Missing speaking scores default to
/// -1 (silent) when building per-track curves and to 0 on aligned rows for
/// persons without a matched track entry at that frame.
pub fn align_shots(
    shots: &[ShotRecord],
    persons: &[PersonRecord],
    poses: &[PoseRecord],
    faces: &[FaceTrackRecord],
    params: &AlignParams,
) -> Result<AlignOutput> {
    let mut aligned = Vec::new();
    let mut clips = Vec::new();

    for shot_rec in shots {
        let shot = Shot::new(shot_rec.shot_id, shot_rec.start_frame, shot_rec.end_frame)?;
        let in_shot = |f: u32| f >= shot.start_frame && f < shot.end_frame;

        // person tracks within the shot
        let mut person_boxes: BTreeMap<u32, Vec<(u32, BBox)>> = BTreeMap::new();
        for p in persons.iter().filter(|p| in_shot(p.frame)) {
            person_boxes
                .entry(p.person_id)
                .or_default()
                .push((p.frame, bbox_from_arr(p.bbox)?));
        }
        let mut person_tracks = Vec::new();
        for (id, mut boxes) in person_boxes {
            boxes.sort_by_key(|(f, _)| *f);
            person_tracks.push(PersonTrack::new(id, boxes)?);
        }

        // face tracks within the shot
        let mut face_entries: BTreeMap<u32, Vec<(u32, BBox, f32)>> = BTreeMap::new();
        for f in faces.iter().filter(|f| in_shot(f.frame)) {
            face_entries.entry(f.track_id).or_default().push((
                f.frame,
                bbox_from_arr(f.bbox)?,
                f.speaking_score,
            ));
        }
        let mut face_tracks = Vec::new();
        for (id, mut entries) in face_entries {
            entries.sort_by_key(|(f, _, _)| *f);
            face_tracks.push(FaceTrack::new(id, entries)?);
        }

        let track_to_person = match_face_tracks(&face_tracks, &person_tracks);
        let person_to_track: BTreeMap<u32, u32> =
            track_to_person.iter().map(|(t, p)| (*p, *t)).collect();

        // frame-by-frame pose assignment
        let mut poses_by_frame: BTreeMap<u32, Vec<&PoseRecord>> = BTreeMap::new();
        for p in poses.iter().filter(|p| in_shot(p.frame)) {
            poses_by_frame.entry(p.frame).or_default().push(p);
        }
        for (&frame, frame_poses) in &poses_by_frame {
            let frame_persons: Vec<(u32, BBox)> = person_tracks
                .iter()
                .filter_map(|t| t.box_at(frame).map(|b| (t.person_id, *b)))
                .collect();
            let mut skeletons = Vec::with_capacity(frame_poses.len());
            for p in frame_poses {
                let kps: Vec<Keypoint2D> = p
                    .keypoints
                    .iter()
                    .map(|[x, y, c]| Keypoint2D::new(*x, *y, *c))
                    .collect();
                skeletons.push(subset_keypoints(&PoseSkeleton133::new(kps)?));
            }
            let assignment = assign_poses_frame(&skeletons, &frame_persons, &params.assign);
            let mut rows: Vec<AlignedRecord> = assignment
                .iter()
                .map(|(&pose_idx, &person_id)| {
                    let score = person_to_track
                        .get(&person_id)
                        .and_then(|tid| {
                            face_tracks
                                .iter()
                                .find(|t| t.track_id == *tid)
                                .and_then(|t| t.score_at(frame))
                        })
                        .unwrap_or(0.0);
                    AlignedRecord {
                        frame,
                        person_id,
                        keypoints59: skeletons[pose_idx]
                            .keypoints()
                            .iter()
                            .map(|k| [k.x, k.y, k.confidence])
                            .collect(),
                        speaking_score: score,
                    }
                })
                .collect();
            rows.sort_by_key(|r| r.person_id);
            aligned.extend(rows);
        }

        // valid clips and their interaction pattern
        for (start, end) in extract_valid_clips(
            &shot,
            &face_tracks,
            params.min_speakers,
            params.min_active_seconds,
            params.fps,
        ) {
            let curves: Vec<SpeakingScoreCurve> = face_tracks
                .iter()
                .map(|t| {
                    let scores: Vec<f32> = (start..end)
                        .map(|f| t.score_at(f).unwrap_or(-1.0))
                        .collect();
                    SpeakingScoreCurve::new(scores, params.fps)
                })
                .collect::<Result<_>>()?;
            if curves.len() < 2 {
                continue;
            }
            let stats = classify_pattern(&curves, &params.thresholds)?;
            clips.push(ClipSummary {
                shot_id: shot.shot_id,
                start_frame: start,
                end_frame: end,
                pattern: stats.pattern,
                overlap_fraction: stats.overlap_fraction,
                turn_count: stats.turn_count,
            });
        }
    }

    Ok(AlignOutput { aligned, clips })
}
