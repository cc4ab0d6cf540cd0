//! Speaking-score analysis: transition detection, interaction-pattern
//! classification and valid-clip extraction.

use super::{FaceTrack, Shot, SpeakingScoreCurve};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Conversation interaction pattern of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionPattern {
    Monologue,
    TurnTaking,
    OverTalking,
    TalkingListening,
    Mixed,
}

impl std::fmt::Display for InteractionPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InteractionPattern::Monologue => "monologue",
            InteractionPattern::TurnTaking => "turn_taking",
            InteractionPattern::OverTalking => "over_talking",
            InteractionPattern::TalkingListening => "talking_listening",
            InteractionPattern::Mixed => "mixed",
        };
        write!(f, "{s}")
    }
}

/// Classification result with the statistics it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStats {
    pub pattern: InteractionPattern,
    /// Frames with >= 2 active speakers over frames with >= 1 active speaker.
    pub overlap_fraction: f32,
    /// Number of changes in the identity of the dominant speaker.
    pub turn_count: usize,
    /// Zero crossings per curve, concatenated in curve order.
    pub transition_frames: Vec<usize>,
}

/// Decision thresholds for [`classify_pattern`]. The paper names the
/// patterns but fixes no numbers, so every cutoff here is overridable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternThresholds {
    /// overlap_fraction at or above this is over-talking.
    pub overtalk_overlap: f32,
    /// Turn-taking tolerates overlap strictly below this.
    pub turn_overlap_max: f32,
    /// Talking-listening needs at least this fraction of fully silent frames
    /// (speakers hand over through pauses rather than cross-fades).
    pub min_gap_fraction: f32,
    /// Median-smoothing window (frames) used by transition detection.
    pub smoothing_window: usize,
}

impl Default for PatternThresholds {
    fn default() -> Self {
        Self {
            overtalk_overlap: 0.3,
            turn_overlap_max: 0.1,
            min_gap_fraction: 0.05,
            smoothing_window: 5,
        }
    }
}

/// Centered median filter; the window shrinks at the boundaries. Window 1 or
/// 0 returns the input unchanged.
pub fn median_smooth(scores: &[f32], window: usize) -> Vec<f32> {
    if window <= 1 || scores.is_empty() {
        return scores.to_vec();
    }
    let h = window / 2;
    let n = scores.len();
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(window);
    for i in 0..n {
        let lo = i.saturating_sub(h);
        let hi = (i + h).min(n - 1);
        buf.clear();
        buf.extend_from_slice(&scores[lo..=hi]);
        buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = buf.len();
        let v = if m % 2 == 1 {
            buf[m / 2]
        } else {
            0.5 * (buf[m / 2 - 1] + buf[m / 2])
        };
        out.push(v);
    }
    out
}

fn sign(x: f32) -> i8 {
    // exact zeros count as positive
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Frames where the sign of the median-smoothed score flips. The returned
/// index is the first frame of the new sign.
pub fn detect_transitions(curve: &SpeakingScoreCurve, window: usize) -> Vec<usize> {
    let s = median_smooth(&curve.scores, window);
    s.windows(2)
        .enumerate()
        .filter(|(_, w)| sign(w[0]) != sign(w[1]))
        .map(|(i, _)| i + 1)
        .collect()
}

fn active(x: f32) -> bool {
    x > 0.0
}

/// Classify the interaction pattern of two or more equal-length curves.
///
/// Curves are binarized at zero. The decision ladder:
/// 1. exactly one speaker ever active -> monologue;
/// 2. overlap_fraction >= overtalk_overlap -> over-talking;
/// 3. overlap below turn_overlap_max with at least one dominant-speaker
///    change: zero overlap, a visible silence gap and a transition for every
///    active speaker -> talking-listening, otherwise -> turn-taking;
/// 4. anything else -> mixed.
///
/// Invariant to uniform positive rescaling of all curves.
pub fn classify_pattern(
    curves: &[SpeakingScoreCurve],
    thresholds: &PatternThresholds,
) -> Result<PatternStats> {
    if curves.len() < 2 {
        return Err(Error::Format(format!(
            "classify_pattern needs >= 2 curves, got {}",
            curves.len()
        )));
    }
    let n = curves[0].len();
    if curves.iter().any(|c| c.len() != n) {
        return Err(Error::Format("curves have mismatched lengths".into()));
    }

    let mut frames_any = 0usize;
    let mut frames_multi = 0usize;
    let mut frames_silent = 0usize;
    let mut turn_count = 0usize;
    let mut dominant: Option<usize> = None;
    for t in 0..n {
        let mut best: Option<(usize, f32)> = None;
        let mut n_active = 0usize;
        for (i, c) in curves.iter().enumerate() {
            let v = c.scores[t];
            if active(v) {
                n_active += 1;
                let better = match best {
                    None => true,
                    Some((_, bv)) => v > bv,
                };
                if better {
                    best = Some((i, v));
                }
            }
        }
        if n_active >= 1 {
            frames_any += 1;
        } else {
            frames_silent += 1;
        }
        if n_active >= 2 {
            frames_multi += 1;
        }
        if let Some((i, _)) = best {
            if let Some(prev) = dominant {
                if prev != i {
                    turn_count += 1;
                }
            }
            dominant = Some(i);
        }
    }
    let overlap_fraction = if frames_any > 0 {
        frames_multi as f32 / frames_any as f32
    } else {
        0.0
    };
    let gap_fraction = if n > 0 {
        frames_silent as f32 / n as f32
    } else {
        0.0
    };

    let mut transition_frames = Vec::new();
    let mut per_speaker_transitions = Vec::with_capacity(curves.len());
    for c in curves {
        let tr: Vec<usize> = c
            .scores
            .windows(2)
            .enumerate()
            .filter(|(_, w)| active(w[0]) != active(w[1]))
            .map(|(i, _)| i + 1)
            .collect();
        per_speaker_transitions.push(tr.len());
        transition_frames.extend(tr);
    }
    let active_speakers: Vec<usize> = curves
        .iter()
        .enumerate()
        .filter(|(_, c)| c.scores.iter().any(|&v| active(v)))
        .map(|(i, _)| i)
        .collect();

    let pattern = if active_speakers.len() == 1 {
        InteractionPattern::Monologue
    } else if active_speakers.is_empty() {
        InteractionPattern::Mixed
    } else if overlap_fraction >= thresholds.overtalk_overlap {
        InteractionPattern::OverTalking
    } else if overlap_fraction < thresholds.turn_overlap_max && turn_count >= 1 {
        let every_active_transitions = active_speakers
            .iter()
            .all(|&i| per_speaker_transitions[i] >= 1);
        if overlap_fraction == 0.0
            && gap_fraction >= thresholds.min_gap_fraction
            && every_active_transitions
        {
            InteractionPattern::TalkingListening
        } else {
            InteractionPattern::TurnTaking
        }
    } else {
        InteractionPattern::Mixed
    };

    Ok(PatternStats {
        pattern,
        overlap_fraction,
        turn_count,
        transition_frames,
    })
}

/// Activity predicate behind [`extract_valid_clips`]: within
/// `[start, end)`, at least `min_speakers` distinct tracks each have a
/// positive speaking score on at least `ceil(min_active_seconds * fps)`
/// frames.
pub fn valid_clip_predicate(
    tracks: &[FaceTrack],
    start: u32,
    end: u32,
    min_speakers: usize,
    min_active_seconds: f32,
    fps: f32,
) -> bool {
    let need = (min_active_seconds * fps).ceil().max(1.0) as usize;
    let qualified = tracks
        .iter()
        .filter(|t| {
            t.entries
                .iter()
                .filter(|(f, _, s)| *f >= start && *f < end && *s > 0.0)
                .count()
                >= need
        })
        .count();
    qualified >= min_speakers
}

/// Maximal sub-ranges of the shot satisfying [`valid_clip_predicate`].
///
/// The predicate is monotone under range extension (activity counts can only
/// grow), so any valid sub-range extends to the full shot: the result is the
/// whole shot when the predicate holds there and empty otherwise. Returned
/// ranges are disjoint by construction.
pub fn extract_valid_clips(
    shot: &Shot,
    tracks: &[FaceTrack],
    min_speakers: usize,
    min_active_seconds: f32,
    fps: f32,
) -> Vec<(u32, u32)> {
    if valid_clip_predicate(
        tracks,
        shot.start_frame,
        shot.end_frame,
        min_speakers,
        min_active_seconds,
        fps,
    ) {
        vec![(shot.start_frame, shot.end_frame)]
    } else {
        Vec::new()
    }
}
