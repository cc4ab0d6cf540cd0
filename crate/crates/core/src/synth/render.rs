//! Scene rendering: stick figures with audio-driven mouth apertures, plus
//! the pixel-space aperture measurement used for ground truth and evaluation.

use super::audio::AudioFeatureTrack;
use super::figure::{mouth_anchor, IdentitySpec};
use crate::annotate::{
    InteractionPattern, PoseSkeleton59, SpeakingScoreCurve,
};
use crate::annotate::{KP_ANKLE_L, KP_ANKLE_R, KP_ELBOW_L, KP_ELBOW_R, KP_HAND_L0, KP_HAND_R0, KP_HIP_L, KP_HIP_R, KP_KNEE_L, KP_KNEE_R, KP_SHOULDER_L, KP_SHOULDER_R, KP_TOE_L, KP_TOE_R, KP_WRIST_L, KP_WRIST_R};
use crate::error::{Error, Result};
use crate::raster::Painter;
use ndarray::{Array2, Array4, ArrayView3};

pub const BACKGROUND: [f32; 3] = [0.92, 0.92, 0.92];
const MOUTH_COLOR: [f32; 3] = [0.0, 0.0, 0.0];
const MASK_THRESHOLD: f32 = 0.02;

/// One aligned training sample: frames, per-person poses, masks, speaking
/// scores, audio features and the reference frame.
#[derive(Debug, Clone)]
pub struct ClipRecord {
    /// (frames, 3, h, w) in [0, 1]
    pub frames: Array4<f32>,
    /// poses[person][frame]
    pub poses: Vec<Vec<PoseSkeleton59>>,
    /// (persons, frames, h, w), 0/1, pairwise disjoint per frame
    pub masks: Array4<u8>,
    pub speaking: Vec<SpeakingScoreCurve>,
    pub audio: Vec<AudioFeatureTrack>,
    pub ref_frame: usize,
    pub identities: Vec<IdentitySpec>,
    pub pattern: InteractionPattern,
}

impl ClipRecord {
    pub fn n_persons(&self) -> usize {
        self.poses.len()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[3]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.poses.len();
        if !(2..=4).contains(&n) {
            return Err(Error::Format(format!("persons must be in [2,4], got {n}")));
        }
        let f = self.n_frames();
        if self.masks.shape() != [n, f, self.height(), self.width()] {
            return Err(Error::shape(
                format!("masks ({n},{f},h,w)"),
                format!("{:?}", self.masks.shape()),
            ));
        }
        for (i, p) in self.poses.iter().enumerate() {
            if p.len() != f {
                return Err(Error::Format(format!("person {i}: {} poses, {f} frames", p.len())));
            }
        }
        if self.speaking.iter().any(|c| c.len() != f)
            || self.audio.iter().any(|a| a.envelope.len() != f)
        {
            return Err(Error::Format("temporal lengths differ".into()));
        }
        if self.ref_frame >= f {
            return Err(Error::Format(format!("ref_frame {} out of range", self.ref_frame)));
        }
        // masks disjoint across persons per frame
        for t in 0..f {
            for y in 0..self.height() {
                for x in 0..self.width() {
                    let claimed: u8 = (0..n).map(|p| self.masks[[p, t, y, x]]).sum();
                    if claimed > 1 {
                        return Err(Error::Layout(format!(
                            "masks overlap at frame {t} pixel ({x},{y})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn draw_figure(
    painter: &mut Painter,
    pose: &PoseSkeleton59,
    identity: &IdentitySpec,
    aperture: f32,
) {
    let kp = pose.keypoints();
    let p = |i: usize| (kp[i].x, kp[i].y);
    let color = identity.color;
    let limb = 1.6f32;

    // torso box and limbs
    for (a, b) in [
        (KP_SHOULDER_L, KP_SHOULDER_R),
        (KP_HIP_L, KP_HIP_R),
        (KP_SHOULDER_L, KP_HIP_L),
        (KP_SHOULDER_R, KP_HIP_R),
        (KP_SHOULDER_L, KP_ELBOW_L),
        (KP_ELBOW_L, KP_WRIST_L),
        (KP_SHOULDER_R, KP_ELBOW_R),
        (KP_ELBOW_R, KP_WRIST_R),
        (KP_HIP_L, KP_KNEE_L),
        (KP_KNEE_L, KP_ANKLE_L),
        (KP_HIP_R, KP_KNEE_R),
        (KP_KNEE_R, KP_ANKLE_R),
        (KP_ANKLE_L, KP_TOE_L),
        (KP_ANKLE_R, KP_TOE_R),
    ] {
        painter.line(p(a), p(b), limb, color);
    }
    // neck
    let head = pose.head();
    let head_cx = 0.5 * (head[1].x + head[2].x);
    let half_ear = 0.5 * (head[2].x - head[1].x).abs();
    let head_r = half_ear / 0.8;
    let head_cy = 0.5 * (head[1].y + head[2].y);
    let sh_c = (
        0.5 * (kp[KP_SHOULDER_L].x + kp[KP_SHOULDER_R].x),
        0.5 * (kp[KP_SHOULDER_L].y + kp[KP_SHOULDER_R].y),
    );
    painter.line(sh_c, (head_cx, head_cy + head_r), limb, color);
    // hands: root to each fingertip
    for root in [KP_HAND_L0, KP_HAND_R0] {
        for finger in 0..5 {
            let tip = root + 1 + finger * 4 + 3;
            painter.line(p(root), p(tip), 0.8, color);
        }
    }
    // head, then mouth on top
    let face = [
        color[0] * 0.55 + 0.45,
        color[1] * 0.55 + 0.45,
        color[2] * 0.55 + 0.45,
    ];
    painter.fill_circle((head_cx, head_cy), head_r, face);
    if aperture > 0.03 {
        let m = mouth_anchor(&head);
        painter.fill_ellipse(
            (m.cx, m.cy),
            identity.mouth_width * 0.5,
            aperture * 0.5,
            MOUTH_COLOR,
        );
    }
}

/// Render a full clip. Mouth aperture per frame is
/// `mouth_max_aperture * envelope`; instance masks are the per-person painted
/// footprints and must come out disjoint, which the base-position layout
/// check enforces up front.
pub fn render_clip(
    identities: &[IdentitySpec],
    poses: &[Vec<PoseSkeleton59>],
    curves: &[SpeakingScoreCurve],
    audio: &[AudioFeatureTrack],
    pattern: InteractionPattern,
    ref_frame: usize,
    height: usize,
    width: usize,
) -> Result<ClipRecord> {
    let n = identities.len();
    if !(2..=4).contains(&n) {
        return Err(Error::Format(format!("2..=4 identities required, got {n}")));
    }
    if poses.len() != n || curves.len() != n || audio.len() != n {
        return Err(Error::Format("per-person inputs disagree on person count".into()));
    }
    let f = poses[0].len();
    if poses.iter().any(|p| p.len() != f)
        || curves.iter().any(|c| c.len() != f)
        || audio.iter().any(|a| a.envelope.len() != f)
    {
        return Err(Error::Format("temporal lengths differ".into()));
    }
    // layout: figures must not be able to touch
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = (identities[i].base.0 - identities[j].base.0).abs();
            let need = identities[i].limbs.max_reach() + identities[j].limbs.max_reach();
            if dx < need {
                return Err(Error::Layout(format!(
                    "persons {} and {} overlap: base distance {dx:.1} < {need:.1}",
                    identities[i].person_id, identities[j].person_id
                )));
            }
        }
    }

    let mut frames = Array4::<f32>::zeros((f, 3, height, width));
    let mut masks = Array4::<u8>::zeros((n, f, height, width));
    for t in 0..f {
        let mut painter = Painter::new(height, width, BACKGROUND);
        let mut claimed = Array2::<u8>::zeros((height, width));
        for (pi, identity) in identities.iter().enumerate() {
            painter.reset_coverage();
            let aperture = identity.mouth_max_aperture * audio[pi].envelope[t];
            draw_figure(&mut painter, &poses[pi][t], identity, aperture);
            for y in 0..height {
                for x in 0..width {
                    if painter.coverage[[y, x]] > MASK_THRESHOLD {
                        if claimed[[y, x]] != 0 {
                            return Err(Error::Layout(format!(
                                "figures overlap at frame {t} pixel ({x},{y})"
                            )));
                        }
                        claimed[[y, x]] = 1;
                        masks[[pi, t, y, x]] = 1;
                    }
                }
            }
        }
        frames
            .index_axis_mut(ndarray::Axis(0), t)
            .assign(&painter.rgb);
    }

    let record = ClipRecord {
        frames,
        poses: poses.to_vec(),
        masks,
        speaking: curves.to_vec(),
        audio: audio.to_vec(),
        ref_frame,
        identities: identities.to_vec(),
        pattern,
    };
    record.validate()?;
    Ok(record)
}

/// Sum of darkness over the mouth region located from the head keypoints.
/// Tracks the rendered mouth area (and hence the aperture) linearly; works
/// on generated frames the same way as on ground truth.
pub fn measure_mouth_aperture(frame: ArrayView3<f32>, pose: &PoseSkeleton59) -> f32 {
    let m = mouth_anchor(&pose.head());
    let half_w = 0.75 * m.half_ear + 2.0;
    let half_h = 0.55 * m.half_ear + 2.0;
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let x0 = ((m.cx - half_w).floor().max(0.0)) as usize;
    let x1 = ((m.cx + half_w).ceil().min(w as f32 - 1.0)) as usize;
    let y0 = ((m.cy - half_h).floor().max(0.0)) as usize;
    let y1 = ((m.cy + half_h).ceil().min(h as f32 - 1.0)) as usize;
    let mut sum = 0.0f32;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let lum = (frame[[0, y, x]] + frame[[1, y, x]] + frame[[2, y, x]]) / 3.0;
            sum += ((0.5 - lum) / 0.5).max(0.0);
        }
    }
    sum
}

/// Pearson correlation; zero-variance inputs yield 0 by convention.
pub fn pearson(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f32;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f32>() / n;
    let mb = b.iter().sum::<f32>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va < 1e-12 || vb < 1e-12 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}
