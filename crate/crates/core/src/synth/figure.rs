//! Procedural stick-figure identities and motion.

use crate::annotate::{Keypoint2D, PoseSkeleton59, SpeakingScoreCurve};
use crate::seeds;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Segment lengths of a figure, pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LimbLengths {
    pub torso: f32,
    pub neck: f32,
    pub head_radius: f32,
    pub shoulder_half: f32,
    pub hip_half: f32,
    pub upper_arm: f32,
    pub forearm: f32,
    pub thigh: f32,
    pub shin: f32,
    pub hand: f32,
}

impl LimbLengths {
    /// Proportions for a figure filling most of a canvas of height `h`.
    pub fn for_canvas_height(h: f32, scale: f32) -> Self {
        let u = h / 64.0 * scale;
        Self {
            torso: 13.0 * u,
            neck: 2.5 * u,
            head_radius: 5.5 * u,
            shoulder_half: 4.0 * u,
            hip_half: 2.8 * u,
            upper_arm: 6.5 * u,
            forearm: 5.5 * u,
            thigh: 9.5 * u,
            shin: 9.0 * u,
            hand: 2.2 * u,
        }
    }

    /// Worst-case horizontal half-extent of the rendered figure.
    pub fn max_reach(&self) -> f32 {
        self.shoulder_half + (self.upper_arm + self.forearm + self.hand) * 0.80 + 1.5
    }
}

/// One synthetic person: looks, placement and mouth dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub person_id: u32,
    pub color: [f32; 3],
    /// hip center, pixels
    pub base: (f32, f32),
    pub limbs: LimbLengths,
    pub mouth_width: f32,
    pub mouth_max_aperture: f32,
}

/// Distinct body colors; luminance kept high so the black mouth stays the
/// darkest feature in any head region.
pub const BODY_PALETTE: [[f32; 3]; 4] = [
    [0.90, 0.45, 0.35],
    [0.35, 0.60, 0.90],
    [0.45, 0.82, 0.45],
    [0.85, 0.75, 0.35],
];

impl IdentitySpec {
    /// Sample an identity for slot `slot` of `n_slots` across a canvas.
    pub fn sample(
        person_id: u32,
        slot: usize,
        n_slots: usize,
        height: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = width as f32;
        let h = height as f32;
        let slot_w = w / n_slots as f32;
        // shrink figures until they fit their slot with margin
        let mut scale = 1.0f32;
        let mut limbs = LimbLengths::for_canvas_height(h, scale);
        while limbs.max_reach() * 2.2 > slot_w && scale > 0.3 {
            scale *= 0.92;
            limbs = LimbLengths::for_canvas_height(h, scale);
        }
        let cx = slot_w * (slot as f32 + 0.5) + rng.gen_range(-1.0..1.0f32);
        let leg = limbs.thigh + limbs.shin;
        let by = h - leg - 3.0 + rng.gen_range(-1.0..1.0f32);
        let r = limbs.head_radius;
        Self {
            person_id,
            color: BODY_PALETTE[person_id as usize % BODY_PALETTE.len()],
            base: (cx, by),
            limbs,
            mouth_width: 0.9 * r,
            mouth_max_aperture: 0.8 * r,
        }
    }
}

/// Mouth placement derived from the three head keypoints (nose, ears); the
/// renderer and the aperture measurement share this so they can never drift.
#[derive(Debug, Clone, Copy)]
pub struct MouthAnchor {
    pub cx: f32,
    pub cy: f32,
    /// half the ear-to-ear distance; sizes scale off this
    pub half_ear: f32,
}

pub fn mouth_anchor(head: &[Keypoint2D; 3]) -> MouthAnchor {
    let (ear_l, ear_r) = (head[1], head[2]);
    let cx = 0.5 * (ear_l.x + ear_r.x);
    let half_ear = 0.5 * (ear_r.x - ear_l.x).abs();
    let cy = 0.5 * (ear_l.y + ear_r.y) + 0.55 * half_ear;
    MouthAnchor { cx, cy, half_ear }
}

struct MotionParams {
    phase_arm_l: f32,
    phase_arm_r: f32,
    phase_bob: f32,
    phase_sway: f32,
    omega_arm: f32,
    omega_bob: f32,
    omega_sway: f32,
}

/// Procedural pose sequence: sinusoidal arm sway and a slight head bob,
/// with gesture amplitude scaled up while the speaking score is positive.
/// Deterministic in (identity, curve, seed).
pub fn gen_pose_sequence(
    identity: &IdentitySpec,
    curve: &SpeakingScoreCurve,
    length_frames: usize,
    seed: u64,
) -> Vec<PoseSkeleton59> {
    let mut rng = seeds::rng(seed, "pose", identity.person_id as u64);
    let mp = MotionParams {
        phase_arm_l: rng.gen_range(0.0..std::f32::consts::TAU),
        phase_arm_r: rng.gen_range(0.0..std::f32::consts::TAU),
        phase_bob: rng.gen_range(0.0..std::f32::consts::TAU),
        phase_sway: rng.gen_range(0.0..std::f32::consts::TAU),
        omega_arm: rng.gen_range(0.28..0.42),
        omega_bob: rng.gen_range(0.20..0.32),
        omega_sway: rng.gen_range(0.10..0.18),
    };
    let l = &identity.limbs;
    let (bx, by) = identity.base;

    (0..length_frames)
        .map(|t| {
            let tf = t as f32;
            let score = curve.scores.get(t).copied().unwrap_or(-1.0);
            let act = score.max(0.0);
            // speakers gesture more
            let arm_amp = 0.10 + 0.24 * act;
            let bob_amp = 0.35 + 0.75 * act;
            let sway = 0.8 * (mp.omega_sway * tf + mp.phase_sway).sin() * (0.4 + 0.6 * act);

            let hip_l = (bx - l.hip_half, by);
            let hip_r = (bx + l.hip_half, by);
            let shoulder_c = (bx + sway, by - l.torso);
            let sh_l = (shoulder_c.0 - l.shoulder_half, shoulder_c.1);
            let sh_r = (shoulder_c.0 + l.shoulder_half, shoulder_c.1);
            let bob = bob_amp * (mp.omega_bob * tf + mp.phase_bob).sin();
            let head_c = (shoulder_c.0, shoulder_c.1 - l.neck - l.head_radius + bob);
            let r = l.head_radius;
            let nose = (head_c.0, head_c.1 - 0.20 * r);
            let ear_l = (head_c.0 - 0.80 * r, head_c.1);
            let ear_r = (head_c.0 + 0.80 * r, head_c.1);

            // arm angles measured from straight down, positive outward
            let th_l = 0.38 + arm_amp * (mp.omega_arm * tf + mp.phase_arm_l).sin();
            let th_r = 0.38 + arm_amp * (mp.omega_arm * tf + mp.phase_arm_r).sin();
            let bend_l = 0.25 + 0.5 * arm_amp * (mp.omega_arm * tf * 1.3 + mp.phase_arm_l).cos();
            let bend_r = 0.25 + 0.5 * arm_amp * (mp.omega_arm * tf * 1.3 + mp.phase_arm_r).cos();
            let elbow_l = (
                sh_l.0 - l.upper_arm * th_l.sin(),
                sh_l.1 + l.upper_arm * th_l.cos(),
            );
            let elbow_r = (
                sh_r.0 + l.upper_arm * th_r.sin(),
                sh_r.1 + l.upper_arm * th_r.cos(),
            );
            let wrist_l = (
                elbow_l.0 - l.forearm * (th_l + bend_l).sin(),
                elbow_l.1 + l.forearm * (th_l + bend_l).cos(),
            );
            let wrist_r = (
                elbow_r.0 + l.forearm * (th_r + bend_r).sin(),
                elbow_r.1 + l.forearm * (th_r + bend_r).cos(),
            );

            let knee_l = (hip_l.0 - 0.3, by + l.thigh);
            let knee_r = (hip_r.0 + 0.3, by + l.thigh);
            let ankle_l = (knee_l.0, knee_l.1 + l.shin);
            let ankle_r = (knee_r.0, knee_r.1 + l.shin);
            let toe_l = (ankle_l.0 - 1.6, ankle_l.1 + 1.2);
            let toe_r = (ankle_r.0 + 1.6, ankle_r.1 + 1.2);

            let mut kps: Vec<Keypoint2D> = Vec::with_capacity(59);
            for p in [
                nose, ear_l, ear_r, sh_l, sh_r, elbow_l, elbow_r, wrist_l, wrist_r, hip_l, hip_r,
                knee_l, knee_r, ankle_l, ankle_r,
            ] {
                kps.push(Keypoint2D::new(p.0, p.1, 1.0));
            }
            // 21 points per hand: root plus four joints on five fingers
            for (wrist, elbow, side) in [
                (wrist_l, elbow_l, -1.0f32),
                (wrist_r, elbow_r, 1.0f32),
            ] {
                let dx = wrist.0 - elbow.0;
                let dy = wrist.1 - elbow.1;
                let norm = (dx * dx + dy * dy).sqrt().max(1e-6);
                let dir = (dx / norm, dy / norm);
                let root = (wrist.0 + dir.0 * 0.6, wrist.1 + dir.1 * 0.6);
                kps.push(Keypoint2D::new(root.0, root.1, 1.0));
                for finger in 0..5 {
                    let spread = (finger as f32 - 2.0) * 0.22 * side;
                    let (c, s) = (spread.cos(), spread.sin());
                    let fdir = (dir.0 * c - dir.1 * s, dir.0 * s + dir.1 * c);
                    for joint in 1..=4 {
                        let d = identity.limbs.hand * joint as f32 / 4.0;
                        kps.push(Keypoint2D::new(root.0 + fdir.0 * d, root.1 + fdir.1 * d, 1.0));
                    }
                }
            }
            kps.push(Keypoint2D::new(toe_l.0, toe_l.1, 1.0));
            kps.push(Keypoint2D::new(toe_r.0, toe_r.1, 1.0));
            PoseSkeleton59::new(kps).expect("59 keypoints by construction")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::SpeakingScoreCurve;

    fn identity() -> IdentitySpec {
        let mut rng = seeds::rng(1, "id", 0);
        IdentitySpec::sample(0, 0, 2, 64, 96, &mut rng)
    }

    fn max_step(poses: &[PoseSkeleton59]) -> f32 {
        poses
            .windows(2)
            .flat_map(|w| {
                w[0].keypoints()
                    .iter()
                    .zip(w[1].keypoints())
                    .map(|(a, b)| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt())
            })
            .fold(0.0, f32::max)
    }

    #[test]
    fn zero_length_gives_empty_sequence() {
        let id = identity();
        let c = SpeakingScoreCurve::new(vec![], 15.0).unwrap();
        assert!(gen_pose_sequence(&id, &c, 0, 3).is_empty());
    }

    #[test]
    fn speaking_moves_more_than_listening() {
        let id = identity();
        let n = 60;
        let silent = SpeakingScoreCurve::new(vec![-1.0; n], 15.0).unwrap();
        let talking = SpeakingScoreCurve::new(vec![1.0; n], 15.0).unwrap();
        let quiet = gen_pose_sequence(&id, &silent, n, 5);
        let loud = gen_pose_sequence(&id, &talking, n, 5);
        assert!(
            max_step(&loud) > max_step(&quiet),
            "speaking {} vs listening {}",
            max_step(&loud),
            max_step(&quiet)
        );
    }

    #[test]
    fn deterministic_for_same_seed() {
        let id = identity();
        let c = SpeakingScoreCurve::new(vec![0.5; 20], 15.0).unwrap();
        let a = gen_pose_sequence(&id, &c, 20, 9);
        let b = gen_pose_sequence(&id, &c, 20, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn keypoints_stay_in_canvas() {
        for n_slots in 2..=4usize {
            for slot in 0..n_slots {
                let mut rng = seeds::rng(11, "id", slot as u64);
                let id = IdentitySpec::sample(slot as u32, slot, n_slots, 64, 96, &mut rng);
                let c = SpeakingScoreCurve::new(vec![1.0; 40], 15.0).unwrap();
                for pose in gen_pose_sequence(&id, &c, 40, 13) {
                    for k in pose.keypoints() {
                        assert!(k.x > 0.0 && k.x < 96.0, "x {} out of canvas", k.x);
                        assert!(k.y > 0.0 && k.y < 64.0, "y {} out of canvas", k.y);
                    }
                }
            }
        }
    }

    #[test]
    fn mouth_anchor_sits_below_ears_between_them() {
        let id = identity();
        let c = SpeakingScoreCurve::new(vec![0.0; 5], 15.0).unwrap();
        let poses = gen_pose_sequence(&id, &c, 5, 1);
        let head = poses[0].head();
        let m = mouth_anchor(&head);
        assert!(m.cx > head[1].x && m.cx < head[2].x);
        assert!(m.cy > head[1].y);
        assert!(m.half_ear > 0.0);
    }
}
