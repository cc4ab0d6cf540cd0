//! The 59-point keypoint subset and head-box geometry.

use super::{BBox, Keypoint2D, PoseSkeleton133, PoseSkeleton59};
use crate::error::{Error, Result};

/// Keypoint group of each of the 59 retained points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointGroup {
    Head,
    TorsoLimbs,
    Hands,
    Feet,
}

/// Source indices into the 133-point COCO-WholeBody layout, in output order.
///
/// head: nose, left ear, right ear (3) — orientation only, finer facial
/// motion is audio-driven downstream;
/// torso/limbs: shoulders, elbows, wrists, hips, knees, ankles (12);
/// hands: all 21 left-hand then 21 right-hand points (42);
/// feet: left and right big toe (2).
///
/// The full table with names lives in `docs/keypoints.md`.
pub const SUBSET_INDEX_MAP: [usize; 59] = [
    // head
    0, 3, 4, //
    // torso and limbs
    5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, //
    // left hand
    91, 92, 93, 94, 95, 96, 97, 98, 99, 100, 101, 102, 103, 104, 105, 106, 107, 108, 109, 110,
    111, //
    // right hand
    112, 113, 114, 115, 116, 117, 118, 119, 120, 121, 122, 123, 124, 125, 126, 127, 128, 129, 130,
    131, 132, //
    // feet
    17, 20,
];

/// Group label of each output position in [`SUBSET_INDEX_MAP`] order.
pub const GROUP_LABELS: [KeypointGroup; 59] = {
    let mut labels = [KeypointGroup::Hands; 59];
    let mut i = 0;
    while i < 3 {
        labels[i] = KeypointGroup::Head;
        i += 1;
    }
    while i < 15 {
        labels[i] = KeypointGroup::TorsoLimbs;
        i += 1;
    }
    while i < 57 {
        labels[i] = KeypointGroup::Hands;
        i += 1;
    }
    while i < 59 {
        labels[i] = KeypointGroup::Feet;
        i += 1;
    }
    labels
};

// Named positions within the 59-point layout.
pub const KP_NOSE: usize = 0;
pub const KP_EAR_L: usize = 1;
pub const KP_EAR_R: usize = 2;
pub const KP_SHOULDER_L: usize = 3;
pub const KP_SHOULDER_R: usize = 4;
pub const KP_ELBOW_L: usize = 5;
pub const KP_ELBOW_R: usize = 6;
pub const KP_WRIST_L: usize = 7;
pub const KP_WRIST_R: usize = 8;
pub const KP_HIP_L: usize = 9;
pub const KP_HIP_R: usize = 10;
pub const KP_KNEE_L: usize = 11;
pub const KP_KNEE_R: usize = 12;
pub const KP_ANKLE_L: usize = 13;
pub const KP_ANKLE_R: usize = 14;
pub const KP_HAND_L0: usize = 15;
pub const KP_HAND_R0: usize = 36;
pub const KP_TOE_L: usize = 57;
pub const KP_TOE_R: usize = 58;

/// Reduce a 133-point pose to the fixed 59-point subset.
///
/// Pure index selection; coordinates and confidences are copied untouched.
pub fn subset_keypoints(pose: &PoseSkeleton133) -> PoseSkeleton59 {
    let kps = pose.keypoints();
    let selected: Vec<Keypoint2D> = SUBSET_INDEX_MAP.iter().map(|&i| kps[i]).collect();
    PoseSkeleton59::new(selected).expect("subset map has 59 entries")
}

/// Tight box over the three head keypoints, expanded by `margin` times the
/// larger box side on every edge, clamped to `[0, width] x [0, height]`.
pub fn head_bbox(pose: &PoseSkeleton59, margin: f32, width: f32, height: f32) -> Result<BBox> {
    let head = pose.head();
    if let Some((i, _)) = head.iter().enumerate().find(|(_, k)| k.confidence <= 0.0) {
        return Err(Error::DegenerateHead(i));
    }
    let xs = [head[0].x, head[1].x, head[2].x];
    let ys = [head[0].y, head[1].y, head[2].y];
    let (mut x0, mut x1) = (xs.iter().cloned().fold(f32::INFINITY, f32::min), xs.iter().cloned().fold(f32::NEG_INFINITY, f32::max));
    let (mut y0, mut y1) = (ys.iter().cloned().fold(f32::INFINITY, f32::min), ys.iter().cloned().fold(f32::NEG_INFINITY, f32::max));
    let pad = margin * (x1 - x0).max(y1 - y0);
    x0 = (x0 - pad).max(0.0);
    y0 = (y0 - pad).max(0.0);
    x1 = (x1 + pad).min(width);
    y1 = (y1 + pad).min(height);
    BBox::new(x0, y0, x1, y1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose133_with_index_coords() -> PoseSkeleton133 {
        let kps = (0..133)
            .map(|i| Keypoint2D::new(i as f32, 1000.0 + i as f32, 1.0))
            .collect();
        PoseSkeleton133::new(kps).unwrap()
    }

    #[test]
    fn subset_has_59_points_and_3_head_labels() {
        let out = subset_keypoints(&pose133_with_index_coords());
        assert_eq!(out.keypoints().len(), 59);
        let heads = GROUP_LABELS
            .iter()
            .filter(|g| **g == KeypointGroup::Head)
            .count();
        assert_eq!(heads, 3);
        assert_eq!(
            GROUP_LABELS
                .iter()
                .filter(|g| **g == KeypointGroup::TorsoLimbs)
                .count(),
            12
        );
        assert_eq!(
            GROUP_LABELS
                .iter()
                .filter(|g| **g == KeypointGroup::Hands)
                .count(),
            42
        );
        assert_eq!(
            GROUP_LABELS
                .iter()
                .filter(|g| **g == KeypointGroup::Feet)
                .count(),
            2
        );
    }

    #[test]
    fn subset_all_zero_pose_stays_zero() {
        let zeros = PoseSkeleton133::new(vec![Keypoint2D::new(0.0, 0.0, 0.0); 133]).unwrap();
        let out = subset_keypoints(&zeros);
        assert!(out
            .keypoints()
            .iter()
            .all(|k| k.x == 0.0 && k.y == 0.0 && k.confidence == 0.0));
    }

    #[test]
    fn subset_follows_published_index_map() {
        // x was set to the source index, so spot-check positions against the
        // frozen table by hand: nose=0, left ear=3, right ear=4, first torso
        // point=5 (left shoulder), first left-hand point=91, first right-hand
        // point=112, feet = 17 and 20.
        let out = subset_keypoints(&pose133_with_index_coords());
        let xs: Vec<f32> = out.keypoints().iter().map(|k| k.x).collect();
        assert_eq!(xs[0], 0.0);
        assert_eq!(xs[1], 3.0);
        assert_eq!(xs[2], 4.0);
        assert_eq!(xs[3], 5.0);
        assert_eq!(xs[15], 91.0);
        assert_eq!(xs[36], 112.0);
        assert_eq!(xs[57], 17.0);
        assert_eq!(xs[58], 20.0);
    }

    #[test]
    fn subset_is_subsequence_and_idempotent_under_padding() {
        // Pad the 59 points back into a 133 slot array at their source
        // indices; re-subsetting must reproduce the same 59 points.
        let src = pose133_with_index_coords();
        let out = subset_keypoints(&src);
        let mut padded = vec![Keypoint2D::new(-1.0, -1.0, 0.0); 133];
        for (pos, &srci) in SUBSET_INDEX_MAP.iter().enumerate() {
            padded[srci] = out.keypoints()[pos];
        }
        let again = subset_keypoints(&PoseSkeleton133::new(padded).unwrap());
        assert_eq!(again, out);
    }

    #[test]
    fn subset_rejects_wrong_length() {
        assert!(PoseSkeleton133::new(vec![Keypoint2D::new(0.0, 0.0, 1.0); 132]).is_err());
    }

    fn pose59_with_head(head: [(f32, f32); 3], conf: f32) -> PoseSkeleton59 {
        let mut kps = vec![Keypoint2D::new(30.0, 30.0, 1.0); 59];
        for (i, (x, y)) in head.iter().enumerate() {
            kps[i] = Keypoint2D::new(*x, *y, conf);
        }
        PoseSkeleton59::new(kps).unwrap()
    }

    #[test]
    fn head_bbox_margin_zero_is_tight() {
        let pose = pose59_with_head([(10.0, 10.0), (20.0, 10.0), (15.0, 20.0)], 1.0);
        let b = head_bbox(&pose, 0.0, 100.0, 100.0).unwrap();
        assert_eq!((b.x0, b.y0, b.x1, b.y1), (10.0, 10.0, 20.0, 20.0));
    }

    #[test]
    fn head_bbox_margin_expands_by_max_side() {
        // max side 10, margin 0.5 -> pad 5 on each edge
        let pose = pose59_with_head([(10.0, 10.0), (20.0, 10.0), (15.0, 20.0)], 1.0);
        let b = head_bbox(&pose, 0.5, 100.0, 100.0).unwrap();
        assert_eq!((b.x0, b.y0, b.x1, b.y1), (5.0, 5.0, 25.0, 25.0));
    }

    #[test]
    fn head_bbox_collinear_points_get_area_from_margin() {
        let pose = pose59_with_head([(10.0, 10.0), (15.0, 10.0), (20.0, 10.0)], 1.0);
        let b = head_bbox(&pose, 0.25, 100.0, 100.0).unwrap();
        assert!(b.area() > 0.0);
    }

    #[test]
    fn head_bbox_zero_confidence_is_degenerate() {
        let pose = pose59_with_head([(10.0, 10.0), (20.0, 10.0), (15.0, 20.0)], 0.0);
        assert!(matches!(
            head_bbox(&pose, 0.0, 100.0, 100.0),
            Err(Error::DegenerateHead(_))
        ));
    }

    #[test]
    fn head_bbox_clamps_to_image() {
        let pose = pose59_with_head([(2.0, 2.0), (8.0, 2.0), (5.0, 8.0)], 1.0);
        let b = head_bbox(&pose, 1.0, 10.0, 10.0).unwrap();
        assert_eq!((b.x0, b.y0), (0.0, 0.0));
        assert_eq!((b.x1, b.y1), (10.0, 10.0));
    }
}
