//! Pose-to-person and face-track-to-person assignment over bounding boxes.

use super::{BBox, FaceTrack, PersonTrack, PoseSkeleton59};
use std::collections::BTreeMap;
use std::ops::Add;

/// Knobs for pose assignment.
#[derive(Debug, Clone, Copy)]
pub struct AssignConfig {
    /// Keypoints below this confidence are ignored by containment counting.
    pub min_conf: f32,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self { min_conf: 0.3 }
    }
}

/// Count keypoints with confidence >= `min_conf` lying inside the closed box.
pub fn keypoints_in_bbox(pose: &PoseSkeleton59, bbox: &BBox, min_conf: f32) -> usize {
    pose.keypoints()
        .iter()
        .filter(|k| k.confidence >= min_conf && bbox.contains(k.x, k.y))
        .count()
}

/// Additive, lexicographically ordered assignment weight.
///
/// Component order encodes the tie-break ladder: contained-keypoint count
/// first, then contained fraction (scaled to integer tenths of a percent),
/// then a smaller-box preference, then a lower-person-id preference. Sums of
/// tuples compare lexicographically, so a unit of a higher component always
/// dominates any total of the lower ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub(crate) struct Weight(pub i64, pub i64, pub i64, pub i64);

impl Add for Weight {
    type Output = Weight;
    fn add(self, o: Weight) -> Weight {
        Weight(self.0 + o.0, self.1 + o.1, self.2 + o.2, self.3 + o.3)
    }
}

/// Best injective row-to-column assignment under additive lexicographic
/// weights; `None` entries are forbidden pairings and rows may stay
/// unassigned. Among all maximum-weight assignments the one with the
/// lexicographically smallest choice vector (columns ascending, unassigned
/// last) is returned, which makes the result canonical and oracle-checkable.
///
/// Subset dynamic program over columns; supports up to 24 columns, far above
/// the two-to-four speaker regime this pipeline targets.
pub(crate) fn best_assignment<W>(weights: &[Vec<Option<W>>]) -> Vec<Option<usize>>
where
    W: Copy + Ord + Default + Add<Output = W>,
{
    let rows = weights.len();
    let cols = weights.first().map_or(0, |r| r.len());
    assert!(cols <= 24, "assignment solver supports at most 24 columns");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let full: u32 = (1u32 << cols) - 1;
    // best[i][mask]: best total weight for rows i.. with available column set `mask`
    let mut best = vec![vec![W::default(); (full + 1) as usize]; rows + 1];
    for i in (0..rows).rev() {
        for mask in 0..=full {
            let mut b = best[i + 1][mask as usize]; // leave row i unassigned
            for j in 0..cols {
                if mask & (1 << j) == 0 {
                    continue;
                }
                if let Some(w) = weights[i][j] {
                    let cand = w + best[i + 1][(mask & !(1 << j)) as usize];
                    if cand > b {
                        b = cand;
                    }
                }
            }
            best[i][mask as usize] = b;
        }
    }
    // Recover the canonical optimum: smallest viable column first, None last.
    let mut out = vec![None; rows];
    let mut mask = full;
    for i in 0..rows {
        let target = best[i][mask as usize];
        let mut chosen = None;
        for j in 0..cols {
            if mask & (1 << j) == 0 {
                continue;
            }
            if let Some(w) = weights[i][j] {
                if w + best[i + 1][(mask & !(1 << j)) as usize] == target {
                    chosen = Some(j);
                    break;
                }
            }
        }
        if let Some(j) = chosen {
            out[i] = Some(j);
            mask &= !(1 << j);
        }
    }
    out
}

/// Build the pose-assignment weight for one (pose, person-box) pair.
///
/// `area_pref`/`id_pref` are scene-level preference ranks (higher = more
/// preferred), precomputed per person.
pub(crate) fn pose_edge_weight(
    pose: &PoseSkeleton59,
    bbox: &BBox,
    min_conf: f32,
    area_pref: i64,
    id_pref: i64,
) -> Option<Weight> {
    let count = keypoints_in_bbox(pose, bbox, min_conf);
    if count == 0 {
        return None;
    }
    let visible = pose
        .keypoints()
        .iter()
        .filter(|k| k.confidence >= min_conf)
        .count()
        .max(1);
    let fraction_mils = (count as i64) * 1000 / visible as i64;
    Some(Weight(count as i64, fraction_mils, area_pref, id_pref))
}

/// Per-person preference ranks: smaller box area preferred, then lower id.
/// Returns (area_pref, id_pref) per person, each in [1, n], higher = better.
pub(crate) fn person_prefs(persons: &[(u32, BBox)]) -> Vec<(i64, i64)> {
    let n = persons.len();
    let mut by_area: Vec<usize> = (0..n).collect();
    by_area.sort_by(|&a, &b| {
        persons[a]
            .1
            .area()
            .partial_cmp(&persons[b].1.area())
            .unwrap()
            .then(persons[a].0.cmp(&persons[b].0))
    });
    let mut area_pref = vec![0i64; n];
    for (rank, &idx) in by_area.iter().enumerate() {
        area_pref[idx] = (n - rank) as i64;
    }
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by_key(|&i| persons[i].0);
    let mut id_pref = vec![0i64; n];
    for (rank, &idx) in by_id.iter().enumerate() {
        id_pref[idx] = (n - rank) as i64;
    }
    area_pref.into_iter().zip(id_pref).collect()
}

/// Assign each pose of a frame to at most one person so that the total
/// contained-keypoint count is maximized (injective over persons); ties are
/// broken by contained fraction, then smaller box, then lower person id.
/// Poses whose keypoints fall in no box stay unassigned.
///
/// Returns pose index -> person_id.
pub fn assign_poses_frame(
    poses: &[PoseSkeleton59],
    persons: &[(u32, BBox)],
    config: &AssignConfig,
) -> BTreeMap<usize, u32> {
    let prefs = person_prefs(persons);
    let weights: Vec<Vec<Option<Weight>>> = poses
        .iter()
        .map(|pose| {
            persons
                .iter()
                .zip(&prefs)
                .map(|((_, bbox), &(ap, ip))| {
                    pose_edge_weight(pose, bbox, config.min_conf, ap, ip)
                })
                .collect()
        })
        .collect();
    best_assignment(&weights)
        .into_iter()
        .enumerate()
        .filter_map(|(pose_idx, col)| col.map(|j| (pose_idx, persons[j].0)))
        .collect()
}

/// Overlap score between a face track and a person track: the number of
/// frames where the face-box center lies inside the person's box.
pub fn face_overlap_score(track: &FaceTrack, person: &PersonTrack) -> usize {
    track
        .entries
        .iter()
        .filter(|(frame, fbox, _)| {
            person.box_at(*frame).map_or(false, |pbox| {
                let (cx, cy) = fbox.center();
                pbox.contains(cx, cy)
            })
        })
        .count()
}

/// Match face tracks to persons by maximizing total center-containment
/// overlap (optimal injective matching); zero-overlap tracks stay unmatched.
///
/// Returns track_id -> person_id.
pub fn match_face_tracks(
    tracks: &[FaceTrack],
    persons: &[PersonTrack],
) -> BTreeMap<u32, u32> {
    let n = persons.len();
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by_key(|&i| persons[i].person_id);
    let mut id_pref = vec![0i64; n];
    for (rank, &idx) in by_id.iter().enumerate() {
        id_pref[idx] = (n - rank) as i64;
    }
    let weights: Vec<Vec<Option<Weight>>> = tracks
        .iter()
        .map(|t| {
            persons
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let score = face_overlap_score(t, p);
                    (score > 0).then(|| Weight(score as i64, 0, 0, id_pref[j]))
                })
                .collect()
        })
        .collect();
    best_assignment(&weights)
        .into_iter()
        .enumerate()
        .filter_map(|(i, col)| col.map(|j| (tracks[i].track_id, persons[j].person_id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::Keypoint2D;

    fn pose_at(points: &[(f32, f32, f32)]) -> PoseSkeleton59 {
        assert_eq!(points.len(), 59);
        PoseSkeleton59::new(
            points
                .iter()
                .map(|&(x, y, c)| Keypoint2D::new(x, y, c))
                .collect(),
        )
        .unwrap()
    }

    fn uniform_pose(x: f32, y: f32, conf: f32) -> PoseSkeleton59 {
        pose_at(&vec![(x, y, conf); 59])
    }

    #[test]
    fn count_all_inside() {
        let pose = uniform_pose(5.0, 5.0, 1.0);
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(keypoints_in_bbox(&pose, &b, 0.5), 59);
    }

    #[test]
    fn count_all_outside() {
        let pose = uniform_pose(50.0, 50.0, 1.0);
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(keypoints_in_bbox(&pose, &b, 0.5), 0);
    }

    #[test]
    fn count_matches_bruteforce_on_mixed_case() {
        // 30 points inside with varying confidences, 29 outside
        let mut pts = Vec::new();
        for i in 0..59 {
            let inside = i < 30;
            let conf = if i % 3 == 0 { 0.2 } else { 0.9 };
            let (x, y) = if inside { (5.0, 5.0) } else { (50.0, 50.0) };
            pts.push((x, y + i as f32 * 0.01, conf));
        }
        let pose = pose_at(&pts);
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let expect = pts
            .iter()
            .filter(|&&(x, y, c)| c >= 0.5 && x >= 0.0 && x <= 10.0 && y >= 0.0 && y <= 10.0)
            .count();
        assert_eq!(keypoints_in_bbox(&pose, &b, 0.5), expect);
    }

    #[test]
    fn closed_box_boundary_counts() {
        let pose = uniform_pose(10.0, 10.0, 1.0);
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(keypoints_in_bbox(&pose, &b, 0.5), 59);
    }

    #[test]
    fn assign_single_pose_single_box() {
        let pose = uniform_pose(5.0, 5.0, 1.0);
        let persons = vec![(7u32, BBox::new(0.0, 0.0, 10.0, 10.0).unwrap())];
        let m = assign_poses_frame(&[pose], &persons, &AssignConfig::default());
        assert_eq!(m.get(&0), Some(&7));
    }

    #[test]
    fn assign_disjoint_bijection() {
        let a = uniform_pose(5.0, 5.0, 1.0);
        let b = uniform_pose(25.0, 5.0, 1.0);
        let persons = vec![
            (0u32, BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()),
            (1u32, BBox::new(20.0, 0.0, 30.0, 10.0).unwrap()),
        ];
        let m = assign_poses_frame(&[a, b], &persons, &AssignConfig::default());
        assert_eq!(m.get(&0), Some(&0));
        assert_eq!(m.get(&1), Some(&1));
    }

    #[test]
    fn assign_no_containment_leaves_unassigned() {
        let pose = uniform_pose(100.0, 100.0, 1.0);
        let persons = vec![(0u32, BBox::new(0.0, 0.0, 10.0, 10.0).unwrap())];
        let m = assign_poses_frame(&[pose], &persons, &AssignConfig::default());
        assert!(m.is_empty());
    }

    /// Exhaustive-search oracle: enumerate every injective assignment and pick
    /// the maximum total weight, tie-broken by the smallest choice vector.
    fn oracle_assignment(weights: &[Vec<Option<Weight>>]) -> Vec<Option<usize>> {
        fn rec(
            weights: &[Vec<Option<Weight>>],
            row: usize,
            used: &mut Vec<bool>,
            cur: &mut Vec<Option<usize>>,
            best: &mut Option<(Weight, Vec<Option<usize>>)>,
        ) {
            if row == weights.len() {
                let total = cur
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| c.map(|j| weights[i][j].unwrap()))
                    .fold(Weight::default(), |a, b| a + b);
                let key = |v: &Vec<Option<usize>>| -> Vec<usize> {
                    v.iter().map(|c| c.map_or(usize::MAX, |j| j)).collect()
                };
                let better = match best {
                    None => true,
                    Some((bw, bv)) => total > *bw || (total == *bw && key(cur) < key(bv)),
                };
                if better {
                    *best = Some((total, cur.clone()));
                }
                return;
            }
            // candidate order mirrors the canonical recovery: columns ascending, then None
            for j in 0..weights[row].len() {
                if !used[j] && weights[row][j].is_some() {
                    used[j] = true;
                    cur.push(Some(j));
                    rec(weights, row + 1, used, cur, best);
                    cur.pop();
                    used[j] = false;
                }
            }
            cur.push(None);
            rec(weights, row + 1, used, cur, best);
            cur.pop();
        }
        let cols = weights.first().map_or(0, |r| r.len());
        let mut best = None;
        rec(
            weights,
            0,
            &mut vec![false; cols],
            &mut Vec::new(),
            &mut best,
        );
        best.map(|(_, v)| v).unwrap_or_default()
    }

    #[test]
    fn assign_overlapping_boxes_matches_exhaustive_oracle() {
        // Three poses spread over three overlapping boxes with mixed counts.
        let mk = |cx: f32| {
            let pts: Vec<(f32, f32, f32)> = (0..59)
                .map(|i| (cx + (i % 8) as f32, 5.0 + (i / 8) as f32, 0.9))
                .collect();
            pose_at(&pts)
        };
        let poses = vec![mk(2.0), mk(8.0), mk(14.0)];
        let persons = vec![
            (0u32, BBox::new(0.0, 0.0, 12.0, 20.0).unwrap()),
            (1u32, BBox::new(5.0, 0.0, 18.0, 20.0).unwrap()),
            (2u32, BBox::new(10.0, 0.0, 24.0, 20.0).unwrap()),
        ];
        let cfg = AssignConfig::default();
        let prefs = person_prefs(&persons);
        let weights: Vec<Vec<Option<Weight>>> = poses
            .iter()
            .map(|p| {
                persons
                    .iter()
                    .zip(&prefs)
                    .map(|((_, b), &(ap, ip))| pose_edge_weight(p, b, cfg.min_conf, ap, ip))
                    .collect()
            })
            .collect();
        let got = best_assignment(&weights);
        let expect = oracle_assignment(&weights);
        assert_eq!(got, expect);
    }

    fn track(track_id: u32, frames: &[(u32, f32, f32)]) -> FaceTrack {
        FaceTrack::new(
            track_id,
            frames
                .iter()
                .map(|&(f, cx, cy)| {
                    (
                        f,
                        BBox::new(cx - 1.0, cy - 1.0, cx + 1.0, cy + 1.0).unwrap(),
                        0.5,
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn person(person_id: u32, frames: &[u32], bbox: BBox) -> PersonTrack {
        PersonTrack::new(person_id, frames.iter().map(|&f| (f, bbox)).collect()).unwrap()
    }

    #[test]
    fn match_single_track_always_inside() {
        let t = track(3, &[(0, 5.0, 5.0), (1, 5.0, 5.0), (2, 5.0, 5.0)]);
        let p = person(0, &[0, 1, 2], BBox::new(0.0, 0.0, 10.0, 10.0).unwrap());
        let m = match_face_tracks(&[t], &[p]);
        assert_eq!(m.get(&3), Some(&0));
    }

    #[test]
    fn match_diagonal_dominant_matrix_is_diagonal() {
        // score matrix [[10,1],[2,9]]: track 0 sits in person 0's box for 10
        // frames and person 1's for 1 frame, and vice versa.
        let p0 = person(0, &(0..20).collect::<Vec<_>>(), BBox::new(0.0, 0.0, 10.0, 10.0).unwrap());
        let p1 = person(
            1,
            &(0..20).collect::<Vec<_>>(),
            BBox::new(20.0, 0.0, 30.0, 10.0).unwrap(),
        );
        let mut e0 = Vec::new();
        for f in 0..10 {
            e0.push((f, 5.0f32, 5.0f32));
        }
        e0.push((10, 25.0, 5.0));
        let mut e1 = Vec::new();
        for f in 0..9 {
            e1.push((f, 25.0f32, 5.0f32));
        }
        e1.push((9, 5.0, 5.0));
        e1.push((10, 5.0, 5.0));
        let t0 = track(0, &e0);
        let t1 = track(1, &e1);
        // sanity: brute-force over both permutations prefers 10 + 9 over 1 + 2
        let m = match_face_tracks(&[t0, t1], &[p0, p1]);
        assert_eq!(m.get(&0), Some(&0));
        assert_eq!(m.get(&1), Some(&1));
    }

    #[test]
    fn match_zero_overlap_track_unmatched() {
        let t = track(0, &[(0, 50.0, 50.0)]);
        let p = person(0, &[0], BBox::new(0.0, 0.0, 10.0, 10.0).unwrap());
        let m = match_face_tracks(&[t], &[p]);
        assert!(m.is_empty());
    }

    #[test]
    fn match_output_is_injective() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let p0 = person(0, &[0, 1], b);
        let p1 = person(1, &[0, 1], BBox::new(5.0, 0.0, 15.0, 10.0).unwrap());
        // both tracks overlap both persons; matching must not reuse a person
        let t0 = track(0, &[(0, 6.0, 5.0), (1, 6.0, 5.0)]);
        let t1 = track(1, &[(0, 7.0, 5.0), (1, 7.0, 5.0)]);
        let m = match_face_tracks(&[t0, t1], &[p0, p1]);
        let mut persons_used: Vec<u32> = m.values().cloned().collect();
        persons_used.sort_unstable();
        persons_used.dedup();
        assert_eq!(persons_used.len(), m.len());
    }
}
