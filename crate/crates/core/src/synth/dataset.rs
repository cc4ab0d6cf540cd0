//! Dataset construction: deterministic clip generation, the on-disk layout
//! (one array container per clip plus a JSON manifest) and loading.

use super::audio::{gen_audio_features, AudioFeatureTrack};
use super::curves::gen_speaking_curves;
use super::figure::{gen_pose_sequence, IdentitySpec};
use super::render::{render_clip, ClipRecord};
use crate::annotate::{InteractionPattern, Keypoint2D, PoseSkeleton59, SpeakingScoreCurve};
use crate::container::{read_container, write_container, ArrayData};
use crate::error::{Error, Result};
use crate::seeds;
use ndarray::{Array4, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Synthesis settings. Canvas defaults mirror a scaled-down wide-format
/// stage; 15-frame clips match the training window length.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub frames_per_clip: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f32,
    pub persons_min: usize,
    pub persons_max: usize,
    pub audio_tokens: usize,
    pub audio_dim: usize,
    /// relative weights per template
    pub pattern_mix: Vec<(InteractionPattern, f32)>,
    pub train_fraction: f32,
    pub ref_frame: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_clips: 32,
            frames_per_clip: 15,
            height: 64,
            width: 96,
            fps: 15.0,
            persons_min: 2,
            persons_max: 4,
            pattern_mix: vec![
                (InteractionPattern::Monologue, 1.0),
                (InteractionPattern::TurnTaking, 1.0),
                (InteractionPattern::OverTalking, 1.0),
                (InteractionPattern::TalkingListening, 1.0),
            ],
            audio_tokens: 4,
            audio_dim: 16,
            train_fraction: 0.9,
            ref_frame: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipEntry {
    pub id: String,
    pub dir: String,
    pub pattern: InteractionPattern,
    pub n_persons: usize,
    pub frames: usize,
    pub split: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config_hash: String,
    pub fps: f32,
    pub height: usize,
    pub width: usize,
    pub audio_tokens: usize,
    pub audio_dim: usize,
    pub clips: Vec<ClipEntry>,
}

impl DatasetManifest {
    pub fn split(&self, which: &str) -> Vec<&ClipEntry> {
        self.clips.iter().filter(|c| c.split == which).collect()
    }
}

/// Exact largest-remainder allocation of `n` items over weights.
fn allocate_counts(weights: &[f32], n: usize) -> Vec<usize> {
    let total: f32 = weights.iter().sum();
    if total <= 0.0 || weights.is_empty() {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f32> = weights.iter().map(|w| w / total * n as f32).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest: usize = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Generate one clip deterministically from (config, seed, index).
pub fn gen_clip(
    cfg: &SynthConfig,
    seed: u64,
    index: u64,
    pattern: InteractionPattern,
) -> Result<ClipRecord> {
    let mut rng = seeds::rng(seed, "clip", index);
    let n_persons = rng.gen_range(cfg.persons_min..=cfg.persons_max);
    let curves = gen_speaking_curves(
        pattern,
        n_persons,
        cfg.frames_per_clip,
        cfg.fps,
        seeds::derive(seed, "curves", index),
    )?;
    let mut identities = Vec::with_capacity(n_persons);
    let mut poses = Vec::with_capacity(n_persons);
    let mut audio = Vec::with_capacity(n_persons);
    for pi in 0..n_persons {
        let id = IdentitySpec::sample(pi as u32, pi, n_persons, cfg.height, cfg.width, &mut rng);
        poses.push(gen_pose_sequence(
            &id,
            &curves[pi],
            cfg.frames_per_clip,
            seeds::derive(seed, "motion", index * 8 + pi as u64),
        ));
        audio.push(gen_audio_features(
            &curves[pi],
            cfg.audio_tokens,
            cfg.audio_dim,
            seeds::derive(seed, "audio", index * 8 + pi as u64),
        )?);
        identities.push(id);
    }
    render_clip(
        &identities,
        &poses,
        &curves,
        &audio,
        pattern,
        cfg.ref_frame.min(cfg.frames_per_clip.saturating_sub(1)),
        cfg.height,
        cfg.width,
    )
}

fn quantize_frames(frames: &Array4<f32>) -> ArrayD<u8> {
    frames
        .mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .into_dyn()
}

/// Write one clip as an array container.
pub fn write_clip(dir: &Path, clip: &ClipRecord) -> Result<()> {
    let n = clip.n_persons();
    let f = clip.n_frames();
    let (m, d) = {
        let s = clip.audio[0].features.shape();
        (s[1], s[2])
    };
    let mut poses = ArrayD::<f32>::zeros(IxDyn(&[n, f, 59, 3]));
    let mut speaking = ArrayD::<f32>::zeros(IxDyn(&[n, f]));
    let mut env = ArrayD::<f32>::zeros(IxDyn(&[n, f]));
    let mut feat = ArrayD::<f32>::zeros(IxDyn(&[n, f, m, d]));
    for pi in 0..n {
        for t in 0..f {
            for (ki, kp) in clip.poses[pi][t].keypoints().iter().enumerate() {
                poses[[pi, t, ki, 0]] = kp.x;
                poses[[pi, t, ki, 1]] = kp.y;
                poses[[pi, t, ki, 2]] = kp.confidence;
            }
            speaking[[pi, t]] = clip.speaking[pi].scores[t];
            env[[pi, t]] = clip.audio[pi].envelope[t];
            for j in 0..m {
                for k in 0..d {
                    feat[[pi, t, j, k]] = clip.audio[pi].features[[t, j, k]];
                }
            }
        }
    }
    let meta = serde_json::json!({
        "n_persons": n,
        "ref_frame": clip.ref_frame,
        "pattern": clip.pattern,
        "fps": clip.speaking[0].frame_rate,
        "identities": clip.identities,
    });
    write_container(
        dir,
        &[
            ("frames", ArrayData::U8(quantize_frames(&clip.frames))),
            ("poses", ArrayData::F32(poses)),
            ("masks", ArrayData::U8(clip.masks.clone().into_dyn())),
            ("speaking", ArrayData::F32(speaking)),
            ("audio_env", ArrayData::F32(env)),
            ("audio_feat", ArrayData::F32(feat)),
        ],
        meta,
    )
}

/// Load a clip container back into memory; frames are dequantized to [0,1].
pub fn load_clip(dir: &Path) -> Result<ClipRecord> {
    let (arrays, meta) = read_container(dir)?;
    let get = |name: &str| {
        arrays
            .get(name)
            .ok_or_else(|| Error::Container(format!("missing array {name}")))
    };
    let frames_u8 = get("frames")?.as_u8()?;
    let fshape = frames_u8.shape().to_vec();
    let frames = frames_u8
        .mapv(|v| v as f32 / 255.0)
        .into_shape_with_order(IxDyn(&fshape))
        .map_err(|e| Error::Container(e.to_string()))?
        .into_dimensionality::<ndarray::Ix4>()
        .map_err(|e| Error::Container(e.to_string()))?;
    let poses_a = get("poses")?.as_f32()?;
    let masks = get("masks")?
        .as_u8()?
        .clone()
        .into_dimensionality::<ndarray::Ix4>()
        .map_err(|e| Error::Container(e.to_string()))?;
    let speaking_a = get("speaking")?.as_f32()?;
    let env_a = get("audio_env")?.as_f32()?;
    let feat_a = get("audio_feat")?.as_f32()?;

    let n = poses_a.shape()[0];
    let f = poses_a.shape()[1];
    let fps = meta["fps"].as_f64().unwrap_or(15.0) as f32;
    let ref_frame = meta["ref_frame"].as_u64().unwrap_or(0) as usize;
    let pattern: InteractionPattern =
        serde_json::from_value(meta["pattern"].clone()).unwrap_or(InteractionPattern::Mixed);
    let identities: Vec<IdentitySpec> = serde_json::from_value(meta["identities"].clone())
        .map_err(|e| Error::Container(format!("identities: {e}")))?;

    let mut poses = Vec::with_capacity(n);
    let mut speaking = Vec::with_capacity(n);
    let mut audio = Vec::with_capacity(n);
    let (m, d) = (feat_a.shape()[2], feat_a.shape()[3]);
    for pi in 0..n {
        let mut seq = Vec::with_capacity(f);
        for t in 0..f {
            let kps: Vec<Keypoint2D> = (0..59)
                .map(|ki| {
                    Keypoint2D::new(
                        poses_a[[pi, t, ki, 0]],
                        poses_a[[pi, t, ki, 1]],
                        poses_a[[pi, t, ki, 2]],
                    )
                })
                .collect();
            seq.push(PoseSkeleton59::new(kps)?);
        }
        poses.push(seq);
        speaking.push(SpeakingScoreCurve::new(
            (0..f).map(|t| speaking_a[[pi, t]]).collect(),
            fps,
        )?);
        let mut features = ndarray::Array3::<f32>::zeros((f, m, d));
        for t in 0..f {
            for j in 0..m {
                for k in 0..d {
                    features[[t, j, k]] = feat_a[[pi, t, j, k]];
                }
            }
        }
        audio.push(AudioFeatureTrack {
            features,
            envelope: (0..f).map(|t| env_a[[pi, t]]).collect(),
        });
    }
    Ok(ClipRecord {
        frames,
        poses,
        masks,
        speaking,
        audio,
        ref_frame,
        identities,
        pattern,
    })
}

/// Build the whole dataset under `out_dir`; returns the manifest it wrote.
/// Byte-identical across reruns with the same (config, seed).
pub fn build_dataset(
    cfg: &SynthConfig,
    seed: u64,
    config_hash: &str,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir)?;
    let weights: Vec<f32> = cfg.pattern_mix.iter().map(|(_, w)| *w).collect();
    let counts = allocate_counts(&weights, cfg.n_clips);
    let mut patterns = Vec::with_capacity(cfg.n_clips);
    for (i, &(p, _)) in cfg.pattern_mix.iter().enumerate() {
        patterns.extend(std::iter::repeat(p).take(counts[i]));
    }
    let mut order_rng = seeds::rng(seed, "pattern-order", 0);
    patterns.shuffle(&mut order_rng);

    // train/test split by seeded shuffle of indices
    let mut split_rng = seeds::rng(seed, "split", 0);
    let mut idx: Vec<usize> = (0..cfg.n_clips).collect();
    idx.shuffle(&mut split_rng);
    let n_train = ((cfg.n_clips as f32) * cfg.train_fraction).round() as usize;
    let mut split = vec!["test"; cfg.n_clips];
    for &i in idx.iter().take(n_train) {
        split[i] = "train";
    }

    let entries: Vec<ClipEntry> = (0..cfg.n_clips)
        .into_par_iter()
        .map(|i| -> Result<ClipEntry> {
            let pattern = patterns[i];
            let clip = gen_clip(cfg, seed, i as u64, pattern)?;
            let id = format!("clip_{i:04}");
            write_clip(&out_dir.join(&id), &clip)?;
            Ok(ClipEntry {
                id: id.clone(),
                dir: id,
                pattern,
                n_persons: clip.n_persons(),
                frames: clip.n_frames(),
                split: split[i].to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        seed,
        config_hash: config_hash.to_string(),
        fps: cfg.fps,
        height: cfg.height,
        width: cfg.width,
        audio_tokens: cfg.audio_tokens,
        audio_dim: cfg.audio_dim,
        clips: entries,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Container(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Scene-level audio mix: the per-speaker feature tracks summed, matching a
/// single shared audio embedding gated per speaker downstream.
pub fn mix_audio(tracks: &[AudioFeatureTrack]) -> ndarray::Array3<f32> {
    let mut mix = tracks[0].features.clone();
    for t in &tracks[1..] {
        mix += &t.features;
    }
    mix
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("confab_{name}_{}", std::process::id()))
    }

    #[test]
    fn counts_allocation_is_exact() {
        assert_eq!(allocate_counts(&[1.0, 1.0], 10), vec![5, 5]);
        assert_eq!(allocate_counts(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(allocate_counts(&[3.0, 1.0], 8), vec![6, 2]);
    }

    #[test]
    fn empty_dataset_gives_empty_manifest() {
        let dir = tmp("empty_ds");
        let cfg = SynthConfig {
            n_clips: 0,
            ..Default::default()
        };
        let m = build_dataset(&cfg, 1, "h", &dir).unwrap();
        assert!(m.clips.is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pattern_mix_half_half_gives_exact_label_counts() {
        let dir = tmp("mix_ds");
        let cfg = SynthConfig {
            n_clips: 10,
            frames_per_clip: 15,
            pattern_mix: vec![
                (InteractionPattern::TurnTaking, 1.0),
                (InteractionPattern::OverTalking, 1.0),
            ],
            ..Default::default()
        };
        let m = build_dataset(&cfg, 3, "h", &dir).unwrap();
        let tt = m
            .clips
            .iter()
            .filter(|c| c.pattern == InteractionPattern::TurnTaking)
            .count();
        let ot = m
            .clips
            .iter()
            .filter(|c| c.pattern == InteractionPattern::OverTalking)
            .count();
        assert_eq!((tt, ot), (5, 5));
        std::fs::remove_dir_all(&dir).ok();
    }

    fn dir_digest(dir: &Path) -> Vec<(String, u64, u128)> {
        use sha2::Digest;
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let e = e.unwrap();
                if e.path().is_dir() {
                    stack.push(e.path());
                } else {
                    let bytes = std::fs::read(e.path()).unwrap();
                    let mut h = sha2::Sha256::new();
                    h.update(&bytes);
                    let digest = h.finalize();
                    let mut lo = [0u8; 16];
                    lo.copy_from_slice(&digest[..16]);
                    files.push((
                        e.path().strip_prefix(dir).unwrap().display().to_string(),
                        bytes.len() as u64,
                        u128::from_le_bytes(lo),
                    ));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let cfg = SynthConfig {
            n_clips: 4,
            frames_per_clip: 15,
            ..Default::default()
        };
        let d1 = tmp("det_a");
        let d2 = tmp("det_b");
        build_dataset(&cfg, 7, "h", &d1).unwrap();
        build_dataset(&cfg, 7, "h", &d2).unwrap();
        assert_eq!(dir_digest(&d1), dir_digest(&d2));
        std::fs::remove_dir_all(&d1).ok();
        std::fs::remove_dir_all(&d2).ok();
    }

    #[test]
    fn clip_roundtrips_through_container() {
        let cfg = SynthConfig::default();
        let clip = gen_clip(&cfg, 11, 0, InteractionPattern::TurnTaking).unwrap();
        let dir = tmp("clip_rt");
        write_clip(&dir, &clip).unwrap();
        let back = load_clip(&dir).unwrap();
        back.validate().unwrap();
        assert_eq!(back.n_persons(), clip.n_persons());
        assert_eq!(back.n_frames(), clip.n_frames());
        assert_eq!(back.masks, clip.masks);
        assert_eq!(back.pattern, clip.pattern);
        // frames round-trip through u8 quantization
        let max_err = back
            .frames
            .iter()
            .zip(clip.frames.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 0.5 / 255.0 + 1e-6, "max_err {max_err}");
        // poses and audio exact
        assert_eq!(back.poses[0][0], clip.poses[0][0]);
        assert_eq!(back.audio[0].envelope, clip.audio[0].envelope);
        std::fs::remove_dir_all(&dir).ok();
    }
}
