//! Synthetic per-speaker audio features with the (frames, tokens, dim)
//! shape contract of a real speech-embedding frontend.

use crate::annotate::SpeakingScoreCurve;
use crate::error::{Error, Result};
use crate::seeds;
use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Per-frame audio features plus the scalar loudness envelope that the
/// renderer turns into mouth aperture.
#[derive(Debug, Clone)]
pub struct AudioFeatureTrack {
    /// (frames, tokens, dim)
    pub features: Array3<f32>,
    /// per-frame scalar >= 0; exactly 0 wherever the speaking score is <= 0
    pub envelope: Vec<f32>,
}

/// Envelope: rectified speaking score, box-smoothed (window 3), re-masked so
/// silent frames stay exactly zero. Features: the envelope scaling a frozen
/// per-clip token bank, plus a small silence floor.
pub fn gen_audio_features(
    curve: &SpeakingScoreCurve,
    tokens: usize,
    dim: usize,
    seed: u64,
) -> Result<AudioFeatureTrack> {
    if tokens < 1 || dim < 1 {
        return Err(Error::Format(format!(
            "tokens and dim must be >= 1, got ({tokens}, {dim})"
        )));
    }
    let n = curve.len();
    let rect: Vec<f32> = curve.scores.iter().map(|&s| s.max(0.0)).collect();
    let mut envelope = Vec::with_capacity(n);
    for t in 0..n {
        if curve.scores[t] <= 0.0 {
            envelope.push(0.0);
            continue;
        }
        let lo = t.saturating_sub(1);
        let hi = (t + 1).min(n.saturating_sub(1));
        let window = &rect[lo..=hi];
        envelope.push(window.iter().sum::<f32>() / window.len() as f32);
    }

    let mut rng = seeds::rng(seed, "audio", 0);
    let mut bank = Array3::<f32>::zeros((1, tokens, dim));
    for v in bank.iter_mut() {
        let z: f32 = StandardNormal.sample(&mut rng);
        *v = 0.6 * z;
    }
    let mut features = Array3::<f32>::zeros((n, tokens, dim));
    for t in 0..n {
        for j in 0..tokens {
            for k in 0..dim {
                let floor: f32 = rng.gen_range(-0.02..0.02);
                features[[t, j, k]] = envelope[t] * bank[[0, j, k]] + floor;
            }
        }
    }
    Ok(AudioFeatureTrack { features, envelope })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(scores: Vec<f32>) -> SpeakingScoreCurve {
        SpeakingScoreCurve::new(scores, 15.0).unwrap()
    }

    #[test]
    fn all_silent_gives_zero_envelope() {
        let t = gen_audio_features(&curve(vec![-1.0; 20]), 4, 8, 3).unwrap();
        assert!(t.envelope.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn all_speaking_gives_constant_positive_envelope() {
        let t = gen_audio_features(&curve(vec![1.0; 20]), 4, 8, 3).unwrap();
        assert!(t.envelope.iter().all(|&e| (e - 1.0).abs() < 1e-6));
    }

    #[test]
    fn envelope_zero_set_equals_silent_frames() {
        let scores: Vec<f32> = (0..60).map(|i| (i as f32 * 0.31).sin() * 0.9).collect();
        let c = curve(scores.clone());
        let t = gen_audio_features(&c, 3, 5, 8).unwrap();
        for (i, &s) in scores.iter().enumerate() {
            if s <= 0.0 {
                assert_eq!(t.envelope[i], 0.0, "frame {i}");
            } else {
                assert!(t.envelope[i] > 0.0, "frame {i}");
            }
        }
    }

    #[test]
    fn shapes_follow_arguments() {
        let t = gen_audio_features(&curve(vec![0.5; 12]), 4, 16, 3).unwrap();
        assert_eq!(t.features.shape(), &[12, 4, 16]);
        assert_eq!(t.envelope.len(), 12);
        assert!(gen_audio_features(&curve(vec![0.5; 12]), 0, 16, 3).is_err());
    }
}
