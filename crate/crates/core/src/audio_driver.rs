//! Audio-driven facial conditioning: the per-speaker speaking score gates a
//! shared audio embedding, and the gated tokens are injected into hidden
//! features through cross-attention restricted to that speaker's face mask.
//! Residuals from all speakers are computed from the same input features and
//! summed, so speakers commute.

use crate::annotate::{head_bbox, PoseSkeleton59};
use crate::error::{Error, Result};
use crate::nn::{kaiming, normal, zeros, Graph, ParamStore, Scalar, Tensor};
use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Binary face mask aligned to a hidden-feature grid, one slice per frame.
pub type FaceMask = Array3<u8>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IadConfig {
    /// audio feature dim d
    pub audio_dim: usize,
    /// gate MLP hidden width
    pub gate_hidden: usize,
    /// q/k/v projection width
    pub attn_dim: usize,
    /// collapse the gate to one shared scalar per frame instead of a
    /// d-vector (ablation flag; the vector gate is the default reading)
    pub scalar_gate: bool,
    /// margin applied to the head box before rasterizing masks
    pub mask_margin: f32,
}

impl Default for IadConfig {
    fn default() -> Self {
        Self {
            audio_dim: 16,
            gate_hidden: 16,
            attn_dim: 16,
            scalar_gate: false,
            mask_margin: 0.25,
        }
    }
}

/// Gate parameters: a tiny MLP from the scalar score to d gate logits.
pub fn init_gate<S: Scalar>(
    store: &mut ParamStore<S>,
    prefix: &str,
    cfg: &IadConfig,
    rng: &mut impl Rng,
) {
    store.insert(
        &format!("{prefix}.gate.w1"),
        normal(&[1, cfg.gate_hidden], 0.5, rng),
    );
    store.insert(&format!("{prefix}.gate.b1"), zeros(&[cfg.gate_hidden]));
    store.insert(
        &format!("{prefix}.gate.w2"),
        normal(&[cfg.gate_hidden, cfg.audio_dim], 0.5, rng),
    );
    store.insert(&format!("{prefix}.gate.b2"), zeros(&[cfg.audio_dim]));
}

/// Per-insertion-point cross-attention parameters; `channels` is the hidden
/// feature width at that block. No biases anywhere so zero values give an
/// exactly-zero residual, and the output projection starts at zero.
pub fn init_attention<S: Scalar>(
    store: &mut ParamStore<S>,
    prefix: &str,
    channels: usize,
    cfg: &IadConfig,
    rng: &mut impl Rng,
) {
    store.insert(
        &format!("{prefix}.wq"),
        kaiming(&[channels, cfg.attn_dim], channels, rng),
    );
    store.insert(
        &format!("{prefix}.wk"),
        kaiming(&[cfg.audio_dim, cfg.attn_dim], cfg.audio_dim, rng),
    );
    store.insert(
        &format!("{prefix}.wv"),
        kaiming(&[cfg.audio_dim, cfg.attn_dim], cfg.audio_dim, rng),
    );
    store.insert(&format!("{prefix}.wo"), zeros(&[cfg.attn_dim, channels]));
}

/// Sigmoid gate from the per-frame speaking score: (f, 1) -> (f, d) in (0,1).
pub fn gate_scores<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    prefix: &str,
    scores: Tensor,
    cfg: &IadConfig,
    trainable: bool,
) -> Result<Tensor> {
    let shape = g.shape(scores).to_vec();
    if shape.len() != 2 || shape[1] != 1 {
        return Err(Error::shape("(f,1)", format!("{shape:?}")));
    }
    let w1 = store.bind(g, &format!("{prefix}.gate.w1"), trainable);
    let b1 = store.bind(g, &format!("{prefix}.gate.b1"), trainable);
    let w2 = store.bind(g, &format!("{prefix}.gate.w2"), trainable);
    let b2 = store.bind(g, &format!("{prefix}.gate.b2"), trainable);
    let h = g.linear(scores, w1, Some(b1));
    let h = g.silu(h);
    let logits = g.linear(h, w2, Some(b2));
    let gate = g.sigmoid(logits);
    if cfg.scalar_gate {
        // average the d logits' gate into one shared scalar, broadcast back
        let m = g.scale(gate, 1.0 / cfg.audio_dim as f64);
        let summed = {
            // (f, d) -> (f, 1) by matmul with ones
            let ones = g.input(ndarray::ArrayD::from_elem(
                ndarray::IxDyn(&[cfg.audio_dim, 1]),
                S::one(),
            ));
            g.linear(m, ones, None)
        };
        let tiled = g.repeat_axis(summed, 1, cfg.audio_dim);
        return Ok(tiled);
    }
    Ok(gate)
}

/// e_audio (f, m, d) scaled per frame by the gate (f, d), broadcast over
/// the token axis.
pub fn modulate<S: Scalar>(g: &mut Graph<S>, e_audio: Tensor, gate: Tensor) -> Result<Tensor> {
    let ea = g.shape(e_audio).to_vec();
    let gs = g.shape(gate).to_vec();
    if ea.len() != 3 || gs.len() != 2 || ea[0] != gs[0] || ea[2] != gs[1] {
        return Err(Error::shape(
            "(f,m,d) with gate (f,d)",
            format!("{ea:?} with {gs:?}"),
        ));
    }
    let gate3 = g.reshape(gate, &[gs[0], 1, gs[1]]);
    Ok(g.mul(e_audio, gate3))
}

/// Row indices of active mask cells, row-major.
fn mask_indices(mask: &Array2<u8>) -> Vec<usize> {
    let w = mask.shape()[1];
    let mut idx = Vec::new();
    for (y, row) in mask.outer_iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            if v != 0 {
                idx.push(y * w + x);
            }
        }
    }
    idx
}

/// Cross-attention from masked spatial positions of `h` (f, c, gh, gw) into
/// that frame's audio tokens (f, m, d). The residual is written only at
/// masked positions and is exactly zero elsewhere (and everywhere, for an
/// empty mask).
pub fn masked_cross_attention<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    prefix: &str,
    h: Tensor,
    e_audio: Tensor,
    mask: &FaceMask,
    cfg: &IadConfig,
    trainable: bool,
) -> Result<Tensor> {
    let hs = g.shape(h).to_vec();
    let es = g.shape(e_audio).to_vec();
    if hs.len() != 4 || es.len() != 3 {
        return Err(Error::shape("(f,c,gh,gw) and (f,m,d)", format!("{hs:?} / {es:?}")));
    }
    let (f, c, gh, gw) = (hs[0], hs[1], hs[2], hs[3]);
    if es[0] != f || es[2] != cfg.audio_dim {
        return Err(Error::shape(
            format!("audio (f={f},m,{})", cfg.audio_dim),
            format!("{es:?}"),
        ));
    }
    if mask.shape() != [f, gh, gw] {
        return Err(Error::shape(
            format!("mask ({f},{gh},{gw})"),
            format!("{:?}", mask.shape()),
        ));
    }
    let wq = store.bind(g, &format!("{prefix}.wq"), trainable);
    let wk = store.bind(g, &format!("{prefix}.wk"), trainable);
    let wv = store.bind(g, &format!("{prefix}.wv"), trainable);
    let wo = store.bind(g, &format!("{prefix}.wo"), trainable);
    let scale = 1.0 / (cfg.attn_dim as f64).sqrt();

    let mut frame_residuals = Vec::with_capacity(f);
    for t in 0..f {
        let idx = mask_indices(&mask.index_axis(ndarray::Axis(0), t).to_owned());
        if idx.is_empty() {
            let zero = g.input(ndarray::ArrayD::zeros(ndarray::IxDyn(&[1, c, gh, gw])));
            frame_residuals.push(zero);
            continue;
        }
        let ht = g.slice_axis(h, 0, t, t + 1); // (1, c, gh, gw)
        let flat = g.reshape(ht, &[c, gh * gw]);
        let rows = g.permute(flat, &[1, 0]); // (gh*gw, c)
        let k_rows = idx.len();
        let q_in = g.gather_rows(rows, idx.clone()); // (k, c)
        let q = g.linear(q_in, wq, None); // (k, da)
        let et = g.slice_axis(e_audio, 0, t, t + 1); // (1, m, d)
        let tokens = g.reshape(et, &[es[1], es[2]]); // (m, d)
        let k = g.linear(tokens, wk, None); // (m, da)
        let v = g.linear(tokens, wv, None); // (m, da)
        let kt = g.permute(k, &[1, 0]); // (da, m)
        let scores_raw = {
            let qk = g.reshape(q, &[1, k_rows, cfg.attn_dim]);
            let ktb = g.reshape(kt, &[1, cfg.attn_dim, es[1]]);
            g.batched_matmul(qk, ktb) // (1, k, m)
        };
        let scores = g.scale(scores_raw, scale);
        let attn = g.softmax_last(scores); // (1, k, m)
        let vb = g.reshape(v, &[1, es[1], cfg.attn_dim]);
        let mixed = g.batched_matmul(attn, vb); // (1, k, da)
        let mixed2 = g.reshape(mixed, &[k_rows, cfg.attn_dim]);
        let out_rows = g.linear(mixed2, wo, None); // (k, c)
        let spread = g.scatter_rows(out_rows, idx, gh * gw); // (gh*gw, c)
        let back = g.permute(spread, &[1, 0]); // (c, gh*gw)
        frame_residuals.push(g.reshape(back, &[1, c, gh, gw]));
    }
    Ok(g.concat(0, &frame_residuals))
}

/// Per-speaker conditioning for one block application.
pub struct SpeakerInput<'a> {
    /// gated audio embedding e_i, (f, m, d)
    pub e_gated: Tensor,
    /// face mask on this block's grid, (f, gh, gw)
    pub mask: &'a FaceMask,
}

/// h + sum over speakers of masked residuals; all residuals read the same
/// input h. Zero speakers returns h unchanged.
pub fn iad_apply<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    prefix: &str,
    h: Tensor,
    speakers: &[SpeakerInput<'_>],
    cfg: &IadConfig,
    trainable: bool,
) -> Result<Tensor> {
    if speakers.is_empty() {
        return Ok(h);
    }
    let mut out = h;
    for s in speakers {
        let r = masked_cross_attention(g, store, prefix, h, s.e_gated, s.mask, cfg, trainable)?;
        out = g.add(out, r);
    }
    Ok(out)
}

/// Full block: gate each speaker's shared audio embedding by their speaking
/// score, then apply the masked residual sum.
#[allow(clippy::too_many_arguments)]
pub fn iad_block<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    gate_prefix: &str,
    attn_prefix: &str,
    h: Tensor,
    speakers: &[(Tensor, &FaceMask)],
    e_audio: Tensor,
    cfg: &IadConfig,
    trainable: bool,
) -> Result<Tensor> {
    if speakers.len() > 4 {
        return Err(Error::Format(format!(
            "at most 4 speakers supported, got {}",
            speakers.len()
        )));
    }
    let mut inputs = Vec::with_capacity(speakers.len());
    for (scores, mask) in speakers {
        let gate = gate_scores(g, store, gate_prefix, *scores, cfg, trainable)?;
        let e_gated = modulate(g, e_audio, gate)?;
        inputs.push((e_gated, *mask));
    }
    let speaker_inputs: Vec<SpeakerInput<'_>> = inputs
        .iter()
        .map(|(e, m)| SpeakerInput {
            e_gated: *e,
            mask: m,
        })
        .collect();
    iad_apply(g, store, attn_prefix, h, &speaker_inputs, cfg, trainable)
}

/// Rasterize per-frame face masks for a speaker onto a feature grid:
/// head box (with margin) in pixel space, max-pooled down; a box that covers
/// no whole cell claims the cell nearest its center.
pub fn face_masks_for_grid(
    poses: &[PoseSkeleton59],
    margin: f32,
    height: usize,
    width: usize,
    grid_h: usize,
    grid_w: usize,
) -> Result<FaceMask> {
    let f = poses.len();
    let mut mask = Array3::<u8>::zeros((f, grid_h, grid_w));
    let sy = height as f32 / grid_h as f32;
    let sx = width as f32 / grid_w as f32;
    for (t, pose) in poses.iter().enumerate() {
        let bb = head_bbox(pose, margin, width as f32, height as f32)?;
        let gx0 = (bb.x0 / sx).floor().max(0.0) as usize;
        let gx1 = ((bb.x1 / sx).ceil() as usize).min(grid_w);
        let gy0 = (bb.y0 / sy).floor().max(0.0) as usize;
        let gy1 = ((bb.y1 / sy).ceil() as usize).min(grid_h);
        let mut any = false;
        for gy in gy0..gy1 {
            for gx in gx0..gx1 {
                mask[[t, gy, gx]] = 1;
                any = true;
            }
        }
        if !any {
            let (cx, cy) = bb.center();
            let gx = ((cx / sx) as usize).min(grid_w - 1);
            let gy = ((cy / sy) as usize).min(grid_h - 1);
            mask[[t, gy, gx]] = 1;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;
    use crate::seeds;
    use ndarray::{ArrayD, IxDyn};

    fn rand_arr(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = seeds::rng(seed, "iad", 0);
        normal::<f64>(shape, 1.0, &mut rng)
    }

    fn cfg_tiny() -> IadConfig {
        IadConfig {
            audio_dim: 3,
            gate_hidden: 4,
            attn_dim: 2,
            scalar_gate: false,
            mask_margin: 0.25,
        }
    }

    fn store_tiny(seed: u64, channels: usize) -> ParamStore<f64> {
        let cfg = cfg_tiny();
        let mut store = ParamStore::new();
        let mut rng = seeds::rng(seed, "init", 0);
        init_gate(&mut store, "iad", &cfg, &mut rng);
        init_attention(&mut store, "iad.blk0", channels, &cfg, &mut rng);
        // the zero-initialized output projection hides attention bugs; randomize
        *store.get_mut("iad.blk0.wo") =
            normal(&[cfg.attn_dim, channels], 0.5, &mut rng);
        store
    }

    #[test]
    fn gate_zero_params_is_half() {
        let cfg = cfg_tiny();
        let mut store = ParamStore::<f64>::new();
        store.insert("iad.gate.w1", zeros(&[1, cfg.gate_hidden]));
        store.insert("iad.gate.b1", zeros(&[cfg.gate_hidden]));
        store.insert("iad.gate.w2", zeros(&[cfg.gate_hidden, cfg.audio_dim]));
        store.insert("iad.gate.b2", zeros(&[cfg.audio_dim]));
        let mut g = Graph::new(false);
        let s = g.input(rand_arr(&[5, 1], 1));
        let gate = gate_scores(&mut g, &store, "iad", s, &cfg, false).unwrap();
        assert!(g.value(gate).iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn gate_saturates_with_large_negative_bias() {
        let cfg = cfg_tiny();
        let mut store = store_tiny(2, 4);
        *store.get_mut("iad.gate.b2") =
            ArrayD::from_elem(IxDyn(&[cfg.audio_dim]), -20.0);
        *store.get_mut("iad.gate.w2") = zeros(&[cfg.gate_hidden, cfg.audio_dim]);
        let mut g = Graph::new(false);
        let s = g.input(rand_arr(&[5, 1], 3));
        let gate = gate_scores(&mut g, &store, "iad", s, &cfg, false).unwrap();
        assert!(g.value(gate).iter().all(|&v| v < 1e-8 && v > 0.0));
    }

    #[test]
    fn gate_matches_hand_computed_mlp() {
        let cfg = cfg_tiny();
        let store = store_tiny(4, 4);
        let scores = rand_arr(&[3, 1], 5);
        let mut g = Graph::new(false);
        let s = g.input(scores.clone());
        let gate = gate_scores(&mut g, &store, "iad", s, &cfg, false).unwrap();
        let gv = g.value(gate);
        let w1 = store.get("iad.gate.w1");
        let b1 = store.get("iad.gate.b1");
        let w2 = store.get("iad.gate.w2");
        let b2 = store.get("iad.gate.b2");
        for t in 0..3 {
            let a = scores[[t, 0]];
            for dj in 0..cfg.audio_dim {
                let mut acc = b2[[dj]];
                for hk in 0..cfg.gate_hidden {
                    let pre = w1[[0, hk]] * a + b1[[hk]];
                    let silu = pre / (1.0 + (-pre).exp());
                    acc += silu * w2[[hk, dj]];
                }
                let expect = 1.0 / (1.0 + (-acc).exp());
                assert!((gv[[t, dj]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn modulate_identities_and_independent_product() {
        let mut g = Graph::<f64>::new(false);
        let e = rand_arr(&[4, 2, 3], 10);
        let et = g.input(e.clone());
        let ones = g.input(ArrayD::from_elem(IxDyn(&[4, 3]), 1.0));
        let same = modulate(&mut g, et, ones).unwrap();
        assert_eq!(g.value(same), &e);
        let zeros_t = g.input(ArrayD::zeros(IxDyn(&[4, 3])));
        let zeroed = modulate(&mut g, et, zeros_t).unwrap();
        assert!(g.value(zeroed).iter().all(|&v| v == 0.0));
        let gate = rand_arr(&[4, 3], 11);
        let gt = g.input(gate.clone());
        let out = modulate(&mut g, et, gt).unwrap();
        for t in 0..4 {
            for m in 0..2 {
                for d in 0..3 {
                    let expect = e[[t, m, d]] * gate[[t, d]];
                    assert!((g.value(out)[[t, m, d]] - expect).abs() < 1e-12);
                }
            }
        }
        // shape mismatch is an error
        let bad = g.input(ArrayD::zeros(IxDyn(&[4, 2])));
        assert!(modulate(&mut g, et, bad).is_err());
    }

    #[test]
    fn empty_mask_residual_is_exactly_zero() {
        let cfg = cfg_tiny();
        let store = store_tiny(20, 4);
        let mut g = Graph::new(false);
        let h = g.input(rand_arr(&[2, 4, 3, 3], 21));
        let e = g.input(rand_arr(&[2, 2, 3], 22));
        let mask = Array3::<u8>::zeros((2, 3, 3));
        let r = masked_cross_attention(&mut g, &store, "iad.blk0", h, e, &mask, &cfg, false)
            .unwrap();
        assert!(g.value(r).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_audio_gives_zero_residual() {
        let cfg = cfg_tiny();
        let store = store_tiny(23, 4);
        let mut g = Graph::new(false);
        let h = g.input(rand_arr(&[2, 4, 3, 3], 24));
        let e = g.input(ArrayD::zeros(IxDyn(&[2, 2, 3])));
        let mut mask = Array3::<u8>::zeros((2, 3, 3));
        mask[[0, 1, 1]] = 1;
        mask[[1, 0, 2]] = 1;
        let r = masked_cross_attention(&mut g, &store, "iad.blk0", h, e, &mask, &cfg, false)
            .unwrap();
        assert!(g.value(r).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_position_attention_matches_hand_computation() {
        // 1 masked position, 2 tokens, tiny dims: softmax(q k^T / sqrt(da)) v
        let cfg = cfg_tiny();
        let store = store_tiny(30, 2);
        let h_arr = rand_arr(&[1, 2, 2, 2], 31);
        let e_arr = rand_arr(&[1, 2, 3], 32);
        let mut mask = Array3::<u8>::zeros((1, 2, 2));
        mask[[0, 1, 0]] = 1; // row-major index 2
        let mut g = Graph::new(false);
        let h = g.input(h_arr.clone());
        let e = g.input(e_arr.clone());
        let r = masked_cross_attention(&mut g, &store, "iad.blk0", h, e, &mask, &cfg, false)
            .unwrap();
        let rv = g.value(r);

        let wq = store.get("iad.blk0.wq");
        let wk = store.get("iad.blk0.wk");
        let wv = store.get("iad.blk0.wv");
        let wo = store.get("iad.blk0.wo");
        let da = cfg.attn_dim;
        // query row: channels at position (y=1, x=0)
        let q_in = [h_arr[[0, 0, 1, 0]], h_arr[[0, 1, 1, 0]]];
        let mut q = vec![0.0; da];
        for j in 0..da {
            for c in 0..2 {
                q[j] += q_in[c] * wq[[c, j]];
            }
        }
        let mut logits = [0.0f64; 2];
        for tok in 0..2 {
            let mut k = vec![0.0; da];
            for j in 0..da {
                for dd in 0..3 {
                    k[j] += e_arr[[0, tok, dd]] * wk[[dd, j]];
                }
            }
            logits[tok] = q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>()
                / (da as f64).sqrt();
        }
        let mx = logits[0].max(logits[1]);
        let ex = [(logits[0] - mx).exp(), (logits[1] - mx).exp()];
        let z = ex[0] + ex[1];
        let attn = [ex[0] / z, ex[1] / z];
        let mut mixed = vec![0.0; da];
        for (tok, a) in attn.iter().enumerate() {
            for j in 0..da {
                let mut vtok = 0.0;
                for dd in 0..3 {
                    vtok += e_arr[[0, tok, dd]] * wv[[dd, j]];
                }
                mixed[j] += a * vtok;
            }
        }
        for c in 0..2 {
            let mut out = 0.0;
            for j in 0..da {
                out += mixed[j] * wo[[j, c]];
            }
            let got = rv[[0, c, 1, 0]];
            assert!(
                (got - out).abs() < 1e-12,
                "channel {c}: got {got}, expected {out}"
            );
        }
        // everything off-mask is zero
        for c in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    if (y, x) != (1, 0) {
                        assert_eq!(rv[[0, c, y, x]], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn block_identities() {
        let cfg = cfg_tiny();
        let store = store_tiny(40, 4);
        let h_arr = rand_arr(&[2, 4, 3, 3], 41);
        let e_arr = rand_arr(&[2, 2, 3], 42);
        let scores_arr = rand_arr(&[2, 1], 43);
        let empty = Array3::<u8>::zeros((2, 3, 3));
        let mut some = Array3::<u8>::zeros((2, 3, 3));
        some[[0, 0, 0]] = 1;
        some[[1, 2, 2]] = 1;

        // all masks empty -> output == h exactly
        let mut g = Graph::new(false);
        let h = g.input(h_arr.clone());
        let e = g.input(e_arr.clone());
        let s = g.input(scores_arr.clone());
        let out = iad_block(
            &mut g, &store, "iad", "iad.blk0", h,
            &[(s, &empty), (s, &empty)],
            e, &cfg, false,
        )
        .unwrap();
        assert_eq!(g.value(out), &h_arr);

        // zero speakers -> h unchanged
        let out0 = iad_block(&mut g, &store, "iad", "iad.blk0", h, &[], e, &cfg, false).unwrap();
        assert_eq!(g.value(out0), &h_arr);

        // one speaker: h + residual
        let out1 = iad_block(
            &mut g, &store, "iad", "iad.blk0", h, &[(s, &some)], e, &cfg, false,
        )
        .unwrap();
        let gate = gate_scores(&mut g, &store, "iad", s, &cfg, false).unwrap();
        let eg = modulate(&mut g, e, gate).unwrap();
        let r = masked_cross_attention(&mut g, &store, "iad.blk0", h, eg, &some, &cfg, false)
            .unwrap();
        let expect = g.value(h) + g.value(r);
        assert_eq!(g.value(out1), &expect);
    }

    #[test]
    fn disjoint_masks_splice_like_single_speaker_runs() {
        let cfg = cfg_tiny();
        let store = store_tiny(50, 4);
        let h_arr = rand_arr(&[1, 4, 4, 4], 51);
        let e_arr = rand_arr(&[1, 2, 3], 52);
        let s_a = rand_arr(&[1, 1], 53);
        let s_b = rand_arr(&[1, 1], 54);
        let mut mask_a = Array3::<u8>::zeros((1, 4, 4));
        mask_a[[0, 0, 0]] = 1;
        mask_a[[0, 1, 1]] = 1;
        let mut mask_b = Array3::<u8>::zeros((1, 4, 4));
        mask_b[[0, 3, 3]] = 1;

        let run = |speakers: Vec<(ArrayD<f64>, &FaceMask)>| {
            let mut g = Graph::new(false);
            let h = g.input(h_arr.clone());
            let e = g.input(e_arr.clone());
            let sp: Vec<(Tensor, &FaceMask)> = speakers
                .iter()
                .map(|(s, m)| (g.input(s.clone()), *m))
                .collect();
            let out = iad_block(&mut g, &store, "iad", "iad.blk0", h, &sp, e, &cfg, false)
                .unwrap();
            g.value(out).clone()
        };
        let both = run(vec![(s_a.clone(), &mask_a), (s_b.clone(), &mask_b)]);
        let only_a = run(vec![(s_a.clone(), &mask_a)]);
        let only_b = run(vec![(s_b.clone(), &mask_b)]);
        for c in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    let expect = if mask_a[[0, y, x]] == 1 {
                        only_a[[0, c, y, x]]
                    } else if mask_b[[0, y, x]] == 1 {
                        only_b[[0, c, y, x]]
                    } else {
                        h_arr[[0, c, y, x]]
                    };
                    assert!((both[[0, c, y, x]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = cfg_tiny();
        let store = store_tiny(60, 4);
        assert!(store.n_values() <= 1000);
        let h_arr = rand_arr(&[2, 4, 3, 3], 61);
        let e_arr = rand_arr(&[2, 2, 3], 62);
        let s_arr = rand_arr(&[2, 1], 63);
        let lw = rand_arr(&[2, 4, 3, 3], 64);
        let mut mask = Array3::<u8>::zeros((2, 3, 3));
        mask[[0, 0, 0]] = 1;
        mask[[0, 2, 1]] = 1;
        mask[[1, 1, 1]] = 1;

        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let h = g.input(h_arr.clone());
            let e = g.input(e_arr.clone());
            let sc = g.input(s_arr.clone());
            let gate = gate_scores(g, s, "iad", sc, &cfg, true).unwrap();
            let eg = modulate(g, e, gate).unwrap();
            let r =
                masked_cross_attention(g, s, "iad.blk0", h, eg, &mask, &cfg, true).unwrap();
            let out = g.add(h, r);
            let w = g.input(lw.clone());
            let prod = g.mul(out, w);
            let m = g.mean_all(prod);
            g.scale(m, lw.len() as f64)
        };
        let mut g = Graph::new(true);
        let loss = build(&mut g, &store);
        let analytic = g.backward(loss);
        assert!(analytic.len() >= 7, "gate + attention params expected");
        let res = finite_diff_check(
            &store,
            &analytic,
            |s| {
                let mut g = Graph::new(false);
                let t = build(&mut g, s);
                g.value(t).iter().next().copied().unwrap()
            },
            1e-5,
            1e-6,
        );
        assert!(
            res.max_rel_err < 1e-4,
            "rel err {} over {}",
            res.max_rel_err,
            res.n_checked
        );
    }

    #[test]
    fn face_mask_covers_head_and_tiny_boxes_claim_one_cell() {
        let mut rng = seeds::rng(70, "id", 0);
        let id = crate::synth::IdentitySpec::sample(0, 0, 2, 64, 96, &mut rng);
        let curve = crate::annotate::SpeakingScoreCurve::new(vec![0.5; 4], 15.0).unwrap();
        let poses = crate::synth::gen_pose_sequence(&id, &curve, 4, 7);
        // fine grid keeps several cells; coarse 2x3 grid still claims >= 1
        let fine = face_masks_for_grid(&poses, 0.25, 64, 96, 64, 96).unwrap();
        assert!(fine.iter().any(|&v| v == 1));
        let coarse = face_masks_for_grid(&poses, 0.25, 64, 96, 2, 3).unwrap();
        for t in 0..4 {
            let count: u32 = coarse
                .index_axis(ndarray::Axis(0), t)
                .iter()
                .map(|&v| v as u32)
                .sum();
            assert!(count >= 1);
        }
    }
}
