//! Multi-human pose conditioning: each person's masked skeleton render goes
//! through one shared convolutional extractor and the per-person embeddings
//! are summed into a single conditioning tensor. The same machinery doubles
//! as the reference pose adaptor feeding the identity branch.

use crate::annotate::{
    PoseSkeleton59, KP_ANKLE_L, KP_ANKLE_R, KP_EAR_L, KP_EAR_R, KP_ELBOW_L, KP_ELBOW_R,
    KP_HAND_L0, KP_HAND_R0, KP_HIP_L, KP_HIP_R, KP_KNEE_L, KP_KNEE_R, KP_NOSE, KP_SHOULDER_L,
    KP_SHOULDER_R, KP_TOE_L, KP_TOE_R, KP_WRIST_L, KP_WRIST_R,
};
use crate::error::{Error, Result};
use crate::nn::{kaiming, zeros, Graph, ParamStore, Scalar, Tensor};
use crate::raster::Painter;
use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bone connectivity of the 59-point skeleton with a per-group color
/// channel: head red, torso/limbs green, hands blue, feet red+green.
const BONE_COLORS: [(usize, usize, [f32; 3]); 23] = [
    (KP_NOSE, KP_EAR_L, [1.0, 0.0, 0.0]),
    (KP_NOSE, KP_EAR_R, [1.0, 0.0, 0.0]),
    (KP_EAR_L, KP_EAR_R, [1.0, 0.0, 0.0]),
    (KP_SHOULDER_L, KP_SHOULDER_R, [0.0, 1.0, 0.0]),
    (KP_SHOULDER_L, KP_HIP_L, [0.0, 1.0, 0.0]),
    (KP_SHOULDER_R, KP_HIP_R, [0.0, 1.0, 0.0]),
    (KP_HIP_L, KP_HIP_R, [0.0, 1.0, 0.0]),
    (KP_SHOULDER_L, KP_ELBOW_L, [0.0, 1.0, 0.0]),
    (KP_ELBOW_L, KP_WRIST_L, [0.0, 1.0, 0.0]),
    (KP_SHOULDER_R, KP_ELBOW_R, [0.0, 1.0, 0.0]),
    (KP_ELBOW_R, KP_WRIST_R, [0.0, 1.0, 0.0]),
    (KP_HIP_L, KP_KNEE_L, [0.0, 1.0, 0.0]),
    (KP_KNEE_L, KP_ANKLE_L, [0.0, 1.0, 0.0]),
    (KP_HIP_R, KP_KNEE_R, [0.0, 1.0, 0.0]),
    (KP_KNEE_R, KP_ANKLE_R, [0.0, 1.0, 0.0]),
    (KP_WRIST_L, KP_HAND_L0, [0.0, 0.0, 1.0]),
    (KP_WRIST_R, KP_HAND_R0, [0.0, 0.0, 1.0]),
    // hand roots to fingertips are appended programmatically
    (KP_ANKLE_L, KP_TOE_L, [1.0, 1.0, 0.0]),
    (KP_ANKLE_R, KP_TOE_R, [1.0, 1.0, 0.0]),
    // padding entries replaced below (kept const-sized for clarity)
    (KP_NOSE, KP_NOSE, [0.0, 0.0, 0.0]),
    (KP_NOSE, KP_NOSE, [0.0, 0.0, 0.0]),
    (KP_NOSE, KP_NOSE, [0.0, 0.0, 0.0]),
    (KP_NOSE, KP_NOSE, [0.0, 0.0, 0.0]),
];

/// Rasterize one pose as a (3, h, w) conditioning map, multiplied by the
/// person's instance mask so each map carries exactly one person.
pub fn rasterize_pose(
    pose: &PoseSkeleton59,
    mask: Option<&Array2<u8>>,
    height: usize,
    width: usize,
) -> Array3<f32> {
    let mut painter = Painter::new(height, width, [0.0; 3]);
    let kp = pose.keypoints();
    let ok = |i: usize| kp[i].confidence > 0.0;
    let mut draw = |a: usize, b: usize, color: [f32; 3]| {
        if ok(a) && ok(b) {
            painter.line((kp[a].x, kp[a].y), (kp[b].x, kp[b].y), 1.2, color);
        }
    };
    for &(a, b, color) in BONE_COLORS.iter() {
        if a != b {
            draw(a, b, color);
        }
    }
    for root in [KP_HAND_L0, KP_HAND_R0] {
        for finger in 0..5 {
            let tip = root + 1 + finger * 4 + 3;
            draw(root, tip, [0.0, 0.0, 1.0]);
        }
    }
    let mut map = painter.rgb;
    if let Some(mask) = mask {
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    if mask[[y, x]] == 0 {
                        map[[c, y, x]] = 0.0;
                    }
                }
            }
        }
    }
    map
}

/// Shared extractor layout: stride-2 conv blocks with SiLU, a nearest
/// upsample back to the input grid and a zero-initialized output conv so
/// conditioning starts as a no-op.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseEncoderConfig {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub out_channels: usize,
    pub kernel: usize,
    pub final_kernel: usize,
}

impl Default for PoseEncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            channels: vec![8, 16, 16, 16],
            out_channels: 3,
            kernel: 3,
            final_kernel: 3,
        }
    }
}

impl PoseEncoderConfig {
    pub fn upsample_factor(&self) -> usize {
        1 << self.channels.len()
    }
}

/// Insert freshly initialized extractor parameters under `prefix`.
pub fn init_pose_encoder<S: Scalar>(
    store: &mut ParamStore<S>,
    prefix: &str,
    cfg: &PoseEncoderConfig,
    rng: &mut impl Rng,
) {
    let mut cin = cfg.in_channels;
    for (i, &cout) in cfg.channels.iter().enumerate() {
        let k = cfg.kernel;
        store.insert(
            &format!("{prefix}.block{i}.w"),
            kaiming(&[cout, cin, k, k], cin * k * k, rng),
        );
        store.insert(&format!("{prefix}.block{i}.b"), zeros(&[cout]));
        cin = cout;
    }
    let fk = cfg.final_kernel;
    store.insert(
        &format!("{prefix}.out.w"),
        zeros(&[cfg.out_channels, cin, fk, fk]),
    );
    store.insert(&format!("{prefix}.out.b"), zeros(&[cfg.out_channels]));
}

/// Forward one person's pose maps (frames, c_in, h, w) through the shared
/// extractor; output spatial shape equals the input spatial shape.
pub fn encode_person<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    prefix: &str,
    input: Tensor,
    cfg: &PoseEncoderConfig,
    trainable: bool,
) -> Result<Tensor> {
    let shape = g.shape(input).to_vec();
    if shape.len() != 4 || shape[1] != cfg.in_channels {
        return Err(Error::shape(
            format!("(f,{},h,w)", cfg.in_channels),
            format!("{shape:?}"),
        ));
    }
    let factor = cfg.upsample_factor();
    if shape[2] % factor != 0 || shape[3] % factor != 0 {
        return Err(Error::shape(
            format!("spatial dims divisible by {factor}"),
            format!("{}x{}", shape[2], shape[3]),
        ));
    }
    let mut h = input;
    for i in 0..cfg.channels.len() {
        let w = store.bind(g, &format!("{prefix}.block{i}.w"), trainable);
        let b = store.bind(g, &format!("{prefix}.block{i}.b"), trainable);
        h = g.conv2d(h, w, Some(b), 2, cfg.kernel / 2);
        h = g.silu(h);
    }
    if factor > 1 {
        h = g.upsample_nearest(h, factor);
    }
    let w = store.bind(g, &format!("{prefix}.out.w"), trainable);
    let b = store.bind(g, &format!("{prefix}.out.b"), trainable);
    Ok(g.conv2d(h, w, Some(b), 1, cfg.final_kernel / 2))
}

/// Sum per-person embeddings in canonical person-id order.
pub fn aggregate<S: Scalar>(
    g: &mut Graph<S>,
    embeddings: &[(u32, Tensor)],
) -> Result<Tensor> {
    if embeddings.is_empty() {
        return Err(Error::Format("aggregate needs >= 1 embedding".into()));
    }
    let shape0 = g.shape(embeddings[0].1).to_vec();
    for (_, t) in embeddings {
        if g.shape(*t) != shape0.as_slice() {
            return Err(Error::shape(
                format!("{shape0:?}"),
                format!("{:?}", g.shape(*t)),
            ));
        }
    }
    let mut order: Vec<usize> = (0..embeddings.len()).collect();
    order.sort_by_key(|&i| embeddings[i].0);
    let mut acc = embeddings[order[0]].1;
    for &i in &order[1..] {
        acc = g.add(acc, embeddings[i].1);
    }
    Ok(acc)
}

/// Pose adaptor: encode and aggregate the reference poses, then add the
/// result onto the reference-image features before the identity branch.
pub fn pose_adaptor<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    prefix: &str,
    ref_pose_maps: &[(u32, Tensor)],
    ref_features: Tensor,
    cfg: &PoseEncoderConfig,
    trainable: bool,
) -> Result<Tensor> {
    let mut encoded = Vec::with_capacity(ref_pose_maps.len());
    for (id, maps) in ref_pose_maps {
        encoded.push((*id, encode_person(g, store, prefix, *maps, cfg, trainable)?));
    }
    let agg = aggregate(g, &encoded)?;
    if g.shape(agg) != g.shape(ref_features) {
        return Err(Error::shape(
            format!("{:?}", g.shape(ref_features)),
            format!("{:?}", g.shape(agg)),
        ));
    }
    Ok(g.add(ref_features, agg))
}
