//! Synthetic multi-speaker conversation scenes: procedural stick figures,
//! template-driven speaking curves, audio features and deterministic
//! dataset construction. The rendered world is the ground truth the training
//! and evaluation loop runs against.

mod audio;
mod curves;
mod dataset;
mod figure;
mod render;

pub use audio::{gen_audio_features, AudioFeatureTrack};
pub use curves::gen_speaking_curves;
pub use dataset::{
    build_dataset, gen_clip, load_clip, load_manifest, mix_audio, write_clip, ClipEntry,
    DatasetManifest, SynthConfig,
};
pub use figure::{gen_pose_sequence, mouth_anchor, IdentitySpec, LimbLengths, MouthAnchor};
pub use render::{measure_mouth_aperture, pearson, render_clip, ClipRecord, BACKGROUND};
