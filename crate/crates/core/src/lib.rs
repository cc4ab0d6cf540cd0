//! Multi-speaker talking-video toolkit.
//!
//! Pipeline pieces, desk scale end to end:
//! - [`annotate`]: pose-speech alignment over detector outputs (keypoint
//!   subsetting, pose/face-track assignment, interaction patterns, clips);
//! - [`synth`]: deterministic synthetic conversation scenes with ground-truth
//!   poses, masks, speaking scores and audio features;
//! - [`nn`]: small reverse-mode autodiff engine the models are built on;
//! - [`pose_encoder`]: shared per-person pose feature extractor summed into
//!   one conditioning embedding, reused as the reference pose adaptor;
//! - [`audio_driver`]: speaking-score-gated audio injection through
//!   face-masked cross-attention;
//! - [`diffusion`]: pixel-space denoising-diffusion video backbone with
//!   reference conditioning and two-stage training;
//! - [`sampler`]: window-by-window generation with pinned motion frames;
//! - [`metrics`]: SSIM, PSNR and Frechet distance over pluggable features.

pub mod annotate;
pub mod container;
pub mod error;
pub mod raster;
pub mod seeds;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
