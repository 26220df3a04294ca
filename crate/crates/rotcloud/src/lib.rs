//! Self-supervised point-cloud learning via rotation prediction.
//!
//! The pipeline: generate or ingest canonically-oriented shapes, pretrain a
//! PointNet-style encoder to predict applied rotations (K-way classification
//! or axis-angle / 6-D regression), then evaluate the frozen features with a
//! linear SVM and fine-tune for keypoint regression scored by PCK curves.

pub mod autodiff;
pub mod cli;
pub mod dirset;
pub mod downstream;
pub mod encoder;
pub mod error;
pub mod keypoint;
pub mod pcdata;
pub mod pretrain;
pub mod rng;
pub mod so3;
pub mod threads;

pub use error::{Error, Result};
