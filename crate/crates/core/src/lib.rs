//! Convolutional classifier built from gated-dilation layers: each layer
//! splits its input between a narrow (dilation 1) and a wide (dilation 2)
//! 3×3 branch according to a learned per-image scalar α.
//!
//! The crate carries its own small reverse-mode autodiff, a synthetic
//! lesion-like image generator, the training and cross-validation loop, and
//! probes that relate α to object size.

pub mod autodiff;
pub mod conv;
pub mod data;
pub mod error;
pub mod gd_layer;
pub mod gradcheck;
pub mod network;
pub mod parallel;
pub mod probe;
pub mod report;
pub mod seed;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use gd_layer::GdLayerParams;
pub use network::{init_network, GdNetConfig, GdNetParams};
pub use parallel::Exec;
pub use tensor::{Real, Tensor};
