//! Sparse voxel ConvNets built from pretrained 2D filters.
//!
//! The crate is `no_std` (with `alloc`). It covers point-cloud voxelization,
//! kernel-map driven sparse 3D convolution with a reverse-mode tape, the
//! filter-transform algebra that lifts `[M, N, K, K]` 2D kernels to
//! `[M, N, K, K, K]` 3D kernels, inflated ResNet builders, finetuning regimes,
//! SGD training, and brute-force oracles used to verify all of the above.
//!
//! File formats, configuration and the command-line tool live in the `i2p`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod archive;
pub mod error;
pub mod grid;
pub mod inflation;
pub mod kernel_map;
pub mod models;
pub mod ops;
pub mod oracle;
pub mod param;
pub mod real;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod verify;
pub mod voxel;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{Matrix, Tensor};
