//! Forward and backward kernels of every layer primitive.

pub mod basic;
pub mod batchnorm;
pub mod conv2d;
pub mod sparse_conv;

pub use basic::{add, concat, group_mean, linear, relu};
pub use batchnorm::{batchnorm_forward, BatchNormParams, BnMode, BnSaved};
pub use conv2d::{dense_conv2d_forward, ConvParams2D, PlanarShape};
pub use sparse_conv::{sparse_conv3d_backward, sparse_conv3d_forward, sparse_deconv_forward, ConvParams3D};
