//! Minimal reverse-mode building blocks.
//!
//! Every primitive exposes an explicit forward and backward. Backward passes
//! write parameter gradients into a [`Gradients`] buffer that is later folded
//! into a [`ParamStore`]; frozen networks simply pass no buffer.

mod array;
pub mod checkpoint;
mod gradcheck;
mod layers;
mod losses;
mod optim;
mod params;

pub use array::NumArray;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, grad_check_input, rel_error, GradCheckOptions, GradCheckReport};
pub use layers::{
    matmul, matmul_nt, matmul_tn, relu_backward, relu_forward, set_max_pool_backward, set_max_pool_forward,
    LayerSpec, Linear, MaxPoolRecord,
};
pub use losses::{kl_divergence, kl_divergence_full, log_softmax, softmax, softmax_xent, KlOutput};
pub use optim::{adam_step, sgd_step, AdamConfig};
pub use params::{Gradients, Param, ParamStore, RESERVED_PREFIX};
