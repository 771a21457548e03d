//! Deterministic numeric substrate.

mod fd;
mod ols;
mod rng;
mod vector;

pub use fd::{central_diff_grad, default_fd_step};
pub use ols::{ols_fit, LawFit};
pub use rng::RngStream;
pub use vector::{
    axpy, dot, linf, norm2, pairwise_sum, sub, tree_weighted_sum, RealVec,
};
