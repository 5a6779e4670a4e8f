//! Gated linear attention viewed as weighted preconditioned gradient descent.
//!
//! The crate covers four layers of the same model:
//!
//! * [`data`] samples correlated multitask regression prompts.
//! * [`gla`] runs the gated linear attention recurrence and its weight constructions,
//!   and [`wpgd`] holds the attention-free reference estimators it reduces to.
//! * [`landscape`] evaluates the population risk in closed form and solves for its optimum.
//! * [`train`] fits small attention models by minibatch Adam and estimates risk by Monte Carlo.
//!
//! Everything is `no_std` with `alloc`. The `std` feature only enables running
//! training trials on multiple threads.
#![no_std]
// `!(x >= 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod data;
pub mod error;
pub mod gla;
pub mod isotonic;
pub mod landscape;
pub mod linalg;
pub mod rng;
pub mod train;
pub mod wpgd;

pub use error::{Error, Result};
