//! Information-optimal aggregation of set- and graph-structured data.
//!
//! Every datum in a set is mapped by a pair of networks to a score vector and
//! a positive-definite Fisher matrix. Scores and Fishers are summed over the
//! set and combined into a pseudo maximum-likelihood estimate
//! `theta_hat = F^-1 t + c`. The same machinery serves as a drop-in
//! neighborhood aggregator in message-passing graph networks.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI and the
//! experiment runners live in the `fishnets-harness` crate.
//!
//! Module map:
//!
//! * [`nn`]: dense feedforward networks with analytic gradients and Adam.
//! * [`fishnets`]: score/Fisher embeddings, aggregation, estimator and loss.
//! * [`baselines`]: mean and softmax deepsets trained with squared error.
//! * [`genmodels`]: simulators and analytic oracles.
//! * [`graph`]: message passing with mean, softmax or Fisher aggregation.
//! * [`stats`]: Kolmogorov-Smirnov test, PIT and small summary helpers.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod baselines;
pub mod error;
pub mod fishnets;
pub mod genmodels;
pub mod graph;
pub mod linalg;
pub mod math;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
