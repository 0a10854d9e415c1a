//! Stochastic signaling game between an ML system that releases gradient
//! explanations and an end-user who may use them for membership inference.
//!
//! The explanation variance follows a geometric Brownian motion ([`gbm`]);
//! the system tracks its belief that the end-user is honest ([`beliefs`]);
//! both players solve optimal-stopping problems ([`hjb`], [`cutoffs`]); the
//! staged game and equilibrium detection live in [`equilibrium`], and the
//! threshold attack in [`attack`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod beliefs;
pub mod cli;
pub mod cutoffs;
pub mod equilibrium;
pub mod error;
pub mod gbm;
pub mod hjb;

pub use error::{GameError, Result};
