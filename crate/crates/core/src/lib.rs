//! Real-time coordination of networked energy-storage units on a radial
//! distribution feeder.
//!
//! The crate models a single-phase radial feeder with one battery per load
//! bus. Each period an operator issues a regulation signal, prices realize,
//! and a per-period convex quadratic program decides how much every battery
//! (dis)charges subject to charge limits and linearized voltage constraints.
//! Three policies are provided: a weighted virtual-queue policy whose
//! parameters are tuned in closed form so that states of charge provably stay
//! within limits, its common-weight variant, and a myopic greedy baseline.
//! The per-period program can be solved centrally or by a message-passing
//! dual decomposition between an aggregator and the users.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats, and the
//! command-line front end live in the companion `gridstor` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod controller;
pub mod dualnet;
pub mod grid;
pub mod market;
pub mod mat;
mod qp;
pub mod rng;
pub mod sim;
pub mod storage;
