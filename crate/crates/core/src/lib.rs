//! Monte Carlo coverage simulator for two-hop integrated access and backhaul
//! (IAB) millimeter-wave networks on a finite disk.
//!
//! Nodes, blocking walls and tree lines are Poisson-distributed. Each UE
//! attaches to the base station with the strongest average received power.
//! Small cells either backhaul wirelessly to the least-lossy macro donor or
//! are fiber-connected. Bandwidth is split between backhaul and access by a
//! fraction `mu`. The simulator reports the service coverage probability:
//! the fraction of UEs whose rate meets a threshold.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod geometry;
pub mod network;
pub mod propagation;
pub mod terrain3d;
