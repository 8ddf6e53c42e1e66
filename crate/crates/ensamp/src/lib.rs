//! Ensemble sampling workflows on a local pilot-style executor.
//!
//! `ensamp` runs iterated simulation-analysis loops: an ensemble of short
//! stochastic dynamics runs, a barrier, then a single analysis task that
//! decides where the next round of simulations starts. Two adaptive-sampling
//! analysis kernels are built in — locally scaled diffusion maps with
//! replica selection ([`lsdmap`]) and complementary coordinates ([`coco`]) —
//! together with a toy Langevin simulation kernel ([`dynamics`]) so whole
//! workflows execute and can be checked on a laptop.
//!
//! The moving parts:
//!
//! * [`core`] — replicas, ensembles, task specs and records.
//! * [`executor`] — a bounded-capacity pilot that runs more tasks than slots.
//! * [`config`] — the two plain-text configuration files (resource, kernel).
//! * [`dynamics`] — overdamped Langevin dynamics on analytic potentials.
//! * [`lsdmap`] — diffusion maps and the replica delete/duplicate/reweight step.
//! * [`coco`] — PCA, bin occupancy, furthest-bin point generation.
//! * [`workflow`] — the simulation-analysis loop driver and a plain-MD baseline.
//! * [`metrics`] — overhead and scaling experiment harness.
//!
//! The `ensamp` binary exposes all of this behind subcommands; see the guide
//! in `book/` for a narrative walk-through of each piece.

pub mod coco;
pub mod config;
pub mod core;
pub mod dynamics;
pub mod executor;
pub mod lsdmap;
pub mod metrics;
pub mod workflow;

#[cfg(doctest)]
mod booktest;
