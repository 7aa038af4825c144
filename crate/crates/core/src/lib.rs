//! Energy-aware longitudinal motion planning for electric vehicles.
//!
//! The crate is `no_std` (it needs `alloc`). It contains the planning core:
//!
//! * [`vehicle`]: longitudinal force model and optimal operating points
//! * [`frenet`]: reference-line smoothing and Cartesian/Frenet conversion
//! * [`qp`]: a banded ADMM quadratic-program solver with KKT certification
//! * [`path`]: SL lattice DP with quintic connections and QP refinement
//! * [`speed`]: phase-classified ST-graph DP and QP speed refinement
//! * [`energy`]: power/energy accounting and regenerative-braking gating
//! * [`sim`]: closed-loop kinematic simulator and planner A/B comparison
//!
//! File formats, the CLI and everything touching the filesystem live in the
//! `ecoplan` companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cost;
pub mod energy;
pub mod error;
pub mod frenet;
pub mod path;
pub mod qp;
pub mod quintic;
pub mod sim;
pub mod speed;
pub mod vehicle;

pub use cost::Cost;
pub use error::{Error, Result};
