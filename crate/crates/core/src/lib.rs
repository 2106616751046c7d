//! Dimensionless low-Reynolds-number swimmers and the controllers that learn to drive them.
//!
//! Two canonical swimmers are modelled: Purcell's three-link swimmer (closed-form
//! resistive-force-theory velocities) and the Najafi–Golestanian three-sphere swimmer.
//! On top of them sit an episodic [`env::Environment`], an independent numerical
//! [`oracle`], a tabular [`qlearning`] baseline, and a text-prompted control loop in
//! [`llm`] that talks to any [`llm::ChatBackend`].
//!
//! The crate is `no_std` and only needs `alloc`. IO, the HTTP backend and the command
//! line live in the companion `microswim` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod env;
pub mod error;
pub mod experiment;
pub mod llm;
pub mod oracle;
pub mod qlearning;
pub mod rng;
pub mod swimmer;

pub use error::{Error, Result};
pub use swimmer::{
    Action, Direction, Dof, ModelKind, ModelParams, NgState, PurcellState, RateVector, Roc,
    ShapeId, SwimmerState,
};
