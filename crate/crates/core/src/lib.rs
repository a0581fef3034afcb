//! Noise, rate and state-fidelity modeling for entangled O-band photons that
//! share installed fiber with C/L-band WDM classical traffic.
//!
//! The crate is organised by subsystem:
//!
//! - [`raman`]: spontaneous Raman gain spectrum, phonon occupation and
//!   absolute noise rates at a quantum receiver.
//! - [`network`]: lossy fiber links, classical launch plans and 2×2 switch
//!   routing between a lit and a dark fiber.
//! - [`source`]: pulsed entangled-pair source and energy-conserving channel
//!   pairs.
//! - [`rates`]: analytic singles, coincidences, accidentals, visibility and
//!   CAR.
//! - [`tomo`]: two-qubit / one-qubit density matrices, simulated tomography
//!   and maximum-likelihood reconstruction.
//! - [`mcsim`]: event-level Monte Carlo used as an oracle for [`rates`].
//! - [`planner`]: exhaustive channel/routing/operating-point search.
//! - [`config`] and [`cli`]: JSON run configuration and the `qcoex` command
//!   line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod mcsim;
pub mod network;
pub mod planner;
pub mod raman;
pub mod rates;
pub mod scenario;
pub mod source;
pub mod tomo;
pub mod units;

pub use error::{Error, Result};
