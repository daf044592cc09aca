//! System-level simulator for periodic vehicular status messages (CAMs)
//! carried over LTE, either multicast in MBSFN subframes or as one unicast
//! copy per receiving car.
//!
//! The crate is organised bottom-up: [`topology`] places cells and users,
//! [`channel`] draws pathloss, shadowing and time-varying fading, [`link`]
//! turns channels into SINRs, CQIs and decode outcomes, [`traffic`] and
//! [`scheduler`] decide who transmits on which resource blocks, [`engine`]
//! steps the whole system TTI by TTI and [`metrics`] reduces the result.

pub mod channel;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod link;
pub mod metrics;
pub mod rng;
pub mod scheduler;
pub mod topology;
pub mod traffic;

pub use config::{ScenarioConfig, TransmissionMode};
pub use engine::{replicate, run, run_with_seed, RunRecord};
pub use error::{Result, SimError};
pub use scheduler::CqiPolicy;
