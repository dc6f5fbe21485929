//! Planning library and deterministic discrete-event simulator for
//! co-evolving several clients' compressed models on a shared edge server.
//!
//! The pipeline has two halves:
//!
//! - **Client side** ([`client`]): runtime accuracy profiling, shift-type
//!   classification, and budgeted resampling of local batches scored by their
//!   value to the local task ([`client::explicit_utility`]) and to remote
//!   tasks ([`client::implicit_complementarity`]).
//! - **Edge side** ([`planner`], [`iocost`], [`scheduler`]): fusing pending
//!   retraining jobs that share backbone computation, adapter planning,
//!   cache-aware batch reordering, and windowed GPU dispatch.
//!
//! [`sim`] binds both halves into an event-driven simulation with an explicit
//! accuracy-dynamics model, and [`config`], [`trace`], [`report`] and
//! [`commands`] form the I/O surface used by the `coevo` binary.

pub mod client;
pub mod commands;
pub mod config;
pub mod error;
pub mod ids;
pub mod iocost;
pub mod planner;
pub mod proxy;
pub mod report;
pub mod scheduler;
pub mod sim;
pub mod sketch;
pub mod trace;

pub use error::{CoreError, Result};
pub use ids::{BatchId, JobId, RequestId};
