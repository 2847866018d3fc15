//! Access control for calibration traceability.
//!
//! Reports and technicians carry [`SecurityLabel`]s drawn from a lattice
//! that folds confidentiality, reversed integrity and conflict-of-interest
//! constraints into one dominance relation. The crate provides
//!
//! - [`label`]: the label algebra (validation, dominance, join),
//! - [`policy`]: the unified decision engine and the three-policy baseline,
//! - [`store`]: devices and calibration reports over an append-only log,
//!   including recursive traceability verification,
//! - [`conflict`]: random conflict graphs, clique-derived COI universes and
//!   benchmark fixtures,
//! - [`pdp`]: an HTTP policy decision point and its enforcement-point client,
//! - [`bench`]: the latency experiments and their CSV summaries.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod bench;
pub mod conflict;
pub mod ids;
pub mod label;
pub mod pdp;
pub mod policy;
pub mod store;

pub use ids::{DeviceId, FacilityId, ReportId, TechnicianId};
pub use label::{CoiEntry, CoiUniverse, IntegrityLadder, LabelError, SecurityLabel};
pub use policy::{AccessRequest, Decision, DenyReason, Engine, EngineMode, Outcome, RequestTarget};
pub use store::{CalibrationReport, CalibrationRequest, Store, StoreError, Technician};
