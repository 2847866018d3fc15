//! Policy decision point over HTTP, and the enforcement-point client.
//!
//! Endpoints:
//!
//! | method | path               | body                         |
//! |--------|--------------------|------------------------------|
//! | POST   | `/v1/decide`       | [`WireRequest`], read/write  |
//! | POST   | `/v1/verify-chain` | [`WireRequest`], verify-chain|
//! | GET    | `/v1/health`       | -                            |
//! | GET    | `/v1/metrics`      | -                            |
//!
//! Decisions are computed against a read snapshot of the shared store. The
//! client never decides anything locally.

mod client;
mod config;
mod metrics;
mod server;
mod wire;

pub use client::{pep_request, PepClient, PepError};
pub use config::{ConfigError, ServiceConfig};
pub use metrics::{Metrics, MetricsSnapshot};
pub use server::{router, serve, spawn, PdpState, RunningService, ServeError};
pub use wire::{WireError, WireRequest, WireResponse, WireSubject};
