//! Bottleneck localization for permissioned-ledger pipelines.
//!
//! The crate bundles a discrete-event simulator of two ledger architectures
//! ([`netsim`]), a throughput-localizing benchmark controller
//! ([`controller`]), long-format metric storage ([`metrics`]), trend and
//! bottleneck analysis ([`analysis`]) and report generation ([`report`]).

pub mod analysis;
pub mod controller;
pub mod metrics;
pub mod model;
pub mod netsim;
pub mod report;
