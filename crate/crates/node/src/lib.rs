//! Host-side node for the streaming readout chain: run configuration,
//! PV slow control, TCP lane transport, pipeline orchestration, and
//! report rendering around the `ship-core` algorithms.

pub mod config;
pub mod pipeline;
pub mod pv;
pub mod report;
pub mod transport;
