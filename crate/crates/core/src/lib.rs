//! Message-accurate simulation of IKEv2 connection setup with classical and
//! quantum-resistant suites over lossy, high-latency links.
//!
//! The crate is organized bottom-up:
//!
//! - [`suite`]: byte-size models of the cryptographic configurations.
//! - [`fragment`]: application-layer fragmentation and reassembly.
//! - [`engine`]: initiator/responder state machines and handshake plans.
//! - [`netsim`]: Gilbert-Elliott loss channel, link delay, event queue.
//! - [`metrics`]: per-run measurements and distribution statistics.
//! - [`harness`]: scenario configs, batch runs, result files, live mode.

pub mod engine;
pub mod fragment;
pub mod harness;
pub mod metrics;
pub mod netsim;
pub mod suite;
