//! Deterministic packet channel: bursty loss, fixed propagation delay and a
//! virtual clock.

mod channel;
mod link;
mod queue;
mod time;

pub use channel::{steady_state_loss, ChannelState, GilbertElliottChannel, LossModel};
pub use link::{transmit, DeliveryOutcome, LinkParams, MIN_MTU};
pub use queue::EventQueue;
pub use time::SimTime;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsimError {
    #[error("P and R are both zero; the chain has no steady state")]
    DegenerateChain,
    #[error("{name} = {value} is not a probability")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("datagram of {size} bytes exceeds the {mtu}-byte MTU")]
    OversizedDatagram { size: usize, mtu: usize },
}
