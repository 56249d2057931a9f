//! IKEv2 connection setup as a pair of sans-IO state machines.
//!
//! [`Initiator`] and [`Responder`] consume events (start, datagram arrival,
//! timer expiry) stamped with a caller-supplied clock and return the
//! datagrams to send. The simulator drives them from a virtual event queue;
//! live mode drives the same code from real sockets.

mod initiator;
mod plan;
mod responder;
pub mod wire;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use initiator::{Initiator, InitiatorEvent};
pub use plan::{
    datagram_count, plan_handshake, Direction, HandshakePlan, ItemSource, MessageBlueprint,
    PayloadItem, PreparedHandshake, PreparedMessage, WireLayout,
};
pub use responder::Responder;

use crate::fragment::{Fragment, FragmentError};
use crate::netsim::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExchangeType {
    IkeSaInit,
    IkeIntermediate,
    IkeFollowupKe,
    IkeAuth,
}

impl ExchangeType {
    /// IANA exchange type number.
    pub fn number(self) -> u8 {
        match self {
            ExchangeType::IkeSaInit => 34,
            ExchangeType::IkeAuth => 35,
            ExchangeType::IkeIntermediate => 43,
            ExchangeType::IkeFollowupKe => 44,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Some(match n {
            34 => ExchangeType::IkeSaInit,
            35 => ExchangeType::IkeAuth,
            43 => ExchangeType::IkeIntermediate,
            44 => ExchangeType::IkeFollowupKe,
            _ => return None,
        })
    }

    /// Everything after IKE_SA_INIT travels inside an SK payload.
    pub fn is_encrypted(self) -> bool {
        self != ExchangeType::IkeSaInit
    }
}

impl fmt::Display for ExchangeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExchangeType::IkeSaInit => "IKE_SA_INIT",
            ExchangeType::IkeIntermediate => "IKE_INTERMEDIATE",
            ExchangeType::IkeFollowupKe => "IKE_FOLLOWUP_KE",
            ExchangeType::IkeAuth => "IKE_AUTH",
        })
    }
}

/// What to do when an unencrypted IKE_SA_INIT message outgrows a datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaInitPolicy {
    Error,
    IpFragment,
}

/// Which key exchange the IKE_SA_INIT pair carries for multi-KE suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaInitKe {
    /// A 2048-bit MODP group; every suite KE moves to follow-up rounds.
    Classical,
    /// The suite's first key establishment.
    Primary,
}

/// How long a receiver keeps fragments of a message that was retransmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReassemblyScope {
    /// Fragments only combine within one transmission attempt, so a single
    /// lost fragment fails the whole attempt.
    Attempt,
    /// Fragments accumulate across retransmissions of the same message.
    Message,
}

pub const MAX_ADDITIONAL_KE_ROUNDS: u8 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub additional_ke_rounds: u8,
    pub initial_timeout_ms: f64,
    pub backoff_factor: f64,
    pub max_retries: u32,
    /// `None` retries the whole handshake forever.
    pub max_restarts: Option<u32>,
    pub sa_init_policy: SaInitPolicy,
    pub sa_init_ke: SaInitKe,
    pub reassembly_scope: ReassemblyScope,
    pub fragment_threshold_bytes: usize,
    pub fragment_overhead_bytes: usize,
    pub ip_udp_overhead_bytes: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            additional_ke_rounds: 2,
            initial_timeout_ms: 4000.0,
            backoff_factor: 2.0,
            max_retries: 5,
            max_restarts: None,
            sa_init_policy: SaInitPolicy::Error,
            sa_init_ke: SaInitKe::Classical,
            reassembly_scope: ReassemblyScope::Attempt,
            fragment_threshold_bytes: 576,
            fragment_overhead_bytes: 61,
            ip_udp_overhead_bytes: 28,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let err = |m: String| Err(EngineError::Config(m));
        if !(1..=MAX_ADDITIONAL_KE_ROUNDS).contains(&self.additional_ke_rounds) {
            return err(format!(
                "additional_ke_rounds must be in 1..={MAX_ADDITIONAL_KE_ROUNDS}, got {}",
                self.additional_ke_rounds
            ));
        }
        if !(self.initial_timeout_ms.is_finite() && self.initial_timeout_ms > 0.0) {
            return err(format!(
                "initial_timeout_ms must be positive, got {}",
                self.initial_timeout_ms
            ));
        }
        if !(self.backoff_factor.is_finite() && self.backoff_factor >= 1.0) {
            return err(format!(
                "backoff_factor must be >= 1, got {}",
                self.backoff_factor
            ));
        }
        if self.fragment_overhead_bytes < wire::MIN_FRAGMENT_OVERHEAD {
            return err(format!(
                "fragment_overhead_bytes must be at least {}, got {}",
                wire::MIN_FRAGMENT_OVERHEAD,
                self.fragment_overhead_bytes
            ));
        }
        if self.fragment_threshold_bytes
            <= self.ip_udp_overhead_bytes + self.fragment_overhead_bytes
        {
            return err(format!(
                "fragment_threshold_bytes {} leaves no room after {} bytes of overhead",
                self.fragment_threshold_bytes,
                self.ip_udp_overhead_bytes + self.fragment_overhead_bytes
            ));
        }
        Ok(())
    }

    /// Retransmission timeout after `retry` retransmissions.
    pub fn timeout(&self, retry: u32) -> SimTime {
        SimTime::from_ms(self.initial_timeout_ms * self.backoff_factor.powi(retry as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointRole {
    Initiator,
    Responder,
}

/// How a message's bytes were split across datagrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentKind {
    /// Unencrypted message in a single datagram.
    Plain,
    /// Encrypted fragment (one SKF payload per datagram).
    Encrypted,
    /// Piece of an unencrypted message split at the IP layer.
    IpFragment,
}

/// One IKE datagram in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    /// Initiator SPI; a restarted handshake uses a fresh one.
    pub spi: u64,
    pub exchange: ExchangeType,
    pub response: bool,
    /// Transmission generation of the carried message.
    pub attempt: u16,
    pub kind: FragmentKind,
    pub fragment: Fragment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendAction {
    pub at: SimTime,
    pub from: EndpointRole,
    pub retransmission: bool,
    pub datagram: Datagram,
}

/// Bytes put on the wire by both endpoints, IP/UDP headers included.
pub fn handshake_bytes(trace: &[SendAction], ip_udp_overhead: usize) -> u64 {
    trace
        .iter()
        .map(|a| (a.datagram.fragment.wire_size + ip_udp_overhead) as u64)
        .sum()
}

/// Transmission counters kept by each endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendCounters {
    pub datagrams: u64,
    pub retransmissions: u64,
    pub wire_bytes: u64,
}

impl SendCounters {
    fn record(&mut self, actions: &[SendAction], ip_udp_overhead: usize) {
        for a in actions {
            self.datagrams += 1;
            self.retransmissions += u64::from(a.retransmission);
            self.wire_bytes += (a.datagram.fragment.wire_size + ip_udp_overhead) as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exchange_numbers_round_trip() {
        for e in [
            ExchangeType::IkeSaInit,
            ExchangeType::IkeIntermediate,
            ExchangeType::IkeFollowupKe,
            ExchangeType::IkeAuth,
        ] {
            assert_eq!(ExchangeType::from_number(e.number()), Some(e));
        }
        assert_eq!(ExchangeType::from_number(36), None);
        assert!(!ExchangeType::IkeSaInit.is_encrypted());
        assert!(ExchangeType::IkeAuth.is_encrypted());
    }

    #[test]
    fn default_config_is_valid() {
        EngineConfig::default().validate().unwrap();
    }

    #[test]
    fn config_bounds() {
        let bad = |f: fn(&mut EngineConfig)| {
            let mut c = EngineConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.additional_ke_rounds = 0));
        assert!(bad(|c| c.additional_ke_rounds = 8));
        assert!(bad(|c| c.initial_timeout_ms = 0.0));
        assert!(bad(|c| c.backoff_factor = 0.5));
        assert!(bad(|c| c.fragment_threshold_bytes = 89));
        assert!(bad(|c| c.fragment_overhead_bytes = 10));
    }

    #[test]
    fn exponential_timeouts() {
        let c = EngineConfig::default();
        let t: Vec<f64> = (0..4).map(|k| c.timeout(k).as_ms()).collect();
        assert_eq!(t, [4000.0, 8000.0, 16000.0, 32000.0]);
    }

    #[test]
    fn empty_trace_costs_nothing() {
        assert_eq!(handshake_bytes(&[], 28), 0);
    }
}
