//! Application-layer fragmentation of IKE messages.
//!
//! Only encrypted messages may be split. An unencrypted message (the
//! IKE_SA_INIT pair) either fits in one datagram or cannot be sent without
//! falling back to IP-layer fragmentation, which is the engine's decision.

use std::collections::BTreeMap;

use bytes::{Bytes, BytesMut};
use thiserror::Error;

/// Fixed IKE header carried by every datagram.
pub const IKE_HEADER_BYTES: usize = 28;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FragmentError {
    #[error("unencrypted message of {size} bytes exceeds the {capacity}-byte datagram capacity")]
    UnfragmentableMessage { size: usize, capacity: usize },
    #[error("fragment capacity must be positive")]
    ZeroCapacity,
    #[error("message needs {needed} fragments, more than the 65535 the fragment counter allows")]
    TooManyFragments { needed: usize },
    #[error("fragments disagree on the total count ({first} vs {second})")]
    InconsistentTotals { first: u16, second: u16 },
    #[error("fragment {number} outside 1..={total}")]
    InvalidFragmentNumber { number: u16, total: u16 },
    #[error("fragment for message {got} offered to buffer for message {expected}")]
    MessageIdMismatch { expected: u32, got: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub message_id: u32,
    /// 1-based.
    pub fragment_number: u16,
    pub total_fragments: u16,
    pub payload: Bytes,
    /// Payload plus the per-fragment IKE overhead, excluding IP/UDP.
    pub wire_size: usize,
}

/// Per-datagram sizing shared by every message of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentLayout {
    /// Maximum message bytes per fragment.
    pub capacity: usize,
    /// Overhead added to each encrypted fragment (IKE header, SKF header,
    /// IV, padding and ICV).
    pub encrypted_overhead: usize,
    /// Overhead added to an unencrypted message.
    pub plain_overhead: usize,
}

impl FragmentLayout {
    /// Capacity left inside a datagram of `threshold` bytes once the IP/UDP
    /// and fragment overheads are paid. `None` if nothing is left.
    pub fn from_threshold(
        threshold: usize,
        ip_udp_overhead: usize,
        fragment_overhead: usize,
    ) -> Option<Self> {
        let capacity = threshold.checked_sub(ip_udp_overhead + fragment_overhead)?;
        (capacity > 0).then_some(Self {
            capacity,
            encrypted_overhead: fragment_overhead,
            plain_overhead: IKE_HEADER_BYTES,
        })
    }

    pub fn fragment_count(&self, size: usize, encrypted: bool) -> Result<usize, FragmentError> {
        if self.capacity == 0 {
            return Err(FragmentError::ZeroCapacity);
        }
        if !encrypted {
            return if size <= self.capacity {
                Ok(1)
            } else {
                Err(FragmentError::UnfragmentableMessage {
                    size,
                    capacity: self.capacity,
                })
            };
        }
        Ok(size.div_ceil(self.capacity).max(1))
    }
}

/// Splits a message body into fragments of at most `layout.capacity` bytes.
///
/// An empty body still occupies one (empty) fragment.
pub fn fragment(
    message_id: u32,
    body: &Bytes,
    encrypted: bool,
    layout: &FragmentLayout,
) -> Result<Vec<Fragment>, FragmentError> {
    let count = layout.fragment_count(body.len(), encrypted)?;
    let total = u16::try_from(count).map_err(|_| FragmentError::TooManyFragments { needed: count })?;
    let overhead = if encrypted {
        layout.encrypted_overhead
    } else {
        layout.plain_overhead
    };
    let cap = layout.capacity;
    Ok((0..count)
        .map(|i| {
            let start = (i * cap).min(body.len());
            let end = ((i + 1) * cap).min(body.len());
            let payload = body.slice(start..end);
            Fragment {
                message_id,
                fragment_number: i as u16 + 1,
                total_fragments: total,
                wire_size: payload.len() + overhead,
                payload,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reassembled {
    Complete(Bytes),
    Incomplete { missing: Vec<u16> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReassemblyBuffer {
    pub message_id: u32,
    expected_total: Option<u16>,
    // fragment number -> (claimed total, payload)
    received: BTreeMap<u16, (u16, Bytes)>,
}

impl ReassemblyBuffer {
    pub fn new(message_id: u32) -> Self {
        Self {
            message_id,
            expected_total: None,
            received: BTreeMap::new(),
        }
    }

    pub fn expected_total(&self) -> Option<u16> {
        self.expected_total
    }

    pub fn received_count(&self) -> usize {
        self.received.len()
    }

    pub fn is_complete(&self) -> bool {
        self.expected_total
            .is_some_and(|t| self.received.len() == usize::from(t))
    }

    /// Stores a fragment. Re-delivery of a fragment already held is a no-op.
    pub fn insert(&mut self, frag: &Fragment) -> Result<(), FragmentError> {
        if frag.message_id != self.message_id {
            return Err(FragmentError::MessageIdMismatch {
                expected: self.message_id,
                got: frag.message_id,
            });
        }
        if frag.fragment_number == 0 || frag.fragment_number > frag.total_fragments {
            return Err(FragmentError::InvalidFragmentNumber {
                number: frag.fragment_number,
                total: frag.total_fragments,
            });
        }
        if let Some(first) = self.expected_total {
            if first != frag.total_fragments {
                return Err(FragmentError::InconsistentTotals {
                    first,
                    second: frag.total_fragments,
                });
            }
        }
        self.expected_total = Some(frag.total_fragments);
        self.received
            .entry(frag.fragment_number)
            .or_insert_with(|| (frag.total_fragments, frag.payload.clone()));
        Ok(())
    }

    /// Records a fragment without the consistency checks `insert` applies,
    /// so that `reassemble` can be exercised on a corrupt buffer.
    pub fn insert_unchecked(&mut self, frag: &Fragment) {
        self.expected_total.get_or_insert(frag.total_fragments);
        self.received
            .entry(frag.fragment_number)
            .or_insert_with(|| (frag.total_fragments, frag.payload.clone()));
    }

    pub fn reassemble(&self) -> Result<Reassembled, FragmentError> {
        let Some(total) = self.expected_total else {
            return Ok(Reassembled::Incomplete { missing: Vec::new() });
        };
        for &(claimed, _) in self.received.values() {
            if claimed != total {
                return Err(FragmentError::InconsistentTotals {
                    first: total,
                    second: claimed,
                });
            }
        }
        let missing: Vec<u16> = (1..=total)
            .filter(|n| !self.received.contains_key(n))
            .collect();
        if !missing.is_empty() {
            return Ok(Reassembled::Incomplete { missing });
        }
        let len = self.received.values().map(|(_, p)| p.len()).sum();
        let mut body = BytesMut::with_capacity(len);
        for (_, payload) in self.received.values() {
            body.extend_from_slice(payload);
        }
        Ok(Reassembled::Complete(body.freeze()))
    }
}
