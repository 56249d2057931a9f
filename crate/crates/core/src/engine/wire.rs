//! Byte encoding of [`Datagram`]s for live mode.
//!
//! The 28-byte IKE header is laid out as on a real wire (SPIs, next
//! payload, version, exchange type, flags, message id, length). The
//! responder-SPI slot carries the fragment bookkeeping the simulator keeps
//! out of band: fragment number, total, transmission attempt and kind.
//! Encrypted fragments add an SKF payload header and are zero-padded to the
//! configured fragment overhead, so an encoded datagram is exactly
//! `fragment.wire_size` bytes.

use bytes::Bytes;
use thiserror::Error;

use super::{Datagram, ExchangeType, FragmentKind};
use crate::fragment::{Fragment, IKE_HEADER_BYTES};

const SKF_HEADER_BYTES: usize = 8;
pub const MIN_FRAGMENT_OVERHEAD: usize = IKE_HEADER_BYTES + SKF_HEADER_BYTES;

const NEXT_PAYLOAD_SA: u8 = 33;
const NEXT_PAYLOAD_SKF: u8 = 53;
const VERSION_2_0: u8 = 0x20;
const FLAG_INITIATOR: u8 = 0x08;
const FLAG_RESPONSE: u8 = 0x20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("datagram of {0} bytes is shorter than its headers")]
    Truncated(usize),
    #[error("unsupported IKE version byte {0:#04x}")]
    BadVersion(u8),
    #[error("unknown exchange type {0}")]
    UnknownExchange(u8),
    #[error("unknown fragment kind {0}")]
    UnknownKind(u8),
    #[error("length field {field} disagrees with datagram size {actual}")]
    LengthMismatch { field: usize, actual: usize },
}

fn kind_code(kind: FragmentKind) -> u8 {
    match kind {
        FragmentKind::Plain => 0,
        FragmentKind::Encrypted => 1,
        FragmentKind::IpFragment => 2,
    }
}

pub fn encode(dg: &Datagram, encrypted_overhead: usize) -> Vec<u8> {
    let f = &dg.fragment;
    let mut out = Vec::with_capacity(f.wire_size);
    out.extend_from_slice(&dg.spi.to_be_bytes());
    out.extend_from_slice(&f.fragment_number.to_be_bytes());
    out.extend_from_slice(&f.total_fragments.to_be_bytes());
    out.extend_from_slice(&dg.attempt.to_be_bytes());
    out.push(kind_code(dg.kind));
    out.push(0);
    out.push(match dg.kind {
        FragmentKind::Encrypted => NEXT_PAYLOAD_SKF,
        FragmentKind::Plain => NEXT_PAYLOAD_SA,
        FragmentKind::IpFragment => 0,
    });
    out.push(VERSION_2_0);
    out.push(dg.exchange.number());
    out.push(if dg.response {
        FLAG_RESPONSE
    } else {
        FLAG_INITIATOR
    });
    out.extend_from_slice(&f.message_id.to_be_bytes());
    out.extend_from_slice(&(f.wire_size as u32).to_be_bytes());
    if dg.kind == FragmentKind::Encrypted {
        let skf_len = (f.wire_size - IKE_HEADER_BYTES) as u16;
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&skf_len.to_be_bytes());
        out.extend_from_slice(&f.fragment_number.to_be_bytes());
        out.extend_from_slice(&f.total_fragments.to_be_bytes());
        out.extend_from_slice(&f.payload);
        out.resize(f.payload.len() + encrypted_overhead, 0);
    } else {
        out.extend_from_slice(&f.payload);
    }
    debug_assert_eq!(out.len(), f.wire_size);
    out
}

pub fn decode(buf: &[u8], encrypted_overhead: usize) -> Result<Datagram, WireError> {
    if buf.len() < IKE_HEADER_BYTES {
        return Err(WireError::Truncated(buf.len()));
    }
    let u16_at = |i: usize| u16::from_be_bytes([buf[i], buf[i + 1]]);
    let u32_at = |i: usize| u32::from_be_bytes([buf[i], buf[i + 1], buf[i + 2], buf[i + 3]]);
    let spi = u64::from_be_bytes(buf[0..8].try_into().expect("8 bytes"));
    let fragment_number = u16_at(8);
    let total_fragments = u16_at(10);
    let attempt = u16_at(12);
    let kind = match buf[14] {
        0 => FragmentKind::Plain,
        1 => FragmentKind::Encrypted,
        2 => FragmentKind::IpFragment,
        k => return Err(WireError::UnknownKind(k)),
    };
    if buf[17] != VERSION_2_0 {
        return Err(WireError::BadVersion(buf[17]));
    }
    let exchange = ExchangeType::from_number(buf[18]).ok_or(WireError::UnknownExchange(buf[18]))?;
    let response = buf[19] & FLAG_RESPONSE != 0;
    let message_id = u32_at(20);
    let length = u32_at(24) as usize;
    if length != buf.len() {
        return Err(WireError::LengthMismatch {
            field: length,
            actual: buf.len(),
        });
    }
    let payload = if kind == FragmentKind::Encrypted {
        if buf.len() < encrypted_overhead {
            return Err(WireError::Truncated(buf.len()));
        }
        let start = IKE_HEADER_BYTES + SKF_HEADER_BYTES;
        &buf[start..start + buf.len() - encrypted_overhead]
    } else {
        &buf[IKE_HEADER_BYTES..]
    };
    Ok(Datagram {
        spi,
        exchange,
        response,
        attempt,
        kind,
        fragment: Fragment {
            message_id,
            fragment_number,
            total_fragments,
            payload: Bytes::copy_from_slice(payload),
            wire_size: buf.len(),
        },
    })
}
