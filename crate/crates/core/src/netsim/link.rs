use serde::{Deserialize, Serialize};

use super::{GilbertElliottChannel, NetsimError, SimTime};

pub const MIN_MTU: usize = 576;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub rtt_ms: f64,
    pub mtu: usize,
    pub seed: u64,
}

impl LinkParams {
    /// Half the round-trip time, rounded to the nanosecond.
    pub fn one_way_delay(&self) -> SimTime {
        SimTime::from_ms(self.rtt_ms / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered { at: SimTime },
    Dropped,
}

/// Pushes one datagram of `size` bytes (IP/UDP included) through the
/// channel. Consumes exactly one channel step when the size is legal.
pub fn transmit(
    size: usize,
    link: &LinkParams,
    channel: &mut GilbertElliottChannel,
    now: SimTime,
) -> Result<DeliveryOutcome, NetsimError> {
    if size > link.mtu {
        return Err(NetsimError::OversizedDatagram {
            size,
            mtu: link.mtu,
        });
    }
    Ok(if channel.step() {
        DeliveryOutcome::Dropped
    } else {
        DeliveryOutcome::Delivered {
            at: now + link.one_way_delay(),
        }
    })
}
