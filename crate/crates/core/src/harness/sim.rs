//! One connection setup driven through the virtual-time channel.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::ChannelMode;
use crate::engine::{
    Datagram, EndpointRole, EngineError, Initiator, InitiatorEvent, PreparedHandshake, Responder,
    SendAction,
};
use crate::metrics::TraceEvent;
use crate::netsim::{
    transmit, DeliveryOutcome, EventQueue, GilbertElliottChannel, LinkParams, LossModel,
    NetsimError, SimTime,
};

/// Upper bound on datagrams per run; a run that reaches it is reported as
/// an error instead of looping forever.
pub const DEFAULT_DATAGRAM_BUDGET: u64 = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error("gave up after {0} datagrams")]
    BudgetExhausted(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub link: LinkParams,
    pub loss: LossModel,
    pub channel_mode: ChannelMode,
    pub jitter_ms: f64,
    pub record_trace: bool,
    pub datagram_budget: u64,
}

impl SimSettings {
    pub fn new(link: LinkParams, loss: LossModel) -> Self {
        Self {
            link,
            loss,
            channel_mode: ChannelMode::Shared,
            jitter_ms: 0.0,
            record_trace: false,
            datagram_budget: DEFAULT_DATAGRAM_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutcome {
    pub established: bool,
    pub setup_time: Option<SimTime>,
    /// IP/UDP-inclusive bytes sent by both endpoints.
    pub total_bytes: u64,
    pub datagrams: u64,
    pub retransmissions: u64,
    pub restarts: u64,
    pub dropped: u64,
    pub trace: Vec<TraceEvent>,
}

enum SimEvent {
    Start,
    Timer(SimTime),
    Deliver(EndpointRole, Datagram),
}

fn mix(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream)
        .rotate_left(17)
        ^ 0xd1b5_4a32_d192_ed03
}

/// Runs one handshake until the initiator establishes the SA or gives up.
pub fn simulate_run(
    script: Arc<PreparedHandshake>,
    settings: &SimSettings,
    seed: u64,
) -> Result<RunOutcome, SimError> {
    let forward = GilbertElliottChannel::new(settings.loss, mix(seed, 1))?;
    let backward = match settings.channel_mode {
        ChannelMode::Shared => None,
        ChannelMode::PerDirection => Some(GilbertElliottChannel::new(settings.loss, mix(seed, 2))?),
    };
    simulate_with_channels(script, settings, forward, backward, seed)
}

/// Same as [`simulate_run`] with caller-built channels. `backward` carries
/// responder traffic when present; otherwise both directions share
/// `forward`. `settings.loss` and `settings.channel_mode` are ignored.
pub fn simulate_with_channels(
    script: Arc<PreparedHandshake>,
    settings: &SimSettings,
    mut forward: GilbertElliottChannel,
    mut backward: Option<GilbertElliottChannel>,
    seed: u64,
) -> Result<RunOutcome, SimError> {
    let mut jitter = (settings.jitter_ms > 0.0).then(|| ChaCha8Rng::seed_from_u64(mix(seed, 3)));
    let ip_udp = script.layout.ip_udp_overhead;

    let mut initiator = Initiator::new(script.clone(), mix(seed, 4) | 1);
    let mut responder = Responder::new(script);
    let mut queue = EventQueue::new();
    let mut out = RunOutcome::default();
    let mut armed: Option<SimTime> = None;
    queue.push(SimTime::ZERO, SimEvent::Start);

    while let Some((now, event)) = queue.pop() {
        let actions: Vec<SendAction> = match event {
            SimEvent::Start => {
                if settings.record_trace {
                    out.trace.push(TraceEvent::Started { at: now });
                }
                initiator.step(InitiatorEvent::Start, now)?
            }
            SimEvent::Timer(deadline) => {
                if initiator.retransmit_deadline() != Some(deadline) {
                    continue;
                }
                initiator.step(InitiatorEvent::TimerExpired, now)?
            }
            SimEvent::Deliver(EndpointRole::Initiator, dg) => {
                initiator.step(InitiatorEvent::FragmentArrived(dg), now)?
            }
            SimEvent::Deliver(EndpointRole::Responder, dg) => responder.step(dg, now)?,
        };

        for action in actions {
            let size = action.datagram.fragment.wire_size + ip_udp;
            let channel = match (action.from, backward.as_mut()) {
                (EndpointRole::Responder, Some(ch)) => ch,
                _ => &mut forward,
            };
            let outcome = transmit(size, &settings.link, channel, now)?;
            out.datagrams += 1;
            out.total_bytes += size as u64;
            out.retransmissions += u64::from(action.retransmission);
            let to = match action.from {
                EndpointRole::Initiator => EndpointRole::Responder,
                EndpointRole::Responder => EndpointRole::Initiator,
            };
            match outcome {
                DeliveryOutcome::Delivered { mut at } => {
                    if let Some(rng) = jitter.as_mut() {
                        at = at + SimTime::from_ms(rng.random::<f64>() * settings.jitter_ms);
                    }
                    if settings.record_trace {
                        out.trace.push(TraceEvent::Sent(action.clone()));
                    }
                    queue.push(at, SimEvent::Deliver(to, action.datagram));
                }
                DeliveryOutcome::Dropped => {
                    out.dropped += 1;
                    if settings.record_trace {
                        out.trace.push(TraceEvent::Sent(action.clone()));
                        out.trace.push(TraceEvent::Dropped {
                            at: now,
                            from: action.from,
                        });
                    }
                }
            }
        }
        if out.datagrams > settings.datagram_budget {
            return Err(SimError::BudgetExhausted(out.datagrams));
        }

        if initiator.is_established() {
            out.established = true;
            out.setup_time = initiator
                .established_at()
                .zip(initiator.started_at())
                .map(|(done, start)| done - start);
            if settings.record_trace {
                out.trace.push(TraceEvent::Established { at: now });
            }
            break;
        }
        if initiator.has_failed() {
            if settings.record_trace {
                out.trace.push(TraceEvent::GaveUp { at: now });
            }
            break;
        }
        if let Some(deadline) = initiator.retransmit_deadline() {
            if armed != Some(deadline) {
                armed = Some(deadline);
                queue.push(deadline, SimEvent::Timer(deadline));
            }
        }
    }
    out.restarts = u64::from(initiator.restart_count());
    Ok(out)
}
