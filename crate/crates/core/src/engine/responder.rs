use std::sync::Arc;

use super::{
    Datagram, EndpointRole, EngineError, ExchangeType, PreparedHandshake, ReassemblyScope,
    SendAction, SendCounters,
};
use crate::fragment::{Reassembled, ReassemblyBuffer};
use crate::netsim::SimTime;

/// Responder side of the connection setup.
///
/// Answers each fully reassembled request and caches only the latest
/// response. A retransmitted request for the cached exchange is answered
/// again when its first fragment arrives, so each resend of the request
/// triggers at most one resend of the response.
#[derive(Debug, Clone)]
pub struct Responder {
    script: Arc<PreparedHandshake>,
    spi: Option<u64>,
    phase: usize,
    reassembly: Option<(ReassemblyBuffer, u16)>,
    // (exchange index, generation of the last emission)
    cached: Option<(usize, u16)>,
    established: bool,
    counters: SendCounters,
}

impl Responder {
    pub fn new(script: Arc<PreparedHandshake>) -> Self {
        Self {
            script,
            spi: None,
            phase: 0,
            reassembly: None,
            cached: None,
            established: false,
            counters: SendCounters::default(),
        }
    }

    pub fn spi(&self) -> Option<u64> {
        self.spi
    }

    /// Index of the next request this responder expects.
    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn cached_response(&self) -> Option<usize> {
        self.cached.map(|(x, _)| x)
    }

    /// True once the final IKE_AUTH response has been sent.
    pub fn is_established(&self) -> bool {
        self.established
    }

    pub fn counters(&self) -> SendCounters {
        self.counters
    }

    pub fn step(&mut self, dg: Datagram, now: SimTime) -> Result<Vec<SendAction>, EngineError> {
        let actions = self.on_datagram(dg, now)?;
        self.counters
            .record(&actions, self.script.layout.ip_udp_overhead);
        Ok(actions)
    }

    fn reset(&mut self, spi: u64) {
        self.spi = Some(spi);
        self.phase = 0;
        self.reassembly = None;
        self.cached = None;
        self.established = false;
    }

    fn on_datagram(&mut self, dg: Datagram, now: SimTime) -> Result<Vec<SendAction>, EngineError> {
        if dg.response {
            return Err(EngineError::ProtocolViolation(format!(
                "responder received a {} response",
                dg.exchange
            )));
        }
        let id = dg.fragment.message_id as usize;
        if id >= self.script.exchanges() {
            return Err(EngineError::ProtocolViolation(format!(
                "message id {id} beyond the {}-exchange plan",
                self.script.exchanges()
            )));
        }
        let expected = self.script.plan.request(id).exchange;
        if dg.exchange != expected {
            return Err(EngineError::ProtocolViolation(format!(
                "{} request with message id {id}, plan expects {expected}",
                dg.exchange
            )));
        }
        if self.spi != Some(dg.spi) {
            if dg.exchange != ExchangeType::IkeSaInit {
                // Unknown SA.
                return Ok(Vec::new());
            }
            self.reset(dg.spi);
        }

        if id < self.phase {
            return Ok(match self.cached {
                Some((cached, generation)) if cached == id && dg.fragment.fragment_number == 1 => {
                    let generation = generation.wrapping_add(1);
                    self.cached = Some((cached, generation));
                    self.emit_response(dg.spi, id, generation, now, true)
                }
                _ => Vec::new(),
            });
        }
        if id > self.phase {
            return Err(EngineError::ProtocolViolation(format!(
                "request id {id} skips ahead of expected id {}",
                self.phase
            )));
        }

        let scope = self.script.config.reassembly_scope;
        let buf = match &mut self.reassembly {
            Some((buf, attempt))
                if scope == ReassemblyScope::Message || *attempt == dg.attempt =>
            {
                buf
            }
            slot => {
                let (buf, _) =
                    slot.insert((ReassemblyBuffer::new(dg.fragment.message_id), dg.attempt));
                buf
            }
        };
        buf.insert(&dg.fragment)?;
        if !buf.is_complete() {
            return Ok(Vec::new());
        }
        let Reassembled::Complete(body) = buf.reassemble()? else {
            unreachable!("complete buffer reassembles");
        };
        if body != self.script.request(id).body {
            return Err(EngineError::ProtocolViolation(format!(
                "{} request body does not match the plan",
                dg.exchange
            )));
        }

        self.reassembly = None;
        self.cached = Some((id, 0));
        self.phase = id + 1;
        if self.phase == self.script.exchanges() {
            self.established = true;
        }
        Ok(self.emit_response(dg.spi, id, 0, now, false))
    }

    fn emit_response(
        &self,
        spi: u64,
        exchange: usize,
        generation: u16,
        now: SimTime,
        retransmission: bool,
    ) -> Vec<SendAction> {
        let msg = self.script.response(exchange);
        let kind = self.script.plan.response(exchange).exchange;
        msg.fragments
            .iter()
            .map(|f| SendAction {
                at: now,
                from: EndpointRole::Responder,
                retransmission,
                datagram: Datagram {
                    spi,
                    exchange: kind,
                    response: true,
                    attempt: generation,
                    kind: msg.kind,
                    fragment: f.clone(),
                },
            })
            .collect()
    }
}
