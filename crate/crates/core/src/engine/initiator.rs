use std::sync::Arc;

use super::{
    Datagram, EndpointRole, EngineError, PreparedHandshake, ReassemblyScope, SendAction,
    SendCounters,
};
use crate::fragment::{Fragment, Reassembled, ReassemblyBuffer};
use crate::netsim::SimTime;

#[derive(Debug, Clone)]
pub enum InitiatorEvent {
    Start,
    FragmentArrived(Datagram),
    TimerExpired,
}

/// Initiator side of the connection setup.
///
/// A window of one: the request for exchange `k + 1` goes out only after
/// the full response to exchange `k` has been reassembled. A timer expiry
/// resends every fragment of the outstanding request; after `max_retries`
/// resends the whole handshake restarts under a fresh SPI.
#[derive(Debug, Clone)]
pub struct Initiator {
    script: Arc<PreparedHandshake>,
    base_spi: u64,
    spi: u64,
    phase: usize,
    attempt: u16,
    reassembly: Option<(ReassemblyBuffer, u16)>,
    outstanding: bool,
    deadline: Option<SimTime>,
    retry_count: u32,
    restart_count: u32,
    started_at: Option<SimTime>,
    established_at: Option<SimTime>,
    failed: bool,
    counters: SendCounters,
}

impl Initiator {
    pub fn new(script: Arc<PreparedHandshake>, spi: u64) -> Self {
        Self {
            script,
            base_spi: spi,
            spi,
            phase: 0,
            attempt: 0,
            reassembly: None,
            outstanding: false,
            deadline: None,
            retry_count: 0,
            restart_count: 0,
            started_at: None,
            established_at: None,
            failed: false,
            counters: SendCounters::default(),
        }
    }

    pub fn spi(&self) -> u64 {
        self.spi
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn retransmit_deadline(&self) -> Option<SimTime> {
        self.deadline
    }

    pub fn retry_count(&self) -> u32 {
        self.retry_count
    }

    pub fn restart_count(&self) -> u32 {
        self.restart_count
    }

    pub fn is_established(&self) -> bool {
        self.established_at.is_some()
    }

    /// Gave up after exhausting `max_restarts`.
    pub fn has_failed(&self) -> bool {
        self.failed
    }

    pub fn started_at(&self) -> Option<SimTime> {
        self.started_at
    }

    pub fn established_at(&self) -> Option<SimTime> {
        self.established_at
    }

    pub fn counters(&self) -> SendCounters {
        self.counters
    }

    pub fn outstanding_request(&self) -> Option<&[Fragment]> {
        self.outstanding
            .then(|| self.script.request(self.phase).fragments.as_slice())
    }

    pub fn step(
        &mut self,
        event: InitiatorEvent,
        now: SimTime,
    ) -> Result<Vec<SendAction>, EngineError> {
        let actions = match event {
            InitiatorEvent::Start => self.on_start(now),
            InitiatorEvent::TimerExpired => self.on_timer(now),
            InitiatorEvent::FragmentArrived(dg) => self.on_datagram(dg, now)?,
        };
        self.counters
            .record(&actions, self.script.layout.ip_udp_overhead);
        Ok(actions)
    }

    fn on_start(&mut self, now: SimTime) -> Vec<SendAction> {
        if self.started_at.is_some() {
            return Vec::new();
        }
        self.started_at = Some(now);
        self.begin_exchange(0, now)
    }

    fn begin_exchange(&mut self, phase: usize, now: SimTime) -> Vec<SendAction> {
        self.phase = phase;
        self.attempt = 0;
        self.retry_count = 0;
        self.reassembly = None;
        self.outstanding = true;
        self.deadline = Some(now + self.script.config.timeout(0));
        self.emit_request(now, false)
    }

    fn emit_request(&self, now: SimTime, retransmission: bool) -> Vec<SendAction> {
        let msg = self.script.request(self.phase);
        let exchange = self.script.plan.request(self.phase).exchange;
        msg.fragments
            .iter()
            .map(|f| SendAction {
                at: now,
                from: EndpointRole::Initiator,
                retransmission,
                datagram: Datagram {
                    spi: self.spi,
                    exchange,
                    response: false,
                    attempt: self.attempt,
                    kind: msg.kind,
                    fragment: f.clone(),
                },
            })
            .collect()
    }

    fn on_timer(&mut self, now: SimTime) -> Vec<SendAction> {
        match self.deadline {
            Some(d) if now >= d && self.outstanding => {}
            _ => return Vec::new(),
        }
        let cfg = &self.script.config;
        if self.retry_count < cfg.max_retries {
            self.retry_count += 1;
            self.attempt = self.attempt.wrapping_add(1);
            if cfg.reassembly_scope == ReassemblyScope::Attempt {
                self.reassembly = None;
            }
            self.deadline = Some(now + cfg.timeout(self.retry_count));
            return self.emit_request(now, true);
        }
        if cfg.max_restarts.is_some_and(|max| self.restart_count >= max) {
            self.failed = true;
            self.outstanding = false;
            self.deadline = None;
            return Vec::new();
        }
        self.restart_count += 1;
        self.spi = self
            .base_spi
            .wrapping_add(u64::from(self.restart_count).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        self.begin_exchange(0, now)
    }

    fn on_datagram(&mut self, dg: Datagram, now: SimTime) -> Result<Vec<SendAction>, EngineError> {
        if !self.outstanding || dg.spi != self.spi {
            // Late traffic for a finished or abandoned SA.
            return Ok(Vec::new());
        }
        if !dg.response {
            return Err(EngineError::ProtocolViolation(format!(
                "initiator received a {} request",
                dg.exchange
            )));
        }
        let id = dg.fragment.message_id as usize;
        if id < self.phase {
            return Ok(Vec::new());
        }
        let expected = self.script.plan.response(self.phase).exchange;
        if id > self.phase || dg.exchange != expected {
            return Err(EngineError::ProtocolViolation(format!(
                "{} response with message id {id} while awaiting {expected} (id {})",
                dg.exchange, self.phase
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
        if body != self.script.response(self.phase).body {
            return Err(EngineError::ProtocolViolation(format!(
                "{} response body does not match the plan",
                dg.exchange
            )));
        }

        let next = self.phase + 1;
        if next == self.script.exchanges() {
            self.outstanding = false;
            self.deadline = None;
            self.reassembly = None;
            self.established_at = Some(now);
            return Ok(Vec::new());
        }
        Ok(self.begin_exchange(next, now))
    }
}
