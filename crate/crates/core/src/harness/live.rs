//! The same engine over real UDP sockets and wall-clock timers.
//!
//! Both endpoints derive every message body from the config seed, so the
//! responder can check requests against its own copy of the plan and
//! recognise which suite a new IKE_SA_INIT belongs to.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::batch::{assemble, BatchError, ResultSet};
use super::config::{LossPoint, ScenarioConfig};
use crate::engine::{
    plan_handshake, wire, Datagram, EngineError, ExchangeType, Initiator, InitiatorEvent,
    PreparedHandshake, Responder, SendAction,
};
use crate::metrics::RunRecord;
use crate::netsim::{LossModel, SimTime};
use crate::suite::{CryptoSuite, OpaqueMaterial};

/// Restart cap used when the config leaves `max_restarts` unbounded, so
/// an unreachable peer is eventually reported.
pub const LIVE_DEFAULT_MAX_RESTARTS: u32 = 2;

const RECV_BUFFER: usize = 65_536;
const IDLE_POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error("peer {peer} unreachable: {suite} setup gave up after {restarts} restarts")]
    PeerUnreachable {
        peer: SocketAddr,
        suite: String,
        restarts: u32,
    },
}

fn prepare(config: &ScenarioConfig, suite: &CryptoSuite) -> Result<PreparedHandshake, EngineError> {
    let mut engine = config.engine.clone();
    engine.max_restarts = engine.max_restarts.or(Some(LIVE_DEFAULT_MAX_RESTARTS));
    let plan = plan_handshake(suite, &engine);
    PreparedHandshake::new(plan, &engine, config.link.mtu, &OpaqueMaterial, config.seed)
}

fn send_all(
    socket: &UdpSocket,
    peer: SocketAddr,
    actions: &[SendAction],
    overhead: usize,
) -> io::Result<()> {
    for a in actions {
        socket.send_to(&wire::encode(&a.datagram, overhead), peer)?;
    }
    Ok(())
}

/// Outcome of a single live handshake as seen by the initiator.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveOutcome {
    pub established: bool,
    pub setup_time: Option<Duration>,
    /// Time from the last IKE_SA_INIT request to its completed response.
    pub sa_init_round_trip: Option<Duration>,
    pub sent_datagrams: u64,
    pub received_datagrams: u64,
    /// IP/UDP-inclusive bytes in both directions.
    pub total_bytes: u64,
    pub retransmissions: u64,
    pub restarts: u32,
}

/// Runs one handshake to `peer`. Responses that the initiator cannot
/// decode or that belong to another SA are counted but otherwise ignored.
pub fn live_handshake(
    socket: &UdpSocket,
    peer: SocketAddr,
    script: Arc<PreparedHandshake>,
    spi: u64,
) -> Result<LiveOutcome, LiveError> {
    let overhead = script.layout.fragment.encrypted_overhead;
    let ip_udp = script.layout.ip_udp_overhead as u64;
    let mut ini = Initiator::new(script, spi);
    let epoch = Instant::now();
    let clock = || SimTime::from_nanos(epoch.elapsed().as_nanos() as u64);
    let mut out = LiveOutcome {
        established: false,
        setup_time: None,
        sa_init_round_trip: None,
        sent_datagrams: 0,
        received_datagrams: 0,
        total_bytes: 0,
        retransmissions: 0,
        restarts: 0,
    };
    let mut sa_init_sent = SimTime::ZERO;
    let mut buf = vec![0u8; RECV_BUFFER];

    let mut pending = ini.step(InitiatorEvent::Start, clock())?;
    loop {
        for a in &pending {
            out.sent_datagrams += 1;
            out.total_bytes += a.datagram.fragment.wire_size as u64 + ip_udp;
            out.retransmissions += u64::from(a.retransmission);
            if a.datagram.exchange == ExchangeType::IkeSaInit {
                sa_init_sent = a.at;
            }
        }
        send_all(socket, peer, &pending, overhead)?;
        pending = Vec::new();

        if ini.is_established() {
            out.established = true;
            out.setup_time = ini
                .established_at()
                .zip(ini.started_at())
                .map(|(done, start)| Duration::from_nanos((done - start).as_nanos()));
            break;
        }
        if ini.has_failed() {
            break;
        }
        let Some(deadline) = ini.retransmit_deadline() else {
            break;
        };
        let now = clock();
        if now >= deadline {
            pending = ini.step(InitiatorEvent::TimerExpired, now)?;
            continue;
        }
        socket.set_read_timeout(Some(Duration::from_nanos(
            (deadline - now).as_nanos().max(1_000),
        )))?;
        match socket.recv_from(&mut buf) {
            Ok((n, from)) if from == peer => {
                out.received_datagrams += 1;
                out.total_bytes += n as u64 + ip_udp;
                let Ok(dg) = wire::decode(&buf[..n], overhead) else {
                    continue;
                };
                out.retransmissions += u64::from(dg.response && dg.attempt > 0);
                let before = ini.phase();
                pending = ini.step(InitiatorEvent::FragmentArrived(dg), clock())?;
                if before == 0 && (ini.phase() == 1 || ini.is_established()) {
                    out.sa_init_round_trip =
                        Some(Duration::from_nanos((clock() - sa_init_sent).as_nanos()));
                }
            }
            Ok(_) => {}
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock
                        | io::ErrorKind::TimedOut
                        | io::ErrorKind::ConnectionRefused
                ) => {}
            Err(e) => return Err(e.into()),
        }
    }
    out.restarts = ini.restart_count();
    Ok(out)
}

/// Initiator side: runs `config.iterations` handshakes per suite against
/// `peer` and collects them into a result set. Gives up with
/// [`LiveError::PeerUnreachable`] when a handshake exhausts its restarts.
pub fn live_run(
    config: &ScenarioConfig,
    peer: SocketAddr,
    bind: Option<SocketAddr>,
) -> Result<ResultSet, LiveError> {
    let local = bind.unwrap_or_else(|| {
        if peer.is_ipv4() {
            SocketAddr::from(([0, 0, 0, 0], 0))
        } else {
            SocketAddr::from(([0u16; 8], 0))
        }
    });
    let socket = UdpSocket::bind(local)?;
    let mut records = Vec::new();
    for (k, suite) in config.suites.iter().enumerate() {
        let script = Arc::new(prepare(config, suite)?);
        for i in 0..config.iterations {
            let seed = config.seed.wrapping_add(u64::from(i));
            let spi = (seed ^ ((k as u64) << 48)).wrapping_mul(0x2545_f491_4f6c_dd1d) | 1;
            let out = live_handshake(&socket, peer, script.clone(), spi)?;
            if !out.established {
                return Err(LiveError::PeerUnreachable {
                    peer,
                    suite: suite.suite_id.as_str().to_owned(),
                    restarts: out.restarts,
                });
            }
            records.push(RunRecord {
                scenario_id: config.scenario_id.clone(),
                suite: suite.suite_id.as_str().to_owned(),
                iteration: i,
                seed,
                // No loss is induced; the real link decides.
                loss_rate: 0.0,
                rtt_ms: out
                    .sa_init_round_trip
                    .map_or(0.0, |d| d.as_secs_f64() * 1e3),
                success: true,
                setup_time_ms: out.setup_time.map(|d| d.as_secs_f64() * 1e3),
                total_bytes: out.total_bytes,
                datagrams: out.sent_datagrams + out.received_datagrams,
                retransmissions: out.retransmissions,
                restarts: u64::from(out.restarts),
                error: None,
            });
        }
    }
    let point = LossPoint {
        label: "live".into(),
        model: LossModel::Uniform { rate: 0.0 },
        loss_rate: 0.0,
    };
    let mut set = assemble(config, &point, records)?;
    let rtts: Vec<f64> = set.records.iter().map(|r| r.rtt_ms).collect();
    set.rtt_ms = crate::metrics::percentile(&rtts, 50.0).unwrap_or(0.0);
    Ok(set)
}

/// Per-SA statistics kept by [`Responder`]-side serving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServedSa {
    pub spi: u64,
    pub received_datagrams: u64,
    pub sent_datagrams: u64,
    pub established: bool,
}

/// Responder side. Serves any number of initiators and SAs until `stop`
/// is set or `limit` SAs have been established. Malformed datagrams and
/// protocol violations are reported on stderr and dropped.
pub struct LiveResponder {
    socket: UdpSocket,
    scripts: Vec<Arc<PreparedHandshake>>,
    peers: HashMap<SocketAddr, (Responder, ServedSa)>,
    finished: Vec<ServedSa>,
}

impl LiveResponder {
    pub fn bind(config: &ScenarioConfig, addr: SocketAddr) -> Result<Self, LiveError> {
        let scripts = config
            .suites
            .iter()
            .map(|s| prepare(config, s).map(Arc::new))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            socket: UdpSocket::bind(addr)?,
            scripts,
            peers: HashMap::new(),
            finished: Vec::new(),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// SAs that completed so far, in completion order.
    pub fn established(&self) -> &[ServedSa] {
        &self.finished
    }

    fn script_for(&self, dg: &Datagram) -> Option<Arc<PreparedHandshake>> {
        self.scripts
            .iter()
            .find(|s| {
                s.request(0)
                    .fragments
                    .iter()
                    .any(|f| f.fragment_number == dg.fragment.fragment_number && f.payload == dg.fragment.payload)
            })
            .cloned()
    }

    fn handle(&mut self, from: SocketAddr, buf: &[u8]) -> Result<(), LiveError> {
        let Some(overhead) = self
            .scripts
            .first()
            .map(|s| s.layout.fragment.encrypted_overhead)
        else {
            return Ok(());
        };
        let dg = match wire::decode(buf, overhead) {
            Ok(dg) => dg,
            Err(e) => {
                eprintln!("responder: dropping datagram from {from}: {e}");
                return Ok(());
            }
        };
        let fresh = dg.exchange == ExchangeType::IkeSaInit
            && self
                .peers
                .get(&from)
                .is_none_or(|(r, _)| r.is_established() || r.spi() != Some(dg.spi));
        if fresh {
            let Some(script) = self.script_for(&dg) else {
                eprintln!("responder: IKE_SA_INIT from {from} matches no configured suite");
                return Ok(());
            };
            let sa = ServedSa {
                spi: dg.spi,
                ..ServedSa::default()
            };
            self.peers.insert(from, (Responder::new(script), sa));
        }
        let Some((responder, sa)) = self.peers.get_mut(&from) else {
            return Ok(());
        };
        sa.received_datagrams += 1;
        let was_established = responder.is_established();
        let actions = match responder.step(dg, SimTime::ZERO) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("responder: {from}: {e}");
                return Ok(());
            }
        };
        sa.sent_datagrams += actions.len() as u64;
        send_all(&self.socket, from, &actions, overhead)?;
        if responder.is_established() && !was_established {
            sa.established = true;
            self.finished.push(*sa);
        }
        Ok(())
    }

    /// Serves until `stop` is raised or `limit` SAs are established.
    pub fn serve(&mut self, limit: Option<usize>, stop: &AtomicBool) -> Result<(), LiveError> {
        self.socket.set_read_timeout(Some(IDLE_POLL))?;
        let mut buf = vec![0u8; RECV_BUFFER];
        while !stop.load(Ordering::Relaxed) && limit.is_none_or(|n| self.finished.len() < n) {
            match self.socket.recv_from(&mut buf) {
                Ok((n, from)) => {
                    let data = buf[..n].to_vec();
                    self.handle(from, &data)?;
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock
                            | io::ErrorKind::TimedOut
                            | io::ErrorKind::ConnectionRefused
                            | io::ErrorKind::ConnectionReset
                    ) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}
