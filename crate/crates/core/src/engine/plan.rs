use bytes::{Bytes, BytesMut};
use serde::Serialize;

use super::{EngineConfig, EngineError, ExchangeType, FragmentKind, SaInitKe, SaInitPolicy};
use crate::fragment::{fragment, Fragment, FragmentError, FragmentLayout, IKE_HEADER_BYTES};
use crate::suite::{dh_modp_2048, AlgorithmSpec, CryptoSuite, MaterialField, MaterialProvider, SuiteId};

// Sizes of the payloads that do not depend on the suite.
const SA_PROPOSAL: usize = 48;
const NONCE: usize = 32;
const NOTIFY_NAT_DETECTION: usize = 28;
const NOTIFY_STATUS: usize = 8;
const IDENTIFICATION: usize = 16;
const CHILD_SA_PROPOSAL: usize = 44;
const TRAFFIC_SELECTOR: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Request,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ItemSource {
    Fixed,
    Material {
        spec: AlgorithmSpec,
        #[serde(skip)]
        field: MaterialField,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PayloadItem {
    pub label: &'static str,
    pub size: usize,
    #[serde(skip)]
    pub source: ItemSource,
}

impl PayloadItem {
    fn fixed(label: &'static str, size: usize) -> Self {
        Self {
            label,
            size,
            source: ItemSource::Fixed,
        }
    }

    fn material(label: &'static str, spec: &AlgorithmSpec, field: MaterialField) -> Self {
        Self {
            label,
            size: spec.size_of(field),
            source: ItemSource::Material {
                spec: spec.clone(),
                field,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageBlueprint {
    pub exchange: ExchangeType,
    pub direction: Direction,
    pub message_id: u32,
    pub encrypted: bool,
    pub payload_items: Vec<PayloadItem>,
    pub total_payload: usize,
}

impl MessageBlueprint {
    pub fn new(
        exchange: ExchangeType,
        direction: Direction,
        message_id: u32,
        payload_items: Vec<PayloadItem>,
    ) -> Self {
        let total_payload = payload_items.iter().map(|i| i.size).sum();
        Self {
            exchange,
            direction,
            message_id,
            encrypted: exchange.is_encrypted(),
            payload_items,
            total_payload,
        }
    }

    pub fn item(&self, label: &str) -> Option<&PayloadItem> {
        self.payload_items.iter().find(|i| i.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HandshakePlan {
    pub suite: CryptoSuite,
    /// Request/response pairs in exchange order.
    pub blueprints: Vec<MessageBlueprint>,
    pub additional_ke_rounds: u8,
}

impl HandshakePlan {
    pub fn exchanges(&self) -> usize {
        self.blueprints.len() / 2
    }

    pub fn request(&self, exchange: usize) -> &MessageBlueprint {
        &self.blueprints[2 * exchange]
    }

    pub fn response(&self, exchange: usize) -> &MessageBlueprint {
        &self.blueprints[2 * exchange + 1]
    }
}

fn sa_init(ke: &AlgorithmSpec, direction: Direction, multi_ke: bool) -> MessageBlueprint {
    let field = match direction {
        Direction::Request => MaterialField::PublicObject,
        Direction::Response => MaterialField::ResponseObject,
    };
    let mut items = vec![
        PayloadItem::fixed("SA", SA_PROPOSAL),
        PayloadItem::material("KE_public", ke, field),
        PayloadItem::fixed("nonce", NONCE),
        PayloadItem::fixed("notify_nat_detection_source_ip", NOTIFY_NAT_DETECTION),
        PayloadItem::fixed("notify_nat_detection_destination_ip", NOTIFY_NAT_DETECTION),
        PayloadItem::fixed("notify_fragmentation_supported", NOTIFY_STATUS),
    ];
    if multi_ke {
        items.push(PayloadItem::fixed("notify_intermediate_supported", NOTIFY_STATUS));
        items.push(PayloadItem::fixed("notify_additional_ke", NOTIFY_STATUS));
    }
    MessageBlueprint::new(ExchangeType::IkeSaInit, direction, 0, items)
}

fn auth(suite: &CryptoSuite, direction: Direction, message_id: u32) -> MessageBlueprint {
    let signer = &suite.authentication;
    let items = vec![
        PayloadItem::fixed(
            match direction {
                Direction::Request => "IDi",
                Direction::Response => "IDr",
            },
            IDENTIFICATION,
        ),
        PayloadItem::material("cert", signer, MaterialField::PublicObject),
        PayloadItem::material("signature", signer, MaterialField::Signature),
        PayloadItem::fixed("SA_child", CHILD_SA_PROPOSAL),
        PayloadItem::fixed("TSi", TRAFFIC_SELECTOR),
        PayloadItem::fixed("TSr", TRAFFIC_SELECTOR),
    ];
    MessageBlueprint::new(ExchangeType::IkeAuth, direction, message_id, items)
}

/// Lays out the exchanges of one connection setup.
///
/// The classical suite uses the four-message IKE_SA_INIT + IKE_AUTH flow.
/// Any other suite announces additional key exchanges in IKE_SA_INIT and runs
/// `additional_ke_rounds` IKE_INTERMEDIATE exchanges, each carrying one of
/// the suite's key establishments, before IKE_AUTH.
pub fn plan_handshake(suite: &CryptoSuite, config: &EngineConfig) -> HandshakePlan {
    let mut blueprints = Vec::new();
    if suite.suite_id == SuiteId::Classical && suite.key_establishments.len() == 1 {
        let ke = &suite.key_establishments[0];
        blueprints.push(sa_init(ke, Direction::Request, false));
        blueprints.push(sa_init(ke, Direction::Response, false));
        blueprints.push(auth(suite, Direction::Request, 1));
        blueprints.push(auth(suite, Direction::Response, 1));
        return HandshakePlan {
            suite: suite.clone(),
            blueprints,
            additional_ke_rounds: 0,
        };
    }

    let (first, rest): (AlgorithmSpec, &[AlgorithmSpec]) = match config.sa_init_ke {
        SaInitKe::Classical => (dh_modp_2048(), &suite.key_establishments),
        SaInitKe::Primary if suite.key_establishments.len() > 1 => (
            suite.key_establishments[0].clone(),
            &suite.key_establishments[1..],
        ),
        SaInitKe::Primary => (
            suite.key_establishments[0].clone(),
            &suite.key_establishments,
        ),
    };
    blueprints.push(sa_init(&first, Direction::Request, true));
    blueprints.push(sa_init(&first, Direction::Response, true));
    let rounds = u32::from(config.additional_ke_rounds);
    for (round, ke) in (0..rounds).zip(rest.iter().cycle()) {
        let id = round + 1;
        blueprints.push(MessageBlueprint::new(
            ExchangeType::IkeIntermediate,
            Direction::Request,
            id,
            vec![PayloadItem::material("KE_public", ke, MaterialField::PublicObject)],
        ));
        blueprints.push(MessageBlueprint::new(
            ExchangeType::IkeIntermediate,
            Direction::Response,
            id,
            vec![PayloadItem::material(
                "KE_ciphertext",
                ke,
                MaterialField::ResponseObject,
            )],
        ));
    }
    blueprints.push(auth(suite, Direction::Request, rounds + 1));
    blueprints.push(auth(suite, Direction::Response, rounds + 1));
    HandshakePlan {
        suite: suite.clone(),
        blueprints,
        additional_ke_rounds: config.additional_ke_rounds,
    }
}

/// Datagram sizing for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireLayout {
    pub fragment: FragmentLayout,
    /// Message bytes per IP-layer piece of an oversized IKE_SA_INIT.
    pub ip_piece_capacity: usize,
    pub sa_init_policy: SaInitPolicy,
    pub ip_udp_overhead: usize,
}

impl WireLayout {
    pub fn new(config: &EngineConfig, mtu: usize) -> Result<Self, EngineError> {
        config.validate()?;
        if config.fragment_threshold_bytes > mtu {
            return Err(EngineError::Config(format!(
                "fragment_threshold_bytes {} exceeds the link MTU {mtu}",
                config.fragment_threshold_bytes
            )));
        }
        let fragment = FragmentLayout::from_threshold(
            config.fragment_threshold_bytes,
            config.ip_udp_overhead_bytes,
            config.fragment_overhead_bytes,
        )
        .ok_or_else(|| EngineError::Config("fragment threshold too small".into()))?;
        let ip_piece_capacity = mtu
            .checked_sub(config.ip_udp_overhead_bytes + IKE_HEADER_BYTES)
            .filter(|c| *c > 0)
            .ok_or_else(|| EngineError::Config(format!("MTU {mtu} too small")))?;
        Ok(Self {
            fragment,
            ip_piece_capacity,
            sa_init_policy: config.sa_init_policy,
            ip_udp_overhead: config.ip_udp_overhead_bytes,
        })
    }

    fn message_datagrams(&self, size: usize, encrypted: bool) -> Result<usize, FragmentError> {
        match self.fragment.fragment_count(size, encrypted) {
            Err(FragmentError::UnfragmentableMessage { .. })
                if self.sa_init_policy == SaInitPolicy::IpFragment =>
            {
                Ok(size.div_ceil(self.ip_piece_capacity))
            }
            other => other,
        }
    }

    fn split(
        &self,
        message_id: u32,
        body: &Bytes,
        encrypted: bool,
    ) -> Result<(FragmentKind, Vec<Fragment>), FragmentError> {
        match fragment(message_id, body, encrypted, &self.fragment) {
            Ok(frags) => Ok((
                if encrypted {
                    FragmentKind::Encrypted
                } else {
                    FragmentKind::Plain
                },
                frags,
            )),
            Err(FragmentError::UnfragmentableMessage { .. })
                if self.sa_init_policy == SaInitPolicy::IpFragment =>
            {
                // Each IP-layer piece is charged a full IKE header; the
                // later pieces' real IP header is smaller, close enough.
                let ip = FragmentLayout {
                    capacity: self.ip_piece_capacity,
                    encrypted_overhead: IKE_HEADER_BYTES,
                    plain_overhead: IKE_HEADER_BYTES,
                };
                Ok((FragmentKind::IpFragment, fragment(message_id, body, true, &ip)?))
            }
            Err(e) => Err(e),
        }
    }
}

/// Zero-loss datagram count of a plan: the sum over all messages of the
/// number of datagrams each one needs.
pub fn datagram_count(plan: &HandshakePlan, layout: &WireLayout) -> Result<usize, FragmentError> {
    plan.blueprints
        .iter()
        .map(|b| layout.message_datagrams(b.total_payload, b.encrypted))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedMessage {
    pub kind: FragmentKind,
    pub body: Bytes,
    pub fragments: Vec<Fragment>,
}

impl PreparedMessage {
    pub fn wire_bytes(&self, ip_udp_overhead: usize) -> u64 {
        self.fragments
            .iter()
            .map(|f| (f.wire_size + ip_udp_overhead) as u64)
            .sum()
    }
}

/// A plan with every message body materialized and split into datagrams,
/// shared read-only by both endpoints of a run.
#[derive(Debug, Clone)]
pub struct PreparedHandshake {
    pub plan: HandshakePlan,
    pub layout: WireLayout,
    pub config: EngineConfig,
    pub messages: Vec<PreparedMessage>,
}

impl PreparedHandshake {
    pub fn new(
        plan: HandshakePlan,
        config: &EngineConfig,
        mtu: usize,
        provider: &dyn MaterialProvider,
        seed: u64,
    ) -> Result<Self, EngineError> {
        let layout = WireLayout::new(config, mtu)?;
        let messages = plan
            .blueprints
            .iter()
            .enumerate()
            .map(|(idx, bp)| {
                let body = materialize(bp, provider, seed.wrapping_add(idx as u64));
                let (kind, fragments) = layout.split(bp.message_id, &body, bp.encrypted)?;
                Ok(PreparedMessage {
                    kind,
                    body,
                    fragments,
                })
            })
            .collect::<Result<Vec<_>, EngineError>>()?;
        Ok(Self {
            plan,
            layout,
            config: config.clone(),
            messages,
        })
    }

    pub fn exchanges(&self) -> usize {
        self.plan.exchanges()
    }

    pub fn request(&self, exchange: usize) -> &PreparedMessage {
        &self.messages[2 * exchange]
    }

    pub fn response(&self, exchange: usize) -> &PreparedMessage {
        &self.messages[2 * exchange + 1]
    }

    pub fn zero_loss_datagrams(&self) -> usize {
        self.messages.iter().map(|m| m.fragments.len()).sum()
    }

    pub fn zero_loss_bytes(&self) -> u64 {
        self.messages
            .iter()
            .map(|m| m.wire_bytes(self.layout.ip_udp_overhead))
            .sum()
    }
}

fn materialize(bp: &MessageBlueprint, provider: &dyn MaterialProvider, seed: u64) -> Bytes {
    let mut body = BytesMut::with_capacity(bp.total_payload);
    for (i, item) in bp.payload_items.iter().enumerate() {
        match &item.source {
            ItemSource::Fixed => {
                let fill = item.label.bytes().fold(i as u8, |a, b| a.wrapping_add(b));
                body.extend(std::iter::repeat_n(fill, item.size));
            }
            ItemSource::Material { spec, field } => {
                let bytes = provider.material(spec, *field, seed);
                debug_assert_eq!(bytes.len(), item.size);
                body.extend_from_slice(&bytes);
            }
        }
    }
    body.freeze()
}
