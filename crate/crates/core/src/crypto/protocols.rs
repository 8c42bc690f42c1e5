use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::net::Ipv4Addr;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};
use rand::rngs::OsRng;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{
    item_bytes, payload_key, tag_hash, AssociatedPayload, CryptoParams, GroupId, ItemTag, Modp2048,
    PrimeOrderGroup, ProtocolError, Ristretto255, CA_TAG, DT_TAG,
};
use crate::datamodel::IpSet;
use crate::netpeer::{
    decode_fixed_list, encode_fixed_list, error_code, error_message, parse_error, Channel,
    Handshake, MsgType, ProtocolId, Reader, WireMessage, FLAG_REPORT, PROTOCOL_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

/// Per-party protocol settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub params: CryptoParams,
    pub entity_id: String,
    /// Client sends its cardinality result back in a REPORT frame
    /// (PSI-CA and private Jaccard only).
    pub report: bool,
}

impl ProtocolConfig {
    pub fn new(entity_id: impl Into<String>) -> Self {
        ProtocolConfig {
            params: CryptoParams::default(),
            entity_id: entity_id.into(),
            report: true,
        }
    }

    pub fn with_group(mut self, group: GroupId) -> Self {
        self.params.group = group;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SessionPhase {
    Fresh,
    Exchanging,
    Done,
    Aborted,
}

/// Ephemeral state of one protocol run. Holds the blinding exponent, which is
/// never serialized; a session runs at most once.
pub struct SessionState<G: PrimeOrderGroup> {
    role: Role,
    blind: G::Scalar,
    phase: SessionPhase,
    peer_set_size: Option<u32>,
}

impl<G: PrimeOrderGroup> fmt::Debug for SessionState<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionState")
            .field("group", &G::ID)
            .field("role", &self.role)
            .field("blind", &"<redacted>")
            .field("phase", &self.phase)
            .field("peer_set_size", &self.peer_set_size)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaOutcome {
    /// Always set for the client; set for the server when the client reported.
    pub cardinality: Option<u64>,
    pub peer_set_size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtOutcome {
    /// Matched items with the server's payloads; empty on the server side.
    pub intersection: Vec<(Ipv4Addr, AssociatedPayload)>,
    pub peer_set_size: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JaccardOutcome {
    pub ratio: Option<f64>,
    pub cardinality: Option<u64>,
    pub local_set_size: u32,
    pub peer_set_size: u32,
}

fn jaccard(inter: u64, a: u32, b: u32) -> f64 {
    inter as f64 / (a as u64 + b as u64 - inter) as f64
}

fn set_size(set: &IpSet) -> Result<u32, ProtocolError> {
    if set.is_empty() {
        return Err(ProtocolError::EmptySet);
    }
    u32::try_from(set.len()).map_err(|_| ProtocolError::InvalidParams("set too large"))
}

fn expect(
    ch: &mut impl Channel,
    want: MsgType,
    name: &'static str,
) -> Result<Vec<u8>, ProtocolError> {
    let m = ch.recv()?;
    if m.msg_type == want {
        Ok(m.payload)
    } else if m.msg_type == MsgType::Error {
        Err(parse_error(&m.payload))
    } else {
        Err(ProtocolError::UnexpectedMessage {
            expected: name,
            got: m.msg_type as u8,
        })
    }
}

/// Sends HELLO and waits for HELLO_ACK; checks the peer runs the same version, group and κ.
pub fn client_handshake(
    cfg: &ProtocolConfig,
    ch: &mut impl Channel,
    protocol: ProtocolId,
    set_size: u32,
) -> Result<Handshake, ProtocolError> {
    cfg.params.validate()?;
    let report = cfg.report && protocol != ProtocolId::PsiDt;
    let hello = Handshake {
        protocol_version: PROTOCOL_VERSION,
        group_id: cfg.params.group,
        kappa_bits: cfg.params.kappa_bits,
        protocol_id: protocol,
        flags: if report { FLAG_REPORT } else { 0 },
        declared_set_size: set_size,
        entity_id: cfg.entity_id.clone(),
    };
    ch.send(&WireMessage::new(MsgType::Hello, hello.encode()))?;
    let ack = Handshake::decode(&expect(ch, MsgType::HelloAck, "HELLO_ACK")?)?;
    if ack.protocol_version != PROTOCOL_VERSION {
        return Err(ProtocolError::HandshakeMismatch("protocol version"));
    }
    if ack.params() != cfg.params {
        return Err(ProtocolError::HandshakeMismatch("crypto parameters"));
    }
    if ack.protocol_id != protocol {
        return Err(ProtocolError::HandshakeMismatch("protocol"));
    }
    if ack.declared_set_size == 0 {
        return Err(ProtocolError::Decode("peer declared an empty set".into()));
    }
    Ok(Handshake {
        flags: hello.flags,
        ..ack
    })
}

fn reject<T>(ch: &mut impl Channel, code: u8, err: ProtocolError) -> Result<T, ProtocolError> {
    let _ = ch.send(&error_message(code, &err.to_string()));
    Err(err)
}

/// Receives HELLO, validates it against local settings, and answers with
/// HELLO_ACK or an ERROR frame. Returns the client's handshake.
pub fn server_handshake(
    cfg: &ProtocolConfig,
    ch: &mut impl Channel,
    set_size: u32,
    allowed: &[ProtocolId],
) -> Result<Handshake, ProtocolError> {
    cfg.params.validate()?;
    let m = ch.recv()?;
    if m.msg_type != MsgType::Hello {
        let err = ProtocolError::UnexpectedMessage {
            expected: "HELLO",
            got: m.msg_type as u8,
        };
        return reject(ch, error_code::UNEXPECTED_MESSAGE, err);
    }
    let hello = match Handshake::decode(&m.payload) {
        Ok(h) => h,
        Err(e @ ProtocolError::HandshakeMismatch(_)) => {
            return reject(ch, error_code::GROUP_MISMATCH, e)
        }
        Err(e @ ProtocolError::UnsupportedProtocol(_)) => {
            return reject(ch, error_code::UNSUPPORTED_PROTOCOL, e)
        }
        Err(e) => return reject(ch, error_code::MALFORMED, e),
    };
    if hello.protocol_version != PROTOCOL_VERSION {
        return reject(
            ch,
            error_code::VERSION_MISMATCH,
            ProtocolError::HandshakeMismatch("protocol version"),
        );
    }
    if hello.params() != cfg.params {
        return reject(
            ch,
            error_code::GROUP_MISMATCH,
            ProtocolError::HandshakeMismatch("crypto parameters"),
        );
    }
    if !allowed.contains(&hello.protocol_id) {
        return reject(
            ch,
            error_code::UNSUPPORTED_PROTOCOL,
            ProtocolError::UnsupportedProtocol(hello.protocol_id as u8),
        );
    }
    if hello.declared_set_size == 0 {
        return reject(
            ch,
            error_code::MALFORMED,
            ProtocolError::Decode("declared set size is zero".into()),
        );
    }
    let ack = Handshake {
        protocol_version: PROTOCOL_VERSION,
        group_id: cfg.params.group,
        kappa_bits: cfg.params.kappa_bits,
        protocol_id: hello.protocol_id,
        flags: 0,
        declared_set_size: set_size,
        entity_id: cfg.entity_id.clone(),
    };
    ch.send(&WireMessage::new(MsgType::HelloAck, ack.encode()))?;
    Ok(hello)
}

fn hash_items<G: PrimeOrderGroup>(set: &IpSet) -> Vec<G::Element> {
    set.as_slice()
        .par_iter()
        .map(|&ip| G::hash_to_group(&item_bytes(ip)))
        .collect()
}

fn exp_all<G: PrimeOrderGroup>(elems: &[G::Element], s: &G::Scalar) -> Vec<G::Element> {
    elems.par_iter().map(|e| G::exp(e, s)).collect()
}

fn encode_elements<G: PrimeOrderGroup>(elems: &[G::Element]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + elems.len() * G::ELEMENT_LEN);
    out.extend_from_slice(&(elems.len() as u32).to_be_bytes());
    for e in elems {
        G::encode(e, &mut out);
    }
    out
}

fn decode_elements<G: PrimeOrderGroup>(bytes: &[u8]) -> Result<Vec<G::Element>, ProtocolError> {
    decode_fixed_list(bytes, G::ELEMENT_LEN)?
        .into_par_iter()
        .map(G::decode)
        .collect()
}

/// Server step of the blind-exponentiation skeleton: raise every client
/// element to `r_s`, then shuffle under a fresh uniform permutation.
pub(crate) fn reblind_shuffled<G: PrimeOrderGroup>(
    blinded: &[G::Element],
    server_scalar: &G::Scalar,
) -> Vec<G::Element> {
    let mut out = exp_all::<G>(blinded, server_scalar);
    out.shuffle(&mut OsRng);
    out
}

fn masked_tags<G: PrimeOrderGroup>(
    params: &CryptoParams,
    hashed: &[G::Element],
    s: &G::Scalar,
    domain: &str,
) -> Vec<(ItemTag, Vec<u8>)> {
    hashed
        .par_iter()
        .map(|h| {
            let enc = G::encode_to_vec(&G::exp(h, s));
            (tag_hash(params, &enc, domain), enc)
        })
        .collect()
}

impl<G: PrimeOrderGroup> SessionState<G> {
    pub fn new(role: Role) -> Self {
        SessionState {
            role,
            blind: G::random_scalar(&mut OsRng),
            phase: SessionPhase::Fresh,
            peer_set_size: None,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn peer_set_size(&self) -> Option<u32> {
        self.peer_set_size
    }

    fn begin(&mut self, role: Role) -> Result<(), ProtocolError> {
        if self.phase != SessionPhase::Fresh {
            return Err(ProtocolError::SessionReused);
        }
        if self.role != role {
            return Err(ProtocolError::InvalidParams(
                "session role does not match the requested step",
            ));
        }
        self.phase = SessionPhase::Exchanging;
        Ok(())
    }

    fn finish<T>(&mut self, r: Result<T, ProtocolError>) -> Result<T, ProtocolError> {
        self.phase = if r.is_ok() {
            SessionPhase::Done
        } else {
            SessionPhase::Aborted
        };
        r
    }

    /// Client side of the cardinality exchange, after the handshake.
    pub fn psi_ca_client(
        &mut self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        ch: &mut impl Channel,
        ack: &Handshake,
    ) -> Result<CaOutcome, ProtocolError> {
        self.begin(Role::Client)?;
        self.peer_set_size = Some(ack.declared_set_size);
        let r = self.ca_client_inner(cfg, set, ch, ack);
        self.finish(r)
    }

    fn ca_client_inner(
        &self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        ch: &mut impl Channel,
        ack: &Handshake,
    ) -> Result<CaOutcome, ProtocolError> {
        let blinded = exp_all::<G>(&hash_items::<G>(set), &self.blind);
        ch.send(&WireMessage::new(
            MsgType::CaBlinded,
            encode_elements::<G>(&blinded),
        ))?;
        let reply = decode_elements::<G>(&expect(ch, MsgType::CaReply, "CA_REPLY")?)?;
        if reply.len() != set.len() {
            return Err(ProtocolError::Decode(
                "reply size differs from the blinded set".into(),
            ));
        }
        let tag_bytes = expect(ch, MsgType::CaTags, "CA_TAGS")?;
        let server_tags: HashSet<&[u8]> = decode_fixed_list(&tag_bytes, cfg.params.tag_len())?
            .into_iter()
            .collect();
        if server_tags.len() as u64 > ack.declared_set_size as u64 {
            return Err(ProtocolError::Decode(
                "more tags than the declared set size".into(),
            ));
        }
        let inv = G::invert(&self.blind);
        let count = reply
            .par_iter()
            .filter(|e| {
                let t = tag_hash(&cfg.params, &G::encode_to_vec(&G::exp(e, &inv)), CA_TAG);
                server_tags.contains(t.as_bytes())
            })
            .count() as u64;
        if ack.flags & FLAG_REPORT != 0 {
            ch.send(&WireMessage::new(
                MsgType::Report,
                count.to_be_bytes().to_vec(),
            ))?;
        }
        Ok(CaOutcome {
            cardinality: Some(count),
            peer_set_size: ack.declared_set_size,
        })
    }

    /// Server side of the cardinality exchange, after the handshake.
    pub fn psi_ca_server(
        &mut self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        ch: &mut impl Channel,
        hello: &Handshake,
    ) -> Result<CaOutcome, ProtocolError> {
        self.begin(Role::Server)?;
        self.peer_set_size = Some(hello.declared_set_size);
        let r = self.ca_server_inner(cfg, set, ch, hello);
        let r = r.or_else(|e| notify_abort(ch, e));
        self.finish(r)
    }

    fn ca_server_inner(
        &self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        ch: &mut impl Channel,
        hello: &Handshake,
    ) -> Result<CaOutcome, ProtocolError> {
        let blinded = decode_elements::<G>(&expect(ch, MsgType::CaBlinded, "CA_BLINDED")?)?;
        if blinded.len() != hello.declared_set_size as usize {
            return Err(ProtocolError::Decode(
                "blinded set size differs from the declared size".into(),
            ));
        }
        let reply = reblind_shuffled::<G>(&blinded, &self.blind);
        let mut tags: Vec<ItemTag> =
            masked_tags::<G>(&cfg.params, &hash_items::<G>(set), &self.blind, CA_TAG)
                .into_iter()
                .map(|(t, _)| t)
                .collect();
        tags.shuffle(&mut OsRng);
        ch.send(&WireMessage::new(
            MsgType::CaReply,
            encode_elements::<G>(&reply),
        ))?;
        ch.send(&WireMessage::new(
            MsgType::CaTags,
            encode_fixed_list(tags.iter().map(|t| t.as_bytes())),
        ))?;
        let cardinality = if hello.flags & FLAG_REPORT != 0 {
            let p = expect(ch, MsgType::Report, "REPORT")?;
            let mut r = Reader::new(&p);
            let n = r.u64()?;
            r.finish()?;
            Some(n)
        } else {
            None
        };
        Ok(CaOutcome {
            cardinality,
            peer_set_size: hello.declared_set_size,
        })
    }

    /// Client side of PSI with data transfer: learns matched items and their payloads.
    pub fn psi_dt_client(
        &mut self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        ch: &mut impl Channel,
        ack: &Handshake,
    ) -> Result<DtOutcome, ProtocolError> {
        self.begin(Role::Client)?;
        self.peer_set_size = Some(ack.declared_set_size);
        let r = self.dt_client_inner(cfg, set, ch, ack);
        self.finish(r)
    }

    fn dt_client_inner(
        &self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        ch: &mut impl Channel,
        ack: &Handshake,
    ) -> Result<DtOutcome, ProtocolError> {
        let blinded = exp_all::<G>(&hash_items::<G>(set), &self.blind);
        ch.send(&WireMessage::new(
            MsgType::DtBlinded,
            encode_elements::<G>(&blinded),
        ))?;
        let reply = decode_elements::<G>(&expect(ch, MsgType::DtReply, "DT_REPLY")?)?;
        if reply.len() != set.len() {
            return Err(ProtocolError::Decode(
                "reply size differs from the blinded set".into(),
            ));
        }
        let body = expect(ch, MsgType::DtTaggedPayloads, "DT_TAGGED_PAYLOADS")?;
        let tag_len = cfg.params.tag_len();
        let mut r = Reader::new(&body);
        let n = r.u32()? as usize;
        if n as u64 > ack.declared_set_size as u64 {
            return Err(ProtocolError::Decode(
                "more payloads than the declared set size".into(),
            ));
        }
        let mut by_tag: HashMap<&[u8], &[u8]> = HashMap::with_capacity(n);
        for _ in 0..n {
            let tag = r.take(tag_len)?;
            let len = r.u32()? as usize;
            by_tag.insert(tag, r.take(len)?);
        }
        r.finish()?;
        let inv = G::invert(&self.blind);
        let mut out = Vec::new();
        for (ip, e) in set.iter().zip(&reply) {
            let enc = G::encode_to_vec(&G::exp(e, &inv));
            let tag = tag_hash(&cfg.params, &enc, DT_TAG);
            if let Some(ct) = by_tag.get(tag.as_bytes()) {
                let plain = open(&payload_key(&enc), tag.as_bytes(), ct)?;
                let payload = AssociatedPayload::decode(&plain)?;
                if payload.item != ip {
                    return Err(ProtocolError::AuthenticationFailed);
                }
                out.push((ip, payload));
            }
        }
        Ok(DtOutcome {
            intersection: out,
            peer_set_size: ack.declared_set_size,
        })
    }

    /// Server side of PSI with data transfer. `payloads` must cover every item of `set`.
    pub fn psi_dt_server(
        &mut self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        payloads: &BTreeMap<Ipv4Addr, AssociatedPayload>,
        ch: &mut impl Channel,
        hello: &Handshake,
    ) -> Result<DtOutcome, ProtocolError> {
        self.begin(Role::Server)?;
        self.peer_set_size = Some(hello.declared_set_size);
        let r = self.dt_server_inner(cfg, set, payloads, ch, hello);
        let r = r.or_else(|e| notify_abort(ch, e));
        self.finish(r)
    }

    fn dt_server_inner(
        &self,
        cfg: &ProtocolConfig,
        set: &IpSet,
        payloads: &BTreeMap<Ipv4Addr, AssociatedPayload>,
        ch: &mut impl Channel,
        hello: &Handshake,
    ) -> Result<DtOutcome, ProtocolError> {
        let blinded = decode_elements::<G>(&expect(ch, MsgType::DtBlinded, "DT_BLINDED")?)?;
        // checked after the client's message so the abort reaches a listening peer
        if let Some(missing) = set.iter().find(|ip| !payloads.contains_key(ip)) {
            return Err(ProtocolError::MissingPayload(missing));
        }
        if blinded.len() != hello.declared_set_size as usize {
            return Err(ProtocolError::Decode(
                "blinded set size differs from the declared size".into(),
            ));
        }
        // reply order must follow the client's order so it can attribute matches
        let reply = exp_all::<G>(&blinded, &self.blind);
        let masked = masked_tags::<G>(&cfg.params, &hash_items::<G>(set), &self.blind, DT_TAG);
        let mut sealed: Vec<(ItemTag, Vec<u8>)> = set
            .as_slice()
            .par_iter()
            .zip(masked.into_par_iter())
            .map(|(ip, (tag, enc))| {
                let ct = seal(&payload_key(&enc), tag.as_bytes(), &payloads[ip].encode());
                (tag, ct)
            })
            .collect();
        sealed.shuffle(&mut OsRng);
        let mut body = Vec::new();
        body.extend_from_slice(&(sealed.len() as u32).to_be_bytes());
        for (tag, ct) in &sealed {
            body.extend_from_slice(tag.as_bytes());
            body.extend_from_slice(&(ct.len() as u32).to_be_bytes());
            body.extend_from_slice(ct);
        }
        ch.send(&WireMessage::new(
            MsgType::DtReply,
            encode_elements::<G>(&reply),
        ))?;
        ch.send(&WireMessage::new(MsgType::DtTaggedPayloads, body))?;
        Ok(DtOutcome {
            intersection: Vec::new(),
            peer_set_size: hello.declared_set_size,
        })
    }
}

fn notify_abort<T>(ch: &mut impl Channel, e: ProtocolError) -> Result<T, ProtocolError> {
    let code = match &e {
        ProtocolError::Decode(_) => Some(error_code::MALFORMED),
        ProtocolError::UnexpectedMessage { .. } => Some(error_code::UNEXPECTED_MESSAGE),
        ProtocolError::MissingPayload(_) | ProtocolError::InvalidParams(_) => {
            Some(error_code::INTERNAL)
        }
        _ => None,
    };
    if let Some(code) = code {
        let _ = ch.send(&error_message(code, &e.to_string()));
    }
    Err(e)
}

// Each key encrypts exactly one message, so a fixed nonce is safe.
const NONCE: [u8; 12] = [0u8; 12];

fn seal(key: &[u8; 16], aad: &[u8], msg: &[u8]) -> Vec<u8> {
    Aes128Gcm::new(key.into())
        .encrypt(Nonce::from_slice(&NONCE), Payload { msg, aad })
        .expect("AES-GCM encryption of an in-memory buffer")
}

fn open(key: &[u8; 16], aad: &[u8], ct: &[u8]) -> Result<Vec<u8>, ProtocolError> {
    Aes128Gcm::new(key.into())
        .decrypt(Nonce::from_slice(&NONCE), Payload { msg: ct, aad })
        .map_err(|_| ProtocolError::AuthenticationFailed)
}

macro_rules! with_group {
    ($id:expr, $G:ident => $body:expr) => {
        match $id {
            GroupId::Ristretto255 => {
                type $G = Ristretto255;
                $body
            }
            GroupId::Modp2048 => {
                type $G = Modp2048;
                $body
            }
        }
    };
}
pub(crate) use with_group;

/// Runs PSI-CA end to end, handshake included.
pub fn run_psi_ca(
    cfg: &ProtocolConfig,
    set: &IpSet,
    ch: &mut impl Channel,
    role: Role,
) -> Result<CaOutcome, ProtocolError> {
    let size = set_size(set)?;
    with_group!(cfg.params.group, G => {
        let mut session = SessionState::<G>::new(role);
        match role {
            Role::Client => {
                let ack = client_handshake(cfg, ch, ProtocolId::PsiCa, size)?;
                session.psi_ca_client(cfg, set, ch, &ack)
            }
            Role::Server => {
                let hello = server_handshake(cfg, ch, size, &[ProtocolId::PsiCa])?;
                session.psi_ca_server(cfg, set, ch, &hello)
            }
        }
    })
}

/// Runs PSI with data transfer end to end. The server passes its payloads;
/// the client passes an empty map.
pub fn run_psi_dt(
    cfg: &ProtocolConfig,
    set: &IpSet,
    payloads: &BTreeMap<Ipv4Addr, AssociatedPayload>,
    ch: &mut impl Channel,
    role: Role,
) -> Result<DtOutcome, ProtocolError> {
    let size = set_size(set)?;
    with_group!(cfg.params.group, G => {
        let mut session = SessionState::<G>::new(role);
        match role {
            Role::Client => {
                let ack = client_handshake(cfg, ch, ProtocolId::PsiDt, size)?;
                session.psi_dt_client(cfg, set, ch, &ack)
            }
            Role::Server => {
                let hello = server_handshake(cfg, ch, size, &[ProtocolId::PsiDt])?;
                session.psi_dt_server(cfg, set, payloads, ch, &hello)
            }
        }
    })
}

/// Private Jaccard similarity: one PSI-CA run plus the exchanged set sizes.
pub fn run_private_jaccard(
    cfg: &ProtocolConfig,
    set: &IpSet,
    ch: &mut impl Channel,
    role: Role,
) -> Result<JaccardOutcome, ProtocolError> {
    let size = set_size(set)?;
    let ca = with_group!(cfg.params.group, G => {
        let mut session = SessionState::<G>::new(role);
        match role {
            Role::Client => {
                let ack = client_handshake(cfg, ch, ProtocolId::Pjs, size)?;
                session.psi_ca_client(cfg, set, ch, &ack)
            }
            Role::Server => {
                let hello = server_handshake(cfg, ch, size, &[ProtocolId::Pjs])?;
                session.psi_ca_server(cfg, set, ch, &hello)
            }
        }
    })?;
    Ok(jaccard_outcome(ca, size))
}

pub(crate) fn jaccard_outcome(ca: CaOutcome, local: u32) -> JaccardOutcome {
    JaccardOutcome {
        ratio: ca.cardinality.map(|c| jaccard(c, local, ca.peer_set_size)),
        cardinality: ca.cardinality,
        local_set_size: local,
        peer_set_size: ca.peer_set_size,
    }
}
