//! Private set protocols: PSI cardinality, PSI with data transfer, and
//! private Jaccard, all on one blind-exponentiation skeleton.
//!
//! Both parties hash their items onto a prime-order group. The client blinds
//! with a secret exponent `r_c`, the server adds its own `r_s`, and the
//! client strips `r_c` to obtain `H(x)^r_s` for each of its items. The server
//! publishes short tags of `H(y)^r_s` for its own items, so matching tags
//! reveal common items and nothing else. Blinding exponents and shuffles
//! always come from the OS entropy source.

mod group;
mod oracle;
mod protocols;

pub(crate) mod protocols_internal {
    pub(crate) use super::protocols::{jaccard_outcome, with_group};
}

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use group::{GroupId, Modp2048, PrimeOrderGroup, Ristretto255};
pub use oracle::plaintext_intersection;
pub use protocols::{
    client_handshake, run_private_jaccard, run_psi_ca, run_psi_dt, server_handshake, CaOutcome,
    DtOutcome, JaccardOutcome, ProtocolConfig, Role, SessionPhase, SessionState,
};

/// Domain tag for PSI-CA item tags.
pub const CA_TAG: &str = "ca-tag";
/// Domain tag for PSI-DT item tags.
pub const DT_TAG: &str = "dt-tag";
/// Domain tag for PSI-DT payload keys.
pub const DT_KEY: &str = "dt-key";

pub const DEFAULT_KAPPA_BITS: u16 = 128;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("handshake mismatch: {0}")]
    HandshakeMismatch(&'static str),
    #[error("unsupported protocol code {0}")]
    UnsupportedProtocol(u8),
    #[error("stream ended mid-message")]
    Truncated,
    #[error("decode failure: {0}")]
    Decode(String),
    #[error("frame of {0} bytes exceeds the 16 MiB cap")]
    FrameTooLarge(usize),
    #[error("expected message {expected:?}, got {got:?}")]
    UnexpectedMessage { expected: &'static str, got: u8 },
    #[error("peer sent error 0x{code:02x}: {message}")]
    Peer { code: u8, message: String },
    #[error("authenticated decryption failed for a matched item")]
    AuthenticationFailed,
    #[error("session already used")]
    SessionReused,
    #[error("no payload supplied for item {0}")]
    MissingPayload(Ipv4Addr),
    #[error("local set is empty")]
    EmptySet,
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Group and tag length shared by both parties. Checked in the handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CryptoParams {
    pub group: GroupId,
    /// Tag length κ in bits; a multiple of 8 in `64..=256`.
    pub kappa_bits: u16,
}

impl Default for CryptoParams {
    fn default() -> Self {
        CryptoParams {
            group: GroupId::Ristretto255,
            kappa_bits: DEFAULT_KAPPA_BITS,
        }
    }
}

impl CryptoParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !self.kappa_bits.is_multiple_of(8) || !(64..=256).contains(&self.kappa_bits) {
            return Err(ProtocolError::InvalidParams(
                "kappa must be a multiple of 8 in 64..=256",
            ));
        }
        Ok(())
    }

    pub fn tag_len(&self) -> usize {
        self.kappa_bits as usize / 8
    }
}

/// κ-bit digest of a masked item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemTag(Vec<u8>);

impl ItemTag {
    pub fn from_bytes(b: &[u8]) -> ItemTag {
        ItemTag(b.to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

fn domain_digest(encoded_element: &[u8], domain: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((domain.len() as u8).to_be_bytes());
    h.update(domain.as_bytes());
    h.update(encoded_element);
    h.finalize().into()
}

/// `H'(element, domain)` truncated to κ bits.
pub fn tag_hash(params: &CryptoParams, encoded_element: &[u8], domain: &str) -> ItemTag {
    ItemTag(domain_digest(encoded_element, domain)[..params.tag_len()].to_vec())
}

/// 128-bit symmetric key derived from a masked item under the `dt-key` domain.
pub(crate) fn payload_key(encoded_element: &[u8]) -> [u8; 16] {
    domain_digest(encoded_element, DT_KEY)[..16]
        .try_into()
        .expect("16 bytes")
}

/// Canonical byte encoding of a set element: the 4 address bytes, big-endian.
pub fn item_bytes(ip: Ipv4Addr) -> [u8; 4] {
    ip.octets()
}

/// Events attached to one item in PSI with data transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociatedPayload {
    pub item: Ipv4Addr,
    /// `(timestamp, port)` of every event whose source is `item`.
    pub events: Vec<(i64, u16)>,
}

impl AssociatedPayload {
    /// item u32, count u32, then per event i64 timestamp + u16 port; big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.events.len() * 10);
        out.extend_from_slice(&self.item.octets());
        out.extend_from_slice(&(self.events.len() as u32).to_be_bytes());
        for &(t, p) in &self.events {
            out.extend_from_slice(&t.to_be_bytes());
            out.extend_from_slice(&p.to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<AssociatedPayload, ProtocolError> {
        let mut r = crate::netpeer::Reader::new(bytes);
        let item = Ipv4Addr::from(r.u32()?);
        let n = r.u32()? as usize;
        if r.remaining() != n.saturating_mul(10) {
            return Err(ProtocolError::Decode("payload event count mismatch".into()));
        }
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            let t = r.i64()?;
            let p = r.u16()?;
            events.push((t, p));
        }
        Ok(AssociatedPayload { item, events })
    }
}
