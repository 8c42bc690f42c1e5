//! Binary framing and message payload codecs.
//!
//! A frame is a 4-byte big-endian length `L`, then `L` bytes: one type byte
//! followed by the payload. `L` counts the type byte and is capped at 16 MiB.

use std::io::{self, Read, Write};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::crypto::{CryptoParams, GroupId, ProtocolError};

pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;
pub const PROTOCOL_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0x01,
    HelloAck = 0x02,
    CaBlinded = 0x10,
    CaReply = 0x11,
    CaTags = 0x12,
    DtBlinded = 0x20,
    DtReply = 0x21,
    DtTaggedPayloads = 0x22,
    Report = 0x30,
    Error = 0x7F,
}

impl MsgType {
    pub fn from_code(code: u8) -> Option<MsgType> {
        use MsgType::*;
        Some(match code {
            0x01 => Hello,
            0x02 => HelloAck,
            0x10 => CaBlinded,
            0x11 => CaReply,
            0x12 => CaTags,
            0x20 => DtBlinded,
            0x21 => DtReply,
            0x22 => DtTaggedPayloads,
            0x30 => Report,
            0x7F => Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        WireMessage { msg_type, payload }
    }

    pub fn encode(&self) -> Result<Vec<u8>, ProtocolError> {
        let len = self.payload.len() + 1;
        if len > MAX_FRAME_LEN {
            return Err(ProtocolError::FrameTooLarge(len));
        }
        let mut out = Vec::with_capacity(4 + len);
        out.extend_from_slice(&(len as u32).to_be_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one frame from the front of `bytes`, returning it and the bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(WireMessage, usize), ProtocolError> {
        if bytes.len() < 4 {
            return Err(ProtocolError::Truncated);
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        check_len(len)?;
        if bytes.len() < 4 + len {
            return Err(ProtocolError::Truncated);
        }
        let msg = from_body(&bytes[4..4 + len])?;
        Ok((msg, 4 + len))
    }

    pub fn read_from(r: &mut impl Read) -> Result<WireMessage, ProtocolError> {
        let mut header = [0u8; 4];
        read_exact(r, &mut header)?;
        let len = u32::from_be_bytes(header) as usize;
        check_len(len)?;
        let mut body = vec![0u8; len];
        read_exact(r, &mut body)?;
        from_body(&body)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ProtocolError> {
        w.write_all(&self.encode()?)?;
        w.flush()?;
        Ok(())
    }
}

fn check_len(len: usize) -> Result<(), ProtocolError> {
    if len == 0 {
        return Err(ProtocolError::Decode("empty frame".into()));
    }
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    Ok(())
}

fn from_body(body: &[u8]) -> Result<WireMessage, ProtocolError> {
    let msg_type = MsgType::from_code(body[0])
        .ok_or_else(|| ProtocolError::Decode(format!("unknown message type 0x{:02x}", body[0])))?;
    Ok(WireMessage {
        msg_type,
        payload: body[1..].to_vec(),
    })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), ProtocolError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Truncated,
        _ => ProtocolError::Io(e),
    })
}

/// Parses a byte stream into the sequence of frames it contains.
pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<WireMessage>, ProtocolError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (m, used) = WireMessage::decode(bytes)?;
        out.push(m);
        bytes = &bytes[used..];
    }
    Ok(out)
}

/// A duplex, ordered, reliable message stream.
pub trait Channel {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<WireMessage, ProtocolError>;
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtocolError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<WireMessage, ProtocolError> {
        (**self).recv()
    }
}

/// Channel over any byte stream, e.g. a `TcpStream`.
pub struct StreamChannel<S> {
    stream: S,
}

impl<S: Read + Write> StreamChannel<S> {
    pub fn new(stream: S) -> Self {
        StreamChannel { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write> Channel for StreamChannel<S> {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtocolError> {
        msg.write_to(&mut self.stream)
    }

    fn recv(&mut self) -> Result<WireMessage, ProtocolError> {
        WireMessage::read_from(&mut self.stream)
    }
}

/// One end of an in-process byte pipe. Frames are encoded on send and parsed
/// on receive, so loopback runs exercise the same codec as sockets.
pub struct MemoryChannel {
    tx: Option<mpsc::Sender<Vec<u8>>>,
    rx: mpsc::Receiver<Vec<u8>>,
    buf: Vec<u8>,
}

impl MemoryChannel {
    pub fn pair() -> (MemoryChannel, MemoryChannel) {
        let (atx, brx) = mpsc::channel();
        let (btx, arx) = mpsc::channel();
        (
            MemoryChannel {
                tx: Some(atx),
                rx: arx,
                buf: Vec::new(),
            },
            MemoryChannel {
                tx: Some(btx),
                rx: brx,
                buf: Vec::new(),
            },
        )
    }

    /// Pushes raw bytes to the peer, bypassing framing.
    pub fn send_raw(&mut self, bytes: Vec<u8>) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(bytes);
        }
    }

    /// Closes the sending half; the peer then sees end of stream.
    pub fn close(&mut self) {
        self.tx = None;
    }
}

impl Channel for MemoryChannel {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtocolError> {
        let bytes = msg.encode()?;
        match &self.tx {
            Some(tx) => tx
                .send(bytes)
                .map_err(|_| ProtocolError::Io(io::Error::from(io::ErrorKind::BrokenPipe))),
            None => Err(ProtocolError::Io(io::Error::from(
                io::ErrorKind::BrokenPipe,
            ))),
        }
    }

    fn recv(&mut self) -> Result<WireMessage, ProtocolError> {
        loop {
            match WireMessage::decode(&self.buf) {
                Ok((m, used)) => {
                    self.buf.drain(..used);
                    return Ok(m);
                }
                Err(ProtocolError::Truncated) => match self.rx.recv() {
                    Ok(chunk) => self.buf.extend_from_slice(&chunk),
                    Err(_) => return Err(ProtocolError::Truncated),
                },
                Err(e) => return Err(e),
            }
        }
    }
}

/// Which side sent a recorded frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Wraps a channel and keeps the encoded bytes of every frame.
pub struct RecordingChannel<C> {
    inner: C,
    transcript: Vec<(Direction, Vec<u8>)>,
}

impl<C: Channel> RecordingChannel<C> {
    pub fn new(inner: C) -> Self {
        RecordingChannel {
            inner,
            transcript: Vec::new(),
        }
    }

    pub fn transcript(&self) -> &[(Direction, Vec<u8>)] {
        &self.transcript
    }

    pub fn into_parts(self) -> (C, Vec<(Direction, Vec<u8>)>) {
        (self.inner, self.transcript)
    }
}

impl<C: Channel> Channel for RecordingChannel<C> {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtocolError> {
        self.transcript.push((Direction::Sent, msg.encode()?));
        self.inner.send(msg)
    }

    fn recv(&mut self) -> Result<WireMessage, ProtocolError> {
        let m = self.inner.recv()?;
        self.transcript.push((Direction::Received, m.encode()?));
        Ok(m)
    }
}

/// Protocol requested in the handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum ProtocolId {
    PsiCa = 1,
    PsiDt = 2,
    Pjs = 3,
}

impl ProtocolId {
    pub fn from_code(c: u8) -> Option<ProtocolId> {
        match c {
            1 => Some(ProtocolId::PsiCa),
            2 => Some(ProtocolId::PsiDt),
            3 => Some(ProtocolId::Pjs),
            _ => None,
        }
    }
}

impl std::str::FromStr for ProtocolId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psi-ca" => Ok(ProtocolId::PsiCa),
            "psi-dt" => Ok(ProtocolId::PsiDt),
            "pjs" => Ok(ProtocolId::Pjs),
            _ => Err(format!(
                "unknown protocol {s:?} (expected psi-ca, psi-dt or pjs)"
            )),
        }
    }
}

/// Handshake flag: the client will send a REPORT with its result.
pub const FLAG_REPORT: u8 = 0x01;

/// HELLO / HELLO_ACK body.
///
/// Layout: version u16, group u8, kappa u16, protocol u8, flags u8,
/// declared_set_size u32, entity_id as u16 length + UTF-8. All big-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handshake {
    pub protocol_version: u16,
    pub group_id: GroupId,
    pub kappa_bits: u16,
    pub protocol_id: ProtocolId,
    pub flags: u8,
    pub declared_set_size: u32,
    pub entity_id: String,
}

impl Handshake {
    pub fn params(&self) -> CryptoParams {
        CryptoParams {
            group: self.group_id,
            kappa_bits: self.kappa_bits,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let id = self.entity_id.as_bytes();
        let id = &id[..id.len().min(u16::MAX as usize)];
        let mut out = Vec::with_capacity(15 + id.len());
        out.extend_from_slice(&self.protocol_version.to_be_bytes());
        out.push(self.group_id.code());
        out.extend_from_slice(&self.kappa_bits.to_be_bytes());
        out.push(self.protocol_id as u8);
        out.push(self.flags);
        out.extend_from_slice(&self.declared_set_size.to_be_bytes());
        out.extend_from_slice(&(id.len() as u16).to_be_bytes());
        out.extend_from_slice(id);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Handshake, ProtocolError> {
        let mut r = Reader::new(bytes);
        let protocol_version = r.u16()?;
        let group = r.u8()?;
        let kappa_bits = r.u16()?;
        let proto = r.u8()?;
        let flags = r.u8()?;
        let declared_set_size = r.u32()?;
        let n = r.u16()? as usize;
        let entity_id = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| ProtocolError::Decode("entity id is not UTF-8".into()))?;
        r.finish()?;
        Ok(Handshake {
            protocol_version,
            group_id: GroupId::from_code(group)
                .ok_or(ProtocolError::HandshakeMismatch("unknown group"))?,
            kappa_bits,
            protocol_id: ProtocolId::from_code(proto)
                .ok_or(ProtocolError::UnsupportedProtocol(proto))?,
            flags,
            declared_set_size,
            entity_id,
        })
    }
}

/// ERROR frame codes.
pub mod error_code {
    pub const VERSION_MISMATCH: u8 = 0x01;
    pub const GROUP_MISMATCH: u8 = 0x02;
    pub const UNSUPPORTED_PROTOCOL: u8 = 0x03;
    pub const MALFORMED: u8 = 0x04;
    pub const UNEXPECTED_MESSAGE: u8 = 0x05;
    pub const INTERNAL: u8 = 0x06;
}

pub fn error_message(code: u8, text: &str) -> WireMessage {
    let mut payload = vec![code];
    payload.extend_from_slice(text.as_bytes());
    WireMessage::new(MsgType::Error, payload)
}

pub fn parse_error(payload: &[u8]) -> ProtocolError {
    let code = payload.first().copied().unwrap_or(error_code::INTERNAL);
    let message = String::from_utf8_lossy(payload.get(1..).unwrap_or_default()).into_owned();
    ProtocolError::Peer { code, message }
}

/// u32 count followed by fixed-width items.
pub fn encode_fixed_list<'a>(items: impl ExactSizeIterator<Item = &'a [u8]>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(items.len() as u32).to_be_bytes());
    for i in items {
        out.extend_from_slice(i);
    }
    out
}

pub fn decode_fixed_list(bytes: &[u8], width: usize) -> Result<Vec<&[u8]>, ProtocolError> {
    let mut r = Reader::new(bytes);
    let n = r.u32()? as usize;
    if n.checked_mul(width)
        .is_none_or(|total| total != r.remaining())
    {
        return Err(ProtocolError::Decode(
            "list length does not match its count".into(),
        ));
    }
    (0..n).map(|_| r.take(width)).collect()
}

/// Cursor over a payload; every read is bounds-checked.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.remaining() < n {
            return Err(ProtocolError::Decode("payload too short".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_be_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    pub fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn i64(&mut self) -> Result<i64, ProtocolError> {
        Ok(i64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn finish(&self) -> Result<(), ProtocolError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(ProtocolError::Decode("trailing bytes in payload".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_layout_is_exact() {
        let m = WireMessage::new(MsgType::Report, vec![0xAA, 0xBB]);
        assert_eq!(m.encode().unwrap(), vec![0, 0, 0, 3, 0x30, 0xAA, 0xBB]);
    }

    #[test]
    fn rejects_unknown_type_and_oversize() {
        assert!(matches!(
            WireMessage::decode(&[0, 0, 0, 1, 0x55]),
            Err(ProtocolError::Decode(_))
        ));
        assert!(matches!(
            WireMessage::decode(&[0x01, 0, 0, 1, 0x01]),
            Err(ProtocolError::FrameTooLarge(_))
        ));
        assert!(matches!(
            WireMessage::decode(&[0, 0, 0, 4, 0x01]),
            Err(ProtocolError::Truncated)
        ));
        let big = WireMessage::new(MsgType::CaTags, vec![0; MAX_FRAME_LEN]);
        assert!(matches!(big.encode(), Err(ProtocolError::FrameTooLarge(_))));
    }

    #[test]
    fn handshake_roundtrip() {
        let h = Handshake {
            protocol_version: PROTOCOL_VERSION,
            group_id: GroupId::Ristretto255,
            kappa_bits: 128,
            protocol_id: ProtocolId::PsiDt,
            flags: FLAG_REPORT,
            declared_set_size: 200,
            entity_id: "44cc551a".into(),
        };
        let enc = h.encode();
        assert_eq!(&enc[..7], &[0, 1, 1, 0, 128, 2, 1]);
        assert_eq!(Handshake::decode(&enc).unwrap(), h);
        assert!(Handshake::decode(&enc[..enc.len() - 1]).is_err());
    }

    #[test]
    fn memory_channel_reports_truncation() {
        let (mut a, mut b) = MemoryChannel::pair();
        a.send_raw(vec![0, 0, 0, 10, 0x10, 1, 2]);
        a.close();
        assert!(matches!(b.recv(), Err(ProtocolError::Truncated)));
    }

    proptest! {
        #[test]
        fn frame_roundtrip(code in prop::sample::select(vec![0x01u8, 0x02, 0x10, 0x11, 0x12, 0x20, 0x21, 0x22, 0x30, 0x7F]),
                           payload in prop::collection::vec(any::<u8>(), 0..2048)) {
            let m = WireMessage::new(MsgType::from_code(code).unwrap(), payload);
            let bytes = m.encode().unwrap();
            let (back, used) = WireMessage::decode(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(&back, &m);
            let mut cursor = std::io::Cursor::new(bytes);
            prop_assert_eq!(WireMessage::read_from(&mut cursor).unwrap(), m);
        }

        #[test]
        fn stream_of_frames_parses_back(payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 0..10)) {
            let msgs: Vec<WireMessage> = payloads.into_iter().map(|p| WireMessage::new(MsgType::CaReply, p)).collect();
            let stream: Vec<u8> = msgs.iter().flat_map(|m| m.encode().unwrap()).collect();
            prop_assert_eq!(decode_all(&stream).unwrap(), msgs);
        }
    }
}
