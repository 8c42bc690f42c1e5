//! TCP listener and initiator for running the private protocols between two
//! processes.
//!
//! Frames travel over plain TCP. The protocols do not rely on transport
//! secrecy; wrap the socket in TLS if the deployment wants channel
//! authentication.

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{Handshake, ProtocolId, StreamChannel};
use crate::crypto::protocols_internal::{jaccard_outcome, with_group};
use crate::crypto::{
    client_handshake, server_handshake, AssociatedPayload, CryptoParams, GroupId, Modp2048,
    ProtocolConfig, ProtocolError, Ristretto255, Role, SessionState,
};
use crate::datamodel::{EntityLog, IpSet};

const SESSION_TIMEOUT: Duration = Duration::from_secs(60);

/// What a peer brings to a session: its source set and per-source events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerDataset {
    pub entity_id: String,
    pub set: IpSet,
    pub payloads: BTreeMap<Ipv4Addr, AssociatedPayload>,
}

impl PeerDataset {
    pub fn from_log(log: &EntityLog) -> Self {
        let mut payloads: BTreeMap<Ipv4Addr, AssociatedPayload> = BTreeMap::new();
        for e in log.events() {
            payloads
                .entry(e.source)
                .or_insert_with(|| AssociatedPayload {
                    item: e.source,
                    events: Vec::new(),
                })
                .events
                .push((e.timestamp, e.port));
        }
        PeerDataset {
            entity_id: log.id().to_string(),
            set: log.unique_sources().clone(),
            payloads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListenPolicy {
    pub params: CryptoParams,
    pub allowed: Vec<ProtocolId>,
}

impl Default for ListenPolicy {
    fn default() -> Self {
        ListenPolicy {
            params: CryptoParams::default(),
            allowed: vec![ProtocolId::PsiCa, ProtocolId::PsiDt, ProtocolId::Pjs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionSummary {
    /// Cardinality as reported by the client, if it reported.
    Cardinality(Option<u64>),
    DataTransfer {
        peer_set_size: u32,
    },
    Jaccard(Option<f64>),
}

/// Outcome of one served connection.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub peer: Option<SocketAddr>,
    pub client_entity: Option<String>,
    pub protocol: Option<ProtocolId>,
    pub result: Result<SessionSummary, String>,
}

/// Serves one connection as the protocol server.
pub fn serve_connection(
    stream: TcpStream,
    dataset: &PeerDataset,
    policy: &ListenPolicy,
) -> SessionRecord {
    let peer = stream.peer_addr().ok();
    let _ = stream.set_read_timeout(Some(SESSION_TIMEOUT));
    let _ = stream.set_nodelay(true);
    let mut ch = StreamChannel::new(stream);
    let cfg = ProtocolConfig {
        params: policy.params,
        entity_id: dataset.entity_id.clone(),
        report: true,
    };
    let mut record = SessionRecord {
        peer,
        client_entity: None,
        protocol: None,
        result: Err(String::new()),
    };
    let size = match u32::try_from(dataset.set.len()) {
        Ok(n) if n > 0 => n,
        _ => {
            record.result = Err("local dataset is empty".into());
            return record;
        }
    };
    let hello = match server_handshake(&cfg, &mut ch, size, &policy.allowed) {
        Ok(h) => h,
        Err(e) => {
            record.result = Err(e.to_string());
            return record;
        }
    };
    record.client_entity = Some(hello.entity_id.clone());
    record.protocol = Some(hello.protocol_id);
    record.result =
        serve_after_hello(&cfg, dataset, &mut ch, &hello, size).map_err(|e| e.to_string());
    record
}

fn serve_after_hello(
    cfg: &ProtocolConfig,
    dataset: &PeerDataset,
    ch: &mut StreamChannel<TcpStream>,
    hello: &Handshake,
    size: u32,
) -> Result<SessionSummary, ProtocolError> {
    with_group!(cfg.params.group, G => {
        let mut session = SessionState::<G>::new(Role::Server);
        match hello.protocol_id {
            ProtocolId::PsiCa => session.psi_ca_server(cfg, &dataset.set, ch, hello).map(|o| SessionSummary::Cardinality(o.cardinality)),
            ProtocolId::Pjs => session
                .psi_ca_server(cfg, &dataset.set, ch, hello)
                .map(|o| SessionSummary::Jaccard(jaccard_outcome(o, size).ratio)),
            ProtocolId::PsiDt => session
                .psi_dt_server(cfg, &dataset.set, &dataset.payloads, ch, hello)
                .map(|o| SessionSummary::DataTransfer { peer_set_size: o.peer_set_size }),
        }
    })
}

/// A bound listener that can be served in the background and stopped.
pub struct ListenerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    records: Arc<Mutex<Vec<SessionRecord>>>,
    thread: Option<JoinHandle<()>>,
}

impl ListenerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn records(&self) -> Vec<SessionRecord> {
        self.records.lock().expect("records lock").clone()
    }

    /// Stops accepting and waits for the accept loop to exit.
    pub fn shutdown(mut self) -> Vec<SessionRecord> {
        self.stop_inner();
        self.records()
    }

    fn stop_inner(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.local_addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ListenerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_inner();
        }
    }
}

/// Binds `addr` and serves sessions on background threads until the handle
/// is shut down. A failing session never stops the listener.
pub fn listen(
    addr: impl ToSocketAddrs,
    dataset: PeerDataset,
    policy: ListenPolicy,
) -> std::io::Result<ListenerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local_addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let records = Arc::new(Mutex::new(Vec::new()));
    let dataset = Arc::new(dataset);
    let policy = Arc::new(policy);
    let thread = {
        let (stop, records) = (stop.clone(), records.clone());
        thread::spawn(move || accept_loop(listener, dataset, policy, stop, records))
    };
    Ok(ListenerHandle {
        local_addr,
        stop,
        records,
        thread: Some(thread),
    })
}

fn accept_loop(
    listener: TcpListener,
    dataset: Arc<PeerDataset>,
    policy: Arc<ListenPolicy>,
    stop: Arc<AtomicBool>,
    records: Arc<Mutex<Vec<SessionRecord>>>,
) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let (dataset, policy, records) = (dataset.clone(), policy.clone(), records.clone());
        workers.push(thread::spawn(move || {
            let rec = serve_connection(stream, &dataset, &policy);
            match &rec.result {
                Ok(summary) => log::info!(
                    "session from {:?} ({:?}): {:?}",
                    rec.peer,
                    rec.client_entity,
                    summary
                ),
                Err(e) => log::warn!("session from {:?} aborted: {e}", rec.peer),
            }
            records.lock().expect("records lock").push(rec);
        }));
        workers.retain(|w| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolResult {
    Cardinality(u64),
    Intersection(Vec<(Ipv4Addr, AssociatedPayload)>),
    Jaccard(f64),
}

#[derive(Debug, thiserror::Error)]
pub enum PeerError {
    #[error("cannot connect: {0}")]
    Connect(#[source] std::io::Error),
    #[error("handshake failed: {0}")]
    Handshake(#[source] ProtocolError),
    #[error("protocol failed: {0}")]
    Protocol(#[source] ProtocolError),
}

/// Connects to a listening peer and runs `protocol` in the client role.
pub fn initiate(
    addr: impl ToSocketAddrs,
    protocol: ProtocolId,
    dataset: &PeerDataset,
    params: CryptoParams,
) -> Result<ProtocolResult, PeerError> {
    let stream = TcpStream::connect(addr).map_err(PeerError::Connect)?;
    let _ = stream.set_read_timeout(Some(SESSION_TIMEOUT));
    let _ = stream.set_nodelay(true);
    let mut ch = StreamChannel::new(stream);
    let cfg = ProtocolConfig {
        params,
        entity_id: dataset.entity_id.clone(),
        report: true,
    };
    let size = u32::try_from(dataset.set.len())
        .ok()
        .filter(|&n| n > 0)
        .ok_or(PeerError::Protocol(ProtocolError::EmptySet))?;
    let ack = client_handshake(&cfg, &mut ch, protocol, size).map_err(PeerError::Handshake)?;
    with_group!(params.group, G => {
        let mut session = SessionState::<G>::new(Role::Client);
        match protocol {
            ProtocolId::PsiCa => session
                .psi_ca_client(&cfg, &dataset.set, &mut ch, &ack)
                .map(|o| ProtocolResult::Cardinality(o.cardinality.unwrap_or(0))),
            ProtocolId::Pjs => session
                .psi_ca_client(&cfg, &dataset.set, &mut ch, &ack)
                .map(|o| ProtocolResult::Jaccard(jaccard_outcome(o, size).ratio.unwrap_or(0.0))),
            ProtocolId::PsiDt => session
                .psi_dt_client(&cfg, &dataset.set, &mut ch, &ack)
                .map(|o| ProtocolResult::Intersection(o.intersection)),
        }
    })
    .map_err(PeerError::Protocol)
}
