//! Servers, gateway and admin client over TCP.
//!
//! Every frame travels on a plain `TcpStream`. A server keeps one outgoing
//! connection per peer and reads peer traffic on whatever connections the
//! peers opened, so each direction of a link is its own FIFO stream. Peer
//! messages are filed by (session, sender, kind) and picked up by the
//! session that waits for them, which lets sessions run side by side.

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::net::{Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;

use super::adversary::{AdversarySpec, Behavior, Schedule};
use super::sim::{self, GatewaySpec, TimingPolicy};
use super::wire::{self, ack, FrameCipher, InsertPhase, Kind, Payload, Plaintext, WireMessage};
use crate::bloom::addr_key;
use crate::detection::Decision;
use crate::error::{Error, Result};
use crate::firewall::{
    eval_sum_server, gateway_decide, insert_transaction, EvalMode, FilterConfig, FirewallState, GatewayPolicy,
    InsertParticipant, ProductPath, Verdict,
};
use crate::rng;
use crate::sharing::{store, Channel, Party, PartyId, Share};

/// ERROR frame codes.
pub mod code {
    pub const MALFORMED: u8 = 1;
    pub const UNEXPECTED: u8 = 2;
    pub const PROTOCOL: u8 = 3;
}

fn resolve(endpoint: &str) -> Result<SocketAddr> {
    endpoint
        .to_socket_addrs()
        .map_err(|e| Error::Connectivity(format!("{endpoint}: {e}")))?
        .next()
        .ok_or_else(|| Error::Connectivity(format!("{endpoint}: no address")))
}

fn connect(endpoint: &str, timeout: Duration) -> Result<TcpStream> {
    let addr = resolve(endpoint)?;
    let s = TcpStream::connect_timeout(&addr, timeout).map_err(|e| Error::Connectivity(format!("{endpoint}: {e}")))?;
    s.set_nodelay(true).ok();
    Ok(s)
}

fn write_msg(s: &mut TcpStream, msg: &WireMessage, cipher: &dyn FrameCipher) -> Result<()> {
    let frame = wire::encode_with(msg, cipher)?;
    s.write_all(&frame).map_err(|e| Error::Connectivity(e.to_string()))
}

fn read_msg(s: &mut TcpStream, cipher: &dyn FrameCipher) -> Result<WireMessage> {
    match wire::read_frame(s, cipher) {
        Ok(Some((m, _))) => Ok(m),
        Ok(None) => Err(Error::Connectivity("connection closed".into())),
        Err(Error::Io(e)) => Err(Error::Connectivity(e.to_string())),
        Err(e) => Err(e),
    }
}

type MailKey = (u64, PartyId, Kind);

/// Peer messages waiting for their session.
#[derive(Default)]
struct Mailboxes {
    queues: Mutex<HashMap<MailKey, VecDeque<Payload>>>,
    arrived: Condvar,
}

impl Mailboxes {
    fn put(&self, key: MailKey, p: Payload) {
        self.queues.lock().unwrap().entry(key).or_default().push_back(p);
        self.arrived.notify_all();
    }

    fn take(&self, key: MailKey, deadline: Instant) -> Option<Payload> {
        let mut q = self.queues.lock().unwrap();
        loop {
            if let Some(p) = q.get_mut(&key).and_then(VecDeque::pop_front) {
                if q.get(&key).is_some_and(VecDeque::is_empty) {
                    q.remove(&key);
                }
                return Some(p);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            q = self.arrived.wait_timeout(q, deadline - now).unwrap().0;
        }
    }

    fn forget(&self, session: u64) {
        self.queues.lock().unwrap().retain(|k, _| k.0 != session);
    }
}

/// Outgoing connections to the other servers.
struct Peers {
    me: PartyId,
    endpoints: Vec<String>,
    links: Vec<Mutex<Option<TcpStream>>>,
    cipher: Arc<dyn FrameCipher>,
}

impl Peers {
    fn send(&self, to: PartyId, msg: &WireMessage, deadline: Instant) -> Result<()> {
        let i = to as usize - 1;
        let mut link = self.links[i].lock().unwrap();
        let mut backoff = Duration::from_millis(5);
        loop {
            if link.is_none() {
                match connect(&self.endpoints[i], Duration::from_secs(1)) {
                    Ok(s) => *link = Some(s),
                    Err(e) if Instant::now() + backoff >= deadline => return Err(e),
                    Err(_) => {
                        thread::sleep(backoff);
                        backoff = (backoff * 2).min(Duration::from_millis(200));
                        continue;
                    }
                }
            }
            match write_msg(link.as_mut().unwrap(), msg, self.cipher.as_ref()) {
                Ok(()) => return Ok(()),
                Err(e) => {
                    *link = None;
                    if Instant::now() >= deadline {
                        return Err(e);
                    }
                }
            }
        }
    }
}

/// A [`Channel`] whose peers are other server processes. Blocks the
/// calling thread while waiting, so each session runs on its own thread.
struct TcpChannel {
    session: u64,
    parties: usize,
    peers: Arc<Peers>,
    mail: Arc<Mailboxes>,
    timeout: Duration,
}

impl Channel for TcpChannel {
    fn party(&self) -> PartyId {
        self.peers.me
    }

    fn parties(&self) -> usize {
        self.parties
    }

    async fn exchange(&mut self, outbox: Vec<Vec<u64>>) -> Result<Vec<Vec<u64>>> {
        let me = self.peers.me as usize - 1;
        if outbox.len() != self.parties {
            return Err(Error::Protocol(format!("outbox has {} slots for {} parties", outbox.len(), self.parties)));
        }
        let deadline = Instant::now() + self.timeout;
        for (j, values) in outbox.into_iter().enumerate() {
            if j == me {
                continue;
            }
            let msg = WireMessage {
                session: self.session,
                party: self.peers.me,
                payload: Payload::ShareResp { values },
            };
            self.peers.send((j + 1) as PartyId, &msg, deadline)?;
        }
        let mut inbox = vec![Vec::new(); self.parties];
        for (j, slot) in inbox.iter_mut().enumerate() {
            if j == me {
                continue;
            }
            match self.mail.take((self.session, (j + 1) as PartyId, Kind::ShareResp), deadline) {
                Some(Payload::ShareResp { values }) => *slot = values,
                _ => {
                    return Err(Error::Connectivity(format!(
                        "session {}: nothing from party {} in time",
                        self.session,
                        j + 1
                    )))
                }
            }
        }
        Ok(inbox)
    }
}

/// Everything a server needs besides its filter state.
pub struct ServerOptions {
    /// All m server endpoints in party order, this server's included.
    pub peers: Vec<String>,
    pub admin_token: Option<String>,
    /// Share file rewritten after each committed insert.
    pub persist: Option<PathBuf>,
    /// Collection window for collective decisions.
    pub timing: TimingPolicy,
    /// Limit on any single wait inside a multiplication session.
    pub mpc_timeout: Duration,
    /// Reproducible protocol randomness; OS entropy when absent.
    pub seed: Option<u64>,
    /// Misbehaviour for testing.
    pub adversary: Option<AdversarySpec>,
    pub cipher: Arc<dyn FrameCipher>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            peers: Vec::new(),
            admin_token: None,
            persist: None,
            timing: TimingPolicy::networked(),
            mpc_timeout: Duration::from_secs(5),
            seed: None,
            adversary: None,
            cipher: Arc::new(Plaintext),
        }
    }
}

struct ServerShared {
    state: RwLock<FirewallState>,
    me: PartyId,
    opts: ServerOptions,
    peers: Arc<Peers>,
    mail: Arc<Mailboxes>,
    queries: AtomicU64,
    stop: AtomicBool,
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<ServerShared>,
    accept: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Current shares, for inspection.
    pub fn state(&self) -> FirewallState {
        self.shared.state.read().unwrap().clone()
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop();
        }
    }
}

/// Starts serving `state` on `listener` in background threads.
pub fn run_server(mut state: FirewallState, listener: TcpListener, opts: ServerOptions) -> Result<ServerHandle> {
    let m = state.config().scheme.parties;
    let me = state.party();
    if opts.peers.len() != m {
        return Err(Error::Config(format!("{} peer endpoints for {m} servers", opts.peers.len())));
    }
    opts.timing.validate()?;
    if let Some(adv) = &opts.adversary {
        let mut g = match opts.seed {
            Some(s) => rng::derive(s, &[0xad, me as u64]),
            None => rng::from_entropy(),
        };
        let n = state.config().scheme.field.modulus();
        for c in adv.corrupt.iter().filter(|c| c.party == me && c.schedule == Schedule::Permanent) {
            if let Behavior::ModifyStoredBits { indices } = &c.behavior {
                for &j in indices {
                    state.overwrite_share(j, g.gen_range(0..n))?;
                }
            }
        }
    }
    let addr = listener.local_addr()?;
    let peers = Arc::new(Peers {
        me,
        endpoints: opts.peers.clone(),
        links: (0..m).map(|_| Mutex::new(None)).collect(),
        cipher: opts.cipher.clone(),
    });
    let shared = Arc::new(ServerShared {
        state: RwLock::new(state),
        me,
        opts,
        peers,
        mail: Arc::new(Mailboxes::default()),
        queries: AtomicU64::new(0),
        stop: AtomicBool::new(false),
    });
    let sh = shared.clone();
    let accept = thread::spawn(move || {
        for conn in listener.incoming() {
            if sh.stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let sh = sh.clone();
                    thread::spawn(move || serve_connection(sh, stream));
                }
                Err(e) => ::log::warn!("accept failed: {e}"),
            }
        }
    });
    ::log::info!("server P_{me} listening on {addr}");
    Ok(ServerHandle {
        addr,
        shared,
        accept: Some(accept),
    })
}

fn serve_connection(sh: Arc<ServerShared>, mut stream: TcpStream) {
    stream.set_nodelay(true).ok();
    let cipher = sh.opts.cipher.clone();
    loop {
        let msg = match read_msg(&mut stream, cipher.as_ref()) {
            Ok(m) => m,
            Err(Error::Connectivity(_)) => return,
            Err(e) => {
                ::log::warn!("P_{}: dropping connection: {e}", sh.me);
                let _ = reply_error(&mut stream, &sh, 0, code::MALFORMED, &e.to_string());
                let _ = stream.shutdown(Shutdown::Both);
                return;
            }
        };
        if sh.stop.load(Ordering::SeqCst) {
            return;
        }
        let session = msg.session;
        let out = if msg.party != 0 {
            if msg.party as usize > sh.peers.endpoints.len() {
                Err(Error::Input(format!("unknown peer {}", msg.party)))
            } else {
                match msg.payload {
                    p @ (Payload::ShareResp { .. } | Payload::ResultBcast { .. }) => {
                        sh.mail.put((session, msg.party, p.kind()), p);
                        Ok(None)
                    }
                    other => Err(Error::Protocol(format!("peer sent {:?}", other.kind()))),
                }
            }
        } else {
            handle_request(&sh, session, msg.payload)
        };
        let sent = match out {
            Ok(Some(payload)) => write_msg(
                &mut stream,
                &WireMessage {
                    session,
                    party: sh.me,
                    payload,
                },
                cipher.as_ref(),
            ),
            Ok(None) => Ok(()),
            Err(e) => {
                ::log::warn!("P_{} session {session}: {e}", sh.me);
                let c = match e.class() {
                    crate::error::ErrorClass::Protocol => code::PROTOCOL,
                    _ => code::UNEXPECTED,
                };
                reply_error(&mut stream, &sh, session, c, &e.to_string())
            }
        };
        if sent.is_err() {
            return;
        }
    }
}

fn reply_error(stream: &mut TcpStream, sh: &ServerShared, session: u64, c: u8, text: &str) -> Result<()> {
    let msg = WireMessage {
        session,
        party: sh.me,
        payload: Payload::Error {
            code: c,
            text: text.to_owned(),
        },
    };
    write_msg(stream, &msg, sh.opts.cipher.as_ref())
}

fn handle_request(sh: &ServerShared, session: u64, payload: Payload) -> Result<Option<Payload>> {
    match payload {
        Payload::ConfigSync { .. } => Ok(Some(Payload::ConfigSync {
            digest: sh.state.read().unwrap().digest(),
        })),
        Payload::Query { addr, flags } => answer_query(sh, session, addr, flags),
        Payload::Insert { phase, token, addr } => Ok(Some(Payload::InsertAck {
            status: handle_insert(sh, phase, &token, addr_key(addr)),
        })),
        other => Err(Error::Protocol(format!("unexpected {:?} from a client", other.kind()))),
    }
}

fn handle_insert(sh: &ServerShared, phase: InsertPhase, token: &[u8], key: u32) -> u8 {
    match &sh.opts.admin_token {
        Some(t) if t.as_bytes() == token => {}
        _ => {
            ::log::warn!("P_{}: insert with a bad token refused", sh.me);
            return ack::DENIED;
        }
    }
    // Writers wait for running queries, so an insert never lands mid-query.
    let mut st = sh.state.write().unwrap();
    let r = match phase {
        InsertPhase::Prepare => st.prepare(key),
        InsertPhase::Commit => st.commit(key).and_then(|()| match &sh.opts.persist {
            Some(path) => store::save(path, st.shares()).inspect_err(|_| {
                let _ = st.abort(key);
            }),
            None => Ok(()),
        }),
        InsertPhase::Abort => st.abort(key).and_then(|()| match &sh.opts.persist {
            Some(path) => store::save(path, st.shares()),
            None => Ok(()),
        }),
    };
    match r {
        Ok(()) => ack::OK,
        Err(e) => {
            ::log::warn!("P_{}: insert {phase:?} failed: {e}", sh.me);
            ack::FAILED
        }
    }
}

fn answer_query(sh: &ServerShared, session: u64, addr: Ipv4Addr, flags: Option<u8>) -> Result<Option<Payload>> {
    let q = sh.queries.fetch_add(1, Ordering::SeqCst) as usize;
    let me = sh.me;
    let adv = sh.opts.adversary.clone().unwrap_or_default();
    if adv.records(me) {
        ::log::info!("P_{me} view: session {session} query {addr}");
    }
    let spec = GatewaySpec::from_flags(flags);
    let key = addr_key(addr);
    // Only the indexed shares are needed, so inserts are not held up by
    // a slow multiplication session.
    let (config, bits, sigma) = {
        let st = sh.state.read().unwrap();
        (st.config().clone(), st.indexed_shares(key), eval_sum_server(key, &st).value.value())
    };
    let scheme = config.scheme;
    let f = scheme.field;

    let share = match spec.protocol {
        EvalMode::Sum => sigma,
        EvalMode::Product => {
            scheme.require_multiplication()?;
            let chan = TcpChannel {
                session,
                parties: scheme.parties,
                peers: sh.peers.clone(),
                mail: sh.mail.clone(),
                timeout: sh.opts.mpc_timeout,
            };
            let prng = match sh.opts.seed {
                Some(s) => rng::derive(s, &[session, me as u64]),
                None => rng::from_entropy(),
            };
            let mut party = Party::new(scheme, chan, prng);
            let out = futures::executor::block_on(async {
                match spec.product_path {
                    ProductPath::Tree => Ok((party.tree_product(&bits).await?, false)),
                    ProductPath::Fanin => party.fanin_product(&bits).await.map(|o| (o.share, o.zero_revealed)),
                }
            });
            let (share, zero) = match out {
                Ok(o) => o,
                Err(e) => {
                    sh.mail.forget(session);
                    return Err(e);
                }
            };
            if zero {
                ::log::warn!("P_{me} session {session}: a fan-in opening was zero");
            }
            share
        }
    };
    let share = match adv.corruption(me, q) {
        Some(d) => f.add(share, d.map_or_else(|| rand::thread_rng().gen_range(1..f.modulus()), |d| d % f.modulus())),
        None => share,
    };
    if adv.drops(me, q) {
        sh.mail.forget(session);
        return Ok(None);
    }
    if !spec.collective {
        sh.mail.forget(session);
        return Ok(Some(Payload::ShareResp { values: vec![share] }));
    }

    let deadline = Instant::now() + sh.opts.timing.window();
    for p in 1..=scheme.parties as PartyId {
        if p != me {
            let msg = WireMessage {
                session,
                party: me,
                payload: Payload::ResultBcast {
                    entries: vec![(me, share)],
                },
            };
            if let Err(e) = sh.peers.send(p, &msg, deadline) {
                ::log::warn!("P_{me}: broadcast to P_{p} failed: {e}");
            }
        }
    }
    let mut seen = vec![Share {
        party: me,
        value: f.elem(share),
        scheme: scheme.scheme,
    }];
    for p in 1..=scheme.parties as PartyId {
        if p == me {
            continue;
        }
        if let Some(Payload::ResultBcast { entries }) = sh.mail.take((session, p, Kind::ResultBcast), deadline) {
            if let Some(&(_, v)) = entries.iter().find(|e| e.0 == p) {
                seen.push(Share {
                    party: p,
                    value: f.elem(v),
                    scheme: scheme.scheme,
                });
            }
        }
    }
    sh.mail.forget(session);
    seen.sort_by_key(|s| s.party);
    let mut v = gateway_decide(&seen, &config, spec.protocol, &GatewayPolicy::default())?;
    if adv.corruption(me, q).is_some() {
        v.decision = match v.decision {
            Decision::Block => Decision::Forward,
            Decision::Forward => Decision::Block,
        };
    }
    Ok(Some(vote_payload(&v)))
}

fn vote_payload(v: &Verdict) -> Payload {
    Payload::Vote {
        decision: v.decision,
        value: v.value,
        m_prime: v.m_prime.min(u16::MAX as usize) as u16,
        malicious: v.malicious,
        suspects: v.suspects.clone(),
    }
}

fn vote_verdict(p: Payload) -> Option<Verdict> {
    match p {
        Payload::Vote {
            decision,
            value,
            m_prime,
            malicious,
            suspects,
        } => Some(Verdict {
            decision,
            value,
            m_prime: m_prime as usize,
            malicious,
            suspects,
            method: crate::detection::Method::Vote,
            influenced: 0,
            fallback: None,
            leakage_warning: false,
        }),
        _ => None,
    }
}

/// Queries servers on behalf of the gateway.
pub struct GatewayClient {
    endpoints: Vec<String>,
    config: FilterConfig,
    spec: GatewaySpec,
    timing: TimingPolicy,
    session: AtomicU64,
    cipher: Arc<dyn FrameCipher>,
}

impl GatewayClient {
    pub fn new(endpoints: Vec<String>, config: FilterConfig, spec: GatewaySpec, timing: TimingPolicy) -> Result<Self> {
        config.validate()?;
        timing.validate()?;
        if endpoints.len() != config.scheme.parties {
            return Err(Error::Config(format!(
                "{} endpoints for {} servers",
                endpoints.len(),
                config.scheme.parties
            )));
        }
        if spec.protocol == EvalMode::Product {
            config.scheme.require_multiplication()?;
        }
        Ok(GatewayClient {
            endpoints,
            config,
            spec,
            timing,
            session: AtomicU64::new(rand::thread_rng().gen::<u32>() as u64),
            cipher: Arc::new(Plaintext),
        })
    }

    pub fn with_cipher(mut self, cipher: Arc<dyn FrameCipher>) -> Self {
        self.cipher = cipher;
        self
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Sends one request to every server in parallel and collects what
    /// comes back before `wait` runs out.
    fn fan_out(&self, payload: Payload, wait: Duration) -> (Vec<(PartyId, Payload)>, usize) {
        let session = self.session.fetch_add(1, Ordering::SeqCst);
        let deadline = Instant::now() + wait;
        let (tx, rx) = mpsc::channel();
        for (i, ep) in self.endpoints.iter().enumerate() {
            let tx = tx.clone();
            let ep = ep.clone();
            let cipher = self.cipher.clone();
            let msg = WireMessage {
                session,
                party: 0,
                payload: payload.clone(),
            };
            thread::spawn(move || {
                let expect = (i + 1) as PartyId;
                let r = (|| -> Result<Payload> {
                    let mut s = connect(&ep, wait)?;
                    write_msg(&mut s, &msg, cipher.as_ref())?;
                    let left = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1));
                    s.set_read_timeout(Some(left))?;
                    let back = read_msg(&mut s, cipher.as_ref())?;
                    if back.session != session || back.party != expect {
                        return Err(Error::Protocol(format!(
                            "{ep} answered as party {} for session {}",
                            back.party, back.session
                        )));
                    }
                    Ok(back.payload)
                })();
                let _ = tx.send((expect, r));
            });
        }
        drop(tx);
        let mut got = Vec::new();
        let mut unreachable = 0;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(left) {
                Ok((p, Ok(Payload::Error { code, text }))) => ::log::warn!("P_{p} error {code}: {text}"),
                Ok((p, Ok(payload))) => got.push((p, payload)),
                Ok((p, Err(e))) => {
                    if matches!(e, Error::Connectivity(_)) {
                        unreachable += 1;
                    }
                    ::log::warn!("P_{p}: {e}");
                }
                Err(_) => break,
            }
        }
        got.sort_by_key(|g| g.0);
        (got, unreachable)
    }

    /// Checks every server holds the same configuration as the gateway.
    /// Returns the parties that answered.
    pub fn sync_config(&self) -> Result<Vec<PartyId>> {
        let digest = self.config.digest();
        let (got, _) = self.fan_out(Payload::ConfigSync { digest }, self.timing.window());
        let mut ok = Vec::new();
        for (p, payload) in got {
            match payload {
                Payload::ConfigSync { digest: d } if d == digest => ok.push(p),
                Payload::ConfigSync { .. } => {
                    return Err(Error::Config(format!("server P_{p} holds a different configuration")))
                }
                other => return Err(Error::Protocol(format!("P_{p} answered config sync with {:?}", other.kind()))),
            }
        }
        if ok.is_empty() {
            return Err(Error::Connectivity("no server reachable".into()));
        }
        Ok(ok)
    }

    /// Queries `addr` and decides. Errors only when no server could be
    /// reached at all; partial answers go through the fail-policy.
    pub fn query(&self, addr: Ipv4Addr) -> Result<Verdict> {
        let policy = self.spec.policy();
        let mut wait = self.timing.window();
        if self.spec.collective {
            wait *= 2;
        }
        let (got, unreachable) = self.fan_out(
            Payload::Query {
                addr,
                flags: self.spec.flags(),
            },
            wait,
        );
        if unreachable == self.endpoints.len() {
            return Err(Error::Connectivity("no server reachable".into()));
        }
        let scheme = self.config.scheme;
        let verdict = if self.spec.collective {
            let votes: Vec<(PartyId, Decision, Verdict)> = got
                .into_iter()
                .filter_map(|(p, payload)| vote_verdict(payload).map(|v| (p, v.decision, v)))
                .collect();
            sim::tally(&votes, &policy)
        } else {
            let responses: Vec<Share> = got
                .into_iter()
                .filter_map(|(p, payload)| match payload {
                    Payload::ShareResp { values } if values.len() == 1 && values[0] < scheme.field.modulus() => {
                        Some(Share {
                            party: p,
                            value: scheme.field.elem(values[0]),
                            scheme: scheme.scheme,
                        })
                    }
                    _ => {
                        ::log::warn!("P_{p}: malformed answer ignored");
                        None
                    }
                })
                .collect();
            gateway_decide(&responses, &self.config, self.spec.protocol, &policy)?
        };
        Ok(verdict)
    }
}

/// Answers client QUERY frames with a VOTE carrying the gateway's verdict.
pub fn run_gateway_service(client: Arc<GatewayClient>, listener: TcpListener) -> Result<()> {
    for conn in listener.incoming() {
        let mut stream = match conn {
            Ok(s) => s,
            Err(e) => {
                ::log::warn!("accept failed: {e}");
                continue;
            }
        };
        let client = client.clone();
        thread::spawn(move || loop {
            let cipher = client.cipher.clone();
            let msg = match read_msg(&mut stream, cipher.as_ref()) {
                Ok(m) => m,
                Err(_) => return,
            };
            let payload = match msg.payload {
                Payload::Query { addr, .. } => match client.query(addr) {
                    Ok(v) => vote_payload(&v),
                    Err(e) => Payload::Error {
                        code: code::PROTOCOL,
                        text: e.to_string(),
                    },
                },
                other => Payload::Error {
                    code: code::UNEXPECTED,
                    text: format!("gateway does not handle {:?}", other.kind()),
                },
            };
            let reply = WireMessage {
                session: msg.session,
                party: 0,
                payload,
            };
            if write_msg(&mut stream, &reply, cipher.as_ref()).is_err() {
                return;
            }
        });
    }
    Ok(())
}

/// Asks a running gateway about `addr`.
pub fn query_gateway(endpoint: &str, addr: Ipv4Addr, timeout: Duration) -> Result<Verdict> {
    let mut s = connect(endpoint, timeout)?;
    s.set_read_timeout(Some(timeout))?;
    let session = rand::thread_rng().gen();
    write_msg(
        &mut s,
        &WireMessage {
            session,
            party: 0,
            payload: Payload::Query { addr, flags: None },
        },
        &Plaintext,
    )?;
    let back = read_msg(&mut s, &Plaintext)?;
    match back.payload {
        Payload::Error { text, .. } => Err(Error::Protocol(format!("gateway: {text}"))),
        p => vote_verdict(p).ok_or_else(|| Error::Protocol("gateway sent an unexpected frame".into())),
    }
}

/// One server as seen by the admin tool.
pub struct RemoteParticipant {
    pub endpoint: String,
    pub token: Vec<u8>,
    pub timeout: Duration,
}

impl RemoteParticipant {
    fn phase(&mut self, phase: InsertPhase, key: u32) -> Result<()> {
        let mut s = connect(&self.endpoint, self.timeout)?;
        s.set_read_timeout(Some(self.timeout))?;
        let msg = WireMessage {
            session: rand::thread_rng().gen(),
            party: 0,
            payload: Payload::Insert {
                phase,
                token: self.token.clone(),
                addr: Ipv4Addr::from(key),
            },
        };
        write_msg(&mut s, &msg, &Plaintext)?;
        match read_msg(&mut s, &Plaintext)?.payload {
            Payload::InsertAck { status: ack::OK } => Ok(()),
            Payload::InsertAck { status: ack::DENIED } => {
                Err(Error::Input(format!("{}: admin token refused", self.endpoint)))
            }
            Payload::InsertAck { status } => Err(Error::Protocol(format!("{}: insert status {status}", self.endpoint))),
            Payload::Error { text, .. } => Err(Error::Protocol(format!("{}: {text}", self.endpoint))),
            other => Err(Error::Protocol(format!("{}: unexpected {:?}", self.endpoint, other.kind()))),
        }
    }
}

impl InsertParticipant for RemoteParticipant {
    fn prepare(&mut self, key: u32) -> Result<()> {
        self.phase(InsertPhase::Prepare, key)
    }
    fn commit(&mut self, key: u32) -> Result<()> {
        self.phase(InsertPhase::Commit, key)
    }
    fn abort(&mut self, key: u32) -> Result<()> {
        self.phase(InsertPhase::Abort, key)
    }
}

/// Adds `addr` on every server, or on none.
pub fn insert_remote(endpoints: &[String], addr: Ipv4Addr, token: &str, timeout: Duration) -> Result<()> {
    let mut ps: Vec<RemoteParticipant> = endpoints
        .iter()
        .map(|e| RemoteParticipant {
            endpoint: e.clone(),
            token: token.as_bytes().to_vec(),
            timeout,
        })
        .collect();
    insert_transaction(addr_key(addr), &mut ps)
}
