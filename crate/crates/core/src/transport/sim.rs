//! Deterministic network simulator.
//!
//! Time is virtual (microseconds) and every random choice comes from the
//! scenario seed, so a scenario replays to a byte-identical transcript.
//! Each query runs to completion before the next one starts. Links are
//! FIFO: a message never overtakes an earlier one on the same link.
//! Gateway links may drop messages; server-to-server links are reliable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::adversary::{AdversarySpec, Behavior};
use super::wire::{self, Payload, WireMessage, FLAG_COLLECTIVE, FLAG_FANIN, FLAG_PRODUCT};
use crate::bloom::{self, HashModulusRule};
use crate::detection::{binomial, majority_agreement, Decision, DecisionPath, FailPolicy, Method};
use crate::error::{Error, Result};
use crate::firewall::{
    eval_product_party, eval_sum_server, firewall_init, gateway_decide, EvalMode, Fallback, FilterConfig,
    FirewallState, GatewayPolicy, ProductPath, Verdict,
};
use crate::modmath::{Field, DEFAULT_MODULUS};
use crate::rng::{self, ProtocolRng};
use crate::sharing::{LocalNet, PartyId, SchemeConfig, SchemeKind, Share};

/// Bits of address carried by a QUERY.
pub const ADDR_BITS: u64 = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingPolicy {
    /// How long the gateway waits for responses.
    pub window_ms: f64,
    /// Uniform per-message link delay, [min, max].
    pub delay_ms: [f64; 2],
    /// Chance that a gateway link loses a message.
    pub drop_prob: f64,
}

impl Default for TimingPolicy {
    fn default() -> Self {
        TimingPolicy {
            window_ms: 50.0,
            delay_ms: [1.0, 5.0],
            drop_prob: 0.0,
        }
    }
}

impl TimingPolicy {
    /// Window used by the TCP runtime.
    pub fn networked() -> Self {
        TimingPolicy {
            window_ms: 250.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_ms.is_finite() && self.window_ms > 0.0) {
            return Err(Error::Config(format!("response window must be positive, got {} ms", self.window_ms)));
        }
        let [lo, hi] = self.delay_ms;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!("bad delay range [{lo}, {hi}] ms")));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::Config(format!("drop probability {} not in [0, 1)", self.drop_prob)));
        }
        Ok(())
    }

    pub fn window(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.window_ms / 1000.0)
    }

    fn window_us(&self) -> u64 {
        (self.window_ms * 1000.0).round() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    #[serde(default = "shamir")]
    pub kind: SchemeKind,
    pub parties: usize,
    /// Ignored for additive sharing.
    #[serde(default)]
    pub threshold: Option<usize>,
    #[serde(default)]
    pub modulus: Option<u64>,
}

fn shamir() -> SchemeKind {
    SchemeKind::Shamir
}

impl SchemeSpec {
    pub fn build(&self) -> Result<SchemeConfig> {
        let field = Field::new(self.modulus.unwrap_or(DEFAULT_MODULUS))?;
        match self.kind {
            SchemeKind::Shamir => {
                let t = self
                    .threshold
                    .ok_or_else(|| Error::Config("Shamir sharing needs a threshold".into()))?;
                SchemeConfig::shamir(self.parties, t, field)
            }
            SchemeKind::Additive => SchemeConfig::additive(self.parties, field),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BloomSpec {
    /// Capacity; the blacklist size when absent.
    pub eta: Option<u64>,
    pub fp: f64,
    /// Seed for the hash functions; the scenario seed when absent.
    pub hash_seed: Option<u64>,
    pub hash_rule: HashModulusRule,
}

impl Default for BloomSpec {
    fn default() -> Self {
        BloomSpec {
            eta: None,
            fp: 0.01,
            hash_seed: None,
            hash_rule: HashModulusRule::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySpec {
    pub protocol: EvalMode,
    pub product_path: ProductPath,
    pub fail_policy: FailPolicy,
    pub whitelist: bool,
    pub decision_path: DecisionPath,
    /// Servers exchange results and vote instead of answering directly.
    pub collective: bool,
}

impl GatewaySpec {
    pub fn policy(&self) -> GatewayPolicy {
        GatewayPolicy {
            fail_policy: self.fail_policy,
            whitelist: self.whitelist,
            path: self.decision_path,
        }
    }

    /// QUERY flags byte; None for a plain sum query.
    pub fn flags(&self) -> Option<u8> {
        let mut f = 0;
        if self.protocol == EvalMode::Product {
            f |= FLAG_PRODUCT;
            if self.product_path == ProductPath::Fanin {
                f |= FLAG_FANIN;
            }
        }
        if self.collective {
            f |= FLAG_COLLECTIVE;
        }
        (f != 0).then_some(f)
    }

    pub fn from_flags(flags: Option<u8>) -> Self {
        let f = flags.unwrap_or(0);
        GatewaySpec {
            protocol: if f & FLAG_PRODUCT != 0 { EvalMode::Product } else { EvalMode::Sum },
            product_path: if f & FLAG_FANIN != 0 { ProductPath::Fanin } else { ProductPath::Tree },
            collective: f & FLAG_COLLECTIVE != 0,
            ..Default::default()
        }
    }
}

/// A simulation run, as read from a TOML scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub bloom: BloomSpec,
    #[serde(default)]
    pub blacklist: Vec<Ipv4Addr>,
    /// Extra random addresses appended to the blacklist.
    #[serde(default)]
    pub random_blacklist: usize,
    #[serde(default)]
    pub probes: Vec<Ipv4Addr>,
    #[serde(default)]
    pub random_probes: usize,
    /// Also probe the first this-many blacklist entries.
    #[serde(default)]
    pub probe_members: usize,
    #[serde(default)]
    pub gateway: GatewaySpec,
    #[serde(default)]
    pub timing: TimingPolicy,
    #[serde(default)]
    pub adversary: AdversarySpec,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        let scheme = self.scheme.build()?;
        for c in &self.adversary.corrupt {
            if c.party == 0 || c.party as usize > scheme.parties {
                return Err(Error::Config(format!("adversary names unknown party {}", c.party)));
            }
        }
        if self.gateway.protocol == EvalMode::Product {
            scheme.require_multiplication()?;
        }
        Ok(())
    }

    pub fn blacklist_keys(&self) -> Vec<u32> {
        let mut keys: Vec<u32> = self.blacklist.iter().map(|&a| bloom::addr_key(a)).collect();
        let mut g = rng::derive(self.seed, &[LABEL_BLACKLIST]);
        keys.extend((0..self.random_blacklist).map(|_| g.gen::<u32>()));
        keys
    }

    pub fn probe_keys(&self, blacklist: &[u32]) -> Vec<u32> {
        let mut keys: Vec<u32> = blacklist.iter().take(self.probe_members).copied().collect();
        keys.extend(self.probes.iter().map(|&a| bloom::addr_key(a)));
        let mut g = rng::derive(self.seed, &[LABEL_PROBES]);
        keys.extend((0..self.random_probes).map(|_| g.gen::<u32>()));
        keys
    }

    pub fn filter_config(&self, blacklist_len: usize) -> Result<FilterConfig> {
        let eta = self.bloom.eta.unwrap_or(blacklist_len.max(1) as u64);
        let bloom = bloom::derive_params_with(
            eta,
            self.bloom.fp,
            self.bloom.hash_seed.unwrap_or(self.seed),
            self.bloom.hash_rule,
        )?;
        FilterConfig::new(self.scheme.build()?, bloom)
    }
}

const LABEL_BLACKLIST: u64 = 1;
const LABEL_PROBES: u64 = 2;
const LABEL_INIT: u64 = 3;
const LABEL_LINKS: u64 = 4;
const LABEL_ADVERSARY: u64 = 5;
const LABEL_MPC: u64 = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    /// Protocol payload: addresses and share values only.
    pub payload_bits: u64,
    /// Every encoded frame byte, headers and checksums included.
    pub wire_bytes: u64,
    pub messages: u64,
    pub rounds: u64,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.payload_bits += o.payload_bits;
        self.wire_bytes += o.wire_bytes;
        self.messages += o.messages;
        self.rounds += o.rounds;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryOutcome {
    pub index: usize,
    pub addr: Ipv4Addr,
    pub verdict: Verdict,
    /// Subset reconstructions the gateway performed.
    pub reveals: u128,
    /// Parties whose answer reached the gateway in time.
    pub responders: Vec<PartyId>,
    pub counters: Counters,
    /// What a plaintext filter over the same blacklist says. Kept out of
    /// the transcript.
    pub oracle: bool,
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub queries: Vec<QueryOutcome>,
    pub totals: Counters,
    /// JSON lines.
    pub transcript: Vec<String>,
}

impl SimReport {
    pub fn transcript_text(&self) -> String {
        let mut s = String::new();
        for l in &self.transcript {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn transcript_hash(&self) -> String {
        hex::encode(Sha256::digest(self.transcript_text().as_bytes()))
    }

    /// One line per query plus a totals line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for q in &self.queries {
            let v = &q.verdict;
            let decision = match v.decision {
                Decision::Block => "BLOCK",
                Decision::Forward => "FORWARD",
            };
            let value = v.value.map_or("none".to_string(), |x| x.to_string());
            let mut line = format!("query {} {}: {decision}, value {value}, m' = {}", q.index, q.addr, v.m_prime);
            match v.method {
                Method::Enumeration => line.push_str(&format!(", {} combinations", q.reveals)),
                Method::BerlekampWelch => line.push_str(", decoded"),
                Method::Vote => line.push_str(", by vote"),
                Method::Sum => {}
            }
            match v.suspects.as_slice() {
                [] if v.malicious => line.push_str(", tampering detected"),
                [] => {}
                [p] => line.push_str(&format!(", suspect: P_{p}")),
                ps => {
                    let names: Vec<String> = ps.iter().map(|p| format!("P_{p}")).collect();
                    line.push_str(&format!(", suspects: {}", names.join(", ")));
                }
            }
            if let Some(f) = v.fallback {
                line.push_str(&format!(", fail-policy ({f:?})"));
            }
            if v.leakage_warning {
                line.push_str(", zero opened");
            }
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&format!(
            "{} queries, {} payload bits, {} wire bytes, {} rounds\n",
            self.queries.len(),
            self.totals.payload_bits,
            self.totals.wire_bytes,
            self.totals.rounds
        ));
        out
    }
}

struct Event {
    at: u64,
    seq: u64,
    body: Value,
}

/// Event log plus link model for one query.
struct Links<'a> {
    timing: &'a TimingPolicy,
    rng: ProtocolRng,
    fifo: HashMap<(PartyId, PartyId), u64>,
    events: Vec<Event>,
    seq: u64,
    counters: Counters,
    query: usize,
}

impl Links<'_> {
    fn log(&mut self, at: u64, body: Value) {
        self.events.push(Event { at, seq: self.seq, body });
        self.seq += 1;
    }

    fn delay(&mut self) -> u64 {
        let [lo, hi] = self.timing.delay_ms;
        let d = if lo == hi { lo } else { self.rng.gen_range(lo..=hi) };
        (d * 1000.0).round() as u64
    }

    /// Sends one frame; returns the delivery time unless it was lost.
    fn send(&mut self, at: u64, to: PartyId, msg: &WireMessage, payload_bits: u64, lossy: bool) -> Result<Option<u64>> {
        let frame = wire::encode(msg)?;
        self.counters.payload_bits += payload_bits;
        self.counters.wire_bytes += frame.len() as u64;
        self.counters.messages += 1;
        let from = msg.party;
        let kind = format!("{:?}", msg.payload.kind());
        self.log(
            at,
            json!({"q": self.query, "ev": "send", "from": from, "to": to, "kind": kind,
                   "bytes": frame.len(), "frame": hex::encode(&frame)}),
        );
        if lossy && self.timing.drop_prob > 0.0 && self.rng.gen_bool(self.timing.drop_prob) {
            self.log(at, json!({"q": self.query, "ev": "lost", "from": from, "to": to, "kind": kind}));
            return Ok(None);
        }
        let d = self.delay();
        let link = self.fifo.entry((from, to)).or_insert(0);
        let arrive = (at + d).max(*link);
        *link = arrive;
        self.log(arrive, json!({"q": self.query, "ev": "deliver", "from": from, "to": to, "kind": kind}));
        Ok(Some(arrive))
    }

    fn view(&mut self, at: u64, party: PartyId, what: &str, values: Value) {
        self.log(at, json!({"q": self.query, "ev": "view", "party": party, "what": what, "values": values}));
    }
}

struct Setup {
    config: FilterConfig,
    states: Vec<FirewallState>,
    probes: Vec<u32>,
    oracle: bloom::BloomFilter,
}

/// Runs a scenario to completion.
pub fn simulate(sc: &Scenario) -> Result<SimReport> {
    sc.validate()?;
    let blacklist = sc.blacklist_keys();
    let config = sc.filter_config(blacklist.len())?;
    let (mut states, digest) = firewall_init(&blacklist, &config, &mut rng::derive(sc.seed, &[LABEL_INIT]))?;
    let oracle = bloom::build_filter(&blacklist, &config.bloom);
    let mut adv_rng = rng::derive(sc.seed, &[LABEL_ADVERSARY]);
    let n = config.scheme.field.modulus();
    // Permanent tampering happens once, before any query.
    for c in &sc.adversary.corrupt {
        if let (Behavior::ModifyStoredBits { indices }, super::adversary::Schedule::Permanent) = (&c.behavior, &c.schedule) {
            tamper(&mut states[c.party as usize - 1], indices, n, &mut adv_rng)?;
        }
    }
    let setup = Setup {
        probes: sc.probe_keys(&blacklist),
        config,
        states,
        oracle,
    };
    let scheme = setup.config.scheme;
    let mut transcript = vec![json!({
        "ev": "setup",
        "scheme": scheme.scheme,
        "m": scheme.parties,
        "t": scheme.threshold,
        "modulus": n,
        "beta": setup.config.bloom.beta,
        "kappa": setup.config.bloom.kappa,
        "digest": hex::encode(digest),
        "probes": setup.probes.len(),
        "malicious": sc.adversary.malicious_count(),
    })
    .to_string()];

    let mut links_rng = rng::derive(sc.seed, &[LABEL_LINKS]);
    let mut clock = 0u64;
    let mut queries = Vec::with_capacity(setup.probes.len());
    let mut totals = Counters::default();
    for (q, &key) in setup.probes.iter().enumerate() {
        let mut links = Links {
            timing: &sc.timing,
            rng: rng::derive(links_rng.gen(), &[q as u64]),
            fifo: HashMap::new(),
            events: Vec::new(),
            seq: 0,
            counters: Counters::default(),
            query: q,
        };
        if q == 0 {
            for p in 1..=scheme.parties as PartyId {
                if sc.adversary.records(p) {
                    let stored = setup.states[p as usize - 1].shares().values().to_vec();
                    links.view(clock, p, "stored", json!(stored));
                }
            }
        }
        let outcome = run_query(sc, &setup, q, key, clock, &mut links, &mut adv_rng)?;
        let mut events = std::mem::take(&mut links.events);
        events.sort_by_key(|e| (e.at, e.seq));
        clock = events.last().map_or(clock, |e| e.at) + 1000;
        for e in events {
            let mut body = e.body;
            body["t"] = json!(e.at);
            transcript.push(body.to_string());
        }
        totals.add(&outcome.counters);
        queries.push(outcome);
    }
    Ok(SimReport {
        queries,
        totals,
        transcript,
    })
}

fn tamper(state: &mut FirewallState, indices: &[usize], n: u64, rng: &mut ProtocolRng) -> Result<()> {
    for &j in indices {
        let old = state.shares().get(j.min(state.shares().len().saturating_sub(1)));
        let mut v = rng.gen_range(0..n);
        if v == old {
            v = (v + 1) % n;
        }
        state.overwrite_share(j, v)?;
    }
    Ok(())
}

fn nonzero(delta: Option<u64>, n: u64, rng: &mut ProtocolRng) -> u64 {
    match delta {
        Some(d) => d % n,
        None => rng.gen_range(1..n),
    }
}

fn run_query(
    sc: &Scenario,
    setup: &Setup,
    q: usize,
    key: u32,
    t0: u64,
    links: &mut Links,
    adv_rng: &mut ProtocolRng,
) -> Result<QueryOutcome> {
    let cfg = &setup.config;
    let scheme = cfg.scheme;
    let m = scheme.parties;
    let field = scheme.field;
    let ell = scheme.share_bits() as u64;
    let gw = sc.gateway;
    let policy = gw.policy();
    let mode = gw.protocol;
    let window = sc.timing.window_us();
    let addr = Ipv4Addr::from(key);
    let adv = &sc.adversary;

    // States as each server holds them during this query.
    let mut local: Vec<std::borrow::Cow<FirewallState>> = setup.states.iter().map(std::borrow::Cow::Borrowed).collect();
    for c in &adv.corrupt {
        if let (Behavior::ModifyStoredBits { indices }, super::adversary::Schedule::Queries(list)) = (&c.behavior, &c.schedule) {
            if list.contains(&q) {
                tamper(local[c.party as usize - 1].to_mut(), indices, field.modulus(), adv_rng)?;
            }
        }
    }

    links.log(t0, json!({"q": q, "ev": "query", "addr": addr.to_string()}));
    let mut arrivals: Vec<Option<u64>> = vec![None; m];
    for i in 0..m {
        let p = (i + 1) as PartyId;
        let msg = WireMessage {
            session: q as u64,
            party: 0,
            payload: Payload::Query { addr, flags: gw.flags() },
        };
        arrivals[i] = links.send(t0, p, &msg, ADDR_BITS, true)?;
        if let (Some(a), true) = (arrivals[i], adv.records(p)) {
            links.view(a, p, "query", json!(addr.to_string()));
        }
    }

    // Each server's result share and the time it has it.
    let mut results: Vec<Option<(u64, u64)>> = vec![None; m];
    let mut leaked = false;
    let mut rounds = 1u64;
    match mode {
        EvalMode::Sum => {
            for i in 0..m {
                if let Some(a) = arrivals[i] {
                    results[i] = Some((eval_sum_server(key, &local[i]).value.value(), a));
                }
            }
        }
        EvalMode::Product => {
            if arrivals.iter().any(Option::is_none) {
                let at = arrivals.iter().flatten().max().copied().unwrap_or(t0);
                links.log(at, json!({"q": q, "ev": "mpc_abort", "reason": "a server never saw the query"}));
            } else {
                let start = arrivals.iter().flatten().max().copied().unwrap();
                let mut net = LocalNet::new(rng::derive(sc.seed, &[LABEL_MPC, q as u64]).gen());
                net.record_messages(true);
                let path = gw.product_path;
                let out = net.run(&scheme, |mut party| {
                    let st: &FirewallState = &local[party.index()];
                    async move { eval_product_party(&mut party, key, st, path).await }
                })?;
                let traffic = net.traffic();
                rounds += traffic.rounds;
                // Replay the recorded messages round by round.
                let mut by_round: BTreeMap<u32, Vec<&crate::sharing::channel::MessageRecord>> = BTreeMap::new();
                for r in net.transcript() {
                    by_round.entry(r.round).or_default().push(r);
                }
                let mut now = start;
                for (_, msgs) in by_round {
                    let mut end = now;
                    for r in msgs {
                        let msg = WireMessage {
                            session: q as u64,
                            party: r.from,
                            payload: Payload::ShareResp { values: r.values.clone() },
                        };
                        let at = links.send(now, r.to, &msg, r.values.len() as u64 * ell, false)?.unwrap();
                        if adv.records(r.to) {
                            links.view(at, r.to, "mpc", json!(r.values));
                        }
                        end = end.max(at);
                    }
                    now = end;
                }
                for (i, (share, zero)) in out.into_iter().enumerate() {
                    leaked |= zero;
                    results[i] = Some((share, now));
                }
            }
        }
    }

    // What each server puts on the wire.
    let mut sent: Vec<Option<(u64, u64)>> = results.clone();
    for i in 0..m {
        let p = (i + 1) as PartyId;
        if let (Some((v, at)), Some(delta)) = (sent[i], adv.corruption(p, q)) {
            sent[i] = Some((field.add(v, nonzero(delta, field.modulus(), adv_rng)), at));
        }
        if adv.drops(p, q) {
            sent[i] = None;
        }
    }

    let deadline;
    let (mut verdict, responders, reveals) = if gw.collective {
        rounds += 1;
        deadline = t0 + 2 * window;
        collective(q, cfg, mode, &policy, &results, &sent, links, window, deadline, adv)?
    } else {
        deadline = t0 + window;
        let mut responses = Vec::new();
        for i in 0..m {
            let p = (i + 1) as PartyId;
            let Some((v, at)) = sent[i] else { continue };
            let msg = WireMessage {
                session: q as u64,
                party: p,
                payload: Payload::ShareResp { values: vec![v] },
            };
            match links.send(at, 0, &msg, ell, true)? {
                Some(arr) if arr <= deadline => responses.push(Share {
                    party: p,
                    value: field.elem(v),
                    scheme: scheme.scheme,
                }),
                Some(arr) => links.log(arr, json!({"q": q, "ev": "late", "from": p})),
                None => {}
            }
        }
        let v = gateway_decide(&responses, cfg, mode, &policy)?;
        let reveals = if v.method == Method::Enumeration && responses.len() >= scheme.threshold {
            binomial(responses.len() as u64, scheme.threshold as u64)
        } else {
            0
        };
        (v, responses.iter().map(|r| r.party).collect::<Vec<_>>(), reveals)
    };
    verdict.leakage_warning |= leaked;
    links.counters.rounds = rounds;
    links.log(
        deadline,
        json!({"q": q, "ev": "verdict", "addr": addr.to_string(), "decision": verdict.decision,
               "value": verdict.value, "m_prime": verdict.m_prime, "method": verdict.method,
               "reveals": reveals as u64, "influenced": verdict.influenced, "malicious": verdict.malicious,
               "suspects": verdict.suspects, "fallback": verdict.fallback, "leakage_warning": verdict.leakage_warning,
               "payload_bits": links.counters.payload_bits, "wire_bytes": links.counters.wire_bytes,
               "rounds": rounds}),
    );
    Ok(QueryOutcome {
        index: q,
        addr,
        verdict,
        reveals,
        responders,
        counters: links.counters,
        oracle: setup.oracle.contains(key),
    })
}

/// Servers broadcast their result shares, decide locally and vote.
#[allow(clippy::too_many_arguments)]
fn collective(
    q: usize,
    cfg: &FilterConfig,
    mode: EvalMode,
    policy: &GatewayPolicy,
    results: &[Option<(u64, u64)>],
    sent: &[Option<(u64, u64)>],
    links: &mut Links,
    window: u64,
    deadline: u64,
    adv: &AdversarySpec,
) -> Result<(Verdict, Vec<PartyId>, u128)> {
    let scheme = cfg.scheme;
    let m = scheme.parties;
    let field = scheme.field;
    let ell = scheme.share_bits() as u64;
    let share = |p: PartyId, v: u64| Share {
        party: p,
        value: field.elem(v),
        scheme: scheme.scheme,
    };
    // inbox[j]: (party, value, arrival)
    let mut inbox: Vec<Vec<(PartyId, u64, u64)>> = vec![Vec::new(); m];
    for i in 0..m {
        let p = (i + 1) as PartyId;
        let Some((v, at)) = sent[i] else { continue };
        for j in 0..m {
            if j == i {
                continue;
            }
            let msg = WireMessage {
                session: q as u64,
                party: p,
                payload: Payload::ResultBcast { entries: vec![(p, v)] },
            };
            let arr = links.send(at, (j + 1) as PartyId, &msg, ell, false)?.unwrap();
            if adv.records((j + 1) as PartyId) {
                links.view(arr, (j + 1) as PartyId, "bcast", json!([v]));
            }
            inbox[j].push((p, v, arr));
        }
    }
    let mut votes: Vec<(PartyId, Decision, Verdict)> = Vec::new();
    for j in 0..m {
        let p = (j + 1) as PartyId;
        let Some((own, ready)) = results[j] else { continue };
        if adv.drops(p, q) {
            continue;
        }
        let until = ready + window;
        let mut seen = vec![share(p, own)];
        let mut decided_at = ready;
        for &(from, v, arr) in &inbox[j] {
            if arr <= until {
                seen.push(share(from, v));
                decided_at = decided_at.max(arr);
            }
        }
        if seen.len() < m {
            decided_at = until;
        }
        seen.sort_by_key(|s| s.party);
        let mut local = gateway_decide(&seen, cfg, mode, policy)?;
        if adv.corruption(p, q).is_some() {
            local.decision = match local.decision {
                Decision::Block => Decision::Forward,
                Decision::Forward => Decision::Block,
            };
        }
        let msg = WireMessage {
            session: q as u64,
            party: p,
            payload: Payload::Vote {
                decision: local.decision,
                value: local.value,
                m_prime: local.m_prime as u16,
                malicious: local.malicious,
                suspects: local.suspects.clone(),
            },
        };
        match links.send(decided_at, 0, &msg, 0, true)? {
            Some(arr) if arr <= deadline => votes.push((p, local.decision, local)),
            Some(arr) => links.log(arr, json!({"q": q, "ev": "late", "from": p})),
            None => {}
        }
    }
    Ok((tally(&votes, policy), votes.iter().map(|v| v.0).collect(), 0))
}

/// The gateway's view of a collective round: a vote over server decisions.
pub fn tally(votes: &[(PartyId, Decision, Verdict)], policy: &GatewayPolicy) -> Verdict {
    if votes.is_empty() {
        return Verdict::fail(policy, 0, Method::Vote, Fallback::InsufficientShares);
    }
    let decisions: Vec<Decision> = votes.iter().map(|v| v.1).collect();
    let agreement = majority_agreement(&decisions, policy.fail_policy);
    let mut suspects: BTreeSet<PartyId> = agreement.dissenters.iter().map(|&i| votes[i as usize - 1].0).collect();
    let mut reported: BTreeMap<PartyId, usize> = BTreeMap::new();
    for (_, _, v) in votes {
        for &s in &v.suspects {
            *reported.entry(s).or_default() += 1;
        }
    }
    suspects.extend(reported.into_iter().filter(|&(_, c)| 2 * c > votes.len()).map(|(s, _)| s));
    let mut values: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, d, v) in votes {
        if *d == agreement.decision {
            if let Some(x) = v.value {
                *values.entry(x).or_default() += 1;
            }
        }
    }
    let value = values.into_iter().max_by_key(|&(x, c)| (c, std::cmp::Reverse(x))).map(|(x, _)| x);
    Verdict {
        decision: agreement.decision,
        value,
        m_prime: votes.len(),
        malicious: !suspects.is_empty() || votes.iter().any(|v| v.2.malicious),
        suspects: suspects.into_iter().collect(),
        method: Method::Vote,
        influenced: 0,
        fallback: (!agreement.majority).then_some(Fallback::NoMajority),
        leakage_warning: false,
    }
}
