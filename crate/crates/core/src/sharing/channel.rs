//! Round-based message passing between the m parties of a protocol.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use futures::future::poll_fn;
use futures::task::noop_waker_ref;
use serde::Serialize;

use super::protocol::Party;
use super::{PartyId, SchemeConfig};
use crate::error::{Error, Result};
use crate::rng;

/// One synchronous round: every party hands in an outbox indexed by
/// recipient (party id - 1) and gets back an inbox indexed by sender.
/// The own slot is ignored on the way out and empty on the way in; an empty
/// vector means nothing is sent to that peer.
pub trait Channel {
    fn party(&self) -> PartyId;
    fn parties(&self) -> usize;
    fn exchange(&mut self, outbox: Vec<Vec<u64>>) -> impl Future<Output = Result<Vec<Vec<u64>>>>;
    /// Marks a round of purely local computation.
    fn local_round(&mut self) {}
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    /// Communication rounds, counted on the busiest party.
    pub rounds: u64,
    pub local_rounds: u64,
    /// Non-empty point-to-point messages.
    pub messages: u64,
    /// Field elements carried by those messages.
    pub elements: u64,
}

impl Traffic {
    pub fn bits(&self, share_bits: u32) -> u64 {
        self.elements * share_bits as u64
    }

    pub fn total_rounds(&self) -> u64 {
        self.rounds + self.local_rounds
    }

    pub fn add(&mut self, other: &Traffic) {
        self.rounds += other.rounds;
        self.local_rounds += other.local_rounds;
        self.messages += other.messages;
        self.elements += other.elements;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MessageRecord {
    pub session: u64,
    pub round: u32,
    pub from: PartyId,
    pub to: PartyId,
    pub values: Vec<u64>,
}

struct Hub {
    m: usize,
    /// queues[to * m + from]
    queues: Vec<VecDeque<Vec<u64>>>,
    done: Vec<bool>,
    exchanges: Vec<u32>,
    locals: Vec<u32>,
    messages: u64,
    elements: u64,
    progress: u64,
    session: u64,
    record: Option<Vec<MessageRecord>>,
}

impl Hub {
    fn new(m: usize, session: u64, record: bool) -> Self {
        Hub {
            m,
            queues: vec![VecDeque::new(); m * m],
            done: vec![false; m],
            exchanges: vec![0; m],
            locals: vec![0; m],
            messages: 0,
            elements: 0,
            progress: 0,
            session,
            record: record.then(Vec::new),
        }
    }
}

pub struct LocalChannel {
    me: usize,
    hub: Rc<RefCell<Hub>>,
}

impl Channel for LocalChannel {
    fn party(&self) -> PartyId {
        (self.me + 1) as PartyId
    }

    fn parties(&self) -> usize {
        self.hub.borrow().m
    }

    async fn exchange(&mut self, outbox: Vec<Vec<u64>>) -> Result<Vec<Vec<u64>>> {
        let me = self.me;
        {
            let mut hub = self.hub.borrow_mut();
            let m = hub.m;
            if outbox.len() != m {
                return Err(Error::Protocol(format!("outbox has {} slots for {m} parties", outbox.len())));
            }
            let round = hub.exchanges[me];
            hub.exchanges[me] += 1;
            hub.progress += 1;
            for (to, msg) in outbox.into_iter().enumerate() {
                if to == me {
                    continue;
                }
                if !msg.is_empty() {
                    hub.messages += 1;
                    hub.elements += msg.len() as u64;
                    let session = hub.session;
                    if let Some(rec) = hub.record.as_mut() {
                        rec.push(MessageRecord {
                            session,
                            round,
                            from: (me + 1) as PartyId,
                            to: (to + 1) as PartyId,
                            values: msg.clone(),
                        });
                    }
                }
                hub.queues[to * m + me].push_back(msg);
            }
        }
        let hub = self.hub.clone();
        poll_fn(move |_cx| {
            let mut hub = hub.borrow_mut();
            let m = hub.m;
            for from in 0..m {
                if from != me && hub.queues[me * m + from].is_empty() {
                    if hub.done[from] {
                        return Poll::Ready(Err(Error::Protocol(format!(
                            "party {} finished while party {} still expected a message",
                            from + 1,
                            me + 1
                        ))));
                    }
                    return Poll::Pending;
                }
            }
            let inbox = (0..m)
                .map(|from| {
                    if from == me {
                        Vec::new()
                    } else {
                        hub.queues[me * m + from].pop_front().unwrap()
                    }
                })
                .collect();
            hub.progress += 1;
            Poll::Ready(Ok(inbox))
        })
        .await
    }

    fn local_round(&mut self) {
        self.hub.borrow_mut().locals[self.me] += 1;
    }
}

/// Runs all parties of a protocol in-process on the current thread.
/// Scheduling is a fixed round-robin, so runs are reproducible from the
/// seed.
pub struct LocalNet {
    seed: u64,
    sessions: u64,
    traffic: Traffic,
    record: bool,
    transcript: Vec<MessageRecord>,
}

impl LocalNet {
    pub fn new(seed: u64) -> Self {
        LocalNet {
            seed,
            sessions: 0,
            traffic: Traffic::default(),
            record: false,
            transcript: Vec::new(),
        }
    }

    /// Keep a copy of every peer message (what a wiretap on all links sees).
    pub fn record_messages(&mut self, on: bool) {
        self.record = on;
    }

    pub fn transcript(&self) -> &[MessageRecord] {
        &self.transcript
    }

    pub fn traffic(&self) -> Traffic {
        self.traffic
    }

    pub fn take_traffic(&mut self) -> Traffic {
        std::mem::take(&mut self.traffic)
    }

    pub fn sessions(&self) -> u64 {
        self.sessions
    }

    /// Starts one session per call. `body` builds the protocol future for
    /// each party; outputs come back ordered by party id.
    pub fn run<T, F, Fut>(&mut self, cfg: &SchemeConfig, mut body: F) -> Result<Vec<T>>
    where
        F: FnMut(Party<LocalChannel>) -> Fut,
        Fut: Future<Output = Result<T>>,
    {
        cfg.validate()?;
        let m = cfg.parties;
        let session = self.sessions;
        self.sessions += 1;
        let hub = Rc::new(RefCell::new(Hub::new(m, session, self.record)));
        let mut futs: Vec<Option<Pin<Box<Fut>>>> = (0..m)
            .map(|i| {
                let chan = LocalChannel { me: i, hub: hub.clone() };
                let rng = rng::derive(self.seed, &[session, (i + 1) as u64]);
                Some(Box::pin(body(Party::new(*cfg, chan, rng))))
            })
            .collect();
        let mut results: Vec<Option<Result<T>>> = (0..m).map(|_| None).collect();
        let mut cx = Context::from_waker(noop_waker_ref());
        let mut remaining = m;
        while remaining > 0 {
            let before = hub.borrow().progress;
            for i in 0..m {
                if let Some(fut) = futs[i].as_mut() {
                    if let Poll::Ready(out) = fut.as_mut().poll(&mut cx) {
                        futs[i] = None;
                        results[i] = Some(out);
                        remaining -= 1;
                        let mut h = hub.borrow_mut();
                        h.done[i] = true;
                        h.progress += 1;
                    }
                }
            }
            if remaining > 0 && hub.borrow().progress == before {
                return Err(Error::Protocol("parties deadlocked waiting on each other".into()));
            }
        }
        let mut h = hub.borrow_mut();
        self.traffic.add(&Traffic {
            rounds: h.exchanges.iter().copied().max().unwrap_or(0) as u64,
            local_rounds: h.locals.iter().copied().max().unwrap_or(0) as u64,
            messages: h.messages,
            elements: h.elements,
        });
        if let Some(rec) = h.record.take() {
            self.transcript.extend(rec);
        }
        results.into_iter().map(|r| r.unwrap()).collect()
    }
}
