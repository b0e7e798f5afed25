//! Deterministic message passing among simulated parties.
//!
//! Messages are keyed by `(round, sender, topic)` at each receiver instead of
//! being ordered by arrival, so parties can run on separate threads while
//! every protocol stays deterministic. The in-memory transport is the
//! default; the TCP transport carries the same envelopes as length-prefixed
//! frames over loopback sockets.

mod codec;
mod tcp;
pub mod topics;
mod trace;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

pub use codec::{decode_f64s, decode_u128s, decode_u64s, encode_f64s, encode_u128s, encode_u64s};
pub use trace::ObservableTrace;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Index of a party in `0..M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct PartyId(pub u16);

impl PartyId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Receiver value marking a broadcast envelope.
pub const BROADCAST: u16 = u16::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub round: u64,
    pub sender: PartyId,
    /// Receiving party, or [`BROADCAST`].
    pub receiver: u16,
    pub topic: u16,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn is_broadcast(&self) -> bool {
        self.receiver == BROADCAST
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    InMemory,
    Tcp,
}

#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub parties: usize,
    pub transport: Transport,
    /// How long `recv` waits before reporting a transport error.
    pub timeout: Duration,
    /// Keep a copy of every envelope for auditing.
    pub record_envelopes: bool,
    /// When set, every send sleeps a pseudo-random few microseconds first,
    /// which perturbs thread interleavings without changing results.
    pub jitter_seed: Option<u64>,
    /// Seed for each party's private randomness (share masks and the like).
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(parties: usize) -> Self {
        Self {
            parties,
            transport: Transport::InMemory,
            timeout: Duration::from_secs(60),
            record_envelopes: true,
            jitter_seed: None,
            seed: 0,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn transport(mut self, transport: Transport) -> Self {
        self.transport = transport;
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn jitter(mut self, seed: u64) -> Self {
        self.jitter_seed = Some(seed);
        self
    }

    pub fn record_envelopes(mut self, on: bool) -> Self {
        self.record_envelopes = on;
        self
    }
}

type Key = (u64, u16, u16);

#[derive(Default)]
struct MailboxState {
    pending: HashMap<Key, Vec<u8>>,
    seen: HashSet<Key>,
    /// First delivery error observed by a transport reader thread.
    fault: Option<Error>,
}

#[derive(Default)]
struct Mailbox {
    state: Mutex<MailboxState>,
    ready: Condvar,
}

impl Mailbox {
    fn deliver(&self, key: Key, payload: Vec<u8>) -> Result<()> {
        let mut st = self.state.lock().expect("mailbox poisoned");
        if !st.seen.insert(key) {
            return Err(Error::Protocol(format!(
                "duplicate message (round {}, sender {}, topic {:#06x})",
                key.0, key.1, key.2
            )));
        }
        st.pending.insert(key, payload);
        drop(st);
        self.ready.notify_all();
        Ok(())
    }

    fn fail(&self, err: Error) {
        let mut st = self.state.lock().expect("mailbox poisoned");
        st.fault.get_or_insert(err);
        drop(st);
        self.ready.notify_all();
    }

    fn take(&self, key: Key, timeout: Duration) -> Result<Vec<u8>> {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().expect("mailbox poisoned");
        loop {
            if let Some(p) = st.pending.remove(&key) {
                return Ok(p);
            }
            if let Some(err) = &st.fault {
                return Err(err.clone());
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Transport(format!(
                    "timed out waiting for round {} from party {} on topic {:#06x}",
                    key.0, key.1, key.2
                )));
            }
            st = self.ready.wait_timeout(st, deadline - now).expect("mailbox poisoned").0;
        }
    }
}

pub(crate) struct Shared {
    parties: usize,
    timeout: Duration,
    mailboxes: Vec<Mailbox>,
    log: Option<Mutex<Vec<Envelope>>>,
    last_round: Mutex<Vec<u64>>,
    sent: Mutex<HashSet<(u64, u16, u16, u16)>>,
}

impl Shared {
    fn claim(&self, env: &Envelope, targets: &[PartyId]) -> Result<()> {
        let mut sent = self.sent.lock().expect("send table poisoned");
        if targets.iter().any(|t| sent.contains(&(env.round, env.sender.0, t.0, env.topic))) {
            return Err(Error::Protocol(format!(
                "duplicate message (round {}, sender {}, topic {:#06x})",
                env.round, env.sender, env.topic
            )));
        }
        for t in targets {
            sent.insert((env.round, env.sender.0, t.0, env.topic));
        }
        Ok(())
    }

    fn check_round(&self, sender: PartyId, round: u64) -> Result<()> {
        let mut last = self.last_round.lock().expect("round table poisoned");
        let slot = &mut last[sender.index()];
        if round < *slot {
            return Err(Error::Protocol(format!("{sender} sent round {round} after round {}", *slot)));
        }
        *slot = round;
        Ok(())
    }

    fn record(&self, env: Envelope) {
        if let Some(log) = &self.log {
            log.lock().expect("envelope log poisoned").push(env);
        }
    }
}

enum Link {
    Memory,
    Tcp(tcp::TcpLinks),
}

/// A set of `M` addressable parties and the wiring between them.
pub struct SimNetwork {
    shared: Arc<Shared>,
    handles: Vec<Option<PartyHandle>>,
    config: NetworkConfig,
}

impl SimNetwork {
    pub fn create(parties: usize, transport: Transport) -> Result<Self> {
        Self::with_config(NetworkConfig::new(parties).transport(transport))
    }

    pub fn with_config(config: NetworkConfig) -> Result<Self> {
        let m = config.parties;
        if m == 0 || m >= BROADCAST as usize {
            return Err(Error::Parameter(format!("party count must be in 1..{BROADCAST}, got {m}")));
        }
        let shared = Arc::new(Shared {
            parties: m,
            timeout: config.timeout,
            mailboxes: (0..m).map(|_| Mailbox::default()).collect(),
            log: config.record_envelopes.then(|| Mutex::new(Vec::new())),
            last_round: Mutex::new(vec![0; m]),
            sent: Mutex::new(HashSet::new()),
        });
        let mut links: Vec<Link> = match config.transport {
            Transport::InMemory => (0..m).map(|_| Link::Memory).collect(),
            Transport::Tcp => tcp::connect_mesh(&shared)?.into_iter().map(Link::Tcp).collect(),
        };
        let handles = (0..m)
            .map(|i| {
                Some(PartyHandle {
                    id: PartyId(i as u16),
                    shared: Arc::clone(&shared),
                    link: Arc::new(std::mem::replace(&mut links[i], Link::Memory)),
                    round: 0,
                    trace: ObservableTrace::new(),
                    jitter: config.jitter_seed.map(|s| SeededRng::new(s, i as u64)),
                    rng: SeededRng::new(config.seed, PRIVATE_STREAM_BASE + i as u64),
                })
            })
            .collect();
        Ok(Self { shared, handles, config })
    }

    pub fn parties(&self) -> usize {
        self.shared.parties
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Hands out every party handle; each may be moved to its own thread.
    pub fn take_handles(&mut self) -> Vec<PartyHandle> {
        self.handles.iter_mut().map(|h| h.take().expect("party handles already taken")).collect()
    }

    /// Envelopes sent so far, sorted by `(round, sender, receiver, topic)`.
    pub fn envelopes(&self) -> Vec<Envelope> {
        let mut out = self
            .shared
            .log
            .as_ref()
            .map(|l| l.lock().expect("envelope log poisoned").clone())
            .unwrap_or_default();
        out.sort_by_key(|e| (e.round, e.sender, e.receiver, e.topic));
        out
    }

    pub fn envelope_count(&self, topic: u16) -> usize {
        self.shared
            .log
            .as_ref()
            .map(|l| l.lock().expect("envelope log poisoned").iter().filter(|e| e.topic == topic).count())
            .unwrap_or(0)
    }

    pub fn clear_envelopes(&self) {
        if let Some(l) = &self.shared.log {
            l.lock().expect("envelope log poisoned").clear();
        }
    }

    /// Runs `body` once per party on its own thread and collects the results
    /// in party order. The first error (by party index) is returned.
    pub fn run<R, F>(&mut self, body: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&mut PartyHandle) -> Result<R> + Sync,
    {
        let mut handles = self.take_handles();
        let results: Vec<Result<R>> = std::thread::scope(|scope| {
            let body = &body;
            let joins: Vec<_> = handles.iter_mut().map(|h| scope.spawn(move || body(h))).collect();
            joins.into_iter().map(|j| j.join().expect("party thread panicked")).collect()
        });
        for (slot, h) in self.handles.iter_mut().zip(handles) {
            *slot = Some(h);
        }
        results.into_iter().collect()
    }

    /// Observable traces of every party, in party order.
    pub fn traces(&self) -> Vec<ObservableTrace> {
        self.handles.iter().map(|h| h.as_ref().map(|h| h.trace.clone()).unwrap_or_default()).collect()
    }
}

/// One party's endpoint: identity, round counter, links and public trace.
pub struct PartyHandle {
    id: PartyId,
    shared: Arc<Shared>,
    link: Arc<Link>,
    round: u64,
    trace: ObservableTrace,
    jitter: Option<SeededRng>,
    rng: SeededRng,
}

/// Private party streams live far away from the small stream ids protocols
/// use for agreed-upon randomness.
const PRIVATE_STREAM_BASE: u64 = 1 << 48;

impl PartyHandle {
    /// The party's private randomness.
    pub fn rng(&mut self) -> &mut SeededRng {
        &mut self.rng
    }

    /// Broadcasts `payload` and returns every party's payload for this
    /// `(round, topic)`, indexed by party. The caller's own entry is its
    /// payload.
    pub fn all_gather(&mut self, round: u64, topic: u16, payload: Vec<u8>) -> Result<Vec<Vec<u8>>> {
        self.broadcast(round, topic, payload.clone())?;
        let me = self.id;
        (0..self.parties() as u16)
            .map(PartyId)
            .map(|p| {
                if p == me {
                    if self.parties() == 1 {
                        self.recv(round, p, topic)?;
                    }
                    Ok(payload.clone())
                } else {
                    self.recv(round, p, topic)
                }
            })
            .collect()
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn parties(&self) -> usize {
        self.shared.parties
    }

    pub fn peers(&self) -> impl Iterator<Item = PartyId> + '_ {
        (0..self.shared.parties as u16).map(PartyId).filter(move |p| *p != self.id)
    }

    /// Allocates the next round number. Parties running the same protocol
    /// allocate rounds in the same order, so their counters agree.
    pub fn next_round(&mut self) -> u64 {
        self.round += 1;
        self.round
    }

    pub fn current_round(&self) -> u64 {
        self.round
    }

    pub fn send(&mut self, round: u64, to: PartyId, topic: u16, payload: Vec<u8>) -> Result<()> {
        if to.index() >= self.shared.parties {
            return Err(Error::Protocol(format!("no such party {to}")));
        }
        self.shared.check_round(self.id, round)?;
        self.pause();
        let env = Envelope { round, sender: self.id, receiver: to.0, topic, payload };
        self.dispatch(&env, &[to])?;
        self.shared.record(env);
        Ok(())
    }

    /// Sends to every other party; with a single party the message loops
    /// back to the sender.
    pub fn broadcast(&mut self, round: u64, topic: u16, payload: Vec<u8>) -> Result<()> {
        self.shared.check_round(self.id, round)?;
        self.pause();
        let targets: Vec<PartyId> =
            if self.shared.parties == 1 { vec![self.id] } else { self.peers().collect() };
        let env = Envelope { round, sender: self.id, receiver: BROADCAST, topic, payload };
        self.dispatch(&env, &targets)?;
        self.shared.record(env);
        Ok(())
    }

    /// Blocks until the message keyed `(round, from, topic)` has arrived.
    pub fn recv(&self, round: u64, from: PartyId, topic: u16) -> Result<Vec<u8>> {
        self.recv_timeout(round, from, topic, self.shared.timeout)
    }

    pub fn recv_timeout(&self, round: u64, from: PartyId, topic: u16, timeout: Duration) -> Result<Vec<u8>> {
        self.shared.mailboxes[self.id.index()].take((round, from.0, topic), timeout)
    }

    /// Records a value every party learns.
    pub fn publish(&mut self, label: impl Into<String>, values: Vec<f64>) {
        self.trace.push(label, values);
    }

    pub fn trace(&self) -> &ObservableTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> ObservableTrace {
        std::mem::take(&mut self.trace)
    }

    fn dispatch(&self, env: &Envelope, targets: &[PartyId]) -> Result<()> {
        self.shared.claim(env, targets)?;
        match &*self.link {
            Link::Memory => {
                for t in targets {
                    self.shared.mailboxes[t.index()]
                        .deliver((env.round, env.sender.0, env.topic), env.payload.clone())?;
                }
                Ok(())
            }
            Link::Tcp(links) => {
                for t in targets {
                    if *t == self.id {
                        self.shared.mailboxes[t.index()]
                            .deliver((env.round, env.sender.0, env.topic), env.payload.clone())?;
                    } else {
                        links.send(*t, env)?;
                    }
                }
                Ok(())
            }
        }
    }

    fn pause(&mut self) {
        if let Some(rng) = &mut self.jitter {
            let micros = rng.below(200) as u64;
            std::thread::sleep(Duration::from_micros(micros));
        }
    }
}
