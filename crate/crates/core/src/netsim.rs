//! Simulated network between sensor nodes, driven by virtual time.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ptrack::SensorId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("drop probability {0} outside [0, 1]")]
    InvalidDropProb(f64),
    #[error("latency and jitter must be finite and non-negative")]
    InvalidLatency,
    #[error("collection window must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("unknown node {0}")]
    UnknownNode(SensorId),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    /// Fixed part of the latency in seconds.
    pub latency: f64,
    /// Width of the uniform extra delay in seconds.
    pub jitter: f64,
    pub drop_prob: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { latency: 0.02, jitter: 0.02, drop_prob: 0.0 }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(NetError::InvalidDropProb(self.drop_prob));
        }
        if !(self.latency >= 0.0 && self.jitter >= 0.0 && self.latency.is_finite() && self.jitter.is_finite()) {
            return Err(NetError::InvalidLatency);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Envelope<M> {
    from: SensorId,
    deliver_at: f64,
    seq: u64,
    message: M,
}

/// Fate of one copy of a broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub to: SensorId,
    /// `None` when the copy was dropped.
    pub deliver_at: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BusStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
    /// Messages that reached their recipient after its window had passed.
    pub expired: u64,
    pub dead_sender: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BusDiagnostic {
    DeadSender { node: SensorId, time: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastReport {
    pub deliveries: Vec<Delivery>,
    pub diagnostic: Option<BusDiagnostic>,
}

/// Per-recipient queues with sampled delivery times.
#[derive(Clone, Debug)]
pub struct MessageBus<M> {
    default_link: LinkModel,
    links: BTreeMap<(SensorId, SensorId), LinkModel>,
    alive: BTreeMap<SensorId, bool>,
    queues: BTreeMap<SensorId, Vec<Envelope<M>>>,
    seq: u64,
    rng: ChaCha8Rng,
    stats: BusStats,
}

impl<M: Clone> MessageBus<M> {
    pub fn new(nodes: impl IntoIterator<Item = SensorId>, default_link: LinkModel, seed: u64) -> Result<Self, NetError> {
        default_link.validate()?;
        let alive: BTreeMap<SensorId, bool> = nodes.into_iter().map(|n| (n, true)).collect();
        let queues = alive.keys().map(|&n| (n, Vec::new())).collect();
        Ok(MessageBus {
            default_link,
            links: BTreeMap::new(),
            alive,
            queues,
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: BusStats::default(),
        })
    }

    /// Overrides the model for messages from `from` to `to`.
    pub fn set_link(&mut self, from: SensorId, to: SensorId, link: LinkModel) -> Result<(), NetError> {
        link.validate()?;
        self.links.insert((from, to), link);
        Ok(())
    }

    pub fn set_alive(&mut self, node: SensorId, alive: bool) -> Result<(), NetError> {
        *self.alive.get_mut(&node).ok_or(NetError::UnknownNode(node))? = alive;
        Ok(())
    }

    pub fn is_alive(&self, node: SensorId) -> bool {
        self.alive.get(&node).copied().unwrap_or(false)
    }

    pub fn stats(&self) -> &BusStats {
        &self.stats
    }

    pub fn pending(&self, node: SensorId) -> usize {
        self.queues.get(&node).map_or(0, |q| q.len())
    }

    /// Sends `message` to every live peer of `from`.
    pub fn broadcast(&mut self, from: SensorId, message: &M, now: f64) -> Result<BroadcastReport, NetError> {
        let Some(&alive) = self.alive.get(&from) else {
            return Err(NetError::UnknownNode(from));
        };
        if !alive {
            self.stats.dead_sender += 1;
            return Ok(BroadcastReport { deliveries: Vec::new(), diagnostic: Some(BusDiagnostic::DeadSender { node: from, time: now }) });
        }
        let peers: Vec<SensorId> = self.alive.iter().filter(|(&n, &a)| a && n != from).map(|(&n, _)| n).collect();
        let mut deliveries = Vec::with_capacity(peers.len());
        for to in peers {
            let link = self.links.get(&(from, to)).copied().unwrap_or(self.default_link);
            self.stats.sent += 1;
            let drop_draw: f64 = self.rng.random();
            let jitter_draw: f64 = self.rng.random();
            if drop_draw < link.drop_prob {
                self.stats.dropped += 1;
                deliveries.push(Delivery { to, deliver_at: None });
                continue;
            }
            let deliver_at = now + link.latency + link.jitter * jitter_draw;
            self.seq += 1;
            self.queues.entry(to).or_default().push(Envelope { from, deliver_at, seq: self.seq, message: message.clone() });
            deliveries.push(Delivery { to, deliver_at: Some(deliver_at) });
        }
        Ok(BroadcastReport { deliveries, diagnostic: None })
    }

    /// Messages for `node` delivered in `(now - window, now]`, oldest first.
    /// Each message is returned at most once; anything delivered before the
    /// window is discarded.
    pub fn collect(&mut self, node: SensorId, now: f64, window: f64) -> Result<Vec<(SensorId, M)>, NetError> {
        if !(window > 0.0) {
            return Err(NetError::InvalidWindow(window));
        }
        let queue = self.queues.get_mut(&node).ok_or(NetError::UnknownNode(node))?;
        let start = now - window;
        let mut ready = Vec::new();
        let mut keep = Vec::new();
        for e in queue.drain(..) {
            if e.deliver_at > now {
                keep.push(e);
            } else if e.deliver_at > start {
                ready.push(e);
            } else {
                self.stats.expired += 1;
            }
        }
        *queue = keep;
        ready.sort_by(|a, b| a.deliver_at.total_cmp(&b.deliver_at).then(a.seq.cmp(&b.seq)));
        self.stats.delivered += ready.len() as u64;
        Ok(ready.into_iter().map(|e| (e.from, e.message)).collect())
    }
}
