//! Seeded datagram channel with independent loss, fixed latency and uniform jitter.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    pub drop_prob: f64,
    pub latency_ticks: u32,
    pub jitter_ticks: u32,
    pub seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            drop_prob: 0.0,
            latency_ticks: 0,
            jitter_ticks: 0,
            seed: 0,
        }
    }
}

impl ChannelModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(format!("drop_prob must be in [0, 1], got {}", self.drop_prob));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelStats {
    pub submitted: u64,
    pub dropped: u64,
    pub delivered: u64,
}

/// One direction of a lossy link. Frames submitted at tick `t` arrive at
/// `t + latency + U{0..=jitter}` unless dropped; frames due on the same tick keep
/// submission order, frames due on different ticks may overtake each other.
#[derive(Debug, Clone)]
pub struct Channel<F> {
    model: ChannelModel,
    rng: ChaCha8Rng,
    in_flight: BTreeMap<(u64, u64), F>,
    next_id: u64,
    pub stats: ChannelStats,
}

impl<F> Channel<F> {
    pub fn new(model: ChannelModel) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            in_flight: BTreeMap::new(),
            next_id: 0,
            stats: ChannelStats::default(),
        }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    /// Offers a frame at `tick`. Returns false if the channel dropped it.
    pub fn submit(&mut self, tick: u64, frame: F) -> bool {
        self.stats.submitted += 1;
        // Always draw both numbers so a frame's fate does not depend on earlier ones.
        let lost = self.rng.random::<f64>() < self.model.drop_prob;
        let jitter = self.rng.random_range(0..=self.model.jitter_ticks);
        if lost {
            self.stats.dropped += 1;
            return false;
        }
        let due = tick + self.model.latency_ticks as u64 + jitter as u64;
        self.in_flight.insert((due, self.next_id), frame);
        self.next_id += 1;
        true
    }

    /// Removes and returns every frame due at or before `tick`.
    pub fn deliver(&mut self, tick: u64) -> Vec<F> {
        let later = self.in_flight.split_off(&(tick + 1, 0));
        let due = std::mem::replace(&mut self.in_flight, later);
        self.stats.delivered += due.len() as u64;
        due.into_values().collect()
    }

    /// Submit then deliver at the same tick.
    pub fn step(&mut self, tick: u64, submitted: impl IntoIterator<Item = F>) -> Vec<F> {
        for f in submitted {
            self.submit(tick, f);
        }
        self.deliver(tick)
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_channel() {
        let mut ch = Channel::new(ChannelModel::ideal());
        for t in 0..100u64 {
            assert_eq!(ch.step(t, [t]), vec![t]);
        }
    }

    #[test]
    fn drop_all() {
        let mut ch = Channel::new(ChannelModel {
            drop_prob: 1.0,
            ..ChannelModel::ideal()
        });
        let got: usize = (0..1000u64).map(|t| ch.step(t, [t]).len()).sum();
        assert_eq!(got, 0);
        assert_eq!(ch.stats.dropped, 1000);
    }

    #[test]
    fn latency_and_jitter_bounds() {
        let mut ch = Channel::new(ChannelModel {
            latency_ticks: 3,
            jitter_ticks: 4,
            seed: 9,
            ..ChannelModel::ideal()
        });
        let mut arrivals = Vec::new();
        for t in 0..500u64 {
            for f in ch.step(t, [t]) {
                arrivals.push((f, t));
            }
        }
        for (sent, got) in &arrivals {
            let delay = got - sent;
            assert!((3..=7).contains(&delay), "delay {delay}");
        }
        let inversions = arrivals.windows(2).filter(|w| w[1].0 < w[0].0).count();
        assert!(inversions > 0);
    }

    #[test]
    fn seeded_reproducible() {
        let run = |seed| {
            let mut ch = Channel::new(ChannelModel {
                drop_prob: 0.3,
                jitter_ticks: 2,
                seed,
                ..ChannelModel::ideal()
            });
            (0..1000u64).flat_map(|t| ch.step(t, [t])).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
