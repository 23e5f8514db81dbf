//! Seeded random streams and mergeable Monte Carlo moments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::noise::NoiseModel;

/// Fixed shard length; results never depend on the thread count.
pub const SHARD: usize = 16_384;

/// Stream purposes, so that independent estimators never share draws by accident.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Effort = 1,
    Simulate = 2,
    Grant = 3,
    Leader = 4,
    Incentive = 5,
    Envelope = 6,
    CapMin = 7,
    Lambda = 8,
}

pub fn stream_id(purpose: Purpose, index: u64) -> u64 {
    ((purpose as u64) << 40) | (index & ((1 << 40) - 1))
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Common random numbers: paired (ε, η) draws reused across every
/// evaluation that should be compared draw by draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockDraws {
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
}

impl ShockDraws {
    pub fn generate(noise: &NoiseModel, n: usize, seed: u64, stream: u64) -> Self {
        let mut rng = rng_for(seed, stream);
        let mut eps = Vec::with_capacity(n);
        let mut eta = Vec::with_capacity(n);
        for _ in 0..n {
            eps.push(noise.epsilon.sample(&mut rng));
            eta.push(noise.eta.sample(&mut rng));
        }
        Self { eps, eta }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }
}

/// Count, mean and centered sum of squares; merges by the pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean,
            se: (self.variance() / self.n.max(1) as f64).sqrt(),
        }
    }
}

/// A Monte Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            value: self.value * k,
            se: self.se * k.abs(),
        }
    }
}

/// Mean of `f(i)` over `0..n`, computed shard by shard and merged in order.
pub fn mean_of<F>(n: usize, f: F) -> Moments
where
    F: Fn(usize) -> f64 + Sync,
{
    let shards: Vec<Moments> = (0..n.div_ceil(SHARD))
        .into_par_iter()
        .map(|s| {
            let mut m = Moments::default();
            for i in s * SHARD..((s + 1) * SHARD).min(n) {
                m.push(f(i));
            }
            m
        })
        .collect();
    shards.into_iter().fold(Moments::default(), Moments::merge)
}

/// Several means over the same index set in one pass.
pub fn means_of<const K: usize, F>(n: usize, f: F) -> [Moments; K]
where
    F: Fn(usize) -> [f64; K] + Sync,
{
    let shards: Vec<[Moments; K]> = (0..n.div_ceil(SHARD))
        .into_par_iter()
        .map(|s| {
            let mut m = [Moments::default(); K];
            for i in s * SHARD..((s + 1) * SHARD).min(n) {
                let v = f(i);
                for k in 0..K {
                    m[k].push(v[k]);
                }
            }
            m
        })
        .collect();
    shards.into_iter().fold([Moments::default(); K], |mut acc, m| {
        for k in 0..K {
            acc[k] = acc[k].merge(m[k]);
        }
        acc
    })
}
