use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplingKind {
    /// Independent uniform draw every step.
    WithReplacement,
    /// Fresh permutation of `0..n` each epoch.
    RandomShuffle,
    /// `0, 1, ..., n-1, 0, 1, ...`.
    Cyclic,
}

impl SamplingKind {
    /// Epoch-structured orderings run the random-shuffling recursion with an
    /// epoch-indexed stepsize.
    pub fn is_epoch_based(self) -> bool {
        !matches!(self, SamplingKind::WithReplacement)
    }
}

impl fmt::Display for SamplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingKind::WithReplacement => "wr",
            SamplingKind::RandomShuffle => "rr",
            SamplingKind::Cyclic => "cyclic",
        })
    }
}

impl FromStr for SamplingKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wr" | "with-replacement" => Ok(SamplingKind::WithReplacement),
            "rr" | "shuffle" | "random-shuffle" => Ok(SamplingKind::RandomShuffle),
            "cyclic" => Ok(SamplingKind::Cyclic),
            other => Err(LabError::param(format!(
                "unknown sampling scheme `{other}` (expected wr, rr or cyclic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub kind: SamplingKind,
    /// Ignored for [`SamplingKind::Cyclic`].
    pub seed: u64,
}

impl SamplingScheme {
    pub fn new(kind: SamplingKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn cyclic() -> Self {
        Self::new(SamplingKind::Cyclic, 0)
    }

    pub fn sampler(&self, n: usize) -> IndexSampler {
        IndexSampler::new(*self, n)
    }
}

/// Stateful batch-index stream for one run.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    kind: SamplingKind,
    n: usize,
    rng: SplitMix64,
    order: Vec<usize>,
    pos: usize,
    calls: u64,
}

impl IndexSampler {
    pub fn new(scheme: SamplingScheme, n: usize) -> Self {
        assert!(n >= 1, "need at least one component");
        Self {
            kind: scheme.kind,
            n,
            rng: SplitMix64::new(scheme.seed),
            order: (0..n).collect(),
            pos: n,
            calls: 0,
        }
    }

    pub fn kind(&self) -> SamplingKind {
        self.kind
    }

    /// Number of indices emitted so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Next batch index.
    pub fn next_index(&mut self) -> usize {
        let idx = match self.kind {
            SamplingKind::WithReplacement => self.rng.below(self.n as u64) as usize,
            SamplingKind::Cyclic => (self.calls % self.n as u64) as usize,
            SamplingKind::RandomShuffle => {
                if self.pos == self.n {
                    self.refill();
                }
                let idx = self.order[self.pos];
                self.pos += 1;
                idx
            }
        };
        self.calls += 1;
        idx
    }

    /// Draws the whole order for the next epoch (a fresh permutation for
    /// random shuffling, the identity for cyclic). Any partially consumed
    /// epoch is discarded.
    pub fn next_epoch(&mut self) -> Vec<usize> {
        match self.kind {
            SamplingKind::WithReplacement => (0..self.n).map(|_| self.next_index()).collect(),
            SamplingKind::Cyclic => {
                self.calls += self.n as u64;
                (0..self.n).collect()
            }
            SamplingKind::RandomShuffle => {
                self.refill();
                self.pos = self.n;
                self.calls += self.n as u64;
                self.order.clone()
            }
        }
    }

    fn refill(&mut self) {
        for (i, slot) in self.order.iter_mut().enumerate() {
            *slot = i;
        }
        self.rng.shuffle(&mut self.order);
        self.pos = 0;
    }
}

/// `next_index(scheme, n, ...)` for callers that keep the sampler themselves.
pub fn next_index(sampler: &mut IndexSampler) -> usize {
    sampler.next_index()
}
