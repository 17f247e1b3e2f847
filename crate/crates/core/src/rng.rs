//! Seeded, platform-independent random stream for Brownian kicks.
//!
//! Backed by ChaCha8, a counter-based stream cipher whose output depends only
//! on the seed and the number of words consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    draws: u64,
    inner: ChaCha8Rng,
    tape: Vec<f64>,
    tape_len: usize,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            draws: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
            tape: Vec::new(),
            tape_len: 0,
        }
    }

    /// Also keeps a copy of the first `n` normal deviates.
    pub fn with_tape(seed: u64, n: usize) -> Self {
        Self {
            tape: Vec::with_capacity(n),
            tape_len: n,
            ..Self::new(seed)
        }
    }

    /// The recorded leading deviates.
    pub fn tape(&self) -> &[f64] {
        &self.tape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of normal deviates drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        self.draws += 1;
        let x = self.inner.sample(StandardNormal);
        if self.tape.len() < self.tape_len {
            self.tape.push(x);
        }
        x
    }

    /// Uniform deviate in `[0, 1)`; used by scripted input generators only.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}
