//! Synthetic request generation: one aggregate Poisson process with
//! independent file marks, equivalent to independent per-file Poisson
//! streams at the catalog rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::catalog::Catalog;
use crate::scalar::Real;

/// Deterministic, seeded request stream over a catalog.
#[derive(Debug, Clone)]
pub struct RequestStream<F> {
    rng: ChaCha12Rng,
    /// cumulative selection probabilities, in f64 for stable sampling
    cdf: Vec<f64>,
    total_rate: f64,
    clock: F,
}

impl<F: Real> RequestStream<F> {
    pub fn new(catalog: &Catalog<F>, seed: u64) -> Self {
        let total_rate = catalog.total_rate().as_f64();
        let mut acc = 0.0;
        let cdf = catalog
            .rates()
            .iter()
            .map(|r| {
                acc += r.as_f64() / total_rate;
                acc
            })
            .collect();
        RequestStream {
            rng: ChaCha12Rng::seed_from_u64(seed),
            cdf,
            total_rate,
            clock: F::zero(),
        }
    }

    /// Next request: strictly increasing arrival time and the requested
    /// file. Gaps are exponential at the aggregate rate; files are chosen
    /// independently in proportion to their rates.
    pub fn next_request(&mut self) -> (F, u32) {
        let u: f64 = self.rng.random();
        let gap = -(-u).ln_1p() / self.total_rate; // -ln(1-u), u in [0,1)
        self.clock = self.clock + F::of(gap);
        let v: f64 = self.rng.random();
        let file = self.cdf.partition_point(|&c| c <= v).min(self.cdf.len() - 1);
        (self.clock, file as u32)
    }

    pub fn clock(&self) -> F {
        self.clock
    }
}
