//! File population: per-file Poisson request rates, optionally generated
//! from a Zipf popularity law.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A fixed population of files with per-file request rates.
///
/// Files are identified by their index; exported tables number them from 1
/// in popularity order when the catalog was generated from a Zipf law.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog<F> {
    rates: Vec<F>,
}

impl<F: Real> Catalog<F> {
    /// Build a catalog from explicit per-file request rates (requests per
    /// unit time). Every rate must be strictly positive and finite.
    pub fn from_rates(rates: Vec<F>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Config("catalog must contain at least one file".into()));
        }
        if let Some(bad) = rates.iter().find(|r| !(r.is_finite() && **r > F::zero())) {
            return Err(Error::domain(
                "catalog",
                format!("request rates must be positive and finite, got {bad}"),
            ));
        }
        Ok(Catalog { rates })
    }

    /// Generate `n` files with rates following a Zipf law with exponent `s`,
    /// normalized so the rates sum to `aggregate_rate`:
    /// `rate_i = aggregate_rate * i^-s / sum_j j^-s`.
    pub fn zipf(n: usize, s: F, aggregate_rate: F) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("catalog must contain at least one file".into()));
        }
        if !(s.is_finite() && s >= F::zero()) {
            return Err(Error::domain("catalog", format!("zipf exponent must be >= 0, got {s}")));
        }
        if !(aggregate_rate.is_finite() && aggregate_rate > F::zero()) {
            return Err(Error::domain(
                "catalog",
                format!("aggregate rate must be positive, got {aggregate_rate}"),
            ));
        }
        let weights: Vec<F> = (1..=n).map(|i| F::of(i as f64).powf(-s)).collect();
        let total: F = weights.iter().copied().sum();
        let rates = weights.into_iter().map(|w| aggregate_rate * w / total).collect();
        Ok(Catalog { rates })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[F] {
        &self.rates
    }

    pub fn rate(&self, file: usize) -> F {
        self.rates[file]
    }

    pub fn total_rate(&self) -> F {
        self.rates.iter().copied().sum()
    }
}
