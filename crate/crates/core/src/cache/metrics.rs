//! Steady-state measurements of a simulation run.

use crate::scalar::Real;

/// Per-file counters and the time-weighted occupancy distribution,
/// collected after the warm-up boundary.
#[derive(Debug, Clone)]
pub struct Metrics<F> {
    pub requests: Vec<u64>,
    pub hits: Vec<u64>,
    /// Length of the measured (post-warm-up) interval.
    pub measured_time: F,
    /// Time integral of the occupancy over the measured interval.
    occupancy_time: F,
    /// Time spent at each integer occupancy level.
    occupancy_mass: Vec<F>,
    /// Request instants at which occupancy was at or above the provisioned
    /// size (when one was configured).
    pub provisioned_exceedances: u64,
}

impl<F: Real> Metrics<F> {
    pub(crate) fn new(files: usize) -> Self {
        Metrics {
            requests: vec![0; files],
            hits: vec![0; files],
            measured_time: F::zero(),
            occupancy_time: F::zero(),
            occupancy_mass: Vec::new(),
            provisioned_exceedances: 0,
        }
    }

    pub(crate) fn record_request(&mut self, file: usize, hit: bool) {
        self.requests[file] += 1;
        if hit {
            self.hits[file] += 1;
        }
    }

    /// Account for the occupancy having been `level` for `dt` time units.
    pub(crate) fn record_dwell(&mut self, level: usize, dt: F) {
        if dt <= F::zero() {
            return;
        }
        if self.occupancy_mass.len() <= level {
            self.occupancy_mass.resize(level + 1, F::zero());
        }
        self.occupancy_mass[level] += dt;
        self.occupancy_time += F::of(level as f64) * dt;
        self.measured_time += dt;
    }

    /// Empirical hit probability of one file (0 when never requested).
    pub fn hit_fraction(&self, file: usize) -> F {
        if self.requests[file] == 0 {
            F::zero()
        } else {
            F::of(self.hits[file] as f64) / F::of(self.requests[file] as f64)
        }
    }

    pub fn total_requests(&self) -> u64 {
        self.requests.iter().sum()
    }

    pub fn total_hits(&self) -> u64 {
        self.hits.iter().sum()
    }

    /// Time-averaged occupancy over the measured interval.
    pub fn mean_occupancy(&self) -> F {
        if self.measured_time > F::zero() {
            self.occupancy_time / self.measured_time
        } else {
            F::zero()
        }
    }

    /// Time-weighted probability mass of each occupancy level; sums to 1.
    pub fn occupancy_pdf(&self) -> Vec<F> {
        self.occupancy_mass.iter().map(|&m| m / self.measured_time).collect()
    }

    /// `P(occupancy >= level)` for each level, paired with the pdf support.
    pub fn occupancy_ccdf(&self) -> Vec<F> {
        let pdf = self.occupancy_pdf();
        let mut acc = F::zero();
        let mut ccdf: Vec<F> = pdf
            .iter()
            .rev()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        ccdf.reverse();
        ccdf
    }

    /// Fraction of measured time spent at occupancy >= `level`.
    pub fn tail_frequency(&self, level: usize) -> F {
        if self.measured_time <= F::zero() {
            return F::zero();
        }
        self.occupancy_mass
            .iter()
            .skip(level)
            .copied()
            .sum::<F>()
            / self.measured_time
    }
}
