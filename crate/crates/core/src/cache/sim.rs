//! Replay a request stream through one TTL cache, with either fixed timers
//! or an online controller deciding each TTL.

use crate::cache::engine::TtlCache;
use crate::cache::metrics::Metrics;
use crate::cache::model::CacheKind;
use crate::cache::workload::RequestStream;
use crate::catalog::Catalog;
use crate::control::Controller;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// What decides the TTL armed for each request.
pub enum Policy<'a, F> {
    FixedTimers(&'a [F]),
    Adaptive(&'a mut Controller<F>),
}

#[derive(Debug, Clone)]
pub struct SimConfig<F> {
    /// Total number of requests to replay.
    pub horizon: u64,
    /// Fraction of the horizon excluded from metrics while the system
    /// warms up.
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Physical size whose exceedance instants are counted (never enforced).
    pub provisioned: Option<F>,
    /// Keep every `stride`-th point of the controller trajectory.
    pub trajectory_stride: Option<u64>,
}

impl<F> SimConfig<F> {
    pub fn new(horizon: u64, seed: u64) -> Self {
        SimConfig {
            horizon,
            warmup_fraction: 0.1,
            seed,
            provisioned: None,
            trajectory_stride: None,
        }
    }
}

/// One decimated run-state sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint<F> {
    pub event: u64,
    pub time: F,
    /// Controller price at this event; absent for fixed-timer runs.
    pub alpha: Option<F>,
    /// Occupancy immediately before the request was admitted.
    pub occupancy: usize,
}

#[derive(Debug)]
pub struct SimOutput<F> {
    pub metrics: Metrics<F>,
    pub trajectory: Vec<TrajectoryPoint<F>>,
    /// Event-averaged price over the final quarter of the horizon
    /// (adaptive runs only).
    pub alpha_last_quarter: Option<F>,
    /// Simulated time span of the whole run.
    pub end_time: F,
}

/// Drive `horizon` requests from a seeded Poisson stream through a cache of
/// the given kind, collecting steady-state metrics past the warm-up
/// boundary.
///
/// With an adaptive policy the controller sees, for every request: the
/// occupancy measured immediately before admission, the hit/miss outcome,
/// and the resident entry's armed and remaining TTL. The timer it returns
/// is then used to serve that same request.
pub fn run_simulation<F: Real>(
    catalog: &Catalog<F>,
    mut policy: Policy<'_, F>,
    cache_kind: CacheKind,
    config: &SimConfig<F>,
) -> Result<SimOutput<F>> {
    if config.horizon == 0 {
        return Err(Error::Config("horizon must be at least one request".into()));
    }
    if !(0.0..1.0).contains(&config.warmup_fraction) {
        return Err(Error::Config(format!(
            "warm-up fraction {} outside [0,1)",
            config.warmup_fraction
        )));
    }
    if let Policy::FixedTimers(timers) = &policy {
        if timers.len() != catalog.len() {
            return Err(Error::Mismatch(format!(
                "{} timers for {} files",
                timers.len(),
                catalog.len()
            )));
        }
        if timers.iter().any(|t| !(*t >= F::zero())) {
            return Err(Error::Config("timers must be nonnegative".into()));
        }
    }

    let mut stream = RequestStream::new(catalog, config.seed);
    let mut cache = TtlCache::new(cache_kind);
    let mut metrics = Metrics::new(catalog.len());
    let warmup_events = (config.horizon as f64 * config.warmup_fraction) as u64;
    let quarter_start = config.horizon - config.horizon / 4;
    let mut alpha_sum = F::zero();
    let mut alpha_count: u64 = 0;
    let mut trajectory = Vec::new();

    // occupancy step integration: between warm-up and the end, every
    // occupancy change (evictions and admissions) closes one dwell interval
    let mut measuring = false;
    let mut dwell_since = F::zero();
    let mut dwell_level = 0usize;
    let mut end_time = F::zero();

    for event in 0..config.horizon {
        let (now, file) = stream.next_request();
        end_time = now;

        if measuring {
            // close one dwell interval per occupancy step (each eviction),
            // then the remainder up to the request instant
            let mut last_t = dwell_since;
            let mut last_level = dwell_level;
            let m = &mut metrics;
            cache.advance(now, |t, occ_after| {
                m.record_dwell(last_level, t - last_t);
                last_t = t;
                last_level = occ_after;
            });
            metrics.record_dwell(last_level, now - last_t);
        } else {
            cache.advance(now, |_, _| {});
        }

        let occupancy_before = cache.occupancy();
        let hit_peek = cache.lookup(file);
        let ttl = match &mut policy {
            Policy::FixedTimers(timers) => timers[file as usize],
            Policy::Adaptive(ctrl) => {
                let armed = cache.armed_ttl(file);
                let remaining = cache.remaining_ttl(file);
                let outcome = if hit_peek {
                    crate::cache::Outcome::Hit
                } else {
                    crate::cache::Outcome::Miss
                };
                ctrl.on_request(file as usize, now, outcome, occupancy_before, armed, remaining)
            }
        };
        let outcome = cache.serve(file, ttl);
        debug_assert_eq!(outcome.is_hit(), hit_peek);

        let alpha = match &policy {
            Policy::Adaptive(ctrl) => Some(ctrl.alpha()),
            Policy::FixedTimers(_) => None,
        };
        if let (Some(a), true) = (alpha, event >= quarter_start) {
            alpha_sum += a;
            alpha_count += 1;
        }
        if let Some(stride) = config.trajectory_stride {
            if stride > 0 && event % stride == 0 {
                trajectory.push(TrajectoryPoint { event, time: now, alpha, occupancy: occupancy_before });
            }
        }

        if event >= warmup_events {
            // measurement starts at the first post-warm-up request instant;
            // serve() may have changed the occupancy at `now`, so re-anchor
            // the dwell interval after it (the zero-length interval between
            // admission and this anchor carries no mass)
            measuring = true;
            dwell_level = cache.occupancy();
            dwell_since = now;
            metrics.record_request(file as usize, outcome.is_hit());
            if let Some(provisioned) = config.provisioned {
                if F::of(occupancy_before as f64) >= provisioned {
                    metrics.provisioned_exceedances += 1;
                }
            }
        }
    }

    let alpha_last_quarter = if alpha_count > 0 {
        Some(alpha_sum / F::of(alpha_count as f64))
    } else {
        None
    };
    Ok(SimOutput {
        metrics,
        trajectory,
        alpha_last_quarter,
        end_time,
    })
}
