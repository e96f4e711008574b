//! Offline solvers: dual price and timers under a hard expected-occupancy
//! constraint, elastic capacity under a soft (penalized) constraint,
//! FIFO/LRU characteristic time, market-equilibrium prices, and tail-bound
//! based buffer sizing.
//!
//! Every fixed point here is a monotone scalar equation; all roots are found
//! by bracketed bisection (bracket expansion, 200-iteration cap, absolute
//! residual tolerance 1e-10).

use crate::cache::CacheKind;
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::utility::{hit_ceil, hit_floor, CostFunction, UtilityFunction};

const MAX_ITERATIONS: usize = 200;
const MAX_BRACKET_EXPANSIONS: usize = 2000;
fn residual_tol<F: Real>() -> F {
    F::of(1e-10).max(F::epsilon() * F::of(1e4))
}

/// A solved timer configuration for one cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<F> {
    pub cache_kind: CacheKind,
    /// Dual price of the capacity constraint; `None` for the degenerate
    /// closed-form allocations (top-weight and uniform), whose price is not
    /// unique.
    pub dual_price: Option<F>,
    /// The expected occupancy this allocation realizes.
    pub capacity: F,
    pub hit_prob: Vec<F>,
    pub timers: Vec<F>,
    /// How many files were clamped at the allocation bounds.
    pub clamped: usize,
}

impl<F: Real> Allocation<F> {
    pub fn total_hit_prob(&self) -> F {
        self.hit_prob.iter().copied().sum()
    }
}

/// Timers realizing `h_i = (U_i')^-1(price)` on a cache of the given kind.
pub fn compute_timers<F: Real>(
    price: F,
    catalog: &Catalog<F>,
    utilities: &[UtilityFunction<F>],
    cache_kind: CacheKind,
) -> Result<Allocation<F>> {
    check_population(catalog, utilities)?;
    let floor = hit_floor::<F>();
    let ceil = hit_ceil::<F>();
    let mut hit_prob = Vec::with_capacity(utilities.len());
    let mut timers = Vec::with_capacity(utilities.len());
    let mut clamped = 0;
    for (u, &rate) in utilities.iter().zip(catalog.rates()) {
        let h = u.inverse_marginal(price)?;
        if h == floor || h == ceil {
            clamped += 1;
        }
        timers.push(cache_kind.timer_for(rate, h)?);
        hit_prob.push(h);
    }
    let capacity = hit_prob.iter().copied().sum();
    Ok(Allocation {
        cache_kind,
        dual_price: Some(price),
        capacity,
        hit_prob,
        timers,
        clamped,
    })
}

/// Solve `sum_i (U_i')^-1(price) = capacity` for the unique dual price and
/// return the induced allocation. Requires `0 < capacity < n`.
pub fn solve_dual_price<F: Real>(
    catalog: &Catalog<F>,
    utilities: &[UtilityFunction<F>],
    capacity: F,
    cache_kind: CacheKind,
) -> Result<Allocation<F>> {
    check_population(catalog, utilities)?;
    let price = dual_price(utilities, capacity)?;
    let mut alloc = compute_timers(price, catalog, utilities, cache_kind)?;
    alloc.capacity = capacity;
    Ok(alloc)
}

/// The bare fixed point `sum_i (U_i')^-1(price) = capacity`, without timer
/// synthesis.
pub fn dual_price<F: Real>(utilities: &[UtilityFunction<F>], capacity: F) -> Result<F> {
    let n = F::of(utilities.len() as f64);
    if !(capacity > F::zero() && capacity < n) {
        return Err(Error::Infeasible(format!(
            "capacity {capacity} outside (0, {n}); the expected occupancy must be strictly between"
        )));
    }
    if let Some(bad) = utilities.iter().position(|u| !u.is_strictly_concave()) {
        return Err(Error::unsupported(
            "dual_price",
            format!("utility {bad} has no invertible marginal; use the closed-form allocation"),
        ));
    }

    let occupancy_at = |price: F| -> F {
        utilities
            .iter()
            .map(|u| u.inverse_marginal(price).expect("price > 0 and strictly concave"))
            .sum()
    };

    let lo = F::of(1e-12);
    let at_lo = occupancy_at(lo);
    if at_lo < capacity {
        return Err(Error::Bracket {
            detail: format!("clamped allocation cannot reach capacity {capacity}"),
            lo: (n * hit_floor::<F>()).as_f64(),
            hi: at_lo.as_f64(),
        });
    }
    let mut hi = F::one().max(lo + lo);
    let mut expansions = 0;
    while occupancy_at(hi) >= capacity {
        hi = hi * F::of(2.0);
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(Error::Bracket {
                detail: format!("clamped allocation cannot get below capacity {capacity}"),
                lo: (n * hit_floor::<F>()).as_f64(),
                hi: at_lo.as_f64(),
            });
        }
    }

    let price = bisect(lo, hi, |price| occupancy_at(price) - capacity);
    let residual = (occupancy_at(price) - capacity).abs();
    if residual > residual_tol::<F>().max(F::epsilon() * n * F::of(8.0)) {
        return Err(Error::NoConvergence {
            op: "dual_price",
            iterations: MAX_ITERATIONS,
            residual: residual.as_f64(),
        });
    }
    Ok(price)
}

/// Result of the soft-capacity (penalized) formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAllocation<F> {
    /// The elastic storage `B*` solving `B* = sum_i (U_i')^-1(C'(B* - B))`.
    pub elastic_capacity: F,
    /// The nominal capacity `B` the penalty is anchored at.
    pub nominal_capacity: F,
    pub allocation: Allocation<F>,
}

/// Solve the soft-constraint problem: find the elastic capacity at which
/// marginal utility equals marginal storage cost everywhere.
pub fn solve_soft_capacity<F: Real>(
    catalog: &Catalog<F>,
    utilities: &[UtilityFunction<F>],
    cost: &CostFunction<F>,
    capacity: F,
    cache_kind: CacheKind,
) -> Result<SoftAllocation<F>> {
    check_population(catalog, utilities)?;
    if let Some(bad) = utilities.iter().position(|u| !u.is_strictly_concave()) {
        return Err(Error::unsupported(
            "solve_soft_capacity",
            format!("utility {bad} has no invertible marginal"),
        ));
    }
    if !(capacity.is_finite() && capacity >= F::zero()) {
        return Err(Error::Infeasible(format!("nominal capacity {capacity} must be >= 0")));
    }
    if cost.scale() <= F::zero() {
        return Err(Error::Infeasible("cost scale must be > 0 for a nonzero marginal cost".into()));
    }
    let n = F::of(utilities.len() as f64);

    let excess_demand = |elastic: F| -> Result<F> {
        let price = cost.marginal(elastic - capacity);
        let mut sum = F::zero();
        for u in utilities {
            sum += u.inverse_marginal(price)?;
        }
        Ok(sum - elastic)
    };

    // With an exponential cost the marginal cost is positive everywhere and
    // any positive lower bracket works; the ramp cost needs the search kept
    // strictly above the nominal capacity where its marginal is positive.
    let lo = if cost.globally_invertible_marginal() {
        F::of(1e-12)
    } else {
        if capacity >= n {
            return Err(Error::Infeasible(format!(
                "ramp cost requires nominal capacity {capacity} < population {n}"
            )));
        }
        capacity + F::of(1e-12) * capacity.max(F::one())
    };
    let hi = n.max(capacity + F::one());
    if excess_demand(lo)? < F::zero() || excess_demand(hi)? > F::zero() {
        return Err(Error::Bracket {
            detail: "no sign change for the elastic capacity".into(),
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }

    let elastic = bisect(lo, hi, |b| excess_demand(b).unwrap_or(F::nan()));
    let residual = excess_demand(elastic)?.abs();
    if residual > residual_tol::<F>().max(F::epsilon() * n * F::of(8.0)) {
        return Err(Error::NoConvergence {
            op: "solve_soft_capacity",
            iterations: MAX_ITERATIONS,
            residual: residual.as_f64(),
        });
    }
    let price = cost.marginal(elastic - capacity);
    let mut allocation = compute_timers(price, catalog, utilities, cache_kind)?;
    allocation.capacity = elastic;
    Ok(SoftAllocation {
        elastic_capacity: elastic,
        nominal_capacity: capacity,
        allocation,
    })
}

/// The common timer `T` at which a cache of the given kind holds `capacity`
/// files in expectation: `sum_i hit_prob(rate_i, T) = capacity`.
///
/// `CacheKind::NonReset` corresponds to FIFO, `CacheKind::Reset` to LRU.
pub fn characteristic_time<F: Real>(
    catalog: &Catalog<F>,
    capacity: F,
    cache_kind: CacheKind,
) -> Result<F> {
    let n = F::of(catalog.len() as f64);
    if !(capacity > F::zero() && capacity < n) {
        return Err(Error::Infeasible(format!("capacity {capacity} outside (0, {n})")));
    }
    let occupancy_at =
        |t: F| -> F { catalog.rates().iter().map(|&r| cache_kind.hit_prob(r, t)).sum() };
    let mut hi = F::one();
    let mut expansions = 0;
    while occupancy_at(hi) <= capacity {
        hi = hi * F::of(2.0);
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(Error::Bracket {
                detail: format!("cannot reach occupancy {capacity}"),
                lo: 0.0,
                hi: occupancy_at(hi).as_f64(),
            });
        }
    }
    let t = bisect(F::zero(), hi, |t| capacity - occupancy_at(t));
    let residual = (occupancy_at(t) - capacity).abs();
    if residual > residual_tol::<F>().max(F::epsilon() * n * F::of(8.0)) {
        return Err(Error::NoConvergence {
            op: "characteristic_time",
            iterations: MAX_ITERATIONS,
            residual: residual.as_f64(),
        });
    }
    Ok(t)
}

/// Prices and per-file payments under which self-interested providers
/// reproduce the capacity-constrained optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketEquilibrium<F> {
    /// Price per unit hit probability; equals the dual price of the hard
    /// constraint.
    pub price: F,
    /// Per-file payments `w_i = price * h_i`.
    pub payments: Vec<F>,
    pub hit_prob: Vec<F>,
}

/// Compute the equilibrium of the storage market: a price `r` such that the
/// utility-maximizing purchases `h_i = (U_i')^-1(r)` exactly fill the cache,
/// with payments `w_i = r h_i`. The same hit probabilities solve the
/// weighted proportional-fairness problem with weights `w_i`.
pub fn market_equilibrium<F: Real>(
    catalog: &Catalog<F>,
    utilities: &[UtilityFunction<F>],
    capacity: F,
) -> Result<MarketEquilibrium<F>> {
    check_population(catalog, utilities)?;
    let price = dual_price(utilities, capacity)?;
    let hit_prob: Vec<F> = utilities
        .iter()
        .map(|u| u.inverse_marginal(price))
        .collect::<Result<_>>()?;
    let payments = hit_prob.iter().map(|&h| price * h).collect();
    Ok(MarketEquilibrium { price, payments, hit_prob })
}

/// Closed-form allocation for linear utilities (`beta = 0`): hit everything
/// for the `capacity` largest weights, nothing else, ties broken by file id.
/// With weights equal to the request rates this is LFU.
///
/// A fractional capacity puts its fractional part on the next file so the
/// expected occupancy still equals `capacity`.
pub fn lfu_allocation<F: Real>(
    catalog: &Catalog<F>,
    weights: &[F],
    capacity: F,
    cache_kind: CacheKind,
) -> Result<Allocation<F>> {
    if weights.len() != catalog.len() {
        return Err(Error::Mismatch(format!(
            "{} weights for {} files",
            weights.len(),
            catalog.len()
        )));
    }
    let n = F::of(catalog.len() as f64);
    if !(capacity > F::zero() && capacity <= n) {
        return Err(Error::Infeasible(format!("capacity {capacity} outside (0, {n}]")));
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .expect("weights are not NaN")
            .then(a.cmp(&b))
    });
    let full = capacity.floor().as_f64() as usize;
    let fraction = capacity - capacity.floor();
    let mut hit_prob = vec![F::zero(); weights.len()];
    for (pos, &file) in order.iter().enumerate() {
        if pos < full {
            hit_prob[file] = F::one();
        } else if pos == full {
            hit_prob[file] = fraction;
        }
    }
    let timers = hit_prob
        .iter()
        .zip(catalog.rates())
        .map(|(&h, &r)| cache_kind.timer_for(r, h))
        .collect::<Result<_>>()?;
    Ok(Allocation {
        cache_kind,
        dual_price: None,
        capacity,
        hit_prob,
        timers,
        clamped: 0,
    })
}

/// Max-min fair allocation: every file gets hit probability `capacity / n`
/// exactly. Also the optimum for any population with identical utilities.
pub fn uniform_allocation<F: Real>(
    catalog: &Catalog<F>,
    capacity: F,
    cache_kind: CacheKind,
) -> Result<Allocation<F>> {
    let n = F::of(catalog.len() as f64);
    if !(capacity > F::zero() && capacity <= n) {
        return Err(Error::Infeasible(format!("capacity {capacity} outside (0, {n}]")));
    }
    let h = capacity / n;
    let hit_prob = vec![h; catalog.len()];
    let timers = catalog
        .rates()
        .iter()
        .map(|&r| cache_kind.timer_for(r, h))
        .collect::<Result<_>>()?;
    Ok(Allocation {
        cache_kind,
        dual_price: None,
        capacity,
        hit_prob,
        timers,
        clamped: 0,
    })
}

/// Chernoff bound on exceeding the provisioned occupancy:
/// `P(occupancy >= capacity (1 + headroom)) <= exp(-headroom^2 capacity / 3)`.
pub fn violation_bound<F: Real>(capacity: F, headroom: F) -> Result<F> {
    if !(capacity > F::zero()) {
        return Err(Error::domain("violation_bound", format!("capacity must be > 0, got {capacity}")));
    }
    if !(headroom >= F::zero()) {
        return Err(Error::domain("violation_bound", format!("headroom must be >= 0, got {headroom}")));
    }
    Ok((-headroom * headroom * capacity / F::of(3.0)).exp())
}

/// A buffer-growth plan under a Zipf popularity law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizingPlan<F> {
    /// Working capacity `B = scale * n^(1-s)`.
    pub buffer: F,
    /// Headroom fraction `n^-((1-s)/3)`.
    pub headroom: F,
    /// Chernoff bound on exceeding `buffer * (1 + headroom)`.
    pub bound: F,
    /// Physical size to provision: `ceil(buffer * (1 + headroom))`.
    pub provisioned: F,
}

/// Size a buffer for `n` files under Zipf exponent `s in (0,1)` so that the
/// overflow probability vanishes as the population grows: the buffer grows
/// sublinearly while the headroom shrinks, with `headroom^2 * buffer`
/// unbounded.
pub fn buffer_sizing<F: Real>(n: usize, s: F, scale: F) -> Result<SizingPlan<F>> {
    if n == 0 {
        return Err(Error::domain("buffer_sizing", "population must be nonempty"));
    }
    if !(s > F::zero()) {
        return Err(Error::domain("buffer_sizing", format!("zipf exponent must be > 0, got {s}")));
    }
    if s >= F::one() {
        return Err(Error::unsupported(
            "buffer_sizing",
            format!("scaling is only specified for exponents below 1, got {s}"),
        ));
    }
    if !(scale > F::zero() && scale.is_finite()) {
        return Err(Error::domain("buffer_sizing", format!("scale must be > 0, got {scale}")));
    }
    let nf = F::of(n as f64);
    let buffer = scale * nf.powf(F::one() - s);
    let headroom = nf.powf(-(F::one() - s) / F::of(3.0));
    let bound = violation_bound(buffer, headroom)?;
    let provisioned = (buffer * (F::one() + headroom)).ceil();
    Ok(SizingPlan { buffer, headroom, bound, provisioned })
}

fn check_population<F: Real>(catalog: &Catalog<F>, utilities: &[UtilityFunction<F>]) -> Result<()> {
    if catalog.len() != utilities.len() {
        return Err(Error::Mismatch(format!(
            "{} utilities for {} files",
            utilities.len(),
            catalog.len()
        )));
    }
    Ok(())
}

/// Bisection for a nonincreasing function with `f(lo) >= 0 >= f(hi)`. Runs
/// until the interval collapses to floating-point resolution or the
/// iteration cap, whichever comes first.
fn bisect<F: Real>(mut lo: F, mut hi: F, f: impl Fn(F) -> F) -> F {
    let mut mid = F::of(0.5) * (lo + hi);
    for _ in 0..MAX_ITERATIONS {
        if hi - lo <= F::epsilon() * mid.abs().max(F::min_positive_value()) * F::of(2.0) {
            break;
        }
        if f(mid) >= F::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = F::of(0.5) * (lo + hi);
        if next == mid {
            break;
        }
        mid = next;
    }
    mid
}
