//! Deterministic fluid limits of the three controllers, with a Lyapunov
//! value attached to every accepted step.
//!
//! Each integrator runs explicit Euler with step halving whenever the
//! Lyapunov value would increase by more than the integrator tolerance, so
//! the recorded value is nonincreasing along every returned trajectory.
//! The Lyapunov functions are:
//!
//! * dual: `V(a) = D(a) - D(a*)`, `D` the dual objective of the
//!   hard-constraint problem;
//! * primal: `V(h) = W(h*) - W(h)`, `W` the penalized objective of the
//!   soft-constraint problem;
//! * primal-dual: a path integral of the timer dynamics plus the squared
//!   price error, zero exactly at the optimum.

use crate::cache::CacheKind;
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::{dual_price, solve_dual_price, solve_soft_capacity};
use crate::utility::{hit_ceil, hit_floor, CostFunction, UtilityFunction};

#[derive(Debug, Clone)]
pub struct FluidOptions<F> {
    /// Integration horizon in controller time.
    pub t_end: F,
    /// Initial (and maximum) step; defaults to `1e-2 / max(gains, gamma)`.
    pub dt0: Option<F>,
    /// Record every `record_stride`-th accepted step (first and last are
    /// always kept).
    pub record_stride: u64,
}

impl<F: Real> FluidOptions<F> {
    pub fn new(t_end: F) -> Self {
        FluidOptions { t_end, dt0: None, record_stride: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct FluidSample<F> {
    pub time: F,
    pub alpha: Option<F>,
    pub lyapunov: F,
    /// Hit probabilities at this sample; populated when the population has
    /// at most 32 files, otherwise only `sum_hit_prob` is kept.
    pub hit_prob: Vec<F>,
    pub sum_hit_prob: F,
}

#[derive(Debug, Clone)]
pub struct FluidTrajectory<F> {
    pub samples: Vec<FluidSample<F>>,
    pub v0: F,
    pub v_end: F,
    pub terminal_hit_prob: Vec<F>,
    pub terminal_alpha: Option<F>,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// Largest increase of the Lyapunov value over any accepted step;
    /// bounded by the integrator tolerance `1e-9 * max(1, V(0))`.
    pub max_step_increase: F,
}

const MAX_HALVINGS: u32 = 60;
const MAX_STEPS: u64 = 20_000_000;

fn integrator_tol<F: Real>(v0: F) -> F {
    F::of(1e-9) * v0.max(F::one())
}

/// Shared Euler-with-halving driver. `step` must be a pure function of the
/// state and the step size; `lyapunov` is evaluated on trial states to
/// accept or reject them.
fn drive<F: Real, S: Clone>(
    op: &'static str,
    state0: S,
    opts_t_end: F,
    dt0: F,
    step: impl Fn(&S, F) -> S,
    lyapunov: impl Fn(&S) -> F,
    mut on_accept: impl FnMut(F, &S, F, bool),
) -> Result<(S, F, u64, u64, F)> {
    let mut state = state0;
    let mut v = lyapunov(&state);
    let v0 = v;
    let tol = integrator_tol(v0);
    let dt_min = dt0 * F::of(0.5).powi(MAX_HALVINGS as i32);
    let mut t = F::zero();
    let mut dt_base = dt0;
    let mut accepted: u64 = 0;
    let mut rejected: u64 = 0;
    let mut max_increase = F::zero();
    on_accept(t, &state, v, false);
    while t < opts_t_end {
        if accepted + rejected > MAX_STEPS {
            return Err(Error::NoConvergence { op, iterations: MAX_STEPS as usize, residual: v.as_f64() });
        }
        let dt = dt_base.min(opts_t_end - t);
        let trial = step(&state, dt);
        let v_trial = lyapunov(&trial);
        if v_trial <= v + tol {
            max_increase = max_increase.max(v_trial - v);
            state = trial;
            t = t + dt;
            v = v_trial;
            accepted += 1;
            dt_base = (dt_base * F::of(2.0)).min(dt0);
            on_accept(t, &state, v, t >= opts_t_end);
        } else {
            rejected += 1;
            dt_base = dt * F::of(0.5);
            if dt_base < dt_min {
                return Err(Error::NoConvergence {
                    op,
                    iterations: (accepted + rejected) as usize,
                    residual: (v_trial - v).as_f64(),
                });
            }
        }
    }
    Ok((state, v0, accepted, rejected, max_increase))
}

/// Dual objective `D(a) = sum_i [U_i(h_i(a)) - a h_i(a)] + a B` with
/// `h_i(a) = (U_i')^-1(a)`.
pub fn dual_objective<F: Real>(
    utilities: &[UtilityFunction<F>],
    capacity: F,
    alpha: F,
) -> Result<F> {
    let a = alpha.max(F::min_positive_value());
    let mut d = a * capacity;
    for u in utilities {
        let h = u.inverse_marginal(a)?;
        d += u.value(h)? - a * h;
    }
    Ok(d)
}

/// Penalized objective `W(h) = sum_i U_i(h_i) - C(sum h - B)`; hit
/// probabilities are clamped to the interior for evaluation.
pub fn soft_objective<F: Real>(
    utilities: &[UtilityFunction<F>],
    cost: &CostFunction<F>,
    capacity: F,
    hit_prob: &[F],
) -> Result<F> {
    let mut sum_u = F::zero();
    let mut sum_h = F::zero();
    for (u, &h) in utilities.iter().zip(hit_prob) {
        let h = h.max(hit_floor()).min(hit_ceil());
        sum_u += u.value(h)?;
        sum_h += h;
    }
    Ok(sum_u - cost.value(sum_h - capacity))
}

/// Integrate the price dynamics `da/dt = gamma (sum_i h_i(a) - B)` with
/// projection at zero, recording `V(a) = D(a) - D(a*)`.
pub fn integrate_dual<F: Real>(
    utilities: &[UtilityFunction<F>],
    capacity: F,
    gamma: F,
    alpha0: F,
    opts: &FluidOptions<F>,
) -> Result<FluidTrajectory<F>> {
    if !(gamma > F::zero()) {
        return Err(Error::domain("integrate_dual", format!("gamma must be > 0, got {gamma}")));
    }
    let alpha_star = dual_price(utilities, capacity)?;
    let d_star = dual_objective(utilities, capacity, alpha_star)?;
    let occupancy = |a: F| -> F {
        let a = a.max(F::min_positive_value());
        utilities
            .iter()
            .map(|u| u.inverse_marginal(a).expect("strictly concave"))
            .sum()
    };
    let lyap = |a: &F| dual_objective(utilities, capacity, *a).expect("interior evaluation") - d_star;
    let step = |a: &F, dt: F| (*a + dt * gamma * (occupancy(*a) - capacity)).max(F::zero());
    let dt0 = opts.dt0.unwrap_or(F::of(1e-2) / gamma.max(F::one()));

    let mut recorder = Recorder::new(utilities.len(), opts.record_stride);
    let (alpha_end, v0, accepted, rejected, max_inc) =
        drive("integrate_dual", alpha0.max(F::zero()), opts.t_end, dt0, step, lyap, |t, a, v, last| {
            recorder.push(t, Some(*a), v, last, || {
                utilities
                    .iter()
                    .map(|u| u.inverse_marginal(a.max(F::min_positive_value())).unwrap())
                    .collect()
            });
        })?;

    let terminal_hit_prob = utilities
        .iter()
        .map(|u| u.inverse_marginal(alpha_end.max(F::min_positive_value())).unwrap())
        .collect();
    Ok(FluidTrajectory {
        samples: recorder.samples,
        v0,
        v_end: lyap(&alpha_end),
        terminal_hit_prob,
        terminal_alpha: Some(alpha_end),
        accepted_steps: accepted,
        rejected_steps: rejected,
        max_step_increase: max_inc,
    })
}

/// Integrate the per-timer gradient dynamics
/// `dt_i/dt = k_i [U_i'(h_i) - C'(sum h - B)]` with `h_i` given by the hit
/// model, recording `V(h) = W(h*) - W(h)` against the soft optimum.
pub fn integrate_primal<F: Real>(
    catalog: &Catalog<F>,
    cache_kind: CacheKind,
    utilities: &[UtilityFunction<F>],
    cost: &CostFunction<F>,
    capacity: F,
    gains: &[F],
    timers0: &[F],
    opts: &FluidOptions<F>,
) -> Result<FluidTrajectory<F>> {
    check_gains(catalog.len(), gains, timers0)?;
    let soft = solve_soft_capacity(catalog, utilities, cost, capacity, cache_kind)?;
    let w_star = soft_objective(utilities, cost, capacity, &soft.allocation.hit_prob)?;
    let rates = catalog.rates().to_vec();
    let hits = move |t: &[F]| -> Vec<F> {
        t.iter().zip(&rates).map(|(&t, &r)| cache_kind.hit_prob(r, t)).collect()
    };
    let lyap = |t: &Vec<F>| {
        w_star - soft_objective(utilities, cost, capacity, &hits(t)).expect("clamped evaluation")
    };
    let step = |t: &Vec<F>, dt: F| -> Vec<F> {
        let h = hits(t);
        let excess: F = h.iter().copied().sum::<F>() - capacity;
        let price = cost.marginal(excess);
        t.iter()
            .zip(utilities)
            .zip(&h)
            .zip(gains)
            .map(|(((&t, u), &h), &k)| {
                let hc = h.max(hit_floor()).min(hit_ceil());
                let grad = u.marginal(hc).expect("interior") - price;
                (t + dt * k * grad).max(F::zero())
            })
            .collect()
    };
    let max_gain = gains.iter().copied().fold(F::zero(), F::max);
    let dt0 = opts.dt0.unwrap_or(F::of(1e-2) / max_gain.max(F::one()));

    let mut recorder = Recorder::new(catalog.len(), opts.record_stride);
    let (t_end_state, v0, accepted, rejected, max_inc) = drive(
        "integrate_primal",
        timers0.to_vec(),
        opts.t_end,
        dt0,
        step,
        lyap,
        |t, state, v, last| recorder.push(t, None, v, last, || hits(state)),
    )?;

    let v_end = lyap(&t_end_state);
    Ok(FluidTrajectory {
        samples: recorder.samples,
        v0,
        v_end,
        terminal_hit_prob: hits(&t_end_state),
        terminal_alpha: None,
        accepted_steps: accepted,
        rejected_steps: rejected,
        max_step_increase: max_inc,
    })
}

/// Integrate the combined dynamics `dt_i/dt = k_i [U_i'(h_i) - a]`,
/// `da/dt = gamma (sum h - B)`, recording the primal-dual Lyapunov value
/// (path integral over the hit-model sensitivity plus the squared price
/// error).
pub fn integrate_primal_dual<F: Real>(
    catalog: &Catalog<F>,
    cache_kind: CacheKind,
    utilities: &[UtilityFunction<F>],
    capacity: F,
    gains: &[F],
    gamma: F,
    timers0: &[F],
    alpha0: F,
    opts: &FluidOptions<F>,
) -> Result<FluidTrajectory<F>> {
    check_gains(catalog.len(), gains, timers0)?;
    if !(gamma > F::zero()) {
        return Err(Error::domain("integrate_primal_dual", format!("gamma must be > 0, got {gamma}")));
    }
    let reference = solve_dual_price(catalog, utilities, capacity, cache_kind)?;
    let alpha_star = reference.dual_price.expect("fixed-point solve provides a price");
    let h_star = reference.hit_prob.clone();
    let rates = catalog.rates().to_vec();
    let hits = {
        let rates = rates.clone();
        move |t: &[F]| -> Vec<F> {
            t.iter().zip(&rates).map(|(&t, &r)| cache_kind.hit_prob(r, t)).collect()
        }
    };

    let lyap = |state: &(Vec<F>, F)| -> F {
        let (t, a) = state;
        let h = hits(t);
        let mut v = (*a - alpha_star) * (*a - alpha_star) / (F::of(2.0) * gamma);
        for i in 0..h.len() {
            v += path_integral(h_star[i], h[i], gains[i], rates[i], cache_kind);
        }
        v
    };
    let step = |state: &(Vec<F>, F), dt: F| -> (Vec<F>, F) {
        let (t, a) = state;
        let h = hits(t);
        let sum_h: F = h.iter().copied().sum();
        let t_next = t
            .iter()
            .zip(utilities)
            .zip(&h)
            .zip(gains)
            .map(|(((&t, u), &h), &k)| {
                let hc = h.max(hit_floor()).min(hit_ceil());
                let grad = u.marginal(hc).expect("interior") - *a;
                (t + dt * k * grad).max(F::zero())
            })
            .collect();
        let a_next = (*a + dt * gamma * (sum_h - capacity)).max(F::zero());
        (t_next, a_next)
    };
    let max_gain = gains.iter().copied().fold(F::zero(), F::max);
    let dt0 = opts.dt0.unwrap_or(F::of(1e-2) / max_gain.max(gamma).max(F::one()));

    let mut recorder = Recorder::new(catalog.len(), opts.record_stride);
    let (state_end, v0, accepted, rejected, max_inc) = drive(
        "integrate_primal_dual",
        (timers0.to_vec(), alpha0.max(F::zero())),
        opts.t_end,
        dt0,
        step,
        lyap,
        |t, state, v, last| recorder.push(t, Some(state.1), v, last, || hits(&state.0)),
    )?;

    let v_end = lyap(&state_end);
    Ok(FluidTrajectory {
        samples: recorder.samples,
        v0,
        v_end,
        terminal_hit_prob: hits(&state_end.0),
        terminal_alpha: Some(state_end.1),
        accepted_steps: accepted,
        rejected_steps: rejected,
        max_step_increase: max_inc,
    })
}

/// `int_{from}^{to} (x - from) / (k g(x)) dx` by composite Simpson with 256
/// panels, with the evaluation clamped away from x = 1 where the
/// sensitivity vanishes. Nonnegative for any orientation.
fn path_integral<F: Real>(from: F, to: F, gain: F, rate: F, cache_kind: CacheKind) -> F {
    const PANELS: usize = 256;
    if to == from {
        return F::zero();
    }
    let clamp_hi = F::one() - F::of(1e-9);
    let width = (to - from) / F::of(PANELS as f64);
    let integrand = |x: F| -> F {
        let xc = x.min(clamp_hi);
        (x - from) / (gain * cache_kind.sensitivity(rate, xc))
    };
    let mut sum = integrand(from) + integrand(to);
    for i in 1..PANELS {
        let x = from + width * F::of(i as f64);
        let w = if i % 2 == 1 { F::of(4.0) } else { F::of(2.0) };
        sum += w * integrand(x);
    }
    sum * width / F::of(3.0)
}

fn check_gains<F: Real>(n: usize, gains: &[F], timers0: &[F]) -> Result<()> {
    if gains.len() != n || timers0.len() != n {
        return Err(Error::Mismatch(format!(
            "{} gains / {} initial timers for {} files",
            gains.len(),
            timers0.len(),
            n
        )));
    }
    if gains.iter().any(|k| !(*k > F::zero())) {
        return Err(Error::domain("fluid", "gains must be positive"));
    }
    if timers0.iter().any(|t| !(*t >= F::zero())) {
        return Err(Error::domain("fluid", "initial timers must be nonnegative"));
    }
    Ok(())
}

struct Recorder<F> {
    samples: Vec<FluidSample<F>>,
    stride: u64,
    count: u64,
    keep_h: bool,
}

impl<F: Real> Recorder<F> {
    fn new(files: usize, stride: u64) -> Self {
        Recorder {
            samples: Vec::new(),
            stride: stride.max(1),
            count: 0,
            keep_h: files <= 32,
        }
    }

    fn push(&mut self, time: F, alpha: Option<F>, v: F, last: bool, h: impl FnOnce() -> Vec<F>) {
        let keep = self.count % self.stride == 0 || last;
        self.count += 1;
        if !keep {
            return;
        }
        let h = h();
        let sum_hit_prob = h.iter().copied().sum();
        self.samples.push(FluidSample {
            time,
            alpha,
            lyapunov: v,
            hit_prob: if self.keep_h { h } else { Vec::new() },
            sum_hit_prob,
        });
    }
}
