//! Online timer controllers.
//!
//! Each controller adapts per-file TTLs from observed events so that the
//! cache converges to the allocation an offline solve would produce,
//! without precomputing it:
//!
//! * dual: a price tracks the occupancy error and every timer is a function
//!   of the price;
//! * primal: per-file gradient steps balancing marginal utility against the
//!   marginal cost of the current excess;
//! * primal-dual: per-file gradient steps against the price, price driven
//!   by the occupancy error;
//! * hit/miss rules: fixed timer increments on misses and decrements on
//!   hits, equilibrating at hit probability `dm / (dm + dh)`.

use crate::cache::{CacheKind, Outcome};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::utility::{hit_ceil, hit_floor, CostFunction, UtilityFunction};

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

/// How inter-arrival samples are folded into the running estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorMode<F> {
    /// Keep exactly the latest sample.
    OneSample,
    /// Exponentially weighted moving average with the given smoothing
    /// factor in (0, 1].
    Ewma { smoothing: F },
}

/// When inter-arrival samples are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapSampling {
    /// Only on hits, as `armed_ttl - remaining_ttl` of the resident entry.
    HitOnly,
    /// On every request, as the time since the previous request of the same
    /// file (the remaining-TTL form evaluated even after expiry). Unbiased
    /// for the mean inter-arrival time.
    EveryRequest,
}

/// Per-file estimator of the mean inter-arrival time `1/rate`.
#[derive(Debug, Clone)]
pub struct RateEstimator<F> {
    mode: EstimatorMode<F>,
    sampling: GapSampling,
    mean_gap: Vec<F>,
    last_request: Vec<Option<F>>,
}

impl<F: Real> RateEstimator<F> {
    /// `bootstrap` seeds every file's mean-gap estimate so timers are
    /// defined before the first sample arrives.
    pub fn new(files: usize, bootstrap: F, mode: EstimatorMode<F>, sampling: GapSampling) -> Self {
        RateEstimator {
            mode,
            sampling,
            mean_gap: vec![bootstrap; files],
            last_request: vec![None; files],
        }
    }

    /// Record one sample `armed_ttl - remaining` from a resident entry.
    /// No-op unless `remaining > 0` (i.e. unless the request hit).
    pub fn observe_interarrival(&mut self, file: usize, armed_ttl: F, remaining: F) {
        if remaining > F::zero() {
            self.absorb(file, armed_ttl - remaining);
        }
    }

    /// Feed one request event through the configured sampling policy.
    pub fn observe_request(
        &mut self,
        file: usize,
        now: F,
        outcome: Outcome,
        armed_ttl: Option<F>,
        remaining: Option<F>,
    ) {
        match self.sampling {
            GapSampling::HitOnly => {
                if outcome.is_hit() {
                    if let (Some(ttl), Some(rem)) = (armed_ttl, remaining) {
                        self.observe_interarrival(file, ttl, rem);
                    }
                }
            }
            GapSampling::EveryRequest => {
                if let Some(prev) = self.last_request[file] {
                    self.absorb(file, now - prev);
                }
            }
        }
        self.last_request[file] = Some(now);
    }

    fn absorb(&mut self, file: usize, sample: F) {
        if !(sample > F::zero() && sample.is_finite()) {
            return;
        }
        match self.mode {
            EstimatorMode::OneSample => self.mean_gap[file] = sample,
            EstimatorMode::Ewma { smoothing } => {
                self.mean_gap[file] =
                    (F::one() - smoothing) * self.mean_gap[file] + smoothing * sample;
            }
        }
    }

    pub fn mean_interarrival(&self, file: usize) -> F {
        self.mean_gap[file]
    }

    pub fn rate(&self, file: usize) -> F {
        self.mean_gap[file].recip()
    }
}

/// Per-file EWMA of hit indicators; always stays in [0, 1].
#[derive(Debug, Clone)]
pub struct HitProbEstimator<F> {
    smoothing: F,
    estimate: Vec<F>,
}

impl<F: Real> HitProbEstimator<F> {
    pub fn new(files: usize, initial: F, smoothing: F) -> Self {
        HitProbEstimator {
            smoothing,
            estimate: vec![initial.max(F::zero()).min(F::one()); files],
        }
    }

    pub fn observe(&mut self, file: usize, outcome: Outcome) {
        let indicator = if outcome.is_hit() { F::one() } else { F::zero() };
        self.estimate[file] =
            (F::one() - self.smoothing) * self.estimate[file] + self.smoothing * indicator;
    }

    pub fn estimate(&self, file: usize) -> F {
        self.estimate[file]
    }
}

// ---------------------------------------------------------------------------
// Hit/miss increment rules
// ---------------------------------------------------------------------------

/// Preset timer increments applied on misses (`dm`) and hits (`dh`), chosen
/// so the drift balance `dm (1-h) = dh h` lands on the wanted hit
/// probability `dm / (dm + dh)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitMissRule {
    /// `dm = rate_i`, `dh = alpha - rate_i`: equilibrium `h = rate_i/alpha`,
    /// i.e. proportional fairness with rate weights.
    ProportionalFair,
    /// `dm = 1`, `dh = alpha - 1`: equilibrium `h = 1/alpha` for every file,
    /// independent of request rates.
    MaxMin,
}

impl HitMissRule {
    pub fn delta_miss<F: Real>(self, rate: F) -> F {
        match self {
            HitMissRule::ProportionalFair => rate,
            HitMissRule::MaxMin => F::one(),
        }
    }

    /// May be negative (when `alpha` is below the miss increment), which
    /// grows the timer on hits; the price dynamics correct this transient.
    pub fn delta_hit<F: Real>(self, rate: F, alpha: F) -> F {
        match self {
            HitMissRule::ProportionalFair => alpha - rate,
            HitMissRule::MaxMin => alpha - F::one(),
        }
    }

    pub fn equilibrium_hit_prob<F: Real>(self, rate: F, alpha: F) -> F {
        self.delta_miss(rate) / alpha
    }
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

/// How the per-file utilities are obtained during online control.
#[derive(Debug, Clone)]
pub enum UtilitySpec<F> {
    /// Fixed per-file utilities, independent of rate estimates.
    PerFile(Vec<UtilityFunction<F>>),
    /// LRU-equivalent utility at the file's (estimated) rate.
    LruEquivalent,
    /// FIFO-equivalent utility at the file's (estimated) rate.
    FifoEquivalent,
    /// Isoelastic with the file's (estimated) rate as its weight.
    BetaFairRateWeighted { beta: F },
    /// One common utility for every file.
    Identical(UtilityFunction<F>),
}

impl<F: Real> UtilitySpec<F> {
    fn materialize(&self, file: usize, rate: F) -> UtilityFunction<F> {
        match self {
            UtilitySpec::PerFile(us) => us[file],
            UtilitySpec::LruEquivalent => {
                UtilityFunction::lru_equiv(rate).expect("positive rate estimate")
            }
            UtilitySpec::FifoEquivalent => {
                UtilityFunction::fifo_equiv(rate).expect("positive rate estimate")
            }
            UtilitySpec::BetaFairRateWeighted { beta } => {
                UtilityFunction::beta_fair(rate, *beta).expect("positive rate estimate")
            }
            UtilitySpec::Identical(u) => *u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKnowledge {
    /// Timers may use the true catalog rates.
    Exact,
    /// Timers may only use estimated rates.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Dual,
    Primal,
    PrimalDual,
    HitMiss(HitMissRule),
}

#[derive(Debug, Clone)]
pub struct ControllerConfig<F> {
    pub algorithm: Algorithm,
    pub capacity: F,
    pub cache_kind: CacheKind,
    pub utility: UtilitySpec<F>,
    pub rate_knowledge: RateKnowledge,
    /// Price step size; defaults to `1e-2 / capacity`.
    pub gamma: Option<F>,
    /// Per-file gradient gains; defaults to `0.1 / U_i'(capacity/n)`.
    pub gain: Option<Vec<F>>,
    /// Apply a `1/sqrt(n)` decay to both step sizes.
    pub gain_decay: bool,
    pub estimator_mode: EstimatorMode<F>,
    pub gap_sampling: GapSampling,
    /// Smoothing of the per-file hit-probability EWMA.
    pub hit_prob_smoothing: F,
    /// Initial price; defaults to the median marginal utility at the
    /// uniform allocation.
    pub alpha0: Option<F>,
    /// Storage cost, required by the primal algorithm.
    pub cost: Option<CostFunction<F>>,
}

impl<F: Real> ControllerConfig<F> {
    pub fn new(
        algorithm: Algorithm,
        capacity: F,
        cache_kind: CacheKind,
        utility: UtilitySpec<F>,
    ) -> Self {
        ControllerConfig {
            algorithm,
            capacity,
            cache_kind,
            utility,
            rate_knowledge: RateKnowledge::Exact,
            gamma: None,
            gain: None,
            gain_decay: false,
            estimator_mode: EstimatorMode::OneSample,
            gap_sampling: GapSampling::HitOnly,
            hit_prob_smoothing: F::of(0.05),
            alpha0: None,
            cost: None,
        }
    }
}

/// Mutable state of one online controller, driven once per request.
#[derive(Debug, Clone)]
pub struct Controller<F> {
    algorithm: Algorithm,
    capacity: F,
    cache_kind: CacheKind,
    utility: UtilitySpec<F>,
    rate_knowledge: RateKnowledge,
    exact_rates: Vec<F>,
    gamma: F,
    gain: Vec<F>,
    gain_decay: bool,
    alpha: F,
    /// Raw timer accumulators. For the gradient algorithms these are kept
    /// nonnegative; the hit/miss rules accumulate unprojected so the drift
    /// balance stays exact, and only the served timer is floored at zero.
    timers: Vec<F>,
    rate_est: RateEstimator<F>,
    hp_est: HitProbEstimator<F>,
    cost: Option<CostFunction<F>>,
    steps: u64,
}

impl<F: Real> Controller<F> {
    pub fn new(catalog: &Catalog<F>, config: ControllerConfig<F>) -> Result<Self> {
        let n = catalog.len();
        let capacity = config.capacity;
        if !(capacity > F::zero() && capacity < F::of(n as f64)) {
            return Err(Error::Infeasible(format!(
                "capacity {capacity} outside (0, {n})"
            )));
        }
        if let UtilitySpec::PerFile(us) = &config.utility {
            if us.len() != n {
                return Err(Error::Mismatch(format!("{} utilities for {} files", us.len(), n)));
            }
            if us.iter().any(|u| !u.is_strictly_concave()) {
                return Err(Error::unsupported(
                    "controller",
                    "online control needs invertible marginals",
                ));
            }
        }
        if matches!(config.algorithm, Algorithm::Primal) && config.cost.is_none() {
            return Err(Error::Config("the primal algorithm needs a cost function".into()));
        }

        let total_rate = catalog.total_rate();
        let bootstrap_gap = F::of(n as f64) / total_rate;
        let rate_est = RateEstimator::new(
            n,
            bootstrap_gap,
            config.estimator_mode,
            config.gap_sampling,
        );

        // rates visible at construction time, for gain and price defaults
        let init_rate = |file: usize| match config.rate_knowledge {
            RateKnowledge::Exact => catalog.rate(file),
            RateKnowledge::Estimated => bootstrap_gap.recip(),
        };
        let uniform = capacity / F::of(n as f64);
        let marginal_at_uniform: Vec<F> = (0..n)
            .map(|i| {
                config
                    .utility
                    .materialize(i, init_rate(i))
                    .marginal(uniform)
                    .expect("uniform allocation is interior")
            })
            .collect();

        let alpha = match config.alpha0 {
            Some(a) => a.max(F::zero()),
            None => median(&marginal_at_uniform),
        };
        let gamma = config.gamma.unwrap_or(F::of(1e-2) / capacity);
        let gain = match config.gain {
            Some(k) => {
                if k.len() != n {
                    return Err(Error::Mismatch(format!("{} gains for {} files", k.len(), n)));
                }
                k
            }
            None => marginal_at_uniform.iter().map(|&m| F::of(0.1) / m).collect(),
        };

        Ok(Controller {
            algorithm: config.algorithm,
            capacity,
            cache_kind: config.cache_kind,
            utility: config.utility,
            rate_knowledge: config.rate_knowledge,
            exact_rates: catalog.rates().to_vec(),
            gamma,
            gain,
            gain_decay: config.gain_decay,
            alpha,
            timers: vec![F::zero(); n],
            rate_est,
            hp_est: HitProbEstimator::new(n, uniform, config.hit_prob_smoothing),
            cost: config.cost,
            steps: 0,
        })
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn capacity(&self) -> F {
        self.capacity
    }

    pub fn rate_estimate(&self, file: usize) -> F {
        match self.rate_knowledge {
            RateKnowledge::Exact => self.exact_rates[file],
            RateKnowledge::Estimated => self.rate_est.rate(file),
        }
    }

    pub fn hit_prob_estimate(&self, file: usize) -> F {
        self.hp_est.estimate(file)
    }

    pub fn estimator(&self) -> &RateEstimator<F> {
        &self.rate_est
    }

    fn decay(&self) -> F {
        if self.gain_decay {
            F::of(((self.steps + 1) as f64).sqrt()).recip()
        } else {
            F::one()
        }
    }

    /// Price update `alpha <- max(0, alpha + gamma (occupancy - capacity))`.
    pub fn dual_step(&mut self, occupancy: F) {
        self.alpha =
            (self.alpha + self.gamma * self.decay() * (occupancy - self.capacity)).max(F::zero());
    }

    /// Gradient step of one timer against the marginal storage cost.
    pub fn primal_step(&mut self, file: usize, hit_prob: F, occupancy: F) {
        let cost = self.cost.as_ref().expect("primal controller has a cost");
        let price = cost.marginal(occupancy - self.capacity);
        let gradient = self.marginal_at(file, hit_prob) - price;
        self.timers[file] =
            (self.timers[file] + self.gain[file] * self.decay() * gradient).max(F::zero());
    }

    /// Gradient step of one timer against the price, then the price update.
    pub fn primal_dual_step(&mut self, file: usize, hit_prob: F, occupancy: F) {
        let gradient = self.marginal_at(file, hit_prob) - self.alpha;
        self.timers[file] =
            (self.timers[file] + self.gain[file] * self.decay() * gradient).max(F::zero());
        self.dual_step(occupancy);
    }

    /// Apply the configured increment rule to one timer.
    pub fn hit_miss_step(&mut self, file: usize, outcome: Outcome) {
        let Algorithm::HitMiss(rule) = self.algorithm else {
            return;
        };
        let rate = self.rate_estimate(file);
        match outcome {
            Outcome::Miss => self.timers[file] += rule.delta_miss(rate),
            Outcome::Hit => self.timers[file] -= rule.delta_hit(rate, self.alpha),
        }
    }

    fn marginal_at(&self, file: usize, hit_prob: F) -> F {
        let h = hit_prob.max(hit_floor()).min(hit_ceil());
        self.utility
            .materialize(file, self.rate_estimate(file))
            .marginal(h)
            .expect("clamped interior hit probability")
    }

    /// The TTL the controller would arm for `file` right now.
    pub fn serving_timer(&self, file: usize) -> F {
        match self.algorithm {
            Algorithm::Dual => self.timer_from_price(file),
            _ => self.timers[file].max(F::zero()),
        }
    }

    /// All serving timers at the current state.
    pub fn serving_timers(&self) -> Vec<F> {
        (0..self.timers.len()).map(|i| self.serving_timer(i)).collect()
    }

    fn timer_from_price(&self, file: usize) -> F {
        let rate = self.rate_estimate(file);
        let price = self.alpha.max(F::min_positive_value());
        // The rate-scaled families admit closed-form timers in which the
        // rate cancels partially or fully; evaluating them directly keeps
        // the timer exact where the generic inverse would saturate at its
        // clamp under an extreme rate estimate.
        match (&self.utility, self.cache_kind) {
            (UtilitySpec::LruEquivalent, CacheKind::Reset)
            | (UtilitySpec::FifoEquivalent, CacheKind::NonReset) => price.recip(),
            (UtilitySpec::LruEquivalent, CacheKind::NonReset) => (rate / price).exp_m1() / rate,
            (UtilitySpec::FifoEquivalent, CacheKind::Reset) => (rate / price).ln_1p() / rate,
            _ => {
                let h = self
                    .utility
                    .materialize(file, rate)
                    .inverse_marginal(price)
                    .expect("positive price, strictly concave utility");
                self.cache_kind
                    .timer_for(rate, h)
                    .expect("clamped hit probability is in [0,1)")
            }
        }
    }

    /// Run the full per-request pipeline: estimator updates, the configured
    /// control step, and the serving-timer decision. `occupancy` is the
    /// resident count immediately before admission.
    pub fn on_request(
        &mut self,
        file: usize,
        now: F,
        outcome: Outcome,
        occupancy: usize,
        armed_ttl: Option<F>,
        remaining: Option<F>,
    ) -> F {
        if self.rate_knowledge == RateKnowledge::Estimated {
            self.rate_est.observe_request(file, now, outcome, armed_ttl, remaining);
        }
        self.hp_est.observe(file, outcome);
        let occ = F::of(occupancy as f64);
        match self.algorithm {
            Algorithm::Dual => self.dual_step(occ),
            Algorithm::Primal => {
                let h = self.hp_est.estimate(file);
                self.primal_step(file, h, occ);
            }
            Algorithm::PrimalDual => {
                let h = self.hp_est.estimate(file);
                self.primal_dual_step(file, h, occ);
            }
            Algorithm::HitMiss(_) => {
                self.hit_miss_step(file, outcome);
                self.dual_step(occ);
            }
        }
        self.steps += 1;
        self.serving_timer(file)
    }
}

fn median<F: Real>(values: &[F]) -> F {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("marginals are not NaN"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        F::of(0.5) * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
