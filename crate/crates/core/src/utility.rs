//! Utility and cost functions.
//!
//! A utility maps a file's hit probability to a satisfaction value; it is
//! strictly increasing and strictly concave on (0,1) for every family here
//! except the `beta = 0` and `beta -> inf` ends of the isoelastic family,
//! which are kept as explicit special cases with closed-form allocations.
//!
//! Three families are provided:
//!
//! * `beta_fair`: `w * h^(1-beta) / (1-beta)` (`w * ln h` at `beta = 1`),
//!   covering throughput (0), proportional fairness (1), minimum potential
//!   delay (2) and max-min fairness (inf);
//! * `fifo_equiv`: `rate * (ln h - h)`, whose maximizer reproduces a FIFO
//!   cache served by a non-reset timer;
//! * `lru_equiv`: `rate * li(1 - h)`, whose maximizer reproduces an LRU
//!   cache served by a reset timer.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower clamp applied to allocations returned by [`UtilityFunction::inverse_marginal`].
///
/// Keeps downstream timer formulas away from `log(0)` and division by zero.
pub fn hit_floor<F: Real>() -> F {
    F::of(1e-12)
}

/// Upper clamp applied to allocations returned by [`UtilityFunction::inverse_marginal`].
pub fn hit_ceil<F: Real>() -> F {
    (F::one() - F::of(1e-12)).min(F::one() - F::epsilon())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind<F> {
    BetaFair { weight: F, beta: F },
    FifoEquiv { rate: F },
    LruEquiv { rate: F },
}

/// A per-file utility function of the hit probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityFunction<F> {
    kind: Kind<F>,
}

impl<F: Real> UtilityFunction<F> {
    /// Isoelastic utility `w * h^(1-beta) / (1-beta)`, `w * ln h` at `beta = 1`.
    ///
    /// `beta` may be `0` or `inf`; those members are not strictly concave and
    /// only support closed-form allocation procedures, so [`Self::value`],
    /// [`Self::marginal`] and [`Self::inverse_marginal`] reject them.
    pub fn beta_fair(weight: F, beta: F) -> Result<Self> {
        if !(weight.is_finite() && weight >= F::zero()) {
            return Err(Error::domain("beta_fair", format!("weight must be >= 0, got {weight}")));
        }
        if beta.is_nan() || beta < F::zero() {
            return Err(Error::domain("beta_fair", format!("beta must be >= 0, got {beta}")));
        }
        Ok(Self { kind: Kind::BetaFair { weight, beta } })
    }

    /// Proportional-fairness member of the isoelastic family (`beta = 1`).
    pub fn log_weighted(weight: F) -> Result<Self> {
        Self::beta_fair(weight, F::one())
    }

    /// Utility whose maximization reproduces a FIFO cache for a file
    /// requested at `rate`.
    pub fn fifo_equiv(rate: F) -> Result<Self> {
        check_rate("fifo_equiv", rate)?;
        Ok(Self { kind: Kind::FifoEquiv { rate } })
    }

    /// Utility whose maximization reproduces an LRU cache for a file
    /// requested at `rate`.
    pub fn lru_equiv(rate: F) -> Result<Self> {
        check_rate("lru_equiv", rate)?;
        Ok(Self { kind: Kind::LruEquiv { rate } })
    }

    /// `false` exactly for the `beta = 0` and `beta -> inf` special cases.
    pub fn is_strictly_concave(&self) -> bool {
        match self.kind {
            Kind::BetaFair { beta, .. } => beta > F::zero() && !beta.is_infinite(),
            _ => true,
        }
    }

    /// The request rate the utility is scaled by, when it is.
    pub fn rate(&self) -> Option<F> {
        match self.kind {
            Kind::FifoEquiv { rate } | Kind::LruEquiv { rate } => Some(rate),
            Kind::BetaFair { .. } => None,
        }
    }

    pub fn weight(&self) -> Option<F> {
        match self.kind {
            Kind::BetaFair { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn beta(&self) -> Option<F> {
        match self.kind {
            Kind::BetaFair { beta, .. } => Some(beta),
            _ => None,
        }
    }

    fn reject_degenerate(&self, op: &'static str) -> Result<()> {
        if self.is_strictly_concave() {
            Ok(())
        } else {
            Err(Error::unsupported(
                op,
                "beta = 0 and beta -> inf are not strictly concave; use their closed-form allocations",
            ))
        }
    }

    /// U(h). Defined on `(0,1)`; `h = 1` is additionally allowed for
    /// `beta < 1` and the FIFO-equivalent family.
    pub fn value(&self, h: F) -> Result<F> {
        self.reject_degenerate("value")?;
        let one = F::one();
        let h_one_ok = matches!(self.kind, Kind::FifoEquiv { .. })
            || matches!(self.kind, Kind::BetaFair { beta, .. } if beta < one);
        if !(h > F::zero() && (h < one || (h == one && h_one_ok))) {
            return Err(Error::domain("value", format!("hit probability {h} outside domain")));
        }
        Ok(match self.kind {
            Kind::BetaFair { weight, beta } => {
                if beta == one {
                    weight * h.ln()
                } else {
                    weight * h.powf(one - beta) / (one - beta)
                }
            }
            Kind::FifoEquiv { rate } => rate * (h.ln() - h),
            Kind::LruEquiv { rate } => rate * li(one - h)?,
        })
    }

    /// U'(h), strictly positive and strictly decreasing on `(0,1)`.
    pub fn marginal(&self, h: F) -> Result<F> {
        self.reject_degenerate("marginal")?;
        if !(h > F::zero() && h < F::one()) {
            return Err(Error::domain("marginal", format!("hit probability {h} outside (0,1)")));
        }
        Ok(match self.kind {
            Kind::BetaFair { weight, beta } => weight * h.powf(-beta),
            Kind::FifoEquiv { rate } => rate / h - rate,
            Kind::LruEquiv { rate } => -rate / (F::one() - h).ln(),
        })
    }

    /// (U')^-1 at dual price `price`, clamped into `[hit_floor, hit_ceil]`.
    pub fn inverse_marginal(&self, price: F) -> Result<F> {
        self.reject_degenerate("inverse_marginal")?;
        if !(price > F::zero()) {
            return Err(Error::domain("inverse_marginal", format!("price must be > 0, got {price}")));
        }
        let raw = match self.kind {
            Kind::BetaFair { weight, beta } => (weight / price).powf(beta.recip()),
            Kind::FifoEquiv { rate } => rate / (price + rate),
            Kind::LruEquiv { rate } => -((-rate / price).exp() - F::one()),
        };
        Ok(raw.max(hit_floor()).min(hit_ceil()))
    }
}

fn check_rate<F: Real>(op: &'static str, rate: F) -> Result<()> {
    if rate.is_finite() && rate > F::zero() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("rate must be positive and finite, got {rate}")))
    }
}

// ---------------------------------------------------------------------------
// Logarithmic integral
// ---------------------------------------------------------------------------

/// li(x) = integral of 1/ln(t) from 0 to x, for `0 <= x < 1`.
///
/// The integrand is negative on (0,1) and singular only at t = 1, so the
/// value is finite and non-positive on the whole domain. Computed by
/// globally adaptive Gauss-Kronrod (G7,K15) quadrature to an absolute
/// tolerance of 1e-10 (or a few ulps, whichever is larger).
pub fn li<F: Real>(x: F) -> Result<F> {
    if !(x >= F::zero()) || x >= F::one() {
        return Err(Error::domain("li", format!("argument {x} outside [0, 1)")));
    }
    if x == F::zero() {
        return Ok(F::zero());
    }
    let tol = F::of(1e-10).max(F::epsilon() * F::of(32.0));
    Ok(adaptive_gk(|t| t.ln().recip(), F::zero(), x, tol))
}

// K15 abscissae (positive half) and weights; entries at odd indices are the
// embedded G7 nodes.
const GK_NODES: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One (G7,K15) panel: returns (kronrod estimate, |kronrod - gauss|).
fn gk15<F: Real>(f: &impl Fn(F) -> F, a: F, b: F) -> (F, F) {
    let half = F::of(0.5) * (b - a);
    let mid = F::of(0.5) * (a + b);
    let mut kronrod = F::zero();
    let mut gauss = F::zero();
    for (i, (&x, &wk)) in GK_NODES.iter().zip(K15_WEIGHTS.iter()).enumerate() {
        let offset = half * F::of(x);
        let fsum = if x == 0.0 {
            f(mid)
        } else {
            f(mid - offset) + f(mid + offset)
        };
        kronrod += F::of(wk) * fsum;
        if i % 2 == 1 {
            gauss += F::of(G7_WEIGHTS[i / 2]) * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Globally adaptive quadrature: repeatedly split the panel with the largest
/// error estimate until the summed estimate meets `tol`.
fn adaptive_gk<F: Real>(f: impl Fn(F) -> F, a: F, b: F, tol: F) -> F {
    const MAX_PANELS: usize = 4096;
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let total_err: F = panels.iter().map(|p| p.3).sum();
        if total_err <= tol || panels.len() >= MAX_PANELS {
            return panels.iter().map(|p| p.2).sum();
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|l, r| l.1 .3.partial_cmp(&r.1 .3).expect("error estimates are not NaN"))
            .map(|(i, _)| i)
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = F::of(0.5) * (pa + pb);
        if mid <= pa || mid >= pb {
            // interval at floating-point resolution; keep its estimate
            let (v, _) = gk15(&f, pa, pb);
            panels.push((pa, pb, v, F::zero()));
            continue;
        }
        let (vl, el) = gk15(&f, pa, mid);
        let (vr, er) = gk15(&f, mid, pb);
        panels.push((pa, mid, vl, el));
        panels.push((mid, pb, vr, er));
    }
}

// ---------------------------------------------------------------------------
// Cost of storage beyond the nominal capacity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// `C(x) = (scale/stiffness) * exp(stiffness * x)`; marginal cost is
    /// strictly increasing and invertible on all of R.
    Exponential,
    /// Zero at or below the nominal capacity, quadratic above:
    /// `C(x) = scale * stiffness * x^2 / 2` for `x > 0`.
    QuadraticRamp,
}

/// Convex, nondecreasing penalty on storage excess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFunction<F> {
    kind: CostKind,
    scale: F,
    stiffness: F,
}

impl<F: Real> CostFunction<F> {
    pub fn exponential(scale: F, stiffness: F) -> Result<Self> {
        Self::new(CostKind::Exponential, scale, stiffness)
    }

    pub fn quadratic_ramp(scale: F, stiffness: F) -> Result<Self> {
        Self::new(CostKind::QuadraticRamp, scale, stiffness)
    }

    fn new(kind: CostKind, scale: F, stiffness: F) -> Result<Self> {
        if !(scale.is_finite() && scale >= F::zero()) {
            return Err(Error::domain("cost", format!("scale must be >= 0, got {scale}")));
        }
        if !(stiffness.is_finite() && stiffness > F::zero()) {
            return Err(Error::domain("cost", format!("stiffness must be > 0, got {stiffness}")));
        }
        Ok(Self { kind, scale, stiffness })
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn scale(&self) -> F {
        self.scale
    }

    pub fn stiffness(&self) -> F {
        self.stiffness
    }

    /// C(x); defined for every real `x` (storage excess may be negative).
    pub fn value(&self, x: F) -> F {
        match self.kind {
            CostKind::Exponential => self.scale / self.stiffness * (self.stiffness * x).exp(),
            CostKind::QuadraticRamp => {
                if x > F::zero() {
                    F::of(0.5) * self.scale * self.stiffness * x * x
                } else {
                    F::zero()
                }
            }
        }
    }

    /// C'(x), nonnegative and nondecreasing.
    pub fn marginal(&self, x: F) -> F {
        match self.kind {
            CostKind::Exponential => self.scale * (self.stiffness * x).exp(),
            CostKind::QuadraticRamp => {
                if x > F::zero() {
                    self.scale * self.stiffness * x
                } else {
                    F::zero()
                }
            }
        }
    }

    /// Whether C' is strictly increasing on all reals.
    pub fn globally_invertible_marginal(&self) -> bool {
        self.kind == CostKind::Exponential && self.scale > F::zero()
    }
}
