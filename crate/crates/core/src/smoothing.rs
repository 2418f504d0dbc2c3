//! Smoothed indicator functions for the chance constraint.
//!
//! `h(t) = (tanh(a1 t) + 1) / 2 + a2 (t - t / (1 + exp(a3 t)))`. The second
//! term is a smooth `max(0, t)` that keeps the constraint gradient alive deep
//! in the infeasible region.

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Past this `|a3 t|` the logistic factor is 0 or 1 to working precision.
const LOGISTIC_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams<T> {
    pub a1: T,
    pub a2: T,
    pub a3: T,
    pub c_max: T,
    pub p_level: T,
}

impl<T: Real> SmoothingParams<T> {
    pub fn new(a1: T, a2: T, a3: T, c_max: T, p_level: T) -> Result<Self> {
        if !(a1 > T::zero() && a3 > T::zero()) {
            return invalid("a1 and a3 must be positive");
        }
        if !(a2 >= T::zero()) {
            return invalid("a2 must be nonnegative");
        }
        if !(c_max > T::zero()) {
            return invalid("c_max must be positive");
        }
        if !(p_level > T::zero() && p_level < T::one()) {
            return invalid("probability level must lie in (0, 1)");
        }
        Ok(Self { a1, a2, a3, c_max, p_level })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// Indicator of `(0, inf)`.
    Nonsmooth,
    /// `(tanh(a1 t) + 1) / 2`.
    Tanh,
    /// Tanh plus the smoothmax term.
    Steepened,
}

impl Flavor {
    pub const ALL: [Flavor; 3] = [Flavor::Tanh, Flavor::Steepened, Flavor::Nonsmooth];
}

/// Logistic `1 / (1 + exp(-x))` without overflow.
#[inline]
fn logistic<T: Real>(x: T) -> T {
    let cut = T::lit(LOGISTIC_CUTOFF);
    if x > cut {
        T::one()
    } else if x < -cut {
        T::zero()
    } else if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `t - t / (1 + exp(a3 t))`.
#[inline]
pub fn smoothmax<T: Real>(t: T, a3: T) -> T {
    let x = a3 * t;
    let cut = T::lit(LOGISTIC_CUTOFF);
    let tail = if x > cut {
        T::zero()
    } else if x < -cut {
        t
    } else {
        t * logistic(-x)
    };
    t - tail
}

#[inline]
pub fn smoothmax_deriv<T: Real>(t: T, a3: T) -> T {
    let sig = logistic(a3 * t);
    sig + a3 * t * sig * (T::one() - sig)
}

/// `sech^2(x)` computed from `exp(-2|x|)` so it underflows gracefully.
#[inline]
fn sech2<T: Real>(x: T) -> T {
    let e = (-(x.abs() + x.abs())).exp();
    let four = T::lit(4.0);
    four * e / ((T::one() + e) * (T::one() + e))
}

#[inline]
pub fn h_tanh<T: Real>(t: T, a1: T) -> T {
    T::lit(0.5) * ((a1 * t).tanh() + T::one())
}

#[inline]
pub fn h_eval<T: Real>(t: T, p: &SmoothingParams<T>) -> T {
    h_tanh(t, p.a1) + p.a2 * smoothmax(t, p.a3)
}

#[inline]
pub fn h_deriv<T: Real>(t: T, p: &SmoothingParams<T>) -> T {
    T::lit(0.5) * p.a1 * sech2(p.a1 * t) + p.a2 * smoothmax_deriv(t, p.a3)
}

/// Indicator of the open interval `(0, inf)`.
#[inline]
pub fn indicator_eval<T: Real>(t: T) -> T {
    if t > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

#[inline]
pub fn flavor_eval<T: Real>(flavor: Flavor, t: T, p: &SmoothingParams<T>) -> T {
    match flavor {
        Flavor::Nonsmooth => indicator_eval(t),
        Flavor::Tanh => h_tanh(t, p.a1),
        Flavor::Steepened => h_eval(t, p),
    }
}

pub(crate) fn check_weights<T: Real>(weights: &[T]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= T::zero())) {
        return invalid("quadrature weights must be nonnegative");
    }
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-9) {
        return invalid(format!("quadrature weights sum to {total}, expected 1"));
    }
    Ok(())
}

/// `sum_i w_i f(c_i - c_max)` for the chosen flavor `f`.
pub fn aggregate_cc<T: Real>(
    compliances: &[T],
    quad_weights: &[T],
    params: &SmoothingParams<T>,
    flavor: Flavor,
) -> Result<T> {
    crate::error::check_len(compliances.len(), quad_weights.len())?;
    check_weights(quad_weights)?;
    Ok(compliances
        .iter()
        .zip(quad_weights)
        .map(|(c, w)| *w * flavor_eval(flavor, *c - params.c_max, params))
        .sum())
}
