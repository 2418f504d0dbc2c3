//! Method of moving asymptotes: separable convex approximations, asymptote
//! adaptation, move limits and a dual solver for the single-constraint
//! subproblem.

use crate::error::{check_len, invalid, Result};
use crate::scalar::Real;

/// Relative position of the subproblem bounds between design and asymptote.
const ASYMPTOTE_MARGIN: f64 = 0.1;
const GAMMA_SHRINK: f64 = 0.7;
const GAMMA_GROW: f64 = 1.2;
const GAP_INIT: f64 = 0.5;
const GAP_MIN: f64 = 0.01;
const GAP_MAX: f64 = 10.0;
/// Upper end of the dual bracket; equals the penalty of the elastic variable.
pub const ELASTIC_PENALTY: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct MmaState<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub z_prev1: Option<Vec<T>>,
    pub z_prev2: Option<Vec<T>>,
    pub tau: T,
    pub iteration: usize,
    pub rho_min: T,
    pub rho_max: T,
}

impl<T: Real> MmaState<T> {
    pub fn new(dim: usize, tau: T, rho_min: T, rho_max: T) -> Result<Self> {
        if !(rho_min < rho_max) {
            return invalid("rho_min must be below rho_max");
        }
        if !(tau > T::zero()) {
            return invalid("move limit must be positive");
        }
        Ok(Self {
            lower: vec![rho_min; dim],
            upper: vec![rho_max; dim],
            z_prev1: None,
            z_prev2: None,
            tau,
            iteration: 0,
            rho_min,
            rho_max,
        })
    }

    fn range(&self) -> T {
        self.rho_max - self.rho_min
    }

    /// Sets the asymptotes around the current design `z` and advances the
    /// iteration counter.
    pub fn update_asymptotes(&mut self, z: &[T]) -> Result<()> {
        check_len(self.lower.len(), z.len())?;
        self.iteration += 1;
        let range = self.range();
        match (&self.z_prev1, &self.z_prev2) {
            (Some(z1), Some(z2)) if self.iteration > 2 => {
                let (lo, hi) = (T::lit(GAP_MIN) * range, T::lit(GAP_MAX) * range);
                for j in 0..z.len() {
                    let trend = (z[j] - z1[j]) * (z1[j] - z2[j]);
                    let gamma = if trend < T::zero() {
                        T::lit(GAMMA_SHRINK)
                    } else if trend > T::zero() {
                        T::lit(GAMMA_GROW)
                    } else {
                        T::one()
                    };
                    let gl = (gamma * (z1[j] - self.lower[j])).max(lo).min(hi);
                    let gu = (gamma * (self.upper[j] - z1[j])).max(lo).min(hi);
                    self.lower[j] = z[j] - gl;
                    self.upper[j] = z[j] + gu;
                }
            }
            _ => {
                let g = T::lit(GAP_INIT) * range;
                for j in 0..z.len() {
                    self.lower[j] = z[j] - g;
                    self.upper[j] = z[j] + g;
                }
            }
        }
        self.z_prev2 = self.z_prev1.take();
        self.z_prev1 = Some(z.to_vec());
        Ok(())
    }

    /// Multiplies `tau` by `factor` whenever the iteration count is a positive
    /// multiple of `period`.
    pub fn apply_move_limits(&mut self, schedule: Option<(usize, T)>) {
        if let Some((period, factor)) = schedule {
            if period > 0 && self.iteration > 0 && self.iteration % period == 0 {
                self.tau = self.tau * factor;
            }
        }
    }

    /// Box bounds for the subproblem around `z`.
    pub fn bounds(&self, z: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        check_len(self.lower.len(), z.len())?;
        let m = T::lit(ASYMPTOTE_MARGIN);
        let lo = z
            .iter()
            .zip(&self.lower)
            .map(|(zj, l)| self.rho_min.max(*zj - self.tau).max(*l + m * (*zj - *l)))
            .collect();
        let hi = z
            .iter()
            .zip(&self.upper)
            .map(|(zj, u)| self.rho_max.min(*zj + self.tau).min(*u - m * (*u - *zj)))
            .collect();
        Ok((lo, hi))
    }

    pub fn subproblem(&self, z: &[T], objective: (T, &[T]), constraint: (T, &[T])) -> Result<Subproblem<T>> {
        let (alpha, beta) = self.bounds(z)?;
        Ok(Subproblem {
            objective: build_approx(z, objective.0, objective.1, &self.lower, &self.upper)?,
            constraints: vec![build_approx(z, constraint.0, constraint.1, &self.lower, &self.upper)?],
            alpha,
            beta,
            expansion: z.to_vec(),
        })
    }
}

/// `g~(z) = r + sum_j p_j / (U_j - z_j) + q_j / (z_j - L_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableApprox<T> {
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub r: T,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> SeparableApprox<T> {
    pub fn value(&self, z: &[T]) -> T {
        let mut s = self.r;
        for j in 0..z.len() {
            s = s + self.p[j] / (self.upper[j] - z[j]) + self.q[j] / (z[j] - self.lower[j]);
        }
        s
    }

    pub fn gradient(&self, z: &[T]) -> Vec<T> {
        (0..z.len())
            .map(|j| {
                let (b, a) = (self.upper[j] - z[j], z[j] - self.lower[j]);
                self.p[j] / (b * b) - self.q[j] / (a * a)
            })
            .collect()
    }
}

pub fn build_approx<T: Real>(z: &[T], g_val: T, g_grad: &[T], lower: &[T], upper: &[T]) -> Result<SeparableApprox<T>> {
    let n = z.len();
    check_len(n, g_grad.len())?;
    check_len(n, lower.len())?;
    check_len(n, upper.len())?;
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut r = g_val;
    for j in 0..n {
        let (b, a) = (upper[j] - z[j], z[j] - lower[j]);
        if !(a > T::zero() && b > T::zero()) {
            return invalid(format!("asymptotes do not enclose variable {j}"));
        }
        let d = g_grad[j];
        if d > T::zero() {
            p[j] = b * b * d;
            r = r - p[j] / b;
        } else if d < T::zero() {
            q[j] = -(a * a) * d;
            r = r - q[j] / a;
        }
    }
    Ok(SeparableApprox { p, q, r, lower: lower.to_vec(), upper: upper.to_vec() })
}

/// Minimize `objective` subject to `constraints[i](z) <= 0` and `alpha <= z <= beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem<T> {
    pub objective: SeparableApprox<T>,
    pub constraints: Vec<SeparableApprox<T>>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    /// Design the approximations were built at.
    pub expansion: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution<T> {
    pub z: Vec<T>,
    pub multiplier: T,
    /// Value of the approximated constraint at `z`.
    pub constraint_value: T,
    /// Positive part of `constraint_value` when the elastic variable is active.
    pub violation: T,
}

impl<T: Real> Subproblem<T> {
    /// Primal minimizer of the Lagrangian for multiplier `lam`.
    pub fn primal(&self, lam: T) -> Vec<T> {
        let o = &self.objective;
        let c = &self.constraints[0];
        (0..self.alpha.len())
            .map(|j| {
                let pp = o.p[j] + lam * c.p[j];
                let qq = o.q[j] + lam * c.q[j];
                let (sp, sq) = (pp.sqrt(), qq.sqrt());
                let z = if sp + sq > T::zero() {
                    (sp * o.lower[j] + sq * o.upper[j]) / (sp + sq)
                } else {
                    self.expansion[j]
                };
                z.max(self.alpha[j]).min(self.beta[j])
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.constraints.len() != 1 {
            return invalid("the dual solver handles exactly one constraint");
        }
        let n = self.alpha.len();
        check_len(n, self.beta.len())?;
        check_len(n, self.expansion.len())?;
        check_len(n, self.objective.p.len())?;
        check_len(n, self.constraints[0].p.len())?;
        for j in 0..n {
            let (a, b) = (self.alpha[j], self.beta[j]);
            if !(a <= b && a > self.objective.lower[j] && b < self.objective.upper[j]) {
                return invalid(format!("bad bounds for variable {j}"));
            }
        }
        Ok(())
    }

    /// Bisection on the scalar dual variable over `[0, ELASTIC_PENALTY]`.
    pub fn solve(&self) -> Result<SubproblemSolution<T>> {
        self.check()?;
        let g = |lam: T| {
            let z = self.primal(lam);
            let v = self.constraints[0].value(&z);
            (z, v)
        };
        let (z0, v0) = g(T::zero());
        if v0 <= T::zero() {
            return Ok(SubproblemSolution { z: z0, multiplier: T::zero(), constraint_value: v0, violation: T::zero() });
        }
        let cap = T::lit(ELASTIC_PENALTY);
        let (zc, vc) = g(cap);
        if vc > T::zero() {
            return Ok(SubproblemSolution { z: zc, multiplier: cap, constraint_value: vc, violation: vc });
        }
        let (mut lo, mut hi) = (T::zero(), cap);
        let (mut z_hi, mut v_hi) = (zc, vc);
        for _ in 0..200 {
            let mid = T::lit(0.5) * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            let (z, v) = g(mid);
            if v > T::zero() {
                lo = mid;
            } else {
                hi = mid;
                z_hi = z;
                v_hi = v;
                if v == T::zero() {
                    break;
                }
            }
        }
        Ok(SubproblemSolution { z: z_hi, multiplier: hi, constraint_value: v_hi, violation: T::zero() })
    }
}

/// Largest KKT violation of a candidate: primal feasibility, complementary
/// slackness and projected stationarity of the Lagrangian.
pub fn kkt_residual<T: Real>(sp: &Subproblem<T>, sol: &SubproblemSolution<T>) -> T {
    let c = &sp.constraints[0];
    let gv = c.value(&sol.z);
    let elastic = sol.multiplier >= T::lit(ELASTIC_PENALTY);
    let feas = if elastic { T::zero() } else { gv.max(T::zero()) };
    let slack = if elastic { T::zero() } else { (sol.multiplier * gv).abs() };
    let go = sp.objective.gradient(&sol.z);
    let gc = c.gradient(&sol.z);
    let mut stat = T::zero();
    for j in 0..sol.z.len() {
        let d = go[j] + sol.multiplier * gc[j];
        let r = if sol.z[j] <= sp.alpha[j] {
            d.min(T::zero()).abs()
        } else if sol.z[j] >= sp.beta[j] {
            d.max(T::zero())
        } else {
            d.abs()
        };
        stat = stat.max(r);
    }
    feas.max(slack).max(stat)
}
