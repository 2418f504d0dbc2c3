//! Dense-quadrature evaluation of designs.
//!
//! All three indicator flavors are evaluated on the same state solves, so
//! their differences reflect only the outer function.

use crate::benchmarks::{ProblemDef, ProblemKind};
use crate::csg_weights::QuadratureSet;
use crate::design_field::SimpParams;
use crate::error::{check_len, invalid, Result};
use crate::scalar::Real;
use crate::smoothing::{Flavor, SmoothingParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseCc<T> {
    pub g_smooth: T,
    pub g_steepened: T,
    pub g_nonsmooth: T,
}

impl<T: Real> DenseCc<T> {
    pub fn get(&self, flavor: Flavor) -> T {
        match flavor {
            Flavor::Tanh => self.g_smooth,
            Flavor::Steepened => self.g_steepened,
            Flavor::Nonsmooth => self.g_nonsmooth,
        }
    }
}

/// Inner profiles of a design at every node of a parameter quadrature.
#[derive(Debug, Clone)]
pub struct DenseEvaluation<T> {
    pub quad: QuadratureSet<T>,
    pub profiles: Vec<Vec<T>>,
    pub profile_weights: Vec<T>,
    pub smoothing: SmoothingParams<T>,
}

impl<T: Real> DenseEvaluation<T> {
    pub fn new(problem: &ProblemDef<T>, rho: &[T], simp: &SimpParams<T>, smoothing: &SmoothingParams<T>, quad: QuadratureSet<T>) -> Result<Self> {
        check_len(problem.dim(), rho.len())?;
        let profiles = problem.profiles(rho, simp, &quad.points)?;
        Ok(Self { quad, profiles, profile_weights: problem.profile_weights(), smoothing: *smoothing })
    }

    /// Composed value per parameter node.
    pub fn node_values(&self, flavor: Flavor) -> Vec<T> {
        let sm = &self.smoothing;
        self.profiles
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&self.profile_weights)
                    .map(|(v, w)| *w * crate::smoothing::flavor_eval(flavor, *v - sm.c_max, sm))
                    .sum()
            })
            .collect()
    }

    pub fn cc(&self, flavor: Flavor) -> T {
        self.node_values(flavor).iter().zip(&self.quad.weights).map(|(v, w)| *v * *w).sum()
    }

    pub fn all(&self) -> DenseCc<T> {
        DenseCc { g_smooth: self.cc(Flavor::Tanh), g_steepened: self.cc(Flavor::Steepened), g_nonsmooth: self.cc(Flavor::Nonsmooth) }
    }

    /// `(weight, inner value / c_max)` for every node and inner profile entry.
    pub fn relative_compliances(&self) -> Vec<(T, T)> {
        let mut out = Vec::new();
        for (p, wq) in self.profiles.iter().zip(&self.quad.weights) {
            for (v, wp) in p.iter().zip(&self.profile_weights) {
                out.push((*wq * *wp, *v / self.smoothing.c_max));
            }
        }
        out
    }
}

/// Dense trapezoidal verification with `n` nodes per parameter axis.
pub fn dense_cc<T: Real>(problem: &ProblemDef<T>, rho: &[T], simp: &SimpParams<T>, smoothing: &SmoothingParams<T>, n: usize) -> Result<DenseCc<T>> {
    if n < 2 {
        return invalid("dense verification needs at least 2 nodes per axis");
    }
    Ok(DenseEvaluation::new(problem, rho, simp, smoothing, problem.trapezoid_rule(n)?)?.all())
}

/// `H1(xi)` (steepened flavor) on an `n x n` trapezoid grid over the plate's
/// weak-spot domain; rows are `(xi_1, xi_2, value)`.
pub fn h1_map<T: Real>(problem: &ProblemDef<T>, rho: &[T], simp: &SimpParams<T>, smoothing: &SmoothingParams<T>, n: usize) -> Result<Vec<[T; 3]>> {
    if problem.kind != ProblemKind::Plate {
        return invalid("H1 maps are defined for the plate problem");
    }
    if n < 2 {
        return invalid("H1 grid needs at least 2 nodes per axis");
    }
    let ev = DenseEvaluation::new(problem, rho, simp, smoothing, problem.trapezoid_rule(n)?)?;
    Ok(ev.quad.points.iter().zip(ev.node_values(Flavor::Steepened)).map(|(x, v)| [x[0], x[1], v]).collect())
}

/// Inner values divided by `c_max` at one parameter: one entry for the
/// wheel, one per omega node for the plate.
pub fn relative_compliance<T: Real>(problem: &ProblemDef<T>, rho: &[T], simp: &SimpParams<T>, smoothing: &SmoothingParams<T>, param: &[T]) -> Result<Vec<T>> {
    let p = problem.profiles(rho, simp, &[param.to_vec()])?;
    Ok(p[0].iter().map(|v| *v / smoothing.c_max).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    /// `len = probabilities.len() + 1`.
    pub edges: Vec<T>,
    pub probabilities: Vec<T>,
}

/// Equal-weight histogram with bins `[k w, (k + 1) w)`.
pub fn histogram<T: Real>(values: &[T], bin_width: T) -> Result<Histogram<T>> {
    let w = if values.is_empty() { T::one() } else { T::one() / T::from_usize_lossy(values.len()) };
    let weights = vec![w; values.len()];
    weighted_histogram(values, &weights, bin_width)
}

pub fn weighted_histogram<T: Real>(values: &[T], weights: &[T], bin_width: T) -> Result<Histogram<T>> {
    check_len(values.len(), weights.len())?;
    if !(bin_width > T::zero()) {
        return invalid("bin width must be positive");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return invalid("histogram values must be finite");
    }
    if values.is_empty() {
        return Ok(Histogram { edges: Vec::new(), probabilities: Vec::new() });
    }
    let bin = |v: T| (v / bin_width).floor().to_i64().unwrap_or(0);
    let lo = values.iter().map(|v| bin(*v)).min().unwrap_or(0);
    let hi = values.iter().map(|v| bin(*v)).max().unwrap_or(0);
    let n = (hi - lo + 1) as usize;
    let mut probabilities = vec![T::zero(); n];
    for (v, w) in values.iter().zip(weights) {
        let k = (bin(*v) - lo) as usize;
        probabilities[k] = probabilities[k] + *w;
    }
    let edges = (0..=n).map(|k| T::lit((lo + k as i64) as f64) * bin_width).collect();
    Ok(Histogram { edges, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{plate_problem, wheel_problem, PlateSettings, ProblemOptions};
    use approx::assert_relative_eq;

    #[test]
    fn histogram_examples() {
        let h = histogram::<f64>(&[], 0.1).unwrap();
        assert!(h.edges.is_empty() && h.probabilities.is_empty());
        let h = histogram(&[0.05, 0.15, 0.17, 0.95], 0.1).unwrap();
        assert_eq!(h.probabilities.len(), 10);
        assert_relative_eq!(h.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_eq!(h.probabilities[1], 0.5);
        assert_relative_eq!(h.edges[10], 1.0, epsilon = 1e-15);
        assert!(histogram(&[1.0], 0.0).is_err());
    }

    #[test]
    fn nonsmooth_equals_violation_fraction() {
        let p = wheel_problem(4, 24, &ProblemOptions::<f64>::default()).unwrap();
        let mut sm = p.smoothing;
        let mut rho = p.initial_design();
        for (e, r) in rho.iter_mut().enumerate().take(24) {
            *r = 0.3 + 0.02 * e as f64;
        }
        let quad = p.trapezoid_rule(120).unwrap();
        let mut c: Vec<f64> = p.profiles(&rho, &p.simp, &quad.points).unwrap().iter().map(|v| v[0]).collect();
        c.sort_by(f64::total_cmp);
        sm.c_max = c[60];
        let ev = DenseEvaluation::new(&p, &rho, &p.simp, &sm, quad).unwrap();
        let rel = ev.relative_compliances();
        let count = rel.iter().filter(|(_, v)| *v > 1.0).count();
        let g = ev.all();
        assert!((g.g_nonsmooth - count as f64 / 120.0).abs() < 1e-12);
        assert!(count > 0 && count < 120);
    }

    #[test]
    fn flavors_ordered_per_node() {
        let p = wheel_problem(4, 24, &ProblemOptions::<f64>::default()).unwrap();
        let rho = p.initial_design();
        let g = dense_cc(&p, &rho, &p.simp, &p.smoothing, 48).unwrap();
        assert!(g.g_nonsmooth <= g.g_smooth + 0.02);
        assert!((g.g_smooth - g.g_steepened).abs() < 0.02);
        assert!(dense_cc(&p, &rho, &p.simp, &p.smoothing, 1).is_err());
    }

    #[test]
    fn h1_constant_without_weak_spot() {
        let s = PlateSettings { hole_depth: 0.0, omega_nodes: 4, ..PlateSettings::default() };
        let p = plate_problem(8, 4, &ProblemOptions::<f64>::default(), &s).unwrap();
        let rho = p.initial_design();
        let m = h1_map(&p, &rho, &p.simp, &p.smoothing, 3).unwrap();
        assert_eq!(m.len(), 9);
        for r in &m {
            assert_relative_eq!(r[2], m[0][2], max_relative = 1e-10);
        }
    }

    #[test]
    fn h1_below_half_for_stiff_design() {
        let s = PlateSettings { omega_nodes: 4, ..PlateSettings::default() };
        let p = plate_problem(8, 4, &ProblemOptions::<f64>::default(), &s).unwrap();
        let rho = vec![1.0; p.dim()];
        let m = h1_map(&p, &rho, &p.simp, &p.smoothing, 3).unwrap();
        assert!(m.iter().all(|r| r[2] < 0.5));
        let w = wheel_problem(4, 16, &ProblemOptions::<f64>::default()).unwrap();
        assert!(h1_map(&w, &w.initial_design(), &w.simp, &w.smoothing, 3).is_err());
    }

    #[test]
    fn relative_compliance_examples() {
        let p = wheel_problem(4, 16, &ProblemOptions::<f64>::default()).unwrap();
        let rho = p.initial_design();
        let mut sm = p.smoothing;
        let c = p.profiles(&rho, &p.simp, &[vec![0.3]]).unwrap()[0][0];
        sm.c_max = c;
        assert_eq!(relative_compliance(&p, &rho, &p.simp, &sm, &[0.3]).unwrap(), vec![1.0]);
    }
}
