//! Sample store and nearest-neighbor integration weights.
//!
//! Every stored record is a past evaluation `(u_k, x_k) -> (c_k, grad c_k)`.
//! At a new design `u`, the parameter space is split into nearest-neighbor
//! cells of the records under a joint design/parameter metric, and the cell
//! measures become integration weights. Cell measures are approximated by
//! assigning quadrature points to their nearest record ("pseudoexact") or by
//! using the record parameters themselves as the points ("empirical").

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{check_len, invalid, Error, Result};
use crate::smoothing::{check_weights, h_deriv, h_eval, SmoothingParams};
use crate::scalar::Real;

/// One parameter coordinate: distances are `scale * |x1 - x2|`, taken modulo
/// `period` when the coordinate lives on a circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamAxis<T> {
    pub scale: T,
    pub period: Option<T>,
}

impl<T: Real> ParamAxis<T> {
    /// Interval `[lo, hi]` rescaled to unit length.
    pub fn flat(lo: T, hi: T) -> Self {
        Self { scale: T::one() / (hi - lo), period: None }
    }

    /// Circle of circumference `period`, rescaled to unit length.
    pub fn circular(period: T) -> Self {
        Self { scale: T::one() / period, period: Some(period) }
    }

    #[inline]
    pub fn distance(&self, a: T, b: T) -> T {
        let mut d = (a - b).abs();
        if let Some(p) = self.period {
            d = d % p;
            d = d.min(p - d);
        }
        self.scale * d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointMetric<T> {
    pub design_scale: T,
    pub param_scale: T,
    pub axes: Vec<ParamAxis<T>>,
}

impl<T: Real> JointMetric<T> {
    pub fn new(design_scale: T, param_scale: T, axes: Vec<ParamAxis<T>>) -> Result<Self> {
        if design_scale < T::zero() || param_scale < T::zero() || !(design_scale + param_scale > T::zero()) {
            return invalid("metric scales must be nonnegative with positive sum");
        }
        Ok(Self { design_scale, param_scale, axes })
    }

    /// Squared design part `lambda_u |u1 - u2|^2 / d`.
    #[inline]
    pub fn design_sq(&self, u1: &[T], u2: &[T]) -> T {
        if self.design_scale == T::zero() || u1.is_empty() {
            return T::zero();
        }
        let s: T = u1.iter().zip(u2).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        self.design_scale * s / T::from_usize_lossy(u1.len())
    }

    /// Squared parameter part `lambda_x d_X(x1, x2)^2`.
    #[inline]
    pub fn param_sq(&self, x1: &[T], x2: &[T]) -> T {
        let s: T = self.axes.iter().zip(x1.iter().zip(x2)).map(|(ax, (a, b))| ax.distance(*a, *b).powi(2)).sum();
        self.param_scale * s
    }

    pub fn joint_distance(&self, u1: &[T], x1: &[T], u2: &[T], x2: &[T]) -> Result<T> {
        check_len(u1.len(), u2.len())?;
        check_len(self.axes.len(), x1.len())?;
        check_len(self.axes.len(), x2.len())?;
        Ok((self.design_sq(u1, u2) + self.param_sq(x1, x2)).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord<T> {
    /// Shared between the records drawn in one iteration.
    pub design: Arc<Vec<T>>,
    pub param: Vec<T>,
    pub inner_value: T,
    pub inner_gradient: Vec<T>,
    pub iteration_born: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<T> {
    pub alpha: Vec<T>,
}

impl<T: Real> WeightSet<T> {
    pub fn sum(&self) -> T {
        self.alpha.iter().copied().sum()
    }
}

/// Fixed parameter-space discretization `(x_t, w_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSet<T> {
    pub points: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureSet<T> {
    pub fn new(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        check_len(points.len(), weights.len())?;
        check_weights(&weights)?;
        Ok(Self { points, weights })
    }

    /// `n` cell-centered points on `[lo, hi]`, equal weights.
    pub fn uniform_1d(lo: T, hi: T, n: usize) -> Self {
        let h = (hi - lo) / T::from_usize_lossy(n);
        let w = T::one() / T::from_usize_lossy(n);
        Self {
            points: (0..n).map(|i| vec![lo + h * (T::from_usize_lossy(i) + T::lit(0.5))]).collect(),
            weights: vec![w; n],
        }
    }

    /// `n` equispaced points `lo + period * i / n` on a circle, equal weights.
    pub fn uniform_circle(lo: T, period: T, n: usize) -> Self {
        let w = T::one() / T::from_usize_lossy(n);
        Self {
            points: (0..n).map(|i| vec![lo + period * T::from_usize_lossy(i) / T::from_usize_lossy(n)]).collect(),
            weights: vec![w; n],
        }
    }

    /// Tensor grid of cell centers on a box, equal weights.
    pub fn uniform_grid(lo: [T; 2], hi: [T; 2], n: [usize; 2]) -> Self {
        let a = Self::uniform_1d(lo[0], hi[0], n[0]);
        let b = Self::uniform_1d(lo[1], hi[1], n[1]);
        let w = T::one() / T::from_usize_lossy(n[0] * n[1]);
        let mut points = Vec::with_capacity(n[0] * n[1]);
        for pa in &a.points {
            for pb in &b.points {
                points.push(vec![pa[0], pb[0]]);
            }
        }
        Self { points, weights: vec![w; n[0] * n[1]] }
    }
}

/// How stored inner values enter the outer integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outer<T> {
    /// Records hold raw compliances; apply `h(c - c_max)` at aggregation time.
    Smoothed(SmoothingParams<T>),
    /// Records already hold the composed value and gradient.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore<T> {
    pub records: Vec<SampleRecord<T>>,
    pub capacity: Option<usize>,
    pub metric: JointMetric<T>,
}

impl<T: Real> SampleStore<T> {
    pub fn new(metric: JointMetric<T>, capacity: Option<usize>) -> Self {
        Self { records: Vec::new(), capacity, metric }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, rec: SampleRecord<T>) -> Result<()> {
        check_len(self.metric.axes.len(), rec.param.len())?;
        check_len(rec.design.len(), rec.inner_gradient.len())?;
        self.records.push(rec);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    /// Design part of the squared distance from `u` to every record.
    fn design_offsets(&self, u: &[T]) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.len());
        let mut last: Option<(*const Vec<T>, T)> = None;
        for r in &self.records {
            check_len(r.design.len(), u.len())?;
            let ptr = Arc::as_ptr(&r.design);
            let v = match last {
                Some((p, v)) if p == ptr => v,
                _ => self.metric.design_sq(u, &r.design),
            };
            last = Some((ptr, v));
            out.push(v);
        }
        Ok(out)
    }

    #[inline]
    fn nearest_with_offsets(&self, offsets: &[T], x: &[T]) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (k, (r, off)) in self.records.iter().zip(offsets).enumerate() {
            let d = *off + self.metric.param_sq(x, &r.param);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Index of the record nearest to `(u, x)`; ties go to the smallest index.
    pub fn nearest_index(&self, u: &[T], x: &[T]) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::EmptyStore);
        }
        check_len(self.metric.axes.len(), x.len())?;
        let off = self.design_offsets(u)?;
        Ok(self.nearest_with_offsets(&off, x))
    }

    /// `alpha_k = sum of w_t over points whose nearest record at design u is k`.
    pub fn pseudoexact_weights(&self, u: &[T], quad: &QuadratureSet<T>) -> Result<WeightSet<T>> {
        if self.is_empty() {
            return Err(Error::EmptyStore);
        }
        check_weights(&quad.weights)?;
        let off = self.design_offsets(u)?;
        let mut alpha = vec![T::zero(); self.len()];
        for (x, w) in quad.points.iter().zip(&quad.weights) {
            check_len(self.metric.axes.len(), x.len())?;
            let k = self.nearest_with_offsets(&off, x);
            alpha[k] = alpha[k] + *w;
        }
        Ok(WeightSet { alpha })
    }

    /// Pseudoexact weights with the record parameters as equally weighted points.
    pub fn empirical_weights(&self, u: &[T]) -> Result<WeightSet<T>> {
        if self.is_empty() {
            return Err(Error::EmptyStore);
        }
        let w = T::one() / T::from_usize_lossy(self.len());
        let quad = QuadratureSet {
            points: self.records.iter().map(|r| r.param.clone()).collect(),
            weights: vec![w; self.len()],
        };
        self.pseudoexact_weights(u, &quad)
    }

    /// Weighted estimate of the constraint value and its design gradient.
    pub fn aggregate(&self, weights: &WeightSet<T>, outer: &Outer<T>) -> Result<(T, Vec<T>)> {
        check_len(self.len(), weights.alpha.len())?;
        let dim = self.records.first().map_or(0, |r| r.inner_gradient.len());
        let mut g = T::zero();
        let mut dg = vec![T::zero(); dim];
        for (r, a) in self.records.iter().zip(&weights.alpha) {
            if *a == T::zero() {
                continue;
            }
            let (v, slope) = match outer {
                Outer::Smoothed(p) => {
                    let t = r.inner_value - p.c_max;
                    (h_eval(t, p), h_deriv(t, p))
                }
                Outer::Identity => (r.inner_value, T::one()),
            };
            g = g + *a * v;
            let f = *a * slope;
            for (d, gi) in dg.iter_mut().zip(&r.inner_gradient) {
                *d = *d + f * *gi;
            }
        }
        Ok((g, dg))
    }

    /// Removes the `n_evict` records with the smallest weights (ties: smallest
    /// index first) and keeps the order of the rest.
    pub fn evict_min_weight(&mut self, weights: &WeightSet<T>, n_evict: usize) -> Result<()> {
        check_len(self.len(), weights.alpha.len())?;
        if n_evict >= self.len() {
            return invalid(format!("cannot evict {n_evict} of {} records", self.len()));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            weights.alpha[a].partial_cmp(&weights.alpha[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let mut drop = vec![false; self.len()];
        for &k in &order[..n_evict] {
            drop[k] = true;
        }
        let mut k = 0;
        self.records.retain(|_| {
            let keep = !drop[k];
            k += 1;
            keep
        });
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"SMMASTOR";
    const VERSION: u32 = 1;

    /// Versioned little-endian binary dump. Values are written as `f64`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        fn f<W: Write, T: Real>(w: &mut W, x: T) -> std::io::Result<()> {
            w.write_all(&x.to_f64_lossy().to_le_bytes())
        }
        fn u<W: Write>(w: &mut W, x: u64) -> std::io::Result<()> {
            w.write_all(&x.to_le_bytes())
        }
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        u(w, self.capacity.map_or(u64::MAX, |c| c as u64))?;
        f(w, self.metric.design_scale)?;
        f(w, self.metric.param_scale)?;
        u(w, self.metric.axes.len() as u64)?;
        for ax in &self.metric.axes {
            f(w, ax.scale)?;
            f(w, ax.period.unwrap_or_else(T::nan))?;
        }
        u(w, self.records.len() as u64)?;
        for r in &self.records {
            u(w, r.iteration_born as u64)?;
            f(w, r.inner_value)?;
            for v in [&r.design[..], &r.param[..], &r.inner_gradient[..]] {
                u(w, v.len() as u64)?;
                for x in v {
                    f(w, *x)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        fn u<R: Read>(r: &mut R) -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        }
        fn f<R: Read, T: Real>(r: &mut R) -> Result<T> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(T::lit(f64::from_le_bytes(b)))
        }
        fn vec<R: Read, T: Real>(r: &mut R) -> Result<Vec<T>> {
            let n = u(r)? as usize;
            (0..n).map(|_| f(r)).collect()
        }
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return invalid("not a sample store dump");
        }
        let mut vb = [0u8; 4];
        r.read_exact(&mut vb)?;
        if u32::from_le_bytes(vb) != Self::VERSION {
            return invalid("unsupported sample store version");
        }
        let cap = u(r)?;
        let capacity = (cap != u64::MAX).then_some(cap as usize);
        let design_scale = f(r)?;
        let param_scale = f(r)?;
        let n_axes = u(r)? as usize;
        let mut axes = Vec::with_capacity(n_axes);
        for _ in 0..n_axes {
            let scale = f(r)?;
            let p: T = f(r)?;
            axes.push(ParamAxis { scale, period: (!p.is_nan()).then_some(p) });
        }
        let metric = JointMetric::new(design_scale, param_scale, axes)?;
        let n = u(r)? as usize;
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let iteration_born = u(r)? as usize;
            let inner_value = f(r)?;
            let design = Arc::new(vec(r)?);
            let param = vec(r)?;
            let inner_gradient = vec(r)?;
            records.push(SampleRecord { design, param, inner_value, inner_gradient, iteration_born });
        }
        Ok(Self { records, capacity, metric })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn rec(design: Vec<f64>, param: Vec<f64>, value: f64) -> SampleRecord<f64> {
        let n = design.len();
        SampleRecord { design: Arc::new(design), param, inner_value: value, inner_gradient: vec![value; n], iteration_born: 0 }
    }

    fn store_1d(params: &[f64]) -> SampleStore<f64> {
        let m = JointMetric::new(1.0, 1.0, vec![ParamAxis::flat(0.0, 1.0)]).unwrap();
        let mut s = SampleStore::new(m, None);
        for &x in params {
            s.push(rec(vec![0.5; 3], vec![x], x)).unwrap();
        }
        s
    }

    #[test]
    fn distance_examples() {
        let m = JointMetric::new(1.0, 1.0, vec![ParamAxis { scale: 1.0, period: Some(TAU) }]).unwrap();
        assert_eq!(m.joint_distance(&[0.1, 0.2], &[1.0], &[0.1, 0.2], &[1.0]).unwrap(), 0.0);
        assert_relative_eq!(m.joint_distance(&[0.0], &[0.1], &[0.0], &[TAU - 0.1]).unwrap(), 0.2, epsilon = 1e-12);
        let m0 = JointMetric::new(0.0, 1.0, vec![ParamAxis { scale: 1.0, period: None }]).unwrap();
        assert_relative_eq!(m0.joint_distance(&[0.0], &[0.3], &[1.0], &[0.1]).unwrap(), 0.2, epsilon = 1e-12);
        assert!(m.joint_distance(&[0.0], &[0.1, 0.2], &[0.0], &[0.1]).is_err());
        assert!(JointMetric::<f64>::new(0.0, 0.0, vec![]).is_err());
    }

    #[test]
    fn design_part_is_dimension_normalized() {
        let m = JointMetric::new(1.0, 0.0, vec![ParamAxis::flat(0.0, 1.0)]).unwrap();
        let d = m.joint_distance(&[0.0; 4], &[0.0], &[1.0; 4], &[0.0]).unwrap();
        assert_relative_eq!(d, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nearest_examples() {
        let s = store_1d(&[0.3]);
        assert_eq!(s.nearest_index(&[0.5; 3], &[0.9]).unwrap(), 0);
        let s = store_1d(&[0.1, 0.5, 0.5, 0.9]);
        assert_eq!(s.nearest_index(&[0.5; 3], &[0.5]).unwrap(), 1);
        assert_eq!(s.nearest_index(&[0.5; 3], &[0.88]).unwrap(), 3);
        let empty = store_1d(&[]);
        assert!(matches!(empty.nearest_index(&[0.5; 3], &[0.5]), Err(Error::EmptyStore)));
    }

    #[test]
    fn nearest_agrees_with_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = JointMetric::new(1.0, 1.0, vec![ParamAxis::circular(TAU), ParamAxis::flat(0.0, 2.0)]).unwrap();
        let mut s = SampleStore::new(m.clone(), None);
        for _ in 0..100 {
            let u: Vec<f64> = (0..5).map(|_| rng.gen()).collect();
            s.push(rec(u, vec![rng.gen_range(0.0..TAU), rng.gen_range(0.0..2.0)], 0.0)).unwrap();
        }
        for _ in 0..1000 {
            let u: Vec<f64> = (0..5).map(|_| rng.gen()).collect();
            let x = vec![rng.gen_range(0.0..TAU), rng.gen_range(0.0..2.0)];
            let mut best = (f64::INFINITY, 0);
            for (k, r) in s.records.iter().enumerate() {
                let d = m.joint_distance(&u, &x, &r.design, &r.param).unwrap();
                if d < best.0 {
                    best = (d, k);
                }
            }
            assert_eq!(s.nearest_index(&u, &x).unwrap(), best.1);
        }
    }

    #[test]
    fn pseudoexact_examples() {
        let s = store_1d(&[0.4]);
        let q = QuadratureSet::uniform_1d(0.0, 1.0, 4);
        assert_eq!(s.pseudoexact_weights(&[0.5; 3], &q).unwrap().alpha, vec![1.0]);
        let s = store_1d(&[0.2, 0.8]);
        assert_eq!(q.points, vec![vec![0.125], vec![0.375], vec![0.625], vec![0.875]]);
        assert_eq!(s.pseudoexact_weights(&[0.5; 3], &q).unwrap().alpha, vec![0.5, 0.5]);
        let bad = QuadratureSet { points: vec![vec![0.5]], weights: vec![0.5] };
        assert!(s.pseudoexact_weights(&[0.5; 3], &bad).is_err());
    }

    #[test]
    fn pseudoexact_converges_to_voronoi_measure() {
        let s = store_1d(&[0.05, 0.3, 0.42, 0.9]);
        // exact cells: midpoints 0.175, 0.36, 0.66
        let exact = [0.175, 0.185, 0.3, 0.34];
        for t in [64, 256, 1024, 4096] {
            let a = s.pseudoexact_weights(&[0.5; 3], &QuadratureSet::uniform_1d(0.0, 1.0, t)).unwrap();
            for (x, y) in a.alpha.iter().zip(exact) {
                assert!((x - y).abs() <= 2.0 / t as f64);
            }
        }
    }

    #[test]
    fn empirical_examples() {
        let s = store_1d(&[0.4]);
        assert_eq!(s.empirical_weights(&[0.5; 3]).unwrap().alpha, vec![1.0]);
        let s = store_1d(&[0.2, 0.8]);
        assert_eq!(s.empirical_weights(&[0.5; 3]).unwrap().alpha, vec![0.5, 0.5]);
        let s = store_1d(&[0.6, 0.6, 0.6]);
        assert_eq!(s.empirical_weights(&[0.5; 3]).unwrap().alpha, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn weights_nonnegative_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let k = rng.gen_range(1..30);
            let m = JointMetric::new(rng.gen(), 1.0, vec![ParamAxis::circular(TAU)]).unwrap();
            let mut s = SampleStore::new(m, None);
            for _ in 0..k {
                let u: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
                s.push(rec(u, vec![rng.gen_range(0.0..TAU)], 1.0)).unwrap();
            }
            let u: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            for ws in [
                s.empirical_weights(&u).unwrap(),
                s.pseudoexact_weights(&u, &QuadratureSet::uniform_circle(0.0, TAU, 64)).unwrap(),
            ] {
                assert!(ws.alpha.iter().all(|a| *a >= 0.0));
                assert!((ws.sum() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn aggregate_single_and_invariance() {
        let p = SmoothingParams::new(50.0, 0.1, 5.0, 1.0, 0.025).unwrap();
        let s = store_1d(&[0.3]);
        let (g, dg) = s.aggregate(&WeightSet { alpha: vec![1.0] }, &Outer::Smoothed(p)).unwrap();
        assert_eq!(g, h_eval(0.3 - 1.0, &p));
        assert_eq!(dg, vec![h_deriv(0.3 - 1.0, &p) * 0.3; 3]);
        let m = JointMetric::new(1.0, 1.0, vec![ParamAxis::flat(0.0, 1.0)]).unwrap();
        let mut s = SampleStore::new(m, None);
        for x in [0.1, 0.5, 0.7] {
            s.push(SampleRecord { design: Arc::new(vec![x; 2]), param: vec![x], inner_value: 0.95, inner_gradient: vec![2.0, -1.0], iteration_born: 0 }).unwrap();
        }
        for alpha in [vec![1.0, 0.0, 0.0], vec![0.2, 0.3, 0.5]] {
            let (g, dg) = s.aggregate(&WeightSet { alpha }, &Outer::Smoothed(p)).unwrap();
            assert_relative_eq!(g, h_eval(-0.05, &p), epsilon = 1e-15);
            assert_relative_eq!(dg[0], 2.0 * h_deriv(-0.05, &p), epsilon = 1e-12);
        }
        let (g, _) = s.aggregate(&WeightSet { alpha: vec![0.2, 0.3, 0.5] }, &Outer::Identity).unwrap();
        assert_relative_eq!(g, 0.95, epsilon = 1e-15);
    }

    #[test]
    fn evict_examples() {
        let mut s = store_1d(&[0.1, 0.2, 0.3]);
        s.evict_min_weight(&WeightSet { alpha: vec![0.5, 0.0, 0.5] }, 1).unwrap();
        assert_eq!(s.records.iter().map(|r| r.param[0]).collect::<Vec<_>>(), vec![0.1, 0.3]);
        let mut s = store_1d(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        s.evict_min_weight(&WeightSet { alpha: vec![0.2, 0.1, 0.0, 0.5, 0.2] }, 3).unwrap();
        assert_eq!(s.records.iter().map(|r| r.param[0]).collect::<Vec<_>>(), vec![0.4, 0.5]);
        let w = s.empirical_weights(&[0.5; 3]).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
        assert!(s.evict_min_weight(&w, 2).is_err());
    }

    #[test]
    fn store_dump_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = JointMetric::new(0.7, 1.0, vec![ParamAxis::circular(TAU), ParamAxis::flat(0.25, 1.75)]).unwrap();
        let mut s = SampleStore::new(m, Some(40));
        for i in 0..10 {
            let u: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
            let g: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() - 0.5).collect();
            s.push(SampleRecord { design: Arc::new(u), param: vec![rng.gen(), rng.gen()], inner_value: rng.gen(), inner_gradient: g, iteration_born: i }).unwrap();
        }
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = SampleStore::<f64>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(SampleStore::<f64>::read_from(&mut &b"garbage!"[..]).is_err());
    }
}
