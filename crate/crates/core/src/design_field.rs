//! Density filtering, SIMP interpolation and volume measures.

use std::collections::{BTreeMap, HashMap};

use crate::error::{check_len, invalid, Result};
use crate::mesh_fem::StructuredMesh;
use crate::scalar::Real;

/// Sparse row-stochastic linear (hat) filter.
#[derive(Debug, Clone)]
pub struct FilterMatrix<T> {
    pub radius: T,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> FilterMatrix<T> {
    pub fn identity(n: usize) -> Self {
        Self { radius: T::zero(), row_ptr: (0..=n).collect(), cols: (0..n).collect(), vals: vec![T::one(); n] }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.dim()).map(|i| self.row(i).map(|(j, w)| w * x[j]).sum()).collect()
    }

    pub fn apply_transpose(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        for (i, yi) in y.iter().enumerate() {
            for (j, w) in self.row(i) {
                out[j] = out[j] + w * *yi;
            }
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim()).all(|i| {
            let mut r = self.row(i);
            matches!((r.next(), r.next()), (Some((j, w)), None) if j == i && w == T::one())
        })
    }
}

/// Hat-weight filter `w_ij = max(0, r_min - |c_i - c_j|)` with normalized rows.
pub fn build_filter<T: Real>(mesh: &StructuredMesh<T>, r_min: T) -> Result<FilterMatrix<T>> {
    if r_min.is_nan() || r_min < T::zero() {
        return invalid("filter radius must be nonnegative");
    }
    let c = &mesh.element_centroids;
    let n = c.len();
    if r_min == T::zero() {
        return Ok(FilterMatrix::identity(n));
    }
    let cell = |p: &[T; 2]| -> (i64, i64) {
        ((p[0] / r_min).floor().to_i64().unwrap_or(0), (p[1] / r_min).floor().to_i64().unwrap_or(0))
    };
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in c.iter().enumerate() {
        buckets.entry(cell(p)).or_default().push(i);
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for p in c {
        let (cx, cy) = cell(p);
        let mut row: Vec<(usize, T)> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = buckets.get(&(cx + dx, cy + dy)) {
                    for &j in b {
                        let d = (p[0] - c[j][0]).hypot(p[1] - c[j][1]);
                        let w = r_min - d;
                        if w > T::zero() {
                            row.push((j, w));
                        }
                    }
                }
            }
        }
        row.sort_by_key(|(j, _)| *j);
        let total: T = row.iter().map(|(_, w)| *w).sum();
        for (j, w) in row {
            cols.push(j);
            vals.push(w / total);
        }
        row_ptr.push(cols.len());
    }
    Ok(FilterMatrix { radius: r_min, row_ptr, cols, vals })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpParams<T> {
    pub s: T,
    pub e1: T,
    pub e0: T,
}

impl<T: Real> SimpParams<T> {
    pub fn new(s: T, e1: T, e0: T) -> Result<Self> {
        if !(s >= T::one()) {
            return invalid("SIMP exponent must be at least 1");
        }
        if !(e1 > e0 && e0 > T::zero()) {
            return invalid("need E1 > E0 > 0");
        }
        Ok(Self { s, e1, e0 })
    }

    /// Default moduli 1 and 1e-4.
    pub fn with_exponent(s: T) -> Result<Self> {
        Self::new(s, T::one(), T::lit(1e-4))
    }
}

/// Density vector in `[0, 1]^d` with fixed elements holding their value.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    pub rho: Vec<T>,
}

impl<T: Real> DensityField<T> {
    pub fn new(rho: Vec<T>, mesh: &StructuredMesh<T>) -> Result<Self> {
        check_len(mesh.n_elements(), rho.len())?;
        if let Some(v) = rho.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return invalid(format!("density {v} outside [0, 1]"));
        }
        let mut f = Self { rho };
        f.pin(&mesh.fixed_density_elements);
        Ok(f)
    }

    pub fn uniform(value: T, mesh: &StructuredMesh<T>) -> Result<Self> {
        Self::new(vec![value; mesh.n_elements()], mesh)
    }

    pub fn pin(&mut self, fixed: &BTreeMap<usize, T>) {
        for (&e, &v) in fixed {
            self.rho[e] = v;
        }
    }
}

/// Filter plus the per-element data needed to go from raw densities to
/// stiffness and volume, and back.
#[derive(Debug, Clone)]
pub struct DesignSpace<T> {
    pub filter: FilterMatrix<T>,
    pub fixed: BTreeMap<usize, T>,
    pub element_volumes: Vec<T>,
    total_volume: T,
}

impl<T: Real> DesignSpace<T> {
    pub fn new(mesh: &StructuredMesh<T>, r_min: T) -> Result<Self> {
        let filter = build_filter(mesh, r_min)?;
        Ok(Self::with_filter(mesh, filter))
    }

    pub fn with_filter(mesh: &StructuredMesh<T>, filter: FilterMatrix<T>) -> Self {
        let element_volumes = mesh.element_areas();
        let total_volume = element_volumes.iter().copied().sum();
        Self { filter, fixed: mesh.fixed_density_elements.clone(), element_volumes, total_volume }
    }

    pub fn dim(&self) -> usize {
        self.element_volumes.len()
    }

    /// `F rho` with fixed elements pinned afterwards.
    pub fn filtered(&self, rho: &[T]) -> Vec<T> {
        let mut x = self.filter.apply(rho);
        for (&e, &v) in &self.fixed {
            x[e] = v;
        }
        x
    }

    pub fn interpolate_stiffness(&self, rho: &[T], p: &SimpParams<T>) -> Vec<T> {
        self.filtered(rho)
            .into_iter()
            .map(|x| {
                let xs = x.powf(p.s);
                xs * p.e1 + (T::one() - xs) * p.e0
            })
            .collect()
    }

    pub fn rvol(&self, rho: &[T]) -> T {
        let x = self.filtered(rho);
        x.iter().zip(&self.element_volumes).map(|(x, v)| *x * *v).sum::<T>() / self.total_volume
    }

    pub fn pvol(&self, rho: &[T], p: &SimpParams<T>) -> T {
        let x = self.filtered(rho);
        x.iter().zip(&self.element_volumes).map(|(x, v)| x.powf(p.s) * *v).sum::<T>() / self.total_volume
    }

    /// Gradient of [`Self::rvol`]; constant in `rho`.
    pub fn rvol_gradient(&self) -> Vec<T> {
        let mut y: Vec<T> = self.element_volumes.iter().map(|v| *v / self.total_volume).collect();
        for &e in self.fixed.keys() {
            y[e] = T::zero();
        }
        let mut g = self.filter.apply_transpose(&y);
        for &e in self.fixed.keys() {
            g[e] = T::zero();
        }
        g
    }

    /// Maps a gradient w.r.t. element stiffness back to the raw design:
    /// `F^T (s x^(s-1) (E1 - E0) * g)`, zero at fixed elements.
    pub fn backprop_to_design(&self, grad_wrt_stiffness: &[T], rho: &[T], p: &SimpParams<T>) -> Result<Vec<T>> {
        check_len(self.dim(), grad_wrt_stiffness.len())?;
        check_len(self.dim(), rho.len())?;
        let x = self.filter.apply(rho);
        let mut y: Vec<T> = x
            .iter()
            .zip(grad_wrt_stiffness)
            .map(|(x, g)| p.s * x.powf(p.s - T::one()) * (p.e1 - p.e0) * *g)
            .collect();
        for &e in self.fixed.keys() {
            y[e] = T::zero();
        }
        let mut out = self.filter.apply_transpose(&y);
        for &e in self.fixed.keys() {
            out[e] = T::zero();
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::{build_disc_mesh, build_rect_mesh, compliance, FemModel, RectSupport};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(nx: usize, ny: usize) -> StructuredMesh<f64> {
        build_rect_mesh(nx, ny, nx as f64, ny as f64, RectSupport::BottomClamped).unwrap()
    }

    #[test]
    fn zero_radius_is_identity() {
        let f = build_filter(&rect(4, 3), 0.0).unwrap();
        assert!(f.is_identity());
        let x: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        assert_eq!(f.apply(&f.apply(&x)), x);
        // smaller than the centroid spacing
        assert!(build_filter(&rect(4, 3), 0.9).unwrap().is_identity());
    }

    #[test]
    fn rows_sum_to_one() {
        let m = build_disc_mesh(6, 24, 0.1, 0.95).unwrap();
        let f = build_filter(&m, 0.2).unwrap();
        for i in 0..f.dim() {
            let s: f64 = f.row(i).map(|(_, w)| w).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
            assert!(f.row(i).all(|(_, w)| w >= 0.0));
        }
    }

    #[test]
    fn support_matches_radius() {
        let m = rect(5, 4);
        let f = build_filter(&m, 1.5).unwrap();
        let c = &m.element_centroids;
        for i in 0..f.dim() {
            let cols: Vec<usize> = f.row(i).map(|(j, _)| j).collect();
            for j in 0..f.dim() {
                let d = (c[i][0] - c[j][0]).hypot(c[i][1] - c[j][1]);
                assert_eq!(cols.contains(&j), d < 1.5, "pair {i} {j}");
            }
        }
    }

    #[test]
    fn strip_middle_row_hat_weights() {
        let m = rect(3, 1);
        let f = build_filter(&m, 1.5).unwrap();
        let row: Vec<(usize, f64)> = f.row(1).collect();
        assert_eq!(row.len(), 3);
        // weights r - d = (0.5, 1.5, 0.5) before normalization
        assert_relative_eq!(row[0].1, 0.2, epsilon = 1e-15);
        assert_relative_eq!(row[1].1, 0.6, epsilon = 1e-15);
        assert_relative_eq!(row[2].1, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn interpolation_values() {
        let m = rect(3, 3);
        let ds = DesignSpace::new(&m, 1.5).unwrap();
        let p = SimpParams::with_exponent(5.0).unwrap();
        assert!(ds.interpolate_stiffness(&[1.0; 9], &p).iter().all(|v| (*v - 1.0).abs() < 1e-14));
        assert!(ds.interpolate_stiffness(&[0.0; 9], &p).iter().all(|v| (*v - 1e-4).abs() < 1e-18));
        let id = DesignSpace::new(&m, 0.0).unwrap();
        let e = id.interpolate_stiffness(&[0.5; 9], &p);
        assert_relative_eq!(e[4], 0.5f64.powi(5) * (1.0 - 1e-4) + 1e-4, epsilon = 1e-15);
    }

    #[test]
    fn interpolation_bounded_and_monotone() {
        let m = rect(4, 4);
        let ds = DesignSpace::new(&m, 1.5).unwrap();
        let p = SimpParams::with_exponent(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
        let e = ds.interpolate_stiffness(&rho, &p);
        assert!(e.iter().all(|v| *v >= p.e0 && *v <= p.e1));
        for j in 0..16 {
            let mut r2 = rho.clone();
            r2[j] = (r2[j] + 0.1).min(1.0);
            let e2 = ds.interpolate_stiffness(&r2, &p);
            assert!(e2.iter().zip(&e).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn volumes() {
        let m = rect(4, 2);
        let ds = DesignSpace::new(&m, 0.0).unwrap();
        let p = SimpParams::with_exponent(10.0).unwrap();
        assert_relative_eq!(ds.rvol(&[1.0; 8]), 1.0, epsilon = 1e-15);
        assert_relative_eq!(ds.pvol(&[1.0; 8], &p), 1.0, epsilon = 1e-15);
        assert_relative_eq!(ds.rvol(&[0.75; 8]), 0.75, epsilon = 1e-15);
        assert_relative_eq!(ds.pvol(&[0.75; 8], &p), 0.75f64.powi(10), epsilon = 1e-15);
        assert_relative_eq!(ds.pvol(&[0.75; 8], &p), 0.0563, epsilon = 1e-4);
        let bw = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0];
        assert_relative_eq!(ds.rvol(&bw), ds.pvol(&bw, &p), epsilon = 1e-15);
    }

    #[test]
    fn rvol_gradient_is_constant_and_exact() {
        let m = build_disc_mesh(4, 16, 0.1, 0.8).unwrap();
        let ds = DesignSpace::new(&m, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = DensityField::new((0..64).map(|_| rng.gen()).collect(), &m).unwrap().rho;
        let g = ds.rvol_gradient();
        for j in [0, 5, 17, 30] {
            let mut r2 = rho.clone();
            r2[j] += 0.01;
            assert_relative_eq!((ds.rvol(&r2) - ds.rvol(&rho)) / 0.01, g[j], max_relative = 1e-10);
        }
        for &e in m.fixed_density_elements.keys() {
            assert_eq!(g[e], 0.0);
        }
    }

    #[test]
    fn backprop_special_cases() {
        let m = rect(3, 3);
        let id = DesignSpace::new(&m, 0.0).unwrap();
        let p1 = SimpParams::with_exponent(1.0).unwrap();
        let g: Vec<f64> = (0..9).map(|i| -(i as f64)).collect();
        let out = id.backprop_to_design(&g, &[0.3; 9], &p1).unwrap();
        for (o, gi) in out.iter().zip(&g) {
            assert_relative_eq!(*o, (1.0 - 1e-4) * gi, epsilon = 1e-15);
        }
        let zero = id.backprop_to_design(&[0.0; 9], &[0.3; 9], &p1).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    /// Full chain filter -> SIMP -> FEM -> compliance against central differences.
    #[test]
    fn chain_rule_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = build_rect_mesh(3, 3, 1.0, 1.0, RectSupport::BottomClamped).unwrap();
        let ds = DesignSpace::new(&m, 0.5).unwrap();
        let model = FemModel::new(m, 0.3).unwrap();
        let mut f = vec![0.0; model.n_dofs()];
        f[model.n_dofs() - 1] = -1.0;
        f[model.n_dofs() - 4] = 0.4;
        for s in [1.0, 3.0, 5.0, 10.0] {
            let p = SimpParams::with_exponent(s).unwrap();
            let rho: Vec<f64> = (0..9).map(|_| rng.gen_range(0.2..0.9)).collect();
            let c = |rho: &[f64]| {
                let sys = model.assemble_stiffness(&ds.interpolate_stiffness(rho, &p)).unwrap();
                compliance(&f, &sys.solve(&f).unwrap()).unwrap()
            };
            let sys = model.assemble_stiffness(&ds.interpolate_stiffness(&rho, &p)).unwrap();
            let u = sys.solve(&f).unwrap();
            let gs = model.compliance_gradient_wrt_stiffness(&u).unwrap();
            let g = ds.backprop_to_design(&gs, &rho, &p).unwrap();
            let h = 1e-6;
            for j in 0..9 {
                let mut rp = rho.clone();
                let mut rm = rho.clone();
                rp[j] += h;
                rm[j] -= h;
                let fd = (c(&rp) - c(&rm)) / (2.0 * h);
                assert_relative_eq!(g[j], fd, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn density_field_validates_and_pins() {
        let m = build_disc_mesh(4, 16, 0.1, 0.8).unwrap();
        assert!(DensityField::new(vec![1.5; 64], &m).is_err());
        let f = DensityField::uniform(0.3, &m).unwrap();
        for &e in m.fixed_density_elements.keys() {
            assert_eq!(f.rho[e], 1.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pvol_never_exceeds_rvol(rho in proptest::collection::vec(0.0f64..=1.0, 12), s in 1.0f64..12.0) {
                let m = rect(4, 3);
                let ds = DesignSpace::new(&m, 1.5).unwrap();
                let p = SimpParams::with_exponent(s).unwrap();
                let (r, pv) = (ds.rvol(&rho), ds.pvol(&rho, &p));
                prop_assert!(pv <= r + 1e-15);
                prop_assert!((0.0..=1.0 + 1e-15).contains(&r));
                prop_assert!(pv >= 0.0);
            }
        }
    }
}
