//! Structured 2D plane-stress finite elements.
//!
//! Meshes are built from bilinear quadrilaterals (Q4) on either a uniform
//! rectangle or a polar-mapped annulus. Dirichlet dofs are eliminated and the
//! reduced stiffness matrix is factorized with an envelope (skyline) Cholesky
//! decomposition. The node numbering of both mesh kinds keeps the envelope
//! narrow and puts the loaded boundary (top edge, outer rim) last, so forward
//! substitution skips the leading zero rows of boundary loads.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_len, invalid, Error, Result};
use crate::scalar::{dot, Real};

/// Right hand sides solved together in one pass over the factor.
const RHS_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshKind<T> {
    Rectangle { nx: usize, ny: usize, width: T, height: T },
    PolarDisc { n_radial: usize, n_angular: usize, r_inner: T, r_rim: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RectSupport {
    BottomClamped,
    LeftClamped,
}

#[derive(Debug, Clone)]
pub struct StructuredMesh<T> {
    pub kind: MeshKind<T>,
    pub nodes: Vec<[T; 2]>,
    /// Counter-clockwise Q4 connectivity.
    pub elements: Vec<[usize; 4]>,
    pub element_centroids: Vec<[T; 2]>,
    /// Sorted, global dof indices (`2 * node + component`).
    pub dirichlet_dofs: Vec<usize>,
    pub fixed_density_elements: BTreeMap<usize, T>,
}

impl<T: Real> StructuredMesh<T> {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_coords(&self, e: usize) -> [[T; 2]; 4] {
        let c = &self.elements[e];
        [self.nodes[c[0]], self.nodes[c[1]], self.nodes[c[2]], self.nodes[c[3]]]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let c = &self.elements[e];
        [
            2 * c[0],
            2 * c[0] + 1,
            2 * c[1],
            2 * c[1] + 1,
            2 * c[2],
            2 * c[2] + 1,
            2 * c[3],
            2 * c[3] + 1,
        ]
    }

    /// Element areas (shoelace formula on the four corners).
    pub fn element_areas(&self) -> Vec<T> {
        (0..self.n_elements())
            .map(|e| {
                let p = self.element_coords(e);
                let mut twice = T::zero();
                for a in 0..4 {
                    let b = (a + 1) % 4;
                    twice = twice + p[a][0] * p[b][1] - p[b][0] * p[a][1];
                }
                twice * T::lit(0.5)
            })
            .collect()
    }

    /// Typical element edge length: grid spacing for rectangles, radial
    /// spacing for the annulus.
    pub fn element_size(&self) -> T {
        match self.kind {
            MeshKind::Rectangle { nx, ny, width, height } => {
                (width / T::from_usize_lossy(nx)).min(height / T::from_usize_lossy(ny))
            }
            MeshKind::PolarDisc { n_radial, r_inner, .. } => {
                (T::one() - r_inner) / T::from_usize_lossy(n_radial)
            }
        }
    }

    /// Checks the structural invariants: distinct in-range corners, positive
    /// Jacobian at every Gauss point, nonempty Dirichlet set.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        for (e, c) in self.elements.iter().enumerate() {
            for a in 0..4 {
                if c[a] >= n {
                    return invalid(format!("element {e} references node {} out of range", c[a]));
                }
                for b in 0..a {
                    if c[a] == c[b] {
                        return invalid(format!("element {e} has repeated node {}", c[a]));
                    }
                }
            }
            let xy = self.element_coords(e);
            for &(xi, eta) in &gauss_points::<T>() {
                let (_, det) = jacobian(&xy, xi, eta);
                if det <= T::zero() {
                    return invalid(format!("element {e} has nonpositive Jacobian"));
                }
            }
        }
        if self.dirichlet_dofs.is_empty() {
            return invalid("no Dirichlet dofs");
        }
        Ok(())
    }
}

/// Uniform `nx` x `ny` grid on `[0, width] x [0, height]`.
///
/// Nodes are numbered row by row from the bottom, so the top edge is last.
pub fn build_rect_mesh<T: Real>(
    nx: usize,
    ny: usize,
    width: T,
    height: T,
    support: RectSupport,
) -> Result<StructuredMesh<T>> {
    if nx == 0 || ny == 0 {
        return invalid("element counts must be positive");
    }
    if !(width > T::zero() && height > T::zero()) {
        return invalid("width and height must be positive");
    }
    let hx = width / T::from_usize_lossy(nx);
    let hy = height / T::from_usize_lossy(ny);
    let node = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            nodes.push([hx * T::from_usize_lossy(ix), hy * T::from_usize_lossy(iy)]);
        }
    }
    let mut elements = Vec::with_capacity(nx * ny);
    let mut centroids = Vec::with_capacity(nx * ny);
    let half = T::lit(0.5);
    for ey in 0..ny {
        for ex in 0..nx {
            elements.push([node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1)]);
            centroids.push([
                hx * (T::from_usize_lossy(ex) + half),
                hy * (T::from_usize_lossy(ey) + half),
            ]);
        }
    }
    let mut dirichlet_dofs = Vec::new();
    match support {
        RectSupport::BottomClamped => {
            for ix in 0..=nx {
                let n = node(ix, 0);
                dirichlet_dofs.extend([2 * n, 2 * n + 1]);
            }
        }
        RectSupport::LeftClamped => {
            for iy in 0..=ny {
                let n = node(0, iy);
                dirichlet_dofs.extend([2 * n, 2 * n + 1]);
            }
        }
    }
    dirichlet_dofs.sort_unstable();
    Ok(StructuredMesh {
        kind: MeshKind::Rectangle { nx, ny, width, height },
        nodes,
        elements,
        element_centroids: centroids,
        dirichlet_dofs,
        fixed_density_elements: BTreeMap::new(),
    })
}

/// Polar-mapped annulus between `r_inner_fixed` and 1.
///
/// Ring `i` (inner to outer) holds nodes `i * n_angular .. (i + 1) * n_angular`
/// at angles `2 pi j / n_angular`. The innermost ring is clamped and elements
/// whose centroid radius exceeds `r_rim` are pinned to density 1.
pub fn build_disc_mesh<T: Real>(
    n_radial: usize,
    n_angular: usize,
    r_inner_fixed: T,
    r_rim: T,
) -> Result<StructuredMesh<T>> {
    if n_radial == 0 {
        return invalid("n_radial must be positive");
    }
    if n_angular < 8 {
        return invalid("n_angular must be at least 8");
    }
    if !(T::zero() < r_inner_fixed && r_inner_fixed < r_rim && r_rim < T::one()) {
        return invalid("radii must satisfy 0 < r_inner_fixed < r_rim < 1");
    }
    let dr = (T::one() - r_inner_fixed) / T::from_usize_lossy(n_radial);
    let dtheta = T::TAU() / T::from_usize_lossy(n_angular);
    let node = |i: usize, j: usize| i * n_angular + (j % n_angular);
    let mut nodes = Vec::with_capacity((n_radial + 1) * n_angular);
    for i in 0..=n_radial {
        let r = if i == n_radial { T::one() } else { r_inner_fixed + dr * T::from_usize_lossy(i) };
        for j in 0..n_angular {
            let th = dtheta * T::from_usize_lossy(j);
            nodes.push([r * th.cos(), r * th.sin()]);
        }
    }
    let mut elements = Vec::with_capacity(n_radial * n_angular);
    let mut centroids = Vec::with_capacity(n_radial * n_angular);
    let mut fixed = BTreeMap::new();
    let quarter = T::lit(0.25);
    for i in 0..n_radial {
        for j in 0..n_angular {
            let c = [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)];
            let mut cen = [T::zero(); 2];
            for &n in &c {
                cen[0] = cen[0] + nodes[n][0] * quarter;
                cen[1] = cen[1] + nodes[n][1] * quarter;
            }
            let e = elements.len();
            if cen[0].hypot(cen[1]) > r_rim {
                fixed.insert(e, T::one());
            }
            elements.push(c);
            centroids.push(cen);
        }
    }
    let dirichlet_dofs = (0..2 * n_angular).collect();
    Ok(StructuredMesh {
        kind: MeshKind::PolarDisc { n_radial, n_angular, r_inner: r_inner_fixed, r_rim },
        nodes,
        elements,
        element_centroids: centroids,
        dirichlet_dofs,
        fixed_density_elements: fixed,
    })
}

fn gauss_points<T: Real>() -> [(T, T); 4] {
    let g = T::one() / T::lit(3.0).sqrt();
    [(-g, -g), (g, -g), (g, g), (-g, g)]
}

/// Shape function derivatives w.r.t. the reference coordinates.
fn shape_derivs<T: Real>(xi: T, eta: T) -> ([T; 4], [T; 4]) {
    let q = T::lit(0.25);
    let one = T::one();
    (
        [-(one - eta) * q, (one - eta) * q, (one + eta) * q, -(one + eta) * q],
        [-(one - xi) * q, -(one + xi) * q, (one + xi) * q, (one - xi) * q],
    )
}

fn jacobian<T: Real>(xy: &[[T; 2]; 4], xi: T, eta: T) -> ([[T; 2]; 2], T) {
    let (dxi, deta) = shape_derivs(xi, eta);
    let mut j = [[T::zero(); 2]; 2];
    for a in 0..4 {
        j[0][0] = j[0][0] + dxi[a] * xy[a][0];
        j[0][1] = j[0][1] + dxi[a] * xy[a][1];
        j[1][0] = j[1][0] + deta[a] * xy[a][0];
        j[1][1] = j[1][1] + deta[a] * xy[a][1];
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (j, det)
}

/// Plane-stress Q4 stiffness for unit Young's modulus and unit thickness,
/// 2x2 Gauss quadrature. Row-major 8x8, dof order `[u0x, u0y, u1x, ...]`.
pub fn q4_unit_stiffness<T: Real>(xy: &[[T; 2]; 4], poisson: T) -> Result<[T; 64]> {
    let one = T::one();
    let c = one / (one - poisson * poisson);
    let d = [
        [c, c * poisson, T::zero()],
        [c * poisson, c, T::zero()],
        [T::zero(), T::zero(), c * (one - poisson) * T::lit(0.5)],
    ];
    let mut k = [T::zero(); 64];
    for &(xi, eta) in &gauss_points::<T>() {
        let (j, det) = jacobian(xy, xi, eta);
        if det <= T::zero() {
            return invalid("nonpositive Jacobian determinant");
        }
        let (dxi, deta) = shape_derivs(xi, eta);
        let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        let mut b = [[T::zero(); 8]; 3];
        for a in 0..4 {
            let dx = inv[0][0] * dxi[a] + inv[0][1] * deta[a];
            let dy = inv[1][0] * dxi[a] + inv[1][1] * deta[a];
            b[0][2 * a] = dx;
            b[1][2 * a + 1] = dy;
            b[2][2 * a] = dy;
            b[2][2 * a + 1] = dx;
        }
        let mut db = [[T::zero(); 8]; 3];
        for r in 0..3 {
            for col in 0..8 {
                db[r][col] = d[r][0] * b[0][col] + d[r][1] * b[1][col] + d[r][2] * b[2][col];
            }
        }
        for r in 0..8 {
            for col in 0..8 {
                let v = b[0][r] * db[0][col] + b[1][r] * db[1][col] + b[2][r] * db[2][col];
                k[r * 8 + col] = k[r * 8 + col] + v * det;
            }
        }
    }
    Ok(k)
}

/// Unit-modulus element stiffness matrices plus the two material constants.
#[derive(Debug, Clone)]
pub struct ElementStiffnessTemplate<T> {
    k0: Templates<T>,
    pub youngs_solid: T,
    pub youngs_void: T,
    pub poisson: T,
}

#[derive(Debug, Clone)]
enum Templates<T> {
    Shared(Box<[T; 64]>),
    PerElement(Vec<[T; 64]>),
}

impl<T: Real> ElementStiffnessTemplate<T> {
    pub fn new(mesh: &StructuredMesh<T>, poisson: T) -> Result<Self> {
        let k0 = match mesh.kind {
            MeshKind::Rectangle { .. } => Templates::Shared(Box::new(q4_unit_stiffness(&mesh.element_coords(0), poisson)?)),
            MeshKind::PolarDisc { .. } => Templates::PerElement(
                (0..mesh.n_elements())
                    .map(|e| q4_unit_stiffness(&mesh.element_coords(e), poisson))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Self { k0, youngs_solid: T::one(), youngs_void: T::lit(1e-4), poisson })
    }

    #[inline]
    pub fn k0(&self, e: usize) -> &[T; 64] {
        match &self.k0 {
            Templates::Shared(k) => k,
            Templates::PerElement(ks) => &ks[e],
        }
    }
}

/// Envelope storage of a symmetric matrix: row `i` holds columns
/// `first_col[i] ..= i` at `offset[i] ..`.
#[derive(Debug, Clone)]
pub(crate) struct SkylinePattern {
    pub first_col: Vec<usize>,
    pub offset: Vec<usize>,
}

impl SkylinePattern {
    fn n(&self) -> usize {
        self.first_col.len()
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        debug_assert!(j >= self.first_col[i] && j <= i);
        self.offset[i] + (j - self.first_col[i])
    }

    #[inline]
    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offset[i]..self.offset[i + 1]
    }

    pub fn nnz(&self) -> usize {
        *self.offset.last().unwrap_or(&0)
    }

    fn from_first_cols(first_col: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first_col.len() + 1);
        offset.push(0);
        for (i, &f) in first_col.iter().enumerate() {
            let last = *offset.last().unwrap();
            offset.push(last + i - f + 1);
        }
        Self { first_col, offset }
    }
}

/// Mesh plus element templates plus the reduced-system structure. Building
/// one is the symbolic step; [`FemModel::assemble_stiffness`] is numeric.
#[derive(Debug, Clone)]
pub struct FemModel<T> {
    mesh: Arc<StructuredMesh<T>>,
    template: ElementStiffnessTemplate<T>,
    free_index: Arc<Vec<Option<usize>>>,
    pattern: Arc<SkylinePattern>,
    /// Per element: `(k0 index, skyline position)` for free lower-triangle pairs.
    scatter: Vec<Vec<(u8, usize)>>,
}

impl<T: Real> FemModel<T> {
    pub fn new(mesh: StructuredMesh<T>, poisson: T) -> Result<Self> {
        mesh.validate()?;
        let template = ElementStiffnessTemplate::new(&mesh, poisson)?;
        let n_dofs = mesh.n_dofs();
        let mut free_index = vec![None; n_dofs];
        let mut fixed = vec![false; n_dofs];
        for &d in &mesh.dirichlet_dofs {
            if d >= n_dofs {
                return invalid(format!("Dirichlet dof {d} out of range"));
            }
            fixed[d] = true;
        }
        let mut n_free = 0;
        for d in 0..n_dofs {
            if !fixed[d] {
                free_index[d] = Some(n_free);
                n_free += 1;
            }
        }
        let mut first_col: Vec<usize> = (0..n_free).collect();
        for e in 0..mesh.n_elements() {
            let dofs = mesh.element_dofs(e);
            let free: Vec<usize> = dofs.iter().filter_map(|&d| free_index[d]).collect();
            let lo = free.iter().copied().min().unwrap_or(0);
            for &i in &free {
                first_col[i] = first_col[i].min(lo);
            }
        }
        let pattern = SkylinePattern::from_first_cols(first_col);
        let scatter = (0..mesh.n_elements())
            .map(|e| {
                let dofs = mesh.element_dofs(e);
                let mut s = Vec::with_capacity(36);
                for a in 0..8 {
                    for b in 0..8 {
                        if let (Some(i), Some(j)) = (free_index[dofs[a]], free_index[dofs[b]]) {
                            if j <= i {
                                s.push(((a * 8 + b) as u8, pattern.pos(i, j)));
                            }
                        }
                    }
                }
                s
            })
            .collect();
        Ok(Self { mesh: Arc::new(mesh), template, free_index: Arc::new(free_index), pattern: Arc::new(pattern), scatter })
    }

    pub fn mesh(&self) -> &StructuredMesh<T> {
        &self.mesh
    }

    pub fn template(&self) -> &ElementStiffnessTemplate<T> {
        &self.template
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    pub fn n_free(&self) -> usize {
        self.pattern.n()
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.free_index[dof].is_some()
    }

    /// Assembles `K = sum_e s_e k0_e` on the free dofs and factorizes it.
    pub fn assemble_stiffness(&self, stiffness: &[T]) -> Result<FactorizedSystem<T>> {
        check_len(self.mesh.n_elements(), stiffness.len())?;
        if let Some((e, s)) = stiffness.iter().enumerate().find(|(_, s)| !(**s > T::zero() && s.is_finite())) {
            return invalid(format!("element {e} has nonpositive stiffness {s}"));
        }
        let mut k = vec![T::zero(); self.pattern.nnz()];
        for (e, entries) in self.scatter.iter().enumerate() {
            let k0 = self.template.k0(e);
            let s = stiffness[e];
            for &(kidx, pos) in entries {
                k[pos] = k[pos] + s * k0[kidx as usize];
            }
        }
        FactorizedSystem::factorize(self.pattern.clone(), self.free_index.clone(), k)
    }

    /// `-u_e^T k0_e u_e` per element: derivative of `F^T U` w.r.t. `s_e`.
    pub fn compliance_gradient_wrt_stiffness(&self, u: &[T]) -> Result<Vec<T>> {
        self.element_energy_bilinear(u, u).map(|v| v.into_iter().map(|x| -x).collect())
    }

    /// `u_e^T k0_e v_e` per element.
    pub fn element_energy_bilinear(&self, u: &[T], v: &[T]) -> Result<Vec<T>> {
        check_len(self.n_dofs(), u.len())?;
        check_len(self.n_dofs(), v.len())?;
        Ok((0..self.mesh.n_elements())
            .map(|e| {
                let dofs = self.mesh.element_dofs(e);
                let k0 = self.template.k0(e);
                let ue: [T; 8] = std::array::from_fn(|a| u[dofs[a]]);
                let ve: [T; 8] = std::array::from_fn(|a| v[dofs[a]]);
                let mut acc = T::zero();
                for a in 0..8 {
                    acc = acc + ue[a] * dot(&k0[a * 8..a * 8 + 8], &ve);
                }
                acc
            })
            .collect())
    }
}

/// Cholesky factor of the reduced stiffness matrix, plus the assembled matrix
/// for residual checks. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct FactorizedSystem<T> {
    pattern: Arc<SkylinePattern>,
    free_index: Arc<Vec<Option<usize>>>,
    matrix: Vec<T>,
    factor: Vec<T>,
}

impl<T: Real> FactorizedSystem<T> {
    fn factorize(pattern: Arc<SkylinePattern>, free_index: Arc<Vec<Option<usize>>>, matrix: Vec<T>) -> Result<Self> {
        let mut l = matrix.clone();
        let p = &*pattern;
        for i in 0..p.n() {
            let fi = p.first_col[i];
            let oi = p.offset[i];
            for j in fi..i {
                let fj = p.first_col[j];
                let k0 = fi.max(fj);
                let (head, row_i) = l.split_at_mut(oi);
                let row_j = &head[p.row_range(j)];
                let li = &row_i[k0 - fi..j - fi];
                let lj = &row_j[k0 - fj..j - fj];
                let diag_j = row_j[j - fj];
                let v = (row_i[j - fi] - dot(li, lj)) / diag_j;
                row_i[j - fi] = v;
            }
            let row = &l[oi..oi + (i - fi)];
            let pivot = l[oi + i - fi] - dot(row, row);
            if !(pivot > T::zero()) || !pivot.is_finite() {
                return Err(Error::FactorizationFailure { row: i, pivot: pivot.to_f64_lossy() });
            }
            l[oi + i - fi] = pivot.sqrt();
        }
        Ok(Self { pattern, free_index, matrix, factor: l })
    }

    /// Builds a system directly from a dense SPD matrix (all dofs free).
    #[cfg(test)]
    pub(crate) fn from_dense(a: &[Vec<T>]) -> Result<Self> {
        let n = a.len();
        let first_col: Vec<usize> =
            (0..n).map(|i| (0..=i).find(|&j| a[i][j] != T::zero()).unwrap_or(i)).collect();
        let pattern = SkylinePattern::from_first_cols(first_col);
        let mut m = vec![T::zero(); pattern.nnz()];
        for i in 0..n {
            for j in pattern.first_col[i]..=i {
                m[pattern.pos(i, j)] = a[i][j];
            }
        }
        Self::factorize(Arc::new(pattern), Arc::new((0..n).map(Some).collect()), m)
    }

    /// Number of dofs of the full (unreduced) system.
    pub fn n_dofs(&self) -> usize {
        self.free_index.len()
    }

    pub fn n_free(&self) -> usize {
        self.pattern.n()
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let mut out = self.solve_multi(std::slice::from_ref(&rhs.to_vec()))?;
        Ok(out.pop().expect("one solution"))
    }

    /// Solves `K U = F` for every right hand side. Vectors are full-length;
    /// entries at Dirichlet dofs are ignored on input and zero on output.
    pub fn solve_multi(&self, rhs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        for r in rhs {
            check_len(self.n_dofs(), r.len())?;
        }
        let blocks: Vec<Vec<Vec<T>>> = rhs.par_chunks(RHS_BLOCK).map(|chunk| self.solve_block(chunk)).collect();
        Ok(blocks.into_iter().flatten().collect())
    }

    fn solve_block(&self, rhs: &[Vec<T>]) -> Vec<Vec<T>> {
        let m = rhs.len();
        let n = self.n_free();
        let p = &*self.pattern;
        let mut y = vec![T::zero(); n * m];
        for (full, idx) in self.free_index.iter().enumerate() {
            if let Some(i) = idx {
                for (c, r) in rhs.iter().enumerate() {
                    y[i * m + c] = r[full];
                }
            }
        }
        let start = (0..n).find(|&i| y[i * m..(i + 1) * m].iter().any(|v| *v != T::zero())).unwrap_or(n);
        // forward: L y = b
        for i in start..n {
            let fi = p.first_col[i];
            let row = &self.factor[p.row_range(i)];
            let (head, tail) = y.split_at_mut(i * m);
            let yi = &mut tail[..m];
            for k in fi.max(start)..i {
                let lik = row[k - fi];
                if lik != T::zero() {
                    let yk = &head[k * m..(k + 1) * m];
                    for (a, b) in yi.iter_mut().zip(yk) {
                        *a = *a - lik * *b;
                    }
                }
            }
            let d = row[i - fi];
            for a in yi.iter_mut() {
                *a = *a / d;
            }
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let fi = p.first_col[i];
            let row = &self.factor[p.row_range(i)];
            let (head, tail) = y.split_at_mut(i * m);
            let xi = &mut tail[..m];
            let d = row[i - fi];
            for a in xi.iter_mut() {
                *a = *a / d;
            }
            for k in fi..i {
                let lik = row[k - fi];
                if lik != T::zero() {
                    let yk = &mut head[k * m..(k + 1) * m];
                    for (a, b) in yk.iter_mut().zip(xi.iter()) {
                        *a = *a - lik * *b;
                    }
                }
            }
        }
        (0..m)
            .map(|c| {
                self.free_index
                    .iter()
                    .map(|idx| idx.map_or(T::zero(), |i| y[i * m + c]))
                    .collect()
            })
            .collect()
    }

    /// `K u` on the free dofs (zero at Dirichlet dofs).
    pub fn apply(&self, u: &[T]) -> Result<Vec<T>> {
        check_len(self.n_dofs(), u.len())?;
        let p = &*self.pattern;
        let n = p.n();
        let mut uf = vec![T::zero(); n];
        for (full, idx) in self.free_index.iter().enumerate() {
            if let Some(i) = idx {
                uf[*i] = u[full];
            }
        }
        let mut out = vec![T::zero(); n];
        for i in 0..n {
            let fi = p.first_col[i];
            let row = &self.matrix[p.row_range(i)];
            for j in fi..i {
                out[i] = out[i] + row[j - fi] * uf[j];
                out[j] = out[j] + row[j - fi] * uf[i];
            }
            out[i] = out[i] + row[i - fi] * uf[i];
        }
        Ok(self.free_index.iter().map(|idx| idx.map_or(T::zero(), |i| out[i])).collect())
    }

    /// Reduced matrix entry `(i, j)` in free-dof numbering (zero outside the envelope).
    pub fn reduced_entry(&self, i: usize, j: usize) -> T {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if j < self.pattern.first_col[i] {
            T::zero()
        } else {
            self.matrix[self.pattern.pos(i, j)]
        }
    }

    /// Relative residual `|K u - f| / |f|` on the free dofs.
    pub fn relative_residual(&self, u: &[T], f: &[T]) -> Result<T> {
        let ku = self.apply(u)?;
        let mut num = T::zero();
        let mut den = T::zero();
        for (d, idx) in self.free_index.iter().enumerate() {
            if idx.is_some() {
                num = num + (ku[d] - f[d]).powi(2);
                den = den + f[d].powi(2);
            }
        }
        Ok(if den > T::zero() { (num / den).sqrt() } else { num.sqrt() })
    }
}

/// `F^T U`.
pub fn compliance<T: Real>(f: &[T], u: &[T]) -> Result<T> {
    check_len(f.len(), u.len())?;
    Ok(dot(f, u))
}
