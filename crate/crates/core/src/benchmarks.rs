//! The two benchmark problems.
//!
//! * Wheel: annulus clamped at `r = 0.1`, solid rim for `r > 0.95`, loaded
//!   by a normal pressure peak on the outer boundary whose direction `omega`
//!   is uniform on the circle.
//! * Plate: `[0, 2l] x [0, l]` clamped at the bottom, loaded from the top by a
//!   bump of width `l / 9` centered at a random `omega`, inclined at a uniform
//!   angle in `[pi/4, 3pi/4]`, with a random circular weak spot centered at
//!   `xi`. Only `xi` is sampled; the angle is integrated analytically and
//!   `omega` by a fixed trapezoidal rule, so one sample costs one
//!   factorization and 64 right hand sides.
//!
//! Loads are scaled so that the uniform initial design has compliance 1
//! under the mean parameter; `c_max` defaults to 1.5 times that.

use rand::Rng;
use rayon::prelude::*;

use crate::csg_weights::{Outer, ParamAxis, QuadratureSet};
use crate::design_field::{DesignSpace, SimpParams};
use crate::error::{check_len, invalid, Result};
use crate::mesh_fem::{build_disc_mesh, build_rect_mesh, compliance, FactorizedSystem, FemModel, RectSupport};
use crate::scalar::{dot, Real};
use crate::smoothing::{flavor_eval, h_deriv, h_eval, Flavor, SmoothingParams};

const GAUSS4_X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GAUSS4_W: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
/// Sub-intervals per boundary edge for consistent load integration.
const LOAD_SUBDIVISIONS: usize = 16;
const BUMP_SUBDIVISIONS: usize = 256;
/// Right hand sides per wheel solve batch; bounds memory for dense verification.
const WHEEL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Wheel,
    Plate,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Wheel => "wheel",
            ProblemKind::Plate => "plate",
        }
    }
}

/// Uniformly distributed parameter coordinate; `lo == hi` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange<T> {
    pub lo: T,
    pub hi: T,
    pub circular: bool,
}

impl<T: Real> ParamRange<T> {
    pub fn axis(&self) -> ParamAxis<T> {
        let w = self.hi - self.lo;
        match (self.circular, w > T::zero()) {
            (true, true) => ParamAxis::circular(w),
            (false, true) => ParamAxis::flat(self.lo, self.hi),
            _ => ParamAxis { scale: T::one(), period: None },
        }
    }

    pub fn mid(&self) -> T {
        T::lit(0.5) * (self.lo + self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.gen();
        self.lo + (self.hi - self.lo) * T::lit(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemOptions<T> {
    /// Absolute filter radius; defaults to 1.5 element sizes.
    pub filter_radius: Option<T>,
    /// Absolute compliance cap; overrides `c_max_factor`.
    pub c_max: Option<T>,
    pub c_max_factor: T,
    pub poisson: T,
    /// Rescale loads so the reference compliance is 1 (off: physical traction).
    pub normalize_load: bool,
}

impl<T: Real> Default for ProblemOptions<T> {
    fn default() -> Self {
        Self { filter_radius: None, c_max: None, c_max_factor: T::lit(1.5), poisson: T::lit(0.3), normalize_load: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateSettings<T> {
    pub ell: T,
    pub omega_nodes: usize,
    pub angle_lo: T,
    pub angle_hi: T,
    /// Stiffness reduction at the center of the weak spot.
    pub hole_depth: T,
    /// Lengths are multiplied by `hole_length_unit / ell` inside the weak-spot bump.
    pub hole_length_unit: T,
}

impl<T: Real> Default for PlateSettings<T> {
    fn default() -> Self {
        Self {
            ell: T::one(),
            omega_nodes: 32,
            angle_lo: T::FRAC_PI_4(),
            angle_hi: T::lit(3.0) * T::FRAC_PI_4(),
            hole_depth: T::lit(0.99),
            hole_length_unit: T::lit(180.0),
        }
    }
}

/// One quadrature point on a loaded boundary edge.
#[derive(Debug, Clone, Copy)]
struct EdgePoint<T> {
    a: usize,
    b: usize,
    /// Boundary coordinate the intensity is evaluated at.
    s: T,
    wa: T,
    wb: T,
    dir: [T; 2],
}

fn edge_points<T: Real>(
    a: usize,
    b: usize,
    xa: [T; 2],
    xb: [T; 2],
    coord: impl Fn([T; 2]) -> T,
    dir: impl Fn([T; 2]) -> [T; 2],
) -> Vec<EdgePoint<T>> {
    let len = (xb[0] - xa[0]).hypot(xb[1] - xa[1]);
    let n = T::from_usize_lossy(LOAD_SUBDIVISIONS);
    let mut out = Vec::with_capacity(LOAD_SUBDIVISIONS * 4);
    for k in 0..LOAD_SUBDIVISIONS {
        for (gx, gw) in GAUSS4_X.iter().zip(&GAUSS4_W) {
            let t = (T::from_usize_lossy(k) + T::lit(0.5) * (T::lit(*gx) + T::one())) / n;
            let w = T::lit(0.5 * gw) / n * len;
            let x = [xa[0] + t * (xb[0] - xa[0]), xa[1] + t * (xb[1] - xa[1])];
            out.push(EdgePoint { a, b, s: coord(x), wa: w * (T::one() - t), wb: w * t, dir: dir(x) });
        }
    }
    out
}

fn assemble_load<T: Real>(n_dofs: usize, pts: &[EdgePoint<T>], scale: T, f: impl Fn(T) -> T) -> Vec<T> {
    let mut rhs = vec![T::zero(); n_dofs];
    for p in pts {
        let v = scale * f(p.s);
        if v == T::zero() {
            continue;
        }
        for (node, w) in [(p.a, p.wa), (p.b, p.wb)] {
            rhs[2 * node] = rhs[2 * node] + w * v * p.dir[0];
            rhs[2 * node + 1] = rhs[2 * node + 1] + w * v * p.dir[1];
        }
    }
    rhs
}

/// Wheel load intensity at boundary angle `beta` for load direction `omega`.
pub fn wheel_intensity<T: Real>(beta: T, omega: T) -> T {
    T::one() + (T::lit(1e3) * ((beta - omega).cos() - T::one()) + T::lit(0.1)).tanh()
}

/// Plate load intensity: smooth bump of half width `ell / 18` around `omega`.
pub fn plate_intensity<T: Real>(t: T, omega: T, ell: T) -> T {
    let r = ell / T::lit(18.0);
    let d = t - omega;
    if d.abs() >= r {
        return T::zero();
    }
    let q = T::one() - (d / r).powi(2);
    (-T::lit(0.1) / q).exp()
}

/// Weak-spot bump `depth * exp(-d^2 / (r^2 (r^2 - d^2)))` for `d < r`, lengths
/// in scaled units.
pub fn weakness<T: Real>(x: [T; 2], xi: [T; 2], radius: T, unit: T, depth: T) -> T {
    let d2 = ((x[0] - xi[0]).powi(2) + (x[1] - xi[1]).powi(2)) * unit * unit;
    let r2 = radius * radius * unit * unit;
    if d2 >= r2 {
        return T::zero();
    }
    depth * (-d2 / (r2 * (r2 - d2))).exp()
}

/// Integrals of `cos^2`, `sin^2`, `cos sin` over `[lo, hi]`, and `hi - lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleIntegrals<T> {
    pub cxx: T,
    pub cyy: T,
    pub cxy: T,
    pub measure: T,
}

impl<T: Real> AngleIntegrals<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(hi > lo) {
            return invalid("empty angle range");
        }
        let two = T::lit(2.0);
        let half = (hi - lo) / two;
        let s2 = ((two * hi).sin() - (two * lo).sin()) / T::lit(4.0);
        Ok(Self {
            cxx: half + s2,
            cyy: half - s2,
            cxy: (hi.sin().powi(2) - lo.sin().powi(2)) / two,
            measure: hi - lo,
        })
    }

    /// Angle average of `F(a)^T K^-1 F(a)` from the three quadratic forms.
    pub fn average(&self, xx: T, yy: T, xy: T) -> T {
        (self.cxx * xx + self.cyy * yy + T::lit(2.0) * self.cxy * xy) / self.measure
    }
}

/// `(1/|A|) int_A F(a)^T K^-1 F(a) da` with `F(a) = cos(a) Fx + sin(a) Fy`.
pub fn angle_reduced_compliance<T: Real>(sys: &FactorizedSystem<T>, fx: &[T], fy: &[T], angles: &AngleIntegrals<T>) -> Result<T> {
    let u = sys.solve_multi(&[fx.to_vec(), fy.to_vec()])?;
    let xy = T::lit(0.5) * (compliance(fx, &u[1])? + compliance(fy, &u[0])?);
    Ok(angles.average(compliance(fx, &u[0])?, compliance(fy, &u[1])?, xy))
}

#[derive(Debug, Clone)]
pub struct WheelModel<T> {
    points: Vec<EdgePoint<T>>,
}

#[derive(Debug, Clone)]
pub struct PlateModel<T> {
    pub settings: PlateSettings<T>,
    pub angles: AngleIntegrals<T>,
    pub omega_nodes: Vec<T>,
    pub omega_weights: Vec<T>,
    top_first: usize,
    nx: usize,
    hx: T,
    /// `[Fx(w0), Fy(w0), Fx(w1), Fy(w1), ...]` after load scaling.
    rhs: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub enum InnerModel<T> {
    Wheel(WheelModel<T>),
    Plate(PlateModel<T>),
}

/// A fully specified chance-constrained benchmark.
#[derive(Debug, Clone)]
pub struct ProblemDef<T> {
    pub kind: ProblemKind,
    pub fem: FemModel<T>,
    pub space: DesignSpace<T>,
    pub simp: SimpParams<T>,
    /// `(iteration, new exponent)`.
    pub simp_schedule: Option<(usize, T)>,
    pub smoothing: SmoothingParams<T>,
    pub rho_init: T,
    pub tau: T,
    /// `(period, factor)`.
    pub tau_schedule: Option<(usize, T)>,
    pub params: Vec<ParamRange<T>>,
    pub inner: InnerModel<T>,
    pub load_scale: T,
    /// Compliance of the initial design under the mean parameter.
    pub reference_compliance: T,
}

pub fn wheel_problem<T: Real>(n_radial: usize, n_angular: usize, opts: &ProblemOptions<T>) -> Result<ProblemDef<T>> {
    let mesh = build_disc_mesh(n_radial, n_angular, T::lit(0.1), T::lit(0.95))?;
    let rim = n_radial * n_angular;
    let mut points = Vec::with_capacity(n_angular * LOAD_SUBDIVISIONS * 4);
    for j in 0..n_angular {
        let (a, b) = (rim + j, rim + (j + 1) % n_angular);
        points.extend(edge_points(
            a,
            b,
            mesh.nodes[a],
            mesh.nodes[b],
            |x| x[1].atan2(x[0]),
            |x| {
                let r = x[0].hypot(x[1]);
                [-x[0] / r, -x[1] / r]
            },
        ));
    }
    let radius = opts.filter_radius.unwrap_or(T::lit(1.5) * mesh.element_size());
    let space = DesignSpace::new(&mesh, radius)?;
    let fem = FemModel::new(mesh, opts.poisson)?;
    let smoothing = SmoothingParams::new(T::lit(50.0), T::lit(0.1), T::lit(5.0), T::one(), T::lit(0.025))?;
    let mut p = ProblemDef {
        kind: ProblemKind::Wheel,
        fem,
        space,
        simp: SimpParams::with_exponent(T::lit(10.0))?,
        simp_schedule: Some((200, T::lit(15.0))),
        smoothing,
        rho_init: T::lit(0.75),
        tau: T::one(),
        tau_schedule: None,
        params: vec![ParamRange { lo: T::zero(), hi: T::TAU(), circular: true }],
        inner: InnerModel::Wheel(WheelModel { points }),
        load_scale: T::one(),
        reference_compliance: T::one(),
    };
    p.calibrate(opts)?;
    Ok(p)
}

pub fn plate_problem<T: Real>(nx: usize, ny: usize, opts: &ProblemOptions<T>, settings: &PlateSettings<T>) -> Result<ProblemDef<T>> {
    let ell = settings.ell;
    if !(ell > T::zero()) || settings.omega_nodes < 2 {
        return invalid("plate needs positive length and at least two omega nodes");
    }
    let mesh = build_rect_mesh(nx, ny, ell + ell, ell, RectSupport::BottomClamped)?;
    let top_first = ny * (nx + 1);
    let hx = (ell + ell) / T::from_usize_lossy(nx);
    let m = settings.omega_nodes;
    let (olo, ohi) = (ell / T::lit(5.0), T::lit(4.0) * ell / T::lit(5.0));
    let omega_nodes: Vec<T> = (0..m).map(|j| olo + (ohi - olo) * T::from_usize_lossy(j) / T::from_usize_lossy(m - 1)).collect();
    let omega_weights = trapezoid_weights::<T>(m);
    let radius = opts.filter_radius.unwrap_or(T::lit(1.5) * mesh.element_size());
    let space = DesignSpace::new(&mesh, radius)?;
    let fem = FemModel::new(mesh, opts.poisson)?;
    let smoothing = SmoothingParams::new(T::lit(35.0), T::lit(0.05), T::lit(5.0), T::one(), T::lit(0.05))?;
    let mut model = PlateModel {
        settings: *settings,
        angles: AngleIntegrals::new(settings.angle_lo, settings.angle_hi)?,
        omega_nodes,
        omega_weights,
        top_first,
        nx,
        hx,
        rhs: Vec::new(),
    };
    model.rhs = model.omega_nodes.iter().flat_map(|&w| model.load_pair(fem.n_dofs(), w, T::one())).collect();
    let mut p = ProblemDef {
        kind: ProblemKind::Plate,
        fem,
        space,
        simp: SimpParams::with_exponent(T::lit(5.0))?,
        simp_schedule: None,
        smoothing,
        rho_init: T::lit(0.65),
        tau: T::one(),
        tau_schedule: Some((1000, T::lit(0.5))),
        params: vec![
            ParamRange { lo: ell / T::lit(4.0), hi: T::lit(7.0) * ell / T::lit(4.0), circular: false },
            ParamRange { lo: ell / T::lit(8.0), hi: T::lit(7.0) * ell / T::lit(8.0), circular: false },
        ],
        inner: InnerModel::Plate(model),
        load_scale: T::one(),
        reference_compliance: T::one(),
    };
    p.calibrate(opts)?;
    Ok(p)
}

/// Normalized trapezoid weights on `n` equispaced nodes including the ends.
pub fn trapezoid_weights<T: Real>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::one()];
    }
    let h = T::one() / T::from_usize_lossy(n - 1);
    (0..n).map(|i| if i == 0 || i == n - 1 { h * T::lit(0.5) } else { h }).collect()
}

impl<T: Real> PlateModel<T> {
    fn load_pair(&self, n_dofs: usize, omega: T, scale: T) -> [Vec<T>; 2] {
        // The bump is much narrower than coarse edges, so integrate over its
        // support and distribute with the linear edge shape functions.
        let ell = self.settings.ell;
        let r = ell / T::lit(18.0);
        let width = ell + ell;
        let n = T::from_usize_lossy(BUMP_SUBDIVISIONS);
        let mut fx = vec![T::zero(); n_dofs];
        for k in 0..BUMP_SUBDIVISIONS {
            for (gx, gw) in GAUSS4_X.iter().zip(&GAUSS4_W) {
                let t = omega - r + (r + r) * (T::from_usize_lossy(k) + T::lit(0.5) * (T::lit(*gx) + T::one())) / n;
                if t < T::zero() || t > width {
                    continue;
                }
                let v = scale * plate_intensity(t, omega, ell) * T::lit(*gw) * r / n;
                let i = (t / self.hx).floor().to_usize().unwrap_or(0).min(self.nx - 1);
                let s = t / self.hx - T::from_usize_lossy(i);
                fx[2 * (self.top_first + i)] = fx[2 * (self.top_first + i)] + v * (T::one() - s);
                fx[2 * (self.top_first + i + 1)] = fx[2 * (self.top_first + i + 1)] + v * s;
            }
        }
        let mut fy = vec![T::zero(); n_dofs];
        for i in 0..n_dofs / 2 {
            fy[2 * i + 1] = -fx[2 * i];
        }
        [fx, fy]
    }

    /// Horizontal and downward unit loads for `omega`, after load scaling.
    pub fn loads(&self, n_dofs: usize, omega: T, scale: T) -> (Vec<T>, Vec<T>) {
        let [fx, fy] = self.load_pair(n_dofs, omega, scale);
        (fx, fy)
    }
}

/// Per-sample evaluation: inner value and its design-space gradient.
pub type SampleEval<T> = (T, Vec<T>);

impl<T: Real> ProblemDef<T> {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn initial_design(&self) -> Vec<T> {
        let mut rho = vec![self.rho_init; self.dim()];
        for (&e, &v) in &self.space.fixed {
            rho[e] = v;
        }
        rho
    }

    pub fn metric_axes(&self) -> Vec<ParamAxis<T>> {
        self.params.iter().map(|p| p.axis()).collect()
    }

    pub fn mean_param(&self) -> Vec<T> {
        self.params.iter().map(|p| p.mid()).collect()
    }

    /// `n` i.i.d. draws; each draw consumes one `f64` per coordinate in order.
    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<T>> {
        (0..n).map(|_| self.params.iter().map(|p| p.sample(rng)).collect()).collect()
    }

    /// Cell-centered equal-weight points used for pseudoexact weights,
    /// `n` per parameter axis.
    pub fn natural_quadrature(&self, n: usize) -> QuadratureSet<T> {
        match self.kind {
            ProblemKind::Wheel => {
                let p = self.params[0];
                QuadratureSet::uniform_circle(p.lo, p.hi - p.lo, n)
            }
            ProblemKind::Plate => {
                let (a, b) = (self.params[0], self.params[1]);
                QuadratureSet::uniform_grid([a.lo, b.lo], [a.hi, b.hi], [n, n])
            }
        }
    }

    /// Trapezoidal rule with `n` nodes per axis: periodic (equal weights,
    /// nodes `2 pi j / n`) on the circle, tensor product with end
    /// half-weights on the plate's box.
    pub fn trapezoid_rule(&self, n: usize) -> Result<QuadratureSet<T>> {
        if n == 0 {
            return invalid("quadrature needs at least one node");
        }
        match self.kind {
            ProblemKind::Wheel => {
                let p = self.params[0];
                Ok(QuadratureSet::uniform_circle(p.lo, p.hi - p.lo, n))
            }
            ProblemKind::Plate => {
                let w = trapezoid_weights::<T>(n);
                let node = |r: &ParamRange<T>, i: usize| {
                    if n == 1 {
                        r.mid()
                    } else {
                        r.lo + (r.hi - r.lo) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)
                    }
                };
                let (a, b) = (self.params[0], self.params[1]);
                let mut points = Vec::with_capacity(n * n);
                let mut weights = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        points.push(vec![node(&a, i), node(&b, j)]);
                        weights.push(w[i] * w[j]);
                    }
                }
                QuadratureSet::new(points, weights)
            }
        }
    }

    pub fn outer(&self, smoothing: &SmoothingParams<T>) -> Outer<T> {
        match self.kind {
            ProblemKind::Wheel => Outer::Smoothed(*smoothing),
            ProblemKind::Plate => Outer::Identity,
        }
    }

    /// Weights of the inner profile returned by [`Self::profiles`].
    pub fn profile_weights(&self) -> Vec<T> {
        match &self.inner {
            InnerModel::Wheel(_) => vec![T::one()],
            InnerModel::Plate(m) => m.omega_weights.clone(),
        }
    }

    /// Wheel load for direction `omega`.
    pub fn wheel_load(&self, omega: T) -> Result<Vec<T>> {
        match &self.inner {
            InnerModel::Wheel(m) => {
                Ok(assemble_load(self.fem.n_dofs(), &m.points, self.load_scale, |b| wheel_intensity(b, omega)))
            }
            InnerModel::Plate(_) => invalid("not a wheel problem"),
        }
    }

    /// Per-element stiffness multiplier for parameter `x`.
    pub fn modifier(&self, x: &[T]) -> Vec<T> {
        match &self.inner {
            InnerModel::Wheel(_) => vec![T::one(); self.dim()],
            InnerModel::Plate(m) => {
                let s = &m.settings;
                let r = s.ell / T::lit(18.0);
                let unit = s.hole_length_unit / s.ell;
                self.fem
                    .mesh()
                    .element_centroids
                    .iter()
                    .map(|c| T::one() - weakness(*c, [x[0], x[1]], r, unit, s.hole_depth))
                    .collect()
            }
        }
    }

    fn check_design(&self, rho: &[T]) -> Result<()> {
        check_len(self.dim(), rho.len())
    }

    fn check_params(&self, params: &[Vec<T>]) -> Result<()> {
        for x in params {
            check_len(self.params.len(), x.len())?;
        }
        Ok(())
    }

    /// Inner values per parameter: wheel `[c(omega)]`; plate the angle-averaged
    /// compliance at every omega node.
    pub fn profiles(&self, rho: &[T], simp: &SimpParams<T>, params: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        self.check_design(rho)?;
        self.check_params(params)?;
        match &self.inner {
            InnerModel::Wheel(_) => {
                let sys = self.fem.assemble_stiffness(&self.space.interpolate_stiffness(rho, simp))?;
                let mut out = Vec::with_capacity(params.len());
                for chunk in params.chunks(WHEEL_CHUNK) {
                    let loads: Vec<Vec<T>> = chunk.iter().map(|x| self.wheel_load(x[0])).collect::<Result<_>>()?;
                    let us = sys.solve_multi(&loads)?;
                    for (f, u) in loads.iter().zip(&us) {
                        out.push(vec![compliance(f, u)?]);
                    }
                }
                Ok(out)
            }
            InnerModel::Plate(m) => {
                let base = self.space.interpolate_stiffness(rho, simp);
                params
                    .par_iter()
                    .map(|x| {
                        let (_, a) = self.plate_solve(m, &base, x)?;
                        Ok(a)
                    })
                    .collect()
            }
        }
    }

    /// Factorizes `K(rho, xi)` and returns the 64 solutions and the angle
    /// averages per omega node.
    fn plate_solve(&self, m: &PlateModel<T>, base: &[T], xi: &[T]) -> Result<(Vec<Vec<T>>, Vec<T>)> {
        let stiff: Vec<T> = base.iter().zip(self.modifier(xi)).map(|(s, g)| *s * g).collect();
        let sys = self.fem.assemble_stiffness(&stiff)?;
        let us = sys.solve_multi(&m.rhs)?;
        let mut a = Vec::with_capacity(m.omega_nodes.len());
        for j in 0..m.omega_nodes.len() {
            let (fx, fy) = (&m.rhs[2 * j], &m.rhs[2 * j + 1]);
            let (ux, uy) = (&us[2 * j], &us[2 * j + 1]);
            let xy = T::lit(0.5) * (dot(fx, uy) + dot(fy, ux));
            a.push(m.angles.average(dot(fx, ux), dot(fy, uy), xy));
        }
        Ok((us, a))
    }

    /// Store records for a batch of parameters: the raw compliance (wheel) or
    /// the omega-averaged smoothed value (plate), with design gradients.
    pub fn records(&self, rho: &[T], simp: &SimpParams<T>, smoothing: &SmoothingParams<T>, params: &[Vec<T>]) -> Result<Vec<SampleEval<T>>> {
        self.check_design(rho)?;
        self.check_params(params)?;
        match &self.inner {
            InnerModel::Wheel(_) => {
                let sys = self.fem.assemble_stiffness(&self.space.interpolate_stiffness(rho, simp))?;
                let loads: Vec<Vec<T>> = params.iter().map(|x| self.wheel_load(x[0])).collect::<Result<_>>()?;
                let us = sys.solve_multi(&loads)?;
                loads
                    .par_iter()
                    .zip(us.par_iter())
                    .map(|(f, u)| {
                        let c = compliance(f, u)?;
                        let g = self.fem.compliance_gradient_wrt_stiffness(u)?;
                        Ok((c, self.space.backprop_to_design(&g, rho, simp)?))
                    })
                    .collect()
            }
            InnerModel::Plate(m) => {
                let base = self.space.interpolate_stiffness(rho, simp);
                params
                    .par_iter()
                    .map(|x| {
                        let (us, a) = self.plate_solve(m, &base, x)?;
                        let mut value = T::zero();
                        let mut gs = vec![T::zero(); self.dim()];
                        let ang = &m.angles;
                        for (j, aj) in a.iter().enumerate() {
                            let t = *aj - smoothing.c_max;
                            let w = m.omega_weights[j];
                            value = value + w * h_eval(t, smoothing);
                            let f = -w * h_deriv(t, smoothing) / ang.measure;
                            if f == T::zero() {
                                continue;
                            }
                            let (ux, uy) = (&us[2 * j], &us[2 * j + 1]);
                            let exx = self.fem.element_energy_bilinear(ux, ux)?;
                            let eyy = self.fem.element_energy_bilinear(uy, uy)?;
                            let exy = if ang.cxy != T::zero() {
                                self.fem.element_energy_bilinear(ux, uy)?
                            } else {
                                vec![T::zero(); self.dim()]
                            };
                            let two = T::lit(2.0);
                            for e in 0..gs.len() {
                                gs[e] = gs[e] + f * (ang.cxx * exx[e] + ang.cyy * eyy[e] + two * ang.cxy * exy[e]);
                            }
                        }
                        for (g, mult) in gs.iter_mut().zip(self.modifier(x)) {
                            *g = *g * mult;
                        }
                        Ok((value, self.space.backprop_to_design(&gs, rho, simp)?))
                    })
                    .collect()
            }
        }
    }

    /// `sum_j w_j f(v_j - c_max)` over one inner profile.
    pub fn compose(&self, profile: &[T], smoothing: &SmoothingParams<T>, flavor: Flavor) -> T {
        let w = self.profile_weights();
        profile.iter().zip(&w).map(|(v, w)| *w * flavor_eval(flavor, *v - smoothing.c_max, smoothing)).sum()
    }

    fn calibrate(&mut self, opts: &ProblemOptions<T>) -> Result<()> {
        let rho = self.initial_design();
        let x = self.mean_param();
        let c = match &self.inner {
            InnerModel::Wheel(_) => self.profiles(&rho, &self.simp, &[x])?[0][0],
            InnerModel::Plate(m) => {
                let omega = T::lit(0.5) * (m.omega_nodes[0] + m.omega_nodes[m.omega_nodes.len() - 1]);
                let (fx, fy) = m.loads(self.fem.n_dofs(), omega, T::one());
                let stiff: Vec<T> =
                    self.space.interpolate_stiffness(&rho, &self.simp).iter().zip(self.modifier(&x)).map(|(s, g)| *s * g).collect();
                let sys = self.fem.assemble_stiffness(&stiff)?;
                angle_reduced_compliance(&sys, &fx, &fy, &m.angles)?
            }
        };
        if !(c > T::zero() && c.is_finite()) {
            return invalid("reference compliance is not positive");
        }
        let scale = if opts.normalize_load { T::one() / c.sqrt() } else { T::one() };
        self.load_scale = scale;
        self.reference_compliance = c * scale * scale;
        if let InnerModel::Plate(m) = &mut self.inner {
            for r in &mut m.rhs {
                r.iter_mut().for_each(|v| *v = *v * scale);
            }
        }
        self.smoothing.c_max = opts.c_max.unwrap_or(opts.c_max_factor * self.reference_compliance);
        if !(self.smoothing.c_max > T::zero()) {
            return invalid("c_max must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_wheel() -> ProblemDef<f64> {
        wheel_problem(6, 24, &ProblemOptions::default()).unwrap()
    }

    fn small_plate() -> ProblemDef<f64> {
        plate_problem(12, 6, &ProblemOptions::default(), &PlateSettings::default()).unwrap()
    }

    #[test]
    fn wheel_intensity_examples() {
        assert_relative_eq!(wheel_intensity(0.7, 0.7), 1.0 + 0.1f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(wheel_intensity(0.7, 0.7), 1.0997, epsilon = 1e-4);
        assert!(wheel_intensity(std::f64::consts::PI, 0.0) < 1e-12);
    }

    #[test]
    fn plate_bump_support() {
        assert_relative_eq!(plate_intensity(0.5, 0.5, 1.0), (-0.1f64).exp(), epsilon = 1e-15);
        assert_eq!(plate_intensity(0.5 + 1.0 / 18.0, 0.5, 1.0), 0.0);
        assert!(plate_intensity(0.5 + 0.05, 0.5, 1.0) > 0.0);
    }

    #[test]
    fn weakness_examples() {
        let r = 1.0 / 18.0;
        assert_relative_eq!(weakness([0.3, 0.4], [0.3, 0.4], r, 180.0, 0.99), 0.99, epsilon = 1e-15);
        assert_eq!(weakness([0.3 + r, 0.4], [0.3, 0.4], r, 180.0, 0.99), 0.0);
        assert_eq!(weakness([0.9, 0.4], [0.3, 0.4], r, 180.0, 0.99), 0.0);
    }

    #[test]
    fn angle_integrals_closed_form() {
        let a = AngleIntegrals::new(std::f64::consts::FRAC_PI_4, 3.0 * std::f64::consts::FRAC_PI_4).unwrap();
        assert_relative_eq!(a.cxx, std::f64::consts::FRAC_PI_4 - 0.5, epsilon = 1e-15);
        assert_relative_eq!(a.cyy, std::f64::consts::FRAC_PI_4 + 0.5, epsilon = 1e-15);
        assert!(a.cxy.abs() < 1e-15);
        assert_relative_eq!(a.average(0.0, 2.0, 0.0), (std::f64::consts::FRAC_PI_4 + 0.5) / std::f64::consts::FRAC_PI_2 * 2.0, epsilon = 1e-15);
        let b = AngleIntegrals::new(0.2, 1.3).unwrap();
        let n = 20000;
        let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let t = 0.2 + 1.1 * (i as f64 + 0.5) / n as f64;
            xx += t.cos().powi(2);
            yy += t.sin().powi(2);
            xy += t.cos() * t.sin();
        }
        let h = 1.1 / n as f64;
        assert_relative_eq!(b.cxx, xx * h, epsilon = 1e-8);
        assert_relative_eq!(b.cyy, yy * h, epsilon = 1e-8);
        assert_relative_eq!(b.cxy, xy * h, epsilon = 1e-8);
    }

    #[test]
    fn calibration_sets_cap_and_optional_normalization() {
        for p in [small_wheel(), small_plate()] {
            assert_eq!(p.load_scale, 1.0);
            assert!(p.reference_compliance > 0.0);
            assert_relative_eq!(p.smoothing.c_max, 1.5 * p.reference_compliance, max_relative = 1e-14);
        }
        let norm = ProblemOptions { normalize_load: true, ..ProblemOptions::default() };
        let w = wheel_problem(6, 24, &norm).unwrap();
        let q = plate_problem(12, 6, &norm, &PlateSettings::default()).unwrap();
        for (p, raw) in [(w, small_wheel()), (q, small_plate())] {
            assert_relative_eq!(p.reference_compliance, 1.0, epsilon = 1e-10);
            assert_relative_eq!(p.smoothing.c_max, 1.5, epsilon = 1e-10);
            assert_relative_eq!(p.load_scale, 1.0 / raw.reference_compliance.sqrt(), max_relative = 1e-12);
            let rho = p.initial_design();
            let x = p.mean_param();
            let a = p.profiles(&rho, &p.simp, &[x.clone()]).unwrap()[0].clone();
            let b = raw.profiles(&rho, &raw.simp, &[x]).unwrap()[0].clone();
            for (u, v) in a.iter().zip(&b) {
                assert_relative_eq!(*u, v / raw.reference_compliance, max_relative = 1e-10);
            }
        }
        let opts = ProblemOptions { c_max: Some(2.5), ..ProblemOptions::default() };
        assert_eq!(wheel_problem(4, 16, &opts).unwrap().smoothing.c_max, 2.5);
    }

    #[test]
    fn loads_vanish_on_dirichlet_dofs() {
        let p = small_wheel();
        let f = p.wheel_load(1.0).unwrap();
        for &d in &p.fem.mesh().dirichlet_dofs {
            assert_eq!(f[d], 0.0);
        }
        let q = small_plate();
        let InnerModel::Plate(m) = &q.inner else { unreachable!() };
        for r in &m.rhs {
            for &d in &q.fem.mesh().dirichlet_dofs {
                assert_eq!(r[d], 0.0);
            }
        }
    }

    #[test]
    fn plate_total_force_matches_bump_integral() {
        let q = small_plate();
        let InnerModel::Plate(m) = &q.inner else { unreachable!() };
        let omega = 0.43;
        let (fx, fy) = m.loads(q.fem.n_dofs(), omega, 1.0);
        let n = 200_000;
        let r = 1.0 / 18.0;
        let h = 2.0 * r / n as f64;
        let integral: f64 = (0..n).map(|i| plate_intensity(omega - r + (i as f64 + 0.5) * h, omega, 1.0) * h).sum();
        let sx: f64 = fx.iter().step_by(2).sum();
        let sy: f64 = fy.iter().skip(1).step_by(2).sum();
        assert_relative_eq!(sx, integral, max_relative = 1e-6);
        assert_relative_eq!(sy, -integral, max_relative = 1e-6);
    }

    #[test]
    fn wheel_rotational_equivariance() {
        let p = small_wheel();
        let (nr, na) = (6, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rho = p.initial_design();
        for e in 0..rho.len() {
            if !p.space.fixed.contains_key(&e) {
                rho[e] = rng.gen_range(0.2..1.0);
            }
        }
        // element (i, j) -> (i, j + 1)
        let mut rot = rho.clone();
        for i in 0..nr {
            for j in 0..na {
                rot[i * na + (j + 1) % na] = rho[i * na + j];
            }
        }
        let dtheta = std::f64::consts::TAU / na as f64;
        let omega = 0.37;
        let a = p.profiles(&rho, &p.simp, &[vec![omega]]).unwrap()[0][0];
        let b = p.profiles(&rot, &p.simp, &[vec![omega + dtheta]]).unwrap()[0][0];
        assert_relative_eq!(a, b, max_relative = 1e-8);
    }

    #[test]
    fn angle_reduction_matches_quadrature() {
        let q = small_plate();
        let InnerModel::Plate(m) = &q.inner else { unreachable!() };
        let rho = q.initial_design();
        let stiff = q.space.interpolate_stiffness(&rho, &q.simp);
        let sys = q.fem.assemble_stiffness(&stiff).unwrap();
        let (fx, fy) = m.loads(q.fem.n_dofs(), 0.5, q.load_scale);
        let got = angle_reduced_compliance(&sys, &fx, &fy, &m.angles).unwrap();
        let n = 1000;
        let (lo, hi) = (m.settings.angle_lo, m.settings.angle_hi);
        let mut acc = 0.0;
        for i in 0..n {
            let a = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
            let f: Vec<f64> = fx.iter().zip(&fy).map(|(x, y)| a.cos() * x + a.sin() * y).collect();
            let u = sys.solve(&f).unwrap();
            acc += compliance(&f, &u).unwrap() / n as f64;
        }
        assert_relative_eq!(got, acc, max_relative = 1e-5);
        // Fx = 0 specialization
        let zero = vec![0.0; fx.len()];
        let only_y = angle_reduced_compliance(&sys, &zero, &fy, &m.angles).unwrap();
        let uy = sys.solve(&fy).unwrap();
        let expect = (std::f64::consts::FRAC_PI_4 + 0.5) / std::f64::consts::FRAC_PI_2 * compliance(&fy, &uy).unwrap();
        assert_relative_eq!(only_y, expect, max_relative = 1e-12);
    }

    fn fd_check(p: &ProblemDef<f64>, x: Vec<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rho = p.initial_design();
        for e in 0..rho.len() {
            if !p.space.fixed.contains_key(&e) {
                rho[e] = rng.gen_range(0.3..0.9);
            }
        }
        let mut sm = p.smoothing;
        // center the smoothing on the current compliance so h' is not tiny
        let prof = p.profiles(&rho, &p.simp, &[x.clone()]).unwrap();
        sm.c_max = prof[0][prof[0].len() / 2] * 1.01;
        let (_, g) = p.records(&rho, &p.simp, &sm, &[x.clone()]).unwrap().remove(0);
        let val = |r: &[f64]| p.records(r, &p.simp, &sm, &[x.clone()]).unwrap()[0].0;
        let free: Vec<usize> = (0..rho.len()).filter(|e| !p.space.fixed.contains_key(e)).collect();
        for &e in free.iter().step_by(free.len() / 6 + 1) {
            let hstep = 1e-6;
            let mut a = rho.clone();
            a[e] += hstep;
            let mut b = rho.clone();
            b[e] -= hstep;
            let fd = (val(&a) - val(&b)) / (2.0 * hstep);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((fd - g[e]).abs() <= 1e-4 * scale, "element {e}: {} vs {fd}", g[e]);
        }
        for &e in p.space.fixed.keys() {
            assert_eq!(g[e], 0.0);
        }
    }

    #[test]
    fn wheel_record_gradient_matches_fd() {
        fd_check(&small_wheel(), vec![0.8], 1);
    }

    #[test]
    fn plate_record_gradient_matches_fd() {
        fd_check(&small_plate(), vec![0.9, 0.45], 2);
    }

    #[test]
    fn trapezoid_rules() {
        let p = small_plate();
        let q = p.trapezoid_rule(5).unwrap();
        assert_eq!(q.points.len(), 25);
        assert_relative_eq!(q.weights[0], 1.0 / 64.0, epsilon = 1e-15);
        assert_eq!(q.points[0], vec![0.25, 0.125]);
        assert_eq!(q.points[24], vec![1.75, 0.875]);
        let w = small_wheel().trapezoid_rule(4).unwrap();
        assert_eq!(w.weights, vec![0.25; 4]);
        assert_relative_eq!(w.points[1][0], std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn modifier_disabled_for_zero_depth() {
        let s = PlateSettings { hole_depth: 0.0, ..PlateSettings::default() };
        let p = plate_problem(8, 4, &ProblemOptions::default(), &s).unwrap();
        assert!(p.modifier(&[1.0, 0.5]).iter().all(|m| *m == 1.0));
        let q = small_plate();
        let m = q.modifier(&[11.0 / 12.0, 5.0 / 12.0]);
        assert!(m.iter().any(|v| *v < 0.5) && m.iter().all(|v| *v > 0.0 && *v <= 1.0));
    }

    #[test]
    fn sampling_stays_in_domain() {
        let p = small_plate();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in p.sample_params(&mut rng, 1000) {
            assert!(x[0] >= 0.25 && x[0] < 1.75 && x[1] >= 0.125 && x[1] < 0.875);
        }
    }
}
