//! Text design files, iteration log CSV, field dumps and PGM rendering.

use std::fmt::Write as _;

use crate::design_field::{DesignSpace, SimpParams};
use crate::error::{check_len, invalid, Error, Result};
use crate::mesh_fem::{MeshKind, StructuredMesh};
use crate::scalar::Real;
use crate::smma_driver::IterationLog;
use crate::verify::Histogram;

const DESIGN_MAGIC: &str = "# smma-design v1";

pub const LOG_HEADER: &str = "iter,rvol,pvol,g_internal,g_dense_smooth,g_dense_steepened,g_dense_nonsmooth,tau,store_size,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshDims {
    Rect { nx: usize, ny: usize },
    Polar { n_radial: usize, n_angular: usize },
}

impl MeshDims {
    pub fn of<T>(mesh: &StructuredMesh<T>) -> Self {
        match mesh.kind {
            MeshKind::Rectangle { nx, ny, .. } => MeshDims::Rect { nx, ny },
            MeshKind::PolarDisc { n_radial, n_angular, .. } => MeshDims::Polar { n_radial, n_angular },
        }
    }

    pub fn n_elements(&self) -> usize {
        match *self {
            MeshDims::Rect { nx, ny } => nx * ny,
            MeshDims::Polar { n_radial, n_angular } => n_radial * n_angular,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignFile<T> {
    pub mesh: MeshDims,
    pub simp: T,
    pub filter_radius: T,
    pub values: Vec<T>,
}

fn num<T: Real>(x: T) -> String {
    format!("{}", x.to_f64_lossy())
}

impl<T: Real> DesignFile<T> {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{DESIGN_MAGIC}");
        match self.mesh {
            MeshDims::Rect { nx, ny } => {
                let _ = writeln!(s, "mesh rect {nx} {ny}");
            }
            MeshDims::Polar { n_radial, n_angular } => {
                let _ = writeln!(s, "mesh polar {n_radial} {n_angular}");
            }
        }
        let _ = writeln!(s, "simp {}", num(self.simp));
        let _ = writeln!(s, "filter_radius {}", num(self.filter_radius));
        let _ = writeln!(s, "count {}", self.values.len());
        for v in &self.values {
            let _ = writeln!(s, "{}", num(*v));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| lines.next().ok_or_else(|| perr(0, &format!("unexpected end of file, expected {what}")));
        let (ln, magic) = next("header")?;
        if magic != DESIGN_MAGIC {
            return Err(perr(ln, "missing design file header"));
        }
        let field = |(ln, l): (usize, &str), key: &str| -> Result<Vec<String>> {
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(perr(ln, &format!("expected `{key}`")));
            }
            Ok(it.map(str::to_string).collect())
        };
        let int = |ln: usize, s: &str| s.parse::<usize>().map_err(|_| perr(ln, &format!("bad integer `{s}`")));
        let real = |ln: usize, s: &str| s.parse::<f64>().map(T::lit).map_err(|_| perr(ln, &format!("bad number `{s}`")));
        let l = next("mesh")?;
        let m = field(l, "mesh")?;
        let mesh = match m.as_slice() {
            [k, a, b] if k == "rect" => MeshDims::Rect { nx: int(l.0, a)?, ny: int(l.0, b)? },
            [k, a, b] if k == "polar" => MeshDims::Polar { n_radial: int(l.0, a)?, n_angular: int(l.0, b)? },
            _ => return Err(perr(l.0, "expected `mesh rect|polar <n> <m>`")),
        };
        let l = next("simp")?;
        let simp = match field(l, "simp")?.as_slice() {
            [v] => real(l.0, v)?,
            _ => return Err(perr(l.0, "expected one value")),
        };
        let l = next("filter_radius")?;
        let filter_radius = match field(l, "filter_radius")?.as_slice() {
            [v] => real(l.0, v)?,
            _ => return Err(perr(l.0, "expected one value")),
        };
        let l = next("count")?;
        let count = match field(l, "count")?.as_slice() {
            [v] => int(l.0, v)?,
            _ => return Err(perr(l.0, "expected one value")),
        };
        if count != mesh.n_elements() {
            return Err(perr(l.0, "count does not match the mesh"));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, v) = next("density value")?;
            let x = real(ln, v)?;
            if !(x >= T::zero() && x <= T::one()) {
                return Err(perr(ln, "density outside [0, 1]"));
            }
            values.push(x);
        }
        if let Some((ln, extra)) = lines.find(|(_, l)| !l.is_empty()) {
            let _ = extra;
            return Err(perr(ln, "trailing content after density values"));
        }
        Ok(Self { mesh, simp, filter_radius, values })
    }
}

fn opt<T: Real>(x: Option<T>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV with one row per iteration; dense columns are empty off-cadence.
pub fn log_to_csv<T: Real>(log: &IterationLog<T>) -> String {
    let mut s = String::with_capacity(64 * (log.rows.len() + 1));
    s.push_str(LOG_HEADER);
    s.push('\n');
    for r in &log.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            num(r.rvol),
            num(r.pvol),
            num(r.g_internal),
            opt(r.dense.map(|d| d.g_smooth)),
            opt(r.dense.map(|d| d.g_steepened)),
            opt(r.dense.map(|d| d.g_nonsmooth)),
            num(r.tau),
            r.store_size,
            r.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default(),
        );
    }
    s
}

pub fn h1_to_csv<T: Real>(rows: &[[T; 3]]) -> String {
    let mut s = String::from("xi1,xi2,h1\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", num(r[0]), num(r[1]), num(r[2]));
    }
    s
}

pub fn histogram_to_csv<T: Real>(h: &Histogram<T>) -> String {
    let mut s = String::from("bin_lo,bin_hi,probability\n");
    for (k, p) in h.probabilities.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", num(h.edges[k]), num(h.edges[k + 1]), num(*p));
    }
    s
}

/// `(F rho)^s` with fixed elements pinned.
pub fn physical_density<T: Real>(space: &DesignSpace<T>, rho: &[T], simp: &SimpParams<T>) -> Result<Vec<T>> {
    check_len(space.dim(), rho.len())?;
    Ok(space.filtered(rho).into_iter().map(|x| x.powf(simp.s)).collect())
}

fn gray<T: Real>(x: T) -> u8 {
    let v = T::lit(255.0) * (T::one() - x.max(T::zero()).min(T::one()));
    (v + T::lit(0.5)).floor().to_u8().unwrap_or(255)
}

/// Binary PGM of `255 (1 - physical)`: one pixel per element for rectangles
/// (top row first), a square raster of side `canvas` for the annulus with
/// everything outside the mesh white.
pub fn render_pgm<T: Real>(mesh: &StructuredMesh<T>, physical: &[T], canvas: usize) -> Result<Vec<u8>> {
    check_len(mesh.n_elements(), physical.len())?;
    let (w, h, pixels) = match mesh.kind {
        MeshKind::Rectangle { nx, ny, .. } => {
            let mut px = Vec::with_capacity(nx * ny);
            for row in 0..ny {
                let ey = ny - 1 - row;
                for ex in 0..nx {
                    px.push(gray(physical[ey * nx + ex]));
                }
            }
            (nx, ny, px)
        }
        MeshKind::PolarDisc { n_radial, n_angular, r_inner, .. } => {
            if canvas == 0 {
                return invalid("canvas size must be positive");
            }
            let n = T::from_usize_lossy(canvas);
            let dr = (T::one() - r_inner) / T::from_usize_lossy(n_radial);
            let dth = T::TAU() / T::from_usize_lossy(n_angular);
            let mut px = Vec::with_capacity(canvas * canvas);
            for py in 0..canvas {
                for qx in 0..canvas {
                    let x = (T::from_usize_lossy(qx) + T::lit(0.5)) / n * T::lit(2.0) - T::one();
                    let y = T::one() - (T::from_usize_lossy(py) + T::lit(0.5)) / n * T::lit(2.0);
                    let r = x.hypot(y);
                    if r > T::one() || r < r_inner {
                        px.push(255);
                        continue;
                    }
                    let i = ((r - r_inner) / dr).floor().to_usize().unwrap_or(0).min(n_radial - 1);
                    let mut th = y.atan2(x);
                    if th < T::zero() {
                        th = th + T::TAU();
                    }
                    let j = (th / dth).floor().to_usize().unwrap_or(0).min(n_angular - 1);
                    px.push(gray(physical[i * n_angular + j]));
                }
            }
            (canvas, canvas, px)
        }
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}
