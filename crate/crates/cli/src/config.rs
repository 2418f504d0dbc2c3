use serde::{Deserialize, Serialize};

use smma::benchmarks::{plate_problem, wheel_problem, PlateSettings, ProblemKind, ProblemOptions};
use smma::smma_driver::{Method, WeightScheme};
use smma::{ProblemDef, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Wheel,
    Plate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Smma,
    SmmaLimited,
    MmaQuadrature,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Smma => Method::Smma,
            MethodName::SmmaLimited => Method::SmmaLimited,
            MethodName::MmaQuadrature => Method::MmaQuadrature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightName {
    Pseudoexact,
    Empirical,
}

/// A scalar or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    /// Probability level of the chance constraint.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateConfig {
    pub ell: Option<f64>,
    pub omega_nodes: Option<usize>,
    pub angle_lo: Option<f64>,
    pub angle_hi: Option<f64>,
    pub hole_depth: Option<f64>,
    pub hole_length_unit: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Dense verification cadence in iterations (0: only the final design).
    pub every: Option<usize>,
    /// Nodes per parameter axis.
    pub nodes: Option<usize>,
    #[serde(rename = "final")]
    pub at_end: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Informational; written into manifests.
    pub version: Option<String>,
    pub problem: ProblemName,
    pub method: MethodName,
    pub iterations: usize,
    /// `[n_radial, n_angular]` for the wheel, `[nx, ny]` for the plate.
    pub mesh: Option<[usize; 2]>,
    pub batch_size: OneOrMany<usize>,
    pub tau: Option<OneOrMany<f64>>,
    pub seed: Option<OneOrMany<u64>>,
    pub memory_cap: Option<usize>,
    pub weights: Option<WeightName>,
    pub pseudoexact_resolution: Option<usize>,
    pub quadrature_nodes: Option<usize>,
    pub filter_radius: Option<f64>,
    pub poisson: Option<f64>,
    pub c_max: Option<f64>,
    pub c_max_factor: Option<f64>,
    pub normalize_load: Option<bool>,
    pub rho_init: Option<f64>,
    pub simp_exponent: Option<f64>,
    /// `[iteration, exponent]`.
    pub simp_schedule: Option<(usize, f64)>,
    /// `[period, factor]`.
    pub tau_schedule: Option<(usize, f64)>,
    pub metric_design_scale: Option<f64>,
    pub metric_param_scale: Option<f64>,
    pub snapshot_every: Option<usize>,
    pub log_wall_time: Option<bool>,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub plate: PlateConfig,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPoint {
    pub batch_size: usize,
    pub tau: Option<f64>,
    pub seed: u64,
}

impl RunPoint {
    pub fn dir_name(&self) -> String {
        let tau = self.tau.map(|t| format!("-tau{t}")).unwrap_or_default();
        format!("b{}{}-seed{}", self.batch_size, tau, self.seed)
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), String> {
        if self.iterations == 0 {
            return Err("iterations must be at least 1".into());
        }
        let b = self.batch_size.values();
        if b.is_empty() || b.contains(&0) {
            return Err("batch_size must be a positive integer or a nonempty list of them".into());
        }
        if let Some(t) = &self.tau {
            let t = t.values();
            if t.is_empty() || t.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err("tau must be positive".into());
            }
        }
        if self.seed.as_ref().is_some_and(|s| s.values().is_empty()) {
            return Err("seed list is empty".into());
        }
        if self.method == MethodName::SmmaLimited && self.memory_cap.is_none() {
            return Err("method smma-limited needs memory_cap".into());
        }
        if let Some([a, b]) = self.mesh {
            if a == 0 || b == 0 {
                return Err("mesh dimensions must be positive".into());
            }
        }
        Ok(())
    }

    pub fn sweep(&self) -> Vec<RunPoint> {
        let taus: Vec<Option<f64>> = match &self.tau {
            Some(t) => t.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let seeds = self.seed.as_ref().map(|s| s.values()).unwrap_or_else(|| vec![0]);
        let mut out = Vec::new();
        for b in self.batch_size.values() {
            for t in &taus {
                for s in &seeds {
                    out.push(RunPoint { batch_size: b, tau: *t, seed: *s });
                }
            }
        }
        out
    }

    pub fn mesh_dims(&self) -> [usize; 2] {
        self.mesh.unwrap_or(match self.problem {
            ProblemName::Wheel => [18, 72],
            ProblemName::Plate => [60, 30],
        })
    }

    pub fn build_problem(&self) -> smma::Result<ProblemDef> {
        let mut opts = ProblemOptions::default();
        opts.filter_radius = self.filter_radius;
        opts.c_max = self.c_max;
        if let Some(f) = self.c_max_factor {
            opts.c_max_factor = f;
        }
        if let Some(v) = self.poisson {
            opts.poisson = v;
        }
        if let Some(n) = self.normalize_load {
            opts.normalize_load = n;
        }
        let [a, b] = self.mesh_dims();
        match self.problem {
            ProblemName::Wheel => wheel_problem(a, b, &opts),
            ProblemName::Plate => {
                let mut s = PlateSettings::default();
                let p = &self.plate;
                s.ell = p.ell.unwrap_or(s.ell);
                s.omega_nodes = p.omega_nodes.unwrap_or(s.omega_nodes);
                s.angle_lo = p.angle_lo.unwrap_or(s.angle_lo);
                s.angle_hi = p.angle_hi.unwrap_or(s.angle_hi);
                s.hole_depth = p.hole_depth.unwrap_or(s.hole_depth);
                s.hole_length_unit = p.hole_length_unit.unwrap_or(s.hole_length_unit);
                plate_problem(a, b, &opts, &s)
            }
        }
    }

    /// Problem defaults overridden by every key present in the config.
    pub fn run_config(&self, problem: &ProblemDef, point: &RunPoint) -> smma::Result<RunConfig> {
        let mut rc = RunConfig::for_problem(problem, self.method.into(), point.batch_size, self.iterations, point.seed);
        rc.memory_cap = self.memory_cap;
        if let Some(w) = self.weights {
            rc.weight_scheme = match w {
                WeightName::Pseudoexact => WeightScheme::Pseudoexact,
                WeightName::Empirical => WeightScheme::Empirical,
            };
        }
        set(&mut rc.pseudoexact_resolution, self.pseudoexact_resolution);
        set(&mut rc.quadrature_nodes, self.quadrature_nodes);
        set(&mut rc.rho_init, self.rho_init);
        set(&mut rc.simp_exponent, self.simp_exponent);
        set(&mut rc.tau, point.tau);
        if self.simp_schedule.is_some() {
            rc.simp_schedule = self.simp_schedule;
        }
        if self.tau_schedule.is_some() {
            rc.tau_schedule = self.tau_schedule;
        }
        set(&mut rc.metric_design_scale, self.metric_design_scale);
        set(&mut rc.metric_param_scale, self.metric_param_scale);
        set(&mut rc.snapshot_every, self.snapshot_every);
        set(&mut rc.log_wall_time, self.log_wall_time);
        set(&mut rc.verify_every, self.verify.every);
        set(&mut rc.verify_nodes, self.verify.nodes);
        set(&mut rc.verify_final, self.verify.at_end);
        let sm = &mut rc.smoothing;
        set(&mut sm.a1, self.smoothing.a1);
        set(&mut sm.a2, self.smoothing.a2);
        set(&mut sm.a3, self.smoothing.a3);
        set(&mut sm.p_level, self.smoothing.p);
        smma::smoothing::SmoothingParams::new(sm.a1, sm.a2, sm.a3, sm.c_max, sm.p_level)?;
        rc.validate()?;
        Ok(rc)
    }

    /// Fully resolved single-run config; parsing it reproduces the run.
    pub fn resolved(&self, problem: &ProblemDef, rc: &RunConfig) -> Config {
        let [a, b] = self.mesh_dims();
        let plate = match problem.kind {
            ProblemKind::Wheel => PlateConfig::default(),
            ProblemKind::Plate => {
                let smma::benchmarks::InnerModel::Plate(m) = &problem.inner else { unreachable!("plate problem") };
                let s = &m.settings;
                PlateConfig {
                    ell: Some(s.ell),
                    omega_nodes: Some(s.omega_nodes),
                    angle_lo: Some(s.angle_lo),
                    angle_hi: Some(s.angle_hi),
                    hole_depth: Some(s.hole_depth),
                    hole_length_unit: Some(s.hole_length_unit),
                }
            }
        };
        Config {
            version: Some(env!("CARGO_PKG_VERSION").to_string()),
            problem: self.problem,
            method: self.method,
            iterations: rc.iterations,
            mesh: Some([a, b]),
            batch_size: OneOrMany::One(rc.batch_size),
            tau: Some(OneOrMany::One(rc.tau)),
            seed: Some(OneOrMany::One(rc.seed)),
            memory_cap: rc.memory_cap,
            weights: Some(match rc.weight_scheme {
                WeightScheme::Pseudoexact => WeightName::Pseudoexact,
                WeightScheme::Empirical => WeightName::Empirical,
            }),
            pseudoexact_resolution: Some(rc.pseudoexact_resolution),
            quadrature_nodes: Some(rc.quadrature_nodes),
            filter_radius: Some(problem.space.filter.radius),
            poisson: Some(self.poisson.unwrap_or(ProblemOptions::<f64>::default().poisson)),
            c_max: Some(rc.smoothing.c_max),
            c_max_factor: None,
            normalize_load: Some(self.normalize_load.unwrap_or(false)),
            rho_init: Some(rc.rho_init),
            simp_exponent: Some(rc.simp_exponent),
            simp_schedule: rc.simp_schedule,
            tau_schedule: rc.tau_schedule,
            metric_design_scale: Some(rc.metric_design_scale),
            metric_param_scale: Some(rc.metric_param_scale),
            snapshot_every: Some(rc.snapshot_every),
            log_wall_time: Some(rc.log_wall_time),
            smoothing: SmoothingConfig {
                a1: Some(rc.smoothing.a1),
                a2: Some(rc.smoothing.a2),
                a3: Some(rc.smoothing.a3),
                p: Some(rc.smoothing.p_level),
            },
            verify: VerifyConfig { every: Some(rc.verify_every), nodes: Some(rc.verify_nodes), at_end: Some(rc.verify_final) },
            plate,
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
