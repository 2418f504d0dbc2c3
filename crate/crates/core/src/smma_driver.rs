//! Outer optimization loops.
//!
//! Every iteration `k` works on the current design `rho_k`:
//!
//! 1. continuation (SIMP exponent switch flushes the sample store; move-limit
//!    schedule),
//! 2. constraint estimate: sMMA draws `B` parameters, solves, appends the
//!    records and recombines the whole store with nearest-neighbor weights;
//!    the quadrature baseline evaluates fixed nodes with fixed weights,
//! 3. exact volume objective,
//! 4. logging (and dense verification at the cadence),
//! 5. MMA step, then re-pinning of fixed elements,
//! 6. limited memory: evict minimal-weight records so that the next batch fits.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::benchmarks::{ProblemDef, ProblemKind};
use crate::csg_weights::{JointMetric, QuadratureSet, SampleRecord, SampleStore, WeightSet};
use crate::design_field::SimpParams;
use crate::error::{invalid, Result};
use crate::mma_core::MmaState;
use crate::scalar::Real;
use crate::smoothing::SmoothingParams;
use crate::verify::{dense_cc, DenseCc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Smma,
    SmmaLimited,
    MmaQuadrature,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Smma => "smma",
            Method::SmmaLimited => "smma-limited",
            Method::MmaQuadrature => "mma-quadrature",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "smma" => Some(Method::Smma),
            "smma-limited" => Some(Method::SmmaLimited),
            "mma-quadrature" => Some(Method::MmaQuadrature),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Pseudoexact,
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub method: Method,
    pub batch_size: usize,
    pub iterations: usize,
    pub memory_cap: Option<usize>,
    pub seed: u64,
    pub weight_scheme: WeightScheme,
    /// Pseudoexact points per parameter axis.
    pub pseudoexact_resolution: usize,
    pub simp_exponent: T,
    /// `(iteration, exponent)`: the exponent applies from iteration + 1 on.
    pub simp_schedule: Option<(usize, T)>,
    pub rho_init: T,
    pub tau: T,
    /// `(period, factor)`: `tau` is multiplied by `factor` after every `period` iterations.
    pub tau_schedule: Option<(usize, T)>,
    pub smoothing: SmoothingParams<T>,
    /// Baseline quadrature nodes per parameter axis.
    pub quadrature_nodes: usize,
    /// Dense verification every this many iterations (0: never) and at the last one.
    pub verify_every: usize,
    pub verify_nodes: usize,
    pub verify_final: bool,
    pub metric_design_scale: T,
    pub metric_param_scale: T,
    pub log_wall_time: bool,
    /// Keep a copy of the design every this many iterations (0: never).
    pub snapshot_every: usize,
}

impl<T: Real> RunConfig<T> {
    /// Problem defaults for the given method and batch size.
    pub fn for_problem(problem: &ProblemDef<T>, method: Method, batch_size: usize, iterations: usize, seed: u64) -> Self {
        let (pseudo, quad, verify) = match problem.kind {
            ProblemKind::Wheel => (1024, batch_size, 1080),
            ProblemKind::Plate => (32, 5, 50),
        };
        Self {
            method,
            batch_size,
            iterations,
            memory_cap: None,
            seed,
            weight_scheme: WeightScheme::Pseudoexact,
            pseudoexact_resolution: pseudo,
            simp_exponent: problem.simp.s,
            simp_schedule: problem.simp_schedule,
            rho_init: problem.rho_init,
            tau: problem.tau,
            tau_schedule: problem.tau_schedule,
            smoothing: problem.smoothing,
            quadrature_nodes: quad,
            verify_every: 10,
            verify_nodes: verify,
            verify_final: true,
            metric_design_scale: T::one(),
            metric_param_scale: T::one(),
            log_wall_time: false,
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch size must be at least 1");
        }
        if self.iterations == 0 {
            return invalid("iteration count must be at least 1");
        }
        if let Some(m) = self.memory_cap {
            if m < self.batch_size {
                return invalid("memory cap must be at least the batch size");
            }
        }
        if self.method == Method::SmmaLimited && self.memory_cap.is_none() {
            return invalid("smma-limited needs a memory cap");
        }
        if self.pseudoexact_resolution == 0 || self.quadrature_nodes == 0 {
            return invalid("quadrature resolutions must be positive");
        }
        if self.verify_nodes < 2 && (self.verify_every > 0 || self.verify_final) {
            return invalid("dense verification needs at least 2 nodes");
        }
        if !(self.tau > T::zero()) {
            return invalid("move limit must be positive");
        }
        if !(self.rho_init >= T::zero() && self.rho_init <= T::one()) {
            return invalid("initial density must lie in [0, 1]");
        }
        SimpParams::with_exponent(self.simp_exponent)?;
        SmoothingParams::new(self.smoothing.a1, self.smoothing.a2, self.smoothing.a3, self.smoothing.c_max, self.smoothing.p_level)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow<T> {
    pub iter: usize,
    pub rvol: T,
    pub pvol: T,
    pub g_internal: T,
    pub dense: Option<DenseCc<T>>,
    pub tau: T,
    pub store_size: usize,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationLog<T> {
    pub rows: Vec<LogRow<T>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub design: Vec<T>,
    pub simp: SimpParams<T>,
    pub log: IterationLog<T>,
    /// Dense verification of the returned design.
    pub final_dense: Option<DenseCc<T>>,
    pub snapshots: Vec<(usize, Vec<T>)>,
    /// Largest store size observed right after a batch was added.
    pub max_store_size: usize,
    pub store: Option<SampleStore<T>>,
}

/// Fixed-weight quadrature estimate of the smoothed constraint and its
/// design gradient.
pub fn quadrature_constraint<T: Real>(
    problem: &ProblemDef<T>,
    rho: &[T],
    simp: &SimpParams<T>,
    smoothing: &SmoothingParams<T>,
    quad: &QuadratureSet<T>,
) -> Result<(T, Vec<T>)> {
    let recs = problem.records(rho, simp, smoothing, &quad.points)?;
    let metric = JointMetric::new(T::one(), T::one(), problem.metric_axes())?;
    let mut store = SampleStore::new(metric, None);
    let design = Arc::new(rho.to_vec());
    for ((value, gradient), x) in recs.into_iter().zip(&quad.points) {
        store.push(SampleRecord { design: design.clone(), param: x.clone(), inner_value: value, inner_gradient: gradient, iteration_born: 0 })?;
    }
    store.aggregate(&WeightSet { alpha: quad.weights.clone() }, &problem.outer(smoothing))
}

pub fn run<T: Real>(problem: &ProblemDef<T>, cfg: &RunConfig<T>) -> Result<RunOutput<T>> {
    match cfg.method {
        Method::Smma | Method::SmmaLimited => run_smma(problem, cfg),
        Method::MmaQuadrature => run_mma_quadrature(problem, cfg),
    }
}

pub fn run_smma<T: Real>(problem: &ProblemDef<T>, cfg: &RunConfig<T>) -> Result<RunOutput<T>> {
    if cfg.method == Method::MmaQuadrature {
        return invalid("run_smma needs method smma or smma-limited");
    }
    drive(problem, cfg)
}

pub fn run_mma_quadrature<T: Real>(problem: &ProblemDef<T>, cfg: &RunConfig<T>) -> Result<RunOutput<T>> {
    if cfg.method != Method::MmaQuadrature {
        return invalid("run_mma_quadrature needs method mma-quadrature");
    }
    drive(problem, cfg)
}

/// SIMP exponent in effect at iteration `k` (1-based).
pub fn simp_at<T: Real>(cfg: &RunConfig<T>, k: usize) -> T {
    match cfg.simp_schedule {
        Some((switch, s)) if k > switch => s,
        _ => cfg.simp_exponent,
    }
}

fn drive<T: Real>(problem: &ProblemDef<T>, cfg: &RunConfig<T>) -> Result<RunOutput<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let sm = cfg.smoothing;
    let outer = problem.outer(&sm);
    let limited = cfg.method == Method::SmmaLimited;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let metric = JointMetric::new(cfg.metric_design_scale, cfg.metric_param_scale, problem.metric_axes())?;
    let mut store = SampleStore::new(metric, if limited { cfg.memory_cap } else { None });
    let natural = match cfg.weight_scheme {
        WeightScheme::Pseudoexact => Some(problem.natural_quadrature(cfg.pseudoexact_resolution)),
        WeightScheme::Empirical => None,
    };
    let baseline = match cfg.method {
        Method::MmaQuadrature => Some(problem.trapezoid_rule(cfg.quadrature_nodes)?),
        _ => None,
    };

    let mut rho = vec![cfg.rho_init; problem.dim()];
    for (&e, &v) in &problem.space.fixed {
        rho[e] = v;
    }
    let mut state = MmaState::new(problem.dim(), cfg.tau, T::zero(), T::one())?;
    let mut simp = SimpParams::with_exponent(simp_at(cfg, 1))?;
    let rvol_grad = problem.space.rvol_gradient();
    let mut log = IterationLog::default();
    let mut snapshots = Vec::new();
    let mut max_store_size = 0;

    for k in 1..=cfg.iterations {
        let s = simp_at(cfg, k);
        if s != simp.s {
            simp = SimpParams::with_exponent(s)?;
            store.clear();
        }
        state.apply_move_limits(cfg.tau_schedule);

        let (g_hat, dg_hat, store_size) = if let Some(quad) = &baseline {
            let (g, dg) = quadrature_constraint(problem, &rho, &simp, &sm, quad)?;
            (g, dg, quad.points.len())
        } else {
            let params = problem.sample_params(&mut rng, cfg.batch_size);
            let recs = problem.records(&rho, &simp, &sm, &params)?;
            let design = Arc::new(rho.clone());
            for ((value, gradient), x) in recs.into_iter().zip(params) {
                store.push(SampleRecord { design: design.clone(), param: x, inner_value: value, inner_gradient: gradient, iteration_born: k })?;
            }
            max_store_size = max_store_size.max(store.len());
            let weights = match &natural {
                Some(q) => store.pseudoexact_weights(&rho, q)?,
                None => store.empirical_weights(&rho)?,
            };
            let (g, dg) = store.aggregate(&weights, &outer)?;
            if let Some(m) = store.capacity {
                if k < cfg.iterations && store.len() + cfg.batch_size > m {
                    store.evict_min_weight(&weights, store.len() + cfg.batch_size - m)?;
                }
            }
            (g, dg, store.len())
        };

        let rvol = problem.space.rvol(&rho);
        let verify_now = cfg.verify_every > 0 && (k % cfg.verify_every == 0 || k == cfg.iterations);
        let dense = if verify_now { Some(dense_cc(problem, &rho, &simp, &sm, cfg.verify_nodes)?) } else { None };
        log.rows.push(LogRow {
            iter: k,
            rvol,
            pvol: problem.space.pvol(&rho, &simp),
            g_internal: g_hat,
            dense,
            tau: state.tau,
            store_size,
            wall_ms: cfg.log_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
        });
        if cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0 {
            snapshots.push((k, rho.clone()));
        }

        state.update_asymptotes(&rho)?;
        let sp = state.subproblem(&rho, (rvol, &rvol_grad), (g_hat - sm.p_level, &dg_hat))?;
        let sol = sp.solve()?;
        rho = sol.z;
        for (&e, &v) in &problem.space.fixed {
            rho[e] = v;
        }
    }

    let final_dense = if cfg.verify_final { Some(dense_cc(problem, &rho, &simp, &sm, cfg.verify_nodes)?) } else { None };
    Ok(RunOutput {
        design: rho,
        simp,
        log,
        final_dense,
        snapshots,
        max_store_size,
        store: baseline.is_none().then_some(store),
    })
}
