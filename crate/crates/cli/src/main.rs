mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::Config;
use smma::io::{histogram_to_csv, h1_to_csv, log_to_csv, physical_density, render_pgm, DesignFile, MeshDims};
use smma::smma_driver::run;
use smma::verify::{h1_map, weighted_histogram, DenseEvaluation};
use smma::ProblemDef;

#[derive(Parser)]
#[command(name = "smma", version, about = "Chance-constrained topology optimization with stochastic MMA")]
struct Cli {
    /// Output directory; all written paths are relative to it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point of the sweep described by a TOML config.
    Run { config: PathBuf },
    /// Dense-quadrature verification of a design file.
    Verify {
        design: PathBuf,
        /// Config describing the problem the design belongs to.
        #[arg(long)]
        config: PathBuf,
        /// Nodes per parameter axis (default: the problem's verification grid).
        #[arg(long)]
        nodes: Option<usize>,
        /// Also write the weakness map over the plate's parameter square on an n x n grid.
        #[arg(long)]
        h1: Option<usize>,
        /// Also write a histogram of relative compliances with this bin width.
        #[arg(long)]
        histogram: Option<f64>,
    },
    /// Render a design file as a grayscale PGM image.
    Render {
        design: PathBuf,
        /// Config describing the problem; defaults are used otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Canvas size in pixels for polar meshes.
        #[arg(long, default_value_t = 512)]
        canvas: usize,
        #[arg(long, default_value = "design.pgm")]
        name: String,
    },
}

enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn config_error(path: &Path, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {msg}", path.display()))
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_error(path, e))?;
    Config::parse(&text).map_err(|e| config_error(path, e))
}

fn load_design(path: &Path) -> Result<DesignFile<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_error(path, e))?;
    DesignFile::parse(&text).map_err(|e| config_error(path, e))
}

fn build_problem(cfg: &Config) -> Result<ProblemDef, Failure> {
    cfg.build_problem().map_err(|e| Failure::Config(format!("problem setup: {e}")))
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_run(out: &Path, config_path: &Path) -> Result<(), Failure> {
    let cfg = load_config(config_path)?;
    let problem = build_problem(&cfg)?;
    let points = cfg.sweep();
    let mut runs = Vec::with_capacity(points.len());
    for p in &points {
        runs.push((p, cfg.run_config(&problem, p).map_err(|e| config_error(config_path, e))?));
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut summary = String::from("run,batch_size,tau,seed,rvol,pvol,g_smooth,g_steepened,g_nonsmooth\n");
    for (point, rc) in runs {
        let name = point.dir_name();
        let dir = out.join(&name);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let manifest = toml::to_string(&cfg.resolved(&problem, &rc)).context("serializing manifest")?;
        write(&dir, "manifest.toml", manifest)?;
        let result = run(&problem, &rc).with_context(|| format!("run {name}"))?;
        write(&dir, "log.csv", log_to_csv(&result.log))?;
        let design = DesignFile {
            mesh: MeshDims::of(problem.fem.mesh()),
            simp: result.simp.s,
            filter_radius: problem.space.filter.radius,
            values: result.design.clone(),
        };
        write(&dir, "design.txt", design.to_text())?;
        for (iter, rho) in &result.snapshots {
            let snap = DesignFile { values: rho.clone(), ..design.clone() };
            write(&dir, &format!("design-{iter:05}.txt"), snap.to_text())?;
        }
        let last = result.log.rows.last();
        let g = result.final_dense;
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{},{},{},{}",
            rc.batch_size,
            rc.tau,
            rc.seed,
            opt(last.map(|r| r.rvol)),
            opt(last.map(|r| r.pvol)),
            opt(g.map(|g| g.g_smooth)),
            opt(g.map(|g| g.g_steepened)),
            opt(g.map(|g| g.g_nonsmooth)),
        );
        eprintln!("{name}: done");
    }
    write(out, "summary.csv", summary)?;
    Ok(())
}

fn cmd_verify(out: &Path, design: &Path, config_path: &Path, nodes: Option<usize>, h1: Option<usize>, hist: Option<f64>) -> Result<(), Failure> {
    let cfg = load_config(config_path)?;
    let file = load_design(design)?;
    let problem = build_problem(&cfg)?;
    if file.mesh != MeshDims::of(problem.fem.mesh()) || file.values.len() != problem.dim() {
        return Err(config_error(design, format!("design does not match the configured mesh ({} values, expected {})", file.values.len(), problem.dim())));
    }
    let point = cfg.sweep()[0];
    let rc = cfg.run_config(&problem, &point).map_err(|e| config_error(config_path, e))?;
    let mut simp = problem.simp;
    simp.s = file.simp;
    let n = nodes.unwrap_or(rc.verify_nodes);
    if n < 2 {
        return Err(Failure::Config("verification needs at least 2 nodes per axis".into()));
    }
    let quad = problem.trapezoid_rule(n).context("building verification grid")?;
    let ev = DenseEvaluation::new(&problem, &file.values, &simp, &rc.smoothing, quad).context("dense verification")?;
    let g = ev.all();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, "verify.csv", format!("nodes,g_smooth,g_steepened,g_nonsmooth\n{n},{},{},{}\n", g.g_smooth, g.g_steepened, g.g_nonsmooth))?;
    if let Some(width) = hist {
        let (w, v): (Vec<f64>, Vec<f64>) = ev.relative_compliances().into_iter().unzip();
        let h = weighted_histogram(&v, &w, width).map_err(|e| Failure::Config(format!("histogram: {e}")))?;
        write(out, "histogram.csv", histogram_to_csv(&h))?;
    }
    if let Some(grid) = h1 {
        let rows = h1_map(&problem, &file.values, &simp, &rc.smoothing, grid).map_err(|e| Failure::Config(format!("weakness map: {e}")))?;
        write(out, "h1.csv", h1_to_csv(&rows))?;
    }
    println!("g_smooth = {}\ng_steepened = {}\ng_nonsmooth = {}", g.g_smooth, g.g_steepened, g.g_nonsmooth);
    Ok(())
}

fn cmd_render(out: &Path, design: &Path, config_path: Option<&Path>, canvas: usize, name: &str) -> Result<(), Failure> {
    let file = load_design(design)?;
    let mut cfg = match config_path {
        Some(p) => load_config(p)?,
        None => {
            let problem = match file.mesh {
                MeshDims::Rect { .. } => "plate",
                MeshDims::Polar { .. } => "wheel",
            };
            Config::parse(&format!("problem = \"{problem}\"\nmethod = \"smma\"\niterations = 1\nbatch_size = 1\n")).map_err(Failure::Config)?
        }
    };
    cfg.mesh = Some(match file.mesh {
        MeshDims::Rect { nx, ny } => [nx, ny],
        MeshDims::Polar { n_radial, n_angular } => [n_radial, n_angular],
    });
    cfg.filter_radius = Some(file.filter_radius);
    let problem = build_problem(&cfg)?;
    if file.values.len() != problem.dim() || MeshDims::of(problem.fem.mesh()) != file.mesh {
        return Err(config_error(design, "design does not match its mesh header or the configured problem"));
    }
    let mut simp = problem.simp;
    simp.s = file.simp;
    let phys = physical_density(&problem.space, &file.values, &simp).context("filtering design")?;
    let img = render_pgm(problem.fem.mesh(), &phys, canvas).context("rendering")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, name, img)?;
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("SMMA_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Failure::Config(format!("SMMA_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Failure::Config("SMMA_THREADS must be a positive integer".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Run { config } => cmd_run(&cli.out, config),
        Command::Verify { design, config, nodes, h1, histogram } => cmd_verify(&cli.out, design, config, *nodes, *h1, *histogram),
        Command::Render { design, config, canvas, name } => cmd_render(&cli.out, design, config.as_deref(), *canvas, name),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
