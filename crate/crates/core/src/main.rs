use clap::{Parser, Subcommand};
use fractal_helmholtz::pipeline::{
    run_geometry, run_mesh, run_operators, run_optimize, run_scatter, run_validate, MeshSummary, RunConfig,
};
use fractal_helmholtz::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fhelm", version, about = "Helmholtz scattering by polygonal and prefractal obstacles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Obstacle vertices and domain validation.
    Geom,
    /// Transmission mesh as VTK plus quality metrics.
    Mesh,
    /// Boundary operator matrices and Calderón residuals.
    Operators,
    /// Scattered far field and windowed power.
    Scatter,
    /// Maximise the windowed power over an impedance class.
    Optimize,
    /// Mie comparisons on a disk.
    Validate,
}

enum Failure {
    Error(Error),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(Error::Io(e))
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let p = dir.join(name);
    std::fs::write(&p, contents)?;
    log::info!("wrote {}", p.display());
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(v).map_err(Error::from)? + "\n")
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Geom => {
            let (line, report) = run_geometry(&cfg)?;
            write(out, "geometry.csv", &line.to_csv())?;
            write(out, "geometry_report.json", &json(&report)?)?;
            if !report.passed() {
                return Err(Error::Geometry(report.failures.join("; ")).into());
            }
        }
        Command::Mesh => {
            let m = run_mesh(&cfg)?;
            write(out, "mesh.vtk", &m.to_vtk(None))?;
            let s = MeshSummary { geometry_id: cfg.id.clone(), h: cfg.discretisation.h, metrics: m.metrics() };
            write(out, "mesh_metrics.json", &json(&s)?)?;
        }
        Command::Operators => {
            let r = run_operators(&cfg)?;
            for (name, csv) in &r.matrices {
                write(out, &format!("{name}.csv"), csv)?;
            }
            write(out, "calderon_residuals.json", &json(&r.report)?)?;
            let rel = r.report.residuals.relations();
            if !rel.iter().all(|x| x.is_finite()) {
                return Err(Failure::Validation(format!("non-finite Calderón residuals {rel:?}")));
            }
        }
        Command::Scatter => {
            let r = run_scatter(&cfg)?;
            write(out, "far_field.csv", &r.far_field_csv)?;
            write(out, "power.json", &json(&r.power)?)?;
            write(out, "field.vtk", &r.field_vtk)?;
        }
        Command::Optimize => {
            let r = run_optimize(&cfg)?;
            write(out, "optimisation.json", &json(&r)?)?;
            write(out, "optimisation_trace.csv", &r.trace_csv())?;
        }
        Command::Validate => {
            let r = run_validate(&cfg)?;
            write(out, "validation.json", &json(&r)?)?;
            for c in &r.checks {
                println!("{} {}: {:.3e} (tolerance {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.measured, c.tolerance);
            }
            if !r.pass {
                let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
                return Err(Failure::Validation(format!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("validation failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("{e}");
            let code = match e {
                Error::Config(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::Geometry(_)
                | Error::Precondition(_)
                | Error::Class(_)
                | Error::DimensionMismatch { .. } => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}
