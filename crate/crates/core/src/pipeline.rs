//! Run configuration and the file-producing pipelines behind the CLI.

use crate::boundary::{build_operators, calderon_residuals, matrix_to_csv, ResidualReport};
use crate::error::{Error, Result};
use crate::geometry::{generate_prefractal, validate_domain, DomainSpec, Polyline, PrefractalKind, ValidationReport};
use crate::impedance::{optimize, FeasibilityChecker, ImpedanceClass, Objective, OptimisationResult, OptimiserSettings};
use crate::layer::HelmholtzSetup;
use crate::linalg::rel_diff;
use crate::mesh::{triangulate, MetricsReport, TransmissionMesh};
use crate::mie::{mie_coefficients, MieBc};
use crate::scattering::{
    far_field_power, optical_theorem, BoundaryCondition, ExteriorSolver, FarFieldRoute, ImpedanceSpec, IncidentField, RobinSweep,
    PowerReport, ScatteringContext, DEFAULT_ANGLE_COUNT,
};
use crate::trace::{exterior_gram, steklov_matrix};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disk,
    Square,
    RegularPolygon,
    Koch,
    Minkowski,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseShape {
    Square,
    RegularPolygon,
}

fn one() -> f64 {
    1.0
}
fn square_base() -> BaseShape {
    BaseShape::Square
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: ShapeKind,
    /// Prefractal level.
    #[serde(default)]
    pub level: u32,
    /// Disk or polygon circumradius.
    #[serde(default = "one")]
    pub radius: f64,
    /// Polygon side count, for regular polygons and polygon bases.
    #[serde(default)]
    pub sides: Option<usize>,
    #[serde(default = "square_base")]
    pub base: BaseShape,
    /// Vertex CSV for `csv` obstacles, relative to the working directory.
    #[serde(default)]
    pub path: Option<String>,
    pub ball_radius: f64,
}

fn default_angle_count() -> usize {
    DEFAULT_ANGLE_COUNT
}
fn default_route() -> FarFieldRoute {
    FarFieldRoute::Density
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretisation {
    pub h: f64,
    /// DtN mode cutoff; default max(⌈kR⌉ + 16, 16).
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default = "default_angle_count")]
    pub angle_count: usize,
    #[serde(default = "default_route")]
    pub route: FarFieldRoute,
}

fn default_bc() -> BoundaryCondition {
    BoundaryCondition::Dirichlet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub k: f64,
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
    /// Plane-wave incidence angle in degrees.
    #[serde(default)]
    pub incidence_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimiserConfig {
    pub class: ImpedanceClass,
    #[serde(default)]
    pub settings: OptimiserSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorsConfig {
    /// Also run at h/2 and report residual ratios.
    #[serde(default)]
    pub refinement: bool,
}

fn full_circle() -> Vec<(f64, f64)> {
    vec![(0.0, 360.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub id: String,
    /// Accepted for reproducibility records; no stage draws random numbers.
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub discretisation: Discretisation,
    pub physics: Physics,
    /// Θ as degree intervals.
    #[serde(default = "full_circle")]
    pub theta_deg: Vec<(f64, f64)>,
    #[serde(default)]
    pub optimiser: Option<OptimiserConfig>,
    #[serde(default)]
    pub operators: Option<OperatorsConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.discretisation.h > 0.0) {
            return bad(format!("h = {} must be positive", self.discretisation.h));
        }
        if !(self.physics.k > 0.0) {
            return bad(format!("k = {} must be positive", self.physics.k));
        }
        if self.discretisation.angle_count < 2 {
            return bad("angle_count must be at least 2".into());
        }
        for &(a, b) in &self.theta_deg {
            if !(0.0 <= a && a <= b && b <= 360.0) {
                return bad(format!("theta interval [{a}, {b}] must be ordered within [0, 360] degrees"));
            }
        }
        Ok(())
    }

    pub fn theta_radians(&self) -> Vec<(f64, f64)> {
        self.theta_deg.iter().map(|&(a, b)| (a.to_radians(), b.to_radians())).collect()
    }

    pub fn incident(&self) -> Result<IncidentField> {
        IncidentField::from_angle(self.physics.incidence_deg.to_radians(), self.physics.k)
    }

    pub fn obstacle(&self) -> Result<Polyline> {
        let g = &self.geometry;
        let polygon = |r: f64| -> Result<Polyline> {
            let n = g.sides.ok_or_else(|| Error::Config("regular polygon needs `sides`".into()))?;
            if n < 3 {
                return Err(Error::Config(format!("regular polygon needs at least 3 sides, got {n}")));
            }
            Ok(Polyline::regular_polygon(n, r))
        };
        let base = || -> Result<Polyline> {
            match g.base {
                BaseShape::Square => Ok(Polyline::unit_square()),
                BaseShape::RegularPolygon => polygon(g.radius),
            }
        };
        match g.kind {
            ShapeKind::Disk => Ok(Polyline::disk(g.radius, self.discretisation.h)),
            ShapeKind::Square => Ok(Polyline::unit_square()),
            ShapeKind::RegularPolygon => polygon(g.radius),
            ShapeKind::Koch => generate_prefractal(PrefractalKind::Koch, g.level, &base()?),
            ShapeKind::Minkowski => generate_prefractal(PrefractalKind::Minkowski, g.level, &base()?),
            ShapeKind::Csv => {
                let p = g.path.as_ref().ok_or_else(|| Error::Config("csv geometry needs `path`".into()))?;
                Polyline::from_csv(&std::fs::read_to_string(p)?)
            }
        }
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        Ok(DomainSpec {
            obstacle: self.obstacle()?,
            ball_radius: self.geometry.ball_radius,
            wavenumber: C64::new(self.physics.k, 0.0),
        })
    }
}

pub fn run_geometry(cfg: &RunConfig) -> Result<(Polyline, ValidationReport)> {
    let spec = cfg.domain()?;
    let report = validate_domain(&spec);
    Ok((spec.obstacle, report))
}

pub fn run_mesh(cfg: &RunConfig) -> Result<Arc<TransmissionMesh>> {
    Ok(Arc::new(triangulate(&cfg.domain()?, cfg.discretisation.h)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorReport {
    pub geometry_id: String,
    pub k: f64,
    pub h: f64,
    pub interface_dofs: usize,
    pub mesh_nodes: usize,
    pub jump_relation_error: f64,
    pub residuals: ResidualReport,
    /// Residuals at h/2 and the per-relation ratio fine/coarse.
    pub refined: Option<(ResidualReport, [f64; 4])>,
}

pub struct OperatorRun {
    pub report: OperatorReport,
    /// (file stem, matrix CSV).
    pub matrices: Vec<(&'static str, String)>,
}

type OperatorPieces = (ResidualReport, Vec<(&'static str, String)>, (usize, usize, f64));

fn operator_residuals(cfg: &RunConfig, h: f64) -> Result<OperatorPieces> {
    let mut c = cfg.clone();
    c.discretisation.h = h;
    let m = run_mesh(&c)?;
    let s = HelmholtzSetup::new(m, cfg.physics.k, cfg.discretisation.modes)?;
    let ops = build_operators(&s.solver)?;
    let st = steklov_matrix(&s.forms)?;
    let r = calderon_residuals(&ops, &st)?;
    let mats = vec![
        ("K", matrix_to_csv(&ops.k_op)),
        ("Kstar", matrix_to_csv(&ops.kstar)),
        ("V", matrix_to_csv(&ops.v)),
        ("W", matrix_to_csv(&ops.w)),
        ("steklov", matrix_to_csv(&st.s)),
    ];
    Ok((r, mats, (ops.interface_dofs, ops.mesh_nodes, ops.jump_relation_error)))
}

pub fn run_operators(cfg: &RunConfig) -> Result<OperatorRun> {
    let h = cfg.discretisation.h;
    let (residuals, mats, (nb, nodes, jump)) = operator_residuals(cfg, h)?;
    let refined = if cfg.operators.as_ref().is_some_and(|o| o.refinement) {
        let (fine, _, _) = operator_residuals(cfg, h / 2.0)?;
        let a = residuals.relations();
        let b = fine.relations();
        Some((fine, [b[0] / a[0], b[1] / a[1], b[2] / a[2], b[3] / a[3]]))
    } else {
        None
    };
    Ok(OperatorRun {
        report: OperatorReport {
            geometry_id: cfg.id.clone(),
            k: cfg.physics.k,
            h,
            interface_dofs: nb,
            mesh_nodes: nodes,
            jump_relation_error: jump,
            residuals,
            refined,
        },
        matrices: mats,
    })
}

pub struct ScatterRun {
    pub far_field_csv: String,
    pub power: PowerReport,
    pub field_vtk: String,
}

fn context(cfg: &RunConfig) -> Result<Arc<ScatteringContext>> {
    Ok(Arc::new(ScatteringContext::new(run_mesh(cfg)?, cfg.physics.k, cfg.discretisation.modes)?))
}

pub fn run_scatter(cfg: &RunConfig) -> Result<ScatterRun> {
    let ctx = context(cfg)?;
    let solver = ExteriorSolver::new(ctx.clone(), cfg.physics.bc.clone())?;
    let s = solver.scatter(&cfg.incident()?)?;
    let ff = s.far_field(cfg.discretisation.route, cfg.discretisation.angle_count)?;
    let q = far_field_power(&ff, &cfg.theta_radians())?;
    Ok(ScatterRun {
        far_field_csv: ff.to_csv(),
        power: PowerReport { q, theta_intervals: cfg.theta_deg.clone(), route: ff.route, k: cfg.physics.k, geometry_id: cfg.id.clone() },
        field_vtk: ctx.mesh.to_vtk(Some(("u_scattered", &s.values))),
    })
}

pub fn run_optimize(cfg: &RunConfig) -> Result<OptimisationResult> {
    let oc = cfg.optimiser.as_ref().ok_or_else(|| Error::Config("optimize needs an `optimiser` block".into()))?;
    let ctx = context(cfg)?;
    let se = exterior_gram(&ctx.forms)?;
    let checker = FeasibilityChecker::new(cfg.physics.k, ctx.steklov()?, &se)?;
    if cfg.physics.bc == BoundaryCondition::Dirichlet {
        return Err(Error::Config("optimize needs a Neumann or Robin boundary condition".into()));
    }
    let objective = Objective {
        sweep: RobinSweep::new(ctx, cfg.incident()?)?,
        intervals: cfg.theta_radians(),
        route: oc.settings.route,
        angle_count: oc.settings.angle_count,
        checker,
    };
    optimize(&oc.class, &objective, &oc.settings)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub geometry_id: String,
    pub k: f64,
    pub h: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn check(name: &str, measured: f64, tolerance: f64) -> Check {
    Check { name: name.into(), measured, tolerance, pass: measured <= tolerance }
}

/// Mie comparisons on a disk obstacle.
pub fn run_validate(cfg: &RunConfig) -> Result<ValidationSummary> {
    if cfg.geometry.kind != ShapeKind::Disk {
        return Err(Error::Config("validate needs a disk geometry".into()));
    }
    let a = cfg.geometry.radius;
    let k = cfg.physics.k;
    let inc = cfg.incident()?;
    let ctx = context(cfg)?;
    let n = cfg.discretisation.angle_count;
    let lambda = match &cfg.physics.bc {
        BoundaryCondition::Robin(ImpedanceSpec::Constant(l)) => *l,
        _ => C64::new(1.0, 0.5),
    };
    let mut checks = Vec::new();
    let pts: Vec<[f64; 2]> = ctx.dtn.ring.iter().map(|&v| ctx.mesh.nodes[v]).collect();

    let dir = ExteriorSolver::new(ctx.clone(), BoundaryCondition::Dirichlet)?.scatter(&inc)?;
    let mie = mie_coefficients(MieBc::Dirichlet, a, k, inc.direction)?;
    checks.push(check("dirichlet_ring_trace", rel_diff(&dir.ring_trace(), &mie.near_field(&pts)?), 0.02));
    let ffb = dir.far_field(FarFieldRoute::DtnModes, n)?;
    checks.push(check("dirichlet_far_field", rel_diff(&ffb.values, &mie.far_field(&ffb.angles)), 0.02));
    let ffa = dir.far_field(FarFieldRoute::Density, n)?;
    checks.push(check("far_field_route_agreement", rel_diff(&ffa.values, &ffb.values), 0.02));
    checks.push(check("dirichlet_total_trace", dir.total_dirichlet_residual().unwrap_or(f64::NAN), 1e-10));
    let q = far_field_power(&ffb, &[(0.0, 2.0 * std::f64::consts::PI)])?;
    checks.push(check("dirichlet_total_power", (q - mie.total_power()).abs() / mie.total_power(), 0.03));
    let ot = optical_theorem(&dir, FarFieldRoute::DtnModes, n)?;
    checks.push(check("optical_theorem", (ot.ratio + 1.0).abs(), 0.03));

    let neu = ExteriorSolver::new(ctx.clone(), BoundaryCondition::Neumann)?.scatter(&inc)?;
    let mie = mie_coefficients(MieBc::Neumann, a, k, inc.direction)?;
    let ff = neu.far_field(FarFieldRoute::DtnModes, n)?;
    checks.push(check("neumann_far_field", rel_diff(&ff.values, &mie.far_field(&ff.angles)), 0.02));

    let rob = ExteriorSolver::new(ctx.clone(), BoundaryCondition::Robin(ImpedanceSpec::Constant(lambda)))?.scatter(&inc)?;
    let mie = mie_coefficients(MieBc::IntrinsicRobin(lambda), a, k, inc.direction)?;
    let ff = rob.far_field(FarFieldRoute::DtnModes, n)?;
    checks.push(check("robin_far_field", rel_diff(&ff.values, &mie.far_field(&ff.angles)), 0.02));
    checks.push(check("robin_radiated_power_sign", (-rob.radiated_power()).max(0.0), 1e-10));

    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationSummary { geometry_id: cfg.id.clone(), k, h: cfg.discretisation.h, checks, pass })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshSummary {
    pub geometry_id: String,
    pub h: f64,
    pub metrics: MetricsReport,
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "id": "t",
        "geometry": {"kind": "disk", "radius": 1.0, "ball_radius": 2.0},
        "discretisation": {"h": 0.1},
        "physics": {"k": 2.0, "bc": {"robin": {"constant": [1.0, 0.5]}}}
    }"#;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let c = RunConfig::from_json(BASE).unwrap();
        assert_eq!(c.physics.bc, BoundaryCondition::Robin(ImpedanceSpec::Constant(C64::new(1.0, 0.5))));
        assert_eq!(c.theta_deg, vec![(0.0, 360.0)]);
        assert_eq!(c.discretisation.angle_count, DEFAULT_ANGLE_COUNT);
        let bad = BASE.replace("\"h\": 0.1", "\"h\": 0.1, \"hh\": 2");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = BASE.replace("\"radius\": 1.0,", "\"radius\": 1.0, \"colour\": 1,");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips() {
        let c = RunConfig::from_json(BASE).unwrap();
        let again = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn theta_in_degrees() {
        let c = RunConfig::from_json(&BASE.replace("\"id\": \"t\",", "\"id\": \"t\", \"theta_deg\": [[30, 60]],")).unwrap();
        let r = c.theta_radians();
        assert!((r[0].0 - std::f64::consts::PI / 6.0).abs() < 1e-15);
        let bad = BASE.replace("\"id\": \"t\",", "\"id\": \"t\", \"theta_deg\": [[60, 30]],");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn prefractal_geometry() {
        let text = BASE.replace(r#""kind": "disk", "radius": 1.0"#, r#""kind": "koch", "level": 2"#);
        let c = RunConfig::from_json(&text).unwrap();
        assert_eq!(c.obstacle().unwrap().vertices.len(), 4 * 16);
    }
}
