//! Plane-wave incidence, exterior Dirichlet/Neumann/Robin solves on the
//! truncated exterior, far-field extraction and the windowed far-field power.

use crate::error::{Error, Result};
use crate::fem::{add_dense_block, assemble_dtn, combine, default_mode_cutoff, weak_form_of_function, DtnForm, Pde};
use crate::linalg::{dense_solve, dmat_mul_vec, rel_diff, ConstrainedSystem, CsrMatrix, DMat, Link};
use crate::mesh::{Region, TransmissionMesh};
use crate::specfun::hankel1_seq;
use crate::trace::{cotrace_of, steklov_matrix, Field, RegionForms, SteklovMatrix};
use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

pub const DEFAULT_ANGLE_COUNT: usize = 360;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Plane wave e^{ik d·x}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentField {
    pub direction: [f64; 2],
    pub k: f64,
}

impl IncidentField {
    pub fn plane_wave(direction: [f64; 2], k: f64) -> Result<Self> {
        let n = direction[0].hypot(direction[1]);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("incidence direction must be a unit vector, |d| = {n}")));
        }
        if !(k > 0.0) {
            return Err(Error::Domain(format!("wavenumber {k} must be real positive")));
        }
        Ok(Self { direction, k })
    }

    pub fn from_angle(theta: f64, k: f64) -> Result<Self> {
        Self::plane_wave([theta.cos(), theta.sin()], k)
    }

    pub fn angle(&self) -> f64 {
        self.direction[1].atan2(self.direction[0])
    }

    pub fn value(&self, x: [f64; 2]) -> C64 {
        C64::from_polar(1.0, self.k * (self.direction[0] * x[0] + self.direction[1] * x[1]))
    }

    pub fn value_and_gradient(&self, x: [f64; 2]) -> (C64, [C64; 2]) {
        let u = self.value(x);
        let iku = C64::new(0.0, self.k) * u;
        (u, [iku * self.direction[0], iku * self.direction[1]])
    }
}

/// Multiplication impedance over interface DOFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpedanceSpec {
    Constant(C64),
    Nodal(Vec<C64>),
}

impl ImpedanceSpec {
    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant(l) => *l == zero(),
            Self::Nodal(v) => v.iter().all(|z| *z == zero()),
        }
    }

    pub fn values(&self, n: usize) -> Result<Vec<C64>> {
        match self {
            Self::Constant(l) => Ok(vec![*l; n]),
            Self::Nodal(v) if v.len() == n => Ok(v.clone()),
            Self::Nodal(v) => Err(Error::DimensionMismatch { expected: n, got: v.len() }),
        }
    }

    /// λI or diag(λ_j).
    pub fn matrix(&self, n: usize) -> Result<DMat> {
        let v = self.values(n)?;
        Ok(Mat::from_fn(n, n, |i, j| if i == j { v[i] } else { zero() }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Robin(ImpedanceSpec),
}

impl BoundaryCondition {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Dirichlet => "dirichlet",
            Self::Neumann => "neumann",
            Self::Robin(_) => "robin",
        }
    }

    fn active_impedance(&self) -> Option<&ImpedanceSpec> {
        match self {
            Self::Robin(l) if !l.is_zero() => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarFieldRoute {
    /// Pairing of the normal-derivative jump with the far-field kernel.
    Density,
    /// Fourier read-off on the truncation circle.
    DtnModes,
}

impl FarFieldRoute {
    pub fn label(self) -> &'static str {
        match self {
            Self::Density => "density",
            Self::DtnModes => "dtn_modes",
        }
    }
}

/// Mesh, forms and the ring DtN at one wavenumber, shared by every exterior solve.
pub struct ScatteringContext {
    pub mesh: Arc<TransmissionMesh>,
    pub forms: Arc<RegionForms>,
    pub dtn: Arc<DtnForm>,
    exterior_matrix: CsrMatrix<C64>,
    steklov: OnceLock<Arc<SteklovMatrix>>,
    extension: OnceLock<std::result::Result<ConstrainedSystem, String>>,
}

impl ScatteringContext {
    pub fn new(mesh: Arc<TransmissionMesh>, k: f64, cutoff: Option<usize>) -> Result<Self> {
        let forms = Arc::new(RegionForms::new(mesh.clone())?);
        let m = cutoff.unwrap_or_else(|| default_mode_cutoff(k, mesh.ball_radius));
        let dtn = Arc::new(assemble_dtn(&mesh, k, m)?);
        Self::from_parts(forms, dtn)
    }

    pub fn from_parts(forms: Arc<RegionForms>, dtn: Arc<DtnForm>) -> Result<Self> {
        let k = dtn.k;
        let mesh = forms.mesh.clone();
        let (ke, me) = &forms.exterior;
        let exterior_matrix = add_dense_block(&combine(ke, me, -k * k), &dtn.ring, &dtn.t, C64::new(-1.0, 0.0));
        Ok(Self { mesh, forms, dtn, exterior_matrix, steklov: OnceLock::new(), extension: OnceLock::new() })
    }

    pub fn k(&self) -> f64 {
        self.dtn.k
    }

    pub fn pde(&self) -> Pde {
        Pde::Helmholtz(self.k())
    }

    pub fn steklov(&self) -> Result<Arc<SteklovMatrix>> {
        if let Some(s) = self.steklov.get() {
            return Ok(s.clone());
        }
        let s = Arc::new(steklov_matrix(&self.forms)?);
        Ok(self.steklov.get_or_init(|| s).clone())
    }

    /// Use a precomputed Gram matrix instead of building one.
    pub fn set_steklov(&self, s: Arc<SteklovMatrix>) {
        let _ = self.steklov.set(s);
    }

    fn region_links(&self, region: Region) -> Vec<Link> {
        let n = self.mesh.node_count();
        let mut links = vec![Link::Fixed; n];
        for v in self.mesh.region_nodes(region) {
            links[v] = Link::Free;
        }
        links
    }

    /// Interior Dirichlet solve: the field inside with the given trace.
    pub fn interior_extension(&self, trace: &[C64]) -> Result<Vec<C64>> {
        let sys = self.extension.get_or_init(|| {
            let mut links = self.region_links(Region::Interior);
            for v in self.mesh.interface_nodes(Region::Interior) {
                links[v] = Link::Fixed;
            }
            let (ki, mi) = &self.forms.interior;
            let k = self.k();
            ConstrainedSystem::new(combine(ki, mi, -k * k), links).map_err(|e| e.to_string())
        });
        let sys = sys.as_ref().map_err(|e| {
            Error::NearResonance(format!("interior Dirichlet extension at k = {} is singular: {e}", self.k()))
        })?;
        let n = self.mesh.node_count();
        let mut offset = vec![zero(); n];
        for (&v, &t) in self.mesh.interface_nodes(Region::Interior).iter().zip(trace) {
            offset[v] = t;
        }
        sys.solve(&vec![zero(); n], &offset).map_err(|e| {
            Error::NearResonance(format!("interior Dirichlet extension at k = {} failed: {e}", self.k()))
        })
    }

    /// Exterior cotrace of the incident field, integrated from its closed form.
    pub fn incident_cotrace(&self, incident: &IncidentField) -> Result<Vec<C64>> {
        self.check_incident(incident)?;
        let nodes = self.mesh.interface_nodes(Region::Exterior);
        let k = self.k();
        let w = weak_form_of_function(&self.mesh, Region::Exterior, &nodes, -k * k, |x| incident.value_and_gradient(x))?;
        Ok(w.into_iter().map(|z| -z).collect())
    }

    pub fn incident_trace(&self, incident: &IncidentField) -> Vec<C64> {
        self.mesh.interface_nodes(Region::Exterior).iter().map(|&v| incident.value(self.mesh.nodes[v])).collect()
    }

    fn check_incident(&self, incident: &IncidentField) -> Result<()> {
        if (incident.k - self.k()).abs() > 1e-14 * self.k() {
            return Err(Error::Precondition(format!(
                "incident wavenumber {} differs from the solver wavenumber {}",
                incident.k,
                self.k()
            )));
        }
        Ok(())
    }
}

/// One factorised exterior problem.
pub struct ExteriorSolver {
    pub ctx: Arc<ScatteringContext>,
    pub bc: BoundaryCondition,
    system: ConstrainedSystem,
}

impl ExteriorSolver {
    pub fn new(ctx: Arc<ScatteringContext>, bc: BoundaryCondition) -> Result<Self> {
        let mut links = ctx.region_links(Region::Exterior);
        if bc == BoundaryCondition::Dirichlet {
            for v in ctx.mesh.interface_nodes(Region::Exterior) {
                links[v] = Link::Fixed;
            }
        }
        let a = Self::matrix(&ctx, &bc)?;
        let system = ConstrainedSystem::new(a, links).map_err(|e| near_resonance(&ctx, &bc, e))?;
        Ok(Self { ctx, bc, system })
    }

    fn matrix(ctx: &ScatteringContext, bc: &BoundaryCondition) -> Result<CsrMatrix<C64>> {
        match bc.active_impedance() {
            None => Ok(ctx.exterior_matrix.clone()),
            Some(l) => {
                let sl = Self::steklov_times(ctx, l)?;
                let iface = ctx.mesh.interface_nodes(Region::Exterior);
                Ok(add_dense_block(&ctx.exterior_matrix, &iface, &sl, C64::new(-1.0, 0.0)))
            }
        }
    }

    fn steklov_times(ctx: &ScatteringContext, l: &ImpedanceSpec) -> Result<DMat> {
        let s = ctx.steklov()?;
        let v = l.values(s.dim())?;
        Ok(Mat::from_fn(s.dim(), s.dim(), |i, j| s.s[(i, j)] * v[j]))
    }

    /// Robin solver for another impedance, reusing the symbolic factorisation.
    pub fn with_impedance(&self, l: ImpedanceSpec) -> Result<Self> {
        if self.bc == BoundaryCondition::Dirichlet {
            return Err(Error::Precondition("impedance cannot be changed on a Dirichlet solver".into()));
        }
        let bc = BoundaryCondition::Robin(l);
        let a = Self::matrix(&self.ctx, &bc)?;
        let system = self.system.with_matrix(a).map_err(|e| near_resonance(&self.ctx, &bc, e))?;
        Ok(Self { ctx: self.ctx.clone(), bc, system })
    }

    /// Dirichlet: `data` is the trace. Neumann and Robin: `data` is h in ∂ν u + L Tr u = h.
    pub fn solve(&self, data: &[C64]) -> Result<ExteriorSolution> {
        let mesh = &self.ctx.mesh;
        let nb = mesh.interface_len();
        if data.len() != nb {
            return Err(Error::DimensionMismatch { expected: nb, got: data.len() });
        }
        let n = mesh.node_count();
        let mut rhs = vec![zero(); n];
        let mut offset = vec![zero(); n];
        let iface = mesh.interface_nodes(Region::Exterior);
        for (&v, &d) in iface.iter().zip(data) {
            if self.bc == BoundaryCondition::Dirichlet {
                offset[v] = d;
            } else {
                rhs[v] = -d;
            }
        }
        let values = self.system.solve(&rhs, &offset).map_err(|e| near_resonance(&self.ctx, &self.bc, e))?;
        Ok(ExteriorSolution { ctx: self.ctx.clone(), bc: self.bc.clone(), values, incident: None })
    }

    /// Scattered field for a plane wave: the boundary data cancel the incident field's.
    pub fn scatter(&self, incident: &IncidentField) -> Result<ExteriorSolution> {
        let ui = self.ctx.incident_trace(incident);
        let data: Vec<C64> = match &self.bc {
            BoundaryCondition::Dirichlet => ui.iter().map(|z| -z).collect(),
            bc => {
                let ci = self.ctx.incident_cotrace(incident)?;
                match bc.active_impedance() {
                    None => ci.iter().map(|z| -z).collect(),
                    Some(l) => {
                        let sl = Self::steklov_times(&self.ctx, l)?;
                        let slu = dmat_mul_vec(sl.as_ref(), &ui);
                        ci.iter().zip(&slu).map(|(a, b)| -(a + b)).collect()
                    }
                }
            }
        };
        let mut sol = self.solve(&data)?;
        sol.incident = Some(*incident);
        Ok(sol)
    }
}

/// Robin solves for many impedances from one Neumann factorisation. The
/// impedance only touches the interface block, so each solve is a low-rank
/// (Woodbury) correction of the Neumann solution.
pub struct RobinSweep {
    pub ctx: Arc<ScatteringContext>,
    pub incident: IncidentField,
    /// A₀⁻¹ e_j for each exterior interface node, full length.
    z: Vec<Vec<C64>>,
    /// Interface rows of `z`.
    ze: DMat,
    /// Neumann scattered field.
    u0: Vec<C64>,
    incident_trace: Vec<C64>,
}

impl RobinSweep {
    pub fn new(ctx: Arc<ScatteringContext>, incident: IncidentField) -> Result<Self> {
        let base = ExteriorSolver::new(ctx.clone(), BoundaryCondition::Neumann)?;
        let iface = ctx.mesh.interface_nodes(Region::Exterior);
        let n = ctx.mesh.node_count();
        let cases: Vec<(Vec<C64>, Vec<C64>)> = iface
            .iter()
            .map(|&v| {
                let mut r = vec![zero(); n];
                r[v] = C64::new(1.0, 0.0);
                (r, vec![zero(); n])
            })
            .collect();
        let z = base.system.solve_many(&cases).map_err(|e| near_resonance(&ctx, &base.bc, e))?;
        let nb = iface.len();
        let ze = Mat::from_fn(nb, nb, |i, j| z[j][iface[i]]);
        let u0 = base.scatter(&incident)?.values;
        let incident_trace = ctx.incident_trace(&incident);
        Ok(Self { ctx, incident, z, ze, u0, incident_trace })
    }

    pub fn scatter(&self, l: &ImpedanceSpec) -> Result<ExteriorSolution> {
        let bc = BoundaryCondition::Robin(l.clone());
        if l.is_zero() {
            return Ok(ExteriorSolution { ctx: self.ctx.clone(), bc, values: self.u0.clone(), incident: Some(self.incident) });
        }
        let c = ExteriorSolver::steklov_times(&self.ctx, l)?;
        let nb = self.ze.nrows();
        let iface = self.ctx.mesh.interface_nodes(Region::Exterior);
        // (A₀ − E C Eᵀ) u = b₀ + E C uⁱ with A₀ u₀ = b₀.
        let cui = dmat_mul_vec(c.as_ref(), &self.incident_trace);
        let zc = dmat_mul_vec(self.ze.as_ref(), &cui);
        let w0: Vec<C64> = iface.iter().zip(&zc).map(|(&v, a)| self.u0[v] + a).collect();
        let zec = &self.ze * &c;
        let m = Mat::from_fn(nb, nb, |i, j| if i == j { C64::new(1.0, 0.0) - zec[(i, j)] } else { -zec[(i, j)] });
        let w = dense_solve(m.as_ref(), &w0);
        let mw = dmat_mul_vec(m.as_ref(), &w);
        if !w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || rel_diff(&mw, &w0) > crate::linalg::SOLVE_TOLERANCE {
            return Err(Error::NearResonance(format!(
                "exterior robin problem at k = {} is singular for this impedance",
                self.ctx.k()
            )));
        }
        let cw = dmat_mul_vec(c.as_ref(), &w);
        let coeff: Vec<C64> = cui.iter().zip(&cw).map(|(a, b)| a + b).collect();
        let mut values = self.u0.clone();
        for (col, a) in self.z.iter().zip(&coeff) {
            if *a != zero() {
                for (u, zc) in values.iter_mut().zip(col) {
                    *u += zc * a;
                }
            }
        }
        Ok(ExteriorSolution { ctx: self.ctx.clone(), bc, values, incident: Some(self.incident) })
    }
}

fn near_resonance(ctx: &ScatteringContext, bc: &BoundaryCondition, e: Error) -> Error {
    match e {
        Error::Solver(m) => Error::NearResonance(format!("exterior {} problem at k = {}: {m}", bc.label(), ctx.k())),
        other => other,
    }
}

pub fn solve_exterior(ctx: Arc<ScatteringContext>, bc: BoundaryCondition, data: &[C64]) -> Result<ExteriorSolution> {
    ExteriorSolver::new(ctx, bc)?.solve(data)
}

pub fn scattered_field(
    ctx: Arc<ScatteringContext>,
    bc: BoundaryCondition,
    incident: &IncidentField,
) -> Result<ExteriorSolution> {
    ExteriorSolver::new(ctx, bc)?.scatter(incident)
}

/// Exterior field on U; values are indexed by mesh node and vanish off U.
#[derive(Clone)]
pub struct ExteriorSolution {
    pub ctx: Arc<ScatteringContext>,
    pub bc: BoundaryCondition,
    pub values: Vec<C64>,
    pub incident: Option<IncidentField>,
}

impl ExteriorSolution {
    pub fn field(&self) -> Field {
        Field { region: Region::Exterior, pde: Some(self.ctx.pde()), values: self.values.clone() }
    }

    pub fn trace(&self) -> Vec<C64> {
        self.ctx.mesh.interface_nodes(Region::Exterior).iter().map(|&v| self.values[v]).collect()
    }

    pub fn cotrace(&self) -> Vec<C64> {
        cotrace_of(&self.ctx.forms, &self.values, Region::Exterior, self.ctx.pde())
    }

    pub fn ring_trace(&self) -> Vec<C64> {
        self.ctx.dtn.ring.iter().map(|&v| self.values[v]).collect()
    }

    /// Im(uᴴ T u) on the truncation circle; non-negative for outgoing fields.
    pub fn radiated_power(&self) -> f64 {
        let u = self.ring_trace();
        let tu = dmat_mul_vec(self.ctx.dtn.t.as_ref(), &u);
        u.iter().zip(&tu).map(|(a, b)| a.conj() * b).sum::<C64>().im
    }

    /// max |u^i + u^s| over the interface relative to max |u^i|.
    pub fn total_dirichlet_residual(&self) -> Option<f64> {
        let inc = self.incident?;
        let ui = self.ctx.incident_trace(&inc);
        let us = self.trace();
        let scale = ui.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Some(ui.iter().zip(&us).map(|(a, b)| (a + b).norm()).fold(0.0, f64::max) / scale)
    }

    /// ⟦∂ν u⟧ after extending the field inside by the interior Dirichlet solve.
    pub fn density(&self) -> Result<Vec<C64>> {
        let w = self.ctx.interior_extension(&self.trace())?;
        let mut full = self.values.clone();
        for v in self.ctx.mesh.region_nodes(Region::Interior) {
            full[v] = w[v];
        }
        let ci = cotrace_of(&self.ctx.forms, &full, Region::Interior, self.ctx.pde());
        let ce = self.cotrace();
        Ok(ci.iter().zip(&ce).map(|(a, b)| a - b).collect())
    }

    pub fn far_field_at(&self, route: FarFieldRoute, angles: &[f64]) -> Result<Vec<C64>> {
        match route {
            FarFieldRoute::Density => {
                let g = self.density()?;
                let k = self.ctx.k();
                let c = C64::from_polar(1.0 / (8.0 * PI * k).sqrt(), PI / 4.0);
                let ys: Vec<[f64; 2]> =
                    self.ctx.mesh.interface_pairs.iter().map(|&(i, _)| self.ctx.mesh.nodes[i]).collect();
                Ok(angles
                    .iter()
                    .map(|&t| {
                        let (s, co) = t.sin_cos();
                        c * g.iter().zip(&ys).map(|(gj, y)| gj * C64::from_polar(1.0, -k * (co * y[0] + s * y[1]))).sum::<C64>()
                    })
                    .collect())
            }
            FarFieldRoute::DtnModes => {
                let dtn = &self.ctx.dtn;
                let k = dtn.k;
                let modes = dtn.modes(&self.ring_trace());
                let hs = hankel1_seq(dtn.cutoff, k * dtn.radius)?;
                let m0 = dtn.cutoff as i64;
                let amp = (2.0 / (PI * k)).sqrt();
                let coeff: Vec<(f64, C64)> = (-m0..=m0)
                    .zip(&modes)
                    .map(|(m, um)| {
                        let n = m.unsigned_abs() as usize;
                        let sign = if m < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
                        (m as f64, um / (hs[n].0 * sign))
                    })
                    .collect();
                Ok(angles
                    .iter()
                    .map(|&t| {
                        coeff.iter().map(|(m, c)| c * amp * C64::from_polar(1.0, m * t - m * PI / 2.0 - PI / 4.0)).sum()
                    })
                    .collect())
            }
        }
    }

    /// Far field on the uniform grid θ_j = 2πj/N. If the interior extension
    /// needed by the density route fails, the DtN route is returned instead.
    pub fn far_field(&self, route: FarFieldRoute, n: usize) -> Result<FarField> {
        if n < 2 {
            return Err(Error::Precondition(format!("far-field grid needs at least 2 angles, got {n}")));
        }
        let angles: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let (route, values) = match self.far_field_at(route, &angles) {
            Ok(v) => (route, v),
            Err(Error::NearResonance(m)) if route == FarFieldRoute::Density => {
                log::warn!("density route unavailable ({m}); using the DtN-mode route");
                (FarFieldRoute::DtnModes, self.far_field_at(FarFieldRoute::DtnModes, &angles)?)
            }
            Err(e) => return Err(e),
        };
        Ok(FarField { k: self.ctx.k(), angles, values, route })
    }
}

/// Far-field amplitudes on a uniform grid covering [0, 2π).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FarField {
    pub k: f64,
    pub angles: Vec<f64>,
    pub values: Vec<C64>,
    pub route: FarFieldRoute,
}

impl FarField {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,re,im,abs2\n");
        for (t, z) in self.angles.iter().zip(&self.values) {
            let _ = writeln!(s, "{},{},{},{}", t, z.re, z.im, z.norm_sqr());
        }
        s
    }

    /// ∫₀^t |u∞|² of the periodic piecewise-linear interpolant, t ∈ [0, 2π].
    fn cumulative(&self, t: f64) -> f64 {
        let n = self.values.len();
        let d = 2.0 * PI / n as f64;
        let p: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        let x = t / d;
        let full = (x.floor() as usize).min(n);
        let mut s: f64 = (0..full).map(|j| 0.5 * d * (p[j] + p[(j + 1) % n])).sum();
        if full < n {
            let r = x - full as f64;
            let (a, b) = (p[full], p[(full + 1) % n]);
            s += d * (a * r + 0.5 * (b - a) * r * r);
        }
        s
    }
}

/// Merge a set of angular intervals (radians) into disjoint sorted ones.
pub fn merge_intervals(intervals: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let tau = 2.0 * PI;
    let mut v = Vec::with_capacity(intervals.len());
    for &(a, b) in intervals {
        if !(a >= 0.0 && b <= tau + 1e-12 && a <= b) {
            return Err(Error::Precondition(format!("interval [{a}, {b}] is not an ordered subinterval of [0, 2π]")));
        }
        if b > a {
            v.push((a, b.min(tau)));
        }
    }
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    Ok(out)
}

/// Q_Θ: trapezoid integral of |u∞|² over a union of intervals.
pub fn far_field_power(ff: &FarField, intervals: &[(f64, f64)]) -> Result<f64> {
    let merged = merge_intervals(intervals)?;
    if merged.is_empty() {
        log::warn!("empty angular window; far-field power is zero");
        return Ok(0.0);
    }
    Ok(merged.iter().map(|&(a, b)| ff.cumulative(b) - ff.cumulative(a)).sum())
}

/// √(8π/k)·Re(e^{iπ/4} u∞(d)); minus the total power for lossless obstacles.
pub fn forward_functional(forward: C64, k: f64) -> f64 {
    (8.0 * PI / k).sqrt() * (C64::from_polar(1.0, PI / 4.0) * forward).re
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OpticalTheoremReport {
    pub total_power: f64,
    pub forward: f64,
    /// total_power / forward.
    pub ratio: f64,
}

pub fn optical_theorem(sol: &ExteriorSolution, route: FarFieldRoute, n: usize) -> Result<OpticalTheoremReport> {
    let inc = sol
        .incident
        .ok_or_else(|| Error::Precondition("optical theorem needs a scattered field with known incidence".into()))?;
    let ff = sol.far_field(route, n)?;
    let total_power = far_field_power(&ff, &[(0.0, 2.0 * PI)])?;
    let ud = sol.far_field_at(ff.route, &[inc.angle().rem_euclid(2.0 * PI)])?[0];
    let forward = forward_functional(ud, inc.k);
    Ok(OpticalTheoremReport { total_power, forward, ratio: total_power / forward })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerReport {
    #[serde(rename = "Q")]
    pub q: f64,
    /// Degrees.
    pub theta_intervals: Vec<(f64, f64)>,
    pub route: FarFieldRoute,
    pub k: f64,
    pub geometry_id: String,
}
