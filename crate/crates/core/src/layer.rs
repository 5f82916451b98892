//! Transmission problems with prescribed jumps: single and double layer
//! potentials, the 1-harmonic double layer, and the lift route.

use crate::error::{Error, Result};
use crate::fem::{add_dense_block, assemble, assemble_dtn, combine, DtnForm, Pde, RegionSel};
use crate::linalg::{norm2, rel_diff, ConstrainedSystem, Link};
use crate::mesh::{Region, TransmissionMesh};
use crate::trace::{cotrace_of, CotraceVector, Field, RegionForms, TraceVector};
use num_complex::Complex64 as C64;
use std::sync::Arc;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Solution of a transmission problem over the doubled-DOF mesh.
#[derive(Debug, Clone)]
pub struct TransmissionField {
    pub pde: Pde,
    /// Nodal values indexed by mesh node id; interface copies carry each side's trace.
    pub values: Vec<C64>,
    /// ‖(Tr^i − Tr^e) − f‖ / max(‖f‖, ‖Tr^i‖).
    pub trace_jump_error: f64,
    /// ‖(∂^i − ∂^e) − g‖ / max(‖g‖, ‖∂^i‖).
    pub flux_jump_error: f64,
}

impl TransmissionField {
    pub fn side(&self, mesh: &TransmissionMesh, region: Region) -> Field {
        let mut values = vec![zero(); self.values.len()];
        for v in mesh.region_nodes(region) {
            values[v] = self.values[v];
        }
        Field { region, pde: Some(self.pde), values }
    }

    pub fn interior(&self, mesh: &TransmissionMesh) -> Field {
        self.side(mesh, Region::Interior)
    }

    pub fn exterior(&self, mesh: &TransmissionMesh) -> Field {
        self.side(mesh, Region::Exterior)
    }

    pub fn to_vtk(&self, mesh: &TransmissionMesh) -> String {
        mesh.to_vtk(Some(("u", &self.values)))
    }
}

/// One factorisation of a transmission problem, reused for every jump datum.
pub struct TransmissionSolver {
    pub mesh: Arc<TransmissionMesh>,
    pub forms: Arc<RegionForms>,
    pub pde: Pde,
    pub dtn: Option<Arc<DtnForm>>,
    system: ConstrainedSystem,
}

impl TransmissionSolver {
    /// Helmholtz transmission problem with the ring DtN as radiation condition.
    pub fn helmholtz(forms: Arc<RegionForms>, dtn: Arc<DtnForm>) -> Result<Self> {
        let k = dtn.k;
        if !(k > 0.0) {
            return Err(Error::Domain(format!("wavenumber {k} must be real positive")));
        }
        let mesh = forms.mesh.clone();
        let (kb, mb) = assemble(&mesh, RegionSel::Both)?;
        let a = add_dense_block(&combine(&kb, &mb, -k * k), &dtn.ring, &dtn.t, C64::new(-1.0, 0.0));
        let system = ConstrainedSystem::new(a, Self::links(&mesh, false))
            .map_err(|e| Error::Solver(format!("transmission problem at k = {k} failed: {e}")))?;
        Ok(Self { mesh, forms, pde: Pde::Helmholtz(k), dtn: Some(dtn), system })
    }

    /// (−Δ+1) transmission problem truncated with zero Dirichlet data on the ring.
    pub fn one_harmonic(forms: Arc<RegionForms>) -> Result<Self> {
        let mesh = forms.mesh.clone();
        let (kb, mb) = assemble(&mesh, RegionSel::Both)?;
        let system = ConstrainedSystem::new(combine(&kb, &mb, 1.0), Self::links(&mesh, true))?;
        Ok(Self { mesh, forms, pde: Pde::OneHarmonic, dtn: None, system })
    }

    fn links(mesh: &TransmissionMesh, ring_fixed: bool) -> Vec<Link> {
        let mut links = vec![Link::Free; mesh.node_count()];
        for &(i, e) in &mesh.interface_pairs {
            links[e] = Link::Tied(i);
        }
        if ring_fixed {
            for &v in &mesh.outer_ring {
                links[v] = Link::Fixed;
            }
        }
        links
    }

    pub fn interface_len(&self) -> usize {
        self.mesh.interface_len()
    }

    pub fn system(&self) -> &ConstrainedSystem {
        &self.system
    }

    fn case(&self, f: &[C64], g: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let n = self.mesh.node_count();
        let mut rhs = vec![zero(); n];
        let mut offset = vec![zero(); n];
        for (j, &(i, e)) in self.mesh.interface_pairs.iter().enumerate() {
            rhs[i] = g[j];
            offset[e] = -f[j];
        }
        (rhs, offset)
    }

    fn certify(&self, values: Vec<C64>, f: &[C64], g: &[C64]) -> TransmissionField {
        let ti: Vec<C64> = self.mesh.interface_pairs.iter().map(|&(i, _)| values[i]).collect();
        let te: Vec<C64> = self.mesh.interface_pairs.iter().map(|&(_, e)| values[e]).collect();
        let ci = cotrace_of(&self.forms, &values, Region::Interior, self.pde);
        let ce = cotrace_of(&self.forms, &values, Region::Exterior, self.pde);
        let dt: Vec<C64> = ti.iter().zip(&te).zip(f).map(|((a, b), c)| a - b - c).collect();
        let dc: Vec<C64> = ci.iter().zip(&ce).zip(g).map(|((a, b), c)| a - b - c).collect();
        let fscale = norm2(f).max(norm2(&ti)).max(f64::MIN_POSITIVE);
        let gscale = norm2(g).max(norm2(&ci)).max(f64::MIN_POSITIVE);
        TransmissionField {
            pde: self.pde,
            values,
            trace_jump_error: norm2(&dt) / fscale,
            flux_jump_error: norm2(&dc) / gscale,
        }
    }

    fn check_dims(&self, f: &[C64], g: &[C64]) -> Result<()> {
        let nb = self.interface_len();
        if f.len() != nb {
            return Err(Error::DimensionMismatch { expected: nb, got: f.len() });
        }
        if g.len() != nb {
            return Err(Error::DimensionMismatch { expected: nb, got: g.len() });
        }
        Ok(())
    }

    /// Field with ⟦Tr u⟧ = f and ⟦∂ν u⟧ = g.
    pub fn solve(&self, f: &[C64], g: &[C64]) -> Result<TransmissionField> {
        Ok(self.solve_many(&[(f.to_vec(), g.to_vec())])?.pop().unwrap())
    }

    pub fn solve_many(&self, data: &[(TraceVector, CotraceVector)]) -> Result<Vec<TransmissionField>> {
        for (f, g) in data {
            self.check_dims(f, g)?;
        }
        let cases: Vec<_> = data.iter().map(|(f, g)| self.case(f, g)).collect();
        let sols = self.system.solve_many(&cases).map_err(|e| match e {
            Error::Solver(m) => Error::Solver(format!("{m} (truncated transmission problem)")),
            other => other,
        })?;
        Ok(sols.into_iter().zip(data).map(|(u, (f, g))| self.certify(u, f, g)).collect())
    }

    pub fn single_layer(&self, g: &[C64]) -> Result<TransmissionField> {
        self.solve(&vec![zero(); g.len()], g)
    }

    pub fn double_layer(&self, f: &[C64]) -> Result<TransmissionField> {
        let mf: Vec<C64> = f.iter().map(|z| -z).collect();
        self.solve(&mf, &vec![zero(); f.len()])
    }

    /// Solve with a raw right-hand side over mesh nodes and continuous coupling.
    pub fn solve_source(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let n = self.mesh.node_count();
        self.system.solve(rhs, &vec![zero(); n])
    }
}

pub fn solve_transmission(solver: &TransmissionSolver, f: &[C64], g: &[C64]) -> Result<TransmissionField> {
    solver.solve(f, g)
}

/// D_k f computed through the 1-harmonic lift D_i f plus a continuous correction.
pub fn double_layer_by_lift(
    helmholtz: &TransmissionSolver,
    harmonic: &TransmissionSolver,
    f: &[C64],
) -> Result<TransmissionField> {
    let Pde::Helmholtz(k) = helmholtz.pde else {
        return Err(Error::Precondition("lift route needs a Helmholtz solver".into()));
    };
    let phi = harmonic.double_layer(f)?;
    let mesh = &helmholtz.mesh;
    let (kb, mb) = assemble(mesh, RegionSel::Both)?;
    let mphi = mb.matrix.mul_vec_c(&phi.values);
    let kphi = kb.matrix.mul_vec_c(&phi.values);
    let mut rhs: Vec<C64> = mphi.iter().map(|z| z * (k * k + 1.0)).collect();
    // φ is truncated at the ring; its flux there enters the Helmholtz problem.
    for &v in &mesh.outer_ring {
        rhs[v] -= kphi[v] + mphi[v];
    }
    let w = helmholtz.solve_source(&rhs)?;
    let values: Vec<C64> = phi.values.iter().zip(&w).map(|(a, b)| a + b).collect();
    let mf: Vec<C64> = f.iter().map(|z| -z).collect();
    Ok(helmholtz.certify(values, &mf, &vec![zero(); f.len()]))
}

/// Everything needed for Helmholtz work on one mesh at one wavenumber.
pub struct HelmholtzSetup {
    pub mesh: Arc<TransmissionMesh>,
    pub forms: Arc<RegionForms>,
    pub dtn: Arc<DtnForm>,
    pub solver: TransmissionSolver,
}

impl HelmholtzSetup {
    pub fn new(mesh: Arc<TransmissionMesh>, k: f64, cutoff: Option<usize>) -> Result<Self> {
        let forms = Arc::new(RegionForms::new(mesh.clone())?);
        let m = cutoff.unwrap_or_else(|| crate::fem::default_mode_cutoff(k, mesh.ball_radius));
        let dtn = Arc::new(assemble_dtn(&mesh, k, m)?);
        let solver = TransmissionSolver::helmholtz(forms.clone(), dtn.clone())?;
        Ok(Self { mesh, forms, dtn, solver })
    }

    pub fn k(&self) -> f64 {
        self.dtn.k
    }
}

/// (i/4) H₀(k|x−y|) summed against cotrace weights at the interface nodes.
pub fn newtonian_potential(mesh: &TransmissionMesh, k: f64, g: &[C64], x: [f64; 2]) -> Result<C64> {
    let mut s = zero();
    for (gj, &(i, _)) in g.iter().zip(&mesh.interface_pairs) {
        let y = mesh.nodes[i];
        let r = (x[0] - y[0]).hypot(x[1] - y[1]);
        let (h0, _) = crate::specfun::hankel1(0, k * r)?;
        s += gj * h0 * C64::new(0.0, 0.25);
    }
    Ok(s)
}

/// Relative coefficient difference between two transmission fields.
pub fn field_difference(a: &TransmissionField, b: &TransmissionField) -> f64 {
    rel_diff(&a.values, &b.values)
}
