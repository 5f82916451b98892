//! Discrete traces, weak normal derivatives, the Steklov Gram matrix of the
//! trace space, and the duality pairing.

use crate::error::{Error, Result};
use crate::fem::{assemble, combine, Pde, RegionSel, SesquiForm};
use crate::linalg::{hermitian_eigenvalues, hermitian_function, ConstrainedSystem, DMat, Link};
use crate::mesh::{Region, TransmissionMesh};
use faer::Mat;
use num_complex::Complex64 as C64;
use std::sync::Arc;

/// Nodal values at interface nodes, in arclength order.
pub type TraceVector = Vec<C64>;
/// Coefficients against interface nodal basis functions.
pub type CotraceVector = Vec<C64>;

/// A discrete field on one region. Values are indexed by mesh node id; entries
/// outside the region are zero.
#[derive(Debug, Clone)]
pub struct Field {
    pub region: Region,
    /// Operator the field solves, if any; required for normal derivatives.
    pub pde: Option<Pde>,
    pub values: Vec<C64>,
}

/// Per-region stiffness and mass.
#[derive(Debug, Clone)]
pub struct RegionForms {
    pub mesh: Arc<TransmissionMesh>,
    pub interior: (SesquiForm, SesquiForm),
    pub exterior: (SesquiForm, SesquiForm),
}

impl RegionForms {
    pub fn new(mesh: Arc<TransmissionMesh>) -> Result<Self> {
        let interior = assemble(&mesh, RegionSel::Interior)?;
        let exterior = assemble(&mesh, RegionSel::Exterior)?;
        Ok(Self { mesh, interior, exterior })
    }

    pub fn region(&self, r: Region) -> &(SesquiForm, SesquiForm) {
        match r {
            Region::Interior => &self.interior,
            Region::Exterior => &self.exterior,
        }
    }

    /// Rows of (K + c·M) of the region at its interface copies, applied to `u`.
    pub fn interface_rows(&self, region: Region, c: f64, u: &[C64]) -> Vec<C64> {
        let (k, m) = self.region(region);
        let rows = self.mesh.interface_nodes(region);
        let ku = k.matrix.mul_vec_rows_c(u, &rows);
        let mu = m.matrix.mul_vec_rows_c(u, &rows);
        ku.iter().zip(&mu).map(|(a, b)| a + b * c).collect()
    }
}

pub fn trace(mesh: &TransmissionMesh, field: &Field, side: Region) -> Result<TraceVector> {
    if field.region != side {
        return Err(Error::Domain(format!("field lives on {:?}, trace requested from {:?}", field.region, side)));
    }
    if field.values.len() != mesh.node_count() {
        return Err(Error::DimensionMismatch { expected: mesh.node_count(), got: field.values.len() });
    }
    Ok(mesh.interface_nodes(side).iter().map(|&v| field.values[v]).collect())
}

/// Weak normal derivative along the outward normal of the obstacle.
pub fn normal_derivative(forms: &RegionForms, field: &Field, side: Region) -> Result<CotraceVector> {
    let pde = field
        .pde
        .ok_or_else(|| Error::Precondition("normal derivative needs a field flagged as a PDE solution".into()))?;
    if field.region != side {
        return Err(Error::Domain(format!("field lives on {:?}, cotrace requested from {:?}", field.region, side)));
    }
    Ok(cotrace_of(forms, &field.values, side, pde))
}

/// Cotrace of raw nodal values, assuming they solve `pde` on the region.
pub fn cotrace_of(forms: &RegionForms, values: &[C64], side: Region, pde: Pde) -> CotraceVector {
    let rows = forms.interface_rows(side, pde.mass_coefficient(), values);
    match side {
        Region::Interior => rows,
        Region::Exterior => rows.into_iter().map(|z| -z).collect(),
    }
}

/// ⟨g, f⟩: linear in the cotrace, conjugate-linear in the trace.
pub fn pairing(g: &[C64], f: &[C64]) -> Result<C64> {
    if g.len() != f.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: f.len() });
    }
    Ok(g.iter().zip(f).map(|(a, b)| a * b.conj()).sum())
}

/// Σ g_j f_j without conjugation.
pub fn bilinear_pairing(g: &[C64], f: &[C64]) -> Result<C64> {
    if g.len() != f.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: f.len() });
    }
    Ok(g.iter().zip(f).map(|(a, b)| a * b).sum())
}

/// Hermitian positive definite Gram matrix of the trace space.
#[derive(Debug, Clone)]
pub struct SteklovMatrix {
    pub s: DMat,
}

impl SteklovMatrix {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        crate::linalg::dmat_mul_vec(self.s.as_ref(), f)
    }

    pub fn norm_sq(&self, f: &[C64]) -> f64 {
        pairing(&self.apply(f), f).map(|z| z.re).unwrap_or(f64::NAN)
    }

    pub fn sqrt(&self) -> Result<DMat> {
        hermitian_function(self.s.as_ref(), f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> Result<DMat> {
        hermitian_function(self.s.as_ref(), |x| 1.0 / x.sqrt())
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(self.s.as_ref())
    }
}

/// Schur complement of the region's (−Δ+1) matrix onto its interface copies.
/// Nodes outside the region and, for the exterior, the ring are held at zero.
fn one_harmonic_schur(forms: &RegionForms, region: Region) -> Result<DMat> {
    let mesh = &forms.mesh;
    let (k, m) = forms.region(region);
    let a = combine(k, m, 1.0);
    let n = mesh.node_count();
    let mut in_region = vec![false; n];
    for v in mesh.region_nodes(region) {
        in_region[v] = true;
    }
    let iface = mesh.interface_nodes(region);
    let mut links: Vec<Link> = (0..n).map(|v| if in_region[v] { Link::Free } else { Link::Fixed }).collect();
    for &v in &iface {
        links[v] = Link::Fixed;
    }
    if region == Region::Exterior {
        for &v in &mesh.outer_ring {
            links[v] = Link::Fixed;
        }
    }
    let sys = ConstrainedSystem::new(a.clone(), links)?;
    let zero = vec![C64::new(0.0, 0.0); n];
    let cases: Vec<(Vec<C64>, Vec<C64>)> = iface
        .iter()
        .map(|&v| {
            let mut off = zero.clone();
            off[v] = C64::new(1.0, 0.0);
            (zero.clone(), off)
        })
        .collect();
    let cols = sys.solve_many(&cases)?;
    let nb = iface.len();
    let mut s = Mat::<C64>::zeros(nb, nb);
    for (j, u) in cols.iter().enumerate() {
        for (i, &row) in iface.iter().enumerate() {
            s[(i, j)] = a.row(row).map(|(c, v)| u[c] * v).sum();
        }
    }
    // Symmetrise away rounding.
    let st = Mat::from_fn(nb, nb, |i, j| (s[(i, j)] + s[(j, i)].conj()) * 0.5);
    Ok(st)
}

pub fn steklov_matrix(forms: &RegionForms) -> Result<SteklovMatrix> {
    Ok(SteklovMatrix { s: one_harmonic_schur(forms, Region::Interior)? })
}

/// Exterior-side Gram, truncated with zero Dirichlet data on the ring.
pub fn exterior_gram(forms: &RegionForms) -> Result<SteklovMatrix> {
    Ok(SteklovMatrix { s: one_harmonic_schur(forms, Region::Exterior)? })
}

/// Extreme generalized eigenvalues of (S_e, S_i): the norm equivalence constants.
pub fn norm_equivalence(interior: &SteklovMatrix, exterior: &SteklovMatrix) -> Result<(f64, f64)> {
    let w = interior.inv_sqrt()?;
    let c = &w * &exterior.s * &w;
    let c = Mat::from_fn(c.nrows(), c.ncols(), |i, j| (c[(i, j)] + c[(j, i)].conj()) * 0.5);
    let ev = hermitian_eigenvalues(c.as_ref())?;
    Ok((ev[0], ev[ev.len() - 1]))
}
