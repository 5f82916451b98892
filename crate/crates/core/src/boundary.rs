//! Dense boundary operators built column by column from transmission solves,
//! Calderón residuals, and the boundary equations.

use crate::error::{Error, Result};
use crate::layer::TransmissionSolver;
use crate::linalg::{condition_number, dense_solve, dmat_from_cols, dmat_mul_vec, spectral_norm, DMat};
use crate::mesh::{Region, TransmissionMesh};
use crate::scattering::ImpedanceSpec;
use crate::trace::{bilinear_pairing, cotrace_of, pairing, SteklovMatrix};
use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Default condition-number ceiling for boundary equations.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn identity(n: usize) -> DMat {
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { zero() })
}

fn scaled(a: &DMat, s: f64) -> DMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

#[derive(Debug, Clone)]
pub struct BoundaryOperatorSet {
    pub k: f64,
    /// Neumann–Poincaré operator, trace to trace.
    pub k_op: DMat,
    /// Its adjoint through the single layer, cotrace to cotrace.
    pub kstar: DMat,
    /// Single layer trace, cotrace to trace.
    pub v: DMat,
    /// Hypersingular operator, trace to cotrace.
    pub w: DMat,
    /// Worst column-wise deviation in the four one-sided jump identities.
    pub jump_relation_error: f64,
    pub mesh_nodes: usize,
    pub interface_dofs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    /// ‖KV − VK*‖ / (‖K‖‖V‖)
    pub kv_vkstar: f64,
    /// ‖WK − K*W‖ / (‖W‖‖K‖)
    pub wk_kstarw: f64,
    /// ‖K² + VW − ¼I‖ / (‖K‖² + ‖V‖‖W‖)
    pub k2_vw: f64,
    /// ‖K*² + WV − ¼I‖ / (‖K*‖² + ‖W‖‖V‖)
    pub kstar2_wv: f64,
    /// ‖C² − C‖ / ‖C‖ for the interior projector.
    pub projector_idempotency: f64,
    /// ‖(K² + VW − ¼I)1‖_B / ‖1‖_B
    pub constant_trace: f64,
}

impl ResidualReport {
    pub fn relations(&self) -> [f64; 4] {
        [self.kv_vkstar, self.wk_kstarw, self.k2_vw, self.kstar2_wv]
    }

    pub fn max_relation(&self) -> f64 {
        self.relations().into_iter().fold(0.0, f64::max)
    }
}

const OPERATOR_BLOCK: usize = 16;

pub fn build_operators(solver: &TransmissionSolver) -> Result<BoundaryOperatorSet> {
    let crate::fem::Pde::Helmholtz(k) = solver.pde else {
        return Err(Error::Precondition("boundary operators need a Helmholtz solver".into()));
    };
    let mesh = &solver.mesh;
    let nb = solver.interface_len();
    let half = C64::new(0.5, 0.0);
    let (mut kc, mut ksc, mut vc, mut wc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut jump_err: f64 = 0.0;
    let tr = |u: &[C64], side: Region| -> Vec<C64> { mesh.interface_nodes(side).iter().map(|&v| u[v]).collect() };
    // Full-mesh fields are large; solve a few columns at a time.
    for block in (0..nb).collect::<Vec<_>>().chunks(OPERATOR_BLOCK) {
        let mut data = Vec::with_capacity(2 * block.len());
        for &j in block {
            let mut e = vec![zero(); nb];
            e[j] = C64::new(1.0, 0.0);
            let mut mf = vec![zero(); nb];
            mf[j] = C64::new(-1.0, 0.0);
            data.push((mf, vec![zero(); nb]));
            data.push((vec![zero(); nb], e));
        }
        let fields = solver.solve_many(&data)?;
        for (b, &j) in block.iter().enumerate() {
            let d = &fields[2 * b].values;
            let s = &fields[2 * b + 1].values;
            let (di, de) = (tr(d, Region::Interior), tr(d, Region::Exterior));
            let (si, se) = (tr(s, Region::Interior), tr(s, Region::Exterior));
            let ddi = cotrace_of(&solver.forms, d, Region::Interior, solver.pde);
            let dde = cotrace_of(&solver.forms, d, Region::Exterior, solver.pde);
            let dsi = cotrace_of(&solver.forms, s, Region::Interior, solver.pde);
            let dse = cotrace_of(&solver.forms, s, Region::Exterior, solver.pde);
            let kcol: Vec<C64> = di.iter().zip(&de).map(|(a, b)| (a + b) * half).collect();
            let kscol: Vec<C64> = dsi.iter().zip(&dse).map(|(a, b)| (a + b) * half).collect();
            let vcol: Vec<C64> = si.iter().zip(&se).map(|(a, b)| (a + b) * half).collect();
            let wcol: Vec<C64> = ddi.iter().zip(&dde).map(|(a, b)| -(a + b) * half).collect();
            // Tr^i D = −½I + K, Tr^e D = ½I + K, ∂^i S = ½I + K*, ∂^e S = −½I + K*.
            let scale_k = crate::linalg::norm2(&kcol).max(0.5);
            let scale_s = crate::linalg::norm2(&kscol).max(0.5);
            for i in 0..nb {
                let e = if i == j { 0.5 } else { 0.0 };
                jump_err = jump_err
                    .max((di[i] - (kcol[i] - e)).norm() / scale_k)
                    .max((de[i] - (kcol[i] + e)).norm() / scale_k)
                    .max((dsi[i] - (kscol[i] + e)).norm() / scale_s)
                    .max((dse[i] - (kscol[i] - e)).norm() / scale_s);
            }
            kc.push(kcol);
            ksc.push(kscol);
            vc.push(vcol);
            wc.push(wcol);
        }
    }
    Ok(BoundaryOperatorSet {
        k,
        k_op: dmat_from_cols(nb, &kc),
        kstar: dmat_from_cols(nb, &ksc),
        v: dmat_from_cols(nb, &vc),
        w: dmat_from_cols(nb, &wc),
        jump_relation_error: jump_err,
        mesh_nodes: mesh.node_count(),
        interface_dofs: nb,
    })
}

/// Operators conjugated into Euclidean form by powers of the Gram matrix.
struct Normalised {
    k: DMat,
    kstar: DMat,
    v: DMat,
    w: DMat,
}

fn normalise(ops: &BoundaryOperatorSet, steklov: &SteklovMatrix) -> Result<Normalised> {
    let r = steklov.sqrt()?;
    let ri = steklov.inv_sqrt()?;
    Ok(Normalised {
        k: &r * &ops.k_op * &ri,
        kstar: &ri * &ops.kstar * &r,
        v: &r * &ops.v * &r,
        w: &ri * &ops.w * &ri,
    })
}

pub fn calderon_residuals(ops: &BoundaryOperatorSet, steklov: &SteklovMatrix) -> Result<ResidualReport> {
    let n = ops.interface_dofs;
    let t = normalise(ops, steklov)?;
    let quarter = scaled(&identity(n), 0.25);
    let nk = spectral_norm(t.k.as_ref())?;
    let nks = spectral_norm(t.kstar.as_ref())?;
    let nv = spectral_norm(t.v.as_ref())?;
    let nw = spectral_norm(t.w.as_ref())?;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { num };

    let r1 = &t.k * &t.v - &t.v * &t.kstar;
    let r2 = &t.w * &t.k - &t.kstar * &t.w;
    let r3 = &t.k * &t.k + &t.v * &t.w - &quarter;
    let r4 = &t.kstar * &t.kstar + &t.w * &t.v - &quarter;

    // Interior projector on B × B′.
    let mut c = Mat::<C64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { 0.5 } else { 0.0 };
            c[(i, j)] = C64::new(d, 0.0) - t.k[(i, j)];
            c[(i, n + j)] = t.v[(i, j)];
            c[(n + i, j)] = t.w[(i, j)];
            c[(n + i, n + j)] = C64::new(d, 0.0) + t.kstar[(i, j)];
        }
    }
    let idem = &c * &c - &c;

    // Constant trace, measured in the B norm.
    let ones = vec![C64::new(1.0, 0.0); n];
    let raw = &ops.k_op * &ops.k_op + &ops.v * &ops.w - &quarter;
    let res1 = dmat_mul_vec(raw.as_ref(), &ones);
    let constant_trace = (steklov.norm_sq(&res1) / steklov.norm_sq(&ones)).sqrt();

    Ok(ResidualReport {
        kv_vkstar: ratio(spectral_norm(r1.as_ref())?, nk * nv),
        wk_kstarw: ratio(spectral_norm(r2.as_ref())?, nw * nk),
        k2_vw: ratio(spectral_norm(r3.as_ref())?, nk * nk + nv * nw),
        kstar2_wv: ratio(spectral_norm(r4.as_ref())?, nks * nks + nw * nv),
        projector_idempotency: ratio(spectral_norm(idem.as_ref())?, spectral_norm(c.as_ref())?),
        constant_trace,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdjointnessReport {
    /// max |⟨g, Kf⟩ − ⟨K*g, f⟩| / (‖g‖‖f‖‖K‖₂) with the sesquilinear pairing.
    pub sesquilinear: f64,
    /// Same with the bilinear pairing Σ g_j f_j.
    pub bilinear: f64,
}

pub fn adjointness(ops: &BoundaryOperatorSet, samples: &[(Vec<C64>, Vec<C64>)]) -> Result<AdjointnessReport> {
    let mut ses: f64 = 0.0;
    let mut bil: f64 = 0.0;
    let nk = spectral_norm(ops.k_op.as_ref())?;
    for (f, g) in samples {
        let kf = dmat_mul_vec(ops.k_op.as_ref(), f);
        let ksg = dmat_mul_vec(ops.kstar.as_ref(), g);
        let scale = (crate::linalg::norm2(g) * crate::linalg::norm2(f) * nk).max(f64::MIN_POSITIVE);
        ses = ses.max((pairing(g, &kf)? - pairing(&ksg, f)?).norm() / scale);
        bil = bil.max((bilinear_pairing(g, &kf)? - bilinear_pairing(&ksg, f)?).norm() / scale);
    }
    Ok(AdjointnessReport { sesquilinear: ses, bilinear: bil })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryEquation {
    DirichletSlp,
    NeumannDlp,
    RobinSlp,
    RobinDlp,
}

/// Matrix of a boundary equation; the unknown is a cotrace for single-layer
/// kinds and a trace for double-layer kinds.
pub fn boundary_equation_matrix(
    kind: BoundaryEquation,
    impedance: Option<&ImpedanceSpec>,
    ops: &BoundaryOperatorSet,
    steklov: &SteklovMatrix,
) -> Result<DMat> {
    let n = ops.interface_dofs;
    let half = scaled(&identity(n), 0.5);
    let sl = |l: &ImpedanceSpec| -> Result<DMat> { Ok(&steklov.s * &l.matrix(n)?) };
    Ok(match kind {
        BoundaryEquation::DirichletSlp => ops.v.clone(),
        BoundaryEquation::NeumannDlp => scaled(&ops.w, -1.0),
        BoundaryEquation::RobinSlp => {
            let base = &ops.kstar - &half;
            match impedance {
                Some(l) if !l.is_zero() => base + sl(l)? * &ops.v,
                _ => base,
            }
        }
        BoundaryEquation::RobinDlp => {
            let base = scaled(&ops.w, -1.0);
            match impedance {
                Some(l) if !l.is_zero() => base + sl(l)? * (&half + &ops.k_op),
                _ => base,
            }
        }
    })
}

pub fn solve_boundary_equation(
    kind: BoundaryEquation,
    data: &[C64],
    impedance: Option<&ImpedanceSpec>,
    ops: &BoundaryOperatorSet,
    steklov: &SteklovMatrix,
    condition_limit: f64,
) -> Result<Vec<C64>> {
    if data.len() != ops.interface_dofs {
        return Err(Error::DimensionMismatch { expected: ops.interface_dofs, got: data.len() });
    }
    let a = boundary_equation_matrix(kind, impedance, ops, steklov)?;
    let cond = condition_number(a.as_ref())?;
    if !(cond <= condition_limit) {
        return Err(Error::NearResonance(format!(
            "{kind:?} matrix has condition number {cond:e} > {condition_limit:e} at k = {}; try a different k or formulation",
            ops.k
        )));
    }
    Ok(dense_solve(a.as_ref(), data))
}

/// Consistent P1 mass matrix of the interface polygon.
pub fn boundary_mass(mesh: &TransmissionMesh) -> DMat {
    let n = mesh.interface_len();
    let mut m = Mat::<C64>::zeros(n, n);
    for j in 0..n {
        let a = mesh.nodes[mesh.interface_pairs[j].0];
        let b = mesh.nodes[mesh.interface_pairs[(j + 1) % n].0];
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let jn = (j + 1) % n;
        m[(j, j)] += C64::new(len / 3.0, 0.0);
        m[(jn, jn)] += C64::new(len / 3.0, 0.0);
        m[(j, jn)] += C64::new(len / 6.0, 0.0);
        m[(jn, j)] += C64::new(len / 6.0, 0.0);
    }
    m
}

/// Row-major CSV with "re,im" cell pairs.
pub fn matrix_to_csv(a: &DMat) -> String {
    let mut s = String::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if j > 0 {
                s.push(',');
            }
            let z = a[(i, j)];
            let _ = write!(s, "{},{}", z.re, z.im);
        }
        s.push('\n');
    }
    s
}
