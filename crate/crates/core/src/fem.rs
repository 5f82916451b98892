//! P1 finite elements on mesh regions and the Fourier DtN form on the ring.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::{CsrMatrix, DMat};
use crate::mesh::{triangle_area, Region, TransmissionMesh};
use crate::specfun::hankel1_seq;
use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    Symmetric,
    Hermitian,
    None,
}

/// A sparse matrix over the (duplicated) node numbering of a mesh.
#[derive(Debug, Clone)]
pub struct SesquiForm {
    pub matrix: CsrMatrix<f64>,
    pub symmetry: Symmetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSel {
    Interior,
    Exterior,
    Both,
}

impl RegionSel {
    fn includes(self, r: Region) -> bool {
        match self {
            RegionSel::Both => true,
            RegionSel::Interior => r == Region::Interior,
            RegionSel::Exterior => r == Region::Exterior,
        }
    }
}

impl From<Region> for RegionSel {
    fn from(r: Region) -> Self {
        match r {
            Region::Interior => RegionSel::Interior,
            Region::Exterior => RegionSel::Exterior,
        }
    }
}

/// Which operator a discrete field solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pde {
    Helmholtz(f64),
    OneHarmonic,
}

impl Pde {
    /// Coefficient c in K + c·M.
    pub fn mass_coefficient(self) -> f64 {
        match self {
            Pde::Helmholtz(k) => -k * k,
            Pde::OneHarmonic => 1.0,
        }
    }
}

/// Gradients of the three barycentric functions and the area.
pub fn p1_gradients(p: [Point; 3]) -> Result<([[f64; 2]; 3], f64)> {
    let area = triangle_area(p);
    if !(area > 0.0) {
        return Err(Error::Assembly(format!("degenerate or inverted triangle {p:?}")));
    }
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        g[i] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
    }
    Ok((g, area))
}

pub fn element_matrices(p: [Point; 3]) -> Result<([[f64; 3]; 3], [[f64; 3]; 3])> {
    let (g, area) = p1_gradients(p)?;
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            m[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    Ok((k, m))
}

/// Stiffness and mass over the triangles of `region`, indexed by mesh node ids.
pub fn assemble(mesh: &TransmissionMesh, region: RegionSel) -> Result<(SesquiForm, SesquiForm)> {
    let n = mesh.node_count();
    let mut kt = Vec::new();
    let mut mt = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !region.includes(mesh.regions[t]) {
            continue;
        }
        let (ke, me) = element_matrices(mesh.tri_points(t))?;
        for i in 0..3 {
            for j in 0..3 {
                kt.push((tri[i], tri[j], ke[i][j]));
                mt.push((tri[i], tri[j], me[i][j]));
            }
        }
    }
    let form = |t| SesquiForm { matrix: CsrMatrix::from_triplets(n, n, t), symmetry: Symmetry::Symmetric };
    Ok((form(kt), form(mt)))
}

/// K + c·M as a complex matrix.
pub fn combine(stiffness: &SesquiForm, mass: &SesquiForm, c: f64) -> CsrMatrix<C64> {
    let mut t: Vec<(usize, usize, C64)> = stiffness.matrix.triplets().map(|(i, j, v)| (i, j, C64::new(v, 0.0))).collect();
    t.extend(mass.matrix.triplets().map(|(i, j, v)| (i, j, C64::new(c * v, 0.0))));
    CsrMatrix::from_triplets(stiffness.matrix.n_rows, stiffness.matrix.n_cols, t)
}

/// A + scale·E where E is a dense block on the given node ids.
pub fn add_dense_block(a: &CsrMatrix<C64>, nodes: &[usize], block: &DMat, scale: C64) -> CsrMatrix<C64> {
    let mut t: Vec<(usize, usize, C64)> = a.triplets().collect();
    for (p, &i) in nodes.iter().enumerate() {
        for (q, &j) in nodes.iter().enumerate() {
            t.push((i, j, scale * block[(p, q)]));
        }
    }
    CsrMatrix::from_triplets(a.n_rows, a.n_cols, t)
}

/// Default Fourier cutoff for the ring DtN.
pub fn default_mode_cutoff(k: f64, r: f64) -> usize {
    ((k * r).ceil() as usize + 16).max(16)
}

#[derive(Debug, Clone)]
pub struct DtnForm {
    pub k: f64,
    pub radius: f64,
    pub cutoff: usize,
    /// d_m for m = −M..=M, stored at index m + M.
    pub coefficients: Vec<C64>,
    /// Ring nodes in the order of `t`'s rows.
    pub ring: Vec<usize>,
    /// Rows map ring nodal values to Fourier coefficients, m = −M..=M.
    pub fourier: DMat,
    pub t: DMat,
}

impl DtnForm {
    pub fn coefficient(&self, m: i64) -> C64 {
        self.coefficients[(m + self.cutoff as i64) as usize]
    }

    /// Fourier coefficients of a ring trace.
    pub fn modes(&self, ring_values: &[C64]) -> Vec<C64> {
        crate::linalg::dmat_mul_vec(self.fourier.as_ref(), ring_values)
    }
}

// Δ∫₀¹(1−t)e^{zt}dt and Δ∫₀¹ t e^{zt}dt.
fn hat_integrals(z: C64) -> (C64, C64) {
    if z.norm() < 0.5 {
        let mut fall = C64::new(0.0, 0.0);
        let mut rise = C64::new(0.0, 0.0);
        let mut zn = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for n in 0..30 {
            // z^n/(n+2)! and z^n/(n!(n+2))
            let f2 = fact * (n as f64 + 1.0) * (n as f64 + 2.0);
            fall += zn / f2;
            rise += zn / (fact * (n as f64 + 2.0));
            fact *= n as f64 + 1.0;
            zn *= z;
        }
        (fall, rise)
    } else {
        let ez = z.exp();
        let z2 = z * z;
        ((ez - 1.0 - z) / z2, (z * ez - ez + 1.0) / z2)
    }
}

/// Matrix B with B[m+M, j] = (1/2π)∫ φ_j(θ) e^{−imθ} dθ for ring hats linear in θ.
pub fn ring_fourier_matrix(angles: &[f64], cutoff: usize) -> DMat {
    let n = angles.len();
    let nm = 2 * cutoff + 1;
    let mut b = Mat::<C64>::zeros(nm, n);
    for e in 0..n {
        let j0 = e;
        let j1 = (e + 1) % n;
        let t0 = angles[j0];
        let mut t1 = angles[j1];
        if t1 <= t0 {
            t1 += 2.0 * PI;
        }
        let d = t1 - t0;
        for (row, m) in (-(cutoff as i64)..=cutoff as i64).enumerate() {
            let z = C64::new(0.0, -(m as f64) * d);
            let (fall, rise) = hat_integrals(z);
            let phase = C64::from_polar(d / (2.0 * PI), -(m as f64) * t0);
            b[(row, j0)] += phase * fall;
            b[(row, j1)] += phase * rise;
        }
    }
    b
}

pub fn assemble_dtn(mesh: &TransmissionMesh, k: f64, cutoff: usize) -> Result<DtnForm> {
    if mesh.outer_ring.is_empty() {
        return Err(Error::Precondition("mesh has no outer ring".into()));
    }
    if cutoff < 1 {
        return Err(Error::Precondition("mode cutoff must be at least 1".into()));
    }
    if !(k > 0.0) {
        return Err(Error::Domain(format!("wavenumber {k} must be real positive")));
    }
    let r = mesh.ball_radius;
    let h = hankel1_seq(cutoff, k * r)?;
    let mut coefficients = Vec::with_capacity(2 * cutoff + 1);
    for m in -(cutoff as i64)..=cutoff as i64 {
        let (hv, hp) = h[m.unsigned_abs() as usize];
        coefficients.push(k * hp / hv);
    }
    let b = ring_fourier_matrix(&mesh.ring_angles(), cutoff);
    let n = b.ncols();
    let mut db = b.clone();
    for row in 0..db.nrows() {
        let d = coefficients[row] * (2.0 * PI * r);
        for j in 0..n {
            db[(row, j)] *= d;
        }
    }
    let t = crate::linalg::dmat_adjoint(b.as_ref()) * &db;
    Ok(DtnForm { k, radius: r, cutoff, coefficients, ring: mesh.outer_ring.clone(), fourier: b, t })
}

// Degree-5, 7-point rule on the reference triangle: (barycentrics, weight summing to 1).
const QUAD7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_2;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Quadrature nodes (x, weight·area) on a triangle, using a 4-way split and a degree-5 rule.
pub fn triangle_quadrature(p: [Point; 3]) -> Vec<(Point, f64)> {
    let mid = |a: Point, b: Point| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let m01 = mid(p[0], p[1]);
    let m12 = mid(p[1], p[2]);
    let m20 = mid(p[2], p[0]);
    let subs = [[p[0], m01, m20], [m01, p[1], m12], [m20, m12, p[2]], [m12, m20, m01]];
    let mut out = Vec::with_capacity(28);
    for s in subs {
        let a = triangle_area(s);
        for (l, w) in QUAD7 {
            let x = [
                l[0] * s[0][0] + l[1] * s[1][0] + l[2] * s[2][0],
                l[0] * s[0][1] + l[1] * s[1][1] + l[2] * s[2][1],
            ];
            out.push((x, w * a));
        }
    }
    out
}

/// ∫ (∇u·∇φ_j + c·u φ_j) over region triangles for a closed-form u, at the requested nodes.
pub fn weak_form_of_function(
    mesh: &TransmissionMesh,
    region: Region,
    nodes: &[usize],
    c: f64,
    u: impl Fn(Point) -> (C64, [C64; 2]),
) -> Result<Vec<C64>> {
    let mut pos = vec![usize::MAX; mesh.node_count()];
    for (i, &v) in nodes.iter().enumerate() {
        pos[v] = i;
    }
    let mut out = vec![C64::new(0.0, 0.0); nodes.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] != region || tri.iter().all(|&v| pos[v] == usize::MAX) {
            continue;
        }
        let p = mesh.tri_points(t);
        let (g, area) = p1_gradients(p)?;
        for (x, w) in triangle_quadrature(p) {
            let (val, grad) = u(x);
            for i in 0..3 {
                let slot = pos[tri[i]];
                if slot == usize::MAX {
                    continue;
                }
                // Barycentric coordinate of x for vertex i.
                let q = p[(i + 1) % 3];
                let r = p[(i + 2) % 3];
                let phi = triangle_area([x, q, r]) / area;
                out[slot] += w * (grad[0] * g[i][0] + grad[1] * g[i][1] + val * (c * phi));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, Polyline};
    use crate::linalg::{solve_linear, Constraint, SparseLu};
    use crate::mesh::triangulate;
    use crate::specfun::{hankel1, mod_bessel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh_for(obstacle: Polyline, r: f64, h: f64) -> TransmissionMesh {
        triangulate(&DomainSpec { obstacle, ball_radius: r, wavenumber: C64::new(1.0, 0.0) }, h).unwrap()
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_mass_to_area() {
        let mesh = mesh_for(Polyline::unit_square(), 2.0, 0.1);
        for sel in [RegionSel::Interior, RegionSel::Exterior, RegionSel::Both] {
            let (k, m) = assemble(&mesh, sel).unwrap();
            for i in 0..k.matrix.n_rows {
                let s: f64 = k.matrix.row(i).map(|(_, v)| v).sum();
                assert!(s.abs() < 1e-12);
            }
            let total: f64 = m.matrix.values.iter().sum();
            let area = match sel {
                RegionSel::Interior => mesh.region_area(Region::Interior),
                RegionSel::Exterior => mesh.region_area(Region::Exterior),
                RegionSel::Both => mesh.region_area(Region::Interior) + mesh.region_area(Region::Exterior),
            };
            assert!((total - area).abs() < 1e-10 * area.max(1.0));
        }
    }

    #[test]
    fn square_dirichlet_eigenvalue() {
        // Interior of the unit-square obstacle, interface nodes clamped.
        let mesh = mesh_for(Polyline::unit_square(), 2.0, 0.05);
        let (k, m) = assemble(&mesh, RegionSel::Interior).unwrap();
        let nodes = mesh.region_nodes(Region::Interior);
        let bnd: std::collections::HashSet<usize> = mesh.interface_nodes(Region::Interior).into_iter().collect();
        let free: Vec<usize> = nodes.iter().copied().filter(|v| !bnd.contains(v)).collect();
        let mut idx = vec![usize::MAX; mesh.node_count()];
        for (i, &v) in free.iter().enumerate() {
            idx[v] = i;
        }
        let restrict = |a: &CsrMatrix<f64>| {
            let t = a
                .triplets()
                .filter(|&(i, j, _)| idx[i] != usize::MAX && idx[j] != usize::MAX)
                .map(|(i, j, v)| (idx[i], idx[j], C64::new(v, 0.0)))
                .collect();
            CsrMatrix::from_triplets(free.len(), free.len(), t)
        };
        let kk = restrict(&k.matrix);
        let mm = restrict(&m.matrix);
        let lu = SparseLu::factor(kk.clone()).unwrap();
        let mut x = vec![C64::new(1.0, 0.0); free.len()];
        let mut lambda = 0.0;
        for _ in 0..60 {
            let y = lu.solve(&mm.mul_vec(&x)).unwrap();
            let num: C64 = y.iter().zip(kk.mul_vec(&y)).map(|(a, b)| a.conj() * b).sum();
            let den: C64 = y.iter().zip(mm.mul_vec(&y)).map(|(a, b)| a.conj() * b).sum();
            lambda = (num / den).re;
            let n = crate::linalg::norm2(&y);
            x = y.iter().map(|z| z / n).collect();
        }
        let exact = 2.0 * PI * PI;
        assert!((lambda - exact).abs() / exact < 0.02, "{lambda}");
    }

    #[test]
    fn one_harmonic_disk_solution() {
        let a = 1.0;
        let h = a / 40.0;
        let mesh = mesh_for(Polyline::disk(a, h), 2.0, h);
        let (k, m) = assemble(&mesh, RegionSel::Interior).unwrap();
        let sys = combine(&k, &m, 1.0);
        let nodes = mesh.region_nodes(Region::Interior);
        let n = mesh.node_count();
        let mut cons: Vec<Constraint> = mesh
            .interface_nodes(Region::Interior)
            .into_iter()
            .map(|dof| Constraint::Fixed { dof, value: C64::new(1.0, 0.0) })
            .collect();
        // Nodes outside the interior region are decoupled; pin them to zero.
        let inside: std::collections::HashSet<usize> = nodes.iter().copied().collect();
        cons.extend((0..n).filter(|v| !inside.contains(v)).map(|dof| Constraint::Fixed { dof, value: C64::new(0.0, 0.0) }));
        let u = solve_linear(sys, &vec![C64::new(0.0, 0.0); n], &cons).unwrap();
        let i0a = mod_bessel(0, a).unwrap().i;
        let mut err: f64 = 0.0;
        for &v in &nodes {
            let p = mesh.nodes[v];
            let r = p[0].hypot(p[1]);
            let exact = if r < 1e-14 { 1.0 / i0a } else { mod_bessel(0, r).unwrap().i / i0a };
            err = err.max((u[v].re - exact).abs() / exact);
        }
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn dtn_sign_symmetry_and_constant_mode() {
        let mesh = mesh_for(Polyline::unit_square(), 3.0, 0.1);
        let k = 2.0;
        let dtn = assemble_dtn(&mesh, k, default_mode_cutoff(k, 3.0)).unwrap();
        let n = dtn.ring.len();
        for i in 0..n {
            for j in 0..n {
                assert!((dtn.t[(i, j)] - dtn.t[(j, i)]).norm() <= 1e-13 * dtn.t[(i, i)].norm());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let tv = crate::linalg::dmat_mul_vec(dtn.t.as_ref(), &v);
            let q: C64 = v.iter().zip(&tv).map(|(a, b)| a.conj() * b).sum();
            assert!(q.re <= 1e-12 * crate::linalg::norm2(&v).powi(2));
        }
        let ones = vec![C64::new(1.0, 0.0); n];
        let t1 = crate::linalg::dmat_mul_vec(dtn.t.as_ref(), &ones);
        let q: C64 = t1.iter().sum();
        let expected = 2.0 * PI * 3.0 * dtn.coefficient(0);
        assert!((q - expected).norm() / expected.norm() < 1e-6);
        for m in 1..=dtn.cutoff as i64 {
            assert_eq!(dtn.coefficient(m), dtn.coefficient(-m));
        }
    }

    #[test]
    fn dtn_zero_mode_coefficient() {
        // d₀ = k H₀'(kR)/H₀(kR) = −k H₁(kR)/H₀(kR).
        let (k, r) = (5.0 / 3.0, 3.0);
        let mesh = mesh_for(Polyline::unit_square(), r, 0.2);
        let dtn = assemble_dtn(&mesh, k, 16).unwrap();
        let (h0, _) = hankel1(0, k * r).unwrap();
        let (h1, _) = hankel1(1, k * r).unwrap();
        let expected = -k * h1 / h0;
        assert!((dtn.coefficient(0) - expected).norm() < 1e-12 * expected.norm());
    }

    #[test]
    fn fourier_matrix_uniform_closed_form() {
        let n = 40;
        let angles: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let b = ring_fourier_matrix(&angles, 10);
        let d = 2.0 * PI / n as f64;
        for (row, m) in (-10i64..=10).enumerate() {
            let x = m as f64 * d / 2.0;
            let sinc2 = if m == 0 { 1.0 } else { (x.sin() / x).powi(2) };
            for j in 0..n {
                let expected = C64::from_polar(sinc2 / n as f64, -(m as f64) * angles[j]);
                assert!((b[(row, j)] - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn quadrature_integrates_quintics() {
        let p = [[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]];
        let f = |x: Point| x[0].powi(3) * x[1].powi(2) + x[1].powi(5) - 2.0 * x[0];
        let q: f64 = triangle_quadrature(p).iter().map(|&(x, w)| w * f(x)).sum();
        // Reference: 7-point rule is exact for degree 5 on each subtriangle; compare with a direct rule.
        let direct: f64 = QUAD7
            .iter()
            .map(|&(l, w)| {
                let x = [
                    l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                    l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                ];
                w * triangle_area(p) * f(x)
            })
            .sum();
        assert!((q - direct).abs() < 1e-13);
        let area: f64 = triangle_quadrature(p).iter().map(|&(_, w)| w).sum();
        assert!((area - triangle_area(p)).abs() < 1e-15);
    }
}
