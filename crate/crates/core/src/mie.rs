//! Separation-of-variables solutions for plane-wave scattering by a disk.

use crate::error::{Error, Result};
use crate::specfun::{hankel1_seq, mod_bessel_seq, cyl_bessel_seq};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MieBc {
    Dirichlet,
    Neumann,
    /// ∂_r u + λ u = 0 on r = a.
    Robin(C64),
    /// Robin condition paired through the (−Δ+1) Steklov map of the disk:
    /// mode m sees λ·I′_m(a)/I_m(a).
    IntrinsicRobin(C64),
}

#[derive(Debug, Clone)]
pub struct MieSolution {
    pub radius: f64,
    pub k: f64,
    pub bc: MieBc,
    /// Incidence direction angle.
    pub direction: f64,
    pub m_series: usize,
    /// a_m for m = −M..=M at index m + M.
    pub coefficients: Vec<C64>,
    /// Per-mode residual of the boundary condition for the total field.
    pub boundary_residual: f64,
}

pub fn default_series_length(k: f64, a: f64) -> usize {
    (k * a).ceil() as usize + 30
}

fn i_pow(m: i64) -> C64 {
    match m.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

pub fn mie_coefficients(bc: MieBc, a: f64, k: f64, direction: [f64; 2]) -> Result<MieSolution> {
    mie_coefficients_with(bc, a, k, direction, default_series_length(k, a))
}

pub fn mie_coefficients_with(bc: MieBc, a: f64, k: f64, direction: [f64; 2], m_series: usize) -> Result<MieSolution> {
    if !(a > 0.0) || !(k > 0.0) {
        return Err(Error::Domain(format!("disk radius {a} and wavenumber {k} must be positive")));
    }
    let dn = direction[0].hypot(direction[1]);
    if (dn - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("incidence direction must be a unit vector, |d| = {dn}")));
    }
    let theta_d = direction[1].atan2(direction[0]);
    let x = k * a;
    let jb = cyl_bessel_seq(m_series, x)?;
    let hs = hankel1_seq(m_series, x)?;
    let mu = match bc {
        MieBc::IntrinsicRobin(_) => {
            let s = mod_bessel_seq(m_series, a)?;
            s.iter().map(|p| p.ip / p.i).collect()
        }
        _ => vec![],
    };
    let mut coefficients = Vec::with_capacity(2 * m_series + 1);
    let mut residual: f64 = 0.0;
    for m in -(m_series as i64)..=m_series as i64 {
        let n = m.unsigned_abs() as usize;
        let sign = if m < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
        let (j, jp) = (jb[n].j * sign, jb[n].jp * sign);
        let (h, hp) = (hs[n].0 * sign, hs[n].1 * sign);
        let inc = i_pow(m) * C64::from_polar(1.0, -(m as f64) * theta_d);
        let (num, den) = match bc {
            MieBc::Dirichlet => (C64::new(j, 0.0), h),
            MieBc::Neumann => (C64::new(jp, 0.0), hp),
            MieBc::Robin(l) => (k * jp + l * j, k * hp + l * h),
            MieBc::IntrinsicRobin(l) => {
                let lm = l * mu[n];
                (k * jp + lm * j, k * hp + lm * h)
            }
        };
        if den.norm() < 1e-14 {
            return Err(Error::NearResonance(format!("Mie denominator vanishes at mode {m}")));
        }
        let am = -inc * num / den;
        // Boundary condition of the total field, mode by mode.
        let (tv, tp) = (inc * j + am * h, inc * jp + am * hp);
        let r = match bc {
            MieBc::Dirichlet => tv.norm() / inc.norm().max(am.norm() * h.norm()),
            MieBc::Neumann => tp.norm() / (inc * jp).norm().max((am * hp).norm()),
            MieBc::Robin(l) => (k * tp + l * tv).norm() / (k * (am * hp).norm()).max((l * am * h).norm()).max(1e-300),
            MieBc::IntrinsicRobin(l) => {
                let lm = l * mu[n];
                (k * tp + lm * tv).norm() / (k * (am * hp).norm()).max((lm * am * h).norm()).max(1e-300)
            }
        };
        if am.norm() > 1e-300 {
            residual = residual.max(r);
        }
        coefficients.push(am);
    }
    Ok(MieSolution { radius: a, k, bc, direction: theta_d, m_series, coefficients, boundary_residual: residual })
}

pub enum MieQuery<'a> {
    NearField(&'a [[f64; 2]]),
    FarField(&'a [f64]),
}

impl MieSolution {
    pub fn coefficient(&self, m: i64) -> C64 {
        self.coefficients[(m + self.m_series as i64) as usize]
    }

    fn modes(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        (-(self.m_series as i64)..=self.m_series as i64).zip(self.coefficients.iter().copied())
    }

    /// Scattered field Σ a_m H_m(kr) e^{imθ}, r > a.
    pub fn near_field(&self, points: &[[f64; 2]]) -> Result<Vec<C64>> {
        points
            .iter()
            .map(|p| {
                let r = p[0].hypot(p[1]);
                if r <= self.radius {
                    return Err(Error::Domain(format!("point at r = {r} is not outside the disk")));
                }
                let t = p[1].atan2(p[0]);
                let hs = hankel1_seq(self.m_series, self.k * r)?;
                Ok(self
                    .modes()
                    .map(|(m, am)| {
                        let n = m.unsigned_abs() as usize;
                        let sign = if m < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
                        am * hs[n].0 * sign * C64::from_polar(1.0, m as f64 * t)
                    })
                    .sum())
            })
            .collect()
    }

    /// Far-field pattern with u^s ≈ e^{ikr} r^{−1/2} u∞(θ).
    pub fn far_field(&self, angles: &[f64]) -> Vec<C64> {
        let c = (2.0 / (PI * self.k)).sqrt();
        angles
            .iter()
            .map(|&t| {
                self.modes()
                    .map(|(m, am)| am * c * C64::from_polar(1.0, -(m as f64 * PI / 2.0 + PI / 4.0) + m as f64 * t))
                    .sum()
            })
            .collect()
    }

    pub fn evaluate(&self, query: MieQuery<'_>) -> Result<Vec<C64>> {
        match query {
            MieQuery::NearField(p) => self.near_field(p),
            MieQuery::FarField(t) => Ok(self.far_field(t)),
        }
    }

    /// ∫₀^{2π} |u∞|² dθ from the coefficients.
    pub fn total_power(&self) -> f64 {
        2.0 * PI * 2.0 / (PI * self.k) * self.coefficients.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// −√(8π/k)·Re(e^{iπ/4} u∞(d)).
    pub fn extinction(&self) -> f64 {
        let u = self.far_field(&[self.direction])[0];
        -(8.0 * PI / self.k).sqrt() * (C64::from_polar(1.0, PI / 4.0) * u).re
    }

    /// Jump of the normal derivative of the single-layer representation of a
    /// sound-soft scattered field, as a function of angle on r = a.
    pub fn dirichlet_density(&self, angles: &[f64]) -> Result<Vec<C64>> {
        if self.bc != MieBc::Dirichlet {
            return Err(Error::Precondition("single-layer density is only available for the Dirichlet problem".into()));
        }
        let hs = hankel1_seq(self.m_series, self.k * self.radius)?;
        let pre = C64::new(0.0, 2.0 / (PI * self.radius));
        Ok(angles
            .iter()
            .map(|&t| {
                (-(self.m_series as i64)..=self.m_series as i64)
                    .map(|m| {
                        let n = m.unsigned_abs() as usize;
                        let sign = if m < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
                        pre * i_pow(m) * C64::from_polar(1.0, m as f64 * (t - self.direction)) / (hs[n].0 * sign)
                    })
                    .sum()
            })
            .collect())
    }
}

/// Eigenvalue of the single-layer boundary operator on mode m of the circle.
pub fn disk_single_layer_eigenvalue(m: i64, k: f64, a: f64) -> Result<C64> {
    let (h, _) = crate::specfun::hankel1(m, k * a)?;
    let n = m.unsigned_abs() as usize;
    let j = crate::specfun::cyl_bessel(n, k * a)?.j * if m < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
    Ok(C64::new(0.0, PI * a / 2.0) * j * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: [f64; 2] = [1.0, 0.0];

    #[test]
    fn self_certified() {
        for bc in [MieBc::Dirichlet, MieBc::Neumann, MieBc::Robin(C64::new(1.0, 0.5)), MieBc::IntrinsicRobin(C64::new(1.0, 0.5))] {
            let s = mie_coefficients(bc, 1.0, 2.0, D).unwrap();
            assert!(s.boundary_residual <= 1e-12, "{bc:?}: {}", s.boundary_residual);
        }
    }

    #[test]
    fn robin_limits() {
        let n = mie_coefficients(MieBc::Neumann, 1.0, 2.0, D).unwrap();
        let r0 = mie_coefficients(MieBc::Robin(C64::new(0.0, 0.0)), 1.0, 2.0, D).unwrap();
        assert_eq!(n.coefficients, r0.coefficients);
        let d = mie_coefficients(MieBc::Dirichlet, 1.0, 2.0, D).unwrap();
        let rinf = mie_coefficients(MieBc::Robin(C64::new(1e8, 0.0)), 1.0, 2.0, D).unwrap();
        for (a, b) in d.coefficients.iter().zip(&rinf.coefficients) {
            assert!((a - b).norm() <= 1e-6);
        }
    }

    #[test]
    fn dirichlet_total_field_vanishes_on_boundary() {
        let s = mie_coefficients(MieBc::Dirichlet, 1.0, 2.0, D).unwrap();
        for t in [0.0, 0.7, 2.0, 4.5] {
            let p = [1.0000000001 * f64::cos(t), 1.0000000001 * f64::sin(t)];
            let us = s.near_field(&[p]).unwrap()[0];
            let ui = C64::from_polar(1.0, 2.0 * p[0]);
            assert!((us + ui).norm() < 1e-8);
        }
    }

    #[test]
    fn far_field_mirror_symmetry() {
        let s = mie_coefficients(MieBc::Robin(C64::new(1.0, 0.5)), 1.0, 2.0, D).unwrap();
        for t in [0.3, 1.1, 2.9] {
            let a = s.far_field(&[t])[0];
            let b = s.far_field(&[-t])[0];
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn optical_theorem() {
        for bc in [MieBc::Dirichlet, MieBc::Neumann, MieBc::Robin(C64::new(0.7, 0.0)), MieBc::IntrinsicRobin(C64::new(-0.3, 0.0))] {
            let s = mie_coefficients(bc, 1.0, 2.0, D).unwrap();
            let q = s.total_power();
            assert!((q - s.extinction()).abs() <= 1e-10 * q, "{bc:?}");
        }
        // Absorbing impedance: extinction exceeds scattering.
        let s = mie_coefficients(MieBc::Robin(C64::new(1.0, 0.5)), 1.0, 2.0, D).unwrap();
        assert!(s.extinction() > s.total_power());
    }

    #[test]
    fn tail_converged() {
        let s = mie_coefficients(MieBc::Dirichlet, 1.0, 2.0, D).unwrap();
        let s2 = mie_coefficients_with(MieBc::Dirichlet, 1.0, 2.0, D, 2 * s.m_series).unwrap();
        let angles: Vec<f64> = (0..36).map(|j| j as f64 * 0.17).collect();
        for (a, b) in s.far_field(&angles).iter().zip(s2.far_field(&angles)) {
            assert!((a - b).norm() < 1e-12);
        }
        let p = [[1.5, 0.3], [0.0, -2.2]];
        for (a, b) in s.near_field(&p).unwrap().iter().zip(s2.near_field(&p).unwrap()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn near_field_inside_rejected() {
        let s = mie_coefficients(MieBc::Dirichlet, 1.0, 2.0, D).unwrap();
        assert!(matches!(s.near_field(&[[0.5, 0.0]]), Err(Error::Domain(_))));
    }

    #[test]
    fn far_field_matches_near_field_asymptotics() {
        let s = mie_coefficients(MieBc::Dirichlet, 1.0, 2.0, D).unwrap();
        let r = 2000.0;
        let t: f64 = 0.8;
        let near = s.near_field(&[[r * t.cos(), r * t.sin()]]).unwrap()[0];
        let far = s.far_field(&[t])[0] * C64::from_polar(1.0, 2.0 * r) / r.sqrt();
        assert!((near - far).norm() / far.norm() < 2e-3);
    }
}
