//! Cylinder Bessel, Hankel and modified Bessel functions of integer order
//! and real positive argument.
//!
//! `J_m` and `I_m` come from Miller's backward recurrence normalised by the
//! Neumann sums `J_0 + 2 Σ J_2k = 1` and `I_0 + 2 Σ I_k = e^x`. `Y_0`, `Y_1`
//! use the Neumann series for moderate `x` and Hankel's asymptotic expansion
//! for large `x`; `K_0`, `K_1` use the power series for `x <= 2` and Steed's
//! continued fraction beyond. Higher orders of `Y` and `K` follow by upward
//! recurrence, which is stable for the dominant solutions.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Largest order accepted by the public entry points.
pub const MAX_ORDER: usize = 200;

/// Largest argument accepted by the modified Bessel functions (`e^x` must fit in f64).
pub const MAX_MODIFIED_ARG: f64 = 700.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;
const UNDERFLOW_GUARD: f64 = 1e-300;
const ASYMPTOTIC_FROM: f64 = 25.0;

/// `J_m(x)`, `Y_m(x)` and their derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylPair {
    pub j: f64,
    pub y: f64,
    pub jp: f64,
    pub yp: f64,
}

impl CylPair {
    pub fn hankel(&self) -> Complex64 {
        Complex64::new(self.j, self.y)
    }

    pub fn hankel_prime(&self) -> Complex64 {
        Complex64::new(self.jp, self.yp)
    }
}

/// `I_m(x)`, `K_m(x)` and their derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModPair {
    pub i: f64,
    pub k: f64,
    pub ip: f64,
    pub kp: f64,
}

fn check_arg(x: f64, max_m: usize) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("argument must be finite and > 0, got {x}")));
    }
    if max_m > MAX_ORDER {
        return Err(Error::Domain(format!("order {max_m} exceeds maximum {MAX_ORDER}")));
    }
    Ok(())
}

/// `J_m`, `Y_m` and derivatives at a single order.
pub fn cyl_bessel(m: usize, x: f64) -> Result<CylPair> {
    Ok(cyl_bessel_seq(m, x)?[m])
}

/// `J_m`, `Y_m` and derivatives for every order `0..=max_m`.
pub fn cyl_bessel_seq(max_m: usize, x: f64) -> Result<Vec<CylPair>> {
    check_arg(x, max_m)?;
    let n = max_m.max(1);
    let (j, y0, y1) = miller_j(n, x);
    let mut y = Vec::with_capacity(n + 1);
    y.push(y0);
    y.push(y1);
    for k in 1..n {
        let next = (2.0 * k as f64 / x) * y[k] - y[k - 1];
        y.push(next);
    }

    let mut out = Vec::with_capacity(max_m + 1);
    for m in 0..=max_m {
        if !y[m].is_finite() || j[m].abs() < UNDERFLOW_GUARD {
            return Err(Error::Range(format!("J_{m}/Y_{m} not representable at x = {x}")));
        }
        let (jp, yp) = if m == 0 {
            (-j[1], -y[1])
        } else {
            let mf = m as f64;
            (j[m - 1] - mf / x * j[m], y[m - 1] - mf / x * y[m])
        };
        if !yp.is_finite() {
            return Err(Error::Range(format!("Y'_{m} overflows at x = {x}")));
        }
        out.push(CylPair { j: j[m], y: y[m], jp, yp });
    }
    Ok(out)
}

/// Hankel function of the first kind and its derivative; negative orders via
/// `H_{-m} = (-1)^m H_m`.
pub fn hankel1(m: i64, x: f64) -> Result<(Complex64, Complex64)> {
    let order = m.unsigned_abs() as usize;
    let p = cyl_bessel(order, x)?;
    let sign = if m < 0 && order % 2 == 1 { -1.0 } else { 1.0 };
    Ok((p.hankel() * sign, p.hankel_prime() * sign))
}

/// `(H_m(x), H'_m(x))` for `m = 0..=max_m`.
pub fn hankel1_seq(max_m: usize, x: f64) -> Result<Vec<(Complex64, Complex64)>> {
    Ok(cyl_bessel_seq(max_m, x)?
        .into_iter()
        .map(|p| (p.hankel(), p.hankel_prime()))
        .collect())
}

fn miller_start(n: usize, x: f64) -> usize {
    let base = (n as f64).max(x);
    let start = (base + 30.0 + 12.0 * x.cbrt()).ceil() as usize;
    start + start % 2
}

/// Returns normalised `J_0..=J_n` plus `Y_0`, `Y_1`.
fn miller_j(n: usize, x: f64) -> (Vec<f64>, f64, f64) {
    let start = miller_start(n, x);
    let mut f = vec![0.0; start + 2];
    f[start] = 1e-30;
    let mut k = start;
    while k > 0 {
        let next = (2.0 * k as f64 / x) * f[k] - f[k + 1];
        f[k - 1] = next;
        if next.abs() > RESCALE_ABOVE {
            for v in &mut f[k - 1..] {
                *v *= RESCALE_BY;
            }
        }
        k -= 1;
    }

    // Neumann sums, accumulated from the tail for accuracy.
    let mut norm = 0.0;
    let mut su = 0.0;
    let mut sv = 0.0;
    for k in (1..=start).rev() {
        let v = f[k];
        if k % 2 == 0 {
            norm += 2.0 * v;
            let half = (k / 2) as f64;
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            su += sign * v / (2.0 * half);
        } else if k > 1 {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let kf = k as f64;
            sv += sign * kf / (kf * kf - 1.0) * v;
        }
    }
    norm += f[0];
    let j: Vec<f64> = f[..=n].iter().map(|v| v / norm).collect();

    let (y0, y1) = if x >= ASYMPTOTIC_FROM {
        (hankel_asymptotic(0.0, x).1, hankel_asymptotic(1.0, x).1)
    } else {
        let ec = (x / 2.0).ln() + EULER_GAMMA;
        let two_over_pi = 2.0 / PI;
        let y0 = two_over_pi * (ec * j[0] - 4.0 * su / norm);
        let y1 = two_over_pi * ((ec - 1.0) * j[1] - j[0] / x - 4.0 * sv / norm);
        (y0, y1)
    };
    (j, y0, y1)
}

/// Hankel's asymptotic expansion, returns `(J_nu(x), Y_nu(x))`.
fn hankel_asymptotic(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    let amp = (2.0 / (PI * x)).sqrt();
    let (s, c) = chi.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

/// `I_m`, `K_m` and derivatives at a single order.
pub fn mod_bessel(m: usize, x: f64) -> Result<ModPair> {
    Ok(mod_bessel_seq(m, x)?[m])
}

/// `I_m`, `K_m` and derivatives for every order `0..=max_m`.
pub fn mod_bessel_seq(max_m: usize, x: f64) -> Result<Vec<ModPair>> {
    check_arg(x, max_m)?;
    if x > MAX_MODIFIED_ARG {
        return Err(Error::Range(format!("modified Bessel argument {x} exceeds {MAX_MODIFIED_ARG}")));
    }
    let n = max_m.max(1);
    let i = miller_i(n, x);
    let (k0, k1) = if x <= 2.0 { k01_series(x, i[0], i[1]) } else { k01_steed(x) };
    let mut k = Vec::with_capacity(n + 1);
    k.push(k0);
    k.push(k1);
    for order in 1..n {
        let next = (2.0 * order as f64 / x) * k[order] + k[order - 1];
        k.push(next);
    }

    let mut out = Vec::with_capacity(max_m + 1);
    for m in 0..=max_m {
        if !k[m].is_finite() || i[m].abs() < UNDERFLOW_GUARD {
            return Err(Error::Range(format!("I_{m}/K_{m} not representable at x = {x}")));
        }
        let (ip, kp) = if m == 0 {
            (i[1], -k[1])
        } else {
            let mf = m as f64;
            (i[m - 1] - mf / x * i[m], -k[m - 1] - mf / x * k[m])
        };
        if !kp.is_finite() {
            return Err(Error::Range(format!("K'_{m} overflows at x = {x}")));
        }
        out.push(ModPair { i: i[m], k: k[m], ip, kp });
    }
    Ok(out)
}

fn miller_i(n: usize, x: f64) -> Vec<f64> {
    let start = ((n as f64).max(x) + 50.0).ceil() as usize;
    let mut f = vec![0.0; start + 2];
    f[start] = 1e-30;
    let mut k = start;
    while k > 0 {
        let next = (2.0 * k as f64 / x) * f[k] + f[k + 1];
        f[k - 1] = next;
        if next.abs() > RESCALE_ABOVE {
            for v in &mut f[k - 1..] {
                *v *= RESCALE_BY;
            }
        }
        k -= 1;
    }
    let mut sum = 0.0;
    for v in f[1..=start].iter().rev() {
        sum += 2.0 * v;
    }
    sum += f[0];
    // I_0 + 2 Σ I_k = e^x; divide before multiplying to stay in range.
    let scale = x.exp() / sum;
    f[..=n].iter().map(|v| v * scale).collect()
}

fn k01_series(x: f64, i0: f64, i1: f64) -> (f64, f64) {
    let t = 0.25 * x * x;
    let ln_half = (0.5 * x).ln();

    // K_0 = -(ln(x/2) + γ) I_0 + Σ_{k>=1} H_k t^k / (k!)^2
    let mut sum0 = 0.0;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= t / (kf * kf);
        harmonic += 1.0 / kf;
        sum0 += harmonic * term;
        if term * harmonic < 1e-18 * sum0.abs() {
            break;
        }
    }
    let k0 = -(ln_half + EULER_GAMMA) * i0 + sum0;

    // K_1 = 1/x + ln(x/2) I_1 - (x/4) Σ_{k>=0} (ψ(k+1) + ψ(k+2)) t^k / (k!(k+1)!)
    let mut sum1 = 0.0;
    let mut term = 1.0;
    let mut h_k = 0.0;
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            term *= t / (kf * (kf + 1.0));
            h_k += 1.0 / kf;
        }
        let h_k1 = h_k + 1.0 / (kf + 1.0);
        let psi_sum = -2.0 * EULER_GAMMA + h_k + h_k1;
        sum1 += psi_sum * term;
        if k > 2 && (psi_sum * term).abs() < 1e-18 * sum1.abs().max(1e-300) {
            break;
        }
    }
    let k1 = 1.0 / x + ln_half * i1 - 0.25 * x * sum1;
    (k0, k1)
}

/// Steed's continued fraction (Temme's normalisation) for `K_0`, `K_1`, `x > 2`.
fn k01_steed(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = delh;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..100_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    /// Neumaier-compensated power series for `J_m` and `I_m`.
    fn series(m: u32, x: f64, alternating: bool) -> f64 {
        let t = 0.25 * x * x;
        let mut term = (0.5 * x).powi(m as i32) / (1..=m).map(f64::from).product::<f64>();
        let mut sum = 0.0;
        let mut comp = 0.0;
        for k in 0..30 {
            let s = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - s) + term;
            } else {
                comp += (term - s) + sum;
            }
            sum = s;
            let kf = f64::from(k + 1);
            term *= t / (kf * (kf + f64::from(m)));
            if alternating {
                term = -term;
            }
        }
        sum + comp
    }

    fn wronskian_residual(p: &CylPair, x: f64) -> f64 {
        let target = 2.0 / (PI * x);
        (p.j * p.yp - p.jp * p.y - target).abs() / target
    }

    #[test]
    fn order_zero_wronskian() {
        for x in [0.5, 1.0, 5.0, 20.0] {
            let p = cyl_bessel(0, x).unwrap();
            assert!(wronskian_residual(&p, x) <= 1e-12, "x = {x}");
        }
    }

    #[test]
    fn reference_values() {
        let p = cyl_bessel(0, 1.0).unwrap();
        assert!(rel(p.j, 0.765_197_686_557_966_6) < 1e-14);
        assert!(rel(p.y, 0.088_256_964_215_676_96) < 1e-13);
        let p = cyl_bessel(1, 1.0).unwrap();
        assert!(rel(p.j, 0.440_050_585_744_933_5) < 1e-14);
        assert!(rel(p.y, -0.781_212_821_300_288_7) < 1e-13);
        let p = cyl_bessel(1, 5.0).unwrap();
        assert!(rel(p.j, -0.327_579_137_591_465_2) < 1e-13);
        assert!(rel(p.y, 0.147_863_143_391_226_8) < 1e-12);
        let m = mod_bessel(0, 1.0).unwrap();
        assert!(rel(m.i, 1.266_065_877_752_008_4) < 1e-14);
        assert!(rel(m.k, 0.421_024_438_240_708_3) < 1e-13);
        let m = mod_bessel(1, 1.0).unwrap();
        assert!(rel(m.k, 0.601_907_230_197_234_6) < 1e-13);
        let m = mod_bessel(0, 5.0).unwrap();
        assert!(rel(m.k, 0.003_691_098_334_042_594) < 1e-12);
    }

    #[test]
    fn j0_matches_series_oracle() {
        let oracle = series(0, 1.0, true);
        let p = cyl_bessel(0, 1.0).unwrap();
        assert!(rel(p.j, oracle) < 1e-14, "{} vs {}", p.j, oracle);
        for m in [1, 3, 7] {
            for x in [0.01, 0.3, 2.0] {
                let oracle = series(m, x, true);
                let got = cyl_bessel(m as usize, x).unwrap().j;
                assert!(rel(got, oracle) < 1e-12, "m={m} x={x}");
            }
        }
    }

    #[test]
    fn i_ratio_matches_series_oracle() {
        let ratio = series(1, 1.0, false) / series(0, 1.0, false);
        let got = mod_bessel(1, 1.0).unwrap().i / mod_bessel(0, 1.0).unwrap().i;
        assert!(rel(got, ratio) < 1e-13);
    }

    #[test]
    fn recurrence_residual() {
        for x in [0.1, 1.0, 7.5, 40.0, 300.0] {
            let seq = cyl_bessel_seq(30, x).unwrap();
            for m in 1..30 {
                let lhs = seq[m - 1].j + seq[m + 1].j;
                let rhs = 2.0 * m as f64 / x * seq[m].j;
                let scale = seq[m - 1].j.abs().max(seq[m + 1].j.abs()).max(rhs.abs());
                assert!((lhs - rhs).abs() <= 1e-11 * scale, "m={m} x={x}");
            }
        }
    }

    #[test]
    fn hankel_decay_parity_and_asymptotics() {
        let mut last = f64::INFINITY;
        let mut x = 1.0;
        while x <= 50.0 {
            let (h, _) = hankel1(0, x).unwrap();
            assert!(h.norm() < last, "not decreasing at x = {x}");
            last = h.norm();
            x += 0.5;
        }
        for x in [0.7, 3.0, 12.0] {
            let (hp, dp) = hankel1(3, x).unwrap();
            let (hm, dm) = hankel1(-3, x).unwrap();
            assert_eq!(hm, -hp);
            assert_eq!(dm, -dp);
        }
        let x = 100.0;
        let (h, _) = hankel1(0, x).unwrap();
        let approx = Complex64::from_polar((2.0 / (PI * x)).sqrt(), x - PI / 4.0);
        assert!((h - approx).norm() / approx.norm() < 0.01);
    }

    #[test]
    fn hankel_derivative_identity() {
        let x = 5.0;
        let (h0, d0) = hankel1(0, x).unwrap();
        let (h1, _) = hankel1(1, x).unwrap();
        assert!((d0 + h1).norm() < 1e-15);
        let (h2, d2) = hankel1(2, x).unwrap();
        assert!((d2 - (h1 - h2 * (2.0 / x))).norm() < 1e-14);
        let _ = h0;
    }

    #[test]
    fn modified_wronskian_and_limits() {
        for x in [0.5, 2.0, 10.0] {
            for m in [0, 1, 4] {
                let p = mod_bessel(m, x).unwrap();
                let w = p.i * p.kp - p.ip * p.k;
                assert!((w + 1.0 / x).abs() * x <= 1e-12, "x={x} m={m}");
            }
        }
        let mut prev_i = f64::INFINITY;
        let mut prev_k = 0.0;
        for x in [1e-1, 1e-2, 1e-3] {
            let p = mod_bessel(0, x).unwrap();
            assert!(p.i < prev_i && p.i > 1.0);
            assert!(p.k > prev_k);
            prev_i = p.i;
            prev_k = p.k;
        }
        assert!((mod_bessel(0, 1e-3).unwrap().i - 1.0).abs() < 1e-6);
    }

    #[test]
    fn domain_and_range_errors() {
        assert!(matches!(cyl_bessel(0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(cyl_bessel(0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(cyl_bessel(MAX_ORDER + 1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(cyl_bessel(200, 0.01), Err(Error::Range(_))));
        assert!(matches!(mod_bessel(0, 800.0), Err(Error::Range(_))));
    }

    proptest! {
        #[test]
        fn wronskian_over_envelope(m in 0usize..=60, lx in -3.0f64..3.0) {
            let x = 10f64.powf(lx);
            if let Ok(p) = cyl_bessel(m, x) {
                prop_assert!(wronskian_residual(&p, x) <= 1e-11, "m={} x={}", m, x);
            }
        }

        #[test]
        fn modified_wronskian_over_envelope(m in 0usize..=40, lx in -2.0f64..2.0) {
            let x = 10f64.powf(lx);
            if let Ok(p) = mod_bessel(m, x) {
                let w = p.i * p.kp - p.ip * p.k;
                prop_assert!((w + 1.0 / x).abs() * x <= 1e-11, "m={} x={}", m, x);
            }
        }
    }
}
