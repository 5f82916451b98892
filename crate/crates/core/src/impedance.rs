//! Admissibility checks for impedances and maximisation of the windowed
//! far-field power over compact impedance classes.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, spectral_norm, DMat};
use crate::mesh::TransmissionMesh;
use crate::scattering::{far_field_power, FarFieldRoute, ImpedanceSpec, RobinSweep, DEFAULT_ANGLE_COUNT};
use crate::trace::{norm_equivalence, SteklovMatrix};
use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

/// Smallest admissible dissipativity margin.
pub const DISSIPATIVITY_TOLERANCE: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// λ_min of (k̄SL − (k̄SL)ᴴ)/(2i).
    pub dissipativity_margin: f64,
    pub dissipative: bool,
    /// ‖S^{1/2} L S^{−1/2}‖₂.
    pub coercivity_surrogate_norm: f64,
    /// Discrete stand-in for the inverse squared extension norm.
    pub coercivity_surrogate_bound: f64,
    pub coercive_surrogate: bool,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.dissipative && self.coercive_surrogate
    }
}

/// Precomputed Gram data for repeated feasibility checks at one wavenumber.
pub struct FeasibilityChecker {
    pub k: f64,
    pub steklov: Arc<SteklovMatrix>,
    s_half: DMat,
    s_inv_half: DMat,
    /// 1 / (1 + λ_max(S_e, S_i)).
    pub coercivity_bound: f64,
}

impl FeasibilityChecker {
    pub fn new(k: f64, steklov: Arc<SteklovMatrix>, exterior: &SteklovMatrix) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Domain(format!("wavenumber {k} must be real positive")));
        }
        let (_, hi) = norm_equivalence(&steklov, exterior)?;
        Ok(Self { k, s_half: steklov.sqrt()?, s_inv_half: steklov.inv_sqrt()?, steklov, coercivity_bound: 1.0 / (1.0 + hi) })
    }

    pub fn check(&self, l: &ImpedanceSpec) -> Result<FeasibilityReport> {
        let n = self.steklov.dim();
        let v = l.values(n)?;
        let s = &self.steklov.s;
        let kb = C64::new(self.k, 0.0);
        // k̄ S L; the Hermitian part of −i·(k̄SL).
        let a = Mat::from_fn(n, n, |i, j| kb * s[(i, j)] * v[j]);
        let h = Mat::from_fn(n, n, |i, j| (a[(i, j)] - a[(j, i)].conj()) / C64::new(0.0, 2.0));
        let margin = hermitian_eigenvalues(h.as_ref())?[0];
        let lmat = l.matrix(n)?;
        let conj = &self.s_half * &lmat * &self.s_inv_half;
        let norm = spectral_norm(conj.as_ref())?;
        Ok(FeasibilityReport {
            dissipativity_margin: margin,
            dissipative: margin >= DISSIPATIVITY_TOLERANCE,
            coercivity_surrogate_norm: norm,
            coercivity_surrogate_bound: self.coercivity_bound,
            coercive_surrogate: norm < self.coercivity_bound,
        })
    }
}

pub fn feasibility(
    l: &ImpedanceSpec,
    k: f64,
    steklov: Arc<SteklovMatrix>,
    exterior: &SteklovMatrix,
) -> Result<FeasibilityReport> {
    FeasibilityChecker::new(k, steklov, exterior)?.check(l)
}

/// Compact search set. Parameters are ordered (re, im) per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ImpedanceClass {
    ConstantBox { re: [f64; 2], im: [f64; 2] },
    /// Breakpoints are arclength fractions in (0, 1), measured from the first interface node.
    PiecewiseConstant { breakpoints: Vec<f64>, re: [f64; 2], im: [f64; 2] },
}

impl ImpedanceClass {
    pub fn segments(&self) -> usize {
        match self {
            Self::ConstantBox { .. } => 1,
            Self::PiecewiseConstant { breakpoints, .. } => breakpoints.len() + 1,
        }
    }

    pub fn dimension(&self) -> usize {
        2 * self.segments()
    }

    fn boxes(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Self::ConstantBox { re, im } | Self::PiecewiseConstant { re, im, .. } => (*re, *im),
        }
    }

    /// (lower, upper) per parameter.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let (re, im) = self.boxes();
        (0..self.segments()).flat_map(|_| [(re[0], re[1]), (im[0], im[1])]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (re, im) = self.boxes();
        for (name, b) in [("re", re), ("im", im)] {
            if !(b[0].is_finite() && b[1].is_finite() && b[0] <= b[1]) {
                return Err(Error::Class(format!("{name} bounds [{}, {}] are not an ordered finite interval", b[0], b[1])));
            }
        }
        if let Self::PiecewiseConstant { breakpoints, .. } = self {
            let mut prev = 0.0;
            for &b in breakpoints {
                if !(b > prev && b < 1.0) {
                    return Err(Error::Class(format!("breakpoints must increase strictly within (0, 1), got {breakpoints:?}")));
                }
                prev = b;
            }
        }
        Ok(())
    }

    /// Segment index of each interface node.
    pub fn node_segments(&self, mesh: &TransmissionMesh) -> Vec<usize> {
        let pts: Vec<[f64; 2]> = mesh.interface_pairs.iter().map(|&(i, _)| mesh.nodes[i]).collect();
        let n = pts.len();
        let mut s = vec![0.0; n];
        for j in 1..n {
            s[j] = s[j - 1] + (pts[j][0] - pts[j - 1][0]).hypot(pts[j][1] - pts[j - 1][1]);
        }
        let total = s[n - 1] + (pts[0][0] - pts[n - 1][0]).hypot(pts[0][1] - pts[n - 1][1]);
        match self {
            Self::ConstantBox { .. } => vec![0; n],
            Self::PiecewiseConstant { breakpoints, .. } => {
                s.iter().map(|&x| breakpoints.iter().filter(|&&b| b <= x / total).count()).collect()
            }
        }
    }

    pub fn impedance(&self, params: &[f64], node_segments: &[usize]) -> ImpedanceSpec {
        match self {
            Self::ConstantBox { .. } => ImpedanceSpec::Constant(C64::new(params[0], params[1])),
            Self::PiecewiseConstant { .. } => ImpedanceSpec::Nodal(
                node_segments.iter().map(|&g| C64::new(params[2 * g], params[2 * g + 1])).collect(),
            ),
        }
    }
}

fn default_grid() -> usize {
    9
}
fn default_iterations() -> usize {
    200
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_angles() -> usize {
    DEFAULT_ANGLE_COUNT
}
fn default_route() -> FarFieldRoute {
    FarFieldRoute::DtnModes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimiserSettings {
    /// Grid points per real parameter in the coarse phase.
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    /// Relative spread of simplex values and simplex diameter (box-normalised) at convergence.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_angles")]
    pub angle_count: usize,
    #[serde(default = "default_route")]
    pub route: FarFieldRoute,
}

impl Default for OptimiserSettings {
    fn default() -> Self {
        Self {
            grid_points: default_grid(),
            max_iterations: default_iterations(),
            tolerance: default_tolerance(),
            angle_count: default_angles(),
            route: default_route(),
        }
    }
}

/// Q_Θ(L) for a fixed obstacle, incidence and window.
pub struct Objective {
    pub sweep: RobinSweep,
    /// Radians.
    pub intervals: Vec<(f64, f64)>,
    pub route: FarFieldRoute,
    pub angle_count: usize,
    pub checker: FeasibilityChecker,
}

impl Objective {
    pub fn q(&self, l: &ImpedanceSpec) -> Result<f64> {
        let s = self.sweep.scatter(l)?;
        far_field_power(&s.far_field(self.route, self.angle_count)?, &self.intervals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Grid,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: usize,
    pub phase: Phase,
    pub params: Vec<f64>,
    /// None for rejected (infeasible) points.
    pub q: Option<f64>,
    pub feasibility: FeasibilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimisationResult {
    pub class: ImpedanceClass,
    pub settings: OptimiserSettings,
    pub best_params: Vec<f64>,
    pub best_impedance: ImpedanceSpec,
    pub best_q: f64,
    pub grid_best_q: f64,
    pub best_feasibility: FeasibilityReport,
    pub evaluations: usize,
    pub iterations: usize,
    pub termination: String,
    pub trace: Vec<TraceEntry>,
}

impl OptimisationResult {
    pub fn trace_csv(&self) -> String {
        let d = self.best_params.len();
        let mut s = String::from("index,phase,q,dissipativity_margin,coercivity_surrogate_norm,feasible");
        for g in 0..d / 2 {
            let _ = write!(s, ",re{g},im{g}");
        }
        s.push('\n');
        for e in &self.trace {
            let phase = match e.phase {
                Phase::Grid => "grid",
                Phase::Refine => "refine",
            };
            let q = e.q.map(|q| q.to_string()).unwrap_or_default();
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                e.index, phase, q, e.feasibility.dissipativity_margin, e.feasibility.coercivity_surrogate_norm, e.q.is_some()
            );
            for p in &e.params {
                let _ = write!(s, ",{p}");
            }
            s.push('\n');
        }
        s
    }
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| x.to_bits()).collect()
}

struct Evaluator<'a> {
    objective: &'a Objective,
    class: &'a ImpedanceClass,
    segments: Vec<usize>,
    cache: HashMap<Vec<u64>, Option<f64>>,
    trace: Vec<TraceEntry>,
}

impl Evaluator<'_> {
    fn compute(&self, p: &[f64]) -> Result<(Option<f64>, FeasibilityReport)> {
        let l = self.class.impedance(p, &self.segments);
        let f = self.objective.checker.check(&l)?;
        if !f.dissipative {
            return Ok((None, f));
        }
        Ok((Some(self.objective.q(&l)?), f))
    }

    fn record(&mut self, p: Vec<f64>, phase: Phase, q: Option<f64>, f: FeasibilityReport) {
        self.cache.insert(key(&p), q);
        self.trace.push(TraceEntry { index: self.trace.len(), phase, params: p, q, feasibility: f });
    }

    fn eval(&mut self, p: &[f64]) -> Result<Option<f64>> {
        if let Some(q) = self.cache.get(&key(p)) {
            return Ok(*q);
        }
        let (q, f) = self.compute(p)?;
        self.record(p.to_vec(), Phase::Refine, q, f);
        Ok(q)
    }

    /// Evaluates uncached points in parallel and records them in input order.
    fn eval_batch(&mut self, points: &[Vec<f64>]) -> Result<()> {
        let mut fresh: Vec<Vec<f64>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for p in points {
            if !self.cache.contains_key(&key(p)) && seen.insert(key(p)) {
                fresh.push(p.clone());
            }
        }
        let out: Vec<Result<(Option<f64>, FeasibilityReport)>> = fresh.par_iter().map(|p| self.compute(p)).collect();
        for (p, r) in fresh.into_iter().zip(out) {
            let (q, f) = r?;
            self.record(p, Phase::Grid, q, f);
        }
        Ok(())
    }
}

fn corners(bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in bounds {
        let vals: Vec<f64> = if lo == hi { vec![lo] } else { vec![lo, hi] };
        out = out.into_iter().flat_map(|c| vals.iter().map(move |&v| [c.clone(), vec![v]].concat())).collect();
    }
    out
}

fn grid(bounds: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in bounds {
        let vals: Vec<f64> = if lo == hi || n < 2 {
            vec![lo]
        } else {
            (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
        };
        out = out.into_iter().flat_map(|c| vals.iter().map(move |&v| [c.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Coarse grid then bound-constrained Nelder–Mead from the best grid point.
pub fn optimize(class: &ImpedanceClass, objective: &Objective, settings: &OptimiserSettings) -> Result<OptimisationResult> {
    class.validate()?;
    if settings.grid_points < 1 {
        return Err(Error::Config("optimiser grid needs at least one point per parameter".into()));
    }
    let bounds = class.bounds();
    let segments = class.node_segments(&objective.sweep.ctx.mesh);
    let mut ev = Evaluator { objective, class, segments, cache: HashMap::new(), trace: Vec::new() };

    for c in corners(&bounds) {
        let f = objective.checker.check(&class.impedance(&c, &ev.segments))?;
        if !f.dissipative {
            return Err(Error::Class(format!(
                "corner {c:?} of the impedance class fails dissipativity (margin {:e})",
                f.dissipativity_margin
            )));
        }
    }

    let pts = grid(&bounds, settings.grid_points);
    ev.eval_batch(&pts)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for p in &pts {
        if let Some(q) = ev.cache[&key(p)] {
            if best.as_ref().is_none_or(|(_, b)| q > *b) {
                best = Some((p.clone(), q));
            }
        }
    }
    let (x0, grid_best) = best.ok_or_else(|| Error::Class("every grid point of the impedance class is infeasible".into()))?;

    let free: Vec<usize> = (0..bounds.len()).filter(|&i| bounds[i].1 > bounds[i].0).collect();
    let (best_params, best_q, iterations, termination) = if free.is_empty() {
        (x0, grid_best, 0, "degenerate class".to_string())
    } else {
        nelder_mead(&mut ev, &bounds, &free, x0, grid_best, settings)?
    };
    let best_impedance = class.impedance(&best_params, &ev.segments);
    let best_feasibility = objective.checker.check(&best_impedance)?;
    Ok(OptimisationResult {
        class: class.clone(),
        settings: settings.clone(),
        best_params,
        best_impedance,
        best_q,
        grid_best_q: grid_best,
        best_feasibility,
        evaluations: ev.trace.len(),
        iterations,
        termination,
        trace: ev.trace,
    })
}

fn nelder_mead(
    ev: &mut Evaluator<'_>,
    bounds: &[(f64, f64)],
    free: &[usize],
    x0: Vec<f64>,
    q0: f64,
    settings: &OptimiserSettings,
) -> Result<(Vec<f64>, f64, usize, String)> {
    let d = free.len();
    // Unit-cube coordinates on the free parameters.
    let to_params = |t: &[f64]| -> Vec<f64> {
        let mut p = x0.clone();
        for (k, &i) in free.iter().enumerate() {
            let (lo, hi) = bounds[i];
            let s = t[k].clamp(0.0, 1.0);
            p[i] = if s == 1.0 { hi } else { lo + (hi - lo) * s };
        }
        p
    };
    let t0: Vec<f64> = free.iter().map(|&i| (x0[i] - bounds[i].0) / (bounds[i].1 - bounds[i].0)).collect();
    let step = 1.0 / (settings.grid_points.max(2) - 1) as f64;
    let cost = |t: &[f64], ev: &mut Evaluator<'_>| -> Result<f64> {
        Ok(ev.eval(&to_params(t))?.map(|q| -q).unwrap_or(f64::INFINITY))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(t0.clone(), -q0)];
    for k in 0..d {
        let mut t = t0.clone();
        t[k] = if t[k] + step <= 1.0 { t[k] + step } else { t[k] - step };
        let f = cost(&t, ev)?;
        simplex.push((t, f));
    }

    let clamp = |t: Vec<f64>| -> Vec<f64> { t.into_iter().map(|x| x.clamp(0.0, 1.0)).collect() };
    let mut iterations = 0;
    let termination = loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let fb = simplex[0].1;
        let fw = simplex[d].1;
        let diameter = simplex
            .iter()
            .skip(1)
            .map(|(t, _)| t.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (fw - fb).abs() <= settings.tolerance * fb.abs().max(1e-300) && diameter <= settings.tolerance.sqrt() {
            break "converged".to_string();
        }
        if diameter <= 1e-12 {
            break "simplex collapsed".to_string();
        }
        if iterations >= settings.max_iterations {
            break "max_iterations".to_string();
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d).map(|k| simplex[..d].iter().map(|(t, _)| t[k]).sum::<f64>() / d as f64).collect();
        let along = |s: f64| -> Vec<f64> {
            clamp(centroid.iter().zip(&simplex[d].0).map(|(c, w)| c + s * (c - w)).collect())
        };
        let xr = along(1.0);
        let fr = cost(&xr, ev)?;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = cost(&xe, ev)?;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[d].1 {
            let x = along(0.5);
            let f = cost(&x, ev)?;
            (x, f)
        } else {
            let x = along(-0.5);
            let f = cost(&x, ev)?;
            (x, f)
        };
        if fc < fr.min(simplex[d].1) {
            simplex[d] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let t: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
            let f = cost(&t, ev)?;
            *v = (t, f);
        }
    };
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    // Best over every evaluation, so the result never falls below the grid phase.
    let (p, q) = ev
        .trace
        .iter()
        .filter_map(|e| e.q.map(|q| (e.params.clone(), q)))
        .fold((x0.clone(), q0), |acc, (p, q)| if q > acc.1 { (p, q) } else { acc });
    Ok((p, q, iterations, termination))
}

/// |Q(p + δ·dir) − Q(p)| / |δ| for each δ; reported, not asserted.
pub fn continuity_probe(
    objective: &Objective,
    class: &ImpedanceClass,
    params: &[f64],
    direction: &[f64],
    deltas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let segments = class.node_segments(&objective.sweep.ctx.mesh);
    let q0 = objective.q(&class.impedance(params, &segments))?;
    deltas
        .iter()
        .map(|&d| {
            let p: Vec<f64> = params.iter().zip(direction).map(|(x, v)| x + d * v).collect();
            let q = objective.q(&class.impedance(&p, &segments))?;
            Ok((d, (q - q0).abs() / d.abs()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, Polyline};
    use crate::mesh::triangulate;
    use crate::scattering::{IncidentField, ScatteringContext};
    use crate::trace::exterior_gram;
    use std::f64::consts::PI;

    fn objective(h: f64) -> Objective {
        let k = 2.0;
        let spec = DomainSpec { obstacle: Polyline::disk(1.0, h), ball_radius: 2.0, wavenumber: C64::new(k, 0.0) };
        let ctx = Arc::new(ScatteringContext::new(Arc::new(triangulate(&spec, h).unwrap()), k, None).unwrap());
        let se = exterior_gram(&ctx.forms).unwrap();
        let checker = FeasibilityChecker::new(k, ctx.steklov().unwrap(), &se).unwrap();
        Objective {
            sweep: RobinSweep::new(ctx, IncidentField::from_angle(0.0, k).unwrap()).unwrap(),
            intervals: vec![(PI / 6.0, PI / 3.0)],
            route: FarFieldRoute::DtnModes,
            angle_count: 180,
            checker,
        }
    }

    #[test]
    fn feasibility_margins() {
        let o = objective(0.15);
        let c = &o.checker;
        let zero = c.check(&ImpedanceSpec::Constant(C64::new(0.0, 0.0))).unwrap();
        assert!(zero.passed());
        assert_eq!(zero.dissipativity_margin, 0.0);
        let good = c.check(&ImpedanceSpec::Constant(C64::new(0.3, 0.7))).unwrap();
        assert!(good.dissipativity_margin >= -1e-12);
        let bad = c.check(&ImpedanceSpec::Constant(C64::new(0.3, -0.5))).unwrap();
        assert!(!bad.dissipative);
        // Constant λ: margin is Im(kλ)·λ_max(S) when Im λ < 0.
        let ev = c.steklov.eigenvalues().unwrap();
        let expect = 2.0 * -0.5 * ev[ev.len() - 1];
        assert!((bad.dissipativity_margin - expect).abs() <= 1e-8 * expect.abs());
        let lam = C64::new(0.3, 0.4);
        let r = c.check(&ImpedanceSpec::Constant(lam)).unwrap();
        assert!((r.coercivity_surrogate_norm - lam.norm()).abs() <= 1e-10);
    }

    #[test]
    fn degenerate_box_single_evaluation() {
        let o = objective(0.15);
        let class = ImpedanceClass::ConstantBox { re: [0.2, 0.2], im: [0.5, 0.5] };
        let r = optimize(&class, &o, &OptimiserSettings::default()).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.best_params, vec![0.2, 0.5]);
    }

    #[test]
    fn refinement_never_loses_and_is_deterministic() {
        let o = objective(0.15);
        let class = ImpedanceClass::ConstantBox { re: [-0.5, 0.5], im: [0.0, 2.0] };
        let s = OptimiserSettings { grid_points: 4, max_iterations: 20, ..Default::default() };
        let a = optimize(&class, &o, &s).unwrap();
        assert!(a.best_q >= a.grid_best_q);
        assert!(a.trace.iter().all(|e| e.q.is_none_or(|q| q <= a.best_q)));
        assert!(a.trace.iter().all(|e| e.feasibility.dissipativity_margin >= DISSIPATIVITY_TOLERANCE));
        let b = optimize(&class, &o, &s).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn infeasible_corner_rejected() {
        let o = objective(0.15);
        let class = ImpedanceClass::ConstantBox { re: [0.0, 1.0], im: [-1.0, 1.0] };
        assert!(matches!(optimize(&class, &o, &OptimiserSettings::default()), Err(Error::Class(_))));
    }

    #[test]
    fn piecewise_segments() {
        let o = objective(0.15);
        let class = ImpedanceClass::PiecewiseConstant { breakpoints: vec![0.5], re: [0.0, 1.0], im: [0.0, 1.0] };
        class.validate().unwrap();
        let seg = class.node_segments(&o.sweep.ctx.mesh);
        assert_eq!(seg[0], 0);
        assert_eq!(*seg.last().unwrap(), 1);
        let l = class.impedance(&[0.1, 0.2, 0.3, 0.4], &seg);
        let ImpedanceSpec::Nodal(v) = l else { panic!() };
        assert_eq!(v[0], C64::new(0.1, 0.2));
        assert!(ImpedanceClass::PiecewiseConstant { breakpoints: vec![0.6, 0.4], re: [0.0, 1.0], im: [0.0, 1.0] }
            .validate()
            .is_err());
    }

    #[test]
    fn continuity_probe_bounded() {
        let o = objective(0.15);
        let class = ImpedanceClass::ConstantBox { re: [-0.5, 0.5], im: [0.0, 2.0] };
        let r = continuity_probe(&o, &class, &[0.1, 1.0], &[1.0, 0.0], &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(r.iter().all(|(_, x)| x.is_finite()));
        assert!((r[2].1 - r[1].1).abs() <= 0.1 * r[1].1.max(1e-12));
    }
}
