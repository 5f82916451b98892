//! Obstacle boundaries: polygons, prefractal generations built on polygon
//! edges, and the truncation ball that houses them.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub type Point = [f64; 2];

/// Default cap on prefractal generation level.
pub const DEFAULT_MAX_LEVEL: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<Point>,
    pub closed: bool,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Orientation of `c` relative to the directed line `a -> b`.
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

impl Polyline {
    pub fn closed(vertices: Vec<Point>) -> Self {
        Self { vertices, closed: true }
    }

    /// `[-1/2, 1/2]^2`, counter-clockwise.
    pub fn unit_square() -> Self {
        Self::closed(vec![[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    }

    /// Regular `n`-gon inscribed in the circle of the given radius, first vertex on +x.
    pub fn regular_polygon(n: usize, radius: f64) -> Self {
        let vertices = (0..n)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect();
        Self::closed(vertices)
    }

    /// Regular polygon approximating the disk of radius `a`, with edges at least `2h` long.
    pub fn disk(a: f64, h: f64) -> Self {
        let mut n = ((std::f64::consts::PI * a / h).floor() as usize).max(3);
        while n > 3 && 2.0 * a * (std::f64::consts::PI / n as f64).sin() < 2.0 * h {
            n -= 1;
        }
        Self::regular_polygon(n, a)
    }

    pub fn segment_count(&self) -> usize {
        let n = self.vertices.len();
        if self.closed {
            n
        } else {
            n.saturating_sub(1)
        }
    }

    pub fn segment(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..self.segment_count()).map(|i| self.segment(i))
    }

    /// Shoelace area; positive for counter-clockwise closed polylines.
    pub fn signed_area(&self) -> f64 {
        if !self.closed {
            return 0.0;
        }
        0.5 * self.segments().map(|(a, b)| cross(a, b)).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }

    pub fn min_edge_length(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.segments() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// First offending segment pair, found by a sweep over x with bounding-box pruning.
    pub fn find_self_intersection(&self) -> Option<(usize, usize)> {
        let m = self.segment_count();
        let boxes: Vec<[f64; 4]> = self
            .segments()
            .map(|(a, b)| [a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1])])
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| boxes[i][0].total_cmp(&boxes[j][0]).then(i.cmp(&j)));

        let mut active: Vec<usize> = Vec::new();
        let mut found: Option<(usize, usize)> = None;
        for &i in &order {
            let bi = boxes[i];
            active.retain(|&j| boxes[j][1] >= bi[0]);
            for &j in &active {
                let bj = boxes[j];
                if bj[2] > bi[3] || bi[2] > bj[3] {
                    continue;
                }
                if self.segments_conflict(i, j) {
                    let pair = (i.min(j), i.max(j));
                    if found.is_none_or(|f| pair < f) {
                        found = Some(pair);
                    }
                }
            }
            active.push(i);
        }
        found
    }

    fn segments_conflict(&self, i: usize, j: usize) -> bool {
        let m = self.segment_count();
        let (a, b) = self.segment(i);
        let (c, d) = self.segment(j);
        let adjacent_next = self.closed && (i + 1) % m == j || !self.closed && i + 1 == j;
        let adjacent_prev = self.closed && (j + 1) % m == i || !self.closed && j + 1 == i;
        if adjacent_next || adjacent_prev {
            // Shared vertex only; reject a fold-back onto the previous segment.
            let (p, q, r) = if adjacent_next { (a, b, d) } else { (c, d, b) };
            let u = sub(q, p);
            let w = sub(r, q);
            return orient(p, q, r) == 0.0 && u[0] * w[0] + u[1] * w[1] < 0.0 && m > 2;
        }
        segments_intersect(a, b, c, d)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for v in &self.vertices {
            let _ = writeln!(out, "{},{}", v[0], v[1]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.eq_ignore_ascii_case("x,y")) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.map(str::trim)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Geometry(format!("bad CSV row {}: {line:?}", lineno + 1)))
            };
            let x = parse(parts.next())?;
            let y = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Geometry(format!("bad CSV row {}: {line:?}", lineno + 1)));
            }
            vertices.push([x, y]);
        }
        Ok(Self::closed(vertices))
    }
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test, touching counts.
pub(crate) fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefractalKind {
    Koch,
    Minkowski,
    Polygon,
}

impl PrefractalKind {
    /// Segments produced per replaced segment.
    pub fn generator_size(self) -> usize {
        match self {
            PrefractalKind::Koch => 4,
            PrefractalKind::Minkowski => 8,
            PrefractalKind::Polygon => 1,
        }
    }

    /// Similarity dimension of the limit curve.
    pub fn dimension(self) -> f64 {
        match self {
            PrefractalKind::Koch => 4f64.ln() / 3f64.ln(),
            PrefractalKind::Minkowski => 8f64.ln() / 4f64.ln(),
            PrefractalKind::Polygon => 1.0,
        }
    }

    // Generator vertices in edge-local coordinates (along, outward), excluding the start point.
    fn generator(self) -> &'static [(f64, f64)] {
        const H: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6
        match self {
            PrefractalKind::Koch => &[(1.0 / 3.0, 0.0), (0.5, H), (2.0 / 3.0, 0.0), (1.0, 0.0)],
            PrefractalKind::Minkowski => &[
                (0.25, 0.0),
                (0.25, 0.25),
                (0.5, 0.25),
                (0.5, 0.0),
                (0.5, -0.25),
                (0.75, -0.25),
                (0.75, 0.0),
                (1.0, 0.0),
            ],
            PrefractalKind::Polygon => &[(1.0, 0.0)],
        }
    }
}

fn refine_once(kind: PrefractalKind, line: &Polyline) -> Polyline {
    let gen = kind.generator();
    let mut vertices = Vec::with_capacity(line.segment_count() * gen.len());
    for (p, q) in line.segments() {
        let d = sub(q, p);
        // Outward normal of a counter-clockwise boundary points to the right of travel.
        let n = [d[1], -d[0]];
        vertices.push(p);
        for &(s, t) in &gen[..gen.len() - 1] {
            vertices.push([p[0] + s * d[0] + t * n[0], p[1] + s * d[1] + t * n[1]]);
        }
    }
    Polyline { vertices, closed: line.closed }
}

pub fn generate_prefractal(kind: PrefractalKind, level: u32, base: &Polyline) -> Result<Polyline> {
    generate_prefractal_with_limit(kind, level, base, DEFAULT_MAX_LEVEL)
}

/// Replaces every base edge by the level-`level` generator.
pub fn generate_prefractal_with_limit(
    kind: PrefractalKind,
    level: u32,
    base: &Polyline,
    max_level: u32,
) -> Result<Polyline> {
    if level > max_level {
        return Err(Error::Geometry(format!("level {level} exceeds maximum {max_level}")));
    }
    if !base.closed || base.vertices.len() < 3 {
        return Err(Error::Geometry("base must be a closed polyline with at least 3 vertices".into()));
    }
    if let Some((i, j)) = base.find_self_intersection() {
        return Err(Error::Geometry(format!("base polyline self-intersects at segments {i} and {j}")));
    }
    let mut line = base.clone();
    if kind != PrefractalKind::Polygon {
        for _ in 0..level {
            line = refine_once(kind, &line);
        }
    }
    if let Some((i, j)) = line.find_self_intersection() {
        return Err(Error::Geometry(format!(
            "{kind:?} level {level} self-intersects at segments {i} and {j}"
        )));
    }
    Ok(line)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub obstacle: Polyline,
    pub ball_radius: f64,
    pub wavenumber: Complex64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub vertex_count: usize,
    pub signed_area: f64,
    pub counter_clockwise: bool,
    pub clearance: f64,
    pub min_edge_length: f64,
    pub self_intersection: Option<(usize, usize)>,
    pub origin_inside: bool,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Clearance is sufficient for meshing at target size `h`.
    pub fn clearance_ok_for(&self, h: f64) -> bool {
        self.clearance >= 2.0 * h
    }
}

pub fn validate_domain(spec: &DomainSpec) -> ValidationReport {
    let line = &spec.obstacle;
    let mut failures = Vec::new();
    let n = line.vertices.len();
    if !line.closed || n < 3 {
        failures.push("structure: obstacle must be closed with at least 3 vertices".to_string());
    }
    if let Some(i) = (0..line.segment_count()).find(|&i| {
        let (a, b) = line.segment(i);
        a == b
    }) {
        failures.push(format!("structure: repeated consecutive vertex at index {i}"));
    }
    let signed_area = line.signed_area();
    let counter_clockwise = signed_area > 0.0;
    if !counter_clockwise {
        failures.push(format!("orientation: signed area {signed_area} is not positive"));
    }
    let clearance = spec.ball_radius - line.max_radius();
    if !(spec.ball_radius > 0.0) {
        failures.push(format!("containment: ball radius {} must be positive", spec.ball_radius));
    } else if clearance <= 0.0 {
        failures.push(format!("containment: obstacle reaches radius {} >= R", line.max_radius()));
    }
    let self_intersection = if n >= 3 { line.find_self_intersection() } else { None };
    if let Some((i, j)) = self_intersection {
        failures.push(format!("self-intersection: segments {i} and {j}"));
    }
    let origin_inside = n >= 3 && line.contains([0.0, 0.0]);
    if !origin_inside {
        failures.push("origin: 0 must lie inside the obstacle".to_string());
    }
    ValidationReport {
        vertex_count: n,
        signed_area,
        counter_clockwise,
        clearance,
        min_edge_length: line.min_edge_length(),
        self_intersection,
        origin_inside,
        failures,
    }
}


impl Polyline {
    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self { vertices, closed: self.closed }
    }
}
