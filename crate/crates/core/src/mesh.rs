//! Triangulation of the truncation ball with the obstacle boundary as an
//! internal interface, and node splitting along that interface.

use crate::error::{Error, Result};
use crate::geometry::{validate_domain, DomainSpec, Point, Polyline};
use serde::{Deserialize, Serialize};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Exterior,
}

#[derive(Debug, Clone, Copy)]
pub struct MeshOptions {
    /// Minimum triangle angle accepted after refinement, in degrees.
    pub quality_deg: f64,
    /// Angle handed to the Delaunay refiner; a little above the quality threshold.
    pub refine_deg: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { quality_deg: 20.0, refine_deg: 28.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransmissionMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    /// (interior copy, exterior copy) in arclength order along the obstacle.
    pub interface_pairs: Vec<(usize, usize)>,
    /// Counter-clockwise node ids on the truncation circle, starting on +x.
    pub outer_ring: Vec<usize>,
    pub h: f64,
    pub ball_radius: f64,
    /// Node count before interface duplication; exterior copies are numbered from here.
    pub base_node_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub node_count: usize,
    pub interior_triangles: usize,
    pub exterior_triangles: usize,
    pub interior_nodes: usize,
    pub exterior_nodes: usize,
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    pub interior_area: f64,
    pub exterior_area: f64,
    pub interface_dofs: usize,
    pub ring_nodes: usize,
}

pub fn triangle_area(p: [Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Interior angles in radians.
pub fn triangle_angles(p: [Point; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cr = u[0] * v[1] - u[1] * v[0];
        let dt = u[0] * v[0] + u[1] * v[1];
        out[i] = cr.abs().atan2(dt);
    }
    out
}

impl TransmissionMesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn interface_len(&self) -> usize {
        self.interface_pairs.len()
    }

    pub fn tri_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Map a node to its id in the continuous (un-duplicated) numbering.
    pub fn merged(&self, node: usize) -> usize {
        if node >= self.base_node_count {
            self.interface_pairs[node - self.base_node_count].0
        } else {
            node
        }
    }

    /// Sorted node ids referenced by triangles of the region.
    pub fn region_nodes(&self, region: Region) -> Vec<usize> {
        let mut used = vec![false; self.nodes.len()];
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            if *r == region {
                for &v in t {
                    used[v] = true;
                }
            }
        }
        (0..self.nodes.len()).filter(|&i| used[i]).collect()
    }

    pub fn interface_nodes(&self, region: Region) -> Vec<usize> {
        self.interface_pairs
            .iter()
            .map(|&(i, e)| if region == Region::Interior { i } else { e })
            .collect()
    }

    /// Angular positions of the ring nodes in `[0, 2π)`.
    pub fn ring_angles(&self) -> Vec<f64> {
        self.outer_ring
            .iter()
            .map(|&v| {
                let p = self.nodes[v];
                p[1].atan2(p[0]).rem_euclid(2.0 * std::f64::consts::PI)
            })
            .collect()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == region)
            .map(|t| triangle_area(self.tri_points(t)))
            .sum()
    }

    pub fn metrics(&self) -> MetricsReport {
        let mut min_angle = f64::INFINITY;
        let mut max_angle: f64 = 0.0;
        for t in 0..self.triangles.len() {
            for a in triangle_angles(self.tri_points(t)) {
                min_angle = min_angle.min(a);
                max_angle = max_angle.max(a);
            }
        }
        let count = |r: Region| self.regions.iter().filter(|&&x| x == r).count();
        MetricsReport {
            node_count: self.nodes.len(),
            interior_triangles: count(Region::Interior),
            exterior_triangles: count(Region::Exterior),
            interior_nodes: self.region_nodes(Region::Interior).len(),
            exterior_nodes: self.region_nodes(Region::Exterior).len(),
            min_angle_deg: min_angle.to_degrees(),
            max_angle_deg: max_angle.to_degrees(),
            interior_area: self.region_area(Region::Interior),
            exterior_area: self.region_area(Region::Exterior),
            interface_dofs: self.interface_pairs.len(),
            ring_nodes: self.outer_ring.len(),
        }
    }

    /// Legacy-VTK ASCII unstructured grid, region tag as cell data, optional complex point data.
    pub fn to_vtk(&self, field: Option<(&str, &[num_complex::Complex64])>) -> String {
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\ntransmission mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(s, "POINTS {} double", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {} 0", p[0], p[1]);
        }
        let nt = self.triangles.len();
        let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {nt}");
        for _ in 0..nt {
            s.push_str("5\n");
        }
        let _ = writeln!(s, "CELL_DATA {nt}\nSCALARS region int 1\nLOOKUP_TABLE default");
        for r in &self.regions {
            s.push_str(if *r == Region::Interior { "0\n" } else { "1\n" });
        }
        if let Some((name, values)) = field {
            let _ = writeln!(s, "POINT_DATA {}", self.nodes.len());
            for (suffix, f) in [
                ("re", (|z: num_complex::Complex64| z.re) as fn(num_complex::Complex64) -> f64),
                ("im", |z| z.im),
                ("abs", |z| z.norm()),
            ] {
                let _ = writeln!(s, "SCALARS {name}_{suffix} double 1\nLOOKUP_TABLE default");
                for z in values {
                    let _ = writeln!(s, "{}", f(*z));
                }
            }
        }
        s
    }
}

pub fn triangulate(spec: &DomainSpec, h: f64) -> Result<TransmissionMesh> {
    triangulate_with(spec, h, &MeshOptions::default())
}

fn split_closed(line: &Polyline, h: f64) -> Vec<Point> {
    let mut pts = Vec::new();
    for (a, b) in line.segments() {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let n = (len / h).ceil().max(1.0) as usize;
        for s in 0..n {
            let t = s as f64 / n as f64;
            pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    pts
}

// Follow a closed chain of constraint edges starting at `start`, heading towards `toward`.
fn walk_chain(adj: &HashMap<usize, Vec<usize>>, pos: &[Point], start: usize, toward: Point) -> Result<Vec<usize>> {
    let first = adj
        .get(&start)
        .filter(|n| n.len() == 2)
        .ok_or_else(|| Error::Mesh(format!("constraint chain broken at node {start}")))?;
    let score = |n: usize| {
        let d = [pos[n][0] - pos[start][0], pos[n][1] - pos[start][1]];
        let t = [toward[0] - pos[start][0], toward[1] - pos[start][1]];
        d[0] * t[0] + d[1] * t[1]
    };
    let mut next = if score(first[0]) >= score(first[1]) { first[0] } else { first[1] };
    let mut chain = vec![start];
    let mut prev = start;
    while next != start {
        if chain.len() > adj.len() {
            return Err(Error::Mesh("constraint chain does not close".into()));
        }
        chain.push(next);
        let nb = adj
            .get(&next)
            .filter(|n| n.len() == 2)
            .ok_or_else(|| Error::Mesh(format!("constraint chain broken at node {next}")))?;
        let step = if nb[0] == prev { nb[1] } else { nb[0] };
        prev = next;
        next = step;
    }
    Ok(chain)
}

pub fn triangulate_with(spec: &DomainSpec, h: f64, opts: &MeshOptions) -> Result<TransmissionMesh> {
    let report = validate_domain(spec);
    if !report.passed() {
        return Err(Error::Precondition(format!("invalid domain: {}", report.failures.join("; "))));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Precondition(format!("mesh size {h} must be positive")));
    }
    if h > 0.5 * report.min_edge_length * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "mesh size {h} exceeds half the minimum obstacle edge length {}",
            report.min_edge_length
        )));
    }
    if !report.clearance_ok_for(h) {
        return Err(Error::Precondition(format!(
            "clearance {} to the truncation circle is below 2h = {}",
            report.clearance,
            2.0 * h
        )));
    }
    let r = spec.ball_radius;
    let obstacle = split_closed(&spec.obstacle, h);
    let n_obs = obstacle.len();
    let n_ring = (2.0 * std::f64::consts::PI * r / h).ceil() as usize;
    let mut input: Vec<Point2<f64>> = obstacle.iter().map(|p| Point2::new(p[0], p[1])).collect();
    for j in 0..n_ring {
        let t = 2.0 * std::f64::consts::PI * j as f64 / n_ring as f64;
        input.push(Point2::new(r * t.cos(), r * t.sin()));
    }
    let mut edges = Vec::with_capacity(n_obs + n_ring);
    for i in 0..n_obs {
        edges.push([i, (i + 1) % n_obs]);
    }
    for j in 0..n_ring {
        edges.push([n_obs + j, n_obs + (j + 1) % n_ring]);
    }
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(input, edges)
        .map_err(|e| Error::Mesh(format!("constrained triangulation failed: {e:?}")))?;

    let max_area = 3f64.sqrt() / 4.0 * h * h;
    let expected = (std::f64::consts::PI * r * r / (0.25 * max_area)) as usize;
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(opts.refine_deg))
        .with_max_allowed_area(max_area)
        .with_max_additional_vertices(expected + 20 * cdt.num_vertices());
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(Error::Mesh("refinement exhausted its vertex budget".into()));
    }

    let mut nodes: Vec<Point> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let obstacle_radius = spec.obstacle.max_radius();
    let ring_cut = 0.5 * (r + obstacle_radius);
    let mut obs_adj: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut ring_adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for e in cdt.undirected_edges() {
        if !cdt.is_constraint_edge(e.fix()) {
            continue;
        }
        let [a, b] = e.vertices().map(|v| v.fix().index());
        let on_ring = nodes[a][0].hypot(nodes[a][1]) > ring_cut;
        let adj = if on_ring { &mut ring_adj } else { &mut obs_adj };
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    for list in obs_adj.values_mut().chain(ring_adj.values_mut()) {
        list.sort_unstable();
    }
    let interface = walk_chain(&obs_adj, &nodes, 0, obstacle[1 % n_obs])?;
    let ring = walk_chain(&ring_adj, &nodes, n_obs, [r, r])?;
    if interface.len() != obs_adj.len() || ring.len() != ring_adj.len() {
        return Err(Error::Mesh("constraint edges do not form two simple loops".into()));
    }
    for &v in &ring {
        let p = nodes[v];
        let s = r / p[0].hypot(p[1]);
        nodes[v] = [p[0] * s, p[1] * s];
    }

    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    let mut regions = Vec::with_capacity(cdt.num_inner_faces());
    for f in cdt.inner_faces() {
        let mut t = f.vertices().map(|v| v.fix().index());
        let mut p = t.map(|i| nodes[i]);
        if triangle_area(p) < 0.0 {
            t.swap(1, 2);
            p.swap(1, 2);
        }
        if triangle_area(p) <= 0.0 {
            return Err(Error::Mesh(format!("degenerate triangle {t:?}")));
        }
        let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        triangles.push(t);
        regions.push(if spec.obstacle.contains(c) { Region::Interior } else { Region::Exterior });
    }

    let base = nodes.len();
    let mut copy_of = vec![usize::MAX; base];
    let mut interface_pairs = Vec::with_capacity(interface.len());
    for (i, &v) in interface.iter().enumerate() {
        copy_of[v] = base + i;
        nodes.push(nodes[v]);
        interface_pairs.push((v, base + i));
    }
    for (t, reg) in triangles.iter_mut().zip(&regions) {
        if *reg == Region::Exterior {
            for v in t.iter_mut() {
                if copy_of[*v] != usize::MAX {
                    *v = copy_of[*v];
                }
            }
        }
    }

    let mesh = TransmissionMesh {
        nodes,
        triangles,
        regions,
        interface_pairs,
        outer_ring: ring,
        h,
        ball_radius: r,
        base_node_count: base,
    };
    check_quality(&mesh, opts.quality_deg)?;
    Ok(mesh)
}

fn check_quality(mesh: &TransmissionMesh, threshold_deg: f64) -> Result<()> {
    let mut worst = (f64::INFINITY, 0usize);
    for t in 0..mesh.triangles.len() {
        let a = triangle_angles(mesh.tri_points(t)).into_iter().fold(f64::INFINITY, f64::min);
        if a < worst.0 {
            worst = (a, t);
        }
    }
    if worst.0.to_degrees() < threshold_deg {
        let p = mesh.tri_points(worst.1);
        return Err(Error::Mesh(format!(
            "quality threshold {threshold_deg}° not reached: triangle {} at {:?} has minimum angle {:.3}°",
            worst.1,
            p,
            worst.0.to_degrees()
        )));
    }
    Ok(())
}
