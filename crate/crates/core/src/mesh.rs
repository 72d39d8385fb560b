//! Planar triangulations: adjacency, boundary loops, turning angles and point location.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::geom::{barycentric, closest_on_segment, orient, polygon_area, Vec2};

pub const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {tri} references missing vertex {vertex}")]
    BadVertex { tri: usize, vertex: usize },
    #[error("triangle {tri} is degenerate (area {area:e})")]
    Degenerate { tri: usize, area: f64 },
    #[error("edge ({a}, {b}) is shared by {count} triangles")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("triangles {t0} and {t1} overlap across edge ({a}, {b})")]
    Folded { t0: usize, t1: usize, a: usize, b: usize },
    #[error("vertex {vertex} is pinched (boundary fans meet at a single vertex)")]
    NonManifoldVertex { vertex: usize },
    #[error("mesh is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("expected exactly one counter-clockwise outer boundary loop, found {outer}")]
    OuterLoop { outer: usize },
    #[error("vertex {vertex} has no incident triangles")]
    IsolatedVertex { vertex: usize },
    #[error("point ({x}, {y}) lies outside the mesh (distance {distance:e})")]
    OutsideMesh { x: f64, y: f64, distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoop {
    /// Vertices in traversal order, domain on the left.
    pub vertices: Vec<usize>,
    pub outer: bool,
    /// Turning angle at each vertex of `vertices`.
    pub turning: Vec<f64>,
}

impl BoundaryLoop {
    pub fn total_turning(&self) -> f64 {
        self.turning.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLocation {
    pub triangle: usize,
    pub bary: [f64; 3],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub reoriented: usize,
}

#[derive(Debug, Clone)]
struct LocatorGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    seeds: Vec<usize>,
}

/// Immutable planar triangulation with counter-clockwise triangles.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_tris: Vec<[usize; 2]>,
    /// `tri_edges[t][k]` is the edge opposite local vertex `k`.
    tri_edges: Vec<[usize; 3]>,
    edge_index: HashMap<(usize, usize), usize>,
    vertex_tris: Vec<Vec<usize>>,
    vertex_nbrs: Vec<Vec<usize>>,
    loops: Vec<BoundaryLoop>,
    on_boundary: Vec<bool>,
    bbox: (Vec2, Vec2),
    grid: LocatorGrid,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec2>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        Self::build(vertices, triangles).map(|(m, _)| m)
    }

    /// Builds the mesh, reorienting clockwise triangles and validating topology.
    pub fn build(vertices: Vec<Vec2>, mut triangles: Vec<[usize; 3]>) -> Result<(Self, BuildReport), MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        let (lo, hi) = bbox_of(&vertices);
        let diag = lo.dist(hi);
        let area_tol = 1e-14 * diag * diag;
        let mut report = BuildReport::default();
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= nv {
                    return Err(MeshError::BadVertex { tri: t, vertex: v });
                }
            }
            let a = 0.5 * orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a.abs() < area_tol || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Degenerate { tri: t, area: a });
            }
            if a < 0.0 {
                tri.swap(1, 2);
                report.reoriented += 1;
            }
        }

        let mut edges = Vec::new();
        let mut edge_tris: Vec<[usize; 2]> = Vec::new();
        let mut edge_index = HashMap::new();
        let mut tri_edges = vec![[NONE; 3]; triangles.len()];
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                if let Some(&other) = directed.get(&(a, b)) {
                    return Err(MeshError::Folded { t0: other, t1: t, a, b });
                }
                directed.insert((a, b), t);
                let e = *edge_index.entry(key(a, b)).or_insert_with(|| {
                    edges.push([a.min(b), a.max(b)]);
                    edge_tris.push([NONE, NONE]);
                    edges.len() - 1
                });
                let slot = &mut edge_tris[e];
                if slot[0] == NONE {
                    slot[0] = t;
                } else if slot[1] == NONE {
                    slot[1] = t;
                } else {
                    let count = triangles.iter().filter(|tr| tr.contains(&a) && tr.contains(&b)).count();
                    return Err(MeshError::NonManifoldEdge { a: a.min(b), b: a.max(b), count });
                }
                tri_edges[t][k] = e;
            }
        }

        let mut vertex_tris = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_tris[v].push(t);
            }
        }
        if let Some(v) = vertex_tris.iter().position(|l| l.is_empty()) {
            return Err(MeshError::IsolatedVertex { vertex: v });
        }
        let mut vertex_nbrs = vec![Vec::new(); nv];
        for e in &edges {
            vertex_nbrs[e[0]].push(e[1]);
            vertex_nbrs[e[1]].push(e[0]);
        }

        // Connectivity over triangle adjacency.
        let mut comp = vec![NONE; triangles.len()];
        let mut ncomp = 0;
        for s in 0..triangles.len() {
            if comp[s] != NONE {
                continue;
            }
            comp[s] = ncomp;
            let mut q = VecDeque::from([s]);
            while let Some(t) = q.pop_front() {
                for &e in &tri_edges[t] {
                    for &o in &edge_tris[e] {
                        if o != NONE && comp[o] == NONE {
                            comp[o] = ncomp;
                            q.push_back(o);
                        }
                    }
                }
            }
            ncomp += 1;
        }
        if ncomp != 1 {
            return Err(MeshError::Disconnected { components: ncomp });
        }

        // Boundary half-edges oriented as in their triangle (domain on the left).
        let mut next_b: HashMap<usize, usize> = HashMap::new();
        let mut on_boundary = vec![false; nv];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = tri_edges[t][k];
                if edge_tris[e][1] == NONE {
                    let a = tri[(k + 1) % 3];
                    let b = tri[(k + 2) % 3];
                    if next_b.insert(a, b).is_some() {
                        return Err(MeshError::NonManifoldVertex { vertex: a });
                    }
                    on_boundary[a] = true;
                    on_boundary[b] = true;
                }
            }
        }
        let mut starts: Vec<usize> = next_b.keys().copied().collect();
        starts.sort_unstable();
        let mut seen = vec![false; nv];
        let mut loops = Vec::new();
        for s in starts {
            if seen[s] {
                continue;
            }
            let mut lv = Vec::new();
            let mut v = s;
            loop {
                if seen[v] {
                    if v != s {
                        return Err(MeshError::NonManifoldVertex { vertex: v });
                    }
                    break;
                }
                seen[v] = true;
                lv.push(v);
                v = match next_b.get(&v) {
                    Some(&n) => n,
                    None => return Err(MeshError::NonManifoldVertex { vertex: v }),
                };
            }
            let pts: Vec<Vec2> = lv.iter().map(|&i| vertices[i]).collect();
            let outer = polygon_area(&pts) > 0.0;
            loops.push(BoundaryLoop { vertices: lv, outer, turning: Vec::new() });
        }
        let outer = loops.iter().filter(|l| l.outer).count();
        if outer != 1 {
            return Err(MeshError::OuterLoop { outer });
        }
        loops.sort_by_key(|l| !l.outer);

        let grid = LocatorGrid { origin: lo, cell: 1.0, nx: 1, ny: 1, seeds: vec![0] };
        let mut mesh = TriMesh {
            vertices,
            triangles,
            edges,
            edge_tris,
            tri_edges,
            edge_index,
            vertex_tris,
            vertex_nbrs,
            loops,
            on_boundary,
            bbox: (lo, hi),
            grid,
        };
        let angles = mesh.turning_angle_map();
        for l in &mut mesh.loops {
            l.turning = l.vertices.iter().map(|v| angles[v]).collect();
        }
        mesh.grid = mesh.build_grid();
        Ok((mesh, report))
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Vec2 {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn tri_points(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_points(t);
        0.5 * orient(a, b, c)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&key(a, b)).copied()
    }

    /// Triangles on either side of edge `e`; the second slot is [`NONE`] on the boundary.
    pub fn edge_triangles(&self, e: usize) -> [usize; 2] {
        self.edge_tris[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tris[e][1] == NONE
    }

    pub fn tri_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_midpoint(&self, e: usize) -> Vec2 {
        let [a, b] = self.edges[e];
        (self.vertices[a] + self.vertices[b]) * 0.5
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        self.vertices[a].dist(self.vertices[b])
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_tris[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.vertex_nbrs[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_loops(&self) -> &[BoundaryLoop] {
        &self.loops
    }

    pub fn outer_loop(&self) -> &BoundaryLoop {
        &self.loops[0]
    }

    pub fn inner_loops(&self) -> &[BoundaryLoop] {
        &self.loops[1..]
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        self.bbox
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox.0.dist(self.bbox.1)
    }

    pub fn min_edge_length(&self) -> f64 {
        (0..self.edges.len()).map(|e| self.edge_length(e)).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_edge_length(&self) -> f64 {
        (0..self.edges.len()).map(|e| self.edge_length(e)).sum::<f64>() / self.edges.len() as f64
    }

    /// Mean length of the edges incident to `v`.
    pub fn local_edge_length(&self, v: usize) -> f64 {
        let n = &self.vertex_nbrs[v];
        n.iter().map(|&w| self.vertices[v].dist(self.vertices[w])).sum::<f64>() / n.len() as f64
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    /// Euler characteristic implied by the boundary: `1 − #inner loops`.
    pub fn chi_from_loops(&self) -> i64 {
        1 - (self.loops.len() as i64 - 1)
    }

    /// Interior angle of triangle `t` at its local corner `k`.
    pub fn corner_angle(&self, t: usize, k: usize) -> f64 {
        let p = self.tri_points(t);
        let a = p[k];
        let b = p[(k + 1) % 3];
        let c = p[(k + 2) % 3];
        let u = b - a;
        let w = c - a;
        u.cross(w).atan2(u.dot(w))
    }

    /// Sum of incident triangle angles at `v`.
    pub fn angle_sum(&self, v: usize) -> f64 {
        self.vertex_tris[v]
            .iter()
            .map(|&t| {
                let k = self.triangles[t].iter().position(|&x| x == v).unwrap();
                self.corner_angle(t, k)
            })
            .sum()
    }

    fn turning_angle_map(&self) -> HashMap<usize, f64> {
        let mut m = HashMap::new();
        for l in &self.loops {
            for &v in &l.vertices {
                m.insert(v, PI - self.angle_sum(v));
            }
        }
        m
    }

    /// Triangles around `v` in counter-clockwise order. For boundary vertices the
    /// fan starts at the triangle that owns the outgoing boundary edge.
    pub fn ordered_fan(&self, v: usize) -> Vec<usize> {
        let tris = &self.vertex_tris[v];
        // next triangle ccw: the one sharing the edge (v, c) where t = (v, b, c)
        let local = |t: usize| {
            let tri = self.triangles[t];
            let k = tri.iter().position(|&x| x == v).unwrap();
            (tri[(k + 1) % 3], tri[(k + 2) % 3])
        };
        let mut start = tris[0];
        if self.on_boundary[v] {
            for &t in tris {
                let (b, _) = local(t);
                let e = self.edge_between(v, b).unwrap();
                if self.is_boundary_edge(e) {
                    start = t;
                    break;
                }
            }
        }
        let mut fan = vec![start];
        let mut cur = start;
        loop {
            let (_, c) = local(cur);
            let e = self.edge_between(v, c).unwrap();
            let [t0, t1] = self.edge_tris[e];
            let next = if t0 == cur { t1 } else { t0 };
            if next == NONE || next == start {
                break;
            }
            fan.push(next);
            cur = next;
            if fan.len() > tris.len() {
                break;
            }
        }
        fan
    }

    /// Link vertices of `v` in counter-clockwise order (open chain on the boundary).
    pub fn ordered_link(&self, v: usize) -> Vec<usize> {
        let fan = self.ordered_fan(v);
        let mut out = Vec::with_capacity(fan.len() + 1);
        for (i, &t) in fan.iter().enumerate() {
            let tri = self.triangles[t];
            let k = tri.iter().position(|&x| x == v).unwrap();
            if i == 0 {
                out.push(tri[(k + 1) % 3]);
            }
            out.push(tri[(k + 2) % 3]);
        }
        if !self.on_boundary[v] {
            out.pop();
        }
        out
    }

    fn build_grid(&self) -> LocatorGrid {
        let (lo, hi) = self.bbox;
        let nt = self.triangles.len();
        let side = (nt as f64).sqrt().ceil().max(1.0) as usize;
        let w = (hi.x - lo.x).max(1e-300);
        let h = (hi.y - lo.y).max(1e-300);
        let cell = (w.max(h) / side as f64).max(1e-300);
        let nx = ((w / cell).ceil() as usize).max(1);
        let ny = ((h / cell).ceil() as usize).max(1);
        let mut seeds = vec![NONE; nx * ny];
        let mut best = vec![f64::INFINITY; nx * ny];
        for t in 0..nt {
            let [a, b, c] = self.tri_points(t);
            let g = (a + b + c) / 3.0;
            let (ix, iy) = cell_of(g, lo, cell, nx, ny);
            let centre = Vec2::new(lo.x + (ix as f64 + 0.5) * cell, lo.y + (iy as f64 + 0.5) * cell);
            let d = g.dist(centre);
            if d < best[iy * nx + ix] {
                best[iy * nx + ix] = d;
                seeds[iy * nx + ix] = t;
            }
        }
        // fill empty cells with the nearest filled seed along rows, then columns
        let mut last = 0;
        for s in seeds.iter_mut() {
            if *s == NONE {
                *s = last;
            } else {
                last = *s;
            }
        }
        LocatorGrid { origin: lo, cell, nx, ny, seeds }
    }

    pub fn location_tolerance(&self) -> f64 {
        1e-9 * self.bbox_diagonal()
    }

    /// Locates `p` by walking from a grid-seeded triangle; falls back to an
    /// exhaustive scan when the walk leaves a non-convex domain.
    pub fn locate(&self, p: Vec2) -> Result<PointLocation, MeshError> {
        let g = &self.grid;
        let (ix, iy) = cell_of(p, g.origin, g.cell, g.nx, g.ny);
        let mut t = g.seeds[iy * g.nx + ix];
        let eps = 1e-12;
        for _ in 0..(4 * self.triangles.len() + 8) {
            let [a, b, c] = self.tri_points(t);
            let l = barycentric(p, a, b, c);
            let (kmin, lmin) = l.iter().copied().enumerate().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
            if lmin >= -eps {
                return Ok(PointLocation { triangle: t, bary: clamp_bary(l) });
            }
            let e = self.tri_edges[t][kmin];
            let [t0, t1] = self.edge_tris[e];
            let next = if t0 == t { t1 } else { t0 };
            if next == NONE {
                break;
            }
            t = next;
        }
        self.locate_exhaustive(p)
    }

    /// Brute-force location over every triangle, used as an oracle and fallback.
    pub fn locate_exhaustive(&self, p: Vec2) -> Result<PointLocation, MeshError> {
        let mut best = (NONE, f64::NEG_INFINITY, [0.0; 3]);
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.tri_points(t);
            let l = barycentric(p, a, b, c);
            let m = l[0].min(l[1]).min(l[2]);
            if m > best.1 {
                best = (t, m, l);
            }
        }
        if best.1 >= -1e-12 {
            return Ok(PointLocation { triangle: best.0, bary: clamp_bary(best.2) });
        }
        // snap to the nearest boundary point if within tolerance
        let mut nearest = (f64::INFINITY, Vec2::ZERO, NONE);
        for (e, &[t0, t1]) in self.edge_tris.iter().enumerate() {
            if t1 != NONE {
                continue;
            }
            let [a, b] = self.edges[e];
            let (q, _) = closest_on_segment(p, self.vertices[a], self.vertices[b]);
            let d = q.dist(p);
            if d < nearest.0 {
                nearest = (d, q, t0);
            }
        }
        if nearest.0 <= self.location_tolerance() {
            let [a, b, c] = self.tri_points(nearest.2);
            let l = barycentric(nearest.1, a, b, c);
            return Ok(PointLocation { triangle: nearest.2, bary: clamp_bary(l) });
        }
        Err(MeshError::OutsideMesh { x: p.x, y: p.y, distance: nearest.0 })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.locate(p).is_ok()
    }

    /// Uniform 1→4 midpoint subdivision. Original vertex ids are preserved.
    pub fn refine_uniform(&self) -> TriMesh {
        let nv = self.vertices.len();
        let mut verts = self.vertices.clone();
        for e in 0..self.edges.len() {
            verts.push(self.edge_midpoint(e));
        }
        let mut tris = Vec::with_capacity(self.triangles.len() * 4);
        for (t, tri) in self.triangles.iter().enumerate() {
            let m = |k: usize| nv + self.tri_edges[t][k];
            // edge k is opposite vertex k
            let (m0, m1, m2) = (m(0), m(1), m(2));
            tris.push([tri[0], m2, m1]);
            tris.push([tri[1], m0, m2]);
            tris.push([tri[2], m1, m0]);
            tris.push([m0, m1, m2]);
        }
        TriMesh::new(verts, tris).expect("subdivision of a valid mesh is valid")
    }

    /// Nearest mesh vertex by exhaustive search.
    pub fn nearest_vertex(&self, p: Vec2) -> usize {
        (0..self.vertices.len()).min_by(|&a, &b| self.vertices[a].dist(p).total_cmp(&self.vertices[b].dist(p))).unwrap()
    }

    /// Checks the structural invariants. Used after refinement.
    pub fn validate(&self) -> Result<(), MeshError> {
        TriMesh::new(self.vertices.clone(), self.triangles.clone()).map(|_| ())
    }
}

fn clamp_bary(l: [f64; 3]) -> [f64; 3] {
    let c = [l[0].max(0.0), l[1].max(0.0), l[2].max(0.0)];
    let s = c[0] + c[1] + c[2];
    [c[0] / s, c[1] / s, c[2] / s]
}

fn cell_of(p: Vec2, origin: Vec2, cell: f64, nx: usize, ny: usize) -> (usize, usize) {
    let fx = ((p.x - origin.x) / cell).floor();
    let fy = ((p.y - origin.y) / cell).floor();
    let ix = if fx.is_finite() { fx.clamp(0.0, (nx - 1) as f64) as usize } else { 0 };
    let iy = if fy.is_finite() { fy.clamp(0.0, (ny - 1) as f64) as usize } else { 0 };
    (ix, iy)
}

fn bbox_of(v: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in v {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Per-boundary-vertex turning angles, `π − α(v)`.
pub fn turning_angles(mesh: &TriMesh) -> HashMap<usize, f64> {
    let mut m = HashMap::new();
    for l in mesh.boundary_loops() {
        for (&v, &a) in l.vertices.iter().zip(&l.turning) {
            m.insert(v, a);
        }
    }
    m
}

/// Quarter-turn count of a boundary vertex: its turning angle rounded to a
/// multiple of π/2 when it is a tagged corner, zero otherwise.
pub fn corner_quarters(turning: f64) -> i32 {
    (turning / (PI / 2.0)).round() as i32
}

/// Total turning of a loop rounded to whole turns (±1 for valid planar loops).
pub fn loop_turns(l: &BoundaryLoop) -> i64 {
    (l.total_turning() / TAU).round() as i64
}
