//! Per-patch submeshes and their conformal (U, V) parameterization.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use super::QuadMeshError;
use crate::conformal::CrossField;
use crate::fem::{p1_gradient, p1_gradients, ConstrainedSolver};
use crate::geom::{barycentric, polygon_area, Vec2};
use crate::layout::QuadLayout;
use crate::mesh::TriMesh;
use crate::sparse::Triplets;

/// Triangles of the background mesh overlapping one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submesh {
    pub patch: usize,
    /// Sorted global triangle ids.
    pub triangles: Vec<usize>,
    /// Sorted global vertex ids.
    pub vertices: Vec<usize>,
}

impl Submesh {
    pub fn local_index(&self) -> HashMap<usize, usize> {
        self.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect()
    }
}

/// Area of `poly ∩ tri` by clipping against the three (convex) triangle edges.
fn clipped_area(poly: &[Vec2], tri: [Vec2; 3]) -> f64 {
    let mut out: Vec<Vec2> = poly.to_vec();
    for k in 0..3 {
        let (a, b) = (tri[k], tri[(k + 1) % 3]);
        let side = |p: Vec2| (b - a).cross(p - a);
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let (p, q) = (input[i], input[(i + 1) % n]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                out.push(p + (q - p) * (sp / (sp - sq)));
            }
        }
        if out.len() < 3 {
            return 0.0;
        }
    }
    polygon_area(&out).abs()
}

fn triangle_adjacency(mesh: &TriMesh, tris: &[usize]) -> HashMap<usize, Vec<usize>> {
    let set: BTreeSet<usize> = tris.iter().copied().collect();
    tris.iter()
        .map(|&t| {
            let n = mesh
                .tri_edges(t)
                .iter()
                .flat_map(|&e| mesh.edge_triangles(e))
                .filter(|&o| o != t && o != usize::MAX && set.contains(&o))
                .collect();
            (t, n)
        })
        .collect()
}

/// Background triangles sharing a positive area with patch `p`, which
/// includes the band of triangles straddling its separatrices.
pub fn extract_partition(layout: &QuadLayout, p: usize, mesh: &TriMesh) -> Result<Submesh, QuadMeshError> {
    let patch = layout.patches.get(p).ok_or(QuadMeshError::EmptyPartition { patch: p })?;
    let triangles: Vec<usize> = patch
        .triangles
        .iter()
        .copied()
        .filter(|&t| clipped_area(&patch.polygon, mesh.tri_points(t)) > 1e-9 * mesh.tri_area(t))
        .collect();
    if triangles.is_empty() {
        return Err(QuadMeshError::EmptyPartition { patch: p });
    }
    let adj = triangle_adjacency(mesh, &triangles);
    let mut seen = BTreeSet::from([triangles[0]]);
    let mut queue = VecDeque::from([triangles[0]]);
    while let Some(t) = queue.pop_front() {
        for &o in &adj[&t] {
            if seen.insert(o) {
                queue.push_back(o);
            }
        }
    }
    if seen.len() != triangles.len() {
        return Err(QuadMeshError::DisconnectedPartition { patch: p });
    }
    let vertices: BTreeSet<usize> = triangles.iter().flat_map(|&t| mesh.triangle(t)).collect();
    Ok(Submesh { patch: p, triangles, vertices: vertices.into_iter().collect() })
}

/// Conformal coordinates of one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionParam {
    pub submesh: Submesh,
    /// `(U, V)` per submesh vertex, in `submesh.vertices` order.
    pub uv: Vec<Vec2>,
    /// Images of the patch corners, in layout order.
    pub corner_uv: Vec<Vec2>,
    pub uv_min: Vec2,
    pub uv_max: Vec2,
    /// Lifted cross angle per submesh triangle.
    pub angle: Vec<f64>,
    pub min_jacobian: f64,
    /// Largest circulation of `e^{-H} u` around an interior submesh vertex.
    pub max_curl: f64,
}

impl PartitionParam {
    /// `(U, V)` at a physical point inside submesh triangle `t`.
    pub fn uv_in(&self, mesh: &TriMesh, local: &HashMap<usize, usize>, t: usize, p: Vec2) -> Vec2 {
        let [a, b, c] = mesh.triangle(t);
        let [pa, pb, pc] = mesh.tri_points(t);
        let l = barycentric(p, pa, pb, pc);
        self.uv[local[&a]] * l[0] + self.uv[local[&b]] * l[1] + self.uv[local[&c]] * l[2]
    }

    /// Submesh triangle containing `p`, or the one it is least outside of.
    pub fn containing_triangle(&self, mesh: &TriMesh, p: Vec2) -> (usize, f64) {
        let mut best = (self.submesh.triangles[0], f64::NEG_INFINITY);
        for &t in &self.submesh.triangles {
            let [a, b, c] = mesh.tri_points(t);
            let m = barycentric(p, a, b, c).into_iter().fold(f64::INFINITY, f64::min);
            if m > best.1 {
                best = (t, m);
                if m >= 0.0 {
                    break;
                }
            }
        }
        best
    }

    pub fn uv_at(&self, mesh: &TriMesh, p: Vec2) -> Vec2 {
        let (t, _) = self.containing_triangle(mesh, p);
        self.uv_in(mesh, &self.submesh.local_index(), t, p)
    }
}

fn centroid_angle(cross: &CrossField, t: usize) -> f64 {
    // a Crouzeix–Raviart function takes the mean of its midpoint values at the centroid
    cross.theta.tri_values[t].iter().sum::<f64>() / 3.0
}

/// Unit tangent of side 0 at its midpoint.
fn side0_tangent(layout: &QuadLayout, p: usize) -> (Vec2, Vec2) {
    let pts = layout.side_points(&layout.patches[p].sides[0]);
    let total = crate::geom::polyline_length(&pts);
    let mut s = 0.0;
    for w in pts.windows(2) {
        let l = w[0].dist(w[1]);
        if s + l >= 0.5 * total && l > 0.0 {
            return (w[0].lerp(w[1], (0.5 * total - s) / l), (w[1] - w[0]).normalized());
        }
        s += l;
    }
    (pts[0], (pts[pts.len() - 1] - pts[0]).normalized())
}

/// Chooses one branch of the cross per triangle so the angle varies
/// continuously over the submesh, with branch 0 along side 0 of the patch.
pub fn lift_angles(cross: &CrossField, layout: &QuadLayout, sub: &Submesh) -> Result<Vec<f64>, QuadMeshError> {
    let mesh = &cross.mesh;
    let (mid, tangent) = side0_tangent(layout, sub.patch);
    let seed_idx = {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &t) in sub.triangles.iter().enumerate() {
            let [a, b, c] = mesh.tri_points(t);
            let m = barycentric(mid, a, b, c).into_iter().fold(f64::INFINITY, f64::min);
            if m > best.1 {
                best = (i, m);
            }
        }
        best.0
    };
    let pos: HashMap<usize, usize> = sub.triangles.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let adj = triangle_adjacency(mesh, &sub.triangles);
    let mut lifted = vec![f64::NAN; sub.triangles.len()];
    let a0 = centroid_angle(cross, sub.triangles[seed_idx]);
    lifted[seed_idx] = a0 + ((tangent.angle() - a0) / FRAC_PI_2).round() * FRAC_PI_2;
    let mut queue = VecDeque::from([seed_idx]);
    while let Some(i) = queue.pop_front() {
        for &o in &adj[&sub.triangles[i]] {
            let j = pos[&o];
            if lifted[j].is_nan() {
                let a = centroid_angle(cross, o);
                lifted[j] = a + ((lifted[i] - a) / FRAC_PI_2).round() * FRAC_PI_2;
                queue.push_back(j);
            }
        }
    }
    for (i, &t) in sub.triangles.iter().enumerate() {
        for &o in &adj[&t] {
            let d = (lifted[i] - lifted[pos[&o]]).abs();
            if d >= FRAC_PI_4 {
                return Err(QuadMeshError::Lifting { patch: sub.patch, triangle: t, jump: d });
            }
        }
    }
    Ok(lifted)
}

/// Target gradients `e^{-H} u` and `e^{-H} v` on triangle `t` with lifted angle `a`.
fn targets(cross: &CrossField, t: usize, a: f64) -> (Vec2, Vec2) {
    let [i, j, k] = cross.mesh.triangle(t);
    let h = &cross.h.values;
    let s = (-(h[i] + h[j] + h[k]) / 3.0).exp();
    let u = Vec2::from_angle(a) * s;
    (u, u.perp())
}

/// Discrete circulation of the piecewise constant field `g` around every
/// vertex of the submesh whose full star lies in it, away from the domain
/// boundary: the closed path through the midpoints of the incident edges.
pub fn discrete_curl(mesh: &TriMesh, sub: &Submesh, g: &[Vec2]) -> Vec<(usize, f64)> {
    let pos: HashMap<usize, usize> = sub.triangles.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut out = Vec::new();
    for &v in &sub.vertices {
        if mesh.is_boundary_vertex(v) || !mesh.vertex_triangles(v).iter().all(|t| pos.contains_key(t)) {
            continue;
        }
        let mut c = 0.0;
        for &t in mesh.vertex_triangles(v) {
            let tri = mesh.triangle(t);
            let k = tri.iter().position(|&x| x == v).unwrap();
            let (a, b) = (mesh.vertex(tri[(k + 1) % 3]), mesh.vertex(tri[(k + 2) % 3]));
            c += g[pos[&t]].dot(b - a) * 0.5;
        }
        out.push((v, c));
    }
    out
}

/// Least-squares P1 solve of `∇U = e^{-H} u`, `∇V = e^{-H} v` on the submesh,
/// with `U = V = 0` at its first vertex.
pub fn solve_uv(cross: &CrossField, layout: &QuadLayout, sub: &Submesh) -> Result<PartitionParam, QuadMeshError> {
    let mesh = &cross.mesh;
    let angle = lift_angles(cross, layout, sub)?;
    let local = sub.local_index();
    let n = sub.vertices.len();
    let mut k = Triplets::new(n);
    let (mut bu, mut bv) = (vec![0.0; n], vec![0.0; n]);
    let mut gu = Vec::with_capacity(sub.triangles.len());
    for (i, &t) in sub.triangles.iter().enumerate() {
        let (u, v) = targets(cross, t, angle[i]);
        gu.push(u);
        let g = p1_gradients(mesh, t);
        let ids = mesh.triangle(t).map(|x| local[&x]);
        let area = mesh.tri_area(t);
        for a in 0..3 {
            bu[ids[a]] += area * g[a].dot(u);
            bv[ids[a]] += area * g[a].dot(v);
            for b in 0..3 {
                k.add(ids[a], ids[b], area * g[a].dot(g[b]));
            }
        }
    }
    let mut fixed = vec![false; n];
    fixed[0] = true;
    let solver = ConstrainedSolver::new(k.to_csr(), &fixed).map_err(|e| QuadMeshError::Solve { patch: sub.patch, msg: e.to_string() })?;
    let zero = vec![0.0; n];
    let us = solver.solve(&bu, &zero).map_err(|e| QuadMeshError::Solve { patch: sub.patch, msg: e.to_string() })?;
    let vs = solver.solve(&bv, &zero).map_err(|e| QuadMeshError::Solve { patch: sub.patch, msg: e.to_string() })?;

    // the U and V gradients are computed on global vertex arrays
    let mut ug = vec![0.0; mesh.num_vertices()];
    let mut vg = vec![0.0; mesh.num_vertices()];
    for (i, &v) in sub.vertices.iter().enumerate() {
        ug[v] = us[i];
        vg[v] = vs[i];
    }
    let min_jacobian = sub
        .triangles
        .iter()
        .map(|&t| p1_gradient(mesh, t, &ug).cross(p1_gradient(mesh, t, &vg)))
        .fold(f64::INFINITY, f64::min);
    let max_curl = discrete_curl(mesh, sub, &gu).iter().map(|x| x.1.abs()).fold(0.0, f64::max);
    let uv: Vec<Vec2> = (0..n).map(|i| Vec2::new(us[i], vs[i])).collect();
    let mut param = PartitionParam {
        submesh: sub.clone(),
        uv,
        corner_uv: Vec::new(),
        uv_min: Vec2::ZERO,
        uv_max: Vec2::ZERO,
        angle,
        min_jacobian,
        max_curl,
    };
    if min_jacobian <= 0.0 {
        return Err(QuadMeshError::Jacobian { patch: sub.patch, min: min_jacobian });
    }
    param.corner_uv = layout.patches[sub.patch].corners.iter().map(|&c| param.uv_at(mesh, layout.nodes[c].pos)).collect();
    let (mut lo, mut hi) = (param.corner_uv[0], param.corner_uv[0]);
    for c in &param.corner_uv {
        lo = Vec2::new(lo.x.min(c.x), lo.y.min(c.y));
        hi = Vec2::new(hi.x.max(c.x), hi.y.max(c.y));
    }
    param.uv_min = lo;
    param.uv_max = hi;
    Ok(param)
}
