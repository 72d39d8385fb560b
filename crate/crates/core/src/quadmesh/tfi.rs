//! Transfinite interpolation in (U, V) and the map back to the plane.

use std::collections::HashMap;

use super::partition::PartitionParam;
use super::QuadMeshError;
use crate::geom::{barycentric, Vec2};
use crate::mesh::TriMesh;

/// Bucket grid over the UV images of a submesh's triangles.
pub struct UvLocator<'a> {
    mesh: &'a TriMesh,
    param: &'a PartitionParam,
    local: HashMap<usize, usize>,
    lo: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl<'a> UvLocator<'a> {
    pub fn new(mesh: &'a TriMesh, param: &'a PartitionParam) -> Self {
        let local = param.submesh.local_index();
        let uv_tri = |t: usize| mesh.triangle(t).map(|v| param.uv[local[&v]]);
        let (mut lo, mut hi) = (param.uv[0], param.uv[0]);
        for p in &param.uv {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let n = param.submesh.triangles.len();
        let side = (n as f64).sqrt().ceil().max(1.0) as usize;
        let cell = ((hi.x - lo.x).max(hi.y - lo.y) / side as f64).max(1e-300);
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, &t) in param.submesh.triangles.iter().enumerate() {
            let q = uv_tri(t);
            let (x0, x1) = (q[0].x.min(q[1].x).min(q[2].x), q[0].x.max(q[1].x).max(q[2].x));
            let (y0, y1) = (q[0].y.min(q[1].y).min(q[2].y), q[0].y.max(q[1].y).max(q[2].y));
            let cx = |x: f64| (((x - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let cy = |y: f64| (((y - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            for gy in cy(y0)..=cy(y1) {
                for gx in cx(x0)..=cx(x1) {
                    cells[gy * nx + gx].push(i);
                }
            }
        }
        Self { mesh, param, local, lo, cell, nx, ny, cells }
    }

    fn uv_tri(&self, t: usize) -> [Vec2; 3] {
        self.mesh.triangle(t).map(|v| self.param.uv[self.local[&v]])
    }

    fn best_in(&self, q: Vec2, cands: impl Iterator<Item = usize>) -> (usize, [f64; 3], f64) {
        let mut best = (usize::MAX, [0.0; 3], f64::NEG_INFINITY);
        for i in cands {
            let t = self.param.submesh.triangles[i];
            let [a, b, c] = self.uv_tri(t);
            let l = barycentric(q, a, b, c);
            let m = l[0].min(l[1]).min(l[2]);
            if m > best.2 {
                best = (t, l, m);
            }
        }
        best
    }

    /// Physical point whose image is `q`.
    pub fn to_physical(&self, q: Vec2) -> Result<Vec2, QuadMeshError> {
        let gx = ((q.x - self.lo.x) / self.cell).floor();
        let gy = ((q.y - self.lo.y) / self.cell).floor();
        let mut best = (usize::MAX, [0.0; 3], f64::NEG_INFINITY);
        if gx >= 0.0 && gy >= 0.0 && (gx as usize) < self.nx && (gy as usize) < self.ny {
            best = self.best_in(q, self.cells[gy as usize * self.nx + gx as usize].iter().copied());
        }
        if best.2 < -1e-12 {
            best = self.best_in(q, 0..self.param.submesh.triangles.len());
        }
        if best.2 < -1e-6 {
            return Err(QuadMeshError::UvOutside { patch: self.param.submesh.patch, u: q.x, v: q.y });
        }
        let [a, b, c] = self.mesh.tri_points(best.0);
        let l = best.1;
        Ok(a * l[0] + b * l[1] + c * l[2])
    }
}

/// Discrete bilinear TFI on an `(m + 1) × (n + 1)` grid from its four
/// boundary rows, all running in the direction of increasing index:
/// `bottom[i]`, `top[i]`, `left[j]`, `right[j]`.
pub fn tfi(bottom: &[Vec2], top: &[Vec2], left: &[Vec2], right: &[Vec2]) -> Vec<Vec2> {
    let (m, n) = (bottom.len() - 1, left.len() - 1);
    let (p00, p10, p01, p11) = (bottom[0], bottom[m], top[0], top[m]);
    let mut out = Vec::with_capacity((m + 1) * (n + 1));
    for j in 0..=n {
        let v = j as f64 / n as f64;
        for i in 0..=m {
            let u = i as f64 / m as f64;
            let p = bottom[i] * (1.0 - v) + top[i] * v + left[j] * (1.0 - u) + right[j] * u
                - (p00 * ((1.0 - u) * (1.0 - v)) + p10 * (u * (1.0 - v)) + p01 * ((1.0 - u) * v) + p11 * (u * v));
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tfi_reproduces_bilinear_map() {
        let f = |u: f64, v: f64| Vec2::new(2.0 * u + 0.3 * v + u * v, v - 0.1 * u);
        let (m, n) = (5, 3);
        let bottom: Vec<Vec2> = (0..=m).map(|i| f(i as f64 / m as f64, 0.0)).collect();
        let top: Vec<Vec2> = (0..=m).map(|i| f(i as f64 / m as f64, 1.0)).collect();
        let left: Vec<Vec2> = (0..=n).map(|j| f(0.0, j as f64 / n as f64)).collect();
        let right: Vec<Vec2> = (0..=n).map(|j| f(1.0, j as f64 / n as f64)).collect();
        let g = tfi(&bottom, &top, &left, &right);
        for j in 0..=n {
            for i in 0..=m {
                let e = f(i as f64 / m as f64, j as f64 / n as f64);
                assert!(g[j * (m + 1) + i].dist(e) < 1e-14);
            }
        }
    }
}
