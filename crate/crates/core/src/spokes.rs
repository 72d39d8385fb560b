//! Bicycle-spoke refinement around singular vertices.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{closest_on_segment, orient, Vec2};
use crate::mesh::{MeshError, TriMesh};
use crate::singularity::SingularityPattern;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpokeError {
    #[error("singular vertices {0} and {1} are adjacent")]
    Adjacent(usize, usize),
    #[error("singular vertex {0} is not in the mesh")]
    OffMesh(usize),
    #[error("could not build a valid spoke disk around vertex {0}")]
    Degenerate(usize),
    #[error("refined mesh is invalid: {0}")]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpokeParams {
    pub rings: usize,
    pub sectors_per_quadrant: usize,
    pub radius_factor: f64,
}

impl Default for SpokeParams {
    fn default() -> Self {
        Self { rings: 3, sectors_per_quadrant: 2, radius_factor: 1.5 }
    }
}

/// One refined neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpokeDisk {
    pub vertex: usize,
    pub center: Vec2,
    /// Radius of the outermost spoke ring.
    pub radius: f64,
    pub ring_radii: Vec<f64>,
    pub sectors: usize,
    /// Ring vertex ids, innermost first, in counter-clockwise order.
    pub rings: Vec<Vec<usize>>,
    pub boundary: bool,
}

impl SpokeDisk {
    pub fn inner_radius(&self) -> f64 {
        self.ring_radii[0]
    }
}

#[derive(Debug, Clone)]
pub struct SpokeRefinement {
    /// Original vertex ids are preserved; ring vertices are appended.
    pub mesh: TriMesh,
    pub disks: Vec<SpokeDisk>,
}

impl SpokeRefinement {
    pub fn disk_of(&self, vertex: usize) -> Option<&SpokeDisk> {
        self.disks.iter().find(|d| d.vertex == vertex)
    }

    /// True when `p` lies within the outer ring of some disk.
    pub fn in_any_disk(&self, p: Vec2) -> bool {
        self.disks.iter().any(|d| d.center.dist(p) < d.radius)
    }
}

/// Distance from `s` to the link polygon of `v`, ignoring boundary edges at `v`.
fn link_distance(mesh: &TriMesh, v: usize) -> f64 {
    let s = mesh.vertex(v);
    let link = mesh.ordered_link(v);
    let n = link.len();
    let closed = !mesh.is_boundary_vertex(v);
    let segs = if closed { n } else { n - 1 };
    (0..segs)
        .map(|i| {
            let a = mesh.vertex(link[i]);
            let b = mesh.vertex(link[(i + 1) % n]);
            closest_on_segment(s, a, b).0.dist(s)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Remeshes the star of every singular vertex with concentric rings.
pub fn refine_spokes(mesh: &TriMesh, pattern: &SingularityPattern, params: &SpokeParams) -> Result<SpokeRefinement, SpokeError> {
    let sing: Vec<usize> = pattern.vertices();
    for &v in &sing {
        if v >= mesh.num_vertices() {
            return Err(SpokeError::OffMesh(v));
        }
    }
    for (i, &a) in sing.iter().enumerate() {
        for &b in &sing[i + 1..] {
            if mesh.neighbors(a).contains(&b) {
                return Err(SpokeError::Adjacent(a.min(b), a.max(b)));
            }
        }
    }
    if sing.is_empty() {
        return Ok(SpokeRefinement { mesh: mesh.clone(), disks: vec![] });
    }
    let mut vertices = mesh.vertices().to_vec();
    let mut removed = vec![false; mesh.num_triangles()];
    let mut new_tris: Vec<[usize; 3]> = Vec::new();
    let mut disks = Vec::new();
    for s in &pattern.singularities {
        let v = s.vertex;
        let c = mesh.vertex(v);
        let mut rho = link_distance(mesh, v).min(params.radius_factor * mesh.local_edge_length(v));
        for o in &pattern.singularities {
            if o.vertex != v {
                rho = rho.min(0.5 * c.dist(mesh.vertex(o.vertex)));
            }
        }
        let boundary = mesh.is_boundary_vertex(v);
        let quarters = s.valence.max(if boundary { 2 } else { 4 }) as usize;
        let sectors = (quarters * params.sectors_per_quadrant.max(1)).max(if boundary { 2 } else { 3 });
        let mut scale = 1.0;
        let (tris, disk) = loop {
            let first_new = vertices.len();
            let attempt = build_disk(mesh, v, rho * scale, params.rings.max(1), sectors, first_new);
            match attempt {
                Some((pts, tris, mut disk)) => {
                    vertices.extend(pts);
                    disk.boundary = boundary;
                    break (tris, disk);
                }
                None if scale > 0.05 => scale *= 0.7,
                None => return Err(SpokeError::Degenerate(v)),
            }
        };
        for &t in mesh.vertex_triangles(v) {
            removed[t] = true;
        }
        new_tris.extend(tris);
        disks.push(disk);
    }
    let mut triangles: Vec<[usize; 3]> =
        mesh.triangles().iter().enumerate().filter(|(t, _)| !removed[*t]).map(|(_, t)| *t).collect();
    triangles.extend(new_tris);
    let out = TriMesh::new(vertices, triangles)?;
    Ok(SpokeRefinement { mesh: out, disks })
}

/// Builds ring points and triangles for one star; `None` if some triangle
/// would not be positively oriented.
fn build_disk(
    mesh: &TriMesh,
    v: usize,
    rho: f64,
    rings: usize,
    sectors: usize,
    first_new: usize,
) -> Option<(Vec<Vec2>, Vec<[usize; 3]>, SpokeDisk)> {
    let c = mesh.vertex(v);
    let link = mesh.ordered_link(v);
    let boundary = mesh.is_boundary_vertex(v);
    let a0 = (mesh.vertex(link[0]) - c).angle();
    let span = if boundary { mesh.angle_sum(v) } else { TAU };
    let rel = |p: Vec2| ((p - c).angle() - a0).rem_euclid(TAU);
    let per_ring = if boundary { sectors + 1 } else { sectors };
    let ring_radii: Vec<f64> = (1..=rings).map(|j| rho * j as f64 / (rings + 1) as f64).collect();
    let mut pts = Vec::new();
    let mut ring_ids = Vec::new();
    let last = *link.last().unwrap();
    for &r in &ring_radii {
        let mut ids = Vec::new();
        for i in 0..per_ring {
            let p = if boundary && i == 0 {
                let d = mesh.vertex(link[0]) - c;
                c + d * (r / d.norm())
            } else if boundary && i == sectors {
                let d = mesh.vertex(last) - c;
                c + d * (r / d.norm())
            } else {
                c + Vec2::from_angle(a0 + span * i as f64 / sectors as f64) * r
            };
            ids.push(first_new + pts.len());
            pts.push(p);
        }
        ring_ids.push(ids);
    }
    let pos = |id: usize| if id >= first_new { pts[id - first_new] } else { mesh.vertex(id) };
    let mut tris = Vec::new();
    let steps = if boundary { sectors } else { per_ring };
    let inner = &ring_ids[0];
    for i in 0..steps {
        tris.push([v, inner[i], inner[(i + 1) % per_ring]]);
    }
    for j in 0..rings - 1 {
        let (a, b) = (&ring_ids[j], &ring_ids[j + 1]);
        for i in 0..steps {
            let i1 = (i + 1) % per_ring;
            tris.push([a[i], b[i], b[i1]]);
            tris.push([a[i], b[i1], a[i1]]);
        }
    }
    // zipper between the outer ring and the link polygon
    let outer = &ring_ids[rings - 1];
    let ring_angle = |i: usize| span * i as f64 / sectors as f64;
    let nl = link.len();
    let link_end = if boundary { nl - 1 } else { nl };
    let link_angle = |k: usize| {
        if k == 0 {
            0.0
        } else if k >= link_end {
            span
        } else {
            rel(mesh.vertex(link[k]))
        }
    };
    let (mut i, mut k) = (0usize, 0usize);
    while i < steps || k < link_end {
        let adv_ring = if i == steps {
            false
        } else if k == link_end {
            true
        } else {
            // angle order, unless it would fold a triangle and the other choice does not
            let ok = |t: [usize; 3]| orient(pos(t[0]), pos(t[1]), pos(t[2])) > 0.0;
            let ring_ok = ok([outer[i], link[k % nl], outer[(i + 1) % per_ring]]);
            let link_ok = ok([outer[i % per_ring], link[k % nl], link[(k + 1) % nl]]);
            match (ring_ok, link_ok) {
                (true, false) => true,
                (false, true) => false,
                _ => ring_angle(i + 1) <= link_angle(k + 1),
            }
        };
        if adv_ring {
            tris.push([outer[i], link[k % nl], outer[(i + 1) % per_ring]]);
            i += 1;
        } else {
            tris.push([outer[i % per_ring], link[k % nl], link[(k + 1) % nl]]);
            k += 1;
        }
    }
    for t in &tris {
        let area = orient(pos(t[0]), pos(t[1]), pos(t[2]));
        if area <= 1e-14 * rho * rho {
            return None;
        }
    }
    let disk = SpokeDisk { vertex: v, center: c, radius: *ring_radii.last().unwrap(), ring_radii, sectors, rings: ring_ids, boundary };
    Some((pts, tris, disk))
}
