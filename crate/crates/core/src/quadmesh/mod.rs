//! Quad mesh generation from a layout: per-patch parameterization, edge
//! discretization, transfinite interpolation and quality.

pub mod discretize;
pub mod export;
pub mod partition;
pub mod quality;
pub mod smooth;
pub mod tfi;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use discretize::{build_chains, chain_nodes, discretize_edges, Chain, Discretization, SideRef};
pub use export::{from_msh, to_msh, write_msh};
pub use partition::{discrete_curl, extract_partition, lift_angles, solve_uv, PartitionParam, Submesh};
pub use quality::{element_quality, QualityReport};
pub use smooth::{winslow, Smoothing};
pub use tfi::{tfi, UvLocator};

use crate::conformal::CrossField;
use crate::geom::{closest_on_segment, polygon_area, Vec2};
use crate::layout::QuadLayout;
use crate::mesh::TriMesh;

#[derive(Debug, Error)]
pub enum QuadMeshError {
    #[error("patch {patch} overlaps no triangle")]
    EmptyPartition { patch: usize },
    #[error("triangles of patch {patch} are not connected")]
    DisconnectedPartition { patch: usize },
    #[error("patch {patch}: cross branch jumps by {jump} rad at triangle {triangle}; a singularity was missed")]
    Lifting { patch: usize, triangle: usize, jump: f64 },
    #[error("patch {patch}: UV solve failed: {msg}")]
    Solve { patch: usize, msg: String },
    #[error("patch {patch}: non-positive UV Jacobian {min:e}")]
    Jacobian { patch: usize, min: f64 },
    #[error("layout node {node} splits a side without being a corner")]
    Chain { node: usize },
    #[error("patch {patch} is not four-sided")]
    NotQuad { patch: usize },
    #[error("patch {patch}: contradictory division counts")]
    Contradiction { patch: usize },
    #[error("target size must be positive, got {0}")]
    TargetSize(f64),
    #[error("patch {patch}: UV node ({u}, {v}) lies outside the submesh image")]
    UvOutside { patch: usize, u: f64, v: f64 },
    #[error("refusing to export an empty mesh")]
    Empty,
    #[error(transparent)]
    Msh(#[from] crate::msh::MshError),
}

/// Structured grid of one patch: `ids[j * (m + 1) + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch: usize,
    pub m: usize,
    pub n: usize,
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadMesh {
    pub vertices: Vec<Vec2>,
    /// Counter-clockwise vertex ids.
    pub quads: Vec<[usize; 4]>,
    /// Layout patch each quad came from.
    pub patch: Vec<usize>,
    pub grids: Vec<PatchGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshCheck {
    pub quads: usize,
    /// No edge has more than two quads and every single-quad edge lies on the domain boundary.
    pub conforming: bool,
    pub min_area: f64,
    /// Interior vertices with a quad count other than 4: `(vertex, count)`.
    pub irregular: Vec<(usize, usize)>,
}

impl QuadMesh {
    pub fn corners(&self, q: usize) -> [Vec2; 4] {
        self.quads[q].map(|v| self.vertices[v])
    }

    pub fn valences(&self) -> Vec<usize> {
        let mut val = vec![0; self.vertices.len()];
        for q in &self.quads {
            for &v in q {
                val[v] += 1;
            }
        }
        val
    }

    /// Undirected edges with their quad counts.
    pub fn edge_use(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for q in &self.quads {
            for k in 0..4 {
                let (a, b) = (q[k], q[(k + 1) % 4]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut b = vec![false; self.vertices.len()];
        for (&(x, y), &c) in &self.edge_use() {
            if c == 1 {
                b[x] = true;
                b[y] = true;
            }
        }
        b
    }

    pub fn quality_values(&self) -> Vec<f64> {
        (0..self.quads.len()).map(|q| element_quality(self.corners(q))).collect()
    }

    pub fn quality(&self) -> QualityReport {
        QualityReport::from_values(&self.quality_values())
    }

    pub fn check(&self, domain: &TriMesh) -> MeshCheck {
        let tol = 1e-9 * domain.bbox_diagonal();
        let segs: Vec<(Vec2, Vec2)> = domain
            .boundary_loops()
            .iter()
            .flat_map(|l| {
                let n = l.vertices.len();
                (0..n).map(move |i| (l.vertices[i], l.vertices[(i + 1) % n]))
            })
            .map(|(a, b)| (domain.vertex(a), domain.vertex(b)))
            .collect();
        let on_boundary = |p: Vec2| segs.iter().any(|&(a, b)| closest_on_segment(p, a, b).0.dist(p) <= tol);
        let mut conforming = true;
        for (&(a, b), &c) in &self.edge_use() {
            if c > 2 || (c == 1 && !(on_boundary(self.vertices[a]) && on_boundary(self.vertices[b]))) {
                conforming = false;
            }
        }
        let boundary = self.boundary_vertices();
        let irregular = self
            .valences()
            .into_iter()
            .enumerate()
            .filter(|&(v, c)| !boundary[v] && c != 4 && c != 0)
            .collect();
        let min_area = (0..self.quads.len()).map(|q| polygon_area(&self.corners(q))).fold(f64::INFINITY, f64::min);
        MeshCheck { quads: self.quads.len(), conforming, min_area, irregular }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    /// Target edge length where `H = 0`.
    pub target_size: f64,
    pub smoothing: Option<Smoothing>,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self { target_size: 0.05, smoothing: None }
    }
}

/// Per-patch diagnostics of the parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSummary {
    pub patch: usize,
    pub triangles: usize,
    pub min_jacobian: f64,
    pub max_curl: f64,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct QuadMeshOutput {
    pub mesh: QuadMesh,
    pub params: Vec<PartitionParam>,
    pub summaries: Vec<PatchSummary>,
    pub discretization: Discretization,
    pub quality: QualityReport,
}

/// Node ids along a chain, start to end.
fn chain_ids(
    cross: &CrossField,
    layout: &QuadLayout,
    disc: &Discretization,
    c: usize,
    node_id: &mut HashMap<usize, usize>,
    chain_cache: &mut HashMap<usize, Vec<usize>>,
    vertices: &mut Vec<Vec2>,
) -> Vec<usize> {
    if let Some(ids) = chain_cache.get(&c) {
        return ids.clone();
    }
    let chain = &disc.chains[c];
    let mut get = |n: usize, vertices: &mut Vec<Vec2>| {
        *node_id.entry(n).or_insert_with(|| {
            vertices.push(layout.nodes[n].pos);
            vertices.len() - 1
        })
    };
    let mut ids = vec![get(chain.nodes[0], vertices)];
    for p in chain_nodes(cross, chain, disc.counts[c]) {
        vertices.push(p);
        ids.push(vertices.len() - 1);
    }
    ids.push(get(chain.nodes[1], vertices));
    chain_cache.insert(c, ids.clone());
    ids
}

/// Meshes every patch of a valid layout and welds the grids along shared edges.
pub fn mesh_layout(cross: &CrossField, layout: &QuadLayout, params: &QuadParams) -> Result<QuadMeshOutput, QuadMeshError> {
    let mesh = &cross.mesh;
    let mut uv = Vec::with_capacity(layout.patches.len());
    for p in 0..layout.patches.len() {
        let sub = extract_partition(layout, p, mesh)?;
        uv.push(solve_uv(cross, layout, &sub)?);
    }
    let disc = discretize_edges(cross, layout, params.target_size)?;
    let mut vertices: Vec<Vec2> = Vec::new();
    let mut node_id = HashMap::new();
    let mut chain_cache = HashMap::new();
    let mut quads = Vec::new();
    let mut patch_of = Vec::new();
    let mut grids = Vec::new();
    let mut summaries = Vec::new();
    for (p, param) in uv.iter().enumerate() {
        let side_ids: Vec<Vec<usize>> = disc.sides[p]
            .iter()
            .map(|s| {
                let mut ids = chain_ids(cross, layout, &disc, s.chain, &mut node_id, &mut chain_cache, &mut vertices);
                if s.reversed {
                    ids.reverse();
                }
                ids
            })
            .collect();
        let (m, n) = (side_ids[0].len() - 1, side_ids[1].len() - 1);
        let bottom = side_ids[0].clone();
        let right = side_ids[1].clone();
        let top: Vec<usize> = side_ids[2].iter().rev().copied().collect();
        let left: Vec<usize> = side_ids[3].iter().rev().copied().collect();
        let to_uv = |ids: &[usize], vertices: &[Vec2]| -> Vec<Vec2> { ids.iter().map(|&i| param.uv_at(mesh, vertices[i])).collect() };
        let interior = tfi(&to_uv(&bottom, &vertices), &to_uv(&top, &vertices), &to_uv(&left, &vertices), &to_uv(&right, &vertices));
        let locator = UvLocator::new(mesh, param);
        let mut ids = vec![usize::MAX; (m + 1) * (n + 1)];
        for j in 0..=n {
            for i in 0..=m {
                let k = j * (m + 1) + i;
                ids[k] = if j == 0 {
                    bottom[i]
                } else if j == n {
                    top[i]
                } else if i == 0 {
                    left[j]
                } else if i == m {
                    right[j]
                } else {
                    vertices.push(locator.to_physical(interior[k])?);
                    vertices.len() - 1
                };
            }
        }
        for j in 0..n {
            for i in 0..m {
                let k = j * (m + 1) + i;
                quads.push([ids[k], ids[k + 1], ids[k + m + 2], ids[k + m + 1]]);
                patch_of.push(p);
            }
        }
        grids.push(PatchGrid { patch: p, m, n, ids });
        summaries.push(PatchSummary {
            patch: p,
            triangles: param.submesh.triangles.len(),
            min_jacobian: param.min_jacobian,
            max_curl: param.max_curl,
            m,
            n,
        });
    }
    let mut qm = QuadMesh { vertices, quads, patch: patch_of, grids };
    if let Some(s) = &params.smoothing {
        winslow(&mut qm, s);
    }
    let quality = qm.quality();
    log::info!("quad mesh: {} quads, mean quality {:.4}, worst {:.4}", qm.quads.len(), quality.mean, quality.worst);
    Ok(QuadMeshOutput { mesh: qm, params: uv, summaries, discretization: disc, quality })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::testutil::square_field;
    use crate::layout::{compute_layout, synthetic, LayoutParams};
    use crate::spokes::SpokeRefinement;

    fn pipeline(n: usize, entries: &[((f64, f64), i32)], target: f64) -> (CrossField, SpokeRefinement, QuadLayout, QuadMeshOutput) {
        let (cf, r) = square_field(n, entries);
        let l = compute_layout(&cf, &r, &LayoutParams::default()).unwrap();
        let out = mesh_layout(&cf, &l.layout, &QuadParams { target_size: target, smoothing: None }).unwrap();
        (cf, r, l.layout, out)
    }

    const FOUR: [((f64, f64), i32); 4] = [((0.3, 0.3), 3), ((0.7, 0.7), 3), ((0.7, 0.3), 5), ((0.3, 0.7), 5)];

    #[test]
    fn plain_square_is_a_perfect_grid() {
        let (cf, _, l, out) = pipeline(8, &[], 0.25);
        assert_eq!(out.mesh.quads.len(), 16);
        assert!(out.mesh.quality_values().iter().all(|&q| (q - 1.0).abs() < 1e-12));
        for v in &out.mesh.vertices {
            let snapped = Vec2::new((v.x * 4.0).round() / 4.0, (v.y * 4.0).round() / 4.0);
            assert!(v.dist(snapped) < 1e-12, "{v:?}");
        }
        // U = x and V = y up to the pinned constant
        let p = &out.params[0];
        let origin = cf.mesh.vertex(p.submesh.vertices[0]);
        for (i, &v) in p.submesh.vertices.iter().enumerate() {
            let d = cf.mesh.vertex(v) - origin;
            assert!(p.uv[i].dist(d) < 1e-12);
        }
        assert_eq!(extract_partition(&l, 0, &cf.mesh).unwrap().triangles.len(), cf.mesh.num_triangles());
    }

    #[test]
    fn neighbouring_partitions_overlap_along_their_separatrix() {
        let (cf, r) = square_field(12, &[((1.0 / 3.0, 1.0 / 3.0), 3), ((2.0 / 3.0, 2.0 / 3.0), 5)]);
        let l = compute_layout(&cf, &r, &LayoutParams::default()).unwrap().layout;
        let subs: Vec<Submesh> = (0..l.patches.len()).map(|p| extract_partition(&l, p, &cf.mesh).unwrap()).collect();
        for p in 0..l.patches.len() {
            for q in l.neighbors(p) {
                let shared = subs[p].triangles.iter().filter(|t| subs[q].triangles.contains(t)).count();
                assert!(shared > 0, "patches {p} and {q}");
            }
        }
    }

    #[test]
    fn valence_eight_partitions_cover_the_domain() {
        let entries = [((0.5, 0.5), 8), ((0.5, 0.0), 1), ((1.0, 0.5), 1), ((0.5, 1.0), 1), ((0.0, 0.5), 1)];
        let (cf, r) = square_field(16, &entries);
        let l = compute_layout(&cf, &r, &LayoutParams::default()).unwrap().layout;
        let mut covered = vec![false; cf.mesh.num_triangles()];
        for p in 0..l.patches.len() {
            for t in extract_partition(&l, p, &cf.mesh).unwrap().triangles {
                covered[t] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn opposite_sides_share_counts_and_nodes_are_welded() {
        let (cf, _, l, out) = pipeline(16, &FOUR, 0.05);
        let d = &out.discretization;
        for s in &d.sides {
            assert_eq!(d.counts[s[0].chain], d.counts[s[2].chain]);
            assert_eq!(d.counts[s[1].chain], d.counts[s[3].chain]);
        }
        // welded by id: no two vertices at the same place
        let mut keys: Vec<(u64, u64)> = out.mesh.vertices.iter().map(|v| (v.x.to_bits(), v.y.to_bits())).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), out.mesh.vertices.len());
        let check = out.mesh.check(&cf.mesh);
        assert!(check.conforming);
        assert!(check.min_area > 0.0);
        assert!(out.summaries.iter().all(|s| s.min_jacobian > 0.0));
        assert_eq!(l.patches.len(), out.mesh.grids.len());
    }

    #[test]
    fn irregular_vertices_are_the_singularities() {
        let (cf, r, _, out) = pipeline(16, &FOUR, 0.05);
        let check = out.mesh.check(&cf.mesh);
        assert_eq!(check.irregular.len(), cf.pattern.len());
        for s in &cf.pattern.singularities {
            let pos = cf.mesh.vertex(s.vertex);
            let (v, count) = check.irregular.iter().copied().min_by(|a, b| out.mesh.vertices[a.0].dist(pos).total_cmp(&out.mesh.vertices[b.0].dist(pos))).unwrap();
            let radius = r.disk_of(s.vertex).map_or(0.0, |d| d.radius);
            assert!(out.mesh.vertices[v].dist(pos) <= radius + 1e-12);
            assert_eq!(count as i32, 4 - s.t);
        }
    }

    #[test]
    fn elements_are_smaller_near_valence_three() {
        let (cf, _, _, out) = pipeline(12, &[((1.0 / 3.0, 1.0 / 3.0), 3), ((2.0 / 3.0, 2.0 / 3.0), 5)], 0.05);
        let near = |p: Vec2| {
            let v = (0..out.mesh.vertices.len()).min_by(|&a, &b| out.mesh.vertices[a].dist(p).total_cmp(&out.mesh.vertices[b].dist(p))).unwrap();
            let mut total = (0.0, 0);
            for q in &out.mesh.quads {
                if let Some(k) = q.iter().position(|&x| x == v) {
                    total.0 += out.mesh.vertices[v].dist(out.mesh.vertices[q[(k + 1) % 4]]);
                    total.1 += 1;
                }
            }
            total.0 / total.1 as f64
        };
        let three = cf.pattern.singularities.iter().find(|s| s.t == 1).unwrap().vertex;
        let five = cf.pattern.singularities.iter().find(|s| s.t == -1).unwrap().vertex;
        assert!(near(cf.mesh.vertex(three)) < near(cf.mesh.vertex(five)));
    }

    #[test]
    fn uv_is_continuous_across_edges() {
        let (cf, _, _, out) = pipeline(16, &FOUR, 0.05);
        let mesh = &cf.mesh;
        for p in &out.params {
            let local = p.submesh.local_index();
            for &t in &p.submesh.triangles {
                for e in mesh.tri_edges(t) {
                    let [o0, o1] = mesh.edge_triangles(e);
                    let o = if o0 == t { o1 } else { o0 };
                    if o == usize::MAX || p.submesh.triangles.binary_search(&o).is_err() {
                        continue;
                    }
                    let m = mesh.edge_midpoint(e);
                    assert!(p.uv_in(mesh, &local, t, m).dist(p.uv_in(mesh, &local, o, m)) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn patch_around_a_singularity_fails_to_lift() {
        let (cf, _) = square_field(16, &FOUR);
        // a one-patch layout of the same square that ignores the singularities
        let (plain, r) = square_field(16, &[]);
        let l = compute_layout(&plain, &r, &LayoutParams::default()).unwrap().layout;
        let sub = Submesh { patch: 0, triangles: (0..cf.mesh.num_triangles()).collect(), vertices: (0..cf.mesh.num_vertices()).collect() };
        let err = solve_uv(&cf, &l, &sub).unwrap_err();
        assert!(matches!(err, QuadMeshError::Lifting { .. }), "{err}");
    }

    #[test]
    fn winslow_keeps_patch_boundaries() {
        let (_, _, _, out) = pipeline(16, &FOUR, 0.05);
        let mut m = out.mesh.clone();
        winslow(&mut m, &Smoothing::default());
        for g in &m.grids {
            for j in 0..=g.n {
                for i in 0..=g.m {
                    if i == 0 || j == 0 || i == g.m || j == g.n {
                        let v = g.ids[j * (g.m + 1) + i];
                        assert_eq!(m.vertices[v], out.mesh.vertices[v]);
                    }
                }
            }
        }
        assert!(m.quality().worst > 0.0);
    }

    #[test]
    fn msh_round_trip_keeps_connectivity_and_tags() {
        let (_, _, _, out) = pipeline(16, &FOUR, 0.05);
        let file = to_msh(&out.mesh).unwrap();
        let back = from_msh(&crate::msh::MshFile::parse(&file.to_text()).unwrap());
        assert_eq!(back.quads, out.mesh.quads);
        assert_eq!(back.patch, out.mesh.patch);
        assert!(file.elements.iter().all(|e| e.kind == crate::msh::ElementKind::Quad));
        let empty = QuadMesh { vertices: vec![], quads: vec![], patch: vec![], grids: vec![] };
        assert!(matches!(to_msh(&empty), Err(QuadMeshError::Empty)));
    }

    #[test]
    fn repaired_tjunction_layout_meshes() {
        // synthetic layouts have no field; mesh them with the constant one
        let c = synthetic::tjunction_fixture(false);
        let (l, _) = crate::layout::repair::fix_tjunctions(&c.mesh, c.layout().unwrap(), 32).unwrap();
        let (cf, _) = square_field(16, &[]);
        let d = discretize_edges(&cf, &l, 0.125).unwrap();
        for s in &d.sides {
            assert_eq!(d.counts[s[0].chain], d.counts[s[2].chain]);
        }
    }
}
