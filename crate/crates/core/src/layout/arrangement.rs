//! Planar arrangement of separatrices and boundary arcs, and its patches.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use super::cycles::{all_crossings, TJunctionRecord};
use super::dedup::point_polyline_distance;
use super::{LaunchSite, LayoutError, Separatrix, Termination};
use crate::geom::{closest_on_segment, point_in_polygon, polygon_area, segment_intersection, Vec2};
use crate::mesh::{corner_quarters, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Singular { vertex: usize, valence: i32 },
    Corner { vertex: usize, quarters: i32 },
    Hit,
    Crossing,
    TJunction,
    /// Arbitrary split point of a boundary loop that nothing else touches.
    Anchor,
}

impl NodeKind {
    fn rank(&self) -> u8 {
        match self {
            NodeKind::Singular { .. } => 5,
            NodeKind::Corner { .. } => 4,
            NodeKind::TJunction => 3,
            NodeKind::Hit => 2,
            NodeKind::Crossing => 1,
            NodeKind::Anchor => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub pos: Vec2,
    pub kind: NodeKind,
    pub boundary: bool,
}

impl LayoutNode {
    pub fn is_singular(&self) -> bool {
        matches!(self.kind, NodeKind::Singular { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeKind {
    Separatrix { id: usize },
    Boundary { loop_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEdge {
    pub nodes: [usize; 2],
    pub points: Vec<Vec2>,
    pub kind: EdgeKind,
}

impl LayoutEdge {
    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, EdgeKind::Boundary { .. })
    }

    pub fn length(&self) -> f64 {
        crate::geom::polyline_length(&self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    /// Half-edges `2e` (along edge `e`) or `2e + 1` (against it), counter-clockwise.
    pub half_edges: Vec<usize>,
    /// Corner nodes in cyclic order.
    pub corners: Vec<usize>,
    /// Half-edges of each side between consecutive corners.
    pub sides: Vec<Vec<usize>>,
    pub polygon: Vec<Vec2>,
    /// Triangles of the mesh that intersect the patch.
    pub triangles: Vec<usize>,
}

impl Patch {
    pub fn is_quad(&self) -> bool {
        self.sides.len() == 4
    }
}

/// Conformal partition of the domain by separatrices and boundary arcs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadLayout {
    pub nodes: Vec<LayoutNode>,
    pub edges: Vec<LayoutEdge>,
    pub patches: Vec<Patch>,
    pub separatrices: Vec<Separatrix>,
    pub sites: Vec<LaunchSite>,
    pub tjunctions: Vec<TJunctionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutCheck {
    pub patches: usize,
    pub quads: usize,
    pub non_quads: Vec<usize>,
    /// Every separatrix edge borders two patches and every boundary edge one.
    pub conforming: bool,
    pub tjunctions: usize,
    /// Patches with a singular node strictly inside.
    pub singular_inside: Vec<usize>,
    /// Singular nodes whose patch-corner count differs from their valence.
    pub valence_mismatch: Vec<usize>,
    /// Triangles that belong to no patch.
    pub uncovered_triangles: usize,
}

impl LayoutCheck {
    pub fn valid(&self) -> bool {
        self.non_quads.is_empty()
            && self.conforming
            && self.tjunctions == 0
            && self.singular_inside.is_empty()
            && self.valence_mismatch.is_empty()
            && self.uncovered_triangles == 0
    }
}

fn slice_polyline(points: &[Vec2], arc: &[f64], s0: f64, s1: f64, p0: Vec2, p1: Vec2) -> Vec<Vec2> {
    let mut out = vec![p0];
    for (p, &s) in points.iter().zip(arc) {
        if s > s0 && s < s1 {
            out.push(*p);
        }
    }
    out.push(p1);
    out.dedup_by(|a, b| a.dist(*b) <= 1e-14);
    if out.len() == 1 {
        out.push(p1);
    }
    out
}

/// Arc length of the closest point of a polyline to `p`.
pub fn project_on_polyline(points: &[Vec2], p: Vec2) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let mut s = 0.0;
    for w in points.windows(2) {
        let (q, t) = closest_on_segment(p, w[0], w[1]);
        let d = q.dist(p);
        if d < best.0 {
            best = (d, s + t * w[0].dist(w[1]));
        }
        s += w[0].dist(w[1]);
    }
    best.1
}

struct NodeSet {
    nodes: Vec<LayoutNode>,
    snap: f64,
}

impl NodeSet {
    fn get(&mut self, pos: Vec2, kind: NodeKind, boundary: bool) -> usize {
        if let Some(i) = self.nodes.iter().position(|n| n.pos.dist(pos) <= self.snap) {
            let n = &mut self.nodes[i];
            if kind.rank() > n.kind.rank() {
                n.kind = kind;
                n.pos = pos;
            }
            n.boundary |= boundary;
            return i;
        }
        self.nodes.push(LayoutNode { pos, kind, boundary });
        self.nodes.len() - 1
    }
}

/// Builds the arrangement and its patches.
pub fn build_partitions(
    mesh: &TriMesh,
    sites: &[LaunchSite],
    seps: &[Separatrix],
    records: &[TJunctionRecord],
) -> Result<QuadLayout, LayoutError> {
    let diam = mesh.bbox_diagonal();
    let mut ns = NodeSet { nodes: Vec::new(), snap: 1e-9 * diam };
    let site_node: HashMap<usize, usize> = sites
        .iter()
        .map(|s| (s.vertex, ns.get(s.center, NodeKind::Singular { vertex: s.vertex, valence: s.valence }, s.boundary)))
        .collect();

    // boundary positions: (loop, param) for each boundary node
    let mut loop_pos: HashMap<usize, (usize, usize)> = HashMap::new();
    for (li, l) in mesh.boundary_loops().iter().enumerate() {
        for (i, &v) in l.vertices.iter().enumerate() {
            loop_pos.insert(v, (li, i));
        }
    }
    let mut on_loop: Vec<Vec<(f64, usize)>> = vec![Vec::new(); mesh.boundary_loops().len()];
    for s in sites.iter().filter(|s| s.boundary) {
        let (li, i) = loop_pos[&s.vertex];
        on_loop[li].push((i as f64, site_node[&s.vertex]));
    }
    for (li, l) in mesh.boundary_loops().iter().enumerate() {
        for (i, (&v, &tau)) in l.vertices.iter().zip(&l.turning).enumerate() {
            let q = corner_quarters(tau);
            if q != 0 {
                let n = ns.get(mesh.vertex(v), NodeKind::Corner { vertex: v, quarters: q }, true);
                on_loop[li].push((i as f64, n));
            }
        }
    }

    // events along each separatrix
    let mut events: Vec<Vec<(f64, usize)>> = vec![Vec::new(); seps.len()];
    let index_of: HashMap<usize, usize> = seps.iter().enumerate().map(|(k, s)| (s.id, k)).collect();
    for (k, s) in seps.iter().enumerate() {
        let start = *site_node.get(&s.origin).ok_or(LayoutError::Dangling { separatrix: s.id })?;
        events[k].push((0.0, start));
        let end = match s.termination {
            Termination::Singularity { vertex } => *site_node.get(&vertex).ok_or(LayoutError::Dangling { separatrix: s.id })?,
            Termination::Boundary { edge, loop_index } => {
                let n = ns.get(s.end(), NodeKind::Hit, true);
                let [a, b] = mesh.edge(edge);
                let l = &mesh.boundary_loops()[loop_index].vertices;
                let (_, ia) = loop_pos[&a];
                let (_, ib) = loop_pos[&b];
                let (i0, pa, pb) = if (ia + 1) % l.len() == ib { (ia, a, b) } else { (ib, b, a) };
                let (_, t) = closest_on_segment(s.end(), mesh.vertex(pa), mesh.vertex(pb));
                on_loop[loop_index].push((i0 as f64 + t, n));
                n
            }
            Termination::Cut { on } => {
                let owner = *index_of.get(&on).ok_or(LayoutError::Dangling { separatrix: s.id })?;
                let n = ns.get(s.end(), NodeKind::TJunction, false);
                let at = project_on_polyline(&seps[owner].points, s.end());
                if point_polyline_distance(s.end(), &seps[owner].points) > 1e-6 * diam {
                    return Err(LayoutError::Dangling { separatrix: s.id });
                }
                events[owner].push((at, n));
                n
            }
            Termination::MaxSteps => return Err(LayoutError::Dangling { separatrix: s.id }),
        };
        events[k].push((s.length, end));
    }
    let eps = 1e-9 * diam;
    for c in all_crossings(seps, eps) {
        let n = ns.get(c.point, NodeKind::Crossing, false);
        events[index_of[&c.a]].push((c.sa, n));
        events[index_of[&c.b]].push((c.sb, n));
    }

    let mut edges: Vec<LayoutEdge> = Vec::new();
    for (k, s) in seps.iter().enumerate() {
        let ev = &mut events[k];
        ev.sort_by(|a, b| a.0.total_cmp(&b.0));
        // a separatrix merged back into its own site keeps both ends and becomes a loop
        ev.dedup_by(|a, b| a.1 == b.1 && (a.0 - b.0).abs() <= eps);
        let arc = s.arc_lengths();
        for w in ev.windows(2) {
            let ((s0, n0), (s1, n1)) = (w[0], w[1]);
            if n0 == n1 && s1 - s0 <= eps {
                continue;
            }
            let pts = slice_polyline(&s.points, &arc, s0, s1, ns.nodes[n0].pos, ns.nodes[n1].pos);
            edges.push(LayoutEdge { nodes: [n0, n1], points: pts, kind: EdgeKind::Separatrix { id: s.id } });
        }
    }

    for (li, l) in mesh.boundary_loops().iter().enumerate() {
        let verts = &l.vertices;
        let n = verts.len();
        let list = &mut on_loop[li];
        if list.is_empty() {
            let a = ns.get(mesh.vertex(verts[0]), NodeKind::Anchor, true);
            list.push((0.0, a));
        }
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        list.dedup_by(|a, b| a.1 == b.1);
        let m = list.len();
        for i in 0..m {
            let (p0, n0) = list[i];
            let (mut p1, n1) = list[(i + 1) % m];
            if p1 <= p0 {
                p1 += n as f64;
            }
            let mut pts = vec![ns.nodes[n0].pos];
            let mut j = p0.floor() as usize + 1;
            while (j as f64) < p1 {
                pts.push(mesh.vertex(verts[j % n]));
                j += 1;
            }
            pts.push(ns.nodes[n1].pos);
            pts.dedup_by(|a, b| a.dist(*b) <= 1e-14);
            edges.push(LayoutEdge { nodes: [n0, n1], points: pts, kind: EdgeKind::Boundary { loop_index: li } });
        }
    }

    let nodes = ns.nodes;
    let patches = trace_faces(&nodes, &edges)?;
    let mut layout = QuadLayout {
        nodes,
        edges,
        patches,
        separatrices: seps.to_vec(),
        sites: sites.to_vec(),
        tjunctions: records.to_vec(),
    };
    for p in 0..layout.patches.len() {
        let tris = overlap_triangles(mesh, &layout.patches[p].polygon);
        layout.patches[p].triangles = tris;
    }
    attach_tjunction_patches(&mut layout);
    Ok(layout)
}

impl QuadLayout {
    pub fn half_edge_points(&self, h: usize) -> Vec<Vec2> {
        let mut p = self.edges[h / 2].points.clone();
        if h % 2 == 1 {
            p.reverse();
        }
        p
    }

    pub fn half_edge_from(&self, h: usize) -> usize {
        self.edges[h / 2].nodes[h % 2]
    }

    pub fn half_edge_to(&self, h: usize) -> usize {
        self.edges[h / 2].nodes[1 - h % 2]
    }

    /// Patch on the left of each half-edge.
    pub fn half_edge_patch(&self) -> HashMap<usize, usize> {
        let mut m = HashMap::new();
        for (p, patch) in self.patches.iter().enumerate() {
            for &h in &patch.half_edges {
                m.insert(h, p);
            }
        }
        m
    }

    /// Points of a side, in the patch's orientation.
    pub fn side_points(&self, side: &[usize]) -> Vec<Vec2> {
        let mut out: Vec<Vec2> = Vec::new();
        for &h in side {
            let pts = self.half_edge_points(h);
            let skip = usize::from(!out.is_empty());
            out.extend_from_slice(&pts[skip..]);
        }
        out
    }

    pub fn check(&self, mesh: &TriMesh) -> LayoutCheck {
        let owner = self.half_edge_patch();
        let mut conforming = true;
        for (e, edge) in self.edges.iter().enumerate() {
            let (f, b) = (owner.contains_key(&(2 * e)), owner.contains_key(&(2 * e + 1)));
            let ok = if edge.is_boundary() { f && !b } else { f && b };
            conforming &= ok;
        }
        let non_quads: Vec<usize> = (0..self.patches.len()).filter(|&p| !self.patches[p].is_quad()).collect();
        let tjunctions = self.tjunctions.len().max(self.nodes.iter().filter(|n| n.kind == NodeKind::TJunction).count());
        let mut singular_inside = Vec::new();
        for (p, patch) in self.patches.iter().enumerate() {
            let on_rim: Vec<usize> = patch.half_edges.iter().map(|&h| self.half_edge_from(h)).collect();
            let inside = self
                .nodes
                .iter()
                .enumerate()
                .any(|(i, n)| n.is_singular() && !on_rim.contains(&i) && point_in_polygon(n.pos, &patch.polygon));
            if inside {
                singular_inside.push(p);
            }
        }
        let mut corner_count: HashMap<usize, usize> = HashMap::new();
        for patch in &self.patches {
            for &c in &patch.corners {
                *corner_count.entry(c).or_insert(0) += 1;
            }
        }
        let valence_mismatch = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| match n.kind {
                NodeKind::Singular { valence, .. } => corner_count.get(i).copied().unwrap_or(0) != valence.max(0) as usize,
                _ => false,
            })
            .map(|(i, _)| i)
            .collect();
        let mut covered = vec![false; mesh.num_triangles()];
        for p in &self.patches {
            for &t in &p.triangles {
                covered[t] = true;
            }
        }
        LayoutCheck {
            patches: self.patches.len(),
            quads: self.patches.iter().filter(|p| p.is_quad()).count(),
            non_quads,
            conforming,
            tjunctions,
            singular_inside,
            valence_mismatch,
            uncovered_triangles: covered.iter().filter(|c| !**c).count(),
        }
    }

    /// Patches sharing a layout edge with patch `p`.
    pub fn neighbors(&self, p: usize) -> Vec<usize> {
        let owner = self.half_edge_patch();
        let mut out: Vec<usize> = self.patches[p].half_edges.iter().filter_map(|&h| owner.get(&(h ^ 1)).copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LayoutDump::from(self)).expect("layout serializes")
    }
}

/// Compact description of a layout for front ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutDump {
    pub corners: Vec<DumpNode>,
    pub edges: Vec<DumpEdge>,
    pub patches: Vec<DumpPatch>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpNode {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpEdge {
    pub id: usize,
    pub nodes: [usize; 2],
    pub boundary: bool,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpPatch {
    pub id: usize,
    pub corners: Vec<usize>,
    pub sides: Vec<Vec<usize>>,
    pub neighbors: Vec<usize>,
}

impl From<&QuadLayout> for LayoutDump {
    fn from(l: &QuadLayout) -> Self {
        LayoutDump {
            corners: l.nodes.iter().enumerate().map(|(id, n)| DumpNode { id, x: n.pos.x, y: n.pos.y, kind: n.kind }).collect(),
            edges: l
                .edges
                .iter()
                .enumerate()
                .map(|(id, e)| DumpEdge { id, nodes: e.nodes, boundary: e.is_boundary(), points: e.points.iter().map(|p| [p.x, p.y]).collect() })
                .collect(),
            patches: (0..l.patches.len())
                .map(|id| DumpPatch {
                    id,
                    corners: l.patches[id].corners.clone(),
                    sides: l.patches[id].sides.iter().map(|s| s.iter().map(|h| h / 2).collect()).collect(),
                    neighbors: l.neighbors(id),
                })
                .collect(),
        }
    }
}

/// Direction leaving the tail of a polyline.
fn leaving(points: &[Vec2]) -> Vec2 {
    let p0 = points[0];
    let scale = points.iter().map(|p| p.dist(p0)).fold(0.0, f64::max);
    points.iter().skip(1).find(|p| p.dist(p0) > 1e-9 * scale).map(|&p| p - p0).unwrap_or(Vec2::new(1.0, 0.0))
}

fn trace_faces(nodes: &[LayoutNode], edges: &[LayoutEdge]) -> Result<Vec<Patch>, LayoutError> {
    let nh = 2 * edges.len();
    let from = |h: usize| edges[h / 2].nodes[h % 2];
    let to = |h: usize| edges[h / 2].nodes[1 - h % 2];
    let pts = |h: usize| {
        let mut p = edges[h / 2].points.clone();
        if h % 2 == 1 {
            p.reverse();
        }
        p
    };
    let dir: Vec<Vec2> = (0..nh).map(|h| leaving(&pts(h))).collect();
    let mut out_of: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for h in 0..nh {
        out_of[from(h)].push(h);
    }
    for list in &mut out_of {
        list.sort_by(|&a, &b| dir[a].angle().total_cmp(&dir[b].angle()));
    }
    let next = |h: usize| {
        let v = to(h);
        let list = &out_of[v];
        let i = list.iter().position(|&x| x == h ^ 1).unwrap();
        list[(i + list.len() - 1) % list.len()]
    };
    let exterior = |h: usize| edges[h / 2].is_boundary() && h % 2 == 1;
    let mut seen = vec![false; nh];
    let mut patches = Vec::new();
    for h0 in 0..nh {
        if seen[h0] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut h = h0;
        loop {
            seen[h] = true;
            cycle.push(h);
            h = next(h);
            if h == h0 || cycle.len() > nh {
                break;
            }
        }
        if cycle.iter().any(|&h| exterior(h)) {
            continue;
        }
        let mut polygon: Vec<Vec2> = Vec::new();
        for &h in &cycle {
            let p = pts(h);
            polygon.extend_from_slice(&p[..p.len() - 1]);
        }
        if polygon_area(&polygon) <= 0.0 {
            return Err(LayoutError::NotSimplyConnected);
        }
        let m = cycle.len();
        let is_corner: Vec<bool> = (0..m)
            .map(|i| {
                let h = cycle[i];
                let prev = cycle[(i + m - 1) % m];
                let v = from(h);
                // two curves crossing transversally make four corners whatever the angle
                if nodes[v].is_singular() || (nodes[v].kind == NodeKind::Crossing && !nodes[v].boundary) {
                    return true;
                }
                let (a, b) = (dir[h], dir[prev ^ 1]);
                let mut ang = b.angle() - a.angle();
                while ang <= 0.0 {
                    ang += TAU;
                }
                while ang > TAU {
                    ang -= TAU;
                }
                (ang / FRAC_PI_2).round() as i64 == 1
            })
            .collect();
        let corner_idx: Vec<usize> = (0..m).filter(|&i| is_corner[i]).collect();
        let mut sides = Vec::new();
        for (c, &i) in corner_idx.iter().enumerate() {
            let j = corner_idx[(c + 1) % corner_idx.len()];
            let mut side = Vec::new();
            let mut k = i;
            loop {
                side.push(cycle[k]);
                k = (k + 1) % m;
                if k == j {
                    break;
                }
            }
            sides.push(side);
        }
        let corners = corner_idx.iter().map(|&i| from(cycle[i])).collect();
        patches.push(Patch { half_edges: cycle, corners, sides, polygon, triangles: Vec::new() });
    }
    Ok(patches)
}

/// Triangles of `mesh` whose closure meets the polygon.
pub fn overlap_triangles(mesh: &TriMesh, polygon: &[Vec2]) -> Vec<usize> {
    let (mut lo, mut hi) = (polygon[0], polygon[0]);
    for p in polygon {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let n = polygon.len();
    let mut out = Vec::new();
    for t in 0..mesh.num_triangles() {
        let tri = mesh.tri_points(t);
        let (tlo, thi) = (
            Vec2::new(tri[0].x.min(tri[1].x).min(tri[2].x), tri[0].y.min(tri[1].y).min(tri[2].y)),
            Vec2::new(tri[0].x.max(tri[1].x).max(tri[2].x), tri[0].y.max(tri[1].y).max(tri[2].y)),
        );
        if tlo.x > hi.x || tlo.y > hi.y || thi.x < lo.x || thi.y < lo.y {
            continue;
        }
        let centroid = (tri[0] + tri[1] + tri[2]) * (1.0 / 3.0);
        let mut hit = point_in_polygon(centroid, polygon);
        if !hit {
            hit = polygon.iter().any(|&p| {
                let l = crate::geom::barycentric(p, tri[0], tri[1], tri[2]);
                l.iter().all(|&x| x > 1e-12)
            });
        }
        if !hit {
            'outer: for i in 0..n {
                let (a, b) = (polygon[i], polygon[(i + 1) % n]);
                for k in 0..3 {
                    if segment_intersection(a, b, tri[k], tri[(k + 1) % 3]).is_some() {
                        hit = true;
                        break 'outer;
                    }
                }
            }
        }
        if hit {
            out.push(t);
        }
    }
    out
}

fn attach_tjunction_patches(layout: &mut QuadLayout) {
    let owner = layout.half_edge_patch();
    let mut found = Vec::new();
    for r in &layout.tjunctions {
        let node = layout.nodes.iter().position(|n| n.pos.dist(r.location) <= 1e-9 && n.kind == NodeKind::TJunction);
        let edge = node.and_then(|v| {
            layout.edges.iter().position(|e| e.kind == EdgeKind::Separatrix { id: r.hanging } && e.nodes[1] == v)
        });
        found.push(edge.and_then(|e| Some([*owner.get(&(2 * e))?, *owner.get(&(2 * e + 1))?])));
    }
    for (r, f) in layout.tjunctions.iter_mut().zip(found) {
        r.patches = f;
    }
}
