//! T-junction removal and splitting of doublet triangles.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, TAU};

use serde::{Deserialize, Serialize};

use super::arrangement::{build_partitions, project_on_polyline, EdgeKind, NodeKind, QuadLayout};
use super::cycles::{crossings_between, truncate, TJunctionRecord};
use super::{BoundarySegments, LaunchSite, LayoutError, Separatrix, Termination};
use crate::geom::{closest_on_segment, point_in_polygon, polyline_length, Vec2};
use crate::mesh::{corner_quarters, TriMesh};
use crate::singularity::{validate, SingularityPattern};

pub const DEFAULT_MAX_ITER: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixReport {
    pub iterations: usize,
    /// `(hanging separatrix, singular vertex it was merged into)`.
    pub merged: Vec<(usize, usize)>,
    /// Separatrices that were extended instead.
    pub extended: Vec<usize>,
    /// Separatrices removed as duplicates of a merged one.
    pub dropped: Vec<usize>,
}

fn direction_out(points: &[Vec2]) -> Vec2 {
    let p0 = points[0];
    points.iter().skip(1).find(|p| p.dist(p0) > 1e-12).map(|&p| (p - p0).normalized()).unwrap_or(Vec2::new(1.0, 0.0))
}

fn turn(a: Vec2, b: Vec2) -> f64 {
    a.cross(b).atan2(a.dot(b)).abs()
}

/// Moves the end of `points` to `target`, blending the displacement
/// linearly in arc length so the start stays fixed.
pub fn warp_end(points: &[Vec2], target: Vec2) -> Vec<Vec2> {
    let total = polyline_length(points);
    let shift = target - *points.last().unwrap();
    let mut s = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        if i > 0 {
            s += p.dist(points[i - 1]);
        }
        out.push(p + shift * (s / total));
    }
    *out.last_mut().unwrap() = target;
    out
}

/// Attempts to merge the hanging end of `a` into a singular end of its owner.
fn try_merge(
    seps: &mut Vec<Separatrix>,
    records: &[TJunctionRecord],
    sites: &[LaunchSite],
    r: &TJunctionRecord,
) -> Option<(usize, usize)> {
    let pos = |id: usize, seps: &[Separatrix]| seps.iter().position(|s| s.id == id);
    let ia = pos(r.hanging, seps)?;
    let ib = pos(r.owner, seps)?;
    let owner = &seps[ib];
    let at = project_on_polyline(&owner.points, r.location);
    let mut targets: Vec<(f64, usize)> = vec![(at, owner.origin)];
    if let Some(v) = owner.end_vertex() {
        targets.push((owner.length - at, v));
    }
    targets.sort_by(|x, y| x.0.total_cmp(&y.0));
    for &(_, q) in &targets {
        let center = sites.iter().find(|s| s.vertex == q)?.center;
        let warped = warp_end(&seps[ia].points, center);
        let mut rev = warped.clone();
        rev.reverse();
        let back = direction_out(&rev);
        // the branch at q that the merged separatrix now doubles
        let mut best: Option<(f64, usize)> = None;
        for (k, s) in seps.iter().enumerate() {
            if k == ia || k == ib {
                continue;
            }
            let dir = if s.origin == q {
                direction_out(&s.points)
            } else if s.end_vertex() == Some(q) {
                let mut p = s.points.clone();
                p.reverse();
                direction_out(&p)
            } else {
                continue;
            };
            let a = turn(back, dir);
            if a < FRAC_PI_4 && best.is_none_or(|b| a < b.0) {
                best = Some((a, k));
            }
        }
        let Some((_, kc)) = best else { continue };
        let c = &seps[kc];
        let other_end_free = if c.origin == q {
            matches!(c.termination, Termination::Boundary { .. } | Termination::Cut { .. })
        } else {
            false
        };
        let owns_junction = records.iter().any(|x| x.owner == c.id);
        if !other_end_free || owns_junction {
            continue;
        }
        let dropped = c.id;
        seps[ia].points = warped;
        seps[ia].length = polyline_length(&seps[ia].points);
        seps[ia].termination = Termination::Singularity { vertex: q };
        seps.remove(kc);
        return Some((q, dropped));
    }
    None
}

/// Continues the hanging separatrix along its original trace up to the
/// next crossing, which becomes the new junction, or to its original end.
fn extend(seps: &mut [Separatrix], r: &TJunctionRecord, eps: f64) -> Result<Option<TJunctionRecord>, LayoutError> {
    let ia = seps.iter().position(|s| s.id == r.hanging).ok_or(LayoutError::Dangling { separatrix: r.hanging })?;
    let cut_at = project_on_polyline(&r.untruncated, r.location);
    let mut full = seps[ia].clone();
    full.points = r.untruncated.clone();
    full.length = polyline_length(&full.points);
    full.termination = r.untruncated_termination;
    let mut next: Option<(f64, usize, f64, Vec2)> = None;
    for (k, s) in seps.iter().enumerate() {
        if k == ia {
            continue;
        }
        for c in crossings_between(&full, s, eps) {
            let (own, other) = if c.a == full.id { (c.sa, c.sb) } else { (c.sb, c.sa) };
            if own > cut_at + eps && next.is_none_or(|n| own < n.0) {
                next = Some((own, s.id, other, c.point));
            }
        }
    }
    match next {
        Some((own, on, other, point)) => {
            truncate(&mut full, own, point, on);
            seps[ia] = full;
            Ok(Some(TJunctionRecord {
                location: point,
                owner: on,
                hanging: r.hanging,
                owner_param: other,
                patches: None,
                untruncated: r.untruncated.clone(),
                untruncated_termination: r.untruncated_termination,
            }))
        }
        None if r.untruncated_termination == Termination::MaxSteps => Err(LayoutError::NoNeighbor { separatrix: r.hanging }),
        None => {
            seps[ia] = full;
            Ok(None)
        }
    }
}

/// Removes T-junctions one at a time, shortest hanging separatrix first,
/// rebuilding the partition after each step.
pub fn fix_tjunctions(mesh: &TriMesh, layout: QuadLayout, max_iter: usize) -> Result<(QuadLayout, FixReport), LayoutError> {
    let QuadLayout { mut separatrices, sites, tjunctions: mut records, .. } = layout;
    let eps = 1e-9 * mesh.bbox_diagonal();
    let mut report = FixReport { iterations: 0, merged: Vec::new(), extended: Vec::new(), dropped: Vec::new() };
    while !records.is_empty() {
        if report.iterations == max_iter {
            return Err(LayoutError::NotConverged { iterations: max_iter });
        }
        report.iterations += 1;
        let len = |r: &TJunctionRecord| separatrices.iter().find(|s| s.id == r.hanging).map_or(f64::INFINITY, |s| s.length);
        let i = (0..records.len()).min_by(|&x, &y| len(&records[x]).total_cmp(&len(&records[y])).then(x.cmp(&y))).unwrap();
        let r = records.remove(i);
        match try_merge(&mut separatrices, &records, &sites, &r) {
            Some((q, dropped)) => {
                report.merged.push((r.hanging, q));
                report.dropped.push(dropped);
                // junctions hanging from the dropped branch lose their owner
                records.retain(|x| x.hanging != dropped);
            }
            None => {
                report.extended.push(r.hanging);
                if let Some(nr) = extend(&mut separatrices, &r, eps)? {
                    records.push(nr);
                }
            }
        }
    }
    let out = build_partitions(mesh, &sites, &separatrices, &records)?;
    Ok((out, report))
}

/// Point at arc-length fraction `f` of a polyline.
pub fn point_at_fraction(points: &[Vec2], f: f64) -> Vec2 {
    let total = polyline_length(points);
    let target = f.clamp(0.0, 1.0) * total;
    let mut s = 0.0;
    for w in points.windows(2) {
        let l = w[0].dist(w[1]);
        if s + l >= target && l > 0.0 {
            return w[0].lerp(w[1], (target - s) / l);
        }
        s += l;
    }
    *points.last().unwrap()
}

/// Coons patch through four boundary curves `c[k]` running from corner `k`
/// to corner `k + 1` counter-clockwise.
fn coons(c: &[Vec<Vec2>; 4], u: f64, v: f64) -> Vec2 {
    let p = [c[0][0], c[1][0], c[2][0], c[3][0]];
    let bottom = point_at_fraction(&c[0], u);
    let right = point_at_fraction(&c[1], v);
    let top = point_at_fraction(&c[2], 1.0 - u);
    let left = point_at_fraction(&c[3], 1.0 - v);
    bottom * (1.0 - v) + top * v + left * (1.0 - u) + right * u
        - (p[0] * ((1.0 - u) * (1.0 - v)) + p[1] * (u * (1.0 - v)) + p[2] * (u * v) + p[3] * ((1.0 - u) * v))
}

/// Boundary termination for a point lying on the boundary.
pub fn boundary_termination(segs: &BoundarySegments, p: Vec2) -> Termination {
    let mut best = (f64::INFINITY, 0, 0);
    for &(a, b, e, l) in &segs.segs {
        let d = closest_on_segment(p, a, b).0.dist(p);
        if d < best.0 {
            best = (d, e, l);
        }
    }
    Termination::Boundary { edge: best.1, loop_index: best.2 }
}

/// Index of the side of patch `p` containing half-edge `h`, and the arc
/// fraction of `x` along that side.
fn side_fraction(layout: &QuadLayout, p: usize, h: usize, x: Vec2) -> Option<(usize, f64)> {
    let patch = &layout.patches[p];
    let k = patch.sides.iter().position(|s| s.contains(&h))?;
    let pts = layout.side_points(&patch.sides[k]);
    Some((k, project_on_polyline(&pts, x) / polyline_length(&pts)))
}

/// Half-edge of side `side` of patch `p` nearest to `x`.
fn half_edge_at(layout: &QuadLayout, side: &[usize], x: Vec2) -> usize {
    let mut best = (f64::INFINITY, side[0]);
    for &h in side {
        let pts = layout.half_edge_points(h);
        let d = pts.windows(2).map(|w| closest_on_segment(x, w[0], w[1]).0.dist(x)).fold(f64::INFINITY, f64::min);
        if d < best.0 {
            best = (d, h);
        }
    }
    best.1
}

/// Continues a chord entering patch `p` through half-edge `h` at `x`,
/// patch by patch along iso-curves, until it reaches the boundary.
fn propagate_chord(layout: &QuadLayout, segs: &BoundarySegments, mut p: usize, mut h: usize, mut x: Vec2) -> Result<(Vec<Vec2>, Termination), LayoutError> {
    let owner = layout.half_edge_patch();
    let mut out = Vec::new();
    for _ in 0..=layout.patches.len() {
        let patch = &layout.patches[p];
        if !patch.is_quad() {
            return Err(LayoutError::UnexpectedTriangle { patch: p });
        }
        let (k, f) = side_fraction(layout, p, h, x).ok_or(LayoutError::UnexpectedTriangle { patch: p })?;
        let curves: [Vec<Vec2>; 4] = std::array::from_fn(|j| layout.side_points(&patch.sides[(k + j) % 4]));
        let samples = 16;
        for j in 1..=samples {
            out.push(coons(&curves, f, j as f64 / samples as f64));
        }
        let exit = *out.last().unwrap();
        let hx = half_edge_at(layout, &patch.sides[(k + 2) % 4], exit);
        if layout.edges[hx / 2].is_boundary() {
            return Ok((out, boundary_termination(segs, exit)));
        }
        let Some(&np) = owner.get(&(hx ^ 1)) else {
            return Ok((out, boundary_termination(segs, exit)));
        };
        p = np;
        h = hx ^ 1;
        x = exit;
    }
    Err(LayoutError::NotConverged { iterations: layout.patches.len() })
}

fn polygon_centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    let (mut a, mut c) = (0.0, Vec2::ZERO);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p.cross(q);
        a += w;
        c = c + (p + q) * w;
    }
    c * (1.0 / (3.0 * a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    /// `(apex vertex, new interior point)` per split triangle.
    pub splits: Vec<(usize, Vec2)>,
}

/// Index of every site recomputed from the number of patches it is a corner of.
fn layout_indices(mesh: &TriMesh, layout: &QuadLayout) -> HashMap<usize, (i32, usize)> {
    let mut count: HashMap<usize, usize> = HashMap::new();
    for p in &layout.patches {
        for &c in &p.corners {
            *count.entry(c).or_insert(0) += 1;
        }
    }
    let turning = crate::mesh::turning_angles(mesh);
    let mut out = HashMap::new();
    for (i, n) in layout.nodes.iter().enumerate() {
        if let NodeKind::Singular { vertex, .. } = n.kind {
            let faces = count.get(&i).copied().unwrap_or(0);
            let t = if n.boundary {
                2 - corner_quarters(turning.get(&vertex).copied().unwrap_or(0.0)) - faces as i32
            } else {
                4 - faces as i32
            };
            out.insert(vertex, (t, faces));
        }
    }
    out
}

/// Splits every three-sided patch whose apex is a boundary singularity into
/// three quads around its centroid, carrying the new edges through the
/// neighbouring patches to the boundary, and updates the pattern.
pub fn split_valence2(
    mesh: &TriMesh,
    layout: QuadLayout,
    pattern: &SingularityPattern,
) -> Result<(QuadLayout, SingularityPattern, SplitReport), LayoutError> {
    let segs = BoundarySegments::new(mesh);
    let mut layout = layout;
    let mut pattern = pattern.clone();
    let mut report = SplitReport { splits: Vec::new() };
    for _ in 0..=layout.patches.len() {
        let Some(p) = layout.patches.iter().position(|p| p.sides.len() == 3) else {
            break;
        };
        let patch = layout.patches[p].clone();
        let apex = patch
            .corners
            .iter()
            .copied()
            .find(|&c| layout.nodes[c].boundary && layout.nodes[c].is_singular())
            .ok_or(LayoutError::UnexpectedTriangle { patch: p })?;
        let NodeKind::Singular { vertex: apex_vertex, .. } = layout.nodes[apex].kind else { unreachable!() };
        let mut o = polygon_centroid(&patch.polygon);
        if !point_in_polygon(o, &patch.polygon) {
            o = patch.corners.iter().map(|&c| layout.nodes[c].pos).fold(Vec2::ZERO, |a, b| a + b) * (1.0 / 3.0);
        }
        let label = mesh.nearest_vertex(o);
        let owner = layout.half_edge_patch();
        let next_id = layout.separatrices.iter().map(|s| s.id + 1).max().unwrap_or(0);
        let mut seps = layout.separatrices.clone();
        for (j, side) in patch.sides.iter().enumerate() {
            let pts = layout.side_points(side);
            let m = point_at_fraction(&pts, 0.5);
            let h = half_edge_at(&layout, side, m);
            let mut line = vec![o, o.lerp(m, 0.5), m];
            let term = if layout.edges[h / 2].is_boundary() {
                boundary_termination(&segs, m)
            } else {
                let np = *owner.get(&(h ^ 1)).ok_or(LayoutError::UnexpectedTriangle { patch: p })?;
                let (rest, term) = propagate_chord(&layout, &segs, np, h ^ 1, m)?;
                line.extend(rest);
                term
            };
            let mut s = Separatrix::new(label, line, term);
            s.id = next_id + j;
            s.branch = j;
            seps.push(s);
        }
        let mut sites = layout.sites.clone();
        let h = mesh.local_edge_length(label);
        sites.push(LaunchSite {
            vertex: label,
            center: o,
            sample_radius: 0.25 * h,
            capture_radius: 0.25 * h,
            disk_radius: h,
            valence: 3,
            boundary: false,
            launches: 3,
            wedge: (0.0, TAU),
        });
        let records = layout.tjunctions.clone();
        let mut rebuilt = build_partitions(mesh, &sites, &seps, &records)?;
        // the apex and the new point take the indices the new partition gives them
        let idx = layout_indices(mesh, &rebuilt);
        let mut entries: Vec<(usize, i32)> = pattern.singularities.iter().filter(|s| s.vertex != apex_vertex).map(|s| (s.vertex, s.t)).collect();
        for v in [apex_vertex, label] {
            if let Some(&(t, _)) = idx.get(&v) {
                entries.push((v, t));
            }
        }
        pattern = SingularityPattern::from_indices(mesh, &entries).map_err(|e| LayoutError::Pattern(e.to_string()))?;
        let check = validate(&pattern, mesh);
        if !check.ok {
            return Err(LayoutError::Pattern(format!("split leaves a quarter-turn deficit of {}", check.deficit)));
        }
        // sites carry the new patch counts so the valence contract can be checked
        for s in &mut sites {
            if let Some(&(_, faces)) = idx.get(&s.vertex) {
                if s.vertex == apex_vertex {
                    s.valence = faces as i32;
                }
            }
        }
        for n in &mut rebuilt.nodes {
            if let NodeKind::Singular { vertex, valence } = &mut n.kind {
                if *vertex == apex_vertex {
                    *valence = idx[vertex].1 as i32;
                }
            }
        }
        rebuilt.sites = sites;
        report.splits.push((apex_vertex, o));
        layout = rebuilt;
    }
    if layout.patches.iter().any(|p| p.sides.len() == 3) {
        return Err(LayoutError::NotConverged { iterations: layout.patches.len() });
    }
    Ok((layout, pattern, report))
}

/// Edge ids of separatrix edges, for callers that need the kind lookup.
pub fn separatrix_edges(layout: &QuadLayout, id: usize) -> Vec<usize> {
    (0..layout.edges.len()).filter(|&e| layout.edges[e].kind == EdgeKind::Separatrix { id }).collect()
}
