//! Separatrix launch and Heun integration.

use std::f64::consts::{FRAC_PI_2, TAU};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{LayoutError, Separatrix, Termination};
use crate::conformal::CrossField;
use crate::geom::{closest_on_segment, segment_intersection, wrap_pi, Vec2};
use crate::mesh::TriMesh;
use crate::spokes::SpokeRefinement;

/// Largest admissible turn between consecutive directions.
const AMBIGUITY: f64 = 0.25 * std::f64::consts::PI - 1e-9;

/// Anything that yields a cross angle and a local length scale at a point.
pub trait DirectionField {
    /// `(cross angle, local edge length)`, or `None` outside the domain.
    fn sample(&self, p: Vec2) -> Option<(f64, f64)>;
}

impl DirectionField for CrossField {
    fn sample(&self, p: Vec2) -> Option<(f64, f64)> {
        let loc = self.mesh.locate(p).ok()?;
        let [a, b, c] = self.mesh.tri_points(loc.triangle);
        let h = (a.dist(b) + b.dist(c) + c.dist(a)) / 3.0;
        Some((self.theta.value(&loc), h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub step_factor: f64,
    /// Maximum angle between a Heun step and the field at its midpoint.
    pub max_step_angle_deg: f64,
    /// `None` uses `50 × diameter / min edge`.
    pub max_steps: Option<usize>,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self { step_factor: 0.4, max_step_angle_deg: 5.0, max_steps: None }
    }
}

/// Branch of the cross at angle `theta` nearest to `dir`.
pub fn nearest_branch(theta: f64, dir: Vec2) -> Vec2 {
    let k = ((dir.angle() - theta) / FRAC_PI_2).round();
    Vec2::from_angle(theta + k * FRAC_PI_2)
}

/// A point separatrices start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchSite {
    pub vertex: usize,
    pub center: Vec2,
    /// Radius of the sampling circle (innermost spoke ring).
    pub sample_radius: f64,
    /// Capture radius for separatrices arriving here.
    pub capture_radius: f64,
    /// Outer spoke radius.
    pub disk_radius: f64,
    pub valence: i32,
    pub boundary: bool,
    /// Expected number of launches.
    pub launches: usize,
    /// Angular wedge `(start, span)` of the domain around the vertex.
    pub wedge: (f64, f64),
}

/// Launch sites for the singular vertices of a spoke-refined mesh.
pub fn launch_sites(cross: &CrossField, spokes: &SpokeRefinement) -> Vec<LaunchSite> {
    let m = &cross.mesh;
    let mut out = Vec::new();
    for s in &cross.pattern.singularities {
        let c = m.vertex(s.vertex);
        let (sample_radius, disk_radius) = match spokes.disk_of(s.vertex) {
            Some(d) => (d.inner_radius(), d.radius),
            None => {
                let h = m.local_edge_length(s.vertex);
                (0.25 * h, h)
            }
        };
        let wedge = if s.boundary {
            let link = m.ordered_link(s.vertex);
            ((m.vertex(link[0]) - c).angle(), m.angle_sum(s.vertex))
        } else {
            (0.0, TAU)
        };
        let launches = if s.boundary { (s.valence - 1).max(0) as usize } else { s.valence.max(0) as usize };
        out.push(LaunchSite {
            vertex: s.vertex,
            center: c,
            sample_radius,
            capture_radius: sample_radius,
            disk_radius,
            valence: s.valence,
            boundary: s.boundary,
            launches,
            wedge,
        });
    }
    out
}

/// Directions `φ` on the sampling circle where a cross branch points radially,
/// i.e. roots of `4(θ(φ) − φ) ≡ 0 (mod 2π)`.
pub fn launch_directions<F: DirectionField>(field: &F, site: &LaunchSite) -> Result<Vec<f64>, LayoutError> {
    let (a0, span) = site.wedge;
    let interior = (span - TAU).abs() < 1e-12;
    let samples = (64 * site.launches.max(4)).max(256);
    let phi_at = |j: usize| a0 + span * j as f64 / samples as f64;
    let g = |phi: f64| -> Option<f64> {
        let p = site.center + Vec2::from_angle(phi) * site.sample_radius;
        field.sample(p).map(|(th, _)| 4.0 * (th - phi))
    };
    // unwrapped g along the circle or wedge
    let mut vals = Vec::new();
    for j in 0..=samples {
        let phi = phi_at(j);
        let v = g(phi).ok_or(LayoutError::LaunchOutside { vertex: site.vertex })?;
        match vals.last() {
            None => vals.push((phi, v)),
            Some(&(_, prev)) => vals.push((phi, prev + wrap_pi(v - prev))),
        }
    }
    // crossings of multiples of 2π; θ is piecewise linear with small jumps
    // across triangle edges, so back-and-forth crossings at one level cancel
    let mut crossings: Vec<(f64, f64, i64, bool)> = Vec::new();
    for w in vals.windows(2) {
        let ((p0, g0), (p1, g1)) = (w[0], w[1]);
        let (k0, k1) = ((g0 / TAU).floor() as i64, (g1 / TAU).floor() as i64);
        if k0 == k1 {
            continue;
        }
        let down = k1 < k0;
        let level = k0.max(k1);
        match crossings.last() {
            Some(&(_, _, l, d)) if l == level && d != down => {
                crossings.pop();
            }
            _ => crossings.push((p0, p1, level, down)),
        }
    }
    if !interior {
        // the wedge ends are the tangential directions; keep strictly interior levels
        let l0 = (vals[0].1 / TAU).round() as i64;
        let l1 = (vals[samples].1 / TAU).round() as i64;
        let (lo, hi) = (l0.min(l1), l0.max(l1));
        crossings.retain(|c| c.2 > lo && c.2 < hi);
    }
    let mut roots = Vec::new();
    for &(p0, p1, level, down) in &crossings {
        let target = TAU * level as f64;
        let g0 = vals.iter().find(|x| x.0 == p0).unwrap().1;
        let (mut a, mut b) = (p0, p1);
        for _ in 0..40 {
            let mid = 0.5 * (a + b);
            let gm = match g(mid) {
                Some(v) => g0 + wrap_pi(v - g0) - target,
                None => break,
            };
            if (gm >= 0.0) == down {
                a = mid;
            } else {
                b = mid;
            }
        }
        roots.push(0.5 * (a + b));
    }
    if roots.len() != site.launches {
        return Err(LayoutError::LaunchCount { vertex: site.vertex, expected: site.launches, found: roots.len() });
    }
    Ok(roots)
}

/// Boundary polyline segments with their mesh edge ids.
#[derive(Debug, Clone)]
pub struct BoundarySegments {
    pub segs: Vec<(Vec2, Vec2, usize, usize)>,
}

impl BoundarySegments {
    pub fn new(mesh: &TriMesh) -> Self {
        let mut segs = Vec::new();
        for (li, l) in mesh.boundary_loops().iter().enumerate() {
            let n = l.vertices.len();
            for i in 0..n {
                let (a, b) = (l.vertices[i], l.vertices[(i + 1) % n]);
                segs.push((mesh.vertex(a), mesh.vertex(b), mesh.edge_between(a, b).unwrap(), li));
            }
        }
        Self { segs }
    }

    /// First crossing of `p0 → p1` with the boundary, ignoring hits within
    /// `skip` of `p0`: `(parameter, point, edge, loop)`.
    pub fn first_hit(&self, p0: Vec2, p1: Vec2, skip: f64) -> Option<(f64, Vec2, usize, usize)> {
        let len = p0.dist(p1);
        let mut best: Option<(f64, Vec2, usize, usize)> = None;
        for &(a, b, e, l) in &self.segs {
            if let Some((s, _)) = segment_intersection(p0, p1, a, b) {
                if s * len <= skip {
                    continue;
                }
                if best.is_none_or(|x| s < x.0) {
                    best = Some((s, p0.lerp(p1, s), e, l));
                }
            }
        }
        best
    }
}

pub struct Tracer<'a, F: DirectionField> {
    pub field: &'a F,
    pub boundary: BoundarySegments,
    pub sites: Vec<LaunchSite>,
    pub params: TraceParams,
    pub max_steps: usize,
}

impl<'a, F: DirectionField> Tracer<'a, F> {
    pub fn new(field: &'a F, mesh: &TriMesh, sites: Vec<LaunchSite>, params: TraceParams) -> Self {
        let diam = mesh.bbox_diagonal();
        let max_steps = params.max_steps.unwrap_or_else(|| (50.0 * diam / mesh.min_edge_length()).ceil() as usize);
        Self { field, boundary: BoundarySegments::new(mesh), sites, params, max_steps }
    }

    /// Traces every launch of every site.
    pub fn trace_all(&self) -> Result<Vec<Separatrix>, LayoutError> {
        let mut out = Vec::new();
        for (si, site) in self.sites.iter().enumerate() {
            let dirs = launch_directions(self.field, site)?;
            for (b, &phi) in dirs.iter().enumerate() {
                let mut s = self.trace(si, Vec2::from_angle(phi))?;
                s.branch = b;
                s.id = out.len();
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Integrates from site `si` along `dir`.
    pub fn trace(&self, si: usize, dir: Vec2) -> Result<Separatrix, LayoutError> {
        let site = &self.sites[si];
        let start = site.center + dir * site.sample_radius;
        let mut pts = vec![site.center, start];
        let mut d = dir;
        let mut p = start;
        let mut travelled = site.sample_radius;
        let max_angle = self.params.max_step_angle_deg.to_radians();
        for _ in 0..self.max_steps {
            let (th, hloc) = match self.field.sample(p) {
                Some(v) => v,
                None => return Err(LayoutError::LeftDomain { x: p.x, y: p.y }),
            };
            let mut h = self.params.step_factor * hloc;
            let min_h = h / 64.0;
            let (next, nd) = loop {
                let k1 = nearest_branch(th, d);
                if k1.cross(d).atan2(k1.dot(d)).abs() > AMBIGUITY {
                    return Err(LayoutError::AmbiguousBranch { x: p.x, y: p.y });
                }
                let p1 = p + k1 * h;
                let k2 = self.field.sample(p1).map(|(t2, _)| nearest_branch(t2, k1)).unwrap_or(k1);
                let step = (k1 + k2).normalized();
                let cand = p + step * h;
                let mid = p + step * (0.5 * h);
                let ok = match self.field.sample(mid) {
                    Some((tm, _)) => {
                        let b = nearest_branch(tm, step);
                        b.cross(step).atan2(b.dot(step)).abs() < max_angle
                    }
                    None => true,
                };
                if ok || h <= min_h {
                    if !ok {
                        warn!("trace step at ({:.4}, {:.4}) exceeds angle tolerance at minimum step", p.x, p.y);
                    }
                    break (cand, step);
                }
                h *= 0.5;
            };
            // boundary crossing
            let skip = if pts.len() == 2 && site.wedge.1 < TAU { 1e-12 } else { 0.0 };
            let hit = self.boundary.first_hit(p, next, skip);
            // capture by a singular site
            let seg_end = hit.map(|x| x.1).unwrap_or(next);
            let mut capture: Option<(f64, usize)> = None;
            for (sj, other) in self.sites.iter().enumerate() {
                if sj == si && travelled < 2.0 * other.capture_radius {
                    continue;
                }
                let (q, _) = closest_on_segment(other.center, p, seg_end);
                let dist = q.dist(other.center);
                if dist < other.capture_radius && capture.is_none_or(|c| dist < c.0) {
                    capture = Some((dist, sj));
                }
            }
            if let Some((_, sj)) = capture {
                let other = &self.sites[sj];
                pts.push(other.center);
                return Ok(Separatrix::new(site.vertex, pts, Termination::Singularity { vertex: other.vertex }));
            }
            if let Some((_, q, e, l)) = hit {
                pts.push(q);
                return Ok(Separatrix::new(site.vertex, pts, Termination::Boundary { edge: e, loop_index: l }));
            }
            travelled += p.dist(next);
            pts.push(next);
            p = next;
            d = nd;
        }
        Ok(Separatrix::new(site.vertex, pts, Termination::MaxSteps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::layout::testutil::{field, trace};

    #[test]
    fn square_has_no_separatrices() {
        let m = fixtures::unit_square(8);
        let (cf, r) = field(&m, &[]);
        assert!(trace(&cf, &r).is_empty());
    }

    #[test]
    fn valence_eight_star() {
        let m = fixtures::unit_square(16);
        let c = m.nearest_vertex(Vec2::new(0.5, 0.5));
        let mut e = vec![(c, 8)];
        for (x, y) in [(0.5, 0.0), (1.0, 0.5), (0.5, 1.0), (0.0, 0.5)] {
            e.push((m.nearest_vertex(Vec2::new(x, y)), 1));
        }
        let (cf, r) = field(&m, &e);
        let s = trace(&cf, &r);
        assert_eq!(s.len(), 8);
        for x in &s {
            assert!(matches!(x.termination, Termination::Boundary { .. }), "{:?}", x.termination);
        }
        // the star's branches are 45° apart
        let mut ang: Vec<f64> = s.iter().map(|x| (x.points[1] - x.points[0]).angle()).collect();
        ang.sort_by(f64::total_cmp);
        for w in ang.windows(2) {
            assert!((w[1] - w[0] - std::f64::consts::FRAC_PI_4).abs() < 0.05, "{ang:?}");
        }
    }

    #[test]
    fn three_five_launches() {
        let m = fixtures::unit_square(12);
        let a = m.nearest_vertex(Vec2::new(1.0 / 3.0, 1.0 / 3.0));
        let b = m.nearest_vertex(Vec2::new(2.0 / 3.0, 2.0 / 3.0));
        let (cf, r) = field(&m, &[(a, 3), (b, 5)]);
        let s = trace(&cf, &r);
        assert_eq!(s.iter().filter(|x| x.origin == a).count(), 3);
        assert_eq!(s.iter().filter(|x| x.origin == b).count(), 5);
        // the connecting separatrix is traced from both ends
        let ab = s.iter().filter(|x| x.origin == a && x.end_vertex() == Some(b)).count();
        let ba = s.iter().filter(|x| x.origin == b && x.end_vertex() == Some(a)).count();
        assert_eq!((ab, ba), (1, 1));
        for x in &s {
            assert!(x.termination != Termination::MaxSteps);
        }
    }

    #[test]
    fn steps_follow_the_field() {
        let m = fixtures::unit_square(12);
        let a = m.nearest_vertex(Vec2::new(1.0 / 3.0, 0.5));
        let b = m.nearest_vertex(Vec2::new(2.0 / 3.0, 0.5));
        let (cf, r) = field(&m, &[(a, 3), (b, 5)]);
        for x in trace(&cf, &r) {
            let n = x.points.len();
            // skip the launch segment and the final clipped segment
            for w in x.points[1..n - 1].windows(2) {
                let mid = w[0].lerp(w[1], 0.5);
                if r.in_any_disk(mid) {
                    continue;
                }
                let d = (w[1] - w[0]).normalized();
                let (th, _) = cf.sample(mid).unwrap();
                let b = nearest_branch(th, d);
                assert!(b.cross(d).atan2(b.dot(d)).abs() < 5f64.to_radians());
            }
        }
    }

    #[test]
    fn tracing_is_deterministic() {
        let m = fixtures::unit_square(12);
        let a = m.nearest_vertex(Vec2::new(0.4, 0.45));
        let b = m.nearest_vertex(Vec2::new(0.6, 0.55));
        let (cf, r) = field(&m, &[(a, 3), (b, 5)]);
        assert_eq!(trace(&cf, &r), trace(&cf, &r));
    }
}
