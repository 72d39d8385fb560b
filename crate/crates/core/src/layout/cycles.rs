//! Pairwise crossings and limit-cycle cutting.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{LayoutError, Separatrix, Termination};
use crate::geom::{segment_intersection, Vec2};
use crate::mesh::TriMesh;

/// Transversal crossing of separatrices `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub a: usize,
    pub b: usize,
    /// Arc length of the crossing along `a` and `b`.
    pub sa: f64,
    pub sb: f64,
    pub point: Vec2,
    /// Acute angle between the two tangents, in `[0, π/2]`.
    pub angle: f64,
}

/// A hanging separatrix end lying on another separatrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TJunctionRecord {
    pub location: Vec2,
    /// Separatrix the junction lies on.
    pub owner: usize,
    /// Separatrix that hangs.
    pub hanging: usize,
    /// Arc length of `location` along the owner.
    pub owner_param: f64,
    /// Patches on either side of the hanging end, once partitions exist.
    pub patches: Option<[usize; 2]>,
    /// The hanging separatrix before truncation.
    pub untruncated: Vec<Vec2>,
    pub untruncated_termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleParams {
    /// Allowed deviation from a right angle for cuts and boundary arrival.
    pub orthogonality_tol_deg: f64,
}

impl Default for CycleParams {
    fn default() -> Self {
        Self { orthogonality_tol_deg: 30.0 }
    }
}

fn bbox(pts: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in pts {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (lo, hi)
}

fn acute(u: Vec2, v: Vec2) -> f64 {
    let a = u.cross(v).atan2(u.dot(v)).abs();
    if a > FRAC_PI_2 {
        std::f64::consts::PI - a
    } else {
        a
    }
}

/// Crossings between two polylines, excluding touches at either's end points.
pub fn crossings_between(a: &Separatrix, b: &Separatrix, eps: f64) -> Vec<Crossing> {
    let (alo, ahi) = bbox(&a.points);
    let (blo, bhi) = bbox(&b.points);
    if alo.x > bhi.x + eps || blo.x > ahi.x + eps || alo.y > bhi.y + eps || blo.y > ahi.y + eps {
        return Vec::new();
    }
    let ends = [a.start(), a.end(), b.start(), b.end()];
    let sa_cum = a.arc_lengths();
    let sb_cum = b.arc_lengths();
    let mut out = Vec::new();
    for i in 0..a.points.len() - 1 {
        let (p0, p1) = (a.points[i], a.points[i + 1]);
        let (slo, shi) = (Vec2::new(p0.x.min(p1.x), p0.y.min(p1.y)), Vec2::new(p0.x.max(p1.x), p0.y.max(p1.y)));
        if slo.x > bhi.x || slo.y > bhi.y || shi.x < blo.x || shi.y < blo.y {
            continue;
        }
        for j in 0..b.points.len() - 1 {
            let (q0, q1) = (b.points[j], b.points[j + 1]);
            if q0.x.max(q1.x) < slo.x || q0.x.min(q1.x) > shi.x || q0.y.max(q1.y) < slo.y || q0.y.min(q1.y) > shi.y {
                continue;
            }
            if let Some((s, t)) = segment_intersection(p0, p1, q0, q1) {
                let point = p0.lerp(p1, s);
                if ends.iter().any(|e| e.dist(point) <= eps) {
                    continue;
                }
                out.push(Crossing {
                    a: a.id,
                    b: b.id,
                    sa: sa_cum[i] + s * p0.dist(p1),
                    sb: sb_cum[j] + t * q0.dist(q1),
                    point,
                    angle: acute(p1 - p0, q1 - q0),
                });
            }
        }
    }
    out
}

/// All crossings between distinct separatrices, with `a < b`.
pub fn all_crossings(seps: &[Separatrix], eps: f64) -> Vec<Crossing> {
    let mut out = Vec::new();
    for i in 0..seps.len() {
        for j in i + 1..seps.len() {
            out.extend(crossings_between(&seps[i], &seps[j], eps));
        }
    }
    out
}

/// Crossings seen from separatrix `k`, sorted by arc length along it, as
/// `(own param, other id, other param, point, angle)`.
fn crossings_of(k: usize, all: &[Crossing]) -> Vec<(f64, usize, f64, Vec2, f64)> {
    let mut v: Vec<_> = all
        .iter()
        .filter_map(|c| {
            if c.a == k {
                Some((c.sa, c.b, c.sb, c.point, c.angle))
            } else if c.b == k {
                Some((c.sb, c.a, c.sa, c.point, c.angle))
            } else {
                None
            }
        })
        .collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    v
}

/// Largest arc-length gap between consecutive crossings along a separatrix.
fn max_gap(own: &[(f64, usize, f64, Vec2, f64)]) -> f64 {
    own.windows(2).map(|w| w[1].0 - w[0].0).fold(0.0, f64::max)
}

/// Angle between the final segment and the boundary edge it ends on.
fn arrival_angle(s: &Separatrix, mesh: &TriMesh) -> Option<f64> {
    let Termination::Boundary { edge, .. } = s.termination else {
        return None;
    };
    let n = s.points.len();
    let d = s.points[n - 1] - s.points[n - 2];
    let [a, b] = mesh.edge(edge);
    Some(acute(d, mesh.vertex(b) - mesh.vertex(a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// Separatrices flagged as possible limit cycles.
    pub possible: Vec<usize>,
    /// Those judged authentic and cut.
    pub authentic: Vec<usize>,
}

/// Possible cycles cross some other separatrix more than once or never reach
/// an end; authentic ones additionally have the larger maximum gap between
/// consecutive crossings within a mutually crossing pair, or miss the
/// boundary at a right angle.
pub fn classify_cycles(seps: &[Separatrix], mesh: &TriMesh, params: &CycleParams, eps: f64) -> CycleReport {
    let all = all_crossings(seps, eps);
    let tol = params.orthogonality_tol_deg.to_radians();
    let own: Vec<_> = (0..seps.len()).map(|k| crossings_of(k, &all)).collect();
    let multi = |k: usize, other: usize| own[k].iter().filter(|c| c.1 == other).count() > 1;
    let mut possible = Vec::new();
    let mut authentic = Vec::new();
    for k in 0..seps.len() {
        let partners: Vec<usize> = (0..seps.len()).filter(|&o| o != k && multi(k, o)).collect();
        let stalled = seps[k].termination == Termination::MaxSteps;
        if partners.is_empty() && !stalled {
            continue;
        }
        possible.push(k);
        let oblique = arrival_angle(&seps[k], mesh).is_some_and(|a| (FRAC_PI_2 - a) > tol);
        let farther = partners.iter().any(|&o| {
            let (gk, go) = (max_gap(&own[k]), max_gap(&own[o]));
            gk > go || (gk == go && seps[k].length > seps[o].length)
        });
        if stalled || oblique || farther {
            authentic.push(k);
        }
    }
    CycleReport { possible, authentic }
}

/// Cuts authentic cycles one at a time, most far-flung first, at their
/// earliest near-orthogonal crossing.
pub fn detect_and_cut_limit_cycles(
    mut seps: Vec<Separatrix>,
    mesh: &TriMesh,
    params: &CycleParams,
) -> Result<(Vec<Separatrix>, Vec<TJunctionRecord>, CycleReport), LayoutError> {
    let eps = 1e-9 * mesh.bbox_diagonal();
    let tol = params.orthogonality_tol_deg.to_radians();
    let first = classify_cycles(&seps, mesh, params, eps);
    let mut records: Vec<TJunctionRecord> = Vec::new();
    let mut cut = Vec::new();
    for _ in 0..seps.len() {
        let report = classify_cycles(&seps, mesh, params, eps);
        let all = all_crossings(&seps, eps);
        let Some(&k) = report
            .authentic
            .iter()
            .filter(|k| !cut.contains(*k))
            .max_by(|&&x, &&y| max_gap(&crossings_of(x, &all)).total_cmp(&max_gap(&crossings_of(y, &all))).then(y.cmp(&x)))
        else {
            break;
        };
        let own = crossings_of(k, &all);
        let Some(&(s_cut, other, s_other, point, _)) = own.iter().find(|c| FRAC_PI_2 - c.4 <= tol) else {
            return Err(LayoutError::NoCutPoint { separatrix: k, points: seps[k].points.clone() });
        };
        let untruncated = seps[k].points.clone();
        let untruncated_termination = seps[k].termination;
        truncate(&mut seps[k], s_cut, point, other);
        cut.push(k);
        records.push(TJunctionRecord {
            location: point,
            owner: other,
            hanging: k,
            owner_param: s_other,
            patches: None,
            untruncated,
            untruncated_termination,
        });
    }
    // a later cut may have shortened an owner past an earlier junction
    for r in &mut records {
        let owner = &seps[r.owner];
        if owner.length < r.owner_param {
            return Err(LayoutError::NoCutPoint { separatrix: r.hanging, points: seps[r.hanging].points.clone() });
        }
    }
    Ok((seps, records, CycleReport { possible: first.possible, authentic: cut }))
}

/// Shortens `s` to arc length `at`, ending exactly at `point`.
pub fn truncate(s: &mut Separatrix, at: f64, point: Vec2, on: usize) {
    let arc = s.arc_lengths();
    let keep = arc.iter().take_while(|&&x| x < at).count();
    s.points.truncate(keep.max(1));
    s.points.push(point);
    s.points.dedup_by(|a, b| a.dist(*b) <= 1e-14);
    s.length = crate::geom::polyline_length(&s.points);
    s.termination = Termination::Cut { on };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::synthetic::spiral_fixture;
    use crate::layout::testutil::{square_field, trace};
    use crate::layout::{dedup, launch_sites, TraceParams, Tracer};

    fn line(id: usize, pts: &[(f64, f64)]) -> Separatrix {
        let mut s = Separatrix::new(0, pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), Termination::MaxSteps);
        s.id = id;
        s
    }

    #[test]
    fn crossing_parameters() {
        let a = line(0, &[(0.0, 0.0), (2.0, 0.0)]);
        let b = line(1, &[(1.0, -1.0), (1.0, 1.0)]);
        let c = crossings_between(&a, &b, 1e-12);
        assert_eq!(c.len(), 1);
        assert!((c[0].sa - 1.0).abs() < 1e-12 && (c[0].sb - 1.0).abs() < 1e-12);
        assert!((c[0].angle - FRAC_PI_2).abs() < 1e-12);
        // touching at an end point is not a crossing
        let d = line(2, &[(1.0, 0.0), (1.0, 1.0)]);
        assert!(crossings_between(&a, &d, 1e-12).is_empty());
    }

    #[test]
    fn symmetric_squares_have_no_cycles() {
        for entries in [
            vec![((0.5, 0.5), 8), ((0.5, 0.0), 1), ((1.0, 0.5), 1), ((0.5, 1.0), 1), ((0.0, 0.5), 1)],
            vec![((0.3, 0.3), 3), ((0.7, 0.7), 3), ((0.7, 0.3), 5), ((0.3, 0.7), 5)],
        ] {
            let (cf, r) = square_field(16, &entries);
            let sites = launch_sites(&cf, &r);
            let d = dedup(trace(&cf, &r), &sites, None).unwrap();
            let (out, records, report) = detect_and_cut_limit_cycles(d.clone(), &cf.mesh, &CycleParams::default()).unwrap();
            assert!(report.possible.is_empty());
            assert!(records.is_empty());
            assert_eq!(out, d);
        }
    }

    #[test]
    fn spiral_is_cut_once() {
        let (field, sites) = spiral_fixture();
        let tracer = Tracer::new(&field, &field.mesh, sites.clone(), TraceParams::default());
        let seps = tracer.trace_all().unwrap();
        assert_eq!(seps.len(), 4);
        let stalled: Vec<usize> = seps.iter().filter(|s| s.termination == Termination::MaxSteps).map(|s| s.id).collect();
        assert_eq!(stalled.len(), 1);
        let (out, records, report) = detect_and_cut_limit_cycles(seps, &field.mesh, &CycleParams::default()).unwrap();
        assert_eq!(report.authentic, stalled);
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.hanging, stalled[0]);
        assert_eq!(out[r.hanging].termination, Termination::Cut { on: r.owner });
        // cut after about one turn, where it meets the outward branch
        assert!(matches!(out[r.owner].termination, Termination::Boundary { loop_index: 0, .. }));
        assert!(r.location.y.abs() < 0.15 && r.location.x > 0.45 && r.location.x < 0.66);
        assert!(all_crossings(&out, 1e-9).is_empty());
    }
}
