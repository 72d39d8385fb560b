//! Removal of separatrices traced from both of their ends.

use std::collections::HashMap;

use super::{LaunchSite, LayoutError, Separatrix};
use crate::geom::{closest_on_segment, Vec2};

/// Distance from `p` to a polyline.
pub fn point_polyline_distance(p: Vec2, line: &[Vec2]) -> f64 {
    if line.len() == 1 {
        return p.dist(line[0]);
    }
    line.windows(2).map(|w| closest_on_segment(p, w[0], w[1]).0.dist(p)).fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between two polylines, measured at vertices.
pub fn hausdorff(a: &[Vec2], b: &[Vec2]) -> f64 {
    let ab = a.iter().map(|&p| point_polyline_distance(p, b)).fold(0.0, f64::max);
    let ba = b.iter().map(|&p| point_polyline_distance(p, a)).fold(0.0, f64::max);
    ab.max(ba)
}

/// Number of separatrix ends at every site vertex.
pub fn incident_ends(seps: &[Separatrix]) -> HashMap<usize, usize> {
    let mut count = HashMap::new();
    for s in seps {
        *count.entry(s.origin).or_insert(0) += 1;
        if let Some(v) = s.end_vertex() {
            *count.entry(v).or_insert(0) += 1;
        }
    }
    count
}

/// Checks every site against its expected number of separatrix ends.
/// Boundary sites may receive extra ends; those form doublet patches that
/// the valence-2 split repairs.
pub fn check_incidence(seps: &[Separatrix], sites: &[LaunchSite]) -> Result<(), LayoutError> {
    let count = incident_ends(seps);
    for s in sites {
        let found = count.get(&s.vertex).copied().unwrap_or(0);
        if found < s.launches || (found > s.launches && !s.boundary) {
            return Err(LayoutError::Incidence { vertex: s.vertex, expected: s.launches, found });
        }
    }
    Ok(())
}

/// Merges pairs with swapped endpoints that lie within `dup_tol` of each
/// other; `None` uses half the larger spoke-disk radius of the two ends.
/// Survivors are renumbered.
pub fn dedup(seps: Vec<Separatrix>, sites: &[LaunchSite], dup_tol: Option<f64>) -> Result<Vec<Separatrix>, LayoutError> {
    let radius: HashMap<usize, f64> = sites.iter().map(|s| (s.vertex, s.disk_radius)).collect();
    let mut dropped = vec![false; seps.len()];
    for i in 0..seps.len() {
        for j in i + 1..seps.len() {
            if dropped[i] || dropped[j] {
                continue;
            }
            let (a, b) = (&seps[i], &seps[j]);
            if a.origin == b.origin || a.end_vertex() != Some(b.origin) || b.end_vertex() != Some(a.origin) {
                continue;
            }
            let tol = dup_tol.unwrap_or_else(|| 0.5 * radius.get(&a.origin).copied().unwrap_or(0.0).max(radius.get(&b.origin).copied().unwrap_or(0.0)));
            if hausdorff(&a.points, &b.points) < tol {
                if b.curvature() < a.curvature() {
                    dropped[i] = true;
                } else {
                    dropped[j] = true;
                }
            }
        }
    }
    let mut out: Vec<Separatrix> = seps.into_iter().zip(dropped).filter(|(_, d)| !d).map(|(s, _)| s).collect();
    for (k, s) in out.iter_mut().enumerate() {
        s.id = k;
    }
    check_incidence(&out, sites)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::testutil::{square_field, trace};
    use crate::layout::{launch_sites, Termination};

    #[test]
    fn connecting_pair_keeps_one_copy() {
        let (cf, r) = square_field(12, &[((1.0 / 3.0, 1.0 / 3.0), 3), ((2.0 / 3.0, 2.0 / 3.0), 5)]);
        let sites = launch_sites(&cf, &r);
        let s = trace(&cf, &r);
        assert_eq!(s.len(), 8);
        assert!(check_incidence(&s, &sites).is_err());
        let d = dedup(s, &sites, None).unwrap();
        assert_eq!(d.len(), 7);
        assert_eq!(d.iter().filter(|x| x.end_vertex().is_some()).count(), 1);
        assert!(d.iter().enumerate().all(|(k, x)| x.id == k));
    }

    #[test]
    fn disjoint_separatrices_unchanged() {
        let (cf, r) = square_field(16, &[((0.5, 0.5), 8), ((0.5, 0.0), 1), ((1.0, 0.5), 1), ((0.5, 1.0), 1), ((0.0, 0.5), 1)]);
        let sites = launch_sites(&cf, &r);
        let s = trace(&cf, &r);
        let d = dedup(s.clone(), &sites, None).unwrap();
        assert_eq!(d, s);
    }

    #[test]
    fn four_interior_singularities_keep_valence() {
        let (cf, r) = square_field(
            16,
            &[((0.3, 0.3), 3), ((0.7, 0.7), 3), ((0.7, 0.3), 5), ((0.3, 0.7), 5)],
        );
        let sites = launch_sites(&cf, &r);
        let d = dedup(trace(&cf, &r), &sites, None).unwrap();
        let count = incident_ends(&d);
        for s in &sites {
            assert_eq!(count[&s.vertex], s.valence as usize);
        }
        assert!(d.iter().all(|x| x.termination != Termination::MaxSteps));
    }

    #[test]
    fn hausdorff_of_offset_lines() {
        let a = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let b = [Vec2::new(0.0, 0.1), Vec2::new(0.5, 0.1), Vec2::new(1.0, 0.3)];
        assert!((hausdorff(&a, &b) - 0.3).abs() < 1e-12);
        assert_eq!(hausdorff(&a, &a), 0.0);
    }
}
