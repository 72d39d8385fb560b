//! Analytic direction fields and constructed configurations that exercise
//! the layout repairs.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::repair::boundary_termination;
use super::{
    build_partitions, project_on_polyline, truncate, BoundarySegments, DirectionField, LaunchSite, LayoutError, QuadLayout, Separatrix,
    TJunctionRecord, Termination,
};
use crate::fixtures;
use crate::singularity::SingularityPattern;
use crate::geom::Vec2;
use crate::mesh::TriMesh;

/// Field on an annulus whose tangential branch drifts radially towards the
/// circle `r = limit`, so traces starting inside it wind forever. The drift
/// vanishes on both loops, where the field is boundary aligned.
#[derive(Debug, Clone)]
pub struct SpiralField {
    pub mesh: TriMesh,
    pub center: Vec2,
    pub inner: f64,
    pub outer: f64,
    pub limit: f64,
    pub drift: f64,
}

impl DirectionField for SpiralField {
    fn sample(&self, p: Vec2) -> Option<(f64, f64)> {
        let loc = self.mesh.locate(p).ok()?;
        let [a, b, c] = self.mesh.tri_points(loc.triangle);
        let h = (a.dist(b) + b.dist(c) + c.dist(a)) / 3.0;
        let d = p - self.center;
        let r = d.norm();
        let k = self.drift * (self.limit - r) * (r - self.inner).max(0.0) * (self.outer - r).max(0.0);
        Some((d.angle() + FRAC_PI_2 - k.atan(), h))
    }
}

/// A regular point of a field used as a launch site with four branches.
pub fn regular_site(mesh: &TriMesh, vertex: usize) -> LaunchSite {
    let h = mesh.local_edge_length(vertex);
    LaunchSite {
        vertex,
        center: mesh.vertex(vertex),
        sample_radius: 0.25 * h,
        capture_radius: 0.25 * h,
        disk_radius: h,
        valence: 4,
        boundary: false,
        launches: 4,
        wedge: (0.0, TAU),
    }
}

/// Annulus `0.3 ≤ r ≤ 1` with a spiral field whose limit circle is `r = 0.65`
/// and a four-branch site at `(0.45, 0)`. The counter-clockwise branch winds
/// towards the limit circle; the clockwise one leaves through the inner loop.
pub fn spiral_fixture() -> (SpiralField, Vec<LaunchSite>) {
    let mesh = fixtures::annulus(Vec2::ZERO, 0.3, 1.0, 64, 16);
    let v = mesh.nearest_vertex(Vec2::new(0.45, 0.0));
    let site = regular_site(&mesh, v);
    (SpiralField { mesh, center: Vec2::ZERO, inner: 0.3, outer: 1.0, limit: 0.65, drift: 36.0 }, vec![site])
}

/// Straight separatrix from site `from` through `points`.
fn straight(segs: &BoundarySegments, from: &LaunchSite, points: &[Vec2], end: Option<usize>) -> Separatrix {
    let mut pts = vec![from.center];
    pts.extend_from_slice(points);
    // subdivide so warps and projections have something to work with
    let mut fine = vec![pts[0]];
    for w in pts.windows(2) {
        for k in 1..=8 {
            fine.push(w[0].lerp(w[1], k as f64 / 8.0));
        }
    }
    let term = match end {
        Some(v) => Termination::Singularity { vertex: v },
        None => boundary_termination(segs, *fine.last().unwrap()),
    };
    Separatrix::new(from.vertex, fine, term)
}

/// A hand-built layout input: mesh, sites, separatrices and junctions.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub mesh: TriMesh,
    pub sites: Vec<LaunchSite>,
    pub separatrices: Vec<Separatrix>,
    pub records: Vec<TJunctionRecord>,
}

impl Configuration {
    fn push(&mut self, mut s: Separatrix) -> usize {
        s.id = self.separatrices.len();
        s.branch = self.separatrices.iter().filter(|o| o.origin == s.origin).count();
        self.separatrices.push(s);
        self.separatrices.len() - 1
    }

    /// Adds a separatrix from `site` towards `end`, cut where it meets `owner`
    /// at `at`, as a limit-cycle cut would leave it.
    fn push_cut(&mut self, segs: &BoundarySegments, site: usize, at: Vec2, end: Vec2, owner: usize) {
        let full = straight(segs, &self.sites[site], &[end], None);
        let mut s = full.clone();
        let k = self.push(s.clone());
        s.id = k;
        let param = project_on_polyline(&full.points, at);
        truncate(&mut s, param, at, owner);
        self.records.push(TJunctionRecord {
            location: at,
            owner,
            hanging: k,
            owner_param: project_on_polyline(&self.separatrices[owner].points, at),
            patches: None,
            untruncated: full.points,
            untruncated_termination: full.termination,
        });
        self.separatrices[k] = s;
    }

    pub fn layout(&self) -> Result<QuadLayout, LayoutError> {
        build_partitions(&self.mesh, &self.sites, &self.separatrices, &self.records)
    }
}

/// Square with two regular sites whose separatrices leave a T-junction: the
/// right branch of `P = (0.25, 0.375)` stops on the vertical branch of
/// `Q = (0.5, 0.25)`. With `stacked`, a third site `(0.75, 0.4375)` hangs a
/// second junction on the same branch from the other side.
pub fn tjunction_fixture(stacked: bool) -> Configuration {
    let mesh = fixtures::unit_square(16);
    let segs = BoundarySegments::new(&mesh);
    let site = |x: f64, y: f64| regular_site(&mesh, mesh.nearest_vertex(Vec2::new(x, y)));
    let mut sites = vec![site(0.5, 0.25), site(0.25, 0.375)];
    if stacked {
        sites.push(site(0.75, 0.4375));
    }
    let mut c = Configuration { mesh: mesh.clone(), sites, separatrices: Vec::new(), records: Vec::new() };
    let v = |x, y| Vec2::new(x, y);
    let q = c.sites[0].clone();
    let b = c.push(straight(&segs, &q, &[v(0.5, 1.0)], None));
    for end in [v(1.0, 0.25), v(0.5, 0.0), v(0.0, 0.25)] {
        c.push(straight(&segs, &q, &[end], None));
    }
    let p = c.sites[1].clone();
    for end in [v(0.0, 0.375), v(0.25, 1.0), v(0.25, 0.0)] {
        c.push(straight(&segs, &p, &[end], None));
    }
    c.push_cut(&segs, 1, v(0.5, 0.375), v(1.0, 0.375), b);
    if stacked {
        let p2 = c.sites[2].clone();
        for end in [v(1.0, 0.4375), v(0.75, 1.0), v(0.75, 0.0)] {
            c.push(straight(&segs, &p2, &[end], None));
        }
        c.push_cut(&segs, 2, v(0.5, 0.4375), v(0.0, 0.4375), b);
    }
    c
}

/// Square with a valence-5 point `V = (0.25, 0.25)` joined to a boundary
/// valence-1 point `D = (0.25, 0)`. The patch between `V`, `D` and the
/// neighbouring branch is three-sided.
pub fn doublet_fixture() -> (Configuration, SingularityPattern) {
    let mesh = fixtures::unit_square(16);
    let segs = BoundarySegments::new(&mesh);
    let vv = mesh.nearest_vertex(Vec2::new(0.25, 0.25));
    let dv = mesh.nearest_vertex(Vec2::new(0.25, 0.0));
    let mut v = regular_site(&mesh, vv);
    v.valence = 5;
    v.launches = 5;
    let h = mesh.local_edge_length(dv);
    let d = LaunchSite {
        vertex: dv,
        center: mesh.vertex(dv),
        sample_radius: 0.25 * h,
        capture_radius: 0.25 * h,
        disk_radius: h,
        valence: 1,
        boundary: true,
        launches: 0,
        wedge: (0.0, PI),
    };
    let mut c = Configuration { mesh: mesh.clone(), sites: vec![v.clone(), d], separatrices: Vec::new(), records: Vec::new() };
    c.push(straight(&segs, &v, &[mesh.vertex(dv)], Some(dv)));
    for (x, y) in [(0.375, 0.0), (1.0, 0.25), (0.25, 1.0), (0.0, 0.25)] {
        c.push(straight(&segs, &v, &[Vec2::new(x, y)], None));
    }
    let pattern = SingularityPattern::from_valences(&mesh, &[(vv, 5), (dv, 1)]).expect("doublet pattern");
    (c, pattern)
}
