//! Second cross-field: branch cut, log-norm field `H`, angle field `θ`
//! (its harmonic conjugate), pointwise cross reconstruction and the boundary
//! tangency diagnosis.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{cr_basis, cr_gradients, lumped_mass, p1_gradient, stiffness, ConstrainedSolver};
use crate::geom::{quarter_turn_distance, wrap_pi, Vec2};
use crate::mesh::{corner_quarters, turning_angles, MeshError, PointLocation, TriMesh, NONE};
use crate::singularity::{SingularityError, SingularityPattern, ValidationReport};
use crate::sparse::{relative_residual, SolveError, Triplets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("pattern is incompatible with the domain (deficit {})", .0.deficit)]
    Incompatible(Box<ValidationReport>),
    #[error("pattern does not fit the mesh: {0}")]
    Pattern(#[from] SingularityError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("H residual {0:e} above tolerance")]
    Residual(f64),
    #[error("jump {jump} across cut edge {edge} is not a quarter-turn multiple")]
    Jump { edge: usize, jump: f64 },
    #[error("anchor edge {0} is not an outer boundary edge")]
    Anchor(usize),
    #[error("{0}")]
    Mesh(#[from] MeshError),
}

/// Mesh edges along which `θ` may jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCut {
    /// Sorted edge ids.
    pub edges: Vec<usize>,
    /// Singular vertices and one vertex per inner loop that the cut connects.
    pub anchors: Vec<usize>,
}

impl BranchCut {
    pub fn contains(&self, e: usize) -> bool {
        self.edges.binary_search(&e).is_ok()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Shortest-path forest from the outer boundary to every interior singular
/// vertex and to each inner boundary loop.
pub fn build_branch_cut(mesh: &TriMesh, pattern: &SingularityPattern) -> BranchCut {
    let n = mesh.num_vertices();
    let mut on_outer = vec![false; n];
    for &v in &mesh.outer_loop().vertices {
        on_outer[v] = true;
    }
    let mut on_inner = vec![false; n];
    for l in mesh.inner_loops() {
        for &v in &l.vertices {
            on_inner[v] = true;
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![NONE; n];
    let mut heap = BinaryHeap::new();
    for v in 0..n {
        if on_outer[v] {
            dist[v] = 0.0;
            heap.push(Item(0.0, v));
        }
    }
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v] || (on_inner[v] && !on_outer[v]) {
            continue;
        }
        for &w in mesh.neighbors(v) {
            if on_outer[w] {
                continue;
            }
            let nd = d + mesh.vertex(v).dist(mesh.vertex(w));
            if nd < dist[w] || (nd == dist[w] && pred[w] != NONE && v < pred[w]) {
                dist[w] = nd;
                pred[w] = v;
                heap.push(Item(nd, w));
            }
        }
    }
    let mut anchors: Vec<usize> = pattern
        .singularities
        .iter()
        .filter(|s| !mesh.is_boundary_vertex(s.vertex))
        .map(|s| s.vertex)
        .collect();
    for l in mesh.inner_loops() {
        let best = l
            .vertices
            .iter()
            .copied()
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
            .expect("loop has vertices");
        anchors.push(best);
    }
    let mut edges = HashSet::new();
    for &a in &anchors {
        let mut v = a;
        while !on_outer[v] && pred[v] != NONE {
            let e = mesh.edge_between(v, pred[v]).expect("tree edge");
            if !edges.insert(e) {
                break;
            }
            v = pred[v];
        }
    }
    let mut edges: Vec<usize> = edges.into_iter().collect();
    edges.sort_unstable();
    anchors.sort_unstable();
    BranchCut { edges, anchors }
}

/// `V′ − E′ + F` of the mesh cut open along `cut`.
pub fn cut_open_euler(mesh: &TriMesh, cut: &BranchCut) -> i64 {
    let mut wedges = 0i64;
    for v in 0..mesh.num_vertices() {
        wedges += vertex_wedges(mesh, cut, v) as i64;
    }
    let e = mesh.num_edges() as i64 + cut.edges.len() as i64;
    wedges - e + mesh.num_triangles() as i64
}

/// Number of triangle groups around `v` once cut and boundary edges separate them.
fn vertex_wedges(mesh: &TriMesh, cut: &BranchCut, v: usize) -> usize {
    let fan = mesh.ordered_fan(v);
    let link = mesh.ordered_link(v);
    let m = fan.len();
    if mesh.is_boundary_vertex(v) {
        // separators between consecutive fan triangles: edges (v, link[1..m])
        1 + (1..m).filter(|&i| cut.contains(mesh.edge_between(v, link[i]).unwrap())).count()
    } else {
        let c = (0..m).filter(|&i| cut.contains(mesh.edge_between(v, link[i]).unwrap())).count();
        c.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// `Σ 2π·index` over singularities.
    pub dirac_mass: f64,
    /// Quantized corner turning `Σ q·π/2`.
    pub corner_mass: f64,
    /// `dirac_mass + corner_mass`, to be compared with `2πχ`.
    pub source_mass: f64,
    pub target_mass: f64,
    /// Sum of the assembled right-hand side (turning minus corner quarters minus sources).
    pub assembled_total: f64,
    pub ok: bool,
}

/// Right-hand side of `K H = b`: boundary turning beyond the corner quarter
/// turns, minus `π t/2` at singular vertices.
pub fn assemble_h_rhs(mesh: &TriMesh, pattern: &SingularityPattern) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_vertices()];
    for (v, tau) in turning_angles(mesh) {
        b[v] += tau - corner_quarters(tau) as f64 * FRAC_PI_2;
    }
    for s in &pattern.singularities {
        b[s.vertex] -= s.t as f64 * FRAC_PI_2;
    }
    b
}

pub fn compatibility(mesh: &TriMesh, pattern: &SingularityPattern) -> CompatibilityReport {
    let dirac: f64 = pattern.singularities.iter().map(|s| s.t as f64 * FRAC_PI_2).sum();
    let corners: f64 = turning_angles(mesh).values().map(|&a| corner_quarters(a) as f64 * FRAC_PI_2).sum();
    let target = TAU * mesh.chi_from_loops() as f64;
    let b = assemble_h_rhs(mesh, pattern);
    let total: f64 = b.iter().sum();
    let source = dirac + corners;
    CompatibilityReport {
        dirac_mass: dirac,
        corner_mass: corners,
        source_mass: source,
        target_mass: target,
        assembled_total: total,
        ok: (source - target).abs() <= 1e-9 && total.abs() <= 1e-9,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFieldH {
    pub values: Vec<f64>,
    /// Relative residual of the pinned linear system.
    pub residual: f64,
}

impl ScalarFieldH {
    pub fn spread(&self) -> f64 {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Solves `K H = b` with one pinned vertex, then shifts `H` to zero
/// mass-weighted mean. Refuses incompatible patterns.
pub fn solve_h(mesh: &TriMesh, pattern: &SingularityPattern) -> Result<ScalarFieldH, ConformalError> {
    pattern.check_against(mesh)?;
    let report = crate::singularity::validate(pattern, mesh);
    if !report.ok || !compatibility(mesh, pattern).ok {
        return Err(ConformalError::Incompatible(Box::new(report)));
    }
    let k = stiffness(mesh);
    let b = assemble_h_rhs(mesh, pattern);
    let n = mesh.num_vertices();
    let pin = n - 1;
    let mut fixed = vec![false; n];
    fixed[pin] = true;
    let solver = ConstrainedSolver::new(k.clone(), &fixed)?;
    let mut h = solver.solve(&b, &vec![0.0; n])?;
    // sources are multiples of π/2, so a unit floor only matters for rounding-level data
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let residual = relative_residual(&k, &h, &b) * bnorm / bnorm.max(1.0);
    if residual > 1e-10 {
        return Err(ConformalError::Residual(residual));
    }
    let m = lumped_mass(mesh);
    let mean = h.iter().zip(&m).map(|(x, w)| x * w).sum::<f64>() / m.iter().sum::<f64>();
    for x in &mut h {
        *x -= mean;
    }
    Ok(ScalarFieldH { values: h, residual })
}

/// Crouzeix–Raviart angle field on the cut-open mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFieldTheta {
    /// Midpoint values per triangle, indexed by local edge (opposite local vertex).
    pub tri_values: Vec<[f64; 3]>,
    /// Per cut edge: `(edge, jump, quarter turns)` with jump = side 1 − side 0.
    pub jumps: Vec<(usize, f64, i32)>,
    pub anchor_edge: usize,
}

impl ScalarFieldTheta {
    pub fn gradient(&self, mesh: &TriMesh, t: usize) -> Vec2 {
        let g = cr_gradients(mesh, t);
        let v = self.tri_values[t];
        g[0] * v[0] + g[1] * v[1] + g[2] * v[2]
    }

    pub fn value(&self, loc: &PointLocation) -> f64 {
        let b = cr_basis(loc.bary);
        let v = self.tri_values[loc.triangle];
        b[0] * v[0] + b[1] * v[1] + b[2] * v[2]
    }

    /// Value at the midpoint of `edge` as seen from triangle `t`.
    pub fn edge_value(&self, mesh: &TriMesh, t: usize, edge: usize) -> f64 {
        let k = mesh.tri_edges(t).iter().position(|&e| e == edge).expect("edge of triangle");
        self.tri_values[t][k]
    }
}

/// Longest outer boundary edge.
pub fn default_anchor(mesh: &TriMesh) -> usize {
    let l = &mesh.outer_loop().vertices;
    let n = l.len();
    (0..n)
        .map(|i| mesh.edge_between(l[i], l[(i + 1) % n]).unwrap())
        .max_by(|&a, &b| mesh.edge_length(a).total_cmp(&mesh.edge_length(b)).then(b.cmp(&a)))
        .unwrap()
}

/// Direction of boundary edge `e` following its loop orientation.
pub fn boundary_tangent(mesh: &TriMesh, e: usize) -> Vec2 {
    let [a, b] = mesh.edge(e);
    let t = mesh.edge_triangles(e)[0];
    let tri = mesh.triangle(t);
    // the owning triangle traverses the boundary edge in loop order
    let k = tri.iter().position(|&x| x == a).unwrap();
    if tri[(k + 1) % 3] == b {
        mesh.vertex(b) - mesh.vertex(a)
    } else {
        mesh.vertex(a) - mesh.vertex(b)
    }
}

/// Least-squares solve of `∇θ = n × ∇H` with Crouzeix–Raviart unknowns;
/// cut edges carry one unknown per side and the anchor edge is pinned to its
/// tangent angle.
pub fn solve_theta(
    mesh: &TriMesh,
    h: &ScalarFieldH,
    cut: &BranchCut,
    anchor: Option<usize>,
) -> Result<ScalarFieldTheta, ConformalError> {
    let anchor = anchor.unwrap_or_else(|| default_anchor(mesh));
    if !mesh.is_boundary_edge(anchor) || cut.contains(anchor) {
        return Err(ConformalError::Anchor(anchor));
    }
    let outer: HashSet<usize> = mesh.outer_loop().vertices.iter().copied().collect();
    let [a0, a1] = mesh.edge(anchor);
    if !outer.contains(&a0) || !outer.contains(&a1) {
        return Err(ConformalError::Anchor(anchor));
    }
    let ne = mesh.num_edges();
    let mut dof = vec![0usize; ne];
    let mut count = 0;
    for (e, d) in dof.iter_mut().enumerate() {
        *d = count;
        count += if cut.contains(e) { 2 } else { 1 };
    }
    let tri_dof = |t: usize, k: usize| {
        let e = mesh.tri_edges(t)[k];
        if cut.contains(e) && mesh.edge_triangles(e)[1] == t {
            dof[e] + 1
        } else {
            dof[e]
        }
    };
    let mut a = Triplets::new(count);
    let mut rhs = vec![0.0; count];
    for t in 0..mesh.num_triangles() {
        let g = cr_gradients(mesh, t);
        let target = p1_gradient(mesh, t, &h.values).perp();
        let area = mesh.tri_area(t);
        let ids = [tri_dof(t, 0), tri_dof(t, 1), tri_dof(t, 2)];
        for i in 0..3 {
            rhs[ids[i]] += area * g[i].dot(target);
            for j in 0..3 {
                a.add(ids[i], ids[j], area * g[i].dot(g[j]));
            }
        }
    }
    let mut fixed = vec![false; count];
    fixed[dof[anchor]] = true;
    let mut values = vec![0.0; count];
    values[dof[anchor]] = boundary_tangent(mesh, anchor).angle();
    let solver = ConstrainedSolver::new(a.to_csr(), &fixed)?;
    let x = solver.solve(&rhs, &values)?;
    let tri_values: Vec<[f64; 3]> =
        (0..mesh.num_triangles()).map(|t| [x[tri_dof(t, 0)], x[tri_dof(t, 1)], x[tri_dof(t, 2)]]).collect();
    let mut jumps = Vec::new();
    for &e in &cut.edges {
        let jump = x[dof[e] + 1] - x[dof[e]];
        let q = (jump / FRAC_PI_2).round();
        if (jump - q * FRAC_PI_2).abs() > 1e-6 {
            return Err(ConformalError::Jump { edge: e, jump });
        }
        jumps.push((e, jump, q as i32));
    }
    Ok(ScalarFieldTheta { tri_values, jumps, anchor_edge: anchor })
}

/// Pointwise cross: four directions `angle + jπ/2` with common norm `e^H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cross {
    pub norm: f64,
    pub angle: f64,
    /// True when evaluated exactly at a singular vertex (direction meaningless).
    pub singular: bool,
}

impl Cross {
    pub fn branches(&self) -> [Vec2; 4] {
        std::array::from_fn(|j| Vec2::from_angle(self.angle + j as f64 * FRAC_PI_2) * self.norm)
    }

    /// Branch direction (unit) closest to `dir`.
    pub fn nearest_branch(&self, dir: Vec2) -> Vec2 {
        let a = dir.angle();
        let k = ((a - self.angle) / FRAC_PI_2).round();
        Vec2::from_angle(self.angle + k * FRAC_PI_2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyViolation {
    pub edge: usize,
    pub location: Vec2,
    /// Radians.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub meshable: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub violations: Vec<TangencyViolation>,
}

pub const DEFAULT_TANGENCY_TOL_DEG: f64 = 2.0;

/// Harmonic-conjugate cross-field on a (spoke-refined) mesh.
#[derive(Debug, Clone)]
pub struct CrossField {
    pub mesh: TriMesh,
    pub pattern: SingularityPattern,
    pub cut: BranchCut,
    pub h: ScalarFieldH,
    pub theta: ScalarFieldTheta,
    singular: Vec<bool>,
}

impl CrossField {
    pub fn compute(mesh: TriMesh, pattern: SingularityPattern) -> Result<Self, ConformalError> {
        Self::compute_with_anchor(mesh, pattern, None)
    }

    pub fn compute_with_anchor(mesh: TriMesh, pattern: SingularityPattern, anchor: Option<usize>) -> Result<Self, ConformalError> {
        let h = solve_h(&mesh, &pattern)?;
        let cut = build_branch_cut(&mesh, &pattern);
        let theta = solve_theta(&mesh, &h, &cut, anchor)?;
        let mut singular = vec![false; mesh.num_vertices()];
        for s in &pattern.singularities {
            singular[s.vertex] = true;
        }
        Ok(Self { mesh, pattern, cut, h, theta, singular })
    }

    pub fn h_at(&self, loc: &PointLocation) -> f64 {
        let [a, b, c] = self.mesh.triangle(loc.triangle);
        let v = &self.h.values;
        loc.bary[0] * v[a] + loc.bary[1] * v[b] + loc.bary[2] * v[c]
    }

    pub fn eval(&self, loc: &PointLocation) -> Cross {
        let tri = self.mesh.triangle(loc.triangle);
        let singular = (0..3).any(|k| loc.bary[k] == 1.0 && self.singular[tri[k]]);
        Cross { norm: self.h_at(loc).exp(), angle: self.theta.value(loc), singular }
    }

    pub fn eval_at(&self, p: Vec2) -> Result<Cross, ConformalError> {
        Ok(self.eval(&self.mesh.locate(p)?))
    }

    /// `Σ area·‖∇θ − n×∇H‖² / Σ area·‖∇H‖²` over triangles accepted by `keep`.
    pub fn conjugacy_residual(&self, keep: impl Fn(usize) -> bool) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for t in 0..self.mesh.num_triangles() {
            if !keep(t) {
                continue;
            }
            let gh = p1_gradient(&self.mesh, t, &self.h.values);
            let gt = self.theta.gradient(&self.mesh, t);
            let a = self.mesh.tri_area(t);
            num += a * (gt - gh.perp()).norm2();
            den += a * gh.norm2();
        }
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    /// Winding of `4θ` around every vertex star, sampled at the midpoints of
    /// the edges incident to the vertex. Boundary vertices add their turning
    /// beyond the corner quarters to close the open chain.
    pub fn vertex_indices(&self) -> Vec<(usize, f64)> {
        let m = &self.mesh;
        let turning = turning_angles(m);
        let mut out = Vec::new();
        for v in 0..m.num_vertices() {
            let fan = m.ordered_fan(v);
            let link = m.ordered_link(v);
            let boundary = m.is_boundary_vertex(v);
            let mut sum = 0.0;
            let mut prev: Option<f64> = None;
            for (i, &t) in fan.iter().enumerate() {
                let e_in = m.edge_between(v, link[i]).unwrap();
                let e_out = m.edge_between(v, link[(i + 1) % link.len()]).unwrap();
                let a = 4.0 * self.theta.edge_value(m, t, e_in);
                let b = 4.0 * self.theta.edge_value(m, t, e_out);
                // across an edge θ only jumps by quarter turns; inside a triangle it is
                // linear, so the change is taken as is (wrapping it aliases near
                // high-valence singularities)
                if let Some(p) = prev {
                    sum += wrap_pi(a - p);
                }
                sum += b - a;
                prev = Some(b);
            }
            if !boundary {
                let t0 = fan[0];
                let first = 4.0 * self.theta.edge_value(m, t0, m.edge_between(v, link[0]).unwrap());
                sum += wrap_pi(first - prev.unwrap());
                out.push((v, sum / TAU));
            } else {
                let tau = turning[&v];
                let c = sum / 4.0 + tau - corner_quarters(tau) as f64 * FRAC_PI_2;
                out.push((v, c / FRAC_PI_2));
            }
        }
        out
    }

    /// Singularity pattern read back from the reconstructed field.
    pub fn redetect(&self) -> Result<SingularityPattern, ConformalError> {
        let mut entries = Vec::new();
        for (v, w) in self.vertex_indices() {
            let t = w.round();
            if (w - t).abs() > 1e-3 {
                return Err(ConformalError::Pattern(SingularityError::UnresolvedWinding { triangle: v, winding: w }));
            }
            if t != 0.0 {
                entries.push((v, t as i32));
            }
        }
        Ok(SingularityPattern::from_indices(&self.mesh, &entries)?)
    }

    /// Angle between each boundary edge and the nearest cross branch at its midpoint.
    pub fn check_tangency(&self, tol: f64) -> TangencyReport {
        let m = &self.mesh;
        let mut max_dev: f64 = 0.0;
        let mut violations = Vec::new();
        for l in m.boundary_loops() {
            let n = l.vertices.len();
            for i in 0..n {
                let e = m.edge_between(l.vertices[i], l.vertices[(i + 1) % n]).unwrap();
                let t = m.edge_triangles(e)[0];
                let theta = self.theta.edge_value(m, t, e);
                let dev = quarter_turn_distance(theta, boundary_tangent(m, e).angle());
                max_dev = max_dev.max(dev);
                if dev >= tol {
                    violations.push(TangencyViolation { edge: e, location: m.edge_midpoint(e), deviation: dev });
                }
            }
        }
        TangencyReport { meshable: violations.is_empty(), max_deviation: max_dev, tolerance: tol, violations }
    }

    pub fn is_singular(&self, v: usize) -> bool {
        self.singular[v]
    }

    /// Quarter-turn offset between `θ` and the boundary tangent, averaged per loop.
    pub fn loop_offsets(&self) -> HashMap<usize, f64> {
        let m = &self.mesh;
        let mut out = HashMap::new();
        for (li, l) in m.boundary_loops().iter().enumerate() {
            let n = l.vertices.len();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let e = m.edge_between(l.vertices[i], l.vertices[(i + 1) % n]).unwrap();
                let t = m.edge_triangles(e)[0];
                let d = quarter_turn_distance(self.theta.edge_value(m, t, e), boundary_tangent(m, e).angle());
                worst = worst.max(d);
            }
            out.insert(li, worst);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::spokes::{refine_spokes, SpokeParams};

    fn refined(mesh: &TriMesh, entries: &[(usize, i32)]) -> (TriMesh, SingularityPattern) {
        let p = SingularityPattern::from_valences(mesh, entries).unwrap();
        let r = refine_spokes(mesh, &p, &SpokeParams::default()).unwrap();
        let p = p.remap(&r.mesh, &(0..mesh.num_vertices()).collect::<Vec<_>>()).unwrap();
        (r.mesh, p)
    }

    #[test]
    fn square_is_trivial() {
        let m = fixtures::unit_square(8);
        let cf = CrossField::compute(m.clone(), SingularityPattern::empty(&m)).unwrap();
        assert!(cf.cut.edges.is_empty());
        assert!(cf.h.spread() < 1e-9);
        for v in &cf.theta.tri_values {
            for x in v {
                assert!((x - cf.theta.tri_values[0][0]).abs() < 1e-9);
            }
        }
        let t = cf.check_tangency(DEFAULT_TANGENCY_TOL_DEG.to_radians());
        assert!(t.meshable && t.max_deviation < 1e-6);
        let c = cf.eval_at(Vec2::new(0.3, 0.7)).unwrap();
        assert!((c.norm - 1.0).abs() < 1e-9);
        assert!(quarter_turn_distance(c.angle, 0.0) < 1e-9);
    }

    #[test]
    fn three_five_pair() {
        let m = fixtures::unit_square(12);
        let a = m.nearest_vertex(Vec2::new(1.0 / 3.0, 0.5));
        let b = m.nearest_vertex(Vec2::new(2.0 / 3.0, 0.5));
        let (rm, p) = refined(&m, &[(a, 3), (b, 5)]);
        let cf = CrossField::compute(rm, p.clone()).unwrap();
        assert_eq!(cut_open_euler(&cf.mesh, &cf.cut), 1);
        assert!(cf.h.values[a] < cf.h.values[b]);
        let r = cf.conjugacy_residual(|_| true);
        assert!(r < 1e-8, "{r}");
        assert_eq!(cf.redetect().unwrap(), p);
        let tan = cf.check_tangency(2f64.to_radians());
        assert!(tan.meshable, "{}", tan.max_deviation);
    }

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn h_matches_dense_oracle() {
        let m = fixtures::unit_square(6);
        let a = m.nearest_vertex(Vec2::new(1.0 / 3.0, 0.5));
        let b = m.nearest_vertex(Vec2::new(2.0 / 3.0, 0.5));
        let p = SingularityPattern::from_valences(&m, &[(a, 3), (b, 5)]).unwrap();
        let h = solve_h(&m, &p).unwrap();
        // independent assembly: cotangent weights from corner angles, pin vertex 0
        let n = m.num_vertices();
        let mut k = vec![vec![0.0; n]; n];
        for t in 0..m.num_triangles() {
            let tri = m.triangle(t);
            for c in 0..3 {
                let ang = m.corner_angle(t, c);
                let (i, j) = (tri[(c + 1) % 3], tri[(c + 2) % 3]);
                let w = 0.5 / ang.tan();
                k[i][j] -= w;
                k[j][i] -= w;
                k[i][i] += w;
                k[j][j] += w;
            }
        }
        let mut rhs = vec![0.0; n];
        for l in m.boundary_loops() {
            for (&v, &tau) in l.vertices.iter().zip(&l.turning) {
                rhs[v] += tau - (tau / FRAC_PI_2).round() * FRAC_PI_2;
            }
        }
        rhs[a] -= FRAC_PI_2;
        rhs[b] += FRAC_PI_2;
        let free: Vec<usize> = (1..n).collect();
        let sub: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| k[i][j]).collect()).collect();
        let sol = dense_solve(sub, free.iter().map(|&i| rhs[i]).collect());
        let mut full = vec![0.0];
        full.extend(sol);
        let mass = lumped_mass(&m);
        let mean = full.iter().zip(&mass).map(|(x, w)| x * w).sum::<f64>() / mass.iter().sum::<f64>();
        for (x, y) in full.iter().zip(&h.values) {
            assert!((x - mean - y).abs() < 1e-10);
        }
        assert!(h.values[a] < 0.0 && h.values[b] > 0.0);
    }

    #[test]
    fn incompatible_pattern_is_refused() {
        let m = fixtures::unit_square(8);
        let c = m.nearest_vertex(Vec2::new(0.5, 0.5));
        let p = SingularityPattern::from_valences(&m, &[(c, 5)]).unwrap();
        assert!(!compatibility(&m, &p).ok);
        match solve_h(&m, &p) {
            Err(ConformalError::Incompatible(r)) => assert_eq!(r.deficit, "-1/4"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compatibility_mass_balances() {
        let m = fixtures::square_minus_disk(0.2, 48, 8);
        assert!(!compatibility(&m, &SingularityPattern::empty(&m)).ok);
        let diag: Vec<(usize, i32)> = [(0.2, 0.2), (0.8, 0.2), (0.8, 0.8), (0.2, 0.8)]
            .iter()
            .map(|&(x, y)| (m.nearest_vertex(Vec2::new(x, y)), 5))
            .collect();
        let p = SingularityPattern::from_valences(&m, &diag).unwrap();
        let c = compatibility(&m, &p);
        assert!(c.ok);
        assert!((c.corner_mass - TAU).abs() < 1e-12);
        assert!(c.source_mass.abs() < 1e-9 && c.assembled_total.abs() < 1e-9);
    }

    #[test]
    fn cut_straddle_gives_same_cross() {
        let m = fixtures::unit_square(12);
        let a = m.nearest_vertex(Vec2::new(0.4, 0.45));
        let b = m.nearest_vertex(Vec2::new(0.6, 0.55));
        let (rm, p) = refined(&m, &[(a, 3), (b, 5)]);
        let cf = CrossField::compute(rm, p).unwrap();
        assert!(!cf.cut.edges.is_empty());
        for &(e, _, _) in &cf.theta.jumps {
            let [t0, t1] = cf.mesh.edge_triangles(e);
            let v0 = cf.theta.edge_value(&cf.mesh, t0, e);
            let v1 = cf.theta.edge_value(&cf.mesh, t1, e);
            assert!(quarter_turn_distance(v0, v1) < 1e-6);
        }
    }

    #[test]
    fn anchor_choice_only_shifts_by_quarter_turns() {
        let m = fixtures::unit_square(12);
        let a = m.nearest_vertex(Vec2::new(0.4, 0.45));
        let b = m.nearest_vertex(Vec2::new(0.6, 0.55));
        let (rm, p) = refined(&m, &[(a, 3), (b, 5)]);
        let cf1 = CrossField::compute(rm.clone(), p.clone()).unwrap();
        let l = &rm.outer_loop().vertices;
        let other = rm.edge_between(l[1], l[2]).unwrap();
        let cf2 = CrossField::compute_with_anchor(rm, p, Some(other)).unwrap();
        let d0 = cf2.theta.tri_values[0][0] - cf1.theta.tri_values[0][0];
        for (x, y) in cf1.theta.tri_values.iter().zip(&cf2.theta.tri_values) {
            for k in 0..3 {
                assert!(((y[k] - x[k]) - d0).abs() < 1e-8);
            }
        }
        assert!(quarter_turn_distance(d0, 0.0) < 1e-8);
    }

    #[test]
    fn annulus_tangency_classification() {
        let m = fixtures::annulus(Vec2::ZERO, 0.3, 1.0, 64, 16);
        let (good, bad) = fixtures::annulus_pair_patterns(&m);
        let tol = DEFAULT_TANGENCY_TOL_DEG.to_radians();
        let (rm, p) = refined(&m, &good);
        let cf = CrossField::compute(rm, p).unwrap();
        assert_eq!(cut_open_euler(&cf.mesh, &cf.cut), 1);
        assert_eq!(cf.cut.anchors.len(), 9);
        assert!(cf.check_tangency(tol).meshable);
        let (rm, p) = refined(&m, &bad);
        let cf = CrossField::compute(rm, p).unwrap();
        let rep = cf.check_tangency(tol);
        assert!(!rep.meshable);
        // violations sit on the inner loop only
        for v in &rep.violations {
            assert!(v.location.norm() < 0.31);
        }
    }

    #[test]
    fn valence_eight_with_boundary_singlets() {
        let m = fixtures::unit_square(16);
        let c = m.nearest_vertex(Vec2::new(0.5, 0.5));
        let mids: Vec<usize> =
            [(0.5, 0.0), (1.0, 0.5), (0.5, 1.0), (0.0, 0.5)].iter().map(|&(x, y)| m.nearest_vertex(Vec2::new(x, y))).collect();
        let mut e = vec![(c, 8)];
        e.extend(mids.iter().map(|&v| (v, 1)));
        let (rm, p) = refined(&m, &e);
        assert!(crate::singularity::validate(&p, &rm).ok);
        let cf = CrossField::compute(rm, p.clone()).unwrap();
        assert_eq!(cf.redetect().unwrap(), p);
        assert!(cf.check_tangency(2f64.to_radians()).meshable);
        assert!(cf.conjugacy_residual(|_| true) < 1e-8);
    }
}
