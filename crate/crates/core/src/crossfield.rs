//! First cross-field: MBO iteration (implicit diffusion then unit-norm
//! projection) on the representation vector `(cos 4θ, sin 4θ)`.

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{dirichlet_energy, lumped_mass, stiffness, ConstrainedSolver};
use crate::geom::Vec2;
use crate::mesh::TriMesh;
use crate::sparse::{CsrMatrix, SolveError, Triplets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossFieldError {
    #[error("zero-length boundary edge at vertex {0}")]
    ZeroLengthEdge(usize),
    #[error("diffusion solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Per-vertex representation vector; unit length except possibly near singularities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationField {
    pub v: Vec<[f64; 2]>,
}

impl RepresentationField {
    pub fn uniform(n: usize, value: [f64; 2]) -> Self {
        Self { v: vec![value; n] }
    }

    /// Builds a field from a cross angle per vertex.
    pub fn from_angles(angles: &[f64]) -> Self {
        Self { v: angles.iter().map(|a| [(4.0 * a).cos(), (4.0 * a).sin()]).collect() }
    }

    /// Representation angle `4θ` at vertex `i`, in `(-π, π]`.
    pub fn rep_angle(&self, i: usize) -> f64 {
        self.v[i][1].atan2(self.v[i][0])
    }

    /// One cross angle `θ ∈ (-π/4, π/4]` at vertex `i`.
    pub fn cross_angle(&self, i: usize) -> f64 {
        self.rep_angle(i) / 4.0
    }

    pub fn energy(&self, mesh: &TriMesh) -> f64 {
        let x: Vec<f64> = self.v.iter().map(|p| p[0]).collect();
        let y: Vec<f64> = self.v.iter().map(|p| p[1]).collect();
        dirichlet_energy(mesh, &x) + dirichlet_energy(mesh, &y)
    }
}

/// Projects every vector with nonzero norm onto the unit circle.
pub fn project(field: &mut RepresentationField) {
    for p in &mut field.v {
        let n = p[0].hypot(p[1]);
        if n > 0.0 {
            p[0] /= n;
            p[1] /= n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub alphas: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub max_iterations: usize,
}

pub const MIN_LEVELS: usize = 5;
pub const MAX_LEVELS: usize = 10;

/// Geometric sequence from `(0.1·bbox_diag)²` down to `min_edge²`.
pub fn make_schedule(mesh: &TriMesh, n_levels: usize) -> DiffusionSchedule {
    make_schedule_with(mesh, n_levels, 1e-3, 1e-5, 500)
}

pub fn make_schedule_with(
    mesh: &TriMesh,
    n_levels: usize,
    level_tol: f64,
    final_tol: f64,
    max_iterations: usize,
) -> DiffusionSchedule {
    let levels = n_levels.clamp(MIN_LEVELS, MAX_LEVELS);
    if levels != n_levels {
        warn!("diffusion levels {n_levels} clamped to {levels}");
    }
    let first = (0.1 * mesh.bbox_diagonal()).powi(2);
    let last = mesh.min_edge_length().powi(2);
    if last >= first {
        return DiffusionSchedule { alphas: vec![last], tolerances: vec![final_tol], max_iterations };
    }
    let ratio = (last / first).powf(1.0 / (levels - 1) as f64);
    let mut alphas: Vec<f64> = (0..levels).map(|i| first * ratio.powi(i as i32)).collect();
    alphas[levels - 1] = last;
    let mut tolerances = vec![level_tol; levels];
    tolerances[levels - 1] = final_tol;
    DiffusionSchedule { alphas, tolerances, max_iterations }
}

/// Representation of the boundary tangent at each boundary vertex; corners
/// average the two incident edge representations and renormalize.
pub fn boundary_alignment(mesh: &TriMesh) -> Result<Vec<(usize, [f64; 2])>, CrossFieldError> {
    let mut out = Vec::new();
    for l in mesh.boundary_loops() {
        let n = l.vertices.len();
        for k in 0..n {
            let prev = l.vertices[(k + n - 1) % n];
            let v = l.vertices[k];
            let next = l.vertices[(k + 1) % n];
            let t_in = mesh.vertex(v) - mesh.vertex(prev);
            let t_out = mesh.vertex(next) - mesh.vertex(v);
            if t_in.norm() == 0.0 || t_out.norm() == 0.0 {
                return Err(CrossFieldError::ZeroLengthEdge(v));
            }
            let r = |t: Vec2| Vec2::from_angle(4.0 * t.angle());
            let s = r(t_in) + r(t_out);
            let rep = if s.norm() < 1e-12 { r(t_out) } else { s.normalized() };
            out.push((v, [rep.x, rep.y]));
        }
    }
    out.sort_by_key(|p| p.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub alpha: f64,
    pub iterations: usize,
    pub final_change: f64,
    pub converged: bool,
    /// Dirichlet energy after each projection.
    pub energies: Vec<f64>,
    /// Thresholding energy of each iterate at this level's α; the MBO
    /// iteration never increases it.
    pub mbo_energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MboResult {
    pub field: RepresentationField,
    pub levels: Vec<LevelReport>,
    /// False when some level hit `max_iterations`; `field` is then the last iterate.
    pub converged: bool,
}

/// Runs the MBO iteration over the whole schedule.
pub fn mbo_solve(mesh: &TriMesh, schedule: &DiffusionSchedule) -> Result<MboResult, CrossFieldError> {
    let n = mesh.num_vertices();
    let bc = boundary_alignment(mesh)?;
    let mut fixed = vec![false; n];
    let mut field = RepresentationField::uniform(n, [0.0, 0.0]);
    for &(v, rep) in &bc {
        fixed[v] = true;
        field.v[v] = rep;
    }
    let k = stiffness(mesh);
    let mass = lumped_mass(mesh);
    let mut levels = Vec::new();
    let mut all_converged = true;
    for (li, (&alpha, &tol)) in schedule.alphas.iter().zip(&schedule.tolerances).enumerate() {
        let solver = diffusion_solver(&k, &mass, alpha, &fixed)?;
        let mut report = LevelReport {
            alpha,
            iterations: 0,
            final_change: f64::INFINITY,
            converged: false,
            energies: vec![],
            mbo_energies: vec![],
        };
        // response to the boundary data alone
        let zero = RepresentationField { v: field.v.iter().zip(&fixed).map(|(p, &f)| if f { *p } else { [0.0, 0.0] }).collect() };
        let z = diffuse(&solver, &vec![0.0; n], &zero)?;
        for it in 0..schedule.max_iterations {
            let mut next = diffuse(&solver, &mass, &field)?;
            report.mbo_energies.push(thresholding_energy(&field, &next, &z, &mass, &fixed));
            project(&mut next);
            let change = next
                .v
                .iter()
                .zip(&field.v)
                .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
                .fold(0.0, f64::max);
            field = next;
            report.iterations = it + 1;
            report.final_change = change;
            report.energies.push(field.energy(mesh));
            if change < tol {
                report.converged = true;
                break;
            }
        }
        debug!("mbo level {li}: alpha={alpha:.3e} iterations={} change={:.2e}", report.iterations, report.final_change);
        all_converged &= report.converged;
        levels.push(report);
    }
    Ok(MboResult { field, levels, converged: all_converged })
}

/// Factorization of `M + αK` with boundary rows eliminated.
pub fn diffusion_solver(k: &CsrMatrix, mass: &[f64], alpha: f64, fixed: &[bool]) -> Result<ConstrainedSolver, SolveError> {
    let mut m = Triplets::new(mass.len());
    for (i, &w) in mass.iter().enumerate() {
        m.add(i, i, w);
    }
    let a = m.to_csr().combine(1.0, k, alpha);
    ConstrainedSolver::new(a, fixed)
}

/// One implicit Euler diffusion step on both components (shared factorization),
/// without projection.
pub fn diffuse(solver: &ConstrainedSolver, mass: &[f64], field: &RepresentationField) -> Result<RepresentationField, SolveError> {
    let mut out = field.clone();
    for c in 0..2 {
        let prev: Vec<f64> = field.v.iter().map(|p| p[c]).collect();
        let rhs: Vec<f64> = prev.iter().zip(mass).map(|(x, m)| x * m).collect();
        let x = solver.solve(&rhs, &prev)?;
        for (o, xi) in out.v.iter_mut().zip(x) {
            o[c] = xi;
        }
    }
    Ok(out)
}

/// `½⟨x, Mx⟩ − ½⟨Mx, y + z⟩` over free vertices, where `y` is the diffusion of
/// `x` and `z` the diffusion of the boundary data alone.
fn thresholding_energy(
    x: &RepresentationField,
    y: &RepresentationField,
    z: &RepresentationField,
    mass: &[f64],
    fixed: &[bool],
) -> f64 {
    let mut e = 0.0;
    for i in 0..mass.len() {
        if fixed[i] {
            continue;
        }
        for c in 0..2 {
            e += 0.5 * mass[i] * x.v[i][c] * (x.v[i][c] - y.v[i][c] - z.v[i][c]);
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::PI;

    #[test]
    fn axis_aligned_square_boundary_is_uniform() {
        let m = fixtures::unit_square(4);
        for (_, r) in boundary_alignment(&m).unwrap() {
            assert!((r[0] - 1.0).abs() < 1e-12 && r[1].abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_tangent_maps_to_minus_one() {
        // square rotated by 45°: every boundary tangent sits at 45° mod 90°
        let v = vec![Vec2::new(0.0, -1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(-1.0, 0.0)];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        for (_, r) in boundary_alignment(&m).unwrap() {
            assert!((r[0] + 1.0).abs() < 1e-12 && r[1].abs() < 1e-12);
        }
    }

    #[test]
    fn circle_boundary_matches_analytic_tangent() {
        let m = fixtures::disk(Vec2::ZERO, 1.0, 8);
        let bc = boundary_alignment(&m).unwrap();
        let nb = m.outer_loop().vertices.len() as f64;
        for (v, r) in bc {
            let phi = m.vertex(v).angle();
            // the chords on either side are symmetric about the tangent direction
            let want = 4.0 * (phi + PI / 2.0);
            assert!((r[0] - want.cos()).abs() < 1e-9, "n={nb}");
            assert!((r[1] - want.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_is_geometric_and_clamped() {
        let m = fixtures::unit_square(10);
        let s = make_schedule(&m, 5);
        assert_eq!(s.alphas.len(), 5);
        assert!((s.alphas[0] - (0.1 * 2f64.sqrt()).powi(2)).abs() < 1e-15);
        assert!((s.alphas[4] - 0.01).abs() < 1e-15);
        let r0 = s.alphas[1] / s.alphas[0];
        for w in s.alphas.windows(2) {
            assert!((w[1] / w[0] - r0).abs() < 1e-12);
        }
        assert_eq!(make_schedule(&m, 1).alphas.len(), 5);
        assert_eq!(make_schedule(&m, 40).alphas.len(), 10);
        let coarse = fixtures::unit_square(1);
        let s = make_schedule(&coarse, 5);
        assert_eq!(s.alphas, vec![1.0]);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut f = RepresentationField { v: vec![[3.0, 4.0], [0.0, -2.0], [0.0, 0.0]] };
        project(&mut f);
        let once = f.clone();
        project(&mut f);
        assert_eq!(f, once);
        assert_eq!(f.v[0], [0.6, 0.8]);
    }

    #[test]
    fn tiny_diffusion_is_identity_on_interior() {
        let m = fixtures::unit_square(6);
        let k = stiffness(&m);
        let mass = lumped_mass(&m);
        let fixed: Vec<bool> = (0..m.num_vertices()).map(|v| m.is_boundary_vertex(v)).collect();
        let f = RepresentationField::from_angles(&(0..m.num_vertices()).map(|i| i as f64 * 0.1).collect::<Vec<_>>());
        let s = diffusion_solver(&k, &mass, 1e-14, &fixed).unwrap();
        let g = diffuse(&s, &mass, &f).unwrap();
        for (a, b) in f.v.iter().zip(&g.v) {
            assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn square_field_is_constant() {
        let m = fixtures::unit_square(8);
        let r = mbo_solve(&m, &make_schedule(&m, 5)).unwrap();
        assert!(r.converged);
        for p in &r.field.v {
            assert!((p[0] - 1.0).abs() < 1e-9 && p[1].abs() < 1e-9);
        }
    }

    #[test]
    fn energy_non_increasing_per_level() {
        for m in [fixtures::disk(Vec2::ZERO, 1.0, 8), fixtures::square_minus_disk(0.2, 48, 8)] {
            let r = mbo_solve(&m, &make_schedule(&m, 5)).unwrap();
            for (li, l) in r.levels.iter().enumerate() {
                // the very first iterate (zero interior) is not a unit field
                let e = if li == 0 { &l.mbo_energies[1..] } else { &l.mbo_energies[..] };
                let scale = e.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                for w in e.windows(2) {
                    assert!(w[1] <= w[0] + 1e-10 * scale, "alpha {}: {} -> {}", l.alpha, w[0], w[1]);
                }
            }
        }
    }

    #[test]
    fn mbo_energy_matches_dense_formula() {
        let m = fixtures::unit_square(3);
        let n = m.num_vertices();
        let k = stiffness(&m);
        let mass = lumped_mass(&m);
        let fixed: Vec<bool> = (0..n).map(|v| m.is_boundary_vertex(v)).collect();
        let alpha = 0.05;
        let solver = diffusion_solver(&k, &mass, alpha, &fixed).unwrap();
        let x = RepresentationField::from_angles(&(0..n).map(|i| 0.3 * i as f64).collect::<Vec<_>>());
        let y = diffuse(&solver, &mass, &x).unwrap();
        let zero = RepresentationField { v: x.v.iter().zip(&fixed).map(|(p, &f)| if f { *p } else { [0.0, 0.0] }).collect() };
        let z = diffuse(&solver, &vec![0.0; n], &zero).unwrap();
        let e = thresholding_energy(&x, &y, &z, &mass, &fixed);
        // dense: ½xᵀMx − ½xᵀMA⁻¹Mx − xᵀMA⁻¹b with A = M + αK on free rows, b = −αK_IB x_B
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let nf = free.len();
        let mut want = 0.0;
        for c in 0..2 {
            let mut a = vec![vec![0.0; nf]; nf];
            let mut b = vec![0.0; nf];
            for (r, &i) in free.iter().enumerate() {
                for (j, v) in k.row(i) {
                    if let Some(cc) = free.iter().position(|&f| f == j) {
                        a[r][cc] += alpha * v;
                    } else {
                        b[r] -= alpha * v * x.v[j][c];
                    }
                }
                a[r][r] += mass[i];
            }
            let mx: Vec<f64> = free.iter().map(|&i| mass[i] * x.v[i][c]).collect();
            let rhs: Vec<f64> = mx.iter().zip(&b).map(|(p, q)| p + 2.0 * q).collect();
            let sol = dense_solve(a, rhs);
            for r in 0..nf {
                want += 0.5 * mx[r] * x.v[free[r]][c] - 0.5 * mx[r] * sol[r];
            }
        }
        assert!((e - want).abs() < 1e-12, "{e} vs {want}");
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
    fn dirichlet_energy_is_reported() {
        let m = fixtures::disk(Vec2::ZERO, 1.0, 6);
        let r = mbo_solve(&m, &make_schedule(&m, 5)).unwrap();
        for l in &r.levels {
            assert_eq!(l.energies.len(), l.iterations);
            assert_eq!(l.mbo_energies.len(), l.iterations);
            assert!(l.energies.iter().all(|e| e.is_finite() && *e >= 0.0));
        }
    }
}
