//! Linear finite-element building blocks on a [`TriMesh`]: P1 (nodal) and
//! Crouzeix–Raviart (edge-midpoint) bases, stiffness assembly and constrained solves.

use crate::geom::Vec2;
use crate::mesh::TriMesh;
use crate::sparse::{CsrMatrix, SkylineCholesky, SolveError, Triplets};

/// Gradients of the three P1 hat functions on triangle `t`.
pub fn p1_gradients(mesh: &TriMesh, t: usize) -> [Vec2; 3] {
    let p = mesh.tri_points(t);
    let two_a = (p[1] - p[0]).cross(p[2] - p[0]);
    [
        (p[2] - p[1]).perp() / two_a,
        (p[0] - p[2]).perp() / two_a,
        (p[1] - p[0]).perp() / two_a,
    ]
}

/// Gradient of the P1 interpolant of `values` on triangle `t`.
pub fn p1_gradient(mesh: &TriMesh, t: usize, values: &[f64]) -> Vec2 {
    let g = p1_gradients(mesh, t);
    let tri = mesh.triangle(t);
    g[0] * values[tri[0]] + g[1] * values[tri[1]] + g[2] * values[tri[2]]
}

/// Cotangent stiffness matrix `K_ij = ∫ ∇φ_i·∇φ_j`.
pub fn stiffness(mesh: &TriMesh) -> CsrMatrix {
    let mut t = Triplets::new(mesh.num_vertices());
    for tri in 0..mesh.num_triangles() {
        let g = p1_gradients(mesh, tri);
        let a = mesh.tri_area(tri);
        let ids = mesh.triangle(tri);
        for i in 0..3 {
            for j in 0..3 {
                t.add(ids[i], ids[j], a * g[i].dot(g[j]));
            }
        }
    }
    t.to_csr()
}

/// Row-sum lumped mass.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let a = mesh.tri_area(t) / 3.0;
        for v in mesh.triangle(t) {
            m[v] += a;
        }
    }
    m
}

/// Discrete Dirichlet energy `½ Σ_T A_T |∇u|²` of a nodal field.
pub fn dirichlet_energy(mesh: &TriMesh, u: &[f64]) -> f64 {
    (0..mesh.num_triangles()).map(|t| 0.5 * mesh.tri_area(t) * p1_gradient(mesh, t, u).norm2()).sum()
}

/// Gradients of the Crouzeix–Raviart basis on triangle `t`; entry `k` belongs to
/// the edge opposite local vertex `k` (`ψ_k = 1 − 2φ_k`).
pub fn cr_gradients(mesh: &TriMesh, t: usize) -> [Vec2; 3] {
    let g = p1_gradients(mesh, t);
    [g[0] * -2.0, g[1] * -2.0, g[2] * -2.0]
}

/// Crouzeix–Raviart basis values at barycentric coordinates `bary`.
pub fn cr_basis(bary: [f64; 3]) -> [f64; 3] {
    [1.0 - 2.0 * bary[0], 1.0 - 2.0 * bary[1], 1.0 - 2.0 * bary[2]]
}

/// Symmetric positive definite system with a subset of unknowns prescribed.
/// The reduced matrix is factored once and reused for any right-hand side.
#[derive(Debug, Clone)]
pub struct ConstrainedSolver {
    matrix: CsrMatrix,
    free: Vec<usize>,
    fixed: Vec<usize>,
    factor: SkylineCholesky,
}

impl ConstrainedSolver {
    pub fn new(matrix: CsrMatrix, is_fixed: &[bool]) -> Result<Self, SolveError> {
        let free: Vec<usize> = (0..matrix.dim()).filter(|&i| !is_fixed[i]).collect();
        let fixed: Vec<usize> = (0..matrix.dim()).filter(|&i| is_fixed[i]).collect();
        let factor = SkylineCholesky::factor(&matrix.submatrix(&free))?;
        Ok(Self { matrix, free, fixed, factor })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves `A x = rhs` on the free rows with `x[i] = values[i]` on the fixed ones.
    pub fn solve(&self, rhs: &[f64], values: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.matrix.dim();
        let mut x = vec![0.0; n];
        for &i in &self.fixed {
            x[i] = values[i];
        }
        let ax = if self.fixed.is_empty() { vec![0.0; n] } else { self.matrix.mul_vec(&x) };
        let b: Vec<f64> = self.free.iter().map(|&i| rhs[i] - ax[i]).collect();
        let y = self.factor.solve(&b)?;
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn stiffness_annihilates_constants_and_reproduces_linear_energy() {
        let m = fixtures::unit_square(6);
        let k = stiffness(&m);
        let ones = vec![1.0; m.num_vertices()];
        assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
        let u: Vec<f64> = m.vertices().iter().map(|p| 2.0 * p.x - p.y).collect();
        let e = dirichlet_energy(&m, &u);
        assert!((e - 0.5 * 5.0).abs() < 1e-12);
        let ku = k.mul_vec(&u);
        let quad: f64 = u.iter().zip(&ku).map(|(a, b)| a * b).sum();
        assert!((quad - 2.0 * e).abs() < 1e-10);
    }

    #[test]
    fn cr_basis_is_one_at_own_midpoint() {
        // at the midpoint of edge 0 (between vertices 1 and 2) bary = (0, ½, ½)
        let b = cr_basis([0.0, 0.5, 0.5]);
        assert_eq!(b, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn lumped_mass_sums_to_area() {
        let m = fixtures::unit_square(5);
        assert!((lumped_mass(&m).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_solve_reproduces_harmonic_linear_field() {
        let m = fixtures::unit_square(8);
        let k = stiffness(&m);
        let fixed: Vec<bool> = (0..m.num_vertices()).map(|v| m.is_boundary_vertex(v)).collect();
        let vals: Vec<f64> = m.vertices().iter().map(|p| 3.0 * p.x + p.y).collect();
        let s = ConstrainedSolver::new(k, &fixed).unwrap();
        let x = s.solve(&vec![0.0; m.num_vertices()], &vals).unwrap();
        for (a, b) in x.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
