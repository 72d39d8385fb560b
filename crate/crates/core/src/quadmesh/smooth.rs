//! Optional Winslow smoothing of the interior nodes of each patch grid.

use serde::{Deserialize, Serialize};

use super::QuadMesh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub iterations: usize,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { iterations: 20 }
    }
}

/// Gauss–Seidel sweeps of the Winslow equations on every patch grid, with
/// the patch boundary held fixed so welded nodes stay shared.
pub fn winslow(mesh: &mut QuadMesh, s: &Smoothing) {
    for _ in 0..s.iterations {
        for g in &mesh.grids {
            let w = g.m + 1;
            for j in 1..g.n {
                for i in 1..g.m {
                    let at = |di: isize, dj: isize| {
                        let k = (j as isize + dj) as usize * w + (i as isize + di) as usize;
                        mesh.vertices[g.ids[k]]
                    };
                    let xi = (at(1, 0) - at(-1, 0)) * 0.5;
                    let eta = (at(0, 1) - at(0, -1)) * 0.5;
                    let alpha = eta.norm2();
                    let gamma = xi.norm2();
                    let beta = xi.dot(eta);
                    let denom = 2.0 * (alpha + gamma);
                    if denom <= 0.0 {
                        continue;
                    }
                    let cross = at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1);
                    let p = ((at(1, 0) + at(-1, 0)) * alpha + (at(0, 1) + at(0, -1)) * gamma - cross * (0.5 * beta)) * (1.0 / denom);
                    mesh.vertices[g.ids[j * w + i]] = p;
                }
            }
        }
    }
}
