//! Structured triangulations of the reference domains used throughout the tests
//! and by the `fixture` CLI subcommand.

use std::f64::consts::TAU;

use crate::geom::Vec2;
use crate::mesh::TriMesh;

/// Union-jack triangulation of `[0,1]²` with `n × n` cells. For even `n` the
/// triangulation is invariant under the symmetry group of the square.
pub fn unit_square(n: usize) -> TriMesh {
    rectangle(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), n, n)
}

pub fn rectangle(lo: Vec2, hi: Vec2, nx: usize, ny: usize) -> TriMesh {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Vec2::new(
                lo.x + (hi.x - lo.x) * i as f64 / nx as f64,
                lo.y + (hi.y - lo.y) * j as f64 / ny as f64,
            ));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut t = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                t.push([a, b, c]);
                t.push([a, c, d]);
            } else {
                t.push([a, b, d]);
                t.push([b, c, d]);
            }
        }
    }
    TriMesh::new(v, t).expect("structured rectangle is valid")
}

/// Disk of the given radius centred at the origin: concentric rings with `6k`
/// points on ring `k`.
pub fn disk(center: Vec2, radius: f64, rings: usize) -> TriMesh {
    let mut v = vec![center];
    let mut ring_start = vec![0usize];
    let mut ring_len = vec![1usize];
    for k in 1..=rings {
        ring_start.push(v.len());
        let n = 6 * k;
        ring_len.push(n);
        let r = radius * k as f64 / rings as f64;
        for j in 0..n {
            let a = TAU * j as f64 / n as f64;
            v.push(center + Vec2::from_angle(a) * r);
        }
    }
    let mut t = Vec::new();
    for k in 0..rings {
        let (s0, n0) = (ring_start[k], ring_len[k]);
        let (s1, n1) = (ring_start[k + 1], ring_len[k + 1]);
        if n0 == 1 {
            for j in 0..n1 {
                t.push([s0, s1 + j, s1 + (j + 1) % n1]);
            }
            continue;
        }
        zipper(&v, center, s0, n0, s1, n1, &mut t);
    }
    TriMesh::new(v, t).expect("structured disk is valid")
}

/// Triangulates the band between two concentric rings by advancing along the
/// one whose next vertex has the smaller polar angle.
fn zipper(v: &[Vec2], c: Vec2, s0: usize, n0: usize, s1: usize, n1: usize, t: &mut Vec<[usize; 3]>) {
    let ang = |p: Vec2| (p - c).angle().rem_euclid(TAU);
    let (mut i, mut j) = (0usize, 0usize);
    while i < n0 || j < n1 {
        let a0 = if i < n0 { ang(v[s0 + (i + 1) % n0]) } else { f64::INFINITY };
        let a1 = if j < n1 { ang(v[s1 + (j + 1) % n1]) } else { f64::INFINITY };
        let a0 = if i + 1 == n0 { TAU } else { a0 };
        let a1 = if j + 1 == n1 { TAU } else { a1 };
        if a0 <= a1 && i < n0 {
            t.push([s0 + i % n0, s1 + j % n1, s0 + (i + 1) % n0]);
            i += 1;
        } else {
            t.push([s0 + i % n0, s1 + j % n1, s1 + (j + 1) % n1]);
            j += 1;
        }
    }
}

/// Splits a structured quad grid (rows of `n_around` points, closed in the
/// angular direction) into four triangles per cell around a centre vertex.
fn criss_cross_rings(mut v: Vec<Vec2>, n_around: usize, n_rows: usize) -> TriMesh {
    let id = |j: usize, k: usize| k * n_around + (j % n_around);
    let mut t = Vec::new();
    for k in 0..n_rows - 1 {
        for j in 0..n_around {
            let (a, b, c, d) = (id(j, k), id(j + 1, k), id(j + 1, k + 1), id(j, k + 1));
            let m = v.len();
            v.push((v[a] + v[b] + v[c] + v[d]) * 0.25);
            t.push([a, b, m]);
            t.push([b, c, m]);
            t.push([c, d, m]);
            t.push([d, a, m]);
        }
    }
    TriMesh::new(v, t).expect("structured ring mesh is valid")
}

/// Annulus centred at `center` with radii `r_in < r_out`.
pub fn annulus(center: Vec2, r_in: f64, r_out: f64, n_theta: usize, n_radial: usize) -> TriMesh {
    let mut v = Vec::with_capacity(n_theta * (n_radial + 1));
    for k in 0..=n_radial {
        // geometric radial spacing keeps cells close to square
        let r = r_in * (r_out / r_in).powf(k as f64 / n_radial as f64);
        for j in 0..n_theta {
            v.push(center + Vec2::from_angle(TAU * j as f64 / n_theta as f64) * r);
        }
    }
    criss_cross_rings(v, n_theta, n_radial + 1)
}

/// The unit square minus a centred disk of radius `r`, meshed as an O-grid.
/// `n_theta` must be a multiple of 8 so that the square corners are vertices.
pub fn square_minus_disk(r: f64, n_theta: usize, n_radial: usize) -> TriMesh {
    assert!(n_theta % 8 == 0, "n_theta must be a multiple of 8");
    let c = Vec2::new(0.5, 0.5);
    let mut v = Vec::with_capacity(n_theta * (n_radial + 1));
    let outer: Vec<Vec2> = (0..n_theta)
        .map(|j| {
            let a = TAU * j as f64 / n_theta as f64;
            let d = Vec2::from_angle(a);
            let s = 0.5 / d.x.abs().max(d.y.abs());
            let mut p = c + d * s;
            // exact coordinates on the square sides
            if (d.x.abs() - d.y.abs()).abs() < 1e-12 {
                p = Vec2::new(if d.x > 0.0 { 1.0 } else { 0.0 }, if d.y > 0.0 { 1.0 } else { 0.0 });
            } else if d.x.abs() > d.y.abs() {
                p.x = if d.x > 0.0 { 1.0 } else { 0.0 };
            } else {
                p.y = if d.y > 0.0 { 1.0 } else { 0.0 };
            }
            p
        })
        .collect();
    for k in 0..=n_radial {
        let s = k as f64 / n_radial as f64;
        for j in 0..n_theta {
            let a = TAU * j as f64 / n_theta as f64;
            let inner = c + Vec2::from_angle(a) * r;
            let w = s.powf(1.15);
            v.push(inner.lerp(outer[j], w));
        }
    }
    criss_cross_rings(v, n_theta, n_radial + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid_and_have_expected_topology() {
        assert_eq!(unit_square(6).euler_characteristic(), 1);
        assert_eq!(disk(Vec2::ZERO, 1.0, 6).euler_characteristic(), 1);
        assert_eq!(annulus(Vec2::ZERO, 0.3, 1.0, 24, 5).euler_characteristic(), 0);
        let m = square_minus_disk(0.2, 32, 6);
        assert_eq!(m.euler_characteristic(), 0);
        assert_eq!(m.inner_loops().len(), 1);
        for c in [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)] {
            let v = m.nearest_vertex(c);
            assert_eq!(m.vertex(v), c);
        }
    }
}

/// Four valence-3/valence-5 pairs on the `annulus(0, 0.3, 1.0, ..)` fixture.
/// The radially stacked placement admits a quad layout; the staggered one on a
/// single ring leaves the field misaligned with the inner loop.
pub fn annulus_pair_patterns(mesh: &TriMesh) -> (Vec<(usize, i32)>, Vec<(usize, i32)>) {
    let pick = |r: f64, deg: f64| mesh.nearest_vertex(Vec2::from_angle(deg.to_radians()) * r);
    let good = (0..4).flat_map(|j| [(pick(0.5, 45.0 + 90.0 * j as f64), 3), (pick(0.75, 45.0 + 90.0 * j as f64), 5)]).collect();
    let bad = (0..4).flat_map(|j| [(pick(0.6, 90.0 * j as f64), 3), (pick(0.6, 45.0 + 90.0 * j as f64), 5)]).collect();
    (good, bad)
}
