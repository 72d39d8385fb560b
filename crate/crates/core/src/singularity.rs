//! Singularity patterns: detection by winding number, quarter-integer
//! bookkeeping, validation, edits and JSON persistence.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossfield::RepresentationField;
use crate::geom::{wrap_pi, Vec2};
use crate::mesh::{corner_quarters, turning_angles, TriMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingularityError {
    #[error("vertex {0} is not a mesh vertex")]
    OffMesh(usize),
    #[error("valence {0} outside 1..=8")]
    BadValence(i32),
    #[error("valence {valence} at vertex {vertex} is regular, not a singularity")]
    RegularValence { vertex: usize, valence: i32 },
    #[error("no singularity at vertex {0}")]
    NotSingular(usize),
    #[error("vertex {0} already carries a singularity")]
    AlreadySingular(usize),
    #[error("triangle {triangle} winding {winding} is not a quarter-integer index")]
    UnresolvedWinding { triangle: usize, winding: f64 },
    #[error("pattern violates the index balance: deficit {}", .0.deficit)]
    Invalid(Box<ValidationReport>),
    #[error("pattern does not match mesh: {0}")]
    Mismatch(String),
    #[error("pattern JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
    /// Index numerator: the index is `t/4`.
    pub t: i32,
    pub valence: i32,
    pub boundary: bool,
}

impl Singularity {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityPattern {
    pub chi: i32,
    pub singularities: Vec<Singularity>,
}

/// Quarter turns absorbed by each boundary vertex of `mesh`.
pub fn boundary_quarters(mesh: &TriMesh) -> HashMap<usize, i32> {
    turning_angles(mesh).into_iter().map(|(v, a)| (v, corner_quarters(a))).collect()
}

/// Valence from the index numerator. Boundary vertices count the quarter turns
/// `q` of the corner: `valence = 2 − q − t`, which is `2 − t` on flat boundary.
pub fn valence_of(t: i32, boundary: bool, q: i32) -> i32 {
    if boundary {
        2 - q - t
    } else {
        4 - t
    }
}

pub fn t_of_valence(valence: i32, boundary: bool, q: i32) -> i32 {
    if boundary {
        2 - q - valence
    } else {
        4 - valence
    }
}

impl SingularityPattern {
    pub fn empty(mesh: &TriMesh) -> Self {
        Self { chi: mesh.chi_from_loops() as i32, singularities: vec![] }
    }

    /// Builds a pattern from `(vertex, t)` pairs; zero entries are dropped and
    /// repeated vertices are summed.
    pub fn from_indices(mesh: &TriMesh, entries: &[(usize, i32)]) -> Result<Self, SingularityError> {
        let quarters = boundary_quarters(mesh);
        let mut acc: BTreeMap<usize, i32> = BTreeMap::new();
        for &(v, t) in entries {
            if v >= mesh.num_vertices() {
                return Err(SingularityError::OffMesh(v));
            }
            *acc.entry(v).or_insert(0) += t;
        }
        let singularities = acc
            .into_iter()
            .filter(|&(_, t)| t != 0)
            .map(|(v, t)| make_singularity(mesh, &quarters, v, t))
            .collect();
        Ok(Self { chi: mesh.chi_from_loops() as i32, singularities })
    }

    pub fn from_valences(mesh: &TriMesh, entries: &[(usize, i32)]) -> Result<Self, SingularityError> {
        let quarters = boundary_quarters(mesh);
        let mut idx = Vec::new();
        for &(v, val) in entries {
            if v >= mesh.num_vertices() {
                return Err(SingularityError::OffMesh(v));
            }
            if !(1..=8).contains(&val) {
                return Err(SingularityError::BadValence(val));
            }
            let b = mesh.is_boundary_vertex(v);
            let t = t_of_valence(val, b, quarters.get(&v).copied().unwrap_or(0));
            if t == 0 {
                return Err(SingularityError::RegularValence { vertex: v, valence: val });
            }
            idx.push((v, t));
        }
        Self::from_indices(mesh, &idx)
    }

    pub fn get(&self, vertex: usize) -> Option<&Singularity> {
        self.singularities.iter().find(|s| s.vertex == vertex)
    }

    pub fn len(&self) -> usize {
        self.singularities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singularities.is_empty()
    }

    /// `Σ t` over all entries.
    pub fn index_sum(&self) -> i32 {
        self.singularities.iter().map(|s| s.t).sum()
    }

    pub fn vertices(&self) -> Vec<usize> {
        self.singularities.iter().map(|s| s.vertex).collect()
    }

    /// Renumbers vertices through `map[old] = new`, refreshing coordinates.
    pub fn remap(&self, mesh: &TriMesh, map: &[usize]) -> Result<Self, SingularityError> {
        let entries: Vec<(usize, i32)> = self.singularities.iter().map(|s| (map[s.vertex], s.t)).collect();
        Self::from_indices(mesh, &entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pattern serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SingularityError> {
        serde_json::from_str(text).map_err(|e| SingularityError::Json(e.to_string()))
    }

    /// Checks that every entry refers to a mesh vertex at the stored position
    /// with a valence consistent with its index.
    pub fn check_against(&self, mesh: &TriMesh) -> Result<(), SingularityError> {
        let quarters = boundary_quarters(mesh);
        let tol = mesh.location_tolerance().max(1e-9);
        if self.chi as i64 != mesh.chi_from_loops() {
            return Err(SingularityError::Mismatch(format!("chi {} but mesh has {}", self.chi, mesh.chi_from_loops())));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.singularities {
            if s.vertex >= mesh.num_vertices() {
                return Err(SingularityError::OffMesh(s.vertex));
            }
            if !seen.insert(s.vertex) {
                return Err(SingularityError::AlreadySingular(s.vertex));
            }
            if mesh.vertex(s.vertex).dist(s.position()) > tol {
                return Err(SingularityError::Mismatch(format!("vertex {} is not at ({}, {})", s.vertex, s.x, s.y)));
            }
            let b = mesh.is_boundary_vertex(s.vertex);
            let q = quarters.get(&s.vertex).copied().unwrap_or(0);
            if b != s.boundary || valence_of(s.t, b, q) != s.valence {
                return Err(SingularityError::Mismatch(format!("vertex {}: inconsistent valence/boundary flag", s.vertex)));
            }
            if s.t == 0 {
                return Err(SingularityError::RegularValence { vertex: s.vertex, valence: s.valence });
            }
        }
        Ok(())
    }
}

fn make_singularity(mesh: &TriMesh, quarters: &HashMap<usize, i32>, v: usize, t: i32) -> Singularity {
    let p = mesh.vertex(v);
    let b = mesh.is_boundary_vertex(v);
    let q = quarters.get(&v).copied().unwrap_or(0);
    Singularity { vertex: v, x: p.x, y: p.y, t, valence: valence_of(t, b, q), boundary: b }
}

/// Winding of the representation angle around triangle `tri`, in turns.
pub fn triangle_winding(mesh: &TriMesh, field: &RepresentationField, tri: usize) -> f64 {
    let [a, b, c] = mesh.triangle(tri);
    let ang = |v: usize| field.rep_angle(v);
    (wrap_pi(ang(b) - ang(a)) + wrap_pi(ang(c) - ang(b)) + wrap_pi(ang(a) - ang(c))) / TAU
}

fn circumcenter(p: [Vec2; 3]) -> Vec2 {
    let b = p[1] - p[0];
    let c = p[2] - p[0];
    let d = 2.0 * b.cross(c);
    let ux = (c.y * b.norm2() - b.y * c.norm2()) / d;
    let uy = (b.x * c.norm2() - c.x * b.norm2()) / d;
    p[0] + Vec2::new(ux, uy)
}

/// Vertex of triangle `tri` nearest to its circumcenter (lowest id on ties).
pub fn snap_vertex(mesh: &TriMesh, tri: usize) -> usize {
    let cc = circumcenter(mesh.tri_points(tri));
    let mut best = (f64::INFINITY, usize::MAX);
    for v in mesh.triangle(tri) {
        let d = mesh.vertex(v).dist(cc);
        if d < best.0 || (d == best.0 && v < best.1) {
            best = (d, v);
        }
    }
    best.1
}

/// Fits `ψ_i ≈ t·atan2(p_i − x0) + c` over the given vertices by
/// Gauss-Newton, starting from `start`; falls back to `start` when the fit
/// leaves the neighborhood of the vertices.
fn fit_singular_point(mesh: &TriMesh, field: &RepresentationField, verts: &[usize], t: i32, start: Vec2) -> Vec2 {
    let tf = t as f64;
    let mut x0 = start;
    let radius = verts.iter().map(|&v| mesh.vertex(v).dist(start)).fold(0.0, f64::max);
    let psi: Vec<f64> = verts.iter().map(|&v| field.rep_angle(v)).collect();
    let phase = |x0: Vec2| {
        let (mut sx, mut sy) = (0.0, 0.0);
        for (&v, &ps) in verts.iter().zip(&psi) {
            let a = ps - tf * (mesh.vertex(v) - x0).angle();
            sx += a.cos();
            sy += a.sin();
        }
        sy.atan2(sx)
    };
    let mut c = phase(x0);
    for _ in 0..30 {
        let mut ata = [[0.0f64; 3]; 3];
        let mut atr = [0.0f64; 3];
        for (&v, &ps) in verts.iter().zip(&psi) {
            let d = mesh.vertex(v) - x0;
            let r2 = d.norm2();
            if r2 < 1e-30 {
                continue;
            }
            let res = wrap_pi(ps - tf * d.angle() - c);
            let j = [-tf * d.y / r2, tf * d.x / r2, -1.0];
            for r in 0..3 {
                atr[r] += j[r] * res;
                for k in 0..3 {
                    ata[r][k] += j[r] * j[k];
                }
            }
        }
        let Some(step) = solve3(ata, atr) else { return start };
        x0 = Vec2::new(x0.x - step[0], x0.y - step[1]);
        c -= step[2];
        if x0.dist(start) > 2.0 * radius || !x0.x.is_finite() {
            return start;
        }
        if step[0].hypot(step[1]) < 1e-14 * (1.0 + radius) {
            break;
        }
    }
    x0
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        *xk = det(m) / d;
    }
    Some(x)
}

/// Winding-number detection on a representation field.
///
/// Triangles with nonzero winding that share a vertex are grouped; a group
/// whose total is zero is dropped. Each remaining group is located at the
/// point that best explains the representation angles at the group's
/// vertices as an isolated singularity of the group's total index, and
/// snapped to the nearest vertex of the group.
pub fn detect(mesh: &TriMesh, field: &RepresentationField) -> Result<SingularityPattern, SingularityError> {
    let mut hits: Vec<(usize, i32)> = Vec::new();
    for tri in 0..mesh.num_triangles() {
        let w = triangle_winding(mesh, field, tri);
        let t = w.round();
        if (w - t).abs() > 4e-3 {
            return Err(SingularityError::UnresolvedWinding { triangle: tri, winding: w });
        }
        if t != 0.0 {
            hits.push((tri, t as i32));
        }
    }
    // union-find over hit triangles sharing a vertex
    let mut parent: Vec<usize> = (0..hits.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (i, &(tri, _)) in hits.iter().enumerate() {
        for v in mesh.triangle(tri) {
            if let Some(&j) = owner.get(&v) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            } else {
                owner.insert(v, i);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..hits.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut entries = Vec::new();
    for members in groups.values() {
        let total: i32 = members.iter().map(|&i| hits[i].1).sum();
        if total == 0 {
            continue;
        }
        let mut c = Vec2::ZERO;
        let mut w = 0.0;
        let mut cand = Vec::new();
        for &i in members {
            let (tri, t) = hits[i];
            let p = mesh.tri_points(tri);
            c = c + (p[0] + p[1] + p[2]) * (t.abs() as f64 / 3.0);
            w += t.abs() as f64;
            cand.extend(mesh.triangle(tri));
        }
        cand.sort_unstable();
        cand.dedup();
        let c = fit_singular_point(mesh, field, &cand, total, c * (1.0 / w));
        let v = *cand
            .iter()
            .min_by(|&&a, &&b| mesh.vertex(a).dist(c).total_cmp(&mesh.vertex(b).dist(c)).then(a.cmp(&b)))
            .expect("nonempty group");
        entries.push((v, total));
    }
    SingularityPattern::from_indices(mesh, &entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    /// `Σ t` over pattern entries.
    pub singular_quarters: i64,
    /// Quarter turns absorbed by boundary corners.
    pub corner_quarters: i64,
    /// `4χ`.
    pub expected_quarters: i64,
    /// `Σ t + Σ q − 4χ`, in quarter turns.
    pub deficit_quarters: i64,
    /// Deficit as a reduced fraction, e.g. `-1/4`.
    pub deficit: String,
    /// Dirac mass plus quantized corner turning, in radians.
    pub source_mass: f64,
    /// `2πχ`.
    pub target_mass: f64,
    /// Geometric turning total minus `2πχ`.
    pub gauss_bonnet_residual: f64,
}

/// Formats `q/4` as a reduced fraction.
pub fn quarter_fraction(q: i64) -> String {
    if q == 0 {
        return "0".into();
    }
    let g = gcd(q.unsigned_abs(), 4) as i64;
    let (n, d) = (q / g, 4 / g);
    if d == 1 {
        format!("{n}")
    } else {
        format!("{n}/{d}")
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn validate(pattern: &SingularityPattern, mesh: &TriMesh) -> ValidationReport {
    let turning = turning_angles(mesh);
    let corner: i64 = turning.values().map(|&a| corner_quarters(a) as i64).sum();
    let sing: i64 = pattern.singularities.iter().map(|s| s.t as i64).sum();
    let chi = mesh.chi_from_loops();
    let deficit = sing + corner - 4 * chi;
    let source_mass = (sing + corner) as f64 * FRAC_PI_2;
    let target_mass = TAU * chi as f64;
    let total_turning: f64 = mesh.boundary_loops().iter().map(|l| l.total_turning()).sum();
    let gb = total_turning - target_mass;
    let ok = deficit == 0 && (source_mass - target_mass).abs() <= 1e-9 && gb.abs() <= 1e-9;
    ValidationReport {
        ok,
        singular_quarters: sing,
        corner_quarters: corner,
        expected_quarters: 4 * chi,
        deficit_quarters: deficit,
        deficit: quarter_fraction(deficit),
        source_mass,
        target_mass,
        gauss_bonnet_residual: gb,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditKind {
    Add { vertex: usize, valence: i32 },
    Remove { vertex: usize },
    Move { from: usize, to: usize },
    SetValence { vertex: usize, valence: i32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternEdit {
    #[serde(flatten)]
    pub kind: EditKind,
    /// Staged edits skip validation; the caller must `finalize` later.
    #[serde(default)]
    pub staged: bool,
}

impl PatternEdit {
    pub fn new(kind: EditKind) -> Self {
        Self { kind, staged: false }
    }

    pub fn staged(kind: EditKind) -> Self {
        Self { kind, staged: true }
    }
}

/// Applies `edit`, returning the new pattern and the edit that undoes it.
pub fn apply_edit(
    pattern: &SingularityPattern,
    edit: &PatternEdit,
    mesh: &TriMesh,
) -> Result<(SingularityPattern, PatternEdit), SingularityError> {
    let quarters = boundary_quarters(mesh);
    let q = |v: usize| quarters.get(&v).copied().unwrap_or(0);
    let check_vertex = |v: usize| if v < mesh.num_vertices() { Ok(()) } else { Err(SingularityError::OffMesh(v)) };
    let check_valence = |v: usize, val: i32| -> Result<i32, SingularityError> {
        if !(1..=8).contains(&val) {
            return Err(SingularityError::BadValence(val));
        }
        let t = t_of_valence(val, mesh.is_boundary_vertex(v), q(v));
        if t == 0 {
            return Err(SingularityError::RegularValence { vertex: v, valence: val });
        }
        Ok(t)
    };
    let mut entries: Vec<(usize, i32)> = pattern.singularities.iter().map(|s| (s.vertex, s.t)).collect();
    let pos = |entries: &[(usize, i32)], v: usize| entries.iter().position(|e| e.0 == v);
    let inverse = match edit.kind {
        EditKind::Add { vertex, valence } => {
            check_vertex(vertex)?;
            if pos(&entries, vertex).is_some() {
                return Err(SingularityError::AlreadySingular(vertex));
            }
            let t = check_valence(vertex, valence)?;
            entries.push((vertex, t));
            EditKind::Remove { vertex }
        }
        EditKind::Remove { vertex } => {
            check_vertex(vertex)?;
            let i = pos(&entries, vertex).ok_or(SingularityError::NotSingular(vertex))?;
            let valence = pattern.singularities[i].valence;
            entries.remove(i);
            EditKind::Add { vertex, valence }
        }
        EditKind::Move { from, to } => {
            check_vertex(from)?;
            check_vertex(to)?;
            let i = pos(&entries, from).ok_or(SingularityError::NotSingular(from))?;
            if from != to && pos(&entries, to).is_some() {
                return Err(SingularityError::AlreadySingular(to));
            }
            entries[i].0 = to;
            EditKind::Move { from: to, to: from }
        }
        EditKind::SetValence { vertex, valence } => {
            check_vertex(vertex)?;
            let t = check_valence(vertex, valence)?;
            match pos(&entries, vertex) {
                Some(i) => {
                    let old = pattern.singularities[i].valence;
                    entries[i].1 = t;
                    EditKind::SetValence { vertex, valence: old }
                }
                None => {
                    entries.push((vertex, t));
                    EditKind::Remove { vertex }
                }
            }
        }
    };
    let out = SingularityPattern::from_indices(mesh, &entries)?;
    if !edit.staged {
        let report = validate(&out, mesh);
        if !report.ok {
            return Err(SingularityError::Invalid(Box::new(report)));
        }
    }
    Ok((out, PatternEdit { kind: inverse, staged: edit.staged }))
}

/// Final check after a sequence of staged edits.
pub fn finalize(pattern: &SingularityPattern, mesh: &TriMesh) -> Result<ValidationReport, SingularityError> {
    pattern.check_against(mesh)?;
    let report = validate(pattern, mesh);
    if report.ok {
        Ok(report)
    } else {
        Err(SingularityError::Invalid(Box::new(report)))
    }
}

/// Representation field of an analytic singular cross `θ = k·atan2(y−y0, x−x0) + c`
/// with `k = t/4`, sampled at the mesh vertices.
pub fn synthetic_field(mesh: &TriMesh, center: Vec2, t: i32, c: f64) -> RepresentationField {
    let angles: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|&p| (t as f64 / 4.0) * (p - center).angle() + c)
        .collect();
    RepresentationField::from_angles(&angles)
}

/// Σ over boundary vertices of the quantized corner turning, in quarter turns.
pub fn total_corner_quarters(mesh: &TriMesh) -> i64 {
    boundary_quarters(mesh).values().map(|&q| q as i64).sum()
}
