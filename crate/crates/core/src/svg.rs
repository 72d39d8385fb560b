//! SVG renders of layouts and quad meshes. Singular points are coloured by
//! valence: blue 3, red 5, orange 6, yellow 8, grey otherwise.

use std::fmt::Write as _;

use crate::geom::Vec2;
use crate::layout::{EdgeKind, QuadLayout};
use crate::mesh::TriMesh;
use crate::quadmesh::QuadMesh;
use crate::singularity::SingularityPattern;

pub fn valence_color(valence: i32) -> &'static str {
    match valence {
        3 => "blue",
        5 => "red",
        6 => "orange",
        8 => "yellow",
        _ => "grey",
    }
}

/// Maps domain coordinates to a `size`-pixel canvas with y pointing up.
struct Canvas {
    lo: Vec2,
    scale: f64,
    height: f64,
    out: String,
}

impl Canvas {
    fn new(domain: &TriMesh, size: f64) -> Self {
        let (lo, hi) = domain.bbox();
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-300);
        let scale = size / span;
        let (w, h) = ((hi.x - lo.x) * scale + 20.0, (hi.y - lo.y) * scale + 20.0);
        let mut out = String::new();
        writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="-10 -10 {w:.0} {h:.0}">"#).unwrap();
        Self { lo, scale, height: (hi.y - lo.y) * scale, out }
    }

    fn xy(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.lo.x) * self.scale, self.height - (p.y - self.lo.y) * self.scale)
    }

    fn polyline(&mut self, pts: &[Vec2], stroke: &str, width: f64, closed: bool) {
        let mut d = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = self.xy(p);
            write!(d, "{}{x:.3},{y:.3} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
        if closed {
            d.push('Z');
        }
        writeln!(self.out, r#"<path d="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#, d.trim_end()).unwrap();
    }

    fn dot(&mut self, p: Vec2, fill: &str, class: &str) {
        let (x, y) = self.xy(p);
        writeln!(self.out, r#"<circle class="{class}" cx="{x:.3}" cy="{y:.3}" r="4" fill="{fill}" stroke="black" stroke-width="0.5"/>"#).unwrap();
    }

    fn boundary(&mut self, domain: &TriMesh) {
        for l in domain.boundary_loops() {
            let pts: Vec<Vec2> = l.vertices.iter().map(|&v| domain.vertex(v)).collect();
            self.polyline(&pts, "black", 1.5, true);
        }
    }

    fn singularities(&mut self, pattern: &SingularityPattern) {
        for s in &pattern.singularities {
            self.dot(s.position(), valence_color(s.valence), &format!("singular valence-{}", s.valence));
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Separatrices, patch outlines and singular points.
pub fn render_layout(domain: &TriMesh, layout: &QuadLayout, pattern: &SingularityPattern) -> String {
    let mut c = Canvas::new(domain, 800.0);
    c.boundary(domain);
    for e in &layout.edges {
        if let EdgeKind::Separatrix { .. } = e.kind {
            c.polyline(&e.points, "seagreen", 1.0, false);
        }
    }
    for (i, n) in layout.nodes.iter().enumerate() {
        let corner = layout.patches.iter().any(|p| p.corners.contains(&i));
        if corner && !n.is_singular() {
            let (x, y) = c.xy(n.pos);
            writeln!(c.out, r#"<rect class="corner" x="{:.3}" y="{:.3}" width="4" height="4" fill="black"/>"#, x - 2.0, y - 2.0).unwrap();
        }
    }
    c.singularities(pattern);
    c.finish()
}

/// Quad edges and singular points.
pub fn render_mesh(domain: &TriMesh, mesh: &QuadMesh, pattern: &SingularityPattern) -> String {
    let mut c = Canvas::new(domain, 800.0);
    for q in 0..mesh.quads.len() {
        let pts = mesh.corners(q);
        c.polyline(&pts, "steelblue", 0.6, true);
    }
    c.boundary(domain);
    c.singularities(pattern);
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn colours_follow_valence() {
        assert_eq!(valence_color(3), "blue");
        assert_eq!(valence_color(5), "red");
        assert_eq!(valence_color(6), "orange");
        assert_eq!(valence_color(8), "yellow");
        assert_eq!(valence_color(4), "grey");
    }

    #[test]
    fn mesh_render_marks_each_singularity() {
        let m = fixtures::unit_square(8);
        let p = SingularityPattern::from_valences(&m, &[(m.nearest_vertex(Vec2::new(0.25, 0.25)), 3), (m.nearest_vertex(Vec2::new(0.75, 0.75)), 5)]).unwrap();
        let q = QuadMesh { vertices: vec![Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)], quads: vec![[0, 1, 2, 3]], patch: vec![0], grids: vec![] };
        let svg = render_mesh(&m, &q, &p);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("class=\"singular").count(), 2);
        assert!(svg.contains("fill=\"blue\"") && svg.contains("fill=\"red\""));
    }
}
