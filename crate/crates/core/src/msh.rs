//! Reader and writer for the ASCII subset of the Gmsh `.msh` 2.2 format.
//!
//! Supported sections are `$MeshFormat`, `$Nodes`, `$Elements`, `$NodeData`
//! and `$ElementData`; anything else is skipped on read. Element types:
//! 1 (2-node line), 2 (3-node triangle), 3 (4-node quad), 15 (point).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::geom::Vec2;
use crate::mesh::{BuildReport, MeshError, TriMesh};

#[derive(Debug, Error)]
pub enum MshError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported mesh format version {0}")]
    Version(String),
    #[error("element {element} references unknown node {node}")]
    UnknownNode { element: i64, node: i64 },
    #[error("file contains no triangles")]
    NoTriangles,
    #[error("refusing to write an empty mesh")]
    EmptyMesh,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Point,
    Line,
    Triangle,
    Quad,
}

impl ElementKind {
    fn from_code(c: i64) -> Option<(Self, usize)> {
        match c {
            15 => Some((Self::Point, 1)),
            1 => Some((Self::Line, 2)),
            2 => Some((Self::Triangle, 3)),
            3 => Some((Self::Quad, 4)),
            _ => None,
        }
    }

    fn code(self) -> i64 {
        match self {
            Self::Point => 15,
            Self::Line => 1,
            Self::Triangle => 2,
            Self::Quad => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    /// First tag is the physical group by convention (0 when absent).
    pub tags: Vec<i64>,
    /// Dense 0-based node indices.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    pub name: String,
    pub components: usize,
    /// (dense index, values)
    pub values: Vec<(usize, Vec<f64>)>,
}

/// Raw contents of a `.msh` file with node numbering normalized to dense ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MshFile {
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<Element>,
    pub node_data: Vec<DataBlock>,
    pub element_data: Vec<DataBlock>,
}

impl MshFile {
    pub fn parse(text: &str) -> Result<Self, MshError> {
        let lines: Vec<&str> = text.lines().collect();
        let mut out = MshFile::default();
        let mut tag_to_index: HashMap<i64, usize> = HashMap::new();
        let mut i = 0;
        let perr = |line: usize, msg: &str| MshError::Parse { line: line + 1, msg: msg.to_string() };
        let mut saw_format = false;
        while i < lines.len() {
            let l = lines[i].trim();
            match l {
                "$MeshFormat" => {
                    let hdr = lines.get(i + 1).ok_or_else(|| perr(i, "truncated header"))?;
                    let ver = hdr.split_whitespace().next().unwrap_or("");
                    if !ver.starts_with("2.") {
                        return Err(MshError::Version(ver.to_string()));
                    }
                    if hdr.split_whitespace().nth(1) != Some("0") {
                        return Err(perr(i + 1, "only ASCII files are supported"));
                    }
                    saw_format = true;
                    i = skip_to(&lines, i, "$EndMeshFormat").ok_or_else(|| perr(i, "missing $EndMeshFormat"))?;
                }
                "$Nodes" => {
                    let n: usize = parse_num(lines.get(i + 1).copied(), i + 1)?;
                    for k in 0..n {
                        let ln = i + 2 + k;
                        let mut it = lines.get(ln).ok_or_else(|| perr(ln, "truncated $Nodes"))?.split_whitespace();
                        let tag: i64 = parse_num(it.next(), ln)?;
                        let x: f64 = parse_num(it.next(), ln)?;
                        let y: f64 = parse_num(it.next(), ln)?;
                        let z: f64 = parse_num(it.next(), ln)?;
                        tag_to_index.insert(tag, out.nodes.len());
                        out.nodes.push([x, y, z]);
                    }
                    i = skip_to(&lines, i, "$EndNodes").ok_or_else(|| perr(i, "missing $EndNodes"))?;
                }
                "$Elements" => {
                    let n: usize = parse_num(lines.get(i + 1).copied(), i + 1)?;
                    for k in 0..n {
                        let ln = i + 2 + k;
                        let nums: Vec<i64> = lines
                            .get(ln)
                            .ok_or_else(|| perr(ln, "truncated $Elements"))?
                            .split_whitespace()
                            .map(|s| s.parse::<i64>().map_err(|_| perr(ln, "bad integer")))
                            .collect::<Result<_, _>>()?;
                        if nums.len() < 3 {
                            return Err(perr(ln, "short element record"));
                        }
                        let ntags = nums[2] as usize;
                        let Some((kind, nn)) = ElementKind::from_code(nums[1]) else {
                            continue;
                        };
                        if nums.len() != 3 + ntags + nn {
                            return Err(perr(ln, "element record length mismatch"));
                        }
                        let tags = nums[3..3 + ntags].to_vec();
                        let nodes = nums[3 + ntags..]
                            .iter()
                            .map(|t| {
                                tag_to_index.get(t).copied().ok_or(MshError::UnknownNode { element: nums[0], node: *t })
                            })
                            .collect::<Result<_, _>>()?;
                        out.elements.push(Element { kind, tags, nodes });
                    }
                    i = skip_to(&lines, i, "$EndElements").ok_or_else(|| perr(i, "missing $EndElements"))?;
                }
                "$NodeData" | "$ElementData" => {
                    let end = if l == "$NodeData" { "$EndNodeData" } else { "$EndElementData" };
                    let stop = skip_to(&lines, i, end).ok_or_else(|| perr(i, "unterminated data block"))?;
                    let block = parse_data_block(&lines[i + 1..stop], i + 1, &tag_to_index)?;
                    if l == "$NodeData" {
                        out.node_data.push(block);
                    } else {
                        out.element_data.push(block);
                    }
                    i = stop;
                }
                _ if l.starts_with('$') && !l.starts_with("$End") => {
                    let name = &l[1..];
                    i = skip_to(&lines, i, &format!("$End{name}")).unwrap_or(lines.len());
                }
                _ => {}
            }
            i += 1;
        }
        if !saw_format {
            return Err(perr(0, "missing $MeshFormat"));
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self, MshError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
        let _ = writeln!(s, "$Nodes\n{}", self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "{} {:?} {:?} {:?}", i + 1, p[0], p[1], p[2]);
        }
        s.push_str("$EndNodes\n");
        let _ = writeln!(s, "$Elements\n{}", self.elements.len());
        for (i, e) in self.elements.iter().enumerate() {
            let _ = write!(s, "{} {} {}", i + 1, e.kind.code(), e.tags.len());
            for t in &e.tags {
                let _ = write!(s, " {t}");
            }
            for n in &e.nodes {
                let _ = write!(s, " {}", n + 1);
            }
            s.push('\n');
        }
        s.push_str("$EndElements\n");
        for (tag, blocks) in [("NodeData", &self.node_data), ("ElementData", &self.element_data)] {
            for b in blocks.iter() {
                let _ = writeln!(s, "${tag}\n1\n\"{}\"\n1\n0.0\n3\n0\n{}\n{}", b.name, b.components, b.values.len());
                for (idx, vals) in &b.values {
                    let _ = write!(s, "{}", idx + 1);
                    for v in vals {
                        let _ = write!(s, " {v:?}");
                    }
                    s.push('\n');
                }
                let _ = writeln!(s, "$End{tag}");
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), MshError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Builds a triangulation from the triangle elements; line elements are
    /// informational only (boundary loops are recomputed from topology).
    pub fn to_trimesh(&self) -> Result<(TriMesh, BuildReport), MshError> {
        let tris: Vec<[usize; 3]> = self
            .elements
            .iter()
            .filter(|e| e.kind == ElementKind::Triangle)
            .map(|e| [e.nodes[0], e.nodes[1], e.nodes[2]])
            .collect();
        if tris.is_empty() {
            return Err(MshError::NoTriangles);
        }
        // drop nodes not referenced by any triangle, keeping file order
        let mut used = vec![usize::MAX; self.nodes.len()];
        let mut verts = Vec::new();
        for t in &tris {
            for &v in t {
                if used[v] == usize::MAX {
                    used[v] = 0;
                }
            }
        }
        for (i, u) in used.iter_mut().enumerate() {
            if *u != usize::MAX {
                *u = verts.len();
                verts.push(Vec2::new(self.nodes[i][0], self.nodes[i][1]));
            }
        }
        let tris = tris.iter().map(|t| [used[t[0]], used[t[1]], used[t[2]]]).collect();
        Ok(TriMesh::build(verts, tris)?)
    }

    pub fn from_trimesh(mesh: &TriMesh) -> Self {
        let nodes = mesh.vertices().iter().map(|p| [p.x, p.y, 0.0]).collect();
        let mut elements = Vec::new();
        for (li, l) in mesh.boundary_loops().iter().enumerate() {
            let n = l.vertices.len();
            for k in 0..n {
                elements.push(Element {
                    kind: ElementKind::Line,
                    tags: vec![li as i64 + 1, li as i64 + 1],
                    nodes: vec![l.vertices[k], l.vertices[(k + 1) % n]],
                });
            }
        }
        for t in mesh.triangles() {
            elements.push(Element { kind: ElementKind::Triangle, tags: vec![100, 1], nodes: t.to_vec() });
        }
        MshFile { nodes, elements, node_data: Vec::new(), element_data: Vec::new() }
    }
}

fn skip_to(lines: &[&str], from: usize, end: &str) -> Option<usize> {
    (from..lines.len()).find(|&k| lines[k].trim() == end)
}

fn parse_num<T: std::str::FromStr>(s: Option<&str>, line: usize) -> Result<T, MshError> {
    s.and_then(|x| x.trim().parse().ok()).ok_or(MshError::Parse { line: line + 1, msg: "expected a number".into() })
}

fn parse_data_block(lines: &[&str], base: usize, tags: &HashMap<i64, usize>) -> Result<DataBlock, MshError> {
    let mut k = 0;
    let ns: usize = parse_num(lines.get(k).copied(), base + k)?;
    k += 1;
    let name = lines.get(k).map(|s| s.trim().trim_matches('"').to_string()).unwrap_or_default();
    k += ns;
    let nr: usize = parse_num(lines.get(k).copied(), base + k)?;
    k += 1 + nr;
    let ni: usize = parse_num(lines.get(k).copied(), base + k)?;
    let ints: Vec<usize> =
        (0..ni).map(|q| parse_num(lines.get(k + 1 + q).copied(), base + k + 1 + q)).collect::<Result<_, _>>()?;
    k += 1 + ni;
    let components = ints.get(1).copied().unwrap_or(1);
    let count = ints.get(2).copied().unwrap_or(0);
    let mut values = Vec::with_capacity(count);
    for q in 0..count {
        let ln = base + k + q;
        let mut it = lines.get(k + q).ok_or(MshError::Parse { line: ln + 1, msg: "truncated data".into() })?.split_whitespace();
        let tag: i64 = parse_num(it.next(), ln)?;
        let vals: Vec<f64> = it.map(|x| parse_num(Some(x), ln)).collect::<Result<_, _>>()?;
        let idx = tags.get(&tag).copied().unwrap_or((tag - 1).max(0) as usize);
        values.push((idx, vals));
    }
    Ok(DataBlock { name, components, values })
}

/// Reads a `.msh` triangulation and validates it.
pub fn load_mesh(path: &Path) -> Result<(TriMesh, BuildReport), MshError> {
    MshFile::read(path)?.to_trimesh()
}

pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<(), MshError> {
    MshFile::from_trimesh(mesh).write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const SQUARE: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n10 0 0 0\n11 1 0 0\n12 1 1 0\n13 0 1 0\n$EndNodes\n$Elements\n6\n1 1 2 1 1 10 11\n2 1 2 1 1 11 12\n3 1 2 1 1 12 13\n4 1 2 1 1 13 10\n5 2 2 0 1 10 11 12\n6 2 2 0 1 10 13 12\n$EndElements\n";

    #[test]
    fn reads_square_with_sparse_tags_and_cw_triangle() {
        let (m, rep) = MshFile::parse(SQUARE).unwrap().to_trimesh().unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_triangles(), 2);
        assert_eq!(m.outer_loop().vertices.len(), 4);
        assert_eq!(rep.reoriented, 1);
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(MshFile::parse("garbage"), Err(MshError::Parse { .. })));
        let bad = SQUARE.replace("5 2 2 0 1 10 11 12", "5 2 2 0 1 10 11 99");
        assert!(matches!(MshFile::parse(&bad), Err(MshError::UnknownNode { .. })));
        let v4 = SQUARE.replace("2.2 0 8", "4.1 0 8");
        assert!(matches!(MshFile::parse(&v4), Err(MshError::Version(_))));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = fixtures::square_minus_disk(0.21, 24, 4);
        let text = MshFile::from_trimesh(&m).to_text();
        let (back, _) = MshFile::parse(&text).unwrap().to_trimesh().unwrap();
        assert_eq!(back.num_triangles(), m.num_triangles());
        for v in 0..m.num_vertices() {
            assert_eq!(back.vertex(v).x.to_bits(), m.vertex(v).x.to_bits());
            assert_eq!(back.vertex(v).y.to_bits(), m.vertex(v).y.to_bits());
        }
        assert_eq!(back.triangles(), m.triangles());
    }

    #[test]
    fn node_data_round_trip() {
        let mut f = MshFile::from_trimesh(&fixtures::unit_square(2));
        f.node_data.push(DataBlock { name: "H".into(), components: 1, values: vec![(0, vec![0.25]), (3, vec![-1e-300])] });
        let g = MshFile::parse(&f.to_text()).unwrap();
        assert_eq!(g.node_data, f.node_data);
    }
}
