//! `.msh` 2.2 output with one physical group per layout patch.

use std::path::Path;

use super::{QuadMesh, QuadMeshError};
use crate::geom::Vec2;
use crate::msh::{Element, ElementKind, MshFile};

pub fn to_msh(mesh: &QuadMesh) -> Result<MshFile, QuadMeshError> {
    if mesh.quads.is_empty() {
        return Err(QuadMeshError::Empty);
    }
    let nodes = mesh.vertices.iter().map(|p| [p.x, p.y, 0.0]).collect();
    let elements = mesh
        .quads
        .iter()
        .zip(&mesh.patch)
        .map(|(q, &p)| Element { kind: ElementKind::Quad, tags: vec![p as i64 + 1, p as i64 + 1], nodes: q.to_vec() })
        .collect();
    Ok(MshFile { nodes, elements, node_data: Vec::new(), element_data: Vec::new() })
}

pub fn write_msh(mesh: &QuadMesh, path: &Path) -> Result<(), QuadMeshError> {
    to_msh(mesh)?.write(path)?;
    Ok(())
}

/// Quads of a `.msh` file; the physical tag gives the patch. Grids are not stored.
pub fn from_msh(file: &MshFile) -> QuadMesh {
    let mut quads = Vec::new();
    let mut patch = Vec::new();
    for e in file.elements.iter().filter(|e| e.kind == ElementKind::Quad) {
        quads.push([e.nodes[0], e.nodes[1], e.nodes[2], e.nodes[3]]);
        patch.push((e.tags.first().copied().unwrap_or(1) - 1).max(0) as usize);
    }
    QuadMesh { vertices: file.nodes.iter().map(|n| Vec2::new(n[0], n[1])).collect(), quads, patch, grids: Vec::new() }
}
