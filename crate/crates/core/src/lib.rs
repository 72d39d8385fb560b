//! Cross-field guided block-structured quadrilateral meshing of planar domains.

pub mod conformal;
pub mod crossfield;
pub mod fem;
pub mod fixtures;
pub mod geom;
pub mod layout;
pub mod mesh;
pub mod msh;
pub mod pipeline;
pub mod quadmesh;
pub mod singularity;
pub mod sparse;
pub mod spokes;
pub mod svg;

pub use geom::Vec2;
pub use mesh::{PointLocation, TriMesh};
