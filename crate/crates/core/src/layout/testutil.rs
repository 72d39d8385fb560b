use super::*;
use crate::conformal::CrossField;
use crate::mesh::TriMesh;
use crate::singularity::SingularityPattern;
use crate::spokes::{refine_spokes, SpokeParams, SpokeRefinement};

pub fn field(mesh: &TriMesh, entries: &[(usize, i32)]) -> (CrossField, SpokeRefinement) {
    let p = SingularityPattern::from_valences(mesh, entries).unwrap();
    let r = refine_spokes(mesh, &p, &SpokeParams::default()).unwrap();
    let p = p.remap(&r.mesh, &(0..mesh.num_vertices()).collect::<Vec<_>>()).unwrap();
    (CrossField::compute(r.mesh.clone(), p).unwrap(), r)
}

pub fn trace(cf: &CrossField, r: &SpokeRefinement) -> Vec<Separatrix> {
    let tracer = Tracer::new(cf, &cf.mesh, launch_sites(cf, r), TraceParams::default());
    tracer.trace_all().unwrap()
}

/// Square with entries placed at the given points.
pub fn square_field(n: usize, entries: &[((f64, f64), i32)]) -> (CrossField, SpokeRefinement) {
    let m = crate::fixtures::unit_square(n);
    let e: Vec<(usize, i32)> = entries.iter().map(|&((x, y), val)| (m.nearest_vertex(crate::Vec2::new(x, y)), val)).collect();
    field(&m, &e)
}
