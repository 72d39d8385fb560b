//! Separatrix tracing and quad layout construction.

mod arrangement;
mod cycles;
mod dedup;
pub mod repair;
pub mod synthetic;
#[cfg(test)]
pub(crate) mod testutil;
mod trace;

pub use arrangement::{build_partitions, overlap_triangles, project_on_polyline, EdgeKind, LayoutCheck, LayoutDump, LayoutEdge, LayoutNode, NodeKind, Patch, QuadLayout};
pub use cycles::{all_crossings, classify_cycles, crossings_between, detect_and_cut_limit_cycles, truncate, Crossing, CycleParams, CycleReport, TJunctionRecord};
pub use dedup::{check_incidence, dedup, hausdorff, incident_ends, point_polyline_distance};
pub use trace::{launch_directions, launch_sites, nearest_branch, BoundarySegments, DirectionField, LaunchSite, TraceParams, Tracer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{polyline_length, Vec2};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("launch circle around vertex {vertex} leaves the domain")]
    LaunchOutside { vertex: usize },
    #[error("vertex {vertex}: expected {expected} launch directions, found {found}")]
    LaunchCount { vertex: usize, expected: usize, found: usize },
    #[error("trace left the domain at ({x}, {y})")]
    LeftDomain { x: f64, y: f64 },
    #[error("ambiguous branch matching at ({x}, {y}); field under-resolved")]
    AmbiguousBranch { x: f64, y: f64 },
    #[error("vertex {vertex}: {found} separatrix ends, valence requires {expected}")]
    Incidence { vertex: usize, expected: usize, found: usize },
    #[error("separatrix {separatrix} ends nowhere in the arrangement")]
    Dangling { separatrix: usize },
    #[error("a patch is not simply connected")]
    NotSimplyConnected,
    #[error("limit cycle on separatrix {separatrix} has no admissible cut point")]
    NoCutPoint { separatrix: usize, points: Vec<Vec2> },
    #[error("separatrix {separatrix} has no crossing to extend to")]
    NoNeighbor { separatrix: usize },
    #[error("no convergence after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("patch {patch} has an unexpected shape")]
    UnexpectedTriangle { patch: usize },
    #[error("pattern: {0}")]
    Pattern(String),
}

/// How a separatrix ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Boundary { edge: usize, loop_index: usize },
    Singularity { vertex: usize },
    /// Truncated where it meets separatrix `on`.
    Cut { on: usize },
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separatrix {
    pub id: usize,
    /// Singular vertex the trace starts from.
    pub origin: usize,
    pub branch: usize,
    pub points: Vec<Vec2>,
    pub termination: Termination,
    pub length: f64,
}

impl Separatrix {
    pub fn new(origin: usize, mut points: Vec<Vec2>, termination: Termination) -> Self {
        points.dedup_by(|a, b| a.dist(*b) <= 1e-14);
        let length = polyline_length(&points);
        Self { id: 0, origin, branch: 0, points, termination, length }
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn end_vertex(&self) -> Option<usize> {
        match self.termination {
            Termination::Singularity { vertex } => Some(vertex),
            _ => None,
        }
    }

    /// Sum of absolute turning angles along the polyline.
    pub fn curvature(&self) -> f64 {
        self.points
            .windows(3)
            .map(|w| {
                let (a, b) = (w[1] - w[0], w[2] - w[1]);
                a.cross(b).atan2(a.dot(b)).abs()
            })
            .sum()
    }

    /// Arc length at each point.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut s = vec![0.0];
        for w in self.points.windows(2) {
            s.push(s.last().unwrap() + w[0].dist(w[1]));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub trace: TraceParams,
    pub cycles: CycleParams,
    /// Hausdorff tolerance for duplicate separatrices; `None` scales with the disks.
    pub dup_tol: Option<f64>,
    pub max_fix_iter: usize,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self { trace: TraceParams::default(), cycles: CycleParams::default(), dup_tol: None, max_fix_iter: repair::DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutReport {
    pub traced: usize,
    pub after_dedup: usize,
    pub cycles: CycleReport,
    pub fixes: repair::FixReport,
    pub splits: repair::SplitReport,
    pub check: LayoutCheck,
}

#[derive(Debug, Clone)]
pub struct LayoutResult {
    pub layout: QuadLayout,
    /// Pattern after doublet splits; equal to the input when none happened.
    pub pattern: crate::singularity::SingularityPattern,
    pub report: LayoutReport,
}

/// Traces, cleans and partitions the field into a quad layout.
pub fn compute_layout(
    cross: &crate::conformal::CrossField,
    spokes: &crate::spokes::SpokeRefinement,
    params: &LayoutParams,
) -> Result<LayoutResult, LayoutError> {
    let mesh = &cross.mesh;
    let sites = launch_sites(cross, spokes);
    let traced = Tracer::new(cross, mesh, sites.clone(), params.trace).trace_all()?;
    let n_traced = traced.len();
    let seps = dedup(traced, &sites, params.dup_tol)?;
    let after_dedup = seps.len();
    let (seps, records, cycles) = detect_and_cut_limit_cycles(seps, mesh, &params.cycles)?;
    let layout = build_partitions(mesh, &sites, &seps, &records)?;
    let (layout, fixes) = repair::fix_tjunctions(mesh, layout, params.max_fix_iter)?;
    let (layout, pattern, splits) = repair::split_valence2(mesh, layout, &cross.pattern)?;
    let check = layout.check(mesh);
    log::info!("layout: {} patches, {} quads, valid {}", check.patches, check.quads, check.valid());
    Ok(LayoutResult { layout, pattern, report: LayoutReport { traced: n_traced, after_dedup, cycles, fixes, splits, check } })
}
