//! The four-stage pipeline shared by the command line and the service:
//! pattern, field, layout, quad mesh.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{compatibility, CompatibilityReport, CrossField, TangencyReport};
use crate::crossfield::{make_schedule, mbo_solve};
use crate::layout::{compute_layout, CycleParams, LayoutParams, LayoutResult, TraceParams};
use crate::mesh::TriMesh;
use crate::msh::load_mesh;
use crate::quadmesh::{mesh_layout, to_msh, QuadMeshOutput, QuadParams, QualityReport, Smoothing};
use crate::singularity::{detect, validate, SingularityPattern, ValidationReport};
use crate::spokes::{refine_spokes, SpokeParams, SpokeRefinement};
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Pattern,
    Field,
    Layout,
    Mesh,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Input => "input",
            Stage::Pattern => "pattern",
            Stage::Field => "field",
            Stage::Layout => "layout",
            Stage::Mesh => "mesh",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("pattern violates the index balance (deficit {})", .0.deficit)]
    InvalidPattern(Box<ValidationReport>),
    #[error("field is not tangent to the boundary at {} edges (max deviation {:.2}°)", .0.violations.len(), .0.max_deviation.to_degrees())]
    NonMeshable(Box<TangencyReport>),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Io { .. } => 2,
            PipelineError::InvalidPattern(_) => 3,
            PipelineError::NonMeshable(_) => 4,
            PipelineError::Stage { stage: Stage::Input, .. } => 2,
            PipelineError::Stage { .. } => 5,
        }
    }

    /// Stage that failed; configuration and input errors count as `input`.
    pub fn failed_stage(&self) -> Stage {
        match self {
            PipelineError::Config(_) | PipelineError::Io { .. } => Stage::Input,
            PipelineError::InvalidPattern(_) => Stage::Pattern,
            PipelineError::NonMeshable(_) => Stage::Field,
            PipelineError::Stage { stage, .. } => *stage,
        }
    }

    /// Machine-readable failure report, including violation locations when known.
    pub fn to_json(&self) -> serde_json::Value {
        let diagnostics = match self {
            PipelineError::NonMeshable(t) => serde_json::to_value(t).expect("report serializes"),
            PipelineError::InvalidPattern(r) => serde_json::to_value(r).expect("report serializes"),
            _ => serde_json::Value::Null,
        };
        serde_json::json!({
            "stage": self.failed_stage(),
            "error": self.to_string(),
            "exit_code": self.exit_code(),
            "diagnostics": diagnostics,
        })
    }

    fn stage(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpokeConfig {
    pub rings: usize,
    pub sectors_per_quadrant: usize,
    pub radius_factor: f64,
}

impl Default for SpokeConfig {
    fn default() -> Self {
        let d = SpokeParams::default();
        Self { rings: d.rings, sectors_per_quadrant: d.sectors_per_quadrant, radius_factor: d.radius_factor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest boundary misalignment of the field still considered meshable.
    pub tangency_deg: f64,
    /// Deviation from orthogonal accepted at limit-cycle cuts and boundary arrivals.
    pub orthogonality_deg: f64,
    pub max_step_angle_deg: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tangency_deg: 2.0, orthogonality_deg: 30.0, max_step_angle_deg: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKind {
    Winslow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub mesh: Option<PathBuf>,
    /// When set, the pattern stage is skipped.
    pub pattern: Option<PathBuf>,
    pub mbo_levels: usize,
    pub spokes: SpokeConfig,
    pub step_factor: f64,
    pub target_size: f64,
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
    pub svg: bool,
    pub smooth: Option<SmoothKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mesh: None,
            pattern: None,
            mbo_levels: 6,
            spokes: SpokeConfig::default(),
            step_factor: TraceParams::default().step_factor,
            target_size: 0.05,
            tolerances: Tolerances::default(),
            out: None,
            svg: false,
            smooth: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let c: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(5..=10).contains(&self.mbo_levels) {
            return bad(format!("mbo_levels must be in 5..=10, got {}", self.mbo_levels));
        }
        if !(1..=8).contains(&self.spokes.rings) || !(1..=8).contains(&self.spokes.sectors_per_quadrant) {
            return bad("spoke rings and sectors_per_quadrant must be in 1..=8".into());
        }
        if !(self.spokes.radius_factor > 0.0 && self.spokes.radius_factor <= 10.0) {
            return bad(format!("spokes.radius_factor must be in (0, 10], got {}", self.spokes.radius_factor));
        }
        if !(self.step_factor > 0.0 && self.step_factor <= 1.0) {
            return bad(format!("step_factor must be in (0, 1], got {}", self.step_factor));
        }
        if !(self.target_size > 0.0 && self.target_size.is_finite()) {
            return bad(format!("target_size must be positive, got {}", self.target_size));
        }
        let t = &self.tolerances;
        if !(t.tangency_deg > 0.0 && t.tangency_deg < 45.0) {
            return bad(format!("tolerances.tangency_deg must be in (0, 45), got {}", t.tangency_deg));
        }
        if !(t.orthogonality_deg > 0.0 && t.orthogonality_deg < 90.0) {
            return bad(format!("tolerances.orthogonality_deg must be in (0, 90), got {}", t.orthogonality_deg));
        }
        if !(t.max_step_angle_deg > 0.0 && t.max_step_angle_deg < 45.0) {
            return bad(format!("tolerances.max_step_angle_deg must be in (0, 45), got {}", t.max_step_angle_deg));
        }
        Ok(())
    }

    pub fn spoke_params(&self) -> SpokeParams {
        SpokeParams { rings: self.spokes.rings, sectors_per_quadrant: self.spokes.sectors_per_quadrant, radius_factor: self.spokes.radius_factor }
    }

    pub fn layout_params(&self) -> LayoutParams {
        LayoutParams {
            trace: TraceParams { step_factor: self.step_factor, max_step_angle_deg: self.tolerances.max_step_angle_deg, max_steps: None },
            cycles: CycleParams { orthogonality_tol_deg: self.tolerances.orthogonality_deg },
            ..LayoutParams::default()
        }
    }

    pub fn quad_params(&self) -> QuadParams {
        QuadParams { target_size: self.target_size, smoothing: self.smooth.map(|_| Smoothing::default()) }
    }
}

/// Output of the pattern stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStage {
    pub pattern: SingularityPattern,
    /// False when the pattern was supplied rather than detected.
    pub detected: bool,
    pub mbo_converged: Option<bool>,
    pub validation: ValidationReport,
}

pub fn load_input_mesh(path: &Path) -> Result<TriMesh, PipelineError> {
    let (mesh, report) = load_mesh(path).map_err(|e| PipelineError::stage(Stage::Input, e))?;
    log::info!("loaded {} ({} vertices, {} triangles, {:?})", path.display(), mesh.num_vertices(), mesh.num_triangles(), report);
    Ok(mesh)
}

pub fn load_pattern(path: &Path, mesh: &TriMesh) -> Result<SingularityPattern, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
    let p = SingularityPattern::from_json(&text).map_err(|e| PipelineError::stage(Stage::Input, e))?;
    p.check_against(mesh).map_err(|e| PipelineError::stage(Stage::Input, e))?;
    Ok(p)
}

/// Detects the pattern of the MBO field, or validates the supplied one.
pub fn pattern_stage(mesh: &TriMesh, supplied: Option<SingularityPattern>, config: &PipelineConfig) -> Result<PatternStage, PipelineError> {
    let (pattern, detected, mbo_converged) = match supplied {
        Some(p) => (p, false, None),
        None => {
            let mbo = mbo_solve(mesh, &make_schedule(mesh, config.mbo_levels)).map_err(|e| PipelineError::stage(Stage::Pattern, e))?;
            let p = detect(mesh, &mbo.field).map_err(|e| PipelineError::stage(Stage::Pattern, e))?;
            (p, true, Some(mbo.converged))
        }
    };
    let validation = validate(&pattern, mesh);
    if !validation.ok {
        return Err(PipelineError::InvalidPattern(Box::new(validation)));
    }
    Ok(PatternStage { pattern, detected, mbo_converged, validation })
}

/// Output of the field stage.
#[derive(Debug, Clone)]
pub struct FieldStage {
    pub spokes: SpokeRefinement,
    pub cross: CrossField,
    pub compatibility: CompatibilityReport,
    pub tangency: TangencyReport,
}

pub fn field_stage(mesh: &TriMesh, pattern: &SingularityPattern, config: &PipelineConfig) -> Result<FieldStage, PipelineError> {
    let validation = validate(pattern, mesh);
    if !validation.ok {
        return Err(PipelineError::InvalidPattern(Box::new(validation)));
    }
    let spokes = refine_spokes(mesh, pattern, &config.spoke_params()).map_err(|e| PipelineError::stage(Stage::Field, e))?;
    let identity: Vec<usize> = (0..mesh.num_vertices()).collect();
    let pattern = pattern.remap(&spokes.mesh, &identity).map_err(|e| PipelineError::stage(Stage::Field, e))?;
    let compat = compatibility(&spokes.mesh, &pattern);
    let cross = CrossField::compute(spokes.mesh.clone(), pattern).map_err(|e| PipelineError::stage(Stage::Field, e))?;
    let tangency = cross.check_tangency(config.tolerances.tangency_deg.to_radians());
    if !tangency.meshable {
        return Err(PipelineError::NonMeshable(Box::new(tangency)));
    }
    Ok(FieldStage { spokes, cross, compatibility: compat, tangency })
}

pub fn layout_stage(field: &FieldStage, config: &PipelineConfig) -> Result<LayoutResult, PipelineError> {
    let out = compute_layout(&field.cross, &field.spokes, &config.layout_params()).map_err(|e| PipelineError::stage(Stage::Layout, e))?;
    if !out.report.check.valid() {
        return Err(PipelineError::stage(Stage::Layout, format!("layout invalid after repairs: {:?}", out.report.check)));
    }
    Ok(out)
}

pub fn mesh_stage(field: &FieldStage, layout: &LayoutResult, config: &PipelineConfig) -> Result<QuadMeshOutput, PipelineError> {
    mesh_layout(&field.cross, &layout.layout, &config.quad_params()).map_err(|e| PipelineError::stage(Stage::Mesh, e))
}

/// Quality summary written as `quality.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub quality: QualityReport,
    pub quads: usize,
    pub vertices: usize,
    pub conforming: bool,
    pub min_area: f64,
    pub irregular_vertices: usize,
    pub min_uv_jacobian: f64,
    pub max_curl: f64,
}

pub fn quality_summary(field: &FieldStage, mesh: &QuadMeshOutput) -> QualitySummary {
    let check = mesh.mesh.check(&field.cross.mesh);
    QualitySummary {
        quality: mesh.quality.clone(),
        quads: mesh.mesh.quads.len(),
        vertices: mesh.mesh.vertices.len(),
        conforming: check.conforming,
        min_area: check.min_area,
        irregular_vertices: check.irregular.len(),
        min_uv_jacobian: mesh.summaries.iter().map(|s| s.min_jacobian).fold(f64::INFINITY, f64::min),
        max_curl: mesh.summaries.iter().map(|s| s.max_curl).fold(0.0, f64::max),
    }
}

pub fn quality_json(field: &FieldStage, mesh: &QuadMeshOutput) -> String {
    serde_json::to_string_pretty(&quality_summary(field, mesh)).expect("quality serializes") + "\n"
}

pub fn pattern_json(pattern: &SingularityPattern) -> String {
    pattern.to_json() + "\n"
}

/// The layout with the pattern after doublet splits.
pub fn layout_json(layout: &LayoutResult) -> String {
    format!("{{\"pattern\":{},\"layout\":{}}}\n", layout.pattern.to_json(), layout.layout.to_json())
}

#[derive(Serialize)]
struct FieldDump<'a> {
    h: &'a [f64],
    h_residual: f64,
    theta: &'a [[f64; 3]],
    cut_edges: &'a [usize],
    compatibility: &'a CompatibilityReport,
    max_tangency_deviation_deg: f64,
}

pub fn field_json(field: &FieldStage) -> String {
    let c = &field.cross;
    let d = FieldDump {
        h: &c.h.values,
        h_residual: c.h.residual,
        theta: &c.theta.tri_values,
        cut_edges: &c.cut.edges,
        compatibility: &field.compatibility,
        max_tangency_deviation_deg: field.tangency.max_deviation.to_degrees(),
    };
    serde_json::to_string(&d).expect("field serializes") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunChecks {
    pub pattern_valid: bool,
    pub pattern_detected: bool,
    pub compatibility_ok: bool,
    pub meshable: bool,
    pub layout_valid: bool,
    pub mesh_conforming: bool,
    pub uv_bijective: bool,
    pub irregular_match_pattern: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub timings: Vec<StageTiming>,
    pub checks: RunChecks,
    pub layout: crate::layout::LayoutReport,
    pub quality: QualitySummary,
    pub artifacts: Vec<PathBuf>,
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mesh: TriMesh,
    pub pattern: PatternStage,
    pub field: FieldStage,
    pub layout: LayoutResult,
    pub quads: QuadMeshOutput,
    pub report: RunReport,
}

fn write(dir: &Path, name: &str, text: &str, list: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
    list.push(path);
    Ok(())
}

/// Runs every stage on an in-memory mesh and writes artifacts when `config.out` is set.
pub fn run_mesh(mesh: TriMesh, supplied: Option<SingularityPattern>, config: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let mut timings = Vec::new();
    let clock = Instant::now();
    let lap = |stage: Stage, timings: &mut Vec<StageTiming>, t0: &mut f64| {
        let now = clock.elapsed().as_secs_f64() * 1e3;
        timings.push(StageTiming { stage, millis: now - *t0 });
        *t0 = now;
    };
    let mut t0 = 0.0;
    let pattern = pattern_stage(&mesh, supplied, config)?;
    lap(Stage::Pattern, &mut timings, &mut t0);
    let field = field_stage(&mesh, &pattern.pattern, config)?;
    lap(Stage::Field, &mut timings, &mut t0);
    let layout = layout_stage(&field, config)?;
    lap(Stage::Layout, &mut timings, &mut t0);
    let quads = mesh_stage(&field, &layout, config)?;
    lap(Stage::Mesh, &mut timings, &mut t0);

    let quality = quality_summary(&field, &quads);
    let interior_singular = layout.pattern.singularities.iter().filter(|s| !s.boundary).count();
    let checks = RunChecks {
        pattern_valid: pattern.validation.ok,
        pattern_detected: pattern.detected,
        compatibility_ok: field.compatibility.ok,
        meshable: field.tangency.meshable,
        layout_valid: layout.report.check.valid(),
        mesh_conforming: quality.conforming,
        uv_bijective: quality.min_uv_jacobian > 0.0,
        irregular_match_pattern: quality.irregular_vertices == interior_singular,
    };
    let mut artifacts = Vec::new();
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
        write(dir, "pattern.json", &pattern_json(&pattern.pattern), &mut artifacts)?;
        write(dir, "layout.json", &layout_json(&layout), &mut artifacts)?;
        write(dir, "field.json", &field_json(&field), &mut artifacts)?;
        let msh = to_msh(&quads.mesh).map_err(|e| PipelineError::stage(Stage::Mesh, e))?;
        write(dir, "mesh.msh", &msh.to_text(), &mut artifacts)?;
        write(dir, "quality.json", &quality_json(&field, &quads), &mut artifacts)?;
        if config.svg {
            write(dir, "layout.svg", &svg::render_layout(&mesh, &layout.layout, &layout.pattern), &mut artifacts)?;
            write(dir, "mesh.svg", &svg::render_mesh(&mesh, &quads.mesh, &layout.pattern), &mut artifacts)?;
        }
    }
    let report = RunReport { config: config.clone(), timings, checks, layout: layout.report.clone(), quality, artifacts };
    if let Some(dir) = &config.out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        let mut sink = Vec::new();
        write(dir, "report.json", &text, &mut sink)?;
    }
    Ok(RunOutput { mesh, pattern, field, layout, quads, report })
}

/// Loads the configured mesh and pattern, then runs every stage.
pub fn run(config: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let path = config.mesh.as_ref().ok_or_else(|| PipelineError::Config("no input mesh given".into()))?;
    let mesh = load_input_mesh(path)?;
    let supplied = match &config.pattern {
        Some(p) => Some(load_pattern(p, &mesh)?),
        None => None,
    };
    run_mesh(mesh, supplied, config)
}
