use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quadforge_core::fixtures;
use quadforge_core::geom::Vec2;
use quadforge_core::msh::save_mesh;
use quadforge_core::pipeline::{self, PipelineConfig, PipelineError, SmoothKind};
use quadforge_core::singularity::{validate, SingularityPattern};

#[derive(Parser)]
#[command(name = "quadforge", version, about = "Cross-field guided quad meshing of planar domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all four stages and write the artifacts.
    Run(RunArgs),
    /// Check a singularity pattern against the index balance of a mesh.
    ValidatePattern {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Write one of the reference domains as a `.msh` file.
    Fixture {
        #[arg(value_enum)]
        domain: Domain,
        #[arg(long)]
        out: PathBuf,
        /// Also write a singularity pattern for the domain.
        #[arg(long, value_enum)]
        pattern: Option<FixturePattern>,
        #[arg(long)]
        pattern_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Square,
    Disk,
    Annulus,
    SquareMinusDisk,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixturePattern {
    /// No singularities.
    Empty,
    /// Annulus pairs that admit a layout.
    Good,
    /// Annulus pairs whose field misses the inner loop.
    Bad,
}

#[derive(Clone, Copy, ValueEnum)]
enum Smooth {
    Winslow,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Skip detection and use this pattern.
    #[arg(long)]
    pattern: Option<PathBuf>,
    /// JSON configuration; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    target_size: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
    #[arg(long, value_enum)]
    smooth: Option<Smooth>,
}

fn build_config(a: &RunArgs) -> Result<PipelineConfig, PipelineError> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| PipelineError::Io { path: p.clone(), source })?;
            PipelineConfig::from_json(&text)?
        }
        None => PipelineConfig::default(),
    };
    if a.mesh.is_some() {
        c.mesh = a.mesh.clone();
    }
    if a.pattern.is_some() {
        c.pattern = a.pattern.clone();
    }
    if let Some(t) = a.target_size {
        c.target_size = t;
    }
    if a.out.is_some() {
        c.out = a.out.clone();
    }
    c.svg |= a.svg;
    if let Some(Smooth::Winslow) = a.smooth {
        c.smooth = Some(SmoothKind::Winslow);
    }
    c.validate()?;
    Ok(c)
}

fn run(a: RunArgs) -> ExitCode {
    let config = match build_config(&a) {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    match pipeline::run(&config) {
        Ok(out) => {
            let r = &out.report;
            for t in &r.timings {
                println!("{:<8} {:>10.1} ms", t.stage.to_string(), t.millis);
            }
            println!("{}", r.quality.quality.table());
            println!("checks: {}", serde_json::to_string(&r.checks).expect("checks serialize"));
            for p in &r.artifacts {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, config.out.as_deref()),
    }
}

/// Prints the failure and, when an output directory is known, writes it as `report.json`.
fn fail(e: &PipelineError, out: Option<&std::path::Path>) -> ExitCode {
    eprintln!("error: {e}");
    let report = e.to_json();
    if let PipelineError::NonMeshable(t) = e {
        for v in t.violations.iter().take(8) {
            eprintln!("  edge {} at ({:.4}, {:.4}): {:.2}°", v.edge, v.location.x, v.location.y, v.deviation.to_degrees());
        }
        if t.violations.len() > 8 {
            eprintln!("  ... {} more", t.violations.len() - 8);
        }
    }
    if let Some(dir) = out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        if let Err(w) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("report.json"), text)) {
            eprintln!("could not write report: {w}");
        }
    }
    ExitCode::from(e.exit_code() as u8)
}

fn validate_pattern(mesh: PathBuf, pattern: PathBuf) -> ExitCode {
    let loaded = pipeline::load_input_mesh(&mesh).and_then(|m| pipeline::load_pattern(&pattern, &m).map(|p| (m, p)));
    let (m, p) = match loaded {
        Ok(x) => x,
        Err(e) => return fail(&e, None),
    };
    let report = validate(&p, &m);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("pattern is invalid: deficit {}", report.deficit);
        ExitCode::from(PipelineError::InvalidPattern(Box::new(report)).exit_code() as u8)
    }
}

fn fixture(domain: Domain, out: PathBuf, pattern: Option<FixturePattern>, pattern_out: Option<PathBuf>) -> ExitCode {
    let mesh = match domain {
        Domain::Square => fixtures::unit_square(16),
        Domain::Disk => fixtures::disk(Vec2::new(0.0, 0.0), 1.0, 12),
        Domain::Annulus => fixtures::annulus(Vec2::new(0.0, 0.0), 0.3, 1.0, 64, 16),
        Domain::SquareMinusDisk => fixtures::square_minus_disk(0.2, 64, 12),
    };
    if let Err(e) = save_mesh(&mesh, &out) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let Some(kind) = pattern else { return ExitCode::SUCCESS };
    let entries = match (kind, domain) {
        (FixturePattern::Empty, _) => Vec::new(),
        (FixturePattern::Good, Domain::Annulus) => fixtures::annulus_pair_patterns(&mesh).0,
        (FixturePattern::Bad, Domain::Annulus) => fixtures::annulus_pair_patterns(&mesh).1,
        _ => {
            eprintln!("error: good and bad patterns exist only for the annulus");
            return ExitCode::from(2);
        }
    };
    let p = SingularityPattern::from_valences(&mesh, &entries).expect("fixture pattern is well formed");
    let path = pattern_out.unwrap_or_else(|| out.with_extension("pattern.json"));
    if let Err(e) = std::fs::write(&path, p.to_json() + "\n") {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::ValidatePattern { mesh, pattern } => validate_pattern(mesh, pattern),
        Command::Serve { addr } => match quadforge_service::serve_blocking(&addr) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Fixture { domain, out, pattern, pattern_out } => fixture(domain, out, pattern, pattern_out),
    }
}
