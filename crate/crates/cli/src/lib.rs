//! The `morin` command line: argument handling, subcommands and the JSON
//! report.

mod commands;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use morin_core::analysis::Analysis;
use morin_core::model::Scene;

pub use report::{csv_table, Report, SceneInfo, Status, SCHEMA_VERSION};

/// Exit code for a Morin coframe, a holding congruence or a clean run.
pub const EXIT_OK: i32 = 0;
/// Exit code for scene, usage and I/O errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit code for a definite negative answer (not Morin, congruence fails).
pub const EXIT_NO: i32 = 2;
/// Exit code for inconclusive answers and failed preconditions.
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "morin",
    version,
    about = "Morin singularities of frames and coframes on implicit manifolds"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Write the JSON report to this file instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Directory for point-cloud CSV side files.
    #[arg(long, global = true, value_name = "DIR")]
    pub csv: Option<PathBuf>,
    /// Seed for covector draws and sampling (default: the scene's, else 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Factor applied to every scene tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Residual tolerance; wins over `--tol`.
    #[arg(long, global = true)]
    pub tol_residual: Option<f64>,
    /// Relative rank tolerance; wins over `--tol`.
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,
    /// Omit timing fields from the report.
    #[arg(long, global = true)]
    pub no_timings: bool,
    /// Grid cells per axis for seeding.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Corank-1 and Morin conditions.
    Check {
        scene: PathBuf,
        /// Deepest stratum to check (default: the scene's max_depth).
        #[arg(long)]
        depth: Option<usize>,
        /// Sampling grid for the corank check.
        #[arg(long, default_value_t = 32)]
        samples: usize,
    },
    /// Strata Σ¹, …, Σ^depth with classifications.
    Strata {
        scene: PathBuf,
        /// Deepest stratum (default: the scene's max_depth).
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Zeros of ξ = Σ aᵢωᵢ on M or of its restriction to Σ^k.
    Zeros {
        scene: PathBuf,
        /// Covector coefficients, comma separated (default: scene covector, else a seeded draw).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
        a: Option<Vec<f64>>,
        /// 0 for M itself, k for Σ^k.
        #[arg(long, default_value_t = 0)]
        stratum: usize,
    },
    /// Mod 2 Euler congruence.
    Euler {
        scene: PathBuf,
        /// Try this covector before seeded draws.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
        a: Option<Vec<f64>>,
    },
    /// Subdivision oracle on the chart-free system of a stratum.
    Oracle {
        scene: PathBuf,
        /// Stratum depth; 0 is M itself.
        #[arg(long, default_value_t = 1)]
        depth: usize,
        /// Restrict to zeros of ξ = Σ aᵢωᵢ on the stratum.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
        a: Option<Vec<f64>>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Strata { .. } => "strata",
            Command::Zeros { .. } => "zeros",
            Command::Euler { .. } => "euler",
            Command::Oracle { .. } => "oracle",
        }
    }

    pub fn scene_path(&self) -> &PathBuf {
        match self {
            Command::Check { scene, .. }
            | Command::Strata { scene, .. }
            | Command::Zeros { scene, .. }
            | Command::Euler { scene, .. }
            | Command::Oracle { scene, .. } => scene,
        }
    }
}

/// What a run produced: the exit code and the text for stdout and stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn error(msg: impl std::fmt::Display) -> Outcome {
        Outcome {
            code: EXIT_ERROR,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_cli(&cli),
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => Outcome {
                    code: if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_ERROR
                    } else {
                        EXIT_OK
                    },
                    stdout: text,
                    stderr: String::new(),
                },
                _ => Outcome {
                    code: EXIT_ERROR,
                    stdout: String::new(),
                    stderr: text,
                },
            }
        }
    }
}

/// Loads the scene with the tolerance overrides of `g` applied.
pub fn load_scene(path: &PathBuf, g: &GlobalArgs) -> Result<(Scene, Vec<u8>), String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let text =
        std::str::from_utf8(&bytes).map_err(|_| format!("{}: not valid UTF-8", path.display()))?;
    let mut scene = Scene::from_toml_str(text).map_err(|e| format!("{}: {e}", path.display()))?;
    apply_overrides(&mut scene, g)?;
    Ok((scene, bytes))
}

fn apply_overrides(scene: &mut Scene, g: &GlobalArgs) -> Result<(), String> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("--{name} must be a positive number"))
        }
    };
    let s = &mut scene.settings;
    if let Some(f) = g.tol {
        let f = positive("tol", f)?;
        s.tol_residual *= f;
        s.tol_rank *= f;
    }
    if let Some(v) = g.tol_residual {
        s.tol_residual = positive("tol-residual", v)?;
    }
    if let Some(v) = g.tol_rank {
        s.tol_rank = positive("tol-rank", v)?;
    }
    if let Some(grid) = g.grid {
        s.grid = grid;
    }
    if let Some(seed) = g.seed {
        scene.rng_seed = Some(seed);
    }
    Ok(())
}

fn run_cli(cli: &Cli) -> Outcome {
    let start = Instant::now();
    let path = cli.command.scene_path();
    let (scene, bytes) = match load_scene(path, &cli.global) {
        Ok(v) => v,
        Err(e) => return Outcome::error(e),
    };
    let an = match Analysis::new(&scene) {
        Ok(an) => an.with_seed(scene.rng_seed.unwrap_or(0)),
        Err(e) => return Outcome::error(e),
    };
    let mut report = Report::new(cli.command.name(), path, &bytes, &an);
    let result = match &cli.command {
        Command::Check { depth, samples, .. } => commands::check(an, &mut report, *depth, *samples),
        Command::Strata { depth, .. } => commands::strata(an, &mut report, *depth),
        Command::Zeros { a, stratum, .. } => {
            commands::zeros(an, &mut report, a.as_deref(), *stratum)
        }
        Command::Euler { a, .. } => commands::euler(an, &mut report, a.as_deref()),
        Command::Oracle { depth, a, .. } => commands::oracle(an, &mut report, *depth, a.as_deref()),
    };
    let tables = match result {
        Ok(tables) => tables,
        Err(e) => return Outcome::error(e),
    };
    if let Some(dir) = &cli.global.csv {
        if let Err(e) = write_tables(dir, &tables) {
            return Outcome::error(e);
        }
    }
    if !cli.global.no_timings {
        report
            .timings
            .insert("total_ms".into(), start.elapsed().as_secs_f64() * 1e3);
    } else {
        report.timings.clear();
    }
    let json = report.to_json(!cli.global.no_timings);
    let mut stderr = String::new();
    if report.status.exit_code != EXIT_OK {
        stderr = format!("{}\n", report.status.message);
    }
    let stdout = match &cli.global.out {
        Some(file) => {
            if let Err(e) = std::fs::write(file, &json) {
                return Outcome::error(format!("{}: {e}", file.display()));
            }
            String::new()
        }
        None => json,
    };
    Outcome {
        code: report.status.exit_code,
        stdout,
        stderr,
    }
}

/// A CSV side file: name and contents.
pub(crate) type Table = (String, String);

fn write_tables(dir: &PathBuf, tables: &[Table]) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, body) in tables {
        let file = dir.join(name);
        std::fs::write(&file, body).map_err(|e| format!("{}: {e}", file.display()))?;
    }
    Ok(())
}
