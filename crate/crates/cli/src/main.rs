//! `lasercover`: plan, simulate, score, run trials, calibrate and serve.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad configuration or input file.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "lasercover", version, about = "Laser spot coverage planning and split-face trial workbench")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Trial config (TOML, or JSON by extension); defaults apply without it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config value by dotted path, e.g. `--set human.aim_sigma=2.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory for output files (and metadata.json); without it results go to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// RNG seed, or `random` to draw one (recorded in metadata.json).
    #[arg(long, global = true, value_name = "N|random", value_parser = parse_seed)]
    pub seed: Option<SeedArg>,
    /// Raster pitch for scoring (mm).
    #[arg(long, global = true, value_name = "MM")]
    pub pixel_size: Option<f64>,
    /// Rendering of the primary result on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u64),
    Random,
}

fn parse_seed(s: &str) -> Result<SeedArg, String> {
    if s.eq_ignore_ascii_case("random") {
        return Ok(SeedArg::Random);
    }
    s.parse().map(SeedArg::Fixed).map_err(|_| format!("expected a non-negative integer or `random`, got {s:?}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Which surface and region to work on.
#[derive(Args, Clone, Debug)]
pub struct Target {
    /// Patch of the config to use (default: the first).
    #[arg(long, conflicts_with = "mesh")]
    pub patch: Option<String>,
    /// Mesh file (PLY or OBJ) instead of a config patch.
    #[arg(long, requires = "region", value_name = "FILE")]
    pub mesh: Option<PathBuf>,
    /// Region file (JSON: selection, exclusions, margin) on `--mesh`.
    #[arg(long, requires = "mesh", value_name = "FILE")]
    pub region: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArmArg {
    Robot,
    Human,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a robot lattice and validate it (plan.json, validation.json).
    Plan {
        #[command(flatten)]
        target: Target,
    },
    /// Simulate one pass of an arm (plan.json).
    Simulate {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value_t = ArmArg::Human)]
        arm: ArmArg,
        /// RNG stream within the seed.
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Score a plan over a region (coverage.json).
    Score {
        #[command(flatten)]
        target: Target,
        /// Plan file to score.
        #[arg(long, value_name = "FILE")]
        plan: PathBuf,
        /// Also write heatmap.bin and dose.pgm.
        #[arg(long)]
        heatmap: bool,
    },
    /// Run the split-face trial (trial.json, trial.csv).
    Trial,
    /// Fit an arm's noise parameters to a coverage target (model.json, calibration.json).
    Calibrate {
        #[arg(long, value_enum, default_value_t = ArmArg::Human)]
        arm: ArmArg,
        /// Target mean coverage (%); defaults to the arm's reference value.
        #[arg(long)]
        target_mean: Option<f64>,
        /// Target coverage SD (%); defaults to the arm's reference value.
        #[arg(long)]
        target_sd: Option<f64>,
        /// Maximum number of cohort evaluations.
        #[arg(long, default_value_t = 80)]
        budget: usize,
        /// Accepted |mean − target| in percentage points.
        #[arg(long, default_value_t = 5.0)]
        tolerance: f64,
    },
    /// Serve the HTTP API; `--out` enables write-through persistence.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan { target } => commands::plan(&cli.common, &target),
        Command::Simulate { target, arm, stream } => commands::simulate(&cli.common, &target, arm, stream),
        Command::Score { target, plan, heatmap } => commands::score(&cli.common, &target, &plan, heatmap),
        Command::Trial => commands::trial(&cli.common),
        Command::Calibrate { arm, target_mean, target_sd, budget, tolerance } => {
            commands::calibrate(&cli.common, arm, target_mean, target_sd, budget, tolerance)
        }
        Command::Serve { bind } => commands::serve(&cli.common, &bind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn seeds_parse_as_numbers_or_random() {
        assert_eq!(parse_seed("42"), Ok(SeedArg::Fixed(42)));
        assert_eq!(parse_seed("Random"), Ok(SeedArg::Random));
        assert!(parse_seed("-1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn mesh_and_region_go_together() {
        assert!(Cli::try_parse_from(["lasercover", "plan", "--mesh", "m.ply"]).is_err());
        assert!(Cli::try_parse_from([
            "lasercover",
            "plan",
            "--patch",
            "cheek",
            "--mesh",
            "m.ply",
            "--region",
            "r.json"
        ])
        .is_err());
        let cli =
            Cli::try_parse_from(["lasercover", "score", "--plan", "p.json", "--set", "a=1", "--set", "b=2"]).unwrap();
        assert_eq!(cli.common.overrides, ["a=1", "b=2"]);
    }
}
