use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use namo_core::geom::Vec2;
use namo_core::grid::{compose_layers, CostGrid};
use namo_core::harness::scenario::{load_scenario, Scenario};
use namo_core::harness::{
    export_costmap_image, run_batch, run_trial_with, write_csv, Config, Overlays, TrialMetrics,
    TrialOptions,
};
use namo_core::layers::inflate;
use namo_core::Exec;

#[derive(Parser)]
#[command(
    name = "namo",
    version,
    about = "Adaptive cost-map navigation among movable obstacles"
)]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one trial; exits 0 on success, 1 on failure.
    Run {
        /// Scenario file, or the name of a bundled scenario (1-a ... 3).
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Disable the movable layer overrides.
        #[arg(long)]
        baseline: bool,
        /// Write one costmap PNG per control tick into this directory.
        #[arg(long)]
        export_frames: Option<PathBuf>,
        /// TOML file of parameter overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run adaptive and baseline batches and write a CSV summary.
    Bench {
        /// Comma-separated scenario files or bundled names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1-a,1-b,1-c,2-a,2-b,2-c,3"
        )]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed0: u64,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render a PGM map or a scenario's static costmap to PNG.
    Render {
        /// A .pgm file, a scenario file or a bundled scenario name.
        input: String,
        #[arg(long)]
        out: PathBuf,
        /// Meters per cell for PGM input.
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
        /// Apply wall inflation before rendering.
        #[arg(long)]
        inflate: bool,
    },
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn scenario_with(name: &str, config: &Option<PathBuf>) -> Res<Scenario> {
    let sc = load_scenario(name)?;
    Ok(match config {
        Some(p) => {
            let v: toml::Value = toml::from_str(&std::fs::read_to_string(p)?)?;
            let cfg: Config = sc.config.merged(&v)?;
            sc.with_config(cfg)
        }
        None => sc,
    })
}

fn report(m: &TrialMetrics) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "scenario={} seed={} baseline={} success={} nav_time={:.2}",
        m.scenario, m.seed, m.baseline, m.success, m.nav_time
    )?;
    for (id, level) in &m.final_levels {
        writeln!(out, "body {id}: {level:?}")?;
    }
    for e in &m.escalation_log {
        writeln!(
            out,
            "escalation t={:.2} {:?} cluster={:?} body={:?}",
            e.time, e.level, e.cluster, e.body
        )?;
    }
    writeln!(out, "movability_correct={}", m.movability_correct)
}

fn real_main(cli: Cli) -> Res<bool> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            baseline,
            export_frames,
            config,
        } => {
            let sc = scenario_with(&scenario, &config)?;
            let sc = if baseline { sc.with_baseline(true) } else { sc };
            if let Some(dir) = &export_frames {
                std::fs::create_dir_all(dir)?;
            }
            let opts = TrialOptions {
                exec,
                frames_dir: export_frames,
            };
            let m = run_trial_with(&sc, seed, &opts);
            // A closed stdout (e.g. piped into `head`) must not change the exit code.
            let _ = report(&m);
            Ok(m.success)
        }
        Cmd::Bench {
            scenarios,
            trials,
            seed0,
            out,
            config,
        } => {
            if trials == 0 {
                return Err("--trials must be at least 1".into());
            }
            let mut rows = Vec::new();
            for name in &scenarios {
                let sc = scenario_with(name, &config)?;
                let s = run_batch(&sc, trials, seed0, exec);
                eprintln!(
                    "{}: success {:.0}% baseline {:.0}% accuracy {:.0}%",
                    s.scenario, s.success_rate, s.baseline_success_rate, s.movability_accuracy
                );
                rows.push(s);
            }
            write_csv(File::create(&out)?, &rows)?;
            Ok(true)
        }
        Cmd::Render {
            input,
            out,
            resolution,
            inflate: do_inflate,
        } => {
            let grid = if input.ends_with(".pgm") {
                CostGrid::read_pgm(BufReader::new(File::open(&input)?), resolution, Vec2::ZERO)?
            } else {
                (*load_scenario(&input)?.static_map).clone()
            };
            let grid = if do_inflate {
                let params = Config::default().layers;
                let sources = grid
                    .lethal_indices()
                    .into_iter()
                    .map(|i| (i, grid.cells[i]))
                    .collect();
                let inflated = inflate(&grid.meta, &sources, &params);
                let empty = CostGrid::new(grid.meta, namo_core::grid::FREE);
                compose_layers(&grid, &empty, &Default::default(), &inflated)?
            } else {
                grid
            };
            export_costmap_image(&grid, &Overlays::default(), &out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
