use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radsim_cli::commands::{cmd_bench, cmd_calibrate, cmd_compare, cmd_render, CalibrateOptions, RenderOptions};
use radsim_cli::CliError;
use serde_json::json;

#[derive(Parser)]
#[command(name = "radsim", version, about = "Monte-Carlo radar polar image simulator")]
struct Cli {
    /// Worker threads (0 = all cores). Never changes output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one PGM per trajectory pose plus manifest.csv.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the lidar-like baseline (mean ray, first hit only).
        #[arg(long)]
        lidar_like: bool,
    },
    /// Per-frame MIS/SSI between two rendered directories.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the config's [calibration] parameters to reference frames.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Directory with frame_<i>.pgm, one per trajectory pose.
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        out_config: PathBuf,
        #[arg(long)]
        out_trace: PathBuf,
        #[arg(long)]
        max_evals: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Frame runtime versus rays per azimuth.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Pose source; the first record is used. Defaults to the origin.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "200,400,600,800,1000")]
        samples: Vec<u32>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    Ok(match cli.command {
        Command::Render { config, trajectory, out, lidar_like } => {
            let rows = cmd_render(&config, &trajectory, &out, RenderOptions { lidar_like })?;
            json!({ "frames": rows.len(), "out": out })
        }
        Command::Compare { dir_a, dir_b, out } => {
            let c = cmd_compare(&dir_a, &dir_b, &out)?;
            json!({
                "frames": c.frames.len(),
                "mis": { "mean": c.mean_mis, "std": c.std_mis },
                "ssi": { "mean": c.mean_ssi, "std": c.std_ssi },
            })
        }
        Command::Calibrate { config, trajectory, references, out_config, out_trace, max_evals, tolerance } => {
            let opts = CalibrateOptions { max_evals, tolerance };
            let r = cmd_calibrate(&config, &trajectory, &references, &out_config, &out_trace, &opts)?;
            json!({
                "params": r.names.iter().zip(&r.best).map(|(n, v)| (n.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
                "objective": r.best_value,
                "evaluations": r.evaluations,
            })
        }
        Command::Bench { config, trajectory, samples, repeats, out } => {
            let rows = cmd_bench(&config, trajectory.as_deref(), &samples, repeats, &out)?;
            json!({ "rows": rows })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", json!({ "error": "threads", "message": e.to_string() }));
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(cli)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
