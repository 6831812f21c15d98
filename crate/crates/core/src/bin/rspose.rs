use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rspose::bench::{
    estimate_from_file, format_estimate, format_summary, generate_trial, parse_motion, run_sweep, summarize,
    write_records, Method, SweepSpec, SweepVariable, TrialSetup,
};
use rspose::io::CorrespondenceFile;
use rspose::{Error, RefineConfig};

#[derive(Parser)]
#[command(name = "rspose", version, about = "Rolling-shutter relative pose with inertial aid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic sweep and write one CSV row per trial and algorithm.
    SynthSweep {
        /// linvel, angvel, pixnoise, gravnoise or wnoise
        #[arg(long)]
        sweep: String,
        /// forward or sideways
        #[arg(long, default_value = "forward")]
        motion: String,
        /// Comma-separated algorithms; `gs5` is the global-shutter baseline.
        #[arg(long, default_value = "uniform9,uniform11,gs5")]
        algos: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Fraction of correspondences replaced by outliers; enables RANSAC.
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long)]
        no_refine: bool,
        /// Record wall-clock runtimes (makes the output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Print per-algorithm, per-value statistics of a sweep CSV.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Restrict to these algorithms (comma-separated).
        #[arg(long)]
        algos: Option<String>,
    },
    /// Estimate the relative pose from a correspondence file.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        algo: String,
        /// Inlier threshold in pixels.
        #[arg(long, default_value_t = 1.0)]
        ransac_px: f64,
        #[arg(long)]
        no_refine: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic correspondence file.
    SynthExport {
        #[arg(long, default_value = "forward")]
        motion: String,
        /// Linear velocity magnitude, m/s.
        #[arg(long, default_value_t = 1.0)]
        linvel: f64,
        /// Angular velocity magnitude, rad/s.
        #[arg(long, default_value_t = 1.0)]
        angvel: f64,
        #[arg(long, default_value_t = 0.0)]
        pixel_noise: f64,
        #[arg(long, default_value_t = 0.0)]
        gravity_noise: f64,
        #[arg(long, default_value_t = 0.0)]
        angvel_noise: f64,
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> rspose::Result<()> {
    match cmd {
        Command::SynthSweep {
            sweep,
            motion,
            algos,
            trials,
            seed,
            out,
            min,
            max,
            steps,
            outliers,
            points,
            no_refine,
            timing,
        } => {
            let variable: SweepVariable = sweep.parse()?;
            let mut spec = SweepSpec::new(variable, parse_motion(&motion)?);
            spec.methods = Method::parse_list(&algos)?;
            spec.trials = trials;
            spec.seed = seed;
            spec.min = min.unwrap_or(spec.min);
            spec.max = max.unwrap_or(spec.max);
            spec.steps = steps.unwrap_or(spec.steps);
            spec.outlier_fraction = outliers;
            spec.pipeline.full_ransac = outliers > 0.0;
            spec.n_points = points;
            spec.timing = timing;
            if no_refine {
                spec.pipeline.refine = None;
            }
            let records = run_sweep(&spec)?;
            write_records(&records, BufWriter::new(File::create(&out)?))?;
            log::info!("wrote {} rows to {}", records.len(), out.display());
        }
        Command::Summarize { input, algos } => {
            let wanted: Vec<String> = algos
                .map(|a| a.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default();
            let rows = summarize(&input, &wanted)?;
            io::stdout().write_all(format_summary(&rows).as_bytes())?;
        }
        Command::Estimate {
            input,
            algo,
            ransac_px,
            no_refine,
            seed,
        } => {
            let method: Method = algo.parse()?;
            let refine = (!no_refine).then(RefineConfig::default);
            let est = estimate_from_file(&input, method, ransac_px, seed, refine)?;
            io::stdout().write_all(format_estimate(&est).as_bytes())?;
        }
        Command::SynthExport {
            motion,
            linvel,
            angvel,
            pixel_noise,
            gravity_noise,
            angvel_noise,
            outliers,
            points,
            seed,
            out,
        } => {
            if !(0.0..1.0).contains(&outliers) {
                return Err(Error::InvalidArgument("outlier fraction must lie in [0, 1)".into()));
            }
            let data = generate_trial(&TrialSetup {
                motion: parse_motion(&motion)?,
                linear_speed: linvel,
                angular_speed: angvel,
                pixel_sigma: pixel_noise,
                gravity_noise_deg: gravity_noise,
                angvel_noise_deg: angvel_noise,
                outlier_fraction: outliers,
                n_points: points,
                seed,
            });
            CorrespondenceFile::from_pixels(data.scene.intrinsics, data.imu1, data.imu2, &data.pixels).write(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
