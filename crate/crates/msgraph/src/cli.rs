//! Command-line surface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use msgraph_core::eval::{ate, Alignment, Trajectory};
use msgraph_core::pipeline::{run_sequence, Mode, PipelineConfig};
use msgraph_core::sim::{build_world, simulate, FrameObservation, NoiseSpec};

use crate::error::Error;
use crate::{config, dictionary, events, experiment, mapfile, record, report, trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "msgraph", version, about = "Marker-based semantic graph SLAM on simulated sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Full,
    Baseline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlignArg {
    None,
    Rigid,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a sequence: writes observations.rec, ground_truth.txt and dictionary.txt.
    Simulate {
        /// World description (TOML).
        #[arg(long)]
        world: PathBuf,
        /// Camera path (TOML).
        #[arg(long)]
        trajectory: PathBuf,
        /// Sensor noise (TOML); noiseless when omitted.
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Overrides the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run SLAM on a record file: writes trajectory.txt, map.txt and events.log.
    Slam {
        /// Observation record file.
        #[arg(long)]
        observations: PathBuf,
        /// Room dictionary file.
        #[arg(long)]
        dictionary: PathBuf,
        /// Pipeline settings (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the mode set in the config.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Absolute trajectory error: writes ate.toml and errors.csv.
    Eval {
        /// Estimated trajectory.
        #[arg(long)]
        estimate: PathBuf,
        /// Ground-truth trajectory.
        #[arg(long = "ground-truth")]
        ground_truth: PathBuf,
        /// Alignment applied to the estimate first.
        #[arg(long, value_enum, default_value = "rigid")]
        align: AlignArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired full-versus-baseline runs: writes summary.toml, summary.csv and per-seed error series.
    Experiment {
        /// Experiment description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn cmd_simulate(world: &Path, traj: &Path, noise: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), Error> {
    let world = build_world(config::load_world(world)?)?;
    let traj = config::load_trajectory(traj)?;
    let mut noise = match noise {
        Some(p) => config::load_noise(p)?,
        None => NoiseSpec::noiseless(),
    };
    if let Some(s) = seed {
        noise.seed = s;
    }
    let frames: Vec<FrameObservation> = simulate(&world, &traj, &noise)?.collect();
    let gt = Trajectory::new(frames.iter().map(|f| (f.timestamp, f.ground_truth)).collect())?;
    record::write_record(&frames, &out.join("observations.rec"))?;
    trajectory::export_trajectory(&gt, &out.join("ground_truth.txt"))?;
    crate::error::write(&out.join("dictionary.txt"), &dictionary::format_dictionary(&world.dictionary))
}

pub fn cmd_slam(obs: &Path, dict: &Path, cfg: Option<&Path>, mode: Option<Mode>, out: &Path) -> Result<(), Error> {
    let frames = record::read_record(obs)?;
    let dictionary = dictionary::read_dictionary(dict)?;
    let mut cfg = match cfg {
        Some(p) => config::load_pipeline(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    let result = run_sequence(&frames, cfg, dictionary)?;
    trajectory::export_trajectory(&result.trajectory, &out.join("trajectory.txt"))?;
    mapfile::export_map(&result.map, &out.join("map.txt"))?;
    events::write_events(&result.events, &out.join("events.log"))
}

pub fn cmd_eval(est: &Path, gt: &Path, align: Alignment, out: &Path) -> Result<(), Error> {
    let est = trajectory::import_trajectory(est)?;
    let gt = trajectory::import_trajectory(gt)?;
    let r = ate(&est, &gt, align)?;
    report::write_report(&r, align, &out.join("ate.toml"))?;
    report::write_error_series(&r, &out.join("errors.csv"))
}

pub fn cmd_experiment(cfg: &Path, out: &Path) -> Result<(), Error> {
    let exp = config::load_experiment(cfg)?;
    let summary = experiment::run_experiment(&exp)?;
    experiment::write_summary(&summary, &exp, out)
}

pub fn dispatch(cmd: &Command) -> Result<(), Error> {
    match cmd {
        Command::Simulate {
            world,
            trajectory,
            noise,
            seed,
            out,
        } => cmd_simulate(world, trajectory, noise.as_deref(), *seed, out),
        Command::Slam {
            observations,
            dictionary,
            config,
            mode,
            out,
        } => {
            let mode = mode.map(|m| match m {
                ModeArg::Full => Mode::Full,
                ModeArg::Baseline => Mode::Baseline,
            });
            cmd_slam(observations, dictionary, config.as_deref(), mode, out)
        }
        Command::Eval {
            estimate,
            ground_truth,
            align,
            out,
        } => {
            let align = match align {
                AlignArg::None => Alignment::None,
                AlignArg::Rigid => Alignment::Rigid,
            };
            cmd_eval(estimate, ground_truth, align, out)
        }
        Command::Experiment { config, out } => cmd_experiment(config, out),
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
