//! Paired full-versus-baseline runs over consecutive seeds.

use std::fmt::Write;
use std::path::Path;

use msgraph_core::eval::{ate, Alignment, AteResult, Trajectory};
use msgraph_core::pipeline::{run_sequence, Mode, PipelineConfig};
use msgraph_core::sim::{build_world, simulate, FrameObservation, NoiseSpec, World};
use rayon::prelude::*;

use crate::config::Experiment;
use crate::error::{self, Error};
use crate::{num, report};

/// RMSE treated as zero when computing relative improvement, meters.
pub const RMSE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SeedResult {
    pub seed: u64,
    pub full: AteResult,
    pub baseline: AteResult,
}

impl SeedResult {
    /// `(baseline − full) / baseline`; positive when the full mode is better.
    pub fn improvement(&self) -> f64 {
        (self.baseline.rmse - self.full.rmse) / self.baseline.rmse.max(RMSE_FLOOR)
    }
}

#[derive(Clone, Debug)]
pub struct Summary {
    pub runs: Vec<SeedResult>,
}

impl Summary {
    pub fn median_improvement(&self) -> f64 {
        let mut v: Vec<f64> = self.runs.iter().map(SeedResult::improvement).collect();
        median(&mut v)
    }

    /// Runs where the full mode is no worse than the baseline.
    pub fn full_not_worse(&self) -> usize {
        self.runs.iter().filter(|r| r.full.rmse <= r.baseline.rmse).count()
    }

    /// Runs whose full-mode RMSE is within `tol` (relative) of the baseline.
    pub fn within(&self, tol: f64) -> usize {
        self.runs
            .iter()
            .filter(|r| (r.full.rmse - r.baseline.rmse).abs() <= tol * r.baseline.rmse.max(RMSE_FLOOR))
            .count()
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn evaluate(frames: &[FrameObservation], cfg: PipelineConfig, world: &World, gt: &Trajectory, align: Alignment) -> Result<AteResult, Error> {
    let out = run_sequence(frames, cfg, world.dictionary.clone())?;
    Ok(ate(&out.trajectory, gt, align)?)
}

pub fn run_seed(exp: &Experiment, world: &World, seed: u64) -> Result<SeedResult, Error> {
    let noise = NoiseSpec {
        seed,
        ..exp.noise.clone()
    };
    let frames: Vec<FrameObservation> = simulate(world, &exp.trajectory, &noise)?.collect();
    let gt = Trajectory::new(frames.iter().map(|f| (f.timestamp, f.ground_truth)).collect())?;
    let with_mode = |mode| PipelineConfig {
        mode,
        ..exp.pipeline.clone()
    };
    Ok(SeedResult {
        seed,
        full: evaluate(&frames, with_mode(Mode::Full), world, &gt, exp.align)?,
        baseline: evaluate(&frames, with_mode(Mode::Baseline), world, &gt, exp.align)?,
    })
}

pub fn run_experiment(exp: &Experiment) -> Result<Summary, Error> {
    let world = build_world(exp.world.clone())?;
    let runs = (0..exp.runs as u64)
        .into_par_iter()
        .map(|i| run_seed(exp, &world, exp.seed + i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Summary { runs })
}

pub fn format_summary_csv(s: &Summary) -> String {
    let mut out = String::from("seed,full_rmse,baseline_rmse,improvement\n");
    for r in &s.runs {
        writeln!(
            out,
            "{},{},{},{}",
            r.seed,
            num::fmt(r.full.rmse),
            num::fmt(r.baseline.rmse),
            num::fmt(r.improvement())
        )
        .unwrap();
    }
    out
}

pub fn format_summary_toml(s: &Summary, exp: &Experiment) -> String {
    let mut out = String::new();
    writeln!(out, "format_version = 1").unwrap();
    writeln!(out, "runs = {}", s.runs.len()).unwrap();
    writeln!(out, "first_seed = {}", exp.seed).unwrap();
    writeln!(out, "align = \"{}\"", report::alignment_name(exp.align)).unwrap();
    writeln!(out, "median_improvement = {:?}", s.median_improvement()).unwrap();
    writeln!(out, "full_not_worse = {}", s.full_not_worse()).unwrap();
    out
}

/// Writes `summary.toml`, `summary.csv` and `seed_<n>/{full,baseline}.csv`.
pub fn write_summary(s: &Summary, exp: &Experiment, dir: &Path) -> Result<(), Error> {
    error::write(&dir.join("summary.toml"), &format_summary_toml(s, exp))?;
    error::write(&dir.join("summary.csv"), &format_summary_csv(s))?;
    for r in &s.runs {
        let sub = dir.join(format!("seed_{}", r.seed));
        report::write_error_series(&r.full, &sub.join("full.csv"))?;
        report::write_error_series(&r.baseline, &sub.join("baseline.csv"))?;
    }
    Ok(())
}
