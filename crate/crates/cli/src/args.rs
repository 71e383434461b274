use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "graspkit", version, about = "Semi-supervised grasp detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-phase training (or supervised-only with --baseline).
    Train(TrainArgs),
    /// Train and evaluate across labelled ratios on a fixed test split.
    Sweep(SweepArgs),
    /// Grasp maps and the best grasp for one image.
    Predict(PredictArgs),
    /// IOU success rate of trained weights on a dataset.
    Eval(EvalArgs),
    /// Fit the camera-to-robot mapping from an observation CSV.
    Calibrate(CalibrateArgs),
    /// Predict, map to the robot frame, plan and simulate one grasp.
    ExecuteSim(ExecuteSimArgs),
    /// Write a synthetic dataset in the exported scene layout.
    SynthData(SynthArgs),
}

/// Options shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "graspkit-out")]
    pub out: PathBuf,
    /// Seed for every random choice in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with training settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Scene directory (exported or Cornell layout), or `synth[:N]` for N
    /// generated 64×64 scenes (default 200).
    #[arg(long)]
    pub data: String,
    /// Side length Cornell images are cropped and resized to.
    #[arg(long, default_value_t = 64, value_parser = parse_side)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Labelled fraction in (0, 1].
    #[arg(long, value_parser = parse_ratio)]
    pub ratio: Option<f64>,
    /// Train the head on labelled scenes only, without phase one.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated labelled fractions.
    #[arg(long, value_delimiter = ',', value_parser = parse_ratio, default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub baseline: bool,
    /// Skip the ratio-1.0 control run.
    #[arg(long)]
    pub no_control: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub weights: PathBuf,
    /// RGB image file.
    #[arg(long)]
    pub image: PathBuf,
    /// Gaussian smoothing of Q before the argmax, in pixels.
    #[arg(long, value_parser = parse_sigma)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_parser = parse_sigma)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Observation CSV.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExecuteSimArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Mapping JSON from `calibrate`; without it, a mapping is fitted on the
    /// built-in overhead camera rig.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Kinematic chain file; the shipped 7-DOF arm by default.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long, value_parser = parse_sigma)]
    pub sigma: Option<f64>,
    /// Camera-measured depth at the grasp center, in meters.
    #[arg(long, default_value_t = 0.9, value_parser = parse_positive)]
    pub depth: f64,
    /// Focal lengths in pixels; the default keeps a 64-pixel image seen from
    /// 0.9 m inside the reachable part of the built-in rig's table.
    #[arg(long, default_value_t = 230.0, value_parser = parse_positive)]
    pub fx: f64,
    #[arg(long, default_value_t = 230.0, value_parser = parse_positive)]
    pub fy: f64,
    /// Principal point; the image center by default.
    #[arg(long)]
    pub cx: Option<f64>,
    #[arg(long)]
    pub cy: Option<f64>,
    /// Vertical distance from the transit plane to the grasp point, meters.
    #[arg(long, default_value_t = 0.12, value_parser = parse_non_negative)]
    pub depth_gpc: f64,
    /// Object height above the table, meters.
    #[arg(long, default_value_t = 0.05, value_parser = parse_non_negative)]
    pub height_gpc: f64,
    /// Minimum gripper height before the descent, meters.
    #[arg(long, default_value_t = 0.20, value_parser = parse_positive)]
    pub transit: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of scenes.
    #[arg(long, default_value_t = 200, value_parser = parse_count)]
    pub n: usize,
    #[arg(long, default_value_t = 64, value_parser = parse_side)]
    pub size: usize,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{s:?} is not a number: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("ratio must be in (0, 1], got {v}"))
    }
}

fn parse_sigma(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("sigma must be >= 0, got {v}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {v}"))
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_side(s: &str) -> Result<usize, String> {
    let n = parse_count(s)?;
    if n % 4 == 0 {
        Ok(n)
    } else {
        Err(format!("must be a multiple of 4, got {n}"))
    }
}
