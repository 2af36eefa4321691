//! `chartblender` command line: tracking, rendering, evaluation, synthetic
//! scene generation and the authoring HTTP service.

mod commands;
pub mod server;

use std::ffi::OsString;
use std::path::PathBuf;

use chartblender_core::compositor::RenderError;
use chartblender_core::eval::EvalError;
use chartblender_core::project::ProjectError;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "chartblender", version, about = "Embed data charts in RGB-D video")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Project JSON file.
    #[arg(long, global = true)]
    pub project: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the odometry RANSAC seed (tracking) or the noise seed (synth).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the camera trajectory and cache it in the project.
    TrackCamera,
    /// Track object anchors and cache their pose sequences.
    TrackObject {
        /// Only this anchor; all object anchors otherwise.
        #[arg(long)]
        anchor: Option<String>,
        /// External `frame,u,v,visible` track to use for `--anchor`.
        #[arg(long, requires = "anchor")]
        track: Option<PathBuf>,
    },
    /// Composite every frame into `--out`.
    Render,
    /// Compare predicted and ground-truth poses or 3D point tracks; prints JSON.
    Eval {
        #[arg(long, requires = "pred_poses")]
        gt_poses: Option<PathBuf>,
        #[arg(long, requires = "gt_poses")]
        pred_poses: Option<PathBuf>,
        /// Ground-truth `frame,x,y,z,visible` tracks, one file per point.
        #[arg(long, num_args = 1.., requires = "pred_tracks")]
        gt_tracks: Vec<PathBuf>,
        #[arg(long, num_args = 1.., requires = "gt_tracks")]
        pred_tracks: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Render a synthetic RGB-D scene with ground truth and a starter project.
    Synth {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(long, env = "CHARTBLENDER_DATA_ROOT", default_value = "chartblender-data")]
        data_root: PathBuf,
    },
}

/// A failed command: exit code 1 for invalid input, 2 for pipeline failures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    #[serde(rename = "error")]
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl Failure {
    pub fn validation(kind: &str, message: impl ToString) -> Self {
        Self { kind: kind.into(), message: message.to_string(), exit_code: 1 }
    }

    pub fn pipeline(kind: &str, message: impl ToString) -> Self {
        Self { kind: kind.into(), message: message.to_string(), exit_code: 2 }
    }
}

/// Diagnostic name of a project error, as reported on stderr and in HTTP bodies.
pub fn error_kind(e: &ProjectError) -> &'static str {
    match e {
        ProjectError::UnsupportedVersion(_) => "UnsupportedVersion",
        ProjectError::Validation { .. } => "ValidationError",
        ProjectError::Json(_) => "InvalidJson",
        ProjectError::Io(_) => "IoError",
        ProjectError::Image(_) => "ImageError",
        ProjectError::Depth(_) => "DepthError",
        ProjectError::Odometry(_) => "OdometryError",
        ProjectError::ObjectTracker(_) => "ObjectTrackerError",
        ProjectError::Chart(_) => "ChartError",
        ProjectError::Geometry(_) => "GeometryError",
        ProjectError::Render(r) => match r {
            RenderError::MissingTrajectory(_) => "MissingTrajectory",
            RenderError::MissingDepth(_) => "MissingDepth",
            RenderError::UnknownReference { .. } => "UnknownReference",
            RenderError::Frame { .. } => "FrameError",
        },
    }
}

impl From<ProjectError> for Failure {
    fn from(e: ProjectError) -> Self {
        let kind = error_kind(&e);
        if e.is_validation() {
            Failure::validation(kind, e)
        } else {
            Failure::pipeline(kind, e)
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) => Failure::pipeline("IoError", e),
            _ => Failure::validation("EvalError", e),
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f).expect("failure serializes"));
            f.exit_code
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::validation("InvalidArgument", "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::pipeline("ThreadPool", e))?;
    }
    let common = &cli.common;
    match cli.command {
        Command::TrackCamera => commands::track_camera(common),
        Command::TrackObject { anchor, track } => commands::track_object(common, anchor, track),
        Command::Render => commands::render(common),
        Command::Eval { gt_poses, pred_poses, gt_tracks, pred_tracks, thresholds } => {
            let poses = gt_poses.zip(pred_poses);
            commands::eval(poses, &gt_tracks, &pred_tracks, thresholds)
        }
        Command::Synth { scene } => commands::synth(common, &scene),
        Command::Serve { addr, data_root } => commands::serve(&addr, data_root),
    }
}
