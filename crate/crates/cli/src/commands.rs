use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicUsize;

use chartblender_core::eval::{
    apd3d, summarize, synth_scene, trajectory_errors, PointTrack3D, SceneSpec, DEFAULT_APD_THRESHOLDS,
};
use chartblender_core::geometry::CameraTrajectory;
use chartblender_core::project::{self, frame_file_name, write_atomic, Project, VideoSpec};
use serde_json::json;

use crate::{Common, Failure};

fn project_path(common: &Common) -> Result<&Path, Failure> {
    common.project.as_deref().ok_or_else(|| Failure::validation("InvalidArgument", "--project is required"))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn io_failure(e: impl ToString) -> Failure {
    Failure::pipeline("IoError", e)
}

/// Copies cached CSVs into `--out` when one is given.
fn copy_outputs(common: &Common, base: &Path, paths: &[String]) -> Result<(), Failure> {
    let Some(out) = &common.out else { return Ok(()) };
    for p in paths {
        let bytes = std::fs::read(base.join(p)).map_err(io_failure)?;
        let name = Path::new(p).file_name().expect("cache paths name a file");
        write_atomic(&out.join(name), &bytes).map_err(io_failure)?;
    }
    Ok(())
}

pub fn track_camera(common: &Common) -> Result<(), Failure> {
    let path = project_path(common)?;
    let mut p = Project::load(path)?;
    let base = base_dir(path);
    if let Some(seed) = common.seed {
        p.odometry.seed = seed;
    }
    let outcome = project::track_camera(&mut p, &base)?;
    p.save(path)?;
    copy_outputs(common, &base, std::slice::from_ref(&outcome.path))?;
    println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
    Ok(())
}

pub fn track_object(common: &Common, anchor: Option<String>, track: Option<PathBuf>) -> Result<(), Failure> {
    let path = project_path(common)?;
    let mut p = Project::load(path)?;
    let base = base_dir(path);
    if let (Some(id), Some(track)) = (&anchor, track) {
        let track = std::path::absolute(track).map_err(io_failure)?;
        p.tracks.insert(id.clone(), track.to_string_lossy().into_owned());
        p.validate()?;
    }
    let outcomes = project::track_objects(&mut p, &base, anchor.as_deref())?;
    p.save(path)?;
    let paths: Vec<String> = outcomes.iter().map(|o| o.path.clone()).collect();
    copy_outputs(common, &base, &paths)?;
    println!("{}", serde_json::to_string(&outcomes).expect("outcomes serialize"));
    Ok(())
}

pub fn render(common: &Common) -> Result<(), Failure> {
    let path = project_path(common)?;
    let out = common.out.as_deref().ok_or_else(|| Failure::validation("InvalidArgument", "--out is required"))?;
    let p = Project::load(path)?;
    let report = project::render_project(&p, &base_dir(path), out, &AtomicUsize::new(0))?;
    for f in &report.frames {
        for w in &f.warnings {
            log::warn!("frame {}: {w}", f.frame);
        }
    }
    println!("{}", json!({ "frames": report.frame_count, "frames_with_warnings": report.frames.len() }));
    Ok(())
}

fn read_trajectory(path: &Path) -> Result<CameraTrajectory, Failure> {
    let file = std::fs::File::open(path).map_err(io_failure)?;
    CameraTrajectory::read_csv(std::io::BufReader::new(file)).map_err(|e| Failure::validation("PoseFormat", format!("{}: {e}", path.display())))
}

fn read_tracks(paths: &[PathBuf]) -> Result<Vec<PointTrack3D>, Failure> {
    paths
        .iter()
        .map(|p| {
            let file = std::fs::File::open(p).map_err(io_failure)?;
            PointTrack3D::read_csv(std::io::BufReader::new(file)).map_err(Failure::from)
        })
        .collect()
}

pub fn eval(
    poses: Option<(PathBuf, PathBuf)>,
    gt_tracks: &[PathBuf],
    pred_tracks: &[PathBuf],
    thresholds: Option<Vec<f64>>,
) -> Result<(), Failure> {
    if poses.is_none() && gt_tracks.is_empty() {
        return Err(Failure::validation("InvalidArgument", "give --gt-poses/--pred-poses or --gt-tracks/--pred-tracks"));
    }
    let mut out = serde_json::Map::new();
    if let Some((gt, pred)) = poses {
        let errors = trajectory_errors(&read_trajectory(&gt)?, &read_trajectory(&pred)?)?;
        let s = summarize(&errors);
        out.insert("frames".into(), errors.len().into());
        out.insert("rotation_mean".into(), s.rotation_mean.into());
        out.insert("rotation_median".into(), s.rotation_median.into());
        out.insert("translation_mean".into(), s.translation_mean.into());
        out.insert("translation_median".into(), s.translation_median.into());
    }
    if !gt_tracks.is_empty() {
        let thresholds = thresholds.unwrap_or_else(|| DEFAULT_APD_THRESHOLDS.to_vec());
        let report = apd3d(&read_tracks(pred_tracks)?, &read_tracks(gt_tracks)?, &thresholds)?;
        out.insert("apd3d".into(), serde_json::to_value(report).expect("report serializes"));
    }
    println!("{}", serde_json::Value::Object(out));
    Ok(())
}

/// Writes frames, depth, ground truth and a starter `project.json` under `--out`.
pub fn synth(common: &Common, scene: &Path) -> Result<(), Failure> {
    let out = common.out.as_deref().ok_or_else(|| Failure::validation("InvalidArgument", "--out is required"))?;
    let text = std::fs::read_to_string(scene).map_err(io_failure)?;
    let spec: SceneSpec = serde_json::from_str(&text).map_err(|e| Failure::validation("InvalidSceneSpec", e))?;
    let s = synth_scene(&spec, common.seed.unwrap_or(0))?;

    let frames_dir = out.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(io_failure)?;
    use rayon::prelude::*;
    s.frames.par_iter().enumerate().try_for_each(|(n, f)| -> Result<(), Failure> {
        let mut bytes = Vec::new();
        f.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png).map_err(io_failure)?;
        write_atomic(&frames_dir.join(frame_file_name(n)), &bytes).map_err(io_failure)
    })?;
    s.depths.write_dir(&out.join("depth")).map_err(io_failure)?;

    let gt = out.join("gt");
    let mut bytes = Vec::new();
    s.trajectory.write_csv(&mut bytes).map_err(io_failure)?;
    write_atomic(&gt.join("camera_poses.csv"), &bytes).map_err(io_failure)?;
    let k_json = serde_json::to_vec_pretty(&s.intrinsics).expect("intrinsics serialize");
    write_atomic(&gt.join("intrinsics.json"), &k_json).map_err(io_failure)?;
    for (i, t) in s.targets.iter().enumerate() {
        let mut bytes = Vec::new();
        t.track.write_csv(&mut bytes).map_err(io_failure)?;
        write_atomic(&gt.join(format!("target_{i}_track.csv")), &bytes).map_err(io_failure)?;
        let points = PointTrack3D { points: t.camera_points.clone(), visible: t.track.visible.clone() };
        let mut bytes = Vec::new();
        points.write_csv(&mut bytes)?;
        write_atomic(&gt.join(format!("target_{i}_points.csv")), &bytes).map_err(io_failure)?;
    }

    let mut p = Project::new(VideoSpec {
        frames_dir: "frames".into(),
        fps: 30.0,
        width: spec.width,
        height: spec.height,
        frame_count: spec.frame_count,
    });
    p.intrinsics = Some(s.intrinsics);
    p.depth = Some("depth".into());
    p.save(&out.join("project.json"))?;
    println!("{}", json!({ "frames": spec.frame_count, "targets": s.targets.len(), "project": out.join("project.json") }));
    Ok(())
}

pub fn serve(addr: &str, data_root: PathBuf) -> Result<(), Failure> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::pipeline("Runtime", e))?;
    runtime.block_on(crate::server::serve(addr, data_root)).map_err(|e| Failure::pipeline("ServeError", e))
}
