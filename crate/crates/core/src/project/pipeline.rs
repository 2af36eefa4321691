use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_atomic, CacheEntry, ChartEntry, Project, ProjectError};
use crate::anchor::TrackingMode;
use crate::camera_tracker::{recover_anchor_world_pose, solve_camera_trajectory_detailed, RgbdFrame};
use crate::chart::{parse_dataset, DataTable};
use crate::compositor::{RenderError, RenderInputs, RenderReport, Renderer, ResolvedAnchor};
use crate::depth::{load_depth_sequence, DepthSequence};
use crate::geometry::CameraTrajectory;
use crate::object_tracker::{track_object, track_point_2d, ObjectPoseSequence, TrackerMode};

pub const RENDER_REPORT: &str = "render_report.json";

pub fn frame_file_name(n: usize) -> String {
    format!("frame_{n:06}.png")
}

pub fn output_file_name(n: usize) -> String {
    format!("out_{n:06}.png")
}

/// Project-relative location of the cached camera trajectory.
pub fn camera_trajectory_path() -> String {
    "trajectories/camera.csv".into()
}

pub fn object_poses_path(anchor_id: &str) -> String {
    format!("trajectories/object_{anchor_id}.csv")
}

pub fn load_frame(project: &Project, base: &Path, n: usize) -> Result<RgbImage, ProjectError> {
    let path = base.join(&project.video.frames_dir).join(frame_file_name(n));
    let img = image::open(&path)?.to_rgb8();
    if img.dimensions() != (project.video.width, project.video.height) {
        return Err(RenderError::Frame {
            frame: n,
            message: format!("{} is {:?}, expected {}x{}", path.display(), img.dimensions(), project.video.width, project.video.height),
        }
        .into());
    }
    Ok(img)
}

pub fn load_frames(project: &Project, base: &Path) -> Result<Vec<RgbImage>, ProjectError> {
    (0..project.video.frame_count).into_par_iter().map(|n| load_frame(project, base, n)).collect()
}

fn load_depths(project: &Project, base: &Path) -> Result<DepthSequence, ProjectError> {
    let dir = project.depth.as_ref().ok_or_else(|| RenderError::MissingDepth("project has no depth directory".into()))?;
    let depths = load_depth_sequence(&base.join(dir), project.video.frame_count)?;
    if depths.dimensions() != (project.video.width, project.video.height) {
        return Err(ProjectError::validation("depth", "depth maps differ in size from the video"));
    }
    Ok(depths)
}

pub fn load_chart_table(base: &Path, entry: &ChartEntry) -> Result<DataTable, ProjectError> {
    Ok(parse_dataset(&std::fs::read_to_string(base.join(&entry.data))?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackOutcome {
    pub id: String,
    pub path: String,
    /// True when a cached result with a matching input hash was kept.
    pub reused: bool,
}

fn fresh(entry: Option<&CacheEntry>, key: &str, base: &Path) -> bool {
    entry.is_some_and(|e| e.input_hash == key && base.join(&e.path).is_file())
}

/// Solves the camera trajectory unless a fresh cached one exists, and records it in `project`.
pub fn track_camera(project: &mut Project, base: &Path) -> Result<TrackOutcome, ProjectError> {
    let key = project.camera_cache_key();
    if fresh(project.trajectories.camera.as_ref(), &key, base) {
        let path = project.trajectories.camera.as_ref().expect("fresh entry").path.clone();
        return Ok(TrackOutcome { id: "camera".into(), path, reused: true });
    }
    let k = project.effective_intrinsics()?;
    let depths = load_depths(project, base)?;
    let frames: Vec<RgbdFrame> = load_frames(project, base)?
        .into_iter()
        .zip(depths.maps().iter().cloned())
        .enumerate()
        .map(|(n, (rgb, depth))| RgbdFrame::new(rgb, depth, n))
        .collect::<Result<_, _>>()?;
    let solution = solve_camera_trajectory_detailed(&frames, &k, &project.odometry)?;
    if !solution.fallback_pairs.is_empty() {
        log::warn!("camera tracking held the previous motion for pairs {:?}", solution.fallback_pairs);
    }
    let path = camera_trajectory_path();
    let mut bytes = Vec::new();
    solution.trajectory.write_csv(&mut bytes)?;
    write_atomic(&base.join(&path), &bytes)?;
    project.trajectories.camera = Some(CacheEntry { path: path.clone(), input_hash: key });
    Ok(TrackOutcome { id: "camera".into(), path, reused: false })
}

/// Tracks every object anchor (or only `only`), reusing fresh cached pose sequences.
pub fn track_objects(project: &mut Project, base: &Path, only: Option<&str>) -> Result<Vec<TrackOutcome>, ProjectError> {
    let ids: Vec<String> = project
        .anchors
        .iter()
        .filter(|(id, a)| a.mode == TrackingMode::Object && only.is_none_or(|o| o == id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if let Some(o) = only {
        if ids.is_empty() {
            return Err(ProjectError::validation("anchors", format!("{o} is not an object anchor")));
        }
    }
    let mut outcomes = Vec::new();
    let mut inputs: Option<(Vec<RgbImage>, DepthSequence)> = None;
    for id in ids {
        let key = project.object_cache_key(&id);
        if fresh(project.trajectories.objects.get(&id), &key, base) {
            outcomes.push(TrackOutcome { path: project.trajectories.objects[&id].path.clone(), id, reused: true });
            continue;
        }
        if inputs.is_none() {
            inputs = Some((load_frames(project, base)?, load_depths(project, base)?));
        }
        let (frames, depths) = inputs.as_ref().expect("loaded above");
        let k = project.effective_intrinsics()?;
        let mode = match project.tracks.get(&id) {
            Some(p) => TrackerMode::Ingest(base.join(p)),
            None => TrackerMode::Builtin,
        };
        let track = track_point_2d(frames, project.anchors[&id], &mode)?;
        let result = track_object(track, depths, &k, &project.smoothing)?;
        let path = object_poses_path(&id);
        let mut bytes = Vec::new();
        result.poses.write_csv(&mut bytes)?;
        write_atomic(&base.join(&path), &bytes)?;
        project.trajectories.objects.insert(id.clone(), CacheEntry { path: path.clone(), input_hash: key });
        outcomes.push(TrackOutcome { id, path, reused: false });
    }
    Ok(outcomes)
}

/// Loads cached poses, anchors and chart data for rendering. A cache whose
/// input hash no longer matches the project counts as missing.
pub fn resolve_render_inputs(project: &Project, base: &Path) -> Result<RenderInputs, ProjectError> {
    project.validate()?;
    let k = project.effective_intrinsics()?;
    let used_anchors: BTreeMap<&String, _> = project.segments.values().map(|s| (&s.anchor_ref, project.anchors[&s.anchor_ref])).collect();

    let needs_camera = used_anchors.values().any(|a| a.mode == TrackingMode::Camera);
    let (camera, depths) = if needs_camera {
        let entry = project.trajectories.camera.as_ref();
        if !fresh(entry, &project.camera_cache_key(), base) {
            return Err(RenderError::MissingTrajectory("camera".into()).into());
        }
        let file = std::fs::File::open(base.join(&entry.expect("fresh entry").path))?;
        let trajectory = CameraTrajectory::read_csv(std::io::BufReader::new(file))?;
        (Some(Arc::new(trajectory)), Some(load_depths(project, base)?))
    } else {
        (None, None)
    };

    let mut anchors = BTreeMap::new();
    for (id, anchor) in used_anchors {
        let resolved = match anchor.mode {
            TrackingMode::Camera => ResolvedAnchor::Camera(recover_anchor_world_pose(
                &anchor,
                depths.as_ref().expect("loaded for camera anchors"),
                camera.as_ref().expect("loaded for camera anchors"),
                &k,
            )?),
            TrackingMode::Object => {
                let entry = project.trajectories.objects.get(id);
                if !fresh(entry, &project.object_cache_key(id), base) {
                    return Err(RenderError::MissingTrajectory(id.clone()).into());
                }
                let file = std::fs::File::open(base.join(&entry.expect("fresh entry").path))?;
                ResolvedAnchor::Object(Arc::new(ObjectPoseSequence::read_csv(std::io::BufReader::new(file))?))
            }
        };
        anchors.insert(id.clone(), resolved);
    }

    let mut charts = BTreeMap::new();
    for seg in project.segments.values() {
        if charts.contains_key(&seg.chart_id) {
            continue;
        }
        let entry = &project.charts[&seg.chart_id];
        let table = load_chart_table(base, entry)?;
        entry.spec.validate(&table)?;
        charts.insert(seg.chart_id.clone(), (entry.spec.clone(), Arc::new(table)));
    }

    Ok(RenderInputs {
        intrinsics: k,
        frame_count: project.video.frame_count,
        camera,
        anchors,
        charts,
        segments: project.segments.iter().map(|(id, s)| (id.clone(), s.clone())).collect(),
        time_map: project.time_map,
    })
}

/// Renders every frame to `out_dir/out_%06d.png` and writes `render_report.json`.
pub fn render_project(project: &Project, base: &Path, out_dir: &Path, progress: &AtomicUsize) -> Result<RenderReport, ProjectError> {
    let renderer = Renderer::new(resolve_render_inputs(project, base)?)?;
    write_render(&renderer, project, base, out_dir, progress)
}

/// Output half of [`render_project`] for callers that built the renderer themselves.
pub fn write_render(
    renderer: &Renderer,
    project: &Project,
    base: &Path,
    out_dir: &Path,
    progress: &AtomicUsize,
) -> Result<RenderReport, ProjectError> {
    std::fs::create_dir_all(out_dir)?;
    let to_render = |frame: usize, e: &dyn std::fmt::Display| RenderError::Frame { frame, message: e.to_string() };
    let report = renderer.render_all(
        |n| load_frame(project, base, n).map_err(|e| to_render(n, &e)),
        |composed| {
            let mut bytes = Vec::new();
            composed
                .raster
                .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
                .map_err(|e| to_render(composed.frame_index, &e))?;
            write_atomic(&out_dir.join(output_file_name(composed.frame_index)), &bytes).map_err(|e| to_render(composed.frame_index, &e))
        },
        progress,
    )?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_atomic(&out_dir.join(RENDER_REPORT), &json)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub directory: PathBuf,
    pub frame_count: usize,
    pub fps: f64,
    /// Reference encoder invocation, run from `directory`.
    pub encode_command: String,
}

/// Copies a finished render's PNG sequence to `export_dir` and writes
/// `export.json` plus `encode.sh` describing how to assemble a video.
pub fn export_render(render_dir: &Path, export_dir: &Path, frame_count: usize, fps: f64) -> Result<ExportManifest, ProjectError> {
    std::fs::create_dir_all(export_dir)?;
    (0..frame_count).into_par_iter().try_for_each(|n| -> Result<(), ProjectError> {
        let name = output_file_name(n);
        let bytes = std::fs::read(render_dir.join(&name))?;
        write_atomic(&export_dir.join(name), &bytes)?;
        Ok(())
    })?;
    let encode_command = format!("ffmpeg -y -framerate {fps} -i out_%06d.png -c:v libx264 -pix_fmt yuv420p chartblender.mp4");
    let manifest = ExportManifest { directory: export_dir.to_path_buf(), frame_count, fps, encode_command };
    write_atomic(&export_dir.join("encode.sh"), format!("#!/bin/sh\ncd \"$(dirname \"$0\")\"\n{}\n", manifest.encode_command).as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&export_dir.join("export.json"), &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::super::tests::two_chart_project;
    use super::super::VideoSpec;
    use super::*;
    use crate::anchor::AnchorSpec;
    use crate::eval::{synth_scene, CameraPath, SceneSpec};
    use std::sync::atomic::Ordering;

    /// Writes a static synthetic scene as project assets and returns a project over them.
    fn static_project(dir: &Path) -> Project {
        let spec = SceneSpec::desk(64, 48, 4, CameraPath::default());
        let scene = synth_scene(&spec, 3).unwrap();
        std::fs::create_dir_all(dir.join("frames")).unwrap();
        for (n, f) in scene.frames.iter().enumerate() {
            f.save(dir.join("frames").join(frame_file_name(n))).unwrap();
        }
        scene.depths.write_dir(&dir.join("depth")).unwrap();
        std::fs::write(dir.join("sales.csv"), "year,count\n2019,3\n2020,5\n2021,4\n").unwrap();
        std::fs::write(dir.join("trend.csv"), "year,count\n2019,1\n2020,2\n").unwrap();
        let mut p = two_chart_project();
        p.video = VideoSpec { frames_dir: "frames".into(), fps: 24.0, width: 64, height: 48, frame_count: 4 };
        p.intrinsics = Some(scene.intrinsics);
        p.anchors.remove("ball");
        p.anchors.insert("desk".into(), AnchorSpec::new(32.0, 24.0, 0, TrackingMode::Camera));
        p.segments.remove("s2");
        p.segments.get_mut("s1").unwrap().end_frame = 3;
        p.segments.get_mut("s1").unwrap().behavior.enter_frames = 0;
        p.segments.get_mut("s1").unwrap().behavior.exit_frames = 0;
        p.time_map = None;
        p.validate().unwrap();
        p
    }

    #[test]
    fn render_without_trajectory_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = static_project(dir.path());
        let err = resolve_render_inputs(&p, dir.path()).err().unwrap();
        assert!(matches!(err, ProjectError::Render(RenderError::MissingTrajectory(_))), "{err}");
    }

    #[test]
    fn track_render_reuse_and_invalidate() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        let mut p = static_project(base);
        assert!(!track_camera(&mut p, base).unwrap().reused);
        assert!(track_camera(&mut p, base).unwrap().reused);

        let progress = AtomicUsize::new(0);
        let report = render_project(&p, base, &base.join("out"), &progress).unwrap();
        assert_eq!(report.frame_count, 4);
        assert_eq!(progress.load(Ordering::Relaxed), 4);
        let first = std::fs::read(base.join("out").join(output_file_name(2))).unwrap();
        render_project(&p, base, &base.join("out2"), &AtomicUsize::new(0)).unwrap();
        assert_eq!(first, std::fs::read(base.join("out2").join(output_file_name(2))).unwrap());
        let input = image::open(base.join("frames").join(frame_file_name(2))).unwrap().to_rgb8();
        assert_ne!(image::load_from_memory(&first).unwrap().to_rgb8(), input);

        p.odometry.min_inliers += 1;
        assert!(matches!(
            resolve_render_inputs(&p, base),
            Err(ProjectError::Render(RenderError::MissingTrajectory(_)))
        ));
        assert!(!track_camera(&mut p, base).unwrap().reused);

        let manifest = export_render(&base.join("out"), &base.join("export"), 4, p.video.fps).unwrap();
        assert!(manifest.encode_command.contains("-framerate 24"));
        assert_eq!(std::fs::read(base.join("export").join(output_file_name(2))).unwrap(), first);
    }

    #[test]
    fn ingested_object_track() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        let mut p = static_project(base);
        p.anchors.insert("ball".into(), AnchorSpec::new(20.0, 20.0, 0, TrackingMode::Object));
        std::fs::write(base.join("ball.csv"), "frame,u,v,visible\n0,20,20,1\n1,21,20,1\n2,22,20,1\n3,23,20,1\n").unwrap();
        p.tracks.insert("ball".into(), "ball.csv".into());
        let out = track_objects(&mut p, base, None).unwrap();
        assert_eq!(out.len(), 1);
        assert!(!out[0].reused);
        let poses = ObjectPoseSequence::read_csv(std::fs::File::open(base.join(&out[0].path)).unwrap()).unwrap();
        assert_eq!(poses.len(), 4);
        assert!(track_objects(&mut p, base, Some("ball")).unwrap()[0].reused);
        assert!(track_objects(&mut p, base, Some("desk")).is_err());
    }
}
