//! Project document: persisted authoring state, validation, cache keys and
//! the pipelines that read and write project assets.

mod job;
mod pipeline;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchor::{AnchorSpec, TrackingMode};
use crate::camera_tracker::{OdometryConfig, OdometryError};
use crate::chart::{ChartError, ChartSpec, TimeMap};
use crate::compositor::{RenderError, TimelineSegment};
use crate::depth::DepthError;
use crate::geometry::{GeometryError, Intrinsics};
use crate::object_tracker::{ObjectTrackerError, SmoothingConfig};

pub use job::{JobStatus, RenderJob};
pub use pipeline::{
    camera_trajectory_path, export_render, frame_file_name, load_chart_table, load_frame, load_frames, object_poses_path,
    output_file_name, render_project, resolve_render_inputs, track_camera, track_objects, write_render, ExportManifest, TrackOutcome,
    RENDER_REPORT,
};

pub const PROJECT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("unsupported project version {0}")]
    UnsupportedVersion(u64),
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Odometry(#[from] OdometryError),
    #[error(transparent)]
    ObjectTracker(#[from] ObjectTrackerError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl ProjectError {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        ProjectError::Validation { field: field.to_string(), message: message.into() }
    }

    /// True for problems with the request or document rather than with running a pipeline.
    pub fn is_validation(&self) -> bool {
        matches!(self, ProjectError::UnsupportedVersion(_) | ProjectError::Validation { .. } | ProjectError::Json(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSpec {
    /// Directory of `frame_%06d.png`, relative to the project file.
    pub frames_dir: String,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub frame_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub path: String,
    pub input_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryCache {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<CacheEntry>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub objects: BTreeMap<String, CacheEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartEntry {
    pub spec: ChartSpec,
    /// CSV dataset, relative to the project file.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub version: u32,
    pub video: VideoSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
    /// Depth directory (`depth_%06d.cbdm` or `.png`), relative to the project file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default)]
    pub anchors: BTreeMap<String, AnchorSpec>,
    #[serde(default)]
    pub trajectories: TrajectoryCache,
    /// Externally tracked `frame,u,v,visible` CSVs per object anchor; others use the built-in tracker.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tracks: BTreeMap<String, String>,
    #[serde(default)]
    pub odometry: OdometryConfig,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub charts: BTreeMap<String, ChartEntry>,
    #[serde(default)]
    pub segments: BTreeMap<String, TimelineSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_map: Option<TimeMap>,
}

impl Project {
    pub fn new(video: VideoSpec) -> Self {
        Self {
            version: PROJECT_VERSION,
            video,
            intrinsics: None,
            depth: None,
            anchors: BTreeMap::new(),
            trajectories: TrajectoryCache::default(),
            tracks: BTreeMap::new(),
            odometry: OdometryConfig::default(),
            smoothing: SmoothingConfig::default(),
            charts: BTreeMap::new(),
            segments: BTreeMap::new(),
            time_map: None,
        }
    }

    /// Declared intrinsics, or `fx = fy = 0.9·max(w, h)` with a centered principal point.
    pub fn effective_intrinsics(&self) -> Result<Intrinsics, ProjectError> {
        match self.intrinsics {
            Some(k) => Ok(k),
            None => Intrinsics::default_for_size(self.video.width, self.video.height)
                .map_err(|e| ProjectError::validation("video", e.to_string())),
        }
    }

    /// Checks internal consistency without touching the filesystem.
    pub fn validate(&self) -> Result<(), ProjectError> {
        if self.version != PROJECT_VERSION {
            return Err(ProjectError::UnsupportedVersion(self.version as u64));
        }
        let v = &self.video;
        if !(v.fps.is_finite() && v.fps > 0.0) || v.width == 0 || v.height == 0 || v.frame_count == 0 {
            return Err(ProjectError::validation("video", "fps, width, height and frame_count must be positive"));
        }
        if let Some(k) = &self.intrinsics {
            if (k.width, k.height) != (v.width, v.height) {
                return Err(ProjectError::validation("intrinsics", "size differs from the video"));
            }
        }
        for (id, a) in &self.anchors {
            let p = a.pixel;
            let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= (v.width - 1) as f64 && p.y <= (v.height - 1) as f64;
            if !inside || a.frame >= v.frame_count {
                return Err(ProjectError::validation("anchors", format!("anchor {id} lies outside the video")));
            }
        }
        for id in self.tracks.keys() {
            if self.anchors.get(id).is_none_or(|a| a.mode != TrackingMode::Object) {
                return Err(ProjectError::validation("tracks", format!("{id} is not an object anchor")));
            }
        }
        self.smoothing.validate().map_err(|e| ProjectError::validation("smoothing", e.to_string()))?;
        for (id, c) in &self.charts {
            if !c.spec.size.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(ProjectError::validation("charts", format!("chart {id} has a non-positive size")));
            }
        }
        if let Some(m) = &self.time_map {
            if ![m.t0, m.f0, m.rate].iter().all(|x| x.is_finite()) {
                return Err(ProjectError::validation("time_map", "values must be finite"));
            }
        }
        for (id, s) in &self.segments {
            validate_segment(self, id, s)?;
        }
        let mut by_track: BTreeMap<u32, Vec<(usize, usize, &str)>> = BTreeMap::new();
        for (id, s) in &self.segments {
            by_track.entry(s.track_index).or_default().push((s.start_frame, s.end_frame, id));
        }
        for (track, mut ranges) in by_track {
            ranges.sort();
            if let Some(w) = ranges.windows(2).find(|w| w[1].0 <= w[0].1) {
                return Err(ProjectError::validation(
                    "segments",
                    format!("segments {} and {} overlap on track {track}", w[0].2, w[1].2),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ProjectError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == PROJECT_VERSION as u64 => {}
            Some(v) => return Err(ProjectError::UnsupportedVersion(v)),
            None => return Err(ProjectError::validation("version", "missing or not an integer")),
        }
        let project: Project = serde_json::from_value(value)?;
        project.validate()?;
        Ok(project)
    }

    /// Pretty JSON with a trailing newline; maps are ordered, so output is canonical.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("project serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ProjectError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProjectError> {
        self.validate()?;
        write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    /// Key over everything the camera trajectory depends on.
    pub fn camera_cache_key(&self) -> String {
        hash_json(&serde_json::json!({
            "stage": "camera",
            "video": self.video,
            "intrinsics": self.effective_intrinsics().ok(),
            "depth": self.depth,
            "odometry": self.odometry,
        }))
    }

    /// Key over everything one object anchor's pose sequence depends on.
    pub fn object_cache_key(&self, anchor_id: &str) -> String {
        hash_json(&serde_json::json!({
            "stage": "object",
            "video": self.video,
            "intrinsics": self.effective_intrinsics().ok(),
            "depth": self.depth,
            "anchor": self.anchors.get(anchor_id),
            "track": self.tracks.get(anchor_id),
            "smoothing": self.smoothing,
        }))
    }

    /// Key over every input of a render: upstream trajectory keys plus charts, segments and timing.
    pub fn render_cache_key(&self) -> String {
        let uses_camera = self.segments.values().any(|s| self.anchors.get(&s.anchor_ref).is_some_and(|a| a.mode == TrackingMode::Camera));
        let objects: BTreeMap<&String, String> = self
            .anchors
            .iter()
            .filter(|(_, a)| a.mode == TrackingMode::Object)
            .map(|(id, _)| (id, self.object_cache_key(id)))
            .collect();
        hash_json(&serde_json::json!({
            "stage": "render",
            "camera": uses_camera.then(|| self.camera_cache_key()),
            "objects": objects,
            "anchors": self.anchors,
            "charts": self.charts,
            "segments": self.segments,
            "time_map": self.time_map,
        }))
    }
}

fn validate_segment(p: &Project, id: &str, s: &TimelineSegment) -> Result<(), ProjectError> {
    let bad = |m: String| Err(ProjectError::validation("segments", format!("segment {id}: {m}")));
    if s.start_frame > s.end_frame || s.end_frame >= p.video.frame_count {
        return bad(format!("frames {}..={} outside 0..{}", s.start_frame, s.end_frame, p.video.frame_count));
    }
    if !p.charts.contains_key(&s.chart_id) {
        return bad(format!("unknown chart {:?}", s.chart_id));
    }
    if !p.anchors.contains_key(&s.anchor_ref) {
        return bad(format!("unknown anchor {:?}", s.anchor_ref));
    }
    let length = s.end_frame - s.start_frame + 1;
    if (s.behavior.enter_frames + s.behavior.exit_frames) as usize > length {
        return bad("enter and exit ramps exceed the segment length".into());
    }
    if !s.placement.is_valid() {
        return bad("placement scale must be positive and offsets finite".into());
    }
    Ok(())
}

/// SHA-256 of compact JSON; `serde_json` maps are key-sorted, so equal values hash equally.
pub fn hash_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("json value serializes")))
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
