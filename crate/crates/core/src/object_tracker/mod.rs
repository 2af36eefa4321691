//! Per-frame object poses from a tracked pixel.
//!
//! The pipeline runs 2D point tracking, lifts the track to 3D with temporally
//! smoothed depth, regularizes the 3D trajectory with a first/second-order
//! penalty, and orients the object so its local x-axis follows the smoothed
//! direction of motion.

mod smoothing;
mod track2d;

use std::io::{Read, Write};

use nalgebra::{Point2, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::anchor::AnchorSpec;
use crate::depth::{sample_depth, DepthError, DepthSequence, SampleStrategy};
use crate::geometry::{read_pose_csv, write_pose_csv, GeometryError, Intrinsics, RigidTransform};

pub use smoothing::{
    smooth_columns, smooth_depth_quadratic, smooth_points, smooth_vectors, smoothing_objective, smoothing_system,
    BandedCholesky, BandedSpd,
};
pub use track2d::{track_point_2d, track_point_builtin, TrackerMode, TEMPLATE_REFRESH_FRAMES};

#[derive(Debug, thiserror::Error)]
pub enum ObjectTrackerError {
    #[error("no valid depth in frames {start}..={end}")]
    AllSamplesInvalid { start: usize, end: usize },
    #[error("no valid depth at the seed pixel in frame {0}")]
    NoValidDepth(usize),
    #[error("sequence lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("seed pixel ({u}, {v}) lies outside the frame")]
    SeedOutOfBounds { u: f64, v: f64 },
    #[error("track file line {line}: {message}")]
    IngestFormat { line: usize, message: String },
    #[error("invalid smoothing configuration: {0}")]
    InvalidConfig(String),
    #[error("no frames supplied")]
    NoFrames,
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Per-frame pixel positions of one tracked point. Invisible frames hold the
/// last visible position.
#[derive(Debug, Clone, PartialEq)]
pub struct Track2D {
    pub points: Vec<Point2<f64>>,
    pub visible: Vec<bool>,
    pub seed: AnchorSpec,
}

impl Track2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes `frame,u,v,visible` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ObjectTrackerError> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["frame", "u", "v", "visible"])?;
        for (n, (p, vis)) in self.points.iter().zip(&self.visible).enumerate() {
            csv.write_record(&[n.to_string(), p.x.to_string(), p.y.to_string(), u8::from(*vis).to_string()])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Reads `frame,u,v,visible` rows; the file must list frames `0..expected_frames` in order.
    pub fn read_csv<R: Read>(reader: R, seed: AnchorSpec, expected_frames: usize) -> Result<Self, ObjectTrackerError> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = csv.headers()?.clone();
        if headers.iter().ne(["frame", "u", "v", "visible"]) {
            return Err(ObjectTrackerError::IngestFormat { line: 1, message: "expected header frame,u,v,visible".into() });
        }
        let mut points = Vec::new();
        let mut visible = Vec::new();
        for (row, record) in csv.records().enumerate() {
            let line = row + 2;
            let record = record?;
            let bad = |message: String| ObjectTrackerError::IngestFormat { line, message };
            if record.len() != 4 {
                return Err(bad("expected 4 columns".into()));
            }
            let frame: usize = record[0].parse().map_err(|e| bad(format!("frame: {e}")))?;
            if frame != row {
                return Err(bad(format!("expected frame {row}, found {frame}")));
            }
            let u: f64 = record[1].parse().map_err(|e| bad(format!("u: {e}")))?;
            let v: f64 = record[2].parse().map_err(|e| bad(format!("v: {e}")))?;
            if !(u.is_finite() && v.is_finite()) {
                return Err(bad("coordinates must be finite".into()));
            }
            let vis = match &record[3] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("visible must be 0 or 1, found {other:?}"))),
            };
            points.push(Point2::new(u, v));
            visible.push(vis);
        }
        if points.len() != expected_frames {
            return Err(ObjectTrackerError::IngestFormat {
                line: points.len() + 1,
                message: format!("track covers {} frames, expected {expected_frames}", points.len()),
            });
        }
        Ok(Self { points, visible, seed })
    }
}

/// Per-frame camera-frame points.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory3D {
    pub points: Vec<Point3<f64>>,
    pub smoothed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    /// Acceleration-penalty weight.
    pub lambda: f64,
    /// Data-fidelity weight.
    pub mu: f64,
    /// Odd window length (frames) of the depth regression.
    pub depth_window: usize,
    /// Minimum speed (m/frame) for updating the orientation.
    pub epsilon_v: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { lambda: 10.0, mu: 10.0, depth_window: 9, epsilon_v: 0.005 }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<(), ObjectTrackerError> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ObjectTrackerError::InvalidConfig(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ObjectTrackerError::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.depth_window < 3 || self.depth_window % 2 == 0 {
            return Err(ObjectTrackerError::InvalidConfig(format!(
                "depth_window must be odd and >= 3, got {}",
                self.depth_window
            )));
        }
        if !(self.epsilon_v >= 0.0 && self.epsilon_v.is_finite()) {
            return Err(ObjectTrackerError::InvalidConfig(format!("epsilon_v must be >= 0, got {}", self.epsilon_v)));
        }
        Ok(())
    }
}

/// Per-frame object poses `{R_n | t_n}` in the camera frame of frame `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPoseSequence {
    pub poses: Vec<RigidTransform>,
}

impl ObjectPoseSequence {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GeometryError> {
        write_pose_csv(writer, &self.poses)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, GeometryError> {
        Ok(Self { poses: read_pose_csv(reader)? })
    }
}

/// Samples depth along a track; unusable samples come back as `0.0`.
pub fn sample_track_depths(track: &Track2D, depths: &DepthSequence) -> Result<Vec<f64>, ObjectTrackerError> {
    if track.len() != depths.len() {
        return Err(ObjectTrackerError::LengthMismatch(track.len(), depths.len()));
    }
    Ok(track
        .points
        .iter()
        .zip(depths.maps())
        .map(|(p, map)| sample_depth(map, p, SampleStrategy::BilinearValid).unwrap_or(0.0))
        .collect())
}

/// Lifts a pixel track to camera-frame 3D points using quadratic-regression
/// smoothed depth at every frame.
pub fn lift_track_to_3d(
    track: &Track2D,
    depths: &DepthSequence,
    k: &Intrinsics,
    cfg: &SmoothingConfig,
) -> Result<Trajectory3D, ObjectTrackerError> {
    cfg.validate()?;
    let raw = sample_track_depths(track, depths)?;
    let seed_frame = track.seed.frame;
    if raw.get(seed_frame).is_none_or(|d| *d <= 0.0) {
        return Err(ObjectTrackerError::NoValidDepth(seed_frame));
    }
    let smoothed = smooth_depth_quadratic(&raw, cfg.depth_window)?;
    let points = track
        .points
        .iter()
        .zip(&smoothed)
        .map(|(p, d)| k.back_project(p, *d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory3D { points, smoothed: false })
}

/// Applies the velocity/acceleration-penalized smoother to each coordinate.
pub fn smooth_trajectory(trajectory: &Trajectory3D, cfg: &SmoothingConfig) -> Result<Trajectory3D, ObjectTrackerError> {
    let points = smooth_points(&trajectory.points, cfg.mu, cfg.lambda)?;
    Ok(Trajectory3D { points, smoothed: true })
}

/// Shortest-arc rotation taking the x-axis onto `direction`.
pub fn align_x_axis(direction: &Vector3<f64>) -> Rotation3<f64> {
    let target = direction.normalize();
    Rotation3::rotation_between(&Vector3::x(), &target).unwrap_or_else(|| {
        // Antiparallel: any half-turn about an axis perpendicular to x works.
        Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::z()), std::f64::consts::PI)
    })
}

/// Per-frame velocities `P_{n+1} − P_n`; the last frame repeats the previous one.
pub fn frame_velocities(points: &[Point3<f64>]) -> Vec<Vector3<f64>> {
    let mut v: Vec<Vector3<f64>> = points.windows(2).map(|w| w[1] - w[0]).collect();
    match v.last().copied() {
        Some(last) => v.push(last),
        None => v.extend(points.first().map(|_| Vector3::zeros())),
    }
    v
}

/// Orientation per frame from the smoothed motion direction. Frames slower
/// than `epsilon_v` keep the previous rotation (identity at the start).
pub fn estimate_rotations(trajectory: &Trajectory3D, cfg: &SmoothingConfig) -> Result<Vec<Rotation3<f64>>, ObjectTrackerError> {
    let velocities = smooth_vectors(&frame_velocities(&trajectory.points), cfg.mu, cfg.lambda)?;
    let mut previous = Rotation3::identity();
    Ok(velocities
        .iter()
        .map(|v| {
            if v.norm() >= cfg.epsilon_v && v.norm() > 0.0 {
                previous = align_x_axis(v);
            }
            previous
        })
        .collect())
}

pub fn assemble_object_poses(trajectory: &Trajectory3D, rotations: &[Rotation3<f64>]) -> Result<ObjectPoseSequence, ObjectTrackerError> {
    if trajectory.points.len() != rotations.len() {
        return Err(ObjectTrackerError::LengthMismatch(trajectory.points.len(), rotations.len()));
    }
    let poses = trajectory
        .points
        .iter()
        .zip(rotations)
        .map(|(p, r)| RigidTransform::from_parts(r, p.coords))
        .collect();
    Ok(ObjectPoseSequence { poses })
}

/// Everything produced by one object-tracking run.
#[derive(Debug, Clone)]
pub struct ObjectTrackResult {
    pub track: Track2D,
    pub lifted: Trajectory3D,
    pub smoothed: Trajectory3D,
    pub poses: ObjectPoseSequence,
}

/// Depth lifting, trajectory smoothing, rotation estimation and assembly for a given track.
pub fn track_object(
    track: Track2D,
    depths: &DepthSequence,
    k: &Intrinsics,
    cfg: &SmoothingConfig,
) -> Result<ObjectTrackResult, ObjectTrackerError> {
    let lifted = lift_track_to_3d(&track, depths, k, cfg)?;
    let smoothed = smooth_trajectory(&lifted, cfg)?;
    let rotations = estimate_rotations(&smoothed, cfg)?;
    let poses = assemble_object_poses(&smoothed, &rotations)?;
    Ok(ObjectTrackResult { track, lifted, smoothed, poses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::TrackingMode;
    use crate::depth::{DepthMap, DepthSource};

    fn k100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 200, 100).unwrap()
    }

    fn constant_depths(n: usize, d: f32) -> DepthSequence {
        let maps = (0..n).map(|i| DepthMap::from_fn(200, 100, i, |_, _| d).unwrap()).collect();
        DepthSequence::new(maps, DepthSource::Synthetic).unwrap()
    }

    fn static_track(n: usize, u: f64, v: f64) -> Track2D {
        Track2D {
            points: vec![Point2::new(u, v); n],
            visible: vec![true; n],
            seed: AnchorSpec::new(u, v, 0, TrackingMode::Object),
        }
    }

    #[test]
    fn lift_static_pixel() {
        let track = static_track(6, 150.0, 50.0);
        let lifted = lift_track_to_3d(&track, &constant_depths(6, 2.0), &k100(), &SmoothingConfig::default()).unwrap();
        assert!(lifted.points.iter().all(|p| (p - Point3::new(2.0, 0.0, 2.0)).norm() < 1e-9));
    }

    #[test]
    fn lift_requires_seed_depth() {
        let track = static_track(3, 150.0, 50.0);
        let maps = (0..3).map(|i| DepthMap::from_fn(200, 100, i, |_, _| if i == 0 { 0.0 } else { 1.0 }).unwrap()).collect();
        let depths = DepthSequence::new(maps, DepthSource::Synthetic).unwrap();
        assert!(matches!(
            lift_track_to_3d(&track, &depths, &k100(), &SmoothingConfig::default()),
            Err(ObjectTrackerError::NoValidDepth(0))
        ));
    }

    #[test]
    fn rotations_follow_motion() {
        let cfg = SmoothingConfig::default();
        let along_x = Trajectory3D { points: (0..10).map(|i| Point3::new(0.1 * i as f64, 0.0, 2.0)).collect(), smoothed: true };
        for r in estimate_rotations(&along_x, &cfg).unwrap() {
            assert!((r.matrix() - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
        }
        let along_y = Trajectory3D { points: (0..10).map(|i| Point3::new(0.0, 0.1 * i as f64, 2.0)).collect(), smoothed: true };
        let expected = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        for r in estimate_rotations(&along_y, &cfg).unwrap() {
            assert!((r.matrix() - expected.matrix()).abs().max() < 1e-9);
        }
        let at_rest = Trajectory3D { points: (0..10).map(|i| Point3::new(1e-4 * i as f64, 0.0, 2.0)).collect(), smoothed: true };
        assert!(estimate_rotations(&at_rest, &cfg).unwrap().iter().all(|r| *r == Rotation3::identity()));
        let backwards = align_x_axis(&Vector3::new(-1.0, 0.0, 0.0));
        assert!((backwards * Vector3::x() + Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn assemble_checks_lengths() {
        let traj = Trajectory3D { points: vec![Point3::new(0.0, 0.0, 1.0); 10], smoothed: true };
        assert!(matches!(
            assemble_object_poses(&traj, &vec![Rotation3::identity(); 9]),
            Err(ObjectTrackerError::LengthMismatch(10, 9))
        ));
        let poses = assemble_object_poses(&traj, &vec![Rotation3::identity(); 10]).unwrap();
        assert!(poses.poses.iter().all(|p| *p.translation() == Vector3::new(0.0, 0.0, 1.0)));
    }

    #[test]
    fn track_csv_round_trip() {
        let mut track = static_track(3, 10.5, 20.25);
        track.visible[2] = false;
        let mut buf = Vec::new();
        track.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "frame,u,v,visible\n0,10.5,20.25,1\n1,10.5,20.25,1\n2,10.5,20.25,0\n");
        let back = Track2D::read_csv(buf.as_slice(), track.seed, 3).unwrap();
        assert_eq!(back, track);
        assert!(Track2D::read_csv(buf.as_slice(), track.seed, 4).is_err());
        let bad = "frame,u,v,visible\n0,1,2,yes\n";
        assert!(matches!(Track2D::read_csv(bad.as_bytes(), track.seed, 1), Err(ObjectTrackerError::IngestFormat { line: 2, .. })));
    }
}
