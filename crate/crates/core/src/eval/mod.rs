//! Pose and point-track error metrics, plus the synthetic ground-truth scene
//! generator used to exercise both pipelines.

mod synth;

use std::io::{Read, Write};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraTrajectory, RigidTransform};

pub use synth::{synth_scene, BoxSpec, CameraPath, Keyframe, PlaneSpec, SceneSpec, SyntheticScene, TargetSpec, TargetTruth};

pub const DEFAULT_APD_THRESHOLDS: [f64; 5] = [0.01, 0.02, 0.04, 0.08, 0.16];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("thresholds must be positive and strictly increasing")]
    InvalidThresholds,
    #[error("no visible ground-truth points")]
    NoVisiblePoints,
    #[error("invalid scene spec: {0}")]
    InvalidSceneSpec(String),
    #[error("track csv line {line}: {message}")]
    TrackFormat { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_deg: f64,
    pub translation_m: f64,
}

/// Geodesic rotation angle of `R_gt⁻¹·R_pred` and translation distance.
pub fn pose_error(gt: &RigidTransform, pred: &RigidTransform) -> PoseError {
    let delta = gt.rotation().transpose() * pred.rotation();
    let cos = ((delta.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    PoseError {
        rotation_deg: cos.acos().to_degrees(),
        translation_m: (gt.translation() - pred.translation()).norm(),
    }
}

pub fn trajectory_errors(gt: &CameraTrajectory, pred: &CameraTrajectory) -> Result<Vec<PoseError>, EvalError> {
    if gt.frame_count() != pred.frame_count() {
        return Err(EvalError::LengthMismatch { expected: gt.frame_count(), found: pred.frame_count() });
    }
    Ok(gt.poses().iter().zip(pred.poses()).map(|(g, p)| pose_error(g, p)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorSummary {
    pub rotation_mean: f64,
    pub rotation_median: f64,
    pub translation_mean: f64,
    pub translation_median: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(errors: &[PoseError]) -> PoseErrorSummary {
    let rot: Vec<f64> = errors.iter().map(|e| e.rotation_deg).collect();
    let trans: Vec<f64> = errors.iter().map(|e| e.translation_m).collect();
    PoseErrorSummary {
        rotation_mean: mean(&rot),
        rotation_median: median(&rot),
        translation_mean: mean(&trans),
        translation_median: median(&trans),
    }
}

/// A 3D point track with per-frame visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTrack3D {
    pub points: Vec<Point3<f64>>,
    pub visible: Vec<bool>,
}

impl PointTrack3D {
    pub fn all_visible(points: Vec<Point3<f64>>) -> Self {
        let visible = vec![true; points.len()];
        Self { points, visible }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["frame", "x", "y", "z", "visible"])?;
        for (n, (p, vis)) in self.points.iter().zip(&self.visible).enumerate() {
            w.write_record([n.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string(), u8::from(*vis).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `frame,x,y,z,visible`; frames must be consecutive from 0.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        let mut visible = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let bad = |message: String| EvalError::TrackFormat { line, message };
            if record.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", record.len())));
            }
            let frame: usize = record[0].trim().parse().map_err(|_| bad("bad frame index".into()))?;
            if frame != points.len() {
                return Err(bad(format!("expected frame {}, found {frame}", points.len())));
            }
            let mut xyz = [0.0; 3];
            for (k, v) in xyz.iter_mut().enumerate() {
                *v = record[k + 1].trim().parse().map_err(|_| bad(format!("bad coordinate {:?}", &record[k + 1])))?;
            }
            let vis = match record[4].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(bad(format!("bad visibility flag {other:?}"))),
            };
            points.push(Point3::from(xyz));
            visible.push(vis);
        }
        Ok(Self { points, visible })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Apd3dReport {
    pub score: f64,
    pub fractions: Vec<f64>,
    pub thresholds: Vec<f64>,
}

/// Fraction of visible (track, frame) pairs whose prediction lies strictly
/// within each threshold of ground truth; the score averages the fractions.
/// Visibility is taken from the ground-truth tracks.
pub fn apd3d(pred: &[PointTrack3D], gt: &[PointTrack3D], thresholds: &[f64]) -> Result<Apd3dReport, EvalError> {
    if thresholds.is_empty() || thresholds[0] <= 0.0 || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::InvalidThresholds);
    }
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch { expected: gt.len(), found: pred.len() });
    }
    let mut counts = vec![0usize; thresholds.len()];
    let mut total = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        if p.points.len() != g.points.len() || g.visible.len() != g.points.len() {
            return Err(EvalError::LengthMismatch { expected: g.points.len(), found: p.points.len() });
        }
        for ((pp, gp), vis) in p.points.iter().zip(&g.points).zip(&g.visible) {
            if !vis {
                continue;
            }
            total += 1;
            let err = (pp - gp).norm();
            for (c, t) in counts.iter_mut().zip(thresholds) {
                if err < *t {
                    *c += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(EvalError::NoVisiblePoints);
    }
    let fractions: Vec<f64> = counts.iter().map(|c| *c as f64 / total as f64).collect();
    Ok(Apd3dReport { score: mean(&fractions), fractions, thresholds: thresholds.to_vec() })
}

pub fn rmse(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum();
    (sum / a.len() as f64).sqrt()
}
