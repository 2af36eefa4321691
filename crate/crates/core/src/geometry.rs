//! Pinhole camera model and rigid-body algebra.
//!
//! Conventions used throughout the crate:
//!
//! * Pixel coordinates put integer values at pixel centers; `(0, 0)` is the
//!   center of the top-left pixel.
//! * Camera frames are right-handed with +X right, +Y down and +Z forward.
//! * A [`CameraTrajectory`] stores world-to-camera poses `M_n`. The camera of
//!   frame 0 defines the world frame, so `M_0` is the identity.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point2, Point3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Tolerance on `RᵀR = I` and `det R = 1` accepted at construction.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Orthonormality drift above which composed rotations are re-projected onto SO(3).
const REORTHONORMALIZE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("depth must be finite and positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    PixelOutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("point has depth {0} and lies behind the camera")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("matrix is not a proper rotation (orthonormality error {0:e})")]
    InvalidRotation(f64),
    #[error("pose file line {line}: {message}")]
    PoseFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RawIntrinsics> for Intrinsics {
    type Error = GeometryError;

    fn try_from(raw: RawIntrinsics) -> Result<Self, Self::Error> {
        Intrinsics::new(raw.fx, raw.fy, raw.cx, raw.cy, raw.width, raw.height)
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be at least 1x1".into()));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// Moderate field-of-view guess for footage without calibration metadata:
    /// `fx = fy = 0.9 * max(width, height)`, principal point at the image center.
    pub fn default_for_size(width: u32, height: u32) -> Result<Self, GeometryError> {
        let f = 0.9 * width.max(height) as f64;
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn contains(&self, pixel: &Point2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= (self.width - 1) as f64
            && pixel.y <= (self.height - 1) as f64
    }

    /// Lifts a pixel with metric depth into the camera frame: `d * K⁻¹ [u, v, 1]ᵀ`.
    pub fn back_project(&self, pixel: &Point2<f64>, depth: f64) -> Result<Point3<f64>, GeometryError> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        if !self.contains(pixel) {
            return Err(GeometryError::PixelOutOfBounds {
                u: pixel.x,
                v: pixel.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(Point3::new(
            depth * (pixel.x - self.cx) / self.fx,
            depth * (pixel.y - self.cy) / self.fy,
            depth,
        ))
    }

    /// Projects a camera-frame point. The result may fall outside the image.
    pub fn project(&self, point: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
        if !(point.z > 0.0) {
            return Err(GeometryError::BehindCamera(point.z));
        }
        Ok(Point2::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    pub fn read_json(path: &Path) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Free-function form of [`Intrinsics::back_project`].
pub fn back_project(pixel: &Point2<f64>, depth: f64, k: &Intrinsics) -> Result<Point3<f64>, GeometryError> {
    k.back_project(pixel, depth)
}

/// Free-function form of [`Intrinsics::project`].
pub fn project(point: &Point3<f64>, k: &Intrinsics) -> Result<Point2<f64>, GeometryError> {
    k.project(point)
}

/// Rotation plus translation (meters), acting as `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Largest absolute entry of `RᵀR − I` combined with `|det R − 1|`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    gram.abs().max().max((r.determinant() - 1.0).abs())
}

/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validates that `rotation` is in SO(3) within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let err = orthonormality_error(&rotation);
        if !(err <= ROTATION_TOLERANCE) || !translation.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidRotation(err));
        }
        Ok(Self { rotation, translation }.renormalized())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    pub fn from_rotation(rotation: &Rotation3<f64>) -> Self {
        Self { rotation: *rotation.matrix(), translation: Vector3::zeros() }
    }

    pub fn from_parts(rotation: &Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: *rotation.matrix(), translation }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: *q.to_rotation_matrix().matrix(), translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Unit quaternion with a non-negative scalar part.
    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        if q.w < 0.0 {
            UnitQuaternion::new_unchecked(-q.into_inner())
        } else {
            q
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        Self::new(m.fixed_view::<3, 3>(0, 0).into_owned(), m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
        .renormalized()
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    fn renormalized(mut self) -> Self {
        if orthonormality_error(&self.rotation) > REORTHONORMALIZE_THRESHOLD {
            self.rotation = nearest_rotation(&self.rotation);
        }
        self
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Maps a frame-`n` camera point to world coordinates using `M_n⁻¹`.
pub fn camera_to_world(point: &Point3<f64>, m_n: &RigidTransform) -> Point3<f64> {
    m_n.inverse().transform_point(point)
}

/// Maps a world point into the camera frame of pose `M_n`.
pub fn world_to_camera(point: &Point3<f64>, m_n: &RigidTransform) -> Point3<f64> {
    m_n.transform_point(point)
}

#[derive(Serialize, Deserialize)]
struct SerializedTransform {
    /// `[w, x, y, z]`
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let q = self.quaternion();
        SerializedTransform {
            rotation: [q.w, q.i, q.j, q.k],
            translation: self.translation.into(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = SerializedTransform::deserialize(deserializer)?;
        let q = quaternion_from_wxyz(raw.rotation).map_err(serde::de::Error::custom)?;
        Ok(Self::from_quaternion(&q, Vector3::from(raw.translation)))
    }
}

fn quaternion_from_wxyz(q: [f64; 4]) -> Result<UnitQuaternion<f64>, String> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = raw.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        return Err(format!("quaternion {q:?} is not unit length (norm {norm})"));
    }
    // Renormalizing a quaternion that is already unit to rounding perturbs the
    // last bits, which would make load/save cycles drift.
    if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(UnitQuaternion::new_unchecked(raw));
    }
    Ok(UnitQuaternion::from_quaternion(raw))
}

/// Serde helper writing unit quaternions as `[w, x, y, z]`.
pub mod quat_wxyz {
    use nalgebra::UnitQuaternion;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &UnitQuaternion<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([q.w, q.i, q.j, q.k])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitQuaternion<f64>, D::Error> {
        let raw = <[f64; 4]>::deserialize(d)?;
        super::quaternion_from_wxyz(raw).map_err(serde::de::Error::custom)
    }
}

/// Per-frame world-to-camera poses; `poses[0]` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraTrajectory {
    poses: Vec<RigidTransform>,
}

impl CameraTrajectory {
    /// Validates the first pose against the identity within [`ROTATION_TOLERANCE`].
    pub fn new(poses: Vec<RigidTransform>) -> Result<Self, GeometryError> {
        let first = poses.first().ok_or_else(|| GeometryError::PoseFormat {
            line: 0,
            message: "trajectory has no frames".into(),
        })?;
        let deviation = (first.to_homogeneous() - Matrix4::identity()).abs().max();
        if deviation > ROTATION_TOLERANCE {
            return Err(GeometryError::PoseFormat {
                line: 2,
                message: format!("frame 0 pose must be identity (deviation {deviation:e})"),
            });
        }
        Ok(Self { poses })
    }

    pub fn identity(frame_count: usize) -> Self {
        Self { poses: vec![RigidTransform::identity(); frame_count.max(1)] }
    }

    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn pose(&self, frame: usize) -> Option<&RigidTransform> {
        self.poses.get(frame)
    }

    pub fn relative_poses(&self) -> Vec<RigidTransform> {
        self.poses.windows(2).map(|w| w[1].compose(&w[0].inverse())).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GeometryError> {
        write_pose_csv(writer, &self.poses)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, GeometryError> {
        Self::new(read_pose_csv(reader)?)
    }
}

/// Chains relative transforms `T_{n→n+1}` (frame-`n` camera to frame-`n+1`
/// camera) into world-to-camera poses, with `M_{n+1} = T_{n→n+1} M_n`.
pub fn chain_global_poses(relatives: &[RigidTransform]) -> CameraTrajectory {
    let mut poses = Vec::with_capacity(relatives.len() + 1);
    poses.push(RigidTransform::identity());
    for relative in relatives {
        let previous = poses[poses.len() - 1];
        poses.push(relative.compose(&previous));
    }
    CameraTrajectory { poses }
}

/// Writes `frame,qw,qx,qy,qz,tx,ty,tz` rows.
pub fn write_pose_csv<W: Write>(writer: W, poses: &[RigidTransform]) -> Result<(), GeometryError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz"])?;
    for (frame, pose) in poses.iter().enumerate() {
        let q = pose.quaternion();
        let t = pose.translation();
        csv.write_record(&[
            frame.to_string(),
            q.w.to_string(),
            q.i.to_string(),
            q.j.to_string(),
            q.k.to_string(),
            t.x.to_string(),
            t.y.to_string(),
            t.z.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads pose rows without the identity-first requirement (object poses use
/// the same layout).
pub fn read_pose_csv<R: Read>(reader: R) -> Result<Vec<RigidTransform>, GeometryError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let expected = ["frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(GeometryError::PoseFormat {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut poses = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let line = row + 2;
        let record = record?;
        let values: Vec<f64> = record
            .iter()
            .map(|field| field.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeometryError::PoseFormat { line, message: e.to_string() })?;
        if values.len() != 8 {
            return Err(GeometryError::PoseFormat { line, message: "expected 8 columns".into() });
        }
        if values[0] != row as f64 {
            return Err(GeometryError::PoseFormat {
                line,
                message: format!("expected frame {row}, found {}", values[0]),
            });
        }
        let q = quaternion_from_wxyz([values[1], values[2], values[3], values[4]])
            .map_err(|message| GeometryError::PoseFormat { line, message })?;
        poses.push(RigidTransform::from_quaternion(&q, Vector3::new(values[5], values[6], values[7])));
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn k100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 200, 100).unwrap()
    }

    #[test]
    fn principal_point_is_on_axis() {
        let k = k100();
        let p = k.back_project(&Point2::new(k.cx, k.cy), 3.5).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 3.5));
        assert_eq!(k.project(&Point3::new(0.0, 0.0, 7.0)).unwrap(), Point2::new(50.0, 50.0));
    }

    #[test]
    fn back_project_hand_example() {
        let p = k100().back_project(&Point2::new(150.0, 50.0), 2.0).unwrap();
        assert_eq!(p, Point3::new(2.0, 0.0, 2.0));
        assert_eq!(k100().project(&p).unwrap(), Point2::new(150.0, 50.0));
    }

    #[test]
    fn projection_errors() {
        let k = k100();
        assert!(matches!(k.project(&Point3::new(0.0, 0.0, -1.0)), Err(GeometryError::BehindCamera(_))));
        assert!(matches!(k.back_project(&Point2::new(1.0, 1.0), 0.0), Err(GeometryError::NonPositiveDepth(_))));
        assert!(matches!(
            k.back_project(&Point2::new(1.0, 1.0), f64::NAN),
            Err(GeometryError::NonPositiveDepth(_))
        ));
        assert!(matches!(
            k.back_project(&Point2::new(200.0, 1.0), 1.0),
            Err(GeometryError::PixelOutOfBounds { .. })
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 1, 1).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 1.0, 0.0, 1, 1).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 1).is_err());
        let k = Intrinsics::default_for_size(640, 480).unwrap();
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (576.0, 576.0, 320.0, 240.0));
        let parsed: Result<Intrinsics, _> =
            serde_json::from_str(r#"{"fx":-1,"fy":1,"cx":0,"cy":0,"width":2,"height":2}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn pure_translations_add() {
        let a = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = RigidTransform::from_translation(Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(*a.compose(&b).translation(), Vector3::new(1.0, 1.0, 0.0));
        assert_eq!(RigidTransform::identity().compose(&a), a);
    }

    #[test]
    fn camera_to_world_with_translation() {
        let m = RigidTransform::from_translation(Vector3::new(0.5, -1.0, 2.0));
        let p = Point3::new(1.0, 1.0, 4.0);
        assert_eq!(camera_to_world(&p, &m), Point3::new(0.5, 2.0, 2.0));
        assert_eq!(camera_to_world(&p, &RigidTransform::identity()), p);
    }

    #[test]
    fn chain_edge_cases() {
        assert_eq!(chain_global_poses(&[]).frame_count(), 1);
        let t = RigidTransform::from_quaternion(
            &UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let traj = chain_global_poses(&[t]);
        assert_eq!(traj.poses()[1], t);
        let rel = traj.relative_poses();
        assert_abs_diff_eq!(rel[0].to_homogeneous(), t.to_homogeneous(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflection, Vector3::zeros()).is_err());
    }

    #[test]
    fn pose_csv_round_trip_and_identity_rule() {
        let t = RigidTransform::from_quaternion(
            &UnitQuaternion::from_euler_angles(0.3, -0.2, 1.3),
            Vector3::new(0.25, 2.0, -3.0),
        );
        let traj = chain_global_poses(&[t, t]);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame,qw,qx,qy,qz,tx,ty,tz\n0,1,0,0,0,0,0,0\n"));
        let back = CameraTrajectory::read_csv(buf.as_slice()).unwrap();
        for (a, b) in back.poses().iter().zip(traj.poses()) {
            assert_abs_diff_eq!(a.to_homogeneous(), b.to_homogeneous(), epsilon = 1e-12);
        }

        let mut bad = Vec::new();
        write_pose_csv(&mut bad, &[t]).unwrap();
        assert!(CameraTrajectory::read_csv(bad.as_slice()).is_err());
        assert_eq!(read_pose_csv(bad.as_slice()).unwrap().len(), 1);
    }

    #[test]
    fn serde_uses_wxyz() {
        let t = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"rotation":[1.0,0.0,0.0,0.0],"translation":[1.0,2.0,3.0]}"#);
        let back: RigidTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
