//! RGBD visual odometry and world-anchored point recovery.
//!
//! Relative motion between two RGBD frames is estimated from sparse
//! correspondences: Shi-Tomasi corners on the first frame are matched into the
//! second by NCC patch search, both ends are lifted to 3D with their depth, and
//! a rigid transform is fitted with closed-form SVD alignment inside a RANSAC
//! loop, then refined on the consensus set.

use image::RgbImage;
use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{AnchorSpec, TrackingMode};
use crate::depth::{sample_depth, DepthError, DepthMap, DepthSequence, SampleStrategy};
use crate::geometry::{camera_to_world, chain_global_poses, CameraTrajectory, GeometryError, Intrinsics, RigidTransform};
use crate::imaging::{detect_corners, search_ncc, GrayImage, Patch};

const PATCH_RADIUS: usize = 3;
const MIN_NCC: f32 = 0.8;
const MIN_DEPTH_COVERAGE: f64 = 0.1;
/// Ratio of the two largest principal variances below which a point set is treated as a line.
const COLLINEAR_RATIO: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum OdometryError {
    #[error("only {found} correspondences survive robust fitting, {required} required")]
    InsufficientCorrespondences { found: usize, required: usize },
    #[error("inlier set is degenerate (near-collinear)")]
    DegenerateGeometry,
    #[error("depth covers {coverage:.3} of frame {frame}, at least {MIN_DEPTH_COVERAGE} required")]
    InsufficientDepth { frame: usize, coverage: f64 },
    #[error("frames have mismatched dimensions")]
    DimensionMismatch,
    #[error("tracking failed between frames {pair} and {}: {source}", pair + 1)]
    TrackingFailed {
        pair: usize,
        #[source]
        source: Box<OdometryError>,
    },
    #[error("anchor must use camera tracking mode")]
    WrongMode,
    #[error("anchor frame {frame} is outside the {frames}-frame sequence")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("no frames supplied")]
    NoFrames,
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// Reuse the last successful relative transform (identity if none yet).
    #[default]
    HoldPreviousRelative,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdometryConfig {
    pub max_features: usize,
    pub search_radius_px: u32,
    pub ransac_iters: usize,
    pub inlier_thresh_m: f64,
    pub min_inliers: usize,
    pub seed: u64,
    pub on_failure: FailurePolicy,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            max_features: 400,
            search_radius_px: 32,
            ransac_iters: 500,
            inlier_thresh_m: 0.02,
            min_inliers: 12,
            seed: 0x5eed,
            on_failure: FailurePolicy::HoldPreviousRelative,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RgbdFrame {
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub index: usize,
}

impl RgbdFrame {
    pub fn new(rgb: RgbImage, depth: DepthMap, index: usize) -> Result<Self, OdometryError> {
        if rgb.dimensions() != (depth.width(), depth.height()) {
            return Err(OdometryError::DimensionMismatch);
        }
        Ok(Self { rgb, depth, index })
    }
}

/// World-space position of a camera-mode anchor plus its initial orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorWorldPose {
    pub position: Point3<f64>,
    pub orientation: Rotation3<f64>,
}

impl AnchorWorldPose {
    pub fn as_transform(&self) -> RigidTransform {
        RigidTransform::from_quaternion(
            &nalgebra::UnitQuaternion::from_rotation_matrix(&self.orientation),
            self.position.coords,
        )
    }
}

/// Closed-form least-squares rigid alignment (Kabsch): `R, t` minimizing
/// `Σ ‖R·src + t − dst‖²`. Returns `None` for fewer than three pairs.
pub fn rigid_align(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Option<RigidTransform> {
    if src.len() < 3 || src.len() != dst.len() {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    RigidTransform::new(r, cd - r * cs).ok()
}

fn is_collinear(points: &[Point3<f64>]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let n = points.len() as f64;
    let c = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1] / ev[0] < COLLINEAR_RATIO
}

fn inliers(model: &RigidTransform, src: &[Point3<f64>], dst: &[Point3<f64>], thresh: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut cost = 0.0;
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let r = (model.transform_point(s) - d).norm();
        if r < thresh {
            idx.push(i);
            cost += r;
        } else {
            cost += thresh;
        }
    }
    (idx, cost)
}

/// RANSAC over 3-point samples followed by two rounds of refitting on the consensus set.
pub fn robust_rigid_align(
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
    cfg: &OdometryConfig,
) -> Result<(RigidTransform, Vec<usize>), OdometryError> {
    let required = cfg.min_inliers.max(3);
    if src.len() < required {
        return Err(OdometryError::InsufficientCorrespondences { found: src.len(), required });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..cfg.ransac_iters {
        let sample = rand::seq::index::sample(&mut rng, src.len(), 3);
        let (i, j, k) = (sample.index(0), sample.index(1), sample.index(2));
        let area = (src[j] - src[i]).cross(&(src[k] - src[i])).norm();
        if area < 1e-6 {
            continue;
        }
        let Some(model) = rigid_align(&[src[i], src[j], src[k]], &[dst[i], dst[j], dst[k]]) else {
            continue;
        };
        let (idx, cost) = inliers(&model, src, dst, cfg.inlier_thresh_m);
        let better = match &best {
            None => true,
            Some((b, bc)) => idx.len() > b.len() || (idx.len() == b.len() && cost < *bc),
        };
        if better {
            best = Some((idx, cost));
        }
    }
    let Some((mut set, _)) = best else {
        return Err(OdometryError::InsufficientCorrespondences { found: 0, required });
    };
    let mut model = RigidTransform::identity();
    for _ in 0..2 {
        if set.len() < required {
            return Err(OdometryError::InsufficientCorrespondences { found: set.len(), required });
        }
        let s: Vec<_> = set.iter().map(|&i| src[i]).collect();
        let d: Vec<_> = set.iter().map(|&i| dst[i]).collect();
        if is_collinear(&s) {
            return Err(OdometryError::DegenerateGeometry);
        }
        model = rigid_align(&s, &d).ok_or(OdometryError::DegenerateGeometry)?;
        set = inliers(&model, src, dst, cfg.inlier_thresh_m).0;
    }
    if set.len() < required {
        return Err(OdometryError::InsufficientCorrespondences { found: set.len(), required });
    }
    Ok((model, set))
}

/// Matched 3D points: `a` in frame-a camera coordinates, `b` in frame-b.
fn correspondences(
    a: &RgbdFrame,
    b: &RgbdFrame,
    gray_a: &GrayImage,
    gray_b: &GrayImage,
    k: &Intrinsics,
    cfg: &OdometryConfig,
) -> (Vec<Point3<f64>>, Vec<Point3<f64>>) {
    let corners = detect_corners(gray_a, cfg.max_features, PATCH_RADIUS + 1, |x, y| a.depth.get(x as u32, y as u32) > 0.0);
    let radius = cfg.search_radius_px as i64;
    let pairs: Vec<Option<(Point3<f64>, Point3<f64>)>> = corners
        .par_iter()
        .map(|corner| {
            let patch = Patch::extract(gray_a, *corner, PATCH_RADIUS)?;
            let m = search_ncc(gray_b, &patch, (corner.x as i64, corner.y as i64), radius)?;
            if m.score < MIN_NCC || m.on_boundary {
                return None;
            }
            let da = a.depth.get(corner.x as u32, corner.y as u32) as f64;
            let db = sample_depth(&b.depth, &m.position, SampleStrategy::BilinearValid).ok()?;
            let pa = k.back_project(corner, da).ok()?;
            let pb = k.back_project(&m.position, db).ok()?;
            Some((pa, pb))
        })
        .collect();
    pairs.into_iter().flatten().unzip()
}

/// Estimates `T_{a→b}`, mapping frame-a camera coordinates to frame-b camera coordinates.
pub fn estimate_relative_pose(
    a: &RgbdFrame,
    b: &RgbdFrame,
    k: &Intrinsics,
    cfg: &OdometryConfig,
) -> Result<RigidTransform, OdometryError> {
    if a.rgb.dimensions() != b.rgb.dimensions() || a.rgb.dimensions() != (k.width, k.height) {
        return Err(OdometryError::DimensionMismatch);
    }
    for f in [a, b] {
        let coverage = f.depth.valid_fraction();
        if coverage < MIN_DEPTH_COVERAGE {
            return Err(OdometryError::InsufficientDepth { frame: f.index, coverage });
        }
    }
    let gray_a = GrayImage::from_rgb(&a.rgb);
    let gray_b = GrayImage::from_rgb(&b.rgb);
    let (src, dst) = correspondences(a, b, &gray_a, &gray_b, k, cfg);
    robust_rigid_align(&src, &dst, cfg).map(|(model, _)| model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    pub trajectory: CameraTrajectory,
    /// Pair indices `n` (frames `n → n+1`) that fell back to the previous relative pose.
    pub fallback_pairs: Vec<usize>,
}

pub fn solve_camera_trajectory(
    frames: &[RgbdFrame],
    k: &Intrinsics,
    cfg: &OdometryConfig,
) -> Result<CameraTrajectory, OdometryError> {
    solve_camera_trajectory_detailed(frames, k, cfg).map(|s| s.trajectory)
}

/// Pairwise estimates run in parallel; chaining is a sequential reduction.
pub fn solve_camera_trajectory_detailed(
    frames: &[RgbdFrame],
    k: &Intrinsics,
    cfg: &OdometryConfig,
) -> Result<TrajectorySolution, OdometryError> {
    if frames.is_empty() {
        return Err(OdometryError::NoFrames);
    }
    let estimates: Vec<Result<RigidTransform, OdometryError>> = frames
        .par_windows(2)
        .map(|pair| estimate_relative_pose(&pair[0], &pair[1], k, cfg))
        .collect();
    let mut relatives = Vec::with_capacity(estimates.len());
    let mut fallback_pairs = Vec::new();
    let mut last = RigidTransform::identity();
    for (pair, estimate) in estimates.into_iter().enumerate() {
        match estimate {
            Ok(t) => {
                last = t;
                relatives.push(t);
            }
            Err(e) => match cfg.on_failure {
                FailurePolicy::Abort => {
                    return Err(OdometryError::TrackingFailed { pair, source: Box::new(e) });
                }
                FailurePolicy::HoldPreviousRelative => {
                    log::warn!("pair {pair}: {e}; holding previous relative pose");
                    fallback_pairs.push(pair);
                    relatives.push(last);
                }
            },
        }
    }
    Ok(TrajectorySolution { trajectory: chain_global_poses(&relatives), fallback_pairs })
}

/// Lifts a camera-mode anchor into world coordinates:
/// `camera_to_world(back_project(pixel, D_f(pixel)), M_f)`.
///
/// The orientation starts as the identity (chart facing the frame-0 camera).
pub fn recover_anchor_world_pose(
    anchor: &AnchorSpec,
    depths: &DepthSequence,
    trajectory: &CameraTrajectory,
    k: &Intrinsics,
) -> Result<AnchorWorldPose, OdometryError> {
    if anchor.mode != TrackingMode::Camera {
        return Err(OdometryError::WrongMode);
    }
    let frames = depths.len().min(trajectory.frame_count());
    let (Some(depth), Some(pose)) = (depths.get(anchor.frame), trajectory.pose(anchor.frame)) else {
        return Err(OdometryError::FrameOutOfRange { frame: anchor.frame, frames });
    };
    let d = sample_depth(depth, &anchor.pixel, SampleStrategy::BilinearValid)?;
    let camera_point = k.back_project(&anchor.pixel, d)?;
    Ok(AnchorWorldPose { position: camera_to_world(&camera_point, pose), orientation: Rotation3::identity() })
}

/// Projects a world point through `M_n`; `None` if it is behind the camera.
pub fn reproject_world_point(point: &Point3<f64>, pose: &RigidTransform, k: &Intrinsics) -> Option<Point2<f64>> {
    k.project(&pose.transform_point(point)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::Rng;

    fn random_cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..4.0)))
            .collect()
    }

    #[test]
    fn rigid_align_recovers_exact_transform() {
        let t = RigidTransform::from_quaternion(
            &UnitQuaternion::from_euler_angles(0.1, -0.2, 0.05),
            Vector3::new(0.3, -0.1, 0.2),
        );
        let src = random_cloud(20, 1);
        let dst: Vec<_> = src.iter().map(|p| t.transform_point(p)).collect();
        let fit = rigid_align(&src, &dst).unwrap();
        assert!((fit.to_homogeneous() - t.to_homogeneous()).abs().max() < 1e-10);
    }

    #[test]
    fn ransac_ignores_outliers() {
        let t = RigidTransform::from_translation(Vector3::new(0.05, 0.0, 0.0));
        let src = random_cloud(60, 2);
        let mut dst: Vec<_> = src.iter().map(|p| t.transform_point(p)).collect();
        for p in dst.iter_mut().step_by(4) {
            *p += Vector3::new(0.5, -0.3, 0.2);
        }
        let (fit, set) = robust_rigid_align(&src, &dst, &OdometryConfig::default()).unwrap();
        assert_eq!(set.len(), 45);
        assert!((fit.translation() - t.translation()).norm() < 1e-9);
    }

    #[test]
    fn collinear_sets_are_degenerate() {
        let src: Vec<_> = (0..20).map(|i| Point3::new(i as f64 * 0.1, 0.0, 2.0)).collect();
        assert!(matches!(
            robust_rigid_align(&src, &src, &OdometryConfig::default()),
            Err(OdometryError::DegenerateGeometry) | Err(OdometryError::InsufficientCorrespondences { .. })
        ));
        assert!(is_collinear(&src));
    }

    #[test]
    fn too_few_points() {
        let src = random_cloud(5, 3);
        assert!(matches!(
            robust_rigid_align(&src, &src, &OdometryConfig::default()),
            Err(OdometryError::InsufficientCorrespondences { found: 5, required: 12 })
        ));
    }

    #[test]
    fn anchor_recovery_applies_inverse_pose() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap();
        let maps = (0..2).map(|n| DepthMap::from_fn(101, 101, n, |_, _| 2.0).unwrap()).collect();
        let depths = DepthSequence::new(maps, crate::depth::DepthSource::Synthetic).unwrap();
        let t = Vector3::new(0.5, 0.0, -1.0);
        let traj = chain_global_poses(&[RigidTransform::from_translation(t)]);

        let a0 = AnchorSpec::new(100.0, 50.0, 0, TrackingMode::Camera);
        let p0 = recover_anchor_world_pose(&a0, &depths, &traj, &k).unwrap();
        assert_eq!(p0.position, Point3::new(1.0, 0.0, 2.0));

        let a1 = AnchorSpec { frame: 1, ..a0 };
        let p1 = recover_anchor_world_pose(&a1, &depths, &traj, &k).unwrap();
        assert_eq!(p1.position, Point3::new(0.5, 0.0, 3.0));
        let back = reproject_world_point(&p1.position, &traj.poses()[1], &k).unwrap();
        assert!((back - a1.pixel).norm() < 1e-9);

        let object = AnchorSpec { mode: TrackingMode::Object, ..a0 };
        assert!(matches!(recover_anchor_world_pose(&object, &depths, &traj, &k), Err(OdometryError::WrongMode)));
    }

    #[test]
    fn anchor_on_invalid_depth() {
        let k = Intrinsics::new(100.0, 100.0, 5.0, 5.0, 11, 11).unwrap();
        let maps = vec![DepthMap::from_fn(11, 11, 0, |x, _| if x < 5 { 0.0 } else { 1.0 }).unwrap()];
        let depths = DepthSequence::new(maps, crate::depth::DepthSource::Synthetic).unwrap();
        let traj = CameraTrajectory::identity(1);
        let anchor = AnchorSpec::new(2.0, 2.0, 0, TrackingMode::Camera);
        assert!(matches!(
            recover_anchor_world_pose(&anchor, &depths, &traj, &k),
            Err(OdometryError::Depth(DepthError::NoValidDepth { .. }))
        ));
    }
}
