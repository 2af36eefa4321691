//! Ray-cast synthetic RGB-D sequences with exact ground truth.
//!
//! Scene coordinates use the camera convention (+Y down). The project world
//! frame is the frame-0 camera, so ground-truth `M_n = E_n·E_0⁻¹` where `E_n`
//! maps scene coordinates into camera `n`.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::anchor::{AnchorSpec, TrackingMode};
use crate::camera_tracker::{OdometryError, RgbdFrame};
use crate::depth::{DepthMap, DepthSequence, DepthSource};
use crate::geometry::{CameraTrajectory, Intrinsics, RigidTransform};
use crate::object_tracker::Track2D;

/// Textured rectangle spanned by `u_axis` and `v_axis` around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub center: Point3<f64>,
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    /// Half-widths along the two axes; `None` means unbounded.
    pub half_extent: Option<[f64; 2]>,
    #[serde(default = "default_texture_scale")]
    pub texture_scale: f64,
    #[serde(default = "default_color")]
    pub color: [u8; 3],
}

/// Axis-aligned textured box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: Point3<f64>,
    pub half_size: Vector3<f64>,
    #[serde(default = "default_texture_scale")]
    pub texture_scale: f64,
    #[serde(default = "default_color")]
    pub color: [u8; 3],
}

/// Camera-facing textured square moving linearly; its center is the tracked point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub start: Point3<f64>,
    /// Displacement per frame.
    pub velocity: Vector3<f64>,
    pub half_size: f64,
    #[serde(default = "default_target_color")]
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    pub position: Point3<f64>,
    pub look_at: Point3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraPath {
    Static { position: Point3<f64>, look_at: Point3<f64> },
    /// Fixed orientation (from `start` towards `look_at`), constant velocity.
    Linear { start: Point3<f64>, velocity: Vector3<f64>, look_at: Point3<f64> },
    /// Circle in the x–z plane around `center`, always looking at it.
    Orbit { center: Point3<f64>, radius: f64, height: f64, start_deg: f64, step_deg: f64 },
    /// Position lerp and orientation slerp between keys.
    Keyframes { keys: Vec<Keyframe> },
}

impl Default for CameraPath {
    fn default() -> Self {
        CameraPath::Static { position: Point3::origin(), look_at: Point3::new(0.0, 0.0, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub frame_count: usize,
    #[serde(default)]
    pub intrinsics: Option<Intrinsics>,
    #[serde(default)]
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub camera: CameraPath,
    /// Half-width of i.i.d. uniform multiplicative depth noise, e.g. 0.02 for ±2%.
    #[serde(default)]
    pub depth_noise: f64,
    #[serde(default)]
    pub background: [u8; 3],
}

fn default_texture_scale() -> f64 {
    0.03
}

fn default_color() -> [u8; 3] {
    [200, 190, 170]
}

fn default_target_color() -> [u8; 3] {
    [220, 120, 80]
}

impl SceneSpec {
    /// Textured wall at z = 2 with a box in front of it.
    pub fn desk(width: u32, height: u32, frame_count: usize, camera: CameraPath) -> Self {
        Self {
            width,
            height,
            frame_count,
            intrinsics: None,
            planes: vec![PlaneSpec {
                center: Point3::new(0.0, 0.0, 2.0),
                u_axis: Vector3::x(),
                v_axis: Vector3::y(),
                half_extent: Some([4.0, 4.0]),
                texture_scale: default_texture_scale(),
                color: default_color(),
            }],
            boxes: vec![BoxSpec {
                center: Point3::new(0.25, 0.2, 1.7),
                half_size: Vector3::new(0.15, 0.15, 0.15),
                texture_scale: 0.02,
                color: [150, 170, 210],
            }],
            targets: Vec::new(),
            camera,
            depth_noise: 0.0,
            background: [0, 0, 0],
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        let invalid = |m: &str| Err(EvalError::InvalidSceneSpec(m.to_string()));
        if self.width == 0 || self.height == 0 || self.frame_count == 0 {
            return invalid("width, height and frame_count must be positive");
        }
        if !(0.0..1.0).contains(&self.depth_noise) {
            return invalid("depth_noise must lie in [0, 1)");
        }
        if let Some(k) = &self.intrinsics {
            if (k.width, k.height) != (self.width, self.height) {
                return invalid("intrinsics size differs from frame size");
            }
        }
        for p in &self.planes {
            if p.u_axis.cross(&p.v_axis).norm() < 1e-9 || !(p.texture_scale > 0.0) {
                return invalid("plane axes must be independent and texture_scale positive");
            }
            if p.half_extent.is_some_and(|e| !(e[0] > 0.0 && e[1] > 0.0)) {
                return invalid("plane half_extent must be positive");
            }
        }
        for b in &self.boxes {
            if !(b.half_size.min() > 0.0 && b.texture_scale > 0.0) {
                return invalid("box half_size and texture_scale must be positive");
            }
        }
        if self.targets.iter().any(|t| !(t.half_size > 0.0)) {
            return invalid("target half_size must be positive");
        }
        match &self.camera {
            CameraPath::Static { position, look_at } | CameraPath::Linear { start: position, look_at, .. } => {
                if (look_at - position).norm() < 1e-9 {
                    return invalid("camera look_at coincides with position");
                }
            }
            CameraPath::Orbit { radius, height, .. } => {
                if !(*radius > 0.0) && height.abs() < 1e-9 {
                    return invalid("orbit camera sits on its look-at point");
                }
            }
            CameraPath::Keyframes { keys } => {
                if keys.is_empty() || keys.windows(2).any(|w| w[1].frame <= w[0].frame) {
                    return invalid("keyframes must be non-empty with increasing frames");
                }
                if keys.iter().any(|k| (k.look_at - k.position).norm() < 1e-9) {
                    return invalid("keyframe look_at coincides with position");
                }
            }
        }
        Ok(())
    }
}

/// Camera-to-scene rotation looking from `position` towards `target` with +Y down.
fn look_rotation(position: &Point3<f64>, target: &Point3<f64>) -> Rotation3<f64> {
    let z = (target - position).normalize();
    let down = Vector3::y();
    let x = down.cross(&z);
    let x = if x.norm() < 1e-9 { Vector3::x() } else { x.normalize() };
    let y = z.cross(&x);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

/// Scene-to-camera transform for a camera at `position` with camera-to-scene rotation `r`.
fn extrinsic(position: &Point3<f64>, r: &Rotation3<f64>) -> RigidTransform {
    let r_inv = r.inverse();
    RigidTransform::from_parts(&r_inv, -(r_inv * position.coords))
}

fn camera_at(path: &CameraPath, n: usize) -> (Point3<f64>, Rotation3<f64>) {
    match path {
        CameraPath::Static { position, look_at } => (*position, look_rotation(position, look_at)),
        CameraPath::Linear { start, velocity, look_at } => (start + velocity * n as f64, look_rotation(start, look_at)),
        CameraPath::Orbit { center, radius, height, start_deg, step_deg } => {
            let theta = (start_deg + step_deg * n as f64).to_radians();
            let position = center + Vector3::new(radius * theta.sin(), *height, -radius * theta.cos());
            (position, look_rotation(&position, center))
        }
        CameraPath::Keyframes { keys } => {
            let rot = |k: &Keyframe| look_rotation(&k.position, &k.look_at);
            let first = &keys[0];
            let last = &keys[keys.len() - 1];
            if n <= first.frame {
                return (first.position, rot(first));
            }
            if n >= last.frame {
                return (last.position, rot(last));
            }
            let i = keys.iter().rposition(|k| k.frame <= n).unwrap_or(0);
            let (a, b) = (&keys[i], &keys[i + 1]);
            let s = (n - a.frame) as f64 / (b.frame - a.frame) as f64;
            let position = a.position + (b.position - a.position) * s;
            let qa = nalgebra::UnitQuaternion::from_rotation_matrix(&rot(a));
            let qb = nalgebra::UnitQuaternion::from_rotation_matrix(&rot(b));
            (position, qa.slerp(&qb, s).to_rotation_matrix())
        }
    }
}

fn hash(seed: u64, surface: u64, ix: i64, iy: i64) -> f64 {
    let mut h = seed
        ^ surface.wrapping_mul(0xD6E8_FEB8_6659_FD93)
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, surface: u64, u: f64, v: f64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (ix, iy) = (fu as i64, fv as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (su, sv) = (smooth(u - fu), smooth(v - fv));
    let a = hash(seed, surface, ix, iy);
    let b = hash(seed, surface, ix + 1, iy);
    let c = hash(seed, surface, ix, iy + 1);
    let d = hash(seed, surface, ix + 1, iy + 1);
    let top = a + (b - a) * su;
    let bottom = c + (d - c) * su;
    top + (bottom - top) * sv
}

/// Three-octave value noise in [0, 1] on surface-local metric coordinates.
fn texture(seed: u64, surface: u64, u: f64, v: f64, scale: f64) -> f64 {
    0.5 * value_noise(seed, surface * 3, u / scale, v / scale)
        + 0.3 * value_noise(seed, surface * 3 + 1, u / (scale / 2.3), v / (scale / 2.3))
        + 0.2 * value_noise(seed, surface * 3 + 2, u / (scale / 5.3), v / (scale / 5.3))
}

fn shade(color: [u8; 3], t: f64) -> Rgb<u8> {
    let f = 0.2 + 0.8 * t;
    Rgb(color.map(|c| (c as f64 * f).round().clamp(0.0, 255.0) as u8))
}

/// Per-frame geometry ready for ray casting.
struct FrameScene<'a> {
    spec: &'a SceneSpec,
    seed: u64,
    /// Camera center and camera-to-scene rotation.
    center: Point3<f64>,
    rotation: Rotation3<f64>,
    /// Target centers in this camera's frame.
    targets: Vec<Point3<f64>>,
}

struct Hit {
    z: f64,
    color: Rgb<u8>,
}

const TARGET_SURFACE_BASE: u64 = 1 << 32;

impl FrameScene<'_> {
    /// `ray` is a camera-frame direction with z = 1, so the hit parameter is the Z depth.
    fn cast(&self, ray: &Vector3<f64>, skip_target: Option<usize>) -> Option<Hit> {
        let dir = self.rotation * ray;
        let mut best: Option<Hit> = None;
        let mut consider = |z: f64, color: &dyn Fn() -> Rgb<u8>| {
            if z > 1e-6 && best.as_ref().is_none_or(|b| z < b.z) {
                best = Some(Hit { z, color: color() });
            }
        };
        for (i, p) in self.spec.planes.iter().enumerate() {
            let u = p.u_axis.normalize();
            let v = (p.v_axis - u * u.dot(&p.v_axis)).normalize();
            let normal = u.cross(&v);
            let denom = normal.dot(&dir);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = normal.dot(&(p.center - self.center)) / denom;
            let local = self.center + dir * t - p.center;
            let (a, b) = (local.dot(&u), local.dot(&v));
            if p.half_extent.is_some_and(|e| a.abs() > e[0] || b.abs() > e[1]) {
                continue;
            }
            consider(t, &|| shade(p.color, texture(self.seed, i as u64, a, b, p.texture_scale)));
        }
        for (i, bx) in self.spec.boxes.iter().enumerate() {
            let (mut t_near, mut t_far, mut axis) = (f64::NEG_INFINITY, f64::INFINITY, 0);
            let mut inside = true;
            for k in 0..3 {
                let lo = bx.center[k] - bx.half_size[k];
                let hi = bx.center[k] + bx.half_size[k];
                if dir[k].abs() < 1e-15 {
                    if self.center[k] < lo || self.center[k] > hi {
                        inside = false;
                    }
                    continue;
                }
                let (t0, t1) = ((lo - self.center[k]) / dir[k], (hi - self.center[k]) / dir[k]);
                let (t0, t1) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                if t0 > t_near {
                    t_near = t0;
                    axis = k;
                }
                t_far = t_far.min(t1);
            }
            if !inside || t_near > t_far || t_near <= 0.0 {
                continue;
            }
            let local = self.center + dir * t_near - bx.center;
            let (a, b) = (local[(axis + 1) % 3], local[(axis + 2) % 3]);
            let face = 1000 + i as u64 * 6 + axis as u64 * 2 + u64::from(dir[axis] > 0.0);
            consider(t_near, &|| shade(bx.color, texture(self.seed, face, a, b, bx.texture_scale)));
        }
        for (i, (c, spec)) in self.targets.iter().zip(&self.spec.targets).enumerate() {
            if Some(i) == skip_target || c.z <= 1e-6 {
                continue;
            }
            let (x, y) = (ray.x * c.z - c.x, ray.y * c.z - c.y);
            if x.abs() > spec.half_size || y.abs() > spec.half_size {
                continue;
            }
            let scale = spec.half_size / 4.0;
            consider(c.z, &|| shade(spec.color, texture(self.seed, TARGET_SURFACE_BASE + i as u64, x, y, scale)));
        }
        best
    }
}

/// Ground truth for one moving target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTruth {
    /// Analytic projection of the target center; invisible when off-screen or occluded.
    pub track: Track2D,
    pub camera_points: Vec<Point3<f64>>,
    pub world_points: Vec<Point3<f64>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub intrinsics: Intrinsics,
    pub frames: Vec<RgbImage>,
    pub depths: DepthSequence,
    pub trajectory: CameraTrajectory,
    /// Scene-to-world transform (`E_0`).
    pub scene_to_world: RigidTransform,
    pub targets: Vec<TargetTruth>,
}

impl SyntheticScene {
    pub fn rgbd_frames(&self) -> Result<Vec<RgbdFrame>, OdometryError> {
        self.frames
            .iter()
            .zip(self.depths.maps())
            .enumerate()
            .map(|(n, (rgb, d))| RgbdFrame::new(rgb.clone(), d.clone(), n))
            .collect()
    }
}

fn noise_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Renders the scene. Deterministic per `seed`: the seed drives textures and depth noise.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene, EvalError> {
    spec.validate()?;
    let k = match spec.intrinsics {
        Some(k) => k,
        None => Intrinsics::default_for_size(spec.width, spec.height).map_err(|e| EvalError::InvalidSceneSpec(e.to_string()))?,
    };
    let cameras: Vec<(Point3<f64>, Rotation3<f64>)> = (0..spec.frame_count).map(|n| camera_at(&spec.camera, n)).collect();
    let extrinsics: Vec<RigidTransform> = cameras.iter().map(|(c, r)| extrinsic(c, r)).collect();
    let e0_inv = extrinsics[0].inverse();
    let poses: Vec<RigidTransform> = extrinsics
        .iter()
        .enumerate()
        .map(|(n, e)| if n == 0 { RigidTransform::identity() } else { e.compose(&e0_inv) })
        .collect();
    let trajectory = CameraTrajectory::new(poses).map_err(|e| EvalError::InvalidSceneSpec(e.to_string()))?;

    let scene_targets = |n: usize| -> Vec<Point3<f64>> { spec.targets.iter().map(|t| t.start + t.velocity * n as f64).collect() };
    let (w, h) = (spec.width, spec.height);
    let rendered: Vec<(RgbImage, DepthMap, Vec<Option<Point2<f64>>>)> = (0..spec.frame_count)
        .into_par_iter()
        .map(|n| {
            let (center, rotation) = cameras[n];
            let camera_targets = scene_targets(n).iter().map(|p| extrinsics[n].transform_point(p)).collect();
            let frame = FrameScene { spec, seed, center, rotation, targets: camera_targets };
            let ray = |u: f64, v: f64| Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            let mut rgb = RgbImage::from_pixel(w, h, Rgb(spec.background));
            let mut depth = vec![0f32; (w * h) as usize];
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, n));
            for y in 0..h {
                for x in 0..w {
                    if let Some(hit) = frame.cast(&ray(x as f64, y as f64), None) {
                        rgb.put_pixel(x, y, hit.color);
                        let noise = if spec.depth_noise > 0.0 {
                            1.0 + rng.random_range(-spec.depth_noise..=spec.depth_noise)
                        } else {
                            1.0
                        };
                        depth[(y * w + x) as usize] = (hit.z * noise) as f32;
                    }
                }
            }
            let projections = frame
                .targets
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let p = k.project(c).ok().filter(|p| c.z > 0.01 && k.contains(p))?;
                    let occluded = frame.cast(&ray(p.x, p.y), Some(i)).is_some_and(|hit| hit.z < c.z - 1e-9);
                    (!occluded).then_some(p)
                })
                .collect();
            let map = DepthMap::new(w, h, depth, n).expect("dimensions match by construction");
            (rgb, map, projections)
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut maps = Vec::with_capacity(spec.frame_count);
    let mut projections = Vec::with_capacity(spec.frame_count);
    for (rgb, map, proj) in rendered {
        frames.push(rgb);
        maps.push(map);
        projections.push(proj);
    }
    let depths = DepthSequence::new(maps, DepthSource::Synthetic).map_err(|e| EvalError::InvalidSceneSpec(e.to_string()))?;

    let targets = (0..spec.targets.len())
        .map(|i| {
            let scene_points: Vec<Point3<f64>> = (0..spec.frame_count).map(|n| scene_targets(n)[i]).collect();
            let camera_points: Vec<Point3<f64>> =
                scene_points.iter().zip(&extrinsics).map(|(p, e)| e.transform_point(p)).collect();
            let world_points = scene_points.iter().map(|p| extrinsics[0].transform_point(p)).collect();
            let mut points = Vec::with_capacity(spec.frame_count);
            let mut visible = Vec::with_capacity(spec.frame_count);
            let mut last = k.project(&camera_points[0]).unwrap_or(Point2::new(k.cx, k.cy));
            for proj in &projections {
                match proj[i] {
                    Some(p) => {
                        last = p;
                        points.push(p);
                        visible.push(true);
                    }
                    None => {
                        points.push(last);
                        visible.push(false);
                    }
                }
            }
            let seed_anchor = AnchorSpec::new(points[0].x, points[0].y, 0, TrackingMode::Object);
            TargetTruth { track: Track2D { points, visible, seed: seed_anchor }, camera_points, world_points }
        })
        .collect();

    Ok(SyntheticScene { intrinsics: k, frames, depths, trajectory, scene_to_world: extrinsics[0], targets })
}
