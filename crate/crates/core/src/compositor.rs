//! Places chart canvases as planar quads in 3D, projects them per frame and
//! alpha-blends the perspective-warped canvases into video frames.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Point2, Point3, SMatrix, SVector, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera_tracker::AnchorWorldPose;
use crate::chart::{build_chart_unveiled, temporal_opacity, ChartCanvas, ChartError, ChartSpec, DataTable, TemporalBehavior, TimeMap};
use crate::geometry::{quat_wxyz, CameraTrajectory, Intrinsics, RigidTransform};
use crate::object_tracker::ObjectPoseSequence;

/// Corners closer than this to the camera plane cull the whole chart.
pub const NEAR_PLANE: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("missing trajectory for anchor {0:?}")]
    MissingTrajectory(String),
    #[error("missing depth: {0}")]
    MissingDepth(String),
    #[error("segment {segment:?} references unknown {what} {id:?}")]
    UnknownReference { segment: String, what: &'static str, id: String },
    #[error("frame {frame}: {message}")]
    Frame { frame: usize, message: String },
}

/// Chart pose relative to its anchor: scale first, then rotation, then offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub offset: Vector3<f64>,
    #[serde(with = "quat_wxyz")]
    pub rotation: UnitQuaternion<f64>,
    pub scale: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Self { offset: Vector3::zeros(), rotation: UnitQuaternion::identity(), scale: 1.0 }
    }
}

impl Placement {
    pub fn is_valid(&self) -> bool {
        self.scale.is_finite() && self.scale > 0.0 && self.offset.iter().all(|v| v.is_finite())
    }
}

/// Interval during which one chart is shown. Frames are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSegment {
    pub chart_id: String,
    pub track_index: u32,
    pub start_frame: usize,
    pub end_frame: usize,
    #[serde(default)]
    pub behavior: TemporalBehavior,
    #[serde(default)]
    pub placement: Placement,
    pub anchor_ref: String,
}

impl TimelineSegment {
    pub fn contains(&self, frame: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }
}

/// Quad corners (TL, TR, BR, BL) of an `extent`-sized chart centered on the
/// anchor. Canvas x maps to local +X and canvas y (down) to local +Y.
pub fn chart_world_quad(pose: &RigidTransform, placement: &Placement, extent: [f64; 2]) -> [Point3<f64>; 4] {
    let (hw, hh) = (extent[0] / 2.0, extent[1] / 2.0);
    [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].map(|(x, y)| {
        let local = placement.rotation * (Vector3::new(x, y, 0.0) * placement.scale) + placement.offset;
        pose.transform_point(&Point3::from(local))
    })
}

/// Exact projective map taking `src[i]` to `dst[i]` for four point pairs.
pub fn homography(src: &[Point2<f64>; 4], dst: &[Point2<f64>; 4]) -> Option<Matrix3<f64>> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = (src[i].x, src[i].y);
        let (u, v) = (dst[i].x, dst[i].y);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Some(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

pub fn apply_homography(h: &Matrix3<f64>, p: &Point2<f64>) -> Option<Point2<f64>> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    (q.z.abs() > f64::EPSILON).then(|| Point2::new(q.x / q.z, q.y / q.z))
}

/// Bilinear premultiplied sample at continuous pixel-center coordinates;
/// texels outside the canvas are transparent.
fn sample_premultiplied(canvas: &image::RgbaImage, x: f64, y: f64) -> [f32; 4] {
    let (w, h) = (canvas.width() as i64, canvas.height() as i64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut out = [0f32; 4];
    for (dx, dy, wgt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        let (px, py) = (x0 + dx, y0 + dy);
        if wgt == 0.0 || px < 0 || py < 0 || px >= w || py >= h {
            continue;
        }
        let p = canvas.get_pixel(px as u32, py as u32).0;
        for c in 0..4 {
            out[c] += wgt * p[c] as f32;
        }
    }
    out
}

/// One chart ready to draw into a frame.
#[derive(Debug, Clone)]
pub struct ActiveChart {
    pub label: String,
    pub track_index: u32,
    pub canvas: Arc<ChartCanvas>,
    /// Corners in the coordinate frame that `m_n` maps into the camera.
    pub quad: [Point3<f64>; 4],
    pub opacity: f64,
    /// World-to-camera transform for this chart (identity for object-mode quads).
    pub m_n: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedFrame {
    pub raster: RgbImage,
    pub frame_index: usize,
    pub warnings: Vec<String>,
}

/// Image-plane corners of a chart, or `None` if it must be culled.
pub fn project_quad(quad: &[Point3<f64>; 4], m_n: &RigidTransform, k: &Intrinsics) -> Option<[Point2<f64>; 4]> {
    let cam = quad.map(|p| m_n.transform_point(&p));
    if cam.iter().any(|p| p.z <= NEAR_PLANE) {
        return None;
    }
    Some(cam.map(|p| Point2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)))
}

/// Canvas edge coordinates of the corners (TL, TR, BR, BL); pixel `(i, j)` covers `[i, i+1)×[j, j+1)`.
fn canvas_corners(canvas: &ChartCanvas) -> [Point2<f64>; 4] {
    let (w, h) = (canvas.raster.width() as f64, canvas.raster.height() as f64);
    [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)]
}

/// Map from canvas edge coordinates to image pixel-center coordinates.
pub fn canvas_to_image(canvas: &ChartCanvas, projected: &[Point2<f64>; 4]) -> Option<Matrix3<f64>> {
    homography(&canvas_corners(canvas), projected)
}

/// Draws `active` charts in ascending `track_index` (stable for ties) over `frame`.
pub fn composite_frame(frame: &RgbImage, frame_index: usize, active: &[ActiveChart], k: &Intrinsics) -> ComposedFrame {
    let mut order: Vec<&ActiveChart> = active.iter().collect();
    order.sort_by_key(|c| c.track_index);
    let mut raster = frame.clone();
    let mut warnings = Vec::new();
    let (fw, fh) = frame.dimensions();
    for chart in order {
        if chart.opacity <= 0.0 {
            continue;
        }
        let Some(corners) = project_quad(&chart.quad, &chart.m_n, k) else {
            warnings.push(format!("chart {} culled: corner behind near plane", chart.label));
            continue;
        };
        let Some(inverse) = canvas_to_image(&chart.canvas, &corners).and_then(|h| h.try_inverse()) else {
            warnings.push(format!("chart {} culled: degenerate projection", chart.label));
            continue;
        };
        let (cw, ch) = (chart.canvas.raster.width() as f64, chart.canvas.raster.height() as f64);
        let min_x = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let max_x = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil().min(fw as f64 - 1.0);
        let min_y = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let max_y = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil().min(fh as f64 - 1.0);
        if max_x < 0.0 || max_y < 0.0 {
            continue;
        }
        let opacity = chart.opacity.min(1.0) as f32;
        for y in min_y..=max_y as u32 {
            for x in min_x..=max_x as u32 {
                let Some(uv) = apply_homography(&inverse, &Point2::new(x as f64, y as f64)) else { continue };
                if uv.x <= -1.0 || uv.y <= -1.0 || uv.x >= cw + 1.0 || uv.y >= ch + 1.0 {
                    continue;
                }
                let src = sample_premultiplied(&chart.canvas.raster, uv.x - 0.5, uv.y - 0.5);
                let alpha = src[3] / 255.0 * opacity;
                if alpha <= 0.0 {
                    continue;
                }
                let Rgb(dst) = *raster.get_pixel(x, y);
                let mut out = [0u8; 3];
                for c in 0..3 {
                    out[c] = (src[c] * opacity + dst[c] as f32 * (1.0 - alpha)).round().clamp(0.0, 255.0) as u8;
                }
                raster.put_pixel(x, y, Rgb(out));
            }
        }
    }
    ComposedFrame { raster, frame_index, warnings }
}

/// How a segment's anchor is posed per frame.
#[derive(Debug, Clone)]
pub enum ResolvedAnchor {
    /// Static world anchor carried through the camera trajectory.
    Camera(AnchorWorldPose),
    /// Per-frame object pose in camera coordinates.
    Object(Arc<ObjectPoseSequence>),
}

/// Everything needed to render, with references already resolved.
pub struct RenderInputs {
    pub intrinsics: Intrinsics,
    pub frame_count: usize,
    pub camera: Option<Arc<CameraTrajectory>>,
    pub anchors: BTreeMap<String, ResolvedAnchor>,
    pub charts: BTreeMap<String, (ChartSpec, Arc<DataTable>)>,
    pub segments: Vec<(String, TimelineSegment)>,
    pub time_map: Option<TimeMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RenderReport {
    pub frame_count: usize,
    /// Frames with at least one warning, in frame order.
    pub frames: Vec<FrameReport>,
}

type CanvasKey = (String, u64, u64);

/// Renders frames of a resolved project. Chart rasters are cached by
/// (chart, data time, unveil) so static charts are rasterized once.
pub struct Renderer {
    inputs: RenderInputs,
    cache: Mutex<HashMap<CanvasKey, Arc<ChartCanvas>>>,
}

impl Renderer {
    /// Checks that every segment's chart and anchor resolve and that poses cover the video.
    pub fn new(inputs: RenderInputs) -> Result<Self, RenderError> {
        for (sid, seg) in &inputs.segments {
            if !inputs.charts.contains_key(&seg.chart_id) {
                return Err(RenderError::UnknownReference { segment: sid.clone(), what: "chart", id: seg.chart_id.clone() });
            }
            match inputs.anchors.get(&seg.anchor_ref) {
                None => {
                    return Err(RenderError::UnknownReference { segment: sid.clone(), what: "anchor", id: seg.anchor_ref.clone() })
                }
                Some(ResolvedAnchor::Camera(_)) => {
                    if inputs.camera.as_ref().is_none_or(|c| c.frame_count() <= seg.end_frame) {
                        return Err(RenderError::MissingTrajectory(seg.anchor_ref.clone()));
                    }
                }
                Some(ResolvedAnchor::Object(poses)) => {
                    if poses.len() <= seg.end_frame {
                        return Err(RenderError::MissingTrajectory(seg.anchor_ref.clone()));
                    }
                }
            }
        }
        Ok(Self { inputs, cache: Mutex::new(HashMap::new()) })
    }

    pub fn frame_count(&self) -> usize {
        self.inputs.frame_count
    }

    fn chart_canvas(&self, chart_id: &str, t: f64, unveil: f64) -> Result<Arc<ChartCanvas>, ChartError> {
        let key = (chart_id.to_string(), t.to_bits(), unveil.to_bits());
        if let Some(c) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(c.clone());
        }
        let (spec, table) = &self.inputs.charts[chart_id];
        let canvas = Arc::new(build_chart_unveiled(spec, table, t, unveil)?);
        self.cache.lock().expect("cache lock").insert(key, canvas.clone());
        Ok(canvas)
    }

    /// Charts visible at frame `n` plus warnings for segments that could not be drawn.
    pub fn active_charts(&self, n: usize) -> (Vec<ActiveChart>, Vec<String>) {
        let mut active = Vec::new();
        let mut warnings = Vec::new();
        let t = self.inputs.time_map.map_or(f64::INFINITY, |m| m.data_time(n));
        for (sid, seg) in self.inputs.segments.iter().filter(|(_, s)| s.contains(n)) {
            let state = temporal_opacity(&seg.behavior, (seg.start_frame, seg.end_frame), n);
            if state.opacity <= 0.0 {
                continue;
            }
            let canvas = match self.chart_canvas(&seg.chart_id, t, state.unveil) {
                Ok(c) => c,
                Err(e) => {
                    warnings.push(format!("segment {sid}: {e}"));
                    continue;
                }
            };
            let (pose, m_n) = match &self.inputs.anchors[&seg.anchor_ref] {
                ResolvedAnchor::Camera(anchor) => {
                    let camera = self.inputs.camera.as_ref().expect("checked in Renderer::new");
                    (anchor.as_transform(), camera.poses()[n])
                }
                ResolvedAnchor::Object(poses) => (poses.poses[n], RigidTransform::identity()),
            };
            active.push(ActiveChart {
                label: sid.clone(),
                track_index: seg.track_index,
                quad: chart_world_quad(&pose, &seg.placement, canvas.extent),
                canvas,
                opacity: state.opacity,
                m_n,
            });
        }
        (active, warnings)
    }

    pub fn render_frame(&self, n: usize, frame: &RgbImage) -> ComposedFrame {
        let (active, mut warnings) = self.active_charts(n);
        let mut composed = composite_frame(frame, n, &active, &self.inputs.intrinsics);
        warnings.append(&mut composed.warnings);
        composed.warnings = warnings;
        composed
    }

    /// Renders every frame in parallel. `source` loads frame `n`, `sink` consumes
    /// the result; `progress` counts completed frames.
    pub fn render_all<S, K>(&self, source: S, sink: K, progress: &AtomicUsize) -> Result<RenderReport, RenderError>
    where
        S: Fn(usize) -> Result<RgbImage, RenderError> + Sync,
        K: Fn(&ComposedFrame) -> Result<(), RenderError> + Sync,
    {
        let mut frames: Vec<FrameReport> = (0..self.inputs.frame_count)
            .into_par_iter()
            .map(|n| {
                let frame = source(n)?;
                let composed = self.render_frame(n, &frame);
                sink(&composed)?;
                progress.fetch_add(1, Ordering::Relaxed);
                Ok(FrameReport { frame: n, warnings: composed.warnings })
            })
            .collect::<Result<_, RenderError>>()?;
        frames.retain(|f| !f.warnings.is_empty());
        frames.sort_by_key(|f| f.frame);
        Ok(RenderReport { frame_count: self.inputs.frame_count, frames })
    }

    /// In-memory convenience over [`Renderer::render_all`].
    pub fn render_frames(&self, frames: &[RgbImage]) -> Result<Vec<ComposedFrame>, RenderError> {
        if frames.len() != self.inputs.frame_count {
            return Err(RenderError::Frame { frame: frames.len(), message: "frame count differs from project".into() });
        }
        Ok(frames.par_iter().enumerate().map(|(n, f)| self.render_frame(n, f)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{parse_dataset, ChartKind, Mapping, Panel, StyleSpec};
    use nalgebra::Rotation3;

    fn k() -> Intrinsics {
        Intrinsics::new(300.0, 300.0, 160.0, 120.0, 320, 240).unwrap()
    }

    fn solid_canvas(w: u32, h: u32, px: [u8; 4], extent: [f64; 2]) -> Arc<ChartCanvas> {
        Arc::new(ChartCanvas {
            raster: image::RgbaImage::from_pixel(w, h, image::Rgba(px)),
            origin: [w as f64 / 2.0, h as f64 / 2.0],
            extent,
            marks: 0,
        })
    }

    fn gray_frame() -> RgbImage {
        RgbImage::from_fn(320, 240, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 77]))
    }

    fn chart_at(z: f64, canvas: Arc<ChartCanvas>, opacity: f64, track_index: u32) -> ActiveChart {
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, z));
        ActiveChart {
            label: format!("t{track_index}"),
            track_index,
            quad: chart_world_quad(&pose, &Placement::default(), canvas.extent),
            canvas,
            opacity,
            m_n: RigidTransform::identity(),
        }
    }

    #[test]
    fn identity_quad_is_centered_unit_square() {
        let q = chart_world_quad(&RigidTransform::identity(), &Placement::default(), [1.0, 1.0]);
        assert_eq!(q, [
            Point3::new(-0.5, -0.5, 0.0),
            Point3::new(0.5, -0.5, 0.0),
            Point3::new(0.5, 0.5, 0.0),
            Point3::new(-0.5, 0.5, 0.0)
        ]);
    }

    #[test]
    fn scale_and_offset() {
        let base = chart_world_quad(&RigidTransform::identity(), &Placement::default(), [0.6, 0.4]);
        let scaled = chart_world_quad(&RigidTransform::identity(), &Placement { scale: 2.0, ..Default::default() }, [0.6, 0.4]);
        for i in 0..4 {
            for j in 0..4 {
                assert!(((scaled[i] - scaled[j]).norm() - 2.0 * (base[i] - base[j]).norm()).abs() < 1e-12);
            }
        }
        let shifted = Placement { offset: Vector3::new(0.0, 0.0, 1.0), ..Default::default() };
        let moved = chart_world_quad(&RigidTransform::identity(), &shifted, [0.6, 0.4]);
        for (m, b) in moved.iter().zip(&base) {
            assert_eq!(m - b, Vector3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn rotation_applies_before_offset() {
        let p = Placement {
            offset: Vector3::new(1.0, 0.0, 0.0),
            rotation: UnitQuaternion::from_rotation_matrix(&Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2)),
            scale: 1.0,
        };
        let q = chart_world_quad(&RigidTransform::identity(), &p, [2.0, 0.0]);
        assert!((q[0] - Point3::new(1.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn homography_maps_corners() {
        let src = [Point2::new(0.0, 0.0), Point2::new(100.0, 0.0), Point2::new(100.0, 50.0), Point2::new(0.0, 50.0)];
        let dst = [Point2::new(10.0, 12.0), Point2::new(90.0, 5.0), Point2::new(95.0, 70.0), Point2::new(3.0, 60.0)];
        let h = homography(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            assert!((apply_homography(&h, s).unwrap() - d).norm() < 1e-9);
        }
    }

    #[test]
    fn transparent_charts_leave_frame_untouched() {
        let frame = gray_frame();
        let canvas = solid_canvas(64, 32, [200, 0, 0, 255], [0.4, 0.2]);
        let zero = composite_frame(&frame, 0, &[chart_at(2.0, canvas, 0.0, 0)], &k());
        assert_eq!(zero.raster, frame);
        let clear = solid_canvas(64, 32, [0, 0, 0, 0], [0.4, 0.2]);
        assert_eq!(composite_frame(&frame, 0, &[chart_at(2.0, clear, 1.0, 0)], &k()).raster, frame);
    }

    #[test]
    fn fronto_parallel_chart_lands_on_projected_corners() {
        let canvas = solid_canvas(64, 32, [255, 255, 255, 255], [0.4, 0.2]);
        let chart = chart_at(2.0, canvas.clone(), 1.0, 0);
        let corners = project_quad(&chart.quad, &chart.m_n, &k()).unwrap();
        let oracle = chart.quad.map(|p| k().project(&p).unwrap());
        let h = canvas_to_image(&canvas, &corners).unwrap();
        for (c, o) in canvas_corners(&canvas).iter().zip(&oracle) {
            assert!((apply_homography(&h, c).unwrap() - o).norm() < 0.5);
        }
        let center = apply_homography(&h, &Point2::new(32.0, 16.0)).unwrap();
        assert!((center - Point2::new(160.0, 120.0)).norm() < 1e-9);
        // 0.4 m at 2 m with f = 300 spans x ∈ [130, 190]; both boundary pixels are half covered.
        let out = composite_frame(&RgbImage::new(320, 240), 0, &[chart], &k());
        let painted: Vec<u32> = (0..320).filter(|x| out.raster.get_pixel(*x, 120).0[0] > 127).collect();
        assert_eq!((painted[0], *painted.last().unwrap()), (130, 190));
    }

    #[test]
    fn behind_camera_is_culled() {
        let frame = gray_frame();
        let canvas = solid_canvas(8, 8, [255, 0, 0, 255], [1.0, 1.0]);
        let mut chart = chart_at(2.0, canvas, 1.0, 0);
        chart.quad[2].z = -1.0;
        let out = composite_frame(&frame, 3, &[chart], &k());
        assert_eq!(out.raster, frame);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn higher_track_draws_on_top() {
        let red = solid_canvas(16, 16, [255, 0, 0, 255], [0.2, 0.2]);
        let blue = solid_canvas(16, 16, [0, 0, 255, 255], [0.2, 0.2]);
        let charts = [chart_at(2.0, blue.clone(), 1.0, 1), chart_at(2.0, red.clone(), 1.0, 0)];
        let out = composite_frame(&gray_frame(), 0, &charts, &k());
        assert_eq!(out.raster.get_pixel(160, 120).0, [0, 0, 255]);
    }

    #[test]
    fn half_opacity_blend() {
        let canvas = solid_canvas(16, 16, [200, 100, 0, 255], [0.4, 0.4]);
        let out = composite_frame(&RgbImage::from_pixel(320, 240, Rgb([100, 100, 100])), 0, &[chart_at(2.0, canvas, 0.5, 0)], &k());
        assert_eq!(out.raster.get_pixel(160, 120).0, [150, 100, 50]);
    }

    fn renderer_with(segments: Vec<(String, TimelineSegment)>, camera: Option<Arc<CameraTrajectory>>) -> Result<Renderer, RenderError> {
        let table = Arc::new(parse_dataset("k,v\na,1\nb,2\n").unwrap());
        let spec = ChartSpec {
            kind: ChartKind::Bar,
            mapping: Mapping { x: Some("k".into()), y: Some("v".into()), ..Default::default() },
            style: StyleSpec { panel: Panel::Solid, ..Default::default() },
            size: [0.4, 0.3],
        };
        let anchor = AnchorWorldPose { position: Point3::new(0.0, 0.0, 2.0), orientation: Rotation3::identity() };
        Renderer::new(RenderInputs {
            intrinsics: k(),
            frame_count: 4,
            camera,
            anchors: BTreeMap::from([("a".to_string(), ResolvedAnchor::Camera(anchor))]),
            charts: BTreeMap::from([("c".to_string(), (spec, table))]),
            segments,
            time_map: None,
        })
    }

    fn segment(track_index: u32) -> TimelineSegment {
        TimelineSegment {
            chart_id: "c".into(),
            track_index,
            start_frame: 0,
            end_frame: 3,
            behavior: TemporalBehavior { enter_frames: 0, exit_frames: 0, ..Default::default() },
            placement: Placement::default(),
            anchor_ref: "a".into(),
        }
    }

    #[test]
    fn zero_segments_render_identity() {
        let r = renderer_with(vec![], None).unwrap();
        let frames = vec![gray_frame(); 4];
        let out = r.render_frames(&frames).unwrap();
        assert!(out.iter().zip(&frames).all(|(o, f)| o.raster == *f && o.warnings.is_empty()));
    }

    #[test]
    fn missing_trajectory_is_reported() {
        assert!(matches!(renderer_with(vec![("s".into(), segment(0))], None), Err(RenderError::MissingTrajectory(a)) if a == "a"));
        let mut bad = segment(0);
        bad.chart_id = "nope".into();
        let traj = Arc::new(CameraTrajectory::identity(4));
        assert!(matches!(renderer_with(vec![("s".into(), bad)], Some(traj)), Err(RenderError::UnknownReference { .. })));
    }

    #[test]
    fn static_camera_chart_is_identical_across_frames() {
        let traj = Arc::new(CameraTrajectory::identity(4));
        let r = renderer_with(vec![("s".into(), segment(0))], Some(traj)).unwrap();
        let frames = vec![gray_frame(); 4];
        let out = r.render_frames(&frames).unwrap();
        assert_ne!(out[0].raster, frames[0]);
        assert!(out.iter().all(|o| o.raster == out[0].raster));
        let progress = AtomicUsize::new(0);
        let report = r.render_all(|n| Ok(frames[n].clone()), |_| Ok(()), &progress).unwrap();
        assert_eq!(progress.load(Ordering::Relaxed), 4);
        assert_eq!(report, RenderReport { frame_count: 4, frames: vec![] });
    }
}
