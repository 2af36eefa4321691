//! ChartBlender engine: camera and object tracking from RGB-D video, chart
//! rasterization, compositing, evaluation and project management.

pub mod anchor;
pub mod camera_tracker;
pub mod chart;
pub mod compositor;
pub mod depth;
pub mod eval;
pub mod geometry;
pub mod imaging;
pub mod object_tracker;
pub mod project;

pub use anchor::{AnchorSpec, TrackingMode};
pub use camera_tracker::{
    estimate_relative_pose, recover_anchor_world_pose, solve_camera_trajectory, AnchorWorldPose, OdometryConfig,
    OdometryError, RgbdFrame,
};
pub use depth::{DepthError, DepthMap, DepthSequence};
pub use geometry::{back_project, chain_global_poses, project, CameraTrajectory, GeometryError, Intrinsics, RigidTransform};
pub use object_tracker::{ObjectPoseSequence, ObjectTrackerError, SmoothingConfig, Track2D, Trajectory3D};
pub use chart::{build_chart, parse_dataset, ChartCanvas, ChartError, ChartKind, ChartSpec, DataTable, TemporalBehavior, TimeMap};
pub use compositor::{composite_frame, Placement, RenderError, RenderInputs, RenderReport, Renderer, TimelineSegment};
pub use eval::{apd3d, pose_error, synth_scene, EvalError, PointTrack3D, SceneSpec};
pub use project::{Project, ProjectError, RenderJob};
