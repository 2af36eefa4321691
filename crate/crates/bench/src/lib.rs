//! Shared fixtures for the engine benchmarks.

use std::sync::Arc;

use chartblender_core::chart::{build_chart, parse_dataset, ChartKind, ChartSpec, Mapping, StyleSpec};
use chartblender_core::compositor::{chart_world_quad, ActiveChart, Placement};
use chartblender_core::eval::{synth_scene, CameraPath, SceneSpec, SyntheticScene};
use chartblender_core::geometry::RigidTransform;
use chartblender_core::DataTable;
use nalgebra::{Point3, Vector3};

/// A 320×240 desk scene with the camera sliding 1 cm per frame.
pub fn sliding_desk(frames: usize) -> SyntheticScene {
    let camera = CameraPath::Linear {
        start: Point3::origin(),
        velocity: Vector3::new(0.01, 0.0, 0.0),
        look_at: Point3::new(0.0, 0.0, 2.0),
    };
    synth_scene(&SceneSpec::desk(320, 240, frames, camera), 11).expect("valid scene")
}

pub fn yearly_table(rows: usize) -> DataTable {
    let mut csv = String::from("year,count\n");
    for i in 0..rows {
        csv.push_str(&format!("{},{}\n", 1950 + i, (i * 37 % 101) as f64 * 0.5));
    }
    parse_dataset(&csv).expect("valid csv")
}

pub fn line_spec() -> ChartSpec {
    ChartSpec {
        kind: ChartKind::Line,
        mapping: Mapping { x: Some("year".into()), y: Some("count".into()), ..Default::default() },
        style: StyleSpec::default(),
        size: [0.6, 0.4],
    }
}

/// One chart placed 1.5 m in front of the camera.
pub fn active_chart() -> ActiveChart {
    let canvas = Arc::new(build_chart(&line_spec(), &yearly_table(40), f64::INFINITY).expect("chart builds"));
    let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.5));
    ActiveChart {
        label: "bench".into(),
        track_index: 0,
        quad: chart_world_quad(&pose, &Placement::default(), canvas.extent),
        canvas,
        opacity: 0.9,
        m_n: RigidTransform::identity(),
    }
}
