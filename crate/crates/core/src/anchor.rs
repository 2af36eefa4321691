use nalgebra::Point2;
use serde::{Deserialize, Serialize};

/// Which pipeline consumes an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackingMode {
    /// Fixed to a static scene location in world coordinates.
    #[default]
    Camera,
    /// Follows a moving target in per-frame camera coordinates.
    Object,
}

/// A user-picked pixel that a chart is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    #[serde(with = "point2_array")]
    pub pixel: Point2<f64>,
    #[serde(default)]
    pub frame: usize,
    #[serde(default)]
    pub mode: TrackingMode,
}

impl AnchorSpec {
    pub fn new(u: f64, v: f64, frame: usize, mode: TrackingMode) -> Self {
        Self { pixel: Point2::new(u, v), frame, mode }
    }
}

pub(crate) mod point2_array {
    use nalgebra::Point2;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Point2<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([p.x, p.y])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Point2<f64>, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(serde::de::Error::custom("pixel coordinates must be finite"));
        }
        Ok(Point2::new(x, y))
    }
}
