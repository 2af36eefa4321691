use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enter {
    #[default]
    Fade,
    Unveil,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exit {
    #[default]
    Fade,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalBehavior {
    pub enter: Enter,
    pub exit: Exit,
    pub enter_frames: u32,
    pub exit_frames: u32,
}

impl Default for TemporalBehavior {
    fn default() -> Self {
        Self { enter: Enter::Fade, exit: Exit::Fade, enter_frames: 15, exit_frames: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalState {
    pub opacity: f64,
    /// Fraction of the chart's records (or characters) revealed.
    pub unveil: f64,
}

/// Opacity and unveil progress of a chart active over the inclusive frame range `segment`.
pub fn temporal_opacity(behavior: &TemporalBehavior, segment: (usize, usize), frame: usize) -> TemporalState {
    let (start, end) = segment;
    if frame < start || frame > end {
        return TemporalState { opacity: 0.0, unveil: 0.0 };
    }
    let ramp_in = if behavior.enter == Enter::None || behavior.enter_frames == 0 {
        1.0
    } else {
        ((frame - start) as f64 / behavior.enter_frames as f64).min(1.0)
    };
    let ramp_out = if behavior.exit == Exit::None || behavior.exit_frames == 0 {
        1.0
    } else {
        ((end - frame) as f64 / behavior.exit_frames as f64).min(1.0)
    };
    let fade_in = if behavior.enter == Enter::Fade { ramp_in } else { 1.0 };
    let unveil = if behavior.enter == Enter::Unveil { ramp_in } else { 1.0 };
    TemporalState { opacity: fade_in * ramp_out, unveil }
}

/// Linear map from video frame to data time: `t = t0 + (frame − f0)·rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub t0: f64,
    pub f0: f64,
    pub rate: f64,
}

impl TimeMap {
    pub fn data_time(&self, frame: usize) -> f64 {
        self.t0 + (frame as f64 - self.f0) * self.rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fade(enter_frames: u32, exit_frames: u32) -> TemporalBehavior {
        TemporalBehavior { enter: Enter::Fade, exit: Exit::Fade, enter_frames, exit_frames }
    }

    #[test]
    fn outside_segment_is_transparent() {
        let s = temporal_opacity(&fade(10, 10), (20, 80), 19);
        assert_eq!((s.opacity, s.unveil), (0.0, 0.0));
        assert_eq!(temporal_opacity(&fade(10, 10), (20, 80), 81).opacity, 0.0);
    }

    #[test]
    fn ramps() {
        let b = fade(10, 4);
        assert_eq!(temporal_opacity(&b, (20, 80), 25).opacity, 0.5);
        assert_eq!(temporal_opacity(&b, (20, 80), 50).opacity, 1.0);
        assert_eq!(temporal_opacity(&b, (20, 80), 78).opacity, 0.5);
        assert_eq!(temporal_opacity(&b, (20, 80), 80).opacity, 0.0);
    }

    #[test]
    fn unveil_keeps_full_opacity() {
        let b = TemporalBehavior { enter: Enter::Unveil, exit: Exit::None, enter_frames: 8, exit_frames: 0 };
        let s = temporal_opacity(&b, (0, 30), 2);
        assert_eq!((s.opacity, s.unveil), (1.0, 0.25));
        assert_eq!(temporal_opacity(&b, (0, 30), 30).opacity, 1.0);
    }

    #[test]
    fn time_map() {
        let m = TimeMap { t0: 2000.0, f0: 30.0, rate: 0.5 };
        assert_eq!(m.data_time(30), 2000.0);
        assert_eq!(m.data_time(10), 1990.0);
    }
}
