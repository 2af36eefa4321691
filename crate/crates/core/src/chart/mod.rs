//! Declarative chart templates (bar, line, area, text, data) rendered to
//! premultiplied RGBA canvases at a data timestamp.

mod data;
pub mod raster;
mod temporal;

use image::RgbaImage;
use serde::de::IgnoredAny;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use raster::{text_width, Canvas, Color, GLYPH_H};

pub use data::{format_number, parse_dataset, parse_timestamp, Column, ColumnData, ColumnType, DataTable};
pub use temporal::{temporal_opacity, Enter, Exit, TemporalBehavior, TemporalState, TimeMap};

pub const PIXELS_PER_METER: f64 = 512.0;
pub const MAX_CANVAS_SIDE: u32 = 2048;

#[derive(Debug, thiserror::Error)]
pub enum ChartError {
    #[error("dataset has no records")]
    EmptyData,
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("cannot parse cell at row {row}, column {col}")]
    UnparseableCell { row: usize, col: usize },
    #[error("timestamps in column {column:?} decrease at row {row}")]
    NonMonotoneTimestamps { column: String, row: usize },
    #[error("malformed csv: {0}")]
    Malformed(String),
    #[error("mapping error: {0}")]
    MappingError(String),
    #[error("invalid style: {0}")]
    InvalidStyle(String),
    #[error("chart size must be positive, got {0:?}")]
    InvalidSize([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Bar,
    Line,
    Area,
    Text,
    Data,
}

/// Field→channel assignments by column name.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Mapping {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Panel {
    None,
    Solid,
    SemiTransparent { opacity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gridlines {
    pub horizontal: bool,
    pub vertical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    #[default]
    Default,
    Warm,
    Cool,
    Mono,
}

impl Palette {
    fn colors(self) -> [Color; 3] {
        match self {
            Palette::Default => [Color::rgb(66, 165, 245), Color::rgb(255, 167, 38), Color::rgb(102, 187, 106)],
            Palette::Warm => [Color::rgb(255, 112, 67), Color::rgb(255, 202, 40), Color::rgb(236, 64, 122)],
            Palette::Cool => [Color::rgb(38, 198, 218), Color::rgb(92, 107, 192), Color::rgb(102, 187, 106)],
            Palette::Mono => [Color::rgb(236, 239, 241), Color::rgb(176, 190, 197), Color::rgb(120, 144, 156)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pointer {
    #[default]
    None,
    Triangle,
    Line,
    BoundingBox,
}

/// Legends are never drawn. Any input value is accepted and ignored; the
/// field always serializes as `"off"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Legend;

impl Serialize for Legend {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("off")
    }
}

impl<'de> Deserialize<'de> for Legend {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        IgnoredAny::deserialize(d)?;
        Ok(Legend)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleSpec {
    pub panel: Panel,
    pub gridlines: Gridlines,
    pub axes: bool,
    pub title: bool,
    pub legend: Legend,
    pub palette: Palette,
    pub line_thickness: f64,
    pub pointer: Pointer,
}

impl Default for StyleSpec {
    fn default() -> Self {
        Self {
            panel: Panel::SemiTransparent { opacity: 0.7 },
            gridlines: Gridlines { horizontal: true, vertical: false },
            axes: true,
            title: true,
            legend: Legend,
            palette: Palette::Default,
            line_thickness: 3.0,
            pointer: Pointer::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: ChartKind,
    #[serde(default)]
    pub mapping: Mapping,
    #[serde(default)]
    pub style: StyleSpec,
    /// Width and height in meters once placed in the scene.
    pub size: [f64; 2],
}

impl ChartSpec {
    pub fn validate(&self, table: &DataTable) -> Result<(), ChartError> {
        if !self.size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(ChartError::InvalidSize(self.size));
        }
        if let Panel::SemiTransparent { opacity } = self.style.panel {
            if !(0.0..=1.0).contains(&opacity) {
                return Err(ChartError::InvalidStyle(format!("panel opacity {opacity} outside [0, 1]")));
            }
        }
        if !(self.style.line_thickness > 0.0) {
            return Err(ChartError::InvalidStyle("line_thickness must be positive".into()));
        }
        let m = &self.mapping;
        let required: &[(&str, &Option<String>)] = match self.kind {
            ChartKind::Bar | ChartKind::Line | ChartKind::Area => &[("x", &m.x), ("y", &m.y)],
            ChartKind::Text => &[("title", &m.title)],
            ChartKind::Data => &[("y", &m.y)],
        };
        for (channel, field) in required {
            if field.is_none() {
                return Err(ChartError::MappingError(format!("{:?} chart requires the {channel} channel", self.kind)));
            }
        }
        for (channel, field) in [("x", &m.x), ("y", &m.y), ("timestamp", &m.timestamp), ("title", &m.title)] {
            if let Some(name) = field {
                let column = table
                    .column(name)
                    .ok_or_else(|| ChartError::MappingError(format!("{channel} maps to unknown column {name:?}")))?;
                if matches!(channel, "y" | "timestamp") && column.numeric().is_none() {
                    return Err(ChartError::MappingError(format!("{channel} column {name:?} is not numeric")));
                }
                if channel == "timestamp" {
                    let v = column.numeric().unwrap_or_default();
                    if let Some(i) = v.windows(2).position(|w| w[1] < w[0]) {
                        return Err(ChartError::NonMonotoneTimestamps { column: name.clone(), row: i + 2 });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn canvas_size(&self) -> (u32, u32) {
        canvas_size(self.size)
    }
}

/// 512 px per meter, scaled down uniformly when a side would exceed 2048 px.
pub fn canvas_size(size: [f64; 2]) -> (u32, u32) {
    let cap = MAX_CANVAS_SIDE as f64;
    let scale = PIXELS_PER_METER.min(cap / size[0]).min(cap / size[1]);
    let side = |m: f64| ((m * scale).round() as u32).clamp(1, MAX_CANVAS_SIDE);
    (side(size[0]), side(size[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartCanvas {
    /// Premultiplied RGBA.
    pub raster: RgbaImage,
    /// Anchor point in canvas pixel coordinates.
    pub origin: [f64; 2],
    /// Physical width and height in meters.
    pub extent: [f64; 2],
    /// Number of data records drawn.
    pub marks: usize,
}

/// Number of records visible at data time `t`: the prefix with timestamp ≤ t,
/// or every record when no timestamp channel is mapped.
pub fn revealed_records(spec: &ChartSpec, table: &DataTable, t: f64) -> usize {
    match spec.mapping.timestamp.as_deref().and_then(|n| table.column(n)).and_then(Column::numeric) {
        Some(ts) => ts.partition_point(|v| *v <= t),
        None => table.row_count(),
    }
}

pub fn build_chart(spec: &ChartSpec, table: &DataTable, t: f64) -> Result<ChartCanvas, ChartError> {
    build_chart_unveiled(spec, table, t, 1.0)
}

/// As [`build_chart`], drawing only the first `ceil(unveil · n)` revealed records
/// (for text and data charts, that fraction of the characters).
pub fn build_chart_unveiled(spec: &ChartSpec, table: &DataTable, t: f64, unveil: f64) -> Result<ChartCanvas, ChartError> {
    if table.row_count() == 0 {
        return Err(ChartError::EmptyData);
    }
    spec.validate(table)?;
    let (w, h) = spec.canvas_size();
    let mut canvas = Canvas::new(w, h);
    let revealed = revealed_records(spec, table, t);
    let shown = (unveil.clamp(0.0, 1.0) * revealed as f64).ceil() as usize;
    let layout = Layout::new(spec, w as i64, h as i64);
    layout.draw_frame(&mut canvas, spec);
    let marks = match spec.kind {
        ChartKind::Bar | ChartKind::Line | ChartKind::Area => {
            let title = title_text(spec, table, revealed);
            draw_series(&mut canvas, &layout, spec, table, shown, title.as_deref())
        }
        ChartKind::Text | ChartKind::Data => draw_single_value(&mut canvas, &layout, spec, table, revealed, unveil),
    };
    Ok(ChartCanvas { raster: canvas.image, origin: [w as f64 / 2.0, h as f64 / 2.0], extent: spec.size, marks })
}

const PANEL_COLOR: Color = Color::rgb(24, 26, 31);
const INK: Color = Color::rgb(238, 240, 242);
const AXIS: Color = Color::rgb(190, 194, 200);

struct Layout {
    width: i64,
    /// Height of the panel area (the canvas minus the pointer strip).
    panel_height: i64,
    pad: i64,
    label_scale: i64,
    title_scale: i64,
}

impl Layout {
    fn new(spec: &ChartSpec, width: i64, height: i64) -> Self {
        let strip = match spec.style.pointer {
            Pointer::Triangle | Pointer::Line => (height as f64 * 0.12).round() as i64,
            Pointer::None | Pointer::BoundingBox => 0,
        };
        let panel_height = height - strip;
        let short = width.min(panel_height) as f64;
        Self {
            width,
            panel_height,
            pad: (short * 0.05).round().max(1.0) as i64,
            label_scale: ((panel_height as f64 * 0.045) / GLYPH_H as f64).round().max(1.0) as i64,
            title_scale: ((panel_height as f64 * 0.07) / GLYPH_H as f64).round().max(1.0) as i64,
        }
    }

    fn draw_frame(&self, canvas: &mut Canvas, spec: &ChartSpec) {
        let alpha = match spec.style.panel {
            Panel::None => 0.0,
            Panel::Solid => 1.0,
            Panel::SemiTransparent { opacity } => opacity as f32,
        };
        canvas.fill_rect(0, 0, self.width, self.panel_height, PANEL_COLOR.with_alpha(alpha));
        let accent = spec.style.palette.colors()[0];
        let cx = self.width as f64 / 2.0;
        let bottom = self.panel_height as f64;
        let tip = canvas.height() as f64 - 1.0;
        match spec.style.pointer {
            Pointer::None => {}
            Pointer::Triangle => {
                let half = (tip - bottom).max(1.0) * 0.6;
                canvas.triangle((cx - half, bottom), (cx + half, bottom), (cx, tip), accent);
            }
            Pointer::Line => canvas.line((cx, bottom), (cx, tip), spec.style.line_thickness, accent),
            Pointer::BoundingBox => {
                let t = spec.style.line_thickness.round().max(1.0) as i64;
                canvas.stroke_rect(0, 0, self.width, self.panel_height, t, accent);
            }
        }
    }
}

fn title_text(spec: &ChartSpec, table: &DataTable, revealed: usize) -> Option<String> {
    if !spec.style.title {
        return None;
    }
    match spec.mapping.title.as_deref().and_then(|n| table.column(n)) {
        Some(col) if revealed > 0 => Some(col.display(revealed - 1)),
        Some(_) => None,
        None => spec.mapping.y.clone(),
    }
}

/// Tick step of the form {1, 2, 5}·10ᵏ giving about five intervals.
fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let unit = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    unit * mag
}

/// Value range covering all records (so axes do not move during reveal),
/// expanded to whole ticks. Bars and areas always include zero.
fn value_range(values: &[f64], include_zero: bool) -> (f64, f64, f64) {
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if include_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        lo -= 1.0;
        hi += 1.0;
    }
    let step = nice_step(hi - lo);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

fn draw_series(
    canvas: &mut Canvas,
    layout: &Layout,
    spec: &ChartSpec,
    table: &DataTable,
    shown: usize,
    title: Option<&str>,
) -> usize {
    let style = &spec.style;
    let (Some(x_col), Some(y_col)) = (
        spec.mapping.x.as_deref().and_then(|n| table.column(n)),
        spec.mapping.y.as_deref().and_then(|n| table.column(n)),
    ) else {
        return 0;
    };
    let ys = y_col.numeric().unwrap_or_default();
    let n = table.row_count();
    let (pad, ls) = (layout.pad, layout.label_scale);

    let mut top = pad;
    if let Some(title) = title {
        canvas.text(title, pad, pad, layout.title_scale, INK);
        top += GLYPH_H * layout.title_scale + pad;
    }
    let (lo, hi, step) = value_range(ys, spec.kind != ChartKind::Line);
    let ticks: Vec<f64> = (0..).map(|i| lo + i as f64 * step).take_while(|v| *v <= hi + step * 1e-9).collect();
    let tick_labels: Vec<String> = ticks.iter().map(|v| format_number(*v)).collect();
    let label_w = tick_labels.iter().map(|s| text_width(s, ls)).max().unwrap_or(0);
    let left = if style.axes { pad + label_w + 2 * ls } else { pad };
    let right = layout.width - pad;
    let bottom = layout.panel_height - pad - if style.axes { GLYPH_H * ls + 2 * ls } else { 0 };
    if right <= left || bottom <= top {
        return 0;
    }
    let plot_h = (bottom - top) as f64;
    let y_px = |v: f64| bottom as f64 - (v - lo) / (hi - lo) * plot_h;

    let grid = AXIS.with_alpha(0.35);
    if style.gridlines.horizontal {
        for t in &ticks {
            let y = y_px(*t).round() as i64;
            canvas.fill_rect(left, y, right, y + 1, grid);
        }
    }
    let slot = (right - left) as f64 / n as f64;
    let x_numeric = x_col.numeric();
    let x_px = |i: usize| -> f64 {
        match x_numeric {
            Some(xs) if spec.kind != ChartKind::Bar && n > 1 => {
                let (xmin, xmax) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                if xmax > xmin {
                    left as f64 + (xs[i] - xmin) / (xmax - xmin) * (right - left) as f64
                } else {
                    left as f64 + (i as f64 + 0.5) * slot
                }
            }
            _ => left as f64 + (i as f64 + 0.5) * slot,
        }
    };
    if style.gridlines.vertical {
        for i in 0..n {
            let x = x_px(i).round() as i64;
            canvas.fill_rect(x, top, x + 1, bottom, grid);
        }
    }
    if style.axes {
        canvas.fill_rect(left - 1, top, left, bottom + 1, AXIS);
        canvas.fill_rect(left - 1, bottom, right, bottom + 1, AXIS);
        for (t, label) in ticks.iter().zip(&tick_labels) {
            let y = y_px(*t).round() as i64 - GLYPH_H * ls / 2;
            canvas.text(label, left - 2 * ls - text_width(label, ls), y, ls, AXIS);
        }
        let label_y = bottom + 2 * ls;
        let x_label = |i: usize| x_col.display(i);
        if spec.kind == ChartKind::Bar && (0..n).all(|i| text_width(&x_label(i), ls) as f64 <= slot) {
            for i in 0..n {
                let s = x_label(i);
                canvas.text(&s, x_px(i).round() as i64 - text_width(&s, ls) / 2, label_y, ls, AXIS);
            }
        } else {
            let first = x_label(0);
            let last = x_label(n - 1);
            canvas.text(&first, left, label_y, ls, AXIS);
            canvas.text(&last, right - text_width(&last, ls), label_y, ls, AXIS);
        }
    }

    let color = style.palette.colors()[0];
    let shown = shown.min(n);
    match spec.kind {
        ChartKind::Bar => {
            let bar_w = (slot * 0.7).round().max(1.0) as i64;
            let base = y_px(0.0).round() as i64;
            for (i, v) in ys.iter().enumerate().take(shown) {
                let x0 = (left as f64 + i as f64 * slot + (slot - bar_w as f64) / 2.0).round() as i64;
                canvas.fill_rect(x0, y_px(*v).round() as i64, x0 + bar_w, base, color);
            }
        }
        ChartKind::Line | ChartKind::Area => {
            let points: Vec<(f64, f64)> = (0..shown).map(|i| (x_px(i), y_px(ys[i]))).collect();
            if spec.kind == ChartKind::Area {
                canvas.fill_under(&points, y_px(0f64.clamp(lo, hi)), color.with_alpha(0.5));
            }
            canvas.polyline(&points, style.line_thickness, color);
        }
        ChartKind::Text | ChartKind::Data => unreachable!("single-value kinds are drawn separately"),
    }
    shown
}

fn draw_single_value(
    canvas: &mut Canvas,
    layout: &Layout,
    spec: &ChartSpec,
    table: &DataTable,
    revealed: usize,
    unveil: f64,
) -> usize {
    if revealed == 0 {
        return 0;
    }
    let row = revealed - 1;
    let (field, caption) = match spec.kind {
        ChartKind::Text => (spec.mapping.title.as_deref(), None),
        _ => (spec.mapping.y.as_deref(), spec.mapping.y.as_deref().filter(|_| spec.style.title)),
    };
    let Some(col) = field.and_then(|n| table.column(n)) else {
        return 0;
    };
    let full = col.display(row);
    let count = full.chars().count();
    let text: String = full.chars().take((unveil.clamp(0.0, 1.0) * count as f64).ceil() as usize).collect();
    let pad = layout.pad;
    let mut top = pad;
    if let Some(caption) = caption {
        canvas.text(caption, pad, pad, layout.title_scale, INK);
        top += GLYPH_H * layout.title_scale + pad;
    }
    let avail_w = layout.width - 2 * pad;
    let avail_h = layout.panel_height - top - pad;
    let unit = text_width(&full, 1).max(1);
    let scale = (avail_w / unit).min(avail_h / GLYPH_H).max(1);
    let x = (layout.width - text_width(&full, scale)) / 2;
    let y = top + (avail_h - GLYPH_H * scale) / 2;
    let ink = if spec.kind == ChartKind::Data { spec.style.palette.colors()[0] } else { INK };
    canvas.text(&text, x, y, scale, ink);
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar_spec() -> ChartSpec {
        ChartSpec {
            kind: ChartKind::Bar,
            mapping: Mapping { x: Some("k".into()), y: Some("v".into()), ..Default::default() },
            style: StyleSpec {
                panel: Panel::None,
                gridlines: Gridlines { horizontal: false, vertical: false },
                axes: false,
                title: false,
                ..Default::default()
            },
            size: [0.6, 0.4],
        }
    }

    /// Height in pixels of the opaque run in column `x`.
    fn column_height(img: &RgbaImage, x: u32) -> u32 {
        (0..img.height()).filter(|y| img.get_pixel(x, *y).0[3] == 255).count() as u32
    }

    #[test]
    fn bar_heights_are_proportional() {
        let table = parse_dataset("k,v\na,10\nb,20\nc,40\n").unwrap();
        let c = build_chart(&bar_spec(), &table, 0.0).unwrap();
        let (w, _) = c.raster.dimensions();
        let slot = w as f64 / 3.0;
        let heights: Vec<f64> = (0..3).map(|i| column_height(&c.raster, ((i as f64 + 0.5) * slot) as u32) as f64).collect();
        for (h, v) in heights.iter().zip([10.0, 20.0, 40.0]) {
            assert!((h - heights[2] * v / 40.0).abs() <= 1.0, "{heights:?}");
        }
        assert_eq!(c.marks, 3);
    }

    #[test]
    fn default_style_matches_corpus_findings() {
        let s = StyleSpec::default();
        assert_eq!(s.panel, Panel::SemiTransparent { opacity: 0.7 });
        assert_eq!(s.gridlines, Gridlines { horizontal: true, vertical: false });
        assert!(s.axes && s.title);
        let json = serde_json::to_value(s).unwrap();
        assert_eq!(json["legend"], "off");
        let on: StyleSpec = serde_json::from_str(r#"{"legend": "on"}"#).unwrap();
        assert_eq!(on.legend, Legend);
    }

    #[test]
    fn canvas_resolution() {
        assert_eq!(canvas_size([1.0, 0.5]), (512, 256));
        assert_eq!(canvas_size([8.0, 2.0]), (2048, 512));
    }

    #[test]
    fn reveal_before_first_timestamp_draws_no_marks() {
        let table = parse_dataset("t,v\n1,5\n2,7\n3,6\n").unwrap();
        let mut spec = bar_spec();
        spec.kind = ChartKind::Line;
        spec.mapping.x = Some("t".into());
        spec.mapping.timestamp = Some("t".into());
        spec.style = StyleSpec::default();
        let empty = build_chart(&spec, &table, 0.5).unwrap();
        assert_eq!(empty.marks, 0);
        assert_eq!(build_chart(&spec, &table, 2.0).unwrap().marks, 2);
        assert!(empty.raster.pixels().any(|p| p.0[3] > 0), "panel and axes are still drawn");
        assert_eq!(revealed_records(&spec, &table, 2.5), 2);
    }

    #[test]
    fn mapping_errors() {
        let table = parse_dataset("k,v\na,1\n").unwrap();
        let mut spec = bar_spec();
        spec.mapping.y = Some("missing".into());
        assert!(matches!(build_chart(&spec, &table, 0.0), Err(ChartError::MappingError(_))));
        spec.mapping.y = None;
        assert!(matches!(build_chart(&spec, &table, 0.0), Err(ChartError::MappingError(_))));
        spec.mapping.y = Some("k".into());
        assert!(matches!(build_chart(&spec, &table, 0.0), Err(ChartError::MappingError(_))));
        let text = ChartSpec { kind: ChartKind::Text, mapping: Mapping::default(), style: StyleSpec::default(), size: [1.0, 0.2] };
        assert!(matches!(build_chart(&text, &table, 0.0), Err(ChartError::MappingError(_))));
    }

    #[test]
    fn text_and_data_charts() {
        let table = parse_dataset("t,headline,score\n0,HELLO,3\n1,WORLD,42\n").unwrap();
        let mapping = Mapping { title: Some("headline".into()), y: Some("score".into()), timestamp: Some("t".into()), x: None };
        let text = ChartSpec { kind: ChartKind::Text, mapping: mapping.clone(), style: StyleSpec::default(), size: [1.0, 0.25] };
        assert_eq!(build_chart(&text, &table, 1.0).unwrap().marks, 1);
        assert_eq!(build_chart(&text, &table, -1.0).unwrap().marks, 0);
        let half = build_chart_unveiled(&text, &table, 1.0, 0.5).unwrap();
        assert_ne!(half.raster, build_chart(&text, &table, 1.0).unwrap().raster);
        let data = ChartSpec { kind: ChartKind::Data, mapping, style: StyleSpec::default(), size: [0.5, 0.5] };
        assert_eq!(build_chart(&data, &table, 5.0).unwrap().marks, 1);
    }

    #[test]
    fn deterministic_raster() {
        let table = parse_dataset("x,y\n1,3\n2,-1\n3,4\n4,2\n").unwrap();
        let spec = ChartSpec {
            kind: ChartKind::Area,
            mapping: Mapping { x: Some("x".into()), y: Some("y".into()), ..Default::default() },
            style: StyleSpec { pointer: Pointer::Triangle, ..Default::default() },
            size: [0.8, 0.5],
        };
        let a = build_chart(&spec, &table, 0.0).unwrap();
        let b = build_chart(&spec, &table, 0.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.raster.dimensions(), (410, 256));
        assert_eq!(a.origin, [205.0, 128.0]);
    }

    #[test]
    fn nice_ticks() {
        assert_eq!(nice_step(40.0), 10.0);
        assert_eq!(nice_step(7.0), 2.0);
        assert_eq!(value_range(&[10.0, 20.0, 40.0], true), (0.0, 40.0, 10.0));
    }
}
