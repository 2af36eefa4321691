//! Minimal premultiplied-RGBA drawing: rectangles, anti-aliased strokes,
//! column fills and a 5×7 bitmap font.

use image::{Rgba, RgbaImage};

/// Straight-alpha color with alpha in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub a: f32,
}

impl Color {
    pub const fn rgb(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b, a: 1.0 }
    }

    pub fn with_alpha(self, a: f32) -> Self {
        Self { a: a.clamp(0.0, 1.0), ..self }
    }
}

pub struct Canvas {
    pub image: RgbaImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Self { image: RgbaImage::new(width, height) }
    }

    pub fn width(&self) -> i64 {
        self.image.width() as i64
    }

    pub fn height(&self) -> i64 {
        self.image.height() as i64
    }

    /// Source-over blend of `color` scaled by `coverage` into a premultiplied pixel.
    pub fn blend(&mut self, x: i64, y: i64, color: Color, coverage: f32) {
        if x < 0 || y < 0 || x >= self.width() || y >= self.height() {
            return;
        }
        let a = color.a * coverage.clamp(0.0, 1.0);
        if a <= 0.0 {
            return;
        }
        let px = self.image.get_pixel_mut(x as u32, y as u32);
        let src = [color.r as f32 * a, color.g as f32 * a, color.b as f32 * a, 255.0 * a];
        let Rgba(dst) = *px;
        let mut out = [0u8; 4];
        for c in 0..4 {
            out[c] = (src[c] + dst[c] as f32 * (1.0 - a)).round().clamp(0.0, 255.0) as u8;
        }
        *px = Rgba(out);
    }

    /// Fills pixels whose centers lie in `[x0, x1) × [y0, y1)`.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: Color) {
        let (xa, xb) = (x0.min(x1).max(0), x0.max(x1).min(self.width()));
        let (ya, yb) = (y0.min(y1).max(0), y0.max(y1).min(self.height()));
        for y in ya..yb {
            for x in xa..xb {
                self.blend(x, y, color, 1.0);
            }
        }
    }

    pub fn stroke_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, thickness: i64, color: Color) {
        let t = thickness.max(1);
        self.fill_rect(x0, y0, x1, y0 + t, color);
        self.fill_rect(x0, y1 - t, x1, y1, color);
        self.fill_rect(x0, y0 + t, x0 + t, y1 - t, color);
        self.fill_rect(x1 - t, y0 + t, x1, y1 - t, color);
    }

    /// Anti-aliased thick segment; coverage falls off over one pixel at the edge.
    pub fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), thickness: f64, color: Color) {
        let half = (thickness / 2.0).max(0.5);
        let pad = half + 1.0;
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len2 = dx * dx + dy * dy;
        let ya = (y0.min(y1) - pad).floor() as i64;
        let yb = (y0.max(y1) + pad).ceil() as i64;
        let xa = (x0.min(x1) - pad).floor() as i64;
        let xb = (x0.max(x1) + pad).ceil() as i64;
        for y in ya..=yb {
            for x in xa..=xb {
                let (px, py) = (x as f64, y as f64);
                let s = if len2 > 0.0 { (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (cx, cy) = (x0 + s * dx, y0 + s * dy);
                let dist = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
                let coverage = (half + 0.5 - dist).clamp(0.0, 1.0);
                if coverage > 0.0 {
                    self.blend(x, y, color, coverage as f32);
                }
            }
        }
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], thickness: f64, color: Color) {
        if let [only] = points {
            self.line(*only, *only, thickness, color);
        }
        // Coverage is accumulated per segment; joints get a slightly heavier blend,
        // which is invisible at chart line widths.
        for w in points.windows(2) {
            self.line(w[0], w[1], thickness, color);
        }
    }

    /// Fills the region between a piecewise-linear curve and `baseline`.
    pub fn fill_under(&mut self, points: &[(f64, f64)], baseline: f64, color: Color) {
        for w in points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            let xa = x0.round() as i64;
            let xb = x1.round() as i64;
            for x in xa..xb {
                let s = if x1 > x0 { ((x as f64 - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
                let y = y0 + s * (y1 - y0);
                let (top, bottom) = if y < baseline { (y, baseline) } else { (baseline, y) };
                self.fill_rect(x, top.round() as i64, x + 1, bottom.round() as i64, color);
            }
        }
    }

    pub fn triangle(&mut self, a: (f64, f64), b: (f64, f64), c: (f64, f64), color: Color) {
        let xa = a.0.min(b.0).min(c.0).floor() as i64;
        let xb = a.0.max(b.0).max(c.0).ceil() as i64;
        let ya = a.1.min(b.1).min(c.1).floor() as i64;
        let yb = a.1.max(b.1).max(c.1).ceil() as i64;
        let edge = |p: (f64, f64), q: (f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        let area = edge(a, b, c.0, c.1);
        if area == 0.0 {
            return;
        }
        for y in ya..=yb {
            for x in xa..=xb {
                let (px, py) = (x as f64, y as f64);
                let w = [edge(b, c, px, py), edge(c, a, px, py), edge(a, b, px, py)];
                if w.iter().all(|v| v * area >= 0.0) {
                    self.blend(x, y, color, 1.0);
                }
            }
        }
    }

    /// Draws `text` with its top-left corner at `(x, y)`; each font pixel is `scale` canvas pixels.
    pub fn text(&mut self, text: &str, x: i64, y: i64, scale: i64, color: Color) {
        let mut cx = x;
        for ch in text.chars() {
            let rows = glyph(ch);
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..GLYPH_W {
                    if row & (1 << (GLYPH_W - 1 - rx)) != 0 {
                        let px = cx + rx as i64 * scale;
                        let py = y + ry as i64 * scale;
                        self.fill_rect(px, py, px + scale, py + scale, color);
                    }
                }
            }
            cx += ADVANCE * scale;
        }
    }
}

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: i64 = 7;
/// Horizontal advance per character in font pixels (glyph plus one column gap).
pub const ADVANCE: i64 = 6;

pub fn text_width(text: &str, scale: i64) -> i64 {
    let n = text.chars().count() as i64;
    if n == 0 {
        0
    } else {
        (n * ADVANCE - 1) * scale
    }
}

fn glyph(ch: char) -> [u8; 7] {
    let rows: [&str; 7] = match ch.to_ascii_uppercase() {
        '0' => [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
        '1' => ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
        '2' => [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
        '3' => ["####.", "....#", "....#", ".###.", "....#", "....#", "####."],
        '4' => ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
        '5' => ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
        '6' => [".###.", "#....", "#....", "####.", "#...#", "#...#", ".###."],
        '7' => ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
        '8' => [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
        '9' => [".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."],
        'A' => [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'B' => ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
        'C' => [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
        'D' => ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
        'E' => ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
        'F' => ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
        'G' => [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
        'H' => ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'I' => [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
        'J' => ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."],
        'K' => ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
        'L' => ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
        'M' => ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
        'N' => ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
        'O' => [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'P' => ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
        'Q' => [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
        'R' => ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
        'S' => [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
        'T' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
        'U' => ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'V' => ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
        'W' => ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."],
        'X' => ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
        'Y' => ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
        'Z' => ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
        '.' => [".....", ".....", ".....", ".....", ".....", ".##..", ".##.."],
        ',' => [".....", ".....", ".....", ".....", ".##..", "..#..", ".#..."],
        ':' => [".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."],
        '-' => [".....", ".....", ".....", "#####", ".....", ".....", "....."],
        '+' => [".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."],
        '%' => ["##...", "##..#", "...#.", "..#..", ".#...", "#..##", "...##"],
        '/' => [".....", "....#", "...#.", "..#..", ".#...", "#....", "....."],
        '(' => ["...#.", "..#..", ".#...", ".#...", ".#...", "..#..", "...#."],
        ')' => [".#...", "..#..", "...#.", "...#.", "...#.", "..#..", ".#..."],
        '\'' => ["..#..", "..#..", ".#...", ".....", ".....", ".....", "....."],
        '!' => ["..#..", "..#..", "..#..", "..#..", "..#..", ".....", "..#.."],
        '?' => [".###.", "#...#", "....#", "...#.", "..#..", ".....", "..#.."],
        '#' => [".#.#.", ".#.#.", "#####", ".#.#.", "#####", ".#.#.", ".#.#."],
        '$' => ["..#..", ".####", "#.#..", ".###.", "..#.#", "####.", "..#.."],
        '_' => [".....", ".....", ".....", ".....", ".....", ".....", "#####"],
        ' ' => ["....."; 7],
        _ => ["#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"],
    };
    rows.map(|r| r.bytes().fold(0u8, |acc, b| (acc << 1) | u8::from(b == b'#')))
}
