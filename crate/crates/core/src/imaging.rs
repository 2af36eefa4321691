//! Grayscale float images, pyramids, corner detection and NCC patch search.

use image::RgbImage;
use nalgebra::Point2;

/// Single-channel float image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "gray image buffer size");
        Self { width, height, data }
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let data = img
            .pixels()
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
            .collect();
        Self::new(img.width() as usize, img.height() as usize, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear lookup with clamped borders.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// 2x2 box downsample. Pixel centers map as `x_half = (x - 0.5) / 2`.
    pub fn half(&self) -> GrayImage {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (x0, y0) = (2 * x, 2 * y);
                let x1 = (x0 + 1).min(self.width - 1);
                let y1 = (y0 + 1).min(self.height - 1);
                data.push(0.25 * (self.at(x0, y0) + self.at(x1, y0) + self.at(x0, y1) + self.at(x1, y1)));
            }
        }
        GrayImage::new(w, h, data)
    }

    pub fn pyramid(&self, levels: usize) -> Vec<GrayImage> {
        let mut out = vec![self.clone()];
        while out.len() < levels.max(1) {
            let next = out.last().unwrap().half();
            out.push(next);
        }
        out
    }
}

/// Converts a full-resolution coordinate to pyramid level `level`.
pub fn to_level(p: f64, level: usize) -> f64 {
    let s = (1u32 << level) as f64;
    (p + 0.5) / s - 0.5
}

pub fn from_level(p: f64, level: usize) -> f64 {
    let s = (1u32 << level) as f64;
    (p + 0.5) * s - 0.5
}

/// Square patch sampled around a sub-pixel center, stored zero-mean and
/// unit-norm so matching reduces to a dot product.
#[derive(Debug, Clone)]
pub struct Patch {
    radius: usize,
    values: Vec<f32>,
}

impl Patch {
    /// Returns `None` when the patch leaves the image or is textureless.
    pub fn extract(img: &GrayImage, center: Point2<f64>, radius: usize) -> Option<Patch> {
        let r = radius as f64;
        if center.x - r < 0.0
            || center.y - r < 0.0
            || center.x + r > (img.width - 1) as f64
            || center.y + r > (img.height - 1) as f64
        {
            return None;
        }
        let side = 2 * radius + 1;
        let mut values = Vec::with_capacity(side * side);
        let integral = center.x.fract() == 0.0 && center.y.fract() == 0.0;
        for dy in -(radius as i64)..=radius as i64 {
            for dx in -(radius as i64)..=radius as i64 {
                let v = if integral {
                    img.at((center.x as i64 + dx) as usize, (center.y as i64 + dy) as usize)
                } else {
                    img.sample(center.x + dx as f64, center.y + dy as f64)
                };
                values.push(v);
            }
        }
        normalize(&mut values).then_some(Patch { radius, values })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// NCC against the integer-centered window at `(x, y)`; `None` if the window leaves the image.
    pub fn ncc_at(&self, img: &GrayImage, x: i64, y: i64) -> Option<f32> {
        let r = self.radius as i64;
        if x - r < 0 || y - r < 0 || x + r >= img.width as i64 || y + r >= img.height as i64 {
            return None;
        }
        let side = 2 * self.radius + 1;
        let n = (side * side) as f32;
        let mut sum = 0.0f32;
        let mut sum_sq = 0.0f32;
        let mut dot = 0.0f32;
        for (row, py) in ((y - r) as usize..=(y + r) as usize).enumerate() {
            let base = py * img.width + (x - r) as usize;
            let window = &img.data[base..base + side];
            let tmpl = &self.values[row * side..(row + 1) * side];
            for (a, b) in window.iter().zip(tmpl) {
                sum += a;
                sum_sq += a * a;
                dot += a * b;
            }
        }
        let var = sum_sq - sum * sum / n;
        if var <= 1e-10 {
            return Some(0.0);
        }
        // Template is zero-mean, so the window mean drops out of the dot product.
        Some(dot / var.sqrt())
    }
}

fn normalize(values: &mut [f32]) -> bool {
    let n = values.len() as f32;
    let mean = values.iter().sum::<f32>() / n;
    let mut norm = 0.0f32;
    for v in values.iter_mut() {
        *v -= mean;
        norm += *v * *v;
    }
    if norm <= 1e-8 {
        return false;
    }
    let inv = norm.sqrt().recip();
    values.iter_mut().for_each(|v| *v *= inv);
    true
}

/// Best integer match within `radius` of `center` plus a parabolic sub-pixel refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub position: Point2<f64>,
    pub score: f32,
    /// True when the integer peak sits on the search-window boundary.
    pub on_boundary: bool,
}

pub fn search_ncc(img: &GrayImage, patch: &Patch, center: (i64, i64), radius: i64) -> Option<Match> {
    let mut best: Option<(i64, i64, f32)> = None;
    for y in center.1 - radius..=center.1 + radius {
        for x in center.0 - radius..=center.0 + radius {
            if let Some(score) = patch.ncc_at(img, x, y) {
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((x, y, score));
                }
            }
        }
    }
    let (bx, by, score) = best?;
    let on_boundary = (bx - center.0).abs() == radius || (by - center.1).abs() == radius;
    let offset = |l: Option<f32>, r: Option<f32>| match (l, r) {
        (Some(l), Some(r)) => {
            let denom = l - 2.0 * score + r;
            if denom < -1e-9 {
                (0.5 * (l - r) / denom).clamp(-0.5, 0.5) as f64
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let dx = offset(patch.ncc_at(img, bx - 1, by), patch.ncc_at(img, bx + 1, by));
    let dy = offset(patch.ncc_at(img, bx, by - 1), patch.ncc_at(img, bx, by + 1));
    Some(Match { position: Point2::new(bx as f64 + dx, by as f64 + dy), score, on_boundary })
}

/// Shi-Tomasi corner response (smallest eigenvalue of the 5x5 structure tensor).
pub fn corner_response(img: &GrayImage) -> Vec<f32> {
    let (w, h) = (img.width, img.height);
    let mut gxx = vec![0.0f32; w * h];
    let mut gyy = vec![0.0f32; w * h];
    let mut gxy = vec![0.0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let gx = (img.at(x + 1, y - 1) + 2.0 * img.at(x + 1, y) + img.at(x + 1, y + 1))
                - (img.at(x - 1, y - 1) + 2.0 * img.at(x - 1, y) + img.at(x - 1, y + 1));
            let gy = (img.at(x - 1, y + 1) + 2.0 * img.at(x, y + 1) + img.at(x + 1, y + 1))
                - (img.at(x - 1, y - 1) + 2.0 * img.at(x, y - 1) + img.at(x + 1, y - 1));
            let i = y * w + x;
            gxx[i] = gx * gx / 64.0;
            gyy[i] = gy * gy / 64.0;
            gxy[i] = gx * gy / 64.0;
        }
    }
    let mut response = vec![0.0f32; w * h];
    for y in 3..h.saturating_sub(3) {
        for x in 3..w.saturating_sub(3) {
            let (mut a, mut b, mut c) = (0.0f32, 0.0f32, 0.0f32);
            for wy in y - 2..=y + 2 {
                for wx in x - 2..=x + 2 {
                    let i = wy * w + wx;
                    a += gxx[i];
                    b += gxy[i];
                    c += gyy[i];
                }
            }
            let tr = 0.5 * (a + c);
            let det = ((0.5 * (a - c)).powi(2) + b * b).sqrt();
            response[y * w + x] = tr - det;
        }
    }
    response
}

/// Spatially spread corners: the strongest response per grid cell, strongest first.
pub fn detect_corners(img: &GrayImage, max_features: usize, border: usize, accept: impl Fn(usize, usize) -> bool) -> Vec<Point2<f64>> {
    if max_features == 0 {
        return Vec::new();
    }
    let response = corner_response(img);
    let peak = response.iter().cloned().fold(0.0f32, f32::max);
    let threshold = (0.01 * peak).max(1e-6);
    let (w, h) = (img.width, img.height);
    let cell = (((w * h) as f64 / max_features as f64).sqrt().floor() as usize).max(4);
    let mut corners: Vec<(f32, usize, usize)> = Vec::new();
    let border = border.max(3);
    let mut cy = border;
    while cy < h.saturating_sub(border) {
        let mut cx = border;
        while cx < w.saturating_sub(border) {
            let mut best: Option<(f32, usize, usize)> = None;
            for y in cy..(cy + cell).min(h - border) {
                for x in cx..(cx + cell).min(w - border) {
                    let r = response[y * w + x];
                    if r > threshold && best.is_none_or(|(b, _, _)| r > b) && accept(x, y) {
                        best = Some((r, x, y));
                    }
                }
            }
            corners.extend(best);
            cx += cell;
        }
        cy += cell;
    }
    corners.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    corners.truncate(max_features);
    corners.into_iter().map(|(_, x, y)| Point2::new(x as f64, y as f64)).collect()
}
