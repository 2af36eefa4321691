//! Single-point 2D tracking: pyramidal NCC template matching or ingestion of
//! an external tracker's output.

use std::path::PathBuf;

use image::RgbImage;
use nalgebra::Point2;
use rayon::prelude::*;

use super::{ObjectTrackerError, Track2D};
use crate::anchor::AnchorSpec;
use crate::imaging::{from_level, search_ncc, to_level, GrayImage, Patch};

const LEVELS: usize = 3;
const TEMPLATE_RADII: [usize; LEVELS] = [7, 5, 4];
/// Search radius at the coarsest level, in coarse pixels.
const COARSE_SEARCH: i64 = 4;
const REFINE_SEARCH: i64 = 2;
const MIN_CONFIDENCE: f32 = 0.75;
/// Below this score the template is re-extracted early, so gradual scale and
/// appearance changes do not accumulate until the target is lost.
const REFRESH_CONFIDENCE: f32 = 0.9;
pub const TEMPLATE_REFRESH_FRAMES: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub enum TrackerMode {
    Builtin,
    /// `frame,u,v,visible` CSV produced by an external tracker.
    Ingest(PathBuf),
}

pub fn track_point_2d(frames: &[RgbImage], seed: AnchorSpec, mode: &TrackerMode) -> Result<Track2D, ObjectTrackerError> {
    match mode {
        TrackerMode::Builtin => track_point_builtin(frames, seed),
        TrackerMode::Ingest(path) => {
            let file = std::fs::File::open(path)?;
            Track2D::read_csv(std::io::BufReader::new(file), seed, frames.len())
        }
    }
}

struct Template {
    levels: Vec<Option<Patch>>,
}

impl Template {
    fn extract(pyramid: &[GrayImage], at: Point2<f64>) -> Self {
        let levels = pyramid
            .iter()
            .enumerate()
            .map(|(l, img)| {
                let p = Point2::new(to_level(at.x, l), to_level(at.y, l));
                Patch::extract(img, p, TEMPLATE_RADII[l])
            })
            .collect();
        Self { levels }
    }

    /// Coarse-to-fine search around `predicted`; returns position and level-0 score.
    fn locate(&self, pyramid: &[GrayImage], predicted: Point2<f64>) -> Option<(Point2<f64>, f32)> {
        let mut estimate = predicted;
        let mut fine = None;
        for l in (0..LEVELS).rev() {
            let Some(patch) = &self.levels[l] else { continue };
            let radius = if l == LEVELS - 1 { COARSE_SEARCH } else { REFINE_SEARCH };
            let center = (to_level(estimate.x, l).round() as i64, to_level(estimate.y, l).round() as i64);
            let m = search_ncc(&pyramid[l], patch, center, radius)?;
            estimate = Point2::new(from_level(m.position.x, l), from_level(m.position.y, l));
            if l == 0 {
                fine = Some(m.score);
            }
        }
        fine.map(|score| (estimate, score))
    }
}

fn track_direction(
    pyramids: &[Vec<GrayImage>],
    order: impl Iterator<Item = usize>,
    seed: Point2<f64>,
    seed_frame: usize,
    points: &mut [Point2<f64>],
    visible: &mut [bool],
) {
    let mut template = Template::extract(&pyramids[seed_frame], seed);
    let mut template_age = 0;
    let mut last = seed;
    let mut velocity = nalgebra::Vector2::zeros();
    for n in order {
        template_age += 1;
        let found = template
            .locate(&pyramids[n], last + velocity)
            .or_else(|| template.locate(&pyramids[n], last))
            .filter(|(_, score)| *score >= MIN_CONFIDENCE);
        match found {
            Some((p, score)) => {
                velocity = p - last;
                last = p;
                points[n] = p;
                visible[n] = true;
                if template_age >= TEMPLATE_REFRESH_FRAMES || score < REFRESH_CONFIDENCE {
                    template = Template::extract(&pyramids[n], p);
                    template_age = 0;
                }
            }
            None => {
                velocity = nalgebra::Vector2::zeros();
                points[n] = last;
                visible[n] = false;
            }
        }
    }
}

/// 3-level pyramidal NCC template tracker. Tracks forward and backward from
/// the seed frame; the template is re-extracted every
/// [`TEMPLATE_REFRESH_FRAMES`] tracked frames, or sooner when the match score drops.
pub fn track_point_builtin(frames: &[RgbImage], seed: AnchorSpec) -> Result<Track2D, ObjectTrackerError> {
    let Some(first) = frames.first() else {
        return Err(ObjectTrackerError::NoFrames);
    };
    let (w, h) = first.dimensions();
    let p = seed.pixel;
    if seed.frame >= frames.len() || !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64) {
        return Err(ObjectTrackerError::SeedOutOfBounds { u: p.x, v: p.y });
    }
    let pyramids: Vec<Vec<GrayImage>> = frames.par_iter().map(|f| GrayImage::from_rgb(f).pyramid(LEVELS)).collect();
    let n = frames.len();
    let mut points = vec![p; n];
    let mut visible = vec![false; n];
    visible[seed.frame] = true;
    track_direction(&pyramids, seed.frame + 1..n, p, seed.frame, &mut points, &mut visible);
    track_direction(&pyramids, (0..seed.frame).rev(), p, seed.frame, &mut points, &mut visible);
    Ok(Track2D { points, visible, seed })
}
