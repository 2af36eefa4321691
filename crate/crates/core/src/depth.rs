//! Metric depth maps: ingestion from disk and sub-pixel sampling.
//!
//! Invalid or missing depth is encoded as exactly `0.0`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CBDM_MAGIC: &[u8; 4] = b"CBDM";

#[derive(Debug, thiserror::Error)]
pub enum DepthError {
    #[error("depth for frame {0} is missing")]
    MissingFrame(usize),
    #[error("depth map is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch { expected_w: u32, expected_h: u32, found_w: u32, found_h: u32 },
    #[error("corrupt depth file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("pixel ({u}, {v}) lies outside the depth map")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("no valid depth around pixel ({u}, {v})")]
    NoValidDepth { u: f64, v: f64 },
    #[error("invalid depth value {0}: must be finite and >= 0")]
    InvalidValue(f32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleStrategy {
    Nearest,
    #[default]
    BilinearValid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthSource {
    Ingested,
    Synthetic,
}

/// Row-major depth grid in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
    frame_index: usize,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>, frame_index: usize) -> Result<Self, DepthError> {
        if values.len() != width as usize * height as usize || width == 0 || height == 0 {
            return Err(DepthError::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                found_w: values.len() as u32,
                found_h: 1,
            });
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(DepthError::InvalidValue(*bad));
        }
        Ok(Self { width, height, values, frame_index })
    }

    pub fn from_fn(width: u32, height: u32, frame_index: usize, f: impl Fn(u32, u32) -> f32) -> Result<Self, DepthError> {
        let values = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, values, frame_index)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn valid_fraction(&self) -> f64 {
        self.values.iter().filter(|v| **v > 0.0).count() as f64 / self.values.len() as f64
    }

    pub fn sample(&self, pixel: &Point2<f64>, strategy: SampleStrategy) -> Result<f64, DepthError> {
        sample_depth(self, pixel, strategy)
    }

    pub fn write_cbdm<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(12 + 4 * self.values.len());
        buf.extend_from_slice(CBDM_MAGIC);
        buf.extend_from_slice(&self.width.to_le_bytes());
        buf.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        writer.write_all(&buf)
    }

    pub fn read_cbdm<R: Read>(mut reader: R, frame_index: usize, path: &Path) -> Result<Self, DepthError> {
        let corrupt = |reason: &str| DepthError::CorruptFile { path: path.to_path_buf(), reason: reason.to_string() };
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[..4] != CBDM_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let count = width as usize * height as usize;
        if width == 0 || height == 0 || bytes.len() != 12 + 4 * count {
            return Err(corrupt("payload size does not match header"));
        }
        let values = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(width, height, values, frame_index).map_err(|e| corrupt(&e.to_string()))
    }

    /// 16-bit grayscale PNG in millimeters; values are rounded and clamped to `u16`.
    pub fn write_png16(&self, path: &Path) -> Result<(), DepthError> {
        let data: Vec<u16> = self.values.iter().map(|v| (v * 1000.0).round().clamp(0.0, 65535.0) as u16).collect();
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width, self.height, data)
            .expect("buffer size matches dimensions");
        img.save(path).map_err(|e| DepthError::CorruptFile { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn read_png16(path: &Path, frame_index: usize) -> Result<Self, DepthError> {
        let corrupt = |reason: String| DepthError::CorruptFile { path: path.to_path_buf(), reason };
        let img = image::open(path).map_err(|e| corrupt(e.to_string()))?;
        let img = match img {
            image::DynamicImage::ImageLuma16(buf) => buf,
            other => return Err(corrupt(format!("expected 16-bit grayscale, found {:?}", other.color()))),
        };
        let (w, h) = img.dimensions();
        let values = img.into_raw().into_iter().map(|mm| mm as f32 / 1000.0).collect();
        Self::new(w, h, values, frame_index)
    }

    pub fn load(path: &Path, frame_index: usize) -> Result<Self, DepthError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("png") => Self::read_png16(path, frame_index),
            _ => {
                let file = std::fs::File::open(path)?;
                Self::read_cbdm(std::io::BufReader::new(file), frame_index, path)
            }
        }
    }
}

/// Samples depth at a sub-pixel location.
///
/// `BilinearValid` ignores zero (invalid) neighbors and renormalizes the
/// remaining weights; only neighbors with non-zero weight contribute.
pub fn sample_depth(map: &DepthMap, pixel: &Point2<f64>, strategy: SampleStrategy) -> Result<f64, DepthError> {
    let (u, v) = (pixel.x, pixel.y);
    let max_x = (map.width - 1) as f64;
    let max_y = (map.height - 1) as f64;
    if !(u >= 0.0 && v >= 0.0 && u <= max_x && v <= max_y) {
        return Err(DepthError::PixelOutOfBounds { u, v });
    }
    match strategy {
        SampleStrategy::Nearest => {
            let d = map.get(u.round() as u32, v.round() as u32);
            if d > 0.0 {
                Ok(d as f64)
            } else {
                Err(DepthError::NoValidDepth { u, v })
            }
        }
        SampleStrategy::BilinearValid => {
            let x0 = u.floor();
            let y0 = v.floor();
            let fx = u - x0;
            let fy = v - y0;
            let (x0, y0) = (x0 as u32, y0 as u32);
            let x1 = (x0 + 1).min(map.width - 1);
            let y1 = (y0 + 1).min(map.height - 1);
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ];
            let mut weight = 0.0;
            let mut acc = 0.0;
            for (x, y, w) in taps {
                let d = map.get(x, y);
                if w > 0.0 && d > 0.0 {
                    weight += w;
                    acc += w * d as f64;
                }
            }
            if weight > 0.0 {
                Ok(acc / weight)
            } else {
                Err(DepthError::NoValidDepth { u, v })
            }
        }
    }
}

/// Validated per-frame depth maps sharing one size.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSequence {
    maps: Vec<DepthMap>,
    source: DepthSource,
}

impl DepthSequence {
    pub fn new(maps: Vec<DepthMap>, source: DepthSource) -> Result<Self, DepthError> {
        let Some(first) = maps.first() else {
            return Err(DepthError::MissingFrame(0));
        };
        let (w, h) = (first.width, first.height);
        for m in &maps {
            if m.width != w || m.height != h {
                return Err(DepthError::DimensionMismatch {
                    expected_w: w,
                    expected_h: h,
                    found_w: m.width,
                    found_h: m.height,
                });
            }
        }
        Ok(Self { maps, source })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[DepthMap] {
        &self.maps
    }

    pub fn get(&self, frame: usize) -> Option<&DepthMap> {
        self.maps.get(frame)
    }

    pub fn source(&self) -> DepthSource {
        self.source
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.maps[0].width, self.maps[0].height)
    }

    /// Writes `depth_%06d.cbdm` files into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DepthError> {
        std::fs::create_dir_all(dir)?;
        for (n, map) in self.maps.iter().enumerate() {
            let file = std::fs::File::create(dir.join(depth_file_name(n, "cbdm")))?;
            map.write_cbdm(std::io::BufWriter::new(file))?;
        }
        Ok(())
    }
}

pub fn depth_file_name(frame: usize, extension: &str) -> String {
    format!("depth_{frame:06}.{extension}")
}

/// Loads `depth_%06d.cbdm` (or `.png`) for frames `0..expected_frames`.
pub fn load_depth_sequence(directory: &Path, expected_frames: usize) -> Result<DepthSequence, DepthError> {
    if expected_frames == 0 {
        return Err(DepthError::MissingFrame(0));
    }
    let paths: Vec<PathBuf> = (0..expected_frames)
        .map(|n| {
            let cbdm = directory.join(depth_file_name(n, "cbdm"));
            if cbdm.exists() {
                return Ok(cbdm);
            }
            let png = directory.join(depth_file_name(n, "png"));
            if png.exists() {
                Ok(png)
            } else {
                Err(DepthError::MissingFrame(n))
            }
        })
        .collect::<Result<_, _>>()?;
    let maps = paths
        .par_iter()
        .enumerate()
        .map(|(n, path)| DepthMap::load(path, n))
        .collect::<Result<Vec<_>, _>>()?;
    DepthSequence::new(maps, DepthSource::Ingested)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_2x2(values: [f32; 4]) -> DepthMap {
        DepthMap::new(2, 2, values.to_vec(), 0).unwrap()
    }

    #[test]
    fn nearest_on_integer_pixel() {
        let m = map_2x2([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(sample_depth(&m, &Point2::new(1.0, 1.0), SampleStrategy::Nearest).unwrap(), 4.0);
        assert_eq!(sample_depth(&m, &Point2::new(0.4, 0.6), SampleStrategy::Nearest).unwrap(), 3.0);
    }

    #[test]
    fn bilinear_midpoint() {
        let m = map_2x2([2.0, 4.0, 2.0, 4.0]);
        assert_eq!(sample_depth(&m, &Point2::new(0.5, 0.0), SampleStrategy::BilinearValid).unwrap(), 3.0);
        assert_eq!(sample_depth(&m, &Point2::new(0.5, 0.5), SampleStrategy::BilinearValid).unwrap(), 3.0);
    }

    #[test]
    fn bilinear_skips_invalid() {
        let m = map_2x2([2.0, 0.0, 0.0, 0.0]);
        assert_eq!(sample_depth(&m, &Point2::new(0.5, 0.5), SampleStrategy::BilinearValid).unwrap(), 2.0);
        let empty = map_2x2([0.0; 4]);
        assert!(matches!(
            sample_depth(&empty, &Point2::new(0.5, 0.5), SampleStrategy::BilinearValid),
            Err(DepthError::NoValidDepth { .. })
        ));
        assert!(matches!(
            sample_depth(&m, &Point2::new(1.5, 0.5), SampleStrategy::BilinearValid),
            Err(DepthError::PixelOutOfBounds { .. })
        ));
    }

    #[test]
    fn rejects_negative_and_nan() {
        assert!(DepthMap::new(1, 1, vec![-1.0], 0).is_err());
        assert!(DepthMap::new(1, 1, vec![f32::NAN], 0).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0], 0).is_err());
    }

    #[test]
    fn cbdm_layout() {
        let m = DepthMap::new(2, 1, vec![1.5, 0.0], 0).unwrap();
        let mut bytes = Vec::new();
        m.write_cbdm(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"CBDM");
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        let back = DepthMap::read_cbdm(bytes.as_slice(), 0, Path::new("x")).unwrap();
        assert_eq!(back, m);
        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        assert!(matches!(
            DepthMap::read_cbdm(corrupted.as_slice(), 0, Path::new("x")),
            Err(DepthError::CorruptFile { .. })
        ));
        assert!(DepthMap::read_cbdm(&bytes[..14], 0, Path::new("x")).is_err());
    }

    #[test]
    fn png16_millimeters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth_000000.png");
        let m = DepthMap::new(3, 1, vec![1.234, 0.0, 65.0], 0).unwrap();
        m.write_png16(&path).unwrap();
        let back = DepthMap::read_png16(&path, 0).unwrap();
        assert_eq!(back.values(), &[1.234, 0.0, 65.0]);
    }

    #[test]
    fn sequence_loading() {
        let dir = tempfile::tempdir().unwrap();
        let maps: Vec<_> = (0..10)
            .map(|n| DepthMap::from_fn(4, 3, n, |x, y| 1.0 + x as f32 + y as f32).unwrap())
            .collect();
        let seq = DepthSequence::new(maps, DepthSource::Synthetic).unwrap();
        seq.write_dir(dir.path()).unwrap();

        let loaded = load_depth_sequence(dir.path(), 10).unwrap();
        assert_eq!(loaded.len(), 10);
        assert_eq!(loaded.source(), DepthSource::Ingested);
        assert_eq!(loaded.maps()[3].values(), seq.maps()[3].values());

        std::fs::remove_file(dir.path().join(depth_file_name(9, "cbdm"))).unwrap();
        assert!(matches!(load_depth_sequence(dir.path(), 10), Err(DepthError::MissingFrame(9))));

        std::fs::write(dir.path().join(depth_file_name(9, "cbdm")), b"NOPE\0\0\0\0").unwrap();
        assert!(matches!(load_depth_sequence(dir.path(), 10), Err(DepthError::CorruptFile { .. })));

        let odd = DepthMap::from_fn(5, 3, 9, |_, _| 1.0).unwrap();
        odd.write_cbdm(std::fs::File::create(dir.path().join(depth_file_name(9, "cbdm"))).unwrap())
            .unwrap();
        assert!(matches!(load_depth_sequence(dir.path(), 10), Err(DepthError::DimensionMismatch { .. })));
    }
}
