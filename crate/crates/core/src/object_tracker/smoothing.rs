//! Temporal smoothing of depth signals and 3D trajectories.

use nalgebra::{Matrix3, Point3, Vector3};

use super::ObjectTrackerError;

/// Symmetric positive-definite band matrix; row `i` stores `A[i][i - k]` at offset `k`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    bandwidth: usize,
    n: usize,
    lower: Vec<f64>,
}

/// Lower band factor `L` of a [`BandedSpd`] with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    bandwidth: usize,
    n: usize,
    lower: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { bandwidth, n, lower: vec![0.0; n * (bandwidth + 1)] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        (hi - lo <= self.bandwidth).then(|| hi * (self.bandwidth + 1) + (hi - lo))
    }

    /// Adds `value` to `A[i][j]` (and its mirror). `|i - j|` must lie within the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let slot = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.bandwidth));
        self.lower[slot] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.lower[s])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bandwidth);
                let hi = (i + self.bandwidth).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Returns `None` if the matrix is not numerically positive definite.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let bw = self.bandwidth;
        let stride = bw + 1;
        let mut l = vec![0.0f64; self.lower.len()];
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..=i {
                let mut sum = self.lower[i * stride + (i - j)];
                for m in i.saturating_sub(bw)..j {
                    if j - m <= bw {
                        sum -= l[i * stride + (i - m)] * l[j * stride + (j - m)];
                    }
                }
                if i == j {
                    if !(sum > 0.0) {
                        return None;
                    }
                    l[i * stride] = sum.sqrt();
                } else {
                    l[i * stride + (i - j)] = sum / l[j * stride];
                }
            }
        }
        Some(BandedCholesky { bandwidth: bw, n: self.n, lower: l })
    }
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bandwidth);
        let stride = bw + 1;
        let l = &self.lower;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for j in i.saturating_sub(bw)..i {
                sum -= l[i * stride + (i - j)] * y[j];
            }
            y[i] = sum / l[i * stride];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for j in i + 1..(i + bw + 1).min(n) {
                sum -= l[j * stride + (j - i)] * x[j];
            }
            x[i] = sum / l[i * stride];
        }
        x
    }
}

/// Normal-equation matrix `μI + D₁ᵀD₁ + λD₂ᵀD₂` of the smoothing objective
///
/// `μ Σ‖x̂ₙ − xₙ‖² + Σ‖x̂ₙ₊₁ − x̂ₙ‖² + λ Σ‖x̂ₙ₊₂ − 2x̂ₙ₊₁ + x̂ₙ‖²`.
pub fn smoothing_system(n: usize, mu: f64, lambda: f64) -> BandedSpd {
    let mut a = BandedSpd::zeros(n, 2);
    for i in 0..n {
        a.add(i, i, mu);
    }
    for r in 0..n.saturating_sub(1) {
        a.add(r, r, 1.0);
        a.add(r + 1, r + 1, 1.0);
        a.add(r, r + 1, -1.0);
    }
    for r in 0..n.saturating_sub(2) {
        let coeffs = [1.0, -2.0, 1.0];
        for (p, cp) in coeffs.iter().enumerate() {
            for (q, cq) in coeffs.iter().enumerate().skip(p) {
                a.add(r + p, r + q, lambda * cp * cq);
            }
        }
    }
    a
}

/// Objective value of the smoothing problem for one coordinate sequence.
pub fn smoothing_objective(smoothed: &[f64], observed: &[f64], mu: f64, lambda: f64) -> f64 {
    let fidelity: f64 = smoothed.iter().zip(observed).map(|(a, b)| (a - b).powi(2)).sum();
    let velocity: f64 = smoothed.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let accel: f64 = smoothed.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2)).sum();
    mu * fidelity + velocity + lambda * accel
}

/// Solves the smoothing problem independently for each column of `sequence`.
pub fn smooth_columns<const D: usize>(sequence: &[[f64; D]], mu: f64, lambda: f64) -> Result<Vec<[f64; D]>, ObjectTrackerError> {
    if !(mu > 0.0 && mu.is_finite()) || !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ObjectTrackerError::InvalidConfig(format!("mu must be > 0 and lambda >= 0 (mu={mu}, lambda={lambda})")));
    }
    let n = sequence.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let factor = smoothing_system(n, mu, lambda)
        .cholesky()
        .ok_or_else(|| ObjectTrackerError::InvalidConfig("smoothing system is not positive definite".into()))?;
    let mut out = vec![[0.0; D]; n];
    for d in 0..D {
        let rhs: Vec<f64> = sequence.iter().map(|p| mu * p[d]).collect();
        for (o, v) in out.iter_mut().zip(factor.solve(&rhs)) {
            o[d] = v;
        }
    }
    Ok(out)
}

pub fn smooth_points(points: &[Point3<f64>], mu: f64, lambda: f64) -> Result<Vec<Point3<f64>>, ObjectTrackerError> {
    let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    Ok(smooth_columns(&raw, mu, lambda)?.into_iter().map(Point3::from).collect())
}

pub fn smooth_vectors(vectors: &[Vector3<f64>], mu: f64, lambda: f64) -> Result<Vec<Vector3<f64>>, ObjectTrackerError> {
    let raw: Vec<[f64; 3]> = vectors.iter().map(|v| [v.x, v.y, v.z]).collect();
    Ok(smooth_columns(&raw, mu, lambda)?.into_iter().map(Vector3::from).collect())
}

/// Sliding-window quadratic regression over time, evaluated at each frame.
///
/// Zero or non-finite samples are treated as missing. Windows are centered and
/// truncated at the sequence ends; when the sequence is shorter than the
/// window, one fit over the whole sequence is used for every frame. The fit
/// degree drops when a window holds fewer than three valid samples or when a
/// quadratic would extrapolate to a non-positive depth.
pub fn smooth_depth_quadratic(raw: &[f64], window: usize) -> Result<Vec<f64>, ObjectTrackerError> {
    if window < 3 || window % 2 == 0 {
        return Err(ObjectTrackerError::InvalidConfig(format!("depth window must be odd and >= 3, got {window}")));
    }
    if raw.is_empty() {
        return Err(ObjectTrackerError::AllSamplesInvalid { start: 0, end: 0 });
    }
    let n = raw.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let (lo, hi) = if n < window { (0, n - 1) } else { (i.saturating_sub(half), (i + half).min(n - 1)) };
            let samples: Vec<(f64, f64)> = (lo..=hi)
                .filter(|&j| raw[j].is_finite() && raw[j] > 0.0)
                .map(|j| (j as f64 - i as f64, raw[j]))
                .collect();
            if samples.is_empty() {
                return Err(ObjectTrackerError::AllSamplesInvalid { start: lo, end: hi });
            }
            let mut degree = (samples.len() - 1).min(2);
            loop {
                let value = polynomial_fit_at_zero(&samples, degree);
                match value {
                    Some(v) if v.is_finite() && v > 0.0 => return Ok(v),
                    _ if degree == 0 => unreachable!("mean of positive samples is positive"),
                    _ => degree -= 1,
                }
            }
        })
        .collect()
}

/// Least-squares polynomial of `degree` through `(t, y)` samples, evaluated at `t = 0`.
fn polynomial_fit_at_zero(samples: &[(f64, f64)], degree: usize) -> Option<f64> {
    let m = degree + 1;
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for &(t, y) in samples {
        let basis = [1.0, t, t * t];
        for r in 0..m {
            aty[r] += basis[r] * y;
            for c in 0..m {
                ata[(r, c)] += basis[r] * basis[c];
            }
        }
    }
    for r in m..3 {
        ata[(r, r)] = 1.0;
    }
    let coeffs = ata.cholesky()?.solve(&aty);
    Some(coeffs[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn dense_solution(observed: &[f64], mu: f64, lambda: f64) -> Vec<f64> {
        let n = observed.len();
        let mut a = DMatrix::<f64>::identity(n, n) * mu;
        for r in 0..n.saturating_sub(1) {
            let mut row = DVector::zeros(n);
            row[r] = -1.0;
            row[r + 1] = 1.0;
            a += &row * row.transpose();
        }
        for r in 0..n.saturating_sub(2) {
            let mut row = DVector::zeros(n);
            row[r] = 1.0;
            row[r + 1] = -2.0;
            row[r + 2] = 1.0;
            a += lambda * &row * row.transpose();
        }
        let b = DVector::from_iterator(n, observed.iter().map(|x| mu * x));
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn banded_matches_dense_on_parabola() {
        let observed = [0.0, 1.0, 4.0, 9.0, 16.0];
        let banded = smooth_columns(&observed.map(|x| [x]), 10.0, 10.0).unwrap();
        let dense = dense_solution(&observed, 10.0, 10.0);
        for (b, d) in banded.iter().zip(&dense) {
            assert!((b[0] - d).abs() < 1e-12, "{b:?} vs {d}");
        }
    }

    #[test]
    fn system_entries() {
        let a = smoothing_system(5, 10.0, 10.0);
        // interior row of μI + D1ᵀD1 + λD2ᵀD2
        assert_eq!(a.get(2, 2), 10.0 + 2.0 + 60.0);
        assert_eq!(a.get(2, 1), -1.0 - 40.0);
        assert_eq!(a.get(2, 0), 10.0);
        assert_eq!(a.get(0, 0), 10.0 + 1.0 + 10.0);
        assert_eq!(a.get(0, 3), 0.0);
    }

    #[test]
    fn single_and_two_frame_sequences() {
        assert_eq!(smooth_columns(&[[3.0]], 1.0, 5.0).unwrap(), vec![[3.0]]);
        let two = smooth_columns(&[[0.0], [1.0]], 1.0, 5.0).unwrap();
        // μ(x0)² + μ(x1−1)² + (x1−x0)² → x0 = 1/3, x1 = 2/3
        assert!((two[0][0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((two[1][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(smooth_columns(&[[0.0]], 0.0, 1.0).is_err());
        assert!(smooth_columns(&[[0.0]], 1.0, -1.0).is_err());
    }

    #[test]
    fn quadratic_window_validation() {
        assert!(smooth_depth_quadratic(&[1.0; 5], 4).is_err());
        assert!(smooth_depth_quadratic(&[1.0; 5], 1).is_err());
        assert!(matches!(
            smooth_depth_quadratic(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3),
            Err(ObjectTrackerError::AllSamplesInvalid { start: 1, end: 3 })
        ));
    }

    #[test]
    fn savitzky_golay_center_weight() {
        // 9-point quadratic smoothing has center weight 59/231.
        let mut raw = vec![2.0; 21];
        raw[10] = 4.0;
        let out = smooth_depth_quadratic(&raw, 9).unwrap();
        assert!((out[10] - (2.0 + 2.0 * 59.0 / 231.0)).abs() < 1e-12);
    }

    #[test]
    fn fills_missing_samples() {
        let raw = [2.0, 2.1, 0.0, 2.3, 2.4];
        let out = smooth_depth_quadratic(&raw, 3).unwrap();
        assert!((out[2] - 2.2).abs() < 1e-12);
        // lone valid sample falls back to a constant fit
        let sparse = [0.0, 0.0, 5.0, 0.0, 0.0];
        assert_eq!(smooth_depth_quadratic(&sparse, 5).unwrap(), vec![5.0; 5]);
    }
}
