//! Homography estimation: normalized DLT and a RANSAC wrapper.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MatchSet, VisionError};
use crate::homography_task::Homography;

/// Relative singular-value gap below which the DLT system is treated as
/// having more than a one-dimensional null space.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    pub threshold_px: f64,
    pub confidence: f64,
    pub max_iters: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { threshold_px: 2.0, confidence: 0.995, max_iters: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn conditioning(points: &[[f64; 2]]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0] / n, y + p[1] / n));
    let mean_dist = points.iter().map(|p| (p[0] - mx).hypot(p[1] - my)).sum::<f64>() / n;
    let s = if mean_dist > 1e-300 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = t * Vector3::new(p[0], p[1], 1.0);
    [v.x / v.z, v.y / v.z]
}

/// Homography mapping `target` points onto `current` points, normalized so
/// that its Frobenius norm is 1 with a non-negative bottom-right entry.
pub fn estimate_homography_dlt(target: &[[f64; 2]], current: &[[f64; 2]]) -> Result<Homography, VisionError> {
    if target.len() != current.len() {
        return Err(VisionError::LengthMismatch { left: target.len(), right: current.len() });
    }
    let n = target.len();
    if n < 4 {
        return Err(VisionError::InsufficientFeatures { needed: 4, got: n });
    }
    if target.iter().chain(current).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(VisionError::Degenerate("non-finite point coordinates".into()));
    }
    let t_src = conditioning(target);
    let t_dst = conditioning(current);

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let [x, y] = apply(&t_src, target[i]);
        let [u, v] = apply(&t_dst, current[i]);
        let r = 2 * i;
        a[(r, 3)] = -x;
        a[(r, 4)] = -y;
        a[(r, 5)] = -1.0;
        a[(r, 6)] = v * x;
        a[(r, 7)] = v * y;
        a[(r, 8)] = v;
        a[(r + 1, 0)] = x;
        a[(r + 1, 1)] = y;
        a[(r + 1, 2)] = 1.0;
        a[(r + 1, 6)] = -u * x;
        a[(r + 1, 7)] = -u * y;
        a[(r + 1, 8)] = -u;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| VisionError::Degenerate("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let largest = svd.singular_values[order[order.len() - 1]];
    let second_smallest = svd.singular_values[order[1]];
    if !(largest > 0.0) || second_smallest / largest < RANK_TOLERANCE {
        return Err(VisionError::Degenerate("rank-deficient design matrix".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv = t_dst.try_inverse().ok_or_else(|| VisionError::Degenerate("conditioning".into()))?;
    let mut g = t_dst_inv * hn * t_src;
    let sv = g.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin / smax > 1e-12) {
        return Err(VisionError::Degenerate("singular homography".into()));
    }
    g /= g.norm();
    if g[(2, 2)] < 0.0 {
        g = -g;
    }
    Ok(Homography::pixel(g))
}

pub fn estimate_homography_dlt_matches(matches: &MatchSet) -> Result<Homography, VisionError> {
    estimate_homography_dlt(&matches.target_points(), &matches.current_points())
}

/// Distance in the current image between `g(target)` and `current`.
pub fn reprojection_error(g: &Homography, target: [f64; 2], current: [f64; 2]) -> f64 {
    match g.transform(target) {
        Some(p) => (p[0] - current[0]).hypot(p[1] - current[1]),
        None => f64::INFINITY,
    }
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// True when some three of the four points are (nearly) collinear.
fn has_collinear_triple(p: &[[f64; 2]; 4]) -> bool {
    let scale = p.iter().flat_map(|a| p.iter().map(move |b| (a[0] - b[0]).hypot(a[1] - b[1]))).fold(0.0, f64::max);
    let tol = 1e-6 * scale * scale;
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| cross2(p[i], p[j], p[k]).abs() <= tol)
}

struct Score {
    inliers: Vec<bool>,
    count: usize,
    cost: f64,
}

fn score(g: &Homography, target: &[[f64; 2]], current: &[[f64; 2]], threshold: f64) -> Score {
    let mut inliers = Vec::with_capacity(target.len());
    let mut count = 0;
    let mut cost = 0.0;
    for (t, c) in target.iter().zip(current) {
        let e = reprojection_error(g, *t, *c);
        let ok = e <= threshold;
        if ok {
            count += 1;
            cost += e * e;
        } else {
            cost += threshold * threshold;
        }
        inliers.push(ok);
    }
    Score { inliers, count, cost }
}

fn required_iterations(confidence: f64, inlier_ratio: f64, cap: usize) -> usize {
    let w4 = inlier_ratio.powi(4);
    if w4 >= 1.0 {
        return 1;
    }
    if w4 <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w4).ln();
    if n.is_finite() { (n.ceil() as usize).clamp(1, cap) } else { cap }
}

/// RANSAC over minimal 4-point DLT fits, followed by a refit on all inliers.
pub fn estimate_homography_ransac(
    target: &[[f64; 2]],
    current: &[[f64; 2]],
    params: &RansacParams,
    seed: u64,
) -> Result<RansacResult, VisionError> {
    if target.len() != current.len() {
        return Err(VisionError::LengthMismatch { left: target.len(), right: current.len() });
    }
    let n = target.len();
    if n < 4 {
        return Err(VisionError::InsufficientFeatures { needed: 4, got: n });
    }
    if !(params.threshold_px > 0.0) || !(params.confidence > 0.0 && params.confidence < 1.0) || params.max_iters == 0 {
        return Err(VisionError::InvalidParameter(format!("invalid RANSAC parameters {params:?}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Score> = None;
    let mut needed = params.max_iters;
    let mut iterations = 0;
    while iterations < needed.min(params.max_iters) {
        iterations += 1;
        let idx = sample(&mut rng, n, 4).into_vec();
        let src = [target[idx[0]], target[idx[1]], target[idx[2]], target[idx[3]]];
        let dst = [current[idx[0]], current[idx[1]], current[idx[2]], current[idx[3]]];
        if has_collinear_triple(&src) || has_collinear_triple(&dst) {
            continue;
        }
        let Ok(g) = estimate_homography_dlt(&src, &dst) else { continue };
        let s = score(&g, target, current, params.threshold_px);
        let better = match &best {
            None => true,
            Some(b) => s.count > b.count || (s.count == b.count && s.cost < b.cost),
        };
        if better {
            needed = required_iterations(params.confidence, s.count as f64 / n as f64, params.max_iters);
            best = Some(s);
        }
    }

    let best = best.filter(|b| b.count >= 4).ok_or(VisionError::EstimationFailed { inliers: 0 })?;
    let mut inliers = best.inliers;
    let mut homography = refit(target, current, &inliers)?;
    // One re-scoring pass with the refined model.
    let rescored = score(&homography, target, current, params.threshold_px);
    if rescored.count >= 4 && rescored.inliers != inliers {
        if let Ok(g) = refit(target, current, &rescored.inliers) {
            homography = g;
            inliers = rescored.inliers;
        }
    }
    let count = inliers.iter().filter(|b| **b).count();
    if count < 4 {
        return Err(VisionError::EstimationFailed { inliers: count });
    }
    Ok(RansacResult { homography, inliers, iterations })
}

fn refit(target: &[[f64; 2]], current: &[[f64; 2]], mask: &[bool]) -> Result<Homography, VisionError> {
    let (src, dst): (Vec<_>, Vec<_>) =
        target.iter().zip(current).zip(mask).filter(|(_, m)| **m).map(|((t, c), _)| (*t, *c)).unzip();
    estimate_homography_dlt(&src, &dst).map_err(|_| VisionError::EstimationFailed { inliers: src.len() })
}

pub fn estimate_homography_ransac_matches(
    matches: &MatchSet,
    params: &RansacParams,
    seed: u64,
) -> Result<RansacResult, VisionError> {
    estimate_homography_ransac(&matches.target_points(), &matches.current_points(), params, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known_g() -> Matrix3<f64> {
        Matrix3::new(1.05, 0.04, 12.0, -0.03, 0.97, -7.5, 2e-5, -3e-5, 1.0)
    }

    fn map(g: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
        Homography::pixel(*g).transform(p).unwrap()
    }

    #[test]
    fn identity_correspondences() {
        let pts = vec![[10.0, 20.0], [300.0, 40.0], [250.0, 400.0], [30.0, 350.0], [160.0, 200.0]];
        let g = estimate_homography_dlt(&pts, &pts).unwrap();
        let gm = g.matrix / g.matrix[(2, 2)];
        assert!((gm - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn four_points_recover_known_g() {
        let g = known_g();
        let src = vec![[0.0, 0.0], [640.0, 10.0], [600.0, 470.0], [20.0, 480.0]];
        let dst: Vec<_> = src.iter().map(|p| map(&g, *p)).collect();
        let est = estimate_homography_dlt(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            assert!(reprojection_error(&est, *s, *d) <= 1e-9);
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let src = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let dst = vec![[5.0, 1.0], [6.0, 2.0], [7.0, 3.0], [8.0, 4.0]];
        assert!(matches!(estimate_homography_dlt(&src, &dst), Err(VisionError::Degenerate(_))));
    }

    #[test]
    fn three_matches_fail() {
        let p = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(estimate_homography_ransac(&p, &p, &RansacParams::default(), 0).is_err());
    }

    #[test]
    fn clean_ransac_equals_full_dlt() {
        let g = known_g();
        let src: Vec<[f64; 2]> = (0..40).map(|i| [(i * 37 % 600) as f64 + 5.0, (i * 53 % 450) as f64 + 7.0]).collect();
        let dst: Vec<_> = src.iter().map(|p| map(&g, *p)).collect();
        let r = estimate_homography_ransac(&src, &dst, &RansacParams::default(), 9).unwrap();
        assert!(r.inliers.iter().all(|b| *b));
        let full = estimate_homography_dlt(&src, &dst).unwrap();
        assert_eq!(r.homography, full);
    }

    #[test]
    fn collinear_triple_detection() {
        assert!(has_collinear_triple(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]));
        assert!(!has_collinear_triple(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]));
    }
}
