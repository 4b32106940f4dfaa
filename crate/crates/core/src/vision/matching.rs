//! Id-based correspondence with injected corruption.
//!
//! Features carry their scene id, so matching is exact. Descriptor failures
//! and occluding instruments are emulated by dropping matches, replacing some
//! with random wrong locations, and adding pixel noise.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FeatureObservation, VisionError};
use crate::homography_task::Homography;

/// An injected outlier is redrawn until it lands at least this far (px)
/// from its true location.
const OUTLIER_MIN_OFFSET_PX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corruption {
    /// Standard deviation of Gaussian noise added to current-view pixels.
    #[serde(default)]
    pub noise_px: f64,
    /// Fraction of surviving matches moved to a uniformly random location.
    #[serde(default)]
    pub outlier_rate: f64,
    /// Fraction of co-visible matches removed.
    #[serde(default)]
    pub dropout: f64,
}

impl Corruption {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        for (name, v) in [("outlier_rate", self.outlier_rate), ("dropout", self.dropout)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(VisionError::InvalidParameter(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.noise_px >= 0.0) || !self.noise_px.is_finite() {
            return Err(VisionError::InvalidParameter(format!("noise_px must be non-negative, got {}", self.noise_px)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMatch {
    pub id: u32,
    pub target: [f64; 2],
    pub current: [f64; 2],
    /// Ground truth for evaluation; estimators never see it.
    pub is_synthetic_outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub matches: Vec<FeatureMatch>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn target_points(&self) -> Vec<[f64; 2]> {
        self.matches.iter().map(|m| m.target).collect()
    }

    pub fn current_points(&self) -> Vec<[f64; 2]> {
        self.matches.iter().map(|m| m.current).collect()
    }

    pub fn outlier_flags(&self) -> Vec<bool> {
        self.matches.iter().map(|m| m.is_synthetic_outlier).collect()
    }

    pub fn outlier_count(&self) -> usize {
        self.matches.iter().filter(|m| m.is_synthetic_outlier).count()
    }
}

fn rate_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64).round() as usize).min(n)
}

/// Pairs co-visible features by id (ascending) and corrupts the pairs
/// deterministically from `seed`. Outliers are drawn inside `frame_size`.
pub fn match_views(
    current: &[FeatureObservation],
    target: &[FeatureObservation],
    corruption: &Corruption,
    frame_size: [f64; 2],
    seed: u64,
) -> Result<MatchSet, VisionError> {
    corruption.validate()?;
    let by_id: HashMap<u32, [f64; 2]> = current.iter().filter(|o| o.inside_fov).map(|o| (o.id, o.pixel)).collect();
    let mut matches: Vec<FeatureMatch> = target
        .iter()
        .filter(|o| o.inside_fov)
        .filter_map(|t| {
            by_id.get(&t.id).map(|c| FeatureMatch { id: t.id, target: t.pixel, current: *c, is_synthetic_outlier: false })
        })
        .collect();
    matches.sort_by_key(|m| m.id);
    matches.dedup_by_key(|m| m.id);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_drop = rate_count(corruption.dropout, matches.len());
    if n_drop > 0 {
        let mut keep = vec![true; matches.len()];
        for i in sample(&mut rng, matches.len(), n_drop) {
            keep[i] = false;
        }
        let mut it = keep.into_iter();
        matches.retain(|_| it.next().unwrap_or(true));
    }

    if corruption.noise_px > 0.0 {
        let normal = Normal::new(0.0, corruption.noise_px).expect("validated noise");
        for m in &mut matches {
            m.current[0] += normal.sample(&mut rng);
            m.current[1] += normal.sample(&mut rng);
        }
    }

    let n_out = rate_count(corruption.outlier_rate, matches.len());
    if n_out > 0 {
        let mut idx = sample(&mut rng, matches.len(), n_out).into_vec();
        idx.sort_unstable();
        for i in idx {
            let truth = matches[i].current;
            let wrong = loop {
                let p = [rng.random_range(0.0..frame_size[0]), rng.random_range(0.0..frame_size[1])];
                if (p[0] - truth[0]).hypot(p[1] - truth[1]) >= OUTLIER_MIN_OFFSET_PX {
                    break p;
                }
            };
            matches[i].current = wrong;
            matches[i].is_synthetic_outlier = true;
        }
    }

    if matches.len() < 4 {
        return Err(VisionError::InsufficientFeatures { needed: 4, got: matches.len() });
    }
    Ok(MatchSet { matches })
}

/// Mean pixel distance between corresponding points. With `g`, target points
/// are first mapped into the current view.
pub fn mean_pairwise_distance(
    current: &[[f64; 2]],
    target: &[[f64; 2]],
    g: Option<&Homography>,
) -> Result<f64, VisionError> {
    if current.len() != target.len() {
        return Err(VisionError::LengthMismatch { left: current.len(), right: target.len() });
    }
    if current.is_empty() {
        return Err(VisionError::EmptyMetric);
    }
    let mut sum = 0.0;
    for (c, t) in current.iter().zip(target) {
        let mapped = match g {
            Some(g) => g.transform(*t).ok_or(VisionError::PointAtInfinity)?,
            None => *t,
        };
        sum += (c[0] - mapped[0]).hypot(c[1] - mapped[1]);
    }
    Ok(sum / current.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn grid(n: usize, offset: [f64; 2]) -> Vec<FeatureObservation> {
        (0..n)
            .map(|i| FeatureObservation {
                id: i as u32,
                pixel: [(i % 10) as f64 * 50.0 + 50.0 + offset[0], (i / 10) as f64 * 40.0 + 40.0 + offset[1]],
                inside_fov: true,
            })
            .collect()
    }

    #[test]
    fn clean_matching_pairs_co_visible_ids() {
        let target = grid(100, [0.0, 0.0]);
        let mut current = grid(100, [1.0, 2.0]);
        current.truncate(80);
        current[3].inside_fov = false;
        let m = match_views(&current, &target, &Corruption::clean(), [640.0, 480.0], 1).unwrap();
        assert_eq!(m.len(), 79);
        assert!(m.matches.iter().all(|p| !p.is_synthetic_outlier));
        assert!(m.matches.iter().all(|p| p.current[0] - p.target[0] == 1.0 && p.current[1] - p.target[1] == 2.0));
    }

    #[test]
    fn seeded_outlier_count_is_exact() {
        let target = grid(100, [0.0, 0.0]);
        let c = Corruption { outlier_rate: 0.3, ..Corruption::clean() };
        let a = match_views(&target, &target, &c, [640.0, 480.0], 42).unwrap();
        assert_eq!(a.outlier_count(), 30);
        let b = match_views(&target, &target, &c, [640.0, 480.0], 42).unwrap();
        assert_eq!(a, b);
        for m in a.matches.iter().filter(|m| m.is_synthetic_outlier) {
            assert!((m.current[0] - m.target[0]).hypot(m.current[1] - m.target[1]) >= OUTLIER_MIN_OFFSET_PX);
        }
    }

    #[test]
    fn full_dropout_is_insufficient() {
        let target = grid(50, [0.0, 0.0]);
        let c = Corruption { dropout: 1.0, ..Corruption::clean() };
        assert!(matches!(
            match_views(&target, &target, &c, [640.0, 480.0], 0),
            Err(VisionError::InsufficientFeatures { got: 0, .. })
        ));
        let bad = Corruption { dropout: 1.5, ..Corruption::clean() };
        assert!(match_views(&target, &target, &bad, [640.0, 480.0], 0).is_err());
    }

    #[test]
    fn mpd_examples() {
        let a = vec![[1.0, 2.0], [10.0, -3.0]];
        assert_eq!(mean_pairwise_distance(&a, &a, None).unwrap(), 0.0);
        let b: Vec<_> = a.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
        assert_eq!(mean_pairwise_distance(&b, &a, None).unwrap(), 5.0);
        let shift = Homography::pixel(Matrix3::new(1.0, 0.0, 3.0, 0.0, 1.0, 4.0, 0.0, 0.0, 1.0));
        assert!(mean_pairwise_distance(&b, &a, Some(&shift)).unwrap() < 1e-12);
        assert!(matches!(mean_pairwise_distance(&[], &[], None), Err(VisionError::EmptyMetric)));
        assert!(mean_pairwise_distance(&a, &a[..1], None).is_err());
    }
}
