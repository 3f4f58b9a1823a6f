//! Threshold matching of descriptors by Euclidean distance.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorVector;
use crate::error::{Error, Result};

pub const DEFAULT_DELTA_S: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Every cross pair below the threshold.
    ThresholdAll,
    /// Mutual nearest neighbours below the threshold.
    NearestNeighbor,
}

impl FromStr for MatchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "threshold_all" | "threshold-all" => Ok(Self::ThresholdAll),
            "nearest_neighbor" | "nearest-neighbor" | "nn" => Ok(Self::NearestNeighbor),
            other => Err(Error::config(format!("unknown match strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub delta_s: f64,
    pub strategy: MatchStrategy,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            delta_s: DEFAULT_DELTA_S,
            strategy: MatchStrategy::NearestNeighbor,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_s > 0.0) || !self.delta_s.is_finite() {
            return Err(Error::config(format!("delta_s must be positive, got {}", self.delta_s)));
        }
        Ok(())
    }
}

/// A correspondence between a reference-image feature (`p1`) and a
/// registered-image feature (`p2`). Positions are `[row, col]`.
///
/// `c1`, `c2` are the centers of the described regions. They equal the
/// feature positions except near borders, where the region is shifted
/// inward; registration uses them because the descriptors only vouch for
/// the content around those centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub delta: f64,
    pub ref1: usize,
    pub ref2: usize,
}

/// Euclidean distance between two descriptor value arrays.
pub fn descriptor_distance(d1: &[f64], d2: &[f64]) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::Contract(format!(
            "descriptor lengths differ: {} vs {}",
            d1.len(),
            d2.len()
        )));
    }
    Ok(sq_dist(d1, d2).sqrt())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn position(d: &DescriptorVector) -> [f64; 2] {
    [d.feature.row as f64, d.feature.col as f64]
}

fn center(d: &DescriptorVector) -> [f64; 2] {
    [d.center[0] as f64, d.center[1] as f64]
}

/// Pairs descriptors of two images. The output is sorted by distance, ties
/// by positions `(p1, p2)` and then indices.
pub fn match_features(set1: &[DescriptorVector], set2: &[DescriptorVector], cfg: &MatcherConfig) -> Result<Vec<MatchPair>> {
    cfg.validate()?;
    if set1.is_empty() || set2.is_empty() {
        return Ok(Vec::new());
    }
    let len = set1[0].values.len();
    if let Some(bad) = set1.iter().chain(set2).find(|d| d.values.len() != len) {
        return Err(Error::Contract(format!(
            "descriptor lengths differ: {} vs {len}",
            bad.values.len()
        )));
    }

    let dist: Vec<Vec<f64>> = set1
        .par_iter()
        .map(|a| set2.iter().map(|b| sq_dist(&a.values, &b.values).sqrt()).collect())
        .collect();

    let pair = |i: usize, j: usize| MatchPair {
        p1: position(&set1[i]),
        p2: position(&set2[j]),
        c1: center(&set1[i]),
        c2: center(&set2[j]),
        delta: dist[i][j],
        ref1: i,
        ref2: j,
    };

    let mut out = Vec::new();
    match cfg.strategy {
        MatchStrategy::ThresholdAll => {
            for (i, row) in dist.iter().enumerate() {
                for (j, &delta) in row.iter().enumerate() {
                    if delta < cfg.delta_s {
                        out.push(pair(i, j));
                    }
                }
            }
        }
        MatchStrategy::NearestNeighbor => {
            // exact ties go to the smaller feature position so that the
            // result does not depend on input order
            let argmin = |it: &mut dyn Iterator<Item = (usize, f64)>, set: &[DescriptorVector]| {
                it.fold((usize::MAX, f64::INFINITY), |best, (k, v)| {
                    let better = v < best.1
                        || (v == best.1 && best.0 != usize::MAX && position(&set[k]) < position(&set[best.0]));
                    if better {
                        (k, v)
                    } else {
                        best
                    }
                })
            };
            let best_in_2: Vec<(usize, f64)> = dist
                .iter()
                .map(|row| argmin(&mut row.iter().copied().enumerate(), set2))
                .collect();
            let best_in_1: Vec<usize> = (0..set2.len())
                .map(|j| argmin(&mut dist.iter().map(|row| row[j]).enumerate(), set1).0)
                .collect();
            for (i, &(j, delta)) in best_in_2.iter().enumerate() {
                if j != usize::MAX && best_in_1[j] == i && delta < cfg.delta_s {
                    out.push(pair(i, j));
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.delta
            .total_cmp(&b.delta)
            .then(a.p1.partial_cmp(&b.p1).expect("finite positions"))
            .then(a.p2.partial_cmp(&b.p2).expect("finite positions"))
            .then(a.ref1.cmp(&b.ref1))
            .then(a.ref2.cmp(&b.ref2))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{FeaturePoint, Polarity};

    fn desc(values: Vec<f64>, row: usize, col: usize) -> DescriptorVector {
        DescriptorVector {
            values,
            feature: FeaturePoint {
                row,
                col,
                scale: 32,
                polarity: Polarity::Maximum,
                window_index: 0,
                value: 0.0,
            },
            region_size: 16,
            subregion_size: 4,
            orientation: 0.0,
            center: [row, col],
        }
    }

    fn basis(k: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        v
    }

    #[test]
    fn distance_basics() {
        let v = vec![0.3; 128];
        assert_eq!(descriptor_distance(&v, &v).unwrap(), 0.0);
        assert_eq!(descriptor_distance(&basis(5, 128), &vec![0.0; 128]).unwrap(), 1.0);
        assert!(matches!(descriptor_distance(&v, &v[..64]), Err(Error::Contract(_))));
    }

    #[test]
    fn identical_single_feature() {
        let a = [desc(basis(0, 8), 1, 2)];
        let b = [desc(basis(0, 8), 3, 4)];
        for strategy in [MatchStrategy::NearestNeighbor, MatchStrategy::ThresholdAll] {
            let m = match_features(&a, &b, &MatcherConfig { delta_s: 0.35, strategy }).unwrap();
            assert_eq!(m.len(), 1);
            assert_eq!(m[0].delta, 0.0);
            assert_eq!((m[0].p1, m[0].p2), ([1.0, 2.0], [3.0, 4.0]));
        }
    }

    #[test]
    fn orthogonal_vectors_never_match() {
        let a: Vec<_> = (0..4).map(|k| desc(basis(k, 8), k, 0)).collect();
        let b: Vec<_> = (4..8).map(|k| desc(basis(k, 8), k, 0)).collect();
        for strategy in [MatchStrategy::NearestNeighbor, MatchStrategy::ThresholdAll] {
            assert!(match_features(&a, &b, &MatcherConfig { delta_s: 1.0, strategy }).unwrap().is_empty());
        }
    }

    #[test]
    fn threshold_all_is_many_to_many() {
        let a = [desc(vec![1.0, 0.0], 0, 0), desc(vec![0.99, 0.1], 0, 1)];
        let b = [desc(vec![1.0, 0.05], 1, 0), desc(vec![0.98, 0.0], 1, 1)];
        let all = match_features(&a, &b, &MatcherConfig { delta_s: 0.5, strategy: MatchStrategy::ThresholdAll }).unwrap();
        assert_eq!(all.len(), 4);
        let nn = match_features(&a, &b, &MatcherConfig { delta_s: 0.5, strategy: MatchStrategy::NearestNeighbor }).unwrap();
        assert!(nn.len() <= 2);
        assert!(nn.windows(2).all(|w| w[0].delta <= w[1].delta));
    }

    #[test]
    fn empty_inputs() {
        let a = [desc(vec![1.0], 0, 0)];
        assert!(match_features(&[], &a, &MatcherConfig::default()).unwrap().is_empty());
        assert!(match_features(&a, &[], &MatcherConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("threshold_all".parse::<MatchStrategy>().unwrap(), MatchStrategy::ThresholdAll);
        assert_eq!("nearest-neighbor".parse::<MatchStrategy>().unwrap(), MatchStrategy::NearestNeighbor);
        assert!("ratio".parse::<MatchStrategy>().is_err());
        assert!(MatcherConfig { delta_s: 0.0, ..Default::default() }.validate().is_err());
    }
}
