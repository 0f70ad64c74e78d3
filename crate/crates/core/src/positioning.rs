//! Online phase: weighted k-nearest-neighbour estimation over a radiomap.
//!
//! The estimate is the similarity-weighted mean of the `k` most similar RPs,
//! where similarity is the inverse Minkowski distance between fingerprints.

use std::cmp::Ordering;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::Point3;
use crate::radiomap::{Fingerprint, Radiomap};

/// Similarity assigned to an exact fingerprint match (zero distance).
pub const SIMILARITY_CAP: f64 = 1e9;
pub const DEFAULT_ORDER: f64 = 2.0;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WknnConfig {
    pub k: usize,
    /// Minkowski order `o ≥ 1`.
    pub order: f64,
}

impl WknnConfig {
    pub fn new(k: usize) -> Self {
        WknnConfig { k, order: DEFAULT_ORDER }
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    #[serde(flatten)]
    pub position: Point3,
    pub neighbors: Vec<Neighbor>,
}

/// A held-out location with its observed fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPoint {
    pub position: Point3,
    pub fingerprint: Fingerprint,
}

fn check_order(order: f64) -> Result<()> {
    if order >= 1.0 && order.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Minkowski order must be >= 1, got {order}")))
    }
}

/// Minkowski distance of order `o` with non-detections replaced by `sentinel`.
pub fn minkowski_distance(a: &Fingerprint, b: &Fingerprint, order: f64, sentinel: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    check_order(order)?;
    let diffs = a.values(sentinel).zip(b.values(sentinel)).map(|(x, y)| (x - y).abs());
    Ok(if order == 1.0 {
        diffs.sum()
    } else if order == 2.0 {
        diffs.map(|d| d * d).sum::<f64>().sqrt()
    } else {
        diffs.map(|d| d.powf(order)).sum::<f64>().powf(1.0 / order)
    })
}

/// Inverse Minkowski distance, capped at [`SIMILARITY_CAP`].
pub fn similarity(a: &Fingerprint, b: &Fingerprint, order: f64, sentinel: f64) -> Result<f64> {
    let d = minkowski_distance(a, b, order, sentinel)?;
    Ok(if d > 0.0 { (1.0 / d).min(SIMILARITY_CAP) } else { SIMILARITY_CAP })
}

/// `⌈α·(dʳ + dᵛ)·|A|⌉`
pub fn k_est(d_real: f64, d_virtual: f64, area: f64, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0) || d_real < 0.0 || d_virtual < 0.0 || !(d_real + d_virtual > 0.0) || !(area > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "k_est needs alpha > 0, nonnegative densities not both zero and positive area \
             (alpha={alpha}, d_real={d_real}, d_virtual={d_virtual}, area={area})"
        )));
    }
    let raw = alpha * (d_real + d_virtual) * area;
    // guard against products like 0.05 * 40 landing just above an integer
    Ok(((raw - 1e-9).ceil() as usize).max(1))
}

/// [`k_est`] from RP counts: `⌈α·(N^r + N^v)⌉`.
pub fn k_est_counts(n_real: usize, n_virtual: usize, alpha: f64) -> Result<usize> {
    k_est(n_real as f64, n_virtual as f64, 1.0, alpha)
}

/// All RPs ordered by decreasing similarity to `target`, ties by index.
pub fn rank(map: &Radiomap, target: &Fingerprint, order: f64) -> Result<Vec<Neighbor>> {
    if map.is_empty() {
        return Err(Error::EmptyRadiomap);
    }
    let mut ranked = map
        .rps
        .iter()
        .enumerate()
        .map(|(index, rp)| {
            Ok(Neighbor {
                index,
                similarity: similarity(&rp.fingerprint, target, order, map.sentinel_dbm)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(by_similarity);
    Ok(ranked)
}

fn by_similarity(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.index.cmp(&b.index))
}

/// Incremental weighted mean; summation order is the neighbour order.
#[derive(Default)]
struct WeightedMean {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl WeightedMean {
    fn push(&mut self, weight: f64, p: &Point3) {
        self.w += weight;
        self.x += weight * p.x;
        self.y += weight * p.y;
        self.z += weight * p.z;
    }

    fn mean(&self) -> Point3 {
        Point3::new(self.x / self.w, self.y / self.w, self.z / self.w)
    }
}

pub fn locate(map: &Radiomap, target: &Fingerprint, cfg: &WknnConfig) -> Result<PositionEstimate> {
    if map.is_empty() {
        return Err(Error::EmptyRadiomap);
    }
    if cfg.k < 1 || cfg.k > map.len() {
        return Err(Error::InvalidK { k: cfg.k, n: map.len() });
    }
    if target.len() != map.aps.len() {
        return Err(Error::LengthMismatch {
            left: target.len(),
            right: map.aps.len(),
        });
    }
    let mut sims = map
        .rps
        .iter()
        .enumerate()
        .map(|(index, rp)| {
            Ok(Neighbor {
                index,
                similarity: similarity(&rp.fingerprint, target, cfg.order, map.sentinel_dbm)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.k < sims.len() {
        sims.select_nth_unstable_by(cfg.k - 1, by_similarity);
        sims.truncate(cfg.k);
    }
    sims.sort_by(by_similarity);

    let mut acc = WeightedMean::default();
    for n in &sims {
        acc.push(n.similarity, &map.rps[n.index].position);
    }
    Ok(PositionEstimate {
        position: acc.mean(),
        neighbors: sims,
    })
}

/// Per-TP positioning errors for every `k` in `1..=k_max`:
/// `errors[k - 1][tp]`. Each TP's ranking is computed once and the weighted
/// means are accumulated incrementally, giving the same values as
/// [`locate`] for each `k`.
pub fn error_table(map: &Radiomap, test_points: &[TestPoint], k_max: usize, order: f64) -> Result<Vec<Vec<f64>>> {
    if map.is_empty() {
        return Err(Error::EmptyRadiomap);
    }
    if k_max < 1 || k_max > map.len() {
        return Err(Error::InvalidK { k: k_max, n: map.len() });
    }
    check_order(order)?;
    let mut table = vec![Vec::with_capacity(test_points.len()); k_max];
    for tp in test_points {
        if tp.fingerprint.len() != map.aps.len() {
            return Err(Error::LengthMismatch {
                left: tp.fingerprint.len(),
                right: map.aps.len(),
            });
        }
        let ranked = rank(map, &tp.fingerprint, order)?;
        let mut acc = WeightedMean::default();
        for (k, n) in ranked.iter().take(k_max).enumerate() {
            acc.push(n.similarity, &map.rps[n.index].position);
            table[k].push(acc.mean().distance(&tp.position));
        }
    }
    Ok(table)
}

/// Mean positioning error for each `k` in `1..=k_max`.
pub fn mean_error_curve(map: &Radiomap, test_points: &[TestPoint], k_max: usize, order: f64) -> Result<Vec<f64>> {
    Ok(error_table(map, test_points, k_max, order)?
        .iter()
        .map(|errs| mean(errs))
        .collect())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Index of the smallest value in `curve[range]` (as a `k`), ties to the
/// smallest `k`.
pub fn argmin_k(curve: &[f64], k_range: RangeInclusive<usize>) -> usize {
    let mut best = *k_range.start();
    for k in k_range {
        if curve[k - 1] < curve[best - 1] {
            best = k;
        }
    }
    best
}

/// The static `k` minimizing the mean positioning error over `test_points`.
pub fn find_k_opt(map: &Radiomap, test_points: &[TestPoint], k_range: RangeInclusive<usize>, order: f64) -> Result<usize> {
    if test_points.is_empty() {
        return Err(Error::InvalidParameter("k_opt search needs at least one test point".into()));
    }
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 1 || hi < lo || hi > map.len() {
        return Err(Error::InvalidK { k: hi, n: map.len() });
    }
    let curve = mean_error_curve(map, test_points, hi, order)?;
    Ok(argmin_k(&curve, k_range))
}
