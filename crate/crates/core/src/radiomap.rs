//! Fingerprint database: real RPs from averaged scans, virtual RPs from the
//! calibrated propagation model.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{predict_for_locations, FitResult};
use crate::floorplan::{Bounds, Floorplan, Point3};
use crate::measurements::MeasurementSet;
use crate::propagation::AccessPoint;

/// Numeric stand-in for a not-detected AP.
pub const SENTINEL_DBM: f64 = -100.0;
/// Predicted or simulated RSS below this is treated as not detected.
pub const DETECTION_FLOOR_DBM: f64 = -95.0;

const COUNT_EPS: f64 = 1e-9;

/// L-vector of RSS values aligned with the AP list; `None` = not detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub Vec<Option<f64>>);

impl Fingerprint {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Values with the sentinel substituted for non-detections.
    pub fn values(&self, sentinel: f64) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(move |v| v.unwrap_or(sentinel))
    }
}

impl From<Vec<f64>> for Fingerprint {
    fn from(v: Vec<f64>) -> Self {
        Fingerprint(v.into_iter().map(Some).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RpKind {
    Real,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    #[serde(flatten)]
    pub position: Point3,
    pub kind: RpKind,
    #[serde(rename = "rss")]
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Grid,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Radiomap {
    pub aps: Vec<AccessPoint>,
    pub sentinel_dbm: f64,
    pub area_m2: f64,
    pub rps: Vec<ReferencePoint>,
}

impl Radiomap {
    pub fn new(aps: Vec<AccessPoint>, sentinel_dbm: f64, area_m2: f64, rps: Vec<ReferencePoint>) -> Result<Self> {
        if !(area_m2 > 0.0) {
            return Err(Error::InvalidGeometry(format!("radiomap area must be positive, got {area_m2}")));
        }
        for rp in &rps {
            if rp.fingerprint.len() != aps.len() {
                return Err(Error::LengthMismatch {
                    left: rp.fingerprint.len(),
                    right: aps.len(),
                });
            }
        }
        Ok(Radiomap {
            aps,
            sentinel_dbm,
            area_m2,
            rps,
        })
    }

    pub fn len(&self) -> usize {
        self.rps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rps.is_empty()
    }

    pub fn n_real(&self) -> usize {
        self.rps.iter().filter(|r| r.kind == RpKind::Real).count()
    }

    pub fn n_virtual(&self) -> usize {
        self.rps.iter().filter(|r| r.kind == RpKind::Virtual).count()
    }

    /// `N^r / |A|`
    pub fn d_real(&self) -> f64 {
        self.n_real() as f64 / self.area_m2
    }

    /// `N^v / |A|`
    pub fn d_virtual(&self) -> f64 {
        self.n_virtual() as f64 / self.area_m2
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: Radiomap = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Radiomap::new(map.aps, map.sentinel_dbm, map.area_m2, map.rps).map_err(|e| Error::parse(path, e))
    }
}

/// Averages scans into one real RP per surveyed location. APs never
/// detected at a location get a `None` entry.
pub fn build_real_fingerprints(meas: &MeasurementSet, aps: &[AccessPoint]) -> Result<Vec<ReferencePoint>> {
    if meas.is_empty() {
        return Err(Error::EmptyMeasurements);
    }
    meas.check_aps(aps)?;
    Ok(meas
        .averaged()
        .into_iter()
        .map(|site| ReferencePoint {
            position: site.location,
            kind: RpKind::Real,
            fingerprint: Fingerprint(aps.iter().map(|a| site.rss.get(&a.id).copied().flatten()).collect()),
        })
        .collect())
}

/// `⌈ρ·n⌉`, guarded against float noise such as `0.2 * 41 = 8.200000000000001`
/// landing just above an integer.
pub fn real_rp_count(n_total: usize, rho: f64) -> Result<usize> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (0, 1], got {rho}")));
    }
    Ok(((rho * n_total as f64 - COUNT_EPS).ceil().max(0.0) as usize).min(n_total))
}

/// `⌈d·|A|⌉` with the same guard as [`real_rp_count`].
pub fn virtual_rp_count(density: f64, area: f64) -> usize {
    (density * area - COUNT_EPS).ceil().max(0.0) as usize
}

/// Greedy farthest-point ordering, starting from the point nearest the
/// centroid. Ties go to the lower index. Every prefix of the order is a
/// well-spread subset, which makes prefix selections nested.
pub fn farthest_point_order(positions: &[Point3]) -> Vec<usize> {
    let n = positions.len();
    if n == 0 {
        return Vec::new();
    }
    let inv = 1.0 / n as f64;
    let centroid = positions.iter().fold(Point3::default(), |acc, p| {
        Point3::new(acc.x + p.x * inv, acc.y + p.y * inv, acc.z + p.z * inv)
    });
    let first = argmin(positions.iter().map(|p| p.distance(&centroid)));

    let mut order = Vec::with_capacity(n);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut next = first;
    for _ in 0..n {
        order.push(next);
        taken[next] = true;
        for (i, p) in positions.iter().enumerate() {
            nearest[i] = nearest[i].min(p.distance(&positions[next]));
        }
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        match best {
            Some(b) => next = b,
            None => break,
        }
    }
    order
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Indices of the `⌈ρ·N⌉` RPs chosen by farthest-point decimation, in
/// selection order.
pub fn select_rp_indices(positions: &[Point3], rho: f64) -> Result<Vec<usize>> {
    let n = real_rp_count(positions.len(), rho)?;
    let mut order = farthest_point_order(positions);
    order.truncate(n);
    Ok(order)
}

pub fn select_rps(all_rps: &[ReferencePoint], rho: f64) -> Result<Vec<ReferencePoint>> {
    let positions: Vec<Point3> = all_rps.iter().map(|r| r.position).collect();
    let mut idx = select_rp_indices(&positions, rho)?;
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| all_rps[i].clone()).collect())
}

/// `n` points on a near-square lattice of cell centers covering `bounds`.
/// Rows are spread evenly in y and each row's points evenly in x; row
/// lengths differ by at most one so that exactly `n` points are produced.
pub fn lattice(bounds: &Bounds, n: usize, z: f64) -> Vec<Point3> {
    if n == 0 {
        return Vec::new();
    }
    let (w, h) = (bounds.width(), bounds.height());
    let rows = ((n as f64 * h / w).sqrt().round() as usize).clamp(1, n);
    let (base, extra) = (n / rows, n % rows);
    let mut out = Vec::with_capacity(n);
    for r in 0..rows {
        let cols = base + usize::from(r < extra);
        let y = bounds.min_y + (r as f64 + 0.5) * h / rows as f64;
        for c in 0..cols {
            let x = bounds.min_x + (c as f64 + 0.5) * w / cols as f64;
            out.push(Point3::new(x, y, z));
        }
    }
    out
}

/// `N^v = ⌈dᵛ·|A|⌉` virtual RP positions at height `z`.
pub fn place_virtual_rps(plan: &Floorplan, d_virtual: f64, placement: Placement, z: f64) -> Result<Vec<Point3>> {
    if !(d_virtual > 0.0) || !d_virtual.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "virtual RP density must be positive, got {d_virtual}"
        )));
    }
    let bounds = plan.bounds();
    let n = virtual_rp_count(d_virtual, plan.area());
    Ok(match placement {
        Placement::Grid => lattice(bounds, n, z),
        Placement::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(bounds.min_x..=bounds.max_x),
                        rng.random_range(bounds.min_y..=bounds.max_y),
                        z,
                    )
                })
                .collect()
        }
    })
}

/// Predicted fingerprints at `positions`; predictions below `detection_floor`
/// become non-detections.
pub fn generate_virtual_fingerprints(
    fit: &FitResult,
    plan: &Floorplan,
    aps: &[AccessPoint],
    positions: &[Point3],
    detection_floor: f64,
) -> Result<Vec<ReferencePoint>> {
    let predicted = predict_for_locations(fit, fit.model, plan, aps, positions)?;
    Ok(positions
        .iter()
        .zip(predicted)
        .map(|(p, rss)| ReferencePoint {
            position: *p,
            kind: RpKind::Virtual,
            fingerprint: Fingerprint(rss.into_iter().map(|v| (v >= detection_floor).then_some(v)).collect()),
        })
        .collect())
}
