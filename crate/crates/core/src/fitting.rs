//! Least-squares calibration of the propagation parameter set.
//!
//! With `l0`, `l_f` and `b` fixed, the predicted RSS is linear in
//! `(γ, l_c, l_kind...)`:
//!
//! ```text
//! eirp − l0 − floor_loss − rss = γ·10·log10(d) + l_c + Σ N_kind·l_kind
//! ```
//!
//! so minimizing the squared RSS error is an ordinary linear least-squares
//! problem, solved here through the SVD of the regressor matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::{count_obstructions, link_distance, Floorplan, ObstacleKind, Point3};
use crate::measurements::{AveragedSite, MeasurementSet};
use crate::propagation::{floor_loss, predict_rss, AccessPoint, ModelKind, PropagationParams};

/// Relative singular-value threshold below which a system is rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Label used in errors for the pooled Strategy I system.
pub const POOLED_LABEL: &str = "<all>";

#[derive(Debug, Clone, PartialEq)]
pub enum FitStrategy {
    /// One shared parameter set fitted on every AP's samples.
    EnvironmentFitting,
    /// One parameter set per AP.
    SpecificApFitting,
    /// No calibration: the supplied parameters are used for every AP.
    NoFit(PropagationParams),
}

impl FitStrategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            FitStrategy::EnvironmentFitting => StrategyKind::Environment,
            FitStrategy::SpecificApFitting => StrategyKind::PerAp,
            FitStrategy::NoFit(_) => StrategyKind::NoFit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Environment,
    PerAp,
    NoFit,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Environment => "env",
            StrategyKind::PerAp => "per-ap",
            StrategyKind::NoFit => "no-fit",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "env" | "environment" | "i" => Ok(StrategyKind::Environment),
            "per-ap" | "ap" | "ii" => Ok(StrategyKind::PerAp),
            "no-fit" | "nofit" => Ok(StrategyKind::NoFit),
            other => Err(Error::InvalidParameter(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub strategy: StrategyKind,
    pub params_by_ap: BTreeMap<String, PropagationParams>,
    pub residual_rms: f64,
    pub m_used: usize,
}

impl FitResult {
    pub fn params_for(&self, ap_id: &str) -> Result<&PropagationParams> {
        self.params_by_ap
            .get(ap_id)
            .ok_or_else(|| Error::UnknownAp(ap_id.to_string()))
    }
}

/// One scan-averaged RSS observation of one AP at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSample {
    pub ap_index: usize,
    pub location: Point3,
    pub rss: f64,
}

/// Turns averaged sites into fit samples, dropping non-detections.
pub fn samples_from_sites(aps: &[AccessPoint], sites: &[AveragedSite]) -> Result<Vec<FitSample>> {
    let mut out = Vec::new();
    for site in sites {
        for (ap_id, rss) in &site.rss {
            let ap_index = aps
                .iter()
                .position(|a| &a.id == ap_id)
                .ok_or_else(|| Error::UnknownAp(ap_id.clone()))?;
            if let Some(rss) = rss {
                out.push(FitSample {
                    ap_index,
                    location: site.location,
                    rss: *rss,
                });
            }
        }
    }
    Ok(out)
}

/// Fits with the default fixed parameters (free-space `l0`, default floor terms).
pub fn fit(
    strategy: &FitStrategy,
    model: ModelKind,
    plan: &Floorplan,
    aps: &[AccessPoint],
    meas: &MeasurementSet,
) -> Result<FitResult> {
    if meas.is_empty() {
        return Err(Error::EmptyMeasurements);
    }
    let samples = samples_from_sites(aps, &meas.averaged())?;
    fit_samples(strategy, model, plan, aps, &samples, &PropagationParams::default())
}

/// Fits scan-averaged samples. `base` supplies the fixed `l0`, `l_f` and `b`.
pub fn fit_samples(
    strategy: &FitStrategy,
    model: ModelKind,
    plan: &Floorplan,
    aps: &[AccessPoint],
    samples: &[FitSample],
    base: &PropagationParams,
) -> Result<FitResult> {
    let rows = samples
        .iter()
        .map(|s| Row::new(model, plan, aps, s, base))
        .collect::<Result<Vec<_>>>()?;
    let kinds = match model {
        ModelKind::Mwmf => plan.obstacle_kinds(),
        ModelKind::OneSlope => Vec::new(),
    };

    let params_by_ap: BTreeMap<String, PropagationParams> = match strategy {
        FitStrategy::NoFit(p) => aps.iter().map(|a| (a.id.clone(), p.clone())).collect(),
        FitStrategy::EnvironmentFitting => {
            let all: Vec<&Row> = rows.iter().collect();
            let p = solve(model, &kinds, &all, base, POOLED_LABEL)?;
            aps.iter().map(|a| (a.id.clone(), p.clone())).collect()
        }
        FitStrategy::SpecificApFitting => {
            let mut out = BTreeMap::new();
            for (i, ap) in aps.iter().enumerate() {
                let mine: Vec<&Row> = rows.iter().filter(|r| r.ap_index == i).collect();
                out.insert(ap.id.clone(), solve(model, &kinds, &mine, base, &ap.id)?);
            }
            out
        }
    };

    for (ap, p) in &params_by_ap {
        if p.losses.values().any(|&l| l < 0.0) || p.l_c < 0.0 {
            warn!("fitted parameters for AP {ap} include a negative loss: {p:?}");
        }
    }

    let sse = sum_squared_error(model, plan, aps, &params_by_ap, samples)?;
    let residual_rms = if samples.is_empty() {
        0.0
    } else {
        (sse / samples.len() as f64).sqrt()
    };
    Ok(FitResult {
        model,
        strategy: strategy.kind(),
        params_by_ap,
        residual_rms,
        m_used: samples.len(),
    })
}

/// Σ |RSS_m − R̂SS_m|² over the samples, each predicted with its AP's params.
pub fn sum_squared_error(
    model: ModelKind,
    plan: &Floorplan,
    aps: &[AccessPoint],
    params_by_ap: &BTreeMap<String, PropagationParams>,
    samples: &[FitSample],
) -> Result<f64> {
    let mut sse = 0.0;
    for s in samples {
        let ap = &aps[s.ap_index];
        let p = params_by_ap
            .get(&ap.id)
            .ok_or_else(|| Error::UnknownAp(ap.id.clone()))?;
        let e = s.rss - predict_rss(model, p, plan, ap, &s.location)?;
        sse += e * e;
    }
    Ok(sse)
}

/// Predicted RSS for every location (outer) and AP (inner, in `aps` order).
pub fn predict_for_locations(
    result: &FitResult,
    model: ModelKind,
    plan: &Floorplan,
    aps: &[AccessPoint],
    locations: &[Point3],
) -> Result<Vec<Vec<f64>>> {
    let params: Vec<&PropagationParams> = aps
        .iter()
        .map(|a| result.params_for(&a.id))
        .collect::<Result<_>>()?;
    locations
        .iter()
        .map(|loc| {
            aps.iter()
                .zip(&params)
                .map(|(ap, p)| predict_rss(model, p, plan, ap, loc))
                .collect()
        })
        .collect()
}

struct Row {
    ap_index: usize,
    log_distance: f64,
    counts: BTreeMap<ObstacleKind, u32>,
    target: f64,
}

impl Row {
    fn new(model: ModelKind, plan: &Floorplan, aps: &[AccessPoint], s: &FitSample, base: &PropagationParams) -> Result<Row> {
        let ap = aps
            .get(s.ap_index)
            .ok_or_else(|| Error::UnknownAp(format!("#{}", s.ap_index)))?;
        let d = link_distance(&ap.position, &s.location)?;
        let (counts, floor) = match model {
            ModelKind::Mwmf => {
                let obs = count_obstructions(plan, &ap.position, &s.location)?;
                let floor = floor_loss(base, obs.floors_crossed);
                (obs.counts, floor)
            }
            ModelKind::OneSlope => (BTreeMap::new(), 0.0),
        };
        Ok(Row {
            ap_index: s.ap_index,
            log_distance: 10.0 * d.log10(),
            counts,
            target: ap.eirp - base.l0 - floor - s.rss,
        })
    }
}

fn solve(
    model: ModelKind,
    kinds: &[ObstacleKind],
    rows: &[&Row],
    base: &PropagationParams,
    label: &str,
) -> Result<PropagationParams> {
    let n_cols = match model {
        ModelKind::Mwmf => 2 + kinds.len(),
        ModelKind::OneSlope => 1,
    };
    if rows.len() < n_cols {
        return Err(Error::InsufficientData {
            ap: label.to_string(),
            have: rows.len(),
            need: n_cols,
        });
    }
    let a = DMatrix::from_fn(rows.len(), n_cols, |i, j| {
        let r = rows[i];
        match j {
            0 => r.log_distance,
            1 => 1.0,
            _ => r.counts.get(&kinds[j - 2]).copied().unwrap_or(0) as f64,
        }
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.target));

    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(max_sv > 0.0) || min_sv <= RANK_TOLERANCE * max_sv {
        return Err(Error::DegenerateFit { ap: label.to_string() });
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|_| Error::DegenerateFit { ap: label.to_string() })?;

    let mut p = PropagationParams {
        l0: base.l0,
        gamma: x[0],
        l_c: 0.0,
        losses: BTreeMap::new(),
        l_f: base.l_f,
        b: base.b,
    };
    if model == ModelKind::Mwmf {
        p.l_c = x[1];
        for (j, kind) in kinds.iter().enumerate() {
            p.losses.insert(*kind, x[2 + j]);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floorplan::{Bounds, Obstacle};
    use crate::measurements::MeasurementRecord;

    fn plan() -> Floorplan {
        Floorplan::single_floor(
            Bounds::new(0.0, 0.0, 30.0, 20.0),
            vec![
                Obstacle::wall(0, [10.0, 0.0], [10.0, 8.0]),
                Obstacle::door(0, [10.0, 8.0], [10.0, 10.0]),
                Obstacle::wall(0, [10.0, 10.0], [10.0, 20.0]),
                Obstacle::wall(0, [20.0, 0.0], [20.0, 12.0]),
                Obstacle::door(0, [20.0, 12.0], [20.0, 14.0]),
                Obstacle::wall(0, [20.0, 14.0], [20.0, 20.0]),
                Obstacle::wall(0, [0.0, 15.0], [30.0, 15.0]),
            ],
        )
        .unwrap()
    }

    fn grid() -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..9 {
            for j in 0..6 {
                pts.push(Point3::new(1.7 + 3.3 * i as f64, 1.3 + 3.1 * j as f64, 0.0));
            }
        }
        pts
    }

    fn noiseless(aps: &[AccessPoint], truth: &[PropagationParams], pts: &[Point3]) -> MeasurementSet {
        let plan = plan();
        let mut records = Vec::new();
        for (n, p) in pts.iter().enumerate() {
            for (ap, t) in aps.iter().zip(truth) {
                let rss = predict_rss(ModelKind::Mwmf, t, &plan, ap, p).unwrap();
                for scan in 0..2 {
                    records.push(MeasurementRecord {
                        rp_id: format!("rp{n}"),
                        location: *p,
                        ap_id: ap.id.clone(),
                        rss: Some(rss),
                        scan_index: scan,
                    });
                }
            }
        }
        MeasurementSet::new(records)
    }

    fn aps() -> Vec<AccessPoint> {
        vec![
            AccessPoint::new("a", Point3::new(5.0, 9.0, 0.0), 20.0),
            AccessPoint::new("b", Point3::new(25.0, 11.0, 0.0), 20.0),
        ]
    }

    fn close(a: &PropagationParams, b: &PropagationParams, tol: f64) {
        assert!((a.gamma - b.gamma).abs() < tol, "gamma {} vs {}", a.gamma, b.gamma);
        assert!((a.l_c - b.l_c).abs() < tol, "l_c {} vs {}", a.l_c, b.l_c);
        for k in [ObstacleKind::WALL, ObstacleKind::DOOR] {
            assert!((a.loss(k) - b.loss(k)).abs() < tol, "{k}: {} vs {}", a.loss(k), b.loss(k));
        }
    }

    #[test]
    fn exact_recovery_pooled() {
        let truth = PropagationParams::walls_doors(2.8, 1.5, 5.5, 1.2);
        let aps = aps();
        let m = noiseless(&aps, &[truth.clone(), truth.clone()], &grid());
        let r = fit(&FitStrategy::EnvironmentFitting, ModelKind::Mwmf, &plan(), &aps, &m).unwrap();
        for p in r.params_by_ap.values() {
            close(p, &truth, 1e-6);
        }
        assert!(r.residual_rms < 1e-6);
        assert_eq!(r.m_used, 2 * grid().len());

        let per_ap = fit(&FitStrategy::SpecificApFitting, ModelKind::Mwmf, &plan(), &aps, &m).unwrap();
        for (id, p) in &per_ap.params_by_ap {
            close(p, &r.params_by_ap[id], 1e-6);
        }
    }

    #[test]
    fn per_ap_recovers_distinct_truths() {
        let t1 = PropagationParams::walls_doors(2.2, 0.5, 4.0, 1.0);
        let t2 = PropagationParams::walls_doors(3.4, 2.0, 6.0, 2.5);
        let aps = aps();
        let m = noiseless(&aps, &[t1.clone(), t2.clone()], &grid());
        let r = fit(&FitStrategy::SpecificApFitting, ModelKind::Mwmf, &plan(), &aps, &m).unwrap();
        close(&r.params_by_ap["a"], &t1, 1e-6);
        close(&r.params_by_ap["b"], &t2, 1e-6);
        let pooled = fit(&FitStrategy::EnvironmentFitting, ModelKind::Mwmf, &plan(), &aps, &m).unwrap();
        assert!(pooled.residual_rms > 0.1);
    }

    #[test]
    fn one_slope_recovers_gamma() {
        let truth = PropagationParams::one_slope(40.22, 3.1);
        let aps = aps();
        let plan = plan();
        let mut records = Vec::new();
        for (n, p) in grid().iter().enumerate() {
            for ap in &aps {
                records.push(MeasurementRecord {
                    rp_id: format!("rp{n}"),
                    location: *p,
                    ap_id: ap.id.clone(),
                    rss: Some(predict_rss(ModelKind::OneSlope, &truth, &plan, ap, p).unwrap()),
                    scan_index: 0,
                });
            }
        }
        let m = MeasurementSet::new(records);
        let r = fit(&FitStrategy::SpecificApFitting, ModelKind::OneSlope, &plan, &aps, &m).unwrap();
        for p in r.params_by_ap.values() {
            assert!((p.gamma - 3.1).abs() < 1e-9);
            assert!(p.losses.is_empty());
        }
    }

    #[test]
    fn equidistant_samples_are_degenerate() {
        let aps = vec![AccessPoint::new("a", Point3::new(5.0, 5.0, 0.0), 20.0)];
        let plan = Floorplan::single_floor(Bounds::new(0.0, 0.0, 10.0, 10.0), vec![]).unwrap();
        let samples: Vec<FitSample> = (0..6)
            .map(|i| {
                let t = i as f64;
                FitSample {
                    ap_index: 0,
                    location: Point3::new(5.0 + 3.0 * t.cos(), 5.0 + 3.0 * t.sin(), 0.0),
                    rss: -50.0,
                }
            })
            .collect();
        let err = fit_samples(
            &FitStrategy::SpecificApFitting,
            ModelKind::Mwmf,
            &plan,
            &aps,
            &samples,
            &PropagationParams::default(),
        )
        .unwrap_err();
        match err {
            Error::DegenerateFit { ap } => assert_eq!(ap, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_samples() {
        let aps = aps();
        let samples = vec![FitSample {
            ap_index: 0,
            location: Point3::new(1.0, 1.0, 0.0),
            rss: -40.0,
        }];
        let err = fit_samples(
            &FitStrategy::EnvironmentFitting,
            ModelKind::Mwmf,
            &plan(),
            &aps,
            &samples,
            &PropagationParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData { have: 1, need: 4, .. }));
    }

    #[test]
    fn no_fit_uses_supplied_params() {
        let os = PropagationParams::one_slope(20.0, 2.0);
        let aps = aps();
        let m = noiseless(&aps, &[os.clone(), os.clone()], &grid()[..3]);
        let r = fit(&FitStrategy::NoFit(os.clone()), ModelKind::OneSlope, &plan(), &aps, &m).unwrap();
        assert_eq!(r.strategy, StrategyKind::NoFit);
        assert!(r.params_by_ap.values().all(|p| *p == os));
        let pred = predict_for_locations(&r, ModelKind::OneSlope, &plan(), &aps, &[Point3::new(5.0, 19.0, 0.0)]).unwrap();
        assert!((pred[0][0] - (20.0 - 20.0 - 20.0 * 10f64.log10())).abs() < 1e-9);
    }

    #[test]
    fn prediction_at_fitting_location_matches_measurement() {
        let truth = PropagationParams::walls_doors(2.5, 1.0, 5.0, 2.0);
        let aps = aps();
        let m = noiseless(&aps, &[truth.clone(), truth.clone()], &grid());
        let r = fit(&FitStrategy::EnvironmentFitting, ModelKind::Mwmf, &plan(), &aps, &m).unwrap();
        let sites = m.averaged();
        let locs: Vec<Point3> = sites.iter().map(|s| s.location).collect();
        let pred = predict_for_locations(&r, ModelKind::Mwmf, &plan(), &aps, &locs).unwrap();
        for (site, row) in sites.iter().zip(&pred) {
            for (ap, v) in aps.iter().zip(row) {
                assert!((site.rss[&ap.id].unwrap() - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn missing_ap_params_is_an_error() {
        let r = FitResult {
            model: ModelKind::Mwmf,
            strategy: StrategyKind::PerAp,
            params_by_ap: BTreeMap::new(),
            residual_rms: 0.0,
            m_used: 0,
        };
        let err = predict_for_locations(&r, ModelKind::Mwmf, &plan(), &aps(), &[Point3::new(1.0, 1.0, 0.0)]);
        assert!(matches!(err, Err(Error::UnknownAp(_))));
    }
}
