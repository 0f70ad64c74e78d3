//! Evaluation procedures: model prediction accuracy as a function of the
//! fraction of RPs used for fitting, positioning accuracy and virtualization
//! gain over (dʳ, dᵛ, k) grids, and validity of the `k_est` rule.

use std::path::Path;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit_samples, predict_for_locations, FitResult, FitSample, FitStrategy, StrategyKind};
use crate::floorplan::Floorplan;
use crate::io::{to_json_bytes, write_atomic};
use crate::positioning::{argmin_k, error_table, k_est_counts, TestPoint, DEFAULT_ORDER};
use crate::propagation::{AccessPoint, ModelKind, PropagationParams};
use crate::radiomap::{
    generate_virtual_fingerprints, place_virtual_rps, select_rp_indices, Placement, Radiomap, ReferencePoint,
    DETECTION_FLOOR_DBM, SENTINEL_DBM,
};
use crate::rng::{child_seed, streams};
use crate::simulator::{Campaign, WorldSpec};
use crate::stats::{box_stats, cdf, mean, BoxStats};

pub const RHO_GRID: [f64; 4] = [0.1, 0.2, 0.5, 1.0];
pub const DV_GRID: [f64; 7] = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0];
pub const ALPHA_MIN: f64 = 0.01;
pub const ALPHA_MAX: f64 = 0.25;
pub const ALPHA_STEP: f64 = 0.01;

/// Everything the evaluation procedures consume: the environment, the full
/// set of real RPs (`N^{r,tot}`) and the test points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub plan: Floorplan,
    pub aps: Vec<AccessPoint>,
    pub real_rps: Vec<ReferencePoint>,
    pub test_points: Vec<TestPoint>,
    pub sentinel_dbm: f64,
    pub detection_floor_dbm: f64,
}

impl Dataset {
    pub fn new(plan: Floorplan, aps: Vec<AccessPoint>, real_rps: Vec<ReferencePoint>, test_points: Vec<TestPoint>) -> Self {
        Dataset {
            plan,
            aps,
            real_rps,
            test_points,
            sentinel_dbm: SENTINEL_DBM,
            detection_floor_dbm: DETECTION_FLOOR_DBM,
        }
    }

    pub fn from_campaign(world: &WorldSpec, campaign: &Campaign) -> Result<Self> {
        let mut d = Dataset::new(
            world.plan.clone(),
            world.aps.clone(),
            campaign.real_rps(&world.aps)?,
            campaign.test_points.clone(),
        );
        d.detection_floor_dbm = world.detection_floor_dbm;
        Ok(d)
    }

    pub fn area(&self) -> f64 {
        self.plan.area()
    }

    /// Height at which virtual RPs are placed: the mean real-RP height.
    pub fn rp_height(&self) -> f64 {
        mean(&self.real_rps.iter().map(|r| r.position.z).collect::<Vec<_>>()).unwrap_or(0.0)
    }

    /// Sorted indices of the real RPs kept at fraction `rho`.
    pub fn selection(&self, rho: f64) -> Result<Vec<usize>> {
        let positions: Vec<_> = self.real_rps.iter().map(|r| r.position).collect();
        let mut idx = select_rp_indices(&positions, rho)?;
        idx.sort_unstable();
        Ok(idx)
    }

    pub fn samples(&self, indices: &[usize]) -> Vec<FitSample> {
        indices
            .iter()
            .flat_map(|&i| {
                let rp = &self.real_rps[i];
                rp.fingerprint.0.iter().enumerate().filter_map(move |(l, v)| {
                    v.map(|rss| FitSample {
                        ap_index: l,
                        location: rp.position,
                        rss,
                    })
                })
            })
            .collect()
    }

    pub fn fit(&self, indices: &[usize], strategy: &FitStrategy, model: ModelKind) -> Result<FitResult> {
        fit_samples(strategy, model, &self.plan, &self.aps, &self.samples(indices), &PropagationParams::default())
    }

    /// Selected real RPs plus `⌈dᵛ·|A|⌉` virtual RPs predicted by `fit`.
    pub fn radiomap(&self, indices: &[usize], d_virtual: f64, fit: Option<&FitResult>, placement: Placement) -> Result<Radiomap> {
        let mut rps: Vec<ReferencePoint> = indices.iter().map(|&i| self.real_rps[i].clone()).collect();
        if d_virtual > 0.0 {
            let fit = fit.ok_or_else(|| Error::InvalidParameter("virtual RPs need a fitted model".into()))?;
            let positions = place_virtual_rps(&self.plan, d_virtual, placement, self.rp_height())?;
            rps.extend(generate_virtual_fingerprints(
                fit,
                &self.plan,
                &self.aps,
                &positions,
                self.detection_floor_dbm,
            )?);
        }
        Radiomap::new(self.aps.clone(), self.sentinel_dbm, self.area(), rps)
    }
}

fn check_rho_grid(rho_grid: &[f64]) -> Result<()> {
    match rho_grid.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        Some(r) => Err(Error::InvalidParameter(format!("rho values must lie in (0, 1], got {r}"))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// prediction accuracy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub ap: String,
    pub rp: usize,
    /// `|s − ŝ|` in dB.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApPrediction {
    pub ap: String,
    pub mean_delta: f64,
    pub stats: BoxStats,
    pub cdf: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCell {
    pub rho: f64,
    pub n_real: usize,
    pub strategy: StrategyKind,
    pub model: ModelKind,
    /// Set when the fit failed; the cell then has no errors.
    pub error: Option<String>,
    pub residual_rms: Option<f64>,
    pub pairs: Vec<PairError>,
    pub per_ap: Vec<ApPrediction>,
    /// Mean over APs of the per-AP mean error.
    pub mean_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionReport {
    pub cells: Vec<PredictionCell>,
}

impl PredictionReport {
    pub fn cell(&self, rho: f64, strategy: StrategyKind, model: ModelKind) -> Option<&PredictionCell> {
        self.cells
            .iter()
            .find(|c| c.rho == rho && c.strategy == strategy && c.model == model)
    }
}

/// For every (ρ, strategy, model): fit on `⌈ρ·N^{r,tot}⌉` RPs, predict at all
/// `N^{r,tot}` RP locations and score `|s − ŝ|` where the AP was detected.
/// Fit failures are recorded in the cell.
pub fn run_prediction_analysis(
    data: &Dataset,
    rho_grid: &[f64],
    strategies: &[FitStrategy],
    models: &[ModelKind],
) -> Result<PredictionReport> {
    check_rho_grid(rho_grid)?;
    let locations: Vec<_> = data.real_rps.iter().map(|r| r.position).collect();
    let mut cells = Vec::new();
    for &rho in rho_grid {
        let idx = data.selection(rho)?;
        for strategy in strategies {
            for &model in models {
                let mut cell = PredictionCell {
                    rho,
                    n_real: idx.len(),
                    strategy: strategy.kind(),
                    model,
                    error: None,
                    residual_rms: None,
                    pairs: Vec::new(),
                    per_ap: Vec::new(),
                    mean_delta: None,
                };
                let outcome = data
                    .fit(&idx, strategy, model)
                    .and_then(|f| predict_for_locations(&f, model, &data.plan, &data.aps, &locations).map(|p| (f, p)));
                match outcome {
                    Ok((fit, predicted)) => {
                        cell.residual_rms = Some(fit.residual_rms);
                        fill_prediction_cell(&mut cell, data, &predicted);
                    }
                    Err(e) => {
                        warn!("prediction cell rho={rho} {} {model}: {e}", strategy.kind());
                        cell.error = Some(e.to_string());
                    }
                }
                cells.push(cell);
            }
        }
    }
    Ok(PredictionReport { cells })
}

fn fill_prediction_cell(cell: &mut PredictionCell, data: &Dataset, predicted: &[Vec<f64>]) {
    let mut ap_means = Vec::new();
    for (l, ap) in data.aps.iter().enumerate() {
        let deltas: Vec<f64> = data
            .real_rps
            .iter()
            .zip(predicted)
            .enumerate()
            .filter_map(|(n, (rp, pred))| rp.fingerprint.0[l].map(|s| (n, (s - pred[l]).abs())))
            .map(|(n, delta)| {
                cell.pairs.push(PairError {
                    ap: ap.id.clone(),
                    rp: n,
                    delta,
                });
                delta
            })
            .collect();
        if let Some(stats) = box_stats(&deltas) {
            ap_means.push(stats.mean);
            cell.per_ap.push(ApPrediction {
                ap: ap.id.clone(),
                mean_delta: stats.mean,
                cdf: cdf(&deltas),
                stats,
            });
        }
    }
    cell.mean_delta = mean(&ap_means);
}

// ---------------------------------------------------------------------------
// positioning accuracy and virtualization gain

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainPolicy {
    /// Each cell, including the dᵛ = 0 baseline, at its own `k_opt`.
    KOpt,
    /// Both cells at the same fixed `k`.
    FixedK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementKind {
    Grid,
    Random,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub rho_grid: Vec<f64>,
    /// Virtual densities to evaluate; the dᵛ = 0 baseline is always added.
    pub dv_grid: Vec<f64>,
    /// Fixed `k` values reported alongside `k_opt`.
    pub k_grid: Vec<usize>,
    pub strategy: FitStrategy,
    pub model: ModelKind,
    pub placement: PlacementKind,
    pub order: f64,
    pub gain_policy: GainPolicy,
    /// Seed for random virtual placement.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            rho_grid: RHO_GRID.to_vec(),
            dv_grid: DV_GRID.to_vec(),
            k_grid: (1..=10).collect(),
            strategy: FitStrategy::EnvironmentFitting,
            model: ModelKind::Mwmf,
            placement: PlacementKind::Grid,
            order: DEFAULT_ORDER,
            gain_policy: GainPolicy::KOpt,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub k: usize,
    /// ε_i per TP, in TP order.
    pub errors: Vec<f64>,
    pub stats: BoxStats,
    pub cdf: Vec<(f64, f64)>,
    /// Virtualization gain against the same ρ's dᵛ = 0 cell; `None` for the
    /// baseline itself.
    pub gain: Option<f64>,
}

impl ErrorSummary {
    fn new(k: usize, errors: Vec<f64>) -> Option<Self> {
        let stats = box_stats(&errors)?;
        Some(ErrorSummary {
            k,
            cdf: cdf(&errors),
            errors,
            stats,
            gain: None,
        })
    }

    pub fn mean(&self) -> f64 {
        self.stats.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningCell {
    pub rho: f64,
    pub n_real: usize,
    pub n_virtual: usize,
    pub d_real: f64,
    pub d_virtual: f64,
    pub strategy: StrategyKind,
    pub model: ModelKind,
    pub error: Option<String>,
    pub k_opt: Option<usize>,
    /// ε̄(k) for k = 1..=N.
    pub mean_error_by_k: Vec<f64>,
    pub at_k_opt: Option<ErrorSummary>,
    pub by_k: Vec<ErrorSummary>,
}

impl PositioningCell {
    pub fn n(&self) -> usize {
        self.n_real + self.n_virtual
    }

    pub fn mean_error_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.mean_error_by_k.get(i).copied())
    }

    pub fn mean_error_k_opt(&self) -> Option<f64> {
        self.at_k_opt.as_ref().map(ErrorSummary::mean)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PositioningReport {
    pub cells: Vec<PositioningCell>,
}

impl PositioningReport {
    /// The cell with the given ρ and (nominal) virtual density.
    pub fn cell(&self, rho: f64, d_virtual_nominal: f64) -> Option<&PositioningCell> {
        self.cells.iter().find(|c| c.rho == rho && nominal_dv_matches(c, d_virtual_nominal))
    }
}

fn nominal_dv_matches(cell: &PositioningCell, dv: f64) -> bool {
    if dv == 0.0 {
        cell.n_virtual == 0
    } else {
        cell.n_virtual > 0 && (cell.d_virtual - dv).abs() <= 0.5 / (cell.n_real + cell.n_virtual) as f64 + dv * 0.05
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub rho: f64,
    pub d_real: f64,
    pub d_virtual: f64,
    /// `None` when computed at each cell's own `k_opt`.
    pub k: Option<usize>,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub policy: GainPolicy,
    pub entries: Vec<GainEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub positioning: PositioningReport,
    pub gain: GainReport,
}

/// Full factorial sweep over ρ (real density) × {0, dᵛ...} with `k_opt` and
/// fixed-`k` summaries per cell and virtualization gains.
pub fn run_positioning_sweep(data: &Dataset, cfg: &SweepConfig) -> Result<SweepReport> {
    check_rho_grid(&cfg.rho_grid)?;
    if data.test_points.is_empty() {
        return Err(Error::InvalidParameter("positioning sweep needs test points".into()));
    }
    if let Some(dv) = cfg.dv_grid.iter().find(|&&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidParameter(format!("virtual densities must be positive, got {dv}")));
    }
    let area = data.area();
    let mut cells = Vec::new();
    let mut cell_counter = 0u64;
    for &rho in &cfg.rho_grid {
        let idx = data.selection(rho)?;
        let fit = data.fit(&idx, &cfg.strategy, cfg.model);
        if let Err(e) = &fit {
            warn!("rho={rho}: fit failed: {e}");
        }
        for dv in std::iter::once(0.0).chain(cfg.dv_grid.iter().copied()) {
            cell_counter += 1;
            let placement = match cfg.placement {
                PlacementKind::Grid => Placement::Grid,
                PlacementKind::Random => Placement::Random {
                    seed: child_seed(cfg.seed, streams::PLACEMENT, cell_counter),
                },
            };
            let map = match (&fit, dv > 0.0) {
                (Err(e), true) => Err(Error::InvalidParameter(format!("fit failed: {e}"))),
                (Ok(f), _) => data.radiomap(&idx, dv, Some(f), placement),
                (Err(_), false) => data.radiomap(&idx, 0.0, None, placement),
            };
            let n_virtual = if dv > 0.0 {
                crate::radiomap::virtual_rp_count(dv, area)
            } else {
                0
            };
            let mut cell = PositioningCell {
                rho,
                n_real: idx.len(),
                n_virtual,
                d_real: idx.len() as f64 / area,
                d_virtual: n_virtual as f64 / area,
                strategy: cfg.strategy.kind(),
                model: cfg.model,
                error: None,
                k_opt: None,
                mean_error_by_k: Vec::new(),
                at_k_opt: None,
                by_k: Vec::new(),
            };
            match map.and_then(|m| evaluate_map(&m, data, cfg, &mut cell)) {
                Ok(()) => debug!(
                    "rho={rho} dv={dv}: k_opt={:?} mean={:?}",
                    cell.k_opt,
                    cell.mean_error_k_opt()
                ),
                Err(e) => cell.error = Some(e.to_string()),
            }
            cells.push(cell);
        }
    }
    let entries = attach_gains(&mut cells, cfg.gain_policy);
    Ok(SweepReport {
        positioning: PositioningReport { cells },
        gain: GainReport {
            policy: cfg.gain_policy,
            entries,
        },
    })
}

fn evaluate_map(map: &Radiomap, data: &Dataset, cfg: &SweepConfig, cell: &mut PositioningCell) -> Result<()> {
    let n = map.len();
    let table = error_table(map, &data.test_points, n, cfg.order)?;
    cell.mean_error_by_k = table.iter().map(|e| mean(e).unwrap_or(f64::NAN)).collect();
    let k_opt = argmin_k(&cell.mean_error_by_k, 1..=n);
    cell.k_opt = Some(k_opt);
    cell.at_k_opt = ErrorSummary::new(k_opt, table[k_opt - 1].clone());
    cell.by_k = cfg
        .k_grid
        .iter()
        .filter(|&&k| k >= 1 && k <= n)
        .filter_map(|&k| ErrorSummary::new(k, table[k - 1].clone()))
        .collect();
    Ok(())
}

/// `G = ε̄(dʳ, 0, k) / ε̄(dʳ, dᵛ, k)` for every dᵛ > 0 cell.
fn attach_gains(cells: &mut [PositioningCell], policy: GainPolicy) -> Vec<GainEntry> {
    let mut entries = Vec::new();
    let baselines: Vec<(f64, Option<ErrorSummary>, Vec<ErrorSummary>)> = cells
        .iter()
        .filter(|c| c.n_virtual == 0)
        .map(|c| (c.rho, c.at_k_opt.clone(), c.by_k.clone()))
        .collect();
    for cell in cells.iter_mut().filter(|c| c.n_virtual > 0) {
        let Some((_, base_opt, base_by_k)) = baselines.iter().find(|b| b.0 == cell.rho) else {
            continue;
        };
        if let (Some(base), Some(mine)) = (base_opt, cell.at_k_opt.as_mut()) {
            mine.gain = Some(base.mean() / mine.mean());
            if policy == GainPolicy::KOpt {
                entries.push(GainEntry {
                    rho: cell.rho,
                    d_real: cell.d_real,
                    d_virtual: cell.d_virtual,
                    k: None,
                    gain: base.mean() / mine.mean(),
                });
            }
        }
        for s in cell.by_k.iter_mut() {
            if let Some(base) = base_by_k.iter().find(|b| b.k == s.k) {
                s.gain = Some(base.mean() / s.mean());
                if policy == GainPolicy::FixedK(s.k) {
                    entries.push(GainEntry {
                        rho: cell.rho,
                        d_real: cell.d_real,
                        d_virtual: cell.d_virtual,
                        k: Some(s.k),
                        gain: base.mean() / s.mean(),
                    });
                }
            }
        }
    }
    entries
}

// ---------------------------------------------------------------------------
// k_est validity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KestPoint {
    pub alpha: f64,
    pub k_est: usize,
    pub mean_error: f64,
    /// `ε̄(k_est(α)) − ε̄(k_opt)`
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KestCell {
    pub rho: f64,
    pub n_real: usize,
    pub n_virtual: usize,
    pub d_real: f64,
    pub d_virtual: f64,
    pub k_opt: usize,
    pub mean_error_k_opt: f64,
    pub points: Vec<KestPoint>,
}

impl KestCell {
    pub fn beta_at(&self, alpha: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.alpha - alpha).abs() < 1e-12)
            .map(|p| p.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KestReport {
    pub cells: Vec<KestCell>,
}

/// Evenly spaced α values from `min` to `max` inclusive.
pub fn alpha_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha range needs 0 < min <= max and step > 0 (min={min}, max={max}, step={step})"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    // rounding keeps grid points such as 0.05 exact
    Ok((0..=n)
        .map(|i| ((min + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// β(dʳ, dᵛ, α) for every evaluated cell with dᵛ > 0, or for the dᵛ = 0
/// cells when the sweep had no virtual densities.
pub fn kest_from_sweep(report: &PositioningReport, alphas: &[f64]) -> Result<KestReport> {
    let want_virtual = report.cells.iter().any(|c| c.n_virtual > 0);
    let mut cells = Vec::new();
    for c in report.cells.iter().filter(|c| (c.n_virtual > 0) == want_virtual) {
        let (Some(k_opt), Some(base)) = (c.k_opt, c.mean_error_k_opt()) else {
            continue;
        };
        let points = alphas
            .iter()
            .map(|&alpha| {
                let k = k_est_counts(c.n_real, c.n_virtual, alpha)?.min(c.n());
                let e = c.mean_error_at(k).expect("curve covers 1..=N");
                Ok(KestPoint {
                    alpha,
                    k_est: k,
                    mean_error: e,
                    beta: e - base,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(KestCell {
            rho: c.rho,
            n_real: c.n_real,
            n_virtual: c.n_virtual,
            d_real: c.d_real,
            d_virtual: c.d_virtual,
            k_opt,
            mean_error_k_opt: base,
            points,
        });
    }
    Ok(KestReport { cells })
}

/// Runs the positioning sweep at the single virtual density `dv_max` and
/// evaluates β over `alphas`.
pub fn run_kest_sweep(data: &Dataset, cfg: &SweepConfig, dv_max: f64, alphas: &[f64]) -> Result<KestReport> {
    let sweep_cfg = SweepConfig {
        dv_grid: if dv_max > 0.0 { vec![dv_max] } else { Vec::new() },
        k_grid: Vec::new(),
        ..cfg.clone()
    };
    let sweep = run_positioning_sweep(data, &sweep_cfg)?;
    kest_from_sweep(&sweep.positioning, alphas)
}

// ---------------------------------------------------------------------------
// report emission

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Tabular view of a report: one row per sweep cell.
pub trait CsvTable {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl CsvTable for PredictionReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "rho", "n_real", "strategy", "model", "ap", "mean_delta_db", "p25", "p50", "p75", "min", "max", "status",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for c in &self.cells {
            let lead = vec![num(c.rho), c.n_real.to_string(), c.strategy.to_string(), c.model.to_string()];
            if let Some(e) = &c.error {
                let mut r = lead.clone();
                r.extend(["".into(), "".into(), "".into(), "".into(), "".into(), "".into(), "".into(), e.clone()]);
                rows.push(r);
                continue;
            }
            for ap in &c.per_ap {
                let s = &ap.stats;
                let mut r = lead.clone();
                r.extend([
                    ap.ap.clone(),
                    num(ap.mean_delta),
                    num(s.p25),
                    num(s.p50),
                    num(s.p75),
                    num(s.min),
                    num(s.max),
                    "ok".into(),
                ]);
                rows.push(r);
            }
            let mut r = lead;
            r.extend([
                "all".into(),
                opt(c.mean_delta),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
                "ok".into(),
            ]);
            rows.push(r);
        }
        rows
    }
}

const POSITIONING_HEADER: [&str; 12] = [
    "d_real",
    "d_virtual",
    "k",
    "strategy",
    "model",
    "mean_error_m",
    "p25",
    "p50",
    "p75",
    "min",
    "max",
    "gain",
];

fn positioning_row(c: &PositioningCell, s: Option<&ErrorSummary>) -> Vec<String> {
    let mut r = vec![num(c.d_real), num(c.d_virtual)];
    match s {
        Some(s) => r.extend([
            s.k.to_string(),
            c.strategy.to_string(),
            c.model.to_string(),
            num(s.mean()),
            num(s.stats.p25),
            num(s.stats.p50),
            num(s.stats.p75),
            num(s.stats.min),
            num(s.stats.max),
            opt(s.gain),
        ]),
        None => {
            r.extend(["".into(), c.strategy.to_string(), c.model.to_string()]);
            r.extend(std::iter::repeat_n(String::new(), 7));
        }
    }
    r
}

impl CsvTable for PositioningReport {
    fn header(&self) -> Vec<&'static str> {
        POSITIONING_HEADER.to_vec()
    }

    /// One row per cell, at the cell's `k_opt`.
    fn rows(&self) -> Vec<Vec<String>> {
        self.cells.iter().map(|c| positioning_row(c, c.at_k_opt.as_ref())).collect()
    }
}

/// Fixed-`k` rows of a positioning report.
pub struct ByK<'a>(pub &'a PositioningReport);

impl CsvTable for ByK<'_> {
    fn header(&self) -> Vec<&'static str> {
        POSITIONING_HEADER.to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0
            .cells
            .iter()
            .flat_map(|c| c.by_k.iter().map(move |s| positioning_row(c, Some(s))))
            .collect()
    }
}

impl CsvTable for GainReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["rho", "d_real", "d_virtual", "k", "gain"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .map(|e| {
                vec![
                    num(e.rho),
                    num(e.d_real),
                    num(e.d_virtual),
                    e.k.map_or_else(|| "k_opt".to_string(), |k| k.to_string()),
                    num(e.gain),
                ]
            })
            .collect()
    }
}

impl CsvTable for KestReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "d_real",
            "d_virtual",
            "alpha",
            "k_est",
            "k_opt",
            "mean_error_k_est_m",
            "mean_error_k_opt_m",
            "beta_m",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .flat_map(|c| {
                c.points.iter().map(move |p| {
                    vec![
                        num(c.d_real),
                        num(c.d_virtual),
                        num(p.alpha),
                        p.k_est.to_string(),
                        c.k_opt.to_string(),
                        num(p.mean_error),
                        num(c.mean_error_k_opt),
                        num(p.beta),
                    ]
                })
            })
            .collect()
    }
}

pub fn csv_bytes(table: &impl CsvTable) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(table.header()).expect("in-memory CSV");
    for row in table.rows() {
        w.write_record(&row).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

/// Writes a report as CSV (one row per sweep cell) or as a JSON document.
pub fn emit_report<T: CsvTable + Serialize>(report: &T, path: &Path, format: ReportFormat) -> Result<()> {
    let bytes = match format {
        ReportFormat::Csv => csv_bytes(report),
        ReportFormat::Json => to_json_bytes(report),
    };
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_grid_matches_published_bounds() {
        let g = alpha_grid(ALPHA_MIN, ALPHA_MAX, ALPHA_STEP).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[4], 0.05);
        assert_eq!(*g.last().unwrap(), 0.25);
        assert!(alpha_grid(0.0, 0.2, 0.01).is_err());
    }

    #[test]
    fn empty_reports_emit_header_only() {
        let csv = String::from_utf8(csv_bytes(&PositioningReport::default())).unwrap();
        assert_eq!(csv, "d_real,d_virtual,k,strategy,model,mean_error_m,p25,p50,p75,min,max,gain\n");
        let csv = String::from_utf8(csv_bytes(&KestReport::default())).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn rho_grid_validation() {
        assert!(check_rho_grid(&RHO_GRID).is_ok());
        assert!(check_rho_grid(&[0.0]).is_err());
        assert!(check_rho_grid(&[1.2]).is_err());
    }
}
