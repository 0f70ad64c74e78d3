//! Synthetic testbeds and measurement campaigns.
//!
//! A [`WorldSpec`] holds a floorplan, AP deployment and ground-truth MWMF
//! parameters. The true RSS may additionally carry a static [`Mismatch`]
//! term that the MWMF model cannot represent: a spatially correlated
//! shadowing field per AP plus an extra distance slope beyond a breakpoint.
//! Scans add i.i.d. Gaussian shadowing and, for crowdsourcing-like
//! campaigns, a per-campaign device bias.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::{link_distance, Bounds, Floorplan, Obstacle, Point3};
use crate::measurements::{MeasurementRecord, MeasurementSet, MAX_RSS_DBM, MIN_RSS_DBM};
use crate::positioning::TestPoint;
use crate::propagation::{predict_rss, validate_aps, AccessPoint, ModelKind, PropagationParams};
use crate::radiomap::{build_real_fingerprints, lattice, Fingerprint, ReferencePoint, DETECTION_FLOOR_DBM};
use crate::rng::{stream_rng, streams};

pub const DEFAULT_SHADOWING_SIGMA_DB: f64 = 3.0;
pub const DEFAULT_DEVICE_BIAS_SIGMA_DB: f64 = 2.0;
pub const DEFAULT_AP_EIRP_DBM: f64 = 20.0;
const AP_HEIGHT_M: f64 = 2.8;
const DEVICE_HEIGHT_M: f64 = 1.0;
const FIELD_FEATURES: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-scan Gaussian shadowing in dB.
    pub shadowing_sigma_db: f64,
    /// Standard deviation of the per-campaign device offset in dB.
    pub device_bias_sigma_db: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        shadowing_sigma_db: 0.0,
        device_bias_sigma_db: 0.0,
    };
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            shadowing_sigma_db: DEFAULT_SHADOWING_SIGMA_DB,
            device_bias_sigma_db: DEFAULT_DEVICE_BIAS_SIGMA_DB,
        }
    }
}

/// Static deviation of the true channel from the MWMF form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    /// Standard deviation of the spatially correlated field, dB.
    pub field_sigma_db: f64,
    /// Correlation length of the field, m.
    pub correlation_m: f64,
    /// Standard deviation of the short-range (static fading) field, dB.
    pub fading_sigma_db: f64,
    /// Correlation length of the fading field, m.
    pub fading_correlation_m: f64,
    /// Distance beyond which the extra slope applies, m.
    pub breakpoint_m: f64,
    /// Additional path-loss exponent beyond the breakpoint.
    pub extra_gamma: f64,
}

impl Default for Mismatch {
    fn default() -> Self {
        Mismatch {
            field_sigma_db: 2.0,
            correlation_m: 2.5,
            fading_sigma_db: 5.0,
            fading_correlation_m: 0.5,
            breakpoint_m: 12.0,
            extra_gamma: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub name: String,
    pub plan: Floorplan,
    pub aps: Vec<AccessPoint>,
    /// Ground-truth MWMF parameters per AP id.
    pub truth: BTreeMap<String, PropagationParams>,
    pub noise: NoiseModel,
    pub mismatch: Option<Mismatch>,
    pub detection_floor_dbm: f64,
    /// Height of RPs and TPs above the floor plane, m.
    pub device_height_m: f64,
    /// Size of the full real-RP grid `N^{r,tot}`.
    pub n_rp_total: usize,
    pub n_test_points: usize,
    pub seed: u64,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        validate_aps(&self.aps)?;
        if self.noise.shadowing_sigma_db < 0.0 || self.noise.device_bias_sigma_db < 0.0 {
            return Err(Error::InvalidParameter("noise standard deviations must be nonnegative".into()));
        }
        for ap in &self.aps {
            if !self.plan.contains(&ap.position) {
                return Err(Error::InvalidGeometry(format!("AP {} lies outside the floorplan", ap.id)));
            }
            if !self.truth.contains_key(&ap.id) {
                return Err(Error::UnknownAp(ap.id.clone()));
            }
        }
        if self.n_rp_total == 0 {
            return Err(Error::InvalidParameter("the RP grid must contain at least one point".into()));
        }
        Ok(())
    }

    /// Disables scan noise, device bias and model mismatch.
    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseModel::NONE;
        self.mismatch = None;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_mismatch(mut self, mismatch: Option<Mismatch>) -> Self {
        self.mismatch = mismatch;
        self
    }

    pub fn device_z(&self) -> f64 {
        self.plan.floors()[0] + self.device_height_m
    }

    /// The full real-RP grid of this testbed.
    pub fn rp_grid(&self) -> Vec<Point3> {
        lattice(self.plan.bounds(), self.n_rp_total, self.device_z())
    }

    /// Uniformly random test-point positions drawn from the world seed.
    pub fn test_point_positions(&self) -> Vec<Point3> {
        let mut rng = stream_rng(self.seed, streams::TP_POSITIONS);
        let b = *self.plan.bounds();
        let z = self.device_z();
        (0..self.n_test_points)
            .map(|_| {
                Point3::new(
                    rng.random_range(b.min_x + 0.25..b.max_x - 0.25),
                    rng.random_range(b.min_y + 0.25..b.max_y - 0.25),
                    z,
                )
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let world: WorldSpec = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        world.validate().map_err(|e| Error::parse(path, e))?;
        Ok(world)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Template {
    SpinvLike,
    TwistLike,
    Custom(PathBuf),
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spinv_like" | "spinv" => Ok(Template::SpinvLike),
            "twist_like" | "twist" => Ok(Template::TwistLike),
            other => match other.strip_prefix("custom:") {
                Some(path) => Ok(Template::Custom(PathBuf::from(path))),
                None => Err(Error::InvalidParameter(format!(
                    "unknown template {other:?}; expected spinv_like, twist_like or custom:<file>"
                ))),
            },
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Template::SpinvLike => f.write_str("spinv_like"),
            Template::TwistLike => f.write_str("twist_like"),
            Template::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

/// Shared ground truth of the office templates.
pub fn default_truth() -> PropagationParams {
    PropagationParams::walls_doors(2.0, 2.0, 4.0, 1.5)
}

pub fn make_world(template: &Template, seed: u64) -> Result<WorldSpec> {
    let world = match template {
        Template::SpinvLike => spinv_like(seed)?,
        Template::TwistLike => twist_like(seed)?,
        Template::Custom(path) => {
            let mut w = WorldSpec::load(path)?;
            w.seed = seed;
            w
        }
    };
    world.validate()?;
    Ok(world)
}

/// 42 × 12 m single floor; 7 APs on the central corridor line; 72-point RP
/// grid; 31 TPs.
fn spinv_like(seed: u64) -> Result<WorldSpec> {
    let mut rng = stream_rng(seed, streams::LAYOUT);
    let bounds = Bounds::new(0.0, 0.0, 42.0, 12.0);
    let obstacles = office_layout(&mut rng, &bounds, (5.0, 7.0), &[14.0, 28.0]);
    let plan = Floorplan::single_floor(bounds, obstacles)?;
    let aps = (0..7)
        .map(|i| {
            AccessPoint::new(
                format!("ap{}", i + 1),
                Point3::new(3.0 + 6.0 * i as f64, 6.0, AP_HEIGHT_M),
                DEFAULT_AP_EIRP_DBM,
            )
        })
        .collect();
    Ok(world_from(String::from("spinv_like"), plan, aps, 72, 31, seed))
}

/// 30 × 15 m single floor; 4 APs near the corners; 41-point RP grid; 80 TPs.
fn twist_like(seed: u64) -> Result<WorldSpec> {
    let mut rng = stream_rng(seed, streams::LAYOUT);
    let bounds = Bounds::new(0.0, 0.0, 30.0, 15.0);
    let obstacles = office_layout(&mut rng, &bounds, (6.5, 8.5), &[15.0]);
    let plan = Floorplan::single_floor(bounds, obstacles)?;
    let corners = [(1.5, 1.5), (28.5, 1.5), (1.5, 13.5), (28.5, 13.5)];
    let aps = corners
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| AccessPoint::new(format!("ap{}", i + 1), Point3::new(x, y, AP_HEIGHT_M), DEFAULT_AP_EIRP_DBM))
        .collect();
    Ok(world_from(String::from("twist_like"), plan, aps, 41, 80, seed))
}

fn world_from(name: String, plan: Floorplan, aps: Vec<AccessPoint>, n_rp_total: usize, n_test_points: usize, seed: u64) -> WorldSpec {
    let truth = aps.iter().map(|a: &AccessPoint| (a.id.clone(), default_truth())).collect();
    WorldSpec {
        name,
        plan,
        aps,
        truth,
        noise: NoiseModel::default(),
        mismatch: Some(Mismatch::default()),
        detection_floor_dbm: DETECTION_FLOOR_DBM,
        device_height_m: DEVICE_HEIGHT_M,
        n_rp_total,
        n_test_points,
        seed,
    }
}

/// Rooms of random width on both sides of a horizontal corridor. Every room
/// has one door onto the corridor; `fire_doors` puts doors across the
/// corridor at the given x positions.
fn office_layout(rng: &mut ChaCha8Rng, b: &Bounds, corridor: (f64, f64), fire_doors: &[f64]) -> Vec<Obstacle> {
    let (y_lo, y_hi) = corridor;
    let mut out = Vec::new();
    for (front, back) in [(y_lo, b.min_y), (y_hi, b.max_y)] {
        let mut xs = vec![b.min_x];
        loop {
            let next = xs.last().unwrap() + rng.random_range(3.4..5.2);
            if next > b.max_x - 2.5 {
                break;
            }
            xs.push(next);
        }
        xs.push(b.max_x);
        for (i, room) in xs.windows(2).enumerate() {
            let (x0, x1) = (room[0], room[1]);
            let c = rng.random_range(x0 + 0.9..x1 - 0.9);
            out.push(Obstacle::wall(0, [x0, front], [c - 0.5, front]));
            out.push(Obstacle::door(0, [c - 0.5, front], [c + 0.5, front]));
            out.push(Obstacle::wall(0, [c + 0.5, front], [x1, front]));
            if i > 0 {
                out.push(Obstacle::wall(0, [x0, front], [x0, back]));
            }
        }
    }
    for &x in fire_doors {
        out.push(Obstacle::door(0, [x, y_lo], [x, y_hi]));
    }
    out
}

/// `round(dʳ·|A|)` points on the RP lattice at device height `z`.
pub fn grid_rp_positions(plan: &Floorplan, d_real: f64, z: f64) -> Result<Vec<Point3>> {
    if !(d_real > 0.0) || !d_real.is_finite() {
        return Err(Error::InvalidParameter(format!("RP density must be positive, got {d_real}")));
    }
    let n = ((d_real * plan.area()).round() as usize).max(1);
    Ok(lattice(plan.bounds(), n, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    /// Scans averaged per RP (`q`).
    pub rp_scans: usize,
    /// Scans averaged per TP.
    pub tp_scans: usize,
    /// Whether each campaign draws a device offset from the world noise model.
    pub device_bias: bool,
}

impl ScenarioPreset {
    pub const CONTROLLED: ScenarioPreset = ScenarioPreset {
        rp_scans: 50,
        tp_scans: 50,
        device_bias: false,
    };
    pub const CROWDSOURCING_LIKE: ScenarioPreset = ScenarioPreset {
        rp_scans: 5,
        tp_scans: 1,
        device_bias: true,
    };
}

impl FromStr for ScenarioPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "controlled" => Ok(ScenarioPreset::CONTROLLED),
            "crowdsourcing" | "crowdsourcing_like" | "crowdsourcing-like" => Ok(ScenarioPreset::CROWDSOURCING_LIKE),
            other => Err(Error::InvalidParameter(format!("unknown preset {other:?}"))),
        }
    }
}

/// Ground-truth channel of a world, with the mismatch fields instantiated.
pub struct TruthModel<'a> {
    world: &'a WorldSpec,
    fields: Vec<[RandomField; 2]>,
}

struct RandomField {
    freqs: Vec<[f64; 2]>,
    phases: Vec<f64>,
    scale: f64,
}

impl RandomField {
    /// Random Fourier features of a squared-exponential covariance.
    fn new(rng: &mut ChaCha8Rng, sigma: f64, length: f64) -> Self {
        let normal = Normal::new(0.0, 1.0 / length.max(1e-6)).expect("positive length");
        let freqs = (0..FIELD_FEATURES)
            .map(|_| [normal.sample(rng), normal.sample(rng)])
            .collect();
        let phases = (0..FIELD_FEATURES).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        RandomField {
            freqs,
            phases,
            scale: sigma * (2.0 / FIELD_FEATURES as f64).sqrt(),
        }
    }

    fn at(&self, p: &Point3) -> f64 {
        self.freqs
            .iter()
            .zip(&self.phases)
            .map(|(w, phi)| (w[0] * p.x + w[1] * p.y + phi).cos())
            .sum::<f64>()
            * self.scale
    }
}

impl<'a> TruthModel<'a> {
    pub fn new(world: &'a WorldSpec) -> Self {
        let mut rng = stream_rng(world.seed, streams::MISMATCH);
        let fields = match world.mismatch {
            Some(m) => world
                .aps
                .iter()
                .map(|_| {
                    [
                        RandomField::new(&mut rng, m.field_sigma_db, m.correlation_m),
                        RandomField::new(&mut rng, m.fading_sigma_db, m.fading_correlation_m),
                    ]
                })
                .collect(),
            None => Vec::new(),
        };
        TruthModel { world, fields }
    }

    /// Noise-free RSS of AP `ap_index` at `p`.
    pub fn rss(&self, ap_index: usize, p: &Point3) -> Result<f64> {
        let ap = &self.world.aps[ap_index];
        let params = self
            .world
            .truth
            .get(&ap.id)
            .ok_or_else(|| Error::UnknownAp(ap.id.clone()))?;
        let mut rss = predict_rss(ModelKind::Mwmf, params, &self.world.plan, ap, p)?;
        if let Some(m) = &self.world.mismatch {
            let d = link_distance(&ap.position, p)?;
            if d > m.breakpoint_m {
                rss -= 10.0 * m.extra_gamma * (d / m.breakpoint_m).log10();
            }
            if let Some(fields) = self.fields.get(ap_index) {
                rss += fields.iter().map(|f| f.at(p)).sum::<f64>();
            }
        }
        Ok(rss)
    }
}

/// Scans collected in one simulated survey.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub rp_measurements: MeasurementSet,
    pub tp_measurements: MeasurementSet,
    pub test_points: Vec<TestPoint>,
}

impl Campaign {
    /// Scan-averaged real RPs, one per RP position, in position order.
    pub fn real_rps(&self, aps: &[AccessPoint]) -> Result<Vec<ReferencePoint>> {
        build_real_fingerprints(&self.rp_measurements, aps)
    }
}

/// Simulates an RP survey and a TP collection. The two are separate
/// campaigns: with a device-bias preset each gets its own offset draw.
pub fn simulate_campaign(
    world: &WorldSpec,
    rp_positions: &[Point3],
    tp_positions: &[Point3],
    preset: &ScenarioPreset,
    seed: u64,
) -> Result<Campaign> {
    for p in rp_positions.iter().chain(tp_positions) {
        if !world.plan.contains(p) {
            return Err(Error::InvalidGeometry(format!("position {p} lies outside the floorplan")));
        }
    }
    if preset.rp_scans == 0 || preset.tp_scans == 0 {
        return Err(Error::InvalidParameter("scan counts must be at least 1".into()));
    }
    let truth = TruthModel::new(world);
    let mut rp_rng = stream_rng(seed, streams::RP_CAMPAIGN);
    let mut tp_rng = stream_rng(seed, streams::TP_CAMPAIGN);
    let rp_measurements = survey(world, &truth, rp_positions, "rp", preset.rp_scans, preset.device_bias, &mut rp_rng)?;
    let tp_measurements = survey(world, &truth, tp_positions, "tp", preset.tp_scans, preset.device_bias, &mut tp_rng)?;
    let tp_sites = if tp_positions.is_empty() {
        Vec::new()
    } else {
        build_real_fingerprints(&tp_measurements, &world.aps)?
    };
    let test_points = tp_sites
        .into_iter()
        .map(|rp| TestPoint {
            position: rp.position,
            fingerprint: rp.fingerprint,
        })
        .collect();
    Ok(Campaign {
        rp_measurements,
        tp_measurements,
        test_points,
    })
}

fn survey(
    world: &WorldSpec,
    truth: &TruthModel<'_>,
    positions: &[Point3],
    prefix: &str,
    scans: usize,
    device_bias: bool,
    rng: &mut ChaCha8Rng,
) -> Result<MeasurementSet> {
    let shadowing = Normal::new(0.0, world.noise.shadowing_sigma_db)
        .map_err(|e| Error::InvalidParameter(format!("shadowing sigma: {e}")))?;
    let bias = if device_bias && world.noise.device_bias_sigma_db > 0.0 {
        Normal::new(0.0, world.noise.device_bias_sigma_db)
            .map_err(|e| Error::InvalidParameter(format!("device bias sigma: {e}")))?
            .sample(rng)
    } else {
        0.0
    };
    let mut records = Vec::with_capacity(positions.len() * world.aps.len() * scans);
    for (n, p) in positions.iter().enumerate() {
        let rp_id = format!("{prefix}{n:04}");
        for (l, ap) in world.aps.iter().enumerate() {
            let mean = truth.rss(l, p)? + bias;
            for scan in 0..scans {
                let v = mean + shadowing.sample(rng);
                let rss = (v >= world.detection_floor_dbm).then(|| v.clamp(MIN_RSS_DBM, MAX_RSS_DBM));
                records.push(MeasurementRecord {
                    rp_id: rp_id.clone(),
                    location: *p,
                    ap_id: ap.id.clone(),
                    rss,
                    scan_index: scan as u32,
                });
            }
        }
    }
    Ok(MeasurementSet::new(records))
}

/// Fingerprint of the noise-free truth at `p`, with the detection floor applied.
pub fn truth_fingerprint(world: &WorldSpec, truth: &TruthModel<'_>, p: &Point3) -> Result<Fingerprint> {
    Ok(Fingerprint(
        (0..world.aps.len())
            .map(|l| truth.rss(l, p).map(|v| (v >= world.detection_floor_dbm).then_some(v)))
            .collect::<Result<_>>()?,
    ))
}

/// Scales `γ`, `l_c`, every obstacle loss and `l_f` by `1 ± fraction`, each
/// sign drawn independently from `seed`. `l0` and `b` are left alone.
pub fn perturb_params(params: &PropagationParams, fraction: f64, seed: u64) -> PropagationParams {
    let mut rng = stream_rng(seed, streams::NO_FIT);
    let mut scale = || if rng.random::<bool>() { 1.0 + fraction } else { 1.0 - fraction };
    let mut out = params.clone();
    out.gamma *= scale();
    out.l_c *= scale();
    for v in out.losses.values_mut() {
        *v *= scale();
    }
    out.l_f *= scale();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_moves_every_fitted_parameter() {
        let base = default_truth();
        let p = perturb_params(&base, 0.3, 11);
        assert_eq!(p.l0, base.l0);
        for (a, b) in [(p.gamma, base.gamma), (p.l_c, base.l_c), (p.l_f, base.l_f)] {
            assert!(((a / b) - 1.0).abs() - 0.3 < 1e-12);
        }
        for (k, v) in &p.losses {
            assert!(((v / base.losses[k]) - 1.0).abs() - 0.3 < 1e-12);
        }
        assert_eq!(p, perturb_params(&base, 0.3, 11));
    }

    #[test]
    fn template_dimensions() {
        let s = make_world(&Template::SpinvLike, 1).unwrap();
        assert_eq!(s.plan.area(), 504.0);
        assert_eq!(s.aps.len(), 7);
        assert!(s.aps.iter().all(|a| a.position.y == 6.0));
        assert_eq!(s.rp_grid().len(), 72);
        let t = make_world(&Template::TwistLike, 1).unwrap();
        assert_eq!(t.plan.area(), 450.0);
        assert_eq!(t.aps.len(), 4);
        assert_eq!(t.rp_grid().len(), 41);
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(make_world(&Template::SpinvLike, 5).unwrap(), make_world(&Template::SpinvLike, 5).unwrap());
        assert_ne!(
            make_world(&Template::SpinvLike, 5).unwrap().plan,
            make_world(&Template::SpinvLike, 6).unwrap().plan
        );
    }

    #[test]
    fn grid_positions() {
        let s = make_world(&Template::SpinvLike, 1).unwrap();
        let t = make_world(&Template::TwistLike, 1).unwrap();
        assert_eq!(grid_rp_positions(&t.plan, 0.09, 1.0).unwrap().len(), 41);
        assert_eq!(grid_rp_positions(&s.plan, 72.0 / 504.0, 1.0).unwrap().len(), 72);
        assert_eq!(grid_rp_positions(&s.plan, 0.03, 1.0).unwrap().len(), 15);
        let one = grid_rp_positions(&s.plan, 1.0 / 504.0, 1.0).unwrap();
        assert_eq!(one, vec![Point3::new(21.0, 6.0, 1.0)]);
        assert!(grid_rp_positions(&s.plan, 0.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_campaign_equals_truth() {
        let w = make_world(&Template::TwistLike, 3).unwrap().noiseless();
        let pts = w.rp_grid();
        let c = simulate_campaign(&w, &pts[..5], &pts[5..7], &ScenarioPreset::CROWDSOURCING_LIKE, 11).unwrap();
        for r in &c.rp_measurements.records {
            let l = w.aps.iter().position(|a| a.id == r.ap_id).unwrap();
            let truth = predict_rss(ModelKind::Mwmf, &w.truth[&r.ap_id], &w.plan, &w.aps[l], &r.location).unwrap();
            match r.rss {
                Some(v) => assert_eq!(v, truth),
                None => assert!(truth < w.detection_floor_dbm),
            }
        }
        assert_eq!(c.rp_measurements.q(), 5);
        assert_eq!(c.tp_measurements.q(), 1);
        assert_eq!(c.test_points.len(), 2);
    }

    #[test]
    fn out_of_range_ap_is_not_detected() {
        let plan = Floorplan::single_floor(Bounds::new(0.0, 0.0, 2000.0, 10.0), vec![]).unwrap();
        let ap = AccessPoint::new("far", Point3::new(1.0, 5.0, 2.8), 20.0);
        let world = WorldSpec {
            name: "line".into(),
            truth: [("far".to_string(), PropagationParams::one_slope(40.22, 3.0))].into(),
            plan,
            aps: vec![ap],
            noise: NoiseModel::default(),
            mismatch: None,
            detection_floor_dbm: DETECTION_FLOOR_DBM,
            device_height_m: 1.0,
            n_rp_total: 1,
            n_test_points: 0,
            seed: 0,
        };
        let c = simulate_campaign(&world, &[Point3::new(1900.0, 5.0, 1.0)], &[], &ScenarioPreset::CONTROLLED, 1).unwrap();
        assert!(c.rp_measurements.records.iter().all(|r| r.rss.is_none()));
        let csv = String::from_utf8(c.rp_measurements.to_csv_bytes()).unwrap();
        assert!(csv.lines().skip(1).all(|l| l.contains(",ND,")));
    }

    #[test]
    fn campaign_is_reproducible() {
        let w = make_world(&Template::SpinvLike, 2).unwrap();
        let pts = w.rp_grid();
        let tps = w.test_point_positions();
        let a = simulate_campaign(&w, &pts, &tps, &ScenarioPreset::CONTROLLED, 4).unwrap();
        let b = simulate_campaign(&w, &pts, &tps, &ScenarioPreset::CONTROLLED, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rp_measurements.to_csv_bytes(), b.rp_measurements.to_csv_bytes());
    }

    #[test]
    fn world_json_round_trip() {
        let w = make_world(&Template::TwistLike, 8).unwrap();
        let json = serde_json::to_string(&w).unwrap();
        let back: WorldSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn template_parsing() {
        assert_eq!("spinv_like".parse::<Template>().unwrap(), Template::SpinvLike);
        assert_eq!("custom:/tmp/w.json".parse::<Template>().unwrap(), Template::Custom("/tmp/w.json".into()));
        assert!("mall".parse::<Template>().is_err());
        assert!(make_world(&Template::Custom("/nonexistent/world.json".into()), 1).is_err());
    }
}
