//! Multi-wall multi-floor (MWMF) and one-slope path loss.
//!
//! `PL_MWMF = PL_OS + A_MWMF`, with `PL_OS = l0 + 10·γ·log10(d)` and
//! `A_MWMF = l_c + Σ N_{n,i}·l_{n,i} + N_f^((N_f+2)/(N_f+1) − b)·l_f`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::{count_obstructions, link_distance, Floorplan, ObstacleKind, ObstructionCount, Point3};

/// Free-space reference loss at 1 m, 2.45 GHz.
pub const FREE_SPACE_L0_DB: f64 = 40.22;
/// Placeholder per-floor loss; inert while links stay on one floor.
pub const DEFAULT_FLOOR_LOSS_DB: f64 = 18.0;
/// Placeholder empirical 3D parameter; inert while links stay on one floor.
pub const DEFAULT_FLOOR_B: f64 = 0.46;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mwmf")]
    Mwmf,
    #[serde(rename = "one_slope")]
    OneSlope,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Mwmf => "mwmf",
            ModelKind::OneSlope => "one_slope",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mwmf" => Ok(ModelKind::Mwmf),
            "os" | "one_slope" | "one-slope" | "oneslope" => Ok(ModelKind::OneSlope),
            other => Err(Error::InvalidParameter(format!("unknown model {other:?}"))),
        }
    }
}

/// Propagation parameters. The fitted set is `{γ, l_c, losses}`; `l0`,
/// `l_f` and `b` are held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct PropagationParams {
    pub l0: f64,
    pub gamma: f64,
    pub l_c: f64,
    pub losses: BTreeMap<ObstacleKind, f64>,
    pub l_f: f64,
    pub b: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            l0: FREE_SPACE_L0_DB,
            gamma: 2.0,
            l_c: 0.0,
            losses: BTreeMap::new(),
            l_f: DEFAULT_FLOOR_LOSS_DB,
            b: DEFAULT_FLOOR_B,
        }
    }
}

impl PropagationParams {
    /// Free-space one-slope parameters with the given exponent.
    pub fn one_slope(l0: f64, gamma: f64) -> Self {
        PropagationParams {
            l0,
            gamma,
            ..Default::default()
        }
    }

    /// Table-2 style parameter set with one wall type and one door type.
    pub fn walls_doors(gamma: f64, l_c: f64, l_wall: f64, l_door: f64) -> Self {
        let mut losses = BTreeMap::new();
        losses.insert(ObstacleKind::WALL, l_wall);
        losses.insert(ObstacleKind::DOOR, l_door);
        PropagationParams {
            gamma,
            l_c,
            losses,
            ..Default::default()
        }
    }

    pub fn with_loss(mut self, kind: ObstacleKind, db: f64) -> Self {
        self.losses.insert(kind, db);
        self
    }

    pub fn loss(&self, kind: ObstacleKind) -> f64 {
        self.losses.get(&kind).copied().unwrap_or(0.0)
    }

    /// Checks the physical invariants required of user-supplied parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        let all = [self.l0, self.gamma, self.l_c, self.l_f, self.b];
        if all.iter().chain(self.losses.values()).any(|v| !v.is_finite()) {
            return bad("propagation parameters must be finite");
        }
        if self.l0 <= 0.0 {
            return bad("l0 must be positive");
        }
        if self.gamma <= 0.0 {
            return bad("gamma must be positive");
        }
        if self.losses.values().any(|&l| l < 0.0) {
            return bad("per-obstacle losses must be nonnegative");
        }
        if self.l_f < 0.0 {
            return bad("floor loss must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    l0_db: f64,
    gamma: f64,
    #[serde(default)]
    lc_db: f64,
    #[serde(default)]
    losses: BTreeMap<String, f64>,
    #[serde(default = "default_lf")]
    lf_db: f64,
    #[serde(default = "default_b")]
    b: f64,
}

fn default_lf() -> f64 {
    DEFAULT_FLOOR_LOSS_DB
}

fn default_b() -> f64 {
    DEFAULT_FLOOR_B
}

impl TryFrom<ParamsRepr> for PropagationParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        let mut losses = BTreeMap::new();
        for (key, db) in r.losses {
            let kind = ObstacleKind::parse(&key)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown obstacle kind {key:?}")))?;
            losses.insert(kind, db);
        }
        Ok(PropagationParams {
            l0: r.l0_db,
            gamma: r.gamma,
            l_c: r.lc_db,
            losses,
            l_f: r.lf_db,
            b: r.b,
        })
    }
}

impl From<PropagationParams> for ParamsRepr {
    fn from(p: PropagationParams) -> Self {
        ParamsRepr {
            l0_db: p.l0,
            gamma: p.gamma,
            lc_db: p.l_c,
            losses: p.losses.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            lf_db: p.l_f,
            b: p.b,
        }
    }
}

/// Params file: a parameter set tagged with the model it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub model: ModelKind,
    #[serde(flatten)]
    pub params: PropagationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub id: String,
    #[serde(flatten)]
    pub position: Point3,
    #[serde(rename = "eirp_dbm")]
    pub eirp: f64,
}

impl AccessPoint {
    pub fn new(id: impl Into<String>, position: Point3, eirp: f64) -> Self {
        AccessPoint {
            id: id.into(),
            position,
            eirp,
        }
    }
}

/// Checks that AP ids are unique.
pub fn validate_aps(aps: &[AccessPoint]) -> Result<()> {
    let mut ids: Vec<&str> = aps.iter().map(|a| a.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(format!("duplicate AP id {:?}", w[0])));
    }
    Ok(())
}

pub fn path_loss_os(params: &PropagationParams, d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    Ok(params.l0 + 10.0 * params.gamma * d.log10())
}

/// `N_f^((N_f+2)/(N_f+1) − b)·l_f`, zero when no floor is crossed.
pub fn floor_loss(params: &PropagationParams, floors_crossed: u32) -> f64 {
    if floors_crossed == 0 {
        return 0.0;
    }
    let nf = floors_crossed as f64;
    nf.powf((nf + 2.0) / (nf + 1.0) - params.b) * params.l_f
}

pub fn additional_loss(params: &PropagationParams, obs: &ObstructionCount) -> f64 {
    let obstacles: f64 = obs
        .counts
        .iter()
        .map(|(kind, &n)| n as f64 * params.loss(*kind))
        .sum();
    params.l_c + obstacles + floor_loss(params, obs.floors_crossed)
}

pub fn path_loss(model: ModelKind, params: &PropagationParams, plan: &Floorplan, tx: &Point3, rx: &Point3) -> Result<f64> {
    let d = link_distance(tx, rx)?;
    let os = path_loss_os(params, d)?;
    match model {
        ModelKind::OneSlope => Ok(os),
        ModelKind::Mwmf => {
            let obs = count_obstructions(plan, tx, rx)?;
            Ok(os + additional_loss(params, &obs))
        }
    }
}

/// Predicted RSS in dBm: EIRP minus path loss. Not clamped.
pub fn predict_rss(
    model: ModelKind,
    params: &PropagationParams,
    plan: &Floorplan,
    ap: &AccessPoint,
    rx: &Point3,
) -> Result<f64> {
    Ok(ap.eirp - path_loss(model, params, plan, &ap.position, rx)?)
}
