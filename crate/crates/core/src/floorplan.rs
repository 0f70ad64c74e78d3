//! Indoor environment geometry and obstruction counting.
//!
//! Obstacles are 2D segments attached to a floor. A link between two points
//! crosses an obstacle when the 2D projection of the link strictly intersects
//! the obstacle segment. Touching an endpoint or running collinear with an
//! obstacle (within [`GRAZING_TOLERANCE_M`]) counts as no crossing.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which a link is considered to graze an obstacle.
pub const GRAZING_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> Point3 {
        Point3::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleFamily {
    Wall,
    Door,
}

impl ObstacleFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObstacleFamily::Wall => "wall",
            ObstacleFamily::Door => "door",
        }
    }
}

/// Family and type of a 2D obstacle, the key of per-obstacle losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObstacleKind {
    pub family: ObstacleFamily,
    pub type_index: u32,
}

impl ObstacleKind {
    pub const WALL: ObstacleKind = ObstacleKind {
        family: ObstacleFamily::Wall,
        type_index: 1,
    };
    pub const DOOR: ObstacleKind = ObstacleKind {
        family: ObstacleFamily::Door,
        type_index: 1,
    };

    /// Parses `wall`, `door` (type 1) or `wall.2`-style keys.
    pub fn parse(key: &str) -> Option<ObstacleKind> {
        let (family, type_index) = match key.split_once('.') {
            Some((f, t)) => (f, t.parse().ok()?),
            None => (key, 1),
        };
        let family = match family {
            "wall" => ObstacleFamily::Wall,
            "door" => ObstacleFamily::Door,
            _ => return None,
        };
        (type_index >= 1).then_some(ObstacleKind { family, type_index })
    }
}

impl fmt::Display for ObstacleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.type_index == 1 {
            f.write_str(self.family.as_str())
        } else {
            write!(f, "{}.{}", self.family.as_str(), self.type_index)
        }
    }
}

/// A wall or door segment on one floor, as stored in floorplan files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub family: ObstacleFamily,
    pub type_index: u32,
    pub floor: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Obstacle {
    pub fn new(kind: ObstacleKind, floor: usize, a: [f64; 2], b: [f64; 2]) -> Self {
        Obstacle {
            family: kind.family,
            type_index: kind.type_index,
            floor,
            x1: a[0],
            y1: a[1],
            x2: b[0],
            y2: b[1],
        }
    }

    pub fn wall(floor: usize, a: [f64; 2], b: [f64; 2]) -> Self {
        Obstacle::new(ObstacleKind::WALL, floor, a, b)
    }

    pub fn door(floor: usize, a: [f64; 2], b: [f64; 2]) -> Self {
        Obstacle::new(ObstacleKind::DOOR, floor, a, b)
    }

    pub fn kind(&self) -> ObstacleKind {
        ObstacleKind {
            family: self.family,
            type_index: self.type_index,
        }
    }

    pub fn start(&self) -> [f64; 2] {
        [self.x1, self.y1]
    }

    pub fn end(&self) -> [f64; 2] {
        [self.x2, self.y2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Bounds {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        ]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = GRAZING_TOLERANCE_M;
        x >= self.min_x - tol && x <= self.max_x + tol && y >= self.min_y - tol && y <= self.max_y + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FloorplanFile", into = "FloorplanFile")]
pub struct Floorplan {
    bounds: Bounds,
    floors: Vec<f64>,
    obstacles: Vec<Obstacle>,
}

#[derive(Serialize, Deserialize)]
struct FloorplanFile {
    bounds: Bounds,
    floors: Vec<f64>,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
}

impl TryFrom<FloorplanFile> for Floorplan {
    type Error = Error;

    fn try_from(file: FloorplanFile) -> Result<Self> {
        Floorplan::new(file.bounds, file.floors, file.obstacles)
    }
}

impl From<Floorplan> for FloorplanFile {
    fn from(plan: Floorplan) -> Self {
        FloorplanFile {
            bounds: plan.bounds,
            floors: plan.floors,
            obstacles: plan.obstacles,
        }
    }
}

impl Floorplan {
    pub fn new(bounds: Bounds, floors: Vec<f64>, obstacles: Vec<Obstacle>) -> Result<Self> {
        let finite = [bounds.min_x, bounds.min_y, bounds.max_x, bounds.max_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || bounds.width() <= 0.0 || bounds.height() <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "bounds must have positive area, got {bounds:?}"
            )));
        }
        if floors.is_empty() {
            return Err(Error::InvalidGeometry("at least one floor height is required".into()));
        }
        if floors.windows(2).any(|w| w[1] <= w[0]) || floors.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidGeometry(
                "floor heights must be finite and strictly increasing".into(),
            ));
        }
        for (i, o) in obstacles.iter().enumerate() {
            if o.floor >= floors.len() {
                return Err(Error::InvalidGeometry(format!(
                    "obstacle {i} references floor {} but the plan has {} floors",
                    o.floor,
                    floors.len()
                )));
            }
            if o.type_index < 1 {
                return Err(Error::InvalidGeometry(format!(
                    "obstacle {i} has type_index 0; types start at 1"
                )));
            }
            if ![o.x1, o.y1, o.x2, o.y2].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidGeometry(format!("obstacle {i} has non-finite endpoints")));
            }
            if dist2(o.start(), o.end()) <= GRAZING_TOLERANCE_M {
                return Err(Error::InvalidGeometry(format!("obstacle {i} has coincident endpoints")));
            }
        }
        Ok(Floorplan {
            bounds,
            floors,
            obstacles,
        })
    }

    /// A single-floor plan at z = 0 with the given obstacles.
    pub fn single_floor(bounds: Bounds, obstacles: Vec<Obstacle>) -> Result<Self> {
        Floorplan::new(bounds, vec![0.0], obstacles)
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn floors(&self) -> &[f64] {
        &self.floors
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    /// |A|, the floor area in m².
    pub fn area(&self) -> f64 {
        self.bounds.area()
    }

    /// Obstacle kinds present in the plan, sorted.
    pub fn obstacle_kinds(&self) -> Vec<ObstacleKind> {
        let mut kinds: Vec<_> = self.obstacles.iter().map(Obstacle::kind).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    /// Index of the floor a height belongs to: the highest floor plane at or
    /// below `z`, or the lowest floor when `z` is below every plane.
    pub fn floor_of(&self, z: f64) -> usize {
        self.floors
            .iter()
            .rposition(|&f| f <= z + GRAZING_TOLERANCE_M)
            .unwrap_or(0)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.bounds.contains(p.x, p.y)
    }

    /// Rigidly translates the plan.
    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> Floorplan {
        let b = &self.bounds;
        Floorplan {
            bounds: Bounds::new(b.min_x + dx, b.min_y + dy, b.max_x + dx, b.max_y + dy),
            floors: self.floors.iter().map(|z| z + dz).collect(),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| Obstacle {
                    x1: o.x1 + dx,
                    y1: o.y1 + dy,
                    x2: o.x2 + dx,
                    y2: o.y2 + dy,
                    ..o.clone()
                })
                .collect(),
        }
    }
}

/// The topological parameters of one link: obstacle crossings per kind and
/// the number of floor planes traversed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObstructionCount {
    pub counts: BTreeMap<ObstacleKind, u32>,
    pub floors_crossed: u32,
}

impl ObstructionCount {
    pub fn get(&self, kind: ObstacleKind) -> u32 {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn walls(&self) -> u32 {
        self.get(ObstacleKind::WALL)
    }

    pub fn doors(&self) -> u32 {
        self.get(ObstacleKind::DOOR)
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn is_clear(&self) -> bool {
        self.total() == 0 && self.floors_crossed == 0
    }
}

impl Add for ObstructionCount {
    type Output = ObstructionCount;

    fn add(mut self, rhs: ObstructionCount) -> ObstructionCount {
        for (kind, n) in rhs.counts {
            *self.counts.entry(kind).or_insert(0) += n;
        }
        self.floors_crossed += rhs.floors_crossed;
        self
    }
}

pub fn link_distance(tx: &Point3, rx: &Point3) -> Result<f64> {
    let d = tx.distance(rx);
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(Error::InvalidGeometry(format!(
            "link endpoints coincide or are not finite: {tx} -> {rx}"
        )))
    }
}

/// Counts the obstacles and floor planes strictly crossed by the tx-rx link.
///
/// Same-floor links are tested against that floor's obstacles only; links
/// between floors are tested against the union of obstacles on every floor
/// from the lower endpoint's floor to the upper endpoint's floor.
pub fn count_obstructions(plan: &Floorplan, tx: &Point3, rx: &Point3) -> Result<ObstructionCount> {
    link_distance(tx, rx)?;
    for p in [tx, rx] {
        if !plan.contains(p) {
            return Err(Error::InvalidGeometry(format!(
                "point {p} lies outside the floorplan bounds"
            )));
        }
    }

    let (lo_z, hi_z) = if tx.z <= rx.z { (tx.z, rx.z) } else { (rx.z, tx.z) };
    let floors_crossed = plan
        .floors
        .iter()
        .filter(|&&f| f > lo_z + GRAZING_TOLERANCE_M && f < hi_z - GRAZING_TOLERANCE_M)
        .count() as u32;
    let floor_range = plan.floor_of(lo_z)..=plan.floor_of(hi_z);

    let (p, q) = ([tx.x, tx.y], [rx.x, rx.y]);
    let mut counts = BTreeMap::new();
    for o in plan.obstacles.iter().filter(|o| floor_range.contains(&o.floor)) {
        if segments_cross(p, q, o.start(), o.end()) {
            *counts.entry(o.kind()).or_insert(0) += 1;
        }
    }
    Ok(ObstructionCount {
        counts,
        floors_crossed,
    })
}

/// Strict proper intersection of segments pq and ab. Any endpoint lying
/// within the grazing tolerance of the other segment's supporting line
/// yields `false`, as does a degenerate segment.
pub fn segments_cross(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let pq_len = dist2(p, q);
    let ab_len = dist2(a, b);
    if pq_len <= GRAZING_TOLERANCE_M || ab_len <= GRAZING_TOLERANCE_M {
        return false;
    }
    let da = cross(p, q, a) / pq_len;
    let db = cross(p, q, b) / pq_len;
    let dp = cross(a, b, p) / ab_len;
    let dq = cross(a, b, q) / ab_len;
    let clear = |d: f64| d.abs() > GRAZING_TOLERANCE_M;
    clear(da)
        && clear(db)
        && clear(dp)
        && clear(dq)
        && (da > 0.0) != (db > 0.0)
        && (dp > 0.0) != (dq > 0.0)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
