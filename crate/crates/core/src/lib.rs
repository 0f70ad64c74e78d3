//! Indoor Wi-Fi fingerprinting with radio-map virtualization.
//!
//! A sparse set of measured reference points (RPs) is used to fit a
//! multi-wall multi-floor path-loss model, which then predicts fingerprints
//! at virtual RPs. Positioning is weighted k-nearest-neighbour over the
//! combined radio map.

pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod floorplan;
pub mod io;
pub mod measurements;
pub mod positioning;
pub mod propagation;
pub mod radiomap;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use fitting::{fit, FitResult, FitStrategy, StrategyKind};
pub use floorplan::{Floorplan, Obstacle, ObstacleKind, Point3};
pub use measurements::{MeasurementRecord, MeasurementSet};
pub use positioning::{locate, PositionEstimate, WknnConfig};
pub use propagation::{AccessPoint, ModelKind, PropagationParams};
pub use radiomap::{Fingerprint, Radiomap, ReferencePoint};
