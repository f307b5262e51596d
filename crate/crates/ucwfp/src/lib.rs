//! Strongly convergent fixed-point iteration for asymptotically nonexpansive
//! self-maps of bounded uniformly convex W-hyperbolic spaces, with every
//! convergence guarantee mirrored by a runtime monitor.
//!
//! The pipeline: pick a [`geometry::SpaceModel`], wrap a self-map as a
//! [`mappings::AsymptoticMap`], derive the averaging operator
//! ([`soperator::SOperator`]), drive the row construction
//! ([`iteration::run`]), then audit the recorded trajectory
//! ([`diagnostics::check_trajectory`]).

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod iteration;
pub mod mappings;
pub mod soperator;
pub mod spaces;

pub use diagnostics::{check_trajectory, MonitorSet, Verdict};
pub use error::{Error, Result};
pub use geometry::{Modulus, Point, SpaceModel};
pub use iteration::{extract_pk, run, ComparePolicy, StopRule, Trajectory};
pub use mappings::{make_map, AsymptoticMap, MapConfig};
pub use soperator::{SMode, SOperator};
