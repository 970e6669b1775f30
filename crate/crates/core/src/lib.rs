//! Integrated planning toolkit for multi-energy distribution grids.
//!
//! The crate is organised along the planning pipeline:
//!
//! - [`heatdemand`]: building loss coefficients and daily heat demand from weather
//! - [`cellarea`]: neutral cell areas, key factors and fulfillment concepts
//! - [`adoption`]: agent-based heating technology forecast with Monte-Carlo screening
//! - [`gridsynth`]: distribution grid topology from building footprints and streets
//! - [`multigrid`]: multi-carrier network graph and coupled steady-state flow
//! - [`plan`]: coupling-point placement, storage peak shaving and expansion comparison

// validation negates comparisons on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adoption;
pub mod carrier;
pub mod cellarea;
pub mod geometry;
pub mod gridsynth;
pub mod heatdemand;
pub mod multigrid;
pub mod plan;

pub use carrier::{Carrier, HeatingTech};
pub use geometry::{Point, Polygon, Rect, Segment};
