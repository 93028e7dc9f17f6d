//! Shared-control simulation of a two-arm magnetically steered millirobot in a
//! branching vessel phantom.

pub mod control;
pub mod geometry;
pub mod harness;
pub mod haptics;
pub mod metrics;
pub mod phantom;
pub mod planner;
pub mod sim;
