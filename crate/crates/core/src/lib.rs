//! Separation of fixed and periodic points of exponential-type entire maps
//! by dynamic rays: tracts and fundamental domains, ray tracing by
//! inverse-branch pullback, argument-principle counting and basic regions.

pub mod curves;
pub mod geom;
pub mod map;
pub mod structure;
pub mod fixed_points;
pub mod rays;
pub mod separation;
