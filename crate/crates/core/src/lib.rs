//! Simulation and estimation toolkit for a single NV spin in a rotating diamond.

pub mod estimation;
pub mod geometry;
pub mod imaging;
pub mod numeric;
pub mod photophysics;
pub mod seqlang;
pub mod spindyn;

pub use geometry::{FieldConfig, PhysicalConstants, RotorGeometry, Vec3};
pub use photophysics::{BeamProfile, LevelPopulations, PhotonTrace, RateModel};
pub use seqlang::{CalibrationTable, PulseTimeline, SequenceProgram};
pub use spindyn::{EchoParams, PulseSpec, SpinState};
