//! Optical pumping, spin-dependent fluorescence and photon counting for an NV
//! that sweeps through a focused laser beam.
//!
//! Time is in µs and rates in 1/µs throughout; count rates are in counts/s.

mod beam;
mod levels;
pub mod ode;
mod readout;

pub use beam::{
    beam_intensity, count_rate_bound, expected_count_rate, transit_offset, BeamError, BeamProfile, CollectionMode,
};
pub use levels::{step_rates, LevelPopulations, RateError, RateModel};
pub use readout::{
    fluorescence_rate, fluorescence_rate_with_scale, fluorescence_scale, optimal_turn_on, readout_expectation,
    simulate_readout, state_contrast, ContrastError, ContrastEstimate, PhotonTrace, ReadoutError, ReadoutExpectation,
    ReadoutWindow, TurnOnScan,
};
pub(crate) use readout::poisson;
