//! Textual pulse-sequence language.
//!
//! ```text
//! # Hahn echo with a readout one turn later
//! param tau = 60us
//! trigger
//! mw pi/2 at 0us
//! mw pi center tau/2 phase 0deg
//! mw pi/2 until tau
//! laser for 2us at Trot
//! ```
//!
//! Statements are separated by newlines or `;`. Events without an explicit
//! placement start where the previous event (or `wait`) ended. `Trot` is the
//! rotation period of the geometry the program is compiled against.

mod ast;
mod calibration;
mod compile;
mod lexer;
mod parser;
mod printer;
mod time;

pub use ast::{Anchor, Dimension, Expr, MwRotation, Placement, SequenceProgram, Statement, Unit};
pub use calibration::{build_calibration, CalibrationError, CalibrationTable};
pub use compile::{compile_timeline, CompileError, PulseTimeline, TimelineEvent};
pub use parser::{parse_sequence, Diagnostic, ParseError};
pub use printer::print_program;
pub use time::Time;

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Laser,
    Mw,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Laser => "laser",
            Channel::Mw => "mw",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a microwave event was asked to do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetRotation {
    Pi,
    HalfPi,
    /// Explicit duration; the rotation follows from the local Rabi frequency.
    Free,
}

impl TargetRotation {
    /// Rotation in units of full Rabi cycles (π ↦ 1/2).
    pub fn fraction(&self) -> Option<f64> {
        match self {
            TargetRotation::Pi => Some(0.5),
            TargetRotation::HalfPi => Some(0.25),
            TargetRotation::Free => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    Laser,
    Mw {
        target: TargetRotation,
        phase_rad: f64,
        detuning_mhz: f64,
        /// Calibrated Rabi frequency used to size the pulse.
        rabi_mhz: f64,
    },
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Laser => f.write_str("on"),
            Payload::Mw {
                target,
                phase_rad,
                detuning_mhz,
                rabi_mhz,
            } => {
                let t = match target {
                    TargetRotation::Pi => "pi",
                    TargetRotation::HalfPi => "pi/2",
                    TargetRotation::Free => "free",
                };
                write!(
                    f,
                    "{t} phase={:.6}deg detune={detuning_mhz:.6}MHz rabi={rabi_mhz:.9}MHz",
                    phase_rad.to_degrees()
                )
            }
        }
    }
}
