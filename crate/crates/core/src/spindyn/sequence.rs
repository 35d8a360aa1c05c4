use std::f64::consts::PI;

use super::{apply_pulse, precess, PulseSpec, SpinState};
use crate::geometry::{
    effective_field, integrated_effective_field, mw_coupling, FieldConfig, PhysicalConstants, RotorGeometry,
};
use crate::seqlang::{Channel, Payload, PulseTimeline, Time, TimelineEvent};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpinError {
    #[error("overlapping events: {first} and {second}")]
    Overlap { first: String, second: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceOptions {
    pub initial: SpinState,
    /// Constant detuning added during free evolution and pulses (MHz).
    pub detuning_offset_mhz: f64,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            initial: SpinState::ground(),
            detuning_offset_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub time: Time,
    /// Event whose boundary this is, or `start`.
    pub label: String,
    pub state: SpinState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTrajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Spin state at the start of each readout laser pulse.
    pub readouts: Vec<(Time, SpinState)>,
}

impl SequenceTrajectory {
    pub fn final_state(&self) -> SpinState {
        self.points.last().map(|p| p.state).unwrap_or_default()
    }
}

pub fn simulate_sequence(
    timeline: &PulseTimeline,
    g: &RotorGeometry,
    f: &FieldConfig,
    c: &PhysicalConstants,
) -> Result<SequenceTrajectory, SpinError> {
    simulate_sequence_with(timeline, g, f, c, &SequenceOptions::default())
}

/// Evolve a spin through a compiled timeline.
///
/// The microwave carrier is resonant with the period-averaged Zeeman shift, so
/// free evolution sees only the rotation-induced AC term (plus the offset).
/// Pulses use the coupling and detuning at their central rotation angle. A
/// laser pulse before any microwave event reinitialises the spin; later laser
/// pulses record a readout and then repolarise.
pub fn simulate_sequence_with(
    timeline: &PulseTimeline,
    g: &RotorGeometry,
    f: &FieldConfig,
    c: &PhysicalConstants,
    opts: &SequenceOptions,
) -> Result<SequenceTrajectory, SpinError> {
    check_overlaps(&timeline.events)?;
    let detuning = |t_s: f64| -c.gamma_e_mhz_per_g * effective_field(g, f, t_s) + opts.detuning_offset_mhz;
    let free_phase = |t0: Time, t1: Time| {
        let (a, b) = (t0.as_s(), t1.as_s());
        let field = integrated_effective_field(g, f, a, b);
        2.0 * PI * (-c.gamma_e_mhz_per_g * 1e6 * field + opts.detuning_offset_mhz * 1e6 * (b - a))
    };

    let mut state = opts.initial;
    let mut now = Time::ZERO;
    let mut points = vec![TrajectoryPoint {
        time: now,
        label: "start".into(),
        state,
    }];
    let mut readouts = Vec::new();
    let mut driven = false;

    for ev in &timeline.events {
        if ev.start > now {
            state = precess(&state, free_phase(now, ev.start));
        }
        points.push(TrajectoryPoint {
            time: ev.start,
            label: ev.label.clone(),
            state,
        });
        match (ev.channel, &ev.payload) {
            (Channel::Mw, Payload::Mw {
                phase_rad,
                detuning_mhz,
                ..
            }) => {
                let centre = (ev.start.as_s() + ev.end().as_s()) / 2.0;
                let pulse = PulseSpec {
                    start_us: ev.start.as_us(),
                    duration_us: ev.duration.as_us(),
                    rabi_mhz: c.gamma_e_mhz_per_g * mw_coupling(g, f, centre),
                    detuning_mhz: detuning(centre) + detuning_mhz,
                    phase_rad: *phase_rad,
                };
                state = apply_pulse(&state, &pulse);
                driven = true;
            }
            _ => {
                if driven {
                    readouts.push((ev.start, state));
                }
                state = SpinState::ground();
                driven = false;
            }
        }
        now = ev.end();
        points.push(TrajectoryPoint {
            time: now,
            label: ev.label.clone(),
            state,
        });
    }
    Ok(SequenceTrajectory { points, readouts })
}

fn check_overlaps(events: &[TimelineEvent]) -> Result<(), SpinError> {
    let mut sorted: Vec<&TimelineEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.start);
    for w in sorted.windows(2) {
        if w[1].start < w[0].end() {
            return Err(SpinError::Overlap {
                first: w[0].span(),
                second: w[1].span(),
            });
        }
    }
    Ok(())
}
