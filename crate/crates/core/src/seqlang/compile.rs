use std::collections::HashMap;
use std::fmt::Write;

use super::ast::{Anchor, Dimension, Expr, MwRotation, Placement, SequenceProgram, Statement, Value};
use super::calibration::CalibrationTable;
use super::parser::TROT;
use super::{Channel, Payload, TargetRotation, Time};
use crate::geometry::RotorGeometry;

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEvent {
    /// Human-readable origin, e.g. `mw pi (line 3)`.
    pub label: String,
    pub channel: Channel,
    pub start: Time,
    pub duration: Time,
    pub payload: Payload,
}

impl TimelineEvent {
    pub fn end(&self) -> Time {
        self.start + self.duration
    }

    pub fn span(&self) -> String {
        format!("{} [{} us, {} us]", self.label, self.start.as_us(), self.end().as_us())
    }
}

/// Time-ordered events, referenced to the rotation trigger edge.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTimeline {
    pub events: Vec<TimelineEvent>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("{label}: {message}")]
    Eval { label: String, message: String },
    #[error("{label}: event would start before the trigger ({start_us} us)")]
    NegativeStart { label: String, start_us: f64 },
    #[error("overlapping {channel} events: {first} and {second}")]
    Overlap {
        channel: Channel,
        first: String,
        second: String,
    },
    #[error("{0}")]
    Unordered(String),
}

impl PulseTimeline {
    /// Build a timeline from events, sorting by start time and rejecting overlaps.
    pub fn new(mut events: Vec<TimelineEvent>) -> Result<Self, CompileError> {
        events.sort_by_key(|e| (e.start, e.channel));
        let t = Self { events };
        t.validate()?;
        Ok(t)
    }

    /// Check ordering and per-channel non-overlap.
    pub fn validate(&self) -> Result<(), CompileError> {
        for w in self.events.windows(2) {
            if w[1].start < w[0].start {
                return Err(CompileError::Unordered(format!(
                    "{} starts before {}",
                    w[1].span(),
                    w[0].span()
                )));
            }
        }
        for ch in [Channel::Laser, Channel::Mw] {
            let mut prev: Option<&TimelineEvent> = None;
            for e in self.events.iter().filter(|e| e.channel == ch) {
                if e.duration < Time::ZERO {
                    return Err(CompileError::Unordered(format!("{} has negative duration", e.span())));
                }
                if let Some(p) = prev {
                    if e.start < p.end() {
                        return Err(CompileError::Overlap {
                            channel: ch,
                            first: p.span(),
                            second: e.span(),
                        });
                    }
                }
                prev = Some(e);
            }
        }
        Ok(())
    }

    pub fn on(&self, ch: Channel) -> impl Iterator<Item = &TimelineEvent> {
        self.events.iter().filter(move |e| e.channel == ch)
    }

    pub fn end(&self) -> Time {
        self.events.iter().map(|e| e.end()).max().unwrap_or(Time::ZERO)
    }

    /// Same events moved later by `dt`.
    pub fn shifted(&self, dt: Time) -> Self {
        Self {
            events: self
                .events
                .iter()
                .map(|e| TimelineEvent {
                    start: e.start + dt,
                    ..e.clone()
                })
                .collect(),
        }
    }

    /// Columnar export: `channel,start_ns,duration_ns,payload`.
    pub fn to_records(&self) -> String {
        let mut s = String::from("channel,start_ns,duration_ns,payload\n");
        for e in &self.events {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                e.channel,
                e.start.ns_string(),
                e.duration.ns_string(),
                e.payload
            );
        }
        s
    }
}

/// Resolve a parsed program against a rotor and a calibration.
///
/// Program times count from the trigger edge; `t_phi_us` delays the whole
/// sequence. Target-angle pulses are sized with the Rabi frequency at the
/// rotation angle where they start.
pub fn compile_timeline(
    prog: &SequenceProgram,
    g: &RotorGeometry,
    cal: &CalibrationTable,
    t_phi_us: f64,
) -> Result<PulseTimeline, CompileError> {
    let t_phi = Time::from_us(t_phi_us);
    let angle_at = |t: Time| ((t + t_phi).as_s() * g.f_rot_hz * 360.0).rem_euclid(360.0);
    let mut env: HashMap<String, Value> = HashMap::new();
    env.insert(TROT.into(), (g.period_us(), Dimension::Time));
    let mut cursor = Time::ZERO;
    let mut events = Vec::new();

    for (idx, st) in prog.statements.iter().enumerate() {
        let line = prog.lines.get(idx).copied().unwrap_or(idx + 1);
        let label_for = |kind: &str| format!("{kind} (line {line})");
        let eval_time = |e: &Expr, label: &str, env: &HashMap<String, Value>| -> Result<Time, CompileError> {
            let (v, d) = e.eval(env).map_err(|err| CompileError::Eval {
                label: label.to_string(),
                message: err.to_string(),
            })?;
            if d != Dimension::Time || !v.is_finite() {
                return Err(CompileError::Eval {
                    label: label.to_string(),
                    message: format!("expected a finite time, got {v} ({d})"),
                });
            }
            Ok(Time::from_us(v))
        };
        match st {
            Statement::Param { name, value } => {
                let v = value.eval(&env).map_err(|err| CompileError::Eval {
                    label: label_for("param"),
                    message: err.to_string(),
                })?;
                env.insert(name.clone(), v);
            }
            Statement::Wait { duration } => {
                let label = label_for("wait");
                let d = eval_time(duration, &label, &env)?;
                if d < Time::ZERO {
                    return Err(CompileError::Eval {
                        label,
                        message: "negative duration".into(),
                    });
                }
                cursor = cursor + d;
            }
            Statement::Laser { duration, placement } => {
                let label = label_for("laser");
                let d = eval_time(duration, &label, &env)?;
                let start = place(placement, d, cursor, &label, &env, &eval_time)?;
                events.push(TimelineEvent {
                    label,
                    channel: Channel::Laser,
                    start,
                    duration: d,
                    payload: Payload::Laser,
                });
                cursor = start + d;
            }
            Statement::Mw {
                rotation,
                placement,
                phase,
                detune,
            } => {
                let kind = match rotation {
                    MwRotation::Pi => "mw pi",
                    MwRotation::HalfPi => "mw pi/2",
                    MwRotation::Duration(_) => "mw",
                };
                let label = label_for(kind);
                let phase_rad = scalar(phase, Dimension::Angle, &label, &env)?.to_radians();
                let detuning_mhz = scalar(detune, Dimension::Frequency, &label, &env)?;
                let (target, start, d, rabi) = match rotation {
                    MwRotation::Duration(e) => {
                        let d = eval_time(e, &label, &env)?;
                        let start = place(placement, d, cursor, &label, &env, &eval_time)?;
                        (TargetRotation::Free, start, d, cal.lookup(angle_at(start)))
                    }
                    MwRotation::Pi | MwRotation::HalfPi => {
                        let target = if matches!(rotation, MwRotation::Pi) {
                            TargetRotation::Pi
                        } else {
                            TargetRotation::HalfPi
                        };
                        let frac = target.fraction().unwrap_or(0.5);
                        let size = |start: Time| {
                            let rabi = cal.lookup(angle_at(start));
                            (rabi, Time::from_us(frac / rabi))
                        };
                        // The start depends on the duration for `until`/`center`
                        // anchors; a few fixed-point passes settle it.
                        let probe = place(placement, Time::ZERO, cursor, &label, &env, &eval_time)
                            .unwrap_or(cursor);
                        let (mut rabi, mut d) = size(probe);
                        let mut start = place(placement, d, cursor, &label, &env, &eval_time)?;
                        for _ in 0..4 {
                            let (r, nd) = size(start);
                            rabi = r;
                            d = nd;
                            let ns = place(placement, d, cursor, &label, &env, &eval_time)?;
                            if ns == start {
                                break;
                            }
                            start = ns;
                        }
                        (target, start, d, rabi)
                    }
                };
                events.push(TimelineEvent {
                    label,
                    channel: Channel::Mw,
                    start,
                    duration: d,
                    payload: Payload::Mw {
                        target,
                        phase_rad,
                        detuning_mhz,
                        rabi_mhz: rabi,
                    },
                });
                cursor = start + d;
            }
        }
    }
    let timeline = PulseTimeline::new(events)?;
    Ok(timeline.shifted(t_phi))
}

fn scalar(
    e: &Option<Expr>,
    want: Dimension,
    label: &str,
    env: &HashMap<String, Value>,
) -> Result<f64, CompileError> {
    let Some(e) = e else { return Ok(0.0) };
    let (v, d) = e.eval(env).map_err(|err| CompileError::Eval {
        label: label.to_string(),
        message: err.to_string(),
    })?;
    if d != want {
        return Err(CompileError::Eval {
            label: label.to_string(),
            message: format!("expected a {want}, got a {d}"),
        });
    }
    Ok(v)
}

fn place<F>(
    placement: &Option<Placement>,
    d: Time,
    cursor: Time,
    label: &str,
    env: &HashMap<String, Value>,
    eval_time: &F,
) -> Result<Time, CompileError>
where
    F: Fn(&Expr, &str, &HashMap<String, Value>) -> Result<Time, CompileError>,
{
    let start = match placement {
        None => cursor,
        Some(p) => {
            let t = eval_time(&p.time, label, env)?;
            match p.anchor {
                Anchor::At => t,
                Anchor::Until => t - d,
                Anchor::Center => t - Time::from_attos(d.attos() / 2),
            }
        }
    };
    if start < Time::ZERO {
        return Err(CompileError::NegativeStart {
            label: label.to_string(),
            start_us: start.as_us(),
        });
    }
    Ok(start)
}
